//! State-space realizations and their interconnections.
//!
//! Systems are continuous-time `(A, B, C, D)` quadruples over dense real
//! matrices. Zero-state systems (`nx = 0`, pure static gains) are first-class
//! so static multipliers and pass-through blocks need no special casing.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::linalg::kron_lift;

/// A continuous-time LTI realization `xdot = Ax + Bu`, `y = Cx + Du`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl StateSpace {
    /// Builds a realization, validating dimension consistency.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let nx = a.nrows();
        if a.ncols() != nx {
            return Err(Error::dims(format!("A must be square, got {}x{}", nx, a.ncols())));
        }
        if b.nrows() != nx {
            return Err(Error::dims(format!(
                "B has {} rows but A has {} states",
                b.nrows(),
                nx
            )));
        }
        if c.ncols() != nx {
            return Err(Error::dims(format!(
                "C has {} columns but A has {} states",
                c.ncols(),
                nx
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::dims(format!(
                "D must be {}x{}, got {}x{}",
                c.nrows(),
                b.ncols(),
                d.nrows(),
                d.ncols()
            )));
        }
        Ok(StateSpace { a, b, c, d })
    }

    /// A memoryless system `y = D u`.
    pub fn static_gain(d: DMatrix<f64>) -> Self {
        let (ny, nu) = (d.nrows(), d.ncols());
        StateSpace {
            a: DMatrix::zeros(0, 0),
            b: DMatrix::zeros(0, nu),
            c: DMatrix::zeros(ny, 0),
            d,
        }
    }

    /// The identity map on `n` channels.
    pub fn identity(n: usize) -> Self {
        Self::static_gain(DMatrix::identity(n, n))
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn ny(&self) -> usize {
        self.c.nrows()
    }

    /// Transfer matrix `C (sI - A)^{-1} B + D` at a complex frequency.
    pub fn transfer(&self, s: Complex<f64>) -> Result<DMatrix<Complex<f64>>> {
        let nx = self.nx();
        let to_cplx = |m: &DMatrix<f64>| m.map(|x| Complex::new(x, 0.0));
        let d = to_cplx(&self.d);
        if nx == 0 {
            return Ok(d);
        }
        let mut si_a = to_cplx(&self.a) * Complex::new(-1.0, 0.0);
        for i in 0..nx {
            si_a[(i, i)] += s;
        }
        let x = si_a
            .lu()
            .solve(&to_cplx(&self.b))
            .ok_or_else(|| Error::invalid(format!("transfer evaluated at a pole: s = {s}")))?;
        Ok(to_cplx(&self.c) * x + d)
    }

    /// Impulse response samples `C e^{At} B` at the given times (the `D delta`
    /// part is omitted).
    pub fn impulse_response(&self, times: &[f64]) -> Vec<DMatrix<f64>> {
        times
            .iter()
            .map(|&t| {
                if self.nx() == 0 {
                    DMatrix::zeros(self.ny(), self.nu())
                } else {
                    &self.c * crate::linalg::expm(&(&self.a * t)) * &self.b
                }
            })
            .collect()
    }

    /// Lifts a per-axis system to `d` decoupled axes (`M -> M ⊗ I_d` on all
    /// four matrices).
    pub fn lift_axes(&self, d: usize) -> Result<StateSpace> {
        Ok(StateSpace {
            a: kron_lift(&self.a, d)?,
            b: kron_lift(&self.b, d)?,
            c: kron_lift(&self.c, d)?,
            d: kron_lift(&self.d, d)?,
        })
    }
}

/// Series interconnection: input drives `back`, whose output drives `front`.
///
/// State is `[x_front; x_back]` with
/// `A = [[A1, B1 C2], [0, A2]]`, `B = [B1 D2; B2]`, `C = [C1, D1 C2]`,
/// `D = D1 D2`.
pub fn series(front: &StateSpace, back: &StateSpace) -> Result<StateSpace> {
    if front.nu() != back.ny() {
        return Err(Error::dims(format!(
            "series: front expects {} inputs but back produces {} outputs",
            front.nu(),
            back.ny()
        )));
    }
    let (n1, n2) = (front.nx(), back.nx());
    let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
    a.view_mut((0, 0), (n1, n1)).copy_from(&front.a);
    a.view_mut((0, n1), (n1, n2)).copy_from(&(&front.b * &back.c));
    a.view_mut((n1, n1), (n2, n2)).copy_from(&back.a);

    let mut b = DMatrix::zeros(n1 + n2, back.nu());
    b.view_mut((0, 0), (n1, back.nu())).copy_from(&(&front.b * &back.d));
    b.view_mut((n1, 0), (n2, back.nu())).copy_from(&back.b);

    let mut c = DMatrix::zeros(front.ny(), n1 + n2);
    c.view_mut((0, 0), (front.ny(), n1)).copy_from(&front.c);
    c.view_mut((0, n1), (front.ny(), n2)).copy_from(&(&front.d * &back.c));

    let d = &front.d * &back.d;
    StateSpace::new(a, b, c, d)
}

/// Maps `u -> [G u; u]`: the plant stacked over an identity feedthrough.
pub fn stack_with_identity(g: &StateSpace) -> StateSpace {
    let (nx, nu, ny) = (g.nx(), g.nu(), g.ny());
    let mut c = DMatrix::zeros(ny + nu, nx);
    c.view_mut((0, 0), (ny, nx)).copy_from(&g.c);
    let mut d = DMatrix::zeros(ny + nu, nu);
    d.view_mut((0, 0), (ny, nu)).copy_from(&g.d);
    d.view_mut((ny, 0), (nu, nu)).copy_from(&DMatrix::identity(nu, nu));
    StateSpace {
        a: g.a.clone(),
        b: g.b.clone(),
        c,
        d,
    }
}

/// Gains of the second-order reference dynamics driven by the gradient input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceGains {
    pub k_p: f64,
    pub k_d: f64,
}

impl ReferenceGains {
    pub fn new(k_p: f64, k_d: f64) -> Result<Self> {
        if !(k_p > 0.0) || !(k_d > 0.0) {
            return Err(Error::invalid(format!(
                "reference gains must be positive, got k_p = {k_p}, k_d = {k_d}"
            )));
        }
        Ok(ReferenceGains { k_p, k_d })
    }
}

/// Reference dynamics block: state `[r_pos; r_vel]`, input `u` of width `d`,
/// output `[r_pos; r_vel]`, realizing
/// `rdot_pos = r_vel`, `rdot_vel = -k_d r_vel - k_p u`.
pub fn reference_block(gains: ReferenceGains, d: usize) -> Result<StateSpace> {
    if d == 0 {
        return Err(Error::invalid("reference_block requires d >= 1"));
    }
    let id = DMatrix::<f64>::identity(d, d);
    let mut a = DMatrix::zeros(2 * d, 2 * d);
    a.view_mut((0, d), (d, d)).copy_from(&id);
    a.view_mut((d, d), (d, d)).copy_from(&(&id * (-gains.k_d)));
    let mut b = DMatrix::zeros(2 * d, d);
    b.view_mut((d, 0), (d, d)).copy_from(&(&id * (-gains.k_p)));
    let c = DMatrix::identity(2 * d, 2 * d);
    let dd = DMatrix::zeros(2 * d, d);
    StateSpace::new(a, b, c, dd)
}

/// Composes a tracking closed loop with the reference dynamics: the overall
/// vehicle maps the gradient input `u` to the position output `y`.
///
/// The closed loop must accept the `[r_pos; r_vel]` reference (width `2d`)
/// and produce the position (width `d`). The resulting `A` always has an
/// eigenvalue at zero, giving the loop its integral action.
pub fn build_vehicle(
    closed_loop: &StateSpace,
    gains: ReferenceGains,
    d: usize,
) -> Result<StateSpace> {
    if closed_loop.nu() != 2 * d {
        return Err(Error::dims(format!(
            "closed loop must take a width-{} reference, takes {}",
            2 * d,
            closed_loop.nu()
        )));
    }
    if closed_loop.ny() != d {
        return Err(Error::dims(format!(
            "closed loop must output width {}, outputs {}",
            d,
            closed_loop.ny()
        )));
    }
    series(closed_loop, &reference_block(gains, d)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, null_direction, spectral_abscissa};
    use approx::assert_relative_eq;

    fn siso(a: f64, b: f64, c: f64, d: f64) -> StateSpace {
        StateSpace::new(
            DMatrix::from_row_slice(1, 1, &[a]),
            DMatrix::from_row_slice(1, 1, &[b]),
            DMatrix::from_row_slice(1, 1, &[c]),
            DMatrix::from_row_slice(1, 1, &[d]),
        )
        .unwrap()
    }

    #[test]
    fn series_with_identity_is_identity_on_realization() {
        let s = siso(-2.0, 1.0, 1.0, 0.5);
        let composed = series(&StateSpace::identity(1), &s).unwrap();
        assert_eq!(composed.a, s.a);
        assert_eq!(composed.b, s.b);
        assert_eq!(composed.c, s.c);
        assert_eq!(composed.d, s.d);
    }

    #[test]
    fn series_of_static_gains_is_product() {
        let d1 = StateSpace::static_gain(DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
        let d2 = StateSpace::static_gain(DMatrix::from_row_slice(2, 1, &[3.0, 4.0]));
        let s = series(&d1, &d2).unwrap();
        assert_eq!(s.nx(), 0);
        assert_eq!(s.d, DMatrix::from_row_slice(1, 1, &[11.0]));
    }

    #[test]
    fn series_block_formula() {
        let front = siso(-1.0, 1.0, 1.0, 0.0);
        let back = siso(-2.0, 1.0, 1.0, 1.0);
        let s = series(&front, &back).unwrap();
        assert_eq!(s.a, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 0.0, -2.0]));
        assert_eq!(s.b, DMatrix::from_row_slice(2, 1, &[1.0, 1.0]));
        assert_eq!(s.c, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(s.d, DMatrix::from_row_slice(1, 1, &[0.0]));
    }

    #[test]
    fn series_rejects_width_mismatch() {
        let front = siso(-1.0, 1.0, 1.0, 0.0);
        let wide = StateSpace::static_gain(DMatrix::zeros(2, 1));
        assert!(series(&front, &wide).is_err());
    }

    #[test]
    fn vehicle_from_pass_through_tracker() {
        // Tracker that outputs r_pos directly: y = [I 0] r.
        let tracker = StateSpace::static_gain(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let g = build_vehicle(&tracker, ReferenceGains::new(1.0, 2.0).unwrap(), 1).unwrap();
        assert_eq!(g.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, -2.0]));
        assert_eq!(g.b, DMatrix::from_row_slice(2, 1, &[0.0, -1.0]));
        assert_eq!(g.c, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert!(null_direction(&g.a).is_some());
    }

    #[test]
    fn vehicle_keeps_integrator_eigenvalue() {
        let tracker = StateSpace::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -9.0, -6.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 9.0, 6.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::zeros(1, 2),
        )
        .unwrap();
        let g = build_vehicle(&tracker, ReferenceGains::new(1.0, 2.0).unwrap(), 1).unwrap();
        let min_mag = eigenvalues(&g.a)
            .unwrap()
            .iter()
            .map(|z| z.norm())
            .fold(f64::INFINITY, f64::min);
        assert!(min_mag < 1e-10, "integrator eigenvalue missing: {min_mag}");
        assert!(null_direction(&g.a).is_some());
    }

    #[test]
    fn vehicle_with_zero_damping_would_be_double_integrator() {
        // k_d = 0 is rejected by ReferenceGains; build the limit by hand.
        let tracker = StateSpace::static_gain(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        let gains = ReferenceGains { k_p: 1.0, k_d: 0.0 };
        let g = series(&tracker, &reference_block(gains, 1).unwrap()).unwrap();
        assert_eq!(g.a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn reference_block_stable_part_negative() {
        let r = reference_block(ReferenceGains::new(2.0, 3.0).unwrap(), 2).unwrap();
        let eigs = eigenvalues(&r.a).unwrap();
        let nonzero_max = eigs
            .iter()
            .filter(|z| z.norm() > 1e-9)
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(nonzero_max < 0.0);
        assert_relative_eq!(spectral_abscissa(&r.a).unwrap(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn transfer_of_series_is_product() {
        let front = siso(-1.0, 1.0, 1.0, 0.0);
        let back = siso(-2.0, 1.0, 1.0, 1.0);
        let s = series(&front, &back).unwrap();
        let at = Complex::new(0.3, 1.7);
        let lhs = s.transfer(at).unwrap()[(0, 0)];
        let rhs = front.transfer(at).unwrap()[(0, 0)] * back.transfer(at).unwrap()[(0, 0)];
        assert_relative_eq!(lhs.re, rhs.re, epsilon = 1e-12);
        assert_relative_eq!(lhs.im, rhs.im, epsilon = 1e-12);
    }

    #[test]
    fn stack_with_identity_shapes() {
        let g = siso(-1.0, 1.0, 2.0, 0.0);
        let st = stack_with_identity(&g);
        assert_eq!(st.ny(), 2);
        assert_eq!(st.nu(), 1);
        let at = Complex::new(0.0, 1.0);
        let t = st.transfer(at).unwrap();
        let gt = g.transfer(at).unwrap()[(0, 0)];
        assert_relative_eq!(t[(0, 0)].re, gt.re, epsilon = 1e-12);
        assert_relative_eq!(t[(1, 0)].re, 1.0, epsilon = 1e-12);
        assert_relative_eq!(t[(1, 0)].im, 0.0, epsilon = 1e-12);
    }
}
