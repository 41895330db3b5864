//! The exponentially weighted IQC filter, its interconnection with the
//! plant, and the multiplier middle matrix.
//!
//! The filter maps the deviation pair `(y, u)` to the stacked channel vector
//! `z = [p; p-filter states; q; q-filter states]` where `p = u - m y` and
//! `q = L y - u` are the sector combinations and the filter states carry the
//! exponentially weighted multiplier basis responses. The rate parameter
//! `alpha` enters through the shifted generator `A_nu - 2 alpha I`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::kron_lift;
use crate::ss::{series, stack_with_identity, StateSpace};
use crate::zames_falb::{MultiplierVars, ZfBasis};

/// Sector bounds of the gradient nonlinearity: `m`-strong convexity and
/// `L`-Lipschitz gradients, `0 < m <= L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectorBounds {
    pub m: f64,
    pub l: f64,
}

impl SectorBounds {
    pub fn new(m: f64, l: f64) -> Result<Self> {
        if !(m > 0.0) || !(l >= m) {
            return Err(Error::invalid(format!(
                "sector bounds require 0 < m <= L, got m = {m}, L = {l}"
            )));
        }
        Ok(SectorBounds { m, l })
    }
}

/// The realized filter together with the parameters it was built for.
#[derive(Debug, Clone)]
pub struct IqcFilter {
    pub ss: StateSpace,
    pub alpha: f64,
    pub nu: usize,
    pub d: usize,
    pub sector: SectorBounds,
}

impl IqcFilter {
    /// Number of stacked output channels (each of width `d`).
    pub fn n_channels(&self) -> usize {
        2 * (1 + self.nu)
    }
}

/// Builds the filter realization for basis `basis`, sector `(m, L)`, rate
/// weight `alpha >= 0` and `d` spatial axes.
///
/// State dimension is `2 nu d` (`p`-side filter then `q`-side filter), input
/// width `2d` (`y` then `u`), output width `2(1 + nu) d` ordered
/// `[p; p-states; q; q-states]`. Both diagonal state blocks equal
/// `(A_nu - 2 alpha I) ⊗ I_d`.
pub fn build_filter(
    basis: &ZfBasis,
    sector: SectorBounds,
    alpha: f64,
    d: usize,
) -> Result<IqcFilter> {
    if alpha < 0.0 {
        return Err(Error::invalid("alpha must be nonnegative"));
    }
    if d == 0 {
        return Err(Error::invalid("d must be >= 1"));
    }
    let nu = basis.order;
    let (m, l) = (sector.m, sector.l);
    let id_d = DMatrix::<f64>::identity(d, d);

    let a_shift = &basis.a_nu - DMatrix::<f64>::identity(nu, nu) * (2.0 * alpha);
    let a_block = kron_lift(&a_shift, d)?;
    let b_col = DMatrix::from_column_slice(nu, 1, basis.b_nu.as_slice());
    let b_block = kron_lift(&b_col, d)?; // (nu d) x d

    let nx = 2 * nu * d;
    let mut a = DMatrix::zeros(nx, nx);
    a.view_mut((0, 0), (nu * d, nu * d)).copy_from(&a_block);
    a.view_mut((nu * d, nu * d), (nu * d, nu * d)).copy_from(&a_block);

    // Inputs [y; u]: p-filter is driven by p = u - m y, q-filter by q = L y - u.
    let mut b = DMatrix::zeros(nx, 2 * d);
    b.view_mut((0, 0), (nu * d, d)).copy_from(&(&b_block * (-m)));
    b.view_mut((0, d), (nu * d, d)).copy_from(&b_block);
    b.view_mut((nu * d, 0), (nu * d, d)).copy_from(&(&b_block * l));
    b.view_mut((nu * d, d), (nu * d, d)).copy_from(&(&b_block * (-1.0)));

    let ny = 2 * (1 + nu) * d;
    let mut c = DMatrix::zeros(ny, nx);
    let mut dd = DMatrix::zeros(ny, 2 * d);
    // Row block 0: p = u - m y (feedthrough only).
    dd.view_mut((0, 0), (d, d)).copy_from(&(&id_d * (-m)));
    dd.view_mut((0, d), (d, d)).copy_from(&id_d);
    // Row block 1: p-filter states.
    c.view_mut((d, 0), (nu * d, nu * d))
        .copy_from(&DMatrix::identity(nu * d, nu * d));
    // Row block 2: q = L y - u.
    let q_row = d + nu * d;
    dd.view_mut((q_row, 0), (d, d)).copy_from(&(&id_d * l));
    dd.view_mut((q_row, d), (d, d)).copy_from(&(&id_d * (-1.0)));
    // Row block 3: q-filter states.
    c.view_mut((q_row + d, nu * d), (nu * d, nu * d))
        .copy_from(&DMatrix::identity(nu * d, nu * d));

    Ok(IqcFilter {
        ss: StateSpace::new(a, b, c, dd)?,
        alpha,
        nu,
        d,
        sector,
    })
}

/// Series interconnection of the filter with `[G; I]`: maps the gradient
/// input `u` to the stacked channel vector `z`. State is
/// `[filter states; plant states]`.
pub fn interconnect(filter: &IqcFilter, plant: &StateSpace) -> Result<StateSpace> {
    if plant.ny() != filter.d || plant.nu() != filter.d {
        return Err(Error::dims(format!(
            "plant must be {}-input {}-output, got {} and {}",
            filter.d,
            filter.d,
            plant.nu(),
            plant.ny()
        )));
    }
    series(&filter.ss, &stack_with_identity(plant))
}

/// The symmetric middle matrix pairing the stacked channels, of size
/// `2 (1 + nu)`: zero diagonal blocks and off-diagonal block
/// `[[H, -P3], [-P1^T, 0]]` (rows `[p; p-states]`, columns `[q; q-states]`).
pub fn multiplier_p_matrix(vars: &MultiplierVars, nu: usize) -> DMatrix<f64> {
    assert_eq!(vars.p1.ncols(), nu, "P1 length must equal nu");
    assert_eq!(vars.p3.ncols(), nu, "P3 length must equal nu");
    let half = 1 + nu;
    let mut p = DMatrix::zeros(2 * half, 2 * half);
    p[(0, half)] = vars.h_cap;
    for j in 0..nu {
        p[(0, half + 1 + j)] = -vars.p3[j];
        p[(1 + j, half)] = -vars.p1[j];
    }
    let upper = p.view((0, half), (half, half)).clone_owned();
    p.view_mut((half, 0), (half, half))
        .copy_from(&upper.transpose());
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_abscissa;
    use crate::zames_falb::{build_basis, MultiplierClass, MultiplierConfig};
    use approx::assert_relative_eq;
    use nalgebra::{Complex, DVector, RowDVector};

    fn basis(nu: usize) -> ZfBasis {
        build_basis(&MultiplierConfig::new(MultiplierClass::FullZf, nu, -1.0).unwrap()).unwrap()
    }

    #[test]
    fn filter_first_order_matrices() {
        let f = build_filter(&basis(1), SectorBounds::new(1.0, 2.0).unwrap(), 0.0, 1).unwrap();
        assert_eq!(f.ss.a, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]));
        assert_eq!(f.ss.b, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -1.0]));
        assert_eq!(
            f.ss.c,
            DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0])
        );
        assert_eq!(
            f.ss.d,
            DMatrix::from_row_slice(4, 2, &[-1.0, 1.0, 0.0, 0.0, 2.0, -1.0, 0.0, 0.0])
        );
    }

    #[test]
    fn filter_alpha_shifts_state_blocks() {
        let f = build_filter(&basis(1), SectorBounds::new(1.0, 2.0).unwrap(), 0.5, 1).unwrap();
        assert_eq!(f.ss.a[(0, 0)], -2.0);
        assert_eq!(f.ss.a[(1, 1)], -2.0);
        assert_relative_eq!(spectral_abscissa(&f.ss.a).unwrap(), -2.0, epsilon = 1e-12);
    }

    #[test]
    fn filter_stable_for_nonnegative_alpha() {
        // The state matrix is defective (Jordan blocks), where QR eigenvalues
        // are only accurate to roughly eps^(1/nu); tolerance sized for nu <= 4.
        for nu in 1..=4 {
            for &alpha in &[0.0, 0.3, 1.0] {
                let f =
                    build_filter(&basis(nu), SectorBounds::new(0.5, 3.0).unwrap(), alpha, 2).unwrap();
                let abscissa = spectral_abscissa(&f.ss.a).unwrap();
                assert_relative_eq!(abscissa, -1.0 - 2.0 * alpha, epsilon = 1e-3);
                assert!(abscissa < 0.0);
            }
        }
    }

    #[test]
    fn p_output_vanishes_on_lower_sector_edge() {
        // Drive the filter with u = m y: the p channel is identically zero.
        let sector = SectorBounds::new(1.5, 3.0).unwrap();
        let f = build_filter(&basis(2), sector, 0.2, 1).unwrap();
        let y = 0.83;
        let u = sector.m * y;
        let x = DVector::from_element(f.ss.nx(), 0.37);
        let inp = DVector::from_column_slice(&[y, u]);
        let z = &f.ss.c * &x + &f.ss.d * &inp;
        assert_relative_eq!(z[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn interconnection_dimensions_with_integrator() {
        let plant = StateSpace::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let f = build_filter(&basis(1), SectorBounds::new(1.0, 2.0).unwrap(), 0.0, 1).unwrap();
        let ic = interconnect(&f, &plant).unwrap();
        assert_eq!(ic.nx(), 3);
        assert_eq!(ic.nu(), 1);
        assert_eq!(ic.ny(), 4);
    }

    #[test]
    fn interconnection_static_zero_plant_p_row() {
        // Plant y = 0: the p row of the interconnection feedthrough is the
        // identity acting on u alone.
        let plant = StateSpace::static_gain(DMatrix::zeros(1, 1));
        let f = build_filter(&basis(1), SectorBounds::new(1.0, 2.0).unwrap(), 0.0, 1).unwrap();
        let ic = interconnect(&f, &plant).unwrap();
        assert_eq!(ic.d[(0, 0)], 1.0);
    }

    #[test]
    fn interconnection_q_channel_transfer() {
        // The q output of the interconnection equals (L G(s) - 1) u.
        let plant = StateSpace::new(
            DMatrix::from_row_slice(1, 1, &[-0.7]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[2.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let sector = SectorBounds::new(1.0, 2.5).unwrap();
        let nu = 2;
        let f = build_filter(&basis(nu), sector, 0.0, 1).unwrap();
        let ic = interconnect(&f, &plant).unwrap();
        let q_row = 1 + nu; // after p and nu p-state channels
        for &om in &[0.1, 1.0, 3.3, 11.0] {
            let s = Complex::new(0.0, om);
            let t_ic = ic.transfer(s).unwrap();
            let g = plant.transfer(s).unwrap()[(0, 0)];
            let expected = g * sector.l - Complex::new(1.0, 0.0);
            assert_relative_eq!(t_ic[(q_row, 0)].re, expected.re, epsilon = 1e-9);
            assert_relative_eq!(t_ic[(q_row, 0)].im, expected.im, epsilon = 1e-9);
        }
    }

    #[test]
    fn filter_state_outputs_match_direct_convolution() {
        // Drive the filter with smooth signals and compare the state-output
        // channels against direct quadrature of the defining convolutions
        // w(t) = int_0^t e^{(lambda - 2 alpha)(t - s)} v(s) ds for v in {p, q}.
        let sector = SectorBounds::new(1.0, 2.5).unwrap();
        let alpha = 0.15;
        let lambda = -1.0;
        let f = build_filter(&basis(1), sector, alpha, 1).unwrap();
        let dt = 1e-3;
        let horizon = 10.0;
        let n = (horizon / dt) as usize;
        let y = |t: f64| (0.7 * t).sin() + 0.3 * (1.3 * t).cos();
        let u = |t: f64| 0.5 * (0.9 * t).cos() - 0.2 * (2.1 * t).sin();

        // RK4 on the filter driven by (y, u).
        let mut x = DVector::<f64>::zeros(2);
        let deriv = |t: f64, x: &DVector<f64>| -> DVector<f64> {
            &f.ss.a * x + &f.ss.b * DVector::from_column_slice(&[y(t), u(t)])
        };
        let mut worst: f64 = 0.0;
        for k in 0..=n {
            let t = k as f64 * dt;
            // Direct quadrature of the convolutions at a few checkpoints.
            if k % 2000 == 0 && k > 0 {
                let mut wp = 0.0;
                let mut wq = 0.0;
                let m_steps = k;
                for j in 0..=m_steps {
                    let s = j as f64 * dt;
                    let w = if j == 0 || j == m_steps { 0.5 } else { 1.0 };
                    let kernel = ((lambda - 2.0 * alpha) * (t - s)).exp();
                    let p = u(s) - sector.m * y(s);
                    let q = sector.l * y(s) - u(s);
                    wp += w * dt * kernel * p;
                    wq += w * dt * kernel * q;
                }
                worst = worst.max((x[0] - wp).abs()).max((x[1] - wq).abs());
            }
            let k1 = deriv(t, &x);
            let k2 = deriv(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
            let k3 = deriv(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
            let k4 = deriv(t + dt, &(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        assert!(worst < 1e-5, "filter/quadrature mismatch {worst}");
    }

    #[test]
    fn p_matrix_circle_criterion_pattern() {
        let vars = MultiplierVars::static_multiplier(1, 1.0);
        let p = multiplier_p_matrix(&vars, 1);
        let mut nonzero = 0;
        for i in 0..4 {
            for j in 0..4 {
                if p[(i, j)] != 0.0 {
                    nonzero += 1;
                    assert_eq!(p[(i, j)], 1.0);
                }
            }
        }
        assert_eq!(nonzero, 2);
        assert_eq!(p[(0, 2)], 1.0);
        assert_eq!(p[(2, 0)], 1.0);
    }

    #[test]
    fn p_matrix_causal_weight_entry() {
        let mut vars = MultiplierVars::zero(1);
        vars.h_cap = 1.0;
        vars.p3 = RowDVector::from_row_slice(&[0.5]);
        let p = multiplier_p_matrix(&vars, 1);
        assert_eq!(p[(0, 3)], -0.5);
        assert_eq!(p[(3, 0)], -0.5);
        assert!(crate::linalg::is_symmetric(&p, 1e-15));
    }

    #[test]
    fn p_matrix_quadratic_form_expansion() {
        // z^T (P ⊗ I_d) z = 2 H p^T q - 2 p^T (P3 w_q) - 2 q^T (P1 w_p)
        // for stacked z = [p; w_p; q; w_q], verified on random vectors.
        let nu = 2;
        let d = 2;
        let mut vars = MultiplierVars::zero(nu);
        vars.h_cap = 1.3;
        vars.p1 = RowDVector::from_row_slice(&[0.4, -0.1]);
        vars.p3 = RowDVector::from_row_slice(&[0.9, 0.2]);
        let p_mat = kron_lift(&multiplier_p_matrix(&vars, nu), d).unwrap();

        let mut rng_state = 42u64;
        let mut next = move || {
            // Small deterministic LCG; avoids pulling rand into unit tests.
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((rng_state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..10 {
            let p: DVector<f64> = DVector::from_fn(d, |_, _| next());
            let q: DVector<f64> = DVector::from_fn(d, |_, _| next());
            let wp: Vec<DVector<f64>> = (0..nu).map(|_| DVector::from_fn(d, |_, _| next())).collect();
            let wq: Vec<DVector<f64>> = (0..nu).map(|_| DVector::from_fn(d, |_, _| next())).collect();

            let mut z = DVector::zeros(2 * (1 + nu) * d);
            z.rows_mut(0, d).copy_from(&p);
            for (j, w) in wp.iter().enumerate() {
                z.rows_mut(d * (1 + j), d).copy_from(w);
            }
            let off = d * (1 + nu);
            z.rows_mut(off, d).copy_from(&q);
            for (j, w) in wq.iter().enumerate() {
                z.rows_mut(off + d * (1 + j), d).copy_from(w);
            }

            let lhs = (z.transpose() * &p_mat * &z)[(0, 0)];
            let mut rhs = 2.0 * vars.h_cap * p.dot(&q);
            for j in 0..nu {
                rhs -= 2.0 * vars.p3[j] * p.dot(&wq[j]);
                rhs -= 2.0 * vars.p1[j] * q.dot(&wp[j]);
            }
            assert_relative_eq!(lhs, rhs, epsilon = 1e-12);
        }
    }
}
