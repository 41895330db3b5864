//! Zames-Falb multiplier parameterization.
//!
//! The multiplier kernel `h` is parameterized over an exponential basis: a
//! bidiagonal generator `A_nu` (pole `lambda` of multiplicity `nu`), its
//! impulse response `Q_nu(t) = e^{A_nu t} B_nu = e^{lambda t} R_nu [1, t, ...,
//! t^{nu-1}]^T`, and row vectors `P1` (anti-causal side) and `P3` (causal
//! side) weighting the basis. Admissibility of `(H, P1, P3)` is a scalar L1
//! bound plus a pair of small LMIs certifying pointwise nonnegativity of the
//! kernel.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};
use crate::ss::StateSpace;

/// Which multiplier structure the search uses.
///
/// Restricting `P1 = 0` keeps only the causal side of the kernel; `P3 = 0`
/// keeps only the anti-causal side; zeroing both reduces to a static
/// multiplier (the circle criterion).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierClass {
    CircleCriterion,
    CausalZf,
    AntiCausalZf,
    FullZf,
}

impl MultiplierClass {
    /// Whether the anti-causal weights `P1` participate in the search.
    pub fn uses_p1(self) -> bool {
        matches!(self, MultiplierClass::AntiCausalZf | MultiplierClass::FullZf)
    }

    /// Whether the causal weights `P3` participate in the search.
    pub fn uses_p3(self) -> bool {
        matches!(self, MultiplierClass::CausalZf | MultiplierClass::FullZf)
    }
}

impl std::fmt::Display for MultiplierClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MultiplierClass::CircleCriterion => "cc",
            MultiplierClass::CausalZf => "causal",
            MultiplierClass::AntiCausalZf => "anticausal",
            MultiplierClass::FullZf => "zf",
        };
        f.write_str(s)
    }
}

/// Multiplier class, basis order and basis pole.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierConfig {
    pub class: MultiplierClass,
    pub order: usize,
    pub lambda: f64,
}

impl MultiplierConfig {
    pub fn new(class: MultiplierClass, order: usize, lambda: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("multiplier order must be >= 1"));
        }
        if !(lambda < 0.0) {
            return Err(Error::invalid(format!(
                "basis pole lambda must be strictly negative, got {lambda}"
            )));
        }
        Ok(MultiplierConfig { class, order, lambda })
    }
}

impl Default for MultiplierConfig {
    /// First-order full ZF multiplier with pole -1. The pole has no known
    /// principled choice; -1 works well across the shipped examples, and a
    /// line search over it is out of scope.
    fn default() -> Self {
        MultiplierConfig {
            class: MultiplierClass::FullZf,
            order: 1,
            lambda: -1.0,
        }
    }
}

/// The order-`nu` multiplier basis.
#[derive(Debug, Clone)]
pub struct ZfBasis {
    /// Lower-bidiagonal generator: `lambda` on the diagonal, 1 below it.
    pub a_nu: DMatrix<f64>,
    /// First unit vector.
    pub b_nu: DVector<f64>,
    /// `diag(1/0!, 1/1!, ..., 1/(nu-1)!)`.
    pub r_nu: DMatrix<f64>,
    /// Realization of `[1, s/(s-lambda)^{nu-1}, ..., s^{nu-1}/(s-lambda)^{nu-1}]^T`
    /// as a single-input system with `nu - 1` states and `nu` outputs
    /// (controllable canonical form over the shared denominator).
    pub psi_tilde: StateSpace,
    pub order: usize,
    pub lambda: f64,
}

/// A point in the multiplier variable space, e.g. extracted from a
/// feasibility witness. Inactive sides are zero.
#[derive(Debug, Clone)]
pub struct MultiplierVars {
    pub h_cap: f64,
    pub p1: RowDVector<f64>,
    pub p3: RowDVector<f64>,
    pub x1: DMatrix<f64>,
    pub x3: DMatrix<f64>,
}

impl MultiplierVars {
    /// All-zero variables for a given order (useful as a neutral default).
    pub fn zero(order: usize) -> Self {
        let k = order.saturating_sub(1);
        MultiplierVars {
            h_cap: 0.0,
            p1: RowDVector::zeros(order),
            p3: RowDVector::zeros(order),
            x1: DMatrix::zeros(k, k),
            x3: DMatrix::zeros(k, k),
        }
    }

    /// Static multiplier of weight `h_cap` (circle criterion point).
    pub fn static_multiplier(order: usize, h_cap: f64) -> Self {
        let mut v = Self::zero(order);
        v.h_cap = h_cap;
        v
    }
}

/// Binomial coefficient as f64 (small arguments only).
fn binomial(n: usize, k: usize) -> f64 {
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Monic coefficients of `(s - lambda)^n`, lowest degree first, excluding the
/// leading 1.
fn shifted_pole_denominator(lambda: f64, n: usize) -> Vec<f64> {
    // (s - lambda)^n = sum_j C(n, j) s^j (-lambda)^(n-j)
    (0..n)
        .map(|j| binomial(n, j) * (-lambda).powi((n - j) as i32))
        .collect()
}

fn build_psi_tilde(order: usize, lambda: f64) -> StateSpace {
    let nu = order;
    let n = nu - 1; // shared denominator degree
    if n == 0 {
        return StateSpace::static_gain(DMatrix::from_row_slice(1, 1, &[1.0]));
    }
    let denom = shifted_pole_denominator(lambda, n);

    // Controllable canonical form of 1/(s - lambda)^n.
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        a[(i, i + 1)] = 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = -denom[j];
    }
    let mut b = DMatrix::zeros(n, 1);
    b[(n - 1, 0)] = 1.0;

    let mut c = DMatrix::zeros(nu, n);
    let mut d = DMatrix::zeros(nu, 1);
    // Output 0: the constant 1.
    d[(0, 0)] = 1.0;
    // Outputs 1..nu-1: numerators s^k, strictly proper.
    for k in 1..n {
        c[(k, k)] = 1.0;
    }
    // Output nu-1: s^n / (s - lambda)^n = 1 - (denominator tail)/(denominator).
    for j in 0..n {
        c[(nu - 1, j)] = -denom[j];
    }
    d[(nu - 1, 0)] = 1.0;
    StateSpace::new(a, b, c, d).expect("psi_tilde dimensions are consistent by construction")
}

/// Builds the multiplier basis for a configuration.
pub fn build_basis(config: &MultiplierConfig) -> Result<ZfBasis> {
    let nu = config.order;
    let lambda = config.lambda;
    if nu == 0 {
        return Err(Error::invalid("multiplier order must be >= 1"));
    }
    if !(lambda < 0.0) {
        return Err(Error::invalid("basis pole lambda must be strictly negative"));
    }
    let mut a_nu = DMatrix::zeros(nu, nu);
    for i in 0..nu {
        a_nu[(i, i)] = lambda;
        if i + 1 < nu {
            a_nu[(i + 1, i)] = 1.0;
        }
    }
    let mut b_nu = DVector::zeros(nu);
    b_nu[0] = 1.0;
    let mut r_nu = DMatrix::zeros(nu, nu);
    let mut fact = 1.0;
    for k in 0..nu {
        if k > 0 {
            fact *= k as f64;
        }
        r_nu[(k, k)] = 1.0 / fact;
    }
    Ok(ZfBasis {
        a_nu,
        b_nu,
        r_nu,
        psi_tilde: build_psi_tilde(nu, lambda),
        order: nu,
        lambda,
    })
}

impl ZfBasis {
    /// `Q_nu(t) = e^{lambda t} R_nu [1, t, ..., t^{nu-1}]^T`.
    pub fn q_nu(&self, t: f64) -> DVector<f64> {
        let mut mono = DVector::zeros(self.order);
        let mut p = 1.0;
        for k in 0..self.order {
            mono[k] = p;
            p *= t;
        }
        (self.lambda * t).exp() * (&self.r_nu * mono)
    }
}

/// Coefficients of the scalar L1-norm constraint
/// `H + (P1 + P3) A_nu^{-1} B_nu >= 0`.
///
/// The constraint reads `h_coeff * H + p_coeffs . (P1 + P3) >= 0`; since
/// `A_nu` is triangular the solve is forward substitution.
#[derive(Debug, Clone)]
pub struct L1Row {
    pub h_coeff: f64,
    pub p_coeffs: DVector<f64>,
}

pub fn l1_row(basis: &ZfBasis) -> L1Row {
    let nu = basis.order;
    let lambda = basis.lambda;
    // Forward substitution on the lower-bidiagonal A_nu v = B_nu.
    let mut v = DVector::zeros(nu);
    v[0] = 1.0 / lambda;
    for k in 1..nu {
        v[k] = -v[k - 1] / lambda;
    }
    L1Row {
        h_coeff: 1.0,
        p_coeffs: v,
    }
}

/// Exact parameterization of the nonnegative-kernel cone for one side.
///
/// A kernel side `h(t) = e^{lambda t} pi(t)` with
/// `pi(t) = sum_j P_{j+1} t^j / j!` is nonnegative on the half line iff
/// `pi = sigma_0(t) + t sigma_1(t)` for sums of squares `sigma_i`, i.e. iff
/// there are Gram matrices `G_0 >= 0` (monomials up to `floor((nu-1)/2)`)
/// and, for `nu >= 2`, `G_1 >= 0` (up to `floor((nu-2)/2)`) whose entries
/// reproduce the polynomial coefficients. The weights `P` are the induced
/// linear images of the Gram entries; for `nu = 1` this reduces to the
/// scalar condition `P >= 0`.
#[derive(Debug, Clone)]
pub struct KernelCone {
    /// Basis depth `nu` (the kernel has `nu` weights per side).
    pub order: usize,
    /// Side lengths of the Gram matrices (one or two blocks).
    pub gram_dims: Vec<usize>,
    /// Per Gram block: for each lower-triangle entry `(r, c)` the weight
    /// vector mapping that entry into the `nu` kernel weights `P`.
    pub p_weights: Vec<Vec<(usize, usize, DVector<f64>)>>,
}

impl KernelCone {
    /// Kernel weights induced by concrete Gram matrices.
    pub fn p_from_grams(&self, grams: &[DMatrix<f64>]) -> RowDVector<f64> {
        assert_eq!(grams.len(), self.gram_dims.len());
        let mut p = RowDVector::zeros(self.order);
        for (block, entries) in self.p_weights.iter().enumerate() {
            for (r, c, w) in entries {
                let g = grams[block][(*r, *c)];
                for j in 0..self.order {
                    p[j] += w[j] * g;
                }
            }
        }
        p
    }
}

/// Builds the nonnegative-kernel cone shared by both sides `i in {1, 3}`
/// (the same parameterization applies to `P1` and `P3`).
pub fn positivity_form(basis: &ZfBasis) -> KernelCone {
    let nu = basis.order;
    let n = nu - 1; // polynomial degree
    // sigma_0 over monomials [1, ..., t^{d0}]; t * sigma_1 over [1, ..., t^{d1}].
    let d0 = n / 2;
    let gram_dims = if n == 0 {
        vec![1]
    } else {
        vec![d0 + 1, (n - 1) / 2 + 1]
    };

    let mut factorial = vec![1.0f64; nu];
    for j in 1..nu {
        factorial[j] = factorial[j - 1] * j as f64;
    }

    let mut p_weights = Vec::with_capacity(gram_dims.len());
    for (block, dim) in gram_dims.iter().enumerate() {
        let mut entries = Vec::new();
        for c in 0..*dim {
            for r in c..*dim {
                // G[r, c] contributes to the coefficient of t^(r + c + block),
                // doubled off the diagonal; P_{j+1} = j! * coefficient_j.
                let j = r + c + block;
                debug_assert!(j <= n);
                let mult = if r == c { 1.0 } else { 2.0 };
                let mut w = DVector::zeros(nu);
                w[j] = mult * factorial[j];
                entries.push((r, c, w));
            }
        }
        p_weights.push(entries);
    }
    KernelCone {
        order: nu,
        gram_dims,
        p_weights,
    }
}

/// Evaluates the multiplier kernel
/// `h(t) = P1 Q_nu(-t)` for `t < 0`, `P3 Q_nu(t)` for `t >= 0`.
pub fn h_eval(basis: &ZfBasis, p1: &RowDVector<f64>, p3: &RowDVector<f64>, t: f64) -> f64 {
    if t < 0.0 {
        (p1 * basis.q_nu(-t))[0]
    } else {
        (p3 * basis.q_nu(t))[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    fn cfg(order: usize, lambda: f64) -> MultiplierConfig {
        MultiplierConfig::new(MultiplierClass::FullZf, order, lambda).unwrap()
    }

    #[test]
    fn basis_order_two() {
        let b = build_basis(&cfg(2, -1.0)).unwrap();
        assert_eq!(b.a_nu, DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 1.0, -1.0]));
        assert_eq!(b.b_nu, DVector::from_row_slice(&[1.0, 0.0]));
        assert_eq!(b.r_nu, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        assert_eq!(b.psi_tilde.nx(), 1);
        assert_eq!(b.psi_tilde.ny(), 2);
    }

    #[test]
    fn basis_order_one_is_static() {
        let b = build_basis(&cfg(1, -1.0)).unwrap();
        assert_eq!(b.a_nu, DMatrix::from_row_slice(1, 1, &[-1.0]));
        assert_eq!(b.psi_tilde.nx(), 0);
        assert_eq!(b.psi_tilde.d, DMatrix::from_row_slice(1, 1, &[1.0]));
    }

    #[test]
    fn basis_order_three_factorials_and_zero_at_origin() {
        let b = build_basis(&cfg(3, -1.0)).unwrap();
        assert_eq!(b.r_nu[(0, 0)], 1.0);
        assert_eq!(b.r_nu[(1, 1)], 1.0);
        assert_eq!(b.r_nu[(2, 2)], 0.5);
        // Third output is s^2/(s+1)^2, which vanishes at s = 0.
        let t = b.psi_tilde.transfer(Complex::new(0.0, 0.0)).unwrap();
        assert_relative_eq!(t[(2, 0)].re, 0.0, epsilon = 1e-12);
        assert_relative_eq!(t[(2, 0)].im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn basis_rejects_bad_config() {
        assert!(MultiplierConfig::new(MultiplierClass::FullZf, 0, -1.0).is_err());
        assert!(MultiplierConfig::new(MultiplierClass::FullZf, 1, 0.0).is_err());
        assert!(MultiplierConfig::new(MultiplierClass::FullZf, 1, 0.5).is_err());
    }

    #[test]
    fn psi_tilde_transfer_matches_symbolic_entries() {
        for (nu, lambda) in [(1usize, -1.0), (2, -1.0), (3, -0.7), (5, -1.3)] {
            let b = build_basis(&cfg(nu, lambda)).unwrap();
            for &om in &[0.0, 0.3, 1.0, 4.7, 20.0] {
                let s = Complex::new(0.0, om);
                let t = b.psi_tilde.transfer(s).unwrap();
                let den = (s - Complex::new(lambda, 0.0)).powi(nu as i32 - 1);
                for k in 0..nu {
                    let expected = if k == 0 {
                        Complex::new(1.0, 0.0)
                    } else {
                        s.powi(k as i32) / den
                    };
                    assert_relative_eq!(t[(k, 0)].re, expected.re, epsilon = 1e-9);
                    assert_relative_eq!(t[(k, 0)].im, expected.im, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn psi_tilde_first_output_is_constant_one() {
        for nu in 1..=5 {
            let b = build_basis(&cfg(nu, -1.0)).unwrap();
            assert_eq!(b.psi_tilde.d[(0, 0)], 1.0);
            for j in 0..b.psi_tilde.nx() {
                assert_eq!(b.psi_tilde.c[(0, j)], 0.0);
            }
            // All psi_tilde poles sit at lambda; the pole has multiplicity
            // nu - 1, limiting QR eigenvalue accuracy to ~eps^(1/(nu-1)).
            for z in crate::linalg::eigenvalues(&b.psi_tilde.a).unwrap() {
                assert_relative_eq!(z.re, -1.0, epsilon = 2e-3);
                assert_relative_eq!(z.im, 0.0, epsilon = 2e-3);
            }
        }
    }

    #[test]
    fn l1_row_examples() {
        let b = build_basis(&cfg(1, -1.0)).unwrap();
        let row = l1_row(&b);
        assert_eq!(row.h_coeff, 1.0);
        assert_relative_eq!(row.p_coeffs[0], -1.0, epsilon = 1e-15);

        let b = build_basis(&cfg(2, -1.0)).unwrap();
        let row = l1_row(&b);
        assert_relative_eq!(row.p_coeffs[0], -1.0, epsilon = 1e-15);
        assert_relative_eq!(row.p_coeffs[1], -1.0, epsilon = 1e-15);

        // Sanity: A_nu (A_nu^{-1} B_nu) = B_nu.
        let b = build_basis(&cfg(4, -2.3)).unwrap();
        let row = l1_row(&b);
        let back = &b.a_nu * &row.p_coeffs;
        assert_relative_eq!((back - &b.b_nu).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn q_nu_solves_its_ode() {
        // d/dt Q_nu = A_nu Q_nu with Q_nu(0) = B_nu, by finite differences.
        let b = build_basis(&cfg(3, -1.0)).unwrap();
        assert_relative_eq!((b.q_nu(0.0) - &b.b_nu).norm(), 0.0, epsilon = 1e-12);
        let h = 1e-6;
        for &t in &[0.0, 0.4, 1.7, 5.0] {
            let dq = (b.q_nu(t + h) - b.q_nu(t - h)) / (2.0 * h);
            let expected = &b.a_nu * b.q_nu(t);
            assert!((dq - expected).amax() < 1e-4);
        }
    }

    #[test]
    fn h_eval_examples() {
        let b = build_basis(&cfg(1, -1.0)).unwrap();
        let p1 = RowDVector::from_row_slice(&[2.0]);
        let p3 = RowDVector::from_row_slice(&[1.0]);
        assert_relative_eq!(h_eval(&b, &p1, &p3, 0.0), 1.0, epsilon = 1e-15);
        assert_relative_eq!(h_eval(&b, &p1, &p3, -1.0), 2.0 * (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn h_integral_matches_p1_plus_p3_for_first_order() {
        // The kernel may jump at t = 0 (P1 != P3), so integrate each smooth
        // side separately: trapezoid over [-40, 0] and [0, 40] at step 1e-3.
        let b = build_basis(&cfg(1, -1.0)).unwrap();
        let p1 = RowDVector::from_row_slice(&[0.7]);
        let p3 = RowDVector::from_row_slice(&[1.9]);
        let step = 1e-3;
        let n = (40.0 / step) as usize;
        let mut acc = 0.0;
        for i in 0..=n {
            let t = i as f64 * step;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            // Anti-causal side evaluated through the basis directly to get
            // the one-sided limit at t = 0.
            acc += w * (&p1 * b.q_nu(t))[0];
            acc += w * h_eval(&b, &p1, &p3, t);
        }
        acc *= step;
        assert_relative_eq!(acc, 0.7 + 1.9, epsilon = 1e-6);
    }

    #[test]
    fn kernel_cone_order_one_is_scalar_p() {
        let b = build_basis(&cfg(1, -1.0)).unwrap();
        let cone = positivity_form(&b);
        assert_eq!(cone.gram_dims, vec![1]);
        let p = cone.p_from_grams(&[DMatrix::from_element(1, 1, 2.5)]);
        assert_relative_eq!(p[0], 2.5, epsilon = 1e-15);
    }

    #[test]
    fn kernel_cone_order_two_forces_componentwise_nonnegativity() {
        // h(t) = e^{lambda t}(P1 + P2 t) >= 0 on the half line iff both
        // weights are nonnegative; the cone has two scalar Gram blocks.
        let b = build_basis(&cfg(2, -1.0)).unwrap();
        let cone = positivity_form(&b);
        assert_eq!(cone.gram_dims, vec![1, 1]);
        let p = cone.p_from_grams(&[
            DMatrix::from_element(1, 1, 0.3),
            DMatrix::from_element(1, 1, 0.8),
        ]);
        assert_relative_eq!(p[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn kernel_cone_images_are_nonnegative_kernels() {
        // Any PSD Gram pair must map to a kernel that stays nonnegative.
        for nu in 1..=5usize {
            let b = build_basis(&cfg(nu, -1.0)).unwrap();
            let cone = positivity_form(&b);
            // Random p.s.d. grams via M^T M.
            let mut state = 0x9e3779b97f4a7c15u64 ^ (nu as u64);
            let mut next = move || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            };
            for _ in 0..5 {
                let grams: Vec<DMatrix<f64>> = cone
                    .gram_dims
                    .iter()
                    .map(|&d| {
                        let m = DMatrix::from_fn(d, d, |_, _| next());
                        m.transpose() * m
                    })
                    .collect();
                let p = cone.p_from_grams(&grams);
                let zero = RowDVector::zeros(nu);
                for k in 0..=500 {
                    let t = k as f64 * 0.1;
                    let h = h_eval(&b, &zero, &p, t);
                    assert!(
                        h >= -1e-12 * p.amax().max(1.0),
                        "nu = {nu}: image kernel dips to {h} at t = {t}"
                    );
                }
            }
        }
    }

    #[test]
    fn kernel_cone_covers_hand_picked_nonnegative_kernels() {
        // (1 - t)^2-shaped weights: P = [1, -2, 2] gives
        // pi(t) = 1 - 2t + t^2 >= 0; representable with G0 = [[1,-1],[-1,1]].
        let b = build_basis(&cfg(3, -1.0)).unwrap();
        let cone = positivity_form(&b);
        assert_eq!(cone.gram_dims, vec![2, 1]);
        let g0 = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let g1 = DMatrix::from_element(1, 1, 0.0);
        let p = cone.p_from_grams(&[g0, g1]);
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(p[1], -2.0, epsilon = 1e-15);
        assert_relative_eq!(p[2], 2.0, epsilon = 1e-15); // 2! * coefficient 1
        let zero = RowDVector::zeros(3);
        for k in 0..=400 {
            let t = k as f64 * 0.05;
            assert!(h_eval(&b, &zero, &p, t) >= -1e-12);
        }
    }
}
