//! Dense matrix helpers: Kronecker lifting, eigenvalues, kernels, matrix
//! exponential.
//!
//! Everything here operates on `nalgebra::DMatrix<f64>`; sizes in this crate
//! stay below ~30x30 so dense algorithms are used throughout.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold on singular values used for numerical rank decisions.
pub const KERNEL_RANK_TOL: f64 = 1e-10;

/// `M ⊗ I_d`: replicates each entry of `M` by a `d x d` identity block.
pub fn kron_lift(m: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 {
        return Err(Error::invalid("kron_lift requires d >= 1"));
    }
    Ok(m.kronecker(&DMatrix::<f64>::identity(d, d)))
}

/// Checks `max|M - M^T| <= tol_factor * max|M|`.
pub fn is_symmetric(m: &DMatrix<f64>, tol_factor: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(f64::MIN_POSITIVE);
    let skew = (m - m.transpose()).amax();
    skew <= tol_factor * scale
}

/// Symmetrizes a nearly-symmetric matrix, `(M + M^T)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// All eigenvalues of a square matrix.
///
/// Backed by the real Schur decomposition (Hessenberg reduction followed by
/// the shifted QR iteration).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    if m.nrows() != m.ncols() {
        return Err(Error::dims(format!(
            "eigenvalues requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur =
        nalgebra::linalg::Schur::try_new(m.clone(), 1e-14, 100_000).ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the eigenvalues of `M`.
pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    let eigs = eigenvalues(m)?;
    Ok(eigs
        .iter()
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// A unit-norm kernel direction of `M`, if the numerical rank indicates one.
///
/// Singular values below `KERNEL_RANK_TOL * sigma_max` count as zero. The
/// returned vector satisfies `|M eta| <= 1e-9 |M|`. Returns `None` for
/// numerically full-rank matrices.
pub fn null_direction(m: &DMatrix<f64>) -> Option<DVector<f64>> {
    assert_eq!(m.nrows(), m.ncols(), "null_direction requires a square matrix");
    let n = m.nrows();
    if n == 0 {
        return None;
    }
    let svd = m.clone().svd(false, true);
    let sigma_max = svd.singular_values.max();
    if sigma_max == 0.0 {
        // Zero matrix: every direction is in the kernel.
        let mut e1 = DVector::zeros(n);
        e1[0] = 1.0;
        return Some(e1);
    }
    let (idx, &sigma_min) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
    if sigma_min > KERNEL_RANK_TOL * sigma_max {
        return None;
    }
    let v_t = svd.v_t.as_ref()?;
    let eta = v_t.row(idx).transpose();
    Some(&eta / eta.norm())
}

/// Matrix exponential via scaling-and-squaring with a (6,6) Pade approximant.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "expm requires a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let norm = m.amax() * n as f64;
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let a = m / 2f64.powi(s);

    // Pade(6,6): exp(A) ~ q(A)^{-1} p(A) with p/q built from powers of A.
    let c = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let id = DMatrix::<f64>::identity(n, n);
    let mut term = id.clone();
    let mut p = &id * c[0];
    let mut q = &id * c[0];
    let mut sign = -1.0;
    for coeff in c.iter().skip(1) {
        term = &term * &a;
        p += &term * *coeff;
        q += &term * (*coeff * sign);
        sign = -sign;
    }
    let mut e = q
        .lu()
        .solve(&p)
        .expect("Pade denominator is singular; input too large for expm scaling");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// Coefficients of the monic characteristic polynomial (lowest degree first),
/// computed by the Faddeev-LeVerrier recursion. Test helper for cross-checking
/// eigenvalue routines on small matrices.
pub fn characteristic_polynomial(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    assert_eq!(n, m.ncols());
    let mut coeffs = vec![0.0; n + 1];
    coeffs[n] = 1.0;
    let mut aux = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        aux = m * aux;
        let c = -aux.trace() / k as f64;
        coeffs[n - k] = c;
        for i in 0..n {
            aux[(i, i)] += c;
        }
    }
    coeffs
}
