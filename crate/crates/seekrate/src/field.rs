//! Scalar fields driving the source-seeking loop.
//!
//! A field supplies the gradient the vehicle feeds back. Shipped kinds:
//! quadratic fields (linear gradient, closed-form minimizer) and a
//! coordinate-wise smooth saturating nonlinearity scaled into the sector.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::iqc_filter::SectorBounds;
use crate::linalg::symmetrize;

#[derive(Debug, Clone)]
pub enum FieldKind {
    /// `f(y) = y' Q y + c' y + offset` with gradient `2 Q y + c`.
    Quadratic {
        q: DMatrix<f64>,
        c: DVector<f64>,
        offset: f64,
    },
    /// Coordinate-wise gradient `m x + (L - m)(x - tanh x)` with
    /// `x = y_i - center_i`; secant slopes lie in `[m, L)` and the minimizer
    /// sits at `center`.
    ScaledSmooth { center: DVector<f64> },
}

/// A field together with its declared sector.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub sector: SectorBounds,
    pub d: usize,
}

// log cosh x, stable for large |x|.
fn ln_cosh(x: f64) -> f64 {
    x.abs() + (1.0 + (-2.0 * x.abs()).exp()).ln() - std::f64::consts::LN_2
}

impl FieldSpec {
    /// Quadratic field; validates that the Hessian eigenvalues `2 Q` lie in
    /// the declared sector.
    pub fn quadratic(
        q: DMatrix<f64>,
        c: DVector<f64>,
        offset: f64,
        sector: SectorBounds,
    ) -> Result<Self> {
        let d = q.nrows();
        if q.ncols() != d || c.len() != d {
            return Err(Error::dims("quadratic field dimensions inconsistent"));
        }
        if !crate::linalg::is_symmetric(&q, 1e-10) {
            return Err(Error::invalid("quadratic field Q must be symmetric"));
        }
        let eigs = symmetrize(&q).symmetric_eigenvalues() * 2.0;
        let tol = 1e-9 * sector.l.max(1.0);
        for ev in eigs.iter() {
            if *ev < sector.m - tol || *ev > sector.l + tol {
                return Err(Error::invalid(format!(
                    "Hessian eigenvalue {ev} outside sector [{}, {}]",
                    sector.m, sector.l
                )));
            }
        }
        Ok(FieldSpec {
            kind: FieldKind::Quadratic { q, c, offset },
            sector,
            d,
        })
    }

    /// Isotropic quadratic field `f(y) = (k/2)|y - center|^2` (curvature `k`).
    pub fn isotropic_quadratic(
        k: f64,
        center: &DVector<f64>,
        sector: SectorBounds,
    ) -> Result<Self> {
        let d = center.len();
        let q = DMatrix::identity(d, d) * (k / 2.0);
        let c = -k * center;
        Self::quadratic(q, c, 0.0, sector)
    }

    /// Smooth non-quadratic member of the sector.
    pub fn scaled_smooth(center: DVector<f64>, sector: SectorBounds) -> Self {
        let d = center.len();
        FieldSpec {
            kind: FieldKind::ScaledSmooth { center },
            sector,
            d,
        }
    }

    /// Gradient at `y`.
    pub fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            FieldKind::Quadratic { q, c, .. } => q * y * 2.0 + c,
            FieldKind::ScaledSmooth { center } => {
                let (m, l) = (self.sector.m, self.sector.l);
                DVector::from_fn(self.d, |i, _| {
                    let x = y[i] - center[i];
                    m * x + (l - m) * (x - x.tanh())
                })
            }
        }
    }

    /// Field value at `y`.
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        match &self.kind {
            FieldKind::Quadratic { q, c, offset } => {
                (y.transpose() * q * y)[(0, 0)] + c.dot(y) + offset
            }
            FieldKind::ScaledSmooth { center } => {
                let (m, l) = (self.sector.m, self.sector.l);
                (0..self.d)
                    .map(|i| {
                        let x = y[i] - center[i];
                        0.5 * m * x * x + (l - m) * (0.5 * x * x - ln_cosh(x))
                    })
                    .sum()
            }
        }
    }

    /// The minimizer: closed form for quadratic fields, damped gradient
    /// descent (to `|grad| <= 1e-12`) for smooth ones.
    pub fn minimizer(&self) -> Result<DVector<f64>> {
        match &self.kind {
            FieldKind::Quadratic { q, c, .. } => {
                let lhs = q * 2.0;
                lhs.lu()
                    .solve(&(-c))
                    .ok_or_else(|| Error::invalid("quadratic field Hessian is singular"))
            }
            FieldKind::ScaledSmooth { .. } => {
                let mut y = DVector::zeros(self.d);
                if let FieldKind::ScaledSmooth { center } = &self.kind {
                    // Start a little off-center so the search is exercised.
                    y = center.clone_owned().add_scalar(0.1);
                }
                let step = 1.0 / self.sector.l;
                for _ in 0..20_000 {
                    let g = self.gradient(&y);
                    if g.norm() <= 1e-12 {
                        return Ok(y);
                    }
                    y -= step * g;
                }
                let g = self.gradient(&y);
                if g.norm() <= 1e-12 {
                    Ok(y)
                } else {
                    Err(Error::MinimizerSearch {
                        grad_norm: g.norm(),
                        iters: 20_000,
                    })
                }
            }
        }
    }

    /// Samples the secant inequality
    /// `m|y1-y2|^2 <= (grad(y1)-grad(y2))'(y1-y2) <= L|y1-y2|^2`
    /// on random pairs; returns the worst violation (<= 0 means compliant).
    pub fn secant_violation(&self, rng: &mut impl Rng, pairs: usize, radius: f64) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..pairs {
            let y1 = DVector::from_fn(self.d, |_, _| rng.random_range(-radius..radius));
            let y2 = DVector::from_fn(self.d, |_, _| rng.random_range(-radius..radius));
            let dy = &y1 - &y2;
            let nsq = dy.norm_squared();
            if nsq < 1e-20 {
                continue;
            }
            let dg = (self.gradient(&y1) - self.gradient(&y2)).dot(&dy);
            worst = worst.max(self.sector.m * nsq - dg);
            worst = worst.max(dg - self.sector.l * nsq);
        }
        worst
    }
}

/// Random quadratic field with Hessian eigenvalues spread across the sector,
/// minimizer at `center`.
pub fn random_quadratic(
    rng: &mut impl Rng,
    d: usize,
    center: &DVector<f64>,
    sector: SectorBounds,
) -> FieldSpec {
    // Random orthogonal basis via QR of a random matrix.
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let qr = a.qr();
    let u = qr.q();
    let eigs = DVector::from_fn(d, |i, _| {
        if d == 1 || i > 0 {
            rng.random_range(sector.m..=sector.l)
        } else {
            // Make sure the sector edges are represented often.
            match rng.random_range(0..3) {
                0 => sector.m,
                1 => sector.l,
                _ => rng.random_range(sector.m..=sector.l),
            }
        }
    });
    let hessian = &u * DMatrix::from_diagonal(&eigs) * u.transpose();
    let q = symmetrize(&hessian) * 0.5;
    let c = -symmetrize(&hessian) * center;
    FieldSpec::quadratic(q, c, 0.0, sector).expect("constructed Hessian lies in the sector")
}
