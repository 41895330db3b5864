//! Semidefinite feasibility problems and a small dense interior-point solver.
//!
//! A problem is a set of scalar / row-vector / symmetric-matrix variables
//! together with affine symmetric-matrix constraints. Feasibility is decided
//! by a phase-I program: maximize the smallest eigenvalue margin `t` over all
//! constraint blocks subject to a unit-ball normalization of the variable
//! vector, solved with a log-det barrier and damped Newton steps. The
//! certification LMIs solved here are jointly homogeneous in the variables,
//! so the ball normalization loses nothing and a strictly feasible point
//! exists iff the optimal margin is positive.
//!
//! Witnesses are re-verified against the declared per-constraint margins by
//! an eigenvalue check that is independent of the solver iteration.

use nalgebra::{DMatrix, DVector};

use crate::linalg::symmetrize;

mod barrier;

pub use barrier::PhaseOneOptions;

/// Kind of a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Scalar,
    /// Row vector of the given length.
    Row(usize),
    /// Symmetric matrix of the given side length.
    Sym(usize),
}

impl VarKind {
    /// Number of scalar components backing the variable (never zero for
    /// nonempty shapes; a `Sym(0)` or `Row(0)` variable is vacuous).
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        match *self {
            VarKind::Scalar => 1,
            VarKind::Row(n) => n,
            VarKind::Sym(n) => n * (n + 1) / 2,
        }
    }
}

/// A declared variable and its slice of the flat component vector.
#[derive(Debug, Clone)]
pub struct VarDecl {
    pub name: String,
    pub kind: VarKind,
    pub offset: usize,
}

/// Handle returned by variable declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

/// Required sense of an affine symmetric-matrix expression.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sense {
    /// Expression `>=` `margin * I`.
    PositiveDefinite { margin: f64 },
    /// Expression `<=` `-margin * I`.
    NegativeDefinite { margin: f64 },
    /// Scalar expression `>= 0` (dimension-1 block).
    NonNegative,
}

/// One affine constraint block: `constant + sum_i x_i * coeff_i` with the
/// declared sense, where `i` ranges over flat scalar components.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub label: String,
    pub dim: usize,
    pub sense: Sense,
    /// Sparse coefficient list: (flat component index, symmetric matrix).
    pub terms: Vec<(usize, DMatrix<f64>)>,
    pub constant: DMatrix<f64>,
}

impl Constraint {
    /// Margin the verified witness must meet (in `>= margin I` orientation).
    fn required_margin(&self) -> f64 {
        match self.sense {
            Sense::PositiveDefinite { margin } | Sense::NegativeDefinite { margin } => margin,
            Sense::NonNegative => 0.0,
        }
    }

    /// Evaluates the block at a flat component vector, oriented so the
    /// requirement reads `>= margin I`.
    fn evaluate_oriented(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for (idx, coeff) in &self.terms {
            m += coeff * x[*idx];
        }
        if matches!(self.sense, Sense::NegativeDefinite { .. }) {
            -m
        } else {
            m
        }
    }
}

/// A semidefinite feasibility problem.
#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<VarDecl>,
    n_components: usize,
    constraints: Vec<Constraint>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind) -> VarId {
        let decl = VarDecl {
            name: name.into(),
            kind,
            offset: self.n_components,
        };
        self.n_components += kind.len();
        self.vars.push(decl);
        VarId(self.vars.len() - 1)
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn vars(&self) -> &[VarDecl] {
        &self.vars
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Flat component index of the `k`-th component of a variable.
    pub fn component(&self, var: VarId, k: usize) -> usize {
        let decl = &self.vars[var.0];
        debug_assert!(k < decl.kind.len());
        decl.offset + k
    }

    /// Component index of entry `(row, col)` of a symmetric variable
    /// (lower-triangle components ordered column-major).
    pub fn sym_component(&self, var: VarId, row: usize, col: usize) -> usize {
        let decl = &self.vars[var.0];
        let n = match decl.kind {
            VarKind::Sym(n) => n,
            _ => panic!("sym_component on a non-symmetric variable"),
        };
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        // Offset of column c in the packed lower triangle: sum_{j<c} (n - j).
        let col_base = c * n - c * c.saturating_sub(1) / 2;
        decl.offset + col_base + (r - c)
    }

    /// Components of a symmetric variable as `(flat index, row, col)` over
    /// the lower triangle, column-major.
    pub fn sym_components(&self, var: VarId) -> Vec<(usize, usize, usize)> {
        let decl = &self.vars[var.0];
        let n = match decl.kind {
            VarKind::Sym(n) => n,
            _ => panic!("sym_components on a non-symmetric variable"),
        };
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        let mut idx = decl.offset;
        for c in 0..n {
            for r in c..n {
                out.push((idx, r, c));
                idx += 1;
            }
        }
        out
    }

    pub fn add_constraint(&mut self, c: Constraint) {
        for (idx, coeff) in &c.terms {
            assert!(*idx < self.n_components, "coefficient index out of range");
            assert_eq!(coeff.nrows(), c.dim);
            assert_eq!(coeff.ncols(), c.dim);
        }
        assert_eq!(c.constant.nrows(), c.dim);
        self.constraints.push(c);
    }

    /// Reconstructs a named variable's value from a flat component vector.
    pub fn extract(&self, x: &DVector<f64>, name: &str) -> Option<DMatrix<f64>> {
        let decl = self.vars.iter().find(|v| v.name == name)?;
        Some(match decl.kind {
            VarKind::Scalar => DMatrix::from_element(1, 1, x[decl.offset]),
            VarKind::Row(n) => DMatrix::from_fn(1, n, |_, j| x[decl.offset + j]),
            VarKind::Sym(n) => {
                let mut m = DMatrix::zeros(n, n);
                let mut idx = decl.offset;
                for c in 0..n {
                    for r in c..n {
                        m[(r, c)] = x[idx];
                        m[(c, r)] = x[idx];
                        idx += 1;
                    }
                }
                m
            }
        })
    }

    /// True when every constraint has a (numerically) zero constant term, so
    /// the constraint system is a cone and witnesses may be rescaled freely.
    pub fn is_homogeneous(&self) -> bool {
        self.constraints.iter().all(|c| c.constant.amax() <= 1e-300)
    }
}

/// Solve verdict for a feasibility problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Feasible,
    Infeasible,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::NumericalFailure => "numerical-failure",
        };
        f.write_str(s)
    }
}

/// Smallest-eigenvalue report for one constraint at the witness.
#[derive(Debug, Clone)]
pub struct ConstraintResidual {
    pub label: String,
    pub min_eigenvalue: f64,
    pub required_margin: f64,
}

/// Result of a feasibility solve. The witness is present iff feasible, and
/// has passed the independent residual verification.
#[derive(Debug, Clone)]
pub struct FeasibilityResult {
    pub status: SolveStatus,
    pub witness: Option<DVector<f64>>,
    pub residuals: Vec<ConstraintResidual>,
    /// Optimal uniform margin of the normalized phase-I program.
    pub phase1_margin: f64,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        self.status == SolveStatus::Feasible
    }
}

/// Tolerance for relative residual verification of returned witnesses.
pub const RESIDUAL_VERIFY_TOL: f64 = 1e-7;

/// Computes per-constraint minimum eigenvalues at a witness.
pub fn constraint_residuals(problem: &SdpProblem, x: &DVector<f64>) -> Vec<ConstraintResidual> {
    problem
        .constraints()
        .iter()
        .map(|c| {
            let m = symmetrize(&c.evaluate_oriented(x));
            let min_eig = if c.dim == 0 {
                f64::INFINITY
            } else {
                m.symmetric_eigenvalues().min()
            };
            ConstraintResidual {
                label: c.label.clone(),
                min_eigenvalue: min_eig,
                required_margin: c.required_margin(),
            }
        })
        .collect()
}

/// Decides feasibility of the problem.
///
/// A uniform-margin barrier pass decides the clear cases. Margins in the
/// boundary band around zero arise when the feasible cone has empty interior
/// (the certification LMIs saturate along the plant's equilibrium direction);
/// those are resolved by a second pass that keeps the margin on the
/// strict-margin blocks only, flooring the rest at their achieved boundary.
/// Feasible verdicts return a witness rescaled (valid for homogeneous
/// problems) to satisfy every declared `margin * I`, re-verified by direct
/// symmetric eigenvalue computation. A verification mismatch is reported as
/// numerical failure, never as a rate claim.
pub fn check_feasible(problem: &SdpProblem, opts: &PhaseOneOptions) -> FeasibilityResult {
    let n = problem.n_components();
    if problem.constraints().is_empty() || n == 0 {
        return FeasibilityResult {
            status: SolveStatus::Feasible,
            witness: Some(DVector::zeros(n)),
            residuals: Vec::new(),
            phase1_margin: f64::INFINITY,
        };
    }

    let failure = |margin: f64, residuals: Vec<ConstraintResidual>| FeasibilityResult {
        status: SolveStatus::NumericalFailure,
        witness: None,
        residuals,
        phase1_margin: margin,
    };

    let uniform = match barrier::run_pass(problem, opts, barrier::MarginMode::Uniform, None) {
        Ok(o) => o,
        Err(_) => return failure(f64::NAN, Vec::new()),
    };
    if !uniform.margin.is_finite() && uniform.margin != f64::INFINITY {
        return failure(uniform.margin, Vec::new());
    }

    if uniform.margin < -opts.boundary_tolerance {
        return FeasibilityResult {
            status: SolveStatus::Infeasible,
            witness: None,
            residuals: constraint_residuals(problem, &uniform.x),
            phase1_margin: uniform.margin,
        };
    }

    // Boundary band: re-maximize the margin over the strict blocks only,
    // letting the saturated blocks sit on their boundary. The admissible dip
    // below the boundary is tightened until it is negligible relative to the
    // achieved strict margin, so near-infeasible systems cannot sneak through
    // on an absolute slack.
    let candidate = if uniform.margin >= opts.strict_threshold {
        uniform.x.clone()
    } else {
        let mut floor = uniform.margin.min(0.0) - opts.boundary_floor;
        let mut warm = Some(uniform.x.clone());
        let mut accepted = None;
        for _round in 0..6 {
            let polish = match barrier::run_pass(
                problem,
                opts,
                barrier::MarginMode::StrictOnly { floor },
                warm.as_ref(),
            ) {
                Ok(p) => p,
                Err(_) => return failure(uniform.margin, Vec::new()),
            };
            if polish.margin < opts.strict_threshold {
                // Strict blocks cannot clear their margins even with the
                // boundary blocks relaxed: no usable witness exists.
                return FeasibilityResult {
                    status: SolveStatus::Infeasible,
                    witness: None,
                    residuals: constraint_residuals(problem, &polish.x),
                    phase1_margin: uniform.margin,
                };
            }
            let target = (opts.relative_boundary * polish.margin).max(opts.min_boundary_floor);
            if -floor <= target {
                accepted = Some(polish.x);
                break;
            }
            floor = -target;
            // Tighter floors invalidate the previous iterate; restart from
            // the origin, which is interior for every homogeneous block.
            warm = None;
        }
        match accepted {
            Some(x) => x,
            None => {
                return FeasibilityResult {
                    status: SolveStatus::Infeasible,
                    witness: None,
                    residuals: Vec::new(),
                    phase1_margin: uniform.margin,
                }
            }
        }
    };

    // Build a verified witness.
    let mut x = candidate;
    if problem.is_homogeneous() {
        // Normalize scale, then grow until every declared margin holds.
        let amax = x.amax();
        if amax > 0.0 {
            x /= amax;
        }
        let residuals = constraint_residuals(problem, &x);
        let mut scale: f64 = 1.0;
        for r in &residuals {
            if r.required_margin > 0.0 {
                if r.min_eigenvalue <= 0.0 {
                    return failure(uniform.margin, residuals);
                }
                scale = scale.max(2.0 * r.required_margin / r.min_eigenvalue);
            }
        }
        x *= scale;
    }

    let residuals = constraint_residuals(problem, &x);
    let x_scale = x.amax().max(1.0);
    let verified = residuals.iter().zip(problem.constraints()).all(|(r, c)| {
        let coeff_scale = c
            .terms
            .iter()
            .map(|(_, m)| m.amax())
            .fold(1.0_f64, f64::max);
        r.min_eigenvalue >= r.required_margin - RESIDUAL_VERIFY_TOL * coeff_scale * x_scale
    });
    if verified {
        FeasibilityResult {
            status: SolveStatus::Feasible,
            witness: Some(x),
            residuals,
            phase1_margin: uniform.margin,
        }
    } else {
        failure(uniform.margin, residuals)
    }
}
