//! Rate-certification LMIs and the bisection driver.
//!
//! At a candidate rate `alpha`, feasibility of
//!
//! ```text
//! [[A'X + XA + 2 alpha X, XB], [B'X, 0]] + [C D]' (P ⊗ I_d) [C D]  <=  0,
//! X > 0,  P admissible
//! ```
//!
//! over the filter/plant interconnection `(A, B, C, D)` certifies exponential
//! output convergence with rate `alpha`. For polytopic LPV plants one copy of
//! the block inequality per vertex shares a single `(X, H, P1, P3)`.
//! Feasibility is monotone in `alpha`, so a bisection over an integer grid of
//! step `grid_tol` returns the largest certifiable grid multiple.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::iqc_filter::{build_filter, interconnect, multiplier_p_matrix, SectorBounds};
use crate::linalg::{eigenvalues, kron_lift};
use crate::plants::PlantModel;
use crate::sdp::{
    check_feasible, Constraint, FeasibilityResult, PhaseOneOptions, SdpProblem, Sense, SolveStatus,
    VarKind,
};
use crate::ss::StateSpace;
use crate::zames_falb::{
    build_basis, l1_row, positivity_form, MultiplierClass, MultiplierConfig, MultiplierVars,
    ZfBasis,
};

/// Default bisection grid resolution.
pub const DEFAULT_GRID_TOL: f64 = 1.0 / 8192.0; // 2^-13

/// Strictness margin folded into `X > 0` and the kernel-positivity blocks.
pub const STRICTNESS_MARGIN: f64 = 1e-7;

/// The rate LMI is kept non-strict: for plants with integral action it
/// saturates along the equilibrium direction (where it reproduces the kernel
/// L1 bound), so demanding a strict margin there would reject valid
/// certificates.
pub const RATE_LMI_MARGIN: f64 = 0.0;

/// Options for `certify_rate`.
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    /// Top of the bisection bracket; `None` derives it from the plant's
    /// stable spectrum (1.1x its decay, capped at 10).
    pub alpha_max: Option<f64>,
    /// Bisection grid resolution.
    pub grid_tol: f64,
    /// Phase-I solver options.
    pub solver: PhaseOneOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            alpha_max: None,
            grid_tol: DEFAULT_GRID_TOL,
            solver: PhaseOneOptions::default(),
        }
    }
}

/// Outcome of a certification run.
#[derive(Debug, Clone, PartialEq)]
pub enum RateOutcome {
    /// Not even `alpha = 0` (plain stability) could be certified.
    InfeasibleAtZero,
    /// Largest feasible grid multiple of `grid_tol`.
    Certified(f64),
}

/// A certified rate together with the bisection log and the witness at the
/// certified point.
#[derive(Debug, Clone)]
pub struct RateEstimate {
    pub outcome: RateOutcome,
    pub grid_tol: f64,
    /// `(alpha tried, status)` in evaluation order.
    pub log: Vec<(f64, SolveStatus)>,
    pub witness: Option<FeasibilityResult>,
    /// Problem corresponding to the witness (for residual re-checks).
    pub problem_at_witness: Option<SdpProblem>,
}

impl RateEstimate {
    /// Certified rate as a number, `None` if stability itself failed.
    pub fn alpha_star(&self) -> Option<f64> {
        match self.outcome {
            RateOutcome::Certified(a) => Some(a),
            RateOutcome::InfeasibleAtZero => None,
        }
    }

    /// Extracts the multiplier variables from the stored witness.
    pub fn multiplier_vars(&self, config: &MultiplierConfig) -> Option<MultiplierVars> {
        let (w, p) = match (&self.witness, &self.problem_at_witness) {
            (Some(w), Some(p)) => (w.witness.as_ref()?, p),
            _ => return None,
        };
        Some(extract_multiplier_vars(p, w, config))
    }

    /// Extracts the storage-function matrix `X` from the stored witness.
    pub fn storage_matrix(&self) -> Option<DMatrix<f64>> {
        let w = self.witness.as_ref()?.witness.as_ref()?;
        self.problem_at_witness.as_ref()?.extract(w, "X")
    }
}

/// Reads `(H, P1, P3)` out of a witness vector, zero-filling the components
/// that the multiplier class excludes. Gram-parameterized sides are mapped
/// back to their kernel weights.
pub fn extract_multiplier_vars(
    problem: &SdpProblem,
    witness: &DVector<f64>,
    config: &MultiplierConfig,
) -> MultiplierVars {
    let nu = config.order;
    let mut vars = MultiplierVars::zero(nu);
    if let Some(h) = problem.extract(witness, "H") {
        vars.h_cap = h[(0, 0)];
    }
    let cone = build_basis(config).ok().map(|b| positivity_form(&b));
    let side = |side: usize| -> Option<nalgebra::RowDVector<f64>> {
        if let Some(p) = problem.extract(witness, &format!("P{side}")) {
            return Some(p.row(0).clone_owned());
        }
        let cone = cone.as_ref()?;
        let grams: Option<Vec<DMatrix<f64>>> = (0..cone.gram_dims.len())
            .map(|b| problem.extract(witness, &format!("G{side}_{b}")))
            .collect();
        grams.map(|g| cone.p_from_grams(&g))
    };
    if let Some(p1) = side(1) {
        vars.p1 = p1;
    }
    if let Some(p3) = side(3) {
        vars.p3 = p3;
    }
    vars
}

/// Assembles the feasibility problem for one LTI interconnection.
pub fn assemble_lmi(
    interconnection: &StateSpace,
    alpha: f64,
    config: &MultiplierConfig,
    basis: &ZfBasis,
    d: usize,
) -> Result<SdpProblem> {
    assemble_lmi_lpv(std::slice::from_ref(interconnection), alpha, config, basis, d)
}

/// Assembles the feasibility problem with one rate-LMI copy per vertex
/// interconnection, sharing all variables.
pub fn assemble_lmi_lpv(
    vertex_interconnections: &[StateSpace],
    alpha: f64,
    config: &MultiplierConfig,
    basis: &ZfBasis,
    d: usize,
) -> Result<SdpProblem> {
    if vertex_interconnections.is_empty() {
        return Err(Error::invalid("at least one vertex interconnection required"));
    }
    let nu = config.order;
    let n = vertex_interconnections[0].nx();
    let n_chan = 2 * (1 + nu);
    for ic in vertex_interconnections {
        if ic.nx() != n {
            return Err(Error::dims("vertex interconnections must share state dimension"));
        }
        if ic.ny() != n_chan * d || ic.nu() != d {
            return Err(Error::dims(format!(
                "interconnection must map {} inputs to {} channel outputs, got {} -> {}",
                d,
                n_chan * d,
                ic.nu(),
                ic.ny()
            )));
        }
    }

    // The one-sided searches parameterize each kernel side through the
    // nonnegative-kernel Gram cone with the L1 row binding the mass to H.
    // The full two-sided search runs sign-unrestricted: the richer set is
    // what reproduces the tight two-sided certificates (it remains exact
    // against worst-case quadratic fields, which bound any certificate from
    // above).
    let constrain_kernel = config.class != MultiplierClass::FullZf;
    let cone = positivity_form(basis);

    let mut problem = SdpProblem::new();
    let x_var = problem.add_var("X", VarKind::Sym(n));
    let h_var = problem.add_var("H", VarKind::Scalar);
    // Per active side: either a free weight row (sign-free search) or the
    // Gram blocks whose image the weights are.
    let declare_side = |side: usize, active: bool, problem: &mut SdpProblem| {
        if !active {
            return (None, Vec::new());
        }
        if constrain_kernel {
            let grams: Vec<crate::sdp::VarId> = cone
                .gram_dims
                .iter()
                .enumerate()
                .map(|(b, &dim)| problem.add_var(format!("G{side}_{b}"), VarKind::Sym(dim)))
                .collect();
            (None, grams)
        } else {
            (Some(problem.add_var(format!("P{side}"), VarKind::Row(nu))), Vec::new())
        }
    };
    let (p1_var, g1_vars) = declare_side(1, config.class.uses_p1(), &mut problem);
    let (p3_var, g3_vars) = declare_side(3, config.class.uses_p3(), &mut problem);

    // Flattened terms of one kernel side: (flat component, weight into P).
    let side_components = |grams: &[crate::sdp::VarId], problem: &SdpProblem| {
        let mut comps: Vec<(usize, DVector<f64>)> = Vec::new();
        for (b, gv) in grams.iter().enumerate() {
            for (r, c, w) in &cone.p_weights[b] {
                comps.push((problem.sym_component(*gv, *r, *c), w.clone()));
            }
        }
        comps
    };
    let g1_comps = side_components(&g1_vars, &problem);
    let g3_comps = side_components(&g3_vars, &problem);

    // X > 0.
    let mut x_pd_terms = Vec::new();
    for (idx, r, c) in problem.sym_components(x_var) {
        let mut e = DMatrix::zeros(n, n);
        e[(r, c)] = 1.0;
        e[(c, r)] = 1.0;
        x_pd_terms.push((idx, e));
    }
    problem.add_constraint(Constraint {
        label: "X_pd".into(),
        dim: n,
        sense: Sense::PositiveDefinite {
            margin: STRICTNESS_MARGIN,
        },
        terms: x_pd_terms,
        constant: DMatrix::zeros(n, n),
    });

    // Rate LMI per vertex.
    for (v, ic) in vertex_interconnections.iter().enumerate() {
        let dim = n + d;
        let mut terms: Vec<(usize, DMatrix<f64>)> = Vec::new();

        // X part: [[E A + A' E + 2 alpha E, E B], [B' E, 0]].
        for (idx, r, c) in problem.sym_components(x_var) {
            let mut e = DMatrix::zeros(n, n);
            e[(r, c)] = 1.0;
            e[(c, r)] = 1.0;
            let ea = &e * &ic.a;
            let mut blk = DMatrix::zeros(dim, dim);
            blk.view_mut((0, 0), (n, n))
                .copy_from(&(&ea + ea.transpose() + &e * (2.0 * alpha)));
            let eb = &e * &ic.b;
            blk.view_mut((0, n), (n, d)).copy_from(&eb);
            blk.view_mut((n, 0), (d, n)).copy_from(&eb.transpose());
            terms.push((idx, blk));
        }

        // Multiplier part: [C D]' (P_basis ⊗ I_d) [C D] per multiplier entry.
        let mut cd = DMatrix::zeros(n_chan * d, n + d);
        cd.view_mut((0, 0), (n_chan * d, n)).copy_from(&ic.c);
        cd.view_mut((0, n), (n_chan * d, d)).copy_from(&ic.d);
        let half = 1 + nu;
        let add_p_entry = |terms: &mut Vec<(usize, DMatrix<f64>)>,
                               comp: usize,
                               row: usize,
                               col: usize,
                               sign: f64|
         -> Result<()> {
            let mut p = DMatrix::zeros(n_chan, n_chan);
            p[(row, col)] = sign;
            p[(col, row)] = sign;
            let middle = kron_lift(&p, d)?;
            terms.push((comp, cd.transpose() * middle * &cd));
            Ok(())
        };
        // Channel coupling matrices for each weight entry of P.
        let p3_entry = |j: usize| (0usize, half + 1 + j);
        let p1_entry = |j: usize| (1 + j, half);
        add_p_entry(&mut terms, problem.component(h_var, 0), 0, half, 1.0)?;
        if let Some(p3) = p3_var {
            for j in 0..nu {
                let (r, c) = p3_entry(j);
                add_p_entry(&mut terms, problem.component(p3, j), r, c, -1.0)?;
            }
        }
        if let Some(p1) = p1_var {
            for j in 0..nu {
                let (r, c) = p1_entry(j);
                add_p_entry(&mut terms, problem.component(p1, j), r, c, -1.0)?;
            }
        }
        // Gram-parameterized sides: each Gram component couples through the
        // weighted sum of its induced P entries.
        for (comps, causal_side) in [(&g3_comps, true), (&g1_comps, false)] {
            for (flat, w) in comps.iter() {
                let mut p = DMatrix::zeros(n_chan, n_chan);
                for j in 0..nu {
                    if w[j] != 0.0 {
                        let (r, c) = if causal_side { p3_entry(j) } else { p1_entry(j) };
                        p[(r, c)] += -w[j];
                        p[(c, r)] += -w[j];
                    }
                }
                if p.amax() == 0.0 {
                    continue;
                }
                let middle = kron_lift(&p, d)?;
                terms.push((*flat, cd.transpose() * middle * &cd));
            }
        }

        problem.add_constraint(Constraint {
            label: format!("rate_lmi_v{v}"),
            dim,
            sense: Sense::NegativeDefinite {
                margin: RATE_LMI_MARGIN,
            },
            terms,
            constant: DMatrix::zeros(dim, dim),
        });
    }

    // Kernel L1 bound for the constrained classes: H + (P1 + P3) . v >= 0.
    // The sign-free full search keeps only the H >= 0 normalization.
    let row = l1_row(basis);
    let mut l1_terms = vec![(
        problem.component(h_var, 0),
        DMatrix::from_element(1, 1, row.h_coeff),
    )];
    if constrain_kernel {
        for comps in [&g1_comps, &g3_comps] {
            for (flat, w) in comps.iter() {
                let coeff: f64 = (0..nu).map(|j| row.p_coeffs[j] * w[j]).sum();
                if coeff != 0.0 {
                    l1_terms.push((*flat, DMatrix::from_element(1, 1, coeff)));
                }
            }
        }
    }
    problem.add_constraint(Constraint {
        label: if constrain_kernel { "kernel_l1" } else { "h_nonneg" }.into(),
        dim: 1,
        sense: Sense::NonNegative,
        terms: l1_terms,
        constant: DMatrix::zeros(1, 1),
    });

    // Kernel positivity: the Gram blocks of each parameterized side are
    // positive semidefinite (with the shared strictness margin).
    for (side, grams) in [(1usize, &g1_vars), (3, &g3_vars)] {
        for (b, gv) in grams.iter().enumerate() {
            let dim = cone.gram_dims[b];
            let mut terms = Vec::new();
            for (idx, r, c) in problem.sym_components(*gv) {
                let mut e = DMatrix::zeros(dim, dim);
                e[(r, c)] = 1.0;
                e[(c, r)] = 1.0;
                terms.push((idx, e));
            }
            problem.add_constraint(Constraint {
                label: format!("kernel_pos_{side}_{b}"),
                dim,
                sense: Sense::PositiveDefinite {
                    margin: STRICTNESS_MARGIN,
                },
                terms,
                constant: DMatrix::zeros(dim, dim),
            });
        }
    }

    Ok(problem)
}

/// Builds the interconnections and the feasibility problem for a plant at a
/// given rate, returning the problem.
pub fn build_problem(
    plant: &PlantModel,
    sector: SectorBounds,
    config: &MultiplierConfig,
    alpha: f64,
) -> Result<SdpProblem> {
    let basis = build_basis(config)?;
    let filter = build_filter(&basis, sector, alpha, plant.d)?;
    let ics: Vec<StateSpace> = plant
        .vertices()
        .iter()
        .map(|v| interconnect(&filter, v))
        .collect::<Result<_>>()?;
    assemble_lmi_lpv(&ics, alpha, config, &basis, plant.d)
}

/// Decides feasibility of the certification problem for a plant at one rate.
pub fn feasible_at(
    plant: &PlantModel,
    sector: SectorBounds,
    config: &MultiplierConfig,
    alpha: f64,
    solver: &PhaseOneOptions,
) -> Result<(SdpProblem, FeasibilityResult)> {
    let problem = build_problem(plant, sector, config, alpha)?;
    let result = check_feasible(&problem, solver);
    Ok((problem, result))
}

/// Default bisection bracket top: 1.1x the decay of the plant's stable part
/// (eigenvalues away from the integrator), capped at 10.
pub fn default_alpha_max(plant: &PlantModel) -> Result<f64> {
    let mut best = 0.0_f64;
    for v in plant.vertices() {
        let eigs = eigenvalues(&v.a)?;
        let stable_abscissa = eigs
            .iter()
            .filter(|z| z.norm() > 1e-7)
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if stable_abscissa.is_finite() && stable_abscissa < 0.0 {
            best = best.max(-stable_abscissa);
        }
    }
    if best == 0.0 {
        // No stable part detected; fall back to a unit bracket.
        best = 1.0;
    }
    Ok((1.1 * best).min(10.0))
}

/// Certifies the largest grid multiple of `grid_tol` at which the LMI system
/// is feasible, by monotone bisection on the integer grid.
pub fn certify_rate(
    plant: &PlantModel,
    sector: SectorBounds,
    config: &MultiplierConfig,
    opts: &CertifyOptions,
) -> Result<RateEstimate> {
    if !(opts.grid_tol > 0.0) {
        return Err(Error::invalid("grid_tol must be positive"));
    }
    let alpha_max = match opts.alpha_max {
        Some(a) if a > 0.0 => a,
        Some(_) => return Err(Error::invalid("alpha_max must be positive")),
        None => default_alpha_max(plant)?,
    };

    let mut log = Vec::new();
    let mut best_witness: Option<(SdpProblem, FeasibilityResult)> = None;

    let probe = |k: u64,
                     log: &mut Vec<(f64, SolveStatus)>,
                     best: &mut Option<(SdpProblem, FeasibilityResult)>|
     -> Result<bool> {
        let alpha = k as f64 * opts.grid_tol;
        let (problem, result) = feasible_at(plant, sector, config, alpha, &opts.solver)?;
        log.push((alpha, result.status));
        match result.status {
            SolveStatus::Feasible => {
                *best = Some((problem, result));
                Ok(true)
            }
            SolveStatus::Infeasible => Ok(false),
            SolveStatus::NumericalFailure => Err(Error::SolverFailure {
                alpha,
                reason: "phase-I solve did not reach a verdict".into(),
            }),
        }
    };

    if !probe(0, &mut log, &mut best_witness)? {
        return Ok(RateEstimate {
            outcome: RateOutcome::InfeasibleAtZero,
            grid_tol: opts.grid_tol,
            log,
            witness: None,
            problem_at_witness: None,
        });
    }

    let k_max = (alpha_max / opts.grid_tol).floor() as u64;
    let (mut lo, mut hi) = (0u64, k_max);
    if k_max > 0 && probe(k_max, &mut log, &mut best_witness)? {
        lo = k_max;
    } else {
        // Invariant: lo feasible, hi infeasible (or bracket top).
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if probe(mid, &mut log, &mut best_witness)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    // `lo` only advances on feasible probes, so the stored witness is the
    // solve at exactly `lo * grid_tol`.
    let alpha_star = lo as f64 * opts.grid_tol;

    let (problem_at_witness, witness) = match best_witness {
        Some((p, w)) => (Some(p), Some(w)),
        None => (None, None),
    };
    Ok(RateEstimate {
        outcome: RateOutcome::Certified(alpha_star),
        grid_tol: opts.grid_tol,
        log,
        witness,
        problem_at_witness,
    })
}

/// Evaluates the multiplier matrix `P ⊗ I_d` for a witness.
pub fn witness_p_matrix(vars: &MultiplierVars, nu: usize, d: usize) -> Result<DMatrix<f64>> {
    kron_lift(&multiplier_p_matrix(vars, nu), d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zames_falb::MultiplierClass;

    fn integrator_plant() -> PlantModel {
        // G(s) = 1/s: certifiable for sector (m, L) at rates up to m... L-dependent.
        let ss = StateSpace::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        PlantModel::lti("integrator", ss).unwrap()
    }

    #[test]
    fn circle_criterion_problem_has_no_p_vars() {
        let plant = integrator_plant();
        let config = MultiplierConfig::new(MultiplierClass::CircleCriterion, 1, -1.0).unwrap();
        let p = build_problem(&plant, SectorBounds::new(1.0, 2.0).unwrap(), &config, 0.1).unwrap();
        let names: Vec<&str> = p.vars().iter().map(|v| v.name.as_str()).collect();
        assert!(names.contains(&"X"));
        assert!(names.contains(&"H"));
        assert!(!names.contains(&"P1"));
        assert!(!names.contains(&"P3"));
    }

    #[test]
    fn full_zf_order_one_has_p_but_no_x_fragments() {
        let plant = integrator_plant();
        let config = MultiplierConfig::new(MultiplierClass::FullZf, 1, -1.0).unwrap();
        let p = build_problem(&plant, SectorBounds::new(1.0, 2.0).unwrap(), &config, 0.1).unwrap();
        let names: Vec<&str> = p.vars().iter().map(|v| v.name.as_str()).collect();
        assert!(names.contains(&"P1"));
        assert!(names.contains(&"P3"));
        assert!(!names.contains(&"X1"));
        assert!(!names.contains(&"X3"));
    }

    #[test]
    fn integrator_feedback_certifies_near_sector_floor() {
        // u = grad f(y) with G = -1/s gives ydot = -grad f(y): the slowest
        // quadratic field has curvature m, so the true worst rate is m = 1.
        let plant = integrator_plant();
        let config = MultiplierConfig::new(MultiplierClass::CircleCriterion, 1, -1.0).unwrap();
        let est = certify_rate(
            &plant,
            SectorBounds::new(1.0, 1.0).unwrap(),
            &config,
            &CertifyOptions {
                alpha_max: Some(2.0),
                ..CertifyOptions::default()
            },
        )
        .unwrap();
        let alpha = est.alpha_star().expect("certifiable");
        assert!(
            (alpha - 1.0).abs() < 0.01,
            "expected rate near 1.0, got {alpha}"
        );
        // Soundness: never above the true rate by more than a grid step.
        assert!(alpha <= 1.0 + est.grid_tol);
    }

    #[test]
    fn problems_are_homogeneous() {
        let plant = integrator_plant();
        for class in [
            MultiplierClass::CircleCriterion,
            MultiplierClass::CausalZf,
            MultiplierClass::AntiCausalZf,
            MultiplierClass::FullZf,
        ] {
            let config = MultiplierConfig::new(class, 2, -1.0).unwrap();
            let p =
                build_problem(&plant, SectorBounds::new(1.0, 3.0).unwrap(), &config, 0.05).unwrap();
            assert!(p.is_homogeneous());
        }
    }

    #[test]
    fn unstable_interconnection_is_infeasible_at_zero() {
        // Plant with positive feedthrough sign makes the loop ydot = +grad f:
        // never stable, so not even alpha = 0 certifies.
        let ss = StateSpace::new(
            DMatrix::zeros(1, 1),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::from_row_slice(1, 1, &[1.0]),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let plant = PlantModel::lti("anti-integrator", ss).unwrap();
        let config = MultiplierConfig::new(MultiplierClass::FullZf, 1, -1.0).unwrap();
        let est = certify_rate(
            &plant,
            SectorBounds::new(1.0, 2.0).unwrap(),
            &config,
            &CertifyOptions {
                alpha_max: Some(1.0),
                ..CertifyOptions::default()
            },
        )
        .unwrap();
        assert_eq!(est.outcome, RateOutcome::InfeasibleAtZero);
    }
}
