//! Phase-I margin maximization with a log-det barrier.
//!
//! Solves `max t  s.t.  G_k(x) >= t I  for participating blocks k,
//! G_k(x) >= floor I for the rest,  |x|^2 <= R^2` where each `G_k` is an
//! affine symmetric-matrix map. Blocks are rescaled to unit coefficient norm
//! so `t` is a meaningful uniform margin. The solve is a textbook barrier
//! homotopy: for a growing weight `kappa`, minimize
//! `-kappa t - sum_k log det(S_k) - log(1 - |x|^2/R^2)` with damped Newton
//! steps; the margin estimate converges as `kappa` grows since the barrier
//! duality gap is bounded by (total block dimension + 1) / kappa.
//!
//! Two passes serve different purposes. The uniform pass puts the margin on
//! every block and decides strict feasibility. Certification cones routinely
//! have empty interior because the rate inequality saturates along the
//! equilibrium direction (the kernel L1 bound binds); those boundary-feasible
//! systems are still valid certificates, so a second pass keeps the margin
//! only on blocks with declared strict margins while flooring the others just
//! below their achieved boundary, recovering a usable witness.
//!
//! `t` is handled as an extra variable whose coefficient in participating
//! blocks is `-I`, which keeps gradient and Hessian assembly uniform.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::{Sense, SdpProblem};

/// Options controlling the phase-I barrier solve.
#[derive(Debug, Clone)]
pub struct PhaseOneOptions {
    /// Uniform margins at or above this value short-circuit to feasible.
    pub strict_threshold: f64,
    /// Uniform margins below this (negative) value short-circuit to
    /// infeasible; the band in between is resolved by the boundary pass.
    pub boundary_tolerance: f64,
    /// Target duality-gap bound on the margin at termination.
    pub gap_tol: f64,
    /// Gap target for the boundary polish pass (looser: its margin is an
    /// achieved feasible value, so under-reporting only adds conservatism).
    pub polish_gap_tol: f64,
    /// Normalized depth to which boundary blocks may dip in the first polish
    /// round.
    pub boundary_floor: f64,
    /// Accepted boundary dip relative to the achieved strict margin; the
    /// polish rounds shrink the floor until `dip <= relative_boundary *
    /// margin`, which bounds the certification error relative to the witness.
    pub relative_boundary: f64,
    /// Absolute floor magnitude below which the polish stops tightening
    /// (numerically indistinguishable from the boundary).
    pub min_boundary_floor: f64,
    /// Barrier weight growth per outer stage.
    pub kappa_growth: f64,
    /// Newton decrement threshold for inner termination.
    pub newton_tol: f64,
    /// Cap on inner Newton iterations per stage.
    pub max_newton_per_stage: usize,
    /// Cap on total Newton iterations.
    pub max_total_newton: usize,
    /// Normalization ball radius; `None` sizes it from the problem data
    /// (unit for homogeneous constraint systems).
    pub ball_radius: Option<f64>,
    /// Print per-stage progress to stderr.
    pub verbose: bool,
}

impl Default for PhaseOneOptions {
    fn default() -> Self {
        PhaseOneOptions {
            strict_threshold: 1e-7,
            boundary_tolerance: 1e-9,
            gap_tol: 1e-11,
            polish_gap_tol: 1e-5,
            boundary_floor: 1e-9,
            relative_boundary: 1e-8,
            min_boundary_floor: 1e-13,
            kappa_growth: 20.0,
            newton_tol: 1e-10,
            max_newton_per_stage: 80,
            max_total_newton: 6000,
            ball_radius: None,
            verbose: std::env::var("SEEKRATE_VERBOSE").is_ok_and(|v| v != "0" && !v.is_empty()),
        }
    }
}

/// Deprecated alias kept for clarity at call sites that only read it.
impl PhaseOneOptions {
    /// Margin above which a uniform-pass solution counts as strictly feasible.
    pub fn feasibility_threshold(&self) -> f64 {
        self.strict_threshold
    }
}

/// Output of one barrier pass.
pub(super) struct PassOutcome {
    /// Optimal margin over the participating blocks (normalized units).
    pub margin: f64,
    /// Final variable vector.
    pub x: DVector<f64>,
}

/// Which blocks the margin variable couples to.
pub(super) enum MarginMode {
    /// All blocks.
    Uniform,
    /// Only blocks with a strictly positive declared margin; the remaining
    /// blocks are floored at the given normalized level.
    StrictOnly { floor: f64 },
}

/// Internal normalized block.
struct Block {
    dim: usize,
    constant: DMatrix<f64>,
    /// (flat index into the extended vector, coefficient matrix).
    terms: Vec<(usize, DMatrix<f64>)>,
}

impl Block {
    fn evaluate(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut s = self.constant.clone();
        for (idx, coeff) in &self.terms {
            s += coeff * z[*idx];
        }
        s
    }
}

fn normalized_blocks(problem: &SdpProblem, t_idx: usize, mode: &MarginMode) -> Vec<Block> {
    let mut blocks = Vec::with_capacity(problem.constraints().len());
    for c in problem.constraints() {
        if c.dim == 0 {
            continue;
        }
        let negate = matches!(c.sense, Sense::NegativeDefinite { .. });
        let orient = |m: &DMatrix<f64>| if negate { -m } else { m.clone() };
        let scale = c
            .terms
            .iter()
            .map(|(_, m)| m.amax())
            .fold(0.0_f64, f64::max);
        if scale == 0.0 && c.constant.amax() == 0.0 {
            continue; // vacuous block
        }
        let scale = if scale > 0.0 { scale } else { 1.0 };
        let strict = match c.sense {
            Sense::PositiveDefinite { margin } | Sense::NegativeDefinite { margin } => margin > 0.0,
            Sense::NonNegative => false,
        };
        let mut constant = orient(&c.constant) / scale;
        let mut terms: Vec<(usize, DMatrix<f64>)> = c
            .terms
            .iter()
            .map(|(i, m)| (*i, orient(m) / scale))
            .collect();
        match mode {
            MarginMode::Uniform => {
                terms.push((t_idx, -DMatrix::<f64>::identity(c.dim, c.dim)));
            }
            MarginMode::StrictOnly { floor } => {
                if strict {
                    terms.push((t_idx, -DMatrix::<f64>::identity(c.dim, c.dim)));
                } else {
                    constant -= DMatrix::<f64>::identity(c.dim, c.dim) * *floor;
                }
            }
        }
        blocks.push(Block {
            dim: c.dim,
            constant,
            terms,
        });
    }
    blocks
}

pub(super) fn run_pass(
    problem: &SdpProblem,
    opts: &PhaseOneOptions,
    mode: MarginMode,
    warm_start: Option<&DVector<f64>>,
) -> Result<PassOutcome, &'static str> {
    let n = problem.n_components();
    let t_idx = n; // extended vector is [x; t]
    let dim_z = n + 1;

    let blocks = normalized_blocks(problem, t_idx, &mode);
    if blocks.is_empty() || !blocks.iter().any(|b| b.terms.iter().any(|(i, _)| *i == t_idx)) {
        return Ok(PassOutcome {
            margin: f64::INFINITY,
            x: warm_start.cloned().unwrap_or_else(|| DVector::zeros(n)),
        });
    }

    // Ball radius: unit for homogeneous systems; scaled to the (normalized)
    // constant terms otherwise, so the ball cannot cut off feasible points.
    let radius = opts.ball_radius.unwrap_or_else(|| {
        let cmax = blocks
            .iter()
            .map(|b| b.constant.amax())
            .fold(0.0_f64, f64::max);
        if cmax == 0.0 {
            1.0
        } else {
            100.0 * (1.0 + cmax)
        }
    });
    let r_sq = radius * radius;

    // Interior start: warm-started x or the origin, with t low enough that
    // every margin-coupled block is strictly positive.
    let mut z = DVector::zeros(dim_z);
    if let Some(w) = warm_start {
        for i in 0..n {
            z[i] = w[i];
        }
        let xsq: f64 = (0..n).map(|i| z[i] * z[i]).sum();
        if xsq >= 0.9 * r_sq {
            let shrink = (0.9 * r_sq / xsq).sqrt();
            for i in 0..n {
                z[i] *= shrink;
            }
        }
    }
    let mut t0 = f64::INFINITY;
    for b in &blocks {
        // Evaluate without the t contribution.
        let mut s = b.constant.clone();
        for (idx, coeff) in &b.terms {
            if *idx != t_idx {
                s += coeff * z[*idx];
            }
        }
        let min_eig = crate::linalg::symmetrize(&s).symmetric_eigenvalues().min();
        let coupled = b.terms.iter().any(|(i, _)| *i == t_idx);
        if coupled {
            t0 = t0.min(min_eig);
        } else if min_eig <= 0.0 {
            return Err("warm start not interior for floored blocks");
        }
    }
    z[t_idx] = t0 - 1.0;

    let total_block_dim: usize = blocks.iter().map(|b| b.dim).sum();
    let theta = (total_block_dim + 1) as f64;
    let gap_target = match mode {
        MarginMode::Uniform => opts.gap_tol,
        MarginMode::StrictOnly { .. } => opts.polish_gap_tol,
    };
    let mut kappa = 1.0;
    let kappa_final = theta / gap_target;
    let mut total_newton = 0usize;

    let mut chols: Vec<Cholesky<f64, nalgebra::Dyn>> = Vec::with_capacity(blocks.len());

    loop {
        let mut stage_newton = 0usize;
        loop {
            if total_newton >= opts.max_total_newton {
                return Err("newton iteration budget exhausted");
            }
            total_newton += 1;
            stage_newton += 1;

            // Factor all blocks at the current point.
            chols.clear();
            for b in &blocks {
                let s = b.evaluate(&z);
                match Cholesky::new(crate::linalg::symmetrize(&s)) {
                    Some(ch) => chols.push(ch),
                    None => return Err("iterate left the interior"),
                }
            }

            // Assemble gradient and Hessian of
            //   f(z) = -kappa t - sum log det S_k - log(1 - |x|^2/R^2).
            let mut grad = DVector::zeros(dim_z);
            grad[t_idx] = -kappa;
            let mut hess = DMatrix::<f64>::zeros(dim_z, dim_z);

            for (b, ch) in blocks.iter().zip(chols.iter()) {
                let s_inv = ch.inverse();
                let ws: Vec<(usize, DMatrix<f64>)> =
                    b.terms.iter().map(|(i, g)| (*i, &s_inv * g)).collect();
                for (i, wi) in &ws {
                    grad[*i] -= wi.trace();
                }
                for a in 0..ws.len() {
                    let (ia, wa) = &ws[a];
                    for (ib, wb) in ws.iter().skip(a) {
                        // tr(S^{-1} G_a S^{-1} G_b) = <W_a, W_b^T>
                        let mut acc = 0.0;
                        for r in 0..b.dim {
                            for cc in 0..b.dim {
                                acc += wa[(r, cc)] * wb[(cc, r)];
                            }
                        }
                        hess[(*ia, *ib)] += acc;
                        if ia != ib {
                            hess[(*ib, *ia)] += acc;
                        }
                    }
                }
            }

            // Ball barrier -log(1 - |x|^2 / R^2) over the x part only.
            let xsq: f64 = (0..n).map(|i| z[i] * z[i]).sum();
            let slack = 1.0 - xsq / r_sq;
            if slack <= 0.0 {
                return Err("iterate left the ball");
            }
            for i in 0..n {
                grad[i] += 2.0 * z[i] / (r_sq * slack);
                for j in 0..n {
                    hess[(i, j)] += 4.0 * z[i] * z[j] / (r_sq * r_sq * slack * slack);
                }
                hess[(i, i)] += 2.0 / (r_sq * slack);
            }

            // Newton direction; the ridge escalates relative to the Hessian
            // scale when factorization fails.
            let diag_max = (0..dim_z)
                .map(|i| hess[(i, i)].abs())
                .fold(1e-300, f64::max);
            let mut ridge = 0.0;
            let dir = loop {
                let mut h = hess.clone();
                if ridge > 0.0 {
                    for i in 0..dim_z {
                        h[(i, i)] += ridge;
                    }
                }
                match Cholesky::new(h) {
                    Some(ch) => break ch.solve(&(-&grad)),
                    None => {
                        ridge = if ridge == 0.0 {
                            1e-14 * diag_max
                        } else {
                            ridge * 100.0
                        };
                        if ridge > diag_max {
                            return Err("hessian factorization failed");
                        }
                    }
                }
            };

            let decrement = -grad.dot(&dir);
            if !decrement.is_finite() {
                return Err("non-finite newton decrement");
            }
            if decrement * 0.5 < opts.newton_tol {
                break;
            }

            // Damped step: stay interior, then require sufficient decrease.
            let f_at = |z_try: &DVector<f64>| -> Option<f64> {
                let xsq: f64 = (0..n).map(|i| z_try[i] * z_try[i]).sum();
                let slack = 1.0 - xsq / r_sq;
                if slack <= 0.0 {
                    return None;
                }
                let mut val = -kappa * z_try[t_idx] - slack.ln();
                for b in &blocks {
                    let s = b.evaluate(z_try);
                    let ch = Cholesky::new(crate::linalg::symmetrize(&s))?;
                    let mut logdet = 0.0;
                    for i in 0..b.dim {
                        let d = ch.l_dirty()[(i, i)];
                        if d <= 0.0 {
                            return None;
                        }
                        logdet += d.ln();
                    }
                    val -= 2.0 * logdet;
                }
                Some(val)
            };

            let f0 = f_at(&z).ok_or("current point not interior")?;
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let z_try = &z + &dir * step;
                if let Some(f_try) = f_at(&z_try) {
                    if f_try <= f0 - 0.25 * step * decrement {
                        z = z_try;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !accepted {
                // At the numerical limit for this barrier weight.
                break;
            }
            if stage_newton >= opts.max_newton_per_stage {
                break;
            }
        }

        if opts.verbose {
            eprintln!(
                "phase1: kappa = {:.3e}, margin = {:+.9e}, newton = {}",
                kappa, z[t_idx], total_newton
            );
        }

        if kappa >= kappa_final {
            break;
        }
        kappa = (kappa * opts.kappa_growth).min(kappa_final);
    }

    let x = DVector::from_fn(n, |i, _| z[i]);
    Ok(PassOutcome { margin: z[t_idx], x })
}
