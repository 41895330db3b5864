//! Multi-agent flocking simulation and the center-of-mass reduction.
//!
//! `N` identical vehicles exchange spring forces over a graph (Laplacian
//! coupling on output velocities, pairwise spring potential on positions) and
//! each adds the field gradient at its own position. Because the pairwise
//! forces balance and the Laplacian rows sum to zero, for quadratic fields
//! the mean state follows the single-agent loop exactly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::{FieldKind, FieldSpec};
use crate::linalg::kron_lift;
use crate::sim::{rk4, Trajectory};
use crate::ss::StateSpace;

/// Flock description: communication Laplacian plus spring parameters.
#[derive(Debug, Clone)]
pub struct FlockSpec {
    pub n_agents: usize,
    pub laplacian: DMatrix<f64>,
    pub spring_rest: f64,
    pub spring_k: f64,
}

impl FlockSpec {
    pub fn new(laplacian: DMatrix<f64>, spring_rest: f64, spring_k: f64) -> Result<Self> {
        let n = laplacian.nrows();
        if laplacian.ncols() != n || n == 0 {
            return Err(Error::dims("Laplacian must be square and nonempty"));
        }
        if !crate::linalg::is_symmetric(&laplacian, 1e-10) {
            return Err(Error::invalid("Laplacian must be symmetric"));
        }
        let scale = laplacian.amax().max(1e-300);
        for i in 0..n {
            let row_sum: f64 = (0..n).map(|j| laplacian[(i, j)]).sum();
            if row_sum.abs() > 1e-12 * scale {
                return Err(Error::invalid(format!(
                    "Laplacian row {i} sums to {row_sum:e}, expected 0"
                )));
            }
        }
        Ok(FlockSpec {
            n_agents: n,
            laplacian,
            spring_rest,
            spring_k,
        })
    }

    /// Undirected edges `(i, j)`, `i < j`, read off the Laplacian pattern.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n_agents;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if self.laplacian[(i, j)] != 0.0 {
                    edges.push((i, j));
                }
            }
        }
        edges
    }
}

/// Ring-graph Laplacian on `n` nodes.
pub fn ring_laplacian(n: usize) -> DMatrix<f64> {
    assert!(n >= 2, "ring needs at least 2 nodes");
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        l[(i, i)] = 2.0;
        l[(i, prev)] -= 1.0;
        l[(i, next)] -= 1.0;
    }
    if n == 2 {
        // Degenerate ring: a single edge of weight 2 was double counted.
        l = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
    }
    l
}

/// Pairwise spring gradient of the interaction potential
/// `sum_edges (k/2)(|y_i - y_j| - r0)^2`, stacked per agent. Action equals
/// reaction, so the per-agent forces sum to zero.
pub fn spring_gradient(spec: &FlockSpec, positions: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let d = positions[0].len();
    let mut grad = vec![DVector::zeros(d); spec.n_agents];
    for (i, j) in spec.edges() {
        let diff = &positions[i] - &positions[j];
        let dist = diff.norm().max(1e-9);
        let force = &diff * (spec.spring_k * (dist - spec.spring_rest) / dist);
        grad[i] += &force;
        grad[j] -= &force;
    }
    grad
}

/// Simulates the flock: each agent runs the vehicle dynamics with input
/// `grad f(y_i) + gradV_i(y) + sum_j L_ij ydot_j`.
///
/// The interaction terms enter through the same input channel as the field
/// gradient, so whatever sign convention makes the single-agent loop descend
/// `f` also makes the flock descend the total potential `f + V` with
/// velocity-consensus damping. Their per-agent sum vanishes (action equals
/// reaction; Laplacian rows sum to zero), which is all the center-of-mass
/// reduction needs.
///
/// Output derivatives come from the stacked state algebraically; when the
/// vehicle has direct feedthrough from input to output derivative the
/// resulting linear coupling is solved exactly (no numerical
/// differentiation). Requires a quadratic field, matching the hypothesis of
/// the center-of-mass reduction.
pub fn flocking_simulate(
    spec: &FlockSpec,
    vehicle: &StateSpace,
    field: &FieldSpec,
    x0s: &[DVector<f64>],
    dt: f64,
    t_final: f64,
) -> Result<Vec<Trajectory>> {
    if !matches!(field.kind, FieldKind::Quadratic { .. }) {
        return Err(Error::invalid(
            "flocking simulation requires a quadratic field",
        ));
    }
    let n = spec.n_agents;
    if x0s.len() != n {
        return Err(Error::dims(format!(
            "need {n} initial states, got {}",
            x0s.len()
        )));
    }
    let d = vehicle.ny();
    if vehicle.nu() != d || field.d != d {
        return Err(Error::dims("vehicle must be square and match the field"));
    }
    let nx = vehicle.nx();
    for (i, x0) in x0s.iter().enumerate() {
        if x0.len() != nx {
            return Err(Error::dims(format!("agent {i} initial state has wrong size")));
        }
    }

    let ca = &vehicle.c * &vehicle.a;
    let cb = &vehicle.c * &vehicle.b;
    // ydot = CA eta + CB u and u depends on ydot through the Laplacian:
    // (I - (L ⊗ I_d)(I_N ⊗ CB)) u = forcing. Constant, factor once.
    let l_kron = kron_lift(&spec.laplacian, d)?;
    let coupling = DMatrix::identity(n * d, n * d) - &l_kron * kron_lift_block(&cb, n);
    let coupling_lu = coupling.lu();

    let stacked_x0 = stack(x0s);
    let deriv = |_t: f64, xhat: &DVector<f64>| -> DVector<f64> {
        let mut positions = Vec::with_capacity(n);
        let mut ydot_state = DVector::zeros(n * d);
        for i in 0..n {
            let eta = xhat.rows(i * nx, nx);
            positions.push(&vehicle.c * eta);
            ydot_state
                .rows_mut(i * d, d)
                .copy_from(&(&ca * eta));
        }
        let springs = spring_gradient(spec, &positions);
        let mut forcing = DVector::zeros(n * d);
        for i in 0..n {
            let g = field.gradient(&positions[i]);
            forcing.rows_mut(i * d, d).copy_from(&(g + &springs[i]));
        }
        forcing += &l_kron * &ydot_state;
        let u = coupling_lu
            .solve(&forcing)
            .expect("output-derivative coupling is nonsingular");
        let mut dx = DVector::zeros(n * nx);
        for i in 0..n {
            let eta = xhat.rows(i * nx, nx);
            let ui = u.rows(i * d, d);
            dx.rows_mut(i * nx, nx)
                .copy_from(&(&vehicle.a * eta + &vehicle.b * ui));
        }
        dx
    };

    let (times, states) = rk4(deriv, stacked_x0, dt, t_final)?;

    let mut per_agent = Vec::with_capacity(n);
    for i in 0..n {
        let agent_states: Vec<DVector<f64>> =
            states.iter().map(|x| x.rows(i * nx, nx).clone_owned()).collect();
        let outputs = agent_states.iter().map(|x| &vehicle.c * x).collect();
        per_agent.push(Trajectory {
            times: times.clone(),
            states: agent_states,
            outputs,
        });
    }
    Ok(per_agent)
}

fn kron_lift_block(m: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n).kronecker(m)
}

fn stack(xs: &[DVector<f64>]) -> DVector<f64> {
    let per = xs[0].len();
    let mut out = DVector::zeros(per * xs.len());
    for (i, x) in xs.iter().enumerate() {
        out.rows_mut(i * per, per).copy_from(x);
    }
    out
}

/// Arithmetic mean across agents at each sample.
pub fn com_reduce(trajectories: &[Trajectory]) -> Result<Trajectory> {
    let n = trajectories.len();
    if n == 0 {
        return Err(Error::invalid("no trajectories to average"));
    }
    let len = trajectories[0].len();
    for t in trajectories {
        if t.len() != len {
            return Err(Error::dims("trajectories must have equal length"));
        }
    }
    let scale = 1.0 / n as f64;
    let mut states = Vec::with_capacity(len);
    let mut outputs = Vec::with_capacity(len);
    for k in 0..len {
        let mut s = trajectories[0].states[k].clone();
        let mut y = trajectories[0].outputs[k].clone();
        for t in &trajectories[1..] {
            s += &t.states[k];
            y += &t.outputs[k];
        }
        states.push(s * scale);
        outputs.push(y * scale);
    }
    Ok(Trajectory {
        times: trajectories[0].times.clone(),
        states,
        outputs,
    })
}
