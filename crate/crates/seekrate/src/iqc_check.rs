//! Numerical verification of the integral inequalities behind the
//! certificates.
//!
//! Each checker evaluates one inequality along a sampled trajectory by
//! trapezoid quadrature and reports the signed value together with a scale
//! (the magnitude of the positive part) so tolerances stay meaningful across
//! signal sizes. Negative values within the quadrature budget are expected;
//! genuinely negative residuals falsify the corresponding inequality, and the
//! checkers never clamp.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::iqc_filter::{IqcFilter, SectorBounds};
use crate::sim::Trajectory;
use crate::zames_falb::ZfBasis;

/// Sector combination signals along a trajectory: `p = u - m y`,
/// `q = L y - u` in deviation coordinates.
#[derive(Debug, Clone)]
pub struct SignalPair {
    pub times: Vec<f64>,
    pub y_dev: Vec<DVector<f64>>,
    pub u_dev: Vec<DVector<f64>>,
    pub p: Vec<DVector<f64>>,
    pub q: Vec<DVector<f64>>,
    pub sector: SectorBounds,
}

impl SignalPair {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A signed quadrature value with the scale of its positive part.
#[derive(Debug, Clone, Copy)]
pub struct WeightedResidual {
    pub value: f64,
    pub scale: f64,
    pub horizon: f64,
}

impl WeightedResidual {
    /// Residual normalized by its scale.
    pub fn relative(&self) -> f64 {
        self.value / self.scale.max(1e-300)
    }
}

/// Builds the sector signals from a trajectory; `y_star` is the field
/// minimizer (see `FieldSpec::minimizer`).
pub fn make_signals(
    traj: &Trajectory,
    field: &FieldSpec,
    sector: SectorBounds,
    y_star: &DVector<f64>,
) -> Result<SignalPair> {
    if traj.len() < 2 {
        return Err(Error::invalid("trajectory too short"));
    }
    let mut y_dev = Vec::with_capacity(traj.len());
    let mut u_dev = Vec::with_capacity(traj.len());
    let mut p = Vec::with_capacity(traj.len());
    let mut q = Vec::with_capacity(traj.len());
    for y in &traj.outputs {
        let yd = y - y_star;
        let ud = field.gradient(y); // grad f(y_star) = 0, so u itself is the deviation
        p.push(&ud - &yd * sector.m);
        q.push(&yd * sector.l - &ud);
        y_dev.push(yd);
        u_dev.push(ud);
    }
    Ok(SignalPair {
        times: traj.times.clone(),
        y_dev,
        u_dev,
        p,
        q,
        sector,
    })
}

fn trapezoid_weight(k: usize, last: usize) -> f64 {
    if k == 0 || k == last {
        0.5
    } else {
        1.0
    }
}

/// Shift-inequality residual:
/// `int_0^T e^{2at} p(t)' (q(t) - beta(tau) q_T(t - tau)) dt` with
/// `beta(tau) = min(1, e^{-2 a tau})` and `q_T` the zero extension outside
/// `[0, T]`. `tau` is snapped to the sample grid.
pub fn shift_inequality_residual(
    sig: &SignalPair,
    alpha: f64,
    tau: f64,
    t_horizon: f64,
) -> WeightedResidual {
    let dt = sig.dt();
    let last = ((t_horizon / dt).round() as usize).min(sig.len() - 1);
    let shift = (tau / dt).round() as i64;
    let beta = 1.0f64.min((-2.0 * alpha * (shift as f64) * dt).exp());

    // The zero extension makes the shifted integrand jump where the shifted
    // index enters (tau > 0) or leaves (tau < 0) the horizon; that sample
    // belongs to only one of its two trapezoid cells.
    let jump_at = if shift > 0 {
        shift
    } else {
        last as i64 + shift
    };

    let mut value = 0.0;
    let mut scale = 0.0;
    for k in 0..=last {
        let w = trapezoid_weight(k, last) * dt;
        let e = (2.0 * alpha * sig.times[k]).exp();
        let pq = sig.p[k].dot(&sig.q[k]);
        let kk = k as i64 - shift;
        let mut shifted = if kk >= 0 && kk <= last as i64 {
            sig.p[k].dot(&sig.q[kk as usize])
        } else {
            0.0
        };
        if shift != 0 && k as i64 == jump_at && k != 0 && k != last {
            shifted *= 0.5;
        }
        value += w * e * (pq - beta * shifted);
        scale += w * e * (pq.abs() + beta * shifted.abs());
    }
    WeightedResidual {
        value,
        scale,
        horizon: last as f64 * dt,
    }
}

/// RK4 integration of `xdot = A x + B w(t)` with the sampled input linearly
/// interpolated at half steps; returns the state at every sample.
fn filter_states(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    inputs: &[DVector<f64>],
    dt: f64,
) -> Vec<DVector<f64>> {
    let n = a.nrows();
    let mut x = DVector::zeros(n);
    let mut out = Vec::with_capacity(inputs.len());
    out.push(x.clone());
    for k in 0..inputs.len() - 1 {
        let w0 = &inputs[k];
        let w1 = &inputs[k + 1];
        let wm = (w0 + w1) * 0.5;
        let f = |xx: &DVector<f64>, w: &DVector<f64>| a * xx + b * w;
        let k1 = f(&x, w0);
        let k2 = f(&(&x + &k1 * (0.5 * dt)), &wm);
        let k3 = f(&(&x + &k2 * (0.5 * dt)), &wm);
        let k4 = f(&(&x + &k3 * dt), w1);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        out.push(x.clone());
    }
    out
}

/// Filtered-kernel residual:
/// `int_0^T e^{2at} (H p'q - p'w1 - q'w2) dt` with `w1` the causal filter of
/// `q` under the kernel's causal side (weights `p3`) and `w2` the filter of
/// `p` under the anti-causal side (weights `p1`), both realized through the
/// shifted basis generator.
pub fn kernel_inequality_residual(
    sig: &SignalPair,
    basis: &ZfBasis,
    p1: &nalgebra::RowDVector<f64>,
    p3: &nalgebra::RowDVector<f64>,
    alpha: f64,
    t_horizon: f64,
) -> WeightedResidual {
    let dt = sig.dt();
    let last = ((t_horizon / dt).round() as usize).min(sig.len() - 1);
    let nu = basis.order;
    let d = sig.p[0].len();
    let a_shift = &basis.a_nu - DMatrix::<f64>::identity(nu, nu) * (2.0 * alpha);
    let a_fk = crate::linalg::kron_lift(&a_shift, d).expect("d >= 1");
    let b_col = DMatrix::from_column_slice(nu, 1, basis.b_nu.as_slice());
    let b_fk = crate::linalg::kron_lift(&b_col, d).expect("d >= 1");

    let xq = filter_states(&a_fk, &b_fk, &sig.q, dt);
    let xp = filter_states(&a_fk, &b_fk, &sig.p, dt);

    let h_cap_weight = |states: &DVector<f64>, weights: &nalgebra::RowDVector<f64>| {
        // weights (1 x nu) against stacked (nu d) states: sum_j w_j x_j.
        let mut acc = DVector::zeros(d);
        for j in 0..nu {
            acc += states.rows(j * d, d) * weights[j];
        }
        acc
    };

    // The kernel weight H is taken as 1 here: the inequality is homogeneous
    // in (H, P1, P3), so callers pass weights normalized by H.
    let mut value = 0.0;
    let mut scale = 0.0;
    for k in 0..=last {
        let w = trapezoid_weight(k, last) * dt;
        let e = (2.0 * alpha * sig.times[k]).exp();
        let pq = sig.p[k].dot(&sig.q[k]);
        let w1 = h_cap_weight(&xq[k], p3);
        let w2 = h_cap_weight(&xp[k], p1);
        let t1 = sig.p[k].dot(&w1);
        let t2 = sig.q[k].dot(&w2);
        value += w * e * (pq - t1 - t2);
        scale += w * e * (pq.abs() + t1.abs() + t2.abs());
    }
    WeightedResidual {
        value,
        scale,
        horizon: last as f64 * dt,
    }
}

/// Channel-form residual: `int_0^T e^{2at} z'(P ⊗ I_d) z dt` with `z`
/// produced by driving the filter with `(y_dev, u_dev)`.
pub fn channel_form_residual(
    sig: &SignalPair,
    filter: &IqcFilter,
    p_matrix: &DMatrix<f64>,
    alpha: f64,
    t_horizon: f64,
) -> WeightedResidual {
    let dt = sig.dt();
    let last = ((t_horizon / dt).round() as usize).min(sig.len() - 1);
    let d = filter.d;

    let inputs: Vec<DVector<f64>> = sig
        .y_dev
        .iter()
        .zip(&sig.u_dev)
        .map(|(y, u)| {
            let mut w = DVector::zeros(2 * d);
            w.rows_mut(0, d).copy_from(y);
            w.rows_mut(d, d).copy_from(u);
            w
        })
        .collect();
    let xs = filter_states(&filter.ss.a, &filter.ss.b, &inputs, dt);

    let mut value = 0.0;
    let mut scale = 0.0;
    for k in 0..=last {
        let w = trapezoid_weight(k, last) * dt;
        let e = (2.0 * alpha * sig.times[k]).exp();
        let z = &filter.ss.c * &xs[k] + &filter.ss.d * &inputs[k];
        let quad = (z.transpose() * p_matrix * &z)[(0, 0)];
        value += w * e * quad;
        // Positive-part magnitude via the absolute quadratic form.
        let abs_quad = {
            let mut acc = 0.0;
            for i in 0..z.len() {
                for j in 0..z.len() {
                    acc += (z[i] * p_matrix[(i, j)] * z[j]).abs();
                }
            }
            acc
        };
        scale += w * e * abs_quad;
    }
    WeightedResidual {
        value,
        scale,
        horizon: last as f64 * dt,
    }
}

/// Storage-function chain along a closed-loop trajectory:
/// `residual = V(xi(0)) - e^{2aT} V(xi(T)) - int_0^T e^{2at} z'(P ⊗ I_d) z dt`
/// with `xi = [filter states; plant deviation]` (the interconnection state
/// ordering) and `V(xi) = xi' X xi` from a certification witness.
#[allow(clippy::too_many_arguments)]
pub fn dissipation_residual(
    sig: &SignalPair,
    traj: &Trajectory,
    eta_star: &DVector<f64>,
    filter: &IqcFilter,
    x_witness: &DMatrix<f64>,
    p_matrix: &DMatrix<f64>,
    alpha: f64,
    t_horizon: f64,
) -> WeightedResidual {
    let dt = sig.dt();
    let last = ((t_horizon / dt).round() as usize).min(sig.len() - 1);
    let d = filter.d;
    let n_filter = filter.ss.nx();

    let inputs: Vec<DVector<f64>> = sig
        .y_dev
        .iter()
        .zip(&sig.u_dev)
        .map(|(y, u)| {
            let mut w = DVector::zeros(2 * d);
            w.rows_mut(0, d).copy_from(y);
            w.rows_mut(d, d).copy_from(u);
            w
        })
        .collect();
    let xs = filter_states(&filter.ss.a, &filter.ss.b, &inputs, dt);

    let xi_at = |k: usize| -> DVector<f64> {
        let eta_dev = &traj.states[k] - eta_star;
        let mut xi = DVector::zeros(n_filter + eta_dev.len());
        xi.rows_mut(0, n_filter).copy_from(&xs[k]);
        xi.rows_mut(n_filter, eta_dev.len()).copy_from(&eta_dev);
        xi
    };
    let v_at = |k: usize| -> f64 {
        let xi = xi_at(k);
        (xi.transpose() * x_witness * xi)[(0, 0)]
    };

    let mut integral = 0.0;
    for k in 0..=last {
        let w = trapezoid_weight(k, last) * dt;
        let e = (2.0 * alpha * sig.times[k]).exp();
        let z = &filter.ss.c * &xs[k] + &filter.ss.d * &inputs[k];
        integral += w * e * (z.transpose() * p_matrix * &z)[(0, 0)];
    }

    let t_end = last as f64 * dt;
    let v0 = v_at(0);
    let v_end = v_at(last) * (2.0 * alpha * t_end).exp();
    WeightedResidual {
        value: v0 - v_end - integral,
        scale: v0.abs().max(1e-300),
        horizon: t_end,
    }
}

/// Proof-internal diagnostic for the quadratic case: the nonnegative
/// potential `r(y) = (L - m) g(y) - |grad g(y)|^2 / 2` with
/// `g(y) = f(y + y_star) - f(y_star) - (m/2)|y|^2`. Used by tests to confirm
/// the pointwise bound underlying the shift inequality.
#[cfg(test)]
fn r_potential_quadratic(field: &FieldSpec, y_star: &DVector<f64>, y_dev: &DVector<f64>) -> f64 {
    let (m, l) = (field.sector.m, field.sector.l);
    let y = y_dev + y_star;
    let g = field.value(&y) - field.value(y_star) - 0.5 * m * y_dev.norm_squared();
    let grad_g = field.gradient(&y) - y_dev * m;
    (l - m) * g - 0.5 * grad_g.norm_squared()
}
