//! Closed-loop simulation, empirical decay fitting, and the worst-case
//! quadratic-field eigenvalue oracle.
//!
//! Integration is fixed-step RK4 throughout: deterministic, order-checkable,
//! and accurate enough for the desk-scale tolerances used in the tests.

use std::io::Write as IoWrite;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::iqc_filter::SectorBounds;
use crate::linalg::spectral_abscissa;
use crate::plants::PlantModel;

/// A uniformly sampled state/output record.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub outputs: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Generic fixed-step RK4 driver; `deriv(t, x)` must be side-effect free.
pub fn rk4<F>(deriv: F, x0: DVector<f64>, dt: f64, t_final: f64) -> Result<(Vec<f64>, Vec<DVector<f64>>)>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    if !(dt > 0.0) || !(t_final >= 0.0) {
        return Err(Error::invalid("rk4 requires dt > 0 and t_final >= 0"));
    }
    let steps = (t_final / dt).round() as usize;
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0;
    for k in 0..=steps {
        let t = k as f64 * dt;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { t });
        }
        times.push(t);
        states.push(x.clone());
        if k == steps {
            break;
        }
        let k1 = deriv(t, &x);
        let k2 = deriv(t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)));
        let k3 = deriv(t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)));
        let k4 = deriv(t + dt, &(&x + &k3 * dt));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }
    Ok((times, states))
}

/// Vertex-weight schedule for polytopic plants. Weights must be convex
/// coefficients over the vertices at every time.
pub type Schedule<'a> = &'a dyn Fn(f64) -> Vec<f64>;

fn blended(vertices: &[&DMatrix<f64>], weights: &[f64]) -> DMatrix<f64> {
    let mut acc = vertices[0] * weights[0];
    for (v, w) in vertices.iter().zip(weights).skip(1) {
        acc += *v * *w;
    }
    acc
}

/// Simulates the gradient feedback loop `etadot = A(rho) eta + B(rho) grad f(C eta)`.
///
/// For LTI plants (or a frozen vertex) pass no schedule; for polytopic plants
/// the schedule returns per-vertex convex weights.
pub fn simulate_closed_loop(
    plant: &PlantModel,
    field: &FieldSpec,
    x0: &DVector<f64>,
    dt: f64,
    t_final: f64,
    schedule: Option<Schedule>,
) -> Result<Trajectory> {
    let vertices = plant.vertices();
    if field.d != plant.d {
        return Err(Error::dims("field dimension must match plant output width"));
    }
    if x0.len() != plant.nx() {
        return Err(Error::dims("initial state has wrong dimension"));
    }
    if vertices.len() > 1 && schedule.is_none() {
        return Err(Error::invalid(
            "polytopic plant requires a schedule (or freeze a vertex)",
        ));
    }

    let a_refs: Vec<&DMatrix<f64>> = vertices.iter().map(|v| &v.a).collect();
    let b_refs: Vec<&DMatrix<f64>> = vertices.iter().map(|v| &v.b).collect();
    let c = &vertices[0].c;

    let deriv = |t: f64, eta: &DVector<f64>| -> DVector<f64> {
        let y = c * eta;
        let u = field.gradient(&y);
        match schedule {
            None => &vertices[0].a * eta + &vertices[0].b * u,
            Some(sch) => {
                let w = sch(t);
                debug_assert_eq!(w.len(), vertices.len());
                blended(&a_refs, &w) * eta + blended(&b_refs, &w) * u
            }
        }
    };

    let (times, states) = rk4(deriv, x0.clone(), dt, t_final)?;
    let outputs = states.iter().map(|x| c * x).collect();
    Ok(Trajectory {
        times,
        states,
        outputs,
    })
}

/// Least-squares decay rate of `|y(t) - y_star|` over the envelope peaks,
/// after discarding the initial `skip` fraction of the horizon.
///
/// Requires a converging trajectory (terminal deviation below `1e-8` of the
/// initial one).
pub fn fit_decay_rate(traj: &Trajectory, y_star: &DVector<f64>, skip: f64) -> Result<f64> {
    if traj.len() < 10 {
        return Err(Error::invalid("trajectory too short to fit"));
    }
    let norms: Vec<f64> = traj.outputs.iter().map(|y| (y - y_star).norm()).collect();
    let initial = norms[0].max(1e-300);
    let terminal = *norms.last().unwrap();
    if terminal > 1e-8 * initial {
        return Err(Error::NonConvergent { terminal, initial });
    }

    let start = ((traj.len() as f64) * skip.clamp(0.0, 0.9)) as usize;
    let tail = &norms[start..];
    let times = &traj.times[start..];

    // Envelope peaks: local maxima of the deviation norm.
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for i in 1..tail.len().saturating_sub(1) {
        if tail[i] >= tail[i - 1] && tail[i] >= tail[i + 1] && tail[i] > 1e-300 {
            pts.push((times[i], tail[i].ln()));
        }
    }
    if pts.len() < 5 {
        // Monotone-ish decay: fit all samples instead.
        pts = times
            .iter()
            .zip(tail)
            .filter(|(_, &v)| v > 1e-300)
            .map(|(&t, &v)| (t, v.ln()))
            .collect();
    }
    if pts.len() < 2 {
        return Err(Error::invalid("not enough decay samples to fit"));
    }

    // Least-squares slope of log deviation vs time.
    let n = pts.len() as f64;
    let (mut st, mut sv, mut stt, mut stv) = (0.0, 0.0, 0.0, 0.0);
    for &(t, v) in &pts {
        st += t;
        sv += v;
        stt += t * t;
        stv += t * v;
    }
    let slope = (n * stv - st * sv) / (n * stt - st * st);
    Ok((-slope).max(0.0))
}

/// Worst-case decay rate over isotropic quadratic fields with curvature on a
/// `grid`-point sweep of `[m, L]` (endpoints included), minimized over the
/// plant's vertices.
///
/// Each sampled curvature `k` gives the linear closed loop `A + k B C`; the
/// returned value is the slowest `-spectral_abscissa` over the samples, an
/// upper bound on any certifiable rate. Anisotropic fields are not sampled,
/// which keeps the oracle valid (every sample is a sector member) if
/// conservative for coupled multi-axis plants. Unstable samples yield a
/// nonpositive value.
pub fn worst_case_quadratic_rate(
    plant: &PlantModel,
    sector: SectorBounds,
    grid: usize,
) -> Result<f64> {
    if grid < 2 {
        return Err(Error::invalid("curvature grid needs at least 2 points"));
    }
    let mut worst = f64::INFINITY;
    for v in plant.vertices() {
        for i in 0..grid {
            let k = sector.m + (sector.l - sector.m) * (i as f64) / ((grid - 1) as f64);
            let a_cl = &v.a + &v.b * k * &v.c;
            let rate = -spectral_abscissa(&a_cl)?;
            worst = worst.min(rate);
        }
    }
    Ok(worst)
}

/// Writes a trajectory as CSV: header `t,y1..yd[,x1..xn]`, 17 significant
/// digits per number.
pub fn write_trajectory_csv(
    traj: &Trajectory,
    with_states: bool,
    out: &mut dyn IoWrite,
) -> std::io::Result<()> {
    let d = traj.outputs.first().map(|y| y.len()).unwrap_or(0);
    let nx = traj.states.first().map(|x| x.len()).unwrap_or(0);
    write!(out, "t")?;
    for i in 1..=d {
        write!(out, ",y{i}")?;
    }
    if with_states {
        for i in 1..=nx {
            write!(out, ",x{i}")?;
        }
    }
    writeln!(out)?;
    for k in 0..traj.len() {
        write!(out, "{:.16e}", traj.times[k])?;
        for i in 0..d {
            write!(out, ",{:.16e}", traj.outputs[k][i])?;
        }
        if with_states {
            for i in 0..nx {
                write!(out, ",{:.16e}", traj.states[k][i])?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
