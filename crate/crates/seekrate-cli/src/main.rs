//! Command-line front end: certification runs, figure-data sweeps,
//! simulations, the quadratic-field oracle, and IQC validation.
//!
//! Exit codes for `certify`: 0 when a rate is certified, 2 when not even
//! stability (`alpha = 0`) is certifiable, 1 on tool errors. All outputs are
//! deterministic given the flags and seed; numbers print with 17 significant
//! digits. Set `SEEKRATE_VERBOSE=1` for solver progress on stderr.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use seekrate::certify::{certify_rate, CertifyOptions, RateOutcome};
use seekrate::field::FieldSpec;
use seekrate::flock::{com_reduce, flocking_simulate, ring_laplacian, FlockSpec};
use seekrate::iqc_check::{
    dissipation_residual, shift_inequality_residual, make_signals, kernel_inequality_residual, channel_form_residual,
};
use seekrate::iqc_filter::{build_filter, SectorBounds};
use seekrate::plants::{
    load_plant, lpv_vehicle_example, nonmin_phase_example, quadrotor_surrogate,
    two_mode_quadrotor, PlantModel,
};
use seekrate::sim::{simulate_closed_loop, worst_case_quadratic_rate, write_trajectory_csv};
use seekrate::ss::ReferenceGains;
use seekrate::zames_falb::{build_basis, MultiplierClass, MultiplierConfig, MultiplierVars};

#[derive(Parser)]
#[command(name = "seekrate", version, about = "Certified convergence rates for source-seeking loops")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Certify the largest exponential rate for one plant and sector.
    Certify(CertifyArgs),
    /// Sweep the sector bound L (or the reference gain ratio) and emit CSV.
    Sweep(SweepArgs),
    /// Simulate the closed loop and emit a trajectory CSV.
    Simulate(SimulateArgs),
    /// Simulate a flock and report the center-of-mass deviation.
    Flocking(FlockingArgs),
    /// Worst-case decay rate over quadratic fields in the sector.
    Oracle(OracleArgs),
    /// Numerically validate the integral inequalities on random trajectories.
    ValidateIqc(ValidateArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ClassArg {
    Cc,
    Causal,
    Anticausal,
    Zf,
}

impl From<ClassArg> for MultiplierClass {
    fn from(c: ClassArg) -> Self {
        match c {
            ClassArg::Cc => MultiplierClass::CircleCriterion,
            ClassArg::Causal => MultiplierClass::CausalZf,
            ClassArg::Anticausal => MultiplierClass::AntiCausalZf,
            ClassArg::Zf => MultiplierClass::FullZf,
        }
    }
}

#[derive(Args)]
struct PlantArgs {
    /// Built-in plant: nonmin-phase | lpv-vehicle | quadrotor | two-mode-quadrotor.
    #[arg(long, conflicts_with = "plant")]
    builtin: Option<String>,
    /// Plant file (JSON).
    #[arg(long)]
    plant: Option<PathBuf>,
    /// Reference gain k_p (quadrotor surrogate).
    #[arg(long, default_value_t = 1.0)]
    kp: f64,
    /// Reference gain k_d (quadrotor surrogate).
    #[arg(long, default_value_t = 9.0)]
    kd: f64,
    /// Vehicle mass (quadrotor surrogate).
    #[arg(long, default_value_t = 1.0)]
    mass: f64,
    /// Inner tracking-loop bandwidth (quadrotor surrogate).
    #[arg(long, default_value_t = 4.0)]
    bandwidth: f64,
}

impl PlantArgs {
    fn build(&self) -> Result<PlantModel> {
        if let Some(path) = &self.plant {
            return load_plant(path).with_context(|| format!("loading {}", path.display()));
        }
        let name = self
            .builtin
            .as_deref()
            .ok_or_else(|| anyhow!("either --builtin or --plant is required"))?;
        let gains = ReferenceGains::new(self.kp, self.kd)?;
        Ok(match name {
            "nonmin-phase" => nonmin_phase_example(),
            "lpv-vehicle" => lpv_vehicle_example(),
            "quadrotor" => quadrotor_surrogate(gains, self.mass, self.bandwidth)?,
            "two-mode-quadrotor" => two_mode_quadrotor((0.2, 2.0), (gains, gains))?,
            other => bail!("unknown builtin plant `{other}`"),
        })
    }
}

#[derive(Args)]
struct MultiplierArgs {
    /// Multiplier class.
    #[arg(long, value_enum, default_value = "zf")]
    class: ClassArg,
    /// Multiplier order (basis depth).
    #[arg(long, default_value_t = 1)]
    order: usize,
    /// Basis pole (strictly negative).
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    lambda: f64,
}

impl MultiplierArgs {
    fn config(&self, class: MultiplierClass) -> Result<MultiplierConfig> {
        Ok(MultiplierConfig::new(class, self.order, self.lambda)?)
    }
}

#[derive(Args)]
struct SectorArgs {
    /// Strong-convexity lower bound m.
    #[arg(long, default_value_t = 1.0)]
    m: f64,
    /// Gradient Lipschitz upper bound L.
    #[arg(long = "L", default_value_t = 1.0)]
    l: f64,
}

impl SectorArgs {
    fn sector(&self) -> Result<SectorBounds> {
        Ok(SectorBounds::new(self.m, self.l)?)
    }
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    sector: SectorArgs,
    #[command(flatten)]
    multiplier: MultiplierArgs,
    /// Bisection bracket top (default: derived from the plant's stable part).
    #[arg(long)]
    alpha_max: Option<f64>,
    /// Bisection grid resolution.
    #[arg(long, default_value_t = seekrate::certify::DEFAULT_GRID_TOL)]
    grid_tol: f64,
    /// Output path (default stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    sector: SectorArgs,
    #[command(flatten)]
    multiplier: MultiplierArgs,
    /// Sweep variable: L | gain-ratio.
    #[arg(long, default_value = "L")]
    sweep: String,
    #[arg(long)]
    from: f64,
    #[arg(long)]
    to: f64,
    #[arg(long)]
    step: f64,
    /// Curvature grid for the oracle column.
    #[arg(long, default_value_t = 41)]
    oracle_grid: usize,
    /// Worker threads (default: rayon's choice).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long, default_value_t = seekrate::certify::DEFAULT_GRID_TOL)]
    grid_tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    sector: SectorArgs,
    /// Field kind: quadratic | smooth.
    #[arg(long, default_value = "quadratic")]
    field: String,
    /// Curvature of the quadratic field (defaults to L).
    #[arg(long)]
    curvature: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 60.0)]
    t_final: f64,
    /// Seed for the random initial state.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Include plant states in the CSV.
    #[arg(long)]
    states: bool,
    /// Constant scheduling weight on the last vertex (LPV plants), in [0, 1].
    #[arg(long)]
    rho_weight: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FlockingArgs {
    /// Number of agents.
    #[arg(long, default_value_t = 5)]
    agents: usize,
    /// Graph topology (currently: ring).
    #[arg(long, default_value = "ring")]
    graph: String,
    /// Spring constant.
    #[arg(long, default_value_t = 1.0)]
    spring_k: f64,
    /// Spring rest length.
    #[arg(long, default_value_t = 1.0)]
    spring_rest: f64,
    /// Field curvature.
    #[arg(long, default_value_t = 1.0)]
    curvature: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    #[arg(long, default_value_t = 60.0)]
    t_final: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Write the center-of-mass trajectory CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    sector: SectorArgs,
    /// Curvature grid points.
    #[arg(long, default_value_t = 41)]
    grid: usize,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    plant: PlantArgs,
    #[command(flatten)]
    sector: SectorArgs,
    /// Number of random (field, initial state) samples.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Horizon per trajectory.
    #[arg(long, default_value_t = 20.0)]
    t_final: f64,
    /// Rate at which the inequalities are weighted (default: half the
    /// certified circle-criterion rate, or 0.05 when not certifiable).
    #[arg(long)]
    alpha: Option<f64>,
}

fn write_out(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Serialize)]
struct CertifyReport {
    alpha_star: Option<f64>,
    grid_tol: f64,
    multiplier: MultiplierReport,
    sector: SectorReport,
    bisection_log: Vec<(f64, String)>,
    witness_summary: Option<WitnessSummary>,
}

#[derive(Serialize)]
struct MultiplierReport {
    class: String,
    order: usize,
    lambda: f64,
}

#[derive(Serialize)]
struct SectorReport {
    m: f64,
    l: f64,
}

#[derive(Serialize)]
struct WitnessSummary {
    h_cap: f64,
    p1: Vec<f64>,
    p3: Vec<f64>,
    storage_min_eigenvalue: f64,
    phase1_margin: f64,
}

fn cmd_certify(args: &CertifyArgs) -> Result<i32> {
    let plant = args.plant.build()?;
    let sector = args.sector.sector()?;
    let config = args.multiplier.config(args.multiplier.class.into())?;
    let opts = CertifyOptions {
        alpha_max: args.alpha_max,
        grid_tol: args.grid_tol,
        ..CertifyOptions::default()
    };
    let est = certify_rate(&plant, sector, &config, &opts)?;

    let witness_summary = est.multiplier_vars(&config).and_then(|vars| {
        let storage = est.storage_matrix()?;
        let min_eig = storage.symmetric_eigenvalues().min();
        Some(WitnessSummary {
            h_cap: vars.h_cap,
            p1: vars.p1.iter().copied().collect(),
            p3: vars.p3.iter().copied().collect(),
            storage_min_eigenvalue: min_eig,
            phase1_margin: est.witness.as_ref().map(|w| w.phase1_margin).unwrap_or(f64::NAN),
        })
    });
    let report = CertifyReport {
        alpha_star: est.alpha_star(),
        grid_tol: est.grid_tol,
        multiplier: MultiplierReport {
            class: config.class.to_string(),
            order: config.order,
            lambda: config.lambda,
        },
        sector: SectorReport {
            m: sector.m,
            l: sector.l,
        },
        bisection_log: est.log.iter().map(|(a, s)| (*a, s.to_string())).collect(),
        witness_summary,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_out(&args.out, &text)?;
    Ok(match est.outcome {
        RateOutcome::Certified(_) => 0,
        RateOutcome::InfeasibleAtZero => 2,
    })
}

fn fmt_alpha(v: Option<f64>) -> String {
    // Infeasible runs encode as -1 in sweep tables.
    match v {
        Some(a) => format!("{a:.16e}"),
        None => "-1".into(),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<i32> {
    if args.step <= 0.0 || args.to < args.from {
        bail!("sweep range must satisfy from <= to with positive step");
    }
    let n_points = ((args.to - args.from) / args.step).round() as usize + 1;
    let values: Vec<f64> = (0..n_points).map(|i| args.from + i as f64 * args.step).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()?;

    let classes = [
        MultiplierClass::CircleCriterion,
        MultiplierClass::CausalZf,
        MultiplierClass::AntiCausalZf,
        MultiplierClass::FullZf,
    ];

    struct Row {
        value: f64,
        rates: Vec<Option<f64>>,
        oracle: f64,
        failed: bool,
    }

    let run_point = |value: f64| -> Row {
        let build = |l: f64| -> Result<(PlantModel, SectorBounds)> {
            match args.sweep.as_str() {
                "L" => Ok((args.plant.build()?, SectorBounds::new(args.sector.m, l)?)),
                "gain-ratio" => {
                    let gains = ReferenceGains::new(args.plant.kp, value * args.plant.kp)
                        .map_err(anyhow::Error::from)?;
                    let plant = match args.plant.builtin.as_deref() {
                        Some("two-mode-quadrotor") => two_mode_quadrotor((0.2, 2.0), (gains, gains))?,
                        _ => quadrotor_surrogate(gains, args.plant.mass, args.plant.bandwidth)?,
                    };
                    Ok((plant, args.sector.sector()?))
                }
                other => bail!("unknown sweep variable `{other}`"),
            }
        };
        let built = match args.sweep.as_str() {
            "L" => build(value),
            _ => build(args.sector.l),
        };
        let (plant, sector) = match built {
            Ok(ps) => ps,
            Err(_) => {
                return Row {
                    value,
                    rates: vec![None; classes.len()],
                    oracle: f64::NAN,
                    failed: true,
                }
            }
        };
        let opts = CertifyOptions {
            alpha_max: args.alpha_max,
            grid_tol: args.grid_tol,
            ..CertifyOptions::default()
        };
        let mut failed = false;
        let rates: Vec<Option<f64>> = classes
            .iter()
            .map(|class| {
                let config = MultiplierConfig::new(*class, args.multiplier.order, args.multiplier.lambda)
                    .expect("validated flags");
                match certify_rate(&plant, sector, &config, &opts) {
                    Ok(est) => est.alpha_star(),
                    Err(_) => {
                        failed = true;
                        None
                    }
                }
            })
            .collect();
        let oracle = worst_case_quadratic_rate(&plant, sector, args.oracle_grid).unwrap_or(f64::NAN);
        Row {
            value,
            rates,
            oracle,
            failed,
        }
    };

    let rows: Vec<Row> = pool.install(|| {
        use rayon::prelude::*;
        values.par_iter().map(|&v| run_point(v)).collect()
    });

    let mut text = String::from("sweep_value,alpha_cc,alpha_causal,alpha_anticausal,alpha_zf,alpha_oracle\n");
    for row in &rows {
        text.push_str(&format!(
            "{:.16e},{},{},{},{},{:.16e}\n",
            row.value,
            fmt_alpha(row.rates[0]),
            fmt_alpha(row.rates[1]),
            fmt_alpha(row.rates[2]),
            fmt_alpha(row.rates[3]),
            row.oracle,
        ));
    }
    write_out(&args.out, &text)?;
    let all_failed = rows.iter().all(|r| r.failed);
    Ok(if all_failed { 1 } else { 0 })
}

fn random_unit(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let plant = args.plant.build()?;
    let sector = args.sector.sector()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let d = plant.d;
    let center = random_unit(&mut rng, d, 2.0);
    let field = match args.field.as_str() {
        "quadratic" => {
            let k = args.curvature.unwrap_or(sector.l).clamp(sector.m, sector.l);
            FieldSpec::isotropic_quadratic(k, &center, sector)?
        }
        "smooth" => FieldSpec::scaled_smooth(center, sector),
        other => bail!("unknown field kind `{other}`"),
    };
    let x0 = random_unit(&mut rng, plant.nx(), 3.0);
    let schedule_fn;
    let schedule: Option<seekrate::sim::Schedule> = if plant.is_lpv() {
        let w = args.rho_weight.unwrap_or(0.0).clamp(0.0, 1.0);
        let n_v = plant.vertices().len();
        schedule_fn = move |_t: f64| {
            let mut weights = vec![0.0; n_v];
            weights[0] = 1.0 - w;
            weights[n_v - 1] += w;
            weights
        };
        Some(&schedule_fn)
    } else {
        None
    };
    let traj = simulate_closed_loop(&plant, &field, &x0, args.dt, args.t_final, schedule)?;
    let mut buf = Vec::new();
    write_trajectory_csv(&traj, args.states, &mut buf)?;
    write_out(&args.out, &String::from_utf8(buf)?)?;
    Ok(0)
}

#[derive(Serialize)]
struct FlockReport {
    agents: usize,
    graph: String,
    max_com_deviation: f64,
    final_com_distance_to_minimizer: f64,
}

fn cmd_flocking(args: &FlockingArgs) -> Result<i32> {
    if args.graph != "ring" {
        bail!("unknown graph `{}`", args.graph);
    }
    let spec = FlockSpec::new(ring_laplacian(args.agents), args.spring_rest, args.spring_k)?;
    // 2-D field, generic vehicle.
    let vehicle = lpv_vehicle_example().vertices()[0].lift_axes(2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let minimizer = random_unit(&mut rng, 2, 3.0);
    let sector = SectorBounds::new(args.curvature, args.curvature)?;
    let field = FieldSpec::isotropic_quadratic(args.curvature, &minimizer, sector)?;
    let x0s: Vec<DVector<f64>> = (0..args.agents)
        .map(|_| random_unit(&mut rng, vehicle.nx(), 4.0))
        .collect();
    let trajs = flocking_simulate(&spec, &vehicle, &field, &x0s, args.dt, args.t_final)?;
    let com = com_reduce(&trajs)?;
    let single = simulate_closed_loop(
        &PlantModel::lti("vehicle", vehicle.clone())?,
        &field,
        &com.states[0],
        args.dt,
        args.t_final,
        None,
    )?;
    let max_dev = com
        .outputs
        .iter()
        .zip(&single.outputs)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    let report = FlockReport {
        agents: args.agents,
        graph: args.graph.clone(),
        max_com_deviation: max_dev,
        final_com_distance_to_minimizer: (com.outputs.last().unwrap() - &minimizer).norm(),
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    print!("{text}");
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        write_trajectory_csv(&com, false, &mut buf)?;
        std::fs::write(path, buf)?;
    }
    Ok(0)
}

fn cmd_oracle(args: &OracleArgs) -> Result<i32> {
    let plant = args.plant.build()?;
    let sector = args.sector.sector()?;
    let rate = worst_case_quadratic_rate(&plant, sector, args.grid)?;
    println!("{rate:.16e}");
    Ok(0)
}

#[derive(Serialize)]
struct ValidateReport {
    samples: usize,
    alpha: f64,
    min_relative_residual: MinResiduals,
}

#[derive(Serialize)]
struct MinResiduals {
    shift: f64,
    kernel: f64,
    channel: f64,
    dissipation: f64,
}

fn cmd_validate(args: &ValidateArgs) -> Result<i32> {
    let plant = args.plant.build()?;
    let sector = args.sector.sector()?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);

    // A certified reference point for the dissipation chain.
    let config = MultiplierConfig::new(MultiplierClass::CircleCriterion, 1, -1.0)?;
    let est = certify_rate(&plant, sector, &config, &CertifyOptions::default())?;
    let alpha = args.alpha.unwrap_or_else(|| {
        est.alpha_star().map(|a| 0.5 * a).unwrap_or(0.05)
    });
    let basis = build_basis(&config)?;
    let filter = build_filter(&basis, sector, alpha, plant.d)?;
    // Admissible kernel sample for the filtered inequalities.
    let vars = {
        let mut v = MultiplierVars::static_multiplier(1, 1.0);
        v.p1 = nalgebra::RowDVector::from_row_slice(&[0.45]);
        v.p3 = nalgebra::RowDVector::from_row_slice(&[0.45]);
        v
    };
    let p_mat = seekrate::certify::witness_p_matrix(&vars, 1, plant.d)?;

    // Dissipation witness from the certified run, when available.
    let dissipation_witness = est
        .alpha_star()
        .and_then(|a_star| {
            let cfg = config;
            seekrate::certify::feasible_at(&plant, sector, &cfg, a_star, &Default::default())
                .ok()
                .and_then(|(problem, result)| {
                    let w = result.witness.clone()?;
                    let x = problem.extract(&w, "X")?;
                    let mv = seekrate::certify::extract_multiplier_vars(&problem, &w, &cfg);
                    let pm = seekrate::certify::witness_p_matrix(&mv, 1, plant.d).ok()?;
                    let f = build_filter(&build_basis(&cfg).ok()?, sector, a_star, plant.d).ok()?;
                    Some((x, pm, f, a_star))
                })
        });

    let mut mins = MinResiduals {
        shift: f64::INFINITY,
        kernel: f64::INFINITY,
        channel: f64::INFINITY,
        dissipation: f64::INFINITY,
    };

    let vertices = plant.vertices().len();
    for s in 0..args.samples {
        let center = random_unit(&mut rng, plant.d, 2.0);
        let field = if s % 4 == 3 {
            FieldSpec::scaled_smooth(center, sector)
        } else {
            seekrate::field::random_quadratic(&mut rng, plant.d, &center, sector)
        };
        let x0 = random_unit(&mut rng, plant.nx(), 3.0);
        let freq = rng.random_range(0.3..2.0);
        let schedule_fn = move |t: f64| {
            let w = 0.5 + 0.5 * (freq * t).sin();
            let mut weights = vec![0.0; vertices];
            weights[0] = 1.0 - w;
            weights[vertices - 1] += w;
            weights
        };
        let schedule: Option<seekrate::sim::Schedule> =
            plant.is_lpv().then_some(&schedule_fn as seekrate::sim::Schedule);
        let traj = simulate_closed_loop(&plant, &field, &x0, args.dt, args.t_final, schedule)?;
        let y_star = field.minimizer()?;
        let sig = make_signals(&traj, &field, sector, &y_star)?;
        let horizon = args.t_final * 0.9;

        for i in 0..=40 {
            let tau = -2.0 + 0.1 * i as f64;
            let r = shift_inequality_residual(&sig, alpha, tau, horizon);
            mins.shift = mins.shift.min(r.relative());
        }
        let r2 = kernel_inequality_residual(&sig, &basis, &vars.p1, &vars.p3, alpha, horizon);
        mins.kernel = mins.kernel.min(r2.relative());
        let r3 = channel_form_residual(&sig, &filter, &p_mat, alpha, horizon);
        mins.channel = mins.channel.min(r3.relative());

        if let Some((x, pm, f, a_star)) = &dissipation_witness {
            let eta_star = equilibrium_state(&plant, &y_star)?;
            let rd = dissipation_residual(&sig, &traj, &eta_star, f, x, pm, *a_star, horizon);
            mins.dissipation = mins.dissipation.min(rd.relative());
        }
    }

    let report = ValidateReport {
        samples: args.samples,
        alpha,
        min_relative_residual: mins,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

/// Equilibrium plant state for a given output target: the kernel direction
/// scaled so the output matches.
fn equilibrium_state(plant: &PlantModel, y_star: &DVector<f64>) -> Result<DVector<f64>> {
    let eta = plant.kernel_direction()?;
    let c = &plant.vertices()[0].c;
    let y_dir = c * &eta;
    let denom = y_dir.norm_squared();
    if denom < 1e-12 {
        bail!("kernel direction is unobservable at the output");
    }
    Ok(&eta * (y_dir.dot(y_star) / denom))
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Certify(a) => cmd_certify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Flocking(a) => cmd_flocking(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::ValidateIqc(a) => cmd_validate(a),
    };
    match code {
        Ok(c) => std::process::exit(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
