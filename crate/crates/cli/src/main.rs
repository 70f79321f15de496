mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use osctrack::certify::{
    bound_constants, estimate_sup_bounds, CertificateInputs, Certification, Provenance,
    SampleRegion, SupBounds,
};
use osctrack::controller::Controller;
use osctrack::curves::{curve_by_name, CURVE_NAMES};
use osctrack::integrator::{simulate, SamplerGrid, SimulationFailure};
use osctrack::metrics::dist_to_family;
use osctrack::scenarios::{scenario_by_name, SCENARIO_NAMES};
use osctrack::systems::GainBasis;
use osctrack::{Scenario64, StabilityReport64, Trajectory64};
use rayon::prelude::*;
use serde::Serialize;

use config::{FileConfig, RunArgs, RunConfig};
use output::{num, opt_num, output_path, write_json, write_trajectory};

#[derive(Parser)]
#[command(
    name = "osctrack",
    version,
    about = "Oscillating-feedback tracking for driftless control-affine systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one closed-loop run and write its trace, report and metadata.
    Run(RunArgs),
    /// Compute sampling-period bounds for a scenario and curve.
    Certify(CertifyArgs),
    /// Run a grid of (alpha, epsilon) pairs in parallel.
    Sweep(SweepArgs),
    /// List built-in scenarios.
    ListScenarios,
    /// List built-in reference curves.
    ListCurves,
}

#[derive(Args)]
struct CertifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Inner tube radius [default: 0.6 rho].
    #[arg(long)]
    rho_prime: Option<f64>,
    /// [default: 2 rho]
    #[arg(long)]
    delta: Option<f64>,
    /// [default: 3 rho]
    #[arg(long)]
    delta_prime: Option<f64>,
    /// Domain radius around the curve [default: unbounded].
    #[arg(long)]
    domain_radius: Option<f64>,
    /// Contraction rate [default: half of alpha − nu/rho_prime].
    #[arg(long)]
    lambda: Option<f64>,
    /// Sample points for bound estimation.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Estimate bounds by sampling even when closed forms exist.
    #[arg(long)]
    empirical: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Vec<f64>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    jobs: Option<usize>,
    /// Also write the trajectory CSV of every run.
    #[arg(long)]
    traces: bool,
}

/// Outcome classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Validation(anyhow::Error),
    Simulation(anyhow::Error),
    Certification(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Simulation(_) => 2,
            Failure::Certification(_) => 3,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Simulation(e) | Failure::Certification(e) => e,
        }
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn io(e: anyhow::Error) -> Failure {
    Failure::Simulation(e.context("writing outputs"))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(&args),
        Command::Certify(args) => certify(&args),
        Command::Sweep(args) => sweep(&args),
        Command::ListScenarios => list_scenarios(),
        Command::ListCurves => list_curves(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

/// Everything a run needs once the configuration is settled.
struct Setup {
    cfg: RunConfig,
    scenario: Scenario64,
    curve: osctrack::curves::CurveRef<f64>,
}

fn setup(args: &RunArgs) -> Result<(Setup, FileConfig), Failure> {
    let file = args.file().map_err(invalid)?;
    let (cfg, scenario) = args.resolve(&file).map_err(invalid)?;
    let curve = cfg.curve.build(cfg.horizon).map_err(invalid)?;
    let n = scenario.system.n();
    if curve.dim() != n {
        return Err(invalid(anyhow!(
            "curve {} has dimension {} but scenario {} has state dimension {n}",
            curve.name(),
            curve.dim(),
            cfg.scenario
        )));
    }
    Ok((
        Setup {
            cfg,
            scenario,
            curve,
        },
        file,
    ))
}

fn controller(s: &Setup, alpha: f64, epsilon: f64) -> Result<Controller<f64>, Failure> {
    let params = osctrack::controller::ControllerParams::new(alpha, epsilon).map_err(invalid)?;
    let basis = GainBasis::new(&s.scenario.system, &s.scenario.scheme).map_err(invalid)?;
    Controller::new(basis, s.scenario.scheme.clone(), params).map_err(invalid)
}

/// Simulates with the given gains; on failure the partial trace comes back
/// together with the error.
fn execute(
    s: &Setup,
    alpha: f64,
    epsilon: f64,
) -> Result<Result<Trajectory64, SimulationFailure<f64>>, Failure> {
    let ctl = controller(s, alpha, epsilon)?;
    let grid = SamplerGrid::new(epsilon, s.cfg.horizon, s.cfg.substeps).map_err(invalid)?;
    grid.validate_for(&s.scenario.scheme).map_err(invalid)?;
    Ok(simulate(&ctl, s.curve.as_ref(), &s.cfg.x0, &grid))
}

#[derive(Serialize)]
struct FailureInfo {
    error: String,
    time: f64,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    curve_name: String,
    nu: f64,
    gain_condition: bool,
    status: &'static str,
    partial: bool,
    failure: Option<FailureInfo>,
    rows: usize,
    intervals: usize,
    coefficient_evaluations: usize,
    trajectory: PathBuf,
    report: Option<PathBuf>,
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let (s, _) = setup(args)?;
    let cfg = &s.cfg;
    let nu = s.curve.nu();
    if let Some(w) = cfg.params().map_err(invalid)?.gain_warning(nu, cfg.rho) {
        eprintln!("warning: {w}");
    }
    let started = Instant::now();
    let (traj, failure) = match execute(&s, cfg.alpha, cfg.epsilon)? {
        Ok(t) => (t, None),
        Err(f) => (
            f.partial,
            Some(FailureInfo {
                error: f.error.to_string(),
                time: f.time,
            }),
        ),
    };
    let elapsed = started.elapsed();

    let stem = cfg.stem();
    let csv = output_path(&cfg.out_dir, &stem, ".csv");
    write_trajectory(&csv, &traj, s.scenario.system.n(), s.scenario.system.m()).map_err(io)?;
    let report = if traj.is_empty() {
        None
    } else {
        let rep = dist_to_family(&traj, cfg.rho).map_err(invalid)?;
        let path = output_path(&cfg.out_dir, &stem, ".report.json");
        write_json(&path, &rep).map_err(io)?;
        print_report(&rep);
        Some(path)
    };
    let meta = RunMetadata {
        tool: "osctrack",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        curve_name: s.curve.name(),
        nu,
        gain_condition: nu / cfg.rho < cfg.alpha,
        status: if failure.is_some() {
            "simulation_failed"
        } else {
            "ok"
        },
        partial: failure.is_some(),
        rows: traj.len(),
        intervals: traj.interval_count(),
        coefficient_evaluations: traj.stats.coefficient_evaluations,
        failure,
        trajectory: csv.clone(),
        report,
    };
    write_json(&output_path(&cfg.out_dir, &stem, ".meta.json"), &meta).map_err(io)?;
    eprintln!(
        "wrote {} rows to {} in {:.2?}",
        traj.len(),
        csv.display(),
        elapsed
    );
    match meta.failure {
        Some(f) => Err(Failure::Simulation(anyhow!(
            "simulation stopped at t = {}: {} (partial outputs written)",
            f.time,
            f.error
        ))),
        None => Ok(()),
    }
}

fn print_report(rep: &StabilityReport64) {
    let entry = rep
        .entry_time
        .map_or("never".to_string(), |t| format!("{t:.4}"));
    println!("tube radius       {}", rep.rho);
    println!("entry time        {entry}");
    println!("steady amplitude  {:.6e}", rep.steady_amplitude);
    println!("max tube distance {:.6e}", rep.max_tube_distance);
    if let Some(l) = rep.fitted_lambda {
        println!("fitted decay rate {l:.6}");
    }
}

#[derive(Serialize)]
struct CertifyOutput<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a RunConfig,
    curve_name: String,
    samples: Option<usize>,
    epsilon_within_bound: Option<bool>,
    certification: Certification<f64>,
}

fn certify(args: &CertifyArgs) -> Result<(), Failure> {
    let (s, _) = setup(&args.run)?;
    let cfg = &s.cfg;
    let rho = cfg.rho;
    let rho_prime = args.rho_prime.unwrap_or(0.6 * rho);
    let delta = args.delta.unwrap_or(2.0 * rho);
    let delta_prime = args.delta_prime.unwrap_or(3.0 * rho);
    let nu = s.curve.nu();
    let lambda = args.lambda.unwrap_or(0.5 * (cfg.alpha - nu / rho_prime));
    let mut inputs = CertificateInputs {
        r: args.domain_radius.unwrap_or(f64::INFINITY),
        rho,
        rho_prime,
        delta,
        delta_prime,
        nu,
        lambda,
        bounds: SupBounds {
            m1: 1.0,
            m2: 1.0,
            m3: 1.0,
            lipschitz: 1.0,
            mu: 1.0,
        },
        provenance: Provenance::Analytic,
    };
    // radii and rate first, so ordering mistakes never cost a sampling pass
    inputs.validate(cfg.alpha).map_err(invalid)?;
    let (bounds, provenance, samples) = match (s.scenario.analytic_bounds, args.empirical) {
        (Some(b), false) => (b, Provenance::Analytic, None),
        _ => {
            if args.samples == 0 {
                return Err(invalid(anyhow!("--samples must be positive")));
            }
            let region = SampleRegion::Tube {
                curve: s.curve.as_ref(),
                radius: delta_prime,
                horizon: cfg.horizon,
            };
            let b = estimate_sup_bounds(
                &s.scenario.system,
                &s.scenario.scheme,
                &region,
                args.samples,
                cfg.seed,
            )
            .map_err(|e| Failure::Certification(anyhow!(e).context("estimating sup bounds")))?;
            (b, Provenance::Empirical, Some(args.samples))
        }
    };
    inputs.bounds = bounds;
    inputs.provenance = provenance;
    let params = cfg.params().map_err(invalid)?;
    let certification = bound_constants(&s.scenario.scheme, &params, &inputs).map_err(invalid)?;
    let within = certification
        .certificate()
        .map(|c| cfg.epsilon <= c.eps_hat);
    let out = CertifyOutput {
        tool: "osctrack",
        version: env!("CARGO_PKG_VERSION"),
        config: cfg,
        curve_name: s.curve.name(),
        samples,
        epsilon_within_bound: within,
        certification,
    };
    let path = output_path(&cfg.out_dir, &cfg.stem(), ".certificate.json");
    write_json(&path, &out).map_err(io)?;
    match &out.certification {
        Certification::Certified(c) => {
            println!("C1 {:.6e}  C2 {:.6e}  sigma {:.6e}", c.c1, c.c2, c.sigma);
            println!(
                "eps1 {:.6e}  eps2 {:.6e}  eps3 {:.6e}",
                c.eps1, c.eps2, c.eps3
            );
            println!("eps_hat {:.6e} ({:?} bounds)", c.eps_hat, c.provenance);
            if within == Some(false) {
                eprintln!(
                    "warning: epsilon = {} exceeds the certified bound {:.6e}",
                    cfg.epsilon, c.eps_hat
                );
            }
            Ok(())
        }
        Certification::Failed(f) => Err(Failure::Certification(anyhow!(
            "certification failed: {} (report in {})",
            f.reason,
            path.display()
        ))),
    }
}

struct SweepRow {
    alpha: f64,
    epsilon: f64,
    gain_ok: bool,
    report: Option<StabilityReport64>,
    error: Option<String>,
}

fn write_sweep(path: &std::path::Path, rows: &[SweepRow]) -> anyhow::Result<()> {
    let mut w = output::csv_writer(path)?;
    w.write_record([
        "alpha",
        "epsilon",
        "status",
        "gain_condition",
        "entry_time",
        "steady_amplitude",
        "fitted_lambda",
        "max_tube_distance",
        "error",
    ])?;
    for r in rows {
        let rep = r.report.as_ref();
        w.write_record([
            num(r.alpha),
            num(r.epsilon),
            if r.error.is_some() { "failed" } else { "ok" }.to_string(),
            if r.gain_ok { "ok" } else { "violated" }.to_string(),
            opt_num(rep.and_then(|p| p.entry_time)),
            opt_num(rep.map(|p| p.steady_amplitude)),
            opt_num(rep.and_then(|p| p.fitted_lambda)),
            opt_num(rep.map(|p| p.max_tube_distance)),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Failure> {
    let (s, file) = setup(&args.run)?;
    let pick = |flag: &Vec<f64>, from_file: &Option<Vec<f64>>| {
        if flag.is_empty() {
            from_file.clone().unwrap_or_default()
        } else {
            flag.clone()
        }
    };
    let alphas = pick(&args.alphas, &file.alphas);
    let epsilons = pick(&args.epsilons, &file.epsilons);
    if alphas.is_empty() || epsilons.is_empty() {
        return Err(invalid(anyhow!(
            "sweep needs at least one value in --alphas and in --epsilons"
        )));
    }
    if let Some(v) = alphas
        .iter()
        .chain(&epsilons)
        .find(|v| !(**v > 0.0 && v.is_finite()))
    {
        return Err(invalid(anyhow!(
            "sweep values must be positive and finite, got {v}"
        )));
    }
    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| epsilons.iter().map(move |&e| (a, e)))
        .collect();
    let cfg = &s.cfg;
    let nu = s.curve.nu();
    let stem = cfg.stem();
    let one = |(alpha, epsilon): (f64, f64)| -> SweepRow {
        let mut row = SweepRow {
            alpha,
            epsilon,
            gain_ok: nu / cfg.rho < alpha,
            report: None,
            error: None,
        };
        let traj = match execute(&s, alpha, epsilon) {
            Err(f) => {
                row.error = Some(format!("{:#}", f.error()));
                return row;
            }
            Ok(Ok(t)) => t,
            Ok(Err(f)) => {
                row.error = Some(format!("t = {}: {}", f.time, f.error));
                f.partial
            }
        };
        if args.traces {
            let path = output_path(&cfg.out_dir, &format!("{stem}_a{alpha}_e{epsilon}"), ".csv");
            if let Err(e) =
                write_trajectory(&path, &traj, s.scenario.system.n(), s.scenario.system.m())
            {
                row.error.get_or_insert_with(|| format!("{e:#}"));
            }
        }
        if !traj.is_empty() {
            row.report = dist_to_family(&traj, cfg.rho).ok();
        }
        row
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(invalid)?;
    let rows: Vec<SweepRow> = pool.install(|| grid.par_iter().map(|&p| one(p)).collect());

    let path = output_path(&cfg.out_dir, &stem, "_sweep.csv");
    write_sweep(&path, &rows).map_err(io)?;
    for a in alphas.iter().filter(|&&a| nu / cfg.rho >= a) {
        eprintln!(
            "warning: alpha = {a} violates alpha > nu/rho = {}",
            nu / cfg.rho
        );
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    eprintln!("wrote {} rows to {}", rows.len(), path.display());
    if failed > 0 {
        return Err(Failure::Simulation(anyhow!(
            "{failed} of {} sweep runs failed",
            rows.len()
        )));
    }
    Ok(())
}

fn list_scenarios() -> Result<(), Failure> {
    println!(
        "{:<11} {:>3} {:>3}  {:<18} {:>6} {:>6}  x0",
        "name", "n", "m", "default curve", "alpha", "eps"
    );
    for name in SCENARIO_NAMES {
        let s = scenario_by_name::<f64>(name).map_err(invalid)?;
        println!(
            "{:<11} {:>3} {:>3}  {:<18} {:>6} {:>6}  {:?}",
            s.name,
            s.system.n(),
            s.system.m(),
            s.default_curve,
            s.default_params.alpha,
            s.default_params.epsilon,
            s.default_x0
        );
    }
    Ok(())
}

/// Window over which `list-curves` samples the speed bound.
const LIST_HORIZON: f64 = 40.0;

fn list_curves() -> Result<(), Failure> {
    println!("{:<18} {:>3}  nu on [0, {LIST_HORIZON}]", "name", "dim");
    for name in CURVE_NAMES {
        let c = curve_by_name::<f64>(name, LIST_HORIZON).map_err(invalid)?;
        println!("{:<18} {:>3}  {:.6}", name, c.dim(), c.nu());
    }
    println!("custom curves: --expr '<component in t>' once per state component");
    Ok(())
}
