use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mixeq::instances::Instance;
use mixeq::io::{load_instance, write_sweep_csv};
use mixeq::sweep::{alpha_grid, alpha_sweep, parameter_sweep, SweepResult};
use mixeq::{braess, EquilibriumResult, Error, Init, SolverConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixed human/autonomous traffic equilibria and autonomy impact checks.
#[derive(Debug, Parser)]
#[command(name = "mixeq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the mixed equilibrium at one autonomy fraction.
    Solve {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        solver: SolverFlags,
        /// Write the result as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve over an evenly spaced range of autonomy fractions and write CSV.
    Sweep {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value_t = 0.0)]
        alpha_min: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha_max: f64,
        #[arg(long, default_value_t = 101)]
        steps: usize,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the improvement, deterioration, no-effect and centralized checks.
    Analyze {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact equilibrium of a linear-cost network by support enumeration.
    Oracle {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reproduce the built-in Braess experiments as CSV files.
    Braess {
        #[arg(value_enum)]
        variant: Variant,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Use the four directed simple paths instead of the declared list.
        #[arg(long)]
        enumerated_paths: bool,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Compare decentralized and centralized routing of the autonomous class.
    CompareCentralized {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        alpha: f64,
        #[command(flatten)]
        solver: SolverFlags,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// Network JSON file.
    #[arg(long)]
    network: PathBuf,
    /// Ignore declared paths and enumerate all simple paths.
    #[arg(long)]
    enumerated_paths: bool,
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// Relative VI-gap tolerance of the outer relaxation.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Start from a random feasible flow drawn with this seed instead of
    /// the free-flow all-or-nothing assignment.
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on outer relaxation sweeps.
    #[arg(long, default_value_t = 1000)]
    max_outer: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Variant {
    Paper,
    Deterioration,
    #[value(name = "sweep_k6", alias = "sweep-k6")]
    SweepK6,
    #[value(name = "sweep_b6", alias = "sweep-b6")]
    SweepB6,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(anyhow::Error),
    NonConvergence,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<Error>() {
            Some(Error::NonConvergence(_)) => {
                eprintln!("error: {e:#}");
                Failure::NonConvergence
            }
            _ => Failure::Input(e),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        anyhow::Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn config(flags: &SolverFlags, alpha: f64, paths: usize) -> SolverConfig {
    let mut cfg = SolverConfig { max_outer: flags.max_outer, ..SolverConfig::new(alpha).with_tolerance(flags.tol) };
    if let Some(seed) = flags.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_h = mixeq::solver::random_feasible(&mut rng, paths, 1.0 - alpha);
        let x_a = mixeq::solver::random_feasible(&mut rng, paths, alpha);
        cfg.init = Init::Given { x_h, x_a };
    }
    cfg
}

fn load(input: &Input) -> anyhow::Result<Instance> {
    load_instance(&input.network, input.enumerated_paths)
        .with_context(|| format!("loading {}", input.network.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_csv(path: &Path, sweep: &SweepResult) -> anyhow::Result<()> {
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    write_sweep_csv(sweep, std::io::BufWriter::new(file))?;
    Ok(())
}

fn print_result(inst: &Instance, r: &EquilibriumResult) {
    println!("alpha        {:?}", r.flow.alpha);
    println!("lambda_h     {:?}", r.lambda_h);
    println!("lambda_a     {:?}", r.lambda_a);
    println!("social_cost  {:?}", r.social);
    println!("gap          {:?} (relative {:e})", r.gap, r.relative_gap);
    println!("converged    {} after {} sweeps", r.converged, r.iterations);
    for (p, path) in inst.paths.paths().iter().enumerate() {
        println!(
            "path {} [{}]: total {:?} human {:?} autonomous {:?}",
            p + 1,
            path.join(","),
            r.flow.x_h[p] + r.flow.x_a[p],
            r.flow.x_h[p],
            r.flow.x_a[p]
        );
    }
}

fn cmd_solve(input: &Input, alpha: f64, flags: &SolverFlags, out: Option<&Path>) -> CmdResult {
    let inst = load(input)?;
    let cfg = config(flags, alpha, inst.delta.num_paths());
    let r = mixeq::solve_mixed(&inst.network, &inst.delta, &cfg)?;
    print_result(&inst, &r);
    if let Some(out) = out {
        write_json(out, &r)?;
    }
    if r.converged {
        Ok(())
    } else {
        eprintln!("error: relaxation did not converge (relative gap {:e})", r.relative_gap);
        Err(Failure::NonConvergence)
    }
}

fn finish_sweep(sweep: &SweepResult, out: &Path) -> CmdResult {
    write_csv(out, sweep)?;
    println!("wrote {} rows to {}", sweep.rows.len(), out.display());
    if sweep.all_converged() {
        Ok(())
    } else {
        let bad = sweep.rows.iter().filter(|r| !r.converged).count();
        eprintln!("error: {bad} rows did not converge (flagged in the converged column)");
        Err(Failure::NonConvergence)
    }
}

fn cmd_sweep(input: &Input, range: (f64, f64, usize), flags: &SolverFlags, out: &Path) -> CmdResult {
    let inst = load(input)?;
    let alphas = alpha_grid(range.0, range.1, range.2)?;
    let cfg = SolverConfig { max_outer: flags.max_outer, ..SolverConfig::new(0.0).with_tolerance(flags.tol) };
    let sweep = alpha_sweep(&inst.network, &inst.delta, &alphas, &cfg)?;
    finish_sweep(&sweep, out)
}

fn cmd_analyze(input: &Input, alpha: f64, flags: &SolverFlags, out: Option<&Path>) -> CmdResult {
    let inst = load(input)?;
    let cfg = config(flags, alpha, inst.delta.num_paths());
    let v = mixeq::analyze(&inst.network, &inst.delta, &cfg)?;
    match v.no_effect.b0 {
        Some(b0) => println!("no_effect: holds (common free-flow time {b0:?})"),
        None => println!("no_effect: does not hold"),
    }
    if let Some(d) = &v.deterioration {
        println!("deterioration: {}", serde_json::to_string(&d.verdict).unwrap_or_default().trim_matches('"'));
        println!("  support {:?}, q {:?}", d.v.iter().map(|p| p + 1).collect::<Vec<_>>(), d.q.map(|q| q + 1));
        println!("  gamma {:?}, condition_value {:?}", d.gamma, d.condition_value);
        println!("  hypotheses {:?}", d.hypotheses);
        println!("  alpha_validity_hint {:?}", d.alpha_validity_hint);
    }
    if let Some(c) = &v.centralized_match {
        println!(
            "centralized: decentralized S {:?}, centralized S {:?}, deviation {:e}",
            c.social_decentralized, c.social_centralized, c.deviation
        );
    }
    if let Some(i) = &v.improvement {
        println!(
            "improvement: dominates {}, S(alpha) {:?}, baseline S {:?}, baseline flows {:?}",
            i.dominates, i.social_mixed, i.social_baseline, i.baseline_x
        );
    }
    for s in &v.skipped {
        println!("skipped {}: {}", s.check, s.reason);
    }
    if let Some(out) = out {
        write_json(out, &v)?;
    }
    Ok(())
}

fn cmd_oracle(input: &Input, alpha: f64, out: Option<&Path>) -> CmdResult {
    let inst = load(input)?;
    let e = mixeq::exact_mixed(&inst.network, &inst.delta, alpha)?;
    let f = e.link_flows(&inst.delta);
    println!("alpha        {alpha:?}");
    println!("lambda_h     {:?}", e.lambda_h);
    println!("lambda_a     {:?}", e.lambda_a);
    println!("social_cost  {:?}", mixeq::social_cost(&inst.network, &f)?);
    println!(
        "support      human {:?} autonomous {:?}",
        e.support.v_h.iter().map(|p| p + 1).collect::<Vec<_>>(),
        e.support.v_a.iter().map(|p| p + 1).collect::<Vec<_>>()
    );
    for (p, x) in e.x_agg.iter().enumerate() {
        println!("path {}: {x:?}", p + 1);
    }
    if let Some(out) = out {
        write_json(out, &e)?;
    }
    Ok(())
}

fn braess_instance(k6: f64, b6: f64, enumerated: bool) -> mixeq::Result<Instance> {
    let net = braess::network(k6, b6)?;
    let paths = (!enumerated).then(|| braess::declared_paths(&net));
    Instance::new(net, paths)
}

fn cmd_braess(variant: Variant, out_dir: &Path, enumerated: bool, flags: &SolverFlags) -> CmdResult {
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let cfg = SolverConfig { max_outer: flags.max_outer, ..SolverConfig::new(0.0).with_tolerance(flags.tol) };
    let (name, sweep) = match variant {
        Variant::Paper => {
            let inst = braess_instance(braess::K[5], braess::B[5], enumerated)?;
            ("braess_paper.csv", alpha_sweep(&inst.network, &inst.delta, &alpha_grid(0.0, 1.0, 101)?, &cfg)?)
        }
        Variant::Deterioration => {
            let inst = braess_instance(braess::DETERIORATION_K6, braess::DETERIORATION_B6, enumerated)?;
            ("braess_deterioration.csv", alpha_sweep(&inst.network, &inst.delta, &alpha_grid(0.0, 0.1, 51)?, &cfg)?)
        }
        Variant::SweepK6 => {
            let cfg = cfg.with_alpha(0.02);
            let sweep = parameter_sweep("k6", &braess::k6_grid(), &cfg, |k6| {
                let i = braess_instance(k6, braess::DETERIORATION_B6, enumerated)?;
                Ok((i.network, i.delta))
            })?;
            ("braess_sweep_k6.csv", sweep)
        }
        Variant::SweepB6 => {
            let cfg = cfg.with_alpha(0.02);
            let sweep = parameter_sweep("b6", &braess::b6_grid(), &cfg, |b6| {
                let i = braess_instance(braess::DETERIORATION_K6, b6, enumerated)?;
                Ok((i.network, i.delta))
            })?;
            ("braess_sweep_b6.csv", sweep)
        }
    };
    finish_sweep(&sweep, &out_dir.join(name))
}

fn cmd_compare(input: &Input, alpha: f64, flags: &SolverFlags, out: Option<&Path>) -> CmdResult {
    let inst = load(input)?;
    let cfg = config(flags, alpha, inst.delta.num_paths());
    let c = mixeq::compare_centralized(&inst.network, &inst.delta, alpha, &cfg)?;
    println!("social_decentralized {:?}", c.social_decentralized);
    println!("social_centralized   {:?}", c.social_centralized);
    println!("deviation            {:e}", c.deviation);
    if let Some(out) = out {
        write_json(out, &c)?;
    }
    Ok(())
}

fn configure_threads() {
    let threads = std::env::var("MIXEQ_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok());
    if let Some(n) = threads.filter(|&n| n > 0) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size thread pool: {e}");
        }
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Solve { input, alpha, solver, out } => cmd_solve(&input, alpha, &solver, out.as_deref()),
        Command::Sweep { input, alpha_min, alpha_max, steps, solver, out } => {
            cmd_sweep(&input, (alpha_min, alpha_max, steps), &solver, &out)
        }
        Command::Analyze { input, alpha, solver, out } => cmd_analyze(&input, alpha, &solver, out.as_deref()),
        Command::Oracle { input, alpha, out } => cmd_oracle(&input, alpha, out.as_deref()),
        Command::Braess { variant, out, enumerated_paths, solver } => {
            cmd_braess(variant, &out, enumerated_paths, &solver)
        }
        Command::CompareCentralized { input, alpha, solver, out } => {
            cmd_compare(&input, alpha, &solver, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage_error = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(u8::from(usage_error));
        }
    };
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::NonConvergence) => ExitCode::from(2),
    }
}
