use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use axiharm::config::{load_config, parse_config, Command, RunConfig, SCHWARZSCHILD_TOML};
use axiharm::pipeline::{self, SolveOutcome};
use axiharm::solver::Checkpoint;
use axiharm::spacetime::ReconstructOptions;

const DEFAULTS: &str = "\
Config defaults (TOML; unknown keys are errors):
  k                      required
  command                \"solve\"
  gauge_normalize        true
  [rods] gaps            required, disjoint and increasing
  [[component]]          one per axis component, bottom first; v, psi (length k), chi optional (zeros)
  [seed]                 r_star = 4 E, theta_margin = pi/8, bump_width = F/4, profile_order = 5
  [grid]                 h = F/8, core = 2 E, growth = 1.08, level = 1
  [solver]               tol = 1e-8, max_iters = 60, patience = 8, max_sweeps = 20000,
                         check_every = 25, r_schedule = [8 L, 16 L, 32 L]
  [reconstruct]          convention = \"minus\", endpoint_margin = F/2, warn_threshold = 1e-2
  [diagnostics]          tol = 1e-6, rays = 7, samples_per_ray = 16, decay_radii = 10
  [output]               dir = \"out\", checkpoints = true
L is the diameter of the gap configuration, E the largest |z| of a gap
endpoint and F the shortest gap or bounded rod.
Without --config the bundled Schwarzschild configuration is used.

Environment:
  AXIHARM_THREADS        worker threads for the sparse solves (default 1)
  RUST_LOG               log filter (default info)";

#[derive(Parser)]
#[command(name = "axiharm", version, about = "Axisymmetric harmonic maps into complex hyperbolic space", after_long_help = DEFAULTS)]
struct Cli {
    #[command(flatten)]
    opts: Opts,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Args)]
struct Opts {
    /// Configuration file (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding [output] dir.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// Grid refinement level; each level halves the spacing.
    #[arg(long, global = true)]
    refine: Option<u32>,
    /// Comma-separated ball radii, overriding [solver] r_schedule.
    #[arg(long, global = true, value_delimiter = ',')]
    r_schedule: Option<Vec<f64>>,
    /// Solver tolerance, overriding [solver] tol.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Seed, solve over the R schedule, run the diagnostics and reconstruct.
    Solve,
    /// Run the analytic-oracle suites.
    Validate,
    /// Reconstruct the spacetime from a checkpoint (or solve first).
    Reconstruct {
        /// Reconstruct from this checkpoint instead of solving.
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Print a summary of the report in the output directory.
    Report,
    /// Execute the command named in the configuration.
    Run,
    /// Print the resolved configuration.
    Config,
}

fn load(opts: &Opts) -> Result<RunConfig, String> {
    let mut cfg = match &opts.config {
        Some(p) => load_config(p).map_err(|e| format!("{}: {e}", p.display()))?,
        None => parse_config(SCHWARZSCHILD_TOML).map_err(|e| e.to_string())?,
    };
    if let Some(l) = opts.refine {
        cfg.grid = cfg.grid.with_level(l);
    }
    if let Some(r) = &opts.r_schedule {
        cfg.solver.r_schedule = r.clone();
    }
    if let Some(t) = opts.tol {
        cfg.solver.tol = t;
    }
    if let Some(o) = &opts.out {
        cfg.output.dir = o.clone();
    }
    cfg.solver.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn out_dir(opts: &Opts, cfg: Option<&RunConfig>) -> PathBuf {
    match (&opts.out, cfg) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.output.dir.clone(),
        (None, None) => PathBuf::from("out"),
    }
}

fn solve(cfg: &RunConfig) -> Result<SolveOutcome, String> {
    let mut out = pipeline::solve(cfg).map_err(|e| e.to_string())?;
    pipeline::write_solve_outputs(&cfg.output.dir, &mut out).map_err(|e| e.to_string())?;
    if let Some(f) = &out.report.failure {
        print!("{}", pipeline::summarize(&out.report));
        return Err(format!("{f} (partial report in {})", cfg.output.dir.display()));
    }
    Ok(out)
}

fn reconstruct(opts: &Opts, from: Option<&Path>) -> Result<(), String> {
    if let Some(path) = from {
        let cp = Checkpoint::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
        // options from the config when one is given, else the defaults for the checkpoint's rods
        let (ropts, dir) = match &opts.config {
            Some(_) => {
                let cfg = load(opts)?;
                (cfg.reconstruct, cfg.output.dir)
            }
            None => (ReconstructOptions::default_for(&cp.rods), out_dir(opts, None)),
        };
        let rec = pipeline::reconstruct_with(&cp.rods, &cp.spec, &ropts, &cp.state).map_err(|e| e.to_string())?;
        pipeline::write_spacetime_outputs(&dir, &cp.state, &rec).map_err(|e| e.to_string())?;
        print!("{}", pipeline::summarize_spacetime(&rec.summary));
        return Ok(());
    }
    let out = solve(&load(opts)?)?;
    print!("{}", pipeline::summarize(&out.report));
    Ok(())
}

fn validate(dir: &Path) -> Result<(), String> {
    let results = axiharm::validation::run_all();
    for r in &results {
        println!("{} {}: {}", if r.pass { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let json = serde_json::to_string_pretty(&results).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("validation.json"), json).map_err(|e| e.to_string())?;
    let failed = results.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        return Err(format!("{failed} validation suite(s) failed"));
    }
    Ok(())
}

fn execute(cmd: Cmd, opts: &Opts) -> Result<(), String> {
    match cmd {
        Cmd::Validate => validate(&out_dir(opts, None)),
        Cmd::Report => {
            let dir = match &opts.config {
                Some(_) => load(opts)?.output.dir,
                None => out_dir(opts, None),
            };
            let r = pipeline::read_report(&dir).map_err(|e| format!("{}: {e}", dir.display()))?;
            print!("{}", pipeline::summarize(&r));
            Ok(())
        }
        Cmd::Solve => {
            let out = solve(&load(opts)?)?;
            print!("{}", pipeline::summarize(&out.report));
            Ok(())
        }
        Cmd::Reconstruct { from } => reconstruct(opts, from.as_deref()),
        Cmd::Config => {
            let cfg = load(opts)?;
            println!("{}", serde_json::to_string_pretty(&cfg).map_err(|e| e.to_string())?);
            Ok(())
        }
        Cmd::Run => {
            let cfg = load(opts)?;
            let next = match cfg.command {
                Command::Solve => Cmd::Solve,
                Command::Validate => Cmd::Validate,
                Command::Reconstruct => Cmd::Reconstruct { from: None },
                Command::Report => Cmd::Report,
            };
            execute(next, opts)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let threads = std::env::var("AXIHARM_THREADS").ok().and_then(|s| s.parse().ok()).unwrap_or(1);
    pipeline::set_threads(threads);
    match execute(cli.command.unwrap_or(Cmd::Run), &cli.opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
