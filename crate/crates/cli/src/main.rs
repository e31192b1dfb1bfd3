use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hubbard_gpsr::observables::read_csv;
use hubbard_gpsr_cli::bench::{bench_noise_step, BenchConfig, BenchMethod};
use hubbard_gpsr_cli::compare::{compare_runs, LabeledRun};
use hubbard_gpsr_cli::{init_threads, run_experiment, write_outputs, CliError, ExperimentConfig, Method, Overrides};

#[derive(Parser)]
#[command(name = "hubbard-gpsr", version, about = "Gaussian phase-space simulation of Fermi-Hubbard lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write per-observable CSVs plus a manifest.
    Run(RunArgs),
    /// Time diffusion build, factorizations and steps against lattice size.
    Bench(BenchArgs),
    /// Merge series files onto the first file's time grid.
    Compare(CompareArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    spike_threshold: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![8, 12, 16, 24, 32])]
    sizes: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Vec<BenchMethod>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Skip full-step timings.
    #[arg(long)]
    factor_only: bool,
    /// JSON result file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Series CSVs; the first is the reference.
    #[arg(required = true, num_args = 2..)]
    files: Vec<PathBuf>,
    /// Column labels, one per file; defaults to the parent directory names.
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    /// Merged CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply(&Overrides {
        method: args.method,
        trajectories: args.trajectories,
        dt: args.dt,
        t_max: args.tmax,
        seed: args.seed,
        rank: args.rank,
        spike_threshold: args.spike_threshold,
        out: args.out,
    });
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("out"));
    let threads = init_threads()?;
    eprintln!("running {} on {:?} with {threads} thread(s)", cfg.method.label(), cfg.dims);
    let start = std::time::Instant::now();
    let out = run_experiment(&cfg)?;
    let files = write_outputs(&dir, &out)?;
    eprintln!("wrote {} files to {} in {:.1}s", files.len(), dir.display(), start.elapsed().as_secs_f64());
    if let Some(g) = &out.manifest.gpsr {
        eprintln!("practical simulation time {:.3}, {} failed trajectories", g.practical_simulation_time, g.failures);
        if g.gauge_failures > 0 {
            return Err(CliError::Numerical(format!("{} trajectories hit a factorization failure", g.gauge_failures)));
        }
    }
    Ok(())
}

fn bench(args: BenchArgs) -> Result<(), CliError> {
    let mut cfg = BenchConfig { sizes: args.sizes, reps: args.reps, seed: args.seed, factor_only: args.factor_only, ..BenchConfig::default() };
    if !args.methods.is_empty() {
        cfg.methods = args.methods;
    }
    init_threads()?;
    let result = bench_noise_step(&cfg, |row| {
        let f: Vec<String> = row.factorization.iter().map(|(k, v)| format!("{k} {v:.3e}")).collect();
        eprintln!("n_s {:>3}: build {:.3e}  {}", row.n_sites, row.build, f.join("  "));
    })?;
    for (key, fit) in &result.fits {
        let flag = if fit.flagged { "  (poor fit)" } else { "" };
        println!("{key:<24} exponent {:6.3}  intercept {:8.3}  R² {:.4}{flag}", fit.exponent, fit.intercept, fit.r2);
    }
    if let Some(p) = args.out {
        std::fs::write(&p, serde_json::to_string_pretty(&result).expect("result serializes") + "\n")?;
    }
    Ok(())
}

fn label_for(path: &std::path::Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn compare(args: CompareArgs) -> Result<(), CliError> {
    if !args.labels.is_empty() && args.labels.len() != args.files.len() {
        return Err(CliError::Config(format!("{} labels for {} files", args.labels.len(), args.files.len())));
    }
    let mut runs = Vec::new();
    for (k, path) in args.files.iter().enumerate() {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
        let label = args.labels.get(k).cloned().unwrap_or_else(|| label_for(path));
        runs.push(LabeledRun { label, series: read_csv(file)? });
    }
    let table = compare_runs(&runs)?;
    match args.out {
        Some(p) => table.write_csv(std::fs::File::create(p)?)?,
        None => table.write_csv(std::io::stdout().lock())?,
    }
    for k in 1..runs.len() {
        let s = table.summary(k, 3.0);
        eprintln!(
            "{} vs {}: {} points, {:.1}% within 3 stderr, max |deviation| {:.3e}",
            runs[k].label,
            runs[0].label,
            s.points,
            100.0 * s.within,
            s.max_abs
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Bench(a) => bench(a),
        Command::Compare(a) => compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
