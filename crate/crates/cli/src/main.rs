use std::path::{Path, PathBuf};
use std::process::ExitCode;

use caloric::runner::{
    convergence_study, emit_plotdata, parse_config, run_pipeline, RunConfig, RunReport, Stages,
};
use caloric::Error;
use clap::{Args, Parser, Subcommand};

/// Wave maps into hyperbolic space, their caloric gauge and light-cone diagnostics.
#[derive(Parser)]
#[command(name = "caloric", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for randomized checks; overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve the wave map and write energies and snapshots.
    Simulate(RunArgs),
    /// Simulate, then build heat ladders and the caloric gauge at the configured times.
    Gauge(RunArgs),
    /// Full pipeline including stress-energy and cone diagnostics.
    Diagnose(RunArgs),
    /// Refinement study of the full pipeline.
    Study {
        #[command(flatten)]
        run: RunArgs,
        /// Number of grids, each with h, dt and ds halved.
        #[arg(long, default_value_t = 3)]
        levels: usize,
    },
    /// Rewrite the plot CSVs from an existing `report.json`.
    Export {
        /// Directory holding `report.json`; the CSVs are written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Report to read instead of `<out>/report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        return 3;
    }
    match e.root() {
        Error::Parse(_)
        | Error::Validation { .. }
        | Error::SupportTooLarge(_)
        | Error::ConeOutsideBox(_)
        | Error::SingularField(_) => 2,
        _ => 1,
    }
}

fn load(args: &RunArgs) -> caloric::Result<(RunConfig, PathBuf)> {
    let mut cfg = parse_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output.directory.clone());
    Ok((cfg, out))
}

fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .expect("thread pool")
            .install(f),
        None => f(),
    }
}

fn summarize(report: &RunReport, out: &Path) {
    println!(
        "n={} h={} dt={} steps={} energy drift {:.3e}",
        report.n, report.h, report.dt, report.steps, report.energy.relative_drift
    );
    for c in &report.checks {
        let tag = if c.pass { "ok  " } else { "FAIL" };
        println!("{tag} {:<48} {:.3e} (<= {:.3e})", c.name, c.value, c.threshold);
    }
    println!("wrote {}", out.display());
}

fn run(args: &RunArgs, stages: Stages) -> caloric::Result<bool> {
    let (cfg, out) = load(args)?;
    let report = with_threads(args.threads, || run_pipeline(&cfg, stages, &out))?;
    summarize(&report, &out);
    Ok(report.passed())
}

fn study(args: &RunArgs, levels: usize) -> caloric::Result<bool> {
    let (cfg, out) = load(args)?;
    let table = with_threads(args.threads, || convergence_study(&cfg, levels))?;
    std::fs::create_dir_all(&out)?;
    table.write_csv(&out.join("study.csv"))?;
    std::fs::write(out.join("study.json"), serde_json::to_string_pretty(&table)?)?;
    println!("n = {:?}", table.n);
    for row in &table.rows {
        let rates: Vec<String> = row.rates.iter().map(|r| format!("{r:.2}")).collect();
        println!("{:<24} rates {}", row.quantity, rates.join(" "));
    }
    println!("wrote {}", out.display());
    Ok(true)
}

fn export(out: &Path, report: Option<&Path>) -> caloric::Result<bool> {
    let path = report.map(Path::to_path_buf).unwrap_or_else(|| out.join("report.json"));
    let report: RunReport = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
    let data = emit_plotdata(&report, out)?;
    println!(
        "wrote {} energy, {} sup-gradient, {} residual, {} cone-energy and {} decay rows to {}",
        data.energy.len(),
        data.sup_gradient.len(),
        data.residuals.len(),
        data.cone_energy.len(),
        data.scaled_decay.len(),
        out.display()
    );
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => run(a, Stages::SIMULATE),
        Command::Gauge(a) => run(a, Stages::GAUGE),
        Command::Diagnose(a) => run(a, Stages::ALL),
        Command::Study { run, levels } => study(run, *levels),
        Command::Export { out, report } => export(out, report.as_deref()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some checks failed");
            ExitCode::from(4)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
