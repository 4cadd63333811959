use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use enda::experiments::{
    posterior_pdfs, read_replicates_csv, run_reference_is, run_twin, summarize, sweep_localization, write_summary_csv,
    ExperimentConfig, Manifest, TwinSetup,
};
use enda::forward::{solve_pressure, GridSpec, ObservationOperator, ObservationOperatorSpec, PermeabilityField};
use enda::io::{write_ensemble_csv, write_field_csv, write_histogram_csv};
use enda::priors::{layered_permeability, LayeredParams};

#[derive(Parser)]
#[command(name = "enda", version, about = "Ensemble data assimilation twin experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the replicate sweep of a config file and write its result tables.
    Run(RunArgs),
    /// Build an importance-sampling reference archive for later KL comparisons.
    ReferenceIs(ReferenceArgs),
    /// Grid-search the localization radius of a localized config.
    SweepLoc(SweepArgs),
    /// Aggregate one or more replicates.csv files.
    Summarize(SummarizeArgs),
    /// Standalone pressure solve for debugging.
    SolveDarcy(SolveArgs),
    /// Draw a prior ensemble for a config and write it as CSV.
    GenPrior(PriorArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReferenceArgs {
    config: PathBuf,
    /// Number of prior samples.
    #[arg(long, default_value_t = 100_000)]
    members: usize,
    /// Archive path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the reference histograms `pdf_<param>.csv` here.
    #[arg(long)]
    pdf_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    config: PathBuf,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',', required = true)]
    radii: Vec<f64>,
    /// Table path (default: `<output_dir>/sweep.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Run manifest supplying the truth for spread-to-error ratios.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Cells per side.
    #[arg(long, default_value_t = 50)]
    n: usize,
    /// Constant permeability.
    #[arg(long, conflicts_with_all = ["layered", "log_field"])]
    k: Option<f64>,
    /// Layered field from raw parameters `a,b,c,k1,k2`.
    #[arg(long, value_delimiter = ',', conflicts_with = "log_field")]
    layered: Option<Vec<f64>>,
    /// Log-permeability grid as CSV, one row of cells per line.
    #[arg(long)]
    log_field: Option<PathBuf>,
    /// Kernel width of the observation functionals.
    #[arg(long, default_value_t = 0.01)]
    sigma: f64,
    /// Pressure field output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PriorArgs {
    config: PathBuf,
    #[arg(long)]
    members: usize,
    #[arg(long, default_value_t = 0)]
    replicate: usize,
    #[arg(long)]
    out: PathBuf,
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn run(args: RunArgs) -> Result<()> {
    let mut cfg = load(&args.config)?;
    if let Some(dir) = args.output_dir {
        cfg.output_dir = dir;
    }
    let out = run_twin(&cfg)?;
    out.write(&cfg.output_dir)?;
    let failed = out.results.iter().filter(|r| !r.is_ok()).count();
    println!(
        "{} replicates ({failed} failed) written to {}",
        out.results.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn reference(args: ReferenceArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    let (setup, archive) = run_reference_is(&cfg, args.members)?;
    archive.write(&args.out)?;
    if let Some(dir) = args.pdf_dir {
        std::fs::create_dir_all(&dir)?;
        let samples = setup.reference_samples(&archive)?;
        for (name, h) in posterior_pdfs(&setup.param_names(), &samples.report, Some(&samples.weights))? {
            write_histogram_csv(&dir.join(format!("pdf_{name}.csv")), &h)?;
        }
    }
    let ess = 1.0 / archive.weights.iter().map(|w| w * w).sum::<f64>();
    println!(
        "reference with {} samples (ESS {ess:.1}) written to {}",
        args.members,
        args.out.display()
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    let s = sweep_localization(&cfg, &args.radii)?;
    let path = args.out.unwrap_or_else(|| cfg.output_dir.join("sweep.csv"));
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["radius", "M", "mean_rmse_after"])?;
    for r in &s.rows {
        w.write_record([
            format!("{:?}", r.radius),
            r.members.to_string(),
            r.mean_rmse_after.map(|v| format!("{v:?}")).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    for (m, r) in &s.best_by_size {
        println!("M = {m}: best radius {r}");
    }
    println!("best radius overall: {}", s.best);
    Ok(())
}

fn summarize_cmd(args: SummarizeArgs) -> Result<()> {
    let mut rows = Vec::new();
    for p in &args.inputs {
        rows.extend(read_replicates_csv(p).with_context(|| format!("reading {}", p.display()))?);
    }
    let truth = match &args.manifest {
        Some(p) => Some(Manifest::read(p)?.truth).filter(|t| !t.is_empty()),
        None => None,
    };
    let summary = summarize(&rows, truth.as_deref())?;
    write_summary_csv(&args.out, &summary)?;
    println!("{} groups written to {}", summary.len(), args.out.display());
    Ok(())
}

fn read_grid(path: &Path, n: usize) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .with_context(|| format!("bad number `{t}` in {}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != n * n {
        bail!("{} holds {} values, expected {}", path.display(), values.len(), n * n);
    }
    Ok(values)
}

fn solve(args: SolveArgs) -> Result<()> {
    let grid = GridSpec::new(args.n)?;
    let k = if let Some(path) = &args.log_field {
        PermeabilityField::from_log(&read_grid(path, args.n)?)?
    } else if let Some(p) = &args.layered {
        layered_permeability(&LayeredParams::from_raw(p)?, &grid)?
    } else {
        PermeabilityField::constant(grid.cells(), args.k.unwrap_or(1.0))?
    };
    let pressure = solve_pressure(&k, &grid)?;
    let spec = ObservationOperatorSpec {
        sigma: args.sigma,
        ..Default::default()
    };
    let obs = ObservationOperator::new(&grid, &spec)?.apply(pressure.values())?;
    if let Some(out) = &args.out {
        write_field_csv(out, pressure.values(), args.n)?;
    }
    for (loc, v) in spec.locations.iter().zip(&obs) {
        println!("{:.2},{:.2},{v:.10e}", loc[0], loc[1]);
    }
    Ok(())
}

fn gen_prior(args: PriorArgs) -> Result<()> {
    let cfg = load(&args.config)?;
    if args.members == 0 {
        bail!("--members must be positive");
    }
    let setup = TwinSetup::prepare(&cfg)?;
    let prior = setup.sample_prior(setup.prior_seed(args.members, args.replicate), args.members)?;
    write_ensemble_csv(&args.out, &setup.report(&prior)?)?;
    println!(
        "{} members of dimension {} written to {}",
        args.members,
        prior.dim(),
        args.out.display()
    );
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(a) => run(a),
        Command::ReferenceIs(a) => reference(a),
        Command::SweepLoc(a) => sweep(a),
        Command::Summarize(a) => summarize_cmd(a),
        Command::SolveDarcy(a) => solve(a),
        Command::GenPrior(a) => gen_prior(a),
    }
}
