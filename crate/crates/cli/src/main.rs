use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use pcsda_core::dataset::{load_csv, load_features_csv};
use pcsda_core::harness::config::parse_count_list;
use pcsda_core::harness::cv::format_k;
use pcsda_core::harness::{cross_validate, run_experiment, selftest, CvGrid, CvSettings, ExperimentConfig, Objective};
use pcsda_core::subclass::DEFAULT_MAX_ITER;
use pcsda_core::{
    Error, FitConfig, KernelConfig, LabelColumn, Pipeline, Ridge, SigmaRule, Solver, Subclasses, TrainConfig,
};

#[derive(Parser)]
#[command(name = "pcsda", version, about = "Probabilistic class-specific discriminant analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model for one target class and save it as JSON.
    Train(TrainArgs),
    /// Classify rows of a CSV with a saved model.
    Predict(ApplyArgs),
    /// Rank rows of a CSV by distance to the positive class.
    Rank(ApplyArgs),
    /// Cross-validate subspace dimension and subclass count.
    Cv(CvArgs),
    /// Run a configured one-vs-rest experiment.
    Experiment(ExperimentArgs),
    /// Run built-in numerical checks.
    Selftest,
}

#[derive(Args)]
struct DataArgs {
    /// Labeled CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Label column: 1-based index, header name or `last`.
    #[arg(long, default_value = "last")]
    label_col: LabelColumn,
    /// Class treated as positive; every other class is negative.
    #[arg(long)]
    target_class: String,
}

#[derive(Args)]
struct ModelArgs {
    /// Ridge added to the denominator scatter: `auto` or a value.
    #[arg(long, default_value = "auto")]
    ridge: Ridge,
    /// `none` or `rbf`.
    #[arg(long, default_value = "none")]
    kernel: String,
    /// RBF bandwidth: `auto` or a value.
    #[arg(long)]
    sigma: Option<SigmaRule>,
    /// `direct` or `specreg`.
    #[arg(long, default_value = "direct")]
    solver: Solver,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn kernel(&self) -> Result<Option<KernelConfig>, Error> {
        match self.kernel.to_ascii_lowercase().as_str() {
            "none" | "linear" => {
                if self.sigma.is_some() {
                    return Err(Error::config("sigma", "only meaningful with --kernel rbf"));
                }
                Ok(None)
            }
            "rbf" => Ok(Some(KernelConfig::rbf(
                self.sigma.unwrap_or(SigmaRule::MeanPositivePairwise),
            ))),
            other => Err(Error::config("kernel", format!("expected none or rbf, got {other:?}"))),
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Number of negative subclasses, or `all` for one per negative sample.
    #[arg(long, default_value = "1", value_parser = parse_subclasses)]
    k: Subclasses,
    /// Subspace dimension.
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Where to write the model.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ApplyArgs {
    /// Saved model.
    #[arg(long)]
    model: PathBuf,
    /// CSV of samples.
    #[arg(long)]
    data: PathBuf,
    /// Column to drop before applying the model, if the file has labels.
    #[arg(long)]
    label_col: Option<LabelColumn>,
    /// Drop the prior term from the decision score.
    #[arg(long)]
    equiprobable: bool,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Subspace dimensions, e.g. `1-25`.
    #[arg(long, default_value = "1-25")]
    d_grid: String,
    /// Subclass counts, e.g. `5,10,15,20`, or `all`.
    #[arg(long, default_value = "5,10,15,20")]
    k_grid: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    equiprobable: bool,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: PathBuf,
    /// Report file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_subclasses(s: &str) -> Result<Subclasses, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Subclasses::PerSample);
    }
    match s.parse::<usize>() {
        Ok(k) if k > 0 => Ok(Subclasses::Fixed(k)),
        _ => Err(format!("expected a positive count or `all`, got {s:?}")),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Error> {
    match path {
        None => Ok(Box::new(io::stdout().lock())),
        Some(p) => File::create(p).map(|f| Box::new(f) as Box<dyn Write>).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        }),
    }
}

fn write_text(path: Option<&Path>, text: &str) -> Result<(), Error> {
    let mut w = open_output(path)?;
    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|source| Error::Io {
        path: path.map(Path::to_path_buf).unwrap_or_else(|| "<stdout>".into()),
        source,
    })
}

fn train(args: &TrainArgs) -> Result<(), Error> {
    let problem = load_csv(&args.data.data, &args.data.label_col)?.make_class_specific(&args.data.target_class)?;
    let cfg = TrainConfig {
        fit: FitConfig {
            subclasses: args.k,
            dim: args.dim,
            ridge: args.model.ridge,
            seed: args.model.seed,
            max_iter: DEFAULT_MAX_ITER,
            solver: args.model.solver,
        },
        kernel: args.model.kernel()?,
    };
    let pipeline = Pipeline::train(&problem, &cfg)?;
    pipeline.save(&args.out)?;
    info!(
        "trained on {} samples ({} positive), K = {}, d = {}",
        problem.len(),
        problem.positive_count(),
        pipeline.model().k(),
        pipeline.model().dim()
    );
    Ok(())
}

fn predict(args: &ApplyArgs) -> Result<(), Error> {
    let pipeline = Pipeline::load(&args.model)?;
    let (x, _) = load_features_csv(&args.data, args.label_col.as_ref())?;
    let decisions = pipeline.classify(&x, args.equiprobable)?;
    let mut out = String::from("index,g,label\n");
    for (i, d) in decisions.iter().enumerate() {
        out.push_str(&format!("{i},{},{}\n", d.score, d.label));
    }
    write_text(args.out.as_deref(), &out)
}

fn rank(args: &ApplyArgs) -> Result<(), Error> {
    let pipeline = Pipeline::load(&args.model)?;
    let (x, _) = load_features_csv(&args.data, args.label_col.as_ref())?;
    let ranking = pipeline.rank(&x)?;
    let mut out = String::from("rank,index,distance\n");
    for (r, &i) in ranking.order.iter().enumerate() {
        out.push_str(&format!("{},{i},{}\n", r + 1, ranking.distances[i]));
    }
    write_text(args.out.as_deref(), &out)
}

fn cv(args: &CvArgs) -> Result<(), Error> {
    let problem = load_csv(&args.data.data, &args.data.label_col)?.make_class_specific(&args.data.target_class)?;
    let d_values = parse_count_list("d-grid", &args.d_grid)?;
    let k_values = if args.k_grid.trim().eq_ignore_ascii_case("all") {
        vec![Subclasses::PerSample]
    } else {
        parse_count_list("k-grid", &args.k_grid)?
            .into_iter()
            .map(Subclasses::Fixed)
            .collect()
    };
    let grid = CvGrid::new(d_values, k_values, args.folds, args.model.seed)?;
    let settings = CvSettings {
        ridge: args.model.ridge,
        solver: args.model.solver,
        kernel: args.model.kernel()?,
        equiprobable: args.equiprobable,
        max_iter: DEFAULT_MAX_ITER,
    };
    let outcome = cross_validate(&problem, &grid, &settings)?;
    for objective in [Objective::MeanAveragePrecision, Objective::F1] {
        let best = outcome.best(objective);
        eprintln!(
            "best {objective}: d = {}, K = {}, score {:.6}",
            best.d,
            format_k(best.k),
            best.score(objective)
        );
    }
    write_text(args.out.as_deref(), &outcome.to_csv())
}

fn experiment(args: &ExperimentArgs) -> Result<(), Error> {
    let cfg = ExperimentConfig::from_file(&args.config)?;
    let report = run_experiment(&cfg)?;
    eprint!("{}", report.render_timing());
    write_text(args.out.as_deref(), &report.render())
}

fn run_selftest() -> Result<bool, Error> {
    let checks = selftest();
    let mut all = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        all &= c.passed;
    }
    Ok(all)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Predict(a) => predict(a).map(|_| true),
        Command::Rank(a) => rank(a).map(|_| true),
        Command::Cv(a) => cv(a).map(|_| true),
        Command::Experiment(a) => experiment(a).map(|_| true),
        Command::Selftest => run_selftest(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
