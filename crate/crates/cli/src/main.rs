//! `dgn`: dataset generation, training, evaluation and the paper-scale
//! experiments from the command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 training
//! aborted on a non-finite loss.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use dgn::blocks::{Checkpoint, Classifier, CoordinateMap, ModelConfig, ModelKind};
use dgn::experiments::{
    audit_equivariance, build_augmented_train_set, build_test_set, build_test_set_sized, build_train_set,
    from_dataset_file, row_label, run_efficiency_sweep, run_table1, table1_rows, to_dataset_file, ExperimentSpec,
    ResultsDir, SweepConfig, Table1Config, AUDIT_SCHEMA, DEFAULT_SWEEP_COPIES, RUN_SCHEMA,
};
use dgn::geometry::{DatasetFile, TransformClass, TransformFamily};
use dgn::training::{evaluate, train, AdamConfig, TrainConfig, DEFAULT_EPOCHS};
use dgn::DgnError;

#[derive(Parser, Debug)]
#[command(name = "dgn", version, about = "Distance-preserving graph networks on polytope classification")]
struct Cli {
    /// Root directory for experiment outputs.
    #[arg(long, global = true, env = "DGN_RESULTS_DIR", default_value = "results")]
    results_dir: PathBuf,

    /// Worker threads for multi-run commands (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Print per-run progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a dataset of transformed (or canonical) polytopes as JSON.
    Generate(GenerateArgs),
    /// Train one model and write its checkpoint and training record.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset file or a generated test set.
    Evaluate(EvaluateArgs),
    /// Reproduce the model × transform results grid.
    Table1(Table1Args),
    /// Test accuracy against number of augmented copies per polytope.
    Sweep(SweepArgs),
    /// Measure invariance/equivariance defects under sampled transforms.
    Audit(AuditArgs),
}

#[derive(Args, Debug, Clone)]
struct ClassArgs {
    /// orthogonal | orthogonal_dilation | non_orthogonal
    #[arg(long, default_value = "orthogonal")]
    family: TransformFamily,
    /// Expected orthogonality defect (non_orthogonal only).
    #[arg(long, default_value_t = 0.0)]
    mu: f64,
}

impl ClassArgs {
    fn class(&self) -> Result<TransformClass, DgnError> {
        TransformClass::new(self.family, self.mu)
    }
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// sdgn | dgn | gn
    #[arg(long, default_value = "sdgn")]
    block: ModelKind,
    /// identity | weighted_displacement (sdgn/dgn; defaults to identity)
    #[arg(long)]
    map: Option<CoordinateMap>,
    /// Maximum edge length after the scaling layer (sdgn only).
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

impl ModelArgs {
    fn config(&self) -> Result<ModelConfig, DgnError> {
        let map = match (self.block, self.map) {
            (ModelKind::Gn, m) => m,
            (_, None) => Some(CoordinateMap::Identity),
            (_, m) => m,
        };
        let c = ModelConfig::new(self.block, map)?.with_alpha(self.alpha);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args, Debug, Clone)]
struct TrainingArgs {
    #[arg(long, default_value_t = DEFAULT_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Score test sets every N epochs (and always after the last one).
    #[arg(long, default_value_t = 1)]
    eval_every: usize,
}

impl TrainingArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            adam: AdamConfig {
                lr: self.lr,
                ..AdamConfig::default()
            },
            eval_every: self.eval_every,
        }
    }
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    class: ClassArgs,
    /// Write the five untransformed polytopes instead.
    #[arg(long, conflicts_with_all = ["family", "mu", "count"])]
    canonical: bool,
    #[arg(long, default_value_t = 500)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Class of the generated test set and of augmentation copies.
    #[command(flatten)]
    class: ClassArgs,
    #[command(flatten)]
    training: TrainingArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Transformed copies per polytope added to the training set.
    #[arg(long, default_value_t = 0)]
    copies: usize,
    /// Training dataset file (default: canonical polytopes plus copies).
    #[arg(long)]
    train_data: Option<PathBuf>,
    /// Test dataset file (default: the 500-graph set of the class).
    #[arg(long)]
    test_data: Option<PathBuf>,
    /// Output directory (default: <results-dir>/<spec-id>).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset file; when absent a test set of the class is generated.
    #[arg(long)]
    data: Option<PathBuf>,
    #[command(flatten)]
    class: ClassArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct Table1Args {
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// Base seed: shared test sets and the first run's initialisation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: SweepModelArgs,
    #[command(flatten)]
    class: ClassArgs,
    #[command(flatten)]
    training: TrainingArgs,
    /// Comma-separated copy counts.
    #[arg(long, value_delimiter = ',', conflicts_with = "full_range")]
    copies: Option<Vec<usize>>,
    /// Sweep every copy count from 2 to 100.
    #[arg(long)]
    full_range: bool,
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Clone)]
struct SweepModelArgs {
    /// sdgn | dgn | gn
    #[arg(long, default_value = "gn")]
    block: ModelKind,
    #[arg(long)]
    map: Option<CoordinateMap>,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    class: ClassArgs,
    /// Audit a trained checkpoint instead of a fresh model.
    #[arg(long, conflicts_with_all = ["block", "map", "alpha"])]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    transforms: usize,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

enum Failure {
    Usage(String),
    NonFinite(String),
    Runtime(String),
}

impl From<DgnError> for Failure {
    fn from(e: DgnError) -> Self {
        match e {
            DgnError::Invalid(_) => Failure::Usage(e.to_string()),
            DgnError::NonFinite { .. } => Failure::NonFinite(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train_cmd(&cli, a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Table1(a) => table1(&cli, a),
        Command::Sweep(a) => sweep(&cli, a),
        Command::Audit(a) => audit(&cli, a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::NonFinite(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn write_json(path: &Path, value: &Value) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn progress(cli: &Cli) -> Option<&'static (dyn Fn(&str) + Sync)> {
    fn log(line: &str) {
        eprintln!("{line}");
    }
    cli.verbose.then_some(&log as &(dyn Fn(&str) + Sync))
}

fn generate(a: &GenerateArgs) -> CliResult {
    let file = if a.canonical {
        to_dataset_file(&build_train_set(), None, a.seed)
    } else {
        let class = a.class.class()?;
        to_dataset_file(&build_test_set_sized(&class, a.seed, a.count)?, Some(&class), a.seed)
    };
    file.write(&a.out)?;
    println!("wrote {} graphs to {}", file.graphs.len(), a.out.display());
    Ok(())
}

fn read_dataset(path: &Path) -> Result<Vec<dgn::graph::LabeledGraph>, Failure> {
    Ok(from_dataset_file(&DatasetFile::read(path)?)?)
}

fn train_cmd(cli: &Cli, a: &TrainArgs) -> CliResult {
    let model_cfg = a.model.config()?;
    let class = a.class.class()?;
    let train_cfg = a.training.config();
    if train_cfg.eval_every == 0 {
        return Err(Failure::Usage("--eval-every must be at least 1".into()));
    }
    let spec = ExperimentSpec {
        model: model_cfg.clone(),
        class,
        base_seed: a.seed,
        seeds: 1,
        copies: a.copies,
        train: train_cfg.clone(),
    };
    let train_set = match &a.train_data {
        Some(p) => read_dataset(p)?,
        None => build_augmented_train_set(&class, a.copies, a.seed)?,
    };
    let test_set = match &a.test_data {
        Some(p) => read_dataset(p)?,
        None => build_test_set(&class, a.seed)?,
    };
    let spec_id = spec.spec_id();
    let out = a.out.clone().unwrap_or_else(|| cli.results_dir.join(&spec_id));
    fs::create_dir_all(&out)?;
    let resolved = json!({
        "schema": RUN_SCHEMA,
        "command": "train",
        "spec_id": spec_id,
        "spec": spec,
        "seed": a.seed,
        "train_data": a.train_data,
        "test_data": a.test_data,
        "train_graphs": train_set.len(),
        "test_graphs": test_set.len(),
    });
    write_json(&out.join("config.json"), &resolved)?;

    let start = Instant::now();
    let model = Classifier::new(model_cfg, a.seed)?;
    let outcome = train(model, &train_set, &[&test_set], &train_cfg, a.seed, &spec_id)?;
    let wall = start.elapsed().as_secs_f64();
    let record = &outcome.record;
    fs::write(out.join(format!("run-{}.csv", a.seed)), record.to_csv(0))?;
    Checkpoint::from_model(&outcome.model).write(&out.join("checkpoint.json"))?;
    let mut sidecar = resolved;
    sidecar["wall_time_s"] = json!(wall);
    sidecar["final_train_acc"] = json!(record.final_train_acc());
    sidecar["final_test_acc"] = json!(record.final_test_acc(0));
    write_json(&out.join(format!("run-{}.json", a.seed)), &sidecar)?;

    let fmt = |x: Option<f64>| x.map_or_else(|| "n/a".to_string(), |v| v.to_string());
    println!(
        "{} seed {}: train_acc {} test_acc {} ({:.1}s) -> {}",
        row_label(&spec.model),
        a.seed,
        fmt(record.final_train_acc()),
        fmt(record.final_test_acc(0)),
        wall,
        out.display()
    );
    Ok(())
}

fn evaluate_cmd(a: &EvaluateArgs) -> CliResult {
    let model = Checkpoint::read(&a.checkpoint)?.into_model()?;
    let (data, source) = match &a.data {
        Some(p) => (read_dataset(p)?, p.display().to_string()),
        None => {
            let class = a.class.class()?;
            (build_test_set(&class, a.seed)?, class.tag())
        }
    };
    let acc = evaluate(&model, &data)?;
    println!(
        "{}",
        json!({
            "model": row_label(&model.config),
            "data": source,
            "graphs": data.len(),
            "accuracy": acc,
        })
    );
    Ok(())
}

fn table1(cli: &Cli, a: &Table1Args) -> CliResult {
    let config = Table1Config {
        rows: table1_rows(),
        columns: TransformClass::table_columns().to_vec(),
        seeds: a.seeds,
        base_seed: a.seed,
        train: a.training.config(),
    };
    let result = run_table1(&config, cli.jobs, progress(cli))?;
    let dir = ResultsDir::new(&cli.results_dir).write_table1(&result)?;
    println!("{:<28}{}", "model", config.columns.iter().map(|c| format!("{:>22}", c.tag())).collect::<String>());
    for (r, row) in config.rows.iter().enumerate() {
        let mut line = format!("{:<28}", row_label(row));
        for c in 0..config.columns.len() {
            let cell = result.cell(r, c);
            let mark = match cell.verdict() {
                Some(true) => " ok",
                Some(false) => " !!",
                None => "   ",
            };
            line.push_str(&format!(
                "{:>19}{mark}",
                format!("{:.3}±{:.3}", cell.summary.test_mean, cell.summary.test_std)
            ));
        }
        println!("{line}");
    }
    println!("summary: {}", dir.join("summary.json").display());
    Ok(())
}

fn sweep(cli: &Cli, a: &SweepArgs) -> CliResult {
    let model = ModelArgs {
        block: a.model.block,
        map: a.model.map,
        alpha: a.model.alpha,
    }
    .config()?;
    let copies = if a.full_range {
        (2..=100).collect()
    } else {
        a.copies.clone().unwrap_or_else(|| DEFAULT_SWEEP_COPIES.to_vec())
    };
    let config = SweepConfig {
        model,
        class: a.class.class()?,
        copies,
        seeds: a.seeds,
        base_seed: a.seed,
        train: a.training.config(),
        ..SweepConfig::default()
    };
    let result = run_efficiency_sweep(&config, cli.jobs, progress(cli))?;
    let dir = ResultsDir::new(&cli.results_dir).write_sweep(&result)?;
    print!("{}", result.to_csv());
    println!(
        "slope {:.5}; first copies reaching {}: {}; verdict {}",
        result.slope,
        config.target,
        result.first_reaching_target().map_or("none".into(), |c| c.to_string()),
        if result.verdict() { "PASS" } else { "FAIL" }
    );
    println!("summary: {}", dir.join("summary.json").display());
    Ok(())
}

fn audit(cli: &Cli, a: &AuditArgs) -> CliResult {
    let class = a.class.class()?;
    let (model, source) = match &a.checkpoint {
        Some(p) => (Checkpoint::read(p)?.into_model()?, p.display().to_string()),
        None => (Classifier::new(a.model.config()?, a.seed)?, format!("untrained, seed {}", a.seed)),
    };
    let report = audit_equivariance(&model, &class, a.transforms, a.tol, a.seed)?;
    let dir = cli.results_dir.join(format!(
        "audit-{}-{}",
        row_label(&model.config).replace('+', "-"),
        class.tag()
    ));
    write_json(
        &dir.join("summary.json"),
        &json!({
            "schema": AUDIT_SCHEMA,
            "model_config": model.config,
            "source": source,
            "seed": a.seed,
            "report": report,
        }),
    )?;
    let opt = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"));
    println!(
        "{} on {}: logits {:.3e}, coords {}, distances {}, scaling {} -> {}",
        report.model,
        class.tag(),
        report.logit_defect,
        opt(report.coord_defect),
        opt(report.distance_defect),
        opt(report.scaling_defect),
        if report.pass { "PASS" } else { "FAIL" }
    );
    Ok(())
}
