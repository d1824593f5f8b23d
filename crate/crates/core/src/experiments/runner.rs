use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{build_augmented_train_set, build_test_set};
use super::spec::{row_label, table1_band, table1_rows, Band, ExperimentSpec, DEFAULT_SEEDS};
use super::summary::{curves_csv, slope, summarize, ResultSummary};
use crate::blocks::{Classifier, ModelConfig, ModelKind};
use crate::error::{DgnError, Result};
use crate::geometry::TransformClass;
use crate::graph::LabeledGraph;
use crate::training::{train, EpochRecord, TrainConfig, TrainRecord};

pub const TABLE1_SCHEMA: &str = "dgn.table1/v1";
pub const SWEEP_SCHEMA: &str = "dgn.sweep/v1";
pub const CELL_SCHEMA: &str = "dgn.cell/v1";
pub const RUN_SCHEMA: &str = "dgn.run/v1";

/// Default augmentation counts of the efficiency sweep.
pub const DEFAULT_SWEEP_COPIES: [usize; 9] = [2, 5, 10, 15, 20, 30, 50, 75, 100];

/// Progress sink; receives one line per finished run.
pub type Progress<'a> = Option<&'a (dyn Fn(&str) + Sync)>;

/// Outcome of one seed of one model: a record scored on every test set, or
/// the error that aborted it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub wall_time_s: f64,
    pub result: std::result::Result<TrainRecord, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

/// One trained-and-scored grid cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub spec: ExperimentSpec,
    /// Completed runs, with `test_acc` restricted to this cell's test set.
    pub records: Vec<TrainRecord>,
    pub wall_times: Vec<f64>,
    pub failures: Vec<RunFailure>,
    pub summary: ResultSummary,
    pub band: Option<Band>,
}

impl CellResult {
    pub fn complete(&self) -> bool {
        self.failures.is_empty() && self.records.len() == self.spec.seeds
    }

    /// `Some(pass)` when the cell carries an acceptance band.
    pub fn verdict(&self) -> Option<bool> {
        self.band.map(|b| self.complete() && b.contains(self.summary.test_mean))
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs {
        if n == 0 {
            return Err(DgnError::Invalid("--jobs must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    b.build().map_err(|e| DgnError::Invalid(format!("cannot start worker pool: {e}")))
}

/// Trains `model` from `seed` and scores it on every test set.
pub fn run_one(
    model: &ModelConfig,
    train_set: &[LabeledGraph],
    test_sets: &[&[LabeledGraph]],
    train_cfg: &TrainConfig,
    seed: u64,
    config_id: &str,
) -> RunOutcome {
    let start = Instant::now();
    let result = Classifier::new(model.clone(), seed)
        .and_then(|m| train(m, train_set, test_sets, train_cfg, seed, config_id))
        .map(|out| out.record)
        .map_err(|e| e.to_string());
    RunOutcome {
        seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        result,
    }
}

fn project(record: &TrainRecord, test_set: usize, spec_id: &str) -> TrainRecord {
    TrainRecord {
        seed: record.seed,
        config_id: spec_id.to_string(),
        epochs: record
            .epochs
            .iter()
            .map(|e| EpochRecord {
                test_acc: vec![e.test_acc.get(test_set).copied().flatten()],
                ..e.clone()
            })
            .collect(),
    }
}

/// Builds the cell for `spec` from runs scored on several test sets, keeping
/// test set `column`.
fn assemble(spec: ExperimentSpec, runs: &[&RunOutcome], column: usize) -> CellResult {
    let id = spec.spec_id();
    let mut records = vec![];
    let mut wall_times = vec![];
    let mut failures = vec![];
    for run in runs {
        match &run.result {
            Ok(r) => {
                records.push(project(r, column, &id));
                wall_times.push(run.wall_time_s);
            }
            Err(e) => failures.push(RunFailure {
                seed: run.seed,
                error: e.clone(),
            }),
        }
    }
    let epochs: Vec<Vec<EpochRecord>> = records.iter().map(|r| r.epochs.clone()).collect();
    let band = table1_band(&spec.model, &spec.class);
    CellResult {
        summary: summarize(&epochs),
        band: if spec.copies == 0 { band } else { None },
        spec,
        records,
        wall_times,
        failures,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Config {
    pub rows: Vec<ModelConfig>,
    pub columns: Vec<TransformClass>,
    pub seeds: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
}

impl Default for Table1Config {
    fn default() -> Self {
        Table1Config {
            rows: table1_rows(),
            columns: TransformClass::table_columns().to_vec(),
            seeds: DEFAULT_SEEDS,
            base_seed: 0,
            train: TrainConfig::default(),
        }
    }
}

impl Table1Config {
    pub fn cell_spec(&self, row: &ModelConfig, column: &TransformClass) -> ExperimentSpec {
        ExperimentSpec {
            model: row.clone(),
            class: *column,
            base_seed: self.base_seed,
            seeds: self.seeds,
            copies: 0,
            train: self.train.clone(),
        }
    }
}

pub struct Table1Result {
    pub config: Table1Config,
    /// Row-major: `cells[r * columns + c]`.
    pub cells: Vec<CellResult>,
}

impl Table1Result {
    pub fn cell(&self, row: usize, column: usize) -> &CellResult {
        &self.cells[row * self.config.columns.len() + column]
    }

    pub fn find(&self, model: &ModelConfig, class: &TransformClass) -> Option<&CellResult> {
        self.cells.iter().find(|c| &c.spec.model == model && &c.spec.class == class)
    }

    /// Per column: is the plain GN row strictly below the SDGN+identity row?
    /// `None` unless both rows are present.
    pub fn gn_dominated_by_sdgn(&self) -> Option<bool> {
        let gn = ModelConfig::gn();
        let sdgn = ModelConfig::sdgn(crate::blocks::CoordinateMap::Identity);
        let mut all = true;
        for class in &self.config.columns {
            let (g, s) = (self.find(&gn, class)?, self.find(&sdgn, class)?);
            all &= g.summary.test_mean < s.summary.test_mean;
        }
        Some(all)
    }
}

/// Trains every row once per seed on the canonical set and scores each run on
/// every column's shared test set.
pub fn run_table1(config: &Table1Config, jobs: Option<usize>, progress: Progress) -> Result<Table1Result> {
    for row in &config.rows {
        row.validate()?;
    }
    let workers = pool(jobs)?;
    let test_sets = config
        .columns
        .iter()
        .map(|c| build_test_set(c, config.base_seed))
        .collect::<Result<Vec<_>>>()?;
    let test_refs: Vec<&[LabeledGraph]> = test_sets.iter().map(Vec::as_slice).collect();
    let train_set = super::data::build_train_set();
    let work: Vec<(usize, u64)> = (0..config.rows.len())
        .flat_map(|r| (0..config.seeds as u64).map(move |k| (r, config.base_seed.wrapping_add(k))))
        .collect();
    let outcomes: Vec<RunOutcome> = workers.install(|| {
        work.par_iter()
            .map(|&(r, seed)| {
                let row = &config.rows[r];
                let out = run_one(row, &train_set, &test_refs, &config.train, seed, &row_label(row));
                if let Some(p) = progress {
                    p(&run_line(&row_label(row), seed, &out));
                }
                out
            })
            .collect()
    });
    let mut cells = vec![];
    for (r, row) in config.rows.iter().enumerate() {
        let runs: Vec<&RunOutcome> = work
            .iter()
            .zip(&outcomes)
            .filter(|((wr, _), _)| *wr == r)
            .map(|(_, o)| o)
            .collect();
        for (c, column) in config.columns.iter().enumerate() {
            cells.push(assemble(config.cell_spec(row, column), &runs, c));
        }
    }
    Ok(Table1Result {
        config: config.clone(),
        cells,
    })
}

fn run_line(label: &str, seed: u64, out: &RunOutcome) -> String {
    match &out.result {
        Ok(r) => format!(
            "{label} seed {seed}: train_acc {} ({:.1}s)",
            r.final_train_acc().unwrap_or(f64::NAN),
            out.wall_time_s
        ),
        Err(e) => format!("{label} seed {seed}: aborted: {e}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub model: ModelConfig,
    pub class: TransformClass,
    pub copies: Vec<usize>,
    pub seeds: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    /// Accuracy the sweep is asked to reach…
    pub target: f64,
    /// …at or below this many copies per polytope.
    pub max_copies_for_target: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            model: ModelConfig::gn(),
            class: TransformClass::orthogonal(),
            copies: DEFAULT_SWEEP_COPIES.to_vec(),
            seeds: DEFAULT_SEEDS,
            base_seed: 0,
            train: TrainConfig::default(),
            target: 0.9,
            max_copies_for_target: 40,
        }
    }
}

impl SweepConfig {
    pub fn point_spec(&self, copies: usize) -> ExperimentSpec {
        ExperimentSpec {
            model: self.model.clone(),
            class: self.class,
            base_seed: self.base_seed,
            seeds: self.seeds,
            copies,
            train: self.train.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub copies: usize,
    pub spec_id: String,
    pub runs: usize,
    pub mean_acc: f64,
    pub std: f64,
}

pub struct SweepResult {
    pub config: SweepConfig,
    pub cells: Vec<CellResult>,
    pub points: Vec<SweepPoint>,
    /// Least-squares slope of mean accuracy against copies.
    pub slope: f64,
}

impl SweepResult {
    /// Smallest swept copy count whose mean reaches the target.
    pub fn first_reaching_target(&self) -> Option<usize> {
        self.points
            .iter()
            .filter(|p| p.mean_acc >= self.config.target)
            .map(|p| p.copies)
            .min()
    }

    pub fn verdict(&self) -> bool {
        self.first_reaching_target()
            .is_some_and(|c| c <= self.config.max_copies_for_target)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("copies,mean_acc,std\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.copies, p.mean_acc, p.std));
        }
        out
    }
}

/// Trains the sweep model on canonical plus `copies` augmented graphs per
/// polytope, for every copy count and seed, scoring on the shared test set.
pub fn run_efficiency_sweep(config: &SweepConfig, jobs: Option<usize>, progress: Progress) -> Result<SweepResult> {
    config.model.validate()?;
    let workers = pool(jobs)?;
    let test_set = build_test_set(&config.class, config.base_seed)?;
    let work: Vec<(usize, u64)> = config
        .copies
        .iter()
        .flat_map(|&c| (0..config.seeds as u64).map(move |k| (c, config.base_seed.wrapping_add(k))))
        .collect();
    let outcomes: Vec<RunOutcome> = workers.install(|| {
        work.par_iter()
            .map(|&(copies, seed)| {
                let label = format!("{} copies={copies}", row_label(&config.model));
                let out = match build_augmented_train_set(&config.class, copies, seed) {
                    Ok(train_set) => run_one(&config.model, &train_set, &[&test_set], &config.train, seed, &label),
                    Err(e) => RunOutcome {
                        seed,
                        wall_time_s: 0.0,
                        result: Err(e.to_string()),
                    },
                };
                if let Some(p) = progress {
                    p(&run_line(&label, seed, &out));
                }
                out
            })
            .collect()
    });
    let mut cells = vec![];
    let mut points = vec![];
    for &copies in &config.copies {
        let runs: Vec<&RunOutcome> = work
            .iter()
            .zip(&outcomes)
            .filter(|((c, _), _)| *c == copies)
            .map(|(_, o)| o)
            .collect();
        let cell = assemble(config.point_spec(copies), &runs, 0);
        points.push(SweepPoint {
            copies,
            spec_id: cell.spec.spec_id(),
            runs: cell.records.len(),
            mean_acc: cell.summary.test_mean,
            std: cell.summary.test_std,
        });
        cells.push(cell);
    }
    let xs: Vec<f64> = points.iter().map(|p| p.copies as f64).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean_acc).collect();
    Ok(SweepResult {
        config: config.clone(),
        slope: slope(&xs, &ys),
        cells,
        points,
    })
}

/// Where experiment artifacts go: `<root>/<spec-id>/run-<seed>.csv` and friends.
#[derive(Debug, Clone)]
pub struct ResultsDir {
    pub root: PathBuf,
}

#[derive(Serialize)]
struct RunSidecar<'a> {
    schema: &'a str,
    spec_id: &'a str,
    spec: &'a ExperimentSpec,
    seed: u64,
    wall_time_s: f64,
    final_train_acc: Option<f64>,
    final_test_acc: Option<f64>,
}

#[derive(Serialize)]
struct CellFile<'a> {
    schema: &'a str,
    spec_id: &'a str,
    spec: &'a ExperimentSpec,
    row: String,
    class: String,
    complete: bool,
    failures: &'a [RunFailure],
    test_mean: f64,
    test_std: f64,
    train_mean: f64,
    train_std: f64,
    final_test_acc: &'a [f64],
    band: Option<Band>,
    pass: Option<bool>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

impl ResultsDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResultsDir { root: root.into() }
    }

    pub fn cell_dir(&self, spec: &ExperimentSpec) -> PathBuf {
        self.root.join(spec.spec_id())
    }

    pub fn run_csv(&self, spec: &ExperimentSpec, seed: u64) -> PathBuf {
        self.cell_dir(spec).join(format!("run-{seed}.csv"))
    }

    /// Writes the spec, every run's CSV and sidecar, the curves and the cell summary.
    pub fn write_cell(&self, cell: &CellResult) -> Result<PathBuf> {
        let dir = self.cell_dir(&cell.spec);
        fs::create_dir_all(&dir)?;
        let id = cell.spec.spec_id();
        write_json(&dir.join("spec.json"), &cell.spec)?;
        for (record, &wall) in cell.records.iter().zip(&cell.wall_times) {
            fs::write(self.run_csv(&cell.spec, record.seed), record.to_csv(0))?;
            write_json(
                &dir.join(format!("run-{}.json", record.seed)),
                &RunSidecar {
                    schema: RUN_SCHEMA,
                    spec_id: &id,
                    spec: &cell.spec,
                    seed: record.seed,
                    wall_time_s: wall,
                    final_train_acc: record.final_train_acc(),
                    final_test_acc: record.final_test_acc(0),
                },
            )?;
        }
        fs::write(dir.join("curves.csv"), curves_csv(&cell.summary.curves))?;
        write_json(
            &dir.join("summary.json"),
            &CellFile {
                schema: CELL_SCHEMA,
                spec_id: &id,
                spec: &cell.spec,
                row: row_label(&cell.spec.model),
                class: cell.spec.class.tag(),
                complete: cell.complete(),
                failures: &cell.failures,
                test_mean: cell.summary.test_mean,
                test_std: cell.summary.test_std,
                train_mean: cell.summary.train_mean,
                train_std: cell.summary.train_std,
                final_test_acc: &cell.summary.final_test_acc,
                band: cell.band,
                pass: cell.verdict(),
            },
        )?;
        Ok(dir)
    }

    /// Re-reads a cell's run CSVs and recomputes its summary.
    pub fn reload_summary(&self, spec: &ExperimentSpec) -> Result<ResultSummary> {
        let records = spec
            .run_seeds()
            .filter_map(|seed| {
                let path = self.run_csv(spec, seed);
                path.exists().then_some((seed, path))
            })
            .map(|(seed, path)| {
                let text = fs::read_to_string(&path)?;
                TrainRecord::parse_csv(&text)
                    .ok_or_else(|| DgnError::Invalid(format!("malformed record for seed {seed}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(summarize(&records))
    }

    pub fn write_table1(&self, result: &Table1Result) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Row {
            model: String,
            class: String,
            spec_id: String,
            runs: usize,
            complete: bool,
            train_mean: f64,
            test_mean: f64,
            test_std: f64,
            band: Option<Band>,
            pass: Option<bool>,
        }
        #[derive(Serialize)]
        struct Table1File<'a> {
            schema: &'a str,
            config: &'a Table1Config,
            cells: Vec<Row>,
            gn_dominated_by_sdgn: Option<bool>,
            all_pass: bool,
        }
        let mut csv = String::from("model,family,mu,spec_id,runs,train_acc_mean,test_acc_mean,test_acc_std,verdict\n");
        let mut rows = vec![];
        for cell in &result.cells {
            self.write_cell(cell)?;
            let verdict = match cell.verdict() {
                Some(true) => "pass",
                Some(false) => "fail",
                None => "",
            };
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                row_label(&cell.spec.model),
                cell.spec.class.family,
                cell.spec.class.mu,
                cell.spec.spec_id(),
                cell.records.len(),
                cell.summary.train_mean,
                cell.summary.test_mean,
                cell.summary.test_std,
                verdict
            ));
            rows.push(Row {
                model: row_label(&cell.spec.model),
                class: cell.spec.class.tag(),
                spec_id: cell.spec.spec_id(),
                runs: cell.records.len(),
                complete: cell.complete(),
                train_mean: cell.summary.train_mean,
                test_mean: cell.summary.test_mean,
                test_std: cell.summary.test_std,
                band: cell.band,
                pass: cell.verdict(),
            });
        }
        let dominated = result.gn_dominated_by_sdgn();
        let all_pass = rows.iter().all(|r| r.pass != Some(false)) && dominated != Some(false);
        let dir = self.root.join("table1");
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("table1.csv"), csv)?;
        write_json(
            &dir.join("summary.json"),
            &Table1File {
                schema: TABLE1_SCHEMA,
                config: &result.config,
                cells: rows,
                gn_dominated_by_sdgn: dominated,
                all_pass,
            },
        )?;
        Ok(dir)
    }

    pub fn write_sweep(&self, result: &SweepResult) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct SweepFile<'a> {
            schema: &'a str,
            config: &'a SweepConfig,
            points: &'a [SweepPoint],
            slope: f64,
            first_reaching_target: Option<usize>,
            pass: bool,
        }
        for cell in &result.cells {
            self.write_cell(cell)?;
        }
        let dir = self.root.join(format!(
            "sweep-{}-{}",
            row_label(&result.config.model).replace('+', "-"),
            result.config.class.tag()
        ));
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("sweep.csv"), result.to_csv())?;
        write_json(
            &dir.join("summary.json"),
            &SweepFile {
                schema: SWEEP_SCHEMA,
                config: &result.config,
                points: &result.points,
                slope: result.slope,
                first_reaching_target: result.first_reaching_target(),
                pass: result.verdict(),
            },
        )?;
        Ok(dir)
    }
}

/// Whether a model kind is expected to be exactly invariant to a transform class.
pub fn expected_invariant(kind: ModelKind, class: &TransformClass) -> bool {
    use crate::geometry::TransformFamily::*;
    matches!(
        (kind, class.family),
        (ModelKind::Dgn, Orthogonal) | (ModelKind::Sdgn, Orthogonal | OrthogonalDilation)
    )
}
