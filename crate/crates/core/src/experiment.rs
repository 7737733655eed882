//! The width x depth sweep.
//!
//! For every `(width, depth)` cell the runner trains `restarts` networks from
//! independent seeds, scores each by its maximum absolute error on the test
//! grid and keeps the best. The grid maximum is a lower bound on the true
//! sup-norm error over the domain; it is what gets reported.
//!
//! Seeds come from [`derive_seed`], so a restart's result depends only on the
//! configuration and its own coordinates, never on scheduling. That is what
//! makes parallel execution and resume-from-checkpoint reproducible.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::format_sig;
use crate::functions::{self, TestFunction};
use crate::network::{LayerStack, NetworkParameters, NetworkSpec};
use crate::optimizer::{train_epochs, AdamConfig};
use crate::sampling::{build_dataset, build_dataset_with, Dataset};

/// Significant digits used for error values in emitted tables.
pub const TABLE_DIGITS: usize = 9;

/// Grid resolution of the `fig_<name>.dat` surface written next to sweeps.
pub const DEFAULT_SURFACE_K: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub function: String,
    pub train_k: usize,
    pub test_k: usize,
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub restarts: usize,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub master_seed: u64,
    pub normalize: bool,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            function: "ackley".into(),
            train_k: 320,
            test_k: 1000,
            widths: (1..=10).collect(),
            depths: (1..=10).collect(),
            restarts: 200,
            adam: AdamConfig::default(),
            epochs: 400,
            batch_size: 1024,
            master_seed: 0,
            normalize: true,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        functions::lookup(&self.function)?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.train_k < 2 || self.test_k < 2 {
            return bad(format!(
                "train_k and test_k must be >= 2 (got {}, {})",
                self.train_k, self.test_k
            ));
        }
        if self.restarts == 0 {
            return bad("restarts must be >= 1".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be >= 1".into());
        }
        for (name, list) in [("widths", &self.widths), ("depths", &self.depths)] {
            if list.is_empty() {
                return bad(format!("{name} must be nonempty"));
            }
            if list.contains(&0) {
                return bad(format!("{name} entries must be >= 1"));
            }
            let mut sorted = list.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != list.len() {
                return bad(format!("{name} contains duplicates"));
            }
        }
        self.adam.validate()
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        functions::lookup(&self.function)
    }

    pub fn error_table_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.dat", self.function))
    }

    pub fn surface_path(&self) -> PathBuf {
        self.output_dir.join(format!("fig_{}.dat", self.function))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.output_dir.join(format!("{}.checkpoint", self.function))
    }

    /// Cells in emission order: widths outer, depths inner, as configured.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        self.widths
            .iter()
            .flat_map(|&w| self.depths.iter().map(move |&d| (w, d)))
            .collect()
    }

    /// The part of the configuration that determines results.
    fn fingerprint(&self) -> ExperimentConfig {
        ExperimentConfig {
            output_dir: PathBuf::new(),
            ..self.clone()
        }
    }
}

const SEED_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xCBF2_9CE4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Seed of one training run.
///
/// The tuple is absorbed field by field into a 64-bit state with
/// `h = mix((h + GAMMA) ^ field)`, starting from `h = mix(master_seed)`,
/// in the order function, width, depth, restart. `mix` is the SplitMix64
/// finalizer, `GAMMA = 0x9E3779B97F4A7C15`, and the function name enters as
/// its 64-bit FNV-1a hash. Both steps are bijections of the field for a fixed
/// state, so tuples differing in a single field never collide. Only
/// wrapping integer arithmetic is involved, so the value is the same on every
/// platform.
pub fn derive_seed(master_seed: u64, function: &str, width: usize, depth: usize, restart: usize) -> u64 {
    let absorb = |h: u64, field: u64| splitmix_finalize(h.wrapping_add(SEED_GAMMA) ^ field);
    let mut h = splitmix_finalize(master_seed);
    h = absorb(h, fnv1a64(function.as_bytes()));
    h = absorb(h, width as u64);
    h = absorb(h, depth as u64);
    absorb(h, restart as u64)
}

/// Largest absolute deviation between network and targets over the points.
///
/// Any non-finite output makes the error `+inf`.
pub fn sup_error<P: AsRef<[f64]>>(params: &NetworkParameters, inputs: &[P], targets: &[f64]) -> f64 {
    assert_eq!(inputs.len(), targets.len(), "inputs and targets differ in length");
    params
        .predict(inputs)
        .iter()
        .zip(targets)
        .map(|(o, t)| (o - t).abs())
        .fold(0.0, |worst: f64, e| if e.is_nan() { f64::INFINITY } else { worst.max(e) })
}

/// Best-of-restarts outcome for one `(width, depth)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub width: usize,
    pub depth: usize,
    #[serde(with = "nonfinite_as_null")]
    pub best_error: f64,
    pub best_restart_index: usize,
    #[serde(with = "nonfinite_as_null::vec")]
    pub per_restart_errors: Vec<f64>,
    /// Restarts whose training produced non-finite parameters or outputs.
    #[serde(default)]
    pub diverged: Vec<usize>,
}

impl CellResult {
    /// Summarize per-restart errors: the minimum, first index on ties.
    pub fn from_restarts(width: usize, depth: usize, errors: Vec<f64>, diverged: Vec<usize>) -> Self {
        let (best_restart_index, best_error) = errors
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, be), (i, e)| if e < be { (i, e) } else { (bi, be) });
        CellResult {
            width,
            depth,
            best_error,
            best_restart_index,
            per_restart_errors: errors,
            diverged,
        }
    }
}

/// One trained restart.
#[derive(Debug, Clone)]
pub struct RestartOutcome {
    pub params: NetworkParameters,
    pub error: f64,
    pub diverged: bool,
}

/// Training and test data for one function, shared by every cell.
#[derive(Debug, Clone)]
pub struct Problem {
    pub function: TestFunction,
    pub train: Dataset,
    pub test: Dataset,
}

impl Problem {
    pub fn new(function: TestFunction, config: &ExperimentConfig) -> Result<Self> {
        let train = build_dataset(&function, config.train_k, config.normalize)?;
        let test = build_dataset_with(&function, config.test_k, train.norm)?;
        Ok(Problem {
            function,
            train,
            test,
        })
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Self::new(config.test_function()?, config)
    }

    /// Train restart `restart` of cell `(width, depth)` and score it.
    pub fn train_restart(
        &self,
        config: &ExperimentConfig,
        width: usize,
        depth: usize,
        restart: usize,
    ) -> Result<RestartOutcome> {
        let spec = NetworkSpec::planar(width, depth)?;
        let seed = derive_seed(config.master_seed, self.function.name, width, depth, restart);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let init = NetworkParameters::init(spec, &mut rng)?;
        let (params, _) = train_epochs(
            init,
            &self.train,
            &config.adam,
            config.epochs,
            config.batch_size,
            &mut rng,
        )?;
        let error = if params.all_finite() {
            sup_error(&params, &self.test.inputs, &self.test.targets)
        } else {
            f64::INFINITY
        };
        let diverged = !error.is_finite();
        Ok(RestartOutcome {
            params,
            error: if diverged { f64::INFINITY } else { error },
            diverged,
        })
    }

    /// All restarts of one cell, run on the current rayon pool.
    pub fn run_cell(&self, config: &ExperimentConfig, width: usize, depth: usize) -> Result<CellResult> {
        let outcomes = (0..config.restarts)
            .into_par_iter()
            .map(|r| self.train_restart(config, width, depth, r).map(|o| (o.error, o.diverged)))
            .collect::<Result<Vec<_>>>()?;
        let diverged = outcomes
            .iter()
            .enumerate()
            .filter_map(|(i, &(_, d))| d.then_some(i))
            .collect();
        let errors = outcomes.into_iter().map(|(e, _)| e).collect();
        Ok(CellResult::from_restarts(width, depth, errors, diverged))
    }
}

/// Run every restart of one cell for `f`.
pub fn run_cell(f: &TestFunction, width: usize, depth: usize, config: &ExperimentConfig) -> Result<CellResult> {
    config.validate()?;
    Problem::new(*f, config)?.run_cell(config, width, depth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub function: String,
    pub config: ExperimentConfig,
    pub cells: Vec<CellResult>,
}

impl SweepResult {
    pub fn cell(&self, width: usize, depth: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.width == width && c.depth == depth)
    }

    /// Smallest best error over all depths at `width`.
    pub fn best_over_depths(&self, width: usize) -> Option<f64> {
        self.cells
            .iter()
            .filter(|c| c.width == width)
            .map(|c| c.best_error)
            .reduce(f64::min)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum CheckpointRecord {
    Header {
        version: u32,
        config: ExperimentConfig,
    },
    Cell {
        function: String,
        #[serde(flatten)]
        result: CellResult,
    },
}

const CHECKPOINT_VERSION: u32 = 1;

/// Append-only log of completed cells.
///
/// The first line is a header record holding the result-relevant part of the
/// configuration; every following line is one completed cell. Each record is
/// a single JSON object terminated by a newline and written with one
/// `write_all`, then synced.
#[derive(Debug)]
pub struct Checkpoint {
    path: PathBuf,
    file: File,
}

impl Checkpoint {
    /// Start a fresh log, replacing any existing one.
    pub fn create(path: &Path, config: &ExperimentConfig) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut cp = Checkpoint {
            path: path.to_path_buf(),
            file,
        };
        cp.append(&CheckpointRecord::Header {
            version: CHECKPOINT_VERSION,
            config: config.fingerprint(),
        })?;
        Ok(cp)
    }

    /// Reopen an existing log, returning the cells it already holds.
    ///
    /// A torn final record (no trailing newline) is discarded.
    pub fn open(path: &Path, config: &ExperimentConfig) -> Result<(Self, Vec<CellResult>)> {
        let io = |e| Error::io(path, e);
        let mut file = OpenOptions::new().read(true).write(true).open(path).map_err(io)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(io)?;
        let complete_len = text.rfind('\n').map_or(0, |i| i + 1);
        if complete_len < text.len() {
            file.set_len(complete_len as u64).map_err(io)?;
            text.truncate(complete_len);
        }
        file.seek(SeekFrom::End(0)).map_err(io)?;

        let mismatch = |reason: String| Error::CheckpointMismatch {
            path: path.to_path_buf(),
            reason,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, line)) => match serde_json::from_str::<CheckpointRecord>(line) {
                Ok(CheckpointRecord::Header { version, config: saved }) => {
                    if version != CHECKPOINT_VERSION {
                        return Err(mismatch(format!("unsupported version {version}")));
                    }
                    if saved != config.fingerprint() {
                        return Err(mismatch("configuration differs from the one that started the sweep".into()));
                    }
                }
                _ => return Err(mismatch("missing header record".into())),
            },
            None => return Err(mismatch("empty checkpoint".into())),
        }

        let mut cells = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<CheckpointRecord>(line) {
                Ok(CheckpointRecord::Cell { function, result }) if function == config.function => {
                    cells.push(result)
                }
                Ok(_) => return Err(mismatch(format!("unexpected record on line {}", i + 1))),
                Err(e) => {
                    return Err(Error::Parse {
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Ok((
            Checkpoint {
                path: path.to_path_buf(),
                file,
            },
            cells,
        ))
    }

    fn append(&mut self, record: &CheckpointRecord) -> Result<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }

    pub fn record_cell(&mut self, function: &str, cell: &CellResult) -> Result<()> {
        self.append(&CheckpointRecord::Cell {
            function: function.to_string(),
            result: cell.clone(),
        })
    }
}

/// Knobs for [`run_sweep_with`] that do not affect results.
#[derive(Default)]
pub struct SweepOptions<'a> {
    /// Worker threads; `None` uses one per core.
    pub parallelism: Option<usize>,
    /// Continue from an existing checkpoint instead of starting over.
    pub resume: bool,
    /// Stop with [`Error::Interrupted`] once this many new cells are logged.
    pub stop_after: Option<usize>,
    /// Called after each cell is checkpointed.
    pub on_cell: Option<&'a (dyn Fn(&CellResult) + Sync)>,
}

/// Run the full sweep with default options, starting from scratch.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    run_sweep_with(config, &SweepOptions::default())
}

/// Run (or resume) a sweep, checkpointing each cell and writing the error
/// table once every cell is done.
pub fn run_sweep_with(config: &ExperimentConfig, options: &SweepOptions<'_>) -> Result<SweepResult> {
    let problem = Problem::from_config(config)?;
    fs::create_dir_all(&config.output_dir).map_err(|e| Error::io(&config.output_dir, e))?;
    let cp_path = config.checkpoint_path();

    let (checkpoint, done) = if options.resume && cp_path.exists() {
        Checkpoint::open(&cp_path, config)?
    } else {
        (Checkpoint::create(&cp_path, config)?, Vec::new())
    };

    let mut results: BTreeMap<(usize, usize), CellResult> = BTreeMap::new();
    for cell in done {
        results.entry((cell.width, cell.depth)).or_insert(cell);
    }
    let pending: Vec<(usize, usize)> = config
        .cells()
        .into_iter()
        .filter(|key| !results.contains_key(key))
        .collect();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.parallelism {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;

    let checkpoint = Mutex::new(checkpoint);
    let fresh = Mutex::new(Vec::new());
    let logged = AtomicUsize::new(0);
    let outcome = pool.install(|| {
        pending.par_iter().try_for_each(|&(w, d)| {
            if options.stop_after.is_some_and(|n| logged.load(Ordering::SeqCst) >= n) {
                return Err(Error::Interrupted {
                    completed: logged.load(Ordering::SeqCst),
                });
            }
            let cell = problem.run_cell(config, w, d)?;
            {
                let mut cp = checkpoint.lock().expect("checkpoint lock poisoned");
                if options.stop_after.is_some_and(|n| logged.load(Ordering::SeqCst) >= n) {
                    return Err(Error::Interrupted {
                        completed: logged.load(Ordering::SeqCst),
                    });
                }
                cp.record_cell(&config.function, &cell)?;
                logged.fetch_add(1, Ordering::SeqCst);
            }
            if let Some(cb) = options.on_cell {
                cb(&cell);
            }
            fresh.lock().expect("result lock poisoned").push(cell);
            Ok(())
        })
    });
    outcome?;

    for cell in fresh.into_inner().expect("result lock poisoned") {
        results.insert((cell.width, cell.depth), cell);
    }
    let cells = config
        .cells()
        .into_iter()
        .map(|key| results.remove(&key).expect("every cell was run or restored"))
        .collect();
    let sweep = SweepResult {
        function: config.function.clone(),
        config: config.clone(),
        cells,
    };
    emit_error_table(&sweep, &config.error_table_path())?;
    Ok(sweep)
}

/// Render the error table: a `depth width_<w> ...` header, then one row per
/// depth in ascending order with errors to [`TABLE_DIGITS`] significant
/// digits.
pub fn error_table_text(sweep: &SweepResult) -> String {
    let mut widths: Vec<usize> = sweep.cells.iter().map(|c| c.width).collect();
    widths.sort_unstable();
    widths.dedup();
    let mut depths: Vec<usize> = sweep.cells.iter().map(|c| c.depth).collect();
    depths.sort_unstable();
    depths.dedup();

    let mut out = String::from("depth");
    for w in &widths {
        out.push_str(&format!(" width_{w}"));
    }
    out.push('\n');
    for &d in &depths {
        out.push_str(&d.to_string());
        for &w in &widths {
            let v = sweep.cell(w, d).map_or(f64::NAN, |c| c.best_error);
            out.push(' ');
            out.push_str(&format_sig(v, TABLE_DIGITS));
        }
        out.push('\n');
    }
    out
}

pub fn emit_error_table(sweep: &SweepResult, path: &Path) -> Result<()> {
    fs::write(path, error_table_text(sweep)).map_err(|e| Error::io(path, e))
}

/// Parsed form of an emitted error table.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    /// `errors[row][col]` is the error at `depths[row]`, `widths[col]`.
    pub errors: Vec<Vec<f64>>,
}

impl ErrorTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (n, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let mut cols = header.split_whitespace();
        if cols.next() != Some("depth") {
            return Err(Error::Parse {
                line: n,
                message: "header must start with `depth`".into(),
            });
        }
        let widths = cols
            .map(|c| {
                c.strip_prefix("width_")
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| Error::Parse {
                        line: n,
                        message: format!("bad column `{c}`"),
                    })
            })
            .collect::<Result<Vec<usize>>>()?;

        let mut depths = Vec::new();
        let mut errors = Vec::new();
        for (n, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != widths.len() + 1 {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected {} columns, got {}", widths.len() + 1, fields.len()),
                });
            }
            let bad = |f: &str| Error::Parse {
                line: n,
                message: format!("bad number `{f}`"),
            };
            depths.push(fields[0].parse::<usize>().map_err(|_| bad(fields[0]))?);
            errors.push(
                fields[1..]
                    .iter()
                    .map(|f| f.parse::<f64>().map_err(|_| bad(f)))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        Ok(ErrorTable {
            widths,
            depths,
            errors,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn get(&self, width: usize, depth: usize) -> Option<f64> {
        let c = self.widths.iter().position(|&w| w == width)?;
        let r = self.depths.iter().position(|&d| d == depth)?;
        Some(self.errors[r][c])
    }
}

/// Render `x y f(x, y)` rows over the `k x k` grid, one blank line between
/// consecutive x scanlines. Values are raw function values.
pub fn surface_text(f: &TestFunction, k: usize) -> Result<String> {
    let points = crate::sampling::grid(&f.domain, k)?;
    let mut out = String::with_capacity(points.len() * 32);
    for (i, p) in points.iter().enumerate() {
        if i > 0 && i % k == 0 {
            out.push('\n');
        }
        let v = f.eval(p[0], p[1])?;
        out.push_str(&format!(
            "{} {} {}\n",
            format_sig(p[0], TABLE_DIGITS),
            format_sig(p[1], TABLE_DIGITS),
            format_sig(v, TABLE_DIGITS)
        ));
    }
    Ok(out)
}

pub fn emit_surface(f: &TestFunction, k: usize, path: &Path) -> Result<()> {
    let text = surface_text(f, k)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// JSON has no infinities; divergent errors are stored as `null`.
mod nonfinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&x.is_finite().then_some(*x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            Ok(Vec::<Option<f64>>::deserialize(d)?
                .into_iter()
                .map(|x| x.unwrap_or(f64::INFINITY))
                .collect())
        }
    }
}
