//! Experiment harness behind the `deglif` binary: one JSON configuration,
//! a handful of subcommands, and a manifest per invocation recording what
//! was produced.
//!
//! Every command writes into `output_dir`, with one `seed_<s>` directory per
//! seed (and one `<method>_<value>` directory below it per grid value) so
//! parallel runs never share a file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoise::{
    run_pipeline, successive, DenoiseReport, DetectionMethod, PipelineConfig, LAMBDA_GRID, MU_GRID,
};
use crate::error::{Error, Result};
use crate::gcn::GcnConfig;
use crate::graph::{csv_error, generate_sbm, load_graph, write_graph, Graph, SbmSpec};
use crate::influence::SolverSettings;
use crate::noise::{build_transition, inject, CorruptionLedger, NoiseModel, NoiseSpec};
use crate::oracle::leave_one_out;
use crate::stats::{mean, std_dev};

/// Largest graph `oracle` accepts without `force`.
pub const ORACLE_NODE_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// A directory holding `nodes.csv`, `edges.csv` and `splits.json`.
    Dir(PathBuf),
    /// A generated stochastic block model.
    Sbm { spec: SbmSpec, seed: u64 },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            DatasetSource::Dir(dir) => load_graph(dir),
            DatasetSource::Sbm { spec, seed } => generate_sbm(spec, *seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSettings {
    pub model: NoiseModel,
    pub level: f64,
}

/// Training hyperparameters; dimensions and the init seed come from the graph
/// and the run seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub hidden_dim: usize,
    pub l2_reg: f64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        let base = GcnConfig::new(1, 2);
        Self {
            hidden_dim: base.hidden_dim,
            l2_reg: base.l2_reg,
            learning_rate: base.learning_rate,
            epochs: base.epochs,
        }
    }
}

impl ModelSettings {
    pub fn to_config(&self, g: &Graph) -> GcnConfig {
        GcnConfig {
            hidden_dim: self.hidden_dim,
            l2_reg: self.l2_reg,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            ..GcnConfig::for_graph(g)
        }
    }
}

fn default_method() -> DetectionMethod {
    DetectionMethod::Sum { mu: 0.0 }
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_counts() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Corruption applied to the training labels, drawn afresh per seed.
    #[serde(default)]
    pub noise: Option<NoiseSettings>,
    #[serde(default)]
    pub model1: ModelSettings,
    /// Falls back to `model1` when absent.
    #[serde(default)]
    pub model2: Option<ModelSettings>,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default = "default_method")]
    pub method: DetectionMethod,
    /// Threshold values for the method; `run` and `sweep` evaluate each one.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Number of passes for `successive`.
    #[serde(default = "default_counts")]
    pub counts: usize,
    pub output_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub mu: Option<f64>,
    pub lambda: Option<f64>,
    pub noise_level: Option<f64>,
    pub noise_model: Option<NoiseModel>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.line(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if o.mu.is_some() && o.lambda.is_some() {
            return Err(Error::invalid("--mu and --lambda select different detectors; pass one"));
        }
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(mu) = o.mu {
            self.method = DetectionMethod::Sum { mu };
            self.grid = None;
        }
        if let Some(lambda) = o.lambda {
            self.method = DetectionMethod::Mv { lambda };
            self.grid = None;
        }
        if o.noise_level.is_some() || o.noise_model.is_some() {
            let current = self.noise.unwrap_or(NoiseSettings {
                model: NoiseModel::Sln,
                level: 0.0,
            });
            self.noise = Some(NoiseSettings {
                model: o.noise_model.unwrap_or(current.model),
                level: o.noise_level.unwrap_or(current.level),
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds list is empty"));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::invalid("seeds list has duplicates"));
        }
        self.method.validate()?;
        if let Some(grid) = &self.grid {
            if grid.is_empty() {
                return Err(Error::invalid("grid is empty"));
            }
            for &v in grid {
                self.method.with_threshold(v).validate()?;
            }
        }
        if let DatasetSource::Sbm { spec, .. } = &self.dataset {
            spec.validate()?;
        }
        if let Some(n) = &self.noise {
            if !(0.0..1.0).contains(&n.level) {
                return Err(Error::invalid(format!("noise level {} outside [0, 1)", n.level)));
            }
        }
        if self.counts == 0 {
            return Err(Error::invalid("counts must be ≥ 1"));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form with `output_dir` left out, so the
    /// same experiment written to two places hashes identically.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let serde_json::Value::Object(map) = &mut value {
            map.remove("output_dir");
        }
        // serde_json's default map is ordered, so this text is canonical.
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn model2(&self) -> ModelSettings {
        self.model2.unwrap_or(self.model1)
    }

    fn pipeline(&self, g: &Graph, seed: u64) -> PipelineConfig {
        PipelineConfig {
            model1: self.model1.to_config(g),
            model2: self.model2().to_config(g),
            solver: self.solver,
            method: self.method,
        }
        .seeded(seed)
    }

    fn grid_values(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| vec![self.method.threshold()])
    }

    fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed_{seed}"))
    }
}

/// Loads the dataset and, when noise is configured, corrupts it with the
/// seed.
pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<(Graph, Option<CorruptionLedger>)> {
    let g = cfg.dataset.load()?;
    match cfg.noise {
        None => Ok((g, None)),
        Some(n) => {
            let q = build_transition(&NoiseSpec {
                model: n.model,
                level: n.level,
                n_classes: g.n_classes(),
            })?;
            let (noisy, ledger) = inject(&g, &q, seed)?;
            Ok((noisy, Some(ledger)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTime {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub stages: Vec<StageTime>,
    pub artifacts: Vec<PathBuf>,
    pub version: String,
}

impl RunManifest {
    fn new(command: &str, cfg: &ExperimentConfig) -> Self {
        Self {
            command: command.to_string(),
            config_hash: cfg.hash(),
            seeds: cfg.seeds.clone(),
            stages: Vec::new(),
            artifacts: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f();
        self.stages.push(StageTime {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes `manifest.json` into `dir` after checking that every artifact
    /// exists. The manifest itself is appended as the last artifact.
    fn finish(mut self, dir: &Path) -> Result<Self> {
        if let Some(missing) = self.artifacts.iter().find(|p| !p.exists()) {
            return Err(Error::numerical(format!(
                "artifact {} missing at manifest time",
                missing.display()
            )));
        }
        let path = dir.join("manifest.json");
        self.artifacts.push(path.clone());
        write_json(&path, &self)?;
        Ok(self)
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a CSV written by this module back into its row type.
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| Error::parse(path, i + 2, e.to_string())))
        .collect()
}

/// Writes the dataset described by the config (normally an SBM spec) to
/// `output_dir`.
pub fn cmd_gen_sbm(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let mut manifest = RunManifest::new("gen-sbm", cfg);
    let g = manifest.timed("generate", || cfg.dataset.load())?;
    create_dir(&cfg.output_dir)?;
    manifest.timed("write", || write_graph(&g, &cfg.output_dir))?;
    for f in ["nodes.csv", "edges.csv", "splits.json"] {
        manifest.artifacts.push(cfg.output_dir.join(f));
    }
    manifest.finish(&cfg.output_dir)
}

/// Writes one corrupted dataset plus `ledger.csv` per seed.
pub fn cmd_inject(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    if cfg.noise.is_none() {
        return Err(Error::invalid("inject needs a `noise` section or --noise-level"));
    }
    let mut manifest = RunManifest::new("inject", cfg);
    create_dir(&cfg.output_dir)?;
    for &seed in &cfg.seeds {
        let (g, ledger) = manifest.timed(&format!("inject seed {seed}"), || prepare(cfg, seed))?;
        let ledger = ledger.expect("noise configured");
        let dir = cfg.seed_dir(seed);
        create_dir(&dir)?;
        write_graph(&g, &dir)?;
        ledger.write_csv(&g, &dir.join("ledger.csv"))?;
        for f in ["nodes.csv", "edges.csv", "splits.json", "ledger.csv"] {
            manifest.artifacts.push(dir.join(f));
        }
    }
    manifest.finish(&cfg.output_dir)
}

/// One row of `aggregate.csv`: a grid value summarized over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub threshold: f64,
    pub n_seeds: usize,
    pub n_failed: usize,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub mean_model1_test_acc: f64,
    pub mean_val_acc: f64,
    pub mean_flagged: f64,
    pub mean_noise_frac_before: Option<f64>,
    pub mean_noise_frac_after: Option<f64>,
}

/// One row of `runs.csv`: a single (grid value, seed) pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub threshold: f64,
    pub seed: u64,
    pub ok: bool,
    pub test_acc: Option<f64>,
    pub val_acc: Option<f64>,
    pub n_flagged: Option<usize>,
    pub noise_frac_after: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: String,
    pub selected: f64,
    pub by: String,
}

/// Outcome of `run` or `sweep`.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub manifest: RunManifest,
    pub aggregate: Vec<AggregateRow>,
    pub runs: Vec<RunRow>,
    pub reports: BTreeMap<(u64, u64), DenoiseReport>,
}

fn mean_of(xs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(&v))
}

fn run_grid(cfg: &ExperimentConfig, command: &str, grid: &[f64]) -> Result<GridOutcome> {
    cfg.validate()?;
    let mut manifest = RunManifest::new(command, cfg);
    create_dir(&cfg.output_dir)?;
    let prepared: Vec<(u64, Result<(Graph, Option<CorruptionLedger>)>)> = manifest.timed("prepare", || {
        Ok(cfg.seeds.iter().map(|&s| (s, prepare(cfg, s))).collect())
    })?;
    let jobs: Vec<(f64, usize)> = grid
        .iter()
        .flat_map(|&v| (0..prepared.len()).map(move |i| (v, i)))
        .collect();
    let single = grid.len() == 1 && cfg.grid.is_none();
    let results: Vec<(f64, u64, Result<(DenoiseReport, PathBuf)>)> = manifest.timed("pipeline", || {
        Ok(jobs
            .par_iter()
            .map(|&(value, i)| {
                let (seed, data) = &prepared[i];
                let out = (|| {
                    let (g, ledger) = data.as_ref().map_err(|e| Error::invalid(e.to_string()))?;
                    let mut pc = cfg.pipeline(g, *seed);
                    pc.method = pc.method.with_threshold(value);
                    let dir = if single {
                        cfg.seed_dir(*seed)
                    } else {
                        cfg.seed_dir(*seed).join(format!("{}_{value}", pc.method.name()))
                    };
                    create_dir(&dir)?;
                    let outcome = run_pipeline(g, &pc, ledger.as_ref())?;
                    let path = dir.join("report.json");
                    write_json(&path, &outcome.report)?;
                    Ok((outcome.report, path))
                })();
                (value, *seed, out)
            })
            .collect())
    })?;

    let mut runs = Vec::with_capacity(results.len());
    let mut reports = BTreeMap::new();
    for (value, seed, res) in results {
        match res {
            Ok((rep, path)) => {
                let m = &rep.metrics;
                runs.push(RunRow {
                    threshold: value,
                    seed,
                    ok: true,
                    test_acc: Some(m.model2_test_acc),
                    val_acc: Some(m.model2_val_acc),
                    n_flagged: Some(rep.d_n.len()),
                    noise_frac_after: m.noise_frac_after,
                    error: None,
                });
                manifest.artifacts.push(path);
                reports.insert((value.to_bits(), seed), rep);
            }
            Err(e) => runs.push(RunRow {
                threshold: value,
                seed,
                ok: false,
                test_acc: None,
                val_acc: None,
                n_flagged: None,
                noise_frac_after: None,
                error: Some(e.to_string()),
            }),
        }
    }
    if reports.is_empty() {
        let first = runs.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(Error::numerical(format!("every run failed; first error: {first}")));
    }

    let method = cfg.method.name().to_string();
    let aggregate: Vec<AggregateRow> = grid
        .iter()
        .map(|&value| {
            let ok: Vec<&DenoiseReport> = cfg
                .seeds
                .iter()
                .filter_map(|&s| reports.get(&(value.to_bits(), s)))
                .collect();
            let test: Vec<f64> = ok.iter().map(|r| r.metrics.model2_test_acc).collect();
            AggregateRow {
                method: method.clone(),
                threshold: value,
                n_seeds: ok.len(),
                n_failed: cfg.seeds.len() - ok.len(),
                mean_test_acc: mean(&test),
                std_test_acc: if test.is_empty() { 0.0 } else { std_dev(&test) },
                mean_model1_test_acc: mean(&ok.iter().map(|r| r.metrics.model1_test_acc).collect::<Vec<_>>()),
                mean_val_acc: mean(&ok.iter().map(|r| r.metrics.model2_val_acc).collect::<Vec<_>>()),
                mean_flagged: mean(&ok.iter().map(|r| r.d_n.len() as f64).collect::<Vec<_>>()),
                mean_noise_frac_before: mean_of(ok.iter().map(|r| r.metrics.noise_frac_before)),
                mean_noise_frac_after: mean_of(ok.iter().map(|r| r.metrics.noise_frac_after)),
            }
        })
        .collect();

    let agg_path = cfg.output_dir.join("aggregate.csv");
    write_rows(&agg_path, &aggregate)?;
    let runs_path = cfg.output_dir.join("runs.csv");
    write_rows(&runs_path, &runs)?;
    manifest.artifacts.push(agg_path);
    manifest.artifacts.push(runs_path);
    Ok(GridOutcome {
        manifest,
        aggregate,
        runs,
        reports,
    })
}

/// Full pipeline per seed (and per grid value when a grid is given), with
/// mean ± std test accuracy in `aggregate.csv`. Failed seeds are recorded in
/// `runs.csv`; the command fails only if every run fails.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<GridOutcome> {
    let mut out = run_grid(cfg, "run", &cfg.grid_values())?;
    out.manifest = out.manifest.finish(&cfg.output_dir)?;
    Ok(out)
}

/// Like `run` over a threshold grid (the method's default grid when none is
/// configured), then picks the value with the best mean validation accuracy.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<(GridOutcome, Selection)> {
    let grid = cfg.grid.clone().unwrap_or_else(|| match cfg.method {
        DetectionMethod::Mv { .. } => LAMBDA_GRID.to_vec(),
        DetectionMethod::Sum { .. } => MU_GRID.to_vec(),
    });
    let mut cfg = cfg.clone();
    cfg.grid = Some(grid.clone());
    let mut out = run_grid(&cfg, "sweep", &grid)?;
    let best = out
        .aggregate
        .iter()
        .filter(|r| r.n_seeds > 0)
        .min_by(|a, b| {
            b.mean_val_acc
                .total_cmp(&a.mean_val_acc)
                .then(a.mean_flagged.total_cmp(&b.mean_flagged))
        })
        .expect("at least one run succeeded");
    let selection = Selection {
        method: best.method.clone(),
        selected: best.threshold,
        by: "mean validation accuracy, then fewer flagged nodes".into(),
    };
    let path = cfg.output_dir.join("selection.json");
    write_json(&path, &selection)?;
    out.manifest.artifacts.push(path);
    out.manifest = out.manifest.finish(&cfg.output_dir)?;
    Ok((out, selection))
}

/// Leave-one-out oracle comparison per seed. Graphs above
/// [`ORACLE_NODE_LIMIT`] nodes are refused unless `force` is set, since the
/// oracle retrains once per training node.
pub fn cmd_oracle(cfg: &ExperimentConfig, force: bool) -> Result<RunManifest> {
    cfg.validate()?;
    let mut manifest = RunManifest::new("oracle", cfg);
    create_dir(&cfg.output_dir)?;
    for &seed in &cfg.seeds {
        let (g, _) = prepare(cfg, seed)?;
        if g.n_nodes() > ORACLE_NODE_LIMIT && !force {
            return Err(Error::invalid(format!(
                "graph has {} nodes; the oracle retrains once per training node and is limited to {} nodes. Pass --force to run it anyway",
                g.n_nodes(),
                ORACLE_NODE_LIMIT
            )));
        }
        let model = cfg.model1.to_config(&g);
        let model = GcnConfig {
            init_seed: seed,
            ..model
        };
        let loo = manifest.timed(&format!("oracle seed {seed}"), || leave_one_out(&g, &model, cfg.solver))?;
        let dir = cfg.seed_dir(seed);
        create_dir(&dir)?;
        let agreement = dir.join("agreement.json");
        write_json(&agreement, &loo.report)?;
        let pairs = dir.join("pairs.csv");
        loo.write_pairs(&g, &pairs)?;
        let iup = dir.join("iup.csv");
        let icv = dir.join("icv.csv");
        loo.table.write_csv(&g, &iup, &icv)?;
        manifest.artifacts.extend([agreement, pairs, iup, icv]);
    }
    manifest.finish(&cfg.output_dir)
}

/// One row of a successive-application series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub count: usize,
    pub noise_fraction: f64,
    pub test_acc: f64,
}

/// Applies the pipeline `counts` times per seed, writing
/// `seed_<s>/successive.csv` and the across-seed means in `successive.csv`.
pub fn cmd_successive(cfg: &ExperimentConfig) -> Result<(RunManifest, Vec<SeriesRow>)> {
    cfg.validate()?;
    if cfg.noise.is_none() {
        return Err(Error::invalid(
            "successive tracks the noise fraction and needs a `noise` section or --noise-level",
        ));
    }
    let mut manifest = RunManifest::new("successive", cfg);
    create_dir(&cfg.output_dir)?;
    let per_seed: Vec<Result<(u64, Vec<SeriesRow>)>> = manifest.timed("successive", || {
        Ok(cfg
            .seeds
            .par_iter()
            .map(|&seed| {
                let (g, ledger) = prepare(cfg, seed)?;
                let ledger = ledger.expect("noise configured");
                let pc = cfg.pipeline(&g, seed);
                let rows: Vec<SeriesRow> = successive(&g, &pc, &ledger, cfg.counts)?
                    .into_iter()
                    .map(|r| SeriesRow {
                        count: r.count,
                        noise_fraction: r.noise_fraction,
                        test_acc: r.test_acc,
                    })
                    .collect();
                Ok((seed, rows))
            })
            .collect())
    })?;
    let per_seed: Vec<(u64, Vec<SeriesRow>)> = per_seed.into_iter().collect::<Result<_>>()?;
    for (seed, rows) in &per_seed {
        let dir = cfg.seed_dir(*seed);
        create_dir(&dir)?;
        let path = dir.join("successive.csv");
        write_rows(&path, rows)?;
        manifest.artifacts.push(path);
    }
    let means: Vec<SeriesRow> = (0..cfg.counts)
        .map(|c| {
            let noise: Vec<f64> = per_seed.iter().map(|(_, r)| r[c].noise_fraction).collect();
            let acc: Vec<f64> = per_seed.iter().map(|(_, r)| r[c].test_acc).collect();
            SeriesRow {
                count: c + 1,
                noise_fraction: mean(&noise),
                test_acc: mean(&acc),
            }
        })
        .collect();
    let path = cfg.output_dir.join("successive.csv");
    write_rows(&path, &means)?;
    manifest.artifacts.push(path);
    Ok((manifest.finish(&cfg.output_dir)?, means))
}

/// Sizes the global rayon pool from `DEGLIF_THREADS` when it is set.
pub fn configure_threads() -> Result<()> {
    let Ok(text) = std::env::var("DEGLIF_THREADS") else {
        return Ok(());
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::invalid(format!("DEGLIF_THREADS must be a positive integer, got `{text}`")))?;
    // A second call (as in tests) finds the pool already built; that is fine.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
