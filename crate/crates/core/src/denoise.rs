//! Noisy-node detection, relabelling and the end-to-end denoising pipeline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{predict, train, GcnConfig, GcnInput, ParamVector, Prediction};
use crate::graph::Graph;
use crate::influence::{InfluenceContext, InfluenceTable, SolverSettings};
use crate::noise::CorruptionLedger;
use crate::stats::{mean, std_dev};

pub const LAMBDA_GRID: [f64; 6] = [0.5, 0.52, 0.53, 0.55, 0.56, 0.6];
pub const MU_GRID: [f64; 5] = [0.0, 0.1, 1.0, 10.0, 20.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum DetectionMethod {
    /// Flag `z` when at least a `lambda` fraction of clean nodes would gain from its removal.
    Mv { lambda: f64 },
    /// Flag `z` when `I_cv(−z) > mu`.
    Sum { mu: f64 },
}

impl DetectionMethod {
    pub fn name(&self) -> &'static str {
        match self {
            DetectionMethod::Mv { .. } => "mv",
            DetectionMethod::Sum { .. } => "sum",
        }
    }

    pub fn threshold(&self) -> f64 {
        match *self {
            DetectionMethod::Mv { lambda } => lambda,
            DetectionMethod::Sum { mu } => mu,
        }
    }

    pub fn with_threshold(&self, value: f64) -> Self {
        match self {
            DetectionMethod::Mv { .. } => DetectionMethod::Mv { lambda: value },
            DetectionMethod::Sum { .. } => DetectionMethod::Sum { mu: value },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            DetectionMethod::Mv { lambda } if !(0.5..1.0).contains(&lambda) => Err(
                Error::invalid(format!("lambda {lambda} outside [0.5, 1)")),
            ),
            DetectionMethod::Sum { mu } if mu.is_nan() => Err(Error::invalid("mu is NaN")),
            _ => Ok(()),
        }
    }
}

/// Training nodes flagged as noisy, with the score that flagged each one
/// (negative fraction for MV, `I_cv` for SUM).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoisySet {
    pub nodes: Vec<usize>,
    pub evidence: Vec<f64>,
}

impl NoisySet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.contains(&node)
    }
}

pub fn identify_mv(table: &InfluenceTable, lambda: f64) -> NoisySet {
    let needed = lambda * table.n_clean() as f64;
    let mut out = NoisySet::default();
    for (row, &z) in table.train_nodes.iter().enumerate() {
        let negatives = table.negative_count(row) as f64;
        // absorbs rounding in λ·|D_c| such as 0.55 · 20
        if negatives > 0.0 && negatives >= needed - 1e-9 {
            out.nodes.push(z);
            out.evidence.push(table.neg_fraction[row]);
        }
    }
    out
}

pub fn identify_sum(table: &InfluenceTable, mu: f64) -> NoisySet {
    let mut out = NoisySet::default();
    for (row, &z) in table.train_nodes.iter().enumerate() {
        if table.icv[row] > mu {
            out.nodes.push(z);
            out.evidence.push(table.icv[row]);
        }
    }
    out
}

pub fn identify(table: &InfluenceTable, method: DetectionMethod) -> NoisySet {
    match method {
        DetectionMethod::Mv { lambda } => identify_mv(table, lambda),
        DetectionMethod::Sum { mu } => identify_sum(table, mu),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelabelDecision {
    pub node: usize,
    pub old: usize,
    pub new: usize,
    /// `log(1 − f_old) / log(f_new)`; `None` when `f_new ∈ {0, 1}` or `f_old = 1`.
    pub phi: Option<f64>,
    pub probs: Vec<f64>,
}

/// Runner-up relabelling: the most probable class other than the observed one.
pub fn relabel(node: usize, observed: usize, probs: &[f64]) -> Result<RelabelDecision> {
    let k = probs.len();
    if k < 2 {
        return Err(Error::invalid("relabelling needs at least two classes"));
    }
    if observed >= k {
        return Err(Error::invalid("observed label out of range"));
    }
    let new = (0..k)
        .filter(|&c| c != observed)
        .fold(None, |best: Option<usize>, c| match best {
            Some(b) if probs[b] >= probs[c] => Some(b),
            _ => Some(c),
        })
        .expect("k ≥ 2");
    let (f_old, f_new) = (probs[observed], probs[new]);
    let phi = if f_new > 0.0 && f_new < 1.0 && f_old < 1.0 {
        Some((1.0 - f_old).ln() / f_new.ln())
    } else {
        None
    };
    Ok(RelabelDecision {
        node,
        old: observed,
        new,
        phi,
        probs: probs.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub model1: GcnConfig,
    pub model2: GcnConfig,
    pub solver: SolverSettings,
    pub method: DetectionMethod,
}

impl PipelineConfig {
    pub fn new(model: GcnConfig, method: DetectionMethod) -> Self {
        Self {
            model1: model,
            model2: model,
            solver: SolverSettings::default(),
            method,
        }
    }

    /// Distinct init seeds for the two models, both derived from `seed`.
    pub fn seeded(mut self, seed: u64) -> Self {
        self.model1.init_seed = seed;
        self.model2.init_seed = seed ^ 0x9E37_79B9_7F4A_7C15;
        self
    }

    pub fn with_method(mut self, method: DetectionMethod) -> Self {
        self.method = method;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelabelEntry {
    pub node: i64,
    pub old: usize,
    pub new: usize,
    pub phi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseMetrics {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub relabel_accuracy: Option<f64>,
    pub noise_frac_before: Option<f64>,
    pub noise_frac_after: Option<f64>,
    pub model2_test_acc: f64,
    pub model2_val_acc: f64,
    pub model1_test_acc: f64,
    /// `(1/n) Σ_{z ∈ D_n} I_cv(−z)`, the predicted drop in clean risk.
    pub predicted_risk_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiseReport {
    pub method: String,
    pub threshold: f64,
    pub d_n: Vec<i64>,
    pub relabels: Vec<RelabelEntry>,
    pub metrics: DenoiseMetrics,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub denoised: Graph,
    pub model1: ParamVector,
    pub model2: ParamVector,
    pub table: InfluenceTable,
    pub noisy: NoisySet,
    pub decisions: Vec<RelabelDecision>,
    pub report: DenoiseReport,
}

/// Train Model-1, score every training node, relabel the flagged ones and
/// train Model-2 on the result.
pub fn run_pipeline(
    g: &Graph,
    cfg: &PipelineConfig,
    ledger: Option<&CorruptionLedger>,
) -> Result<PipelineOutcome> {
    cfg.method.validate()?;
    if g.masks().clean.is_empty() {
        return Err(Error::invalid("clean set is empty"));
    }
    let model1 = train(g, &cfg.model1)?.params;
    let input = GcnInput::from_graph(g);
    let pred1 = predict(&input, cfg.model1.shape(), &model1)?;

    let ctx = InfluenceContext::new(g, &cfg.model1, model1.clone(), cfg.solver)?;
    let (table, _) = ctx.compute_table()?;
    if !table.valid {
        return Err(Error::numerical(
            "influence table invalid: a clean-node solve did not converge",
        ));
    }
    let noisy = identify(&table, cfg.method);

    let mut labels = g.labels().to_vec();
    let mut decisions = Vec::with_capacity(noisy.len());
    for &z in &noisy.nodes {
        let probs: Vec<f64> = pred1.probs.row(z).to_vec();
        let d = relabel(z, labels[z], &probs)?;
        labels[z] = d.new;
        decisions.push(d);
    }
    let denoised = g.with_labels(labels)?;
    let model2 = train(&denoised, &cfg.model2)?.params;
    let pred2 = predict(&input, cfg.model2.shape(), &model2)?;

    let predicted_risk_drop = noisy
        .nodes
        .iter()
        .map(|&z| table.icv[table.row_of(z).expect("flagged node in table")])
        .sum::<f64>()
        / g.masks().train.len() as f64;

    let metrics = metrics(
        g,
        &denoised,
        &noisy,
        &decisions,
        ledger,
        &pred1,
        &pred2,
        predicted_risk_drop,
    );
    let report = DenoiseReport {
        method: cfg.method.name().to_string(),
        threshold: cfg.method.threshold(),
        d_n: noisy.nodes.iter().map(|&z| g.original_id(z)).collect(),
        relabels: decisions
            .iter()
            .map(|d| RelabelEntry {
                node: g.original_id(d.node),
                old: d.old,
                new: d.new,
                phi: d.phi,
            })
            .collect(),
        metrics,
    };
    Ok(PipelineOutcome {
        denoised,
        model1,
        model2,
        table,
        noisy,
        decisions,
        report,
    })
}

#[allow(clippy::too_many_arguments)]
fn metrics(
    before: &Graph,
    after: &Graph,
    noisy: &NoisySet,
    decisions: &[RelabelDecision],
    ledger: Option<&CorruptionLedger>,
    pred1: &Prediction,
    pred2: &Prediction,
    predicted_risk_drop: f64,
) -> DenoiseMetrics {
    let masks = before.masks();
    let mut m = DenoiseMetrics {
        precision: None,
        recall: None,
        relabel_accuracy: None,
        noise_frac_before: None,
        noise_frac_after: None,
        model2_test_acc: pred2.accuracy(before.labels(), &masks.test),
        model2_val_acc: pred2.accuracy(before.labels(), &masks.validation),
        model1_test_acc: pred1.accuracy(before.labels(), &masks.test),
        predicted_risk_drop,
    };
    let Some(ledger) = ledger else {
        return m;
    };
    let is_noisy = |z: usize| {
        ledger
            .original_label(z)
            .is_some_and(|orig| before.labels()[z] != orig)
    };
    let actually_noisy = ledger.records.iter().filter(|r| is_noisy(r.node)).count();
    let hits: Vec<&RelabelDecision> = decisions.iter().filter(|d| is_noisy(d.node)).collect();
    if !noisy.is_empty() {
        m.precision = Some(hits.len() as f64 / noisy.len() as f64);
    }
    if actually_noisy > 0 {
        m.recall = Some(hits.len() as f64 / actually_noisy as f64);
    }
    if !hits.is_empty() {
        let correct = hits
            .iter()
            .filter(|d| ledger.original_label(d.node) == Some(d.new))
            .count();
        m.relabel_accuracy = Some(correct as f64 / hits.len() as f64);
    }
    m.noise_frac_before = Some(ledger.noise_fraction(before));
    m.noise_frac_after = Some(ledger.noise_fraction(after));
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub count: usize,
    pub noise_fraction: f64,
    pub test_acc: f64,
    pub n_flagged: usize,
}

/// Applies the pipeline `counts` times, feeding each denoised graph into the
/// next pass. Returns one record per count.
pub fn successive(
    g: &Graph,
    cfg: &PipelineConfig,
    ledger: &CorruptionLedger,
    counts: usize,
) -> Result<Vec<CountRecord>> {
    if counts == 0 {
        return Err(Error::invalid("counts must be ≥ 1"));
    }
    let mut current = g.clone();
    let mut out = Vec::with_capacity(counts);
    for count in 1..=counts {
        let outcome = run_pipeline(&current, cfg, Some(ledger))?;
        current = outcome.denoised;
        out.push(CountRecord {
            count,
            noise_fraction: ledger.noise_fraction(&current),
            test_acc: outcome.report.metrics.model2_test_acc,
            n_flagged: outcome.noisy.len(),
        });
    }
    Ok(out)
}

/// A noisy graph and the seed that drives model initialization on it.
#[derive(Debug, Clone)]
pub struct Trial {
    pub seed: u64,
    pub graph: Graph,
    pub ledger: Option<CorruptionLedger>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub test_acc: f64,
    pub val_acc: f64,
    pub n_flagged: usize,
    pub noise_frac_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub value: f64,
    pub mean_test_acc: f64,
    pub std_test_acc: f64,
    pub mean_val_acc: f64,
    pub mean_flagged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
    /// Grid value with the best mean validation accuracy.
    pub selected: f64,
    #[serde(skip)]
    pub reports: Vec<DenoiseReport>,
}

/// Runs the pipeline for every (grid value, trial) pair. Selection uses
/// validation accuracy; ties go to the value that flags fewer nodes.
pub fn sweep(trials: &[Trial], base: &PipelineConfig, grid: &[f64]) -> Result<SweepResult> {
    if grid.is_empty() || trials.is_empty() {
        return Err(Error::invalid("sweep needs a non-empty grid and at least one trial"));
    }
    let jobs: Vec<(f64, &Trial)> = grid
        .iter()
        .flat_map(|&v| trials.iter().map(move |t| (v, t)))
        .collect();
    let outcomes: Vec<Result<(SweepRow, DenoiseReport)>> = jobs
        .par_iter()
        .map(|&(value, trial)| {
            let cfg = base.with_method(base.method.with_threshold(value)).seeded(trial.seed);
            let out = run_pipeline(&trial.graph, &cfg, trial.ledger.as_ref())?;
            let m = &out.report.metrics;
            Ok((
                SweepRow {
                    value,
                    seed: trial.seed,
                    test_acc: m.model2_test_acc,
                    val_acc: m.model2_val_acc,
                    n_flagged: out.noisy.len(),
                    noise_frac_after: m.noise_frac_after,
                },
                out.report,
            ))
        })
        .collect();
    let mut rows = Vec::with_capacity(jobs.len());
    let mut reports = Vec::with_capacity(jobs.len());
    for o in outcomes {
        let (row, rep) = o?;
        rows.push(row);
        reports.push(rep);
    }
    let summary: Vec<SweepSummary> = grid
        .iter()
        .map(|&value| {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| r.value == value).collect();
            let test: Vec<f64> = sel.iter().map(|r| r.test_acc).collect();
            let val: Vec<f64> = sel.iter().map(|r| r.val_acc).collect();
            let flagged: Vec<f64> = sel.iter().map(|r| r.n_flagged as f64).collect();
            SweepSummary {
                value,
                mean_test_acc: mean(&test),
                std_test_acc: std_dev(&test),
                mean_val_acc: mean(&val),
                mean_flagged: mean(&flagged),
            }
        })
        .collect();
    let best = summary
        .iter()
        .min_by(|a, b| {
            b.mean_val_acc
                .total_cmp(&a.mean_val_acc)
                .then(a.mean_flagged.total_cmp(&b.mean_flagged))
        })
        .expect("non-empty grid");
    Ok(SweepResult {
        selected: best.value,
        rows,
        summary,
        reports,
    })
}
