//! Brute-force retraining: the ground truth that influence estimates are
//! checked against on small graphs.
//!
//! Every retrain starts from the baseline's initialization and runs the same
//! schedule, so differences come from the modification and not the optimizer.
//! The mean-loss normalizer stays at the baseline's `|V_train|`, matching the
//! `ε = −1/n` convention of the influence estimates. Clean-set losses are
//! always measured on the unmodified graph.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::RelabelDecision;
use crate::error::{Error, Result};
use crate::gcn::{forward, label_terms, term_loss, train_terms, GcnConfig, GcnInput, LossTarget, LossTerm, ParamVector};
use crate::graph::{isolate_nodes, Graph};
use crate::influence::{InfluenceContext, InfluenceTable, SolverSettings};
use crate::stats::spearman;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrainDelta {
    pub description: String,
    #[serde(skip)]
    pub params: ParamVector,
    /// `L(v, θ̂_mod) − L(v, θ̂)` per clean node.
    pub clean_deltas: Vec<f64>,
    pub aggregate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelabelMode {
    Hard,
    /// New label's loss scaled by `φ`; an undefined `φ` falls back to 1.
    PhiWeighted,
}

pub struct Oracle<'g> {
    graph: &'g Graph,
    cfg: GcnConfig,
    input: GcnInput,
    baseline: ParamVector,
    baseline_losses: Vec<f64>,
    normalizer: f64,
}

impl<'g> Oracle<'g> {
    /// Trains the baseline model on the full training mask.
    pub fn new(graph: &'g Graph, cfg: &GcnConfig) -> Result<Self> {
        let train = &graph.masks().train;
        if train.is_empty() {
            return Err(Error::invalid("training mask is empty"));
        }
        let input = GcnInput::from_graph(graph);
        let normalizer = train.len() as f64;
        let terms = label_terms(train, graph.labels(), 1.0 / normalizer);
        let baseline = train_terms(&input, cfg, &terms)?.params;
        let mut oracle = Self {
            graph,
            cfg: *cfg,
            input,
            baseline,
            baseline_losses: Vec::new(),
            normalizer,
        };
        oracle.baseline_losses = oracle.clean_losses(&oracle.baseline)?;
        Ok(oracle)
    }

    pub fn baseline(&self) -> &ParamVector {
        &self.baseline
    }

    pub fn config(&self) -> &GcnConfig {
        &self.cfg
    }

    fn clean_losses(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        let cache = forward(&self.input, self.cfg.shape(), theta)?;
        Ok(self
            .graph
            .masks()
            .clean
            .iter()
            .map(|&v| term_loss(&cache, v, LossTarget::Class(self.graph.labels()[v])))
            .collect())
    }

    fn delta(&self, description: String, params: ParamVector) -> Result<RetrainDelta> {
        let losses = self.clean_losses(&params)?;
        let clean_deltas: Vec<f64> = losses
            .iter()
            .zip(&self.baseline_losses)
            .map(|(a, b)| a - b)
            .collect();
        let aggregate = crate::stats::mean(&clean_deltas);
        Ok(RetrainDelta {
            description,
            params,
            clean_deltas,
            aggregate,
        })
    }

    /// Removes the nodes' loss terms and isolates them, then retrains.
    pub fn retrain_without(&self, nodes: &[usize]) -> Result<RetrainDelta> {
        let train = &self.graph.masks().train;
        if let Some(bad) = nodes.iter().find(|z| train.binary_search(z).is_err()) {
            return Err(Error::invalid(format!("node {bad} is not a training node")));
        }
        let perturbed = isolate_nodes(self.graph, nodes)?;
        let input = GcnInput::from_graph(&perturbed);
        let kept: Vec<usize> = train.iter().copied().filter(|z| !nodes.contains(z)).collect();
        let terms = label_terms(&kept, self.graph.labels(), 1.0 / self.normalizer);
        let params = train_terms(&input, &self.cfg, &terms)?.params;
        self.delta(format!("remove {nodes:?}"), params)
    }

    /// Retrains with the decisions' labels in place of the observed ones.
    pub fn retrain_relabel(&self, decisions: &[RelabelDecision], mode: RelabelMode) -> Result<RetrainDelta> {
        let train = &self.graph.masks().train;
        let mut terms: Vec<LossTerm> = label_terms(train, self.graph.labels(), 1.0 / self.normalizer);
        for d in decisions {
            if d.new >= self.graph.n_classes() {
                return Err(Error::invalid("relabel class out of range"));
            }
            let term = terms
                .iter_mut()
                .find(|t| t.node == d.node)
                .ok_or_else(|| Error::invalid(format!("node {} is not a training node", d.node)))?;
            term.target = LossTarget::Class(d.new);
            if mode == RelabelMode::PhiWeighted {
                term.weight *= d.phi.unwrap_or(1.0);
            }
        }
        let params = train_terms(&self.input, &self.cfg, &terms)?.params;
        self.delta(format!("relabel {} nodes ({mode:?})", decisions.len()), params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub sign_agreement: f64,
    pub spearman: f64,
    pub n_nodes: usize,
}

/// Sign agreement and Spearman correlation between predicted and observed
/// deltas. An exactly-zero observed delta agrees only with `|prediction| < 1e-9`
/// and is left out of the correlation.
pub fn compare(predictions: &[f64], deltas: &[f64]) -> Result<AgreementReport> {
    if predictions.len() != deltas.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} deltas",
            predictions.len(),
            deltas.len()
        )));
    }
    if deltas.is_empty() {
        return Err(Error::invalid("nothing to compare"));
    }
    let mut agree = 0usize;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&p, &d) in predictions.iter().zip(deltas) {
        if d == 0.0 {
            if p.abs() < 1e-9 {
                agree += 1;
            }
        } else {
            if p != 0.0 && p.signum() == d.signum() {
                agree += 1;
            }
            xs.push(p);
            ys.push(d);
        }
    }
    Ok(AgreementReport {
        sign_agreement: agree as f64 / deltas.len() as f64,
        spearman: spearman(&xs, &ys),
        n_nodes: deltas.len(),
    })
}

/// Per-training-node predictions next to retrained deltas.
#[derive(Debug, Clone)]
pub struct LeaveOneOut {
    pub nodes: Vec<usize>,
    pub predictions: Vec<f64>,
    pub deltas: Vec<f64>,
    pub report: AgreementReport,
    pub table: InfluenceTable,
}

impl LeaveOneOut {
    /// Writes `z,prediction,delta` rows for scatter plots.
    pub fn write_pairs(&self, g: &Graph, path: &Path) -> Result<()> {
        let mut out = String::from("z,prediction,delta\n");
        for ((z, p), d) in self.nodes.iter().zip(&self.predictions).zip(&self.deltas) {
            out.push_str(&format!("{},{p},{d}\n", g.original_id(*z)));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Predicts each training node's clean-risk delta as the row mean of the
/// `I_up` table and checks it against one retrain per node.
pub fn leave_one_out(g: &Graph, cfg: &GcnConfig, solver: SolverSettings) -> Result<LeaveOneOut> {
    let oracle = Oracle::new(g, cfg)?;
    let ctx = InfluenceContext::new(g, cfg, oracle.baseline().clone(), solver)?;
    let (table, _) = ctx.compute_table()?;
    if !table.valid {
        return Err(Error::numerical("influence table invalid: a clean-node solve did not converge"));
    }
    let nodes = table.train_nodes.clone();
    let predictions: Vec<f64> = (0..nodes.len())
        .map(|r| table.predicted_clean_risk_delta(r))
        .collect();
    let deltas = nodes
        .par_iter()
        .map(|&z| oracle.retrain_without(&[z]).map(|d| d.aggregate))
        .collect::<Result<Vec<f64>>>()?;
    let report = compare(&predictions, &deltas)?;
    Ok(LeaveOneOut {
        nodes,
        predictions,
        deltas,
        report,
        table,
    })
}
