//! Label-noise models and training-label corruption.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseModel {
    /// Symmetric label noise: flips are uniform over the other classes.
    Sln,
    /// Cyclic flips to the next class.
    Pairwise,
}

impl std::str::FromStr for NoiseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sln" | "symmetric" => Ok(NoiseModel::Sln),
            "pairwise" | "pw" => Ok(NoiseModel::Pairwise),
            other => Err(Error::invalid(format!("unknown noise model `{other}`"))),
        }
    }
}

/// `level` is the total flip probability per training node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub model: NoiseModel,
    pub level: f64,
    pub n_classes: usize,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::invalid("noise needs at least two classes"));
        }
        if !(0.0..1.0).contains(&self.level) {
            return Err(Error::invalid(format!(
                "noise level {} outside [0, 1)",
                self.level
            )));
        }
        if self.model == NoiseModel::Sln && self.level / (self.n_classes - 1) as f64 > 1.0 {
            return Err(Error::invalid("SLN per-class flip probability exceeds 1"));
        }
        Ok(())
    }
}

/// Row-stochastic `K × K` matrix, `rows[k][l] = P(observed = l | true = k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    pub fn n_classes(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.rows[k][l]
    }

    /// Draws an observed label for true class `k` by inverse CDF.
    fn sample(&self, k: usize, u: f64) -> usize {
        let row = &self.rows[k];
        let mut acc = 0.0;
        for (l, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return l;
            }
        }
        // u landed in the rounding slack above the last partial sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(k)
    }
}

pub fn build_transition(spec: &NoiseSpec) -> Result<TransitionMatrix> {
    spec.validate()?;
    let k = spec.n_classes;
    let eta = spec.level;
    let mut rows = vec![vec![0.0; k]; k];
    for (i, row) in rows.iter_mut().enumerate() {
        match spec.model {
            NoiseModel::Sln => {
                let c = eta / (k - 1) as f64;
                row.iter_mut().for_each(|x| *x = c);
            }
            NoiseModel::Pairwise => row[(i + 1) % k] = eta,
        }
        row[i] = 1.0 - eta;
    }
    Ok(TransitionMatrix { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub node: usize,
    pub original: usize,
    pub observed: usize,
    pub flipped: bool,
}

/// Ground truth of an injection, one record per training node.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorruptionLedger {
    pub records: Vec<CorruptionRecord>,
}

impl CorruptionLedger {
    pub fn n_flipped(&self) -> usize {
        self.records.iter().filter(|r| r.flipped).count()
    }

    pub fn original_label(&self, node: usize) -> Option<usize> {
        self.records
            .binary_search_by_key(&node, |r| r.node)
            .ok()
            .map(|i| self.records[i].original)
    }

    /// Fraction of ledger nodes whose label in `g` differs from the original.
    pub fn noise_fraction(&self, g: &Graph) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let wrong = self
            .records
            .iter()
            .filter(|r| g.labels()[r.node] != r.original)
            .count();
        wrong as f64 / self.records.len() as f64
    }

    /// Writes `node,original,observed,flipped`; nodes are written by their file id.
    pub fn write_csv(&self, g: &Graph, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::invalid(e.to_string()))?;
        let io = |e: csv::Error| Error::invalid(format!("{}: {e}", path.display()));
        w.write_record(["node", "original", "observed", "flipped"])
            .map_err(io)?;
        for r in &self.records {
            w.write_record([
                g.original_id(r.node).to_string(),
                r.original.to_string(),
                r.observed.to_string(),
                r.flipped.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(g: &Graph, path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)
            .map_err(|e| Error::parse(path, 0, e.to_string()))?;
        let index: std::collections::HashMap<i64, usize> = g
            .original_ids()
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        let mut records = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse(path, 0, e.to_string()))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let bad = |m: &str| Error::parse(path, line, m.to_string());
            if rec.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            let id: i64 = rec[0].parse().map_err(|_| bad("bad node id"))?;
            let node = *index.get(&id).ok_or_else(|| bad("unknown node id"))?;
            let original: usize = rec[1].parse().map_err(|_| bad("bad original label"))?;
            let observed: usize = rec[2].parse().map_err(|_| bad("bad observed label"))?;
            let flipped: bool = rec[3].parse().map_err(|_| bad("bad flipped flag"))?;
            if flipped != (original != observed) {
                return Err(bad("flipped flag inconsistent with labels"));
            }
            records.push(CorruptionRecord {
                node,
                original,
                observed,
                flipped,
            });
        }
        records.sort_by_key(|r| r.node);
        Ok(Self { records })
    }
}

/// Resamples every training label from its row of `q`. Other labels are
/// untouched.
pub fn inject(g: &Graph, q: &TransitionMatrix, seed: u64) -> Result<(Graph, CorruptionLedger)> {
    if q.n_classes() != g.n_classes() {
        return Err(Error::invalid(format!(
            "transition matrix has {} classes, graph has {}",
            q.n_classes(),
            g.n_classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = g.labels().to_vec();
    let mut records = Vec::with_capacity(g.masks().train.len());
    for &node in &g.masks().train {
        let original = labels[node];
        let observed = q.sample(original, rng.random::<f64>());
        labels[node] = observed;
        records.push(CorruptionRecord {
            node,
            original,
            observed,
            flipped: observed != original,
        });
    }
    Ok((g.with_labels(labels)?, CorruptionLedger { records }))
}
