//! Influence-function machinery: Hessian-vector products of the regularized
//! training risk, damped conjugate-gradient solves, and the graph-aware
//! node/edge removal, relabel and validation-loss influences built on them.
//!
//! Every influence here uses the removal convention `ε = −1/n` with
//! `n = |V_train|`, so a parameter change is `(1/n) · H⁻¹ · g` for some
//! gradient combination `g`.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gcn::{
    forward, label_terms, terms_gradient, terms_hvp, ForwardCache, GcnConfig, GcnInput, GcnShape,
    LossTarget, LossTerm, ParamVector,
};
use crate::graph::{isolate_nodes, perturb, Graph, Perturbation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HvpBackend {
    /// Forward-over-reverse with the ReLU pattern frozen at `θ̂`.
    #[default]
    Analytic,
    /// Central difference of the gradient.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub damping: f64,
    pub tol: f64,
    pub max_iters: usize,
    pub backend: HvpBackend,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            damping: 1e-3,
            tol: 1e-6,
            max_iters: 1000,
            backend: HvpBackend::Analytic,
        }
    }
}

/// A symmetric linear map on parameter space.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &ParamVector) -> ParamVector;
}

/// `v ↦ (H + λ_damp I) v` with `H` the Hessian of
/// `Σ_terms w·L + (λ_reg/2)‖θ‖²` at a fixed `θ`.
pub struct HvpOperator<'a> {
    input: &'a GcnInput,
    shape: GcnShape,
    theta: &'a ParamVector,
    terms: Vec<LossTerm>,
    cache: ForwardCache,
    l2_reg: f64,
    damping: f64,
    backend: HvpBackend,
}

impl<'a> HvpOperator<'a> {
    pub fn new(
        input: &'a GcnInput,
        shape: GcnShape,
        theta: &'a ParamVector,
        terms: Vec<LossTerm>,
        l2_reg: f64,
        damping: f64,
        backend: HvpBackend,
    ) -> Result<Self> {
        if damping < 0.0 {
            return Err(Error::invalid("damping must be ≥ 0"));
        }
        let cache = forward(input, shape, theta)?;
        Ok(Self {
            input,
            shape,
            theta,
            terms,
            cache,
            l2_reg,
            damping,
            backend,
        })
    }

    pub fn damping(&self) -> f64 {
        self.damping
    }

    fn full_gradient(&self, theta: &ParamVector) -> ParamVector {
        let cache = forward(self.input, self.shape, theta).expect("finite perturbed parameters");
        let mut g = terms_gradient(self.input, self.shape, theta, &cache, &self.terms);
        g.axpy(self.l2_reg, theta);
        g
    }
}

impl LinearOperator for HvpOperator<'_> {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    fn apply(&self, v: &ParamVector) -> ParamVector {
        let mut out = match self.backend {
            HvpBackend::Analytic => {
                let mut hv = terms_hvp(self.input, self.shape, self.theta, &self.cache, &self.terms, v);
                hv.axpy(self.l2_reg, v);
                hv
            }
            HvpBackend::FiniteDifference => {
                let eps = 1e-4 * (1.0 + self.theta.norm()) / v.norm().max(1e-12);
                let mut plus = self.theta.clone();
                plus.axpy(eps, v);
                let mut minus = self.theta.clone();
                minus.axpy(-eps, v);
                self.full_gradient(&plus)
                    .sub(&self.full_gradient(&minus))
                    .scaled(0.5 / eps)
            }
        };
        out.axpy(self.damping, v);
        out
    }
}

/// Outcome of one inverse-HVP solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub solution: ParamVector,
    /// Final `‖b − A s‖ / ‖b‖` of the returned iterate.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub damping: f64,
    /// Relative residual after each iteration, starting with 1 at iteration 0.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

/// Conjugate gradient for `A s = rhs` with minimal-residual smoothing of the
/// iterates, so the reported residual never increases.
pub fn conjugate_gradient<A: LinearOperator + ?Sized>(
    op: &A,
    rhs: &ParamVector,
    tol: f64,
    max_iters: usize,
    damping: f64,
) -> Result<SolveReport> {
    let dim = op.dim();
    assert_eq!(rhs.len(), dim, "rhs length");
    if !rhs.is_finite() {
        return Err(Error::numerical("non-finite right-hand side"));
    }
    let b_norm = rhs.norm();
    if b_norm == 0.0 {
        return Ok(SolveReport {
            solution: ParamVector::zeros(dim),
            residual: 0.0,
            iterations: 0,
            converged: true,
            damping,
            trace: vec![0.0],
        });
    }
    let mut x = ParamVector::zeros(dim);
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.dot(&r);
    // smoothed iterate and its residual
    let mut y = x.clone();
    let mut s = r.clone();
    let mut trace = vec![1.0];
    let mut residual = 1.0;
    let mut iterations = 0;
    while iterations < max_iters && residual > tol {
        iterations += 1;
        let ap = op.apply(&p);
        let curvature = p.dot(&ap);
        if !(curvature > 0.0) {
            return Err(Error::numerical(format!(
                "non-positive curvature {curvature:.3e} at CG iteration {iterations}; increase damping (currently {damping})"
            )));
        }
        let alpha = rr / curvature;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);

        let d = r.sub(&s);
        let dd = d.dot(&d);
        if dd > 0.0 {
            let eta = -s.dot(&d) / dd;
            let step = x.sub(&y);
            y.axpy(eta, &step);
            s.axpy(eta, &d);
        }
        residual = s.norm() / b_norm;
        if !residual.is_finite() || !y.is_finite() {
            return Err(Error::numerical(format!(
                "non-finite CG iterate at iteration {iterations}; increase damping (currently {damping})"
            )));
        }
        trace.push(residual);

        let rr_next = r.dot(&r);
        let beta = rr_next / rr;
        rr = rr_next;
        let mut next = r.clone();
        next.axpy(beta, &p);
        p = next;
    }
    Ok(SolveReport {
        solution: y,
        residual,
        iterations,
        converged: residual <= tol,
        damping,
        trace,
    })
}

/// Target of a relabelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelabelTarget {
    Hard(usize),
    /// One-hot at `class` scaled by `φ_class(z) = log_{f_class}(1 − f_m)`.
    /// Its loss is `−log(1 − f_m)`, whatever the class.
    PhiWeighted { class: usize },
}

/// Per-clean-node solves `s_v = (H + λ_damp I)⁻¹ ∇L(v, θ̂)`.
#[derive(Debug, Clone)]
pub struct CleanSolves {
    pub nodes: Vec<usize>,
    pub gradients: Vec<ParamVector>,
    pub reports: Vec<SolveReport>,
}

impl CleanSolves {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }

    pub fn solution(&self, j: usize) -> &ParamVector {
        &self.reports[j].solution
    }

    /// `(1/n) s_v · g` for every clean node.
    pub fn project(&self, g: &ParamVector, normalizer: f64) -> Vec<f64> {
        self.reports
            .iter()
            .map(|r| r.solution.dot(g) / normalizer)
            .collect()
    }

    /// Writes `v,iterations,residual,converged,damping`.
    pub fn write_diagnostics(&self, g: &Graph, path: &Path) -> Result<()> {
        let mut out = String::from("v,iterations,residual,converged,damping\n");
        for (v, r) in self.nodes.iter().zip(&self.reports) {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                g.original_id(*v),
                r.iterations,
                r.residual,
                r.converged,
                r.damping
            ));
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// `I_up(−z, v)` for every training node `z` and clean node `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceTable {
    pub train_nodes: Vec<usize>,
    pub clean_nodes: Vec<usize>,
    /// `values[[row, col]] = I_up(−train_nodes[row], clean_nodes[col])`
    pub values: Array2<f64>,
    /// `I_cv(−z) = −Σ_v I_up(−z, v)`
    pub icv: Vec<f64>,
    pub neg_fraction: Vec<f64>,
    /// False when some clean-node solve did not converge.
    pub valid: bool,
}

impl InfluenceTable {
    pub fn from_values(
        train_nodes: Vec<usize>,
        clean_nodes: Vec<usize>,
        values: Array2<f64>,
        valid: bool,
    ) -> Self {
        assert_eq!(values.dim(), (train_nodes.len(), clean_nodes.len()));
        let n_clean = clean_nodes.len().max(1) as f64;
        let icv = values.rows().into_iter().map(|r| -r.sum()).collect();
        let neg_fraction = values
            .rows()
            .into_iter()
            .map(|r| r.iter().filter(|&&x| x < 0.0).count() as f64 / n_clean)
            .collect();
        Self {
            train_nodes,
            clean_nodes,
            values,
            icv,
            neg_fraction,
            valid,
        }
    }

    pub fn n_clean(&self) -> usize {
        self.clean_nodes.len()
    }

    pub fn row_of(&self, z: usize) -> Option<usize> {
        self.train_nodes.iter().position(|&t| t == z)
    }

    /// Count of strictly negative entries in a row.
    pub fn negative_count(&self, row: usize) -> usize {
        self.values.row(row).iter().filter(|&&x| x < 0.0).count()
    }

    /// Predicted change of the mean clean-set loss when removing `train_nodes[row]`.
    pub fn predicted_clean_risk_delta(&self, row: usize) -> f64 {
        self.values.row(row).mean().unwrap_or(0.0)
    }

    /// Writes `z,v,iup` and `z,icv,neg_fraction` with file node ids.
    pub fn write_csv(&self, g: &Graph, pairs: &Path, aggregates: &Path) -> Result<()> {
        let mut out = String::from("z,v,iup\n");
        for (r, &z) in self.train_nodes.iter().enumerate() {
            for (c, &v) in self.clean_nodes.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{}\n",
                    g.original_id(z),
                    g.original_id(v),
                    self.values[[r, c]]
                ));
            }
        }
        std::fs::write(pairs, out).map_err(|e| Error::io(pairs, e))?;
        let mut out = String::from("z,icv,neg_fraction\n");
        for (r, &z) in self.train_nodes.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                g.original_id(z),
                self.icv[r],
                self.neg_fraction[r]
            ));
        }
        std::fs::write(aggregates, out).map_err(|e| Error::io(aggregates, e))
    }

    /// Reads back the `z,v,iup` file written by [`InfluenceTable::write_csv`].
    pub fn read_csv(g: &Graph, pairs: &Path) -> Result<Self> {
        let index: std::collections::HashMap<i64, usize> = g
            .original_ids()
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
        let mut reader =
            csv::Reader::from_path(pairs).map_err(|e| Error::parse(pairs, 0, e.to_string()))?;
        let mut entries = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| Error::parse(pairs, 0, e.to_string()))?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let bad = || Error::parse(pairs, line, "malformed row");
            let node = |s: &str| -> Result<usize> {
                let id: i64 = s.parse().map_err(|_| bad())?;
                index.get(&id).copied().ok_or_else(bad)
            };
            let value: f64 = rec.get(2).ok_or_else(bad)?.parse().map_err(|_| bad())?;
            entries.push((node(&rec[0])?, node(&rec[1])?, value));
        }
        let mut train_nodes: Vec<usize> = Vec::new();
        let mut clean_nodes: Vec<usize> = Vec::new();
        for &(z, v, _) in &entries {
            if !train_nodes.contains(&z) {
                train_nodes.push(z);
            }
            if !clean_nodes.contains(&v) {
                clean_nodes.push(v);
            }
        }
        let mut values = Array2::zeros((train_nodes.len(), clean_nodes.len()));
        for (z, v, x) in entries {
            let r = train_nodes.iter().position(|&t| t == z).expect("row");
            let c = clean_nodes.iter().position(|&t| t == v).expect("col");
            values[[r, c]] = x;
        }
        Ok(Self::from_values(train_nodes, clean_nodes, values, true))
    }
}

/// Read-only influence context bound to a graph and trained parameters `θ̂`.
pub struct InfluenceContext<'g> {
    graph: &'g Graph,
    input: GcnInput,
    shape: GcnShape,
    theta: ParamVector,
    l2_reg: f64,
    settings: SolverSettings,
    normalizer: f64,
    cache: ForwardCache,
}

impl<'g> InfluenceContext<'g> {
    pub fn new(
        graph: &'g Graph,
        cfg: &GcnConfig,
        theta: ParamVector,
        settings: SolverSettings,
    ) -> Result<Self> {
        if settings.damping < 0.0 || cfg.l2_reg + settings.damping <= 0.0 {
            return Err(Error::invalid("l2_reg + damping must be > 0"));
        }
        let input = GcnInput::from_graph(graph);
        let shape = cfg.shape();
        let cache = forward(&input, shape, &theta)?;
        Ok(Self {
            graph,
            input,
            shape,
            theta,
            l2_reg: cfg.l2_reg,
            settings,
            normalizer: graph.masks().train.len().max(1) as f64,
            cache,
        })
    }

    /// Overrides `n` in the `1/n` scaling.
    pub fn with_normalizer(mut self, n: f64) -> Self {
        self.normalizer = n;
        self
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn graph(&self) -> &Graph {
        self.graph
    }

    pub fn input(&self) -> &GcnInput {
        &self.input
    }

    pub fn shape(&self) -> GcnShape {
        self.shape
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn settings(&self) -> SolverSettings {
        self.settings
    }

    pub fn cache(&self) -> &ForwardCache {
        &self.cache
    }

    fn train(&self) -> &[usize] {
        &self.graph.masks().train
    }

    fn require_train(&self, z: usize) -> Result<()> {
        if self.train().binary_search(&z).is_err() {
            return Err(Error::invalid(format!("node {z} is not a training node")));
        }
        Ok(())
    }

    /// The damped Hessian of the regularized mean training risk at `θ̂`.
    pub fn hvp_operator(&self) -> Result<HvpOperator<'_>> {
        let train = self.train();
        let weight = 1.0 / train.len().max(1) as f64;
        HvpOperator::new(
            &self.input,
            self.shape,
            &self.theta,
            label_terms(train, self.graph.labels(), weight),
            self.l2_reg,
            self.settings.damping,
            self.settings.backend,
        )
    }

    pub fn inverse_hvp(&self, rhs: &ParamVector) -> Result<SolveReport> {
        let op = self.hvp_operator()?;
        conjugate_gradient(
            &op,
            rhs,
            self.settings.tol,
            self.settings.max_iters,
            self.settings.damping,
        )
    }

    fn solve_checked(&self, rhs: &ParamVector) -> Result<ParamVector> {
        let report = self.inverse_hvp(rhs)?;
        if !report.converged {
            return Err(Error::numerical(format!(
                "CG stopped at residual {:.3e} after {} iterations (tol {:.1e})",
                report.residual, report.iterations, self.settings.tol
            )));
        }
        Ok(report.solution)
    }

    /// `∇_θ L(node, θ̂)` against an explicit target, on the unperturbed graph.
    pub fn target_gradient(&self, node: usize, target: LossTarget) -> ParamVector {
        let term = LossTerm {
            node,
            target,
            weight: 1.0,
        };
        terms_gradient(&self.input, self.shape, &self.theta, &self.cache, &[term])
    }

    /// `∇_θ L(node, θ̂)` with the node's current label.
    pub fn loss_gradient(&self, node: usize) -> ParamVector {
        self.target_gradient(node, LossTarget::Class(self.graph.labels()[node]))
    }

    /// `∇_θ Σ_{k ∈ nodes} L_k(θ̂)` evaluated on graph `g` (labels taken from `g`).
    pub fn sum_gradient(&self, g: &Graph, nodes: &[usize]) -> Result<ParamVector> {
        let input = GcnInput::from_graph(g);
        let cache = forward(&input, self.shape, &self.theta)?;
        Ok(terms_gradient(
            &input,
            self.shape,
            &self.theta,
            &cache,
            &label_terms(nodes, g.labels(), 1.0),
        ))
    }

    fn sum_gradient_here(&self, nodes: &[usize]) -> ParamVector {
        terms_gradient(
            &self.input,
            self.shape,
            &self.theta,
            &self.cache,
            &label_terms(nodes, self.graph.labels(), 1.0),
        )
    }

    /// Structural term `Σ_k [∇L_k(G') − ∇L_k(G)]` over training nodes not in `exclude`.
    fn structural_difference(&self, perturbed: &Graph, exclude: &[usize]) -> Result<ParamVector> {
        let rest: Vec<usize> = self
            .train()
            .iter()
            .copied()
            .filter(|k| !exclude.contains(k))
            .collect();
        Ok(self
            .sum_gradient(perturbed, &rest)?
            .sub(&self.sum_gradient_here(&rest)))
    }

    /// `g_z = ∇L(z; G) − Σ_{k ∈ V_train∖{z}} [∇L_k(G_{−z}) − ∇L_k(G)]`, the
    /// bracket of the node-removal influence. `G_{−z}` is renormalized.
    pub fn removal_gradient(&self, z: usize) -> Result<ParamVector> {
        self.require_train(z)?;
        let own = self.loss_gradient(z);
        if self.graph.degree(z) == 0 {
            return Ok(own);
        }
        let perturbed = perturb(self.graph, Perturbation::RemoveNodeEdges(z))?;
        Ok(own.sub(&self.structural_difference(&perturbed, &[z])?))
    }

    /// Removal bracket for a set of training nodes removed together.
    pub fn group_removal_gradient(&self, nodes: &[usize]) -> Result<ParamVector> {
        for &z in nodes {
            self.require_train(z)?;
        }
        let own = self.sum_gradient_here(nodes);
        let perturbed = isolate_nodes(self.graph, nodes)?;
        Ok(own.sub(&self.structural_difference(&perturbed, nodes)?))
    }

    /// `I(−z) = (1/n) H⁻¹ g_z`
    pub fn node_influence(&self, z: usize) -> Result<ParamVector> {
        let g = self.removal_gradient(z)?;
        Ok(self.solve_checked(&g)?.scaled(1.0 / self.normalizer))
    }

    /// `I(−e) = −(1/n) H⁻¹ Σ_{k ∈ V_train} [∇L_k(G_{−e}) − ∇L_k(G)]`
    pub fn edge_influence(&self, u: usize, v: usize) -> Result<ParamVector> {
        let perturbed = perturb(self.graph, Perturbation::RemoveEdge(u, v))?;
        let diff = self.structural_difference(&perturbed, &[])?;
        Ok(self.solve_checked(&diff)?.scaled(-1.0 / self.normalizer))
    }

    /// `(1/n) H⁻¹ ∇L(z, θ̂)`, the influence without structural terms.
    pub fn loss_part_influence(&self, z: usize) -> Result<ParamVector> {
        self.require_train(z)?;
        Ok(self
            .solve_checked(&self.loss_gradient(z))?
            .scaled(1.0 / self.normalizer))
    }

    /// `∇L(z) − ∇L(z_δ)`: the structure is unchanged, so only z's own term moves.
    pub fn relabel_gradient(&self, z: usize, target: RelabelTarget) -> Result<ParamVector> {
        self.require_train(z)?;
        let k = self.shape.n_classes;
        let new_target = match target {
            RelabelTarget::Hard(c) if c < k => LossTarget::Class(c),
            RelabelTarget::PhiWeighted { class } if class < k => {
                LossTarget::NotClass(self.graph.labels()[z])
            }
            _ => return Err(Error::invalid("relabel class out of range")),
        };
        Ok(self.loss_gradient(z).sub(&self.target_gradient(z, new_target)))
    }

    /// `I(z → z_δ) = (1/n) H⁻¹ (∇L(z) − ∇L(z_δ))` and its projection
    /// `I_up(z → z_δ, v)` on every clean node.
    pub fn relabel_influence(
        &self,
        z: usize,
        target: RelabelTarget,
        clean: &CleanSolves,
    ) -> Result<(ParamVector, Vec<f64>)> {
        let g = self.relabel_gradient(z, target)?;
        let per_v = clean.project(&g, self.normalizer);
        let delta = self.solve_checked(&g)?.scaled(1.0 / self.normalizer);
        Ok((delta, per_v))
    }

    /// Per-clean-node `loss_part` projections `(1/n) s_v · ∇L(z)`.
    pub fn loss_part_iup(&self, z: usize, clean: &CleanSolves) -> Result<Vec<f64>> {
        self.require_train(z)?;
        Ok(clean.project(&self.loss_gradient(z), self.normalizer))
    }

    /// One solve per clean node, run in parallel.
    pub fn clean_solves(&self, clean: &[usize]) -> Result<CleanSolves> {
        if clean.is_empty() {
            return Err(Error::invalid("clean set is empty"));
        }
        let results: Vec<Result<(ParamVector, SolveReport)>> = clean
            .par_iter()
            .map(|&v| {
                let g = self.loss_gradient(v);
                let report = self.inverse_hvp(&g)?;
                Ok((g, report))
            })
            .collect();
        let mut gradients = Vec::with_capacity(clean.len());
        let mut reports = Vec::with_capacity(clean.len());
        for r in results {
            let (g, rep) = r?;
            gradients.push(g);
            reports.push(rep);
        }
        Ok(CleanSolves {
            nodes: clean.to_vec(),
            gradients,
            reports,
        })
    }

    /// `I_up(−z, v) = (1/n) s_v · g_z` for all training `z`, parallel over `z`.
    pub fn iup_table(&self, clean: &CleanSolves) -> Result<InfluenceTable> {
        let train = self.train().to_vec();
        let rows: Vec<Result<Vec<f64>>> = train
            .par_iter()
            .map(|&z| Ok(clean.project(&self.removal_gradient(z)?, self.normalizer)))
            .collect();
        let mut values = Array2::zeros((train.len(), clean.nodes.len()));
        for (r, row) in rows.into_iter().enumerate() {
            for (c, x) in row?.into_iter().enumerate() {
                values[[r, c]] = x;
            }
        }
        Ok(InfluenceTable::from_values(
            train,
            clean.nodes.clone(),
            values,
            clean.all_converged(),
        ))
    }

    /// Clean solves on the graph's clean mask followed by the table.
    pub fn compute_table(&self) -> Result<(InfluenceTable, CleanSolves)> {
        let clean = self.clean_solves(&self.graph.masks().clean)?;
        let table = self.iup_table(&clean)?;
        Ok((table, clean))
    }
}
