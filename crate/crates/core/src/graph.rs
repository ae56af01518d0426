//! Graph data model, on-disk format, GCN adjacency normalization, structural
//! perturbations and a seeded stochastic block model generator.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node roles. All sets are stored sorted and deduplicated.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleMasks {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub clean: Vec<usize>,
}

impl RoleMasks {
    pub fn new(
        train: Vec<usize>,
        validation: Vec<usize>,
        test: Vec<usize>,
        clean: Vec<usize>,
    ) -> Self {
        let norm = |mut v: Vec<usize>| {
            v.sort_unstable();
            v.dedup();
            v
        };
        Self {
            train: norm(train),
            validation: norm(validation),
            test: norm(test),
            clean: norm(clean),
        }
    }

    fn validate(&self, n_nodes: usize) -> Result<()> {
        for (name, set) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
            ("clean", &self.clean),
        ] {
            if let Some(&bad) = set.iter().find(|&&i| i >= n_nodes) {
                return Err(Error::invalid(format!(
                    "{name} mask references node {bad} but graph has {n_nodes} nodes"
                )));
            }
        }
        let train: BTreeSet<_> = self.train.iter().collect();
        let val: BTreeSet<_> = self.validation.iter().collect();
        let test: BTreeSet<_> = self.test.iter().collect();
        if !train.is_disjoint(&val) || !train.is_disjoint(&test) || !val.is_disjoint(&test) {
            return Err(Error::invalid("train, validation and test must be disjoint"));
        }
        if !self.clean.iter().all(|c| val.contains(c)) {
            return Err(Error::invalid("clean ⊄ validation"));
        }
        Ok(())
    }
}

/// Immutable undirected graph with dense node features and integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    features: Array2<f64>,
    labels: Vec<usize>,
    n_classes: usize,
    masks: RoleMasks,
    original_ids: Vec<i64>,
}

impl Graph {
    /// Builds a graph, normalizing every edge to `(min, max)` and collapsing
    /// duplicates. Self-loops are rejected.
    pub fn new(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<usize>,
        n_classes: usize,
        masks: RoleMasks,
    ) -> Result<Self> {
        let n_nodes = features.nrows();
        let ids = (0..n_nodes as i64).collect();
        Self::with_ids(features, edges, labels, n_classes, masks, ids)
    }

    fn with_ids(
        features: Array2<f64>,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<usize>,
        n_classes: usize,
        masks: RoleMasks,
        original_ids: Vec<i64>,
    ) -> Result<Self> {
        let n_nodes = features.nrows();
        if labels.len() != n_nodes {
            return Err(Error::invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                n_nodes
            )));
        }
        if n_classes == 0 {
            return Err(Error::invalid("n_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) endpoint out of range for {n_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            set.insert((u.min(v), u.max(v)));
        }
        masks.validate(n_nodes)?;
        Ok(Self {
            n_nodes,
            edges: set.into_iter().collect(),
            features,
            labels,
            n_classes,
            masks,
            original_ids,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Sorted undirected edges with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn masks(&self) -> &RoleMasks {
        &self.masks
    }

    /// Identifier of node `i` as it appeared in `nodes.csv`.
    pub fn original_id(&self, i: usize) -> i64 {
        self.original_ids[i]
    }

    pub fn original_ids(&self) -> &[i64] {
        &self.original_ids
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.edges
            .iter()
            .filter(|&&(u, v)| u == node || v == node)
            .count()
    }

    /// Adjacency lists, one sorted neighbor list per node.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Same structure and features with a replacement label vector.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Self> {
        Self::with_ids(
            self.features.clone(),
            self.edges.iter().copied(),
            labels,
            self.n_classes,
            self.masks.clone(),
            self.original_ids.clone(),
        )
    }

    /// Same nodes with a different role assignment.
    pub fn with_masks(&self, masks: RoleMasks) -> Result<Self> {
        masks.validate(self.n_nodes)?;
        Ok(Self {
            masks,
            ..self.clone()
        })
    }

    fn with_edge_list(&self, edges: Vec<(usize, usize)>) -> Self {
        Self {
            edges,
            ..self.clone()
        }
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` in compressed sparse row layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let span = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[span.clone()], &self.values[span])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                out[[i, j]] = v;
            }
        }
        out
    }

    /// Sparse-dense product `Â · x`.
    pub fn matmul(&self, x: &Array2<f64>) -> Array2<f64> {
        assert_eq!(x.nrows(), self.n, "row count mismatch in sparse product");
        let mut out = Array2::zeros((self.n, x.ncols()));
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut dst = out.row_mut(i);
            for (&j, &a) in cols.iter().zip(vals) {
                dst.scaled_add(a, &x.row(j));
            }
        }
        out
    }
}

/// Builds the renormalized adjacency with self-loops; isolated nodes keep a
/// unit diagonal entry.
pub fn normalize(g: &Graph) -> NormalizedAdjacency {
    let adj = g.neighbors();
    let degree: Vec<f64> = adj.iter().map(|nbrs| (nbrs.len() + 1) as f64).collect();
    let mut indptr = Vec::with_capacity(g.n_nodes + 1);
    let mut indices = Vec::with_capacity(2 * g.edges.len() + g.n_nodes);
    let mut values = Vec::with_capacity(indices.capacity());
    indptr.push(0);
    for (i, nbrs) in adj.iter().enumerate() {
        let mut cols: Vec<usize> = nbrs.clone();
        cols.push(i);
        cols.sort_unstable();
        for j in cols {
            indices.push(j);
            values.push(1.0 / (degree[i] * degree[j]).sqrt());
        }
        indptr.push(indices.len());
    }
    NormalizedAdjacency {
        n: g.n_nodes,
        indptr,
        indices,
        values,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Perturbation {
    /// Drop every edge incident to the node; the node itself stays.
    RemoveNodeEdges(usize),
    RemoveEdge(usize, usize),
}

/// Returns a copy of `g` with the perturbation applied to its edge set.
pub fn perturb(g: &Graph, p: Perturbation) -> Result<Graph> {
    match p {
        Perturbation::RemoveNodeEdges(z) => {
            if z >= g.n_nodes {
                return Err(Error::invalid(format!("node {z} not in graph")));
            }
            let edges = g
                .edges
                .iter()
                .copied()
                .filter(|&(u, v)| u != z && v != z)
                .collect();
            Ok(g.with_edge_list(edges))
        }
        Perturbation::RemoveEdge(u, v) => {
            let key = (u.min(v), u.max(v));
            let pos = g
                .edges
                .binary_search(&key)
                .map_err(|_| Error::invalid(format!("edge not present: ({u}, {v})")))?;
            let mut edges = g.edges.clone();
            edges.remove(pos);
            Ok(g.with_edge_list(edges))
        }
    }
}

/// Isolates every node in `nodes` at once.
pub fn isolate_nodes(g: &Graph, nodes: &[usize]) -> Result<Graph> {
    if let Some(&bad) = nodes.iter().find(|&&z| z >= g.n_nodes) {
        return Err(Error::invalid(format!("node {bad} not in graph")));
    }
    let drop: BTreeSet<usize> = nodes.iter().copied().collect();
    let edges = g
        .edges
        .iter()
        .copied()
        .filter(|(u, v)| !drop.contains(u) && !drop.contains(v))
        .collect();
    Ok(g.with_edge_list(edges))
}

// ---------------------------------------------------------------------------
// On-disk format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct SplitsFile {
    train: Vec<i64>,
    validation: Vec<i64>,
    test: Vec<i64>,
    clean: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_classes: Option<usize>,
}

fn csv_line(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

/// Reads `nodes.csv`, `edges.csv` and `splits.json` from `dir`.
///
/// Node ids are remapped to `0..n` in file order. The class count comes from an
/// optional `n_classes` field in `splits.json`, otherwise from the largest label.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    let nodes_path = dir.join("nodes.csv");
    let edges_path = dir.join("edges.csv");
    let splits_path = dir.join("splits.json");

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&nodes_path)
        .map_err(|e| csv_error(&nodes_path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(&nodes_path, e))?
        .clone();
    if header.len() < 2 || &header[0] != "id" || &header[1] != "label" {
        return Err(Error::parse(
            &nodes_path,
            1,
            "header must start with `id,label`",
        ));
    }
    let dim = header.len() - 2;
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut feats = Vec::new();
    let mut id_index: HashMap<i64, usize> = HashMap::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(&nodes_path, e))?;
        let line = csv_line(&rec);
        if rec.len() != dim + 2 {
            return Err(Error::parse(
                &nodes_path,
                line,
                format!("expected {} fields, found {}", dim + 2, rec.len()),
            ));
        }
        let id: i64 = rec[0]
            .parse()
            .map_err(|_| Error::parse(&nodes_path, line, format!("bad node id `{}`", &rec[0])))?;
        let label: i64 = rec[1]
            .parse()
            .map_err(|_| Error::parse(&nodes_path, line, format!("bad label `{}`", &rec[1])))?;
        if label < 0 {
            return Err(Error::parse(
                &nodes_path,
                line,
                format!("label out of range: {label}"),
            ));
        }
        if id_index.insert(id, ids.len()).is_some() {
            return Err(Error::parse(
                &nodes_path,
                line,
                format!("duplicate node id {id}"),
            ));
        }
        for field in rec.iter().skip(2) {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(&nodes_path, line, format!("bad feature value `{field}`"))
            })?;
            feats.push(v);
        }
        ids.push(id);
        labels.push(label as usize);
    }
    let n = ids.len();
    let features = Array2::from_shape_vec((n, dim), feats).expect("feature buffer shape");

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&edges_path)
        .map_err(|e| csv_error(&edges_path, e))?;
    let header = reader
        .headers()
        .map_err(|e| csv_error(&edges_path, e))?
        .clone();
    if header.len() != 2 || &header[0] != "src" || &header[1] != "dst" {
        return Err(Error::parse(&edges_path, 1, "header must be `src,dst`"));
    }
    let mut edges = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(&edges_path, e))?;
        let line = csv_line(&rec);
        if rec.len() != 2 {
            return Err(Error::parse(&edges_path, line, "expected 2 fields"));
        }
        let mut ends = [0usize; 2];
        for (slot, field) in ends.iter_mut().zip(rec.iter()) {
            let id: i64 = field
                .parse()
                .map_err(|_| Error::parse(&edges_path, line, format!("bad node id `{field}`")))?;
            *slot = *id_index.get(&id).ok_or_else(|| {
                Error::parse(
                    &edges_path,
                    line,
                    format!("edge endpoint out of range: unknown node id {id}"),
                )
            })?;
        }
        // Self-loops are implied by normalization.
        if ends[0] != ends[1] {
            edges.push((ends[0], ends[1]));
        }
    }

    let text = fs::read_to_string(&splits_path).map_err(|e| Error::io(&splits_path, e))?;
    let splits: SplitsFile = serde_json::from_str(&text).map_err(|e| {
        Error::parse(&splits_path, e.line(), format!("malformed splits: {e}"))
    })?;
    let map_ids = |name: &str, list: &[i64]| -> Result<Vec<usize>> {
        list.iter()
            .map(|id| {
                id_index.get(id).copied().ok_or_else(|| {
                    Error::parse(
                        &splits_path,
                        0,
                        format!("{name} references unknown node id {id}"),
                    )
                })
            })
            .collect()
    };
    let masks = RoleMasks::new(
        map_ids("train", &splits.train)?,
        map_ids("validation", &splits.validation)?,
        map_ids("test", &splits.test)?,
        map_ids("clean", &splits.clean)?,
    );
    let max_label = labels.iter().copied().max().map_or(0, |m| m + 1);
    let n_classes = match splits.n_classes {
        Some(k) => {
            if let Some(pos) = labels.iter().position(|&y| y >= k) {
                return Err(Error::parse(
                    &nodes_path,
                    pos + 2,
                    format!("label out of range: {} ≥ {k}", labels[pos]),
                ));
            }
            k
        }
        None => max_label,
    };
    masks
        .validate(n)
        .map_err(|e| Error::parse(&splits_path, 0, e.to_string()))?;
    Graph::with_ids(features, edges, labels, n_classes, masks, ids)
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, line, format!("{other:?}")),
    }
}

/// Writes the graph in the format read by [`load_graph`].
pub fn write_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_nodes(g, &dir.join("nodes.csv"))?;

    let path = dir.join("edges.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    w.write_record(["src", "dst"]).map_err(|e| csv_error(&path, e))?;
    for &(u, v) in &g.edges {
        w.write_record([g.original_ids[u].to_string(), g.original_ids[v].to_string()])
            .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("splits.json");
    let ids = |v: &[usize]| v.iter().map(|&i| g.original_ids[i]).collect::<Vec<_>>();
    let splits = SplitsFile {
        train: ids(&g.masks.train),
        validation: ids(&g.masks.validation),
        test: ids(&g.masks.test),
        clean: ids(&g.masks.clean),
        n_classes: Some(g.n_classes),
    };
    let text = serde_json::to_string_pretty(&splits).expect("splits serialize");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

/// Writes only `nodes.csv`, e.g. after relabelling.
pub fn write_nodes(g: &Graph, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend((0..g.feature_dim()).map(|j| format!("f{j}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for i in 0..g.n_nodes {
        let mut row = vec![g.original_ids[i].to_string(), g.labels[i].to_string()];
        row.extend(g.features.row(i).iter().map(|x| x.to_string()));
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Stochastic block model
// ---------------------------------------------------------------------------

/// Role fractions for generated graphs. Test gets whatever is left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// Fraction of the validation set that forms the clean set.
    pub clean_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            validation_fraction: 0.25,
            clean_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n_per_class: usize,
    pub n_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise_sigma: f64,
    #[serde(default)]
    pub split: SplitSpec,
}

/// Three classes of 40 nodes with a clear community structure.
impl Default for SbmSpec {
    fn default() -> Self {
        Self {
            n_per_class: 40,
            n_classes: 3,
            p_in: 0.2,
            p_out: 0.02,
            feature_dim: 8,
            feature_noise_sigma: 0.5,
            split: SplitSpec::default(),
        }
    }
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::invalid(format!("sbm spec: {m}")));
        if self.n_per_class < 1 {
            return bad("n_per_class must be ≥ 1");
        }
        if self.n_classes < 2 {
            return bad("n_classes must be ≥ 2");
        }
        if !(self.p_in > 0.0 && self.p_in <= 1.0) {
            return bad("p_in must lie in (0, 1]");
        }
        if !(self.p_out >= 0.0 && self.p_out < 1.0) {
            return bad("p_out must lie in [0, 1)");
        }
        if self.p_in <= self.p_out {
            return bad("p_in must exceed p_out");
        }
        if self.feature_dim < self.n_classes {
            return bad("feature_dim must be ≥ n_classes");
        }
        if !(self.feature_noise_sigma >= 0.0) || !self.feature_noise_sigma.is_finite() {
            return bad("feature_noise_sigma must be finite and ≥ 0");
        }
        let s = &self.split;
        let frac_ok = |x: f64| (0.0..=1.0).contains(&x);
        if !frac_ok(s.train_fraction)
            || !frac_ok(s.validation_fraction)
            || !frac_ok(s.clean_fraction)
            || s.train_fraction + s.validation_fraction > 1.0 + 1e-12
        {
            return bad("split fractions must be in [0, 1] with train + validation ≤ 1");
        }
        Ok(())
    }
}

/// Generates a planted-partition graph. Nodes are laid out class by class;
/// features put a unit bump on the class coordinate plus Gaussian noise.
pub fn generate_sbm(spec: &SbmSpec, seed: u64) -> Result<Graph> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_per_class * spec.n_classes;
    let labels: Vec<usize> = (0..n).map(|i| i / spec.n_per_class).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                spec.p_in
            } else {
                spec.p_out
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let normal = Normal::new(0.0, spec.feature_noise_sigma).expect("sigma validated");
    let mut features = Array2::zeros((n, spec.feature_dim));
    for i in 0..n {
        for j in 0..spec.feature_dim {
            features[[i, j]] = normal.sample(&mut rng);
        }
        features[[i, labels[i]]] += 1.0;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (spec.split.train_fraction * n as f64).round() as usize;
    let n_val = ((spec.split.validation_fraction * n as f64).round() as usize).min(n - n_train);
    let n_clean = (spec.split.clean_fraction * n_val as f64).round() as usize;
    let train = order[..n_train].to_vec();
    let validation = order[n_train..n_train + n_val].to_vec();
    let test = order[n_train + n_val..].to_vec();
    let clean = validation[..n_clean].to_vec();
    Graph::new(
        features,
        edges,
        labels,
        spec.n_classes,
        RoleMasks::new(train, validation, test, clean),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn masks_none() -> RoleMasks {
        RoleMasks::default()
    }

    fn path3() -> Graph {
        Graph::new(
            Array2::zeros((3, 1)),
            [(0, 1), (1, 2)],
            vec![0, 1, 0],
            2,
            masks_none(),
        )
        .unwrap()
    }

    #[test]
    fn two_node_normalization() {
        let g = Graph::new(Array2::zeros((2, 1)), [(0, 1)], vec![0, 1], 2, masks_none()).unwrap();
        let a = normalize(&g).to_dense();
        assert_eq!(a, array![[0.5, 0.5], [0.5, 0.5]]);
    }

    #[test]
    fn single_node_is_identity() {
        let g = Graph::new(Array2::zeros((1, 1)), [], vec![0], 1, masks_none()).unwrap();
        assert_eq!(normalize(&g).to_dense(), array![[1.0]]);
    }

    #[test]
    fn path_entries() {
        let a = normalize(&path3());
        assert!((a.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((a.get(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.get(0, 2), 0.0);
    }

    #[test]
    fn reversed_duplicates_collapse() {
        let g = Graph::new(
            Array2::zeros((2, 1)),
            [(0, 1), (1, 0), (0, 1)],
            vec![0, 1],
            2,
            masks_none(),
        )
        .unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn triangle_remove_node_edges() {
        let g = Graph::new(
            Array2::zeros((3, 1)),
            [(0, 1), (1, 2), (0, 2)],
            vec![0, 0, 0],
            1,
            masks_none(),
        )
        .unwrap();
        let h = perturb(&g, Perturbation::RemoveNodeEdges(0)).unwrap();
        assert_eq!(h.edges(), &[(1, 2)]);
        assert_eq!(normalize(&h).row(0), (&[0usize][..], &[1.0][..]));
    }

    #[test]
    fn remove_only_edge_gives_identity() {
        let g = Graph::new(Array2::zeros((2, 1)), [(0, 1)], vec![0, 1], 2, masks_none()).unwrap();
        let h = perturb(&g, Perturbation::RemoveEdge(1, 0)).unwrap();
        assert_eq!(normalize(&h).to_dense(), Array2::<f64>::eye(2));
    }

    #[test]
    fn remove_missing_edge_fails() {
        let err = perturb(&path3(), Perturbation::RemoveEdge(0, 2)).unwrap_err();
        assert!(err.to_string().contains("edge not present"));
    }

    #[test]
    fn rejects_bad_masks_and_labels() {
        let err = Graph::new(
            Array2::zeros((2, 1)),
            [],
            vec![0, 1],
            2,
            RoleMasks::new(vec![0], vec![1], vec![], vec![0]),
        )
        .unwrap_err();
        assert!(err.to_string().contains("clean ⊄ validation"));
        assert!(Graph::new(Array2::zeros((2, 1)), [], vec![0, 2], 2, masks_none()).is_err());
        assert!(Graph::new(Array2::zeros((2, 1)), [(0, 0)], vec![0, 1], 2, masks_none()).is_err());
        assert!(Graph::new(Array2::zeros((2, 1)), [(0, 5)], vec![0, 1], 2, masks_none()).is_err());
        assert!(Graph::new(
            Array2::zeros((2, 1)),
            [],
            vec![0, 1],
            2,
            RoleMasks::new(vec![0], vec![0], vec![], vec![])
        )
        .is_err());
    }

    #[test]
    fn sbm_two_isolated_nodes() {
        let spec = SbmSpec {
            n_per_class: 1,
            n_classes: 2,
            p_in: 0.5,
            p_out: 0.0,
            feature_dim: 2,
            feature_noise_sigma: 0.1,
            split: SplitSpec::default(),
        };
        let g = generate_sbm(&spec, 3).unwrap();
        assert_eq!(g.n_nodes(), 2);
        assert!(g.edges().is_empty());
    }

    #[test]
    fn sbm_is_deterministic_and_validated() {
        let spec = SbmSpec {
            n_per_class: 10,
            n_classes: 3,
            p_in: 0.3,
            p_out: 0.05,
            feature_dim: 4,
            feature_noise_sigma: 0.5,
            split: SplitSpec::default(),
        };
        assert_eq!(generate_sbm(&spec, 9).unwrap(), generate_sbm(&spec, 9).unwrap());
        assert_ne!(generate_sbm(&spec, 9).unwrap(), generate_sbm(&spec, 10).unwrap());
        for bad in [
            SbmSpec { n_classes: 1, ..spec },
            SbmSpec { p_in: 0.0, ..spec },
            SbmSpec { p_out: 0.5, p_in: 0.4, ..spec },
            SbmSpec { feature_dim: 2, ..spec },
            SbmSpec { feature_noise_sigma: -1.0, ..spec },
            SbmSpec { n_per_class: 0, ..spec },
        ] {
            assert!(generate_sbm(&bad, 1).is_err());
        }
    }

    #[test]
    fn sbm_without_cross_edges() {
        let spec = SbmSpec {
            n_per_class: 15,
            n_classes: 4,
            p_in: 0.4,
            p_out: 0.0,
            feature_dim: 4,
            feature_noise_sigma: 0.2,
            split: SplitSpec::default(),
        };
        for seed in 0..5 {
            let g = generate_sbm(&spec, seed).unwrap();
            assert!(g
                .edges()
                .iter()
                .all(|&(u, v)| g.labels()[u] == g.labels()[v]));
        }
    }
}
