//! Regression random forest: unpruned CART trees on bootstrap samples,
//! out-of-bag (OOB) predictions and permutation importance.
//!
//! Every tree draws its bootstrap sample and candidate features from its own
//! seeded substream, so a fitted forest depends only on the data and the
//! parameters, never on thread scheduling or on how many trees follow it.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, stream};

pub const FORMAT: &str = "apte-forest";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means max(p / 3, 1).
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub seed: u64,
    /// Feature offered as a split candidate at every node, on top of the
    /// `mtry` sampled ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub always_split: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            mtry: None,
            min_node_size: 5,
            seed: 0,
            always_split: None,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry.unwrap_or((n_features / 3).max(1))
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidInput("n_trees must be at least 1".into()));
        }
        if self.min_node_size == 0 {
            return Err(Error::InvalidInput("min_node_size must be at least 1".into()));
        }
        let m = self.resolved_mtry(n_features);
        if m == 0 || m > n_features {
            return Err(Error::InvalidInput(format!(
                "mtry {m} must lie in [1, {n_features}]"
            )));
        }
        if let Some(f) = self.always_split.filter(|&f| f >= n_features) {
            return Err(Error::InvalidInput(format!(
                "always-split feature {f} out of range for {n_features} features"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
        size: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    fn uses_feature(&self, f: usize) -> bool {
        match self {
            Node::Leaf { .. } => false,
            Node::Split {
                feature,
                left,
                right,
                ..
            } => *feature == f || left.uses_feature(f) || right.uses_feature(f),
        }
    }
}

/// Preorder node of the flattened tree used for prediction. The left child
/// of a split at index i is i + 1.
#[derive(Debug, Clone, Copy, PartialEq)]
struct FlatNode {
    /// Split feature, or `LEAF`.
    feature: u32,
    right: u32,
    /// Split threshold, or the leaf value.
    value: f64,
}

const LEAF: u32 = u32::MAX;

fn flatten(node: &Node, out: &mut Vec<FlatNode>) {
    match node {
        Node::Leaf { value, .. } => out.push(FlatNode {
            feature: LEAF,
            right: 0,
            value: *value,
        }),
        Node::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            let at = out.len();
            out.push(FlatNode {
                feature: *feature as u32,
                right: 0,
                value: *threshold,
            });
            flatten(left, out);
            out[at].right = out.len() as u32;
            flatten(right, out);
        }
    }
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    root: Node,
    oob_rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TreeDocument", into = "TreeDocument")]
pub struct Tree {
    pub root: Node,
    /// Training rows left out of this tree's bootstrap sample.
    pub oob_rows: Vec<usize>,
    flat: Vec<FlatNode>,
}

impl From<TreeDocument> for Tree {
    fn from(doc: TreeDocument) -> Self {
        Tree::new(doc.root, doc.oob_rows)
    }
}

impl From<Tree> for TreeDocument {
    fn from(tree: Tree) -> Self {
        TreeDocument {
            root: tree.root,
            oob_rows: tree.oob_rows,
        }
    }
}

impl Tree {
    pub fn new(root: Node, oob_rows: Vec<usize>) -> Tree {
        let mut flat = Vec::new();
        flatten(&root, &mut flat);
        Tree { root, oob_rows, flat }
    }

    /// Sum over `donors` of the prediction for `x` with the features flagged
    /// in `replace` taken from each donor row. The donor indices are
    /// partitioned in place, only at splits on replaced features.
    fn donor_sum(&self, i: usize, x: &[f64], replace: &[bool], donors: &[Vec<f64>], idx: &mut [usize]) -> f64 {
        let node = self.flat[i];
        if node.feature == LEAF {
            return node.value * idx.len() as f64;
        }
        let f = node.feature as usize;
        if !replace[f] {
            let next = if x[f] <= node.value { i + 1 } else { node.right as usize };
            return self.donor_sum(next, x, replace, donors, idx);
        }
        let mut boundary = 0;
        for k in 0..idx.len() {
            if donors[idx[k]][f] <= node.value {
                idx.swap(k, boundary);
                boundary += 1;
            }
        }
        let (left, right) = idx.split_at_mut(boundary);
        let mut total = 0.0;
        if !left.is_empty() {
            total += self.donor_sum(i + 1, x, replace, donors, left);
        }
        if !right.is_empty() {
            total += self.donor_sum(node.right as usize, x, replace, donors, right);
        }
        total
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let node = self.flat[i];
            if node.feature == LEAF {
                return node.value;
            }
            i = if x[node.feature as usize] <= node.value {
                i + 1
            } else {
                node.right as usize
            };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub feature_names: Vec<String>,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
    /// Mean prediction over the trees for which the row is out of bag.
    pub oob_predictions: Vec<Option<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Document<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    forest: T,
}

/// Column-major copy of the design matrix with each column's row order.
struct Columns {
    cols: Vec<Vec<f64>>,
    /// Row indices sorted by value, per feature.
    sorted: Vec<Vec<u32>>,
    n_rows: usize,
}

impl Columns {
    fn new(x: &[Vec<f64>], n_features: usize) -> Result<Self> {
        let mut cols = vec![Vec::with_capacity(x.len()); n_features];
        for (r, row) in x.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::InvalidInput(format!(
                    "row {r} has {} features, expected {n_features}",
                    row.len()
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::MissingCell {
                        row: r,
                        column: c.to_string(),
                    });
                }
                cols[c].push(v);
            }
        }
        let sorted = cols
            .iter()
            .map(|col| {
                let mut order: Vec<u32> = (0..x.len() as u32).collect();
                order.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
                order
            })
            .collect();
        Ok(Columns {
            cols,
            sorted,
            n_rows: x.len(),
        })
    }
}

/// Grows one tree on a bootstrap sample. Every feature keeps the sample
/// positions in value order; a node owns the same contiguous range in each
/// of these lists, and a split stably partitions every list.
struct Grower<'a, R> {
    x: &'a Columns,
    y: &'a [f64],
    mtry: usize,
    min_node_size: usize,
    always_split: Option<usize>,
    rng: R,
    /// Training row of each sample position.
    rows: Vec<usize>,
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    buffer: Vec<u32>,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl<R: Rng> Grower<'_, R> {
    fn grow(&mut self, lo: usize, hi: usize) -> Node {
        let n = hi - lo;
        let y = self.y;
        let rows = &self.rows;
        let node = &self.order[0][lo..hi];
        let sum: f64 = node.iter().map(|&q| y[rows[q as usize]]).sum();
        let mean = sum / n as f64;
        let first = y[rows[node[0] as usize]];
        if n <= self.min_node_size || node.iter().all(|&q| y[rows[q as usize]] == first) {
            return Node::Leaf { value: mean, size: n };
        }

        // Scores use node-centered targets: the centered left sum s gives a
        // between-children sum of squares of s² · n / (nl · nr). Scores within
        // a relative tolerance of the node's total sum of squares count as
        // ties, so rounding noise cannot decide between equivalent splits.
        let node_ss: f64 = node.iter().map(|&q| (y[rows[q as usize]] - mean).powi(2)).sum();
        let tolerance = node_ss * 1e-10;
        let p = self.x.cols.len();
        let mut candidates = index::sample(&mut self.rng, p, self.mtry).into_vec();
        if let Some(f) = self.always_split {
            if !candidates.contains(&f) {
                candidates.push(f);
            }
        }
        // ascending scan order makes "first best" the lowest feature and threshold
        candidates.sort_unstable();
        let mut best: Option<BestSplit> = None;
        for feature in candidates {
            let col = &self.x.cols[feature];
            let seg = &self.order[feature][lo..hi];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                let r = rows[seg[k] as usize];
                left_sum += y[r] - mean;
                let (lo_v, hi_v) = (col[r], col[rows[seg[k + 1] as usize]]);
                if lo_v == hi_v {
                    continue;
                }
                let nl = (k + 1) as f64;
                let nr = (n - k - 1) as f64;
                let score = left_sum * left_sum * n as f64 / (nl * nr);
                if best.as_ref().is_none_or(|b| score > b.score + tolerance) {
                    best = Some(BestSplit {
                        score,
                        feature,
                        threshold: lo_v + (hi_v - lo_v) / 2.0,
                    });
                }
            }
        }

        let Some(split) = best.filter(|b| b.score > tolerance) else {
            return Node::Leaf { value: mean, size: n };
        };
        let col = &self.x.cols[split.feature];
        let mut boundary = 0;
        for &q in &self.order[split.feature][lo..hi] {
            let left = col[self.rows[q as usize]] <= split.threshold;
            self.goes_left[q as usize] = left;
            boundary += usize::from(left);
        }
        for list in &mut self.order {
            self.buffer.clear();
            let mut write = lo;
            for k in lo..hi {
                let q = list[k];
                if self.goes_left[q as usize] {
                    list[write] = q;
                    write += 1;
                } else {
                    self.buffer.push(q);
                }
            }
            list[write..hi].copy_from_slice(&self.buffer);
        }
        let left = Box::new(self.grow(lo, lo + boundary));
        let right = Box::new(self.grow(lo + boundary, hi));
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        }
    }
}

fn fit_tree(x: &Columns, y: &[f64], mtry: usize, params: &ForestParams, t: usize) -> Tree {
    let n = x.n_rows;
    let mut boot_rng = seed::rng(params.seed, &[stream::BOOTSTRAP, t as u64]);
    let rows: Vec<usize> = (0..n).map(|_| boot_rng.random_range(0..n)).collect();
    // sample positions of each row, so value order carries over from the
    // global per-feature sort
    let mut counts = vec![0u32; n + 1];
    for &r in &rows {
        counts[r + 1] += 1;
    }
    let oob_rows = (0..n).filter(|&i| counts[i + 1] == 0).collect();
    for i in 0..n {
        counts[i + 1] += counts[i];
    }
    let mut positions = vec![0u32; n];
    let mut fill = counts.clone();
    for (q, &r) in rows.iter().enumerate() {
        positions[fill[r] as usize] = q as u32;
        fill[r] += 1;
    }
    let order = x
        .sorted
        .iter()
        .map(|sorted| {
            sorted
                .iter()
                .flat_map(|&r| &positions[counts[r as usize] as usize..counts[r as usize + 1] as usize])
                .copied()
                .collect()
        })
        .collect();
    let mut grower = Grower {
        x,
        y,
        mtry,
        min_node_size: params.min_node_size,
        always_split: params.always_split,
        rng: seed::rng(params.seed, &[stream::MTRY, t as u64]),
        rows,
        order,
        goes_left: vec![false; n],
        buffer: Vec::with_capacity(n),
    };
    Tree::new(grower.grow(0, n), oob_rows)
}

/// Fits a forest on rows `x` (one feature vector per row) and targets `y`.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    feature_names: &[String],
    params: &ForestParams,
) -> Result<Forest> {
    let p = feature_names.len();
    params.validate(p)?;
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 * params.min_node_size {
        return Err(Error::TooShort {
            needed: 2 * params.min_node_size,
            got: x.len(),
        });
    }
    let cols = Columns::new(x, p).map_err(|e| match e {
        Error::MissingCell { row, column } => Error::MissingCell {
            row,
            column: column
                .parse::<usize>()
                .ok()
                .and_then(|c| feature_names.get(c).cloned())
                .unwrap_or(column),
        },
        other => other,
    })?;
    if let Some(r) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::MissingCell {
            row: r,
            column: "target".into(),
        });
    }
    if y.iter().all(|&v| v == y[0]) {
        log::warn!("constant target: every tree is a single leaf");
    }

    let mtry = params.resolved_mtry(p);
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| fit_tree(&cols, y, mtry, params, t))
        .collect();

    let n = x.len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for tree in &trees {
        for &r in &tree.oob_rows {
            sums[r] += tree.predict(&x[r]);
            counts[r] += 1;
        }
    }
    let oob_predictions = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect();

    Ok(Forest {
        feature_names: feature_names.to_vec(),
        params: ForestParams {
            mtry: Some(mtry),
            ..*params
        },
        trees,
        oob_predictions,
    })
}

impl Forest {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::InvalidInput(format!(
                "feature vector has {} values, forest expects {}",
                x.len(),
                self.n_features()
            )));
        }
        if let Some(c) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "missing value for feature '{}'",
                self.feature_names[c]
            )));
        }
        Ok(())
    }

    /// Mean of the per-tree leaf values.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_row(x)?;
        Ok(self.predict_unchecked(x))
    }

    pub(crate) fn predict_unchecked(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    /// Mean prediction for `x` after replacing the features flagged in
    /// `replace` with the values of each donor row, averaged over donors.
    pub(crate) fn predict_over_donors(&self, x: &[f64], replace: &[bool], donors: &[Vec<f64>]) -> f64 {
        let mut idx: Vec<usize> = Vec::with_capacity(donors.len());
        let mut total = 0.0;
        for tree in &self.trees {
            idx.clear();
            idx.extend(0..donors.len());
            total += tree.donor_sum(0, x, replace, donors, &mut idx) / donors.len() as f64;
        }
        total / self.trees.len() as f64
    }

    pub fn predict_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        for r in rows {
            self.check_row(r)?;
        }
        Ok(rows.par_iter().map(|r| self.predict_unchecked(r)).collect())
    }

    /// Whether any tree splits on feature `f`.
    pub fn uses_feature(&self, f: usize) -> bool {
        self.trees.iter().any(|t| t.root.uses_feature(f))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Document {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            forest: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let doc: Document<Forest> = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != FORMAT_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported forest document {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc.forest)
    }
}

/// Mean squared error over rows that have an OOB prediction.
pub fn oob_mse(forest: &Forest, y: &[f64]) -> Result<f64> {
    let (sum, count) = forest
        .oob_predictions
        .iter()
        .zip(y)
        .filter_map(|(p, &t)| p.map(|p| (p - t).powi(2)))
        .fold((0.0, 0usize), |(s, c), e| (s + e, c + 1));
    if count == 0 {
        return Err(Error::Estimation("no row has an out-of-bag prediction".into()));
    }
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Importance {
    pub feature: String,
    /// Mean increase in OOB squared error when the feature is permuted.
    pub mean_increase_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub entries: Vec<Importance>,
}

impl ImportanceTable {
    /// Feature indices ordered by decreasing importance, lowest index first on ties.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by(|&a, &b| {
            self.entries[b]
                .mean_increase_mse
                .total_cmp(&self.entries[a].mean_increase_mse)
                .then(a.cmp(&b))
        });
        idx
    }

    pub fn get(&self, feature: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.feature == feature)
            .map(|e| e.mean_increase_mse)
    }
}

/// Per tree, permutes one feature at a time among that tree's OOB rows and
/// records the increase in the tree's OOB squared error; increases are
/// averaged over trees.
pub fn permutation_importance(forest: &Forest, x: &[Vec<f64>], y: &[f64]) -> Result<ImportanceTable> {
    let p = forest.n_features();
    if x.len() != y.len() || x.len() != forest.oob_predictions.len() {
        return Err(Error::InvalidInput(
            "importance data must be the training data of the forest".into(),
        ));
    }
    let per_tree: Vec<Option<Vec<f64>>> = forest
        .trees
        .par_iter()
        .enumerate()
        .map(|(t, tree)| {
            let oob = &tree.oob_rows;
            if oob.is_empty() {
                return None;
            }
            let mut rng = seed::rng(forest.params.seed, &[stream::PERMUTE, t as u64]);
            let base: f64 = oob
                .iter()
                .map(|&r| (tree.predict(&x[r]) - y[r]).powi(2))
                .sum::<f64>();
            let mut row = vec![0.0; p];
            let increases = (0..p)
                .map(|f| {
                    let mut shuffled: Vec<f64> = oob.iter().map(|&r| x[r][f]).collect();
                    shuffled.shuffle(&mut rng);
                    let permuted: f64 = oob
                        .iter()
                        .zip(&shuffled)
                        .map(|(&r, &v)| {
                            row.copy_from_slice(&x[r]);
                            row[f] = v;
                            (tree.predict(&row) - y[r]).powi(2)
                        })
                        .sum();
                    (permuted - base) / oob.len() as f64
                })
                .collect();
            Some(increases)
        })
        .collect();

    let mut totals = vec![0.0; p];
    let mut used = 0usize;
    for inc in per_tree.into_iter().flatten() {
        used += 1;
        for (t, v) in totals.iter_mut().zip(inc) {
            *t += v;
        }
    }
    if used == 0 {
        return Err(Error::Estimation("no tree has out-of-bag rows".into()));
    }
    Ok(ImportanceTable {
        entries: forest
            .feature_names
            .iter()
            .zip(totals)
            .map(|(name, total)| Importance {
                feature: name.clone(),
                mean_increase_mse: total / used as f64,
            })
            .collect(),
    })
}
