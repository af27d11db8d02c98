//! Random forest trained to separate normal rows from multiplicatively
//! corrupted copies of them.

use ndarray::{Array2, ArrayView2};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_finite};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Normal rows kept for training; the rest are dropped by seeded subsampling.
    pub max_rows: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_rows: 4000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf { class: u8 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split { feature, threshold, left, right } => {
                    id = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptRfModel {
    pub forest: Vec<DecisionTree>,
    pub n_trees: usize,
    pub corruption_seed: u64,
    pub n_features: usize,
}

/// Element-wise product with i.i.d. Uniform(0, 1) draws.
pub fn corrupt(x: ArrayView2<'_, f64>, seed: u64) -> Array2<f64> {
    let mut rng = rng::stream(seed, Purpose::Corruption, 0);
    let mut out = x.to_owned();
    out.iter_mut().for_each(|v| *v *= rng.random::<f64>());
    out
}

/// [`corrupt`] applied to `x − origin`, i.e. shrinking each row toward
/// `origin` instead of the coordinate zero. Same draws as [`corrupt`].
pub fn corrupt_about(x: ArrayView2<'_, f64>, origin: &[f64], seed: u64) -> Result<Array2<f64>> {
    check_dim(x.ncols(), origin.len())?;
    let mut shifted = x.to_owned();
    for mut row in shifted.rows_mut() {
        row.iter_mut().zip(origin).for_each(|(v, o)| *v -= o);
    }
    let mut out = corrupt(shifted.view(), seed);
    for mut row in out.rows_mut() {
        row.iter_mut().zip(origin).for_each(|(v, o)| *v += o);
    }
    Ok(out)
}

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct Builder<'a> {
    x: &'a ArrayView2<'a, f64>,
    y: &'a [u8],
    mtry: usize,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    /// Best Gini split on `feature`, as (weighted impurity, threshold).
    fn best_on(&self, rows: &[usize], feature: usize) -> Option<(f64, f64)> {
        let mut vals: Vec<(f64, u8)> = rows.iter().map(|&r| (self.x[[r, feature]], self.y[r])).collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = vals.len();
        let total_pos = vals.iter().filter(|v| v.1 == 1).count();
        let mut left_pos = 0;
        let mut best: Option<(f64, f64)> = None;
        for k in 1..n {
            left_pos += vals[k - 1].1 as usize;
            if vals[k].0 <= vals[k - 1].0 {
                continue;
            }
            let imp = k as f64 * gini(left_pos, k) + (n - k) as f64 * gini(total_pos - left_pos, n - k);
            if best.is_none_or(|b| imp < b.0) {
                let mid = 0.5 * (vals[k - 1].0 + vals[k].0);
                // Guard against the midpoint rounding onto the upper value.
                let thr = if mid < vals[k].0 { mid } else { vals[k - 1].0 };
                best = Some((imp, thr));
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let pos = rows.iter().filter(|&&r| self.y[r] == 1).count();
        let majority = u8::from(2 * pos > rows.len());
        self.nodes.push(TreeNode::Leaf { class: majority });
        if pos == 0 || pos == rows.len() {
            return id;
        }
        let mut features: Vec<usize> = (0..self.x.ncols()).collect();
        features.shuffle(rng);
        let mut best: Option<(f64, usize, f64)> = None;
        for (k, &f) in features.iter().enumerate() {
            // Keep drawing past `mtry` only while no valid split exists.
            if k >= self.mtry && best.is_some() {
                break;
            }
            if let Some((imp, thr)) = self.best_on(&rows, f) {
                if best.is_none_or(|b| imp < b.0) {
                    best = Some((imp, f, thr));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[[i, feature]] <= threshold);
        let left = self.grow(l, rng);
        let right = self.grow(r, rng);
        self.nodes[id] = TreeNode::Split { feature, threshold, left, right };
        id
    }
}

/// Fully grown CART tree with Gini splits and `mtry` features tried per node.
pub fn fit_tree(x: ArrayView2<'_, f64>, y: &[u8], rows: Vec<usize>, mtry: usize, rng: &mut ChaCha8Rng) -> DecisionTree {
    let mut b = Builder { x: &x, y, mtry: mtry.max(1), nodes: Vec::new() };
    b.grow(rows, rng);
    DecisionTree { nodes: b.nodes }
}

pub fn corrupt_rf_fit(x_normal: ArrayView2<'_, f64>, params: &ForestParams, seed: u64) -> Result<CorruptRfModel> {
    corrupt_rf_fit_about(x_normal, &vec![0.0; x_normal.ncols()], params, seed)
}

/// As [`corrupt_rf_fit`], with the corruption shrinking rows toward `origin`.
/// For standardized inputs, passing the image of the physical zero makes the
/// corruption act on the measurements themselves.
pub fn corrupt_rf_fit_about(
    x_normal: ArrayView2<'_, f64>,
    origin: &[f64],
    params: &ForestParams,
    seed: u64,
) -> Result<CorruptRfModel> {
    let n_all = x_normal.nrows();
    if n_all < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n_all });
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be positive".into()));
    }
    check_finite(x_normal)?;
    let normal = if n_all > params.max_rows {
        let mut rng = rng::stream(seed, Purpose::Subsample, 1);
        let mut keep = index::sample(&mut rng, n_all, params.max_rows).into_vec();
        keep.sort_unstable();
        x_normal.select(ndarray::Axis(0), &keep)
    } else {
        x_normal.to_owned()
    };
    let corrupted = corrupt_about(normal.view(), origin, seed)?;
    if corrupted == normal {
        return Err(Error::DegenerateLabels);
    }
    let n = normal.nrows();
    let d = normal.ncols();
    let data = ndarray::concatenate![ndarray::Axis(0), normal, corrupted];
    let y: Vec<u8> = (0..2 * n).map(|i| u8::from(i >= n)).collect();
    let mtry = ((d as f64).sqrt().floor() as usize).max(1);
    let view = data.view();
    let forest = (0..params.n_trees)
        .map(|t| {
            let mut rng = rng::stream(seed, Purpose::ForestTree, t as u64);
            let rows: Vec<usize> = (0..2 * n).map(|_| rng.random_range(0..2 * n)).collect();
            fit_tree(view, &y, rows, mtry, &mut rng)
        })
        .collect();
    Ok(CorruptRfModel { forest, n_trees: params.n_trees, corruption_seed: seed, n_features: d })
}

impl CorruptRfModel {
    /// Fraction of trees voting "corrupted".
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features, x.len())?;
        let votes: usize = self.forest.iter().map(|t| t.predict(x) as usize).sum();
        Ok(votes as f64 / self.forest.len() as f64)
    }

    pub fn score_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_dim(self.n_features, x.ncols())?;
        x.rows().into_iter().map(|r| self.score(&r.to_vec())).collect()
    }
}

pub fn corrupt_rf_score(model: &CorruptRfModel, x: &[f64]) -> Result<f64> {
    model.score(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn data(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng::stream(seed, Purpose::Subsample, 77);
        Array2::from_shape_fn((n, d), |_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            3.0 + z
        })
    }

    #[test]
    fn corruption_shape_and_zero_rows() {
        let x = array![[2.0, 4.0], [0.0, 0.0]];
        let c = corrupt(x.view(), 1);
        assert_eq!(c.dim(), x.dim());
        assert_eq!(c.row(1).to_vec(), vec![0.0, 0.0]);
        assert!(c[[0, 0]] >= 0.0 && c[[0, 0]] < 2.0);
    }

    #[test]
    fn corruption_halves_in_expectation() {
        let x = Array2::from_elem((100_000, 1), 1.0);
        let c = corrupt(x.view(), 3);
        let mean = c.mean().unwrap();
        let se = (1.0f64 / 12.0).sqrt() / (100_000f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn all_zero_data_is_degenerate() {
        let x = Array2::zeros((10, 2));
        assert!(matches!(corrupt_rf_fit(x.view(), &ForestParams::default(), 1), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn single_tree_fits_training_set() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0, 0, 1, 1];
        let mut rng = rng::stream(0, Purpose::ForestTree, 0);
        let t = fit_tree(x.view(), &y, vec![0, 1, 2, 3], 1, &mut rng);
        assert_eq!((0..4).map(|i| t.predict(&[i as f64])).collect::<Vec<_>>(), vec![0, 0, 1, 1]);
        assert_eq!(t.predict(&[1.6]), 1);
    }

    #[test]
    fn normal_rows_low_and_shrunk_rows_high() {
        let x = data(400, 3, 2);
        let m = corrupt_rf_fit(x.view(), &ForestParams { n_trees: 50, ..Default::default() }, 7).unwrap();
        let low = m.score_matrix(x.view()).unwrap().iter().filter(|&&s| s < 0.5).count();
        assert!(low as f64 >= 0.95 * 400.0);
        assert!(m.score(&[3.0, 3.0, 3.0]).unwrap() < 0.5);
        assert!(m.score(&[0.3, 0.2, 0.5]).unwrap() > 0.5);
    }
}
