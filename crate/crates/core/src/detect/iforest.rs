//! Isolation forest. The score is the mean path length over trees, so
//! higher means more normal.

use ndarray::ArrayView2;
use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, check_finite};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IforestParams {
    pub n_trees: usize,
    pub subsample_size: usize,
    pub contamination: f64,
}

impl Default for IforestParams {
    fn default() -> Self {
        Self { n_trees: 200, subsample_size: 256, contamination: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum INode {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: usize, right: usize },
}

/// Arena of nodes; index 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree {
    pub nodes: Vec<INode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel {
    pub trees: Vec<IsolationTree>,
    pub n_trees: usize,
    pub subsample_size: usize,
    pub contamination: f64,
    pub n_features: usize,
    pub seed: u64,
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

/// Average unsuccessful-search path length in a binary search tree of `m` nodes.
pub fn c_factor(m: usize) -> f64 {
    if m <= 1 {
        return 0.0;
    }
    2.0 * harmonic(m - 1) - 2.0 * (m - 1) as f64 / m as f64
}

pub fn max_depth(subsample_size: usize) -> usize {
    (subsample_size as f64).log2().ceil() as usize
}

/// Draws a split for `rows`: a uniformly chosen non-constant feature and a
/// uniform value in `[min, max)`. `None` when every feature is constant.
pub(crate) fn draw_split(
    x: &ArrayView2<'_, f64>,
    rows: &[usize],
    rng: &mut ChaCha8Rng,
) -> Option<(usize, f64)> {
    let ranges: Vec<(usize, f64, f64)> = (0..x.ncols())
        .filter_map(|f| {
            let (lo, hi) = rows
                .iter()
                .map(|&r| x[[r, f]])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            (hi > lo).then_some((f, lo, hi))
        })
        .collect();
    if ranges.is_empty() {
        return None;
    }
    let (f, lo, hi) = ranges[rng.random_range(0..ranges.len())];
    Some((f, rng.random_range(lo..hi)))
}

fn grow(
    x: &ArrayView2<'_, f64>,
    rows: Vec<usize>,
    depth: usize,
    limit: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<INode>,
) -> usize {
    let id = nodes.len();
    nodes.push(INode::Leaf { size: rows.len() });
    if rows.len() <= 1 || depth >= limit {
        return id;
    }
    let Some((feature, value)) = draw_split(x, &rows, rng) else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, feature]] <= value);
    let left = grow(x, l, depth + 1, limit, rng, nodes);
    let right = grow(x, r, depth + 1, limit, rng, nodes);
    nodes[id] = INode::Split { feature, value, left, right };
    id
}

pub fn iforest_fit(x: ArrayView2<'_, f64>, params: &IforestParams, seed: u64) -> Result<IsolationForestModel> {
    let n = x.nrows();
    if params.subsample_size < 2 {
        return Err(Error::InvalidParameter("subsample_size must be at least 2".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("n_trees must be positive".into()));
    }
    if n < 2 {
        return Err(Error::TooFewSamples { need: 2, got: n });
    }
    check_finite(x)?;
    let first = x.row(0);
    if x.rows().into_iter().all(|r| r == first) {
        return Err(Error::DegenerateSubsample);
    }
    let psi = params.subsample_size.min(n);
    let limit = max_depth(psi);
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = rng::stream(seed, Purpose::IsolationTree, t as u64);
            let rows = index::sample(&mut rng, n, psi).into_vec();
            let mut nodes = Vec::new();
            grow(&x, rows, 0, limit, &mut rng, &mut nodes);
            IsolationTree { nodes }
        })
        .collect();
    Ok(IsolationForestModel {
        trees,
        n_trees: params.n_trees,
        subsample_size: psi,
        contamination: params.contamination,
        n_features: x.ncols(),
        seed,
    })
}

impl IsolationTree {
    pub fn path_length(&self, x: &[f64]) -> f64 {
        let mut id = 0;
        let mut depth = 0.0;
        loop {
            match self.nodes[id] {
                INode::Leaf { size } => return depth + c_factor(size),
                INode::Split { feature, value, left, right } => {
                    id = if x[feature] <= value { left } else { right };
                    depth += 1.0;
                }
            }
        }
    }
}

impl IsolationForestModel {
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.n_features, x.len())?;
        Ok(self.trees.iter().map(|t| t.path_length(x)).sum::<f64>() / self.trees.len() as f64)
    }

    pub fn score_matrix(&self, x: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        check_dim(self.n_features, x.ncols())?;
        x.rows().into_iter().map(|r| self.score(&r.to_vec())).collect()
    }
}

pub fn iforest_score(model: &IsolationForestModel, x: &[f64]) -> Result<f64> {
    model.score(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn c_of_two_is_one() {
        assert_eq!(c_factor(2), 1.0);
        assert_eq!(c_factor(1), 0.0);
        assert_eq!(max_depth(256), 8);
    }

    #[test]
    fn two_points_split_at_depth_one() {
        let x = array![[0.0, 1.0], [1.0, 3.0]];
        let params = IforestParams { n_trees: 1, subsample_size: 2, contamination: 0.0 };
        let m = iforest_fit(x.view(), &params, 5).unwrap();
        assert_eq!(m.score(&[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(m.score(&[1.0, 3.0]).unwrap(), 1.0);
    }

    #[test]
    fn constant_data_is_degenerate() {
        let x = Array2::from_elem((5, 2), 3.0);
        assert!(matches!(iforest_fit(x.view(), &IforestParams::default(), 1), Err(Error::DegenerateSubsample)));
    }

    #[test]
    fn outlier_has_shortest_path() {
        for seed in 0..100 {
            let mut values: Vec<f64> = (0..9).map(|i| i as f64 * 0.1).collect();
            values.push(10.0 * 0.8 + 1.0);
            let x = Array2::from_shape_vec((10, 1), values).unwrap();
            let m = iforest_fit(x.view(), &IforestParams::default(), seed).unwrap();
            let scores = m.score_matrix(x.view()).unwrap();
            let outlier = scores[9];
            assert!(scores[..9].iter().all(|&s| s > outlier), "seed {seed}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let x = Array2::from_shape_fn((50, 3), |(i, j)| ((i * 7 + j * 3) % 11) as f64);
        let a = iforest_fit(x.view(), &IforestParams::default(), 9).unwrap();
        let b = iforest_fit(x.view(), &IforestParams::default(), 9).unwrap();
        assert_eq!(a, b);
    }
}
