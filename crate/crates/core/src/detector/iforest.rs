//! Isolation forest over a fixed subset of feature columns.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::xmeans::Points;
use crate::scalar::Scalar;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average path length of an unsuccessful binary search tree lookup over
/// `n` items, used to normalize isolation depths.
pub fn average_path_length(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let n = n as f64;
            2.0 * ((n - 1.0).ln() + EULER_GAMMA) - 2.0 * (n - 1.0) / n
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Node<T> {
    Split {
        feature: u32,
        threshold: T,
        left: u32,
        right: u32,
    },
    /// Depth plus the expected remaining depth of the unsplit items.
    Leaf { path: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> IsolationTree<T> {
    fn fit(points: Points<'_, T>, sample: Vec<usize>, height_limit: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        let mut features: Vec<usize> = (0..points.dim).collect();
        tree.grow(points, sample, 0, height_limit, &mut features, rng);
        tree
    }

    fn grow(
        &mut self,
        points: Points<'_, T>,
        items: Vec<usize>,
        depth: usize,
        height_limit: usize,
        features: &mut [usize],
        rng: &mut ChaCha8Rng,
    ) -> u32 {
        let id = self.nodes.len() as u32;
        let leaf = |n: usize| Node::Leaf {
            path: T::lit(depth as f64 + average_path_length(n)),
        };
        if depth >= height_limit || items.len() <= 1 {
            self.nodes.push(leaf(items.len()));
            return id;
        }
        features.shuffle(rng);
        let mut chosen = None;
        for &f in features.iter() {
            let (lo, hi) = items.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &i| {
                let v = points.get(i)[f];
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                chosen = Some((f, lo, hi));
                break;
            }
        }
        let Some((feature, lo, hi)) = chosen else {
            self.nodes.push(leaf(items.len()));
            return id;
        };
        let u = T::lit(rng.gen::<f64>());
        let mut threshold = lo + u * (hi - lo);
        if threshold <= lo {
            // keep both sides non-empty
            threshold = hi.min(lo + (hi - lo) * T::lit(0.5));
        }
        let (left_items, right_items): (Vec<usize>, Vec<usize>) =
            items.into_iter().partition(|&i| points.get(i)[feature] < threshold);
        self.nodes.push(Node::Leaf { path: T::zero() });
        let left = self.grow(points, left_items, depth + 1, height_limit, features, rng);
        let right = self.grow(points, right_items, depth + 1, height_limit, features, rng);
        self.nodes[id as usize] = Node::Split {
            feature: feature as u32,
            threshold,
            left,
            right,
        };
        id
    }

    /// `point` holds only the columns the forest was trained on.
    pub fn path_length(&self, point: &[T]) -> T {
        let mut node = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { path } => return path,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if point[feature as usize] < threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationForestParams {
    pub n_trees: usize,
    pub max_samples: usize,
}

impl Default for IsolationForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_samples: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForestModel<T> {
    trees: Vec<IsolationTree<T>>,
    subsample_size: usize,
    /// Original feature indices of the columns the trees split on.
    trained_on: Vec<usize>,
}

impl<T: Scalar> IsolationForestModel<T> {
    /// Fits on `points`, whose columns correspond to `trained_on`.
    pub(crate) fn fit(
        points: Points<'_, T>,
        trained_on: Vec<usize>,
        params: IsolationForestParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n = points.len();
        let psi = params.max_samples.min(n).max(1);
        let height_limit = (psi as f64).log2().ceil() as usize;
        let all: Vec<usize> = (0..n).collect();
        let trees = (0..params.n_trees)
            .map(|_| {
                let sample = if psi == n {
                    all.clone()
                } else {
                    rand::seq::index::sample(rng, n, psi).into_vec()
                };
                IsolationTree::fit(points, sample, height_limit, rng)
            })
            .collect();
        Self {
            trees,
            subsample_size: psi,
            trained_on,
        }
    }

    pub fn subsample_size(&self) -> usize {
        self.subsample_size
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trained_on(&self) -> &[usize] {
        &self.trained_on
    }

    pub fn height_limit(&self) -> usize {
        (self.subsample_size as f64).log2().ceil() as usize
    }

    pub fn expected_path_length(&self, point: &[T]) -> T {
        let total: T = self.trees.iter().map(|t| t.path_length(point)).sum();
        total / T::from_count(self.trees.len().max(1))
    }

    /// `2^(-E[h] / c(psi))`, in `(0, 1)`. A forest over a single sample is
    /// uninformative and scores 0.5.
    pub fn score(&self, point: &[T]) -> T {
        let c = average_path_length(self.subsample_size);
        if c <= 0.0 {
            return T::lit(0.5);
        }
        let h = self.expected_path_length(point).as_f64();
        T::lit(2f64.powf(-h / c))
    }
}
