//! Greedy binary tree growth shared by the stump, CART and boosting
//! learners.

use super::tree::{Node, Tree};

/// What the tree fits and how nodes are scored.
pub(crate) enum Target<'a> {
    /// Gini impurity over binary labels; leaf = positive fraction.
    Classes(&'a [bool]),
    /// Squared error over residuals; leaf = sum(residual) / sum(hessian).
    Newton {
        residual: &'a [f64],
        hessian: &'a [f64],
    },
}

pub(crate) struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Default, Clone, Copy)]
struct Stats {
    n: f64,
    pos: f64,
    sum: f64,
    sum_sq: f64,
}

impl Target<'_> {
    fn stats(&self, i: usize) -> Stats {
        match self {
            Target::Classes(y) => Stats {
                n: 1.0,
                pos: if y[i] { 1.0 } else { 0.0 },
                ..Stats::default()
            },
            Target::Newton { residual, .. } => Stats {
                n: 1.0,
                sum: residual[i],
                sum_sq: residual[i] * residual[i],
                ..Stats::default()
            },
        }
    }

    fn total(&self, idx: &[usize]) -> Stats {
        idx.iter().fold(Stats::default(), |acc, &i| acc.add(self.stats(i)))
    }

    /// Node impurity times sample count; lower is better.
    fn cost(&self, s: Stats) -> f64 {
        match self {
            Target::Classes(_) => {
                // n * 2p(1-p), arranged so mirrored nodes cost the same
                2.0 * s.pos * (s.n - s.pos) / s.n
            }
            Target::Newton { .. } => s.sum_sq - s.sum * s.sum / s.n,
        }
    }

    fn is_pure(&self, s: Stats) -> bool {
        match self {
            Target::Classes(_) => s.pos == 0.0 || s.pos == s.n,
            Target::Newton { .. } => self.cost(s) <= 1e-12 * s.n.max(1.0),
        }
    }

    fn leaf_value(&self, idx: &[usize], s: Stats) -> f64 {
        match self {
            Target::Classes(_) => s.pos / s.n,
            Target::Newton { hessian, .. } => {
                let h: f64 = idx.iter().map(|&i| hessian[i]).sum();
                if h.abs() < 1e-150 {
                    0.0
                } else {
                    s.sum / h
                }
            }
        }
    }
}

impl Stats {
    fn add(self, o: Stats) -> Stats {
        Stats {
            n: self.n + o.n,
            pos: self.pos + o.pos,
            sum: self.sum + o.sum,
            sum_sq: self.sum_sq + o.sum_sq,
        }
    }

    fn sub(self, o: Stats) -> Stats {
        Stats {
            n: self.n - o.n,
            pos: self.pos - o.pos,
            sum: self.sum - o.sum,
            sum_sq: self.sum_sq - o.sum_sq,
        }
    }
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid >= hi {
        lo
    } else {
        mid
    }
}

/// Best split of `idx` over all features: midpoints between adjacent
/// distinct values, lowest child cost, ties to the lower feature index and
/// then the smaller threshold. `None` when every feature is constant.
#[allow(clippy::needless_range_loop)]
pub(crate) fn best_split(x: &[Vec<f64>], target: &Target<'_>, idx: &[usize]) -> Option<Split> {
    let n_features = x.first().map_or(0, Vec::len);
    let total = target.total(idx);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut order: Vec<usize> = idx.to_vec();

    for f in 0..n_features {
        order.copy_from_slice(idx);
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut left = Stats::default();
        for w in 0..order.len() - 1 {
            left = left.add(target.stats(order[w]));
            let (lo, hi) = (x[order[w]][f], x[order[w + 1]][f]);
            if lo == hi {
                continue;
            }
            let right = total.sub(left);
            let cost = target.cost(left) + target.cost(right);
            // near-equal costs count as ties so rounding cannot reorder them
            if best.is_none_or(|(c, _, _)| cost < c - 1e-12 * c.abs().max(1e-300)) {
                best = Some((cost, f, midpoint(lo, hi)));
            }
        }
    }

    best.map(|(_, feature, threshold)| {
        let (left, right) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
        Split {
            feature,
            threshold,
            left,
            right,
        }
    })
}

pub(crate) struct GrowParams {
    pub max_depth: usize,
    /// Nodes with fewer samples are not split.
    pub min_split: usize,
}

/// Grows a tree depth-first; nodes are stored in pre-order.
pub(crate) fn grow(x: &[Vec<f64>], target: &Target<'_>, params: &GrowParams) -> Tree {
    let all: Vec<usize> = (0..x.len()).collect();
    let mut nodes = Vec::new();
    grow_node(x, target, params, &all, 0, &mut nodes);
    Tree { nodes }
}

fn grow_node(
    x: &[Vec<f64>],
    target: &Target<'_>,
    params: &GrowParams,
    idx: &[usize],
    depth: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let stats = target.total(idx);
    let cover = idx.len() as f64;
    let me = nodes.len();
    let split = if depth >= params.max_depth
        || idx.len() < params.min_split.max(2)
        || target.is_pure(stats)
    {
        None
    } else {
        best_split(x, target, idx)
    };

    match split {
        None => {
            nodes.push(Node::Leaf {
                value: target.leaf_value(idx, stats),
                cover,
            });
        }
        Some(s) => {
            nodes.push(Node::Leaf { value: 0.0, cover });
            let left = grow_node(x, target, params, &s.left, depth + 1, nodes);
            let right = grow_node(x, target, params, &s.right, depth + 1, nodes);
            nodes[me] = Node::Split {
                feature: s.feature,
                threshold: s.threshold,
                left,
                right,
                cover,
            };
        }
    }
    me
}
