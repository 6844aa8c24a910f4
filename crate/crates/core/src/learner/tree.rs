use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node of a flattened binary tree. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        /// Training weight that reached this node.
        #[serde(default)]
        cover: f64,
    },
    Leaf {
        value: f64,
        #[serde(default)]
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// A regression or classification tree; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value, .. } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn root_threshold(&self) -> Option<f64> {
        match self.nodes.first()? {
            Node::Split { threshold, .. } => Some(*threshold),
            Node::Leaf { .. } => None,
        }
    }

    /// Structural checks: children point forward, features are in range,
    /// every value is finite.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::ModelMetadata("tree without nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            match *n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if feature >= n_features {
                        return Err(Error::SchemaMismatch(format!(
                            "node {i} splits on feature {feature}, schema has {n_features}"
                        )));
                    }
                    if left <= i || right <= i || left >= self.nodes.len() || right >= self.nodes.len() {
                        return Err(Error::ModelMetadata(format!("node {i} has invalid children")));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::ModelMetadata(format!("node {i} threshold not finite")));
                    }
                }
                Node::Leaf { value, .. } => {
                    if !value.is_finite() {
                        return Err(Error::ModelMetadata(format!("leaf {i} value not finite")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Every node carries positive cover and children covers add up to
    /// their parent's.
    pub fn validate_cover(&self) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate() {
            let c = n.cover();
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::ModelMetadata(format!("node {i} has no cover")));
            }
            if let Node::Split { left, right, .. } = *n {
                let sum = self.nodes[left].cover() + self.nodes[right].cover();
                if (sum - c).abs() > 1e-9 * c.max(1.0) {
                    return Err(Error::ModelMetadata(format!(
                        "node {i} cover {c} differs from children sum {sum}"
                    )));
                }
            }
        }
        Ok(())
    }
}
