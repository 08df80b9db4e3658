use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{ClassifierError, FeatureEncoder, Predictor, PredictorKind, SavedModel};
use crate::dataset::{Dataset, Record, Schema};

/// JSON tree node: `{"feature", "threshold", "ge", "lt"}` or `{"leaf"}`.
/// A row goes to `ge` iff its feature value is `>= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feature: String,
        threshold: f64,
        ge: Box<TreeNode>,
        lt: Box<TreeNode>,
    },
    Leaf {
        leaf: u8,
    },
}

impl TreeNode {
    pub fn split(feature: &str, threshold: f64, ge: TreeNode, lt: TreeNode) -> Self {
        TreeNode::Split {
            feature: feature.to_string(),
            threshold,
            ge: Box::new(ge),
            lt: Box::new(lt),
        }
    }

    pub fn leaf(class: u8) -> Self {
        TreeNode::Leaf { leaf: class }
    }

    /// The insurance tree: fitness >= 0.61 then income >= 0.29, otherwise
    /// income >= 0.69.
    pub fn dt1() -> Self {
        Self::insurance_tree(0.69)
    }

    /// `dt1` with the low-fitness income threshold lowered to 0.555.
    pub fn dt2() -> Self {
        Self::insurance_tree(0.555)
    }

    fn insurance_tree(low_fitness_income: f64) -> Self {
        TreeNode::split(
            "fitness",
            0.61,
            TreeNode::split("income", 0.29, TreeNode::leaf(1), TreeNode::leaf(0)),
            TreeNode::split("income", low_fitness_income, TreeNode::leaf(1), TreeNode::leaf(0)),
        )
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { ge, lt, .. } => 1 + ge.depth().max(lt.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Split {
        feature: usize,
        threshold: f64,
        ge: usize,
        lt: usize,
    },
    Leaf(u8),
}

/// A compiled threshold tree over an encoder's design vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdTree {
    nodes: Vec<Node>,
    encoder: FeatureEncoder,
    kind: PredictorKind,
}

/// Compile a hand-written tree over the schema's non-sensitive features.
pub fn build_fixed_tree(spec: &TreeNode, schema: &Schema) -> Result<ThresholdTree, ClassifierError> {
    if spec.depth() < 1 {
        return Err(ClassifierError::InvalidTree("tree needs at least one split".into()));
    }
    let encoder = FeatureEncoder {
        feature_names: schema.features.clone(),
        sensitive_levels: Vec::new(),
    };
    ThresholdTree::from_encoder(spec, encoder, PredictorKind::FixedTree)
}

impl ThresholdTree {
    pub(crate) fn from_encoder(
        spec: &TreeNode,
        encoder: FeatureEncoder,
        kind: PredictorKind,
    ) -> Result<Self, ClassifierError> {
        let index: HashMap<String, usize> = encoder.names().into_iter().enumerate().map(|(i, n)| (n, i)).collect();
        let mut nodes = Vec::new();
        compile(spec, &index, &mut nodes)?;
        Ok(ThresholdTree { nodes, encoder, kind })
    }

    /// Back to the JSON node form.
    pub fn to_spec(&self) -> TreeNode {
        let names = self.encoder.names();
        fn build(nodes: &[Node], i: usize, names: &[String]) -> TreeNode {
            match &nodes[i] {
                Node::Leaf(c) => TreeNode::leaf(*c),
                Node::Split {
                    feature,
                    threshold,
                    ge,
                    lt,
                } => TreeNode::Split {
                    feature: names[*feature].clone(),
                    threshold: *threshold,
                    ge: Box::new(build(nodes, *ge, names)),
                    lt: Box::new(build(nodes, *lt, names)),
                },
            }
        }
        build(&self.nodes, 0, &names)
    }

    pub fn to_saved(&self) -> SavedModel {
        match self.kind {
            PredictorKind::FixedTree => SavedModel::FixedTree { root: self.to_spec() },
            _ => SavedModel::Tree {
                encoder: self.encoder.clone(),
                root: self.to_spec(),
            },
        }
    }

    pub fn depth(&self) -> usize {
        self.to_spec().depth()
    }

    fn eval(&self, v: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(c) => return *c,
                Node::Split {
                    feature,
                    threshold,
                    ge,
                    lt,
                } => i = if v[*feature] >= *threshold { *ge } else { *lt },
            }
        }
    }
}

fn compile(spec: &TreeNode, index: &HashMap<String, usize>, nodes: &mut Vec<Node>) -> Result<usize, ClassifierError> {
    let at = nodes.len();
    match spec {
        TreeNode::Leaf { leaf } => {
            if *leaf > 1 {
                return Err(ClassifierError::InvalidTree(format!(
                    "leaf class {leaf} not in {{0,1}}"
                )));
            }
            nodes.push(Node::Leaf(*leaf));
        }
        TreeNode::Split {
            feature,
            threshold,
            ge,
            lt,
        } => {
            let f = *index
                .get(feature)
                .ok_or_else(|| ClassifierError::UnknownFeature(feature.clone()))?;
            if !threshold.is_finite() {
                return Err(ClassifierError::InvalidTree(format!(
                    "non-finite threshold on '{feature}'"
                )));
            }
            nodes.push(Node::Leaf(0));
            let ge_i = compile(ge, index, nodes)?;
            let lt_i = compile(lt, index, nodes)?;
            nodes[at] = Node::Split {
                feature: f,
                threshold: *threshold,
                ge: ge_i,
                lt: lt_i,
            };
        }
    }
    Ok(at)
}

impl Predictor for ThresholdTree {
    fn predict(&self, row: &Record) -> Result<u8, ClassifierError> {
        if self.encoder.sensitive_levels.is_empty() {
            Ok(self.eval(&row.x))
        } else {
            Ok(self.eval(&self.encoder.encode(row)?))
        }
    }
    fn kind(&self) -> PredictorKind {
        self.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeOptions {
    pub max_depth: usize,
    /// Let the tree split on one-hot sensitive indicators.
    pub include_sensitive: bool,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions {
            max_depth: 4,
            include_sensitive: false,
        }
    }
}

pub(crate) fn check_trainable(d: &Dataset) -> Result<(), ClassifierError> {
    if d.len() < 2 {
        return Err(ClassifierError::TooFewRows(d.len()));
    }
    let first = d.records()[0].y;
    if d.records().iter().all(|r| r.y == first) {
        return Err(ClassifierError::SingleClass(first));
    }
    Ok(())
}

/// Greedy CART on weighted Gini impurity. Split candidates are midpoints
/// between consecutive distinct values; ties go to the lowest feature index,
/// then the lowest threshold.
pub fn train_tree(d: &Dataset, opts: &TreeOptions) -> Result<ThresholdTree, ClassifierError> {
    check_trainable(d)?;
    let encoder = FeatureEncoder::new(d, opts.include_sensitive);
    let design: Vec<Vec<f64>> = d
        .records()
        .iter()
        .map(|r| encoder.encode(r))
        .collect::<Result<_, _>>()?;
    let labels: Vec<u8> = d.records().iter().map(|r| r.y).collect();
    let weights = d.weight_vec();
    let mut nodes = Vec::new();
    let ctx = Cart {
        design: &design,
        labels: &labels,
        weights: &weights,
        dim: encoder.dim(),
        max_depth: opts.max_depth,
    };
    let all: Vec<usize> = (0..d.len()).collect();
    ctx.grow(&all, 0, &mut nodes);
    Ok(ThresholdTree {
        nodes,
        encoder,
        kind: PredictorKind::Tree,
    })
}

struct Cart<'a> {
    design: &'a [Vec<f64>],
    labels: &'a [u8],
    weights: &'a [f64],
    dim: usize,
    max_depth: usize,
}

fn gini_mass(w0: f64, w1: f64) -> f64 {
    let w = w0 + w1;
    if w <= 0.0 {
        0.0
    } else {
        // W * (1 - p0^2 - p1^2)
        w - (w0 * w0 + w1 * w1) / w
    }
}

impl Cart<'_> {
    fn class_weights(&self, rows: &[usize]) -> (f64, f64) {
        rows.iter().fold((0.0, 0.0), |(w0, w1), &i| {
            if self.labels[i] == 1 {
                (w0, w1 + self.weights[i])
            } else {
                (w0 + self.weights[i], w1)
            }
        })
    }

    fn grow(&self, rows: &[usize], depth: usize, nodes: &mut Vec<Node>) -> usize {
        let at = nodes.len();
        let (w0, w1) = self.class_weights(rows);
        let majority = u8::from(w1 > w0);
        nodes.push(Node::Leaf(majority));
        if depth >= self.max_depth || w0 <= 0.0 || w1 <= 0.0 {
            return at;
        }
        let parent = gini_mass(w0, w1);
        let tol = 1e-12 * (w0 + w1);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order = rows.to_vec();
        for f in 0..self.dim {
            order.sort_by(|&a, &b| self.design[a][f].total_cmp(&self.design[b][f]));
            // Sweep ascending; the "lt" side accumulates.
            let (mut l0, mut l1) = (0.0, 0.0);
            for pos in 0..order.len() - 1 {
                let i = order[pos];
                if self.labels[i] == 1 {
                    l1 += self.weights[i];
                } else {
                    l0 += self.weights[i];
                }
                let v = self.design[i][f];
                let next = self.design[order[pos + 1]][f];
                if next <= v {
                    continue;
                }
                let score = gini_mass(l0, l1) + gini_mass(w0 - l0, w1 - l1);
                if score >= parent - tol {
                    continue;
                }
                let threshold = 0.5 * (v + next);
                let better = match best {
                    None => true,
                    Some((s, _, _)) => score < s - tol,
                };
                if better {
                    best = Some((score, f, threshold));
                }
            }
        }
        let Some((_, feature, threshold)) = best else {
            return at;
        };
        let (ge_rows, lt_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.design[i][feature] >= threshold);
        let ge = self.grow(&ge_rows, depth + 1, nodes);
        let lt = self.grow(&lt_rows, depth + 1, nodes);
        nodes[at] = Node::Split {
            feature,
            threshold,
            ge,
            lt,
        };
        at
    }
}
