//! Embedding classifiers, query pooling, matching costs and the set loss.
//!
//! Predictions and ground truths carry normalized center-form boxes
//! ([`CenterBox`]); box regression uses the L1 distance on `(cx, cy, w, h)` and
//! the overlap term uses generalized IoU on the corresponding corners.

use alloc::vec::Vec;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{argument, validation, Error, Result};
use crate::geometry::{giou, CenterBox};
use crate::hungarian::{hungarian, Assignment};
use crate::matrix::{dot, Matrix};
use crate::vocab::{HoiId, ObjectId};

/// Floor applied to true-class probabilities before taking the log.
pub const CLASS_EPSILON: f64 = 1e-12;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// `N x C` query matrix, one query per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct QuerySet(Matrix);

impl QuerySet {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.is_empty() {
            return Err(validation!("query set must have at least one row and column"));
        }
        if !m.all_finite() {
            return Err(validation!("query set has non-finite entries"));
        }
        Ok(QuerySet(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

impl TryFrom<Matrix> for QuerySet {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        QuerySet::new(m)
    }
}

impl From<QuerySet> for Matrix {
    fn from(q: QuerySet) -> Self {
        q.0
    }
}

/// `K x C` category text embeddings, one category per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct CategoryEmbeddings(Matrix);

impl CategoryEmbeddings {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.is_empty() {
            return Err(validation!("category embeddings must have at least one row and column"));
        }
        if !m.all_finite() {
            return Err(validation!("category embeddings have non-finite entries"));
        }
        if let Some(k) = m.iter_rows().position(|r| r.iter().all(|v| *v == 0.0)) {
            return Err(validation!("category embedding row {} is all zero", k));
        }
        Ok(CategoryEmbeddings(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

impl TryFrom<Matrix> for CategoryEmbeddings {
    type Error = Error;

    fn try_from(m: Matrix) -> Result<Self> {
        CategoryEmbeddings::new(m)
    }
}

impl From<CategoryEmbeddings> for Matrix {
    fn from(t: CategoryEmbeddings) -> Self {
        t.0
    }
}

/// Row-wise softmax of `q * t^T`: an `N x K` row-stochastic matrix.
pub fn classifier_distribution(q: &QuerySet, t: &CategoryEmbeddings) -> Result<Matrix> {
    let (q, t) = (q.matrix(), t.matrix());
    if q.cols() != t.cols() {
        return Err(argument!("query width {} does not match embedding width {}", q.cols(), t.cols()));
    }
    let mut out = Matrix::zeros(q.rows(), t.rows());
    for i in 0..q.rows() {
        let row = out.row_mut(i);
        for (k, cell) in row.iter_mut().enumerate() {
            *cell = dot(q.row(i), t.row(k));
        }
        softmax_in_place(row);
    }
    Ok(out)
}

fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Interaction queries as the mean of each human/object query pair.
pub fn pool_pair_queries(human: &Matrix, object: &Matrix) -> Result<QuerySet> {
    if human.rows() != object.rows() || human.cols() != object.cols() {
        return Err(argument!(
            "human queries {}x{} and object queries {}x{} differ in shape",
            human.rows(),
            human.cols(),
            object.rows(),
            object.cols()
        ));
    }
    let data = human.as_slice().iter().zip(object.as_slice()).map(|(h, o)| (h + o) * 0.5).collect();
    QuerySet::new(Matrix::from_vec(human.rows(), human.cols(), data)?)
}

/// Adds the global feature `g` to every query.
pub fn enhance_with_global(q: &QuerySet, g: &[f64]) -> Result<QuerySet> {
    let m = q.matrix();
    if g.len() != m.cols() {
        return Err(argument!("global feature width {} does not match query width {}", g.len(), m.cols()));
    }
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (v, gv) in out.row_mut(i).iter_mut().zip(g) {
            *v += gv;
        }
    }
    QuerySet::new(out)
}

/// Model outputs for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub human_boxes: Vec<CenterBox>,
    pub object_boxes: Vec<CenterBox>,
    /// `N x K1`, rows sum to 1.
    pub object_dist: Matrix,
    /// `N x K2`, rows sum to 1.
    pub interaction_dist: Matrix,
}

impl PredictionSet {
    pub fn len(&self) -> usize {
        self.human_boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.human_boxes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.human_boxes.len();
        if self.object_boxes.len() != n || self.object_dist.rows() != n || self.interaction_dist.rows() != n {
            return Err(validation!(
                "prediction set sizes disagree: {} human boxes, {} object boxes, {} object rows, {} interaction rows",
                n,
                self.object_boxes.len(),
                self.object_dist.rows(),
                self.interaction_dist.rows()
            ));
        }
        for (i, b) in self.human_boxes.iter().chain(&self.object_boxes).enumerate() {
            if !b.is_normalized() {
                return Err(validation!("prediction box {} {:?} is not normalized to [0, 1]", i % n.max(1), b.to_array()));
            }
        }
        for (name, dist) in [("object_dist", &self.object_dist), ("interaction_dist", &self.interaction_dist)] {
            for (i, row) in dist.iter_rows().enumerate() {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(validation!("{} row {} is not a probability distribution (sum {})", name, i, sum));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub human_box: CenterBox,
    pub object_box: CenterBox,
    pub object_class: ObjectId,
    pub hoi_class: HoiId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSet {
    pub entries: Vec<GroundTruthEntry>,
}

impl GroundTruthSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_classes(&self, pred: &PredictionSet) -> Result<()> {
        let (k1, k2) = (pred.object_dist.cols(), pred.interaction_dist.cols());
        for (j, e) in self.entries.iter().enumerate() {
            if e.object_class.index() >= k1 {
                return Err(argument!("ground truth {}: object class {} out of range (K1 = {})", j, e.object_class, k1));
            }
            if e.hoi_class.index() >= k2 {
                return Err(argument!("ground truth {}: hoi class {} out of range (K2 = {})", j, e.hoi_class, k2));
            }
        }
        Ok(())
    }
}

/// Weights of the four cost / loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub lambda_b: f64,
    pub lambda_g: f64,
    pub lambda_c_o: f64,
    pub lambda_c_i: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights { lambda_b: 2.5, lambda_g: 1.0, lambda_c_o: 1.0, lambda_c_i: 1.0 }
    }
}

impl CostWeights {
    pub fn new(lambda_b: f64, lambda_g: f64, lambda_c_o: f64, lambda_c_i: f64) -> Result<Self> {
        let w = CostWeights { lambda_b, lambda_g, lambda_c_o, lambda_c_i };
        w.validate()?;
        Ok(w)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.lambda_b, self.lambda_g, self.lambda_c_o, self.lambda_c_i]
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.as_array();
        if a.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(argument!("weights {:?} must be finite and non-negative", a));
        }
        if a.iter().all(|v| *v == 0.0) {
            return Err(argument!("at least one weight must be positive"));
        }
        Ok(())
    }
}

impl FromStr for CostWeights {
    type Err = Error;

    /// Parses `"lambda_b,lambda_g,lambda_c_o,lambda_c_i"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(argument!("expected four comma-separated weights, got {:?}", s));
        }
        let mut v = [0.0; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| argument!("weight {:?} is not a number", p))?;
        }
        CostWeights::new(v[0], v[1], v[2], v[3])
    }
}

fn pair_terms(pred: &PredictionSet, i: usize, gt: &GroundTruthEntry) -> Result<(f64, f64)> {
    let (ph, po) = (&pred.human_boxes[i], &pred.object_boxes[i]);
    let l1 = ph.l1(&gt.human_box) + po.l1(&gt.object_box);
    let giou_h = giou(&ph.corners(), &gt.human_box.corners())?;
    let giou_o = giou(&po.corners(), &gt.object_box.corners())?;
    Ok((l1, (1.0 - giou_h) + (1.0 - giou_o)))
}

fn check_pair(pred: &PredictionSet, gt: &GroundTruthSet) -> Result<()> {
    pred.validate()?;
    gt.check_classes(pred)
}

/// `N x M` matching cost. Classification terms use `1 - p` on the true class.
pub fn cost_matrix(pred: &PredictionSet, gt: &GroundTruthSet, w: &CostWeights) -> Result<Matrix> {
    check_pair(pred, gt)?;
    w.validate()?;
    let mut cost = Matrix::zeros(pred.len(), gt.len());
    for i in 0..pred.len() {
        for (j, g) in gt.entries.iter().enumerate() {
            let (l1, giou_term) = pair_terms(pred, i, g)?;
            cost[(i, j)] = w.lambda_b * l1
                + w.lambda_g * giou_term
                + w.lambda_c_o * (1.0 - pred.object_dist[(i, g.object_class.index())])
                + w.lambda_c_i * (1.0 - pred.interaction_dist[(i, g.hoi_class.index())]);
        }
    }
    Ok(cost)
}

/// Unweighted loss terms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    /// Human + object L1, summed over matched pairs.
    pub box_l1: f64,
    /// `(1 - GIoU)` for human and object boxes, summed over matched pairs.
    pub giou: f64,
    /// Mean negative log-probability of the true object class.
    pub object_class: f64,
    /// Mean negative log-probability of the true interaction class.
    pub interaction_class: f64,
}

impl LossComponents {
    pub fn as_array(&self) -> [f64; 4] {
        [self.box_l1, self.giou, self.object_class, self.interaction_class]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub components: LossComponents,
    /// Each component times its weight, in component order.
    pub weighted: [f64; 4],
    /// Number of true-class probabilities raised to [`CLASS_EPSILON`].
    pub clamped: usize,
}

/// Weighted loss over the matched pairs. Unmatched predictions contribute nothing.
pub fn total_loss(pred: &PredictionSet, gt: &GroundTruthSet, a: &Assignment, w: &CostWeights) -> Result<LossReport> {
    check_pair(pred, gt)?;
    w.validate()?;
    a.validate(pred.len(), gt.len())?;
    let mut c = LossComponents::default();
    let mut clamped = 0usize;
    let mut nll = |p: f64| {
        if p < CLASS_EPSILON {
            clamped += 1;
        }
        -libm::log(p.max(CLASS_EPSILON))
    };
    for &(i, j) in &a.pairs {
        let g = &gt.entries[j];
        let (l1, giou_term) = pair_terms(pred, i, g)?;
        c.box_l1 += l1;
        c.giou += giou_term;
        c.object_class += nll(pred.object_dist[(i, g.object_class.index())]);
        c.interaction_class += nll(pred.interaction_dist[(i, g.hoi_class.index())]);
    }
    if !a.is_empty() {
        c.object_class /= a.len() as f64;
        c.interaction_class /= a.len() as f64;
    }
    let weights = w.as_array();
    let comps = c.as_array();
    let weighted = core::array::from_fn(|k| weights[k] * comps[k]);
    Ok(LossReport { total: weighted.iter().sum(), components: c, weighted, clamped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub assignment: Assignment,
    pub matching_cost: f64,
    pub loss: LossReport,
}

/// Cost matrix, optimal assignment and loss in one call. Returns an empty
/// assignment and zero loss when either side is empty.
pub fn match_and_score(pred: &PredictionSet, gt: &GroundTruthSet, w: &CostWeights) -> Result<MatchReport> {
    let cost = cost_matrix(pred, gt, w)?;
    let assignment = if cost.is_empty() { Assignment::default() } else { hungarian(&cost)? };
    let loss = total_loss(pred, gt, &assignment, w)?;
    Ok(MatchReport { matching_cost: assignment.total_cost(&cost), assignment, loss })
}
