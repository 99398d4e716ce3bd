//! Unlearning metrics over a linear probe: accuracy on the four splits, a
//! confidence-threshold membership-inference proxy, the average gap to a
//! reference table, and folding a projector into the head.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcore::Matrix;
use crate::stiefel::StiefelPoint;

/// Linear classifier `logits(z) = W z + b` with `W` of shape `C × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    weights: Matrix,
    bias: Vec<f64>,
}

impl LinearHead {
    pub fn new(weights: Matrix, bias: Vec<f64>) -> Result<Self> {
        if weights.rows() < 2 {
            return Err(Error::invalid(format!("a head needs at least 2 classes, got {}", weights.rows())));
        }
        if bias.len() != weights.rows() {
            return Err(Error::invalid(format!(
                "bias has {} entries for {} classes",
                bias.len(),
                weights.rows()
            )));
        }
        if !weights.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("head has non-finite entries"));
        }
        Ok(LinearHead { weights, bias })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Logits for every row of `features`, optionally projected by `UUᵀ`
    /// first. Returns an `n × C` matrix.
    pub fn logits(&self, u: Option<&StiefelPoint>, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.feature_dim() {
            return Err(Error::invalid(format!(
                "features are {}-dimensional, head expects {}",
                features.cols(),
                self.feature_dim()
            )));
        }
        let mut out = match u {
            Some(u) => {
                if u.ambient_dim() != self.feature_dim() {
                    return Err(Error::invalid(format!(
                        "projector is {}-dimensional, head expects {}",
                        u.ambient_dim(),
                        self.feature_dim()
                    )));
                }
                u.project_rows(features)?.matmul_t(&self.weights)?
            }
            None => features.matmul_t(&self.weights)?,
        };
        for i in 0..out.rows() {
            for (l, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *l += b;
            }
        }
        Ok(out)
    }

    /// Predicted class per row; ties go to the lowest class index.
    pub fn predict(&self, u: Option<&StiefelPoint>, features: &Matrix) -> Result<Vec<u32>> {
        let logits = self.logits(u, features)?;
        Ok((0..logits.rows()).map(|i| argmax(logits.row(i)) as u32).collect())
    }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Softmax of one row of logits, shifted by the maximum for stability.
fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub learning_rate: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 500,
            learning_rate: 0.1,
        }
    }
}

/// Multinomial logistic regression trained by full-batch gradient descent
/// from zero weights. `classes` defaults to the largest label plus one.
pub fn probe_train(features: &Matrix, labels: &[u32], classes: Option<usize>, config: &ProbeConfig) -> Result<LinearHead> {
    let n = features.rows();
    let d = features.cols();
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} samples", labels.len())));
    }
    let c = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| *m as usize + 1));
    if c < 2 {
        return Err(Error::invalid(format!("need at least 2 classes, got {c}")));
    }
    let mut counts = vec![0usize; c];
    for &l in labels {
        let l = l as usize;
        if l >= c {
            return Err(Error::invalid(format!("label {l} outside 0..{c}")));
        }
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|k| *k == 0) {
        return Err(Error::invalid(format!("class {empty} has no samples")));
    }
    if !(config.learning_rate > 0.0) {
        return Err(Error::invalid("probe learning rate must be positive"));
    }

    let mut weights = Matrix::zeros(c, d);
    let mut bias = vec![0.0; c];
    let step = config.learning_rate / n as f64;
    for _ in 0..config.epochs {
        // residual = softmax(logits) - onehot(labels), n × C
        let mut residual = features.matmul_t(&weights)?;
        for i in 0..n {
            let row = residual.row_mut(i);
            for (v, b) in row.iter_mut().zip(&bias) {
                *v += b;
            }
            softmax_in_place(row);
            row[labels[i] as usize] -= 1.0;
        }
        let grad = residual.t_matmul(features)?;
        weights.axpy(-step, &grad)?;
        for j in 0..c {
            let g: f64 = (0..n).map(|i| residual[(i, j)]).sum();
            bias[j] -= step * g;
        }
    }
    LinearHead::new(weights, bias)
}

/// Percentage of rows whose predicted class equals the label.
pub fn accuracy(head: &LinearHead, u: Option<&StiefelPoint>, features: &Matrix, labels: &[u32]) -> Result<f64> {
    if labels.len() != features.rows() {
        return Err(Error::invalid(format!(
            "{} labels for {} samples",
            labels.len(),
            features.rows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty split"));
    }
    let predicted = head.predict(u, features)?;
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * correct as f64 / labels.len() as f64)
}

/// Maximum softmax probability per row.
pub fn confidences(head: &LinearHead, u: Option<&StiefelPoint>, features: &Matrix) -> Result<Vec<f64>> {
    let mut logits = head.logits(u, features)?;
    Ok((0..logits.rows())
        .map(|i| {
            let row = logits.row_mut(i);
            softmax_in_place(row);
            row.iter().copied().fold(0.0, f64::max)
        })
        .collect())
}

/// Confidence threshold that best separates members (`≥ τ`) from
/// non-members (`< τ`). Candidates are the observed confidences and
/// infinity; ties go to the largest threshold.
pub fn select_threshold(members: &[f64], nonmembers: &[f64]) -> Result<f64> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::invalid("membership calibration sets must be non-empty"));
    }
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|c| (*c, true))
        .chain(nonmembers.iter().map(|c| (*c, false)))
        .collect();
    if all.iter().any(|(c, _)| c.is_nan()) {
        return Err(Error::NumericalFailure("NaN confidence".into()));
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // sweep ascending; before index i, everything below all[i].0 counts as
    // a non-member
    let total_members = members.len();
    let mut members_below = 0;
    let mut nonmembers_below = 0;
    let mut best = (f64::INFINITY, nonmembers.len());
    let mut i = 0;
    while i < all.len() {
        let tau = all[i].0;
        let correct = (total_members - members_below) + nonmembers_below;
        if correct >= best.1 {
            best = (tau, correct);
        }
        while i < all.len() && all[i].0 == tau {
            if all[i].1 {
                members_below += 1;
            } else {
                nonmembers_below += 1;
            }
            i += 1;
        }
    }
    // infinity classifies everything as a non-member and wins ties
    if nonmembers.len() >= best.1 {
        best = (f64::INFINITY, nonmembers.len());
    }
    Ok(best.0)
}

/// Percentage of confidences at or above `threshold`.
pub fn memorized_fraction(confidences: &[f64], threshold: f64) -> f64 {
    if confidences.is_empty() {
        return 0.0;
    }
    let hits = confidences.iter().filter(|c| **c >= threshold).count();
    100.0 * hits as f64 / confidences.len() as f64
}

/// Share of forgetting samples a calibrated confidence-threshold attack
/// flags as training members, in percent.
pub fn mia_score(
    head: &LinearHead,
    u: Option<&StiefelPoint>,
    forget: &Matrix,
    members: &Matrix,
    nonmembers: &Matrix,
) -> Result<f64> {
    if forget.rows() == 0 {
        return Err(Error::invalid("empty forgetting set"));
    }
    let tau = select_threshold(&confidences(head, u, members)?, &confidences(head, u, nonmembers)?)?;
    Ok(memorized_fraction(&confidences(head, u, forget)?, tau))
}

/// Head with the projector folded into its weights: `W' = W UUᵀ`.
pub fn absorb(head: &LinearHead, u: &StiefelPoint) -> Result<LinearHead> {
    if u.ambient_dim() != head.feature_dim() {
        return Err(Error::invalid(format!(
            "projector is {}-dimensional, head expects {}",
            u.ambient_dim(),
            head.feature_dim()
        )));
    }
    let wu = head.weights.matmul(u.matrix())?;
    LinearHead::new(wu.matmul_t(u.matrix())?, head.bias.clone())
}

/// Accuracies on the four splits and the MIA proxy, all in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub acc_rm_tr: f64,
    pub acc_fg_tr: f64,
    pub acc_rm_te: f64,
    pub acc_fg_te: f64,
    pub mia: f64,
    /// Average gap to a reference table, when one was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avg_gap: Option<f64>,
}

impl MetricsTable {
    pub fn new(acc_rm_tr: f64, acc_fg_tr: f64, acc_rm_te: f64, acc_fg_te: f64, mia: f64) -> Self {
        MetricsTable {
            acc_rm_tr,
            acc_fg_tr,
            acc_rm_te,
            acc_fg_te,
            mia,
            avg_gap: None,
        }
    }

    pub fn entries(&self) -> [f64; 5] {
        [self.acc_rm_tr, self.acc_fg_tr, self.acc_rm_te, self.acc_fg_te, self.mia]
    }

    /// Copy with `avg_gap` filled in against `reference`.
    pub fn with_reference(mut self, reference: &MetricsTable) -> Self {
        self.avg_gap = Some(avg_gap(&self, reference));
        self
    }

    /// Aligned text table; with a reference, each entry is followed by its
    /// absolute gap in parentheses.
    pub fn render(&self, reference: Option<&MetricsTable>) -> String {
        const HEADERS: [&str; 5] = ["Acc_rm^tr", "Acc_fg^tr", "Acc_rm^te", "Acc_fg^te", "MIA"];
        let width = if reference.is_some() { 16 } else { 10 };
        let mut header = String::new();
        let mut values = String::new();
        for (i, (name, v)) in HEADERS.iter().zip(self.entries()).enumerate() {
            let cell = match reference {
                Some(r) => format!("{v:.2} ({:.2})", (v - r.entries()[i]).abs()),
                None => format!("{v:.2}"),
            };
            header.push_str(&format!("{name:>width$}"));
            values.push_str(&format!("{cell:>width$}"));
        }
        if let Some(r) = reference {
            header.push_str(&format!("{:>10}", "Avg.G."));
            values.push_str(&format!("{:>10.2}", avg_gap(self, r)));
        }
        format!("{header}\n{values}\n")
    }
}

impl fmt::Display for MetricsTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(None))
    }
}

/// Mean absolute difference over the four accuracies and the MIA score.
pub fn avg_gap(candidate: &MetricsTable, reference: &MetricsTable) -> f64 {
    let c = candidate.entries();
    let r = reference.entries();
    c.iter().zip(r).map(|(a, b)| (a - b).abs()).sum::<f64>() / c.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stiefel::random_stiefel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn random_head(c: usize, d: usize, rng: &mut ChaCha8Rng) -> LinearHead {
        let w = gaussian(c, d, rng);
        let b = (0..c).map(|_| StandardNormal.sample(rng)).collect();
        LinearHead::new(w, b).unwrap()
    }

    fn blobs(centers: &[Vec<f64>], per_class: usize, noise: f64, seed: u64) -> (Matrix, Vec<u32>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = centers[0].len();
        let n = centers.len() * per_class;
        let labels: Vec<u32> = (0..n).map(|i| (i % centers.len()) as u32).collect();
        let z = Matrix::from_fn(n, d, |i, j| {
            let e: f64 = StandardNormal.sample(&mut rng);
            centers[labels[i] as usize][j] + noise * e
        });
        (z, labels)
    }

    #[test]
    fn head_validation() {
        assert!(LinearHead::new(Matrix::zeros(1, 3), vec![0.0]).is_err());
        assert!(LinearHead::new(Matrix::zeros(2, 3), vec![0.0]).is_err());
        assert!(LinearHead::new(Matrix::zeros(2, 3), vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn identity_head_on_one_hot() {
        let head = LinearHead::new(Matrix::identity(3), vec![0.0; 3]).unwrap();
        let z = Matrix::identity(3);
        assert_eq!(accuracy(&head, None, &z, &[0, 1, 2]).unwrap(), 100.0);
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let head = LinearHead::new(Matrix::zeros(3, 2), vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(head.predict(None, &Matrix::zeros(2, 2)).unwrap(), vec![0, 0]);
    }

    #[test]
    fn null_projector_leaves_bias_classifier() {
        let w = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [2.0, 0.0]]).unwrap();
        let head = LinearHead::new(w, vec![0.0, 0.5, 0.2]).unwrap();
        let u = StiefelPoint::new(Matrix::from_rows(&[[0.0], [1.0]]).unwrap()).unwrap();
        let z = Matrix::from_rows(&[[5.0, 1.0], [-5.0, 2.0], [3.0, -1.0]]).unwrap();
        let labels = [1, 1, 0];
        assert_eq!(head.predict(Some(&u), &z).unwrap(), vec![1, 1, 1]);
        assert!((accuracy(&head, Some(&u), &z, &labels).unwrap() - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn accuracy_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let head = random_head(4, 5, &mut rng);
        let z = gaussian(40, 5, &mut rng);
        let labels: Vec<u32> = (0..40).map(|_| rng.random_range(0..4)).collect();
        let mut correct = 0;
        for i in 0..40 {
            let mut best = 0;
            let mut best_val = f64::NEG_INFINITY;
            for c in 0..4 {
                let mut v = head.bias()[c];
                for j in 0..5 {
                    v += head.weights()[(c, j)] * z[(i, j)];
                }
                if v > best_val {
                    best_val = v;
                    best = c;
                }
            }
            if best as u32 == labels[i] {
                correct += 1;
            }
        }
        let expected = 100.0 * correct as f64 / 40.0;
        assert_eq!(accuracy(&head, None, &z, &labels).unwrap(), expected);
    }

    #[test]
    fn accuracy_rejects_mismatches() {
        let head = LinearHead::new(Matrix::zeros(2, 3), vec![0.0; 2]).unwrap();
        assert!(accuracy(&head, None, &Matrix::zeros(2, 4), &[0, 1]).is_err());
        assert!(accuracy(&head, None, &Matrix::zeros(2, 3), &[0]).is_err());
        let u = random_stiefel(4, 2, 0).unwrap();
        assert!(accuracy(&head, Some(&u), &Matrix::zeros(2, 3), &[0, 1]).is_err());
    }

    #[test]
    fn probe_separates_two_clusters() {
        let (z, labels) = blobs(&[vec![3.0, 0.0], vec![-3.0, 0.0]], 20, 0.3, 1);
        let head = probe_train(&z, &labels, None, &ProbeConfig::default()).unwrap();
        assert_eq!(accuracy(&head, None, &z, &labels).unwrap(), 100.0);
    }

    #[test]
    fn probe_on_three_blobs() {
        let mut centers = vec![vec![0.0; 8]; 3];
        centers[0][0] = 5.0;
        centers[1][1] = 5.0;
        centers[2][2] = 5.0;
        let (z, labels) = blobs(&centers, 100, 1.0, 2);
        let head = probe_train(&z, &labels, None, &ProbeConfig::default()).unwrap();
        assert!(accuracy(&head, None, &z, &labels).unwrap() >= 99.0);
    }

    #[test]
    fn probe_rejects_bad_labels() {
        let z = Matrix::zeros(4, 2);
        assert!(probe_train(&z, &[0, 0, 0, 0], None, &ProbeConfig::default()).is_err());
        assert!(probe_train(&z, &[0, 2, 0, 2], None, &ProbeConfig::default()).is_err());
        assert!(probe_train(&z, &[0, 1, 0], None, &ProbeConfig::default()).is_err());
        assert!(probe_train(&z, &[0, 1, 0, 1], Some(3), &ProbeConfig::default()).is_err());
    }

    #[test]
    fn probe_is_deterministic() {
        let (z, labels) = blobs(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, -1.0]], 30, 0.8, 3);
        let a = probe_train(&z, &labels, None, &ProbeConfig::default()).unwrap();
        let b = probe_train(&z, &labels, None, &ProbeConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn threshold_search() {
        // perfectly separable: the smallest member confidence is chosen
        assert_eq!(select_threshold(&[0.9, 0.95], &[0.5, 0.6]).unwrap(), 0.9);
        // identical sets: nothing beats guessing, so infinity wins the tie
        assert_eq!(select_threshold(&[0.7, 0.8], &[0.7, 0.8]).unwrap(), f64::INFINITY);
        assert!(select_threshold(&[], &[0.5]).is_err());
    }

    #[test]
    fn mia_extremes() {
        let w = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let head = LinearHead::new(w, vec![0.0, 0.0]).unwrap();
        let members = Matrix::from_rows(&[[4.0, 0.0], [5.0, 0.0]]).unwrap();
        let nonmembers = Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.0]]).unwrap();
        // forgetting samples less confident than every calibration sample
        let weak = Matrix::from_rows(&[[0.1, 0.0], [0.0, 3.0]]).unwrap();
        assert_eq!(mia_score(&head, None, &weak, &members, &nonmembers).unwrap(), 0.0);
        assert_eq!(mia_score(&head, None, &members, &members, &nonmembers).unwrap(), 100.0);
    }

    #[test]
    fn memorized_fraction_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let conf: Vec<f64> = (0..100).map(|_| rng.random()).collect();
        let mut last = 100.0;
        for k in 0..=20 {
            let f = memorized_fraction(&conf, k as f64 / 20.0);
            assert!(f <= last);
            last = f;
        }
        assert_eq!(memorized_fraction(&conf, f64::INFINITY), 0.0);
    }

    #[test]
    fn absorb_by_hand() {
        let head = LinearHead::new(Matrix::from_rows(&[[1.0, 2.0], [0.0, 0.0]]).unwrap(), vec![0.0, 0.0]).unwrap();
        let u = StiefelPoint::axis_aligned(2, 1).unwrap();
        let z = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let absorbed = absorb(&head, &u).unwrap();
        assert_eq!(absorbed.logits(None, &z).unwrap()[(0, 0)], 3.0);
        assert_eq!(head.logits(Some(&u), &z).unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn absorb_full_space_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let head = random_head(3, 6, &mut rng);
        let u = random_stiefel(6, 6, 6).unwrap();
        let absorbed = absorb(&head, &u).unwrap();
        assert!(absorbed.weights().sub(head.weights()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn absorbed_logits_match_projected_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let head = random_head(5, 12, &mut rng);
        let u = random_stiefel(12, 4, 8).unwrap();
        let z = gaussian(1000, 12, &mut rng);
        let absorbed = absorb(&head, &u).unwrap();
        let a = absorbed.logits(None, &z).unwrap();
        let b = head.logits(Some(&u), &z).unwrap();
        assert!(a.sub(&b).unwrap().max_abs() <= 1e-9);
    }

    #[test]
    fn gap_arithmetic() {
        let t = MetricsTable::new(90.0, 10.0, 85.0, 5.0, 20.0);
        assert_eq!(avg_gap(&t, &t), 0.0);
        let r = MetricsTable::new(89.0, 12.0, 88.0, 1.0, 25.0);
        assert!((avg_gap(&t, &r) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rendering() {
        let t = MetricsTable::new(90.0, 10.0, 85.0, 5.0, 20.0);
        let plain = t.render(None);
        assert!(plain.lines().nth(1).unwrap().contains("90.00"));
        let r = MetricsTable::new(89.0, 12.0, 88.0, 1.0, 25.0);
        let with_gaps = t.render(Some(&r));
        assert!(with_gaps.contains("90.00 (1.00)"));
        assert!(with_gaps.trim_end().ends_with("3.00"));
        let json = serde_json::to_string(&t.with_reference(&r)).unwrap();
        assert!(json.contains("\"avg_gap\":3.0"));
    }
}
