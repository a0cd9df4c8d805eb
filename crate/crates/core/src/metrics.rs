//! Ranking and classification metrics for the positive class.

use crate::dataset::Label;
use crate::error::{Error, Result};

/// Average precision of a ranking: the mean, over positive items, of the
/// precision at that item's rank. `order` lists item indices best first and
/// `truth` is indexed by item.
pub fn average_precision(order: &[usize], truth: &[Label]) -> Result<f64> {
    let total = truth.iter().filter(|l| l.is_positive()).count();
    if total == 0 {
        return Err(Error::invalid("average precision needs at least one positive"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &i) in order.iter().enumerate() {
        let label = truth
            .get(i)
            .ok_or_else(|| Error::invalid(format!("ranked index {i} out of range")))?;
        if label.is_positive() {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Ok(sum / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(predicted: &[Label], truth: &[Label]) -> Self {
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p.is_positive(), t.is_positive()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2 p r / (p + r)`, zero when both vanish.
    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1_score(predicted: &[Label], truth: &[Label]) -> f64 {
    Confusion::from_labels(predicted, truth).f1()
}

/// Mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn perfect_ranking() {
        assert_eq!(average_precision(&[0, 1, 2, 3], &[P, P, N, N]).unwrap(), 1.0);
    }

    #[test]
    fn interleaved_ranking() {
        assert_eq!(
            average_precision(&[0, 1, 2], &[P, N, P]).unwrap(),
            (1.0 + 2.0 / 3.0) / 2.0
        );
    }

    #[test]
    fn single_positive_last() {
        assert_eq!(average_precision(&[0, 1, 2, 3], &[N, N, N, P]).unwrap(), 0.25);
        assert!(average_precision(&[0, 1], &[N, N]).is_err());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1_score(&[P, N, P], &[P, N, P]), 1.0);
        // precision = recall = 0.5
        assert_eq!(f1_score(&[P, P, N, N], &[P, N, P, N]), 0.5);
        // 2 TP, 1 FP, 1 FN
        let c = Confusion::from_labels(&[P, P, P, N, N], &[P, P, N, P, N]);
        assert_eq!((c.tp, c.fp, c.fn_), (2, 1, 1));
        assert_eq!(c.precision(), 2.0 / 3.0);
        assert_eq!(c.recall(), 2.0 / 3.0);
        assert!((c.f1() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1_score(&[N, N], &[P, N]), 0.0);
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }

    proptest! {
        #[test]
        fn ap_depends_only_on_order(scores in prop::collection::vec(0.0f64..100.0, 2..40), seed in 0u64..1000) {
            let truth: Vec<Label> = (0..scores.len()).map(|i| Label::from_bool((i as u64 * 7 + seed).is_multiple_of(3))).collect();
            prop_assume!(truth.iter().any(|l| l.is_positive()));
            let order_of = |s: &[f64]| {
                let mut o: Vec<usize> = (0..s.len()).collect();
                o.sort_by(|&a, &b| s[a].total_cmp(&s[b]));
                o
            };
            let transformed: Vec<f64> = scores.iter().map(|s| (s * 0.3).exp() + 5.0).collect();
            prop_assert_eq!(
                average_precision(&order_of(&scores), &truth).unwrap(),
                average_precision(&order_of(&transformed), &truth).unwrap()
            );
        }

        #[test]
        fn f1_symmetric_under_fp_fn_swap(pred in prop::collection::vec(any::<bool>(), 1..50), truth in prop::collection::vec(any::<bool>(), 1..50)) {
            let n = pred.len().min(truth.len());
            let p: Vec<Label> = pred[..n].iter().map(|&b| Label::from_bool(b)).collect();
            let t: Vec<Label> = truth[..n].iter().map(|&b| Label::from_bool(b)).collect();
            // Swapping roles of prediction and truth swaps FP with FN and precision with recall.
            let a = Confusion::from_labels(&p, &t);
            let b = Confusion::from_labels(&t, &p);
            prop_assert_eq!(a.fp, b.fn_);
            prop_assert_eq!(a.precision(), b.recall());
            prop_assert!((a.f1() - b.f1()).abs() < 1e-15);
        }
    }
}
