use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// `max n_c / min n_c` over nonzero classes; 1 for an all-zero input.
pub fn imbalance_ratio(counts: &[usize]) -> f64 {
    let nonzero = counts.iter().copied().filter(|&n| n > 0);
    let max = nonzero.clone().max().unwrap_or(1);
    let min = nonzero.min().unwrap_or(1);
    max as f64 / min as f64
}

fn check_ir(ir: f64) -> Result<()> {
    if !(ir >= 1.0 && ir.is_finite()) {
        return Err(Error::argument(format!("imbalance ratio must be >= 1, got {ir}")));
    }
    Ok(())
}

/// Exponentially decaying class sizes `n_c = n0 · IR^(−c/(C−1))`, rounded to
/// the nearest integer and clamped to at least 1.
pub fn longtail_counts(n0: usize, ir: f64, num_classes: usize) -> Result<Vec<usize>> {
    check_ir(ir)?;
    if n0 == 0 {
        return Err(Error::argument("n0 must be >= 1"));
    }
    if num_classes < 2 {
        return Err(Error::argument("need at least 2 classes"));
    }
    let last = (num_classes - 1) as f64;
    Ok((0..num_classes)
        .map(|c| {
            let n = n0 as f64 * ir.powf(-(c as f64) / last);
            (n.round() as usize).max(1)
        })
        .collect())
}

/// `n_head` samples for every class except `tail_classes`, which get
/// `round(n_head / IR)` (at least 1).
pub fn binary_imbalance_counts(
    n_head: usize,
    ir: f64,
    num_classes: usize,
    tail_classes: &BTreeSet<usize>,
) -> Result<Vec<usize>> {
    check_ir(ir)?;
    if tail_classes.is_empty() {
        return Err(Error::argument("binary imbalance needs at least one tail class"));
    }
    if tail_classes.len() >= num_classes {
        return Err(Error::argument("tail classes must be a proper subset of the classes"));
    }
    if let Some(&c) = tail_classes.iter().find(|&&c| c >= num_classes) {
        return Err(Error::argument(format!("tail class {c} out of range")));
    }
    let tail = ((n_head as f64 / ir).round() as usize).max(1);
    Ok((0..num_classes)
        .map(|c| if tail_classes.contains(&c) { tail } else { n_head })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longtail_examples() {
        let counts = longtail_counts(1000, 10.0, 10).unwrap();
        assert_eq!(counts[0], 1000);
        assert_eq!(counts[9], 100);
        assert_eq!(longtail_counts(1000, 1.0, 10).unwrap(), vec![1000; 10]);
        // 5000 · 100^(−1/3) = 1077.217...
        assert_eq!(longtail_counts(5000, 100.0, 10).unwrap()[3], 1077);
    }

    #[test]
    fn longtail_errors_and_floor() {
        assert!(longtail_counts(1000, 0.5, 10).is_err());
        assert!(longtail_counts(1000, 10.0, 1).is_err());
        assert!(longtail_counts(0, 10.0, 3).is_err());
        assert_eq!(longtail_counts(3, 1000.0, 3).unwrap(), vec![3, 1, 1]);
    }

    #[test]
    fn binary_examples() {
        let tails: BTreeSet<usize> = [0, 7, 8].into();
        let counts = binary_imbalance_counts(5000, 100.0, 10, &tails).unwrap();
        for (c, &n) in counts.iter().enumerate() {
            assert_eq!(n, if tails.contains(&c) { 50 } else { 5000 });
        }
        assert!(binary_imbalance_counts(5000, 100.0, 10, &BTreeSet::new()).is_err());
        assert_eq!(
            binary_imbalance_counts(10, 1.0, 4, &[1].into()).unwrap(),
            vec![10; 4]
        );
        assert!(binary_imbalance_counts(10, 0.9, 4, &[1].into()).is_err());
        assert!(binary_imbalance_counts(10, 2.0, 2, &[0, 1].into()).is_err());
    }

    #[test]
    fn imbalance_ratio_ignores_empty_classes() {
        assert_eq!(imbalance_ratio(&[100, 0, 10]), 10.0);
    }
}
