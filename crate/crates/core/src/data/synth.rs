use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{GlobalDataset, LabeledSample};
use crate::error::{Error, Result};
use crate::seed::SeedNode;

pub const DEFAULT_SIGMA: f64 = 0.8;

/// Isotropic Gaussian classes around unit-norm means.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    means: Vec<Vec<f64>>,
    sigma: f64,
}

impl GaussianMixture {
    /// Draws `num_classes` distinct unit-norm means in `dim` dimensions.
    pub fn new(num_classes: usize, dim: usize, sigma: f64, seed: SeedNode) -> Result<Self> {
        if dim < 2 {
            return Err(Error::argument(format!("feature dimension must be >= 2, got {dim}")));
        }
        if num_classes < 2 {
            return Err(Error::argument("need at least 2 classes"));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::argument(format!("sigma must be finite and >= 0, got {sigma}")));
        }
        let mut rng = seed.rng();
        let mut means: Vec<Vec<f64>> = Vec::with_capacity(num_classes);
        while means.len() < num_classes {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue;
            }
            let v: Vec<f64> = v.into_iter().map(|x| x / norm).collect();
            if means.iter().any(|m| m == &v) {
                continue;
            }
            means.push(v);
        }
        Ok(GaussianMixture { means, sigma })
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Draws `counts[c]` samples of every class and shuffles the result.
    pub fn sample(&self, counts: &[usize], seed: SeedNode) -> Result<GlobalDataset> {
        if counts.len() != self.num_classes() {
            return Err(Error::config(format!(
                "{} class counts for {} classes",
                counts.len(),
                self.num_classes()
            )));
        }
        let mut samples = Vec::with_capacity(counts.iter().sum());
        for (c, (&n, mean)) in counts.iter().zip(&self.means).enumerate() {
            let mut rng = seed.child(c as u64).rng();
            for _ in 0..n {
                let features = mean
                    .iter()
                    .map(|&m| {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        m + self.sigma * e
                    })
                    .collect();
                samples.push(LabeledSample { features, label: c });
            }
        }
        samples.shuffle(&mut seed.child(u64::MAX).rng());
        GlobalDataset::new(samples, self.num_classes())
    }
}

/// Builds a mixture from `seed` and draws `counts` from it with the same seed.
pub fn synth_gaussian_mixture(
    num_classes: usize,
    dim: usize,
    counts: &[usize],
    sigma: f64,
    seed: SeedNode,
) -> Result<GlobalDataset> {
    if counts.len() != num_classes {
        return Err(Error::config("counts length must equal the number of classes"));
    }
    GaussianMixture::new(num_classes, dim, sigma, seed.child(0))?.sample(counts, seed.child(1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::longtail_counts;

    #[test]
    fn zero_sigma_collapses_to_means() {
        let mix = GaussianMixture::new(3, 4, 0.0, SeedNode::new(1)).unwrap();
        let ds = mix.sample(&[2, 3, 1], SeedNode::new(2)).unwrap();
        for s in ds.samples() {
            assert_eq!(&s.features, &mix.means()[s.label]);
        }
    }

    #[test]
    fn means_are_unit_norm_and_distinct() {
        let mix = GaussianMixture::new(10, 32, 0.8, SeedNode::new(5)).unwrap();
        for (i, m) in mix.means().iter().enumerate() {
            let n: f64 = m.iter().map(|x| x * x).sum();
            assert!((n - 1.0).abs() < 1e-12);
            for other in &mix.means()[..i] {
                assert_ne!(m, other);
            }
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let counts = [5, 4, 3];
        let a = synth_gaussian_mixture(3, 6, &counts, 0.8, SeedNode::new(77)).unwrap();
        let b = synth_gaussian_mixture(3, 6, &counts, 0.8, SeedNode::new(77)).unwrap();
        assert_eq!(a, b);
        let c = synth_gaussian_mixture(3, 6, &counts, 0.8, SeedNode::new(78)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn realized_ir_matches_counts() {
        let counts = longtail_counts(1000, 10.0, 10).unwrap();
        let ds = synth_gaussian_mixture(10, 8, &counts, 0.8, SeedNode::new(3)).unwrap();
        assert_eq!(ds.class_counts(), counts.as_slice());
        assert!((ds.ir() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn low_dimension_rejected() {
        assert!(synth_gaussian_mixture(2, 1, &[1, 1], 0.8, SeedNode::new(0)).is_err());
    }
}
