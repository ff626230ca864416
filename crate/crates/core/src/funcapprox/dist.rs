//! Temperature-scaled categorical distributions and their derivatives.
//!
//! All gradients here are with respect to the *raw* logits `z`, where the
//! distribution is `softmax(z / T)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    temperature: f64,
}

impl Categorical {
    pub fn from_logits(logits: &[f64], temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::arg(format!("temperature must be positive, got {temperature}")));
        }
        if logits.is_empty() {
            return Err(Error::arg("empty logit vector"));
        }
        if logits.iter().any(|z| !z.is_finite()) {
            return Err(Error::numeric("non-finite logits"));
        }
        let scaled: Vec<f64> = logits.iter().map(|z| z / temperature).collect();
        let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = scaled.iter().map(|u| (u - max).exp()).sum();
        let log_norm = max + sum.ln();
        let log_probs: Vec<f64> = scaled.iter().map(|u| u - log_norm).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Ok(Self {
            probs,
            log_probs,
            temperature,
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.log_probs[action]
    }

    pub fn entropy(&self) -> f64 {
        self.probs
            .iter()
            .zip(&self.log_probs)
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, l)| -p * l)
            .sum()
    }

    /// `KL(self || other)`; both distributions come from finite logits so the
    /// support condition always holds.
    pub fn kl_to(&self, other: &Categorical) -> f64 {
        self.probs
            .iter()
            .zip(self.log_probs.iter().zip(&other.log_probs))
            .filter(|(p, _)| **p > 0.0)
            .map(|(p, (lp, lq))| p * (lp - lq))
            .sum()
    }

    /// Sample by inverse CDF from a uniform draw in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // rounding left the tail short of `u`: take the last supported action
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }

    /// d log p(a) / dz
    pub fn grad_log_prob(&self, action: usize) -> Vec<f64> {
        self.probs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let indicator = if k == action { 1.0 } else { 0.0 };
                (indicator - p) / self.temperature
            })
            .collect()
    }

    /// dH / dz
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs
            .iter()
            .zip(&self.log_probs)
            .map(|(p, l)| -p * (l + h) / self.temperature)
            .collect()
    }

    /// d KL(self || other) / dz, with `other` held fixed.
    pub fn grad_kl_to(&self, other: &Categorical) -> Vec<f64> {
        let kl = self.kl_to(other);
        self.probs
            .iter()
            .zip(self.log_probs.iter().zip(&other.log_probs))
            .map(|(p, (lp, lq))| p * (lp - lq - kl) / self.temperature)
            .collect()
    }
}

/// `softmax(logits / temperature)`.
pub fn softmax(logits: &[f64], temperature: f64) -> Result<Vec<f64>> {
    Ok(Categorical::from_logits(logits, temperature)?.probs)
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

/// `sum p ln(p / q)`; fails if `q` vanishes where `p` does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::arg(format!(
            "distribution lengths differ: {} vs {}",
            p.len(),
            q.len()
        )));
    }
    let mut total = 0.0;
    for (pi, qi) in p.iter().zip(q) {
        if *pi > 0.0 {
            if *qi <= 0.0 {
                return Err(Error::numeric("KL support violation: q = 0 where p > 0"));
            }
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn uniform_logits_give_uniform_probs() {
        for t in [0.1, 1.0, 7.0] {
            let p = softmax(&[0.0, 0.0], t).unwrap();
            assert_eq!(p, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn softmax_of_one_zero() {
        // e / (e + 1)
        let expected = std::f64::consts::E / (std::f64::consts::E + 1.0);
        let p = softmax(&[1.0, 0.0], 1.0).unwrap();
        assert!(close(p[0], expected, 1e-15));
        assert!(close(p[0], 0.7311, 1e-4));
        assert!(close(p[1], 0.2689, 1e-4));
    }

    #[test]
    fn high_temperature_approaches_uniform() {
        let p = softmax(&[1.0, 0.0], 1e9).unwrap();
        assert!(close(p[0], 0.5, 1e-9));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(softmax(&[f64::NAN, 0.0], 1.0), Err(Error::Numeric(_))));
        assert!(matches!(softmax(&[1.0, 0.0], 0.0), Err(Error::Argument(_))));
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn entropy_values() {
        assert!(close(entropy(&[0.25; 4]), 4f64.ln(), 1e-15));
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        // -(0.75 ln 0.75 + 0.25 ln 0.25)
        let direct = -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln());
        assert!(close(entropy(&[0.75, 0.25]), direct, 1e-15));
        assert!(close(direct, 0.5623, 1e-4));
    }

    #[test]
    fn kl_values() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 0.0);
        let direct = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let kl = kl_divergence(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert!(close(kl, direct, 1e-15));
        assert!(close(kl, 0.5108, 1e-4));
    }

    #[test]
    fn categorical_agrees_with_free_functions() {
        let a = Categorical::from_logits(&[0.3, -1.2, 2.0], 1.7).unwrap();
        let b = Categorical::from_logits(&[1.0, 0.1, -0.4], 1.7).unwrap();
        assert!(close(a.entropy(), entropy(a.probs()), 1e-14));
        assert!(close(a.kl_to(&b), kl_divergence(a.probs(), b.probs()).unwrap(), 1e-14));
    }

    #[test]
    fn sampling_by_inverse_cdf() {
        let c = Categorical::from_logits(&[0.0, 0.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(c.sample_with(0.0), 0);
        assert_eq!(c.sample_with(0.26), 1);
        assert_eq!(c.sample_with(0.999_999), 3);
    }
}
