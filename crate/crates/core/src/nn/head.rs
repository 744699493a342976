//! Masked categorical distribution over action logits.

use rand::Rng;

use super::NnError;

/// Softmax over the unmasked entries only; masked entries get probability
/// exactly 0 and never contribute to the normalizer, the entropy, or any
/// gradient.
#[derive(Debug, Clone)]
pub struct Categorical {
    probs: Vec<f64>,
    mask: Vec<bool>,
    log_norm: f64,
    logits: Vec<f64>,
}

/// Build the distribution. `mask[i] == true` means entry `i` is allowed.
pub fn masked_categorical(logits: &[f64], mask: &[bool]) -> Result<Categorical, NnError> {
    assert_eq!(logits.len(), mask.len());
    if !mask.iter().any(|&m| m) {
        return Err(NnError::AllMasked);
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(&l, _)| l)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut probs = vec![0.0; logits.len()];
    let mut sum = 0.0;
    for i in 0..logits.len() {
        if mask[i] {
            probs[i] = (logits[i] - max).exp();
            sum += probs[i];
        }
    }
    for p in &mut probs {
        *p /= sum;
    }
    Ok(Categorical { probs, mask: mask.to_vec(), log_norm: max + sum.ln(), logits: logits.to_vec() })
}

impl Categorical {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        debug_assert!(self.mask[action], "log_prob of a masked action");
        self.logits[action] - self.log_norm
    }

    /// Entropy over the unmasked support.
    pub fn entropy(&self) -> f64 {
        -self
            .probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>()
    }

    /// Inverse-CDF sample in index order.
    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.random_range(0.0..1.0);
        let mut acc = 0.0;
        let mut last_valid = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if !self.mask[i] {
                continue;
            }
            last_valid = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
        last_valid
    }

    /// Any tie resolves to the lowest index, which keeps evaluation runs
    /// deterministic.
    pub fn argmax(&self) -> usize {
        let mut best = usize::MAX;
        let mut best_p = f64::NEG_INFINITY;
        for (i, &p) in self.probs.iter().enumerate() {
            if self.mask[i] && p > best_p {
                best = i;
                best_p = p;
            }
        }
        best
    }

    /// `d log p(action) / d logits`: `1{i==a} − p_i` on the support, 0 on
    /// masked entries.
    pub fn grad_log_prob(&self, action: usize) -> Vec<f64> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| if !self.mask[i] { 0.0 } else if i == action { 1.0 - p } else { -p })
            .collect()
    }

    /// `d entropy / d logits = −p_i (ln p_i + H)` on the support.
    pub fn grad_entropy(&self) -> Vec<f64> {
        let h = self.entropy();
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| if self.mask[i] && p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
            .collect()
    }
}
