//! Linear-softmax autoregressive token policy.
//!
//! At every position the next-token logits are
//! `z = W_x · x + W_c · c`, where `x` is the input feature vector and `c` is
//! the context: the bag (count vector) of tokens emitted so far followed by a
//! one-hot of the bag's total size. Log-probabilities and
//! their gradients are exact; no autodiff is involved.
//!
//! Weights are stored input-major: entry `(input j, token v)` lives at
//! `j * vocab + v`, so each input column is one contiguous vocab-length row.
//! Inputs are ordered features, token counts, then length slots.

use super::features::FeatureVector;
use super::vocab::TokenId;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CriticPolicy {
    vocab: usize,
    feature_dim: usize,
    weights: Vec<f64>,
    pub version: String,
}

/// Gradient buffer with the same layout as the policy weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradient(pub Vec<f64>);

impl Gradient {
    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, g| m.max(g.abs()))
    }

    pub fn clear(&mut self) {
        self.0.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, k: f64) {
        self.0.iter_mut().for_each(|g| *g *= k);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    pub tokens: Vec<TokenId>,
    /// Sum of natural-log probabilities of the emitted tokens.
    pub logprob: f64,
}

/// Number of length slots in the context; longer prefixes share the last one.
pub const LENGTH_SLOTS: usize = 16;

/// Sparse input at one position: feature entries, the length slot, then
/// context counts.
struct Inputs {
    active: Vec<(usize, f64)>,
    len_at: usize,
    len_base: usize,
    emitted: usize,
}

impl Inputs {
    fn new(features: &FeatureVector, vocab: usize) -> Self {
        let mut active = features.active();
        let len_at = active.len();
        let len_base = features.len() + vocab;
        active.push((len_base, 1.0));
        Inputs { active, len_at, len_base, emitted: 0 }
    }

    fn push_token(&mut self, feature_dim: usize, tok: TokenId) {
        let col = feature_dim + tok;
        match self.active[self.len_at + 1..].iter_mut().find(|(j, _)| *j == col) {
            Some(entry) => entry.1 += 1.0,
            None => self.active.push((col, 1.0)),
        }
        self.emitted += 1;
        self.active[self.len_at].0 = self.len_base + self.emitted.min(LENGTH_SLOTS - 1);
    }
}

impl CriticPolicy {
    pub fn zeros(vocab: usize, feature_dim: usize) -> Self {
        assert!(vocab >= 2, "vocab must contain at least one token plus EOS");
        CriticPolicy {
            vocab,
            feature_dim,
            weights: vec![0.0; (feature_dim + vocab + LENGTH_SLOTS) * vocab],
            version: "init".into(),
        }
    }

    pub fn from_weights(vocab: usize, feature_dim: usize, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != (feature_dim + vocab + LENGTH_SLOTS) * vocab {
            return Err(Error::Checkpoint(format!(
                "weight count {} does not match {}x({}+{}+{})",
                weights.len(),
                vocab,
                feature_dim,
                vocab,
                LENGTH_SLOTS
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Checkpoint(format!("weight {i} is not finite")));
        }
        Ok(CriticPolicy { vocab, feature_dim, weights, version: "loaded".into() })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn eos(&self) -> TokenId {
        self.vocab - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn zero_gradient(&self) -> Gradient {
        Gradient(vec![0.0; self.weights.len()])
    }

    /// `weights += step * grad`.
    pub fn apply(&mut self, grad: &Gradient, step: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grad.0) {
            *w += step * g;
        }
    }

    fn log_softmax(&self, inputs: &Inputs, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.vocab, 0.0);
        for &(j, x) in &inputs.active {
            let row = &self.weights[j * self.vocab..(j + 1) * self.vocab];
            for (z, w) in out.iter_mut().zip(row) {
                *z += w * x;
            }
        }
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + out.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        out.iter_mut().for_each(|z| *z -= lse);
    }

    fn check_features(&self, features: &FeatureVector) {
        assert_eq!(features.len(), self.feature_dim, "feature dimension mismatch");
    }

    /// Next-token distribution after `prefix`.
    pub fn next_distribution(&self, features: &FeatureVector, prefix: &[TokenId]) -> Vec<f64> {
        self.check_features(features);
        let mut inputs = Inputs::new(features, self.vocab);
        for &t in prefix {
            inputs.push_token(self.feature_dim, t);
        }
        let mut lp = Vec::new();
        self.log_softmax(&inputs, &mut lp);
        lp.into_iter().map(f64::exp).collect()
    }

    /// Draws tokens until EOS or `max_len`. The output need not be grammatical.
    pub fn sample(&self, features: &FeatureVector, rng: &mut impl rand::Rng, max_len: usize) -> Generation {
        self.decode(features, max_len, |lp| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (v, l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    return v;
                }
            }
            // rounding: fall back to the most likely token
            argmax(lp)
        })
    }

    /// Argmax decoding (ties go to the lowest id).
    pub fn greedy(&self, features: &FeatureVector, max_len: usize) -> Generation {
        self.decode(features, max_len, argmax)
    }

    fn decode(
        &self,
        features: &FeatureVector,
        max_len: usize,
        mut choose: impl FnMut(&[f64]) -> TokenId,
    ) -> Generation {
        self.check_features(features);
        let mut inputs = Inputs::new(features, self.vocab);
        let mut tokens = Vec::with_capacity(max_len);
        let mut logprob = 0.0;
        let mut lp = Vec::with_capacity(self.vocab);
        while tokens.len() < max_len {
            self.log_softmax(&inputs, &mut lp);
            let t = choose(&lp);
            logprob += lp[t];
            tokens.push(t);
            if t == self.eos() {
                break;
            }
            inputs.push_token(self.feature_dim, t);
        }
        Generation { tokens, logprob }
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        if tokens.is_empty() {
            return Err(Error::Config("cannot score an empty token sequence".into()));
        }
        if let Some(&t) = tokens.iter().find(|&&t| t >= self.vocab) {
            return Err(Error::Unknown { what: "token id", name: t.to_string() });
        }
        Ok(())
    }

    /// Teacher-forced log-probability of `tokens`.
    pub fn logprob(&self, features: &FeatureVector, tokens: &[TokenId]) -> Result<f64> {
        self.check_tokens(tokens)?;
        self.check_features(features);
        let mut inputs = Inputs::new(features, self.vocab);
        let mut lp = Vec::with_capacity(self.vocab);
        let mut total = 0.0;
        for &t in tokens {
            self.log_softmax(&inputs, &mut lp);
            total += lp[t];
            inputs.push_token(self.feature_dim, t);
        }
        Ok(total)
    }

    /// Adds `scale * ∇ log π(tokens)` into `grad` and returns `log π(tokens)`.
    pub fn accumulate_grad(
        &self,
        features: &FeatureVector,
        tokens: &[TokenId],
        scale: f64,
        grad: &mut Gradient,
    ) -> Result<f64> {
        self.check_tokens(tokens)?;
        self.check_features(features);
        let mut inputs = Inputs::new(features, self.vocab);
        let mut lp = Vec::with_capacity(self.vocab);
        let mut delta = vec![0.0; self.vocab];
        let mut total = 0.0;
        for &t in tokens {
            self.log_softmax(&inputs, &mut lp);
            total += lp[t];
            if scale != 0.0 {
                // d log p_t / d z_v = 1[v = t] - p_v
                for (d, l) in delta.iter_mut().zip(&lp) {
                    *d = -l.exp();
                }
                delta[t] += 1.0;
                for &(j, x) in &inputs.active {
                    let k = scale * x;
                    let row = &mut grad.0[j * self.vocab..(j + 1) * self.vocab];
                    for (g, d) in row.iter_mut().zip(&delta) {
                        *g += k * d;
                    }
                }
            }
            inputs.push_token(self.feature_dim, t);
        }
        Ok(total)
    }

    pub fn logprob_and_grad(&self, features: &FeatureVector, tokens: &[TokenId]) -> Result<(f64, Gradient)> {
        let mut grad = self.zero_gradient();
        let lp = self.accumulate_grad(features, tokens, 1.0, &mut grad)?;
        Ok((lp, grad))
    }
}

fn argmax(lp: &[f64]) -> TokenId {
    let mut best = 0;
    for (i, v) in lp.iter().enumerate() {
        if *v > lp[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use rand::Rng as _;

    fn random_policy(vocab: usize, dim: usize, seed: u64) -> CriticPolicy {
        let mut rng = from_seed(seed);
        let mut p = CriticPolicy::zeros(vocab, dim);
        p.weights_mut().iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        p
    }

    fn random_features(dim: usize, seed: u64) -> FeatureVector {
        let mut rng = from_seed(seed ^ 0xabc);
        FeatureVector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn zero_policy_is_uniform() {
        let p = CriticPolicy::zeros(9, 4);
        let x = FeatureVector(vec![1.0, 0.0, 0.5, 0.0]);
        let g = p.sample(&x, &mut from_seed(1), 5);
        for t in 0..g.tokens.len() {
            let d = p.next_distribution(&x, &g.tokens[..t]);
            assert!(d.iter().all(|q| (q - 1.0 / 9.0).abs() < 1e-15));
        }
        assert!((g.logprob + g.tokens.len() as f64 * 9f64.ln()).abs() < 1e-12);
        let seq = [0, 1, 2, 3, 4, 5, 8];
        assert!((p.logprob(&x, &seq).unwrap() + 7.0 * 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn distributions_normalize() {
        let p = random_policy(6, 5, 3);
        let x = random_features(5, 3);
        for prefix in [&[][..], &[1], &[1, 1, 3], &[0, 2, 4, 1]] {
            let s: f64 = p.next_distribution(&x, prefix).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic_and_logprob_consistent() {
        let p = random_policy(6, 5, 4);
        let x = random_features(5, 4);
        let a = p.sample(&x, &mut from_seed(11), 10);
        let b = p.sample(&x, &mut from_seed(11), 10);
        assert_eq!(a, b);
        assert!((p.logprob(&x, &a.tokens).unwrap() - a.logprob).abs() < 1e-12);
    }

    #[test]
    fn truncates_at_max_len() {
        // EOS (id 3) made very unlikely
        let mut p = CriticPolicy::zeros(4, 1);
        p.weights_mut()[3] = -50.0;
        let x = FeatureVector(vec![1.0]);
        let g = p.sample(&x, &mut from_seed(0), 7);
        assert_eq!(g.tokens.len(), 7);
        assert!(!g.tokens.contains(&3));
    }

    #[test]
    fn rejects_bad_tokens() {
        let p = CriticPolicy::zeros(4, 1);
        let x = FeatureVector(vec![1.0]);
        assert!(p.logprob(&x, &[4]).is_err());
        assert!(p.logprob_and_grad(&x, &[]).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let h = 1e-5;
        for seed in 0..3 {
            let p = random_policy(6, 4, seed);
            let x = random_features(4, seed);
            let toks = [2, 0, 2, 4, 5];
            let (_, g) = p.logprob_and_grad(&x, &toks).unwrap();
            let mut fd = vec![0.0; g.0.len()];
            for i in 0..fd.len() {
                let mut plus = p.clone();
                plus.weights_mut()[i] += h;
                let mut minus = p.clone();
                minus.weights_mut()[i] -= h;
                fd[i] = (plus.logprob(&x, &toks).unwrap() - minus.logprob(&x, &toks).unwrap()) / (2.0 * h);
            }
            let err = g.0.iter().zip(&fd).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(err / scale < 1e-5, "relative error {}", err / scale);
        }
    }
}
