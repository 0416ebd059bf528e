//! Collapsed Gibbs sampler for LDA.
//!
//! Token topics are initialised uniformly at random; each sweep visits every
//! token position in document order and resamples its topic from
//!
//! ```text
//! p(z = k | rest) ∝ (n_dk + α) · (n_kw + β) / (n_k + V·β)
//! ```
//!
//! with the counts excluding the position being resampled. Given the same
//! seed the count matrices are bitwise reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

/// Sufficient statistics of the sampler state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountMatrices {
    pub topics: usize,
    pub vocabulary: usize,
    /// D×K, row-major.
    pub doc_topic: Vec<u32>,
    /// K×V, row-major.
    pub topic_word: Vec<u32>,
    pub topic_totals: Vec<u32>,
    pub doc_lengths: Vec<u32>,
}

impl CountMatrices {
    pub fn doc_topic(&self, d: usize, k: usize) -> u32 {
        self.doc_topic[d * self.topics + k]
    }

    pub fn topic_word(&self, k: usize, w: usize) -> u32 {
        self.topic_word[k * self.vocabulary + w]
    }
}

pub struct GibbsSampler<'a> {
    docs: &'a [Vec<usize>],
    alpha: f64,
    beta: f64,
    assignments: Vec<Vec<usize>>,
    counts: CountMatrices,
    rng: ChaCha8Rng,
    weights: Vec<f64>,
    sweeps: usize,
}

impl<'a> GibbsSampler<'a> {
    /// `docs` hold vocabulary indices `< vocabulary`.
    pub fn new(
        docs: &'a [Vec<usize>],
        vocabulary: usize,
        topics: usize,
        alpha: f64,
        beta: f64,
        seed: u64,
    ) -> Self {
        assert!(topics >= 1, "need at least one topic");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = CountMatrices {
            topics,
            vocabulary,
            doc_topic: vec![0; docs.len() * topics],
            topic_word: vec![0; topics * vocabulary],
            topic_totals: vec![0; topics],
            doc_lengths: docs.iter().map(|d| d.len() as u32).collect(),
        };
        let assignments = docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let k = rng.random_range(0..topics);
                        counts.doc_topic[d * topics + k] += 1;
                        counts.topic_word[k * vocabulary + w] += 1;
                        counts.topic_totals[k] += 1;
                        k
                    })
                    .collect()
            })
            .collect();
        Self {
            docs,
            alpha,
            beta,
            assignments,
            counts,
            rng,
            weights: vec![0.0; topics],
            sweeps: 0,
        }
    }

    pub fn sweep(&mut self) {
        let k_count = self.counts.topics;
        let v = self.counts.vocabulary;
        let v_beta = v as f64 * self.beta;
        for (d, doc) in self.docs.iter().enumerate() {
            for (i, &w) in doc.iter().enumerate() {
                let old = self.assignments[d][i];
                self.counts.doc_topic[d * k_count + old] -= 1;
                self.counts.topic_word[old * v + w] -= 1;
                self.counts.topic_totals[old] -= 1;

                let mut total = 0.0;
                for k in 0..k_count {
                    let p = (self.counts.doc_topic[d * k_count + k] as f64 + self.alpha)
                        * (self.counts.topic_word[k * v + w] as f64 + self.beta)
                        / (self.counts.topic_totals[k] as f64 + v_beta);
                    total += p;
                    self.weights[k] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.weights.iter().position(|&c| u < c).unwrap_or(k_count - 1);

                self.assignments[d][i] = new;
                self.counts.doc_topic[d * k_count + new] += 1;
                self.counts.topic_word[new * v + w] += 1;
                self.counts.topic_totals[new] += 1;
            }
        }
        self.sweeps += 1;
        debug_assert!(self.counts_conserved());
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn counts(&self) -> &CountMatrices {
        &self.counts
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    /// Σ_k n_dk = n_d for every document and Σ_w n_kw = n_k for every topic.
    pub fn counts_conserved(&self) -> bool {
        let c = &self.counts;
        let docs_ok = (0..self.docs.len()).all(|d| {
            (0..c.topics).map(|k| c.doc_topic(d, k)).sum::<u32>() == c.doc_lengths[d]
        });
        let topics_ok = (0..c.topics).all(|k| {
            (0..c.vocabulary).map(|w| c.topic_word(k, w)).sum::<u32>() == c.topic_totals[k]
        });
        docs_ok && topics_ok
    }

    /// φ_kw = (n_kw + β) / (n_k + V·β)
    pub fn phi(&self) -> Vec<Vec<f64>> {
        let c = &self.counts;
        let v_beta = c.vocabulary as f64 * self.beta;
        (0..c.topics)
            .map(|k| {
                let denom = c.topic_totals[k] as f64 + v_beta;
                (0..c.vocabulary)
                    .map(|w| (c.topic_word(k, w) as f64 + self.beta) / denom)
                    .collect()
            })
            .collect()
    }

    /// θ_dk = (n_dk + α) / (n_d + K·α)
    pub fn theta(&self) -> Vec<Vec<f64>> {
        let c = &self.counts;
        let k_alpha = c.topics as f64 * self.alpha;
        (0..self.docs.len())
            .map(|d| {
                let denom = c.doc_lengths[d] as f64 + k_alpha;
                (0..c.topics)
                    .map(|k| (c.doc_topic(d, k) as f64 + self.alpha) / denom)
                    .collect()
            })
            .collect()
    }

    /// Complete-data log likelihood log p(w, z | α, β).
    pub fn log_likelihood(&self) -> f64 {
        complete_log_likelihood(&self.counts, self.alpha, self.beta)
    }
}

pub fn complete_log_likelihood(c: &CountMatrices, alpha: f64, beta: f64) -> f64 {
    let (k, v) = (c.topics as f64, c.vocabulary as f64);
    let mut ll = 0.0;
    for t in 0..c.topics {
        ll += ln_gamma(v * beta) - v * ln_gamma(beta);
        for w in 0..c.vocabulary {
            ll += ln_gamma(c.topic_word(t, w) as f64 + beta);
        }
        ll -= ln_gamma(c.topic_totals[t] as f64 + v * beta);
    }
    for d in 0..c.doc_lengths.len() {
        ll += ln_gamma(k * alpha) - k * ln_gamma(alpha);
        for t in 0..c.topics {
            ll += ln_gamma(c.doc_topic(d, t) as f64 + alpha);
        }
        ll -= ln_gamma(c.doc_lengths[d] as f64 + k * alpha);
    }
    ll
}
