use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::rng;

/// Parameters of the synthetic intent corpus.
///
/// Each class owns `tokens_per_class` signature tokens. Every token of an
/// utterance is drawn from its class signature with probability
/// `1 - noise_rate`, otherwise from a noise pool shared by all classes
/// (`tokens_per_class` tokens).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub tokens_per_class: usize,
    pub samples_per_class: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_classes: 8,
            tokens_per_class: 12,
            samples_per_class: 100,
            min_len: 3,
            max_len: 8,
            noise_rate: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 || self.tokens_per_class < 1 || self.samples_per_class < 1 {
            return Err(Error::invalid("synthetic corpus counts must be at least 1"));
        }
        if self.min_len < 1 || self.min_len > self.max_len {
            return Err(Error::invalid(format!(
                "sentence length range {}..={} is empty",
                self.min_len, self.max_len
            )));
        }
        if !(0.0..1.0).contains(&self.noise_rate) {
            return Err(Error::invalid(format!(
                "noise rate must be in [0, 1), got {}",
                self.noise_rate
            )));
        }
        Ok(())
    }
}

pub fn class_token(class: usize, k: usize) -> String {
    format!("c{class}w{k}")
}

pub fn noise_token(k: usize) -> String {
    format!("n{k}")
}

/// Generates a corpus of `num_classes * samples_per_class` utterances.
/// Utterances are interleaved by class so that corpus order is not sorted by label.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Corpus> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, "synth");
    let mut utterances = Vec::with_capacity(cfg.num_classes * cfg.samples_per_class);
    for _ in 0..cfg.samples_per_class {
        for class in 0..cfg.num_classes {
            let len = rng.random_range(cfg.min_len..=cfg.max_len);
            let tokens: Vec<String> = (0..len)
                .map(|_| {
                    let k = rng.random_range(0..cfg.tokens_per_class);
                    if rng.random::<f64>() < cfg.noise_rate {
                        noise_token(k)
                    } else {
                        class_token(class, k)
                    }
                })
                .collect();
            utterances.push(Utterance {
                raw_text: Some(tokens.join(" ")),
                tokens,
                label: class + 1,
            });
        }
    }
    Ok(Corpus {
        utterances,
        intent_names: (0..cfg.num_classes).map(|c| format!("intent_{c:02}")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn counts_match_config() {
        let c = generate_synthetic(&SynthConfig::default()).unwrap();
        assert_eq!(c.len(), 800);
        assert_eq!(c.num_classes(), 8);
        c.validate().unwrap();
    }

    #[test]
    fn noiseless_utterances_use_only_signature_tokens() {
        let cfg = SynthConfig {
            noise_rate: 0.0,
            ..SynthConfig::default()
        };
        let c = generate_synthetic(&cfg).unwrap();
        for u in &c.utterances {
            let prefix = format!("c{}w", u.label - 1);
            assert!(u.tokens.iter().all(|t| t.starts_with(&prefix)), "{:?}", u.tokens);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            SynthConfig { noise_rate: 1.0, ..SynthConfig::default() },
            SynthConfig { num_classes: 0, ..SynthConfig::default() },
            SynthConfig { min_len: 5, max_len: 4, ..SynthConfig::default() },
        ];
        for cfg in bad {
            assert!(generate_synthetic(&cfg).is_err());
        }
    }

    // Independent check that the generated classes are separable: a
    // bag-of-words nearest-centroid classifier fit on half the data
    // (alternating blocks, since classes are interleaved).
    #[test]
    fn nearest_centroid_oracle_separates_classes() {
        let c = generate_synthetic(&SynthConfig::default()).unwrap();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for u in &c.utterances {
            for t in &u.tokens {
                let n = index.len();
                index.entry(t.as_str()).or_insert(n);
            }
        }
        let dim = index.len();
        let bow = |u: &Utterance| {
            let mut v = vec![0.0; dim];
            for t in &u.tokens {
                v[index[t.as_str()]] += 1.0 / u.tokens.len() as f64;
            }
            v
        };
        let (fit, held): (Vec<_>, Vec<_>) = c.utterances.iter().enumerate().partition(|(i, _)| (i / 8) % 2 == 0);
        let mut centroids = vec![vec![0.0; dim]; c.num_classes()];
        let mut counts = vec![0.0; c.num_classes()];
        for (_, u) in &fit {
            for (a, b) in centroids[u.label - 1].iter_mut().zip(bow(u)) {
                *a += b;
            }
            counts[u.label - 1] += 1.0;
        }
        for (cent, n) in centroids.iter_mut().zip(&counts) {
            cent.iter_mut().for_each(|x| *x /= n);
        }
        let correct = held
            .iter()
            .filter(|(_, u)| {
                let v = bow(u);
                let dist = |cent: &Vec<f64>| cent.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                let best = (0..centroids.len())
                    .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                    .unwrap();
                best + 1 == u.label
            })
            .count();
        let acc = correct as f64 / held.len() as f64;
        assert!(acc >= 0.99, "centroid accuracy {acc}");
    }
}
