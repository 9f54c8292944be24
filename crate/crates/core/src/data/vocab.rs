use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
const FIRST_TOKEN_ID: u32 = 3;

/// Token-to-id table. Ids 0..3 are reserved for PAD, UNK and CLS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    tokens: Vec<String>,
    token_to_id: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    /// Tokens in id order, starting at id 3.
    tokens: Vec<String>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        Vocabulary::from_tokens(f.tokens)
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile { tokens: v.tokens }
    }
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), FIRST_TOKEN_ID + i as u32))
            .collect();
        Vocabulary {
            tokens,
            token_to_id,
        }
    }

    /// Total id space including the reserved ids.
    pub fn len(&self) -> usize {
        self.tokens.len() + FIRST_TOKEN_ID as usize
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode_corpus(&self, corpus: &Corpus) -> EncodedCorpus {
        EncodedCorpus {
            ids: corpus
                .utterances
                .iter()
                .map(|u| self.encode(&u.tokens))
                .collect(),
            labels: corpus.labels(),
        }
    }
}

/// Builds a vocabulary from the training corpus. Tokens seen at least
/// `min_count` times get ids in lexicographic order.
pub fn build_vocab(train: &Corpus, min_count: usize) -> Result<Vocabulary> {
    if train.is_empty() {
        return Err(Error::Empty("cannot build a vocabulary from an empty corpus".into()));
    }
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for u in &train.utterances {
        for t in &u.tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let tokens = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|(t, _)| t.to_string())
        .collect();
    Ok(Vocabulary::from_tokens(tokens))
}

/// Token ids and 1-based labels, ready for the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub ids: Vec<Vec<u32>>,
    pub labels: Vec<usize>,
}

impl EncodedCorpus {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> (Vec<&[u32]>, Vec<usize>) {
        indices
            .iter()
            .map(|&i| (self.ids[i].as_slice(), self.labels[i]))
            .unzip()
    }
}
