use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled utterance. `label` is a 1-based intent id into the owning corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub tokens: Vec<String>,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    /// Intent names; intent id `i` is `intent_names[i - 1]`.
    pub intent_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Tsv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Tsv => "tsv",
            Format::Jsonl => "jsonl",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.extension())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" => Ok(Format::Tsv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(Error::invalid(format!("unknown corpus format {other:?}"))),
        }
    }
}

/// Lowercase whitespace tokenization.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_lowercase).collect()
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.intent_names.len()
    }

    pub fn intent_name(&self, label: usize) -> &str {
        &self.intent_names[label - 1]
    }

    pub fn labels(&self) -> Vec<usize> {
        self.utterances.iter().map(|u| u.label).collect()
    }

    /// Checks the id invariants: labels in `1..=num_classes`, non-empty token lists.
    pub fn validate(&self) -> Result<()> {
        for (i, u) in self.utterances.iter().enumerate() {
            if u.tokens.is_empty() {
                return Err(Error::invalid(format!("utterance {i} has no tokens")));
            }
            if u.label == 0 || u.label > self.intent_names.len() {
                return Err(Error::invalid(format!(
                    "utterance {i} has label {} outside 1..={}",
                    u.label,
                    self.intent_names.len()
                )));
            }
        }
        Ok(())
    }

    /// Builds a corpus from `(text, intent name)` records, assigning ids in
    /// first-appearance order.
    pub fn from_records<I, S, L>(records: I) -> Result<Corpus>
    where
        I: IntoIterator<Item = (S, L)>,
        S: AsRef<str>,
        L: AsRef<str>,
    {
        let mut builder = CorpusBuilder::default();
        for (i, (text, label)) in records.into_iter().enumerate() {
            builder
                .push(text.as_ref(), label.as_ref())
                .map_err(|msg| Error::invalid(format!("record {}: {msg}", i + 1)))?;
        }
        builder.finish()
    }
}

#[derive(Default)]
struct CorpusBuilder {
    utterances: Vec<Utterance>,
    intent_names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl CorpusBuilder {
    fn push(&mut self, text: &str, label: &str) -> std::result::Result<(), String> {
        let label = label.trim();
        if label.is_empty() {
            return Err("empty label".into());
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err("empty text".into());
        }
        let next = self.intent_names.len() + 1;
        let id = *self.ids.entry(label.to_string()).or_insert_with(|| {
            self.intent_names.push(label.to_string());
            next
        });
        self.utterances.push(Utterance {
            tokens,
            label: id,
            raw_text: Some(text.to_string()),
        });
        Ok(())
    }

    fn finish(self) -> Result<Corpus> {
        if self.utterances.is_empty() {
            return Err(Error::Empty("corpus has no records".into()));
        }
        Ok(Corpus {
            utterances: self.utterances,
            intent_names: self.intent_names,
        })
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum JsonLabel {
    Name(String),
    Number(serde_json::Number),
}

#[derive(Deserialize)]
struct JsonRecord {
    text: String,
    label: JsonLabel,
}

/// Loads a corpus from a TSV (`text<TAB>label`) or JSONL (`{"text", "label"}`) file.
/// Blank lines are skipped; any malformed record fails with its line number.
pub fn load_corpus(path: impl AsRef<Path>, format: Format) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    let mut builder = CorpusBuilder::default();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            msg,
        };
        let (text, label) = match format {
            Format::Tsv => {
                let (text, label) = line
                    .rsplit_once('\t')
                    .ok_or_else(|| parse_err("expected `text<TAB>label`".into()))?;
                (text.to_string(), label.to_string())
            }
            Format::Jsonl => {
                let rec: JsonRecord =
                    serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
                let label = match rec.label {
                    JsonLabel::Name(s) => s,
                    JsonLabel::Number(n) => n.to_string(),
                };
                (rec.text, label)
            }
        };
        builder.push(&text, &label).map_err(parse_err)?;
    }
    builder
        .finish()
        .map_err(|_| Error::Empty(format!("{} contains no records", path.display())))
}

/// Writes a corpus in the given format. Tokens are re-joined with single spaces.
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>, format: Format) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(file);
    for u in &corpus.utterances {
        let text = u.tokens.join(" ");
        let label = corpus.intent_name(u.label);
        match format {
            Format::Tsv => writeln!(w, "{text}\t{label}")?,
            Format::Jsonl => {
                let line = serde_json::json!({ "text": text, "label": label });
                writeln!(w, "{line}")?
            }
        }
    }
    w.flush()?;
    Ok(())
}
