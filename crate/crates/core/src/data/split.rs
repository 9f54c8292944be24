use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{load_corpus, write_corpus, Corpus, Format, Utterance};
use crate::error::{Error, Result};
use crate::rng;

/// Name given to the proxy class `K+1` in remapped corpora.
pub const OPEN_CLASS_NAME: &str = "<open>";

/// File name of a saved split inside a bundle directory.
pub const SPLITSPEC_FILE: &str = "splitspec.json";

const TEST_FRACTION: f64 = 0.1;
const VALIDATION_FRACTION: f64 = 0.1;

/// How utterances were assigned to train/validation/test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Partition {
    /// Seeded per-class 80/10/10 partition of a single corpus.
    Stratified,
    /// Partition taken from separate train/validation/test files.
    Provided,
}

/// Which intents are known, and how original intents map onto `1..=K+1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub known_ratio: f64,
    pub seed: u64,
    pub partition: Partition,
    /// Every intent of the source data, in original id order.
    pub class_names: Vec<String>,
    /// Original ids of the known intents, ordered by their new id.
    pub known_classes: Vec<usize>,
    pub num_known: usize,
    /// Original intent name to new id; non-known intents map to `K+1`.
    pub label_map: BTreeMap<String, usize>,
}

impl SplitSpec {
    /// Draws `ceil(known_ratio * n)` known classes uniformly without
    /// replacement from the class names sorted lexicographically.
    pub fn select(
        class_names: &[String],
        known_ratio: f64,
        seed: u64,
        partition: Partition,
    ) -> Result<SplitSpec> {
        let total = class_names.len();
        if total < 2 {
            return Err(Error::invalid(format!(
                "a split needs at least 2 classes, found {total}"
            )));
        }
        if !(known_ratio > 0.0 && known_ratio <= 1.0) {
            return Err(Error::invalid(format!(
                "known ratio must be in (0, 1], got {known_ratio}"
            )));
        }
        let num_known = known_count(known_ratio, total);
        if num_known == 0 {
            return Err(Error::invalid("known ratio selects zero classes"));
        }
        let unique: HashSet<&String> = class_names.iter().collect();
        if unique.len() != total {
            return Err(Error::invalid("duplicate intent names"));
        }

        let mut by_name: Vec<usize> = (1..=total).collect();
        by_name.sort_by(|&a, &b| class_names[a - 1].cmp(&class_names[b - 1]));
        let mut rng = rng::stream(seed, "split.classes");
        let mut drawn = by_name;
        drawn.shuffle(&mut rng);
        let mut known: Vec<usize> = drawn[..num_known].to_vec();
        known.sort_by(|&a, &b| class_names[a - 1].cmp(&class_names[b - 1]));

        let open = num_known + 1;
        let mut label_map: BTreeMap<String, usize> =
            class_names.iter().map(|n| (n.clone(), open)).collect();
        for (new_id, &orig) in known.iter().enumerate() {
            label_map.insert(class_names[orig - 1].clone(), new_id + 1);
        }

        Ok(SplitSpec {
            known_ratio,
            seed,
            partition,
            class_names: class_names.to_vec(),
            known_classes: known,
            num_known,
            label_map,
        })
    }

    pub fn open_label(&self) -> usize {
        self.num_known + 1
    }

    pub fn known_names(&self) -> Vec<String> {
        self.known_classes
            .iter()
            .map(|&c| self.class_names[c - 1].clone())
            .collect()
    }

    /// Names of the `K+1` remapped classes.
    pub fn output_names(&self) -> Vec<String> {
        let mut names = self.known_names();
        names.push(OPEN_CLASS_NAME.to_string());
        names
    }

    pub fn map_label(&self, intent: &str) -> Option<usize> {
        self.label_map.get(intent).copied()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SplitSpec> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

fn known_count(ratio: f64, total: usize) -> usize {
    // Tolerate representation error, e.g. 0.3 * 10 = 3.0000000000000004.
    ((ratio * total as f64) - 1e-9).ceil().max(0.0) as usize
}

/// Train/validation/test corpora after known/open remapping.
///
/// `train` and `validation` hold known classes only, labelled `1..=K`;
/// `test` holds every class with open intents relabelled `K+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Corpus,
    pub validation: Corpus,
    pub test: Corpus,
    pub spec: SplitSpec,
}

impl DatasetBundle {
    pub fn num_known(&self) -> usize {
        self.spec.num_known
    }

    /// Rebuilds a bundle from a single corpus and a saved split.
    pub fn from_spec(full: &Corpus, spec: SplitSpec) -> Result<DatasetBundle> {
        if spec.partition != Partition::Stratified {
            return Err(Error::invalid(
                "split was made from pre-partitioned files; load those instead",
            ));
        }
        check_classes(&spec, [full])?;
        let (train_idx, val_idx, test_idx) = stratified_partition(full, spec.seed);
        let pick = |idx: &[usize]| Corpus {
            utterances: idx.iter().map(|&i| full.utterances[i].clone()).collect(),
            intent_names: full.intent_names.clone(),
        };
        Self::assemble(&pick(&train_idx), &pick(&val_idx), &pick(&test_idx), spec)
    }

    /// Rebuilds a bundle from pre-partitioned corpora and a saved split.
    pub fn from_spec_partitioned(
        train: &Corpus,
        validation: &Corpus,
        test: &Corpus,
        spec: SplitSpec,
    ) -> Result<DatasetBundle> {
        check_classes(&spec, [train, validation, test])?;
        Self::assemble(train, validation, test, spec)
    }

    /// Writes `train`, `validation` and `test` corpora (already relabelled)
    /// and the split spec into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>, format: Format) -> Result<()> {
        let dir = dir.as_ref();
        let ext = format.extension();
        write_corpus(&self.train, dir.join(format!("train.{ext}")), format)?;
        write_corpus(&self.validation, dir.join(format!("validation.{ext}")), format)?;
        write_corpus(&self.test, dir.join(format!("test.{ext}")), format)?;
        self.spec.save(dir.join(SPLITSPEC_FILE))
    }

    /// Reads a directory written by [`DatasetBundle::save`].
    pub fn load(dir: impl AsRef<Path>, format: Format) -> Result<DatasetBundle> {
        let dir = dir.as_ref();
        let ext = format.extension();
        let spec = SplitSpec::load(dir.join(SPLITSPEC_FILE))?;
        let read = |stem: &str, keep_open: bool| -> Result<Corpus> {
            let corpus = load_corpus(dir.join(format!("{stem}.{ext}")), format)?;
            relabel(&corpus, &spec, keep_open)
        };
        Ok(DatasetBundle {
            train: read("train", false)?,
            validation: read("validation", false)?,
            test: read("test", true)?,
            spec: spec.clone(),
        })
    }

    fn assemble(
        train: &Corpus,
        validation: &Corpus,
        test: &Corpus,
        spec: SplitSpec,
    ) -> Result<DatasetBundle> {
        let known = spec.known_names();
        let train = remap(train, &spec, false, known.clone())?;
        let validation = remap(validation, &spec, false, known)?;
        let test = remap(test, &spec, true, spec.output_names())?;
        if train.is_empty() {
            return Err(Error::Empty("training split has no known-class utterances".into()));
        }
        if spec.num_known < spec.class_names.len()
            && !test.utterances.iter().any(|u| u.label == spec.open_label())
        {
            return Err(Error::invalid(
                "test split has no open-class utterances; open classes need at least 2 samples",
            ));
        }
        Ok(DatasetBundle {
            train,
            validation,
            test,
            spec,
        })
    }
}

/// Selects known classes and partitions a single corpus (stratified 80/10/10).
pub fn make_split(full: &Corpus, known_ratio: f64, seed: u64) -> Result<DatasetBundle> {
    full.validate()?;
    let spec = SplitSpec::select(&full.intent_names, known_ratio, seed, Partition::Stratified)?;
    DatasetBundle::from_spec(full, spec)
}

/// Selects known classes over the union of intents in pre-partitioned corpora.
pub fn make_split_partitioned(
    train: &Corpus,
    validation: &Corpus,
    test: &Corpus,
    known_ratio: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    let mut names: Vec<String> = Vec::new();
    let mut seen = HashSet::new();
    for c in [train, validation, test] {
        c.validate()?;
        for n in &c.intent_names {
            if seen.insert(n.clone()) {
                names.push(n.clone());
            }
        }
    }
    let spec = SplitSpec::select(&names, known_ratio, seed, Partition::Provided)?;
    DatasetBundle::from_spec_partitioned(train, validation, test, spec)
}

/// Loads `train`, `dev` (or `valid`/`validation`) and `test` files from a directory.
pub fn load_partitioned(dir: impl AsRef<Path>, format: Format) -> Result<(Corpus, Corpus, Corpus)> {
    let dir = dir.as_ref();
    let ext = format.extension();
    let find = |stems: &[&str]| {
        stems
            .iter()
            .map(|s| dir.join(format!("{s}.{ext}")))
            .find(|p| p.is_file())
            .ok_or_else(|| {
                Error::invalid(format!(
                    "{}: no {}.{ext} file",
                    dir.display(),
                    stems.join("/")
                ))
            })
    };
    let train = load_corpus(find(&["train"])?, format)?;
    let validation = load_corpus(find(&["dev", "valid", "validation"])?, format)?;
    let test = load_corpus(find(&["test"])?, format)?;
    Ok((train, validation, test))
}

fn check_classes<'a>(spec: &SplitSpec, corpora: impl IntoIterator<Item = &'a Corpus>) -> Result<()> {
    for c in corpora {
        for n in &c.intent_names {
            if !spec.label_map.contains_key(n) {
                return Err(Error::invalid(format!("intent {n:?} is not part of the split")));
            }
        }
    }
    Ok(())
}

fn remap(corpus: &Corpus, spec: &SplitSpec, keep_open: bool, names: Vec<String>) -> Result<Corpus> {
    let open = spec.open_label();
    let mut utterances = Vec::with_capacity(corpus.len());
    for u in &corpus.utterances {
        let name = corpus.intent_name(u.label);
        let label = spec
            .map_label(name)
            .ok_or_else(|| Error::invalid(format!("intent {name:?} is not part of the split")))?;
        if label == open && !keep_open {
            continue;
        }
        utterances.push(Utterance {
            label,
            ..u.clone()
        });
    }
    Ok(Corpus {
        utterances,
        intent_names: names,
    })
}

/// Maps a saved, already relabelled corpus back onto the ids of `spec`.
fn relabel(corpus: &Corpus, spec: &SplitSpec, keep_open: bool) -> Result<Corpus> {
    let open = spec.open_label();
    let mut utterances = Vec::with_capacity(corpus.len());
    for u in &corpus.utterances {
        let name = corpus.intent_name(u.label);
        let label = if name == OPEN_CLASS_NAME {
            Some(open)
        } else {
            spec.map_label(name)
        };
        match label {
            Some(l) if l < open || keep_open => utterances.push(Utterance {
                label: l,
                ..u.clone()
            }),
            _ => {
                return Err(Error::invalid(format!(
                    "intent {name:?} does not belong in this split file"
                )))
            }
        }
    }
    Ok(Corpus {
        utterances,
        intent_names: if keep_open {
            spec.output_names()
        } else {
            spec.known_names()
        },
    })
}

/// Per class: shuffle, then take `ceil(10%)` for test (classes with >= 2
/// samples), `ceil(10%)` for validation (>= 3 samples), the rest for train.
fn stratified_partition(full: &Corpus, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); full.num_classes()];
    for (i, u) in full.utterances.iter().enumerate() {
        by_class[u.label - 1].push(i);
    }
    let mut rng = rng::stream(seed, "split.partition");
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut members in by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        let n_test = if n >= 2 { (TEST_FRACTION * n as f64).ceil() as usize } else { 0 };
        let n_val = if n >= 3 { (VALIDATION_FRACTION * n as f64).ceil() as usize } else { 0 };
        test.extend_from_slice(&members[..n_test]);
        val.extend_from_slice(&members[n_test..n_test + n_val]);
        train.extend_from_slice(&members[n_test + n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    (train, val, test)
}
