//! Corpora, vocabularies, known/open class splits and batching.

mod batch;
mod corpus;
mod split;
mod synth;
mod vocab;

pub use batch::{epoch_batches, Batches};
pub use corpus::{load_corpus, tokenize, write_corpus, Corpus, Format, Utterance};
pub use split::{
    load_partitioned, make_split, make_split_partitioned, DatasetBundle, Partition, SplitSpec,
    OPEN_CLASS_NAME, SPLITSPEC_FILE,
};
pub use synth::{generate_synthetic, SynthConfig};
pub use vocab::{build_vocab, EncodedCorpus, Vocabulary, CLS_ID, PAD_ID, UNK_ID};
