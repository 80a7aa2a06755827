//! Corpus ingestion: SQuAD records, tokenization, answer location, BIO
//! encoding, the tagged corpus format and vocabularies.

pub mod bio;
pub mod prepare;
pub mod squad;
pub mod tagged;
pub mod tokenize;
pub mod types;
pub mod vocab;

pub use bio::{decode_bio, encode_bio, locate_answer, valid_bio_sequence};
pub use prepare::{prepare, write_prepared, PrepareOptions, PrepareReport, Splits};
pub use squad::{parse_squad, split_sentences, SkipReport, SquadRecord};
pub use tagged::{
    format_corpus, format_example, format_tagged_line, parse_corpus, parse_example, parse_tagged_line,
    read_corpus, write_corpus,
};
pub use tokenize::{tokenize, PIPE_TOKEN};
pub use types::{AnswerSpan, Bio, Example, TaggedToken};
pub use vocab::{VocabSet, Vocabulary, BOS, EOS, PAD, UNK};
