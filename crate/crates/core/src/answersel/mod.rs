//! Stage one: choosing the answer span a question will be asked about.

pub mod entities;
pub mod ne;
pub mod pointer;

pub use entities::candidate_entities;
pub use ne::{NeChoice, NeConfig, NeItem, NeSelector};
pub use pointer::{
    decode_boundary, decode_sequence, is_contiguous, pn_scores, pointer_targets, positions_to_span, FixedScorer,
    PointerConfig, PointerItem, PointerMode, PointerNet, PointerScorer,
};
