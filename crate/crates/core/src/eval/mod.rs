//! Face verification: cosine scoring, ROC/EER, leave-one-fold-out accuracy
//! and the activation comparison.
//!
//! A pair is predicted "same" when its score is at least the threshold.

mod compare;
mod embeddings;
mod metrics;
mod protocol;

pub use compare::{compare_activations, ActivationComparison};
pub use embeddings::{index_path, read_embeddings, write_embeddings};
pub use metrics::{auc, cosine_similarity, eer, roc_curve, RocPoint};
pub use protocol::{
    accuracy_at, best_threshold, fold_accuracy, fold_accuracy_scores, parse_pairs, read_pairs, score_protocol, verify,
    FoldReport, FoldResult, PairSpec, Protocol, VerificationReport,
};
