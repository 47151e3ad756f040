//! Self-supervised branches that turn unlabeled flows into pseudo-labels.

pub mod ae;
pub mod head;
pub mod tabcl;

pub use ae::{AeConfig, AeModel};
pub use head::{pseudo_label, EncoderClassifier, FinetuneConfig, FinetuneEpoch};
pub use tabcl::{PseudoLabelState, TabclConfig, TabclModel};
