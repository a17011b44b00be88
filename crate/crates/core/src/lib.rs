//! Attribute-level explanations for CNN classifiers.
//!
//! Captions are mined into an adjective–noun vocabulary with a TF/IDF prior,
//! filter activations are turned into a filter→attribute distribution, and
//! that distribution drives sentence explanations, heatmap grounding,
//! attribute retrieval and BLEU/PCK evaluation.
//!
//! Work over filters, images and attributes is spread with rayon when the
//! `parallel` feature is on; [`exec::sequential`] forces the serial path.
//! Results are identical either way.

pub mod bleu;
pub mod corpus;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod explanation;
pub mod grounding;
pub mod inference;
pub mod retrieval;
pub mod synth;
pub mod tensor;

pub use corpus::{
    build_vocabulary, Attribute, AttributeExtractor, CaptionDoc, Lexicon, Vocabulary,
};
pub use dataset::{load_dataset, write_dataset, Dataset, ImageRecord, Keypoint, KeypointMapping};
pub use error::{Error, Result};
pub use explanation::{explain, Explanation};
pub use inference::{compute_filter_attribute_pdf, AttributePdf, FilterAttributePdf};
pub use tensor::Tensor;
