//! Caption parsing: tokenization, lexicon tagging, adjective-noun chunking
//! and the TF/IDF attribute prior.

mod chunk;
mod tagger;
mod tokenize;
mod vocabulary;

pub use chunk::{chunk_attributes, Attribute};
pub use tagger::{pos_tag, Lexicon, Tag, Token};
pub use tokenize::tokenize;
pub use vocabulary::{
    build_vocabulary, idf, load_caption_dir, AttributeExtractor, CaptionDoc, Vocabulary,
    VocabularyParseError, VOCABULARY_FORMAT_VERSION,
};
