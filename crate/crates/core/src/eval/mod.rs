//! Embedding-space alignment measurements: frequent aligned word pairs,
//! cross-lingual retrieval precision, embedding export and 2-D plots.

mod embeddings;
mod lexicon;
mod plot;
mod projection;
mod retrieval;

pub use embeddings::{export_embeddings, read_embedding_tsv, write_embedding_tsv, EmbeddingTable};
pub use lexicon::{default_stopwords, extract_frequent_pairs, LexiconPair};
pub use plot::plot_pairs;
pub use projection::{project_2d, Projection};
pub use retrieval::{retrieval_precision, retrieval_precision_rows, PairRank, RetrievalReport};
