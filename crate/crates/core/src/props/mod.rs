//! Benchmark properties from raw artifacts: corpus manifests, `objdump`
//! output, and corpus subsampling.

pub mod corpus;
pub mod objdump;
pub mod sampler;

pub use corpus::{corpus_properties, parse_manifest, CorpusManifest, SeedEntry};
pub use objdump::{parse_disassembly, parse_section_headers, program_properties, DisasmSummary};
pub use sampler::{draw_sample_size, sample_corpus, DEFAULT_MEAN_FRACTION};
