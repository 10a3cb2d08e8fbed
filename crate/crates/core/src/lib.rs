//! Graph-grounded chain-of-thought question answering over scholarly networks.
//!
//! The pipeline encodes a paper/author/venue graph with a heterogeneous graph
//! transformer, learns relation importance with a FastGTN autoencoder, mines
//! and scores metapath instances, renders them as confidence-prefixed
//! evidence, and assembles multi-step prompts whose ranked answers are scored
//! with Hit, H@1, F1 and NDCG.
//!
//! The crate is `no_std` (with `alloc`); file formats, HTTP and the CLI live
//! in the companion `hetgcot` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod adam;
pub mod eval;
pub mod fastgtn;
pub mod features;
pub mod fixtures;
pub mod graph;
pub mod hgt;
pub mod llm;
pub mod math;
pub mod metapath;
pub mod naturalize;
pub mod pipeline;
pub mod prompt;
pub mod table;
pub mod text;

pub use graph::{Direction, EdgeKind, EdgeRecord, HetGraph, MaskedView, NodeId, NodeKind, NodeRecord};
pub use table::{EmbeddingTable, NodeFeatureTable, NodeTable};
