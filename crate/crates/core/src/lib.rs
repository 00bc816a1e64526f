//! Deterministic simulator for exchanging machine-learning assets between
//! smart-environment nodes over a shared ledger.
//!
//! Each node keeps a knowledge graph describing its spaces, datasets and
//! models. Shared assets are published through two contracts running on a
//! simulated ledger: an oracle that governs trusted nodes and keeps the
//! registries of shared datasets, shared models and a task index, and an
//! exchange contract that handles prices, payments and access tokens. Asset
//! bytes live in a content-addressed blob store, and every shared model must
//! have its whole dependency chain shared as well.

pub mod cas;
pub mod cli;
pub mod contracts;
pub mod depgraph;
pub mod kgstore;
pub mod ledger;
pub mod mlsim;
pub mod node;

pub use cas::{BlobStore, ContentAddress, DirStore, MemStore};
pub use contracts::{ContractError, WorldState};
pub use depgraph::{DependencyGraph, ProvenanceChain};
pub use kgstore::{Iri, KnowledgeGraph};
pub use ledger::{Address, Ledger, Receipt, Transaction};
pub use node::{IslNode, Network, NodeError};
