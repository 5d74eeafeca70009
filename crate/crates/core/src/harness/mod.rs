//! Datasets, spike encoding and the two experiments run on the core:
//! handwritten-digit classification and citation-graph node classification.

pub mod digits;
pub mod graph;

use std::io;
use std::path::PathBuf;
use thiserror::Error;

pub use digits::{
    eval_digits, eval_digits_float, load_digits, parse_digits, predict, rate_encode, split_indices,
    train_digits_one_shot, DigitsEval, DigitsParams, DigitsSample, TeacherMode, TrainedDigits,
};
pub use graph::{
    build_graph_network, classify_node, divergence_report, load_citation, microseer_reduce, parse_citation,
    CitationGraph, DivergenceReport, GraphParams, GraphSplit, NodePrediction,
};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("dataset is empty")]
    Empty,
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("unknown node {0:?}")]
    UnknownNode(String),
    #[error("{0} topics found, at most 6 are supported")]
    TooManyTopics(usize),
    #[error("graph has {papers} papers plus {topics} topics, more than the core's {n_max} neurons")]
    Capacity { papers: usize, topics: usize, n_max: usize },
    #[error("cannot reduce to {target} papers: {reason}")]
    Infeasible { target: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn read_file(path: &std::path::Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}
