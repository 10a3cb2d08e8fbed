//! Per-node vector tables (input features and learned embeddings).

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::graph::{HetGraph, NodeId};
use crate::math::Matrix;

/// Fixed-width vectors keyed by node id. Rows follow the order of `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeTable {
    ids: Vec<NodeId>,
    data: Matrix,
    lookup: BTreeMap<NodeId, usize>,
}

/// Layer-normalized input features.
pub type NodeFeatureTable = NodeTable;
/// Encoder output embeddings.
pub type EmbeddingTable = NodeTable;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TableError {
    #[error("table has {rows} rows but {ids} ids")]
    RowMismatch { rows: usize, ids: usize },
    #[error("duplicate id {0} in table")]
    DuplicateId(NodeId),
    #[error("table does not cover node {0}")]
    Missing(NodeId),
}

impl NodeTable {
    pub fn new(ids: Vec<NodeId>, data: Matrix) -> Result<Self, TableError> {
        if ids.len() != data.rows() {
            return Err(TableError::RowMismatch {
                rows: data.rows(),
                ids: ids.len(),
            });
        }
        let mut lookup = BTreeMap::new();
        for (i, id) in ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(TableError::DuplicateId(id.clone()));
            }
        }
        Ok(Self { ids, data, lookup })
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[NodeId] {
        &self.ids
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }

    pub fn get(&self, id: &NodeId) -> Option<&[f64]> {
        self.lookup.get(id).map(|&i| self.data.row(i))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &[f64])> {
        self.ids
            .iter()
            .enumerate()
            .map(move |(i, id)| (id, self.data.row(i)))
    }

    /// Rows permuted into the graph's dense node order.
    pub fn aligned_to(&self, g: &HetGraph) -> Result<Matrix, TableError> {
        let mut out = Matrix::zeros(g.node_count(), self.dim());
        for (i, node) in g.nodes().iter().enumerate() {
            let row = self
                .get(&node.id)
                .ok_or_else(|| TableError::Missing(node.id.clone()))?;
            out.row_mut(i).copy_from_slice(row);
        }
        Ok(out)
    }

    /// Wraps a matrix whose rows are in graph order.
    pub fn from_graph_rows(g: &HetGraph, data: Matrix) -> Self {
        let ids = g.nodes().iter().map(|n| n.id.clone()).collect();
        Self::new(ids, data).expect("graph ids are unique and row count matches")
    }
}
