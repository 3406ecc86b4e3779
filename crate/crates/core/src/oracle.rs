//! Brute-force reference results.
//!
//! Straight from the problem definitions, folding ranks in ascending order.
//! Nothing here touches the engine's buffers or step plans.

use crate::engine::{BlockLayout, BlockVector};
use crate::ops::ReductionOp;

/// Every rank's input vector, all sharing one layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalInput<E> {
    pub layout: BlockLayout,
    pub vectors: Vec<BlockVector<E>>,
}

impl<E: Clone> GlobalInput<E> {
    pub fn new(layout: BlockLayout, vectors: Vec<BlockVector<E>>) -> Self {
        assert!(
            vectors.iter().all(|v| v.layout() == &layout),
            "all vectors must share the layout"
        );
        Self { layout, vectors }
    }

    pub fn p(&self) -> usize {
        self.vectors.len()
    }
}

fn fold_slices<E: Clone, O: ReductionOp<E>>(parts: impl Iterator<Item = Vec<E>>, op: &O) -> Vec<E> {
    let mut acc: Option<Vec<E>> = None;
    for part in parts {
        acc = Some(match acc {
            None => part,
            Some(prev) => prev.iter().zip(&part).map(|(a, b)| op.apply(a, b)).collect(),
        });
    }
    acc.unwrap_or_default()
}

/// `result[r] = V_0[r] ⊕ V_1[r] ⊕ … ⊕ V_{p−1}[r]`.
pub fn oracle_reduce_scatter<E: Clone, O: ReductionOp<E>>(g: &GlobalInput<E>, op: &O) -> Vec<Vec<E>> {
    (0..g.layout.p())
        .map(|r| fold_slices(g.vectors.iter().map(|v| v.block(r).to_vec()), op))
        .collect()
}

/// `W = V_0 ⊕ V_1 ⊕ … ⊕ V_{p−1}` element-wise over whole vectors.
pub fn oracle_allreduce<E: Clone, O: ReductionOp<E>>(g: &GlobalInput<E>, op: &O) -> BlockVector<E> {
    let data = fold_slices(g.vectors.iter().map(|v| v.data().to_vec()), op);
    BlockVector::new(g.layout.clone(), data).expect("fold keeps the vector length")
}

/// Concatenation of every rank's block in rank order.
pub fn oracle_allgather<E: Clone>(layout: &BlockLayout, own_blocks: &[Vec<E>]) -> BlockVector<E> {
    BlockVector::new(layout.clone(), own_blocks.concat()).expect("blocks match the layout")
}

/// `output_r[i] = V_i[r]`.
pub fn oracle_alltoall<E: Clone>(g: &GlobalInput<E>) -> Vec<BlockVector<E>> {
    let p = g.p();
    (0..p)
        .map(|r| {
            let data = (0..p).flat_map(|i| g.vectors[i].block(r).iter().cloned()).collect();
            BlockVector::new(g.layout.clone(), data).expect("uniform blocks")
        })
        .collect()
}
