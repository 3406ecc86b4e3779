#![allow(dead_code)]

use circulant::oracle::GlobalInput;
use circulant::{BlockLayout, BlockVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Block sizes in `0..=max_block`, zeros included.
pub fn irregular_layout(rng: &mut ChaCha8Rng, p: usize, max_block: usize) -> BlockLayout {
    BlockLayout::from_sizes((0..p).map(|_| rng.random_range(0..=max_block)).collect()).unwrap()
}

pub fn random_input(rng: &mut ChaCha8Rng, layout: &BlockLayout) -> GlobalInput<i64> {
    let vectors = (0..layout.p())
        .map(|_| BlockVector::new(layout.clone(), (0..layout.total()).map(|_| rng.random::<i64>()).collect()).unwrap())
        .collect();
    GlobalInput::new(layout.clone(), vectors)
}

/// Parses the `child parent skip` golden edge list.
pub fn read_edges(text: &str) -> Vec<(usize, usize, usize)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let v: Vec<usize> = l.split_whitespace().map(|x| x.parse().unwrap()).collect();
            (v[0], v[1], v[2])
        })
        .collect()
}

pub const P22_TREE_EDGES: &str = include_str!("../golden/tree_p22_edges.txt");

/// Rank 21's result for p = 22, one line per round of received partial sums.
pub const P22_RANK21_TERM: &str = "x21+x10
    + (x15+x4)
    + (x18+x7+(x12+x1))
    + (x19+x8+(x13+x2)+(x16+x5))
    + (x20+x9+(x14+x3)+(x17+x6+(x11+x0)))";

pub fn strip_ws(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}
