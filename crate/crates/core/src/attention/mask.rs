//! Sparse query→key adjacency for the masked attention patterns.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt::Write as _;

use rand::seq::index;

use super::AttentionSpec;
use crate::error::{bail, Result};
use crate::rng::{self, streams};

/// Per-query sorted key lists in compressed-row form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    offsets: Vec<usize>,
    keys: Vec<u32>,
}

impl AttentionMask {
    pub fn from_rows(rows: Vec<Vec<usize>>) -> Result<Self> {
        let n = rows.len();
        let mut offsets = Vec::with_capacity(n + 1);
        let mut keys = Vec::new();
        offsets.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable();
            row.dedup();
            if row.is_empty() {
                bail!(Contract, "query {i} attends to no keys");
            }
            if let Some(&k) = row.iter().find(|&&k| k >= n) {
                bail!(Parameter, "key {k} out of range for length {n}");
            }
            keys.extend(row.into_iter().map(|k| k as u32));
            offsets.push(keys.len());
        }
        Ok(Self { offsets, keys })
    }

    pub fn full(n: usize) -> Self {
        let keys = (0..n)
            .flat_map(|_| (0..n as u32).into_iter())
            .collect();
        let offsets = (0..=n).map(|i| i * n).collect();
        Self { offsets, keys }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            offsets: (0..=n).collect(),
            keys: (0..n as u32).collect(),
        }
    }

    /// Number of queries (equal to the number of keys).
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.keys[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn row_range(&self, i: usize) -> core::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Total allowed query-key pairs.
    pub fn cardinality(&self) -> usize {
        self.keys.len()
    }

    /// Debug dump: one line per query, space-separated key indices.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for i in 0..self.len() {
            let mut first = true;
            for k in self.row(i) {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{k}");
            }
            out.push('\n');
        }
        out
    }
}

pub fn mask_cardinality(mask: &AttentionMask) -> usize {
    mask.cardinality()
}

pub fn build_mask(spec: &AttentionSpec, n: usize) -> Result<AttentionMask> {
    build_layer_mask(spec, n, 0)
}

/// Builds the mask a given layer uses. Only the block-sparse random draw
/// depends on the layer: its seed is `seed ^ layer`.
pub fn build_layer_mask(spec: &AttentionSpec, n: usize, layer: usize) -> Result<AttentionMask> {
    if n == 0 {
        bail!(Parameter, "sequence length must be at least 1");
    }
    spec.validate_for_len(n)?;
    match spec {
        AttentionSpec::Full => Ok(AttentionMask::full(n)),
        AttentionSpec::SlidingWindow {
            window,
            dilation,
            global,
        } => Ok(sliding_window(n, *window, *dilation, global)),
        AttentionSpec::BlockSparse {
            block,
            random,
            global,
            seed,
        } => Ok(block_sparse(n, *block, *random, *global, *seed ^ layer as u64)),
        AttentionSpec::LocalSparseGlobal {
            local,
            stride,
            global,
        } => Ok(local_sparse_global(n, *local, *stride, *global)),
        AttentionSpec::Nystrom { .. } => {
            bail!(Unsupported, "Nystrom attention is algebraic and has no mask")
        }
    }
}

/// Attended (query, key) pairs a pattern evaluates at length `n`. For the
/// landmark approximation this counts the two `n×m` kernels and the `m×m`
/// landmark kernel.
pub fn attended_pairs(spec: &AttentionSpec, n: usize) -> Result<usize> {
    match spec {
        AttentionSpec::Nystrom { landmarks, .. } => {
            spec.validate_for_len(n)?;
            Ok(2 * n * landmarks + landmarks * landmarks)
        }
        _ => Ok(build_mask(spec, n)?.cardinality()),
    }
}

struct RowBuilder {
    offsets: Vec<usize>,
    keys: Vec<u32>,
    seen: Vec<u32>,
    stamp: u32,
    row: Vec<u32>,
}

impl RowBuilder {
    fn new(n: usize) -> Self {
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        Self {
            offsets,
            keys: Vec::new(),
            seen: vec![0; n],
            stamp: 0,
            row: Vec::new(),
        }
    }

    fn begin(&mut self) {
        self.stamp += 1;
        self.row.clear();
    }

    fn allow(&mut self, k: usize) {
        if self.seen[k] != self.stamp {
            self.seen[k] = self.stamp;
            self.row.push(k as u32);
        }
    }

    fn allow_range(&mut self, lo: usize, hi: usize) {
        for k in lo..hi {
            self.allow(k);
        }
    }

    fn end(&mut self) {
        self.row.sort_unstable();
        self.keys.extend_from_slice(&self.row);
        self.offsets.push(self.keys.len());
    }

    fn finish(self) -> AttentionMask {
        AttentionMask {
            offsets: self.offsets,
            keys: self.keys,
        }
    }
}

fn sliding_window(n: usize, window: usize, dilation: usize, global: &[usize]) -> AttentionMask {
    let mut is_global = vec![false; n];
    for &g in global {
        is_global[g] = true;
    }
    let reach = window.saturating_mul(dilation);
    let mut b = RowBuilder::new(n);
    for i in 0..n {
        b.begin();
        if is_global[i] {
            b.allow_range(0, n);
        } else {
            let mut j = i % dilation;
            // first j >= i - reach with j ≡ i (mod dilation)
            if i > reach {
                j = i - reach;
            }
            while j <= i.saturating_add(reach).min(n - 1) {
                b.allow(j);
                j += dilation;
            }
            for &g in global {
                b.allow(g);
            }
        }
        b.end();
    }
    b.finish()
}

fn block_sparse(n: usize, block: usize, random: usize, global: usize, seed: u64) -> AttentionMask {
    let blocks = n.div_ceil(block);
    let global = global.min(blocks);
    let mut rng = rng::stream(seed, streams::BLOCK_SPARSE);
    let mut allowed_blocks: Vec<Vec<usize>> = Vec::with_capacity(blocks);
    for qb in 0..blocks {
        if qb < global {
            allowed_blocks.push((0..blocks).collect());
            continue;
        }
        let mut set: Vec<usize> = (0..global).collect();
        for kb in qb.saturating_sub(1)..=(qb + 1).min(blocks - 1) {
            set.push(kb);
        }
        set.sort_unstable();
        set.dedup();
        let rest: Vec<usize> = (0..blocks).filter(|kb| !set.contains(kb)).collect();
        let draw = random.min(rest.len());
        if draw > 0 {
            for idx in index::sample(&mut rng, rest.len(), draw).into_iter() {
                set.push(rest[idx]);
            }
        }
        allowed_blocks.push(set);
    }
    let mut b = RowBuilder::new(n);
    for i in 0..n {
        b.begin();
        for &kb in &allowed_blocks[i / block] {
            b.allow_range(kb * block, ((kb + 1) * block).min(n));
        }
        b.end();
    }
    b.finish()
}

fn local_sparse_global(n: usize, local: usize, stride: usize, global: usize) -> AttentionMask {
    let block = local.max(1);
    let global_end = (global * block).min(n);
    let mut b = RowBuilder::new(n);
    for i in 0..n {
        b.begin();
        if i < global_end {
            b.allow_range(0, n);
        } else {
            b.allow_range(i.saturating_sub(local), (i + local + 1).min(n));
            let mut start = 0;
            while start < n {
                b.allow_range(start, (start + block).min(n));
                start += stride * block;
            }
            b.allow_range(0, global_end);
        }
        b.end();
    }
    b.finish()
}
