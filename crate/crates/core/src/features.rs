//! Block DCT descriptors for the regions of an aligned face.
//!
//! A 64x64 face is split into a 3x3 grid of regions. Each region is covered by
//! overlapping 8x8 blocks; every block is normalised to zero mean and unit
//! variance, transformed with an orthonormal 2D DCT-II, and reduced to the
//! first 15 AC coefficients in JPEG zig-zag order.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::ingest::{FaceCrop, FACE_SIZE};
use crate::{Error, Result};

pub const BLOCK: usize = 8;

/// Descriptor length: zig-zag coefficients 1..=15 (DC dropped).
pub const FEATURE_DIM: usize = 15;

pub type Block = [[f64; BLOCK]; BLOCK];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionFeatures {
    pub region_index: usize,
    pub vectors: Vec<FeatureVector>,
}

/// Grid of regions over the face and the block tiling inside each region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionLayout {
    rows: usize,
    cols: usize,
    block_step: usize,
}

impl Default for RegionLayout {
    fn default() -> Self {
        Self {
            rows: 3,
            cols: 3,
            block_step: 4,
        }
    }
}

impl RegionLayout {
    pub fn new(rows: usize, cols: usize, block_step: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || block_step == 0 {
            return Err(Error::Layout("grid and step must be positive".into()));
        }
        if FACE_SIZE / rows < BLOCK || FACE_SIZE / cols < BLOCK {
            return Err(Error::Layout(format!(
                "{rows}x{cols} regions are smaller than an {BLOCK}px block"
            )));
        }
        Ok(Self {
            rows,
            cols,
            block_step,
        })
    }

    pub fn region_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn block_step(&self) -> usize {
        self.block_step
    }

    /// Pixel span `[start, end)` of region `index` along an axis split `parts` ways.
    /// The last region absorbs the remainder.
    fn span(index: usize, parts: usize) -> (usize, usize) {
        let side = FACE_SIZE / parts;
        let start = index * side;
        let end = if index + 1 == parts { FACE_SIZE } else { start + side };
        (start, end)
    }

    fn offsets(&self, index: usize, parts: usize) -> Vec<usize> {
        let (start, end) = Self::span(index, parts);
        (start..)
            .step_by(self.block_step)
            .take_while(|o| o + BLOCK <= end)
            .collect()
    }

    /// Top-left corners `(x, y)` of the blocks of region `r` (row-major).
    pub fn block_origins(&self, r: usize) -> Vec<(usize, usize)> {
        let (row, col) = (r / self.cols, r % self.cols);
        let ys = self.offsets(row, self.rows);
        let xs = self.offsets(col, self.cols);
        ys.iter()
            .flat_map(|&y| xs.iter().map(move |&x| (x, y)))
            .collect()
    }
}

/// Cuts a face into per-region lists of 8x8 blocks.
pub fn extract_blocks(face: &FaceCrop, layout: &RegionLayout) -> Vec<Vec<Block>> {
    (0..layout.region_count())
        .map(|r| {
            layout
                .block_origins(r)
                .into_iter()
                .map(|(x0, y0)| {
                    let mut block = [[0.0; BLOCK]; BLOCK];
                    for (dy, row) in block.iter_mut().enumerate() {
                        for (dx, v) in row.iter_mut().enumerate() {
                            *v = face.get(x0 + dx, y0 + dy);
                        }
                    }
                    block
                })
                .collect()
        })
        .collect()
}

/// Zero mean, unit population variance; near-flat blocks become all zeros.
pub fn normalize_block(block: &Block) -> Block {
    let n = (BLOCK * BLOCK) as f64;
    let mean = block.iter().flatten().sum::<f64>() / n;
    let var = block.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let mut out = [[0.0; BLOCK]; BLOCK];
    if std < 1e-8 {
        return out;
    }
    for (o, b) in out.iter_mut().zip(block) {
        for (ov, bv) in o.iter_mut().zip(b) {
            *ov = (bv - mean) / std;
        }
    }
    out
}

/// Orthonormal DCT-II basis: `basis[k][n] = c_k cos(pi (2n + 1) k / 16)`.
fn dct_basis() -> &'static [[f64; BLOCK]; BLOCK] {
    static BASIS: OnceLock<[[f64; BLOCK]; BLOCK]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut m = [[0.0; BLOCK]; BLOCK];
        for (k, row) in m.iter_mut().enumerate() {
            let scale = if k == 0 {
                (1.0 / BLOCK as f64).sqrt()
            } else {
                (2.0 / BLOCK as f64).sqrt()
            };
            for (n, v) in row.iter_mut().enumerate() {
                *v = scale * (PI * (2 * n + 1) as f64 * k as f64 / (2 * BLOCK) as f64).cos();
            }
        }
        m
    })
}

/// Separable orthonormal 2D DCT-II. Output is indexed `[vertical][horizontal]` frequency.
pub fn dct2(block: &Block) -> Block {
    let c = dct_basis();
    // rows first, then columns: out = C * B * C^T
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for y in 0..BLOCK {
        for k in 0..BLOCK {
            tmp[y][k] = (0..BLOCK).map(|x| c[k][x] * block[y][x]).sum();
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for k in 0..BLOCK {
        for u in 0..BLOCK {
            out[u][k] = (0..BLOCK).map(|y| c[u][y] * tmp[y][k]).sum();
        }
    }
    out
}

/// Inverse of [`dct2`] (DCT-III with the same scaling).
pub fn idct2(coeffs: &Block) -> Block {
    let c = dct_basis();
    let mut tmp = [[0.0; BLOCK]; BLOCK];
    for u in 0..BLOCK {
        for x in 0..BLOCK {
            tmp[u][x] = (0..BLOCK).map(|k| c[k][x] * coeffs[u][k]).sum();
        }
    }
    let mut out = [[0.0; BLOCK]; BLOCK];
    for y in 0..BLOCK {
        for x in 0..BLOCK {
            out[y][x] = (0..BLOCK).map(|u| c[u][y] * tmp[u][x]).sum();
        }
    }
    out
}

/// JPEG zig-zag scan: `(row, col)` of the first 16 coefficients.
const ZIGZAG: [(usize, usize); FEATURE_DIM + 1] = [
    (0, 0),
    (0, 1),
    (1, 0),
    (2, 0),
    (1, 1),
    (0, 2),
    (0, 3),
    (1, 2),
    (2, 1),
    (3, 0),
    (4, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 4),
    (0, 5),
];

pub fn zigzag_features(coeffs: &Block) -> FeatureVector {
    let mut values = [0.0; FEATURE_DIM];
    for (v, &(r, c)) in values.iter_mut().zip(&ZIGZAG[1..]) {
        *v = coeffs[r][c];
    }
    FeatureVector(values)
}

pub fn block_feature(block: &Block) -> FeatureVector {
    zigzag_features(&dct2(&normalize_block(block)))
}

/// All block descriptors of a face, grouped by region in row-major order.
pub fn extract_features(face: &FaceCrop, layout: &RegionLayout) -> Vec<RegionFeatures> {
    extract_blocks(face, layout)
        .into_iter()
        .enumerate()
        .map(|(region_index, blocks)| RegionFeatures {
            region_index,
            vectors: blocks.iter().map(block_feature).collect(),
        })
        .collect()
}
