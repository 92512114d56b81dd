//! Multilevel adaptive Haar analysis on tetromino supports.
//!
//! Each level splits the current low-pass plane into 4×4 blocks, picks one
//! covering per block and applies the Haar matrix along every tetromino. A
//! block's four low-pass values become a 2×2 block of the next (half-size)
//! low-pass plane; its twelve high-pass values land at the same 2×2 position
//! of the three detail planes. Coefficient `α` of a block sits at
//! `(α mod 2, α div 2)` inside its 2×2 cell.

use std::collections::BTreeMap;
use std::io::{Cursor, Read};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{invalid, Error, Result};
use crate::tetromino::{
    catalog, CoveringCatalog, CoveringIndex, BLOCK, BLOCK_CELLS, COVERING_COUNT, HAAR,
};

/// Square image with a power-of-two side of at least 4, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    size: usize,
    pixels: Vec<f64>,
}

impl ImageGrid {
    pub fn new(size: usize, pixels: Vec<f64>) -> Result<Self> {
        if size < BLOCK || !size.is_power_of_two() {
            return invalid(format!("image side {size} is not a power of two ≥ 4"));
        }
        if pixels.len() != size * size {
            return invalid(format!(
                "expected {} pixels for a {size}×{size} image, got {}",
                size * size,
                pixels.len()
            ));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return invalid("image contains non-finite pixels");
        }
        Ok(Self { size, pixels })
    }

    pub fn zeros(size: usize) -> Result<Self> {
        Self::new(size, vec![0.0; size * size])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.size + j]
    }

    pub fn energy(&self) -> f64 {
        self.pixels.iter().map(|p| p * p).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoveringMode {
    /// Minimal high-pass l1 cost per block.
    Strict,
    /// Any covering within `lambda` of the minimal cost, preferring the one
    /// chosen most often so far in the current image.
    Relaxed { lambda: f64 },
}

impl CoveringMode {
    pub const DEFAULT_LAMBDA: f64 = 25.0;

    pub fn relaxed(lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return invalid(format!(
                "relaxation tolerance {lambda} must be finite and ≥ 0"
            ));
        }
        Ok(CoveringMode::Relaxed { lambda })
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            CoveringMode::Strict => 0.0,
            CoveringMode::Relaxed { lambda } => lambda,
        }
    }

    fn code(&self) -> u8 {
        match self {
            CoveringMode::Strict => 0,
            CoveringMode::Relaxed { .. } => 1,
        }
    }
}

impl Default for CoveringMode {
    fn default() -> Self {
        CoveringMode::Relaxed {
            lambda: Self::DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShrinkageMode {
    #[default]
    None,
    /// `sign(w)·(|w| − t)₊` on every high-pass coefficient.
    PositivePart,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ShrinkageConfig {
    pub mode: ShrinkageMode,
    pub threshold: f64,
}

impl ShrinkageConfig {
    pub fn positive_part(threshold: f64) -> Self {
        Self {
            mode: ShrinkageMode::PositivePart,
            threshold,
        }
    }
}

/// How often each covering has been picked so far within one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveringFrequency([u32; COVERING_COUNT]);

impl Default for CoveringFrequency {
    fn default() -> Self {
        Self([0; COVERING_COUNT])
    }
}

impl CoveringFrequency {
    pub fn record(&mut self, c: CoveringIndex) {
        self.0[c.get() - 1] += 1;
    }

    pub fn count(&self, c: CoveringIndex) -> u32 {
        self.0[c.get() - 1]
    }
}

/// Coefficients of one 4×4 block under its chosen covering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockAnalysis {
    pub lowpass: [f64; 4],
    pub highpass: [[f64; 4]; 3],
    pub covering: CoveringIndex,
    /// Σ_l Σ_α |w_l[α]| of the chosen covering.
    pub cost: f64,
}

/// Haar coefficients of `block` (indexed by block-local linear index) under
/// one covering: row 0 is low-pass, rows 1..=3 are high-pass.
fn coefficients(block: &[f64; BLOCK_CELLS], cov: &crate::tetromino::Covering) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for (cell, &v) in block.iter().enumerate() {
        let (alpha, gamma) = cov.locate(cell);
        for (l, row) in out.iter_mut().enumerate() {
            row[alpha] += HAAR[l][gamma] * v;
        }
    }
    out
}

fn highpass_cost(coefs: &[[f64; 4]; 4]) -> f64 {
    coefs[1..]
        .iter()
        .flat_map(|row| row.iter())
        .map(|w| w.abs())
        .sum()
}

/// High-pass l1 cost of `block` under every covering, in catalog order.
pub fn block_costs(block: &[f64; BLOCK_CELLS], catalog: &CoveringCatalog) -> Vec<f64> {
    catalog
        .iter()
        .map(|(_, cov)| highpass_cost(&coefficients(block, cov)))
        .collect()
}

/// Analyses one block and picks its covering. `freq` is only consulted in
/// relaxed mode.
pub fn analyze_block(
    block: &[f64; BLOCK_CELLS],
    catalog: &CoveringCatalog,
    mode: CoveringMode,
    freq: &CoveringFrequency,
) -> Result<BlockAnalysis> {
    if block.iter().any(|v| !v.is_finite()) {
        return invalid("block contains non-finite values");
    }
    let all: Vec<(CoveringIndex, [[f64; 4]; 4], f64)> = catalog
        .iter()
        .map(|(c, cov)| {
            let coefs = coefficients(block, cov);
            let cost = highpass_cost(&coefs);
            (c, coefs, cost)
        })
        .collect();
    let min_cost = all.iter().map(|e| e.2).fold(f64::INFINITY, f64::min);

    // `all` is in ascending index order and strict `>` keeps the earliest on ties.
    let chosen = match mode {
        CoveringMode::Strict => all.iter().find(|e| e.2 == min_cost),
        CoveringMode::Relaxed { lambda } => {
            let bound = min_cost + lambda;
            let mut best: Option<&(CoveringIndex, [[f64; 4]; 4], f64)> = None;
            for e in all.iter().filter(|e| e.2 <= bound) {
                if best.is_none_or(|b| freq.count(e.0) > freq.count(b.0)) {
                    best = Some(e);
                }
            }
            best
        }
    }
    .expect("catalog is non-empty");

    let (covering, coefs, cost) = *chosen;
    Ok(BlockAnalysis {
        lowpass: coefs[0],
        highpass: [coefs[1], coefs[2], coefs[3]],
        covering,
        cost,
    })
}

/// Detail planes and covering map produced by one decomposition level.
#[derive(Debug, Clone, PartialEq)]
pub struct PyramidLevel {
    side: usize,
    highpass: [Vec<f64>; 3],
    coverings: Vec<CoveringIndex>,
}

impl PyramidLevel {
    /// Side of the detail planes (half the side of this level's input).
    pub fn side(&self) -> usize {
        self.side
    }

    /// Detail plane `w_{l+1}`, row-major.
    pub fn highpass(&self, l: usize) -> &[f64] {
        &self.highpass[l]
    }

    /// One covering per 4×4 input block, raster order.
    pub fn coverings(&self) -> &[CoveringIndex] {
        &self.coverings
    }
}

/// Output of [`forward`]. `levels[0]` is the finest level.
#[derive(Debug, Clone, PartialEq)]
pub struct TetroletPyramid {
    size: usize,
    mode: CoveringMode,
    levels: Vec<PyramidLevel>,
    lowpass: Vec<f64>,
}

fn block_at(plane: &[f64], side: usize, bi: usize, bj: usize) -> [f64; BLOCK_CELLS] {
    let mut block = [0.0; BLOCK_CELLS];
    for (cell, v) in block.iter_mut().enumerate() {
        let (x, y) = (cell % BLOCK, cell / BLOCK);
        *v = plane[(BLOCK * bi + x) * side + BLOCK * bj + y];
    }
    block
}

/// Position of coefficient `alpha` of block `(bi, bj)` in a half-size plane.
#[inline]
fn packed_position(out_side: usize, bi: usize, bj: usize, alpha: usize) -> usize {
    (2 * bi + alpha % 2) * out_side + 2 * bj + alpha / 2
}

fn check_levels(size: usize, levels: usize) -> Result<()> {
    if size < BLOCK || !size.is_power_of_two() {
        return invalid(format!("image side {size} is not a power of two ≥ 4"));
    }
    let max = size.trailing_zeros() as usize - 1;
    if levels < 1 || levels > max {
        return invalid(format!("levels {levels} outside 1..={max} for side {size}"));
    }
    Ok(())
}

/// Full decomposition over `levels` levels using the shared catalog.
pub fn forward(image: &ImageGrid, levels: usize, mode: CoveringMode) -> Result<TetroletPyramid> {
    check_levels(image.size, levels)?;
    if let CoveringMode::Relaxed { lambda } = mode {
        CoveringMode::relaxed(lambda)?;
    }
    let catalog = catalog();
    let mut freq = CoveringFrequency::default();
    let mut plane = image.pixels.clone();
    let mut side = image.size;
    let mut out_levels = Vec::with_capacity(levels);

    for _ in 0..levels {
        let half = side / 2;
        let blocks = side / BLOCK;
        let mut low = vec![0.0; half * half];
        let mut high = [
            vec![0.0; half * half],
            vec![0.0; half * half],
            vec![0.0; half * half],
        ];
        let mut coverings = Vec::with_capacity(blocks * blocks);
        for bi in 0..blocks {
            for bj in 0..blocks {
                let block = block_at(&plane, side, bi, bj);
                let res = analyze_block(&block, catalog, mode, &freq)?;
                freq.record(res.covering);
                coverings.push(res.covering);
                for alpha in 0..4 {
                    let pos = packed_position(half, bi, bj, alpha);
                    low[pos] = res.lowpass[alpha];
                    for (plane, w) in high.iter_mut().zip(&res.highpass) {
                        plane[pos] = w[alpha];
                    }
                }
            }
        }
        out_levels.push(PyramidLevel {
            side: half,
            highpass: high,
            coverings,
        });
        plane = low;
        side = half;
    }

    Ok(TetroletPyramid {
        size: image.size,
        mode,
        levels: out_levels,
        lowpass: plane,
    })
}

/// Exact synthesis; inverts [`forward`].
pub fn inverse(pyramid: &TetroletPyramid, catalog: &CoveringCatalog) -> Result<ImageGrid> {
    let mut low = pyramid.lowpass.clone();
    for level in pyramid.levels.iter().rev() {
        let half = level.side;
        let side = half * 2;
        let blocks = side / BLOCK;
        let mut plane = vec![0.0; side * side];
        for bi in 0..blocks {
            for bj in 0..blocks {
                let c = level.coverings[bi * blocks + bj];
                let cov = catalog.get(c);
                let mut coefs = [[0.0; 4]; 4];
                for alpha in 0..4 {
                    let pos = packed_position(half, bi, bj, alpha);
                    coefs[0][alpha] = low[pos];
                    for (row, plane) in coefs[1..].iter_mut().zip(&level.highpass) {
                        row[alpha] = plane[pos];
                    }
                }
                for cell in 0..BLOCK_CELLS {
                    let (alpha, gamma) = cov.locate(cell);
                    let v: f64 = (0..4).map(|l| HAAR[l][gamma] * coefs[l][alpha]).sum();
                    let (x, y) = (cell % BLOCK, cell / BLOCK);
                    plane[(BLOCK * bi + x) * side + BLOCK * bj + y] = v;
                }
            }
        }
        low = plane;
    }
    ImageGrid::new(pyramid.size, low)
}

impl TetroletPyramid {
    /// Assembles a pyramid from raw parts, validating every shape and
    /// covering index. Levels are finest first; `coverings[m]` holds raw
    /// one-based indices.
    pub fn from_parts(
        size: usize,
        mode: CoveringMode,
        highpass: Vec<[Vec<f64>; 3]>,
        coverings: Vec<Vec<u8>>,
        lowpass: Vec<f64>,
    ) -> Result<Self> {
        let levels_count = highpass.len();
        check_levels(size, levels_count).map_err(|e| Error::CorruptPyramid(e.to_string()))?;
        if coverings.len() != levels_count {
            return Err(Error::CorruptPyramid(format!(
                "{} covering maps for {levels_count} levels",
                coverings.len()
            )));
        }
        let mut levels = Vec::with_capacity(levels_count);
        let mut side = size;
        for (m, (high, cmap)) in highpass.into_iter().zip(coverings).enumerate() {
            let half = side / 2;
            let blocks = side / BLOCK;
            if high.iter().any(|p| p.len() != half * half) {
                return Err(Error::CorruptPyramid(format!(
                    "level {} detail plane is not {half}×{half}",
                    m + 1
                )));
            }
            if cmap.len() != blocks * blocks {
                return Err(Error::CorruptPyramid(format!(
                    "level {} covering map has {} entries, expected {}",
                    m + 1,
                    cmap.len(),
                    blocks * blocks
                )));
            }
            let cmap = cmap
                .into_iter()
                .map(|c| {
                    CoveringIndex::new(usize::from(c)).ok_or_else(|| {
                        Error::CorruptPyramid(format!("covering index {c} outside 1..=117"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            levels.push(PyramidLevel {
                side: half,
                highpass: high,
                coverings: cmap,
            });
            side = half;
        }
        if lowpass.len() != side * side {
            return Err(Error::CorruptPyramid(format!(
                "final low-pass has {} values, expected {}",
                lowpass.len(),
                side * side
            )));
        }
        Ok(Self {
            size,
            mode,
            levels,
            lowpass,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn mode(&self) -> CoveringMode {
        self.mode
    }

    pub fn levels_count(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[PyramidLevel] {
        &self.levels
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.lowpass
    }

    pub fn lowpass_side(&self) -> usize {
        self.size >> self.levels.len()
    }

    pub fn coefficient_count(&self) -> usize {
        self.lowpass.len()
            + self
                .levels
                .iter()
                .map(|l| l.highpass.iter().map(Vec::len).sum::<usize>())
                .sum::<usize>()
    }

    pub fn energy(&self) -> f64 {
        self.flatten().iter().map(|c| c * c).sum()
    }

    /// Every stored covering index, finest level first, raster order.
    pub fn covering_stream(&self) -> Vec<u8> {
        self.levels
            .iter()
            .flat_map(|l| l.coverings.iter().map(|c| c.as_u8()))
            .collect()
    }

    /// Fraction of high-pass coefficients with magnitude ≤ `eps`.
    pub fn highpass_sparsity(&self, eps: f64) -> f64 {
        let (mut zero, mut total) = (0usize, 0usize);
        for level in &self.levels {
            for plane in &level.highpass {
                total += plane.len();
                zero += plane.iter().filter(|w| w.abs() <= eps).count();
            }
        }
        zero as f64 / total as f64
    }

    /// Final low-pass in raster order, then `w1, w2, w3` of each level from
    /// coarsest to finest.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.size * self.size);
        out.extend_from_slice(&self.lowpass);
        for level in self.levels.iter().rev() {
            for plane in &level.highpass {
                out.extend_from_slice(plane);
            }
        }
        out
    }

    fn map_highpass(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for level in &mut out.levels {
            for plane in &mut level.highpass {
                plane.iter_mut().for_each(|w| *w = f(*w));
            }
        }
        out
    }

    /// Little-endian layout: `N: u32, J: u32, mode: u8, λ: f64`, then the
    /// covering maps of levels 1..=J as `u8`, then the coefficients as `f64`
    /// in [`flatten`](Self::flatten) order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.write_u32::<LittleEndian>(self.size as u32).unwrap();
        buf.write_u32::<LittleEndian>(self.levels.len() as u32)
            .unwrap();
        buf.write_u8(self.mode.code()).unwrap();
        buf.write_f64::<LittleEndian>(self.mode.lambda()).unwrap();
        buf.extend(self.covering_stream());
        for c in self.flatten() {
            buf.write_f64::<LittleEndian>(c).unwrap();
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes);
        let corrupt = |cur: &Cursor<&[u8]>, what: &str| Error::Format {
            offset: cur.position() as usize,
            message: format!("truncated pyramid while reading {what}"),
        };
        let size = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt(&cur, "side"))? as usize;
        let levels = cur
            .read_u32::<LittleEndian>()
            .map_err(|_| corrupt(&cur, "levels"))? as usize;
        let mode_code = cur.read_u8().map_err(|_| corrupt(&cur, "mode"))?;
        let lambda = cur
            .read_f64::<LittleEndian>()
            .map_err(|_| corrupt(&cur, "lambda"))?;
        let mode = match mode_code {
            0 => CoveringMode::Strict,
            1 => CoveringMode::relaxed(lambda).map_err(|e| Error::CorruptPyramid(e.to_string()))?,
            other => {
                return Err(Error::Format {
                    offset: 8,
                    message: format!("unknown covering mode {other}"),
                })
            }
        };
        check_levels(size, levels).map_err(|e| Error::CorruptPyramid(e.to_string()))?;

        let mut coverings = Vec::with_capacity(levels);
        let mut side = size;
        for _ in 0..levels {
            let blocks = side / BLOCK;
            let mut cmap = vec![0u8; blocks * blocks];
            cur.read_exact(&mut cmap)
                .map_err(|_| corrupt(&cur, "covering map"))?;
            coverings.push(cmap);
            side /= 2;
        }

        let read_plane = |cur: &mut Cursor<&[u8]>, len: usize| -> Result<Vec<f64>> {
            let mut plane = vec![0.0; len];
            cur.read_f64_into::<LittleEndian>(&mut plane)
                .map_err(|_| corrupt(cur, "coefficients"))?;
            Ok(plane)
        };
        let lowpass = read_plane(&mut cur, side * side)?;
        let mut highpass: Vec<[Vec<f64>; 3]> = Vec::with_capacity(levels);
        for m in (1..=levels).rev() {
            let half = size >> m;
            let w1 = read_plane(&mut cur, half * half)?;
            let w2 = read_plane(&mut cur, half * half)?;
            let w3 = read_plane(&mut cur, half * half)?;
            highpass.push([w1, w2, w3]);
        }
        highpass.reverse();
        if (cur.position() as usize) != bytes.len() {
            return Err(Error::Format {
                offset: cur.position() as usize,
                message: "trailing bytes after pyramid".into(),
            });
        }
        Self::from_parts(size, mode, highpass, coverings, lowpass)
    }
}

/// Applies the configured shrinkage to every high-pass coefficient.
pub fn shrink(pyramid: &TetroletPyramid, config: ShrinkageConfig) -> Result<TetroletPyramid> {
    if !config.threshold.is_finite() || config.threshold < 0.0 {
        return invalid(format!(
            "shrinkage threshold {} must be finite and ≥ 0",
            config.threshold
        ));
    }
    Ok(match config.mode {
        ShrinkageMode::None => pyramid.clone(),
        ShrinkageMode::PositivePart => {
            let t = config.threshold;
            pyramid.map_highpass(|w| w.signum() * positive_part(w.abs() - t))
        }
    })
}

/// `(t)₊`
#[inline]
pub fn positive_part(t: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        0.0
    }
}

/// Empirical entropy in bits per symbol.
pub fn bits_per_pixel<T: Ord>(values: &[T]) -> Result<f64> {
    if values.is_empty() {
        return invalid("entropy of an empty symbol stream");
    }
    let mut counts: BTreeMap<&T, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum::<f64>()
        .max(0.0))
}

/// Number of covering indices stored by a `levels`-level decomposition of an
/// `n`×`n` image: `(n²/12)·(1 − 4^{−levels})`.
pub fn side_info_cost(n: usize, levels: usize) -> Result<f64> {
    check_levels(n, levels)?;
    let n2 = (n * n) as f64;
    Ok(n2 / 12.0 * (1.0 - 4f64.powi(-(levels as i32))))
}
