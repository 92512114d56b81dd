//! Grid indexing, tetromino connectivity and the catalog of the 117 ways to
//! tile a 4×4 block with four tetrominoes.
//!
//! Cells of a block are addressed by their linear index `j·4 + i` (row `i`,
//! column `j`). Within a tetromino the pixel order Γ is ascending linear
//! index, so the position of a cell in [`Tetromino::cells`] is its Γ value.

use std::collections::VecDeque;
use std::fmt;
use std::sync::OnceLock;

use crate::error::{invalid, Result};

/// Side of the block a covering tiles.
pub const BLOCK: usize = 4;
/// Number of cells in a block.
pub const BLOCK_CELLS: usize = BLOCK * BLOCK;
/// Number of admissible coverings of a 4×4 block.
pub const COVERING_COUNT: usize = 117;

/// Row/column position on an N×N grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GridIndex {
    pub i: usize,
    pub j: usize,
}

impl GridIndex {
    pub const fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }

    fn check(self, n: usize) -> Result<()> {
        if self.i >= n || self.j >= n {
            return invalid(format!(
                "index ({}, {}) outside {n}×{n} grid",
                self.i, self.j
            ));
        }
        Ok(())
    }
}

/// In-grid members of `{(i−1,j), (i+1,j), (i,j−1), (i,j+1)}`, in that order.
pub fn four_neighborhood(idx: GridIndex, n: usize) -> Result<Vec<GridIndex>> {
    idx.check(n)?;
    let GridIndex { i, j } = idx;
    let candidates = [
        (i.checked_sub(1), Some(j)),
        (Some(i + 1), Some(j)),
        (Some(i), j.checked_sub(1)),
        (Some(i), Some(j + 1)),
    ];
    Ok(candidates
        .into_iter()
        .filter_map(|(a, b)| Some(GridIndex::new(a?, b?)))
        .filter(|g| g.i < n && g.j < n)
        .collect())
}

/// Column-major linear index `j·N + i`.
pub fn linear_index(idx: GridIndex, n: usize) -> Result<usize> {
    idx.check(n)?;
    Ok(idx.j * n + idx.i)
}

fn block_neighbors(cell: usize) -> impl Iterator<Item = usize> {
    let (i, j) = (cell % BLOCK, cell / BLOCK);
    let mut out = [None; 4];
    if i > 0 {
        out[0] = Some(cell - 1);
    }
    if i + 1 < BLOCK {
        out[1] = Some(cell + 1);
    }
    if j > 0 {
        out[2] = Some(cell - BLOCK);
    }
    if j + 1 < BLOCK {
        out[3] = Some(cell + BLOCK);
    }
    out.into_iter().flatten()
}

fn mask_is_connected(mask: u16) -> bool {
    if mask == 0 {
        return false;
    }
    let start = mask.trailing_zeros() as usize;
    let mut seen = 1u16 << start;
    let mut queue = VecDeque::from([start]);
    while let Some(cell) = queue.pop_front() {
        for nb in block_neighbors(cell) {
            let bit = 1u16 << nb;
            if mask & bit != 0 && seen & bit == 0 {
                seen |= bit;
                queue.push_back(nb);
            }
        }
    }
    seen == mask
}

/// Four edge-connected cells of a 4×4 block, stored by ascending linear index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tetromino {
    cells: [u8; 4],
}

impl Tetromino {
    /// Builds a tetromino from block-local linear indices.
    pub fn from_linear(cells: [usize; 4]) -> Result<Self> {
        let mut sorted = cells;
        sorted.sort_unstable();
        if sorted.iter().any(|&c| c >= BLOCK_CELLS) {
            return invalid(format!("cells {cells:?} outside the 4×4 block"));
        }
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return invalid(format!("cells {cells:?} are not distinct"));
        }
        let mask = sorted.iter().fold(0u16, |m, &c| m | (1 << c));
        if !mask_is_connected(mask) {
            return invalid(format!("cells {cells:?} are not 4-connected"));
        }
        Ok(Self {
            cells: sorted.map(|c| c as u8),
        })
    }

    pub fn from_grid(cells: [GridIndex; 4]) -> Result<Self> {
        let mut lin = [0usize; 4];
        for (slot, g) in lin.iter_mut().zip(cells) {
            *slot = linear_index(g, BLOCK)?;
        }
        Self::from_linear(lin)
    }

    /// Linear indices in Γ order.
    pub fn cells(&self) -> [usize; 4] {
        self.cells.map(usize::from)
    }

    pub fn grid_cells(&self) -> [GridIndex; 4] {
        self.cells
            .map(|c| GridIndex::new(usize::from(c) % BLOCK, usize::from(c) / BLOCK))
    }

    /// Γ of a cell, if the cell belongs to this tetromino.
    pub fn pixel_order(&self, cell: usize) -> Option<usize> {
        self.cells.iter().position(|&c| usize::from(c) == cell)
    }

    pub fn mask(&self) -> u16 {
        self.cells.iter().fold(0u16, |m, &c| m | (1 << c))
    }
}

/// One-based position of a covering in the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(transparent)]
pub struct CoveringIndex(u8);

impl CoveringIndex {
    pub const FIRST: CoveringIndex = CoveringIndex(1);

    pub fn new(c: usize) -> Option<Self> {
        (1..=COVERING_COUNT)
            .contains(&c)
            .then_some(CoveringIndex(c as u8))
    }

    pub fn get(self) -> usize {
        usize::from(self.0)
    }

    pub fn as_u8(self) -> u8 {
        self.0
    }

    fn slot(self) -> usize {
        usize::from(self.0) - 1
    }
}

impl fmt::Display for CoveringIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A partition of the 4×4 block into four tetrominoes, ordered by minimum
/// cell. Lookup tables map each cell to its tetromino α and pixel order Γ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Covering {
    tetrominoes: [Tetromino; 4],
    cell_alpha: [u8; BLOCK_CELLS],
    cell_gamma: [u8; BLOCK_CELLS],
}

impl Covering {
    pub fn new(mut tetrominoes: [Tetromino; 4]) -> Result<Self> {
        let mut union = 0u16;
        for t in &tetrominoes {
            if union & t.mask() != 0 {
                return invalid("tetrominoes of a covering overlap");
            }
            union |= t.mask();
        }
        if union != u16::MAX {
            return invalid("tetrominoes do not cover the whole block");
        }
        tetrominoes.sort_unstable_by_key(|t| t.cells[0]);
        let mut cell_alpha = [0u8; BLOCK_CELLS];
        let mut cell_gamma = [0u8; BLOCK_CELLS];
        for (alpha, t) in tetrominoes.iter().enumerate() {
            for (gamma, &c) in t.cells.iter().enumerate() {
                cell_alpha[usize::from(c)] = alpha as u8;
                cell_gamma[usize::from(c)] = gamma as u8;
            }
        }
        Ok(Self {
            tetrominoes,
            cell_alpha,
            cell_gamma,
        })
    }

    pub fn tetrominoes(&self) -> &[Tetromino; 4] {
        &self.tetrominoes
    }

    /// `(α, Γ)` of a block cell.
    #[inline]
    pub fn locate(&self, cell: usize) -> (usize, usize) {
        (
            usize::from(self.cell_alpha[cell]),
            usize::from(self.cell_gamma[cell]),
        )
    }

    /// The sixteen linear indices, tetromino by tetromino; the catalog sort key.
    pub fn key(&self) -> [u8; BLOCK_CELLS] {
        let mut key = [0u8; BLOCK_CELLS];
        for (a, t) in self.tetrominoes.iter().enumerate() {
            key[a * 4..a * 4 + 4].copy_from_slice(&t.cells);
        }
        key
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoveringCatalog {
    coverings: Vec<Covering>,
}

impl CoveringCatalog {
    pub fn len(&self) -> usize {
        self.coverings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coverings.is_empty()
    }

    pub fn get(&self, c: CoveringIndex) -> &Covering {
        &self.coverings[c.slot()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (CoveringIndex, &Covering)> {
        self.coverings
            .iter()
            .enumerate()
            .map(|(slot, cov)| (CoveringIndex(slot as u8 + 1), cov))
    }
}

fn tetromino_masks() -> Vec<u16> {
    (0u32..1 << BLOCK_CELLS)
        .filter(|m| m.count_ones() == 4)
        .map(|m| m as u16)
        .filter(|&m| mask_is_connected(m))
        .collect()
}

fn mask_cells(mask: u16) -> [usize; 4] {
    let mut cells = [0usize; 4];
    let mut rest = mask;
    for slot in cells.iter_mut() {
        *slot = rest.trailing_zeros() as usize;
        rest &= rest - 1;
    }
    cells
}

fn cover_from(filled: u16, pieces: &mut Vec<u16>, masks: &[u16], out: &mut Vec<[u16; 4]>) {
    if filled == u16::MAX {
        out.push([pieces[0], pieces[1], pieces[2], pieces[3]]);
        return;
    }
    let first_empty = (!filled).trailing_zeros();
    for &m in masks {
        if m & (1 << first_empty) != 0 && m & filled == 0 {
            pieces.push(m);
            cover_from(filled | m, pieces, masks, out);
            pieces.pop();
        }
    }
}

/// All partitions of the 4×4 block into four tetrominoes, sorted by
/// [`Covering::key`].
pub fn enumerate_coverings() -> CoveringCatalog {
    let masks = tetromino_masks();
    let mut partitions = Vec::new();
    cover_from(0, &mut Vec::with_capacity(4), &masks, &mut partitions);

    let mut coverings: Vec<Covering> = partitions
        .into_iter()
        .map(|p| {
            let tets = p.map(|m| Tetromino::from_linear(mask_cells(m)).expect("connected mask"));
            Covering::new(tets).expect("exact cover")
        })
        .collect();
    coverings.sort_by_key(Covering::key);
    coverings.dedup_by_key(|c| c.key());
    CoveringCatalog { coverings }
}

/// Shared catalog, built on first use.
pub fn catalog() -> &'static CoveringCatalog {
    static CATALOG: OnceLock<CoveringCatalog> = OnceLock::new();
    CATALOG.get_or_init(enumerate_coverings)
}

/// Orthonormal 4×4 Haar analysis matrix; row 0 is the low-pass filter.
pub const HAAR: [[f64; 4]; 4] = [
    [0.5, 0.5, 0.5, 0.5],
    [0.5, -0.5, 0.5, -0.5],
    [0.5, 0.5, -0.5, -0.5],
    [0.5, -0.5, -0.5, 0.5],
];

pub fn haar_coefficient(l: usize, gamma: usize) -> Result<f64> {
    if l >= 4 || gamma >= 4 {
        return invalid(format!("haar index ({l}, {gamma}) out of range 0..4"));
    }
    Ok(HAAR[l][gamma])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[(usize, usize)]) -> Vec<GridIndex> {
        v.iter().map(|&(i, j)| GridIndex::new(i, j)).collect()
    }

    #[test]
    fn neighborhood_interior_and_edges() {
        assert_eq!(
            four_neighborhood(GridIndex::new(2, 2), 8).unwrap(),
            set(&[(1, 2), (3, 2), (2, 1), (2, 3)])
        );
        assert_eq!(
            four_neighborhood(GridIndex::new(0, 0), 4).unwrap(),
            set(&[(1, 0), (0, 1)])
        );
        assert_eq!(
            four_neighborhood(GridIndex::new(3, 0), 4).unwrap(),
            set(&[(2, 0), (3, 1)])
        );
        assert!(four_neighborhood(GridIndex::new(4, 0), 4).is_err());
    }

    #[test]
    fn linear_index_is_column_major() {
        assert_eq!(linear_index(GridIndex::new(0, 0), 4).unwrap(), 0);
        assert_eq!(linear_index(GridIndex::new(2, 3), 4).unwrap(), 14);
        assert!(linear_index(GridIndex::new(0, 4), 4).is_err());

        let mut hit = [false; 16];
        for i in 0..4 {
            for j in 0..4 {
                let l = linear_index(GridIndex::new(i, j), 4).unwrap();
                assert!(!hit[l]);
                hit[l] = true;
            }
        }
        assert!(hit.iter().all(|&h| h));
    }

    #[test]
    fn tetromino_validation() {
        assert!(Tetromino::from_linear([0, 1, 2, 3]).is_ok());
        assert!(Tetromino::from_linear([0, 1, 4, 5]).is_ok());
        // diagonal contact only
        assert!(Tetromino::from_linear([0, 5, 10, 15]).is_err());
        assert!(Tetromino::from_linear([0, 0, 1, 2]).is_err());
        assert!(Tetromino::from_linear([0, 1, 2, 16]).is_err());
        // two dominoes, each internally adjacent but not joined
        assert!(Tetromino::from_linear([0, 1, 10, 11]).is_err());
    }

    #[test]
    fn catalog_has_117_valid_coverings() {
        let cat = enumerate_coverings();
        assert_eq!(cat.len(), COVERING_COUNT);
        for (_, cov) in cat.iter() {
            let mut union = 0u16;
            for t in cov.tetrominoes() {
                assert!(mask_is_connected(t.mask()));
                assert_eq!(union & t.mask(), 0);
                union |= t.mask();
                let mut gammas: Vec<_> = t
                    .cells()
                    .iter()
                    .map(|&c| t.pixel_order(c).unwrap())
                    .collect();
                gammas.sort_unstable();
                assert_eq!(gammas, vec![0, 1, 2, 3]);
            }
            assert_eq!(union, u16::MAX);
        }
        assert_eq!(cat, enumerate_coverings());
    }

    #[test]
    fn first_covering_is_four_columns() {
        let first = catalog().get(CoveringIndex::FIRST);
        let cells: Vec<_> = first.tetrominoes().iter().map(|t| t.cells()).collect();
        assert_eq!(
            cells,
            vec![[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11], [12, 13, 14, 15]]
        );
    }

    #[test]
    fn haar_rows_orthonormal() {
        for l in 0..4 {
            for m in 0..4 {
                let dot: f64 = (0..4)
                    .map(|g| haar_coefficient(l, g).unwrap() * haar_coefficient(m, g).unwrap())
                    .sum();
                let expect = if l == m { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-15);
            }
            assert_eq!(haar_coefficient(0, l).unwrap(), 0.5);
        }
        assert!(haar_coefficient(4, 0).is_err());
        assert!(haar_coefficient(0, 4).is_err());
    }

    #[test]
    fn covering_index_bounds() {
        assert!(CoveringIndex::new(0).is_none());
        assert!(CoveringIndex::new(118).is_none());
        assert_eq!(CoveringIndex::new(117).unwrap().get(), 117);
    }
}
