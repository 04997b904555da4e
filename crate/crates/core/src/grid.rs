//! Nested coarse/fine structured grids on the unit square and box oversampling regions.
//!
//! Both grids partition Ω = (0,1)² into axis-aligned squares; the fine grid
//! refines each coarse cell into `refine × refine` cells. Cells are indexed
//! row-major from the bottom-left corner, so cell 0 sits at the origin and
//! index increases to the right, then upward. Mesh sizes are kept as integer
//! reciprocals (`n_coarse`, `n_fine`), so H·n_coarse = 1 holds exactly.

use crate::error::{Error, Result};

/// A coarse grid and its nested uniform refinement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridPair {
    n_coarse: usize,
    refine: usize,
    n_fine: usize,
}

/// Outward side of a boundary face, from the owning cell's point of view.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

/// Face enumeration for a set of fine cells.
///
/// Interior faces pair two cells of the set and appear exactly once, as
/// (lower index, higher index). Boundary faces are faces of a set cell whose
/// opposite side is not in the set (either outside the set or outside Ω).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaceList {
    pub interior: Vec<(usize, usize)>,
    pub boundary: Vec<(usize, Side)>,
}

/// A coarse block extended by `layers` rings of coarse blocks, clipped at ∂Ω.
///
/// Box (Chebyshev) layers keep the region a rectangle of coarse blocks, so
/// cell membership and local indices are O(1). Fine cells are enumerated in
/// ascending global index; the local index of a fine cell is its position in
/// that enumeration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OversampleRegion {
    center: usize,
    layers: usize,
    n_coarse: usize,
    n_fine: usize,
    coarse_row0: usize,
    coarse_row1: usize,
    coarse_col0: usize,
    coarse_col1: usize,
    fine_row0: usize,
    fine_row1: usize,
    fine_col0: usize,
    fine_col1: usize,
}

impl GridPair {
    /// `n_coarse` coarse cells per side, each refined `refine × refine`.
    pub fn build(n_coarse: usize, refine: usize) -> Result<GridPair> {
        if n_coarse == 0 || refine == 0 {
            return Err(Error::Grid(format!(
                "sizes must be positive, got n_coarse={n_coarse}, refine={refine}"
            )));
        }
        let n_fine = n_coarse
            .checked_mul(refine)
            .filter(|n| n.checked_mul(*n).is_some())
            .ok_or_else(|| Error::Grid(format!("grid {n_coarse}×{refine} overflows")))?;
        Ok(GridPair {
            n_coarse,
            refine,
            n_fine,
        })
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn refine(&self) -> usize {
        self.refine
    }

    /// Fine cells per side (= n_coarse · refine).
    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    pub fn n_coarse_cells(&self) -> usize {
        self.n_coarse * self.n_coarse
    }

    pub fn n_fine_cells(&self) -> usize {
        self.n_fine * self.n_fine
    }

    /// Coarse mesh size H = 1/n_coarse.
    pub fn coarse_h(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    /// Fine mesh size h = 1/n_fine.
    pub fn fine_h(&self) -> f64 {
        1.0 / self.n_fine as f64
    }

    pub fn fine_index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n_fine && col < self.n_fine);
        row * self.n_fine + col
    }

    pub fn fine_row_col(&self, cell: usize) -> (usize, usize) {
        debug_assert!(cell < self.n_fine_cells());
        (cell / self.n_fine, cell % self.n_fine)
    }

    pub fn coarse_index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.n_coarse && col < self.n_coarse);
        row * self.n_coarse + col
    }

    pub fn coarse_row_col(&self, block: usize) -> (usize, usize) {
        debug_assert!(block < self.n_coarse_cells());
        (block / self.n_coarse, block % self.n_coarse)
    }

    /// Coarse block containing a fine cell; total and surjective.
    pub fn coarse_of_fine(&self, cell: usize) -> usize {
        let (r, c) = self.fine_row_col(cell);
        self.coarse_index(r / self.refine, c / self.refine)
    }

    /// Fine cells of one coarse block, ascending global index.
    pub fn fine_cells_of_coarse(&self, block: usize) -> impl Iterator<Item = usize> + '_ {
        let (br, bc) = self.coarse_row_col(block);
        let (r0, c0) = (br * self.refine, bc * self.refine);
        let refine = self.refine;
        let n_fine = self.n_fine;
        (0..refine).flat_map(move |dr| (0..refine).map(move |dc| (r0 + dr) * n_fine + c0 + dc))
    }

    /// Center coordinates of a fine cell.
    pub fn fine_cell_center(&self, cell: usize) -> (f64, f64) {
        let (r, c) = self.fine_row_col(cell);
        let h = self.fine_h();
        ((c as f64 + 0.5) * h, (r as f64 + 0.5) * h)
    }

    /// Coarse block `j` grown by `m` layers of blocks, clipped at ∂Ω.
    pub fn oversample(&self, j: usize, m: usize) -> Result<OversampleRegion> {
        if j >= self.n_coarse_cells() {
            return Err(Error::Index(format!(
                "coarse cell {j} on a {0}×{0} coarse grid",
                self.n_coarse
            )));
        }
        let (br, bc) = self.coarse_row_col(j);
        let coarse_row0 = br.saturating_sub(m);
        let coarse_col0 = bc.saturating_sub(m);
        let coarse_row1 = (br + m).min(self.n_coarse - 1);
        let coarse_col1 = (bc + m).min(self.n_coarse - 1);
        Ok(OversampleRegion {
            center: j,
            layers: m,
            n_coarse: self.n_coarse,
            n_fine: self.n_fine,
            coarse_row0,
            coarse_row1,
            coarse_col0,
            coarse_col1,
            fine_row0: coarse_row0 * self.refine,
            fine_row1: (coarse_row1 + 1) * self.refine - 1,
            fine_col0: coarse_col0 * self.refine,
            fine_col1: (coarse_col1 + 1) * self.refine - 1,
        })
    }

    /// The whole domain as a region (every coarse block included).
    pub fn domain_region(&self) -> OversampleRegion {
        self.oversample(0, self.n_coarse - 1)
            .expect("block 0 always valid")
    }
}

impl OversampleRegion {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// Coarse blocks of the region, ascending global index.
    pub fn coarse_cells(&self) -> Vec<usize> {
        let mut out =
            Vec::with_capacity((self.coarse_row1 - self.coarse_row0 + 1) * self.coarse_width());
        for r in self.coarse_row0..=self.coarse_row1 {
            for c in self.coarse_col0..=self.coarse_col1 {
                out.push(r * self.n_coarse + c);
            }
        }
        out
    }

    pub fn n_coarse_cells(&self) -> usize {
        (self.coarse_row1 - self.coarse_row0 + 1) * self.coarse_width()
    }

    fn coarse_width(&self) -> usize {
        self.coarse_col1 - self.coarse_col0 + 1
    }

    /// Fine cells per row of the region rectangle.
    pub fn fine_width(&self) -> usize {
        self.fine_col1 - self.fine_col0 + 1
    }

    /// Fine rows of the region rectangle.
    pub fn fine_height(&self) -> usize {
        self.fine_row1 - self.fine_row0 + 1
    }

    pub fn n_fine_cells(&self) -> usize {
        self.fine_width() * self.fine_height()
    }

    /// Fine cells of the region, ascending global index.
    pub fn fine_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (self.fine_row0..=self.fine_row1)
            .flat_map(move |r| (self.fine_col0..=self.fine_col1).map(move |c| r * self.n_fine + c))
    }

    pub fn contains_fine(&self, cell: usize) -> bool {
        let (r, c) = (cell / self.n_fine, cell % self.n_fine);
        cell < self.n_fine * self.n_fine
            && r >= self.fine_row0
            && r <= self.fine_row1
            && c >= self.fine_col0
            && c <= self.fine_col1
    }

    pub fn contains_coarse(&self, block: usize) -> bool {
        let (r, c) = (block / self.n_coarse, block % self.n_coarse);
        block < self.n_coarse * self.n_coarse
            && r >= self.coarse_row0
            && r <= self.coarse_row1
            && c >= self.coarse_col0
            && c <= self.coarse_col1
    }

    /// Position of a fine cell in the `fine_cells` enumeration.
    pub fn local_index(&self, cell: usize) -> Option<usize> {
        if !self.contains_fine(cell) {
            return None;
        }
        let (r, c) = (cell / self.n_fine, cell % self.n_fine);
        Some((r - self.fine_row0) * self.fine_width() + (c - self.fine_col0))
    }

    /// Global fine index of the `local`-th region cell.
    pub fn global_index(&self, local: usize) -> usize {
        debug_assert!(local < self.n_fine_cells());
        let (r, c) = (local / self.fine_width(), local % self.fine_width());
        (self.fine_row0 + r) * self.n_fine + self.fine_col0 + c
    }

    /// |region| / |Ω| as a fraction.
    pub fn area_ratio(&self) -> f64 {
        self.n_coarse_cells() as f64 / (self.n_coarse * self.n_coarse) as f64
    }

    pub fn is_whole_domain(&self) -> bool {
        self.coarse_row0 == 0
            && self.coarse_col0 == 0
            && self.coarse_row1 == self.n_coarse - 1
            && self.coarse_col1 == self.n_coarse - 1
    }
}

/// Enumerate the faces of a region's fine-cell set.
pub fn face_list(grid: &GridPair, region: &OversampleRegion) -> FaceList {
    faces_impl(grid, region.fine_cells(), |cell| region.contains_fine(cell))
}

/// Enumerate the faces of an arbitrary fine-cell set, given ascending and
/// de-duplicated global indices.
pub fn face_list_cells(grid: &GridPair, cells: &[usize]) -> Result<FaceList> {
    for w in cells.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::Index(format!(
                "cell list must be strictly ascending, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&last) = cells.last() {
        if last >= grid.n_fine_cells() {
            return Err(Error::Index(format!(
                "cell {last} on a {0}×{0} fine grid",
                grid.n_fine()
            )));
        }
    }
    Ok(faces_impl(grid, cells.iter().copied(), |cell| {
        cells.binary_search(&cell).is_ok()
    }))
}

fn faces_impl(
    grid: &GridPair,
    cells: impl Iterator<Item = usize>,
    contains: impl Fn(usize) -> bool,
) -> FaceList {
    let n = grid.n_fine();
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for cell in cells {
        let (r, c) = grid.fine_row_col(cell);
        // Interior faces owned by their lower-index cell: look right and up.
        if c + 1 < n && contains(cell + 1) {
            interior.push((cell, cell + 1));
        }
        if r + 1 < n && contains(cell + n) {
            interior.push((cell, cell + n));
        }
        if c == 0 || !contains(cell - 1) {
            boundary.push((cell, Side::Left));
        }
        if c + 1 == n || !contains(cell + 1) {
            boundary.push((cell, Side::Right));
        }
        if r == 0 || !contains(cell - n) {
            boundary.push((cell, Side::Bottom));
        }
        if r + 1 == n || !contains(cell + n) {
            boundary.push((cell, Side::Top));
        }
    }
    FaceList { interior, boundary }
}
