//! Coefficient fields (κ₁, κ₂, σ, c₁, c₂), channelized generators, file IO,
//! and the per-block continuum sub-region partition.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::GridPair;
use crate::io;

/// Per-fine-cell coefficients of the dual-continuum model.
///
/// Invariants: κ_i > 0, σ ≥ 0, c_i > 0, all finite. Contrast is computed on
/// demand, never cached.
#[derive(Clone, Debug, PartialEq)]
pub struct MediaField {
    n_fine: usize,
    kappa: [Vec<f64>; 2],
    sigma: Vec<f64>,
    c: [Vec<f64>; 2],
}

impl MediaField {
    pub fn from_parts(
        n_fine: usize,
        kappa1: Vec<f64>,
        kappa2: Vec<f64>,
        sigma: Vec<f64>,
        c1: Vec<f64>,
        c2: Vec<f64>,
    ) -> Result<MediaField> {
        let field = MediaField {
            n_fine,
            kappa: [kappa1, kappa2],
            sigma,
            c: [c1, c2],
        };
        field.validate()?;
        Ok(field)
    }

    /// Constant coefficients everywhere.
    pub fn uniform(grid: &GridPair, kappa: f64, sigma: f64, c: f64) -> Result<MediaField> {
        let n = grid.n_fine_cells();
        MediaField::from_parts(
            grid.n_fine(),
            vec![kappa; n],
            vec![kappa; n],
            vec![sigma; n],
            vec![c; n],
            vec![c; n],
        )
    }

    fn validate(&self) -> Result<()> {
        let n = self.n_fine * self.n_fine;
        for (name, v) in [
            ("kappa1", &self.kappa[0]),
            ("kappa2", &self.kappa[1]),
            ("sigma", &self.sigma),
            ("c1", &self.c[0]),
            ("c2", &self.c[1]),
        ] {
            if v.len() != n {
                return Err(Error::Media(format!(
                    "{name} has {} cells, grid wants {n}",
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|x| !x.is_finite()) {
                return Err(Error::Media(format!("{name} contains non-finite {bad}")));
            }
        }
        for i in 0..2 {
            if let Some(bad) = self.kappa[i].iter().find(|&&x| x <= 0.0) {
                return Err(Error::Media(format!(
                    "kappa{} must be positive, found {bad}",
                    i + 1
                )));
            }
            if let Some(bad) = self.c[i].iter().find(|&&x| x <= 0.0) {
                return Err(Error::Media(format!(
                    "c{} must be positive, found {bad}",
                    i + 1
                )));
            }
        }
        if let Some(bad) = self.sigma.iter().find(|&&x| x < 0.0) {
            return Err(Error::Media(format!("sigma must be nonnegative, found {bad}")));
        }
        Ok(())
    }

    /// Fine cells per side.
    pub fn n_fine(&self) -> usize {
        self.n_fine
    }

    /// Permeability of continuum `i` ∈ {0, 1}.
    pub fn kappa(&self, i: usize) -> &[f64] {
        &self.kappa[i]
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Compressibility of continuum `i` ∈ {0, 1}.
    pub fn compressibility(&self, i: usize) -> &[f64] {
        &self.c[i]
    }

    /// max κ_i / min κ_i, computed fresh.
    pub fn contrast(&self, i: usize) -> f64 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &k in &self.kappa[i] {
            lo = lo.min(k);
            hi = hi.max(k);
        }
        hi / lo
    }

    /// Replace σ with a constant (experiment-level override).
    pub fn set_uniform_sigma(&mut self, sigma: f64) -> Result<()> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::Media(format!(
                "sigma must be nonnegative, found {sigma}"
            )));
        }
        self.sigma.fill(sigma);
        Ok(())
    }
}

/// Channel geometry in fine-cell coordinates, all bounds inclusive.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChannelShape {
    Rect {
        row0: usize,
        col0: usize,
        row1: usize,
        col1: usize,
    },
    /// 1-cell-wide path; consecutive points must share a row or a column.
    Polyline { points: Vec<(usize, usize)> },
}

/// Channel layout for one continuum: explicit shapes or a seeded random draw.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChannelLayout {
    Shapes(Vec<ChannelShape>),
    Random { count: usize },
}

/// Channel layouts for both continua; the two draws are independent.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChannelsSpec {
    pub continuum: [ChannelLayout; 2],
}

impl ChannelsSpec {
    pub fn random(count1: usize, count2: usize) -> ChannelsSpec {
        ChannelsSpec {
            continuum: [
                ChannelLayout::Random { count: count1 },
                ChannelLayout::Random { count: count2 },
            ],
        }
    }
}

fn paint_rect(mask: &mut [bool], n: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> Result<()> {
    if r0 > r1 || c0 > c1 || r1 >= n || c1 >= n {
        return Err(Error::Media(format!(
            "rect ({r0},{c0})..({r1},{c1}) outside a {n}×{n} grid"
        )));
    }
    for r in r0..=r1 {
        for c in c0..=c1 {
            mask[r * n + c] = true;
        }
    }
    Ok(())
}

fn paint_shape(mask: &mut [bool], n: usize, shape: &ChannelShape) -> Result<()> {
    match shape {
        ChannelShape::Rect {
            row0,
            col0,
            row1,
            col1,
        } => paint_rect(mask, n, *row0, *col0, *row1, *col1),
        ChannelShape::Polyline { points } => {
            if points.is_empty() {
                return Err(Error::Media("polyline with no points".into()));
            }
            for w in points.windows(2) {
                let ((r0, c0), (r1, c1)) = (w[0], w[1]);
                if r0 != r1 && c0 != c1 {
                    return Err(Error::Media(format!(
                        "polyline segment ({r0},{c0})→({r1},{c1}) is not axis-aligned"
                    )));
                }
                paint_rect(mask, n, r0.min(r1), c0.min(c1), r0.max(r1), c0.max(c1))?;
            }
            if points.len() == 1 {
                let (r, c) = points[0];
                paint_rect(mask, n, r, c, r, c)?;
            }
            Ok(())
        }
    }
}

fn paint_random(mask: &mut [bool], n: usize, count: usize, rng: &mut ChaCha8Rng) {
    // Long, thin, mostly-spanning lanes: qualitatively channel-like at any
    // resolution, deterministic given the rng state.
    let max_thickness = (n / 64).max(1);
    let margin = n / 8;
    for _ in 0..count {
        let horizontal = rng.random_bool(0.5);
        let thickness = rng.random_range(1..=max_thickness);
        let lane = rng.random_range(0..n - thickness + 1);
        let start = rng.random_range(0..margin + 1);
        let end = n - 1 - rng.random_range(0..margin + 1);
        if horizontal {
            let _ = paint_rect(mask, n, lane, start, lane + thickness - 1, end);
        } else {
            let _ = paint_rect(mask, n, start, lane, end, lane + thickness - 1);
        }
    }
}

/// Two-valued field: background 1, channel cells = `contrast`.
///
/// Deterministic given `seed`; the continua draw from decorrelated streams.
/// For contrast > 1 each continuum must end up with at least one channel cell
/// and at least one background cell, so the realized contrast is exact.
pub fn generate_channelized(
    grid: &GridPair,
    contrast: f64,
    seed: u64,
    spec: &ChannelsSpec,
) -> Result<MediaField> {
    if !contrast.is_finite() || contrast < 1.0 {
        return Err(Error::Media(format!("contrast must be ≥ 1, got {contrast}")));
    }
    let n = grid.n_fine();
    let mut kappa: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for i in 0..2 {
        let mut mask = vec![false; n * n];
        match &spec.continuum[i] {
            ChannelLayout::Shapes(shapes) => {
                for s in shapes {
                    paint_shape(&mut mask, n, s)?;
                }
            }
            ChannelLayout::Random { count } => {
                let stream = seed ^ (0x9E37_79B9_7F4A_7C15u64.wrapping_mul(i as u64 + 1));
                let mut rng = ChaCha8Rng::seed_from_u64(stream);
                paint_random(&mut mask, n, *count, &mut rng);
            }
        }
        if contrast > 1.0 {
            let channel_cells = mask.iter().filter(|&&m| m).count();
            if channel_cells == 0 {
                return Err(Error::Media(format!(
                    "continuum {} layout paints no channel cells, cannot realize contrast {contrast}",
                    i + 1
                )));
            }
            if channel_cells == n * n {
                return Err(Error::Media(format!(
                    "continuum {} layout covers the whole domain, no background left",
                    i + 1
                )));
            }
        }
        kappa[i] = mask
            .iter()
            .map(|&m| if m { contrast } else { 1.0 })
            .collect();
    }
    let [kappa1, kappa2] = kappa;
    let cells = n * n;
    MediaField::from_parts(
        n,
        kappa1,
        kappa2,
        vec![1.0; cells],
        vec![1.0; cells],
        vec![1.0; cells],
    )
}

const MEDIA_ROLES: [&str; 5] = ["kappa1", "kappa2", "sigma", "c1", "c2"];

/// Write the five field files next to `manifest_path` and the manifest itself.
///
/// Returns (role, path) pairs for everything written, manifest first.
pub fn save_media(field: &MediaField, manifest_path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let stem = manifest_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Media(format!("bad manifest path {manifest_path:?}")))?
        .to_string();
    let n = field.n_fine;
    let parts: [&[f64]; 5] = [
        &field.kappa[0],
        &field.kappa[1],
        &field.sigma,
        &field.c[0],
        &field.c[1],
    ];
    let mut manifest = String::new();
    let mut written = vec![("manifest".to_string(), manifest_path.to_path_buf())];
    for (role, values) in MEDIA_ROLES.iter().zip(parts) {
        let name = format!("{stem}.{role}.txt");
        let path = io::sibling(manifest_path, &name);
        io::write_file(&path, &io::format_matrix(n, n, values))?;
        manifest.push_str(&format!("{role} {name}\n"));
        written.push((role.to_string(), path));
    }
    io::write_file(manifest_path, &manifest)?;
    Ok(written)
}

/// Load a media manifest and its five field files; dimensions must match `grid`.
pub fn load_media(grid: &GridPair, manifest_path: &Path) -> Result<MediaField> {
    let text = io::read_to_string(manifest_path)?;
    let entries = io::parse_role_lines(&text, manifest_path)?;
    let mut fields: [Option<Vec<f64>>; 5] = [None, None, None, None, None];
    for (role, name) in &entries {
        let slot = MEDIA_ROLES
            .iter()
            .position(|r| r == role)
            .ok_or_else(|| Error::Parse {
                path: manifest_path.to_path_buf(),
                msg: format!("unknown role {role:?}"),
            })?;
        let path = io::sibling(manifest_path, name);
        let (nr, nc, values) = io::parse_matrix(&io::read_to_string(&path)?, &path)?;
        if nr != grid.n_fine() || nc != grid.n_fine() {
            return Err(Error::Media(format!(
                "{role} is {nr}×{nc}, grid wants {0}×{0}",
                grid.n_fine()
            )));
        }
        fields[slot] = Some(values);
    }
    let mut taken = fields.into_iter();
    let mut need = |role: &str| {
        taken.next().flatten().ok_or_else(|| Error::Parse {
            path: manifest_path.to_path_buf(),
            msg: format!("manifest missing role {role:?}"),
        })
    };
    let kappa1 = need("kappa1")?;
    let kappa2 = need("kappa2")?;
    let sigma = need("sigma")?;
    let c1 = need("c1")?;
    let c2 = need("c2")?;
    MediaField::from_parts(grid.n_fine(), kappa1, kappa2, sigma, c1, c2)
}

/// How coarse blocks are split into constraint sub-regions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PartitionMode {
    /// One sub-region per block per continuum.
    Single,
    /// High-κ cells form one sub-region per 4-connected component, the rest
    /// one matrix sub-region.
    Channelized,
}

/// Sub-region labels within each coarse block, per continuum.
///
/// Labels are block-local: components first in order of their smallest fine
/// cell, then the matrix sub-region (when both exist). Every sub-region is
/// nonempty, and labels partition the block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContinuumPartition {
    grid: GridPair,
    /// Per continuum, per fine cell: label within its block.
    labels: [Vec<u32>; 2],
    /// Per continuum, per block: number of labels.
    label_counts: [Vec<u32>; 2],
    /// Per continuum: flat cell counts, indexed by block_offsets.
    cell_counts: [Vec<u32>; 2],
    block_offsets: [Vec<usize>; 2],
}

impl ContinuumPartition {
    pub fn n_blocks(&self) -> usize {
        self.grid.n_coarse_cells()
    }

    /// L_i^{(j)}: number of sub-regions of block `j` in continuum `i`.
    pub fn label_count(&self, i: usize, j: usize) -> usize {
        self.label_counts[i][j] as usize
    }

    /// Label of a fine cell within its block, continuum `i`.
    pub fn label_of(&self, i: usize, cell: usize) -> usize {
        self.labels[i][cell] as usize
    }

    /// Fine cells in sub-region (i, j, l).
    pub fn cell_count(&self, i: usize, j: usize, l: usize) -> usize {
        debug_assert!(l < self.label_count(i, j));
        self.cell_counts[i][self.block_offsets[i][j] + l] as usize
    }

    /// |K_l^{(i,j)}| = cell count · h².
    pub fn area(&self, i: usize, j: usize, l: usize) -> f64 {
        let h = self.grid.fine_h();
        self.cell_count(i, j, l) as f64 * h * h
    }

    /// Global fine cells of sub-region (i, j, l), ascending.
    pub fn support_cells(&self, i: usize, j: usize, l: usize) -> Vec<usize> {
        self.grid
            .fine_cells_of_coarse(j)
            .filter(|&cell| self.labels[i][cell] as usize == l)
            .collect()
    }
}

/// Split every coarse block into sub-regions per continuum.
///
/// `threshold` applies in channelized mode only; `None` uses the geometric
/// mean of min and max κ_i per continuum.
pub fn partition_continua(
    grid: &GridPair,
    field: &MediaField,
    mode: PartitionMode,
    threshold: Option<f64>,
) -> Result<ContinuumPartition> {
    if field.n_fine() != grid.n_fine() {
        return Err(Error::Shape(format!(
            "field is {0}×{0}, grid wants {1}×{1}",
            field.n_fine(),
            grid.n_fine()
        )));
    }
    if let Some(t) = threshold {
        if !(t > 0.0) {
            return Err(Error::Media(format!("threshold must be positive, got {t}")));
        }
    }
    let n_cells = grid.n_fine_cells();
    let n_blocks = grid.n_coarse_cells();
    let mut labels: [Vec<u32>; 2] = [vec![0; n_cells], vec![0; n_cells]];
    let mut label_counts: [Vec<u32>; 2] = [vec![1; n_blocks], vec![1; n_blocks]];
    let mut cell_counts: [Vec<u32>; 2] = [Vec::new(), Vec::new()];
    let mut block_offsets: [Vec<usize>; 2] = [Vec::new(), Vec::new()];

    for i in 0..2 {
        match mode {
            PartitionMode::Single => {
                let block_cells = (grid.refine() * grid.refine()) as u32;
                cell_counts[i] = vec![block_cells; n_blocks];
                block_offsets[i] = (0..=n_blocks).collect();
            }
            PartitionMode::Channelized => {
                let thr = threshold.unwrap_or_else(|| {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for &k in field.kappa(i) {
                        lo = lo.min(k);
                        hi = hi.max(k);
                    }
                    (lo * hi).sqrt()
                });
                block_offsets[i].push(0);
                for j in 0..n_blocks {
                    let block: Vec<usize> = grid.fine_cells_of_coarse(j).collect();
                    let counts =
                        label_block(grid, field.kappa(i), thr, &block, &mut labels[i]);
                    label_counts[i][j] = counts.len() as u32;
                    cell_counts[i].extend(counts);
                    block_offsets[i].push(cell_counts[i].len());
                }
            }
        }
    }

    Ok(ContinuumPartition {
        grid: *grid,
        labels,
        label_counts,
        cell_counts,
        block_offsets,
    })
}

/// Label one block; returns per-label cell counts. Components are numbered in
/// order of their smallest cell; matrix cells (κ < threshold) get the last
/// label, unless there are no components (label 0) or no matrix cells.
fn label_block(
    grid: &GridPair,
    kappa: &[f64],
    threshold: f64,
    block: &[usize],
    labels: &mut [u32],
) -> Vec<u32> {
    let n = grid.n_fine();
    let in_block = |cell: usize| block.binary_search(&cell).is_ok();
    let mut component: Vec<Option<u32>> = vec![None; block.len()];
    let mut n_components = 0u32;
    let mut queue = Vec::new();
    for (bi, &cell) in block.iter().enumerate() {
        if kappa[cell] < threshold || component[bi].is_some() {
            continue;
        }
        let comp = n_components;
        n_components += 1;
        component[bi] = Some(comp);
        queue.push(cell);
        while let Some(cur) = queue.pop() {
            let (r, c) = grid.fine_row_col(cur);
            let mut try_neighbor = |nb: usize| {
                if kappa[nb] >= threshold && in_block(nb) {
                    let nbi = block.binary_search(&nb).unwrap();
                    if component[nbi].is_none() {
                        component[nbi] = Some(comp);
                        queue.push(nb);
                    }
                }
            };
            if c > 0 {
                try_neighbor(cur - 1);
            }
            if c + 1 < n {
                try_neighbor(cur + 1);
            }
            if r > 0 {
                try_neighbor(cur - n);
            }
            if r + 1 < n {
                try_neighbor(cur + n);
            }
        }
    }
    let matrix_cells = component.iter().filter(|c| c.is_none()).count();
    let matrix_label = n_components; // also 0 when there are no components
    let n_labels = if n_components == 0 {
        1
    } else if matrix_cells == 0 {
        n_components
    } else {
        n_components + 1
    };
    let mut counts = vec![0u32; n_labels as usize];
    for (bi, &cell) in block.iter().enumerate() {
        let label = component[bi].unwrap_or(matrix_label).min(n_labels - 1);
        labels[cell] = label;
        counts[label as usize] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(nc: usize, rf: usize) -> GridPair {
        GridPair::build(nc, rf).unwrap()
    }

    #[test]
    fn uniform_field_has_unit_contrast() {
        let g = grid(2, 2);
        let f = MediaField::uniform(&g, 3.0, 1.0, 2.0).unwrap();
        assert_eq!(f.contrast(0), 1.0);
        assert_eq!(f.contrast(1), 1.0);
        assert_eq!(f.kappa(0)[3], 3.0);
        assert_eq!(f.compressibility(1)[0], 2.0);
    }

    #[test]
    fn rejects_nonpositive_kappa_and_negative_sigma() {
        let g = grid(1, 2);
        assert!(MediaField::from_parts(
            2,
            vec![1.0, 0.0, 1.0, 1.0],
            vec![1.0; 4],
            vec![0.0; 4],
            vec![1.0; 4],
            vec![1.0; 4]
        )
        .is_err());
        let mut f = MediaField::uniform(&g, 1.0, 0.0, 1.0).unwrap();
        assert!(f.set_uniform_sigma(-1.0).is_err());
        assert!(f.set_uniform_sigma(2.0).is_ok());
        assert_eq!(f.sigma()[0], 2.0);
    }

    #[test]
    fn degenerate_contrast_one_is_uniform() {
        let g = grid(4, 4);
        let f = generate_channelized(&g, 1.0, 9, &ChannelsSpec::random(4, 4)).unwrap();
        assert_eq!(f.contrast(0), 1.0);
        assert!(f.kappa(0).iter().all(|&k| k == 1.0));
    }

    #[test]
    fn contrast_is_exact_and_defaults_are_unit() {
        let g = grid(8, 8);
        let f = generate_channelized(&g, 1e4, 3, &ChannelsSpec::random(6, 6)).unwrap();
        assert_eq!(f.contrast(0), 1e4);
        assert_eq!(f.contrast(1), 1e4);
        assert!(f.sigma().iter().all(|&s| s == 1.0));
        assert!(f.compressibility(0).iter().all(|&c| c == 1.0));
    }

    #[test]
    fn generation_is_deterministic() {
        let g = grid(8, 4);
        let spec = ChannelsSpec::random(5, 7);
        let a = generate_channelized(&g, 1e4, 42, &spec).unwrap();
        let b = generate_channelized(&g, 1e4, 42, &spec).unwrap();
        assert_eq!(a, b);
        let c = generate_channelized(&g, 1e4, 43, &spec).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn continua_draw_independent_layouts() {
        let g = grid(8, 4);
        let f = generate_channelized(&g, 1e4, 11, &ChannelsSpec::random(5, 5)).unwrap();
        assert_ne!(f.kappa(0), f.kappa(1));
    }

    #[test]
    fn empty_layout_cannot_realize_contrast() {
        let g = grid(4, 2);
        let spec = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![]),
                ChannelLayout::Random { count: 2 },
            ],
        };
        assert!(generate_channelized(&g, 1e4, 1, &spec).is_err());
        // covering everything leaves no background
        let all = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 0,
                    col0: 0,
                    row1: 7,
                    col1: 7,
                }]),
                ChannelLayout::Random { count: 2 },
            ],
        };
        assert!(generate_channelized(&g, 1e4, 1, &all).is_err());
    }

    #[test]
    fn polyline_must_be_axis_aligned() {
        let g = grid(4, 4);
        let spec = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![ChannelShape::Polyline {
                    points: vec![(0, 0), (3, 3)],
                }]),
                ChannelLayout::Random { count: 1 },
            ],
        };
        assert!(generate_channelized(&g, 1e4, 1, &spec).is_err());
    }

    #[test]
    fn polyline_paints_an_l_shape() {
        let g = grid(4, 2);
        let spec = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![ChannelShape::Polyline {
                    points: vec![(1, 0), (1, 5), (6, 5)],
                }]),
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 0,
                    col0: 0,
                    row1: 0,
                    col1: 0,
                }]),
            ],
        };
        let f = generate_channelized(&g, 100.0, 1, &spec).unwrap();
        let n = g.n_fine();
        for c in 0..=5 {
            assert_eq!(f.kappa(0)[n + c], 100.0);
        }
        for r in 1..=6 {
            assert_eq!(f.kappa(0)[r * n + 5], 100.0);
        }
        assert_eq!(f.kappa(0)[0], 1.0);
        let painted = f.kappa(0).iter().filter(|&&k| k == 100.0).count();
        assert_eq!(painted, 6 + 6 - 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join("nlmc-media-rt");
        let _ = std::fs::remove_dir_all(&dir);
        let g = grid(2, 2);
        let f = generate_channelized(&g, 1e4, 5, &ChannelsSpec::random(2, 2)).unwrap();
        let manifest = dir.join("media.txt");
        let written = save_media(&f, &manifest).unwrap();
        assert_eq!(written.len(), 6);
        let back = load_media(&g, &manifest).unwrap();
        assert_eq!(f, back);
    }

    #[test]
    fn load_rejects_bad_dimension_and_nonpositive_kappa() {
        let dir = std::env::temp_dir().join("nlmc-media-bad");
        let _ = std::fs::remove_dir_all(&dir);
        let g = grid(2, 2);
        let f = MediaField::uniform(&g, 2.0, 1.0, 1.0).unwrap();
        let manifest = dir.join("media.txt");
        save_media(&f, &manifest).unwrap();

        let wrong_grid = grid(2, 4);
        let err = load_media(&wrong_grid, &manifest).unwrap_err().to_string();
        assert!(err.contains("grid wants 8×8"), "{err}");

        let k1 = dir.join("media.kappa1.txt");
        let text = std::fs::read_to_string(&k1).unwrap().replace('2', "0");
        std::fs::write(&k1, text).unwrap();
        let err = load_media(&g, &manifest).unwrap_err().to_string();
        assert!(err.contains("positive"), "{err}");
    }

    #[test]
    fn load_rejects_missing_role() {
        let dir = std::env::temp_dir().join("nlmc-media-miss");
        let _ = std::fs::remove_dir_all(&dir);
        let g = grid(1, 2);
        let f = MediaField::uniform(&g, 1.0, 0.0, 1.0).unwrap();
        let manifest = dir.join("m.txt");
        save_media(&f, &manifest).unwrap();
        let text: String = std::fs::read_to_string(&manifest)
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("sigma"))
            .map(|l| format!("{l}\n"))
            .collect();
        std::fs::write(&manifest, text).unwrap();
        let err = load_media(&g, &manifest).unwrap_err().to_string();
        assert!(err.contains("sigma"), "{err}");
    }

    #[test]
    fn single_mode_has_one_label_per_block() {
        let g = grid(4, 4);
        let f = generate_channelized(&g, 1e4, 2, &ChannelsSpec::random(4, 4)).unwrap();
        let p = partition_continua(&g, &f, PartitionMode::Single, None).unwrap();
        for i in 0..2 {
            for j in 0..g.n_coarse_cells() {
                assert_eq!(p.label_count(i, j), 1);
                assert_eq!(p.cell_count(i, j, 0), 16);
                assert!((p.area(i, j, 0) - g.coarse_h() * g.coarse_h()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_channelized_has_single_label() {
        let g = grid(3, 3);
        let f = MediaField::uniform(&g, 1.0, 1.0, 1.0).unwrap();
        let p = partition_continua(&g, &f, PartitionMode::Channelized, Some(100.0)).unwrap();
        for j in 0..g.n_coarse_cells() {
            assert_eq!(p.label_count(0, j), 1);
        }
    }

    #[test]
    fn one_straight_channel_gives_two_labels() {
        let g = grid(1, 8);
        let spec = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 3,
                    col0: 0,
                    row1: 3,
                    col1: 7,
                }]),
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 0,
                    col0: 0,
                    row1: 0,
                    col1: 0,
                }]),
            ],
        };
        let f = generate_channelized(&g, 1e4, 1, &spec).unwrap();
        let p = partition_continua(&g, &f, PartitionMode::Channelized, None).unwrap();
        assert_eq!(p.label_count(0, 0), 2);
        assert_eq!(p.cell_count(0, 0, 0), 8);
        assert_eq!(p.cell_count(0, 0, 1), 56);
        // channel sub-region holds exactly row 3
        assert_eq!(p.support_cells(0, 0, 0), (24..32).collect::<Vec<_>>());
    }

    #[test]
    fn two_disjoint_segments_give_three_labels() {
        let g = grid(1, 8);
        let spec = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![
                    ChannelShape::Rect {
                        row0: 1,
                        col0: 0,
                        row1: 1,
                        col1: 7,
                    },
                    ChannelShape::Rect {
                        row0: 5,
                        col0: 2,
                        row1: 6,
                        col1: 4,
                    },
                ]),
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 0,
                    col0: 0,
                    row1: 0,
                    col1: 0,
                }]),
            ],
        };
        let f = generate_channelized(&g, 1e4, 1, &spec).unwrap();
        let p = partition_continua(&g, &f, PartitionMode::Channelized, None).unwrap();
        assert_eq!(p.label_count(0, 0), 3);
        // labels ordered by smallest cell: row-1 channel first
        assert_eq!(p.cell_count(0, 0, 0), 8);
        assert_eq!(p.cell_count(0, 0, 1), 6);
        assert_eq!(p.cell_count(0, 0, 2), 64 - 14);
    }

    #[test]
    fn partition_counts_sum_to_block_size() {
        let g = grid(4, 8);
        let f = generate_channelized(&g, 1e4, 17, &ChannelsSpec::random(8, 8)).unwrap();
        let p = partition_continua(&g, &f, PartitionMode::Channelized, None).unwrap();
        for i in 0..2 {
            for j in 0..g.n_coarse_cells() {
                let total: usize = (0..p.label_count(i, j)).map(|l| p.cell_count(i, j, l)).sum();
                assert_eq!(total, 64);
                for l in 0..p.label_count(i, j) {
                    assert!(p.cell_count(i, j, l) > 0, "empty sub-region ({i},{j},{l})");
                    assert_eq!(p.support_cells(i, j, l).len(), p.cell_count(i, j, l));
                }
            }
        }
    }

    #[test]
    fn all_channel_block_keeps_sub_regions_nonempty() {
        // block 0 fully covered by channel: L = 1, not 2
        let g = grid(2, 2);
        let spec = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 0,
                    col0: 0,
                    row1: 1,
                    col1: 1,
                }]),
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 0,
                    col0: 0,
                    row1: 0,
                    col1: 0,
                }]),
            ],
        };
        let f = generate_channelized(&g, 1e4, 1, &spec).unwrap();
        let p = partition_continua(&g, &f, PartitionMode::Channelized, None).unwrap();
        assert_eq!(p.label_count(0, 0), 1);
        assert_eq!(p.cell_count(0, 0, 0), 4);
    }

    /// Independent recursive flood fill over an explicit 2-D array.
    fn flood_fill_components(n: usize, high: &[bool], r0: usize, c0: usize, rows: usize) -> usize {
        fn fill(
            seen: &mut Vec<Vec<bool>>,
            high: &dyn Fn(usize, usize) -> bool,
            inside: &dyn Fn(usize, usize) -> bool,
            r: usize,
            c: usize,
        ) {
            if seen[r][c] {
                return;
            }
            seen[r][c] = true;
            let neighbors = [
                (r.wrapping_sub(1), c),
                (r + 1, c),
                (r, c.wrapping_sub(1)),
                (r, c + 1),
            ];
            for (nr, nc) in neighbors {
                if inside(nr, nc) && high(nr, nc) && !seen[nr][nc] {
                    fill(seen, high, inside, nr, nc);
                }
            }
        }
        let mut seen = vec![vec![false; n]; n];
        let inside = |r: usize, c: usize| r >= r0 && r < r0 + rows && c >= c0 && c < c0 + rows;
        let is_high = |r: usize, c: usize| high[r * n + c];
        let mut count = 0;
        for r in r0..r0 + rows {
            for c in c0..c0 + rows {
                if is_high(r, c) && !seen[r][c] {
                    count += 1;
                    fill(&mut seen, &is_high, &inside, r, c);
                }
            }
        }
        count
    }

    #[test]
    fn channelized_labels_match_flood_fill_oracle() {
        for seed in 0..6 {
            let g = grid(3, 6);
            let f = generate_channelized(&g, 1e4, seed, &ChannelsSpec::random(6, 6)).unwrap();
            let p = partition_continua(&g, &f, PartitionMode::Channelized, None).unwrap();
            let n = g.n_fine();
            for i in 0..2 {
                let high: Vec<bool> = f.kappa(i).iter().map(|&k| k >= 100.0).collect();
                for j in 0..g.n_coarse_cells() {
                    let (br, bc) = g.coarse_row_col(j);
                    let comps =
                        flood_fill_components(n, &high, br * g.refine(), bc * g.refine(), g.refine());
                    let block_cells = g.refine() * g.refine();
                    let high_cells = g
                        .fine_cells_of_coarse(j)
                        .filter(|&cell| high[cell])
                        .count();
                    let expect = if comps == 0 {
                        1
                    } else if high_cells == block_cells {
                        comps
                    } else {
                        comps + 1
                    };
                    assert_eq!(p.label_count(i, j), expect, "continuum {i} block {j}");
                }
            }
        }
    }

    #[test]
    fn partition_is_function_of_the_field_only() {
        // different seeds that paint the same mask give identical partitions
        let g = grid(2, 4);
        let shape = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 2,
                    col0: 0,
                    row1: 2,
                    col1: 7,
                }]),
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 5,
                    col0: 3,
                    row1: 5,
                    col1: 4,
                }]),
            ],
        };
        let a = generate_channelized(&g, 1e4, 1, &shape).unwrap();
        let b = generate_channelized(&g, 1e4, 999, &shape).unwrap();
        assert_eq!(a, b);
        let pa = partition_continua(&g, &a, PartitionMode::Channelized, None).unwrap();
        let pb = partition_continua(&g, &b, PartitionMode::Channelized, None).unwrap();
        assert_eq!(pa, pb);
    }
}
