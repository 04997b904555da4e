//! Auxiliary constraint basis, its projection, and the constrained
//! energy-minimizing multiscale basis solves on oversampling regions.
//!
//! One auxiliary degree of freedom α = (continuum i, block j, sub-region l)
//! carries the area-normalized indicator χ_α = 𝟙/|K_l|. A multiscale basis for
//! α minimizes the coupled energy over its oversampling region subject to
//! (ψ·e_{i′}, χ_{α′}) = δ_{αα′} for every auxiliary dof α′ in the region; the
//! Lagrange multipliers are the non-local transfer coefficients.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::finescale::{assemble_aq, GridFunction};
use crate::grid::{GridPair, OversampleRegion};
use crate::linalg::{solve_saddle, CooBuilder, CsrMatrix, SolverOpts};
use crate::media::{ContinuumPartition, MediaField};

/// Identity of an auxiliary degree of freedom.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuxDof {
    pub continuum: usize,
    pub block: usize,
    pub label: usize,
}

/// All auxiliary dofs with flat indexing, supports, and areas.
///
/// Flat order is continuum-major, then block ascending, then label ascending;
/// this fixes the coarse matrix layout bit-exactly.
#[derive(Clone, Debug)]
pub struct AuxiliaryBasisSet {
    grid: GridPair,
    dofs: Vec<AuxDof>,
    /// Global fine cells per dof, ascending.
    supports: Vec<Vec<usize>>,
    areas: Vec<f64>,
    /// Per continuum, per block: first flat index of the block's dofs.
    block_start: [Vec<usize>; 2],
    label_counts: [Vec<usize>; 2],
}

impl AuxiliaryBasisSet {
    /// Number of dofs N_aux = Σ_j (L₁ + L₂).
    pub fn len(&self) -> usize {
        self.dofs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dofs.is_empty()
    }

    pub fn grid(&self) -> &GridPair {
        &self.grid
    }

    pub fn dof(&self, flat: usize) -> AuxDof {
        self.dofs[flat]
    }

    pub fn flat_index(&self, i: usize, j: usize, l: usize) -> usize {
        debug_assert!(l < self.label_counts[i][j]);
        self.block_start[i][j] + l
    }

    /// χ value on the support: 1/area.
    pub fn value(&self, flat: usize) -> f64 {
        1.0 / self.areas[flat]
    }

    pub fn area(&self, flat: usize) -> f64 {
        self.areas[flat]
    }

    pub fn support(&self, flat: usize) -> &[usize] {
        &self.supports[flat]
    }

    pub fn label_count(&self, i: usize, j: usize) -> usize {
        self.label_counts[i][j]
    }

    /// Flat indices of all dofs whose block lies in `region`, in flat order.
    pub fn region_dofs(&self, region: &OversampleRegion) -> Vec<usize> {
        let mut out = Vec::new();
        for i in 0..2 {
            for j in region.coarse_cells() {
                let start = self.block_start[i][j];
                out.extend(start..start + self.label_counts[i][j]);
            }
        }
        out
    }
}

/// One area-normalized indicator per partition sub-region.
pub fn build_auxiliary(grid: &GridPair, partition: &ContinuumPartition) -> Result<AuxiliaryBasisSet> {
    if partition.n_blocks() != grid.n_coarse_cells() {
        return Err(Error::Shape(format!(
            "partition has {} blocks, grid wants {}",
            partition.n_blocks(),
            grid.n_coarse_cells()
        )));
    }
    let n_blocks = grid.n_coarse_cells();
    let mut dofs = Vec::new();
    let mut supports = Vec::new();
    let mut areas = Vec::new();
    let mut block_start: [Vec<usize>; 2] = [Vec::with_capacity(n_blocks), Vec::with_capacity(n_blocks)];
    let mut label_counts: [Vec<usize>; 2] = [Vec::with_capacity(n_blocks), Vec::with_capacity(n_blocks)];
    for i in 0..2 {
        for j in 0..n_blocks {
            block_start[i].push(dofs.len());
            let count = partition.label_count(i, j);
            label_counts[i].push(count);
            for l in 0..count {
                dofs.push(AuxDof {
                    continuum: i,
                    block: j,
                    label: l,
                });
                supports.push(partition.support_cells(i, j, l));
                areas.push(partition.area(i, j, l));
            }
        }
    }
    Ok(AuxiliaryBasisSet {
        grid: *grid,
        dofs,
        supports,
        areas,
        block_start,
        label_counts,
    })
}

/// Pair a domain function with every χ: coefficient_α = (v_{i_α}, χ_α), and
/// the reconstruction Σ_α coefficient_α·χ_α in the auxiliary space.
pub fn project_pi(
    grid: &GridPair,
    aux: &AuxiliaryBasisSet,
    v: &GridFunction,
) -> Result<(Vec<f64>, GridFunction)> {
    if v.n_cells() != grid.n_fine_cells() {
        return Err(Error::Shape(format!(
            "function has {} cells, grid wants {}",
            v.n_cells(),
            grid.n_fine_cells()
        )));
    }
    let h2 = grid.fine_h() * grid.fine_h();
    let mut coeffs = Vec::with_capacity(aux.len());
    let mut recon = GridFunction::zeros(grid.n_fine_cells());
    for alpha in 0..aux.len() {
        let dof = aux.dof(alpha);
        let value = aux.value(alpha);
        let mut acc = 0.0;
        for &cell in aux.support(alpha) {
            acc += v.value(dof.continuum, cell);
        }
        let coeff = acc * value * h2;
        coeffs.push(coeff);
        // the coefficient is the support mean, so the reconstruction is that
        // mean on the support, i.e. coeff times the unit indicator
        for &cell in aux.support(alpha) {
            recon.set(dof.continuum, cell, coeff);
        }
    }
    Ok((coeffs, recon))
}

/// A localized (or global) multiscale basis function.
#[derive(Clone, Debug)]
pub struct MultiscaleBasis {
    /// Flat auxiliary dof this basis represents.
    pub dof: usize,
    /// Oversampling layers used to build it.
    pub layers: usize,
    pub region: OversampleRegion,
    /// Values on the region; zero extension is implied outside.
    pub psi: GridFunction,
    /// Transfer coefficients (flat auxiliary dof, T̄), ascending dof, one per
    /// auxiliary dof in the region.
    pub transfer: Vec<(usize, f64)>,
    pub constraint_residual: f64,
    pub stationarity_residual: f64,
}

impl MultiscaleBasis {
    /// Zero-extend ψ to the whole domain.
    pub fn extended(&self, grid: &GridPair) -> GridFunction {
        let mut out = GridFunction::zeros(grid.n_fine_cells());
        let nc = self.region.n_fine_cells();
        for i in 0..2 {
            for (local, cell) in self.region.fine_cells().enumerate() {
                out.set(i, cell, self.psi.value(i, local));
            }
        }
        debug_assert_eq!(self.psi.n_cells(), nc);
        out
    }

    /// T̄ against one auxiliary dof, 0 if outside the region.
    pub fn transfer_to(&self, dof: usize) -> f64 {
        match self.transfer.binary_search_by_key(&dof, |&(d, _)| d) {
            Ok(i) => self.transfer[i].1,
            Err(_) => 0.0,
        }
    }
}

/// Constraint matrix rows (one per region dof) over region unknowns.
fn constraint_matrix(
    grid: &GridPair,
    aux: &AuxiliaryBasisSet,
    region: &OversampleRegion,
    region_dofs: &[usize],
) -> CsrMatrix {
    let nc = region.n_fine_cells();
    let h2 = grid.fine_h() * grid.fine_h();
    let mut b = CooBuilder::new(region_dofs.len(), 2 * nc);
    for (row, &alpha) in region_dofs.iter().enumerate() {
        let dof = aux.dof(alpha);
        let w = h2 * aux.value(alpha);
        for &cell in aux.support(alpha) {
            let local = region
                .local_index(cell)
                .expect("support lies inside its block, hence inside the region");
            b.add(row, dof.continuum * nc + local, w);
        }
    }
    b.build()
}

/// Build the multiscale basis for one dof on `m` oversampling layers.
pub fn build_ms_basis(
    grid: &GridPair,
    field: &MediaField,
    aux: &AuxiliaryBasisSet,
    dof: usize,
    m: usize,
    opts: &SolverOpts,
) -> Result<MultiscaleBasis> {
    if dof >= aux.len() {
        return Err(Error::Index(format!(
            "auxiliary dof {dof} of {}",
            aux.len()
        )));
    }
    let region = grid.oversample(aux.dof(dof).block, m)?;
    let a = assemble_aq(grid, field, &region)?;
    let region_dofs = aux.region_dofs(&region);
    let b = constraint_matrix(grid, aux, &region, &region_dofs);
    let target = region_dofs
        .binary_search(&dof)
        .unwrap_or_else(|_| panic!("target dof {dof} not in its own region"));
    let mut g = vec![0.0; region_dofs.len()];
    g[target] = 1.0;
    let f = vec![0.0; a.nrows()];
    let sol = solve_saddle(&a, &b, &f, &g, opts)?;
    let psi = GridFunction::from_flat(sol.primal, region.n_fine_cells())?;
    let transfer: Vec<(usize, f64)> = region_dofs
        .iter()
        .copied()
        .zip(sol.multipliers.iter().copied())
        .collect();
    Ok(MultiscaleBasis {
        dof,
        layers: m,
        region,
        psi,
        transfer,
        constraint_residual: sol.constraint_residual,
        stationarity_residual: sol.stationarity_residual,
    })
}

/// Build the global (whole-domain) basis for one dof.
pub fn build_global_basis(
    grid: &GridPair,
    field: &MediaField,
    aux: &AuxiliaryBasisSet,
    dof: usize,
    opts: &SolverOpts,
) -> Result<MultiscaleBasis> {
    build_ms_basis(grid, field, aux, dof, grid.n_coarse() - 1, opts)
}

/// A complete set of bases, one per auxiliary dof, in flat dof order.
#[derive(Clone, Debug)]
pub struct BasisCollection {
    pub layers: usize,
    pub bases: Vec<MultiscaleBasis>,
}

impl BasisCollection {
    pub fn max_constraint_residual(&self) -> f64 {
        self.bases
            .iter()
            .fold(0.0, |m, b| b.constraint_residual.max(m))
    }
}

/// Build every basis; results are independent of scheduling order.
pub fn build_all_ms_bases(
    grid: &GridPair,
    field: &MediaField,
    aux: &AuxiliaryBasisSet,
    m: usize,
    parallel: bool,
    opts: &SolverOpts,
) -> Result<BasisCollection> {
    let build = |dof: usize| build_ms_basis(grid, field, aux, dof, m, opts);
    let results: Vec<Result<MultiscaleBasis>> = if parallel {
        (0..aux.len()).into_par_iter().map(build).collect()
    } else {
        (0..aux.len()).map(build).collect()
    };
    let total = results.len();
    let mut bases = Vec::with_capacity(total);
    let mut failures = Vec::new();
    for (dof, r) in results.into_iter().enumerate() {
        match r {
            Ok(b) => bases.push(b),
            Err(e) => failures.push((dof, e.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(Error::BasisBatch { total, failures });
    }
    Ok(BasisCollection { layers: m, bases })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{
        generate_channelized, partition_continua, ChannelLayout, ChannelShape, ChannelsSpec,
        MediaField, PartitionMode,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_aux(grid: &GridPair, field: &MediaField) -> AuxiliaryBasisSet {
        let p = partition_continua(grid, field, PartitionMode::Single, None).unwrap();
        build_auxiliary(grid, &p).unwrap()
    }

    #[test]
    fn single_mode_values_and_count() {
        let g = GridPair::build(8, 4).unwrap();
        let f = MediaField::uniform(&g, 1.0, 1.0, 1.0).unwrap();
        let aux = single_aux(&g, &f);
        assert_eq!(aux.len(), 2 * 64);
        for alpha in 0..aux.len() {
            assert!((aux.value(alpha) - 64.0).abs() < 1e-12);
            // value × area = 1: the indicator integrates to one
            assert!((aux.value(alpha) * aux.area(alpha) - 1.0).abs() < 1e-12);
        }
        // continuum-major then block order
        assert_eq!(
            aux.dof(0),
            AuxDof {
                continuum: 0,
                block: 0,
                label: 0
            }
        );
        assert_eq!(
            aux.dof(64),
            AuxDof {
                continuum: 1,
                block: 0,
                label: 0
            }
        );
        assert_eq!(aux.flat_index(1, 3, 0), 67);
    }

    #[test]
    fn channelized_mode_splits_areas() {
        let g = GridPair::build(1, 8).unwrap();
        let spec = ChannelsSpec {
            continuum: [
                ChannelLayout::Shapes(vec![ChannelShape::Rect {
                    row0: 2,
                    col0: 0,
                    row1: 2,
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
        let field = generate_channelized(&g, 1e4, 1, &spec).unwrap();
        let p = partition_continua(&g, &field, PartitionMode::Channelized, None).unwrap();
        let aux = build_auxiliary(&g, &p).unwrap();
        // continuum 1: channel (8 cells) + matrix (56); continuum 2: 1 + 63
        assert_eq!(aux.len(), 4);
        let a0 = aux.flat_index(0, 0, 0);
        assert!((aux.area(a0) - 8.0 / 64.0).abs() < 1e-12);
        assert!((aux.value(a0) - 8.0).abs() < 1e-12);
        let a1 = aux.flat_index(0, 0, 1);
        assert!((aux.area(a1) - 56.0 / 64.0).abs() < 1e-12);
        // supports of same-continuum dofs are disjoint
        let s0 = aux.support(a0);
        let s1 = aux.support(a1);
        assert!(s0.iter().all(|c| !s1.contains(c)));
        assert_eq!(s0.len() + s1.len(), 64);
    }

    #[test]
    fn projection_recovers_blockwise_constants() {
        let g = GridPair::build(4, 2).unwrap();
        let f = MediaField::uniform(&g, 1.0, 1.0, 1.0).unwrap();
        let aux = single_aux(&g, &f);
        let n = g.n_fine_cells();
        let mut v = GridFunction::zeros(n);
        for cell in 0..n {
            let j = g.coarse_of_fine(cell);
            v.set(0, cell, j as f64);
            v.set(1, cell, -2.0 * j as f64);
        }
        let (coeffs, recon) = project_pi(&g, &aux, &v).unwrap();
        for alpha in 0..aux.len() {
            let d = aux.dof(alpha);
            let want = if d.continuum == 0 {
                d.block as f64
            } else {
                -2.0 * d.block as f64
            };
            assert!((coeffs[alpha] - want).abs() < 1e-12);
        }
        assert!(recon.sub(&v).norm_inf() < 1e-12);
    }

    #[test]
    fn projection_annihilates_zero_mean_functions() {
        let g = GridPair::build(2, 2).unwrap();
        let f = MediaField::uniform(&g, 1.0, 1.0, 1.0).unwrap();
        let aux = single_aux(&g, &f);
        let n = g.n_fine_cells();
        let mut v = GridFunction::zeros(n);
        // alternate ±1 inside each 2×2 block
        for cell in 0..n {
            let (r, c) = g.fine_row_col(cell);
            let sign = if (r + c) % 2 == 0 { 1.0 } else { -1.0 };
            v.set(0, cell, sign);
            v.set(1, cell, -sign);
        }
        let (coeffs, recon) = project_pi(&g, &aux, &v).unwrap();
        assert!(coeffs.iter().all(|c| c.abs() < 1e-14));
        assert_eq!(recon.norm_inf(), 0.0);
    }

    #[test]
    fn projection_matches_direct_pairing_sums() {
        let g = GridPair::build(3, 4).unwrap();
        let field = generate_channelized(&g, 1e4, 3, &ChannelsSpec::random(3, 3)).unwrap();
        let p = partition_continua(&g, &field, PartitionMode::Channelized, None).unwrap();
        let aux = build_auxiliary(&g, &p).unwrap();
        let n = g.n_fine_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let v = GridFunction::from_flat((0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect(), n)
            .unwrap();
        let (coeffs, _) = project_pi(&g, &aux, &v).unwrap();
        let h2 = g.fine_h() * g.fine_h();
        for alpha in 0..aux.len() {
            let d = aux.dof(alpha);
            let mut want = 0.0;
            for &cell in aux.support(alpha) {
                want += v.value(d.continuum, cell) * aux.value(alpha) * h2;
            }
            assert!((coeffs[alpha] - want).abs() < 1e-13);
        }
    }

    #[test]
    fn region_dofs_are_flat_sorted() {
        let g = GridPair::build(4, 2).unwrap();
        let f = MediaField::uniform(&g, 1.0, 1.0, 1.0).unwrap();
        let aux = single_aux(&g, &f);
        let region = g.oversample(g.coarse_index(1, 1), 1).unwrap();
        let dofs = aux.region_dofs(&region);
        assert_eq!(dofs.len(), 2 * 9);
        assert!(dofs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn basis_satisfies_kronecker_constraints() {
        let g = GridPair::build(4, 4).unwrap();
        let field = generate_channelized(&g, 1e4, 5, &ChannelsSpec::random(3, 3)).unwrap();
        let aux = single_aux(&g, &field);
        let opts = SolverOpts::default();
        let dof = aux.flat_index(0, g.coarse_index(1, 2), 0);
        let basis = build_ms_basis(&g, &field, &aux, dof, 1, &opts).unwrap();
        assert!(basis.constraint_residual <= 1e-9);
        // pair the extension against every auxiliary dof in the whole domain
        let ext = basis.extended(&g);
        let (coeffs, _) = project_pi(&g, &aux, &ext).unwrap();
        for alpha in 0..aux.len() {
            let want = if alpha == dof { 1.0 } else { 0.0 };
            assert!(
                (coeffs[alpha] - want).abs() < 1e-9,
                "alpha {alpha}: {}",
                coeffs[alpha]
            );
        }
    }

    #[test]
    fn zero_exchange_keeps_other_continuum_zero() {
        let g = GridPair::build(3, 4).unwrap();
        let mut field = generate_channelized(&g, 100.0, 7, &ChannelsSpec::random(2, 2)).unwrap();
        field.set_uniform_sigma(0.0).unwrap();
        let aux = single_aux(&g, &field);
        let dof = aux.flat_index(0, 4, 0);
        let basis = build_ms_basis(&g, &field, &aux, dof, 1, &SolverOpts::default()).unwrap();
        let nc = basis.region.n_fine_cells();
        for local in 0..nc {
            assert!(basis.psi.value(1, local).abs() < 1e-12);
        }
    }

    #[test]
    fn covering_layers_equal_global_basis() {
        let g = GridPair::build(3, 3).unwrap();
        let field = generate_channelized(&g, 1e3, 11, &ChannelsSpec::random(2, 2)).unwrap();
        let aux = single_aux(&g, &field);
        let opts = SolverOpts::default();
        let dof = aux.flat_index(1, 4, 0);
        let local = build_ms_basis(&g, &field, &aux, dof, 2, &opts).unwrap();
        let global = build_global_basis(&g, &field, &aux, dof, &opts).unwrap();
        assert!(local.region.is_whole_domain());
        assert!(global.region.is_whole_domain());
        let gap = local.extended(&g).sub(&global.extended(&g)).norm_inf();
        assert!(gap < 1e-10, "gap {gap:.3e}");
        for (a, b) in local.transfer.iter().zip(&global.transfer) {
            assert_eq!(a.0, b.0);
            assert!((a.1 - b.1).abs() < 1e-8 * b.1.abs().max(1.0));
        }
    }

    #[test]
    fn single_coarse_cell_any_layers_coincide() {
        let g = GridPair::build(1, 6).unwrap();
        let field = generate_channelized(&g, 100.0, 2, &ChannelsSpec::random(2, 2)).unwrap();
        let aux = single_aux(&g, &field);
        let opts = SolverOpts::default();
        let a = build_ms_basis(&g, &field, &aux, 0, 0, &opts).unwrap();
        let b = build_global_basis(&g, &field, &aux, 0, &opts).unwrap();
        let gap = a.extended(&g).sub(&b.extended(&g)).norm_inf();
        assert!(gap < 1e-12);
    }

    #[test]
    fn energy_minimality_against_constraint_null_perturbations() {
        let g = GridPair::build(3, 3).unwrap();
        let field = generate_channelized(&g, 1e3, 17, &ChannelsSpec::random(2, 2)).unwrap();
        let aux = single_aux(&g, &field);
        let opts = SolverOpts::default();
        let dof = aux.flat_index(0, 4, 0);
        let basis = build_ms_basis(&g, &field, &aux, dof, 1, &opts).unwrap();
        let region = &basis.region;
        let a = assemble_aq(&g, &field, region).unwrap();
        let region_dofs = aux.region_dofs(region);
        let b = constraint_matrix(&g, &aux, region, &region_dofs);
        let nc = region.n_fine_cells();
        let energy = a.quadratic(basis.psi.flat());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            // random vector, projected onto the constraint null space by
            // subtracting blockwise means per sub-region
            let raw: Vec<f64> = (0..2 * nc).map(|_| rng.random_range(-1.0..1.0)).collect();
            let bv = b.matvec(&raw);
            let mut delta = raw;
            for (row, &alpha) in region_dofs.iter().enumerate() {
                let d = aux.dof(alpha);
                let cells = aux.support(alpha).len() as f64;
                let mean = bv[row] / (g.fine_h() * g.fine_h() * aux.value(alpha)) / cells;
                for &cell in aux.support(alpha) {
                    let local = region.local_index(cell).unwrap();
                    delta[d.continuum * nc + local] -= mean;
                }
            }
            let check = b.matvec(&delta);
            assert!(crate::linalg::norm_inf(&check) < 1e-12);
            let mut perturbed = basis.psi.flat().to_vec();
            for (p, d) in perturbed.iter_mut().zip(&delta) {
                *p += d;
            }
            assert!(a.quadratic(&perturbed) >= energy * (1.0 - 1e-10));
        }
    }

    #[test]
    fn batch_build_is_complete_and_order_independent() {
        let g = GridPair::build(4, 2).unwrap();
        let field = generate_channelized(&g, 1e3, 19, &ChannelsSpec::random(2, 2)).unwrap();
        let aux = single_aux(&g, &field);
        let opts = SolverOpts::default();
        let serial = build_all_ms_bases(&g, &field, &aux, 1, false, &opts).unwrap();
        let parallel = build_all_ms_bases(&g, &field, &aux, 1, true, &opts).unwrap();
        assert_eq!(serial.bases.len(), 32);
        assert!(serial.max_constraint_residual() <= 1e-9);
        for (s, p) in serial.bases.iter().zip(&parallel.bases) {
            assert_eq!(s.dof, p.dof);
            assert_eq!(s.psi, p.psi, "bitwise identical values");
            assert_eq!(s.transfer, p.transfer);
        }
    }

    #[test]
    fn localization_gap_shrinks_with_layers() {
        let g = GridPair::build(6, 2).unwrap();
        let field = generate_channelized(&g, 1e3, 23, &ChannelsSpec::random(2, 2)).unwrap();
        let aux = single_aux(&g, &field);
        let opts = SolverOpts::default();
        let dof = aux.flat_index(0, 0, 0);
        let global = build_global_basis(&g, &field, &aux, dof, &opts)
            .unwrap()
            .extended(&g);
        let domain = g.domain_region();
        let a = assemble_aq(&g, &field, &domain).unwrap();
        let mut gaps = Vec::new();
        for m in 1..=4 {
            let local = build_ms_basis(&g, &field, &aux, dof, m, &opts)
                .unwrap()
                .extended(&g);
            let diff = local.sub(&global);
            gaps.push(a.quadratic(diff.flat()).sqrt());
        }
        for w in gaps.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10), "gaps {gaps:?}");
        }
        assert!(gaps[3] < 0.5 * gaps[0], "gaps {gaps:?}");
    }

    #[test]
    fn batch_reports_failures_with_dof_identities() {
        let g = GridPair::build(2, 2).unwrap();
        let field = MediaField::uniform(&g, 1.0, 1.0, 1.0).unwrap();
        let aux = single_aux(&g, &field);
        // impossible tolerance forces every dof to fail
        let opts = SolverOpts {
            tol_constraint: 1e-30,
            tol_stationarity: 1e-30,
            ..SolverOpts::default()
        };
        let err = build_all_ms_bases(&g, &field, &aux, 1, false, &opts).unwrap_err();
        match err {
            Error::BasisBatch { total, failures } => {
                assert_eq!(total, 8);
                assert!(!failures.is_empty());
                assert_eq!(failures[0].0, 0);
            }
            other => panic!("wrong error {other:?}"),
        }
    }
}
