//! Fine-grid realization of the dual-continuum forms and the reference solvers.
//!
//! Discretization: cell-centered two-point flux finite volumes on the uniform
//! fine grid. Unknown ordering for any region is all continuum-1 cells then
//! all continuum-2 cells, each in region-local order, so an operator on a
//! region with `nc` cells has dimension `2·nc` and dof (i, local) = i·nc+local.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{face_list, GridPair, OversampleRegion};
use crate::io;
use crate::linalg::{CooBuilder, CsrMatrix, SolverOpts, SolveStats, SpdSolver};
use crate::media::MediaField;

/// Two per-cell value arrays (one per continuum) over a region or the domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    n_cells: usize,
    data: Vec<f64>,
}

impl GridFunction {
    pub fn zeros(n_cells: usize) -> GridFunction {
        GridFunction {
            n_cells,
            data: vec![0.0; 2 * n_cells],
        }
    }

    /// Wrap a flat `[p₁ | p₂]` vector.
    pub fn from_flat(data: Vec<f64>, n_cells: usize) -> Result<GridFunction> {
        if data.len() != 2 * n_cells {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, want {}",
                data.len(),
                2 * n_cells
            )));
        }
        Ok(GridFunction { n_cells, data })
    }

    pub fn from_parts(p1: Vec<f64>, p2: Vec<f64>) -> Result<GridFunction> {
        if p1.len() != p2.len() {
            return Err(Error::Shape(format!(
                "continuum sizes differ: {} vs {}",
                p1.len(),
                p2.len()
            )));
        }
        let n_cells = p1.len();
        let mut data = p1;
        data.extend(p2);
        Ok(GridFunction { n_cells, data })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn flat(&self) -> &[f64] {
        &self.data
    }

    pub fn flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Values of continuum `i` ∈ {0, 1}.
    pub fn continuum(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cells..(i + 1) * self.n_cells]
    }

    pub fn value(&self, i: usize, cell: usize) -> f64 {
        self.data[i * self.n_cells + cell]
    }

    pub fn set(&mut self, i: usize, cell: usize, v: f64) {
        self.data[i * self.n_cells + cell] = v;
    }

    /// self ← self + α·other.
    pub fn axpy(&mut self, alpha: f64, other: &GridFunction) {
        assert_eq!(self.n_cells, other.n_cells);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scaled(&self, alpha: f64) -> GridFunction {
        GridFunction {
            n_cells: self.n_cells,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    pub fn sub(&self, other: &GridFunction) -> GridFunction {
        assert_eq!(self.n_cells, other.n_cells);
        GridFunction {
            n_cells: self.n_cells,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn norm_inf(&self) -> f64 {
        crate::linalg::norm_inf(&self.data)
    }
}

fn check_region(grid: &GridPair, field: &MediaField, region: &OversampleRegion) -> Result<()> {
    if field.n_fine() != grid.n_fine() {
        return Err(Error::Shape(format!(
            "field is {0}×{0}, grid wants {1}×{1}",
            field.n_fine(),
            grid.n_fine()
        )));
    }
    if region.n_fine_cells() == 0 {
        return Err(Error::Grid("empty region".into()));
    }
    Ok(())
}

/// Assemble the coupled diffusion + exchange operator on a region, with zero
/// Dirichlet data on the entire region boundary.
///
/// Per continuum: interior faces get the harmonic transmissibility
/// 2·κ(a)·κ(b)/(κ(a)+κ(b)); region-boundary faces (including where the region
/// touches ∂Ω) get the half-cell closure 2·κ(cell) on the diagonal. The
/// exchange adds ±σ(cell)·h² coupling the two continua cellwise. The result is
/// symmetric positive definite.
pub fn assemble_aq(
    grid: &GridPair,
    field: &MediaField,
    region: &OversampleRegion,
) -> Result<CsrMatrix> {
    check_region(grid, field, region)?;
    let nc = region.n_fine_cells();
    let h = grid.fine_h();
    let faces = face_list(grid, region);
    let mut b = CooBuilder::with_capacity(2 * nc, 2 * nc, 8 * nc + 8 * faces.interior.len());
    for i in 0..2 {
        let kappa = field.kappa(i);
        let offset = i * nc;
        for &(ga, gb) in &faces.interior {
            let la = region.local_index(ga).expect("face cell in region") + offset;
            let lb = region.local_index(gb).expect("face cell in region") + offset;
            let (ka, kb) = (kappa[ga], kappa[gb]);
            let t = 2.0 * ka * kb / (ka + kb);
            b.add(la, la, t);
            b.add(lb, lb, t);
            b.add(la, lb, -t);
            b.add(lb, la, -t);
        }
        for &(cell, _side) in &faces.boundary {
            let l = region.local_index(cell).expect("boundary cell in region") + offset;
            b.add(l, l, 2.0 * kappa[cell]);
        }
    }
    let sigma = field.sigma();
    let h2 = h * h;
    for (local, cell) in region.fine_cells().enumerate() {
        let s = sigma[cell] * h2;
        if s != 0.0 {
            b.add(local, local, s);
            b.add(nc + local, nc + local, s);
            b.add(local, nc + local, -s);
            b.add(nc + local, local, -s);
        }
    }
    Ok(b.build())
}

/// Per-dof entries of the diagonal mass matrix: c_i(cell)·h².
pub fn mass_diagonal(
    grid: &GridPair,
    field: &MediaField,
    region: &OversampleRegion,
) -> Result<Vec<f64>> {
    check_region(grid, field, region)?;
    let nc = region.n_fine_cells();
    let h2 = grid.fine_h() * grid.fine_h();
    let mut diag = vec![0.0; 2 * nc];
    for i in 0..2 {
        let c = field.compressibility(i);
        for (local, cell) in region.fine_cells().enumerate() {
            diag[i * nc + local] = c[cell] * h2;
        }
    }
    Ok(diag)
}

/// The mass matrix as a sparse operator (exactly diagonal for cellwise data).
pub fn assemble_mass(
    grid: &GridPair,
    field: &MediaField,
    region: &OversampleRegion,
) -> Result<CsrMatrix> {
    Ok(CsrMatrix::from_diagonal(&mass_diagonal(
        grid, field, region,
    )?))
}

/// Load vector of a source on a region: entries f_i(cell)·h² in dof order.
pub fn load_vector(
    grid: &GridPair,
    f: &GridFunction,
    region: &OversampleRegion,
) -> Result<Vec<f64>> {
    if f.n_cells() != grid.n_fine_cells() {
        return Err(Error::Shape(format!(
            "source has {} cells, grid wants {}",
            f.n_cells(),
            grid.n_fine_cells()
        )));
    }
    let nc = region.n_fine_cells();
    let h2 = grid.fine_h() * grid.fine_h();
    let mut rhs = vec![0.0; 2 * nc];
    for i in 0..2 {
        for (local, cell) in region.fine_cells().enumerate() {
            rhs[i * nc + local] = f.value(i, cell) * h2;
        }
    }
    Ok(rhs)
}

/// L² pairing Σ_cells (u₁v₁ + u₂v₂)·h² of two functions on the same region.
pub fn l2_pair(
    grid: &GridPair,
    u: &GridFunction,
    v: &GridFunction,
    region: &OversampleRegion,
) -> Result<f64> {
    if u.n_cells() != region.n_fine_cells() || v.n_cells() != region.n_fine_cells() {
        return Err(Error::Shape(format!(
            "pairing over {} cells got functions with {} and {}",
            region.n_fine_cells(),
            u.n_cells(),
            v.n_cells()
        )));
    }
    let h2 = grid.fine_h() * grid.fine_h();
    let mut acc = 0.0;
    for (a, b) in u.flat().iter().zip(v.flat()) {
        acc += a * b;
    }
    Ok(acc * h2)
}

/// Steady-state reference solve on the whole domain.
pub fn solve_static_fine(
    grid: &GridPair,
    field: &MediaField,
    f: &GridFunction,
    opts: &SolverOpts,
) -> Result<(GridFunction, SolveStats)> {
    let region = grid.domain_region();
    let a = assemble_aq(grid, field, &region)?;
    let rhs = load_vector(grid, f, &region)?;
    let solver = SpdSolver::fine(&a, opts)?;
    let (x, stats) = solver.solve(&rhs)?;
    Ok((GridFunction::from_flat(x, region.n_fine_cells())?, stats))
}

/// Backward-Euler time series, including the initial state at t = 0.
#[derive(Clone, Debug)]
pub struct TransientSeries {
    pub times: Vec<f64>,
    pub states: Vec<GridFunction>,
}

impl TransientSeries {
    pub fn final_state(&self) -> &GridFunction {
        self.states.last().expect("series never empty")
    }
}

/// Backward Euler on (M/dt + A_Q)·pⁿ⁺¹ = (M/dt)·pⁿ + load(f(tⁿ⁺¹)).
///
/// `t_final` must be an integer number of steps; the factorization is reused
/// across steps.
pub fn solve_transient_fine(
    grid: &GridPair,
    field: &MediaField,
    f: impl Fn(f64) -> GridFunction,
    p0: &GridFunction,
    dt: f64,
    t_final: f64,
    opts: &SolverOpts,
) -> Result<TransientSeries> {
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(Error::Config(format!(
            "time stepping needs dt > 0 and T > 0, got dt={dt}, T={t_final}"
        )));
    }
    let n_steps = (t_final / dt).round() as usize;
    if n_steps == 0 || (n_steps as f64 * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(Error::Config(format!(
            "T = {t_final} is not an integer number of dt = {dt} steps"
        )));
    }
    let region = grid.domain_region();
    let nc = region.n_fine_cells();
    if p0.n_cells() != nc {
        return Err(Error::Shape(format!(
            "initial state has {} cells, grid wants {nc}",
            p0.n_cells()
        )));
    }
    let a = assemble_aq(grid, field, &region)?;
    let m_diag = mass_diagonal(grid, field, &region)?;
    let m_over_dt = CsrMatrix::from_diagonal(
        &m_diag.iter().map(|&d| d / dt).collect::<Vec<_>>(),
    );
    let system = CsrMatrix::linear_combination(1.0, &a, 1.0, &m_over_dt);
    let solver = SpdSolver::fine(&system, opts)?;
    let mut times = vec![0.0];
    let mut states = vec![p0.clone()];
    let mut current = p0.flat().to_vec();
    for step in 1..=n_steps {
        let t = step as f64 * dt;
        let mut rhs = load_vector(grid, &f(t), &region)?;
        for ((r, &m), &p) in rhs.iter_mut().zip(&m_diag).zip(&current) {
            *r += m / dt * p;
        }
        let (next, _) = solver.solve_with_guess(&rhs, Some(&current))?;
        current = next;
        times.push(t);
        states.push(GridFunction::from_flat(current.clone(), nc)?);
    }
    Ok(TransientSeries { times, states })
}

/// Write a grid function as two stacked matrices (one per continuum), using
/// the media matrix format.
pub fn save_grid_function(fun: &GridFunction, n_side: usize, path: &Path) -> Result<()> {
    if fun.n_cells() != n_side * n_side {
        return Err(Error::Shape(format!(
            "function has {} cells, want {n_side}×{n_side}",
            fun.n_cells()
        )));
    }
    let mut text = io::format_matrix(n_side, n_side, fun.continuum(0));
    text.push_str(&io::format_matrix(n_side, n_side, fun.continuum(1)));
    io::write_file(path, &text)
}

/// Read back a two-block grid-function dump.
pub fn load_grid_function(path: &Path) -> Result<GridFunction> {
    let text = io::read_to_string(path)?;
    let mut lines = text.lines();
    let (r1, c1, p1) = io::parse_matrix_lines(&mut lines, path)?;
    let (r2, c2, p2) = io::parse_matrix_lines(&mut lines, path)?;
    if r1 != c1 || r2 != c2 || r1 != r2 {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            msg: format!("blocks must be equal squares, got {r1}×{c1} and {r2}×{c2}"),
        });
    }
    GridFunction::from_parts(p1, p2)
}
