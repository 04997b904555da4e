//! Coarse-scale Galerkin system over the multiscale basis: assembly by
//! pairing zero-extended bases through the global fine operator, static and
//! backward-Euler solves, downscaling, and CSV serialization.

use crate::basis::{AuxiliaryBasisSet, BasisCollection};
use crate::error::{Error, Result};
use crate::finescale::{assemble_aq, mass_diagonal, GridFunction};
use crate::grid::GridPair;
use crate::linalg::{CooBuilder, CsrMatrix, SolveStats, SolverOpts, SpdSolver};
use crate::media::MediaField;

/// Coarse mass matrix variant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MassKind {
    /// Full pairing c(ψ_α, ψ_β).
    Galerkin,
    /// Diagonal with the compressibility integrated over each auxiliary
    /// support.
    Lumped,
}

/// Assembled coarse operator and mass matrix over auxiliary dofs.
#[derive(Clone, Debug)]
pub struct CoarseSystem {
    grid: GridPair,
    n_dofs: usize,
    layers: usize,
    mass_kind: MassKind,
    a_ms: CsrMatrix,
    m_ms: CsrMatrix,
}

impl CoarseSystem {
    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn mass_kind(&self) -> MassKind {
        self.mass_kind
    }

    pub fn a_ms(&self) -> &CsrMatrix {
        &self.a_ms
    }

    pub fn m_ms(&self) -> &CsrMatrix {
        &self.m_ms
    }

    pub fn grid(&self) -> &GridPair {
        &self.grid
    }
}

/// Coefficient vector of a coarse solve, one entry per auxiliary dof.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseSolution {
    pub coeffs: Vec<f64>,
    /// Time stamp for transient states, None for static solves.
    pub time: Option<f64>,
    /// Oversampling layers of the basis collection that produced it.
    pub layers: usize,
}

/// Backward-Euler coefficient trajectory, including the initial state.
#[derive(Clone, Debug)]
pub struct CoarseSeries {
    pub times: Vec<f64>,
    pub states: Vec<CoarseSolution>,
}

impl CoarseSeries {
    pub fn final_state(&self) -> &CoarseSolution {
        self.states.last().expect("series never empty")
    }
}

fn check_bases(aux: &AuxiliaryBasisSet, bases: &BasisCollection) -> Result<()> {
    if bases.bases.len() != aux.len() {
        return Err(Error::Shape(format!(
            "{} bases for {} auxiliary dofs",
            bases.bases.len(),
            aux.len()
        )));
    }
    for (k, b) in bases.bases.iter().enumerate() {
        if b.dof != k {
            return Err(Error::Index(format!(
                "basis at position {k} belongs to dof {}",
                b.dof
            )));
        }
        if b.psi.n_cells() != b.region.n_fine_cells() {
            return Err(Error::Shape(format!(
                "basis {k} has {} cells for a region of {}",
                b.psi.n_cells(),
                b.region.n_fine_cells()
            )));
        }
    }
    Ok(())
}

/// Per fine dof, the sorted list of bases supported there with their values.
struct Cover {
    start: Vec<usize>,
    dof: Vec<usize>,
    val: Vec<f64>,
}

fn build_cover(grid: &GridPair, bases: &BasisCollection) -> Result<Cover> {
    let n_f = grid.n_fine_cells();
    let n_rows = 2 * n_f;
    let mut counts = vec![0usize; n_rows];
    for b in &bases.bases {
        for cell in b.region.fine_cells() {
            if cell >= n_f {
                return Err(Error::Shape(format!(
                    "basis region cell {cell} outside a {n_f}-cell grid"
                )));
            }
            counts[cell] += 1;
            counts[n_f + cell] += 1;
        }
    }
    let mut start = vec![0usize; n_rows + 1];
    for r in 0..n_rows {
        start[r + 1] = start[r] + counts[r];
    }
    let total = start[n_rows];
    let mut dof = vec![0usize; total];
    let mut val = vec![0.0; total];
    let mut fill = start.clone();
    for (beta, b) in bases.bases.iter().enumerate() {
        for i in 0..2 {
            for (local, cell) in b.region.fine_cells().enumerate() {
                let r = i * n_f + cell;
                let p = fill[r];
                fill[r] = p + 1;
                dof[p] = beta;
                val[p] = b.psi.value(i, local);
            }
        }
    }
    Ok(Cover { start, dof, val })
}

/// Assemble A_ms[α,β] = a_Q(ψ̂_α, ψ̂_β) and the mass matrix by applying the
/// global fine operator to zero extensions. Entries are exactly zero only for
/// bases whose regions are separated by at least one fine cell; touching
/// regions still couple through their interface faces.
pub fn assemble_coarse(
    grid: &GridPair,
    field: &MediaField,
    aux: &AuxiliaryBasisSet,
    bases: &BasisCollection,
    mass_kind: MassKind,
) -> Result<CoarseSystem> {
    check_bases(aux, bases)?;
    let n_f = grid.n_fine_cells();
    let n_dofs = aux.len();
    let domain = grid.domain_region();
    let a_glob = assemble_aq(grid, field, &domain)?;
    let d_mass = mass_diagonal(grid, field, &domain)?;
    let cover = build_cover(grid, bases)?;

    let mut a_builder = CooBuilder::new(n_dofs, n_dofs);
    let mut m_builder = CooBuilder::new(n_dofs, n_dofs);
    let mut y = vec![0.0; 2 * n_f];
    let mut in_y = vec![false; 2 * n_f];
    let mut y_touched: Vec<usize> = Vec::new();
    let mut acc = vec![0.0; n_dofs];
    let mut in_acc = vec![false; n_dofs];
    let mut acc_touched: Vec<usize> = Vec::new();

    for (alpha, b) in bases.bases.iter().enumerate() {
        // y = A_glob · ψ̂_α over the dofs its operator image touches
        for i in 0..2 {
            for (local, cell) in b.region.fine_cells().enumerate() {
                let v = b.psi.value(i, local);
                if v == 0.0 {
                    continue;
                }
                let (cols, vals) = a_glob.row(i * n_f + cell);
                for (&c, &av) in cols.iter().zip(vals) {
                    if !in_y[c] {
                        in_y[c] = true;
                        y_touched.push(c);
                    }
                    y[c] += v * av;
                }
            }
        }
        // row α of A_ms: pair y with every basis supported where y lives
        for &r in &y_touched {
            let yv = y[r];
            for p in cover.start[r]..cover.start[r + 1] {
                let beta = cover.dof[p];
                if !in_acc[beta] {
                    in_acc[beta] = true;
                    acc_touched.push(beta);
                }
                acc[beta] += yv * cover.val[p];
            }
        }
        acc_touched.sort_unstable();
        for &beta in &acc_touched {
            a_builder.add(alpha, beta, acc[beta]);
            in_acc[beta] = false;
            acc[beta] = 0.0;
        }
        acc_touched.clear();
        for &r in &y_touched {
            in_y[r] = false;
            y[r] = 0.0;
        }
        y_touched.clear();

        if mass_kind == MassKind::Galerkin {
            // row α of M_ms lives on α's own support
            for i in 0..2 {
                for (local, cell) in b.region.fine_cells().enumerate() {
                    let v = b.psi.value(i, local);
                    if v == 0.0 {
                        continue;
                    }
                    let r = i * n_f + cell;
                    let w = d_mass[r] * v;
                    for p in cover.start[r]..cover.start[r + 1] {
                        let beta = cover.dof[p];
                        if !in_acc[beta] {
                            in_acc[beta] = true;
                            acc_touched.push(beta);
                        }
                        acc[beta] += w * cover.val[p];
                    }
                }
            }
            acc_touched.sort_unstable();
            for &beta in &acc_touched {
                m_builder.add(alpha, beta, acc[beta]);
                in_acc[beta] = false;
                acc[beta] = 0.0;
            }
            acc_touched.clear();
        }
    }

    let a_ms = a_builder.build().symmetrized();
    let m_ms = match mass_kind {
        MassKind::Galerkin => m_builder.build().symmetrized(),
        MassKind::Lumped => {
            let h2 = grid.fine_h() * grid.fine_h();
            let diag: Vec<f64> = (0..n_dofs)
                .map(|alpha| {
                    let i = aux.dof(alpha).continuum;
                    let c = field.compressibility(i);
                    aux.support(alpha).iter().map(|&k| c[k] * h2).sum()
                })
                .collect();
            CsrMatrix::from_diagonal(&diag)
        }
    };
    Ok(CoarseSystem {
        grid: *grid,
        n_dofs,
        layers: bases.layers,
        mass_kind,
        a_ms,
        m_ms,
    })
}

/// Coarse load F_β = (f, ψ̂_β) for a domain-sized source.
pub fn coarse_load(
    grid: &GridPair,
    bases: &BasisCollection,
    f: &GridFunction,
) -> Result<Vec<f64>> {
    if f.n_cells() != grid.n_fine_cells() {
        return Err(Error::Shape(format!(
            "source has {} cells, grid wants {}",
            f.n_cells(),
            grid.n_fine_cells()
        )));
    }
    let h2 = grid.fine_h() * grid.fine_h();
    let mut out = Vec::with_capacity(bases.bases.len());
    for b in &bases.bases {
        let mut acc = 0.0;
        for i in 0..2 {
            for (local, cell) in b.region.fine_cells().enumerate() {
                acc += f.value(i, cell) * b.psi.value(i, local);
            }
        }
        out.push(acc * h2);
    }
    Ok(out)
}

/// Solve A_ms u = F(f).
pub fn solve_coarse_static(
    system: &CoarseSystem,
    bases: &BasisCollection,
    f: &GridFunction,
    opts: &SolverOpts,
) -> Result<(CoarseSolution, SolveStats)> {
    let rhs = coarse_load(&system.grid, bases, f)?;
    if rhs.len() != system.n_dofs {
        return Err(Error::Shape(format!(
            "{} bases for a {}-dof system",
            rhs.len(),
            system.n_dofs
        )));
    }
    let solver = SpdSolver::coarse(&system.a_ms, opts)?;
    let (coeffs, stats) = solver.solve(&rhs)?;
    Ok((
        CoarseSolution {
            coeffs,
            time: None,
            layers: system.layers,
        },
        stats,
    ))
}

/// Backward Euler on (M_ms/dt + A_ms) uⁿ⁺¹ = (M_ms/dt) uⁿ + F(f(tⁿ⁺¹)).
///
/// The horizon must be an integer number of steps; the factorization is
/// reused across all of them.
pub fn solve_coarse_transient(
    system: &CoarseSystem,
    bases: &BasisCollection,
    f: impl Fn(f64) -> GridFunction,
    u0: &[f64],
    dt: f64,
    t_final: f64,
    opts: &SolverOpts,
) -> Result<CoarseSeries> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("time step {dt} must be positive")));
    }
    let steps_real = t_final / dt;
    let steps = steps_real.round() as usize;
    if steps == 0 || (steps as f64 * dt - t_final).abs() > 1e-9 * t_final.abs().max(dt) {
        return Err(Error::Config(format!(
            "horizon {t_final} is not an integer number of steps of {dt}"
        )));
    }
    if u0.len() != system.n_dofs {
        return Err(Error::Shape(format!(
            "initial state has {} entries for a {}-dof system",
            u0.len(),
            system.n_dofs
        )));
    }
    let stepper = CsrMatrix::linear_combination(1.0 / dt, &system.m_ms, 1.0, &system.a_ms);
    let solver = SpdSolver::coarse(&stepper, opts)?;
    let mut times = vec![0.0];
    let mut states = vec![CoarseSolution {
        coeffs: u0.to_vec(),
        time: Some(0.0),
        layers: system.layers,
    }];
    let mut current = u0.to_vec();
    for n in 1..=steps {
        let t = n as f64 * dt;
        let load = coarse_load(&system.grid, bases, &f(t))?;
        let mut rhs = system.m_ms.matvec(&current);
        for (r, l) in rhs.iter_mut().zip(&load) {
            *r = *r / dt + l;
        }
        let (next, _) = solver.solve_with_guess(&rhs, Some(&current))?;
        current = next;
        times.push(t);
        states.push(CoarseSolution {
            coeffs: current.clone(),
            time: Some(t),
            layers: system.layers,
        });
    }
    Ok(CoarseSeries { times, states })
}

/// Expand coefficients into the fine space: p_ms = Σ u_α ψ̂_α.
pub fn downscale(
    grid: &GridPair,
    bases: &BasisCollection,
    solution: &CoarseSolution,
) -> Result<GridFunction> {
    if solution.coeffs.len() != bases.bases.len() {
        return Err(Error::Shape(format!(
            "{} coefficients for {} bases",
            solution.coeffs.len(),
            bases.bases.len()
        )));
    }
    let n_f = grid.n_fine_cells();
    let mut out = GridFunction::zeros(n_f);
    for (b, &u) in bases.bases.iter().zip(&solution.coeffs) {
        if b.psi.n_cells() != b.region.n_fine_cells() {
            return Err(Error::Shape(format!(
                "basis {} has {} cells for a region of {}",
                b.dof,
                b.psi.n_cells(),
                b.region.n_fine_cells()
            )));
        }
        for i in 0..2 {
            for (local, cell) in b.region.fine_cells().enumerate() {
                let v = out.value(i, cell) + u * b.psi.value(i, local);
                out.set(i, cell, v);
            }
        }
    }
    Ok(out)
}

fn csv_identity(grid: &GridPair, aux: &AuxiliaryBasisSet, alpha: usize) -> String {
    let dof = aux.dof(alpha);
    let (row, col) = grid.coarse_row_col(dof.block);
    format!("{},{},{},{}", dof.continuum + 1, row, col, dof.label)
}

/// One CSV row per auxiliary dof in flat order; `time` column only for
/// transient states. Floats use the shortest exact decimal form.
pub fn solution_csv(grid: &GridPair, aux: &AuxiliaryBasisSet, sol: &CoarseSolution) -> String {
    let mut out = String::new();
    match sol.time {
        Some(t) => {
            out.push_str("continuum,block_row,block_col,sub_region,coefficient,time\n");
            for alpha in 0..aux.len() {
                out.push_str(&format!(
                    "{},{},{}\n",
                    csv_identity(grid, aux, alpha),
                    sol.coeffs[alpha],
                    t
                ));
            }
        }
        None => {
            out.push_str("continuum,block_row,block_col,sub_region,coefficient\n");
            for alpha in 0..aux.len() {
                out.push_str(&format!(
                    "{},{}\n",
                    csv_identity(grid, aux, alpha),
                    sol.coeffs[alpha]
                ));
            }
        }
    }
    out
}

/// Concatenated per-time blocks, each in flat dof order.
pub fn series_csv(grid: &GridPair, aux: &AuxiliaryBasisSet, series: &CoarseSeries) -> String {
    let mut out = String::from("continuum,block_row,block_col,sub_region,coefficient,time\n");
    for state in &series.states {
        let t = state.time.expect("transient states carry a time");
        for alpha in 0..aux.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                csv_identity(grid, aux, alpha),
                state.coeffs[alpha],
                t
            ));
        }
    }
    out
}

fn parse_row(
    grid: &GridPair,
    aux: &AuxiliaryBasisSet,
    alpha: usize,
    line: &str,
    want_time: bool,
) -> Result<(f64, Option<f64>)> {
    let fields: Vec<&str> = line.split(',').collect();
    let want_fields = if want_time { 6 } else { 5 };
    if fields.len() != want_fields {
        return Err(Error::Parse {
            path: "coarse csv".into(),
            msg: format!("row '{line}' has {} fields, want {want_fields}", fields.len()),
        });
    }
    let bad = |what: &str| Error::Parse {
        path: "coarse csv".into(),
        msg: format!("row '{line}': bad {what}"),
    };
    let continuum: usize = fields[0].parse().map_err(|_| bad("continuum"))?;
    let row: usize = fields[1].parse().map_err(|_| bad("block_row"))?;
    let col: usize = fields[2].parse().map_err(|_| bad("block_col"))?;
    let label: usize = fields[3].parse().map_err(|_| bad("sub_region"))?;
    let coeff: f64 = fields[4].parse().map_err(|_| bad("coefficient"))?;
    let time = if want_time {
        Some(fields[5].parse().map_err(|_| bad("time"))?)
    } else {
        None
    };
    let dof = aux.dof(alpha);
    let (want_row, want_col) = grid.coarse_row_col(dof.block);
    if continuum != dof.continuum + 1 || row != want_row || col != want_col || label != dof.label {
        return Err(Error::Parse {
            path: "coarse csv".into(),
            msg: format!("row '{line}' does not match dof {alpha} in flat order"),
        });
    }
    Ok((coeff, time))
}

/// Parse a static or single-time solution written by `solution_csv`.
pub fn parse_solution_csv(
    grid: &GridPair,
    aux: &AuxiliaryBasisSet,
    layers: usize,
    text: &str,
) -> Result<CoarseSolution> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let want_time = match header {
        "continuum,block_row,block_col,sub_region,coefficient" => false,
        "continuum,block_row,block_col,sub_region,coefficient,time" => true,
        other => {
            return Err(Error::Parse {
                path: "coarse csv".into(),
                msg: format!("unexpected header '{other}'"),
            })
        }
    };
    let mut coeffs = Vec::with_capacity(aux.len());
    let mut time = None;
    for alpha in 0..aux.len() {
        let line = lines.next().ok_or_else(|| Error::Parse {
            path: "coarse csv".into(),
            msg: format!("{} rows for {} dofs", alpha, aux.len()),
        })?;
        let (coeff, t) = parse_row(grid, aux, alpha, line, want_time)?;
        coeffs.push(coeff);
        if alpha == 0 {
            time = t;
        } else if t != time {
            return Err(Error::Parse {
                path: "coarse csv".into(),
                msg: "mixed time stamps in a single-solution file".into(),
            });
        }
    }
    if lines.next().is_some() {
        return Err(Error::Parse {
            path: "coarse csv".into(),
            msg: "trailing rows after the last dof".into(),
        });
    }
    Ok(CoarseSolution {
        coeffs,
        time,
        layers,
    })
}

/// Parse a trajectory written by `series_csv`.
pub fn parse_series_csv(
    grid: &GridPair,
    aux: &AuxiliaryBasisSet,
    layers: usize,
    text: &str,
) -> Result<CoarseSeries> {
    let mut lines = text.lines().peekable();
    let header = lines.next().unwrap_or("");
    if header != "continuum,block_row,block_col,sub_region,coefficient,time" {
        return Err(Error::Parse {
            path: "coarse csv".into(),
            msg: format!("unexpected header '{header}'"),
        });
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    while lines.peek().is_some() {
        let mut coeffs = Vec::with_capacity(aux.len());
        let mut time = 0.0;
        for alpha in 0..aux.len() {
            let line = lines.next().ok_or_else(|| Error::Parse {
                path: "coarse csv".into(),
                msg: format!("time block truncated at dof {alpha}"),
            })?;
            let (coeff, t) = parse_row(grid, aux, alpha, line, true)?;
            let t = t.expect("time column present");
            coeffs.push(coeff);
            if alpha == 0 {
                time = t;
            } else if t != time {
                return Err(Error::Parse {
                    path: "coarse csv".into(),
                    msg: format!("time changed mid-block at dof {alpha}"),
                });
            }
        }
        times.push(time);
        states.push(CoarseSolution {
            coeffs,
            time: Some(time),
            layers,
        });
    }
    if states.is_empty() {
        return Err(Error::Parse {
            path: "coarse csv".into(),
            msg: "no states in series".into(),
        });
    }
    Ok(CoarseSeries { times, states })
}
