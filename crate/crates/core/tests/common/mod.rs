//! Brute-force oracles for cross-checking the library: a dense LU solver and
//! dense assemblers built straight from the flux/exchange definitions, sharing
//! no code with the implementations under test.

use nlmc::{GridPair, MediaField, OversampleRegion};

/// Dense row-major matrix with partial-pivoting LU solve.
pub struct DenseMat {
    pub n: usize,
    pub a: Vec<f64>,
}

impl DenseMat {
    pub fn zeros(n: usize) -> DenseMat {
        DenseMat {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.n + c]
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        self.a[r * self.n + c] += v;
    }

    /// Solve self * x = b by LU with partial pivoting; panics on a zero pivot.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut lu = self.a.clone();
        let mut x: Vec<f64> = b.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = lu[perm[k] * n + k].abs();
            for r in k + 1..n {
                let cand = lu[perm[r] * n + k].abs();
                if cand > best {
                    best = cand;
                    piv = r;
                }
            }
            assert!(best > 0.0, "singular oracle matrix at column {k}");
            perm.swap(k, piv);
            let pk = perm[k];
            for r in k + 1..n {
                let pr = perm[r];
                let factor = lu[pr * n + k] / lu[pk * n + k];
                lu[pr * n + k] = factor;
                for c in k + 1..n {
                    lu[pr * n + c] -= factor * lu[pk * n + c];
                }
            }
        }
        // forward then backward substitution in permuted order
        let mut y = vec![0.0; n];
        for r in 0..n {
            let pr = perm[r];
            let mut acc = x[pr];
            for c in 0..r {
                acc -= lu[pr * n + c] * y[c];
            }
            y[r] = acc;
        }
        for r in (0..n).rev() {
            let pr = perm[r];
            let mut acc = y[r];
            for c in r + 1..n {
                acc -= lu[pr * n + c] * x[c];
            }
            x[r] = acc / lu[pr * n + r];
        }
        x
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// Dense coupled-energy matrix on a region, assembled cell pair by cell pair
/// from the two-point flux and exchange definitions.
pub fn dense_aq(grid: &GridPair, field: &MediaField, region: &OversampleRegion) -> DenseMat {
    let cells: Vec<usize> = region.fine_cells().collect();
    let nc = cells.len();
    let n_dofs = 2 * nc;
    let h2 = grid.fine_h() * grid.fine_h();
    let n = grid.n_fine();
    let mut local = std::collections::HashMap::new();
    for (l, &cell) in cells.iter().enumerate() {
        local.insert(cell, l);
    }
    let mut mat = DenseMat::zeros(n_dofs);
    for i in 0..2 {
        let kappa = field.kappa(i);
        for (l, &cell) in cells.iter().enumerate() {
            let row = i * nc + l;
            let (r, c) = (cell / n, cell % n);
            // four sides; neighbor outside the region (or the domain) closes
            // with the half-cell coefficient on the diagonal
            let neighbors = [
                (r > 0, cell.wrapping_sub(n)),
                (r + 1 < n, cell + n),
                (c > 0, cell.wrapping_sub(1)),
                (c + 1 < n, cell + 1),
            ];
            for (inside_domain, other) in neighbors {
                if inside_domain {
                    if let Some(&lo) = local.get(&other) {
                        let t = harmonic(kappa[cell], kappa[other]);
                        mat.add(row, row, t);
                        mat.add(row, i * nc + lo, -t);
                        continue;
                    }
                }
                mat.add(row, row, 2.0 * kappa[cell]);
            }
        }
    }
    for (l, &cell) in cells.iter().enumerate() {
        let w = field.sigma()[cell] * h2;
        mat.add(l, l, w);
        mat.add(nc + l, nc + l, w);
        mat.add(l, nc + l, -w);
        mat.add(nc + l, l, -w);
    }
    mat
}

/// Dense mass diagonal (compressibility times cell area) on a region.
#[allow(dead_code)]
pub fn dense_mass(grid: &GridPair, field: &MediaField, region: &OversampleRegion) -> Vec<f64> {
    let cells: Vec<usize> = region.fine_cells().collect();
    let nc = cells.len();
    let h2 = grid.fine_h() * grid.fine_h();
    let mut diag = vec![0.0; 2 * nc];
    for i in 0..2 {
        for (l, &cell) in cells.iter().enumerate() {
            diag[i * nc + l] = field.compressibility(i)[cell] * h2;
        }
    }
    diag
}

/// Solve the saddle system [A Bᵀ; B 0] [x; λ] = [f; g] densely.
pub fn dense_kkt_solve(
    a: &DenseMat,
    b_rows: &[Vec<f64>],
    f: &[f64],
    g: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let n = a.n;
    let m = b_rows.len();
    assert_eq!(f.len(), n);
    assert_eq!(g.len(), m);
    let mut kkt = DenseMat::zeros(n + m);
    for r in 0..n {
        for c in 0..n {
            kkt.add(r, c, a.at(r, c));
        }
    }
    for (k, row) in b_rows.iter().enumerate() {
        assert_eq!(row.len(), n);
        for c in 0..n {
            kkt.add(n + k, c, row[c]);
            kkt.add(c, n + k, row[c]);
        }
    }
    let mut rhs = Vec::with_capacity(n + m);
    rhs.extend_from_slice(f);
    rhs.extend_from_slice(g);
    let sol = kkt.solve(&rhs);
    (sol[..n].to_vec(), sol[n..].to_vec())
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-300);
    max_abs_diff(a, b) / scale
}
