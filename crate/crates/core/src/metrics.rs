//! Coarse-cell averaging, relative L² errors of those averages, localization
//! energy tails, and the CSV table layouts of the error studies.

use crate::error::{Error, Result};
use crate::finescale::GridFunction;
use crate::grid::{GridPair, OversampleRegion, Side};
use crate::media::MediaField;

/// Per-block, per-continuum arithmetic means of a domain function.
///
/// Fine cells are equal-area, so the mean equals the integral average.
pub fn coarse_average(grid: &GridPair, v: &GridFunction) -> Result<GridFunction> {
    if v.n_cells() != grid.n_fine_cells() {
        return Err(Error::Shape(format!(
            "function has {} cells, grid wants {}",
            v.n_cells(),
            grid.n_fine_cells()
        )));
    }
    let per_block = (grid.refine() * grid.refine()) as f64;
    let mut out = GridFunction::zeros(grid.n_coarse_cells());
    for i in 0..2 {
        for block in 0..grid.n_coarse_cells() {
            let sum: f64 = grid
                .fine_cells_of_coarse(block)
                .map(|cell| v.value(i, cell))
                .sum();
            out.set(i, block, sum / per_block);
        }
    }
    Ok(out)
}

/// Relative L² errors per continuum, as fractions.
///
/// eⁱ = sqrt(Σ_K (f̄ − m̄)² / Σ_K f̄²). A zero difference is error 0 even
/// against a zero reference; a nonzero difference against a zero reference
/// has no relative scale and is refused.
pub fn relative_l2_error(avg_f: &GridFunction, avg_ms: &GridFunction) -> Result<(f64, f64)> {
    if avg_f.n_cells() != avg_ms.n_cells() {
        return Err(Error::Shape(format!(
            "averages over {} vs {} blocks",
            avg_f.n_cells(),
            avg_ms.n_cells()
        )));
    }
    let mut out = [0.0; 2];
    for i in 0..2 {
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..avg_f.n_cells() {
            let f = avg_f.value(i, k);
            let d = f - avg_ms.value(i, k);
            num += d * d;
            den += f * f;
        }
        out[i] = if num == 0.0 {
            0.0
        } else if den == 0.0 {
            return Err(Error::UndefinedRelativeError { continuum: i + 1 });
        } else {
            (num / den).sqrt()
        };
    }
    Ok((out[0], out[1]))
}

/// Energy ‖v‖²_{a_Q} restricted to the cells outside `excluded` (`None`
/// excludes nothing). Interior faces count only when both cells are outside;
/// domain-boundary closures and exchange terms count for outside cells.
///
/// For nested regions the tail is nonincreasing, reaching 0 when the region
/// covers the domain and the full quadratic form when nothing is excluded.
pub fn energy_tail(
    grid: &GridPair,
    field: &MediaField,
    v: &GridFunction,
    excluded: Option<&OversampleRegion>,
) -> Result<f64> {
    if v.n_cells() != grid.n_fine_cells() {
        return Err(Error::Shape(format!(
            "function has {} cells, grid wants {}",
            v.n_cells(),
            grid.n_fine_cells()
        )));
    }
    if field.n_fine() != grid.n_fine() {
        return Err(Error::Shape(format!(
            "field is {0}×{0}, grid wants {1}×{1}",
            field.n_fine(),
            grid.n_fine()
        )));
    }
    let outside = |cell: usize| match excluded {
        Some(region) => !region.contains_fine(cell),
        None => true,
    };
    let n = grid.n_fine();
    let h2 = grid.fine_h() * grid.fine_h();
    let sigma = field.sigma();
    let mut acc = 0.0;
    for cell in 0..grid.n_fine_cells() {
        if !outside(cell) {
            continue;
        }
        let (r, c) = grid.fine_row_col(cell);
        for i in 0..2 {
            let kappa = field.kappa(i);
            let vc = v.value(i, cell);
            // faces owned looking right and up; both cells must be outside
            if c + 1 < n {
                let nb = grid.fine_index(r, c + 1);
                if outside(nb) {
                    let t = 2.0 * kappa[cell] * kappa[nb] / (kappa[cell] + kappa[nb]);
                    let d = vc - v.value(i, nb);
                    acc += t * d * d;
                }
            }
            if r + 1 < n {
                let nb = grid.fine_index(r + 1, c);
                if outside(nb) {
                    let t = 2.0 * kappa[cell] * kappa[nb] / (kappa[cell] + kappa[nb]);
                    let d = vc - v.value(i, nb);
                    acc += t * d * d;
                }
            }
            for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
                let on_boundary = match side {
                    Side::Left => c == 0,
                    Side::Right => c + 1 == n,
                    Side::Bottom => r == 0,
                    Side::Top => r + 1 == n,
                };
                if on_boundary {
                    acc += 2.0 * kappa[cell] * vc * vc;
                }
            }
        }
        let d = v.value(0, cell) - v.value(1, cell);
        acc += sigma[cell] * h2 * d * d;
    }
    Ok(acc)
}

/// One time point of a transient error trace, as fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimePointError {
    pub time: f64,
    pub e1: f64,
    pub e2: f64,
}

/// Time-averaged errors over a trace: trapezoid integral divided by the span.
pub fn time_integrated(series: &[TimePointError]) -> Result<(f64, f64)> {
    if series.len() < 2 {
        return Err(Error::Shape(format!(
            "time integration needs at least 2 points, found {}",
            series.len()
        )));
    }
    let span = series.last().unwrap().time - series[0].time;
    if !(span > 0.0) {
        return Err(Error::Config(format!("degenerate time span {span}")));
    }
    let mut acc = [0.0; 2];
    for w in series.windows(2) {
        let dt = w[1].time - w[0].time;
        acc[0] += 0.5 * dt * (w[0].e1 + w[1].e1);
        acc[1] += 0.5 * dt * (w[0].e2 + w[1].e2);
    }
    Ok((acc[0] / span, acc[1] / span))
}

/// Errors of one run plus the descriptors the table layouts need.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub n_coarse: usize,
    pub refine: usize,
    pub layers: usize,
    /// Fractions, not percent.
    pub e1: f64,
    pub e2: f64,
    /// Oversampling share of the domain for an interior block, in percent.
    pub area_ratio_pct: Option<f64>,
    /// Per-time-point errors for transient runs, empty otherwise.
    pub series: Vec<TimePointError>,
    pub media_hash: String,
    pub config_hash: String,
}

pub const H_LAYOUT_HEADER: &str = "H,m,e1_pct,e2_pct";
pub const M_LAYOUT_HEADER: &str = "m,area_ratio_pct,e1_pct,e2_pct";
pub const SERIES_HEADER: &str = "time,e1_pct,e2_pct";

/// Rows of coarse-size sweeps: H as a unit fraction, errors in percent.
pub fn h_layout_csv(reports: &[ErrorReport]) -> String {
    let mut out = String::from(H_LAYOUT_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "1/{},{},{:.4},{:.4}\n",
            r.n_coarse,
            r.layers,
            100.0 * r.e1,
            100.0 * r.e2
        ));
    }
    out
}

/// Rows of layer sweeps at fixed H: oversampling share and errors in percent.
pub fn m_layout_csv(reports: &[ErrorReport]) -> Result<String> {
    let mut out = String::from(M_LAYOUT_HEADER);
    out.push('\n');
    for r in reports {
        let area = r.area_ratio_pct.ok_or_else(|| {
            Error::Shape(format!("run with m = {} lacks an area ratio", r.layers))
        })?;
        out.push_str(&format!(
            "{},{area:.2},{:.4},{:.4}\n",
            r.layers,
            100.0 * r.e1,
            100.0 * r.e2
        ));
    }
    Ok(out)
}

/// Transient error trace, errors in percent.
pub fn series_csv(series: &[TimePointError]) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for p in series {
        out.push_str(&format!(
            "{},{:.4},{:.4}\n",
            p.time,
            100.0 * p.e1,
            100.0 * p.e2
        ));
    }
    out
}

fn parse_error_csv(
    text: &str,
    header: &str,
    fields: usize,
) -> Result<Vec<Vec<String>>> {
    let mut lines = text.lines();
    let got = lines.next().unwrap_or("");
    if got != header {
        return Err(Error::Parse {
            path: "error csv".into(),
            msg: format!("header '{got}', want '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for line in lines {
        let parts: Vec<String> = line.split(',').map(str::to_owned).collect();
        if parts.len() != fields {
            return Err(Error::Parse {
                path: "error csv".into(),
                msg: format!("row '{line}' has {} fields, want {fields}", parts.len()),
            });
        }
        rows.push(parts);
    }
    Ok(rows)
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse {
        path: "error csv".into(),
        msg: format!("bad {what} '{s}'"),
    })
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        path: "error csv".into(),
        msg: format!("bad {what} '{s}'"),
    })
}

/// Parse rows written by `h_layout_csv`: (n_coarse, m, e1 %, e2 %).
pub fn parse_h_layout(text: &str) -> Result<Vec<(usize, usize, f64, f64)>> {
    parse_error_csv(text, H_LAYOUT_HEADER, 4)?
        .into_iter()
        .map(|row| {
            let n = row[0].strip_prefix("1/").ok_or_else(|| Error::Parse {
                path: "error csv".into(),
                msg: format!("H entry '{}' is not a unit fraction", row[0]),
            })?;
            Ok((
                parse_usize(n, "H denominator")?,
                parse_usize(&row[1], "m")?,
                parse_f64(&row[2], "e1")?,
                parse_f64(&row[3], "e2")?,
            ))
        })
        .collect()
}

/// Parse rows written by `m_layout_csv`: (m, area %, e1 %, e2 %).
pub fn parse_m_layout(text: &str) -> Result<Vec<(usize, f64, f64, f64)>> {
    parse_error_csv(text, M_LAYOUT_HEADER, 4)?
        .into_iter()
        .map(|row| {
            Ok((
                parse_usize(&row[0], "m")?,
                parse_f64(&row[1], "area ratio")?,
                parse_f64(&row[2], "e1")?,
                parse_f64(&row[3], "e2")?,
            ))
        })
        .collect()
}

/// Parse rows written by `series_csv`: errors come back in percent.
pub fn parse_series_layout(text: &str) -> Result<Vec<TimePointError>> {
    parse_error_csv(text, SERIES_HEADER, 3)?
        .into_iter()
        .map(|row| {
            Ok(TimePointError {
                time: parse_f64(&row[0], "time")?,
                e1: parse_f64(&row[1], "e1")?,
                e2: parse_f64(&row[2], "e2")?,
            })
        })
        .collect()
}
