//! Experiment drivers: TOML configuration, media generation, the static and
//! transient experiments, H/m sweeps, and the basis decay study, all emitting
//! re-parsable artifacts into one output directory per run.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{
    build_all_ms_bases, build_auxiliary, build_global_basis, build_ms_basis, project_pi,
    AuxiliaryBasisSet,
};
use crate::coarse::{
    assemble_coarse, downscale, series_csv as coarse_series_csv, solution_csv,
    solve_coarse_static, solve_coarse_transient, CoarseSolution, MassKind,
};
use crate::error::{Error, Result, StageExt};
use crate::finescale::{
    assemble_aq, save_grid_function, solve_static_fine, solve_transient_fine, GridFunction,
};
use crate::grid::GridPair;
use crate::io;
use crate::linalg::SolverOpts;
use crate::media::{
    generate_channelized, load_media, partition_continua, save_media, ChannelLayout, ChannelShape,
    ChannelsSpec, MediaField, PartitionMode,
};
use crate::metrics::{
    coarse_average, energy_tail, h_layout_csv, m_layout_csv, relative_l2_error,
    series_csv as error_series_csv, ErrorReport, TimePointError,
};

/// Mesh pair selection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_coarse: usize,
    pub refine: usize,
}

impl Default for GridConfig {
    fn default() -> GridConfig {
        GridConfig {
            n_coarse: 8,
            refine: 4,
        }
    }
}

/// Channel layout of one continuum: a seeded draw or explicit shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    /// "random" or "shapes".
    pub kind: String,
    /// Lane count for "random".
    pub count: usize,
    pub rects: Vec<RectConfig>,
    pub polylines: Vec<PolylineConfig>,
}

impl Default for ChannelConfig {
    fn default() -> ChannelConfig {
        ChannelConfig {
            kind: "random".into(),
            count: 8,
            rects: Vec::new(),
            polylines: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RectConfig {
    pub row0: usize,
    pub col0: usize,
    pub row1: usize,
    pub col1: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolylineConfig {
    /// (row, col) corners; consecutive corners share a row or a column.
    pub points: Vec<[usize; 2]>,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelsConfig {
    pub continuum1: ChannelConfig,
    pub continuum2: ChannelConfig,
}

/// Where coefficients come from and how channels are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MediaConfig {
    /// "generate" or "files".
    pub source: String,
    pub contrast: f64,
    /// Manifest path for "files", relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<String>,
    /// Uniform exchange override applied after generation or loading.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub channels: ChannelsConfig,
}

impl Default for MediaConfig {
    fn default() -> MediaConfig {
        MediaConfig {
            source: "generate".into(),
            contrast: 1e4,
            manifest: None,
            sigma: None,
            channels: ChannelsConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    /// "single" or "channelized".
    pub mode: String,
    /// Minimum component size in cells; geometric-mean default when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

impl Default for PartitionConfig {
    fn default() -> PartitionConfig {
        PartitionConfig {
            mode: "single".into(),
            threshold: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    /// Oversampling layers m.
    pub layers: usize,
    pub parallel: bool,
}

impl Default for BasisConfig {
    fn default() -> BasisConfig {
        BasisConfig {
            layers: 3,
            parallel: false,
        }
    }
}

/// One continuum's source term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceSpec {
    /// "zero", "constant", "two-blocks", "five-spot", or "file".
    pub kind: String,
    /// Amplitude for every kind except "file".
    pub value: f64,
    /// Matrix file for "file", relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl Default for SourceSpec {
    fn default() -> SourceSpec {
        SourceSpec {
            kind: "zero".into(),
            value: 1.0,
            path: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourcesConfig {
    pub f1: SourceSpec,
    pub f2: SourceSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransientConfig {
    pub t_final: f64,
    pub dt: f64,
    /// Initial state file (two stacked matrices); zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0: Option<String>,
}

impl Default for TransientConfig {
    fn default() -> TransientConfig {
        TransientConfig {
            t_final: 5.0,
            dt: 0.25,
            p0: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub rtol: f64,
    pub lumped_mass: bool,
}

impl Default for SolverConfig {
    fn default() -> SolverConfig {
        SolverConfig {
            rtol: 1e-9,
            lumped_mass: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Output directory, relative to the config file.
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> OutputConfig {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRun {
    pub n_coarse: usize,
    pub refine: usize,
    pub layers: usize,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub runs: Vec<SweepRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayConfig {
    /// Coarse block of the studied dof; center block when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block: Option<usize>,
    /// 1-based continuum.
    pub continuum: usize,
    /// Sub-region label within the block.
    pub label: usize,
    /// Oversampling layer schedule.
    pub schedule: Vec<usize>,
}

impl Default for DecayConfig {
    fn default() -> DecayConfig {
        DecayConfig {
            block: None,
            continuum: 1,
            label: 0,
            schedule: vec![0, 1, 2, 3],
        }
    }
}

/// One experiment recipe; round-trips losslessly through TOML.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub media: MediaConfig,
    pub partition: PartitionConfig,
    pub basis: BasisConfig,
    pub source: SourcesConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transient: Option<TransientConfig>,
    pub solver: SolverConfig,
    pub output: OutputConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            seed: 0,
            grid: GridConfig::default(),
            media: MediaConfig::default(),
            partition: PartitionConfig::default(),
            basis: BasisConfig::default(),
            source: SourcesConfig::default(),
            transient: None,
            solver: SolverConfig::default(),
            output: OutputConfig::default(),
            sweep: None,
            decay: None,
        }
    }
}

pub fn config_to_toml(config: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(config).map_err(|e| Error::Config(format!("serialize config: {e}")))
}

pub fn config_from_toml(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: "config".into(),
        msg: e.to_string(),
    })
}

/// Read a config file; the returned path anchors every relative path in it.
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, PathBuf)> {
    let text = io::read_to_string(path)?;
    let config = config_from_toml(&text).map_err(|e| match e {
        Error::Parse { msg, .. } => Error::Parse {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })?;
    Ok((config, path.to_path_buf()))
}

fn partition_mode(name: &str) -> Result<PartitionMode> {
    match name {
        "single" => Ok(PartitionMode::Single),
        "channelized" => Ok(PartitionMode::Channelized),
        other => Err(Error::Config(format!(
            "partition mode {other:?} is not \"single\" or \"channelized\""
        ))),
    }
}

fn channel_layout(cfg: &ChannelConfig) -> Result<ChannelLayout> {
    match cfg.kind.as_str() {
        "random" => {
            if !cfg.rects.is_empty() || !cfg.polylines.is_empty() {
                return Err(Error::Config(
                    "explicit shapes given for channel kind \"random\"".into(),
                ));
            }
            Ok(ChannelLayout::Random { count: cfg.count })
        }
        "shapes" => {
            let mut shapes = Vec::new();
            for r in &cfg.rects {
                shapes.push(ChannelShape::Rect {
                    row0: r.row0,
                    col0: r.col0,
                    row1: r.row1,
                    col1: r.col1,
                });
            }
            for p in &cfg.polylines {
                shapes.push(ChannelShape::Polyline {
                    points: p.points.iter().map(|&[r, c]| (r, c)).collect(),
                });
            }
            Ok(ChannelLayout::Shapes(shapes))
        }
        other => Err(Error::Config(format!(
            "channel kind {other:?} is not \"random\" or \"shapes\""
        ))),
    }
}

fn build_field(
    config: &ExperimentConfig,
    grid: &GridPair,
    config_path: &Path,
) -> Result<MediaField> {
    let mut field = match config.media.source.as_str() {
        "generate" => {
            let spec = ChannelsSpec {
                continuum: [
                    channel_layout(&config.media.channels.continuum1)?,
                    channel_layout(&config.media.channels.continuum2)?,
                ],
            };
            generate_channelized(grid, config.media.contrast, config.seed, &spec)?
        }
        "files" => {
            let name = config.media.manifest.as_deref().ok_or_else(|| {
                Error::Config("media.source = \"files\" needs media.manifest".into())
            })?;
            load_media(grid, &io::sibling(config_path, name))?
        }
        other => {
            return Err(Error::Config(format!(
                "media source {other:?} is not \"generate\" or \"files\""
            )))
        }
    };
    if let Some(sigma) = config.media.sigma {
        field.set_uniform_sigma(sigma)?;
    }
    Ok(field)
}

fn add_square(values: &mut [f64], n: usize, row0: usize, col0: usize, side: usize, amount: f64) {
    for r in row0..row0 + side {
        for c in col0..col0 + side {
            values[r * n + c] += amount;
        }
    }
}

fn source_values(grid: &GridPair, spec: &SourceSpec, config_path: &Path) -> Result<Vec<f64>> {
    let n = grid.n_fine();
    let cells = grid.n_fine_cells();
    match spec.kind.as_str() {
        "zero" => Ok(vec![0.0; cells]),
        "constant" => Ok(vec![spec.value; cells]),
        "two-blocks" => {
            // injection square centered in the lower-left quadrant, matching
            // extraction in the upper-right
            let q = n / 2;
            let side = q.min(16);
            if side == 0 {
                return Err(Error::Config(format!(
                    "two-blocks source needs at least 2 fine cells per side, grid has {n}"
                )));
            }
            let start = (q - side) / 2;
            let mut v = vec![0.0; cells];
            add_square(&mut v, n, start, start, side, spec.value);
            add_square(&mut v, n, q + start, q + start, side, -spec.value);
            Ok(v)
        }
        "five-spot" => {
            // injection square at the center, quarter-rate extraction at the
            // corners; overlapping squares add
            let side = (n / 2).min(8);
            if side == 0 {
                return Err(Error::Config(format!(
                    "five-spot source needs at least 2 fine cells per side, grid has {n}"
                )));
            }
            let mut v = vec![0.0; cells];
            let center = (n - side) / 2;
            add_square(&mut v, n, center, center, side, spec.value);
            let far = n - side;
            for (r, c) in [(0, 0), (0, far), (far, 0), (far, far)] {
                add_square(&mut v, n, r, c, side, -spec.value / 4.0);
            }
            Ok(v)
        }
        "file" => {
            let name = spec.path.as_deref().ok_or_else(|| {
                Error::Config("source kind \"file\" needs a path".into())
            })?;
            let path = io::sibling(config_path, name);
            let (nr, nc, values) = io::parse_matrix(&io::read_to_string(&path)?, &path)?;
            if nr != n || nc != n {
                return Err(Error::Shape(format!(
                    "source file {path:?} is {nr}×{nc}, grid wants {n}×{n}"
                )));
            }
            Ok(values)
        }
        other => Err(Error::Config(format!(
            "source kind {other:?} is not \"zero\", \"constant\", \"two-blocks\", \"five-spot\", or \"file\""
        ))),
    }
}

fn check_horizon(dt: f64, t_final: f64) -> Result<usize> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Config(format!("time step {dt} must be positive")));
    }
    let steps = (t_final / dt).round() as usize;
    if steps == 0 || (steps as f64 * dt - t_final).abs() > 1e-9 * t_final.abs().max(dt) {
        return Err(Error::Config(format!(
            "horizon {t_final} is not an integer number of steps of {dt}"
        )));
    }
    Ok(steps)
}

/// Everything the drivers share, built once per run.
struct Pipeline {
    grid: GridPair,
    field: MediaField,
    aux: AuxiliaryBasisSet,
    f: GridFunction,
    p0: GridFunction,
    opts: SolverOpts,
    mass_kind: MassKind,
}

fn build_pipeline(config: &ExperimentConfig, config_path: &Path) -> Result<Pipeline> {
    let grid = GridPair::build(config.grid.n_coarse, config.grid.refine).stage("grid")?;
    let field = build_field(config, &grid, config_path).stage("media")?;
    let mode = partition_mode(&config.partition.mode).stage("partition")?;
    if let Some(th) = config.partition.threshold {
        if !(th > 0.0) || !th.is_finite() {
            return Err(Error::Config(format!(
                "partition threshold {th} must be positive"
            )))
            .stage("partition");
        }
    }
    let partition =
        partition_continua(&grid, &field, mode, config.partition.threshold).stage("partition")?;
    let aux = build_auxiliary(&grid, &partition).stage("partition")?;
    let f1 = source_values(&grid, &config.source.f1, config_path).stage("source")?;
    let f2 = source_values(&grid, &config.source.f2, config_path).stage("source")?;
    let f = GridFunction::from_parts(f1, f2).stage("source")?;
    let p0 = match config.transient.as_ref().and_then(|t| t.p0.as_deref()) {
        Some(name) => {
            let path = io::sibling(config_path, name);
            let p0 = crate::finescale::load_grid_function(&path).stage("source")?;
            if p0.n_cells() != grid.n_fine_cells() {
                return Err(Error::Shape(format!(
                    "initial state {path:?} has {} cells, grid wants {}",
                    p0.n_cells(),
                    grid.n_fine_cells()
                )))
                .stage("source");
            }
            p0
        }
        None => GridFunction::zeros(grid.n_fine_cells()),
    };
    if !(config.solver.rtol > 0.0) || config.solver.rtol >= 1.0 {
        return Err(Error::Config(format!(
            "solver rtol {} must lie in (0, 1)",
            config.solver.rtol
        )));
    }
    let opts = SolverOpts {
        rtol: config.solver.rtol,
        ..SolverOpts::default()
    };
    let mass_kind = if config.solver.lumped_mass {
        MassKind::Lumped
    } else {
        MassKind::Galerkin
    };
    Ok(Pipeline {
        grid,
        field,
        aux,
        f,
        p0,
        opts,
        mass_kind,
    })
}

/// Check a config end to end without solving: grid, media (including every
/// referenced file), partition, sources, and the optional section parameters.
pub fn validate_config(config: &ExperimentConfig, config_path: &Path) -> Result<()> {
    let pipeline = build_pipeline(config, config_path)?;
    if let Some(t) = &config.transient {
        check_horizon(t.dt, t.t_final)?;
    }
    if let Some(sweep) = &config.sweep {
        if sweep.runs.is_empty() {
            return Err(Error::Config("sweep has no runs".into()));
        }
        for run in &sweep.runs {
            GridPair::build(run.n_coarse, run.refine).stage("sweep")?;
        }
    }
    if let Some(decay) = &config.decay {
        resolve_decay_dof(&pipeline, decay)?;
        if decay.schedule.is_empty() {
            return Err(Error::Config("decay schedule has no entries".into()));
        }
    }
    Ok(())
}

fn resolve_decay_dof(pipeline: &Pipeline, decay: &DecayConfig) -> Result<usize> {
    if decay.continuum != 1 && decay.continuum != 2 {
        return Err(Error::Config(format!(
            "decay continuum {} is not 1 or 2",
            decay.continuum
        )));
    }
    let i = decay.continuum - 1;
    let grid = &pipeline.grid;
    let block = decay
        .block
        .unwrap_or_else(|| grid.coarse_index(grid.n_coarse() / 2, grid.n_coarse() / 2));
    if block >= grid.n_coarse_cells() {
        return Err(Error::Config(format!(
            "decay block {block} outside a grid of {} blocks",
            grid.n_coarse_cells()
        )));
    }
    let labels = pipeline.aux.label_count(i, block);
    if decay.label >= labels {
        return Err(Error::Config(format!(
            "decay label {} outside block {block}'s {labels} sub-regions",
            decay.label
        )));
    }
    Ok(pipeline.aux.flat_index(i, block, decay.label))
}

fn sha256_hex(chunks: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update(chunk);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

fn f64_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 * values.len());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn media_hash(field: &MediaField) -> String {
    let parts = [
        f64_bytes(field.kappa(0)),
        f64_bytes(field.kappa(1)),
        f64_bytes(field.sigma()),
        f64_bytes(field.compressibility(0)),
        f64_bytes(field.compressibility(1)),
    ];
    let refs: Vec<&[u8]> = parts.iter().map(|p| p.as_slice()).collect();
    sha256_hex(&refs)
}

fn config_hash(config: &ExperimentConfig) -> Result<String> {
    Ok(sha256_hex(&[config_to_toml(config)?.as_bytes()]))
}

/// Wall-clock laps per stage, reported in timings.txt but never asserted.
struct Clock {
    entries: Vec<(&'static str, f64)>,
}

impl Clock {
    fn new() -> Clock {
        Clock {
            entries: Vec::new(),
        }
    }

    fn push(&mut self, label: &'static str, from: Instant) {
        self.entries.push((label, from.elapsed().as_secs_f64()));
    }

    fn text(&self) -> String {
        let mut out = String::new();
        for (label, secs) in &self.entries {
            let _ = writeln!(out, "{label} {secs:.3}");
        }
        out
    }
}

/// Output directory writer that records a "role name" index.
struct Artifacts {
    dir: PathBuf,
    entries: Vec<(String, String)>,
}

impl Artifacts {
    fn new(dir: PathBuf) -> Artifacts {
        Artifacts {
            dir,
            entries: Vec::new(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, role: &str, name: &str, content: &str) -> Result<()> {
        io::write_file(&self.path(name), content)?;
        self.note(role, name);
        Ok(())
    }

    fn note(&mut self, role: &str, name: &str) {
        self.entries.push((role.to_string(), name.to_string()));
    }

    fn save_media_files(&mut self, field: &MediaField) -> Result<()> {
        for (role, path) in save_media(field, &self.path("media.txt"))? {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or("media.txt")
                .to_string();
            self.note(&format!("media_{role}"), &name);
        }
        Ok(())
    }

    fn finish(self, clock: &Clock) -> Result<()> {
        let mut index = String::new();
        for (role, name) in &self.entries {
            let _ = writeln!(index, "{role} {name}");
        }
        let _ = writeln!(index, "timings timings.txt");
        io::write_file(&self.path("timings.txt"), &clock.text())?;
        io::write_file(&self.path("artifacts.txt"), &index)?;
        Ok(())
    }
}

fn out_dir(config: &ExperimentConfig, config_path: &Path) -> PathBuf {
    io::sibling(config_path, &config.output.dir)
}

fn interior_area_pct(grid: &GridPair, layers: usize) -> Result<f64> {
    let center = grid.coarse_index(grid.n_coarse() / 2, grid.n_coarse() / 2);
    Ok(100.0 * grid.oversample(center, layers)?.area_ratio())
}

fn hashes_text(report: &ErrorReport) -> String {
    format!(
        "media_hash {}\nconfig_hash {}\n",
        report.media_hash, report.config_hash
    )
}

/// One static solve pass, shared by the static driver and the sweep.
struct StaticRun {
    pipeline: Pipeline,
    solution: CoarseSolution,
    p_fine: GridFunction,
    p_ms: GridFunction,
    avg_fine: GridFunction,
    avg_ms: GridFunction,
    report: ErrorReport,
}

fn compute_static(
    config: &ExperimentConfig,
    config_path: &Path,
    clock: &mut Clock,
) -> Result<StaticRun> {
    let t = Instant::now();
    let pipeline = build_pipeline(config, config_path)?;
    clock.push("setup", t);
    let t = Instant::now();
    let bases = build_all_ms_bases(
        &pipeline.grid,
        &pipeline.field,
        &pipeline.aux,
        config.basis.layers,
        config.basis.parallel,
        &pipeline.opts,
    )
    .stage("basis")?;
    clock.push("basis", t);
    let t = Instant::now();
    let (p_fine, _) =
        solve_static_fine(&pipeline.grid, &pipeline.field, &pipeline.f, &pipeline.opts)
            .stage("fine-solve")?;
    clock.push("fine-solve", t);
    let t = Instant::now();
    let system = assemble_coarse(
        &pipeline.grid,
        &pipeline.field,
        &pipeline.aux,
        &bases,
        pipeline.mass_kind,
    )
    .stage("coarse-assembly")?;
    clock.push("coarse-assembly", t);
    let t = Instant::now();
    let (solution, _) =
        solve_coarse_static(&system, &bases, &pipeline.f, &pipeline.opts).stage("coarse-solve")?;
    clock.push("coarse-solve", t);
    let t = Instant::now();
    let p_ms = downscale(&pipeline.grid, &bases, &solution).stage("metrics")?;
    let avg_fine = coarse_average(&pipeline.grid, &p_fine).stage("metrics")?;
    let avg_ms = coarse_average(&pipeline.grid, &p_ms).stage("metrics")?;
    let (e1, e2) = relative_l2_error(&avg_fine, &avg_ms).stage("metrics")?;
    let report = ErrorReport {
        n_coarse: pipeline.grid.n_coarse(),
        refine: pipeline.grid.refine(),
        layers: config.basis.layers,
        e1,
        e2,
        area_ratio_pct: Some(interior_area_pct(&pipeline.grid, config.basis.layers)?),
        series: Vec::new(),
        media_hash: media_hash(&pipeline.field),
        config_hash: config_hash(config)?,
    };
    clock.push("metrics", t);
    Ok(StaticRun {
        pipeline,
        solution,
        p_fine,
        p_ms,
        avg_fine,
        avg_ms,
        report,
    })
}

/// Run the static experiment and write its artifacts.
pub fn run_static_experiment(
    config: &ExperimentConfig,
    config_path: &Path,
) -> Result<ErrorReport> {
    let mut clock = Clock::new();
    let run = compute_static(config, config_path, &mut clock)?;
    let t = Instant::now();
    let grid = &run.pipeline.grid;
    let mut art = Artifacts::new(out_dir(config, config_path));
    art.write("config", "config.toml", &config_to_toml(config)?)
        .stage("artifacts")?;
    art.save_media_files(&run.pipeline.field).stage("artifacts")?;
    let dumps = [
        ("fine_solution", "fine_solution.txt", &run.p_fine, grid.n_fine()),
        ("ms_solution", "ms_solution.txt", &run.p_ms, grid.n_fine()),
        ("fine_avg", "fine_avg.txt", &run.avg_fine, grid.n_coarse()),
        ("ms_avg", "ms_avg.txt", &run.avg_ms, grid.n_coarse()),
    ];
    for (role, name, fun, side) in dumps {
        save_grid_function(fun, side, &art.path(name)).stage("artifacts")?;
        art.note(role, name);
    }
    art.write(
        "coarse_solution",
        "coarse_solution.csv",
        &solution_csv(grid, &run.pipeline.aux, &run.solution),
    )
    .stage("artifacts")?;
    art.write(
        "errors",
        "errors.csv",
        &h_layout_csv(std::slice::from_ref(&run.report)),
    )
    .stage("artifacts")?;
    art.write("hashes", "hashes.txt", &hashes_text(&run.report))
        .stage("artifacts")?;
    clock.push("artifacts", t);
    art.finish(&clock).stage("artifacts")?;
    Ok(run.report)
}

/// Run the transient experiment: fine and coarse backward Euler, per-step
/// errors, snapshots at the quarter points, and the trajectory CSV.
pub fn run_transient_experiment(
    config: &ExperimentConfig,
    config_path: &Path,
) -> Result<ErrorReport> {
    let transient = config
        .transient
        .clone()
        .ok_or_else(|| Error::Config("transient experiment needs a [transient] section".into()))?;
    let steps = check_horizon(transient.dt, transient.t_final)?;
    let mut clock = Clock::new();
    let t = Instant::now();
    let pipeline = build_pipeline(config, config_path)?;
    clock.push("setup", t);
    let t = Instant::now();
    let bases = build_all_ms_bases(
        &pipeline.grid,
        &pipeline.field,
        &pipeline.aux,
        config.basis.layers,
        config.basis.parallel,
        &pipeline.opts,
    )
    .stage("basis")?;
    clock.push("basis", t);
    let grid = &pipeline.grid;
    let source = pipeline.f.clone();
    let t = Instant::now();
    let fine_series = solve_transient_fine(
        grid,
        &pipeline.field,
        |_| source.clone(),
        &pipeline.p0,
        transient.dt,
        transient.t_final,
        &pipeline.opts,
    )
    .stage("fine-solve")?;
    clock.push("fine-solve", t);
    let t = Instant::now();
    let system = assemble_coarse(grid, &pipeline.field, &pipeline.aux, &bases, pipeline.mass_kind)
        .stage("coarse-assembly")?;
    clock.push("coarse-assembly", t);
    let t = Instant::now();
    let (u0, _) = project_pi(grid, &pipeline.aux, &pipeline.p0).stage("coarse-solve")?;
    let coarse_series = solve_coarse_transient(
        &system,
        &bases,
        |_| source.clone(),
        &u0,
        transient.dt,
        transient.t_final,
        &pipeline.opts,
    )
    .stage("coarse-solve")?;
    clock.push("coarse-solve", t);

    let t = Instant::now();
    let mut trace = Vec::with_capacity(steps + 1);
    let mut ms_states = Vec::with_capacity(steps + 1);
    for (state_f, state_c) in fine_series.states.iter().zip(&coarse_series.states) {
        let p_ms = downscale(grid, &bases, state_c).stage("metrics")?;
        let avg_f = coarse_average(grid, state_f).stage("metrics")?;
        let avg_ms = coarse_average(grid, &p_ms).stage("metrics")?;
        let (e1, e2) = relative_l2_error(&avg_f, &avg_ms).stage("metrics")?;
        trace.push(TimePointError {
            time: state_c.time.expect("transient state"),
            e1,
            e2,
        });
        ms_states.push(p_ms);
    }
    let last = *trace.last().expect("series never empty");
    let report = ErrorReport {
        n_coarse: grid.n_coarse(),
        refine: grid.refine(),
        layers: config.basis.layers,
        e1: last.e1,
        e2: last.e2,
        area_ratio_pct: Some(interior_area_pct(grid, config.basis.layers)?),
        series: trace.clone(),
        media_hash: media_hash(&pipeline.field),
        config_hash: config_hash(config)?,
    };
    clock.push("metrics", t);

    let t = Instant::now();
    let mut art = Artifacts::new(out_dir(config, config_path));
    art.write("config", "config.toml", &config_to_toml(config)?)
        .stage("artifacts")?;
    art.save_media_files(&pipeline.field).stage("artifacts")?;
    let quarter = ((steps as f64) * 0.25).round().max(1.0) as usize;
    let half = ((steps as f64) * 0.5).round().max(1.0) as usize;
    for (tag, idx) in [("quarter", quarter), ("half", half), ("final", steps)] {
        let name = format!("fine_{tag}.txt");
        save_grid_function(&fine_series.states[idx], grid.n_fine(), &art.path(&name))
            .stage("artifacts")?;
        art.note(&format!("fine_{tag}"), &name);
        let name = format!("ms_{tag}.txt");
        save_grid_function(&ms_states[idx], grid.n_fine(), &art.path(&name))
            .stage("artifacts")?;
        art.note(&format!("ms_{tag}"), &name);
    }
    let avg_f = coarse_average(grid, fine_series.final_state()).stage("metrics")?;
    let avg_ms = coarse_average(grid, ms_states.last().expect("nonempty")).stage("metrics")?;
    save_grid_function(&avg_f, grid.n_coarse(), &art.path("fine_avg.txt")).stage("artifacts")?;
    art.note("fine_avg", "fine_avg.txt");
    save_grid_function(&avg_ms, grid.n_coarse(), &art.path("ms_avg.txt")).stage("artifacts")?;
    art.note("ms_avg", "ms_avg.txt");
    art.write(
        "coarse_series",
        "series.csv",
        &coarse_series_csv(grid, &pipeline.aux, &coarse_series),
    )
    .stage("artifacts")?;
    art.write("error_series", "error_series.csv", &error_series_csv(&trace))
        .stage("artifacts")?;
    art.write(
        "errors",
        "errors.csv",
        &h_layout_csv(std::slice::from_ref(&report)),
    )
    .stage("artifacts")?;
    art.write("hashes", "hashes.txt", &hashes_text(&report))
        .stage("artifacts")?;
    clock.push("artifacts", t);
    art.finish(&clock).stage("artifacts")?;
    Ok(report)
}

/// One measured layer count of the decay study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRow {
    pub layers: usize,
    /// ‖φ − ψ(m)‖ in the coupled energy norm.
    pub diff_aq: f64,
    /// Energy of the global basis outside the m-layer region.
    pub tail_aq: f64,
}

pub fn decay_csv(rows: &[DecayRow]) -> String {
    let mut out = String::from("m,diff_aq,tail_aq\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.layers, r.diff_aq, r.tail_aq);
    }
    out
}

pub fn parse_decay_csv(text: &str) -> Result<Vec<DecayRow>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "m,diff_aq,tail_aq" {
        return Err(Error::Parse {
            path: "decay csv".into(),
            msg: format!("unexpected header '{header}'"),
        });
    }
    let mut rows = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                path: "decay csv".into(),
                msg: format!("row '{line}' has {} fields, want 3", parts.len()),
            });
        }
        let bad = |what: &str| Error::Parse {
            path: "decay csv".into(),
            msg: format!("row '{line}': bad {what}"),
        };
        rows.push(DecayRow {
            layers: parts[0].parse().map_err(|_| bad("m"))?,
            diff_aq: parts[1].parse().map_err(|_| bad("diff_aq"))?,
            tail_aq: parts[2].parse().map_err(|_| bad("tail_aq"))?,
        });
    }
    Ok(rows)
}

/// Compare localized bases against the global one for a single dof over the
/// configured layer schedule; refuses grids whose global saddle solve exceeds
/// the direct-solver limit.
pub fn run_decay_study(
    config: &ExperimentConfig,
    config_path: &Path,
) -> Result<Vec<DecayRow>> {
    let decay = config
        .decay
        .clone()
        .ok_or_else(|| Error::Config("decay study needs a [decay] section".into()))?;
    if decay.schedule.is_empty() {
        return Err(Error::Config("decay schedule has no entries".into()));
    }
    let mut clock = Clock::new();
    let t = Instant::now();
    let pipeline = build_pipeline(config, config_path)?;
    let dof = resolve_decay_dof(&pipeline, &decay)?;
    clock.push("setup", t);
    let grid = &pipeline.grid;
    let unknowns = 2 * grid.n_fine_cells() + pipeline.aux.len();
    let limit = pipeline.opts.max_sparse_direct_dofs;
    if unknowns > limit {
        return Err(Error::Refused(format!(
            "global basis solve needs {unknowns} unknowns, above the direct-solver limit of {limit}"
        )));
    }
    let t = Instant::now();
    let global = build_global_basis(grid, &pipeline.field, &pipeline.aux, dof, &pipeline.opts)
        .stage("global-basis")?;
    let global_ext = global.extended(grid);
    clock.push("global-basis", t);
    let t = Instant::now();
    let a_glob = assemble_aq(grid, &pipeline.field, &grid.domain_region()).stage("decay")?;
    let mut rows = Vec::with_capacity(decay.schedule.len());
    for &m in &decay.schedule {
        let local = build_ms_basis(grid, &pipeline.field, &pipeline.aux, dof, m, &pipeline.opts)
            .stage("decay")?;
        let diff = local.extended(grid).sub(&global_ext);
        let diff_aq = a_glob.quadratic(diff.flat()).max(0.0).sqrt();
        let block = pipeline.aux.dof(dof).block;
        let region = grid.oversample(block, m).stage("decay")?;
        let tail_aq = energy_tail(grid, &pipeline.field, &global_ext, Some(&region))
            .stage("decay")?
            .max(0.0)
            .sqrt();
        rows.push(DecayRow {
            layers: m,
            diff_aq,
            tail_aq,
        });
    }
    clock.push("decay", t);
    let t = Instant::now();
    let mut art = Artifacts::new(out_dir(config, config_path));
    art.write("config", "config.toml", &config_to_toml(config)?)
        .stage("artifacts")?;
    art.save_media_files(&pipeline.field).stage("artifacts")?;
    art.write("decay", "decay.csv", &decay_csv(&rows)).stage("artifacts")?;
    art.write(
        "hashes",
        "hashes.txt",
        &format!(
            "media_hash {}\nconfig_hash {}\n",
            media_hash(&pipeline.field),
            config_hash(config)?
        ),
    )
    .stage("artifacts")?;
    clock.push("artifacts", t);
    art.finish(&clock).stage("artifacts")?;
    Ok(rows)
}

/// Run every sweep entry as a static experiment and write one summary table:
/// layer-sweep layout when all entries share a coarse size, H-sweep layout
/// otherwise.
pub fn run_sweep(config: &ExperimentConfig, config_path: &Path) -> Result<Vec<ErrorReport>> {
    let sweep = config
        .sweep
        .clone()
        .ok_or_else(|| Error::Config("sweep needs a [sweep] section".into()))?;
    if sweep.runs.is_empty() {
        return Err(Error::Config("sweep has no runs".into()));
    }
    let mut clock = Clock::new();
    let mut reports = Vec::with_capacity(sweep.runs.len());
    let mut media_hashes = Vec::with_capacity(sweep.runs.len());
    for run in &sweep.runs {
        let mut run_config = config.clone();
        run_config.grid = GridConfig {
            n_coarse: run.n_coarse,
            refine: run.refine,
        };
        run_config.basis.layers = run.layers;
        let t = Instant::now();
        let outcome = compute_static(&run_config, config_path, &mut Clock::new())?;
        clock.push("sweep-run", t);
        media_hashes.push(outcome.report.media_hash.clone());
        reports.push(outcome.report);
    }
    let uniform_h = sweep.runs.iter().all(|r| r.n_coarse == sweep.runs[0].n_coarse);
    let table = if uniform_h {
        m_layout_csv(&reports)?
    } else {
        h_layout_csv(&reports)
    };
    let t = Instant::now();
    let mut art = Artifacts::new(out_dir(config, config_path));
    art.write("config", "config.toml", &config_to_toml(config)?)
        .stage("artifacts")?;
    art.write("errors", "errors.csv", &table).stage("artifacts")?;
    let mut hashes = format!("config_hash {}\n", config_hash(config)?);
    for (i, h) in media_hashes.iter().enumerate() {
        let _ = writeln!(hashes, "media_hash_run{} {h}", i + 1);
    }
    art.write("hashes", "hashes.txt", &hashes).stage("artifacts")?;
    clock.push("artifacts", t);
    art.finish(&clock).stage("artifacts")?;
    Ok(reports)
}

/// Generate the configured media and write the manifest plus field files.
pub fn generate_media_files(
    config: &ExperimentConfig,
    config_path: &Path,
) -> Result<Vec<(String, PathBuf)>> {
    let mut clock = Clock::new();
    let t = Instant::now();
    let grid = GridPair::build(config.grid.n_coarse, config.grid.refine).stage("grid")?;
    let spec = ChannelsSpec {
        continuum: [
            channel_layout(&config.media.channels.continuum1).stage("media")?,
            channel_layout(&config.media.channels.continuum2).stage("media")?,
        ],
    };
    let mut field =
        generate_channelized(&grid, config.media.contrast, config.seed, &spec).stage("media")?;
    if let Some(sigma) = config.media.sigma {
        field.set_uniform_sigma(sigma).stage("media")?;
    }
    clock.push("media", t);
    let t = Instant::now();
    let mut art = Artifacts::new(out_dir(config, config_path));
    art.write("config", "config.toml", &config_to_toml(config)?)
        .stage("artifacts")?;
    let written = save_media(&field, &art.path("media.txt")).stage("artifacts")?;
    for (role, path) in &written {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("media.txt")
            .to_string();
        art.note(&format!("media_{role}"), &name);
    }
    clock.push("artifacts", t);
    art.finish(&clock).stage("artifacts")?;
    Ok(written)
}
