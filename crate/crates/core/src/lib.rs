//! Non-local multicontinuum upscaling for dual-continuum diffusion on
//! structured square grids.
//!
//! The crate builds constrained energy-minimizing multiscale bases on
//! oversampled coarse regions, assembles the resulting coarse systems, and
//! measures their accuracy against a fine-scale finite-volume reference.

pub mod basis;
pub mod coarse;
pub mod error;
pub mod finescale;
pub mod grid;
mod io;
pub mod linalg;
pub mod media;
pub mod metrics;
pub mod runner;

pub use basis::{
    build_all_ms_bases, build_auxiliary, build_global_basis, build_ms_basis, project_pi, AuxDof,
    AuxiliaryBasisSet, BasisCollection, MultiscaleBasis,
};
pub use coarse::{
    assemble_coarse, coarse_load, downscale, solve_coarse_static, solve_coarse_transient,
    CoarseSeries, CoarseSolution, CoarseSystem, MassKind,
};
pub use error::{Error, ErrorClass, Result};
pub use finescale::{
    assemble_aq, assemble_mass, load_vector, mass_diagonal, solve_static_fine,
    solve_transient_fine, GridFunction, TransientSeries,
};
pub use grid::{GridPair, OversampleRegion};
pub use linalg::{CsrMatrix, SolverOpts, SpdSolver};
pub use media::{
    generate_channelized, load_media, partition_continua, save_media, ChannelLayout, ChannelShape,
    ChannelsSpec, ContinuumPartition, MediaField, PartitionMode,
};
pub use metrics::{coarse_average, energy_tail, relative_l2_error, ErrorReport, TimePointError};
pub use runner::{
    config_from_toml, config_to_toml, generate_media_files, load_config, run_decay_study,
    run_static_experiment, run_sweep, run_transient_experiment, validate_config, DecayRow,
    ExperimentConfig,
};
