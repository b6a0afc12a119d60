//! Wannier–Stark spectra and band collapses of a two-sublattice square
//! lattice tilted along a rational direction.
//!
//! The crate covers the exact spectrum of the reduced chain, the
//! perturbative Bessel-series dispersion, wavepacket dynamics on the full
//! lattice, and the force scans built on top of them.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod output;
pub mod perturb;
pub mod scan;
pub mod spectrum;

pub use bessel::{bessel_j, bessel_j_table, bessel_root};
pub use config::{BesselConfig, Direction, DynamicsConfig, ForceScan, Mode, RunConfig, Spacing};
pub use dynamics::{
    build_lattice, initial_packet, propagate, Lattice2D, PacketKind, SpreadTrajectory, WavepacketState,
};
pub use error::{Error, Result};
pub use model::{
    classify_orientation, kappa_grid, make_tilt, spectral_period_grid, LatticeSpec, OrientationClass, TiltSpec,
};
pub use perturb::{
    collapse_predict, dispersion_analytic, enumerate_terms, flat_ladder, mean_x, second_order_mean, width_analytic,
    AnalyticDispersion, BranchKind, PerturbTerm, SecondOrderTerm, DEFAULT_MAX_ORDER,
};
pub use scan::{find_collapses, fit_power_law, run_scan_width, BandWidthRow, BandWidthScan, Collapse, PowerLaw};
pub use spectrum::{
    band_width, band_width_converged, build_reduced_hamiltonian, default_site_range, dispersion_numeric,
    eigen_decomposition, eigen_spectrum, ladder_symmetry_residual, BandWidth, DispersionCurve, ReducedHamiltonian,
};
