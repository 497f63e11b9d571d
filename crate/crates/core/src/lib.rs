//! Many-body line-width simulations for frozen Rydberg gases.
//!
//! Random atom configurations in a periodic unit-density cube are evolved
//! under sector-restricted dipolar Hamiltonians; ensemble-averaged yields
//! versus detuning give spectral lines whose widths can be compared with
//! and without resonant exchange, and against closed-form nearest-neighbour
//! pair statistics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dense;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod hilbert;
pub mod pair_statistics;
pub mod quadrature;
pub mod rng;
pub mod spectroscopy;

pub use error::{Error, Result};
pub use geometry::{AtomConfiguration, DipoleCoupling, Vec3};
pub use hilbert::{
    build_hamiltonian, creation_counter, enumerate_basis, CouplingPattern, HermitianOperator, Level, ModelCase,
    ModelSpec, OccupationWord, Process, SectorBasis, SparseHamiltonian,
};
pub use pair_statistics::{PairCdfResult, PairDistributionKind};
pub use dynamics::{EvolutionReport, StateVector};
pub use spectroscopy::{GaussianProfileSpec, LineWidthResult, RatioScanSpec, SpectrumCurve};
