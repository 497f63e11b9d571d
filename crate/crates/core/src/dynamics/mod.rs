//! Unitary evolution of sector states and the observables read off them.

mod krylov;
pub mod toy;

use std::time::{Duration, Instant};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::AtomConfiguration;
use crate::hilbert::{HermitianOperator, Level, SectorBasis, SparseHamiltonian};

pub use krylov::{KrylovOptions, KrylovPropagator, PropagationStats};
pub use toy::{eigenvalue_histogram, toy_decay_curve, DecayCurve, EigenHistogram, HistogramBins};

/// Runs whose norm moves by more than this are rejected.
pub const MAX_NORM_DRIFT: f64 = 1e-9;

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    /// Unit vector on basis state `index`.
    pub fn basis_state(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} out of range for dimension {dim}")));
        }
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim];
        amplitudes[index] = Complex64::new(1.0, 0.0);
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn populations(&self) -> impl Iterator<Item = f64> + '_ {
        self.amplitudes.iter().map(|a| a.norm_sqr())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvolutionReport {
    #[serde(skip)]
    pub final_state: StateVector,
    pub norm_drift: f64,
    pub steps_taken: usize,
    pub matvecs: usize,
    pub wall_time: Duration,
}

fn check_common(h: &SparseHamiltonian, psi0: &StateVector, t: f64, tol: f64) -> Result<()> {
    if psi0.dim() != h.dim() {
        return Err(Error::InvalidArgument(format!(
            "state dimension {} does not match Hamiltonian dimension {}",
            psi0.dim(),
            h.dim()
        )));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidArgument(format!("evolution time must be finite and non-negative, got {t}")));
    }
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if !h.is_finite() {
        return Err(Error::InvalidInput("Hamiltonian has non-finite entries".into()));
    }
    Ok(())
}

fn finish(state: StateVector, initial_norm: f64, stats: PropagationStats, started: Instant) -> Result<EvolutionReport> {
    let norm_drift = (state.norm() - initial_norm).abs();
    if norm_drift > MAX_NORM_DRIFT {
        return Err(Error::NormDrift { drift: norm_drift });
    }
    Ok(EvolutionReport {
        final_state: state,
        norm_drift,
        steps_taken: stats.steps,
        matvecs: stats.matvecs,
        wall_time: started.elapsed(),
    })
}

/// `psi(T) = exp(-i H T) psi0` with accumulated error below `tol`.
pub fn evolve(h: &SparseHamiltonian, psi0: &StateVector, t: f64, tol: f64) -> Result<EvolutionReport> {
    check_common(h, psi0, t, tol)?;
    let started = Instant::now();
    let mut prop = KrylovPropagator::new(h.dim(), KrylovOptions { tol, ..KrylovOptions::default() });
    let (state, stats) = evolve_with(&mut prop, h, psi0, t)?;
    finish(state, psi0.norm(), stats, started)
}

/// Evolution through a caller-owned workspace, for repeated runs of one dimension.
pub fn evolve_with<H: HermitianOperator + ?Sized>(
    prop: &mut KrylovPropagator,
    h: &H,
    psi0: &StateVector,
    t: f64,
) -> Result<(StateVector, PropagationStats)> {
    let mut state = psi0.clone();
    let stats = prop.propagate(h, state.amplitudes_mut(), t)?;
    Ok((state, stats))
}

/// Evolution of moving atoms: the Hamiltonian is held constant over segments
/// of length at most `rebuild_dt`, each built from the positions at the
/// segment midpoint. `h` carries the detuning and is refilled in place.
pub fn evolve_time_dependent(
    h: &mut SparseHamiltonian,
    config: &AtomConfiguration,
    psi0: &StateVector,
    t: f64,
    rebuild_dt: f64,
    tol: f64,
) -> Result<EvolutionReport> {
    check_common(h, psi0, t, tol)?;
    if !(rebuild_dt.is_finite() && rebuild_dt > 0.0) {
        return Err(Error::InvalidArgument(format!("rebuild_dt must be positive, got {rebuild_dt}")));
    }
    if config.velocities().is_none() {
        return Err(Error::InvalidState("time-dependent evolution needs atom velocities".into()));
    }
    let started = Instant::now();
    let segments = ((t / rebuild_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let dt = t / segments as f64;
    let mut prop = KrylovPropagator::new(h.dim(), KrylovOptions { tol: tol / segments as f64, ..KrylovOptions::default() });
    let mut state = psi0.clone();
    let mut total = PropagationStats::default();
    let pattern = h.pattern().clone();
    for seg in 0..segments {
        let midpoint = config.advance((seg as f64 + 0.5) * dt)?;
        pattern.refill(h, &midpoint)?;
        let stats = prop.propagate(&*h, state.amplitudes_mut(), dt).map_err(|e| match e {
            Error::Stiffness { time, step, .. } => Error::Stiffness {
                time: time + seg as f64 * dt,
                step,
                min_separation: midpoint.min_pair_separation(),
            },
            other => other,
        })?;
        total.steps += stats.steps;
        total.matvecs += stats.matvecs;
    }
    finish(state, psi0.norm(), total, started)
}

/// `|<psi_t|psi0>|^2`
pub fn survival_probability(psi_t: &StateVector, psi0: &StateVector) -> Result<f64> {
    if psi_t.dim() != psi0.dim() {
        return Err(Error::InvalidArgument("state dimensions differ".into()));
    }
    Ok(psi_t.inner(psi0).norm_sqr().min(1.0))
}

/// Expected fraction of atoms in `species`.
pub fn species_fraction(psi: &StateVector, basis: &SectorBasis, species: Level) -> Result<f64> {
    if !basis.model().case.alphabet().contains(&species) {
        return Err(Error::InvalidArgument(format!("level {species} is not part of the {} model", basis.model().case)));
    }
    if psi.dim() != basis.dim() {
        return Err(Error::InvalidArgument("state dimension does not match the basis".into()));
    }
    let weighted: f64 = psi.populations().zip(basis.states()).map(|(p, w)| p * w.count(species) as f64).sum();
    Ok(weighted / basis.n_atoms() as f64)
}

/// Fraction of `species` from precomputed per-state counts.
pub(crate) fn fraction_from_counts(psi: &StateVector, counts: &[u16], n_atoms: usize) -> f64 {
    psi.populations().zip(counts).map(|(p, &c)| p * c as f64).sum::<f64>() / n_atoms as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_configuration;
    use crate::hilbert::{enumerate_basis, CouplingPattern, ModelSpec, OccupationWord};
    use crate::dense::symmetric_eigen;
    use faer::Mat;

    /// Dense oracle: `U exp(-i Lambda t) U^T psi`.
    fn dense_evolve(h: &Mat<f64>, psi: &[Complex64], t: f64) -> Vec<Complex64> {
        let eig = symmetric_eigen(h);
        let n = h.nrows();
        let coeff: Vec<Complex64> = (0..n)
            .map(|k| (0..n).map(|i| psi[i] * eig.eigenvectors[(i, k)]).sum::<Complex64>())
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|k| coeff[k] * Complex64::from_polar(1.0, -eig.eigenvalues[k] * t) * eig.eigenvectors[(i, k)])
                    .sum()
            })
            .collect()
    }

    fn case_i_setup(n: usize, seed: u64, detuning: f64) -> (SectorBasis, SparseHamiltonian) {
        let m = ModelSpec::case_i(1.02, 0.98).with_detuning(detuning);
        let b = enumerate_basis(&m, n, &OccupationWord::uniform(Level::P, n)).unwrap();
        let cfg = sample_configuration(n, seed).unwrap();
        let h = CouplingPattern::new(&b).unwrap().hamiltonian(&cfg).unwrap();
        (b, h)
    }

    #[test]
    fn zero_time_is_identity() {
        let (b, h) = case_i_setup(4, 3, 2.0);
        let psi0 = StateVector::basis_state(b.dim(), 0).unwrap();
        let r = evolve(&h, &psi0, 0.0, 1e-8).unwrap();
        assert_eq!(r.final_state, psi0);
        assert_eq!(r.steps_taken, 0);
    }

    #[test]
    fn argument_errors() {
        let (b, h) = case_i_setup(4, 3, 2.0);
        let psi0 = StateVector::basis_state(b.dim(), 0).unwrap();
        assert!(evolve(&h, &psi0, -1.0, 1e-8).is_err());
        assert!(evolve(&h, &psi0, 1.0, 0.0).is_err());
        assert!(evolve(&h, &StateVector::basis_state(3, 0).unwrap(), 1.0, 1e-8).is_err());
        let mut bad = h.clone();
        bad.set_detuning(f64::NAN);
        assert!(matches!(evolve(&bad, &psi0, 1.0, 1e-8), Err(Error::InvalidInput(_))));
        let cfg = sample_configuration(4, 3).unwrap();
        let mut h2 = h.clone();
        assert!(matches!(
            evolve_time_dependent(&mut h2, &cfg, &psi0, 1.0, 0.1, 1e-8),
            Err(Error::InvalidState(_))
        ));
    }

    #[test]
    fn matches_dense_oracle() {
        for (n, seed, det) in [(4usize, 1u64, 0.0), (5, 2, 7.5), (6, 3, -20.0)] {
            let (b, h) = case_i_setup(n, seed, det);
            assert!(b.dim() <= 200);
            let psi0 = StateVector::basis_state(b.dim(), b.initial_index()).unwrap();
            let t = 3.4;
            let r = evolve(&h, &psi0, t, 1e-10).unwrap();
            let exact = dense_evolve(&h.to_dense(), psi0.amplitudes(), t);
            let err = r.final_state.amplitudes().iter().zip(&exact).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err <= 1e-7, "n={n} err={err}");
            assert!(r.norm_drift <= MAX_NORM_DRIFT);
        }
    }

    #[test]
    fn energy_and_norm_conserved() {
        let (b, h) = case_i_setup(6, 8, 5.0);
        let mut psi0 = StateVector::basis_state(b.dim(), 0).unwrap();
        psi0.amplitudes_mut()[1] = Complex64::new(0.0, 1.0);
        let s = 1.0 / 2f64.sqrt();
        psi0.amplitudes_mut().iter_mut().for_each(|a| *a *= s);
        let e0 = h.expectation(psi0.amplitudes());
        let r = evolve(&h, &psi0, 2.0, 1e-9).unwrap();
        let e1 = h.expectation(r.final_state.amplitudes());
        assert!((e1 - e0).abs() < 1e-7 * (1.0 + e0.abs()));
        assert!((r.final_state.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reversibility() {
        let (b, h) = case_i_setup(6, 9, -4.0);
        let psi0 = StateVector::basis_state(b.dim(), 0).unwrap();
        let tol = 1e-8;
        let mut prop = KrylovPropagator::new(h.dim(), KrylovOptions { tol, ..Default::default() });
        let (fwd, _) = evolve_with(&mut prop, &h, &psi0, 3.0).unwrap();
        let (back, _) = evolve_with(&mut prop, &h, &fwd, -3.0).unwrap();
        let err = back.amplitudes().iter().zip(psi0.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err <= 10.0 * tol, "err={err}");
    }

    #[test]
    fn survival_and_fractions() {
        let (b, h) = case_i_setup(4, 5, 1.0);
        let psi0 = StateVector::basis_state(b.dim(), 0).unwrap();
        assert_eq!(survival_probability(&psi0, &psi0).unwrap(), 1.0);
        let other = StateVector::basis_state(b.dim(), 1).unwrap();
        assert_eq!(survival_probability(&other, &psi0).unwrap(), 0.0);
        assert_eq!(species_fraction(&psi0, &b, Level::S).unwrap(), 0.0);
        assert!(species_fraction(&psi0, &b, Level::PPrime).is_err());
        let r = evolve(&h, &psi0, 1.3, 1e-8).unwrap();
        let total: f64 = b
            .model()
            .case
            .alphabet()
            .iter()
            .map(|&l| species_fraction(&r.final_state, &b, l).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn conserved_counter_expectation() {
        // case II: N_p - N_p' is zero in every sector state, so its mean stays zero
        let m = ModelSpec::case_ii(2.0, 0.5).with_detuning(3.0);
        let b = enumerate_basis(&m, 8, &OccupationWord::split(5, 3)).unwrap();
        let cfg = sample_configuration(8, 4).unwrap();
        let h = CouplingPattern::new(&b).unwrap().hamiltonian(&cfg).unwrap();
        let psi0 = StateVector::basis_state(b.dim(), b.initial_index()).unwrap();
        let r = evolve(&h, &psi0, 0.36, 1e-9).unwrap();
        let fp = species_fraction(&r.final_state, &b, Level::P).unwrap();
        let fpp = species_fraction(&r.final_state, &b, Level::PPrime).unwrap();
        assert!((fp - fpp).abs() < 1e-12);
        let fs = species_fraction(&r.final_state, &b, Level::S).unwrap();
        assert!((fs + fp - 5.0 / 8.0).abs() < 1e-9);
    }

    #[test]
    fn frozen_limit_of_time_dependent_evolution() {
        let (b, mut h) = case_i_setup(5, 12, 3.0);
        let cfg = sample_configuration(5, 12)
            .unwrap()
            .with_velocities(vec![[0.0; 3]; 5])
            .unwrap();
        let psi0 = StateVector::basis_state(b.dim(), 0).unwrap();
        let frozen = evolve(&h, &psi0, 3.4, 1e-9).unwrap();
        let moving = evolve_time_dependent(&mut h, &cfg, &psi0, 3.4, 3.4 / 20.0, 1e-9).unwrap();
        let err = frozen
            .final_state
            .amplitudes()
            .iter()
            .zip(moving.final_state.amplitudes())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-8, "err={err}");
    }

    #[test]
    fn halving_the_rebuild_interval_converges() {
        let (b, mut h) = case_i_setup(5, 21, 2.0);
        let cfg = sample_configuration(5, 21)
            .unwrap()
            .with_random_velocities(0.05, &mut crate::rng::member_rng(21, 1))
            .unwrap();
        let psi0 = StateVector::basis_state(b.dim(), b.initial_index()).unwrap();
        let t = 3.4;
        let f = |h: &mut SparseHamiltonian, segments: f64| {
            let r = evolve_time_dependent(h, &cfg, &psi0, t, t / segments, 1e-10).unwrap();
            species_fraction(&r.final_state, &b, Level::S).unwrap()
        };
        let (f100, f200, f400) = (f(&mut h, 100.0), f(&mut h, 200.0), f(&mut h, 400.0));
        assert!((f200 - f400).abs() < 1e-5, "{f200} vs {f400}");
        assert!((f200 - f400).abs() <= (f100 - f200).abs() + 1e-12);
    }

    #[test]
    fn case_ii_relabeling_symmetry() {
        // swapping s <-> s' (and p <-> p') together with the two dipole
        // moments leaves the p yield unchanged
        let cfg = sample_configuration(6, 17).unwrap();
        let word: OccupationWord = "ss'sss's".parse().unwrap();
        let swapped: OccupationWord = "s'ss's'ss'".parse().unwrap();
        for detuning in [0.0, 6.0, -15.0] {
            let f = |m: ModelSpec, w: &OccupationWord| {
                let b = enumerate_basis(&m.with_detuning(detuning), 6, w).unwrap();
                let h = CouplingPattern::new(&b).unwrap().hamiltonian(&cfg).unwrap();
                let psi0 = StateVector::basis_state(b.dim(), b.initial_index()).unwrap();
                let r = evolve(&h, &psi0, 0.36, 1e-12).unwrap();
                species_fraction(&r.final_state, &b, Level::P).unwrap()
            };
            let a = f(ModelSpec::case_ii(2.0, 0.5), &word);
            let c = f(ModelSpec::case_ii(0.5, 2.0), &swapped);
            assert!((a - c).abs() < 1e-10, "detuning {detuning}: {a} vs {c}");
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn krylov_matches_dense_and_keeps_norm(
                seed in 0u64..10_000,
                detuning in -30.0f64..30.0,
                t in 0.01f64..4.0,
                case_ii in any::<bool>(),
            ) {
                let (m, word) = if case_ii {
                    (ModelSpec::case_ii(2.0, 0.5), OccupationWord::split(3, 3))
                } else {
                    (ModelSpec::case_i(1.02, 0.98), OccupationWord::uniform(Level::P, 5))
                };
                let b = enumerate_basis(&m.with_detuning(detuning), word.len(), &word).unwrap();
                let h = CouplingPattern::new(&b).unwrap().hamiltonian(&sample_configuration(word.len(), seed).unwrap()).unwrap();
                let psi0 = StateVector::basis_state(b.dim(), b.initial_index()).unwrap();
                let r = evolve(&h, &psi0, t, 1e-10).unwrap();
                prop_assert!(r.norm_drift <= MAX_NORM_DRIFT);
                let exact = dense_evolve(&h.to_dense(), psi0.amplitudes(), t);
                let err = exact.iter().zip(r.final_state.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                prop_assert!(err <= 1e-7, "err {}", err);
            }
        }
    }
}
