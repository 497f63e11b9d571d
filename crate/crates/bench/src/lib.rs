//! Shared fixtures for the benchmarks.

use linewidth::{enumerate_basis, AtomConfiguration, CouplingPattern, ModelSpec, OccupationWord, SectorBasis, SparseHamiltonian};

/// Case I sector of `n` atoms together with a Hamiltonian for one sampled configuration.
pub fn case_i_fixture(n: usize, seed: u64) -> (SectorBasis, SparseHamiltonian) {
    let model = ModelSpec::case_i(1.0, 1.0);
    let basis = enumerate_basis(&model, n, &OccupationWord::uniform(linewidth::Level::P, n)).expect("basis");
    let pattern = CouplingPattern::new(&basis).expect("pattern");
    let config = linewidth::geometry::sample_configuration(n, seed).expect("configuration");
    let h = pattern.hamiltonian(&config).expect("hamiltonian");
    (basis, h)
}

/// Case II sector with `n / 2` atoms in each excited level.
pub fn case_ii_fixture(n: usize, seed: u64) -> (SectorBasis, SparseHamiltonian) {
    let model = ModelSpec::case_ii(1.0, 1.0);
    let basis = enumerate_basis(&model, n, &OccupationWord::split(n / 2, n - n / 2)).expect("basis");
    let pattern = CouplingPattern::new(&basis).expect("pattern");
    let config: AtomConfiguration = linewidth::geometry::sample_configuration(n, seed).expect("configuration");
    let h = pattern.hamiltonian(&config).expect("hamiltonian");
    (basis, h)
}
