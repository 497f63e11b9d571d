//! Single-excitation exchange model, solved by dense diagonalization.
//!
//! With one `s` among `n` `p` atoms the sector has dimension `n`, so every
//! configuration is diagonalized outright. The same eigenpairs give both the
//! survival probability of the excitation on its initial atom and the
//! pooled eigen-energy histogram.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::symmetric_eigen;
use crate::error::{Error, Result};
use crate::geometry::AtomConfiguration;
use crate::hilbert::{enumerate_basis, CouplingPattern, ModelSpec, OccupationWord};
use crate::rng::member_rng;

struct ToySpectrum {
    energies: Vec<f64>,
    /// `|<n|psi0>|^2` for each eigenvector
    weights: Vec<f64>,
}

fn toy_spectra(model: &ModelSpec, n_atoms: usize, n_configs: usize, seed: u64) -> Result<Vec<ToySpectrum>> {
    if n_atoms < 2 {
        return Err(Error::InvalidArgument("the exchange model needs at least two atoms".into()));
    }
    if n_configs == 0 {
        return Err(Error::InvalidArgument("need at least one configuration".into()));
    }
    if model.case != crate::hilbert::ModelCase::ToyExchange {
        return Err(Error::InvalidArgument("eigen-spectra are only computed for the toy exchange model".into()));
    }
    let basis = enumerate_basis(model, n_atoms, &OccupationWord::single_excitation(n_atoms, 0))?;
    let pattern = CouplingPattern::new(&basis)?;
    let start = basis.initial_index();
    (0..n_configs)
        .into_par_iter()
        .map(|i| {
            let config = AtomConfiguration::sample(n_atoms, &mut member_rng(seed, i as u64))?;
            let h = pattern.hamiltonian(&config)?.to_dense();
            let eig = symmetric_eigen(&h);
            let weights = (0..n_atoms).map(|k| eig.eigenvectors[(start, k)].powi(2)).collect();
            Ok(ToySpectrum { energies: eig.eigenvalues, weights })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_configs: usize,
}

impl DecayCurve {
    /// Linear interpolation of the mean survival probability.
    pub fn at(&self, t: f64) -> Option<f64> {
        let i = self.times.partition_point(|&x| x < t);
        if i == 0 {
            return (self.times.first() == Some(&t)).then(|| self.survival[0]);
        }
        if i == self.times.len() {
            return None;
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        Some(self.survival[i - 1] * (1.0 - w) + self.survival[i] * w)
    }
}

/// Ensemble-mean probability that the excitation is still on its initial atom.
pub fn toy_decay_curve(model: &ModelSpec, n_atoms: usize, n_configs: usize, times: &[f64], seed: u64) -> Result<DecayCurve> {
    if times.windows(2).any(|w| w[1] <= w[0]) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidArgument("times must be finite and strictly increasing".into()));
    }
    let spectra = toy_spectra(model, n_atoms, n_configs, seed)?;
    let mut sum = vec![0.0; times.len()];
    let mut sum2 = vec![0.0; times.len()];
    for spec in &spectra {
        for (j, &t) in times.iter().enumerate() {
            let amp: Complex64 =
                spec.energies.iter().zip(&spec.weights).map(|(e, w)| Complex64::from_polar(*w, -e * t)).sum();
            let p = amp.norm_sqr().min(1.0);
            sum[j] += p;
            sum2[j] += p * p;
        }
    }
    let n = n_configs as f64;
    let survival: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_errors = survival
        .iter()
        .zip(&sum2)
        .map(|(m, s2)| if n_configs > 1 { ((s2 / n - m * m).max(0.0) / (n - 1.0)).sqrt() } else { 0.0 })
        .collect();
    Ok(DecayCurve { times: times.to_vec(), survival, std_errors, n_configs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramBins {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for HistogramBins {
    fn default() -> Self {
        Self { lo: -20.0, hi: 20.0, count: 160 }
    }
}

impl HistogramBins {
    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.count as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * self.width()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EigenHistogram {
    pub bins: HistogramBins,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub n_eigenvalues: usize,
    /// Interval holding the central 90% of pooled eigenvalues.
    pub central_interval: (f64, f64),
    pub central_width: f64,
    /// Full width at half maximum of the binned distribution.
    pub fwhm: f64,
    pub median: f64,
    /// `(n_positive - n_negative) / n`
    pub sign_asymmetry: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Full width at half maximum of a histogram around its tallest bin; the
/// half-level crossings are interpolated between bin centers.
fn histogram_fwhm(bins: &HistogramBins, counts: &[u64]) -> f64 {
    let Some((peak, &top)) = counts.iter().enumerate().max_by_key(|(_, &c)| c) else {
        return 0.0;
    };
    let half = top as f64 / 2.0;
    let mut left = bins.lo;
    for i in (0..peak).rev() {
        if (counts[i] as f64) < half {
            let (c0, c1) = (counts[i] as f64, counts[i + 1] as f64);
            left = bins.center(i) + (half - c0) / (c1 - c0) * bins.width();
            break;
        }
    }
    let mut right = bins.hi;
    for i in (peak + 1)..counts.len() {
        if (counts[i] as f64) < half {
            let (c0, c1) = (counts[i - 1] as f64, counts[i] as f64);
            right = bins.center(i - 1) + (c0 - half) / (c0 - c1) * bins.width();
            break;
        }
    }
    right - left
}

/// Pooled eigen-energies of the exchange Hamiltonian over an ensemble.
pub fn eigenvalue_histogram(
    model: &ModelSpec,
    n_atoms: usize,
    n_configs: usize,
    bins: HistogramBins,
    seed: u64,
) -> Result<EigenHistogram> {
    if !(bins.hi > bins.lo) || bins.count == 0 {
        return Err(Error::InvalidArgument("histogram range must be non-empty".into()));
    }
    let spectra = toy_spectra(model, n_atoms, n_configs, seed)?;
    let mut all: Vec<f64> = spectra.into_iter().flat_map(|s| s.energies).collect();
    all.sort_by(f64::total_cmp);
    let mut counts = vec![0u64; bins.count];
    let (mut underflow, mut overflow) = (0, 0);
    for &e in &all {
        if e < bins.lo {
            underflow += 1;
        } else if e >= bins.hi {
            overflow += 1;
        } else {
            let i = (((e - bins.lo) / bins.width()) as usize).min(bins.count - 1);
            counts[i] += 1;
        }
    }
    let lo = quantile(&all, 0.05);
    let hi = quantile(&all, 0.95);
    let positive = all.iter().filter(|&&e| e > 0.0).count() as f64;
    let negative = all.iter().filter(|&&e| e < 0.0).count() as f64;
    Ok(EigenHistogram {
        bins,
        fwhm: histogram_fwhm(&bins, &counts),
        counts,
        underflow,
        overflow,
        n_eigenvalues: all.len(),
        central_interval: (lo, hi),
        central_width: hi - lo,
        median: quantile(&all, 0.5),
        sign_asymmetry: (positive - negative) / all.len() as f64,
    })
}
