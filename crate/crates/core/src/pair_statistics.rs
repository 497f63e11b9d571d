//! Nearest-neighbour pair statistics at unit density.
//!
//! `P(|V| <= delta)` is the probability that an atom's nearest neighbour
//! couples to it more weakly than `delta`, for either an isotropic `1/r^3`
//! interaction or the dipolar `(1 - 3 cos^2 theta)/r^3` one (both with
//! `c_d = 1`). The dipolar density carries an angular integral whose
//! integrand has a kink at `cos theta = 1/sqrt(3)`; it is always integrated
//! on the two smooth sides separately.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dipolar_coupling, isotropic_coupling, AtomConfiguration, DipoleCoupling};
use crate::quadrature::{integrate_with_breakpoints, QuadratureOptions};
use crate::rng::member_rng;

const FOUR_PI_OVER_3: f64 = 4.0 * PI / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PairDistributionKind {
    Isotropic,
    Dipolar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairCdfResult {
    pub delta: f64,
    pub density: f64,
    pub cumulative: f64,
}

/// Erlang nearest-neighbour distance density `4 pi r^2 exp(-4 pi r^3 / 3)`.
pub fn nearest_neighbor_pdf(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be non-negative, got {r}")));
    }
    Ok(4.0 * PI * r * r * (-FOUR_PI_OVER_3 * r * r * r).exp())
}

/// Probability that the nearest neighbour lies within `r`.
pub fn nearest_neighbor_cdf(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be non-negative, got {r}")));
    }
    Ok(-(-FOUR_PI_OVER_3 * r * r * r).exp_m1())
}

pub fn nearest_neighbor_median() -> f64 {
    (3.0 * std::f64::consts::LN_2 / (4.0 * PI)).cbrt()
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("detuning must be positive and finite, got {delta}")));
    }
    Ok(())
}

/// `dP(|V_iso| <= delta)/d delta`. Tends to 0 as `delta -> 0+`.
pub fn pair_density_isotropic(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(FOUR_PI_OVER_3 / (delta * delta) * (-FOUR_PI_OVER_3 / delta).exp())
}

/// Breakpoints on `[0, 1]` for integrands in `exp(-a |1 - 3x^2|)`: the kink
/// at `1/sqrt(3)` plus geometric offsets from it so that the peak of width
/// `~1/a` is resolved when `a` is large.
pub(crate) fn angular_breakpoints(a: f64) -> Vec<f64> {
    let kink = 1.0 / 3f64.sqrt();
    let mut points = vec![0.0, kink, 1.0];
    let mut w = 1.0 / (2.0 * 3f64.sqrt() * a);
    while w < 0.1 {
        for p in [kink - w, kink + w] {
            if p > 0.0 && p < 1.0 {
                points.push(p);
            }
        }
        w *= 10.0;
    }
    points.sort_by(f64::total_cmp);
    points
}

/// `dP(|V_dip| <= delta)/d delta`. Tends to `sqrt(3)/(4 pi)` as `delta -> 0+`.
pub fn pair_density_dipolar(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let a = FOUR_PI_OVER_3 / delta;
    let angular = integrate_with_breakpoints(
        |x| {
            let g = (1.0 - 3.0 * x * x).abs();
            g * (-a * g).exp()
        },
        &angular_breakpoints(a),
        // the integral is of order 1/a^2 when a is large
        QuadratureOptions { abs_tol: 1e-10 / (1.0 + a * a), rel_tol: 1e-11, max_intervals: 4000 },
    )?;
    Ok(FOUR_PI_OVER_3 / (delta * delta) * angular.value)
}

pub fn pair_density(delta: f64, kind: PairDistributionKind) -> Result<f64> {
    match kind {
        PairDistributionKind::Isotropic => pair_density_isotropic(delta),
        PairDistributionKind::Dipolar => pair_density_dipolar(delta),
    }
}

/// `P(|V| <= delta)` by quadrature of the density over `[0, delta]`.
pub fn cumulative_p(delta: f64, kind: PairDistributionKind) -> Result<f64> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!("detuning must be non-negative and finite, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(0.0);
    }
    // decade breakpoints let the refinement follow the 1/delta^2 tail
    let mut points = vec![0.0];
    let mut edge = 1e-3;
    while edge < delta {
        points.push(edge);
        edge *= 10.0;
    }
    points.push(delta);
    let density = |d: f64| if d <= 0.0 { 0.0 } else { pair_density(d, kind).unwrap_or(f64::NAN) };
    let res = integrate_with_breakpoints(
        density,
        &points,
        QuadratureOptions { abs_tol: 1e-13, rel_tol: 1e-10, max_intervals: 4000 },
    )?;
    if !res.value.is_finite() {
        return Err(Error::Quadrature { error: f64::NAN, intervals: res.intervals });
    }
    Ok(res.value.clamp(0.0, 1.0))
}

pub fn pair_cdf_point(delta: f64, kind: PairDistributionKind) -> Result<PairCdfResult> {
    Ok(PairCdfResult { delta, density: pair_density(delta, kind)?, cumulative: cumulative_p(delta, kind)? })
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(Error::InvalidArgument(format!("bad log grid [{lo}, {hi}] with {n} points")));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    Ok((0..n).map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp()).collect())
}

/// Pooled nearest-neighbour interaction strengths `|V|` from random configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalPairCdf {
    kind: PairDistributionKind,
    samples: Vec<f64>,
}

impl EmpiricalPairCdf {
    pub fn kind(&self) -> PairDistributionKind {
        self.kind
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Fraction of samples with `|V| <= delta`.
    pub fn cdf(&self, delta: f64) -> f64 {
        let count = self.samples.partition_point(|&v| v <= delta);
        count as f64 / self.samples.len() as f64
    }

    pub fn table(&self, grid: &[f64]) -> Vec<(f64, f64)> {
        grid.iter().map(|&d| (d, self.cdf(d))).collect()
    }
}

/// Monte Carlo sample of `|V|` between every atom and its minimum-image
/// nearest neighbour.
pub fn empirical_pair_cdf(
    n_atoms: usize,
    n_configs: usize,
    kind: PairDistributionKind,
    seed: u64,
) -> Result<EmpiricalPairCdf> {
    if n_atoms < 2 {
        return Err(Error::InvalidArgument("need at least two atoms for pair statistics".into()));
    }
    if n_configs == 0 {
        return Err(Error::InvalidArgument("need at least one configuration".into()));
    }
    let unit = DipoleCoupling::new(1.0)?;
    let per_config: Vec<Vec<f64>> = (0..n_configs)
        .into_par_iter()
        .map(|i| {
            let config = AtomConfiguration::sample(n_atoms, &mut member_rng(seed, i as u64))?;
            config
                .nearest_neighbor_displacements()
                .into_iter()
                .map(|d| {
                    Ok(match kind {
                        PairDistributionKind::Isotropic => isotropic_coupling(d)?,
                        PairDistributionKind::Dipolar => dipolar_coupling(d, unit)?.abs(),
                    })
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut samples: Vec<f64> = per_config.into_iter().flatten().collect();
    samples.sort_by(f64::total_cmp);
    Ok(EmpiricalPairCdf { kind, samples })
}
