//! Ensemble-averaged excitation spectra, Gaussian cloud averaging, and
//! line-width extraction.
//!
//! Detunings and widths are in units of the mean creation coupling of the
//! model (`mu_sp mu_sp'` for case I, `mu_sp mu_s'p'` for case II, at unit
//! density); times in the inverse of that unit.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fraction_from_counts, KrylovOptions, KrylovPropagator, StateVector, DEFAULT_TOL, MAX_NORM_DRIFT};
use crate::error::{Error, Result};
use crate::geometry::AtomConfiguration;
use crate::hilbert::{enumerate_basis, CouplingPattern, Level, ModelCase, ModelSpec, OccupationWord, SectorBasis};
use crate::rng::member_rng;

/// Coarse grid over `[-80, 80]` in steps of 4 merged with a fine grid over
/// `[-20, 20]` in steps of 0.5.
pub fn default_detuning_grid() -> Vec<f64> {
    let mut grid: Vec<f64> = (-20..=20).map(|i| 4.0 * i as f64).collect();
    grid.extend((-40..=40).map(|i| 0.5 * i as f64));
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(hi > lo) || n < 2 {
        return Err(Error::InvalidArgument(format!("bad grid [{lo}, {hi}] with {n} points")));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionSpec {
    /// Speed of every atom; directions are uniformly random.
    pub speed: f64,
    /// Interval between Hamiltonian rebuilds; `None` means `t_final / 200`.
    pub rebuild_dt: Option<f64>,
}

/// Everything needed to compute one spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRequest {
    pub model: ModelSpec,
    pub n_atoms: usize,
    /// Case II only: atoms starting in `s` (the rest start in `s'`).
    /// Defaults to half of `n_atoms`.
    pub s_count: Option<usize>,
    pub t_final: f64,
    pub grid: Vec<f64>,
    pub n_configs: usize,
    pub seed: u64,
    pub tol: f64,
    pub motion: Option<MotionSpec>,
}

impl SpectrumRequest {
    pub fn new(model: ModelSpec, n_atoms: usize, t_final: f64, n_configs: usize, seed: u64) -> Self {
        Self {
            model,
            n_atoms,
            s_count: None,
            t_final,
            grid: default_detuning_grid(),
            n_configs,
            seed,
            tol: DEFAULT_TOL,
            motion: None,
        }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_s_count(mut self, s_count: usize) -> Self {
        self.s_count = Some(s_count);
        self
    }

    pub fn with_motion(mut self, motion: MotionSpec) -> Self {
        self.motion = Some(motion);
        self
    }

    /// Initial occupation word: all `p` (case I), `s...s s'...s'` (case II),
    /// or one `s` on atom 0 (toy).
    pub fn initial_word(&self) -> Result<OccupationWord> {
        match self.model.case {
            ModelCase::ToyExchange => Ok(OccupationWord::single_excitation(self.n_atoms, 0)),
            ModelCase::CaseI => Ok(OccupationWord::uniform(Level::P, self.n_atoms)),
            ModelCase::CaseII => {
                let n1 = self.s_count.unwrap_or(self.n_atoms / 2);
                if n1 > self.n_atoms {
                    return Err(Error::InvalidArgument(format!("{n1} s atoms out of {}", self.n_atoms)));
                }
                Ok(OccupationWord::split(n1, self.n_atoms - n1))
            }
        }
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.n_configs == 0 {
            return Err(Error::InvalidArgument("n_configs must be at least 1".into()));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidArgument("detuning grid is empty".into()));
        }
        if self.grid.windows(2).any(|w| w[1] <= w[0]) || self.grid.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidArgument("detuning grid must be finite and strictly increasing".into()));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidArgument(format!("evolution time must be non-negative, got {}", self.t_final)));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tolerance must be positive".into()));
        }
        if self.n_atoms < 2 {
            return Err(Error::InvalidArgument("need at least two atoms".into()));
        }
        if let Some(m) = &self.motion {
            if !(m.speed.is_finite() && m.speed >= 0.0) {
                return Err(Error::InvalidArgument("speed must be non-negative".into()));
            }
            if let Some(dt) = m.rebuild_dt {
                if !(dt > 0.0) {
                    return Err(Error::InvalidArgument("rebuild_dt must be positive".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMetadata {
    pub model: ModelSpec,
    pub n_atoms: usize,
    pub s_count: Option<usize>,
    pub t_final: f64,
    pub seed: u64,
    pub tol: f64,
    pub motion: Option<MotionSpec>,
    pub species: Level,
    pub convolution: Option<GaussianProfileSpec>,
    /// Largest fraction of kernel weight that fell outside the raw curve and
    /// was taken as zero during convolution.
    pub zero_padded_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub detunings: Vec<f64>,
    pub yields: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub n_configs: usize,
    pub metadata: SpectrumMetadata,
}

impl SpectrumCurve {
    /// Linear interpolation of the yield; `None` outside the grid.
    pub fn yield_at(&self, detuning: f64) -> Option<f64> {
        interpolate(&self.detunings, &self.yields, detuning)
    }

    pub fn std_error_at(&self, detuning: f64) -> Option<f64> {
        interpolate(&self.detunings, &self.std_errors, detuning)
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> Option<f64> {
    let n = xs.len();
    if n == 0 || x < xs[0] || x > xs[n - 1] {
        return None;
    }
    let i = xs.partition_point(|&v| v < x);
    if i < n && xs[i] == x {
        return Some(ys[i]);
    }
    let (x0, x1) = (xs[i - 1], xs[i]);
    let w = (x - x0) / (x1 - x0);
    Some(ys[i - 1] * (1.0 - w) + ys[i] * w)
}

/// Reusable pieces of a spectrum run: the sector basis and its coupling pattern.
pub struct SpectrumEngine {
    request: SpectrumRequest,
    basis: SectorBasis,
    pattern: std::sync::Arc<CouplingPattern>,
    counts: Vec<u16>,
}

impl SpectrumEngine {
    pub fn new(request: SpectrumRequest) -> Result<Self> {
        request.validate()?;
        let initial = request.initial_word()?;
        let basis = enumerate_basis(&request.model, request.n_atoms, &initial)?;
        let pattern = CouplingPattern::new(&basis)?;
        let counts = basis.species_counts(request.model.case.yield_species());
        Ok(Self { request, basis, pattern, counts })
    }

    pub fn basis(&self) -> &SectorBasis {
        &self.basis
    }

    pub fn request(&self) -> &SpectrumRequest {
        &self.request
    }

    /// Configuration of ensemble member `index`; case II atoms are assigned
    /// to `s` or `s'` uniformly at random.
    pub fn member_configuration(&self, index: usize) -> Result<AtomConfiguration> {
        let r = &self.request;
        let mut rng = member_rng(r.seed, index as u64);
        let mut config = AtomConfiguration::sample(r.n_atoms, &mut rng)?;
        if r.model.case == ModelCase::CaseII {
            let mut order: Vec<usize> = (0..r.n_atoms).collect();
            order.shuffle(&mut rng);
            config = config.permuted(&order);
        }
        if let Some(m) = &r.motion {
            config = config.with_random_velocities(m.speed, &mut rng)?;
        }
        Ok(config)
    }

    /// Yield at every grid detuning for ensemble member `index`.
    pub fn member_yields(&self, index: usize, prop: &mut KrylovPropagator) -> Result<Vec<f64>> {
        let r = &self.request;
        let config = self.member_configuration(index)?;
        let wrap = |detuning: f64, e: Error| Error::EnsembleMember { config_index: index, detuning, source: Box::new(e) };
        let mut h = self.pattern.hamiltonian(&config).map_err(|e| wrap(f64::NAN, e))?;
        let psi0 = StateVector::basis_state(self.basis.dim(), self.basis.initial_index())?;
        let mut out = Vec::with_capacity(r.grid.len());
        for &detuning in &r.grid {
            h.set_detuning(detuning);
            let state = match &r.motion {
                None => {
                    let mut state = psi0.clone();
                    prop.propagate(&h, state.amplitudes_mut(), r.t_final).map_err(|e| {
                        wrap(
                            detuning,
                            match e {
                                Error::Stiffness { time, step, .. } => Error::Stiffness {
                                    time,
                                    step,
                                    min_separation: config.min_pair_separation(),
                                },
                                other => other,
                            },
                        )
                    })?;
                    let drift = (state.norm() - 1.0).abs();
                    if drift > MAX_NORM_DRIFT {
                        return Err(wrap(detuning, Error::NormDrift { drift }));
                    }
                    state
                }
                Some(m) => {
                    let dt = m.rebuild_dt.unwrap_or(r.t_final / 200.0).max(f64::MIN_POSITIVE);
                    crate::dynamics::evolve_time_dependent(&mut h, &config, &psi0, r.t_final, dt, r.tol)
                        .map_err(|e| wrap(detuning, e))?
                        .final_state
                }
            };
            out.push(fraction_from_counts(&state, &self.counts, r.n_atoms));
        }
        log::debug!("configuration {index} done");
        Ok(out)
    }

    pub fn run(&self) -> Result<SpectrumCurve> {
        let r = &self.request;
        let dim = self.basis.dim();
        let opts = KrylovOptions { tol: r.tol, ..KrylovOptions::default() };
        let per_member: Vec<Vec<f64>> = (0..r.n_configs)
            .into_par_iter()
            .map_init(|| KrylovPropagator::new(dim, opts), |prop, i| self.member_yields(i, prop))
            .collect::<Result<_>>()?;
        let (yields, std_errors) = ensemble_mean(&per_member, r.grid.len());
        Ok(SpectrumCurve {
            detunings: r.grid.clone(),
            yields,
            std_errors,
            n_configs: r.n_configs,
            metadata: SpectrumMetadata {
                model: r.model,
                n_atoms: r.n_atoms,
                s_count: if r.model.case == ModelCase::CaseII { Some(self.basis.state(self.basis.initial_index()).count(Level::S)) } else { None },
                t_final: r.t_final,
                seed: r.seed,
                tol: r.tol,
                motion: r.motion,
                species: r.model.case.yield_species(),
                convolution: None,
                zero_padded_weight: 0.0,
            },
        })
    }
}

/// Mean and standard error per grid point, summed in member order.
fn ensemble_mean(per_member: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = per_member.len() as f64;
    let mut sum = vec![0.0; len];
    let mut sum2 = vec![0.0; len];
    for row in per_member {
        for (j, &v) in row.iter().enumerate() {
            sum[j] += v;
            sum2[j] += v * v;
        }
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let err = mean
        .iter()
        .zip(&sum2)
        .map(|(m, s2)| if n > 1.0 { ((s2 / n - m * m).max(0.0) / (n - 1.0)).sqrt() } else { 0.0 })
        .collect();
    (mean, err)
}

/// Ensemble-averaged yield versus detuning.
pub fn spectrum(request: SpectrumRequest) -> Result<SpectrumCurve> {
    SpectrumEngine::new(request)?.run()
}

/// Gaussian cloud profile `n(r) ∝ exp(-r^2 / sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianProfileSpec {
    pub sigma: f64,
    pub quadrature_points: usize,
    pub r_max_over_sigma: f64,
}

impl Default for GaussianProfileSpec {
    fn default() -> Self {
        Self { sigma: 500.0, quadrature_points: 4000, r_max_over_sigma: 6.0 }
    }
}

impl GaussianProfileSpec {
    pub fn with_sigma(sigma: f64) -> Self {
        Self { sigma, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.r_max_over_sigma >= 4.0) {
            return Err(Error::InvalidArgument("r_max_over_sigma must be at least 4".into()));
        }
        if self.quadrature_points < 2 {
            return Err(Error::InvalidArgument("need at least two quadrature intervals".into()));
        }
        Ok(())
    }
}

/// Average a homogeneous spectrum over a Gaussian cloud. The local density at
/// radius `r` is `2 sqrt(2) exp(-r^2/sigma^2)` times the mean, so the local
/// spectrum is the homogeneous one at detuning `delta exp(r^2/sigma^2) / (2 sqrt 2)`;
/// shells are weighted by `n(r) r^2`. Detunings beyond the raw grid count as zero yield.
pub fn gaussian_convolve(curve: &SpectrumCurve, profile: &GaussianProfileSpec) -> Result<SpectrumCurve> {
    profile.validate()?;
    if curve.detunings.len() < 2 {
        return Err(Error::CurveSupport("convolution needs at least two grid points".into()));
    }
    let n = profile.quadrature_points + profile.quadrature_points % 2;
    let r_max = profile.r_max_over_sigma * profile.sigma;
    let h = r_max / n as f64;
    let inv_sigma2 = 1.0 / (profile.sigma * profile.sigma);
    let scale0 = 1.0 / (2.0 * std::f64::consts::SQRT_2);
    // Simpson nodes: (detuning scale, weight)
    let nodes: Vec<(f64, f64)> = (0..=n)
        .map(|i| {
            let r = i as f64 * h;
            let simpson = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let x = r * r * inv_sigma2;
            (scale0 * x.exp(), simpson * (-x).exp() * r * r)
        })
        .collect();
    let norm: f64 = nodes.iter().map(|(_, w)| w).sum();
    let (lo, hi) = (curve.detunings[0], curve.detunings[curve.detunings.len() - 1]);
    let mut padded: f64 = 0.0;
    let mut yields = Vec::with_capacity(curve.detunings.len());
    let mut errors = Vec::with_capacity(curve.detunings.len());
    for &d in &curve.detunings {
        let (mut acc, mut acc_err, mut outside) = (0.0, 0.0, 0.0);
        for &(scale, w) in &nodes {
            let x = d * scale;
            if x < lo || x > hi {
                outside += w;
                continue;
            }
            acc += w * interpolate(&curve.detunings, &curve.yields, x).unwrap_or(0.0);
            acc_err += w * interpolate(&curve.detunings, &curve.std_errors, x).unwrap_or(0.0);
        }
        padded = padded.max(outside / norm);
        yields.push(acc / norm);
        errors.push(acc_err / norm);
    }
    if padded > 1e-6 {
        log::warn!(
            "Gaussian convolution: up to {:.1}% of the kernel weight fell outside [{lo}, {hi}] and was taken as zero",
            100.0 * padded
        );
    }
    let mut metadata = curve.metadata.clone();
    metadata.convolution = Some(*profile);
    metadata.zero_padded_weight = padded;
    Ok(SpectrumCurve { detunings: curve.detunings.clone(), yields, std_errors: errors, n_configs: curve.n_configs, metadata })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineWidthResult {
    pub fwhm: f64,
    pub half_max: f64,
    pub peak: f64,
    pub peak_detuning: f64,
    pub baseline: f64,
    pub left_cross: f64,
    pub right_cross: f64,
    pub uncertainty: f64,
}

impl LineWidthResult {
    /// Half-widths measured from zero detuning, `(-left_cross, right_cross)`.
    pub fn half_widths(&self) -> (f64, f64) {
        (-self.left_cross, self.right_cross)
    }
}

/// Crossing of `level` between samples 0 and 1 with the partial derivatives
/// of the crossing position with respect to `y0`, `y1` and `level`.
fn crossing(x0: f64, y0: f64, x1: f64, y1: f64, level: f64) -> (f64, f64, f64, f64) {
    let dx = x1 - x0;
    let dy = y1 - y0;
    let x = x0 + (level - y0) / dy * dx;
    let d_y0 = (level - y1) / (dy * dy) * dx;
    let d_y1 = -(level - y0) / (dy * dy) * dx;
    let d_level = dx / dy;
    (x, d_y0, d_y1, d_level)
}

/// Full width at half maximum above a baseline taken from the outermost 10%
/// of grid points on each side. The outermost half-level crossings are used
/// and located by linear interpolation.
pub fn extract_fwhm(curve: &SpectrumCurve) -> Result<LineWidthResult> {
    let (x, y, e) = (&curve.detunings, &curve.yields, &curve.std_errors);
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::CurveSupport("need at least three points to locate a peak".into()));
    }
    let edge = ((0.1 * n as f64).round() as usize).max(1);
    let base_idx: Vec<usize> = (0..edge).chain(n - edge..n).collect();
    let baseline = base_idx.iter().map(|&i| y[i]).sum::<f64>() / base_idx.len() as f64;
    let base_var = base_idx.iter().map(|&i| e.get(i).copied().unwrap_or(0.0).powi(2)).sum::<f64>()
        / (base_idx.len() * base_idx.len()) as f64;
    let (ip, &peak) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::CurveSupport("empty curve".into()))?;
    if !(peak > baseline) {
        return Err(Error::CurveSupport("curve has no maximum above its baseline".into()));
    }
    let half = baseline + 0.5 * (peak - baseline);
    let sigma_half = 0.5 * (e.get(ip).copied().unwrap_or(0.0).powi(2) + base_var).sqrt();

    let left = (0..ip).find(|&i| y[i] < half && y[i + 1] >= half).ok_or_else(|| {
        Error::CurveSupport("no half-maximum crossing left of the peak; widen the detuning grid".into())
    })?;
    let right = ((ip + 1)..n).rev().find(|&i| y[i] < half && y[i - 1] >= half).ok_or_else(|| {
        Error::CurveSupport("no half-maximum crossing right of the peak; widen the detuning grid".into())
    })?;
    let err = |i: usize| e.get(i).copied().unwrap_or(0.0);
    let (xl, l0, l1, lh) = crossing(x[left], y[left], x[left + 1], y[left + 1], half);
    let (xr, r0, r1, rh) = crossing(x[right - 1], y[right - 1], x[right], y[right], half);
    let var = (l0 * err(left)).powi(2)
        + (l1 * err(left + 1)).powi(2)
        + (r0 * err(right - 1)).powi(2)
        + (r1 * err(right)).powi(2)
        + ((rh - lh) * sigma_half).powi(2);
    Ok(LineWidthResult {
        fwhm: xr - xl,
        half_max: half,
        peak,
        peak_detuning: x[ip],
        baseline,
        left_cross: xl,
        right_cross: xr,
        uncertainty: var.sqrt(),
    })
}

/// Population ratios `nu = (n_s - n_s') / n` realized by integer splits of `n_atoms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioScanSpec {
    pub n_atoms: usize,
    pub nu_values: Vec<f64>,
    pub s_counts: Vec<usize>,
}

impl RatioScanSpec {
    pub fn new(n_atoms: usize, nu_values: Vec<f64>) -> Result<Self> {
        let mut s_counts = Vec::with_capacity(nu_values.len());
        for &nu in &nu_values {
            if !(-1.0..=1.0).contains(&nu) {
                return Err(Error::InvalidArgument(format!("nu = {nu} outside [-1, 1]")));
            }
            let n1 = 0.5 * n_atoms as f64 * (1.0 + nu);
            if (n1 - n1.round()).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "nu = {nu} cannot be realized with {n_atoms} atoms (would need {n1} s atoms)"
                )));
            }
            s_counts.push(n1.round() as usize);
        }
        Ok(Self { n_atoms, nu_values, s_counts })
    }

    /// Every split with `n_s >= n_s'` and `|nu| <= nu_max`.
    pub fn nonnegative(n_atoms: usize, nu_max: f64) -> Result<Self> {
        let nus = (0..=n_atoms)
            .rev()
            .map(|n1| (2.0 * n1 as f64 - n_atoms as f64) / n_atoms as f64)
            .filter(|&nu| nu >= -1e-12 && nu <= nu_max + 1e-12)
            .map(|nu| nu.max(0.0))
            .collect::<Vec<_>>();
        let mut nus = nus;
        nus.sort_by(f64::total_cmp);
        Self::new(n_atoms, nus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioWidth {
    pub nu: f64,
    pub s_count: usize,
    pub s_prime_count: usize,
    pub width: LineWidthResult,
}

/// Line width of case II against the initial `s`/`s'` population ratio.
pub fn width_vs_ratio(
    scan: &RatioScanSpec,
    base: &SpectrumRequest,
    convolution: Option<&GaussianProfileSpec>,
) -> Result<Vec<RatioWidth>> {
    if base.model.case != ModelCase::CaseII {
        return Err(Error::InvalidArgument("ratio scans apply to case II".into()));
    }
    scan.nu_values
        .iter()
        .zip(&scan.s_counts)
        .map(|(&nu, &n1)| {
            let mut req = base.clone();
            req.n_atoms = scan.n_atoms;
            req.s_count = Some(n1);
            let mut curve = spectrum(req)?;
            if let Some(p) = convolution {
                curve = gaussian_convolve(&curve, p)?;
            }
            let width = extract_fwhm(&curve)?;
            log::info!("nu = {nu:.3}: width {:.3} ± {:.3}", width.fwhm, width.uncertainty);
            Ok(RatioWidth { nu, s_count: n1, s_prime_count: scan.n_atoms - n1, width })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteSizeScan {
    pub rows: Vec<(usize, LineWidthResult)>,
    /// Width extrapolated to `1/N -> 0` by a straight-line fit in `1/N`.
    pub extrapolated: f64,
    pub slope: f64,
    /// Root-mean-square residual of the fit.
    pub fit_residual: f64,
}

/// Least-squares line `w = a + b / N`.
pub fn extrapolate_inverse_size(rows: &[(usize, f64)]) -> Result<(f64, f64, f64)> {
    if rows.len() < 2 {
        return Err(Error::InvalidArgument("extrapolation needs at least two sizes".into()));
    }
    let k = rows.len() as f64;
    let xs: Vec<f64> = rows.iter().map(|(n, _)| 1.0 / *n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|(_, w)| *w).collect();
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("extrapolation needs at least two distinct sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / k).sqrt();
    Ok((intercept, slope, rms))
}

pub fn finite_size_scan(base: &SpectrumRequest, sizes: &[usize]) -> Result<FiniteSizeScan> {
    if sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("sizes must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let mut req = base.clone();
        req.n_atoms = n;
        if req.model.case == ModelCase::CaseII {
            req.s_count = Some(n / 2);
        }
        let width = extract_fwhm(&spectrum(req)?)?;
        log::info!("N = {n}: width {:.3} ± {:.3}", width.fwhm, width.uncertainty);
        rows.push((n, width));
    }
    let (extrapolated, slope, fit_residual) =
        extrapolate_inverse_size(&rows.iter().map(|(n, w)| (*n, w.fwhm)).collect::<Vec<_>>())?;
    Ok(FiniteSizeScan { rows, extrapolated, slope, fit_residual })
}
