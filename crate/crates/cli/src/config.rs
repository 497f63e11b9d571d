//! Run configuration: a flat `key = value` file plus command-line overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use linewidth::spectroscopy::{linear_grid, SpectrumRequest};
use linewidth::{GaussianProfileSpec, ModelCase, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Subcommand {
    ToyDecay,
    ToyBand,
    Spectrum,
    Convolve,
    Pairdist,
    WidthVsNu,
    FiniteSize,
    Motion,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::ToyDecay,
        Subcommand::ToyBand,
        Subcommand::Spectrum,
        Subcommand::Convolve,
        Subcommand::Pairdist,
        Subcommand::WidthVsNu,
        Subcommand::FiniteSize,
        Subcommand::Motion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::ToyDecay => "toy-decay",
            Subcommand::ToyBand => "toy-band",
            Subcommand::Spectrum => "spectrum",
            Subcommand::Convolve => "convolve",
            Subcommand::Pairdist => "pairdist",
            Subcommand::WidthVsNu => "width-vs-nu",
            Subcommand::FiniteSize => "finite-size",
            Subcommand::Motion => "motion",
        }
    }

    fn default_case(self) -> ModelCase {
        match self {
            Subcommand::ToyDecay | Subcommand::ToyBand | Subcommand::Pairdist => ModelCase::ToyExchange,
            Subcommand::WidthVsNu => ModelCase::CaseII,
            _ => ModelCase::CaseI,
        }
    }

    /// Keys accepted by this subcommand, in echo order.
    pub fn keys(self) -> Vec<&'static str> {
        const MODEL: [&str; 7] = ["case", "mu_sp", "mu_sp_prime", "mu_s_prime_p_prime", "exchange", "creation", "T"];
        const GRID: [&str; 4] = ["tol", "grid_min", "grid_max", "grid_points"];
        const PROFILE: [&str; 3] = ["sigma", "quadrature_points", "r_max_over_sigma"];
        let mut keys: Vec<&str> = Vec::new();
        match self {
            Subcommand::ToyDecay => keys.extend(["mu_sp", "n_atoms", "t_max", "t_points"]),
            Subcommand::ToyBand => keys.extend(["mu_sp", "n_atoms", "hist_min", "hist_max", "hist_bins"]),
            Subcommand::Pairdist => keys.extend(["n_atoms", "delta_min", "delta_max", "delta_points", "empirical"]),
            Subcommand::Spectrum => {
                keys.extend(MODEL);
                keys.extend(["n_atoms", "nu"]);
                keys.extend(GRID);
            }
            Subcommand::Convolve => {
                keys.extend(MODEL);
                keys.extend(["n_atoms", "nu"]);
                keys.extend(GRID);
                keys.extend(PROFILE);
            }
            Subcommand::WidthVsNu => {
                keys.extend(MODEL);
                keys.extend(["n_atoms", "nu_values"]);
                keys.extend(GRID);
                keys.push("convolve");
                keys.extend(PROFILE);
            }
            Subcommand::FiniteSize => {
                keys.extend(MODEL);
                keys.extend(["sizes", "nu"]);
                keys.extend(GRID);
            }
            Subcommand::Motion => {
                keys.extend(MODEL);
                keys.extend(["n_atoms", "nu"]);
                keys.extend(GRID);
                keys.extend(["speed", "rebuild_dt"]);
            }
        }
        keys.extend(["n_configs", "master_seed", "worker_count", "output_dir", "plot_script"]);
        keys
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Subcommand {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Subcommand::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| format!("unknown subcommand {s:?}"))
    }
}

/// One problem with a configuration, tied to the key that causes it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub case: ModelCase,
    /// Defaults depend on the case: 1 (toy), 1.02 (case I), 2 (case II).
    pub mu_sp: Option<f64>,
    pub mu_sp_prime: f64,
    pub mu_s_prime_p_prime: f64,
    pub exchange: bool,
    pub creation: bool,
    /// Defaults: 256 (toy), 10 (case I), 20 (case II).
    pub n_atoms: Option<usize>,
    /// Case II population ratio `(n_s - n_s') / n`.
    pub nu: f64,
    /// Defaults: 3.4 (case I), 0.36 (case II).
    pub t_final: Option<f64>,
    pub tol: f64,
    pub grid_min: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_points: Option<usize>,
    pub sigma: f64,
    pub quadrature_points: usize,
    pub r_max_over_sigma: f64,
    pub convolve: bool,
    pub t_max: f64,
    pub t_points: usize,
    pub hist_min: f64,
    pub hist_max: f64,
    pub hist_bins: usize,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_points: usize,
    pub empirical: bool,
    pub nu_values: Vec<f64>,
    pub sizes: Vec<usize>,
    pub speed: f64,
    /// `None` means `T / 200`.
    pub rebuild_dt: Option<f64>,
    pub n_configs: usize,
    pub master_seed: Option<u64>,
    pub worker_count: usize,
    pub output_dir: PathBuf,
    pub plot_script: bool,
}

/// Split a config file into `(key, value)` pairs. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>, Vec<Violation>> {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        match line.split_once('=') {
            Some((k, v)) if !k.trim().is_empty() => entries.push((k.trim().to_string(), v.trim().to_string())),
            _ => errors.push(Violation::new(format!("line {}", i + 1), format!("expected `key = value`, got {line:?}"))),
        }
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

/// Parse a `KEY=VALUE` override.
pub fn parse_override(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(format!("expected KEY=VALUE, got {s:?}")),
    }
}

fn parse<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(format!("expected a boolean, got {v:?}")),
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>, String> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect()
}

fn parse_optional<T: FromStr>(v: &str) -> Result<Option<T>, String> {
    if v.eq_ignore_ascii_case("default") {
        Ok(None)
    } else {
        parse(v).map(Some)
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

fn show<T: ToString>(x: &Option<T>) -> String {
    x.as_ref().map_or_else(|| "default".to_string(), ToString::to_string)
}

impl RunConfig {
    pub fn new(subcommand: Subcommand) -> Self {
        Self {
            subcommand,
            case: subcommand.default_case(),
            mu_sp: None,
            mu_sp_prime: 0.98,
            mu_s_prime_p_prime: 0.5,
            exchange: true,
            creation: true,
            n_atoms: None,
            nu: 0.0,
            t_final: None,
            tol: 1e-8,
            grid_min: None,
            grid_max: None,
            grid_points: None,
            sigma: 500.0,
            quadrature_points: 4000,
            r_max_over_sigma: 6.0,
            convolve: false,
            t_max: 3.0,
            t_points: 151,
            hist_min: -20.0,
            hist_max: 20.0,
            hist_bins: 160,
            delta_min: 0.1,
            delta_max: 100.0,
            delta_points: 200,
            empirical: true,
            nu_values: (0..=9).map(|i| i as f64 / 10.0).collect(),
            sizes: vec![6, 8, 10],
            speed: 0.05,
            rebuild_dt: None,
            n_configs: 1000,
            master_seed: None,
            worker_count: 1,
            output_dir: PathBuf::from("out"),
            plot_script: true,
        }
    }

    /// Apply config-file entries, then overrides; overrides win. Every bad
    /// entry is reported.
    pub fn from_sources(
        subcommand: Subcommand,
        file_entries: &[(String, String)],
        overrides: &[(String, String)],
    ) -> Result<Self, Vec<Violation>> {
        let mut config = Self::new(subcommand);
        let mut errors = Vec::new();
        let mut seen = BTreeSet::new();
        for (k, v) in file_entries {
            if !seen.insert(k.as_str()) {
                errors.push(Violation::new(k, "given more than once in the config file"));
                continue;
            }
            if let Err(e) = config.set(k, v) {
                errors.push(e);
            }
        }
        for (k, v) in overrides {
            if let Err(e) = config.set(k, v) {
                errors.push(e);
            }
        }
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(errors)
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), Violation> {
        let key = if key == "t_final" { "T" } else { key };
        if !self.subcommand.keys().contains(&key) {
            return Err(Violation::new(key, format!("not a setting of `{}`", self.subcommand)));
        }
        let v = value;
        let r: Result<(), String> = (|| {
            match key {
                "case" => self.case = v.parse().map_err(|e: linewidth::Error| e.to_string())?,
                "mu_sp" => self.mu_sp = parse_optional(v)?,
                "mu_sp_prime" => self.mu_sp_prime = parse(v)?,
                "mu_s_prime_p_prime" => self.mu_s_prime_p_prime = parse(v)?,
                "exchange" => self.exchange = parse_bool(v)?,
                "creation" => self.creation = parse_bool(v)?,
                "n_atoms" => self.n_atoms = parse_optional(v)?,
                "nu" => self.nu = parse(v)?,
                "T" => self.t_final = parse_optional(v)?,
                "tol" => self.tol = parse(v)?,
                "grid_min" => self.grid_min = parse_optional(v)?,
                "grid_max" => self.grid_max = parse_optional(v)?,
                "grid_points" => self.grid_points = parse_optional(v)?,
                "sigma" => self.sigma = parse(v)?,
                "quadrature_points" => self.quadrature_points = parse(v)?,
                "r_max_over_sigma" => self.r_max_over_sigma = parse(v)?,
                "convolve" => self.convolve = parse_bool(v)?,
                "t_max" => self.t_max = parse(v)?,
                "t_points" => self.t_points = parse(v)?,
                "hist_min" => self.hist_min = parse(v)?,
                "hist_max" => self.hist_max = parse(v)?,
                "hist_bins" => self.hist_bins = parse(v)?,
                "delta_min" => self.delta_min = parse(v)?,
                "delta_max" => self.delta_max = parse(v)?,
                "delta_points" => self.delta_points = parse(v)?,
                "empirical" => self.empirical = parse_bool(v)?,
                "nu_values" => self.nu_values = parse_list(v)?,
                "sizes" => self.sizes = parse_list(v)?,
                "speed" => self.speed = parse(v)?,
                "rebuild_dt" => self.rebuild_dt = parse_optional(v)?,
                "n_configs" => self.n_configs = parse(v)?,
                "master_seed" => self.master_seed = Some(parse(v)?),
                "worker_count" => self.worker_count = parse(v)?,
                "output_dir" => self.output_dir = PathBuf::from(v),
                "plot_script" => self.plot_script = parse_bool(v)?,
                _ => unreachable!("key list and setter disagree on {key}"),
            }
            Ok(())
        })();
        r.map_err(|m| Violation::new(key, m))
    }

    fn get(&self, key: &str) -> String {
        match key {
            "case" => self.case.to_string(),
            "mu_sp" => self.mu_sp().to_string(),
            "mu_sp_prime" => self.mu_sp_prime.to_string(),
            "mu_s_prime_p_prime" => self.mu_s_prime_p_prime.to_string(),
            "exchange" => self.exchange.to_string(),
            "creation" => self.creation.to_string(),
            "n_atoms" => self.n_atoms().to_string(),
            "nu" => self.nu.to_string(),
            "T" => self.t_final().to_string(),
            "tol" => self.tol.to_string(),
            "grid_min" => show(&self.grid_min),
            "grid_max" => show(&self.grid_max),
            "grid_points" => show(&self.grid_points),
            "sigma" => self.sigma.to_string(),
            "quadrature_points" => self.quadrature_points.to_string(),
            "r_max_over_sigma" => self.r_max_over_sigma.to_string(),
            "convolve" => self.convolve.to_string(),
            "t_max" => self.t_max.to_string(),
            "t_points" => self.t_points.to_string(),
            "hist_min" => self.hist_min.to_string(),
            "hist_max" => self.hist_max.to_string(),
            "hist_bins" => self.hist_bins.to_string(),
            "delta_min" => self.delta_min.to_string(),
            "delta_max" => self.delta_max.to_string(),
            "delta_points" => self.delta_points.to_string(),
            "empirical" => self.empirical.to_string(),
            "nu_values" => join(&self.nu_values),
            "sizes" => join(&self.sizes),
            "speed" => self.speed.to_string(),
            "rebuild_dt" => show(&self.rebuild_dt),
            "n_configs" => self.n_configs.to_string(),
            "master_seed" => show(&self.master_seed),
            "worker_count" => self.worker_count.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "plot_script" => self.plot_script.to_string(),
            _ => unreachable!("unknown key {key}"),
        }
    }

    /// Every accepted key with its resolved value.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        self.subcommand.keys().into_iter().map(|k| (k, self.get(k))).collect()
    }

    /// The configuration as config-file text; reading it back gives the same run.
    pub fn to_text(&self) -> String {
        let mut out = format!("# linewidth {}\n", self.subcommand);
        for (k, v) in self.entries() {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    pub fn mu_sp(&self) -> f64 {
        self.mu_sp.unwrap_or(match self.case {
            ModelCase::ToyExchange => 1.0,
            ModelCase::CaseI => 1.02,
            ModelCase::CaseII => 2.0,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms.unwrap_or(match self.case {
            ModelCase::ToyExchange => 256,
            ModelCase::CaseI => 10,
            ModelCase::CaseII => 20,
        })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final.unwrap_or(match self.case {
            ModelCase::CaseII => 0.36,
            _ => 3.4,
        })
    }

    pub fn model(&self) -> ModelSpec {
        ModelSpec {
            case: self.case,
            mu_sp: self.mu_sp(),
            mu_sp_prime: if self.case == ModelCase::CaseI { self.mu_sp_prime } else { 0.0 },
            mu_s_prime_p_prime: if self.case == ModelCase::CaseII { self.mu_s_prime_p_prime } else { 0.0 },
            detuning: 0.0,
            include_exchange: self.exchange,
            include_creation: self.creation && self.case != ModelCase::ToyExchange,
        }
    }

    pub fn profile(&self) -> GaussianProfileSpec {
        GaussianProfileSpec {
            sigma: self.sigma,
            quadrature_points: self.quadrature_points,
            r_max_over_sigma: self.r_max_over_sigma,
        }
    }

    /// Number of atoms starting in `s` for a case II run with `n` atoms.
    fn s_count(&self, n: usize, nu: f64) -> Option<usize> {
        let n1 = 0.5 * n as f64 * (1.0 + nu);
        ((-1.0..=1.0).contains(&nu) && (n1 - n1.round()).abs() < 1e-9).then(|| n1.round() as usize)
    }

    pub fn spectrum_request(&self, n_atoms: usize) -> SpectrumRequest {
        let mut req =
            SpectrumRequest::new(self.model(), n_atoms, self.t_final(), self.n_configs, self.master_seed.unwrap_or(0));
        req.tol = self.tol;
        if let (Some(lo), Some(hi), Some(n)) = (self.grid_min, self.grid_max, self.grid_points) {
            if let Ok(grid) = linear_grid(lo, hi, n) {
                req = req.with_grid(grid);
            }
        }
        if self.case == ModelCase::CaseII {
            if let Some(n1) = self.s_count(n_atoms, self.nu) {
                req = req.with_s_count(n1);
            }
        }
        req
    }

    fn has(&self, key: &str) -> bool {
        self.subcommand.keys().contains(&key)
    }
}

fn positive(out: &mut Vec<Violation>, field: &str, x: f64) {
    if !(x.is_finite() && x > 0.0) {
        out.push(Violation::new(field, format!("must be positive and finite, got {x}")));
    }
}

/// All violations of `config`; an empty list means it can run.
pub fn validate(config: &RunConfig) -> Vec<Violation> {
    let mut v = Vec::new();
    let c = config;
    if c.master_seed.is_none() {
        v.push(Violation::new("master_seed", "required; runs are never seeded from the clock"));
    }
    if c.n_configs == 0 {
        v.push(Violation::new("n_configs", "need at least one configuration"));
    }
    if c.worker_count == 0 {
        v.push(Violation::new("worker_count", "need at least one worker"));
    }
    if c.output_dir.as_os_str().is_empty() {
        v.push(Violation::new("output_dir", "must not be empty"));
    }
    if c.has("n_atoms") && c.n_atoms() < 2 {
        v.push(Violation::new("n_atoms", format!("need at least two atoms, got {}", c.n_atoms())));
    }
    if c.has("mu_sp") {
        positive(&mut v, "mu_sp", c.mu_sp());
    }

    match c.subcommand {
        Subcommand::ToyDecay => {
            positive(&mut v, "t_max", c.t_max);
            if c.t_points < 2 {
                v.push(Violation::new("t_points", "need at least two time points"));
            }
        }
        Subcommand::ToyBand => {
            if !(c.hist_max > c.hist_min) || !c.hist_min.is_finite() || !c.hist_max.is_finite() {
                v.push(Violation::new("hist_max", "histogram range must be finite with hist_max > hist_min"));
            }
            if c.hist_bins == 0 {
                v.push(Violation::new("hist_bins", "need at least one bin"));
            }
        }
        Subcommand::Pairdist => {
            positive(&mut v, "delta_min", c.delta_min);
            if !(c.delta_max > c.delta_min) || !c.delta_max.is_finite() {
                v.push(Violation::new("delta_max", "must be finite and larger than delta_min"));
            }
            if c.delta_points < 2 {
                v.push(Violation::new("delta_points", "need at least two points"));
            }
        }
        _ => validate_model(c, &mut v),
    }
    v
}

fn validate_model(c: &RunConfig, v: &mut Vec<Violation>) {
    match c.case {
        ModelCase::ToyExchange => v.push(Violation::new("case", "the toy model has its own subcommands")),
        ModelCase::CaseI => positive(v, "mu_sp_prime", c.mu_sp_prime),
        ModelCase::CaseII => positive(v, "mu_s_prime_p_prime", c.mu_s_prime_p_prime),
    }
    if c.subcommand == Subcommand::WidthVsNu && c.case != ModelCase::CaseII {
        v.push(Violation::new("case", "ratio scans apply to case II"));
    }
    if !c.exchange && !c.creation {
        v.push(Violation::new("creation", "exchange and creation cannot both be off"));
    }
    positive(v, "T", c.t_final());
    if !(c.tol > 0.0 && c.tol <= 1e-2) {
        v.push(Violation::new("tol", format!("must lie in (0, 0.01], got {}", c.tol)));
    }
    match (c.grid_min, c.grid_max, c.grid_points) {
        (None, None, None) => {}
        (Some(lo), Some(hi), Some(n)) => {
            if let Err(e) = linear_grid(lo, hi, n) {
                v.push(Violation::new("grid_min", e.to_string()));
            } else if n < 3 {
                v.push(Violation::new("grid_points", "need at least three points to locate a peak"));
            }
        }
        _ => v.push(Violation::new("grid_min", "grid_min, grid_max and grid_points must be given together")),
    }
    if c.has("sigma") && (c.convolve || c.subcommand == Subcommand::Convolve) {
        if let Err(e) = c.profile().validate() {
            v.push(Violation::new("sigma", e.to_string()));
        }
    }

    let split_error = |n: usize, nu: f64| {
        format!("ν = {nu} needs n_s = {} of {n} atoms, which is not an integer in [0, {n}]", 0.5 * n as f64 * (1.0 + nu))
    };
    if c.case == ModelCase::CaseII {
        if c.has("nu") && c.subcommand != Subcommand::FiniteSize && c.s_count(c.n_atoms(), c.nu).is_none() {
            v.push(Violation::new("nu", split_error(c.n_atoms(), c.nu)));
        }
        if c.subcommand == Subcommand::FiniteSize {
            for &n in &c.sizes {
                if c.s_count(n, c.nu).is_none() {
                    v.push(Violation::new("nu", split_error(n, c.nu)));
                }
            }
        }
        if c.subcommand == Subcommand::WidthVsNu {
            if c.nu_values.is_empty() {
                v.push(Violation::new("nu_values", "need at least one ratio"));
            }
            for &nu in &c.nu_values {
                if c.s_count(c.n_atoms(), nu).is_none() {
                    v.push(Violation::new("nu_values", split_error(c.n_atoms(), nu)));
                }
            }
        }
    }
    if c.subcommand == Subcommand::FiniteSize {
        if c.sizes.len() < 2 {
            v.push(Violation::new("sizes", "need at least two sizes to extrapolate"));
        }
        if c.sizes.windows(2).any(|w| w[1] <= w[0]) {
            v.push(Violation::new("sizes", "must be strictly ascending"));
        }
        if c.sizes.iter().any(|&n| n < 2) {
            v.push(Violation::new("sizes", "every size needs at least two atoms"));
        }
    }
    if c.subcommand == Subcommand::Motion {
        if !(c.speed.is_finite() && c.speed >= 0.0) {
            v.push(Violation::new("speed", format!("must be finite and non-negative, got {}", c.speed)));
        }
        if let Some(dt) = c.rebuild_dt {
            if !(dt.is_finite() && dt > 0.0 && dt <= c.t_final()) {
                v.push(Violation::new("rebuild_dt", format!("must lie in (0, T], got {dt}")));
            }
        }
    }
}
