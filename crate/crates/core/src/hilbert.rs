//! Reachable many-body sectors and the rotating-frame sparse Hamiltonian.
//!
//! A basis state is an occupation word: one internal level per atom. The
//! two-atom processes of each model move amplitude between words; starting
//! from the initial word, the breadth-first closure under those processes is
//! the sector the dynamics can ever visit.
//!
//! The creation process carries the detuning. Moving to the frame that
//! rotates with it leaves a static Hamiltonian whose diagonal is
//! `detuning * sign * creation_counter(word)` (sign `+1` for case I where the
//! created `s s'` pair sits above `p p`, `-1` for case II where `p p'` sits
//! below `s s'`).

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dipolar_coupling, AtomConfiguration, DipoleCoupling};

/// Internal level of one atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Level {
    P = 0,
    S = 1,
    SPrime = 2,
    PPrime = 3,
}

impl Level {
    pub fn label(self) -> &'static str {
        match self {
            Level::P => "p",
            Level::S => "s",
            Level::SPrime => "s'",
            Level::PPrime => "p'",
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Level {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(Level::P),
            "s" => Ok(Level::S),
            "s'" | "sprime" => Ok(Level::SPrime),
            "p'" | "pprime" => Ok(Level::PPrime),
            other => Err(Error::InvalidArgument(format!("unknown level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelCase {
    /// One `s` excitation hopping among `p` atoms.
    ToyExchange,
    /// `p + p <-> s + s'` creation with `p/s` and `p/s'` exchange.
    CaseI,
    /// `s + s' <-> p + p'` creation with `p/s` and `p'/s'` exchange.
    CaseII,
}

impl ModelCase {
    pub fn alphabet(self) -> &'static [Level] {
        match self {
            ModelCase::ToyExchange => &[Level::P, Level::S],
            ModelCase::CaseI => &[Level::P, Level::S, Level::SPrime],
            ModelCase::CaseII => &[Level::P, Level::S, Level::SPrime, Level::PPrime],
        }
    }

    /// Species whose population is the spectroscopic yield.
    pub fn yield_species(self) -> Level {
        match self {
            ModelCase::ToyExchange => Level::S,
            ModelCase::CaseI => Level::S,
            ModelCase::CaseII => Level::P,
        }
    }

    /// Sign of the rotating-frame energy per created quantum.
    pub fn detuning_sign(self) -> i32 {
        match self {
            ModelCase::ToyExchange => 0,
            ModelCase::CaseI => 1,
            ModelCase::CaseII => -1,
        }
    }
}

impl FromStr for ModelCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "toy" | "toy-exchange" | "toyexchange" => Ok(ModelCase::ToyExchange),
            "i" | "1" | "case1" | "case-i" | "casei" => Ok(ModelCase::CaseI),
            "ii" | "2" | "case2" | "case-ii" | "caseii" => Ok(ModelCase::CaseII),
            other => Err(Error::InvalidArgument(format!("unknown model case {other:?}"))),
        }
    }
}

impl fmt::Display for ModelCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelCase::ToyExchange => "toy",
            ModelCase::CaseI => "case1",
            ModelCase::CaseII => "case2",
        })
    }
}

/// Physical model: which processes act, their dipole moments, and the
/// creation detuning (in units of the mean creation coupling).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub case: ModelCase,
    pub mu_sp: f64,
    pub mu_sp_prime: f64,
    pub mu_s_prime_p_prime: f64,
    pub detuning: f64,
    pub include_exchange: bool,
    pub include_creation: bool,
}

impl ModelSpec {
    pub fn toy(mu_sp: f64) -> Self {
        Self {
            case: ModelCase::ToyExchange,
            mu_sp,
            mu_sp_prime: 0.0,
            mu_s_prime_p_prime: 0.0,
            detuning: 0.0,
            include_exchange: true,
            include_creation: false,
        }
    }

    pub fn case_i(mu_sp: f64, mu_sp_prime: f64) -> Self {
        Self {
            case: ModelCase::CaseI,
            mu_sp,
            mu_sp_prime,
            mu_s_prime_p_prime: 0.0,
            detuning: 0.0,
            include_exchange: true,
            include_creation: true,
        }
    }

    pub fn case_ii(mu_sp: f64, mu_s_prime_p_prime: f64) -> Self {
        Self {
            case: ModelCase::CaseII,
            mu_sp,
            mu_sp_prime: 0.0,
            mu_s_prime_p_prime,
            detuning: 0.0,
            include_exchange: true,
            include_creation: true,
        }
    }

    pub fn with_detuning(mut self, detuning: f64) -> Self {
        self.detuning = detuning;
        self
    }

    pub fn with_exchange(mut self, on: bool) -> Self {
        self.include_exchange = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !self.include_exchange && !self.include_creation {
            return bad("at least one of exchange or creation must be enabled");
        }
        if !self.detuning.is_finite() {
            return bad("detuning must be finite");
        }
        let used: &[(&str, f64)] = match self.case {
            ModelCase::ToyExchange => {
                if !self.include_exchange {
                    return bad("the toy model consists only of the exchange process");
                }
                &[("mu_sp", self.mu_sp)]
            }
            ModelCase::CaseI => &[("mu_sp", self.mu_sp), ("mu_sp_prime", self.mu_sp_prime)],
            ModelCase::CaseII => &[("mu_sp", self.mu_sp), ("mu_s_prime_p_prime", self.mu_s_prime_p_prime)],
        };
        for (name, mu) in used {
            if !(mu.is_finite() && *mu > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite, got {mu}")));
            }
        }
        Ok(())
    }

    /// Coupling constant `c_d` of a process.
    pub fn coupling(&self, process: Process) -> DipoleCoupling {
        let c = match (self.case, process) {
            (ModelCase::CaseI, Process::Creation) => self.mu_sp * self.mu_sp_prime,
            (ModelCase::CaseII, Process::Creation) => self.mu_sp * self.mu_s_prime_p_prime,
            (_, Process::HopS) => self.mu_sp * self.mu_sp,
            (ModelCase::CaseI, Process::HopSPrime) => self.mu_sp_prime * self.mu_sp_prime,
            (ModelCase::CaseII, Process::HopSPrime) => self.mu_s_prime_p_prime * self.mu_s_prime_p_prime,
            (ModelCase::ToyExchange, _) => 0.0,
        };
        DipoleCoupling::new(c).unwrap_or(DipoleCoupling::new(0.0).expect("zero is finite"))
    }

    pub fn enabled(&self, process: Process) -> bool {
        match process {
            Process::Creation => self.include_creation && self.case != ModelCase::ToyExchange,
            Process::HopS => self.include_exchange,
            Process::HopSPrime => self.include_exchange && self.case != ModelCase::ToyExchange,
        }
    }
}

/// Two-atom processes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Process {
    /// Detuned pair creation (`pp <-> ss'` or `ss' <-> pp'`).
    Creation,
    /// Resonant `p s <-> s p` exchange.
    HopS,
    /// Resonant `p s' <-> s' p` (case I) or `p' s' <-> s' p'` (case II) exchange.
    HopSPrime,
}

impl Process {
    pub const ALL: [Process; 3] = [Process::Creation, Process::HopS, Process::HopSPrime];

    fn index(self) -> u32 {
        match self {
            Process::Creation => 0,
            Process::HopS => 1,
            Process::HopSPrime => 2,
        }
    }
}

/// Levels `(a, b)` of an atom pair reachable through `process`.
fn pair_targets(case: ModelCase, process: Process, a: Level, b: Level) -> &'static [(Level, Level)] {
    use Level::*;
    match (case, process, a, b) {
        (ModelCase::CaseI, Process::Creation, P, P) => &[(S, SPrime), (SPrime, S)],
        (ModelCase::CaseI, Process::Creation, S, SPrime) | (ModelCase::CaseI, Process::Creation, SPrime, S) => {
            &[(P, P)]
        }
        (ModelCase::CaseII, Process::Creation, S, SPrime) => &[(P, PPrime)],
        (ModelCase::CaseII, Process::Creation, SPrime, S) => &[(PPrime, P)],
        (ModelCase::CaseII, Process::Creation, P, PPrime) => &[(S, SPrime)],
        (ModelCase::CaseII, Process::Creation, PPrime, P) => &[(SPrime, S)],
        (_, Process::HopS, P, S) => &[(S, P)],
        (_, Process::HopS, S, P) => &[(P, S)],
        (ModelCase::CaseI, Process::HopSPrime, P, SPrime) => &[(SPrime, P)],
        (ModelCase::CaseI, Process::HopSPrime, SPrime, P) => &[(P, SPrime)],
        (ModelCase::CaseII, Process::HopSPrime, PPrime, SPrime) => &[(SPrime, PPrime)],
        (ModelCase::CaseII, Process::HopSPrime, SPrime, PPrime) => &[(PPrime, SPrime)],
        _ => &[],
    }
}

/// One internal level per atom; ordered lexicographically (`p < s < s' < p'`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OccupationWord(Box<[Level]>);

impl OccupationWord {
    pub fn new(levels: Vec<Level>) -> Self {
        Self(levels.into_boxed_slice())
    }

    pub fn uniform(level: Level, n_atoms: usize) -> Self {
        Self::new(vec![level; n_atoms])
    }

    /// Toy-model start: atom `excited` in `s`, every other atom in `p`.
    pub fn single_excitation(n_atoms: usize, excited: usize) -> Self {
        let mut levels = vec![Level::P; n_atoms];
        if excited < n_atoms {
            levels[excited] = Level::S;
        }
        Self::new(levels)
    }

    /// Case II start: the first `n_s` atoms in `s`, the remaining `n_s_prime` in `s'`.
    pub fn split(n_s: usize, n_s_prime: usize) -> Self {
        let mut levels = vec![Level::S; n_s];
        levels.extend(std::iter::repeat_n(Level::SPrime, n_s_prime));
        Self::new(levels)
    }

    pub fn levels(&self) -> &[Level] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self, level: Level) -> usize {
        self.0.iter().filter(|&&l| l == level).count()
    }
}

impl fmt::Display for OccupationWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in self.0.iter() {
            f.write_str(l.label())?;
        }
        Ok(())
    }
}

impl FromStr for OccupationWord {
    type Err = Error;
    /// Parses the compact form produced by `Display`, e.g. `pps's'`.
    fn from_str(s: &str) -> Result<Self> {
        let mut levels = Vec::new();
        let mut chars = s.chars().filter(|c| !c.is_whitespace()).peekable();
        while let Some(c) = chars.next() {
            let primed = chars.peek() == Some(&'\'');
            if primed {
                chars.next();
            }
            levels.push(match (c, primed) {
                ('p', false) => Level::P,
                ('s', false) => Level::S,
                ('s', true) => Level::SPrime,
                ('p', true) => Level::PPrime,
                _ => return Err(Error::InvalidArgument(format!("bad occupation word {s:?}"))),
            });
        }
        Ok(Self::new(levels))
    }
}

/// Number of quanta the creation process has produced in `word`: `N_s` for
/// case I, `N_p` for case II, zero for the toy model.
pub fn creation_counter(word: &OccupationWord, case: ModelCase) -> usize {
    match case {
        ModelCase::ToyExchange => 0,
        ModelCase::CaseI => word.count(Level::S),
        ModelCase::CaseII => word.count(Level::P),
    }
}

#[derive(Debug, Clone)]
pub struct SectorBasis {
    model: ModelSpec,
    n_atoms: usize,
    states: Vec<OccupationWord>,
    index: HashMap<OccupationWord, u32>,
    initial: usize,
}

impl SectorBasis {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[OccupationWord] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &OccupationWord {
        &self.states[i]
    }

    pub fn index_of(&self, word: &[Level]) -> Option<usize> {
        self.index.get(word).map(|&i| i as usize)
    }

    /// Basis index of the word the sector was grown from.
    pub fn initial_index(&self) -> usize {
        self.initial
    }

    /// Count of `species` in each basis state, in basis order.
    pub fn species_counts(&self, species: Level) -> Vec<u16> {
        self.states.iter().map(|w| w.count(species) as u16).collect()
    }
}

impl std::borrow::Borrow<[Level]> for OccupationWord {
    fn borrow(&self) -> &[Level] {
        &self.0
    }
}

fn check_initial(model: &ModelSpec, n_atoms: usize, initial: &OccupationWord) -> Result<()> {
    if initial.len() != n_atoms {
        return Err(Error::InvalidArgument(format!(
            "initial word has {} atoms, expected {n_atoms}",
            initial.len()
        )));
    }
    let ok = match model.case {
        ModelCase::ToyExchange => initial.count(Level::S) == 1 && initial.count(Level::P) == n_atoms - 1,
        ModelCase::CaseI => initial.count(Level::P) == n_atoms,
        ModelCase::CaseII => initial.count(Level::S) + initial.count(Level::SPrime) == n_atoms,
    };
    if !ok {
        let expected = match model.case {
            ModelCase::ToyExchange => "one s and every other atom p",
            ModelCase::CaseI => "every atom in p",
            ModelCase::CaseII => "every atom in s or s'",
        };
        return Err(Error::InvalidArgument(format!(
            "initial word {initial} is inconsistent with {}: expected {expected}",
            model.case
        )));
    }
    Ok(())
}

/// Calls `visit(pair_index, j, k, process, new_a, new_b)` for every process
/// that acts on `word`.
#[inline]
fn for_each_move<F: FnMut(usize, usize, usize, Process, Level, Level)>(
    model: &ModelSpec,
    word: &[Level],
    mut visit: F,
) {
    let n = word.len();
    let processes: Vec<Process> = Process::ALL.into_iter().filter(|&p| model.enabled(p)).collect();
    let mut pair = 0;
    for j in 0..n {
        for k in (j + 1)..n {
            for &proc in &processes {
                for &(a, b) in pair_targets(model.case, proc, word[j], word[k]) {
                    visit(pair, j, k, proc, a, b);
                }
            }
            pair += 1;
        }
    }
}

/// Breadth-first closure of `initial` under the model's enabled processes,
/// returned in lexicographic order.
pub fn enumerate_basis(model: &ModelSpec, n_atoms: usize, initial: &OccupationWord) -> Result<SectorBasis> {
    model.validate()?;
    check_initial(model, n_atoms, initial)?;
    let mut seen: HashSet<OccupationWord> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(initial.clone());
    queue.push_back(initial.clone());
    let mut scratch: Vec<Level> = Vec::with_capacity(n_atoms);
    while let Some(word) = queue.pop_front() {
        for_each_move(model, word.levels(), |_, j, k, _, a, b| {
            scratch.clear();
            scratch.extend_from_slice(word.levels());
            scratch[j] = a;
            scratch[k] = b;
            if !seen.contains(scratch.as_slice()) {
                let next = OccupationWord::new(scratch.clone());
                seen.insert(next.clone());
                queue.push_back(next);
            }
        });
    }
    let mut states: Vec<OccupationWord> = seen.into_iter().collect();
    states.sort_unstable();
    let index: HashMap<OccupationWord, u32> =
        states.iter().enumerate().map(|(i, w)| (w.clone(), i as u32)).collect();
    let initial_idx = index[initial.levels()] as usize;
    Ok(SectorBasis { model: *model, n_atoms, states, index, initial: initial_idx })
}

/// Sparsity pattern of the sector Hamiltonian. Every stored off-diagonal entry
/// remembers which atom pair and process produced it, so the matrix for a new
/// configuration is refilled without touching the basis.
#[derive(Debug)]
pub struct CouplingPattern {
    model: ModelSpec,
    n_atoms: usize,
    pairs: Vec<(u32, u32)>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    slots: Vec<u32>,
    counters: Vec<i32>,
}

impl CouplingPattern {
    pub fn new(basis: &SectorBasis) -> Result<Arc<Self>> {
        let model = *basis.model();
        model.validate()?;
        let n = basis.n_atoms();
        let pairs: Vec<(u32, u32)> =
            (0..n).flat_map(|j| ((j + 1)..n).map(move |k| (j as u32, k as u32))).collect();
        let rows: Vec<Vec<(u32, u32)>> = basis
            .states()
            .par_iter()
            .map(|word| {
                let mut row = Vec::new();
                let mut scratch = word.levels().to_vec();
                let mut missing = None;
                for_each_move(&model, word.levels(), |pair, j, k, proc, a, b| {
                    let (oa, ob) = (scratch[j], scratch[k]);
                    scratch[j] = a;
                    scratch[k] = b;
                    match basis.index_of(&scratch) {
                        Some(col) => row.push((col as u32, pair as u32 * 3 + proc.index())),
                        None => missing = Some(OccupationWord::new(scratch.clone())),
                    }
                    scratch[j] = oa;
                    scratch[k] = ob;
                });
                match missing {
                    Some(w) => Err(Error::InvalidState(format!("process leaves the sector: reached {w}"))),
                    None => {
                        row.sort_unstable();
                        Ok(row)
                    }
                }
            })
            .collect::<Result<_>>()?;
        let nnz: usize = rows.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut slots = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for row in rows {
            for (c, s) in row {
                cols.push(c);
                slots.push(s);
            }
            row_ptr.push(cols.len());
        }
        let sign = model.case.detuning_sign();
        let counters = basis.states().iter().map(|w| sign * creation_counter(w, model.case) as i32).collect();
        Ok(Arc::new(Self { model, n_atoms: n, pairs, row_ptr, cols, slots, counters }))
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.counters.len()
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn offdiag_nnz(&self) -> usize {
        self.cols.len()
    }

    /// Signed diagonal multiplier of the detuning for each basis state.
    pub fn detuning_multipliers(&self) -> &[i32] {
        &self.counters
    }

    /// `(pair, process)` behind stored entry `e`.
    pub fn entry_source(&self, e: usize) -> ((usize, usize), Process) {
        let slot = self.slots[e];
        let (j, k) = self.pairs[(slot / 3) as usize];
        (
            (j as usize, k as usize),
            match slot % 3 {
                0 => Process::Creation,
                1 => Process::HopS,
                _ => Process::HopSPrime,
            },
        )
    }

    /// Per-slot coupling values for `config`.
    fn slot_values(&self, config: &AtomConfiguration) -> Result<Vec<f64>> {
        if config.n_atoms() != self.n_atoms {
            return Err(Error::InvalidArgument(format!(
                "configuration has {} atoms, basis has {}",
                config.n_atoms(),
                self.n_atoms
            )));
        }
        let consts = Process::ALL.map(|p| self.model.coupling(p));
        let mut values = vec![0.0; self.pairs.len() * 3];
        for (p, &(j, k)) in self.pairs.iter().enumerate() {
            let d = config.displacement(j as usize, k as usize);
            for (q, &c) in consts.iter().enumerate() {
                values[3 * p + q] = dipolar_coupling(d, c).map_err(|e| match e {
                    Error::SingularGeometry(..) => Error::SingularGeometry(j as usize, k as usize),
                    other => other,
                })?;
            }
        }
        Ok(values)
    }

    /// Hamiltonian for `config` at the model's detuning.
    pub fn hamiltonian(self: &Arc<Self>, config: &AtomConfiguration) -> Result<SparseHamiltonian> {
        let mut h = SparseHamiltonian {
            pattern: Arc::clone(self),
            vals: vec![0.0; self.cols.len()],
            detuning: self.model.detuning,
        };
        self.refill(&mut h, config)?;
        Ok(h)
    }

    /// Overwrite the couplings of `h` with those of `config`.
    pub fn refill(&self, h: &mut SparseHamiltonian, config: &AtomConfiguration) -> Result<()> {
        let values = self.slot_values(config)?;
        for (v, &s) in h.vals.iter_mut().zip(&self.slots) {
            *v = values[s as usize];
        }
        Ok(())
    }
}

/// Real symmetric sector Hamiltonian in the rotating frame.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    pattern: Arc<CouplingPattern>,
    vals: Vec<f64>,
    detuning: f64,
}

/// Hermitian operator acting on complex state vectors.
pub trait HermitianOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = H x`
    fn apply(&self, x: &[Complex64], y: &mut [Complex64]);
}

impl SparseHamiltonian {
    pub fn dim(&self) -> usize {
        self.pattern.dim()
    }

    pub fn pattern(&self) -> &Arc<CouplingPattern> {
        &self.pattern
    }

    pub fn detuning(&self) -> f64 {
        self.detuning
    }

    pub fn set_detuning(&mut self, detuning: f64) {
        self.detuning = detuning;
    }

    pub fn offdiag_nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.detuning * self.pattern.counters[i] as f64
    }

    /// All stored entries `(row, col, value)` in row-major order, diagonal included.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = &self.pattern;
        (0..self.dim()).flat_map(move |i| {
            let diag = std::iter::once((i, i, self.diagonal(i)));
            let off = (p.row_ptr[i]..p.row_ptr[i + 1]).map(move |e| (i, p.cols[e] as usize, self.vals[e]));
            diag.chain(off)
        })
    }

    pub fn is_finite(&self) -> bool {
        self.detuning.is_finite() && self.vals.iter().all(|v| v.is_finite())
    }

    /// Largest absolute row sum, an upper bound on the spectral radius.
    pub fn row_sum_bound(&self) -> f64 {
        let p = &self.pattern;
        (0..self.dim())
            .map(|i| self.diagonal(i).abs() + self.vals[p.row_ptr[i]..p.row_ptr[i + 1]].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let n = self.dim();
        let mut m = Mat::zeros(n, n);
        for (i, j, v) in self.entries() {
            m[(i, j)] += v;
        }
        m
    }

    /// `<a|H|b>` for complex vectors.
    pub fn expectation(&self, psi: &[Complex64]) -> f64 {
        let mut hpsi = vec![Complex64::new(0.0, 0.0); psi.len()];
        self.apply(psi, &mut hpsi);
        psi.iter().zip(&hpsi).map(|(a, b)| (a.conj() * b).re).sum()
    }

    /// Coordinate text dump, one `row col value` triple per line.
    pub fn write_coordinate<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# dim {} nnz {}", self.dim(), self.dim() + self.offdiag_nnz())?;
        for (i, j, v) in self.entries() {
            writeln!(out, "{i} {j} {v:.17e}")?;
        }
        Ok(())
    }
}

impl HermitianOperator for SparseHamiltonian {
    fn dim(&self) -> usize {
        self.pattern.dim()
    }

    fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        let p = &*self.pattern;
        let n = p.dim();
        assert!(x.len() == n && y.len() == n, "vector length does not match the operator");
        for (i, yi) in y.iter_mut().enumerate() {
            let (lo, hi) = (p.row_ptr[i], p.row_ptr[i + 1]);
            let (mut re, mut im) = (0.0, 0.0);
            for (c, v) in p.cols[lo..hi].iter().zip(&self.vals[lo..hi]) {
                // SAFETY: every column index was checked against `dim` when the pattern was built
                let xc = unsafe { x.get_unchecked(*c as usize) };
                re += xc.re * v;
                im += xc.im * v;
            }
            let d = self.detuning * p.counters[i] as f64;
            *yi = Complex64::new(re + x[i].re * d, im + x[i].im * d);
        }
    }
}

/// Assemble the Hamiltonian of `model` on `basis` for one configuration.
pub fn build_hamiltonian(
    model: &ModelSpec,
    basis: &SectorBasis,
    config: &AtomConfiguration,
) -> Result<SparseHamiltonian> {
    if model.case != basis.model().case
        || model.include_creation != basis.model().include_creation
        || model.include_exchange != basis.model().include_exchange
    {
        return Err(Error::InvalidArgument("model does not match the basis it was enumerated for".into()));
    }
    let pattern = if basis.model() == model {
        CouplingPattern::new(basis)?
    } else {
        // same processes, different moments or detuning
        let mut rebased = basis.clone();
        rebased.model = *model;
        CouplingPattern::new(&rebased)?
    };
    pattern.hamiltonian(config)
}
