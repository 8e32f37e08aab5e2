//! Metropolis–Kawasaki chain, first-interchange sampling, relaxation to the
//! next rectangle and controlled rollouts of the reduced model.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auxmdp::{self, AuxAction, AuxError, AuxPolicy, AuxState, RewardKind, RewardSpec};
use crate::lattice::{Energy, LatticeError, OrientedBond, SiteConfig, Span};

pub type StreamRng = ChaCha8Rng;

pub const DEFAULT_STEP_BUDGET: u64 = 1_000_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KawasakiError {
    #[error("configuration has no susceptible bond")]
    NoSusceptibleBond,
    #[error("no particle interchange within {0} proposals")]
    StepBudgetExceeded(u64),
    #[error("relaxation does not end in a rectangle: {0}")]
    NotReducible(String),
    #[error("target not reached within {0} epochs")]
    MaxEpochsExceeded(usize),
    #[error("policy has no action for {0}")]
    MissingAction(AuxState),
    #[error("unknown interchange mode '{0}'")]
    UnknownMode(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Aux(#[from] AuxError),
}

/// `(seed, stream)` pair naming an independent ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> StreamRng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }
}

/// Acceptance probability `exp(−β[ΔH]₊)`.
pub fn acceptance(cfg: &SiteConfig, de: Energy) -> f64 {
    let p = cfg.params();
    let x = de.positive_part(p).value(p);
    if x == 0.0 {
        1.0
    } else {
        (-p.beta * x).exp()
    }
}

/// One proposal of the Metropolis chain; returns the bond if the configuration changed.
pub fn metropolis_step_in_place<R: Rng + ?Sized>(cfg: &mut SiteConfig, bonds: &[OrientedBond], rng: &mut R) -> Option<OrientedBond> {
    let b = bonds[rng.gen_range(0..bonds.len())];
    let u: f64 = rng.gen();
    if !cfg.fires(&b).unwrap_or(false) {
        return None;
    }
    let de = cfg.energy_delta(&b).ok()?;
    if u < acceptance(cfg, de) {
        cfg.apply_bond_in_place(&b).ok()?;
        Some(b)
    } else {
        None
    }
}

pub fn metropolis_step<R: Rng + ?Sized>(cfg: &SiteConfig, rng: &mut R) -> SiteConfig {
    let mut next = cfg.clone();
    metropolis_step_in_place(&mut next, &cfg.bonds(), rng);
    next
}

/// A possible move out of `cfg`: probability `multiplicity/bonds_total · exp(−β·barrier)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTransition {
    pub target: SiteConfig,
    pub multiplicity: usize,
    pub bonds_total: usize,
    pub barrier: Energy,
}

impl ExactTransition {
    pub fn probability(&self) -> f64 {
        let p = self.target.params();
        self.multiplicity as f64 / self.bonds_total as f64 * (-p.beta * self.barrier.value(p)).exp()
    }
}

/// Off-diagonal entries of the Metropolis kernel, grouped by target.
pub fn transitions(cfg: &SiteConfig) -> Vec<ExactTransition> {
    let bonds = cfg.bonds();
    let total = bonds.len();
    let mut out: Vec<ExactTransition> = Vec::new();
    for b in &bonds {
        if !cfg.fires(b).unwrap_or(false) {
            continue;
        }
        let de = cfg.energy_delta(b).expect("enumerated bond applies");
        let target = cfg.apply_bond(b).expect("enumerated bond applies");
        match out.iter_mut().find(|t| t.target == target) {
            Some(t) => t.multiplicity += 1,
            None => out.push(ExactTransition { target, multiplicity: 1, bonds_total: total, barrier: de.positive_part(cfg.params()) }),
        }
    }
    out
}

/// Probability of staying put, `1 − Σ P(η, η′)`.
pub fn stay_probability(cfg: &SiteConfig) -> f64 {
    1.0 - transitions(cfg).iter().map(ExactTransition::probability).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterchangeMode {
    ZeroT,
    FiniteBeta,
}

impl InterchangeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InterchangeMode::ZeroT => "zero-t",
            InterchangeMode::FiniteBeta => "finite-beta",
        }
    }
}

impl FromStr for InterchangeMode {
    type Err = KawasakiError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-t" => Ok(InterchangeMode::ZeroT),
            "finite-beta" => Ok(InterchangeMode::FiniteBeta),
            other => Err(KawasakiError::UnknownMode(other.to_string())),
        }
    }
}

impl fmt::Display for InterchangeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The first bond to fire from a configuration, and the result.
pub trait InterchangeSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(&self, cfg: &SiteConfig, rng: &mut StreamRng) -> Result<(OrientedBond, SiteConfig), KawasakiError>;
}

/// Zero-temperature limit: uniform over susceptible bonds.
pub struct ZeroTemperature;

impl InterchangeSampler for ZeroTemperature {
    fn name(&self) -> &'static str {
        "zero-t"
    }

    fn sample(&self, cfg: &SiteConfig, rng: &mut StreamRng) -> Result<(OrientedBond, SiteConfig), KawasakiError> {
        let bonds = cfg.susceptible_bonds();
        if bonds.is_empty() {
            return Err(KawasakiError::NoSusceptibleBond);
        }
        let b = bonds[rng.gen_range(0..bonds.len())];
        Ok((b, cfg.apply_bond(&b)?))
    }
}

/// Runs the Metropolis chain at the configuration's `beta` until something moves.
pub struct FiniteBeta {
    pub budget: u64,
}

impl Default for FiniteBeta {
    fn default() -> Self {
        FiniteBeta { budget: DEFAULT_STEP_BUDGET }
    }
}

impl InterchangeSampler for FiniteBeta {
    fn name(&self) -> &'static str {
        "finite-beta"
    }

    fn sample(&self, cfg: &SiteConfig, rng: &mut StreamRng) -> Result<(OrientedBond, SiteConfig), KawasakiError> {
        let bonds = cfg.bonds();
        let mut cur = cfg.clone();
        for _ in 0..self.budget {
            if let Some(b) = metropolis_step_in_place(&mut cur, &bonds, rng) {
                return Ok((b, cur));
            }
        }
        Err(KawasakiError::StepBudgetExceeded(self.budget))
    }
}

/// First-interchange samplers selectable by name.
pub struct SamplerRegistry {
    samplers: Vec<Box<dyn InterchangeSampler>>,
}

impl SamplerRegistry {
    pub fn new() -> Self {
        SamplerRegistry { samplers: Vec::new() }
    }

    pub fn register<S: InterchangeSampler + 'static>(&mut self, s: S) {
        self.samplers.retain(|x| x.name() != s.name());
        self.samplers.push(Box::new(s));
    }

    pub fn get(&self, name: &str) -> Result<&dyn InterchangeSampler, KawasakiError> {
        self.samplers
            .iter()
            .find(|s| s.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| KawasakiError::UnknownMode(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.samplers.iter().map(|s| s.name()).collect()
    }
}

impl Default for SamplerRegistry {
    fn default() -> Self {
        let mut r = SamplerRegistry::new();
        r.register(ZeroTemperature);
        r.register(FiniteBeta::default());
        r
    }
}

pub fn first_interchange(cfg: &SiteConfig, rng: &mut StreamRng, mode: InterchangeMode) -> Result<(OrientedBond, SiteConfig), KawasakiError> {
    match mode {
        InterchangeMode::ZeroT => ZeroTemperature.sample(cfg, rng),
        InterchangeMode::FiniteBeta => FiniteBeta::default().sample(cfg, rng),
    }
}

#[derive(Clone, Copy)]
enum Axis {
    Column,
    Row,
}

fn at(axis: Axis, line: usize, along: usize, n: usize) -> usize {
    match axis {
        Axis::Column => along * n + line,
        Axis::Row => line * n + along,
    }
}

/// Slides a protruding boundary bar around the corner of the remaining rectangle.
/// The bar at `bar_line` must not be longer than the rectangle side it lands on.
fn try_slide_bar(cfg: &mut SiteConfig, axis: Axis, bar_line: usize, core: Span, inward: isize) -> bool {
    let n = cfg.side();
    let cyc = cfg.is_periodic();
    let mut core_marks = vec![false; n];
    let mut core_count = 0;
    let mut bar = Vec::new();
    for idx in cfg.occupied_indices() {
        let (line, along) = match axis {
            Axis::Column => (idx % n, idx / n),
            Axis::Row => (idx / n, idx % n),
        };
        if line == bar_line {
            bar.push(along);
        } else if core.contains(line, n) {
            core_marks[along] = true;
            core_count += 1;
        }
    }
    let Some(ca) = Span::covering(&core_marks, cyc) else { return false };
    if core_count != core.len * ca.len || ca.len + 1 >= n {
        return false;
    }
    for dl in 0..core.len {
        for da in 0..ca.len {
            if !cfg.occupied_at(at(axis, (core.start + dl) % n, (ca.start + da) % n, n)) {
                return false;
            }
        }
    }
    let last = ca.last(n);
    let (mut hi, mut lo) = (false, false);
    for &c in &bar {
        if ca.contains(c, n) {
            continue;
        }
        let d_hi = (c + n - last) % n;
        let d_lo = (ca.start + n - c) % n;
        if d_hi <= d_lo {
            hi = true;
        } else {
            lo = true;
        }
    }
    if hi == lo || bar.len() > core.len {
        return false;
    }
    let new_along = if hi { (last + 1) % n } else { (ca.start + n - 1) % n };
    for &c in &bar {
        cfg.set_index(at(axis, bar_line, c, n), false);
    }
    for k in 1..=bar.len() as isize {
        let line = (bar_line as isize + inward * k).rem_euclid(n as isize) as usize;
        cfg.set_index(at(axis, line, new_along, n), true);
    }
    true
}

fn try_slide(cfg: &mut SiteConfig) -> bool {
    let n = cfg.side();
    let Some((cs, rs)) = cfg.spans() else { return false };
    for (axis, span) in [(Axis::Column, cs), (Axis::Row, rs)] {
        if span.len >= n || span.len < 2 {
            continue;
        }
        let first = span.start;
        let last = span.last(n);
        let rest_after = Span { start: (first + 1) % n, len: span.len - 1 };
        let rest_before = Span { start: first, len: span.len - 1 };
        if try_slide_bar(cfg, axis, first, rest_after, 1) || try_slide_bar(cfg, axis, last, rest_before, -1) {
            return true;
        }
    }
    false
}

/// Fills every empty site with at least two occupied neighbours, repeatedly.
fn fill_two_neighbour_sites(cfg: &mut SiteConfig) {
    let mut queue: Vec<usize> = (0..cfg.n_sites()).collect();
    while let Some(idx) = queue.pop() {
        if cfg.occupied_at(idx) || cfg.occupied_neighbours(idx) < 2 {
            continue;
        }
        cfg.set_index(idx, true);
        queue.extend(cfg.neighbours(idx).into_iter().flatten().filter(|&z| !cfg.occupied_at(z)));
    }
}

/// Relaxed configuration: largest cluster kept, at most one slide, then two-neighbour filling.
pub fn relax_configuration(cfg: &SiteConfig) -> SiteConfig {
    let comps = cfg.cluster_indices();
    let mut out = SiteConfig::empty(*cfg.params());
    if let Some(keep) = comps.iter().fold(None::<&Vec<usize>>, |best, c| match best {
        Some(b) if b.len() >= c.len() => Some(b),
        _ => Some(c),
    }) {
        for &i in keep {
            out.set_index(i, true);
        }
    }
    try_slide(&mut out);
    fill_two_neighbour_sites(&mut out);
    out
}

pub fn relax_to_robust(cfg: &SiteConfig) -> Result<AuxState, KawasakiError> {
    let relaxed = relax_configuration(cfg);
    let r = relaxed.classify_robust().map_err(|e| KawasakiError::NotReducible(e.reason.to_string()))?;
    let s = AuxState::new(r.width, r.height);
    if !s.is_valid(cfg.params().l) {
        return Err(KawasakiError::NotReducible(format!("{}x{} rectangle is not a reduced state", r.width, r.height)));
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub state: AuxState,
    pub action: AuxAction,
    pub reward: f64,
    /// `λ^(t−1)` applied to this epoch's reward.
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub epochs: Vec<Epoch>,
    pub discounted_return: f64,
    pub hit_target: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct RolloutConfig {
    pub lambda: f64,
    pub reward: RewardSpec,
    pub max_epochs: usize,
}

/// Controlled rollout; the absorbing full box contributes `λ^T·r/(1−λ)` at once.
pub fn simulate_controlled(
    params: &crate::lattice::ModelParams,
    policy: &AuxPolicy,
    start: AuxState,
    rollout: &RolloutConfig,
    sampler: &dyn InterchangeSampler,
    rng: &mut StreamRng,
) -> Result<Trajectory, KawasakiError> {
    let l = params.l;
    start.check(l)?;
    let target = AuxState::new(l, l);
    let lambda = rollout.lambda;
    let mut s = start;
    let mut discount = 1.0;
    let mut total = 0.0;
    let mut epochs = Vec::new();
    loop {
        if s == target {
            let r = auxmdp::reward(l, s, AuxAction::Stay, rollout.reward)?;
            epochs.push(Epoch { state: s, action: AuxAction::Stay, reward: r, discount });
            if rollout.reward.kind == RewardKind::R1 {
                total += discount * r / (1.0 - lambda);
            }
            let steps = epochs.len() - 1;
            return Ok(Trajectory { epochs, discounted_return: total, hit_target: true, steps });
        }
        if epochs.len() >= rollout.max_epochs {
            return Err(KawasakiError::MaxEpochsExceeded(rollout.max_epochs));
        }
        let a = policy.action(s).ok_or(KawasakiError::MissingAction(s))?;
        let r = auxmdp::reward(l, s, a, rollout.reward)?;
        total += discount * r;
        epochs.push(Epoch { state: s, action: a, reward: r, discount });
        let cfg = auxmdp::post_decision_config(params, s, a)?;
        let (_, next) = sampler.sample(&cfg, rng)?;
        s = relax_to_robust(&next)?;
        discount *= lambda;
    }
}

/// Sum in a fixed binary-tree order so parallel runs reproduce bit for bit.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}
