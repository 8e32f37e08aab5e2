//! Reduced MDP over rectangular clusters: states, action sets, the exact
//! kernel, rewards, post-decision configurations and the geometric kernel oracle.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kawasaki;
use crate::lattice::{Boundary, LatticeError, ModelParams, OrientedBond, Site, SiteConfig};
use crate::solver::{ActionRow, FiniteMdp, Policy, SolverError, ValueFn};

pub type Prob = Ratio<i64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuxError {
    #[error("state {0} is not a state of the L={1} model")]
    InvalidState(AuxState, usize),
    #[error("action {1} is not available in state {0}")]
    ActionNotAvailable(AuxState, AuxAction),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("no susceptible bond in the post-decision configuration of {0} under {1}")]
    NoSusceptibleBond(AuxState, AuxAction),
    #[error("firing {bond} from {state} under {action} does not relax to a rectangle: {reason}")]
    NotReducible { state: AuxState, action: AuxAction, bond: OrientedBond, reason: String },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AuxState {
    pub i: usize,
    pub j: usize,
}

impl AuxState {
    pub const fn new(i: usize, j: usize) -> Self {
        AuxState { i, j }
    }

    pub fn transpose(self) -> Self {
        AuxState::new(self.j, self.i)
    }

    pub fn is_valid(self, l: usize) -> bool {
        valid_side(self.i, l) && valid_side(self.j, l)
    }

    pub fn check(self, l: usize) -> Result<Self, AuxError> {
        if self.is_valid(l) {
            Ok(self)
        } else {
            Err(AuxError::InvalidState(self, l))
        }
    }
}

impl fmt::Display for AuxState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.i, self.j)
    }
}

impl FromStr for AuxState {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let t = s.trim().trim_start_matches('(').trim_end_matches(')');
        let (a, b) = t.split_once(',').ok_or_else(|| format!("expected i,j but got '{s}'"))?;
        let p = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("'{x}': {e}"));
        Ok(AuxState::new(p(a)?, p(b)?))
    }
}

fn valid_side(k: usize, l: usize) -> bool {
    (k >= 2 && k + 2 <= l) || k == l
}

/// Side lengths `2..=L−2` and `L`.
pub fn sides(l: usize) -> Vec<usize> {
    (2..=l).filter(|&k| valid_side(k, l)).collect()
}

/// All states in lexicographic `(i, j)` order.
pub fn states(l: usize) -> Vec<AuxState> {
    let s = sides(l);
    s.iter().flat_map(|&i| s.iter().map(move |&j| AuxState::new(i, j))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AuxAction {
    /// Detach a non-corner particle from the horizontal side.
    B1,
    /// Detach a corner particle perpendicular to the horizontal side.
    B1C,
    /// Detach a non-corner particle from the vertical side.
    B2,
    /// Detach a corner particle perpendicular to the vertical side.
    B2C,
    Stay,
}

impl AuxAction {
    pub const ALL: [AuxAction; 5] = [AuxAction::B1, AuxAction::B1C, AuxAction::B2, AuxAction::B2C, AuxAction::Stay];

    pub fn as_str(self) -> &'static str {
        match self {
            AuxAction::B1 => "B1",
            AuxAction::B1C => "B1C",
            AuxAction::B2 => "B2",
            AuxAction::B2C => "B2C",
            AuxAction::Stay => "STAY",
        }
    }

    pub fn transpose(self) -> Self {
        match self {
            AuxAction::B1 => AuxAction::B2,
            AuxAction::B2 => AuxAction::B1,
            AuxAction::B1C => AuxAction::B2C,
            AuxAction::B2C => AuxAction::B1C,
            AuxAction::Stay => AuxAction::Stay,
        }
    }

    pub fn is_corner(self) -> bool {
        matches!(self, AuxAction::B1C | AuxAction::B2C)
    }
}

impl fmt::Display for AuxAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AuxAction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_uppercase().as_str() {
            "B1" => Ok(AuxAction::B1),
            "B1C" | "B1'" => Ok(AuxAction::B1C),
            "B2" => Ok(AuxAction::B2),
            "B2C" | "B2'" => Ok(AuxAction::B2C),
            "STAY" => Ok(AuxAction::Stay),
            _ => Err(format!("unknown action '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRow {
    pub entries: Vec<(AuxState, Prob)>,
}

impl TransitionRow {
    fn from_pairs(pairs: &[(AuxState, i64, i64)]) -> Self {
        let mut m: BTreeMap<AuxState, Prob> = BTreeMap::new();
        for &(s, n, d) in pairs {
            *m.entry(s).or_insert_with(Prob::zero) += Prob::new(n, d);
        }
        TransitionRow { entries: m.into_iter().collect() }
    }

    /// Uniform distribution over a multiset of outcomes.
    pub fn from_outcomes(outcomes: &[AuxState]) -> Self {
        let n = outcomes.len() as i64;
        let pairs: Vec<(AuxState, i64, i64)> = outcomes.iter().map(|&s| (s, 1, n)).collect();
        Self::from_pairs(&pairs)
    }

    pub fn prob(&self, s: AuxState) -> Prob {
        self.entries.iter().find(|e| e.0 == s).map(|e| e.1).unwrap_or_else(Prob::zero)
    }

    pub fn total(&self) -> Prob {
        self.entries.iter().fold(Prob::zero(), |acc, e| acc + e.1)
    }

    pub fn transpose(&self) -> Self {
        let pairs: Vec<(AuxState, i64, i64)> = self.entries.iter().map(|(s, p)| (s.transpose(), *p.numer(), *p.denom())).collect();
        Self::from_pairs(&pairs)
    }
}

impl fmt::Display for TransitionRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries.iter().map(|(s, p)| format!("{s}: {p}")).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RewardKind {
    /// Unit reward per epoch spent in the full box.
    R1,
    /// Minus the energy spent on each controlled move.
    R2,
}

impl FromStr for RewardKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "r1" => Ok(RewardKind::R1),
            "r2" => Ok(RewardKind::R2),
            _ => Err(format!("unknown reward '{s}'")),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardKind::R1 => "r1",
            RewardKind::R2 => "r2",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardSpec {
    pub kind: RewardKind,
    pub u: f64,
}

impl RewardSpec {
    pub fn r1() -> Self {
        RewardSpec { kind: RewardKind::R1, u: 1.0 }
    }

    pub fn r2(u: f64) -> Self {
        RewardSpec { kind: RewardKind::R2, u }
    }
}

pub fn action_set(l: usize, s: AuxState) -> Result<Vec<AuxAction>, AuxError> {
    use AuxAction::*;
    let AuxState { i, j } = s.check(l)?;
    Ok(match (i, j) {
        _ if i == l && j == l => vec![Stay],
        _ if i == l => vec![B1],
        _ if j == l => vec![B2],
        (2, 2) => vec![B1C, B2C],
        (2, _) => vec![B1C, B2, B2C],
        (_, 2) => vec![B1, B1C, B2C],
        _ => vec![B1, B1C, B2, B2C],
    })
}

fn require(l: usize, s: AuxState, a: AuxAction) -> Result<(), AuxError> {
    if action_set(l, s)?.contains(&a) {
        Ok(())
    } else {
        Err(AuxError::ActionNotAvailable(s, a))
    }
}

/// Exact transition row of the reduced model.
pub fn kernel(l: usize, s: AuxState, a: AuxAction) -> Result<TransitionRow, AuxError> {
    require(l, s, a)?;
    Ok(kernel_unchecked(l, s, a))
}

fn kernel_unchecked(l: usize, s: AuxState, a: AuxAction) -> TransitionRow {
    let AuxState { i, j } = s;
    let st = AuxState::new;
    match a {
        AuxAction::Stay => TransitionRow::from_pairs(&[(s, 1, 1)]),
        AuxAction::B1 if j == l - 2 => TransitionRow::from_pairs(&[(s, 1, 7), (st(i, l), 6, 7)]),
        AuxAction::B1 => TransitionRow::from_pairs(&[(s, 2, 7), (st(i, j + 1), 5, 7)]),
        AuxAction::B1C if j == l - 2 => TransitionRow::from_pairs(&[(s, 1, 3), (st(i, l), 2, 3)]),
        AuxAction::B1C if j >= i => TransitionRow::from_pairs(&[(s, 1, 2), (st(i, j + 1), 1, 2)]),
        AuxAction::B1C => TransitionRow::from_pairs(&[(s, 1, 2), (st(i, j + 1), 1, 3), (st(i - 1, j + 1), 1, 6)]),
        AuxAction::B2 | AuxAction::B2C => kernel_unchecked(l, s.transpose(), a.transpose()).transpose(),
    }
}

/// Name of the kernel case a row falls under; the B2 families mirror the B1 ones.
pub fn kernel_family(l: usize, s: AuxState, a: AuxAction) -> Result<&'static str, AuxError> {
    require(l, s, a)?;
    let (t, b) = match a {
        AuxAction::B2 | AuxAction::B2C => (s.transpose(), a.transpose()),
        _ => (s, a),
    };
    let mirrored = matches!(a, AuxAction::B2 | AuxAction::B2C);
    let f = match b {
        AuxAction::Stay => "absorbing",
        AuxAction::B1 if t.j == l - 2 => ["b1-edge", "b2-edge"][mirrored as usize],
        AuxAction::B1 => ["b1", "b2"][mirrored as usize],
        AuxAction::B1C if t.j == l - 2 => ["b1c-edge", "b2c-edge"][mirrored as usize],
        AuxAction::B1C if t.j >= t.i => ["b1c", "b2c"][mirrored as usize],
        _ => ["b1c-slide", "b2c-slide"][mirrored as usize],
    };
    Ok(f)
}

pub fn reward(l: usize, s: AuxState, a: AuxAction, spec: RewardSpec) -> Result<f64, AuxError> {
    require(l, s, a)?;
    Ok(match spec.kind {
        RewardKind::R1 => {
            if s == AuxState::new(l, l) {
                1.0
            } else {
                0.0
            }
        }
        RewardKind::R2 => match a {
            AuxAction::B1 | AuxAction::B2 => -3.0 * spec.u,
            AuxAction::B1C | AuxAction::B2C => -2.0 * spec.u,
            AuxAction::Stay => 0.0,
        },
    })
}

/// Centred `i×j` rectangle on the `L×L` torus.
pub fn rectangle_config(params: &ModelParams, s: AuxState) -> Result<SiteConfig, AuxError> {
    let p = params.with_boundary(Boundary::Periodic);
    let l = p.l;
    s.check(l)?;
    let (ox, oy) = (((l - s.i) / 2) as i32, ((l - s.j) / 2) as i32);
    let sites: Vec<Site> = (0..s.j as i32)
        .flat_map(|dy| (0..s.i as i32).map(move |dx| Site::new(ox + dx, oy + dy)))
        .collect();
    Ok(SiteConfig::from_sites(p, &sites)?)
}

/// The controlled move: a particle of the centred rectangle pushed one step outward.
pub fn decision_bond(params: &ModelParams, s: AuxState, a: AuxAction) -> Result<OrientedBond, AuxError> {
    require(params.l, s, a)?;
    let l = params.l;
    let (ox, oy) = (((l - s.i) / 2) as i32, ((l - s.j) / 2) as i32);
    let top = oy + s.j as i32 - 1;
    let (from, to) = match a {
        AuxAction::B1 => {
            let c = ox + s.i.div_ceil(2) as i32 - 1;
            (Site::new(c, top), Site::new(c, top + 1))
        }
        AuxAction::B2 => {
            let r = oy + s.j.div_ceil(2) as i32 - 1;
            (Site::new(ox, r), Site::new(ox - 1, r))
        }
        AuxAction::B1C => (Site::new(ox, top), Site::new(ox, top + 1)),
        AuxAction::B2C => (Site::new(ox, top), Site::new(ox - 1, top)),
        AuxAction::Stay => return Err(AuxError::ActionNotAvailable(s, a)),
    };
    let n = l as i32;
    let wrap = |p: Site| Site::new(p.x.rem_euclid(n), p.y.rem_euclid(n));
    Ok(OrientedBond::internal(wrap(from), wrap(to)))
}

pub fn post_decision_config(params: &ModelParams, s: AuxState, a: AuxAction) -> Result<SiteConfig, AuxError> {
    let bond = decision_bond(params, s, a)?;
    Ok(rectangle_config(params, s)?.apply_bond(&bond)?)
}

/// One susceptible bond of a post-decision configuration and where it relaxes to.
#[derive(Debug, Clone, PartialEq)]
pub struct BondOutcome {
    pub bond: OrientedBond,
    pub outcome: Result<AuxState, String>,
}

/// Fires every susceptible bond of the post-decision configuration and relaxes each result.
pub fn first_interchange_outcomes(params: &ModelParams, s: AuxState, a: AuxAction) -> Result<Vec<BondOutcome>, AuxError> {
    let cfg = post_decision_config(params, s, a)?;
    let bonds = cfg.susceptible_bonds();
    if bonds.is_empty() {
        return Err(AuxError::NoSusceptibleBond(s, a));
    }
    bonds
        .into_iter()
        .map(|b| {
            let next = cfg.apply_bond(&b)?;
            let outcome = kawasaki::relax_to_robust(&next).map_err(|e| e.to_string());
            Ok(BondOutcome { bond: b, outcome })
        })
        .collect()
}

/// Uniform-over-susceptible-bonds outcome distribution, built from the lattice.
pub fn derive_kernel_geometric(params: &ModelParams, s: AuxState, a: AuxAction) -> Result<TransitionRow, AuxError> {
    let outcomes = first_interchange_outcomes(params, s, a)?;
    let mut targets = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        match o.outcome {
            Ok(t) => targets.push(t),
            Err(reason) => return Err(AuxError::NotReducible { state: s, action: a, bond: o.bond, reason }),
        }
    }
    Ok(TransitionRow::from_outcomes(&targets))
}

/// Every `(state, action, row)` of the exact kernel, states in lexicographic order.
pub fn kernel_table(l: usize) -> Result<Vec<(AuxState, AuxAction, TransitionRow)>, AuxError> {
    let mut out = Vec::new();
    for s in states(l) {
        for a in action_set(l, s)? {
            out.push((s, a, kernel(l, s, a)?));
        }
    }
    Ok(out)
}

fn to_f64(p: Prob) -> f64 {
    p.to_f64().expect("small rational")
}

/// The reduced model assembled for the generic solvers.
#[derive(Debug, Clone)]
pub struct AuxMdp {
    pub l: usize,
    pub spec: RewardSpec,
    pub states: Vec<AuxState>,
    pub actions: Vec<Vec<AuxAction>>,
    pub mdp: FiniteMdp,
    index: HashMap<AuxState, usize>,
}

pub fn build_mdp(l: usize, lambda: f64, spec: RewardSpec) -> Result<AuxMdp, AuxError> {
    if l < ModelParams::MIN_SIDE {
        return Err(AuxError::InvalidParams(format!("L must be at least {}", ModelParams::MIN_SIDE)));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(AuxError::InvalidParams("lambda must lie in (0,1)".into()));
    }
    if spec.kind == RewardKind::R2 && !(spec.u > 0.0) {
        return Err(AuxError::InvalidParams("U must be positive".into()));
    }
    let sts = states(l);
    let index: HashMap<AuxState, usize> = sts.iter().enumerate().map(|(k, &s)| (s, k)).collect();
    let mut actions = Vec::with_capacity(sts.len());
    let mut rows = Vec::with_capacity(sts.len());
    for &s in &sts {
        let acts = action_set(l, s)?;
        let mut r = Vec::with_capacity(acts.len());
        for &a in &acts {
            let row = kernel(l, s, a)?;
            debug_assert!(row.total().is_one());
            r.push(ActionRow {
                reward: reward(l, s, a, spec)?,
                transitions: row.entries.iter().map(|(t, p)| (index[t], to_f64(*p))).collect(),
            });
        }
        actions.push(acts);
        rows.push(r);
    }
    let mdp = FiniteMdp::new(lambda, rows)?;
    Ok(AuxMdp { l, spec, states: sts, actions, mdp, index })
}

impl AuxMdp {
    pub fn state_index(&self, s: AuxState) -> Option<usize> {
        self.index.get(&s).copied()
    }

    pub fn value(&self, v: &ValueFn, s: AuxState) -> f64 {
        v.0[self.index[&s]]
    }

    pub fn action_index(&self, s: AuxState, a: AuxAction) -> Option<usize> {
        let k = self.state_index(s)?;
        self.actions[k].iter().position(|&x| x == a)
    }

    /// Builds a solver policy from a per-state choice.
    pub fn policy_from<F: Fn(AuxState) -> AuxAction>(&self, choose: F) -> Result<Policy, AuxError> {
        self.states
            .iter()
            .map(|&s| {
                let a = choose(s);
                self.action_index(s, a).ok_or(AuxError::ActionNotAvailable(s, a))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Policy)
    }

    pub fn decode_policy(&self, pi: &Policy) -> AuxPolicy {
        AuxPolicy {
            l: self.l,
            actions: self.states.iter().enumerate().map(|(k, &s)| (s, self.actions[k][pi.0[k]])).collect(),
        }
    }

    pub fn decode_sets(&self, sets: &[Vec<usize>]) -> Vec<Vec<AuxAction>> {
        sets.iter().enumerate().map(|(k, set)| set.iter().map(|&a| self.actions[k][a]).collect()).collect()
    }
}

/// Decision rule over reduced states.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuxPolicy {
    pub l: usize,
    pub actions: BTreeMap<AuxState, AuxAction>,
}

impl AuxPolicy {
    pub fn action(&self, s: AuxState) -> Option<AuxAction> {
        self.actions.get(&s).copied()
    }
}
