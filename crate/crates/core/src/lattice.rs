//! Lattice-gas configurations, exact energies, oriented bonds and rectangle geometry.

use std::collections::VecDeque;
use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("bond {0} is not applicable")]
    BondNotApplicable(OrientedBond),
    #[error("site ({x},{y}) lies outside the lattice")]
    SiteOutside { x: i32, y: i32 },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

impl Boundary {
    pub fn as_str(self) -> &'static str {
        match self {
            Boundary::Open => "open",
            Boundary::Periodic => "periodic",
        }
    }
}

impl fmt::Display for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Boundary {
    type Err = LatticeError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Boundary::Open),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(LatticeError::Parse(format!("unknown boundary '{other}'"))),
        }
    }
}

/// Physical parameters and box geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub u: f64,
    pub delta: f64,
    pub beta: f64,
    pub l: usize,
    pub boundary: Boundary,
}

impl ModelParams {
    pub const MIN_SIDE: usize = 6;

    pub fn new(u: f64, delta: f64, beta: f64, l: usize, boundary: Boundary) -> Result<Self, LatticeError> {
        if l < Self::MIN_SIDE {
            return Err(LatticeError::InvalidParams(format!("L must be at least {}, got {l}", Self::MIN_SIDE)));
        }
        Self::small_box(u, delta, beta, l, boundary)
    }

    /// Same energy constraints as [`ModelParams::new`] but any side `L >= 2`.
    /// Used for exhaustive checks on tiny boxes and for landscape searches.
    pub fn small_box(u: f64, delta: f64, beta: f64, l: usize, boundary: Boundary) -> Result<Self, LatticeError> {
        let p = ModelParams { u, delta, beta, l, boundary };
        p.check_energies()?;
        if l < 2 {
            return Err(LatticeError::InvalidParams(format!("L must be at least 2, got {l}")));
        }
        Ok(p)
    }

    fn check_energies(&self) -> Result<(), LatticeError> {
        let bad = |m: &str| Err(LatticeError::InvalidParams(m.to_string()));
        if !(self.u.is_finite() && self.u > 0.0) {
            return bad("U must be positive");
        }
        if !(self.delta.is_finite() && self.delta > 1.5 * self.u && self.delta < 2.0 * self.u) {
            return bad("delta must lie in (1.5U, 2U)");
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad("beta must be positive");
        }
        Ok(())
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    /// Number of sites along one axis: `L+1` for the open box, `L` for the torus.
    pub fn side(&self) -> usize {
        match self.boundary {
            Boundary::Open => self.l + 1,
            Boundary::Periodic => self.l,
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams { u: 1.0, delta: 1.75, beta: 8.0, l: 10, boundary: Boundary::Periodic }
    }
}

/// Energy `u·U + delta·Δ` with integer coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Energy {
    pub u: i64,
    pub delta: i64,
}

impl Energy {
    pub const ZERO: Energy = Energy { u: 0, delta: 0 };

    pub const fn new(u: i64, delta: i64) -> Self {
        Energy { u, delta }
    }

    pub fn value(self, p: &ModelParams) -> f64 {
        self.u as f64 * p.u + self.delta as f64 * p.delta
    }

    pub fn is_zero(self) -> bool {
        self == Energy::ZERO
    }

    /// `[E]_+`, evaluated at the given parameters.
    pub fn positive_part(self, p: &ModelParams) -> Energy {
        if !self.is_zero() && self.value(p) > 0.0 {
            self
        } else {
            Energy::ZERO
        }
    }

    pub fn is_non_positive(self, p: &ModelParams) -> bool {
        self.is_zero() || self.value(p) <= 0.0
    }
}

impl Add for Energy {
    type Output = Energy;
    fn add(self, o: Energy) -> Energy {
        Energy::new(self.u + o.u, self.delta + o.delta)
    }
}

impl AddAssign for Energy {
    fn add_assign(&mut self, o: Energy) {
        *self = *self + o;
    }
}

impl Sub for Energy {
    type Output = Energy;
    fn sub(self, o: Energy) -> Energy {
        Energy::new(self.u - o.u, self.delta - o.delta)
    }
}

impl Neg for Energy {
    type Output = Energy;
    fn neg(self) -> Energy {
        Energy::new(-self.u, -self.delta)
    }
}

impl fmt::Display for Energy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.u, self.delta) {
            (0, 0) => write!(f, "0"),
            (a, 0) => write!(f, "{a}U"),
            (0, b) => write!(f, "{b}D"),
            (a, b) if b > 0 => write!(f, "{a}U+{b}D"),
            (a, b) => write!(f, "{a}U{b}D"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub x: i32,
    pub y: i32,
}

impl Site {
    pub const fn new(x: i32, y: i32) -> Self {
        Site { x, y }
    }

    pub fn step(self, d: Direction) -> Site {
        let (dx, dy) = d.offset();
        Site::new(self.x + dx, self.y + dy)
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    E,
    N,
    W,
    S,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::E, Direction::N, Direction::W, Direction::S];

    pub fn offset(self) -> (i32, i32) {
        match self {
            Direction::E => (1, 0),
            Direction::N => (0, 1),
            Direction::W => (-1, 0),
            Direction::S => (0, -1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondClass {
    Internal,
    In,
    Out,
}

/// Ordered site pair. On the torus, creation (`In`) and annihilation (`Out`)
/// at a bulk site are encoded with `from == to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrientedBond {
    pub from: Site,
    pub to: Site,
    pub class: BondClass,
}

impl OrientedBond {
    pub fn internal(from: Site, to: Site) -> Self {
        OrientedBond { from, to, class: BondClass::Internal }
    }

    pub fn is_reservoir(&self) -> bool {
        self.from == self.to
    }
}

impl fmt::Display for OrientedBond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.class {
            BondClass::Internal => "internal",
            BondClass::In => "in",
            BondClass::Out => "out",
        };
        write!(f, "{}->{} {}", self.from, self.to, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RectangleDescriptor {
    pub origin: Site,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotRobust {
    pub reason: &'static str,
}

impl fmt::Display for NotRobust {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not robust: {}", self.reason)
    }
}

/// Contiguous run of coordinates, cyclic on the torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    /// Smallest arc covering all `true` entries; `None` if there are none.
    pub fn covering(marks: &[bool], cyclic: bool) -> Option<Span> {
        let n = marks.len();
        let first = marks.iter().position(|&m| m)?;
        if !cyclic {
            let last = marks.iter().rposition(|&m| m).unwrap();
            return Some(Span { start: first, len: last - first + 1 });
        }
        if marks.iter().all(|&m| m) {
            return Some(Span { start: 0, len: n });
        }
        // longest cyclic run of empty entries
        let mut best = (0usize, 0usize);
        for s in 0..n {
            if marks[s] || !marks[(s + n - 1) % n] {
                continue;
            }
            let mut len = 0;
            while !marks[(s + len) % n] {
                len += 1;
            }
            if len > best.1 {
                best = (s, len);
            }
        }
        Some(Span { start: (best.0 + best.1) % n, len: n - best.1 })
    }

    pub fn contains(&self, c: usize, n: usize) -> bool {
        (c + n - self.start) % n < self.len
    }

    pub fn last(&self, n: usize) -> usize {
        (self.start + self.len - 1) % n
    }
}

/// Occupation field on the open box `{0..L}²` or the `L×L` torus.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteConfig {
    params: ModelParams,
    occ: Vec<bool>,
}

impl SiteConfig {
    pub fn empty(params: ModelParams) -> Self {
        let n = params.side() * params.side();
        SiteConfig { params, occ: vec![false; n] }
    }

    pub fn from_sites(params: ModelParams, sites: &[Site]) -> Result<Self, LatticeError> {
        let mut c = Self::empty(params);
        for &s in sites {
            let i = c.index(s).ok_or(LatticeError::SiteOutside { x: s.x, y: s.y })?;
            c.occ[i] = true;
        }
        Ok(c)
    }

    pub fn from_occupancy(params: ModelParams, occ: Vec<bool>) -> Result<Self, LatticeError> {
        if occ.len() != params.side() * params.side() {
            return Err(LatticeError::Parse(format!("expected {} sites, got {}", params.side() * params.side(), occ.len())));
        }
        Ok(SiteConfig { params, occ })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occ
    }

    pub fn side(&self) -> usize {
        self.params.side()
    }

    pub fn n_sites(&self) -> usize {
        self.occ.len()
    }

    pub fn is_periodic(&self) -> bool {
        self.params.boundary == Boundary::Periodic
    }

    /// Row-major index of a lattice site; wraps on the torus, `None` outside the open box.
    pub fn index(&self, s: Site) -> Option<usize> {
        let n = self.side() as i32;
        let (x, y) = if self.is_periodic() {
            (s.x.rem_euclid(n), s.y.rem_euclid(n))
        } else {
            if s.x < 0 || s.y < 0 || s.x >= n || s.y >= n {
                return None;
            }
            (s.x, s.y)
        };
        Some((y * n + x) as usize)
    }

    pub fn site(&self, idx: usize) -> Site {
        let n = self.side();
        Site::new((idx % n) as i32, (idx / n) as i32)
    }

    pub fn is_occupied(&self, s: Site) -> bool {
        self.index(s).map(|i| self.occ[i]).unwrap_or(false)
    }

    pub fn occupied_at(&self, idx: usize) -> bool {
        self.occ[idx]
    }

    pub fn set(&mut self, s: Site, value: bool) -> Result<(), LatticeError> {
        let i = self.index(s).ok_or(LatticeError::SiteOutside { x: s.x, y: s.y })?;
        self.occ[i] = value;
        Ok(())
    }

    pub(crate) fn set_index(&mut self, idx: usize, value: bool) {
        self.occ[idx] = value;
    }

    pub fn particle_count(&self) -> usize {
        self.occ.iter().filter(|&&o| o).count()
    }

    pub fn occupied_indices(&self) -> Vec<usize> {
        (0..self.occ.len()).filter(|&i| self.occ[i]).collect()
    }

    pub fn occupied_sites(&self) -> Vec<Site> {
        self.occupied_indices().into_iter().map(|i| self.site(i)).collect()
    }

    /// Lattice neighbours of a site in E, N, W, S order.
    pub fn neighbours(&self, idx: usize) -> [Option<usize>; 4] {
        let s = self.site(idx);
        Direction::ALL.map(|d| self.index(s.step(d)))
    }

    /// Sites whose pair bonds carry energy: the interior `Λ₀` of the open box, everything on the torus.
    pub fn in_bonding_region(&self, idx: usize) -> bool {
        if self.is_periodic() {
            return true;
        }
        let s = self.site(idx);
        let l = self.params.l as i32;
        s.x >= 1 && s.y >= 1 && s.x <= l - 1 && s.y <= l - 1
    }

    fn bonded_neighbours(&self, idx: usize, skip: Option<usize>) -> i64 {
        if !self.in_bonding_region(idx) {
            return 0;
        }
        self.neighbours(idx)
            .into_iter()
            .flatten()
            .filter(|&z| Some(z) != skip && self.occ[z] && self.in_bonding_region(z))
            .count() as i64
    }

    /// Number of occupied lattice neighbours, regardless of the bonding region.
    pub fn occupied_neighbours(&self, idx: usize) -> usize {
        self.neighbours(idx).into_iter().flatten().filter(|&z| self.occ[z]).count()
    }

    pub fn hamiltonian(&self) -> Energy {
        let mut pairs = 0i64;
        let mut particles = 0i64;
        for idx in 0..self.occ.len() {
            if !self.occ[idx] {
                continue;
            }
            particles += 1;
            if !self.in_bonding_region(idx) {
                continue;
            }
            let s = self.site(idx);
            for d in [Direction::E, Direction::N] {
                if let Some(z) = self.index(s.step(d)) {
                    if self.occ[z] && self.in_bonding_region(z) {
                        pairs += 1;
                    }
                }
            }
        }
        Energy::new(-pairs, particles)
    }

    pub fn energy(&self) -> f64 {
        self.hamiltonian().value(&self.params)
    }

    /// Bonds driving the Kawasaki chain: internal, outgoing and incoming bonds
    /// of the open box, or the internal bonds of the torus.
    /// Ordered row-major by lattice endpoint, then E, N, W, S, with OUT before IN.
    pub fn bonds(&self) -> Vec<OrientedBond> {
        let mut out = Vec::with_capacity(4 * self.occ.len());
        for idx in 0..self.occ.len() {
            let s = self.site(idx);
            for d in Direction::ALL {
                let t = s.step(d);
                if self.index(t).is_some() {
                    out.push(OrientedBond::internal(s, t));
                } else {
                    out.push(OrientedBond { from: s, to: t, class: BondClass::Out });
                    out.push(OrientedBond { from: t, to: s, class: BondClass::In });
                }
            }
        }
        out
    }

    /// Bulk creation and annihilation moves of the torus (empty for the open box).
    pub fn reservoir_bonds(&self) -> Vec<OrientedBond> {
        if !self.is_periodic() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(2 * self.occ.len());
        for idx in 0..self.occ.len() {
            let s = self.site(idx);
            out.push(OrientedBond { from: s, to: s, class: BondClass::Out });
            out.push(OrientedBond { from: s, to: s, class: BondClass::In });
        }
        out
    }

    fn are_neighbours(&self, a: Site, b: Site) -> bool {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        if self.is_periodic() {
            let n = self.side() as i32;
            let (dx, dy) = (dx.rem_euclid(n), dy.rem_euclid(n));
            let unit = |d: i32| d == 1 || d == n - 1;
            (unit(dx) && dy == 0) || (dx == 0 && unit(dy))
        } else {
            dx.abs() + dy.abs() == 1
        }
    }

    fn resolve(&self, b: &OrientedBond) -> Result<Move, LatticeError> {
        let na = || LatticeError::BondNotApplicable(*b);
        if b.is_reservoir() {
            if !self.is_periodic() || b.class == BondClass::Internal {
                return Err(na());
            }
            let i = self.index(b.from).ok_or_else(na)?;
            if self.occupied_neighbours(i) > 0 {
                return Err(na());
            }
            return Ok(match b.class {
                BondClass::Out => Move::Annihilate(i),
                _ => Move::Create(i),
            });
        }
        if !self.are_neighbours(b.from, b.to) {
            return Err(na());
        }
        let (fi, ti) = (self.index(b.from), self.index(b.to));
        match b.class {
            BondClass::Internal => match (fi, ti) {
                (Some(f), Some(t)) => Ok(Move::Swap(f, t)),
                _ => Err(na()),
            },
            BondClass::Out if !self.is_periodic() => match (fi, ti) {
                (Some(f), None) => Ok(Move::Annihilate(f)),
                _ => Err(na()),
            },
            BondClass::In if !self.is_periodic() => match (fi, ti) {
                (None, Some(t)) => Ok(Move::Create(t)),
                _ => Err(na()),
            },
            _ => Err(na()),
        }
    }

    pub fn is_applicable(&self, b: &OrientedBond) -> bool {
        self.resolve(b).is_ok()
    }

    /// Whether `b` carries a particle hop: an occupied `from` and empty `to` for
    /// internal bonds, an occupied (empty) site for annihilation (creation).
    pub fn fires(&self, b: &OrientedBond) -> Result<bool, LatticeError> {
        Ok(match self.resolve(b)? {
            Move::Swap(f, t) => self.occ[f] && !self.occ[t],
            Move::Annihilate(i) => self.occ[i],
            Move::Create(i) => !self.occ[i],
        })
    }

    pub fn apply_bond(&self, b: &OrientedBond) -> Result<SiteConfig, LatticeError> {
        let mut c = self.clone();
        c.apply_bond_in_place(b)?;
        Ok(c)
    }

    pub fn apply_bond_in_place(&mut self, b: &OrientedBond) -> Result<(), LatticeError> {
        match self.resolve(b)? {
            Move::Swap(f, t) => self.occ.swap(f, t),
            Move::Annihilate(i) => self.occ[i] = false,
            Move::Create(i) => self.occ[i] = true,
        }
        Ok(())
    }

    /// `H(T_b η) − H(η)` from the local neighbourhood of the bond.
    pub fn energy_delta(&self, b: &OrientedBond) -> Result<Energy, LatticeError> {
        Ok(match self.resolve(b)? {
            Move::Swap(f, t) => {
                if self.occ[f] == self.occ[t] {
                    Energy::ZERO
                } else {
                    let (src, dst) = if self.occ[f] { (f, t) } else { (t, f) };
                    let lost = self.bonded_neighbours(src, Some(dst));
                    let gained = self.bonded_neighbours(dst, Some(src));
                    Energy::new(lost - gained, 0)
                }
            }
            Move::Annihilate(i) => {
                if self.occ[i] {
                    Energy::new(self.bonded_neighbours(i, None), -1)
                } else {
                    Energy::ZERO
                }
            }
            Move::Create(i) => {
                if self.occ[i] {
                    Energy::ZERO
                } else {
                    Energy::new(-self.bonded_neighbours(i, None), 1)
                }
            }
        })
    }

    /// Firing bonds of [`SiteConfig::bonds`] that do not raise the energy.
    pub fn susceptible_bonds(&self) -> Vec<OrientedBond> {
        self.bonds()
            .into_iter()
            .filter(|b| {
                self.fires(b).unwrap_or(false)
                    && self.energy_delta(b).map(|e| e.is_non_positive(&self.params)).unwrap_or(false)
            })
            .collect()
    }

    /// Connected components under nearest-neighbour adjacency, each sorted by
    /// site index, ordered by their smallest index.
    pub fn cluster_indices(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.occ.len()];
        let mut comps = Vec::new();
        for start in 0..self.occ.len() {
            if !self.occ[start] || seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut q = VecDeque::from([start]);
            while let Some(i) = q.pop_front() {
                for z in self.neighbours(i).into_iter().flatten() {
                    if self.occ[z] && !seen[z] {
                        seen[z] = true;
                        comp.push(z);
                        q.push_back(z);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn clusters(&self) -> Vec<Vec<Site>> {
        self.cluster_indices()
            .into_iter()
            .map(|c| c.into_iter().map(|i| self.site(i)).collect())
            .collect()
    }

    /// Column and row spans of the occupied set.
    pub fn spans(&self) -> Option<(Span, Span)> {
        let n = self.side();
        let mut cols = vec![false; n];
        let mut rows = vec![false; n];
        for i in self.occupied_indices() {
            cols[i % n] = true;
            rows[i / n] = true;
        }
        let cyc = self.is_periodic();
        Some((Span::covering(&cols, cyc)?, Span::covering(&rows, cyc)?))
    }

    /// Descriptor of the occupied set if it is exactly one full rectangle, of any side lengths.
    pub fn as_rectangle(&self) -> Option<RectangleDescriptor> {
        let (cs, rs) = self.spans()?;
        if cs.len * rs.len != self.particle_count() {
            return None;
        }
        let n = self.side();
        for dy in 0..rs.len {
            for dx in 0..cs.len {
                let idx = ((rs.start + dy) % n) * n + (cs.start + dx) % n;
                if !self.occ[idx] {
                    return None;
                }
            }
        }
        Some(RectangleDescriptor {
            origin: Site::new(cs.start as i32, rs.start as i32),
            width: cs.len,
            height: rs.len,
        })
    }

    pub fn classify_robust(&self) -> Result<RectangleDescriptor, NotRobust> {
        if self.particle_count() == 0 {
            return Err(NotRobust { reason: "empty configuration" });
        }
        if self.cluster_indices().len() != 1 {
            return Err(NotRobust { reason: "more than one cluster" });
        }
        let r = self.as_rectangle().ok_or(NotRobust { reason: "cluster is not a rectangle" })?;
        if r.width.min(r.height) < 2 {
            return Err(NotRobust { reason: "rectangle has a side of length 1" });
        }
        Ok(r)
    }

    /// Text grid: header line, then one line per row with the highest `y` first.
    pub fn to_grid(&self) -> String {
        let n = self.side();
        let mut s = format!("L={} boundary={}\n", self.params.l, self.params.boundary);
        for y in (0..n).rev() {
            for x in 0..n {
                s.push(if self.occ[y * n + x] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }

    /// Parses [`SiteConfig::to_grid`] output; energies and `beta` come from `template`.
    pub fn from_grid(text: &str, template: &ModelParams) -> Result<SiteConfig, LatticeError> {
        let mut lines = text.lines().map(str::trim_end).filter(|l| !l.is_empty());
        let header = lines.next().ok_or_else(|| LatticeError::Parse("missing header".into()))?;
        let (l, boundary) = parse_header(header)?;
        let params = ModelParams::small_box(template.u, template.delta, template.beta, l, boundary)?;
        let n = params.side();
        let rows: Vec<&str> = lines.collect();
        if rows.len() != n {
            return Err(LatticeError::Parse(format!("expected {n} rows, got {}", rows.len())));
        }
        let mut occ = vec![false; n * n];
        for (r, line) in rows.iter().enumerate() {
            let y = n - 1 - r;
            let chars: Vec<char> = line.chars().collect();
            if chars.len() != n {
                return Err(LatticeError::Parse(format!("row {r} has {} cells, expected {n}", chars.len())));
            }
            for (x, ch) in chars.into_iter().enumerate() {
                occ[y * n + x] = match ch {
                    '#' => true,
                    '.' => false,
                    other => return Err(LatticeError::Parse(format!("unexpected character '{other}'"))),
                };
            }
        }
        SiteConfig::from_occupancy(params, occ)
    }

    pub fn to_json(&self) -> String {
        let file = ConfigFile {
            l: self.params.l,
            boundary: self.params.boundary,
            sites: self.occupied_sites().into_iter().map(|s| [s.x, s.y]).collect(),
        };
        serde_json::to_string(&file).expect("configuration serializes")
    }

    pub fn from_json(text: &str, template: &ModelParams) -> Result<SiteConfig, LatticeError> {
        let file: ConfigFile = serde_json::from_str(text).map_err(|e| LatticeError::Parse(e.to_string()))?;
        let params = ModelParams::small_box(template.u, template.delta, template.beta, file.l, file.boundary)?;
        let sites: Vec<Site> = file.sites.iter().map(|&[x, y]| Site::new(x, y)).collect();
        let n = params.side() as i32;
        if let Some(s) = sites.iter().find(|s| s.x < 0 || s.y < 0 || s.x >= n || s.y >= n) {
            return Err(LatticeError::SiteOutside { x: s.x, y: s.y });
        }
        SiteConfig::from_sites(params, &sites)
    }

    /// Reads either the grid or the JSON format.
    pub fn parse(text: &str, template: &ModelParams) -> Result<SiteConfig, LatticeError> {
        if text.trim_start().starts_with('{') {
            Self::from_json(text, template)
        } else {
            Self::from_grid(text, template)
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Move {
    Swap(usize, usize),
    Annihilate(usize),
    Create(usize),
}

#[derive(Serialize, Deserialize)]
struct ConfigFile {
    #[serde(rename = "L")]
    l: usize,
    boundary: Boundary,
    sites: Vec<[i32; 2]>,
}

fn parse_header(h: &str) -> Result<(usize, Boundary), LatticeError> {
    let mut l = None;
    let mut boundary = None;
    for tok in h.split_whitespace() {
        match tok.split_once('=') {
            Some(("L", v)) => l = Some(v.parse::<usize>().map_err(|e| LatticeError::Parse(e.to_string()))?),
            Some(("boundary", v)) => boundary = Some(v.parse::<Boundary>()?),
            _ => return Err(LatticeError::Parse(format!("bad header token '{tok}'"))),
        }
    }
    match (l, boundary) {
        (Some(l), Some(b)) => Ok((l, b)),
        _ => Err(LatticeError::Parse("header needs L=<n> and boundary=<open|periodic>".into())),
    }
}
