//! Finite discounted MDPs: value iteration, exact policy evaluation, policy
//! iteration, exhaustive enumeration and greedy action sets.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("lambda must lie in (0,1)")]
    InvalidDiscount(f64),
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("policy is invalid: {0}")]
    InvalidPolicy(String),
    #[error("policy space too large to enumerate ({0} policies)")]
    TooManyPolicies(u128),
    #[error("tolerance must be positive")]
    InvalidTolerance,
    #[error("unknown solver '{0}'")]
    UnknownSolver(String),
}

/// One action available in a state: immediate reward and sparse successor row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionRow {
    pub reward: f64,
    pub transitions: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteMdp {
    lambda: f64,
    rows: Vec<Vec<ActionRow>>,
}

impl FiniteMdp {
    pub const ROW_SUM_TOL: f64 = 1e-12;

    pub fn new(lambda: f64, rows: Vec<Vec<ActionRow>>) -> Result<Self, SolverError> {
        if !(lambda > 0.0 && lambda < 1.0) {
            return Err(SolverError::InvalidDiscount(lambda));
        }
        let n = rows.len();
        for (s, acts) in rows.iter().enumerate() {
            if acts.is_empty() {
                return Err(SolverError::InvalidMdp(format!("state {s} has no actions")));
            }
            for (a, row) in acts.iter().enumerate() {
                if !row.reward.is_finite() {
                    return Err(SolverError::InvalidMdp(format!("reward of ({s},{a}) is not finite")));
                }
                let mut sum = 0.0;
                for &(t, p) in &row.transitions {
                    if t >= n || !(p >= 0.0) {
                        return Err(SolverError::InvalidMdp(format!("bad transition ({s},{a}) -> {t} with {p}")));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > Self::ROW_SUM_TOL {
                    return Err(SolverError::InvalidMdp(format!("row ({s},{a}) sums to {sum}")));
                }
            }
        }
        Ok(FiniteMdp { lambda, rows })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn actions(&self, s: usize) -> &[ActionRow] {
        &self.rows[s]
    }

    pub fn max_actions(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn max_abs_reward(&self) -> f64 {
        self.rows.iter().flatten().map(|r| r.reward.abs()).fold(0.0, f64::max)
    }

    /// Bound `max|r| / (1 − λ)` on any value function.
    pub fn value_scale(&self) -> f64 {
        self.max_abs_reward() / (1.0 - self.lambda)
    }

    pub fn q_value(&self, v: &ValueFn, s: usize, a: usize) -> f64 {
        let row = &self.rows[s][a];
        row.reward + self.lambda * row.transitions.iter().map(|&(t, p)| p * v.0[t]).sum::<f64>()
    }

    pub fn q_values(&self, v: &ValueFn, s: usize) -> Vec<f64> {
        (0..self.rows[s].len()).map(|a| self.q_value(v, s, a)).collect()
    }

    fn backup(&self, v: &[f64], s: usize) -> f64 {
        self.rows[s]
            .iter()
            .map(|row| row.reward + self.lambda * row.transitions.iter().map(|&(t, p)| p * v[t]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Bellman optimality operator.
    pub fn bellman(&self, v: &ValueFn) -> ValueFn {
        ValueFn((0..self.n_states()).map(|s| self.backup(&v.0, s)).collect())
    }

    pub fn validate_policy(&self, pi: &Policy) -> Result<(), SolverError> {
        if pi.0.len() != self.n_states() {
            return Err(SolverError::InvalidPolicy(format!("{} entries for {} states", pi.0.len(), self.n_states())));
        }
        for (s, &a) in pi.0.iter().enumerate() {
            if a >= self.rows[s].len() {
                return Err(SolverError::InvalidPolicy(format!("action {a} not available in state {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFn(pub Vec<f64>);

impl ValueFn {
    pub fn zeros(n: usize) -> Self {
        ValueFn(vec![0.0; n])
    }

    pub fn sup_distance(&self, other: &ValueFn) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Deterministic stationary decision rule: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy(pub Vec<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub wallclock: f64,
    pub update_norms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    /// Synchronous backups from the previous iterate.
    Jacobi,
    /// In-place backups visiting states from the highest index down.
    GaussSeidel,
}

pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<(ValueFn, SolveReport), SolverError> {
    value_iteration_with(mdp, tol, Sweep::Jacobi)
}

/// Iterates the Bellman operator until the sup-norm update drops to `tol·(1−λ)/(2λ)`.
pub fn value_iteration_with(mdp: &FiniteMdp, tol: f64, sweep: Sweep) -> Result<(ValueFn, SolveReport), SolverError> {
    if !(tol > 0.0) {
        return Err(SolverError::InvalidTolerance);
    }
    let start = Instant::now();
    let lambda = mdp.lambda();
    let stop = tol * (1.0 - lambda) / (2.0 * lambda);
    let n = mdp.n_states();
    let mut v = vec![0.0; n];
    let mut norms = Vec::new();
    loop {
        let norm = match sweep {
            Sweep::Jacobi => {
                let next: Vec<f64> = if n >= 256 {
                    (0..n).into_par_iter().map(|s| mdp.backup(&v, s)).collect()
                } else {
                    (0..n).map(|s| mdp.backup(&v, s)).collect()
                };
                let d = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = next;
                d
            }
            Sweep::GaussSeidel => {
                let mut d: f64 = 0.0;
                for s in (0..n).rev() {
                    let x = mdp.backup(&v, s);
                    d = d.max((x - v[s]).abs());
                    v[s] = x;
                }
                d
            }
        };
        norms.push(norm);
        if norm <= stop {
            break;
        }
    }
    let v = ValueFn(v);
    let residual = bellman_residual(mdp, &v);
    Ok((
        v,
        SolveReport { iterations: norms.len(), residual, wallclock: start.elapsed().as_secs_f64(), update_norms: norms },
    ))
}

/// Solves `(I − λP_π) v = r_π` one strongly connected block at a time,
/// sinks first, so far-away values keep full relative precision.
pub fn policy_evaluation(mdp: &FiniteMdp, pi: &Policy) -> Result<ValueFn, SolverError> {
    mdp.validate_policy(pi)?;
    let n = mdp.n_states();
    let lambda = mdp.lambda();
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, n);
    let nodes: Vec<NodeIndex> = (0..n).map(|_| g.add_node(())).collect();
    for s in 0..n {
        for &(t, p) in &mdp.actions(s)[pi.0[s]].transitions {
            if p > 0.0 && t != s {
                g.add_edge(nodes[s], nodes[t], ());
            }
        }
    }
    let mut v = vec![0.0; n];
    for comp in tarjan_scc(&g) {
        let members: Vec<usize> = comp.iter().map(|ni| ni.index()).collect();
        let local = |s: usize| members.iter().position(|&m| m == s);
        let m = members.len();
        let mut a = DMatrix::<f64>::identity(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (k, &s) in members.iter().enumerate() {
            let row = &mdp.actions(s)[pi.0[s]];
            let mut rhs = row.reward;
            for &(t, p) in &row.transitions {
                match local(t) {
                    Some(kt) => a[(k, kt)] -= lambda * p,
                    None => rhs += lambda * p * v[t],
                }
            }
            b[k] = rhs;
        }
        let x = if m == 1 {
            DVector::from_element(1, b[0] / a[(0, 0)])
        } else {
            a.lu().solve(&b).ok_or_else(|| SolverError::InvalidMdp("singular evaluation block".into()))?
        };
        for (k, &s) in members.iter().enumerate() {
            v[s] = x[k];
        }
    }
    Ok(ValueFn(v))
}

/// Howard policy iteration; a state switches action only on a relative gain above `1e-12`.
pub fn policy_iteration(mdp: &FiniteMdp) -> Result<(Policy, ValueFn, SolveReport), SolverError> {
    let start = Instant::now();
    let n = mdp.n_states();
    let mut pi = Policy(
        (0..n)
            .map(|s| {
                let acts = mdp.actions(s);
                (0..acts.len()).fold(0, |best, a| if acts[a].reward > acts[best].reward { a } else { best })
            })
            .collect(),
    );
    let mut rounds = 0;
    loop {
        rounds += 1;
        let v = policy_evaluation(mdp, &pi)?;
        let mut changed = false;
        for s in 0..n {
            let q = mdp.q_values(&v, s);
            let cur = q[pi.0[s]];
            let (best, qb) = q.iter().enumerate().fold((pi.0[s], cur), |acc, (a, &x)| if x > acc.1 { (a, x) } else { acc });
            if qb - cur > 1e-12 * cur.abs().max(f64::MIN_POSITIVE) {
                pi.0[s] = best;
                changed = true;
            }
        }
        if !changed {
            let residual = bellman_residual(mdp, &v);
            let report = SolveReport { iterations: rounds, residual, wallclock: start.elapsed().as_secs_f64(), update_norms: Vec::new() };
            return Ok((pi, v, report));
        }
    }
}

/// Evaluates every deterministic stationary policy and takes the pointwise maximum.
pub fn enumerate_policies(mdp: &FiniteMdp, limit: u128) -> Result<(Policy, ValueFn, SolveReport), SolverError> {
    let start = Instant::now();
    let n = mdp.n_states();
    let count: u128 = (0..n).map(|s| mdp.actions(s).len() as u128).product();
    if count > limit {
        return Err(SolverError::TooManyPolicies(count));
    }
    let mut pi = Policy(vec![0; n]);
    let mut best_v = ValueFn(vec![f64::NEG_INFINITY; n]);
    let mut best_pi = pi.clone();
    let mut best_sum = f64::NEG_INFINITY;
    let mut evaluated = 0;
    loop {
        let v = policy_evaluation(mdp, &pi)?;
        evaluated += 1;
        for s in 0..n {
            best_v.0[s] = best_v.0[s].max(v.0[s]);
        }
        let sum: f64 = v.0.iter().sum();
        if sum > best_sum {
            best_sum = sum;
            best_pi = pi.clone();
        }
        // odometer increment
        let mut s = 0;
        loop {
            if s == n {
                let residual = bellman_residual(mdp, &best_v);
                let report = SolveReport { iterations: evaluated, residual, wallclock: start.elapsed().as_secs_f64(), update_norms: Vec::new() };
                return Ok((best_pi, best_v, report));
            }
            pi.0[s] += 1;
            if pi.0[s] < mdp.actions(s).len() {
                break;
            }
            pi.0[s] = 0;
            s += 1;
        }
    }
}

/// All actions whose Q-value lies within `tie_tol·|max Q|` of the maximum.
pub fn greedy_actions(mdp: &FiniteMdp, v: &ValueFn, tie_tol: f64) -> Vec<Vec<usize>> {
    (0..mdp.n_states())
        .map(|s| {
            let q = mdp.q_values(v, s);
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let slack = tie_tol * max.abs().max(f64::MIN_POSITIVE);
            (0..q.len()).filter(|&a| max - q[a] <= slack).collect()
        })
        .collect()
}

/// First maximizing action per state.
pub fn greedy_policy(mdp: &FiniteMdp, v: &ValueFn) -> Policy {
    Policy(
        (0..mdp.n_states())
            .map(|s| {
                let q = mdp.q_values(v, s);
                (0..q.len()).fold(0, |best, a| if q[a] > q[best] { a } else { best })
            })
            .collect(),
    )
}

pub fn bellman_residual(mdp: &FiniteMdp, v: &ValueFn) -> f64 {
    mdp.bellman(v).sup_distance(v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub values: ValueFn,
    pub policy: Policy,
    pub report: SolveReport,
}

pub trait MdpSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn solve(&self, mdp: &FiniteMdp, tol: f64) -> Result<Solution, SolverError>;
}

pub struct JacobiValueIteration;

impl MdpSolver for JacobiValueIteration {
    fn name(&self) -> &'static str {
        "value-iteration"
    }
    fn description(&self) -> &'static str {
        "synchronous value iteration"
    }
    fn solve(&self, mdp: &FiniteMdp, tol: f64) -> Result<Solution, SolverError> {
        let (values, report) = value_iteration_with(mdp, tol, Sweep::Jacobi)?;
        Ok(Solution { policy: greedy_policy(mdp, &values), values, report })
    }
}

pub struct GaussSeidelValueIteration;

impl MdpSolver for GaussSeidelValueIteration {
    fn name(&self) -> &'static str {
        "gauss-seidel"
    }
    fn description(&self) -> &'static str {
        "in-place value iteration, highest state index first"
    }
    fn solve(&self, mdp: &FiniteMdp, tol: f64) -> Result<Solution, SolverError> {
        let (values, report) = value_iteration_with(mdp, tol, Sweep::GaussSeidel)?;
        Ok(Solution { policy: greedy_policy(mdp, &values), values, report })
    }
}

pub struct PolicyIteration;

impl MdpSolver for PolicyIteration {
    fn name(&self) -> &'static str {
        "policy-iteration"
    }
    fn description(&self) -> &'static str {
        "Howard policy iteration with exact evaluation"
    }
    fn solve(&self, mdp: &FiniteMdp, _tol: f64) -> Result<Solution, SolverError> {
        let (policy, values, report) = policy_iteration(mdp)?;
        Ok(Solution { values, policy, report })
    }
}

pub struct PolicyEnumeration {
    pub limit: u128,
}

impl MdpSolver for PolicyEnumeration {
    fn name(&self) -> &'static str {
        "enumeration"
    }
    fn description(&self) -> &'static str {
        "exhaustive evaluation of every deterministic policy"
    }
    fn solve(&self, mdp: &FiniteMdp, _tol: f64) -> Result<Solution, SolverError> {
        let (policy, values, report) = enumerate_policies(mdp, self.limit)?;
        Ok(Solution { values, policy, report })
    }
}

/// Solvers selectable by name at runtime.
pub struct SolverRegistry {
    solvers: Vec<Box<dyn MdpSolver>>,
}

impl SolverRegistry {
    pub fn new() -> Self {
        SolverRegistry { solvers: Vec::new() }
    }

    pub fn register<S: MdpSolver + 'static>(&mut self, s: S) {
        self.solvers.retain(|x| x.name() != s.name());
        self.solvers.push(Box::new(s));
    }

    pub fn get(&self, name: &str) -> Result<&dyn MdpSolver, SolverError> {
        self.solvers
            .iter()
            .find(|s| s.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| SolverError::UnknownSolver(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.solvers.iter().map(|s| s.name()).collect()
    }
}

impl Default for SolverRegistry {
    fn default() -> Self {
        let mut r = SolverRegistry::new();
        r.register(GaussSeidelValueIteration);
        r.register(JacobiValueIteration);
        r.register(PolicyIteration);
        r.register(PolicyEnumeration { limit: 1 << 20 });
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn absorbing(reward: f64, lambda: f64) -> FiniteMdp {
        FiniteMdp::new(lambda, vec![vec![ActionRow { reward, transitions: vec![(0, 1.0)] }]]).unwrap()
    }

    fn chain(lambda: f64) -> FiniteMdp {
        // 0 -> {0 stay reward 0, 1 move reward -1}; 1 absorbing reward 1
        FiniteMdp::new(
            lambda,
            vec![
                vec![
                    ActionRow { reward: 0.0, transitions: vec![(0, 1.0)] },
                    ActionRow { reward: -1.0, transitions: vec![(0, 0.5), (1, 0.5)] },
                ],
                vec![ActionRow { reward: 1.0, transitions: vec![(1, 1.0)] }],
            ],
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_mdps() {
        assert!(FiniteMdp::new(1.0, vec![]).is_err());
        assert!(FiniteMdp::new(0.5, vec![vec![]]).is_err());
        assert!(FiniteMdp::new(0.5, vec![vec![ActionRow { reward: 0.0, transitions: vec![(0, 0.9)] }]]).is_err());
        assert!(FiniteMdp::new(0.5, vec![vec![ActionRow { reward: 0.0, transitions: vec![(3, 1.0)] }]]).is_err());
    }

    #[test]
    fn geometric_series() {
        let m = absorbing(1.0, 0.5);
        for sweep in [Sweep::Jacobi, Sweep::GaussSeidel] {
            let (v, rep) = value_iteration_with(&m, 1e-12, sweep).unwrap();
            assert!((v.0[0] - 2.0).abs() <= 1e-12);
            assert!(rep.residual <= 1e-12);
        }
        assert_eq!(policy_evaluation(&m, &Policy(vec![0])).unwrap().0[0], 2.0);
    }

    #[test]
    fn one_state_policy_iteration_one_round() {
        let (_, v, rep) = policy_iteration(&absorbing(1.0, 0.5)).unwrap();
        assert_eq!(rep.iterations, 1);
        assert_eq!(v.0[0], 2.0);
    }

    #[test]
    fn chain_solution() {
        let m = chain(0.9);
        // v1 = 10; moving: v0 = -1 + 0.9(0.5 v0 + 5) => v0 = 3.5/0.55
        let expect = 3.5 / 0.55;
        let (v, _) = value_iteration(&m, 1e-12).unwrap();
        assert!((v.0[0] - expect).abs() < 1e-10);
        let (pi, pv, _) = policy_iteration(&m).unwrap();
        assert_eq!(pi.0, vec![1, 0]);
        assert!((pv.0[0] - expect).abs() < 1e-12);
        let (epi, ev, rep) = enumerate_policies(&m, 100).unwrap();
        assert_eq!(rep.iterations, 2);
        assert_eq!(epi, pi);
        assert!((ev.0[0] - expect).abs() < 1e-12);
        assert_eq!(greedy_actions(&m, &pv, 1e-9), vec![vec![1], vec![0]]);
    }

    #[test]
    fn residual_examples() {
        let m = chain(0.9);
        assert_eq!(bellman_residual(&m, &ValueFn::zeros(2)), 1.0);
        let (_, v, _) = policy_iteration(&m).unwrap();
        let c = 0.25;
        let shifted = ValueFn(v.0.iter().map(|x| x + c).collect());
        assert!((bellman_residual(&m, &shifted) - c * 0.1).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_evaluates_to_zero() {
        let m = FiniteMdp::new(
            0.7,
            vec![
                vec![ActionRow { reward: 0.0, transitions: vec![(1, 1.0)] }],
                vec![ActionRow { reward: 0.0, transitions: vec![(0, 0.3), (1, 0.7)] }],
            ],
        )
        .unwrap();
        assert_eq!(policy_evaluation(&m, &Policy(vec![0, 0])).unwrap().0, vec![0.0, 0.0]);
    }

    #[test]
    fn registry_lookup() {
        let r = SolverRegistry::default();
        assert_eq!(r.names(), vec!["gauss-seidel", "value-iteration", "policy-iteration", "enumeration"]);
        let m = chain(0.5);
        let a = r.get("gauss-seidel").unwrap().solve(&m, 1e-12).unwrap();
        let b = r.get("enumeration").unwrap().solve(&m, 1e-12).unwrap();
        assert!(a.values.sup_distance(&b.values) < 1e-11);
        assert!(r.get("simplex").is_err());
    }

    #[test]
    fn invalid_policy_rejected() {
        let m = chain(0.5);
        assert!(policy_evaluation(&m, &Policy(vec![2, 0])).is_err());
        assert!(policy_evaluation(&m, &Policy(vec![0])).is_err());
    }
}
