//! One test per acceptance criterion; each writes a PASS/FAIL line to stderr.

mod common;

use std::io::Write;
use std::time::Instant;

use common::{random_mdp, torus};
use metastable_mdp::auxmdp::{post_decision_config, AuxAction, AuxState, RewardSpec};
use metastable_mdp::kawasaki::{FiniteBeta, InterchangeSampler, RngStream};
use metastable_mdp::landscape::{stability_level, verify_lemma_small, SearchBounds};
use metastable_mdp::lattice::{Boundary, ModelParams, Site, SiteConfig};
use metastable_mdp::solver::{enumerate_policies, policy_iteration, value_iteration_with, Sweep};
use metastable_mdp::verify::{self, VerificationReport, DEFAULT_TIE_TOL};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn verdict(n: usize, title: &str, passed: bool, t: Instant, detail: &str) {
    let line = format!(
        "criterion {n:>2} {title}: {} ({:.2}s) {detail}\n",
        if passed { "PASS" } else { "FAIL" },
        t.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn failures(reps: &[VerificationReport], filter: impl Fn(&str) -> bool) -> Vec<String> {
    reps.iter()
        .flat_map(|r| r.checks.iter().filter(|c| filter(&c.name) && !c.passed).map(move |c| format!("[{}] {} {}", r.title, c.name, c.detail)))
        .collect()
}

fn summarize(fails: &[String]) -> String {
    match fails.len() {
        0 => "all checks hold".into(),
        n => format!("{n} failing checks, first: {}", fails[0]),
    }
}

fn finish(n: usize, title: &str, t: Instant, fails: Vec<String>) {
    verdict(n, title, fails.is_empty(), t, &summarize(&fails));
    assert!(fails.is_empty(), "{}", fails.join("\n"));
}

const LAMBDAS: [f64; 4] = [0.1, 0.5, 0.9, 0.99];
const SIDES: [usize; 4] = [6, 8, 10, 14];

#[test]
fn criterion_01_unit_reward_action_sets() {
    let t = Instant::now();
    let mut reps = Vec::new();
    for l in SIDES {
        for lambda in LAMBDAS {
            reps.push(verify::check_theorem_r1(l, lambda, DEFAULT_TIE_TOL).unwrap());
        }
    }
    finish(1, "unit-reward optimal action sets", t, failures(&reps, |_| true));
}

#[test]
fn criterion_02_energy_reward_action_sets() {
    let t = Instant::now();
    let mut reps = Vec::new();
    for l in SIDES {
        for lambda in LAMBDAS {
            for u in [0.5, 1.0, 2.0] {
                reps.push(verify::check_theorem_r2(l, lambda, u, DEFAULT_TIE_TOL).unwrap());
            }
        }
    }
    finish(2, "energy-reward optimal action sets", t, failures(&reps, |_| true));
}

#[test]
fn criterion_03_explicit_values() {
    let t = Instant::now();
    let reps: Vec<_> = [0.3, 0.9].iter().map(|&x| verify::check_closed_forms(10, x, 1.0).unwrap()).collect();
    finish(3, "explicit value formulas", t, failures(&reps, |_| true));
}

#[test]
fn criterion_04_recursions() {
    let t = Instant::now();
    let reps: Vec<_> = [0.3, 0.9].iter().map(|&x| verify::check_recursions(10, x, 1.0).unwrap()).collect();
    finish(4, "value recursions", t, failures(&reps, |_| true));
}

#[test]
fn criterion_05_kernel_oracle() {
    let t = Instant::now();
    let rep = verify::check_kernel_oracle(10).unwrap();
    let boundary = failures(std::slice::from_ref(&rep), |n| n.starts_with("boundary"));
    let interior = failures(std::slice::from_ref(&rep), |n| n.starts_with("interior"));
    let mut err = std::io::stderr();
    for b in &boundary {
        let _ = writeln!(err, "  itemized boundary discrepancy: {b}");
    }
    for b in &interior {
        let _ = writeln!(err, "  interior mismatch: {b}");
    }
    finish(5, "kernel against lattice enumeration", t, interior);
}

#[test]
fn criterion_06_strict_inequalities() {
    let t = Instant::now();
    let reps: Vec<_> = [0.3, 0.9].iter().map(|&x| verify::check_inequalities(10, x, 1.0).unwrap()).collect();
    finish(6, "strict inequality chains", t, failures(&reps, |n| n.starts_with("strict")));
}

#[test]
fn criterion_07_monte_carlo() {
    let t = Instant::now();
    let reps = vec![
        verify::check_mc_consistency(8, 0.9, RewardSpec::r1(), 100_000, 2024).unwrap(),
        verify::check_mc_consistency(8, 0.9, RewardSpec::r2(1.0), 100_000, 2024).unwrap(),
    ];
    let mut err = std::io::stderr();
    for r in &reps {
        for c in &r.checks {
            let _ = writeln!(err, "  {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        }
    }
    finish(7, "Monte Carlo returns", t, failures(&reps, |_| true));
}

fn beta_run(beta_u: f64, samples: usize, seed: u64) -> (Vec<usize>, usize) {
    let p = ModelParams::new(1.0, 1.75, beta_u, 10, Boundary::Periodic).unwrap();
    let cfg = post_decision_config(&p, AuxState::new(5, 4), AuxAction::B1).unwrap();
    let bonds = cfg.susceptible_bonds();
    let mut counts = vec![0usize; bonds.len()];
    let mut other = 0;
    let mut rng = RngStream::new(seed, beta_u.to_bits()).rng();
    let sampler = FiniteBeta::default();
    for _ in 0..samples {
        let (b, _) = sampler.sample(&cfg, &mut rng).unwrap();
        match bonds.iter().position(|x| *x == b) {
            Some(k) => counts[k] += 1,
            None => other += 1,
        }
    }
    (counts, other)
}

#[test]
fn criterion_08_finite_beta() {
    let t = Instant::now();
    let n = 100_000;
    let runs: Vec<_> = [4.0, 6.0, 8.0].iter().map(|&b| beta_run(b, n, 77)).collect();
    let (counts, _) = &runs[2];
    let total: usize = counts.iter().sum();
    let e = total as f64 / counts.len() as f64;
    let chi: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    let crit = ChiSquared::new((counts.len() - 1) as f64).unwrap().inverse_cdf(0.999);
    let freq: Vec<f64> = runs.iter().map(|(_, o)| *o as f64 / n as f64).collect();
    let mut fails = Vec::new();
    if counts.len() != 7 {
        fails.push(format!("{} susceptible bonds", counts.len()));
    }
    if chi >= crit {
        fails.push(format!("chi-square {chi:.3} >= {crit:.3}"));
    }
    if freq[2] >= 1e-2 {
        fails.push(format!("non-susceptible frequency {}", freq[2]));
    }
    if !(freq[0] > freq[1] && freq[1] > freq[2]) {
        fails.push(format!("frequencies not decreasing: {freq:?}"));
    }
    let detail = format!("chi-square {chi:.3} (critical {crit:.3}), non-susceptible frequencies {freq:?}");
    verdict(8, "finite-beta first interchange", fails.is_empty(), t, &detail);
    assert!(fails.is_empty(), "{}", fails.join("\n"));
}

fn square(p: ModelParams, w: i32, h: i32) -> SiteConfig {
    let s: Vec<Site> = (0..w).flat_map(|x| (0..h).map(move |y| Site::new(2 + x, 2 + y))).collect();
    SiteConfig::from_sites(p, &s).unwrap()
}

#[test]
fn criterion_09_landscape() {
    let t = Instant::now();
    let p = torus(8);
    let bounds = SearchBounds::new(14, 3.0, 10_000_000).unwrap();
    let mut fails = Vec::new();
    let v2 = stability_level(&square(p, 2, 2), &bounds).unwrap();
    match v2.barrier() {
        Some(b) if b.excess_value() == 2.0 => {}
        other => fails.push(format!("2x2 barrier {:?}", other.map(|b| b.excess_value()))),
    }
    let v3 = stability_level(&square(p, 3, 3), &bounds).unwrap();
    if !v3.barrier().map_or(true, |b| b.excess_value() > 2.0) {
        fails.push(format!("3x3 barrier {:?}", v3.barrier().map(|b| b.excess_value())));
    }
    let lemma = verify_lemma_small(6, 8, &SearchBounds::new(12, 3.0, 10_000_000).unwrap(), &ModelParams::default()).unwrap();
    fails.extend(failures(std::slice::from_ref(&lemma), |_| true));
    finish(9, "stability levels and robust shapes", t, fails);
}

#[test]
fn criterion_10_solver_cross_validation() {
    let t = Instant::now();
    let mut fails = Vec::new();
    for seed in 0..100u64 {
        let n = 1 + (seed as usize % 6);
        let lambda = 0.05 + 0.9 * ((seed * 37 % 100) as f64 / 100.0);
        let m = random_mdp(seed, n, 3, lambda);
        let (vi, _) = value_iteration_with(&m, 1e-11, Sweep::GaussSeidel).unwrap();
        let (_, pv, _) = policy_iteration(&m).unwrap();
        let (_, ev, _) = enumerate_policies(&m, 1 << 20).unwrap();
        let d = vi.sup_distance(&pv).max(ev.sup_distance(&pv));
        if d > 1e-8 {
            fails.push(format!("seed {seed}: disagreement {d:e}"));
        }
    }
    finish(10, "solver cross-validation", t, fails);
}
