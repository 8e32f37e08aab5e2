mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use metastable_mdp::auxmdp::{self, build_mdp, AuxMdp, AuxPolicy, AuxState, RewardKind, RewardSpec};
use metastable_mdp::kawasaki::{self, FiniteBeta, RngStream, RolloutConfig, SamplerRegistry, DEFAULT_STEP_BUDGET};
use metastable_mdp::landscape::{self, SearchBounds, SearchOutcome};
use metastable_mdp::lattice::{Boundary, ModelParams, SiteConfig};
use metastable_mdp::solver::{greedy_actions, SolverRegistry};
use metastable_mdp::verify::{self, claimed_policy, Suite, SuiteConfig};

use output::{Format, Sink};

const SEED_ENV: &str = "METASTABLE_MDP_SEED";

#[derive(Parser)]
#[command(name = "metastable-mdp", version, about = "Optimal control of low-temperature Kawasaki nucleation as a discounted MDP")]
struct Cli {
    #[command(flatten)]
    run: RunConfig,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunConfig {
    /// Box side length
    #[arg(long = "L", global = true, default_value_t = 10)]
    l: usize,
    /// Discount factor in (0,1)
    #[arg(long, global = true, default_value_t = 0.9, value_parser = parse_lambda)]
    lambda: f64,
    /// Reward: r1 pays 1 per epoch in the full box, r2 charges the interchange energy cost
    #[arg(long, global = true, default_value = "r1", value_parser = str::parse::<RewardKind>)]
    reward: RewardKind,
    /// Pair binding energy
    #[arg(long = "U", global = true, default_value_t = 1.0)]
    u: f64,
    /// Activation energy of a particle
    #[arg(long, global = true, default_value_t = 1.75)]
    delta: f64,
    /// Inverse temperature
    #[arg(long, global = true, default_value_t = 8.0)]
    beta: f64,
    /// Random seed; the METASTABLE_MDP_SEED environment variable takes precedence
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Solver tolerance on the sup-norm error of values
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write to this file instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Worker threads (default: available parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the reduced MDP and print values and optimal actions
    Solve {
        #[arg(long, default_value = "gauss-seidel")]
        solver: String,
    },
    /// Run verification suites; exits with 1 when any check fails
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
        /// Monte Carlo episodes per start state
        #[arg(long, default_value_t = 2000)]
        episodes: usize,
        /// Relative tolerance for ties among greedy actions
        #[arg(long, default_value_t = verify::DEFAULT_TIE_TOL)]
        tie_tol: f64,
    },
    /// Simulate controlled lattice rollouts from a start state
    Simulate(SimArgs),
    /// Compare the kernel with first-interchange enumeration on the lattice
    DeriveKernel,
    /// Stability level of a configuration read from a grid or JSON file
    Stability {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 14)]
        max_particles: usize,
        /// Energy ceiling above the start configuration
        #[arg(long, default_value_t = 3.0)]
        max_energy: f64,
        #[arg(long, default_value_t = 10_000_000)]
        max_states: usize,
    },
    /// Write kernel, values, policy or trajectories
    Export {
        #[arg(value_enum)]
        kind: ExportKind,
        #[command(flatten)]
        sim: SimArgs,
    },
}

#[derive(Args, Clone)]
struct SimArgs {
    /// Start state as i,j
    #[arg(long, default_value = "2,2")]
    start: AuxState,
    #[arg(long, default_value_t = 1000)]
    episodes: usize,
    /// Epoch cap per episode (default 50·L)
    #[arg(long)]
    max_epochs: Option<usize>,
    /// First-interchange sampler
    #[arg(long, default_value = "zero-t")]
    mode: String,
    /// Metropolis proposals allowed per interchange in finite-beta mode
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    step_budget: u64,
    #[arg(long, value_enum, default_value_t = PolicyChoice::Optimal)]
    policy: PolicyChoice,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyChoice {
    /// Greedy with respect to the solved values
    Optimal,
    /// Tie-broken choice from the claimed optimal sets
    Claimed,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportKind {
    Kernel,
    Values,
    Policy,
    Trajectories,
}

fn parse_lambda(s: &str) -> Result<f64, String> {
    let x: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if x > 0.0 && x < 1.0 {
        Ok(x)
    } else {
        Err("lambda must lie in (0,1)".into())
    }
}

impl RunConfig {
    fn spec(&self) -> RewardSpec {
        match self.reward {
            RewardKind::R1 => RewardSpec::r1(),
            RewardKind::R2 => RewardSpec::r2(self.u),
        }
    }

    fn params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.u, self.delta, self.beta, self.l, Boundary::Periodic)?)
    }

    fn seed(&self) -> Result<u64> {
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| anyhow!("{SEED_ENV} must be an unsigned integer, got '{v}'")),
            Err(_) => Ok(self.seed),
        }
    }

    fn header(&self) -> Vec<(&'static str, String)> {
        vec![
            ("L", self.l.to_string()),
            ("lambda", output::num(self.lambda)),
            ("reward", self.reward.to_string()),
            ("U", output::num(self.u)),
            ("delta", output::num(self.delta)),
            ("beta", output::num(self.beta)),
        ]
    }
}

/// Bad input; exits with status 2.
#[derive(Debug)]
struct Usage(String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            if let Some(Usage(m)) = e.downcast_ref::<Usage>() {
                eprintln!("error: {m}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        }
    }
}

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}
impl std::error::Error for Usage {}

fn usage<E: std::fmt::Display>(e: E) -> anyhow::Error {
    anyhow::Error::new(Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<bool> {
    let rc = cli.run;
    if let Some(n) = rc.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(usage)?;
    }
    if !(rc.tol > 0.0) {
        return Err(usage("tol must be positive"));
    }
    let params = rc.params().map_err(usage)?;
    let mut sink = Sink::open(rc.output.as_deref(), rc.format)?;
    let ok = match cli.command {
        Command::Solve { solver } => {
            let m = build_mdp(rc.l, rc.lambda, rc.spec()).map_err(usage)?;
            solve(&rc, &m, &solver, &mut sink)?;
            true
        }
        Command::Verify { suite, episodes, tie_tol } => {
            let seed = rc.seed()?;
            if matches!(suite, Suite::Mc | Suite::All) {
                eprintln!("seed: {seed}");
            }
            let cfg = SuiteConfig { l: rc.l, lambda: rc.lambda, u: rc.u, tie_tol, episodes, seed };
            let rep = verify::run_suite(suite, &cfg).map_err(usage)?;
            sink.report(&rep)?;
            rep.all_passed
        }
        Command::Simulate(sim) => {
            simulate(&rc, &params, &sim, &mut sink)?;
            true
        }
        Command::DeriveKernel => {
            derive_kernel(&rc, &params, &mut sink)?;
            true
        }
        Command::Stability { input, max_particles, max_energy, max_states } => {
            let bounds = SearchBounds::new(max_particles, max_energy, max_states).map_err(usage)?;
            let text = std::fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let cfg = SiteConfig::parse(&text, &params).map_err(usage)?;
            stability(&cfg, &bounds, &mut sink)?;
            true
        }
        Command::Export { kind, sim } => {
            match kind {
                ExportKind::Kernel => export_kernel(rc.l, &mut sink)?,
                ExportKind::Values => {
                    let m = build_mdp(rc.l, rc.lambda, rc.spec()).map_err(usage)?;
                    solve(&rc, &m, "gauss-seidel", &mut sink)?;
                }
                ExportKind::Policy => {
                    let m = build_mdp(rc.l, rc.lambda, rc.spec()).map_err(usage)?;
                    export_policy(&rc, &m, &mut sink)?;
                }
                ExportKind::Trajectories => export_trajectories(&rc, &params, &sim, &mut sink)?,
            }
            true
        }
    };
    sink.finish()?;
    Ok(ok)
}

fn solve(rc: &RunConfig, m: &AuxMdp, solver: &str, sink: &mut Sink) -> Result<()> {
    let reg = SolverRegistry::default();
    let s = reg.get(solver).map_err(usage)?;
    let sol = s.solve(&m.mdp, rc.tol).map_err(usage)?;
    let sets = m.decode_sets(&greedy_actions(&m.mdp, &sol.values, verify::DEFAULT_TIE_TOL));
    let chosen = m.decode_policy(&sol.policy);
    let cols = ["i", "j", "value", "action", "greedy"];
    let rows: Vec<Vec<String>> = m
        .states
        .iter()
        .enumerate()
        .map(|(k, &st)| {
            vec![
                st.i.to_string(),
                st.j.to_string(),
                output::num(sol.values.0[k]),
                chosen.action(st).map(|a| a.to_string()).unwrap_or_default(),
                output::action_set(&sets[k]),
            ]
        })
        .collect();
    let mut meta = rc.header();
    meta.push(("solver", s.name().to_string()));
    meta.push(("iterations", sol.report.iterations.to_string()));
    meta.push(("residual", output::num(sol.report.residual)));
    sink.table(&meta, &cols, &rows)
}

fn export_policy(rc: &RunConfig, m: &AuxMdp, sink: &mut Sink) -> Result<()> {
    let reg = SolverRegistry::default();
    let sol = reg.get("gauss-seidel").map_err(usage)?.solve(&m.mdp, rc.tol).map_err(usage)?;
    let sets = m.decode_sets(&greedy_actions(&m.mdp, &sol.values, verify::DEFAULT_TIE_TOL));
    let rows: Vec<Vec<String>> =
        m.states.iter().zip(&sets).map(|(s, set)| vec![s.i.to_string(), s.j.to_string(), output::action_set(set)]).collect();
    sink.table(&rc.header(), &["i", "j", "actions"], &rows)
}

fn export_kernel(l: usize, sink: &mut Sink) -> Result<()> {
    let mut rows = Vec::new();
    for (s, a, row) in auxmdp::kernel_table(l).map_err(usage)? {
        let fam = auxmdp::kernel_family(l, s, a)?;
        for (t, p) in &row.entries {
            rows.push(vec![
                s.i.to_string(),
                s.j.to_string(),
                a.to_string(),
                fam.to_string(),
                t.i.to_string(),
                t.j.to_string(),
                p.numer().to_string(),
                p.denom().to_string(),
            ]);
        }
    }
    sink.table(&[("L", l.to_string())], &["i", "j", "action", "family", "target_i", "target_j", "num", "den"], &rows)
}

fn derive_kernel(rc: &RunConfig, params: &ModelParams, sink: &mut Sink) -> Result<()> {
    let mut rows = Vec::new();
    let mut mismatches = 0usize;
    for (s, a, row) in auxmdp::kernel_table(rc.l).map_err(usage)? {
        if a == auxmdp::AuxAction::Stay {
            continue;
        }
        let fam = auxmdp::kernel_family(rc.l, s, a)?;
        let (derived, ok) = match auxmdp::derive_kernel_geometric(params, s, a) {
            Ok(g) => {
                let ok = g == row;
                (g.to_string(), ok)
            }
            Err(e) => (e.to_string(), false),
        };
        mismatches += usize::from(!ok);
        rows.push(vec![s.to_string(), a.to_string(), fam.to_string(), row.to_string(), derived, ok.to_string()]);
    }
    let meta = vec![("L", rc.l.to_string()), ("mismatches", mismatches.to_string())];
    sink.table(&meta, &["state", "action", "family", "kernel", "lattice", "match"], &rows)
}

fn stability(cfg: &SiteConfig, bounds: &SearchBounds, sink: &mut Sink) -> Result<()> {
    let out = landscape::stability_level(cfg, bounds).map_err(|e| anyhow!(e))?;
    let h = cfg.hamiltonian();
    let mut meta = vec![("energy", h.to_string()), ("energy_value", output::num(cfg.energy()))];
    match out {
        SearchOutcome::Reached(b) => {
            meta.push(("V", output::num(b.excess_value())));
            meta.push(("V_exact", b.excess.to_string()));
            meta.push(("height", output::num(b.height)));
            meta.push(("path_length", b.path_length.to_string()));
            meta.push(("explored", b.explored.to_string()));
            sink.record(&meta, &[("bottleneck", b.bottleneck.to_grid()), ("endpoint", b.endpoint.to_grid())])
        }
        SearchOutcome::Unreached { explored } => {
            meta.push(("V", "inf".into()));
            meta.push(("explored", explored.to_string()));
            sink.record(&meta, &[])
        }
    }
}

fn rollout_setup(rc: &RunConfig, params: &ModelParams, sim: &SimArgs) -> Result<(AuxPolicy, RolloutConfig, AuxMdp)> {
    sim.start.check(rc.l).map_err(usage)?;
    let m = build_mdp(rc.l, rc.lambda, rc.spec()).map_err(usage)?;
    let policy = match sim.policy {
        PolicyChoice::Claimed => claimed_policy(rc.l, rc.reward),
        PolicyChoice::Optimal => {
            let sol = SolverRegistry::default().get("gauss-seidel")?.solve(&m.mdp, rc.tol)?;
            m.decode_policy(&sol.policy)
        }
    };
    let rollout = RolloutConfig { lambda: rc.lambda, reward: rc.spec(), max_epochs: sim.max_epochs.unwrap_or(50 * params.l) };
    Ok((policy, rollout, m))
}

fn sampler_registry(sim: &SimArgs) -> SamplerRegistry {
    let mut reg = SamplerRegistry::default();
    reg.register(FiniteBeta { budget: sim.step_budget });
    reg
}

fn simulate(rc: &RunConfig, params: &ModelParams, sim: &SimArgs, sink: &mut Sink) -> Result<()> {
    let seed = rc.seed()?;
    eprintln!("seed: {seed}");
    let (policy, rollout, m) = rollout_setup(rc, params, sim)?;
    let reg = sampler_registry(sim);
    let sampler = reg.get(&sim.mode).map_err(usage)?;
    let rows = kawasaki_batch(params, &policy, sim, &rollout, sampler, seed);
    let ok: Vec<f64> = rows.iter().filter_map(|r| r.as_ref().ok().map(|t| t.discounted_return)).collect();
    let n = ok.len() as f64;
    let mean = kawasaki::pairwise_sum(&ok) / n;
    let dev: Vec<f64> = ok.iter().map(|x| (x - mean) * (x - mean)).collect();
    let se = if ok.len() > 1 { (kawasaki::pairwise_sum(&dev) / (n - 1.0) / n).sqrt() } else { 0.0 };
    let v = SolverRegistry::default().get("gauss-seidel")?.solve(&m.mdp, rc.tol)?.values;
    let mut meta = rc.header();
    meta.extend([
        ("seed", seed.to_string()),
        ("mode", sim.mode.clone()),
        ("start", sim.start.to_string()),
        ("episodes", sim.episodes.to_string()),
        ("failures", (rows.len() - ok.len()).to_string()),
        ("mean", output::num(mean)),
        ("std_error", output::num(se)),
        ("optimal_value", output::num(m.value(&v, sim.start))),
    ]);
    let first = rows.iter().find_map(|r| r.as_ref().err().cloned());
    let extra: Vec<(&str, String)> = first.into_iter().map(|e| ("first_failure", e)).collect();
    sink.record(&meta, &extra)
}

fn kawasaki_batch(
    params: &ModelParams,
    policy: &AuxPolicy,
    sim: &SimArgs,
    rollout: &RolloutConfig,
    sampler: &dyn kawasaki::InterchangeSampler,
    seed: u64,
) -> Vec<Result<kawasaki::Trajectory, String>> {
    use rayon::prelude::*;
    (0..sim.episodes)
        .into_par_iter()
        .map(|k| {
            let mut rng = RngStream::new(seed, k as u64).rng();
            kawasaki::simulate_controlled(params, policy, sim.start, rollout, sampler, &mut rng).map_err(|e| e.to_string())
        })
        .collect()
}

fn export_trajectories(rc: &RunConfig, params: &ModelParams, sim: &SimArgs, sink: &mut Sink) -> Result<()> {
    let seed = rc.seed()?;
    eprintln!("seed: {seed}");
    let (policy, rollout, _) = rollout_setup(rc, params, sim)?;
    let reg = sampler_registry(sim);
    let sampler = reg.get(&sim.mode).map_err(usage)?;
    let rows = kawasaki_batch(params, &policy, sim, &rollout, sampler, seed);
    sink.trajectories(&rows)
}
