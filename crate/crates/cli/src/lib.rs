//! Command implementations behind the `edgecut` binary. Each command
//! returns its exit code and captured output so tests can drive it without
//! spawning a process.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use edgecut_core::pricing::compare_plans;
use edgecut_core::{plan_with_proxies, Outcome, Problem, ProxyRule, SolverMode};
use edgecut_runtime::scenario::Scenario;
use edgecut_runtime::scheduler::{handle_deploy_request, Planner};
use edgecut_runtime::sim::{self, SimResults};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "EDGECUT_OUT_DIR";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    fn input_error(msg: impl std::fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Output> {
    Scenario::load(path).map_err(Output::input_error)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SolveFlags {
    pub multi_tier: bool,
    pub exact_only: bool,
}

fn planner(s: &Scenario, flags: SolveFlags) -> Planner {
    let mut p = s.planner();
    p.multi_tier |= flags.multi_tier;
    if flags.exact_only {
        p.options.mode = SolverMode::ExactOnly;
    }
    p
}

/// Placement decision for a problem, with proxies when the scenario asks
/// for them.
pub struct Decision {
    pub problem: Problem,
    pub result: Outcome,
    pub rules: Vec<ProxyRule>,
}

pub fn decide(s: &Scenario, problem: &Problem, flags: SolveFlags) -> Result<Decision, String> {
    let planner = planner(s, flags);
    if s.file.proxies {
        let p = plan_with_proxies(problem, &planner.options).map_err(|e| e.to_string())?;
        Ok(Decision {
            problem: p.problem,
            result: p.result,
            rules: p.rules,
        })
    } else {
        let result = planner.solve(problem).map_err(|e| e.to_string())?;
        Ok(Decision {
            problem: problem.clone(),
            result,
            rules: Vec::new(),
        })
    }
}

fn report(s: &Scenario, d: &Decision) -> String {
    let p = &d.problem;
    let r = &d.result;
    let mut out = String::new();
    let _ = writeln!(out, "scenario {} (application {})", s.name(), p.app.name);
    for k in 0..p.tiers.len() - 1 {
        let (lo, hi) = (&p.tiers.at(k).id, &p.tiers.at(k + 1).id);
        let h = p.net.hop(lo, hi).expect("validated network");
        let _ = writeln!(
            out,
            "hop {lo}-{hi}: up {:.3} Mbit/s, down {:.3} Mbit/s",
            h.bw_upload, h.bw_download
        );
    }
    let verdict = if r.feasible { "feasible" } else { "infeasible" };
    let _ = writeln!(out, "solver {}, {verdict}", r.solver);
    let _ = writeln!(out, "placement:");
    let width = p.app.microservices.iter().map(|m| m.id.len()).max().unwrap_or(0);
    for m in &p.app.microservices {
        let _ = writeln!(
            out,
            "  {:width$}  {}",
            m.id,
            r.placement.tier_of(&m.id).unwrap_or("-")
        );
    }
    for rule in &d.rules {
        let _ = writeln!(
            out,
            "proxy {} on {} for {} (store {}), sync every {} s",
            rule.proxy, rule.tier, rule.target, rule.store, rule.sync_interval_s
        );
    }
    for (id, l) in &r.latency {
        let budget = p.constraint(id).unwrap_or(f64::NAN);
        let _ = writeln!(
            out,
            "pipeline {id}: {:.3} ms of {:.3} ms (processing {:.3} ms, network {:.3} ms)",
            l.total * 1e3,
            budget * 1e3,
            (l.edge_processing + l.cloud_processing) * 1e3,
            l.communication * 1e3
        );
    }
    let _ = writeln!(out, "cost per unit: {:.6e}", r.cost);
    out
}

fn decision_output(s: &Scenario, problem: &Problem, flags: SolveFlags) -> Output {
    match decide(s, problem, flags) {
        Err(e) => Output::input_error(e),
        Ok(d) => {
            let stdout = report(s, &d);
            if d.result.feasible {
                Output {
                    code: EXIT_OK,
                    stdout,
                    stderr: String::new(),
                }
            } else {
                let why = d
                    .result
                    .infeasibility
                    .as_ref()
                    .map_or_else(|| "no feasible placement".to_string(), |i| i.to_string());
                Output {
                    code: EXIT_INFEASIBLE,
                    stdout,
                    stderr: format!("notification for the developer of {}: {why}\n", problem.app.name),
                }
            }
        }
    }
}

pub fn cmd_partition(path: &Path, flags: SolveFlags) -> Output {
    match load(path) {
        Err(o) => o,
        Ok(s) => decision_output(&s, &s.problem, flags),
    }
}

/// Partition decision with every traced bandwidth taken at `at_s`.
pub fn cmd_replay(path: &Path, at_s: f64, flags: SolveFlags) -> Output {
    if !at_s.is_finite() || at_s < 0.0 {
        return Output::input_error("--at must be a non-negative time");
    }
    match load(path) {
        Err(o) => o,
        Ok(s) => decision_output(&s, &s.problem_at(at_s), flags),
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SimulateArgs {
    pub duration_s: Option<f64>,
    pub seed: Option<u64>,
    pub dynamic: Option<bool>,
    pub out: PathBuf,
    /// Seeds `start..end`, each written to `out/seed-<n>`.
    pub seed_range: Option<(u64, u64)>,
    pub metrics: bool,
}

/// Parses `A..B` (exclusive) or `A..=B` (inclusive).
pub fn parse_seed_range(s: &str) -> Result<(u64, u64), String> {
    let (a, b, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("seed range {s:?} is not A..B or A..=B"));
    };
    let a: u64 = a.trim().parse().map_err(|_| format!("bad seed {a:?}"))?;
    let b: u64 = b.trim().parse().map_err(|_| format!("bad seed {b:?}"))?;
    let end = if inclusive { b + 1 } else { b };
    if end <= a {
        return Err(format!("seed range {s:?} is empty"));
    }
    Ok((a, end))
}

fn write_results(dir: &Path, r: &SimResults, metrics: bool) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("latency.csv"), r.latency_csv())?;
    fs::write(dir.join("links.csv"), r.links_csv())?;
    fs::write(dir.join("events.csv"), r.events_csv())?;
    if metrics {
        fs::write(dir.join("metrics.csv"), r.metrics_csv())?;
    }
    Ok(())
}

fn summary_text(s: &Scenario, r: &SimResults, seed: u64, dynamic: bool) -> String {
    let sum = r.summary(&s.sim_problem.constraints);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {} seed {seed}: {:.3} s simulated, dynamic {}",
        s.name(),
        r.duration_s,
        if dynamic { "on" } else { "off" }
    );
    let _ = writeln!(
        out,
        "units: {} generated, {} completed, {} in flight, {} dropped before placement",
        sum.generated, sum.completed, sum.in_flight, sum.dropped
    );
    for p in &sum.pipelines {
        let _ = writeln!(
            out,
            "pipeline {}: p50 {:.3} ms, p95 {:.3} ms, max {:.3} ms; {} violation seconds in {} episodes",
            p.pipeline, p.p50_ms, p.p95_ms, p.max_ms, p.violation_seconds, p.violation_episodes
        );
    }
    let _ = writeln!(out, "remaps: {}", sum.remaps);
    for sync in &r.sync {
        let _ = writeln!(
            out,
            "sync {} -> {}: {} records emitted, {} applied, {:.6} Mbit over the network, {} retries",
            sync.proxy,
            sync.target,
            sync.emitted.len(),
            sync.master.len(),
            sync.wan_mbit,
            sync.retries
        );
    }
    out
}

pub fn cmd_simulate(path: &Path, args: &SimulateArgs) -> Output {
    let s = match load(path) {
        Err(o) => return o,
        Ok(s) => s,
    };
    let mut opts = s.sim_options();
    if let Some(d) = args.duration_s {
        if !(d >= 0.0) || !d.is_finite() {
            return Output::input_error("--duration must be a non-negative number of seconds");
        }
        opts.duration_s = d;
    }
    if let Some(dy) = args.dynamic {
        opts.dynamic = dy;
    }
    let setup = s.sim_setup();
    let seeds: Vec<u64> = match args.seed_range {
        Some((a, b)) => (a..b).collect(),
        None => vec![args.seed.unwrap_or(opts.seed)],
    };
    let runs: Vec<Result<SimResults, String>> = seeds
        .par_iter()
        .map(|&seed| {
            let mut o = opts;
            o.seed = seed;
            sim::run(&setup, &o).map_err(|e| e.to_string())
        })
        .collect();

    let mut out = Output::default();
    for (seed, run) in seeds.iter().zip(runs) {
        let r = match run {
            Ok(r) => r,
            Err(e) => return Output::input_error(e),
        };
        let dir = match args.seed_range {
            Some(_) => args.out.join(format!("seed-{seed}")),
            None => args.out.clone(),
        };
        if let Err(e) = write_results(&dir, &r, args.metrics) {
            return Output::input_error(format!("{}: {e}", dir.display()));
        }
        out.stdout.push_str(&summary_text(&s, &r, *seed, opts.dynamic));
        let _ = writeln!(out.stdout, "wrote {}", dir.display());
    }
    out
}

pub fn cmd_cost(path: &Path, csv_only: bool) -> Output {
    let s = match load(path) {
        Err(o) => return o,
        Ok(s) => s,
    };
    let Some(decl) = &s.file.deployment else {
        return Output::input_error(format!("{}: no deployment section", path.display()));
    };
    let costs = match s.costs() {
        Ok(c) => c,
        Err(e) => return Output::input_error(e),
    };
    let find = |name: &str| costs.iter().find(|(p, _)| p.name == name).map(|(_, c)| *c);

    let mut w = csv::Writer::from_writer(Vec::new());
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<20} {:>7} {:>9} {:>12} {:>10} {:>12}",
        "plan", "cameras", "hourly", "compute/mo", "storage/mo", "total/mo"
    );
    let _ = w.write_record([
        "plan",
        "cameras",
        "wavelength_vms",
        "availability_vms",
        "hourly_usd",
        "compute_month_usd",
        "storage_month_usd",
        "total_month_usd",
    ]);
    for (plan, c) in &costs {
        use edgecut_core::pricing::ZoneKind;
        let _ = writeln!(
            table,
            "{:<20} {:>7} {:>9.3} {:>12.2} {:>10.2} {:>12.2}",
            plan.name, plan.cameras, c.hourly, c.compute, c.storage, c.total
        );
        let _ = w.write_record([
            plan.name.clone(),
            plan.cameras.to_string(),
            plan.count(ZoneKind::Wavelength).to_string(),
            plan.count(ZoneKind::Availability).to_string(),
            format!("{:.4}", c.hourly),
            format!("{:.2}", c.compute),
            format!("{:.2}", c.storage),
            format!("{:.2}", c.total),
        ]);
    }
    for cmp in &decl.compare {
        let (a, b) = (find(&cmp.plan).expect("checked"), find(&cmp.baseline).expect("checked"));
        let saving = compare_plans(&a, &b);
        let _ = writeln!(
            table,
            "{} vs {}: {:.2}% {}",
            cmp.plan,
            cmp.baseline,
            saving.abs() * 100.0,
            if saving >= 0.0 { "cheaper" } else { "more expensive" }
        );
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8");
    Output {
        code: EXIT_OK,
        stdout: if csv_only { csv } else { format!("{table}\n{csv}") },
        stderr: String::new(),
    }
}

/// Runs the scenario's deploy requests in order against its zone registry.
pub fn cmd_deploy(path: &Path, flags: SolveFlags) -> Output {
    let s = match load(path) {
        Err(o) => return o,
        Ok(s) => s,
    };
    let planner = planner(&s, flags);
    let mut registry = s.file.zones.clone().unwrap_or_default();
    let mut out = Output::default();
    let mut events = Vec::new();
    for req in &s.file.requests {
        match handle_deploy_request(req, &s.sim_problem, &mut registry, &planner) {
            Ok(d) => {
                let _ = writeln!(out.stdout, "deployed {} in {}:", d.app, d.region);
                for a in &d.assignments {
                    let _ = writeln!(out.stdout, "  {} -> {} / {}", a.microservice, a.zone, a.vm);
                }
                events.extend(d.events);
            }
            Err(e) => {
                let _ = writeln!(out.stderr, "deploy {} in {} failed: {e}", req.app, req.region);
                out.code = EXIT_INFEASIBLE;
                events.push(edgecut_runtime::Event::new(
                    req.at_s,
                    &req.app,
                    edgecut_runtime::EventKind::DeployFailed,
                    e.to_string(),
                ));
            }
        }
    }
    out.stdout.push_str(&sim::events_csv(&events));
    out
}
