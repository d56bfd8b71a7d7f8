//! `oros` subcommands. Every command writes fixed file names under the
//! output directory and returns its exit code.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use oros_core::energy::profile::{default_anchors, fit_device_profiles, Anchor, ProfileFile, DEFAULT_CAPACITY_WH};
use oros_core::energy::Device;
use oros_core::milp::{build_model_with, encode_assignment, ModelOptions, WindowState};
use oros_core::planner::{greedy_start, run_mission};
use oros_core::scenario::{load_scenario_with_overrides, parse_override, Scenario};
use oros_core::simulator::{compare_metrics, run_soa_baseline, CompareReport, GroundTruth, SimTrace};
use oros_core::solver::{extract_plan, solve_bnb, BnbOptions, Status};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_TIME_LIMIT: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "oros", version, about = "Energy-aware multi-robot exploration planner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Directory for output files.
    #[arg(long, short, default_value = "out")]
    pub out: PathBuf,
    /// Override a scenario value by dotted path, e.g. `planner.window_w=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Print machine-readable JSON on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug, Clone)]
pub struct World {
    /// Ground-truth world file; defaults to the scenario map.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Hide this many random obstacles from the planner.
    #[arg(long, conflicts_with = "ground_truth")]
    pub hidden_obstacles: Option<usize>,
    /// Seed for hidden obstacles; defaults to the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve one window from the initial state.
    Solve {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a receding-horizon mission against a simulated world.
    Mission {
        scenario: PathBuf,
        #[command(flatten)]
        world: World,
        #[command(flatten)]
        common: Common,
    },
    /// Run a mission and replay its path with sensors always on.
    Compare {
        scenario: PathBuf,
        #[command(flatten)]
        world: World,
        /// Number of consecutive seeds to run, starting at the base seed.
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// Parallel runs for seed sweeps.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Fit device power draws and print remaining movement time per hour of use.
    Profile {
        /// Anchor file (JSON list of `{device, hours_on, remaining_hours}`).
        #[arg(long)]
        anchors: Option<PathBuf>,
        /// Battery capacity in Wh.
        #[arg(long, default_value_t = DEFAULT_CAPACITY_WH)]
        capacity: f64,
        #[arg(long, default_value_t = 10)]
        hours: usize,
        #[arg(long, short, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Write the window model from the initial state in LP format.
    DumpModel {
        scenario: PathBuf,
        /// Window length; defaults to the scenario's.
        #[arg(long)]
        window: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve { scenario, common } => cmd_solve(&scenario, &common),
        Command::Mission { scenario, world, common } => cmd_mission(&scenario, &world, &common),
        Command::Compare { scenario, world, seeds, jobs, common } => {
            cmd_compare(&scenario, &world, seeds, jobs, &common)
        }
        Command::Profile { anchors, capacity, hours, out, json } => {
            cmd_profile(anchors.as_deref(), capacity, hours, &out, json)
        }
        Command::DumpModel { scenario, window, common } => cmd_dump_model(&scenario, window, &common),
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Scenario> {
    let parsed = overrides.iter().map(|o| parse_override(o)).collect::<Result<Vec<_>, _>>()?;
    Ok(load_scenario_with_overrides(path, &parsed)?)
}

fn out_dir(dir: &Path) -> Result<&Path> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

fn print_json<T: Serialize + ?Sized>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn cmd_solve(path: &Path, common: &Common) -> Result<u8> {
    let s = load(path, &common.overrides)?;
    let dir = out_dir(&common.out)?;
    let state = WindowState::initial(&s);
    let window = s.window().min(s.horizon());
    let model = build_model_with::<f64>(&s, window, &state, ModelOptions::from_scenario(&s))?;
    let start = encode_assignment(&model, &s, &state, &greedy_start(&s, &state, window));
    let opts = BnbOptions {
        time_limit: s.solver.time_limit_s.map(Duration::from_secs_f64),
        node_limit: s.solver.node_limit,
        mip_start: model.check_feasible(&start, 1e-7).is_ok().then_some(start),
        ..Default::default()
    };
    let sol = solve_bnb(&model, &opts);
    fs::write(dir.join("stats.json"), sol.stats_json() + "\n")?;
    let plan = extract_plan(&sol, &model, &s, &state).ok();
    if let Some(plan) = &plan {
        write_json(&dir.join("plan.json"), plan)?;
    }
    let code = match sol.status {
        Status::Optimal => EXIT_OK,
        Status::TimeLimit => EXIT_TIME_LIMIT,
        other => bail!("no plan: solver finished with status {other:?}"),
    };
    if common.json {
        println!("{}", sol.stats_json());
    } else {
        let obj = plan.as_ref().map_or("none".into(), |p| format!("{:.6}", p.objective));
        println!(
            "{:?}: objective {obj}, {} nodes, {:.3} s, outputs in {}",
            sol.status,
            sol.stats.nodes,
            sol.stats.wall_time_s,
            dir.display()
        );
    }
    Ok(code)
}

pub fn ground_truth(s: &Scenario, world: &World) -> Result<GroundTruth> {
    let gt = match (&world.ground_truth, world.hidden_obstacles) {
        (Some(p), _) => GroundTruth::load(p).with_context(|| format!("ground truth {}", p.display()))?,
        (None, Some(n)) => GroundTruth::with_hidden_obstacles(s, n, world.seed.unwrap_or(s.mission.seed)),
        (None, None) => GroundTruth::from_scenario(s),
    };
    gt.validate(s)?;
    Ok(gt)
}

fn write_trace(trace: &SimTrace, path: &Path) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    trace.write_csv(std::io::BufWriter::new(f))?;
    Ok(())
}

#[derive(Serialize)]
struct MissionSummary<'a> {
    steps: usize,
    coverage: f64,
    explored: usize,
    explorable: usize,
    solver_invocations: usize,
    energy_consumed: f64,
    wall_time_s: f64,
    trace: &'a SimTrace,
}

pub fn cmd_mission(path: &Path, world: &World, common: &Common) -> Result<u8> {
    let s = load(path, &common.overrides)?;
    let dir = out_dir(&common.out)?;
    let gt = ground_truth(&s, world)?;
    let trace = run_mission(&s, &gt)?;
    write_trace(&trace, &dir.join("trace.csv"))?;
    write_json(&dir.join("plan.json"), &trace.plans)?;
    let summary = MissionSummary {
        steps: trace.steps,
        coverage: trace.coverage,
        explored: trace.explored,
        explorable: trace.explorable,
        solver_invocations: trace.solves.len(),
        energy_consumed: trace.total_consumed(),
        wall_time_s: trace.wall_time_s,
        trace: &trace,
    };
    write_json(&dir.join("report.json"), &summary)?;
    if common.json {
        print_json(&summary)?;
    } else {
        println!(
            "{} steps, coverage {:.1}% ({}/{}), {} solves, {:.4} energy used, {:.1} s",
            trace.steps,
            100.0 * trace.coverage,
            trace.explored,
            trace.explorable,
            trace.solves.len(),
            trace.total_consumed(),
            trace.wall_time_s
        );
    }
    Ok(EXIT_OK)
}

/// One OROS mission plus its always-on replay.
pub fn compare_once(s: &Scenario, gt: &GroundTruth) -> Result<(CompareReport, SimTrace, SimTrace)> {
    let oros = run_mission(s, gt)?;
    let soa = run_soa_baseline(s, gt, &oros.paths())?;
    let report = compare_metrics(&oros, &soa)?;
    Ok((report, oros, soa))
}

fn write_compare(dir: &Path, report: &CompareReport, oros: &SimTrace, soa: &SimTrace) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    report.write_csv(fs::File::create(dir.join("report.csv"))?)?;
    write_trace(oros, &dir.join("trace.csv"))?;
    write_trace(soa, &dir.join("soa_trace.csv"))?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub savings_pct: f64,
    pub coverage: f64,
    pub e_oros: f64,
    pub e_soa: f64,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub runs: Vec<SeedRun>,
    pub mean_savings_pct: f64,
    pub min_savings_pct: f64,
    pub max_savings_pct: f64,
}

pub fn cmd_compare(path: &Path, world: &World, seeds: usize, jobs: Option<usize>, common: &Common) -> Result<u8> {
    let s = load(path, &common.overrides)?;
    let dir = out_dir(&common.out)?;
    if seeds <= 1 {
        let gt = ground_truth(&s, world)?;
        let (report, oros, soa) = compare_once(&s, &gt)?;
        write_compare(dir, &report, &oros, &soa)?;
        if common.json {
            print_json(&report)?;
        } else {
            println!(
                "savings {:.2}% (E_oros {:.6}, E_soa {:.6}), coverage {:.1}%",
                report.savings_pct,
                report.e_oros,
                report.e_soa,
                100.0 * report.coverage
            );
        }
        return Ok(EXIT_OK);
    }
    let base = world.seed.unwrap_or(s.mission.seed);
    let one = |seed: u64| -> Result<SeedRun> {
        let mut sc = s.clone();
        sc.mission.seed = seed;
        let gt = ground_truth(&sc, &World { seed: Some(seed), ..world.clone() })?;
        let (report, oros, soa) = compare_once(&sc, &gt)?;
        let sub = out_dir(&dir.join(format!("seed_{seed}")))?.to_path_buf();
        write_compare(&sub, &report, &oros, &soa)?;
        Ok(SeedRun {
            seed,
            savings_pct: report.savings_pct,
            coverage: report.coverage,
            e_oros: report.e_oros,
            e_soa: report.e_soa,
        })
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
    let runs: Vec<SeedRun> =
        pool.install(|| (base..base + seeds as u64).into_par_iter().map(one).collect::<Result<_>>())?;
    let pct: Vec<f64> = runs.iter().map(|r| r.savings_pct).collect();
    let sweep = SweepReport {
        mean_savings_pct: pct.iter().sum::<f64>() / pct.len() as f64,
        min_savings_pct: pct.iter().copied().fold(f64::INFINITY, f64::min),
        max_savings_pct: pct.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        runs,
    };
    write_json(&dir.join("report.json"), &sweep)?;
    if common.json {
        print_json(&sweep)?;
    } else {
        for r in &sweep.runs {
            println!("seed {}: savings {:.2}%, coverage {:.1}%", r.seed, r.savings_pct, 100.0 * r.coverage);
        }
        println!(
            "mean savings {:.2}% (min {:.2}%, max {:.2}%)",
            sweep.mean_savings_pct, sweep.min_savings_pct, sweep.max_savings_pct
        );
    }
    Ok(EXIT_OK)
}

/// Remaining movement time per device at whole hours `0..=hours`.
pub fn profile_table(profile: &ProfileFile, hours: usize) -> Vec<(usize, Vec<(Device, f64)>)> {
    profile.remaining_table(hours).into_iter().map(|(h, row)| (h, row.into_iter().collect())).collect()
}

pub fn cmd_profile(anchors: Option<&Path>, capacity: f64, hours: usize, out: &Path, json: bool) -> Result<u8> {
    let anchors: Vec<Anchor> = match anchors {
        Some(p) => serde_json::from_str(
            &fs::read_to_string(p).with_context(|| format!("{}: file not found", p.display()))?,
        )?,
        None => default_anchors(),
    };
    let fit = fit_device_profiles(&anchors, capacity).context("profile fit failed")?;
    let Some(profile) = ProfileFile::from_fit(&fit, &anchors) else {
        bail!("profile fit failed: anchors do not determine the locomotion draw");
    };
    let dir = out_dir(out)?;
    let table = profile_table(&profile, hours);
    let mut w = csv::Writer::from_path(dir.join("profile.csv"))?;
    let mut header = vec!["hours_on".to_string()];
    header.extend(Device::ALL.iter().map(|d| d.name().to_string()));
    w.write_record(&header)?;
    for (h, row) in &table {
        let mut rec = vec![h.to_string()];
        rec.extend(row.iter().map(|(_, v)| format!("{v:.4}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    fs::write(dir.join("devices.json"), profile.to_json_string() + "\n")?;
    if json {
        #[derive(Serialize)]
        struct Out<'a> {
            profile: &'a ProfileFile,
            table: Vec<serde_json::Value>,
        }
        let table = table
            .iter()
            .map(|(h, row)| {
                let mut m = serde_json::Map::new();
                m.insert("hours_on".into(), (*h).into());
                for (d, v) in row {
                    m.insert(d.name().into(), (*v).into());
                }
                serde_json::Value::Object(m)
            })
            .collect();
        print_json(&Out { profile: &profile, table })?;
    } else {
        println!("{}", header.join("\t"));
        for (h, row) in &table {
            let vals: Vec<String> = row.iter().map(|(_, v)| format!("{v:.2}")).collect();
            println!("{h}\t{}", vals.join("\t"));
        }
        println!("fit residual rms {:.3} Wh", profile.residual_rms);
    }
    Ok(EXIT_OK)
}

pub fn cmd_dump_model(path: &Path, window: Option<usize>, common: &Common) -> Result<u8> {
    let s = load(path, &common.overrides)?;
    let dir = out_dir(&common.out)?;
    let state = WindowState::initial(&s);
    let window = window.unwrap_or(s.window()).min(s.horizon());
    let model = build_model_with::<f64>(&s, window, &state, ModelOptions::from_scenario(&s))?;
    fs::write(dir.join("model.lp"), model.to_lp_string())?;
    let size = model.size();
    if common.json {
        print_json(&size)?;
    } else {
        println!("{size:?}; wrote {}", dir.join("model.lp").display());
    }
    Ok(EXIT_OK)
}
