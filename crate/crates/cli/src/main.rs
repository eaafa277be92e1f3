//! Command-line front end: generate, inspect, schedule, simulate, compare.
//!
//! Every run opens with a `# config:` line echoing the tool version and all
//! parameters (seeds included), so any output can be reproduced from its own
//! log. Exit code 0 means every requested output was written.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use tcsched_core::baseline::{self, NaiveOrder, ORACLE_MAX};
use tcsched_core::dag::{build_dag, stats, validate, ContractionDag, TreeSet};
use tcsched_core::device::{self, DeviceConfig};
use tcsched_core::memory::{simulate, MemoryTrace, Schedule};
use tcsched_core::sibling::{self, SiblingOptions};
use tcsched_core::tree::{self, TreeOptions};
use tcsched_core::workload::format::{
    emit_schedule, emit_workload, from_json, parse_schedule, parse_workload, to_json,
};
use tcsched_core::workload::gen::{calibrate_share_prob, generate, GenParams, System};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const ALL_ALGOS: [&str; 7] = ["sibling", "tree", "rsgs-like", "random", "dfs", "bfs", "optimal"];

#[derive(Parser)]
#[command(
    name = "tcsched",
    version,
    about = "Peak-memory-aware scheduling of batched tensor-contraction workloads"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic workload and its statistics.
    Gen(GenArgs),
    /// Validate a workload and print its statistics.
    Inspect(InspectArgs),
    /// Compute a schedule and its residency trace.
    Schedule(ScheduleArgs),
    /// Replay a schedule file, optionally on a capacity-limited device.
    Simulate(SimulateArgs),
    /// Run several schedulers and tabulate peaks, traffic, and wall time.
    Compare(CompareArgs),
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "TCSCHED_OUT", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct GenArgs {
    /// Contraction system: mxm, mxmxm, bxm, bxb, or bxbxb.
    #[arg(long)]
    system: String,
    /// Number of contraction trees.
    #[arg(long)]
    trees: usize,
    /// Tensor dimension N (sizes scale as N^2..N^4).
    #[arg(long, default_value_t = 16)]
    n: u64,
    /// Probability of reusing a pooled subtree.
    #[arg(long, default_value_t = 0.5)]
    share_prob: f64,
    /// Calibrate share_prob to hit this vertex-sharing factor instead.
    #[arg(long)]
    target_fv: Option<f64>,
    /// Leaves per tree, inclusive range `lo:hi`.
    #[arg(long, default_value = "3:8")]
    leaves: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the JSON mirror of the workload.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct InspectArgs {
    input: PathBuf,
}

#[derive(Args)]
struct ScheduleArgs {
    #[arg(long)]
    input: PathBuf,
    /// sibling | tree | rsgs-like | random | dfs | bfs | optimal
    #[arg(long)]
    algo: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the tree scheduler's gain audit log.
    #[arg(long)]
    emit_gains: bool,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Schedule file to replay.
    #[arg(long)]
    schedule: PathBuf,
    /// Device capacity in size units; omits device replay when absent.
    #[arg(long)]
    capacity: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated algorithms (default: all but optimal).
    #[arg(long, default_value = "sibling,tree,rsgs-like,random,dfs,bfs")]
    algos: String,
    /// Comma-separated device capacities; rows without device columns when absent.
    #[arg(long)]
    capacities: Option<String>,
    /// Algorithm the normalized columns divide by.
    #[arg(long, default_value = "rsgs-like")]
    baseline: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArg,
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Inspect(a) => cmd_inspect(a),
        Cmd::Schedule(a) => cmd_schedule(a),
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Compare(a) => cmd_compare(a),
    }
}

fn load_workload(path: &Path) -> Result<TreeSet> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        from_json(&text).with_context(|| format!("invalid JSON workload {}", path.display()))
    } else {
        parse_workload(&text)
            .with_context(|| format!("invalid workload {}", path.display()))
    }
}

/// Loads, merges, and structurally validates a workload file.
fn load_dag(path: &Path) -> Result<(TreeSet, ContractionDag)> {
    let ts = load_workload(path)?;
    let dag = build_dag(&ts).with_context(|| format!("cannot merge {}", path.display()))?;
    let violations = validate(&dag, &ts);
    if !violations.is_empty() {
        bail!(
            "{} is not a valid workload: {}",
            path.display(),
            violations.iter().take(3).map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
        );
    }
    Ok((ts, dag))
}

fn write_out(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, contents)
        .with_context(|| format!("cannot write {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_leaves(s: &str) -> Result<(u32, u32)> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| anyhow!("leaves must be `lo:hi`, got `{s}`"))?;
    Ok((lo.trim().parse()?, hi.trim().parse()?))
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let system: System = a.system.parse().map_err(|e: String| anyhow!(e))?;
    if a.trees == 0 {
        bail!("--trees must be at least 1");
    }
    if a.n < 2 {
        bail!("--n must be at least 2");
    }
    let leaves = parse_leaves(&a.leaves)?;
    if leaves.0 < 2 || leaves.0 > leaves.1 {
        bail!("--leaves must satisfy 2 <= lo <= hi");
    }
    println!(
        "# config: tcsched {VERSION} cmd=gen system={system} trees={} n={} share_prob={} \
         target_fv={} leaves={}:{} seed={} out={}",
        a.trees,
        a.n,
        a.share_prob,
        a.target_fv.map_or("none".into(), |t| t.to_string()),
        leaves.0,
        leaves.1,
        a.seed,
        a.out.out.display()
    );

    let mut params = GenParams {
        system,
        num_trees: a.trees,
        n_dim: a.n,
        share_prob: a.share_prob,
        leaves,
        seed: a.seed,
    };
    if let Some(target) = a.target_fv {
        let cal = calibrate_share_prob(&params, target);
        params.share_prob = cal.share_prob;
        println!(
            "calibrated share_prob={:.6} (mean f_v {:.3} vs target {target})",
            cal.share_prob, cal.achieved_f_v
        );
    }
    let ts = generate(&params);
    let dag = build_dag(&ts).expect("generated workloads are well-formed");
    let s = stats(&dag, &ts);
    println!(
        "generated {} vertices, {} edges, {} trees: f_v={:.3} f_e={:.3}",
        s.num_vertices, s.num_edges, s.num_trees, s.f_v, s.f_e
    );

    write_out(&a.out.out.join("workload.txt"), &emit_workload(&ts))?;
    if a.json {
        write_out(&a.out.out.join("workload.json"), &to_json(&ts))?;
    }
    let stats_doc = json!({
        "version": VERSION,
        "params": {
            "system": system.to_string(),
            "trees": a.trees,
            "n": a.n,
            "share_prob": params.share_prob,
            "leaves": [leaves.0, leaves.1],
            "seed": a.seed,
        },
        "stats": s,
    });
    write_out(
        &a.out.out.join("stats.json"),
        &format!("{}\n", serde_json::to_string_pretty(&stats_doc)?),
    )
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    println!("# config: tcsched {VERSION} cmd=inspect input={}", a.input.display());
    let ts = load_workload(&a.input)?;
    let dag = build_dag(&ts)?;
    let violations = validate(&dag, &ts);
    let s = stats(&dag, &ts);
    let doc = json!({
        "stats": s,
        "contractions": dag.contraction_count(),
        "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    if !violations.is_empty() {
        bail!("{} structural violations", violations.len());
    }
    Ok(())
}

/// Runs one scheduler; the wall time covers the scheduler call only.
fn run_algo(
    algo: &str,
    dag: &ContractionDag,
    ts: &TreeSet,
    seed: u64,
    gain_log: bool,
) -> Result<(Schedule, u128, Option<serde_json::Value>)> {
    let t0 = Instant::now();
    match algo {
        "sibling" => {
            let run = sibling::schedule(dag, &SiblingOptions::default())?;
            Ok((run.schedule, t0.elapsed().as_nanos(), None))
        }
        "tree" => {
            let run = tree::schedule(dag, ts, &TreeOptions { record_gain_log: gain_log });
            let wall = t0.elapsed().as_nanos();
            let gains = gain_log.then(|| {
                json!({ "selections": run.selections, "gain_log": run.gain_log })
            });
            Ok((run.schedule, wall, gains))
        }
        "rsgs-like" => Ok((baseline::similarity(dag, ts), t0.elapsed().as_nanos(), None)),
        "random" => Ok((
            baseline::naive(dag, ts, NaiveOrder::Random { seed }),
            t0.elapsed().as_nanos(),
            None,
        )),
        "dfs" => Ok((
            baseline::naive(dag, ts, NaiveOrder::DfsPostorder),
            t0.elapsed().as_nanos(),
            None,
        )),
        "bfs" => {
            Ok((baseline::naive(dag, ts, NaiveOrder::BfsLevel), t0.elapsed().as_nanos(), None))
        }
        "optimal" => {
            let n = dag.contraction_count();
            if n > ORACLE_MAX {
                bail!("optimal supports at most {ORACLE_MAX} contractions, got {n}");
            }
            let res = baseline::optimal_peak(dag, ORACLE_MAX)?;
            Ok((res.witness, t0.elapsed().as_nanos(), None))
        }
        other => bail!("unknown algorithm `{other}` (expected {})", ALL_ALGOS.join("|")),
    }
}

fn cmd_schedule(a: ScheduleArgs) -> Result<()> {
    println!(
        "# config: tcsched {VERSION} cmd=schedule input={} algo={} seed={} out={}",
        a.input.display(),
        a.algo,
        a.seed,
        a.out.out.display()
    );
    let (ts, dag) = load_dag(&a.input)?;
    let want_gains = a.emit_gains && a.algo == "tree";
    if a.emit_gains && !want_gains {
        eprintln!("note: --emit-gains only applies to --algo tree");
    }
    let (schedule, wall_ns, gains) = run_algo(&a.algo, &dag, &ts, a.seed, want_gains)?;
    let trace = simulate(&dag, &schedule).expect("schedulers emit valid schedules");
    println!(
        "peak={} transient_peak={} contractions={} wall_ns={wall_ns}",
        trace.peak,
        trace.transient_peak,
        schedule.order.len()
    );

    write_out(&a.out.out.join(format!("schedule_{}.txt", a.algo)), &emit_schedule(&schedule))?;
    let mut csv = Vec::new();
    trace.write_csv(&schedule, &mut csv)?;
    write_out(&a.out.out.join(format!("trace_{}.csv", a.algo)), &String::from_utf8(csv)?)?;
    if let Some(gains) = gains {
        write_out(
            &a.out.out.join("gains_tree.json"),
            &format!("{}\n", serde_json::to_string_pretty(&gains)?),
        )?;
    }
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    println!(
        "# config: tcsched {VERSION} cmd=simulate input={} schedule={} capacity={}",
        a.input.display(),
        a.schedule.display(),
        a.capacity.map_or("none".into(), |c| c.to_string())
    );
    let (_, dag) = load_dag(&a.input)?;
    let text = std::fs::read_to_string(&a.schedule)
        .with_context(|| format!("cannot read {}", a.schedule.display()))?;
    let schedule = parse_schedule(&text)?;
    let trace = simulate(&dag, &schedule)?;
    println!(
        "algo={} seed={} peak={} transient_peak={}",
        schedule.algo, schedule.seed, trace.peak, trace.transient_peak
    );
    if let Some(capacity) = a.capacity {
        let report = device::run(&dag, &schedule, &DeviceConfig { capacity })?;
        println!("{}", serde_json::to_string(&report)?);
    }
    Ok(())
}

struct CompareRow {
    algo: String,
    capacity: Option<u64>,
    trace: MemoryTrace,
    wall_ns: u128,
    device: Option<device::DeviceReport>,
}

fn norm(value: f64, base: Option<f64>) -> String {
    match base {
        Some(b) if b > 0.0 => format!("{:.4}", value / b),
        Some(b) if b == 0.0 && value == 0.0 => "1.0000".into(),
        _ => String::new(),
    }
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let algos: Vec<String> =
        a.algos.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    let capacities: Vec<u64> = match &a.capacities {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse().with_context(|| format!("bad capacity `{s}`")))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    println!(
        "# config: tcsched {VERSION} cmd=compare input={} algos={} capacities={:?} \
         baseline={} seed={} out={}",
        a.input.display(),
        algos.join(","),
        capacities,
        a.baseline,
        a.seed,
        a.out.out.display()
    );
    if algos.is_empty() {
        bail!("--algos must name at least one algorithm");
    }
    if !algos.contains(&a.baseline) {
        bail!("baseline `{}` is not among the requested algorithms", a.baseline);
    }
    let (ts, dag) = load_dag(&a.input)?;

    let mut errors: Vec<String> = Vec::new();
    let mut rows: Vec<CompareRow> = Vec::new();
    for algo in &algos {
        let (schedule, wall_ns) = match run_algo(algo, &dag, &ts, a.seed, false) {
            Ok((s, w, _)) => (s, w),
            Err(e) => {
                errors.push(format!("{algo}: {e}"));
                continue;
            }
        };
        let trace = simulate(&dag, &schedule).expect("schedulers emit valid schedules");
        if capacities.is_empty() {
            rows.push(CompareRow {
                algo: algo.clone(),
                capacity: None,
                trace: trace.clone(),
                wall_ns,
                device: None,
            });
        }
        for &capacity in &capacities {
            match device::run(&dag, &schedule, &DeviceConfig { capacity }) {
                Ok(report) => rows.push(CompareRow {
                    algo: algo.clone(),
                    capacity: Some(capacity),
                    trace: trace.clone(),
                    wall_ns,
                    device: Some(report),
                }),
                Err(e) => errors.push(format!("{algo} @ capacity {capacity}: {e}")),
            }
        }
    }

    let mut csv = String::from(
        "algo,capacity,peak,transient_peak,evictions,leaf_evictions,d2h_transfers,d2h_bytes,\
         h2d_transfers,h2d_bytes,refetches,schedule_wall_ns,peak_norm,evictions_norm,\
         h2d_bytes_norm,wall_norm\n",
    );
    for row in &rows {
        let base = rows
            .iter()
            .find(|r| r.algo == a.baseline && r.capacity == row.capacity);
        let dev = |f: fn(&device::DeviceReport) -> u64| row.device.as_ref().map(f);
        let base_dev = |f: fn(&device::DeviceReport) -> u64| {
            base.and_then(|b| b.device.as_ref().map(f))
        };
        let opt = |v: Option<u64>| v.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            row.algo,
            row.capacity.map_or(String::new(), |c| c.to_string()),
            row.trace.peak,
            row.trace.transient_peak,
            opt(dev(|d| d.evictions)),
            opt(dev(|d| d.leaf_evictions)),
            opt(dev(|d| d.d2h_transfers)),
            opt(dev(|d| d.d2h_bytes)),
            opt(dev(|d| d.h2d_transfers)),
            opt(dev(|d| d.h2d_bytes)),
            opt(dev(|d| d.refetches)),
            row.wall_ns,
            norm(row.trace.peak as f64, base.map(|b| b.trace.peak as f64)),
            norm(
                dev(|d| d.evictions).unwrap_or(0) as f64,
                base_dev(|d| d.evictions).map(|v| v as f64)
            ),
            norm(
                dev(|d| d.h2d_bytes).unwrap_or(0) as f64,
                base_dev(|d| d.h2d_bytes).map(|v| v as f64)
            ),
            norm(row.wall_ns as f64, base.map(|b| b.wall_ns as f64)),
        );
    }
    write_out(&a.out.out.join("compare.csv"), &csv)?;

    for e in &errors {
        eprintln!("error: {e}");
    }
    if !errors.is_empty() {
        bail!("{} of {} comparison cells failed", errors.len(), errors.len() + rows.len());
    }
    Ok(())
}
