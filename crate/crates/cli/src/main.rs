use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use platoon_cli::matrix::{matrix_report, render};
use platoon_cli::report::{emit_reports, worst_case_table};
use platoon_cli::ring::{seeds, sweep_ring, RingRecord};
use platoon_cli::single::{evaluate, sweep_single};
use platoon_cli::spec::{RingCell, Traffic};
use platoon_cli::store::config_file_stem;
use platoon_cli::{exit, ExperimentSpec, Store};
use platoon_core::parse_config;
use platoon_core::scenarios::trace::write_counters_csv;
use platoon_core::scenarios::{run_ring, ScenarioKind};

#[derive(Parser)]
#[command(name = "platoon", version, about = "Mixed CACC platoon experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment spec (TOML); missing keys take their defaults.
    #[arg(long, global = true)]
    spec: Option<PathBuf>,
    /// Override any spec key, e.g. `--set controllers.acc.H=1.5`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Ring seed (first of the sweep seeds) and mix-sampling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "results")]
    out: PathBuf,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Integration step [s].
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulated time of single runs, or measured time of ring runs [s].
    #[arg(long, global = true)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one platoon configuration and compare it with the baselines.
    Single {
        #[arg(long, allow_hyphen_values = true)]
        config: Option<String>,
        #[arg(long)]
        scenario: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one ring-road simulation.
    Ring {
        #[arg(long)]
        density: Option<f64>,
        #[arg(long)]
        penetration: Option<f64>,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        baseline: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep all follower mixes (sampled for large platoons).
    SweepSingle {
        /// Platoon sizes.
        #[arg(long = "n")]
        sizes: Vec<usize>,
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the ring traffic grid.
    SweepRing {
        #[arg(long = "density")]
        densities: Vec<f64>,
        #[arg(long = "policy")]
        policies: Vec<String>,
        #[arg(long = "n")]
        sizes: Vec<usize>,
        #[arg(long = "penetration")]
        penetrations: Vec<f64>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// List the grid without running it.
        #[arg(long)]
        dry_run: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Print connectivity matrices.
    Matrix {
        #[arg(long = "config", allow_hyphen_values = true)]
        configs: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild tables and CSVs from stored results.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn config_err<T>(r: anyhow::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Config)
}

fn toml_list<T: ToString>(v: &[T]) -> String {
    format!("[{}]", v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", "))
}

fn quoted(v: &[String]) -> Vec<String> {
    v.iter().map(|s| format!("{s:?}")).collect()
}

fn load_spec(c: &Common, section: &str, extra: Vec<String>) -> Result<ExperimentSpec, Failure> {
    let mut o = Vec::new();
    if let Some(s) = c.seed {
        o.push(format!("ring.seed={s}"));
        o.push(format!("single.sample_seed={s}"));
    }
    if let Some(dt) = c.dt {
        o.push(format!("dynamics.dt={dt:?}"));
    }
    if let Some(d) = c.duration {
        o.push(format!("{section}.duration={d:?}"));
    }
    o.extend(c.overrides.iter().cloned());
    o.extend(extra);
    config_err(ExperimentSpec::load(c.spec.as_deref(), &o))
}

fn pool(jobs: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        b = b.num_threads(j.max(1));
    }
    Ok(b.build()?)
}

fn open_store(out: &Path, spec: &ExperimentSpec) -> anyhow::Result<Store> {
    let store = Store::open(out, spec.hash())?;
    store.write_text("spec.toml", &spec.to_toml())?;
    store.write_bytes("spec_hash", format!("{}\n", spec.hash()).as_bytes())?;
    Ok(store)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Single { config, scenario, common } => {
            let mut extra = Vec::new();
            if let Some(c) = config {
                extra.push(format!("single.config={c:?}"));
            }
            if let Some(s) = scenario {
                let s: ScenarioKind = config_err(s.parse().map_err(Into::into))?;
                extra.push(format!("single.scenario={:?}", s.as_str()));
            }
            let spec = load_spec(&common, "single", extra)?;
            let cfg = config_err(parse_config(&spec.single.config).map_err(Into::into))?;
            let kind = spec.single.scenario;
            let store = open_store(&common.out, &spec)?;
            let (report, trace) = evaluate(&spec, kind, &cfg)?;
            let dir = PathBuf::from("single_run").join(kind.as_str()).join(config_file_stem(&report.config));
            store.write_json(dir.join("report.json"), &report)?;
            let mut csv = Vec::new();
            trace.write_csv(&mut csv).context("trace csv")?;
            store.write_text(dir.join("trace.csv"), std::str::from_utf8(&csv).expect("ascii csv"))?;
            let mut ev = Vec::new();
            trace.write_events_csv(&mut ev).context("events csv")?;
            store.write_text(dir.join("events.csv"), std::str::from_utf8(&ev).expect("ascii csv"))?;
            println!(
                "{} {} delta_a={:.3} (V{}) delta_d={:.3} (V{}) eta={:.3} min_gap={:.3} collided={}",
                kind.tag(),
                report.config,
                report.delta_a,
                report.delta_a_vehicle,
                report.delta_d,
                report.delta_d_vehicle,
                report.eta,
                report.min_gap,
                report.collided
            );
            Ok(if report.collided { exit::COLLISION } else { exit::OK })
        }
        Command::Ring { density, penetration, size, policy, baseline, common } => {
            let mut extra = Vec::new();
            if let Some(d) = density {
                extra.push(format!("ring.D_v={d:?}"));
            }
            if let Some(r) = penetration {
                extra.push(format!("ring.R={r:?}"));
            }
            if let Some(n) = size {
                extra.push(format!("ring.N={n}"));
            }
            if let Some(p) = policy {
                let p: platoon_core::scenarios::PlatoonPolicy = config_err(p.parse().map_err(Into::into))?;
                extra.push(format!("ring.policy={:?}", p.as_str()));
            }
            if let Some(b) = baseline {
                let b: platoon_core::scenarios::BaselinePolicy = config_err(b.parse().map_err(Into::into))?;
                extra.push(format!("ring.baseline={:?}", b.as_str()));
            }
            let spec = load_spec(&common, "ring", extra)?;
            let store = open_store(&common.out, &spec)?;
            let r = &spec.ring;
            let traffic = if r.penetration > 0.0 {
                Traffic::Platoons { policy: r.policy, size: r.platoon_size, penetration: r.penetration }
            } else {
                Traffic::Baseline { baseline: r.baseline }
            };
            let cell = RingCell { density: r.density, traffic };
            let outcome = run_ring(r, &spec.dynamics, &spec.controllers).map_err(anyhow::Error::from)?;
            let record = RingRecord::from_outcome(cell, &outcome)?;
            let dir = PathBuf::from("ring_run").join(format!("{}_s{}", cell.key(), r.seed));
            store.write_json(dir.join("record.json"), &record)?;
            let mut csv = Vec::new();
            write_counters_csv(&outcome.counters, &mut csv).context("counters csv")?;
            store.write_text(dir.join("counters.csv"), std::str::from_utf8(&csv).expect("ascii csv"))?;
            let mut thr = String::from("window_start,road,N,E,S,W\n");
            for (k, road) in record.road_throughput.iter().enumerate() {
                let t = r.warmup + k as f64 * record.window_s;
                let d: Vec<String> = record.device_throughput.iter().map(|s| format!("{:.6}", s[k])).collect();
                thr.push_str(&format!("{t:.6},{road:.6},{}\n", d.join(",")));
            }
            store.write_text(dir.join("throughput.csv"), &thr)?;
            let mut vol: Vec<f64> = record.volatility.clone();
            vol.sort_by(f64::total_cmp);
            let median = if vol.is_empty() { f64::NAN } else { platoon_core::metrics::quantile_sorted(&vol, 0.5) };
            println!(
                "{} seed {} vehicles={} throughput={:.1} veh/h mean_speed={:.2} m/s median_volatility={:.4} lane_changes={} collided={}",
                cell.key(),
                r.seed,
                record.n_vehicles,
                record.mean_throughput,
                record.mean_speed,
                median,
                record.lane_changes,
                record.terminated_by_collision
            );
            Ok(exit::OK)
        }
        Command::SweepSingle { sizes, scenarios, common } => {
            let mut extra = Vec::new();
            if !sizes.is_empty() {
                extra.push(format!("single.N={}", toml_list(&sizes)));
            }
            if !scenarios.is_empty() {
                let mut names = Vec::new();
                for s in &scenarios {
                    let s: ScenarioKind = config_err(s.parse().map_err(Into::into))?;
                    names.push(s.as_str().to_string());
                }
                extra.push(format!("single.scenarios={}", toml_list(&quoted(&names))));
            }
            let spec = load_spec(&common, "single", extra)?;
            let store = open_store(&common.out, &spec)?;
            let kinds: Vec<ScenarioKind> = spec.single.scenarios.clone();
            let out = pool(common.jobs)?.install(|| sweep_single(&spec, &store, &spec.single.sizes, &kinds))?;
            emit_reports(&store, &spec)?;
            print!("{}", worst_case_table(&out.results, |_| true));
            let mixed = out.results.iter().filter(|r| !r.baseline).count();
            let baselines = out.results.len() - mixed;
            println!("{mixed} mixed + {baselines} baseline reports ({} reused)", out.resumed);
            for (what, e) in &out.failures {
                eprintln!("failed: {what}: {e}");
            }
            Ok(if out.failures.is_empty() { exit::OK } else { exit::PARTIAL })
        }
        Command::SweepRing { densities, policies, sizes, penetrations, repetitions, dry_run, common } => {
            let mut extra = Vec::new();
            if !densities.is_empty() {
                extra.push(format!("grid.D_v={}", toml_list(&densities.iter().map(|d| format!("{d:?}")).collect::<Vec<_>>())));
            }
            if !policies.is_empty() {
                let mut names = Vec::new();
                for p in &policies {
                    let p: platoon_core::scenarios::PlatoonPolicy = config_err(p.parse().map_err(Into::into))?;
                    names.push(p.as_str().to_string());
                }
                extra.push(format!("grid.policies={}", toml_list(&quoted(&names))));
            }
            if !sizes.is_empty() {
                extra.push(format!("grid.N={}", toml_list(&sizes)));
            }
            if !penetrations.is_empty() {
                extra.push(format!("grid.R={}", toml_list(&penetrations.iter().map(|r| format!("{r:?}")).collect::<Vec<_>>())));
            }
            if let Some(r) = repetitions {
                extra.push(format!("grid.repetitions={r}"));
            }
            let spec = load_spec(&common, "ring", extra)?;
            let cells = spec.grid.cells();
            let seeds = seeds(&spec);
            if dry_run {
                for c in &cells {
                    println!("{}", c.key());
                }
                println!("{} cells x {} seeds = {} runs", cells.len(), seeds.len(), cells.len() * seeds.len());
                return Ok(exit::OK);
            }
            let store = open_store(&common.out, &spec)?;
            let out = pool(common.jobs)?.install(|| sweep_ring(&spec, &store, &cells, &seeds));
            let written = emit_reports(&store, &spec)?;
            let collided = out.records.iter().filter(|r| r.terminated_by_collision).count();
            println!(
                "{} runs ({} reused, {} terminated by collision, {} failed)",
                out.records.len(),
                out.resumed,
                collided,
                out.failures.len()
            );
            for p in written {
                println!("wrote {}", p.display());
            }
            for (what, e) in &out.failures {
                eprintln!("failed: {what}: {e}");
            }
            Ok(if out.failures.is_empty() { exit::OK } else { exit::PARTIAL })
        }
        Command::Matrix { configs, common } => {
            let extra = if configs.is_empty() { Vec::new() } else { vec![format!("matrix.configs={}", toml_list(&quoted(&configs)))] };
            let spec = load_spec(&common, "matrix", extra)?;
            let store = open_store(&common.out, &spec)?;
            for c in &spec.matrix.configs {
                let cfg = config_err(parse_config(c).map_err(Into::into))?;
                let r = matrix_report(&cfg)?;
                let text = render(&r);
                print!("{text}");
                let stem = config_file_stem(c);
                store.write_text(format!("matrices/{stem}.txt"), &text)?;
                store.write_json(format!("matrices/{stem}.json"), &r)?;
            }
            Ok(exit::OK)
        }
        Command::Report { common } => {
            let stored = common.out.join("spec.toml");
            let spec = if common.spec.is_none() && stored.exists() {
                let c = Common { spec: Some(stored), ..common.clone() };
                load_spec(&c, "single", Vec::new())?
            } else {
                load_spec(&common, "single", Vec::new())?
            };
            let store = Store::open(&common.out, spec.hash())?;
            let written = emit_reports(&store, &spec)?;
            if written.is_empty() {
                eprintln!("no results for spec {} under {}", spec.hash(), common.out.display());
            }
            for p in written {
                println!("wrote {}", p.display());
            }
            Ok(exit::OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e:#}");
            ExitCode::from(exit::CONFIG)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::RUNTIME)
        }
    }
}
