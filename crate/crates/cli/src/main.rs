//! `dusec`: placement profiles, optimal assignments and elastic simulations.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 oracle disagreement.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use dusec_core::model::{ClassMask, ClassProfile, LoadAssignment, ProblemInstance, ProfileMode};
use dusec_core::optimizer::{assign_loads, lp_oracle, subset_bound, OptimizerError};
use dusec_core::ratio::{self, Exact, Number, Ratio};
use dusec_core::simulator::{self, reports_to_csv, reports_to_json};
use dusec_core::storage::{asymptotic_profile, exact_profile, generate_decentralized};
use dusec_core::straggler::{redundant_assign, StragglerConfig};
use dusec_core::transport::TransportProblem;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(
    name = "dusec",
    version,
    about = "Elastic computing over decentralized uncoded storage"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Class sizes a(V), cumulative sizes L(n), alpha and beta.
    Profile {
        #[arg(long = "K")]
        k: u64,
        #[arg(long = "M")]
        m: u64,
        #[arg(long = "N")]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Count an actual random placement instead of the limit law.
        #[arg(long)]
        exact: bool,
    },
    /// Optimal completion time and a load assignment reaching it.
    Solve {
        /// Comma-separated positive rationals, e.g. 1,2,5/2.
        #[arg(long, value_delimiter = ',', required = true)]
        speeds: Vec<String>,
        /// K / (K - M).
        #[arg(
            long,
            conflicts_with = "profile_file",
            required_unless_present = "profile_file"
        )]
        alpha: Option<String>,
        /// JSON written by `dusec profile`.
        #[arg(long)]
        profile_file: Option<PathBuf>,
        /// Straggler tolerance as `s,m`.
        #[arg(long)]
        straggler: Option<String>,
        /// Re-solve with the independent flow oracle and require agreement.
        #[arg(long)]
        oracle: bool,
    },
    /// Replays a scenario and writes steps.csv and steps.json.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Validation(String),
    Oracle(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Oracle(_) => 3,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> Failure {
    Failure::Validation(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(f) = configure_threads() {
        return report(f);
    }
    let result = match cli.command {
        Command::Profile {
            k,
            m,
            n,
            seed,
            exact,
        } => profile(k, m, n, seed, exact),
        Command::Solve {
            speeds,
            alpha,
            profile_file,
            straggler,
            oracle,
        } => solve(
            &speeds,
            alpha.as_deref(),
            profile_file,
            straggler.as_deref(),
            oracle,
        ),
        Command::Simulate { scenario, out } => simulate(&scenario, &out),
    };
    match result {
        Ok(text) => {
            emit(&text);
            ExitCode::SUCCESS
        }
        Err(f) => report(f),
    }
}

/// Prints to stdout, tolerating a closed pipe.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}");
}

fn report(f: Failure) -> ExitCode {
    let (kind, msg) = match &f {
        Failure::Usage(m) => ("usage", m),
        Failure::Validation(m) => ("invalid input", m),
        Failure::Oracle(m) => ("oracle violation", m),
    };
    eprintln!("dusec: {kind}: {msg}");
    ExitCode::from(f.code())
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("ELASTIC_DUSEC_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw.trim().parse().ok().filter(|&t| t > 0).ok_or_else(|| {
        Failure::Usage(format!(
            "ELASTIC_DUSEC_THREADS={raw:?} is not a positive integer"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn num(r: &Ratio) -> Value {
    serde_json::to_value(Number::from(r)).expect("number serializes")
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes")
}

/// 1-based VM labels of a class.
fn labels(mask: ClassMask, ids: impl Fn(usize) -> usize) -> Vec<usize> {
    mask.members().map(|i| ids(i) + 1).collect()
}

// ---------------------------------------------------------------------------
// profile
// ---------------------------------------------------------------------------

fn profile(k: u64, m: u64, n: usize, seed: u64, exact: bool) -> Result<String, Failure> {
    if k == 0 {
        return Err(invalid("K must be positive"));
    }
    let (profile, asymptotic) = if exact {
        let storage = generate_decentralized(k, m, n, seed).map_err(invalid)?;
        let p = exact_profile(&storage).map_err(invalid)?;
        let ones = vec![Ratio::from_integer(1.into()); n];
        let inst = ProblemInstance::new(k, m, ones).map_err(invalid)?;
        (p, Some(asymptotic_profile(&inst).map_err(invalid)?))
    } else {
        let ones = vec![Ratio::from_integer(1.into()); n];
        let inst = ProblemInstance::new(k, m, ones).map_err(invalid)?;
        (asymptotic_profile(&inst).map_err(invalid)?, None)
    };
    let classes: Vec<Value> = profile
        .classes()
        .map(|(c, a)| {
            let mut entry = json!({ "vms": labels(c, |i| i), "size": num(a) });
            if let Some(law) = &asymptotic {
                // Binomial 3-sigma band around the limit value.
                let p = ratio::to_f64(law.size(c));
                let half = 3.0 * (p * (1.0 - p) / k as f64).sqrt();
                entry["band"] = json!({ "low": p - half, "high": p + half });
                let x = ratio::to_f64(a);
                entry["withinBand"] = json!((x - p).abs() <= half);
            }
            entry
        })
        .collect();
    let cumulative: Vec<Value> = profile.cumulative_table()[1..].iter().map(num).collect();
    let doc = json!({
        "schemaVersion": SCHEMA_VERSION,
        "K": k,
        "M": m,
        "N": n,
        "mode": profile.mode(),
        "seed": if exact { json!(seed) } else { Value::Null },
        "alpha": profile.alpha().map(num),
        "beta": num(profile.beta()),
        "classes": classes,
        "cumulative": cumulative,
    });
    Ok(pretty(&doc))
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ProfileFile {
    #[serde(rename = "K")]
    k: u64,
    #[serde(rename = "M")]
    m: u64,
    #[serde(rename = "N")]
    n: usize,
    classes: Vec<ProfileClass>,
}

#[derive(Deserialize)]
struct ProfileClass {
    vms: Vec<usize>,
    size: SizeField,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SizeField {
    Plain(Exact),
    Reported { exact: Exact },
}

fn read_profile(
    path: &PathBuf,
    n_speeds: usize,
) -> Result<(u64, u64, Vec<(ClassMask, Ratio)>), Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    let file: ProfileFile =
        serde_json::from_str(&text).map_err(|e| invalid(format!("profile file: {e}")))?;
    if file.n != n_speeds {
        return Err(invalid(format!(
            "profile has N = {} but {} speeds were given",
            file.n, n_speeds
        )));
    }
    let mut classes = Vec::with_capacity(file.classes.len());
    for (i, c) in file.classes.into_iter().enumerate() {
        if c.vms.is_empty() || c.vms.iter().any(|&v| v == 0 || v > file.n) {
            return Err(invalid(format!(
                "classes[{i}].vms must name VMs 1..={}",
                file.n
            )));
        }
        let mask = ClassMask::from_members(c.vms.iter().map(|v| v - 1));
        let size = match c.size {
            SizeField::Plain(e) | SizeField::Reported { exact: e } => e.0,
        };
        classes.push((mask, size));
    }
    Ok((file.k, file.m, classes))
}

fn parse_speeds(raw: &[String]) -> Result<Vec<Ratio>, Failure> {
    raw.iter()
        .map(|s| ratio::parse(s.trim()).map_err(|e| Failure::Usage(e.to_string())))
        .collect()
}

fn parse_straggler(raw: &str) -> Result<StragglerConfig, Failure> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [s, m] => match (s.parse(), m.parse()) {
            (Ok(s), Ok(m)) => Ok(StragglerConfig::new(s, m)),
            _ => Err(Failure::Usage(format!(
                "--straggler {raw:?}: expected two integers s,m"
            ))),
        },
        _ => Err(Failure::Usage(format!("--straggler {raw:?}: expected s,m"))),
    }
}

fn solve(
    raw_speeds: &[String],
    alpha: Option<&str>,
    profile_file: Option<PathBuf>,
    straggler: Option<&str>,
    oracle: bool,
) -> Result<String, Failure> {
    let speeds = parse_speeds(raw_speeds)?;
    let straggler = straggler.map(parse_straggler).transpose()?;
    let (instance, profile) = match (alpha, profile_file) {
        (Some(a), _) => {
            let alpha = ratio::parse(a).map_err(|e| Failure::Usage(e.to_string()))?;
            let inst = ProblemInstance::from_alpha(&alpha, speeds).map_err(invalid)?;
            let p = asymptotic_profile(&inst).map_err(invalid)?;
            (inst, p)
        }
        (None, Some(path)) => {
            let (k, m, classes) = read_profile(&path, speeds.len())?;
            let inst = ProblemInstance::new(k, m, speeds).map_err(invalid)?;
            // Classes are given in the caller's VM order; move to speed order.
            let mut inverse = vec![0; inst.num_vms()];
            for (sorted, &orig) in inst.original_ids().iter().enumerate() {
                inverse[orig] = sorted;
            }
            let mut sizes = vec![Ratio::from_integer(0.into()); (1usize << inst.num_vms()) - 1];
            for (mask, size) in classes {
                let moved = ClassMask::from_members(mask.members().map(|v| inverse[v]));
                sizes[moved.index()] += size;
            }
            let p = ClassProfile::new(
                ProfileMode::Exact,
                inst.num_vms(),
                inst.alpha(),
                inst.beta(),
                sizes,
            )
            .map_err(invalid)?;
            (inst, p)
        }
        (None, None) => {
            return Err(Failure::Usage(
                "one of --alpha or --profile-file is required".into(),
            ))
        }
    };
    let orig = |i: usize| instance.original_ids()[i];

    let (assignment, c_star, n_star, per_vm_time, extra) = match &straggler {
        None => match assign_loads(&instance, &profile) {
            Ok((a, t, _)) => (a, t.c_star, t.n_star, t.per_vm_time, Value::Null),
            Err(OptimizerError::Unbalanced { .. }) if profile.mode() == ProfileMode::Exact => {
                let bound = subset_bound(instance.speeds(), &profile);
                let flow = TransportProblem::new(instance.speeds(), &profile, 1)
                    .and_then(|p| p.solve())
                    .map_err(invalid)?;
                let times = flow.assignment.per_vm_times(instance.speeds());
                (
                    flow.assignment,
                    bound.time,
                    bound.bottleneck.len(),
                    times,
                    Value::Null,
                )
            }
            Err(e) => return Err(invalid(e)),
        },
        Some(cfg) => {
            let out = redundant_assign(&instance, &profile, cfg).map_err(invalid)?;
            let excluded: Vec<Vec<usize>> = out.excluded.iter().map(|&c| labels(c, orig)).collect();
            let extra = json!({ "s": cfg.s, "m": cfg.m, "excludedClasses": excluded });
            (
                out.assignment,
                out.time.c_star,
                out.time.n_star,
                out.time.per_vm_time,
                extra,
            )
        }
    };

    let mut doc = json!({
        "schemaVersion": SCHEMA_VERSION,
        "cStar": num(&c_star),
        "nStar": n_star,
        "perVmTime": instance.to_original_order(&per_vm_time).iter().enumerate()
            .map(|(i, t)| json!({ "vm": i + 1, "time": num(t) })).collect::<Vec<_>>(),
        "assignment": assignment_json(&assignment, orig),
    });
    if !extra.is_null() {
        doc["straggler"] = extra;
    }
    if oracle {
        let r = assignment.redundancy();
        let scoped = ClassProfile::new(
            profile.mode(),
            profile.num_vms(),
            profile.alpha().cloned(),
            profile.beta().clone(),
            ClassMask::all(profile.num_vms())
                .map(|c| {
                    if c.len() >= r {
                        profile.size(c).clone()
                    } else {
                        Ratio::from_integer(0.into())
                    }
                })
                .collect(),
        )
        .map_err(invalid)?;
        let reference = lp_oracle(&instance, &scoped, r).map_err(invalid)?;
        let agrees = reference == c_star;
        doc["oracle"] = json!({ "cStar": num(&reference), "agrees": agrees });
        if !agrees {
            emit(&pretty(&doc));
            return Err(Failure::Oracle(format!(
                "solver gives {} but the oracle gives {}",
                ratio::to_exact_string(&c_star),
                ratio::to_exact_string(&reference)
            )));
        }
    }
    Ok(pretty(&doc))
}

fn assignment_json(a: &LoadAssignment, orig: impl Fn(usize) -> usize + Copy) -> Value {
    let mut rows: Vec<(usize, Vec<usize>, Value)> = a
        .entries()
        .map(|(vm, class, share)| (orig(vm) + 1, labels(class, orig), num(share)))
        .collect();
    rows.iter_mut().for_each(|r| r.1.sort_unstable());
    rows.sort_by(|x, y| (x.0, &x.1).cmp(&(y.0, &y.1)));
    json!({
        "redundancy": a.redundancy(),
        "shares": rows.into_iter()
            .map(|(vm, class, share)| json!({ "vm": vm, "class": class, "share": share }))
            .collect::<Vec<_>>(),
    })
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

fn simulate(scenario: &PathBuf, out: &PathBuf) -> Result<String, Failure> {
    let text = std::fs::read_to_string(scenario)
        .map_err(|e| invalid(format!("cannot read {}: {e}", scenario.display())))?;
    let timeline = simulator::load_timeline(&text).map_err(invalid)?;
    let reports = simulator::run_scenario(&timeline).map_err(invalid)?;
    let csv = reports_to_csv(&reports).map_err(invalid)?;
    let json_text = reports_to_json(&reports, timeline.mode);
    std::fs::create_dir_all(out)
        .map_err(|e| invalid(format!("cannot create {}: {e}", out.display())))?;
    let csv_path = out.join("steps.csv");
    let json_path = out.join("steps.json");
    for (path, body) in [(&csv_path, &csv), (&json_path, &json_text)] {
        std::fs::write(path, body)
            .map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(pretty(&json!({
        "schemaVersion": SCHEMA_VERSION,
        "steps": reports.len(),
        "csv": csv_path.display().to_string(),
        "json": json_path.display().to_string(),
    })))
}
