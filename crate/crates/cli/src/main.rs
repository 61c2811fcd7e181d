//! `cpkit` command-line interface: batch validation, dilation, extremality
//! certification, Radon-Nikodym derivatives, joint-map feasibility, and the
//! theorem verification suites, over the JSON matrix format of `cpkit`.
//!
//! Exit codes encode verdicts so scripts can consume the tool without
//! parsing: 0 = valid/extremal/feasible/all-passed, 2 = negative verdict,
//! 3 = numerically marginal or inconclusive, 1 = operational error.

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cpkit::cpmap::{json as mapjson, HybridCpMap};
use cpkit::dilation::{KrausDilation, NaimarkDilation};
use cpkit::extremality;
use cpkit::joint::{self, SolverParams, Status, Uniqueness};
use cpkit::matcore::Tolerances;
use cpkit::radon_nikodym::rn_derivative;
use cpkit::verify;

#[derive(Parser)]
#[command(name = "cpkit", about = "Completely positive map toolkit", version)]
struct Cli {
    /// Path to a JSON config file overriding tolerances, solver parameters,
    /// the RNG seed, and the output format.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the CP/normalization invariants of a map file.
    Validate { map: PathBuf },
    /// Minimal Stinespring dilation (per-outcome Kraus families); for POVMs
    /// also the Naimark dilation.
    Dilate { map: PathBuf },
    /// Extremality certificate. Exit 0 extremal, 2 not, 3 marginal numerics.
    Extremal { map: PathBuf },
    /// Marginal of a multi-factor map, keeping input factor `keep`.
    Marginal {
        map: PathBuf,
        #[arg(long)]
        keep: usize,
    },
    /// Radon-Nikodym derivative of `psi` with respect to `phi`.
    Rn { psi: PathBuf, phi: PathBuf },
    /// Joint-map feasibility for two marginals. Exit 0 feasible,
    /// 2 infeasible, 3 inconclusive.
    Joint { phi1: PathBuf, phi2: PathBuf },
    /// Product joint `a ⊗ b ↦ Φ1(a)Φ2(b)` of a sharp map with a commuting
    /// partner.
    ProductJoint { sharp: PathBuf, other: PathBuf },
    /// Bisect the compatibility boundary of the noisy x/y qubit pair.
    BuschScan {
        #[arg(long, default_value_t = 0.0)]
        t_min: f64,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        #[arg(long, default_value_t = 1e-3)]
        bisect_tol: f64,
    },
    /// Run the theorem property suites. Exit 0 iff every suite passes.
    VerifyTheorems {
        /// RNG seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Instances per suite (default: per-suite counts).
        #[arg(long)]
        instances: Option<usize>,
        /// Run only these tags (default: all).
        #[arg(long)]
        tag: Vec<String>,
    },
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CliConfig {
    #[serde(default)]
    tolerances: TolOverrides,
    #[serde(default)]
    solver: SolverOverrides,
    seed: Option<u64>,
    format: Option<String>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct TolOverrides {
    rank_tol: Option<f64>,
    psd_tol: Option<f64>,
    eq_tol: Option<f64>,
    herm_tol: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SolverOverrides {
    max_iter: Option<usize>,
    gap_tol: Option<f64>,
    gap_window: Option<usize>,
    probe_samples: Option<usize>,
    uniq_tol: Option<f64>,
}

#[derive(Clone, Copy, PartialEq)]
enum Format {
    Json,
    Csv,
    Text,
}

struct Settings {
    tol: Tolerances,
    params: SolverParams,
    format: Format,
}

impl Settings {
    fn load(path: Option<&Path>) -> Result<Self> {
        let cfg: CliConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => CliConfig::default(),
        };
        let mut tol = Tolerances::default();
        if let Some(x) = cfg.tolerances.rank_tol {
            tol.rank_tol = x;
        }
        if let Some(x) = cfg.tolerances.psd_tol {
            tol.psd_tol = x;
        }
        if let Some(x) = cfg.tolerances.eq_tol {
            tol.eq_tol = x;
        }
        if let Some(x) = cfg.tolerances.herm_tol {
            tol.herm_tol = x;
        }
        let mut params = SolverParams::default();
        if let Some(x) = cfg.solver.max_iter {
            params.max_iter = x;
        }
        if let Some(x) = cfg.solver.gap_tol {
            params.gap_tol = x;
        }
        if let Some(x) = cfg.solver.gap_window {
            params.gap_window = x;
        }
        if let Some(x) = cfg.solver.probe_samples {
            params.probe_samples = x;
        }
        if let Some(x) = cfg.solver.uniq_tol {
            params.uniq_tol = x;
        }
        if let Some(s) = cfg.seed {
            params.seed = s;
        }
        let format = match cfg.format.as_deref() {
            None | Some("text") => Format::Text,
            Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            Some(other) => return Err(anyhow!("unknown output format '{other}'")),
        };
        Ok(Settings { tol, params, format })
    }
}

fn load_map(path: &Path) -> Result<HybridCpMap> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let value: Value = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", path.display()))?;
    mapjson::map_from_value(&value)
        .with_context(|| format!("interpreting {}", path.display()))
}

fn print_json(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn matrices_to_value(ms: &[cpkit::matcore::ComplexMatrix]) -> Value {
    Value::Array(ms.iter().map(mapjson::matrix_to_value).collect())
}

fn run(cli: Cli) -> Result<u8> {
    let settings = Settings::load(cli.config.as_deref())?;
    let tol = &settings.tol;
    match cli.command {
        Command::Validate { map } => {
            let m = load_map(&map)?;
            let report = m.validate(tol);
            match settings.format {
                Format::Json => print_json(&serde_json::to_value(&report)?),
                _ => {
                    if report.is_valid() {
                        println!("valid");
                    } else {
                        for v in &report.violations {
                            println!("{}: {} (magnitude {:.3e})", v.kind, v.detail, v.magnitude);
                        }
                    }
                }
            }
            Ok(if report.is_valid() { 0 } else { 2 })
        }
        Command::Dilate { map } => {
            let m = load_map(&map)?;
            let dil = KrausDilation::minimal(&m, tol)?;
            let mut obj = json!({
                "quantum_in_dim": dil.quantum_in_dim(),
                "out_dim": dil.out_dim(),
                "classical_shape": dil.classical_shape(),
                "ranks": dil.ranks(),
                "kraus": Value::Array(dil.kraus().iter().map(|f| matrices_to_value(f)).collect()),
            });
            if m.is_povm() {
                let nai = NaimarkDilation::minimal(&m, tol)?;
                obj["naimark"] = json!({
                    "ranks": nai.ranks(),
                    "v_operator": mapjson::matrix_to_value(&nai.v_operator()),
                });
            }
            match settings.format {
                Format::Text => {
                    println!(
                        "dilation space dimension {} (ranks {:?})",
                        dil.total_dim(),
                        dil.ranks()
                    );
                }
                _ => print_json(&obj),
            }
            Ok(0)
        }
        Command::Extremal { map } => {
            let m = load_map(&map)?;
            let cert = extremality::is_extremal(&m, tol)?;
            match settings.format {
                Format::Text => {
                    println!(
                        "{}{}",
                        if cert.is_extremal() { "extremal" } else { "not_extremal" },
                        if cert.marginal_numerics { " (marginal numerics)" } else { "" }
                    );
                }
                _ => print_json(&cert.to_json()),
            }
            Ok(if cert.marginal_numerics {
                3
            } else if cert.is_extremal() {
                0
            } else {
                2
            })
        }
        Command::Marginal { map, keep } => {
            let m = load_map(&map)?;
            let marg = m.marginal(keep)?;
            print_json(&mapjson::map_to_value(&marg));
            Ok(0)
        }
        Command::Rn { psi, phi } => {
            let psi = load_map(&psi)?;
            let phi = load_map(&phi)?;
            let dil = KrausDilation::minimal(&phi, tol)?;
            let rn = rn_derivative(&psi, &phi, &dil, tol)?;
            print_json(&json!({
                "ranks": dil.ranks(),
                "blocks": matrices_to_value(rn.blocks()),
            }));
            Ok(0)
        }
        Command::Joint { phi1, phi2 } => {
            let phi1 = load_map(&phi1)?;
            let phi2 = load_map(&phi2)?;
            let sol = joint::find_joint(&phi1, &phi2, &settings.params, tol)?;
            match settings.format {
                Format::Text => match (&sol.status, &sol.uniqueness) {
                    (Status::Feasible(_), u) => println!(
                        "feasible ({}) after {} iterations",
                        match u {
                            Uniqueness::Unique => "unique",
                            Uniqueness::NonUnique { .. } => "non-unique",
                            Uniqueness::Unprobed => "unprobed",
                        },
                        sol.iterations
                    ),
                    (Status::Infeasible { gap }, _) => println!(
                        "infeasible (gap {:.3e}) after {} iterations",
                        gap, sol.iterations
                    ),
                    (Status::Inconclusive, _) => {
                        println!("inconclusive after {} iterations", sol.iterations)
                    }
                },
                _ => print_json(&sol.to_json()),
            }
            Ok(match sol.status {
                Status::Feasible(_) => 0,
                Status::Infeasible { .. } => 2,
                Status::Inconclusive => 3,
            })
        }
        Command::ProductJoint { sharp, other } => {
            let sharp = load_map(&sharp)?;
            let other = load_map(&other)?;
            let psi = joint::product_joint_sharp(&sharp, &other, tol)?;
            print_json(&mapjson::map_to_value(&psi));
            Ok(0)
        }
        Command::BuschScan { t_min, t_max, bisect_tol } => {
            let scan =
                joint::busch_boundary_scan(t_min, t_max, bisect_tol, &settings.params, tol)?;
            match settings.format {
                Format::Json => print_json(&json!({
                    "boundary": scan.boundary,
                    "bracket": [scan.bracket.0, scan.bracket.1],
                    "points": scan.points.iter().map(|p| json!({
                        "t": p.t,
                        "status": p.status,
                        "gap": p.gap,
                        "iterations": p.iterations,
                        "unique": p.unique,
                    })).collect::<Vec<_>>(),
                })),
                _ => {
                    print!("{}", scan.to_csv());
                    println!(
                        "# boundary,{:.6},bracket,{:.6},{:.6}",
                        scan.boundary, scan.bracket.0, scan.bracket.1
                    );
                }
            }
            Ok(0)
        }
        Command::VerifyTheorems { seed, instances, tag } => {
            let seed = seed.unwrap_or(settings.params.seed);
            let tags: Vec<String> = if tag.is_empty() {
                verify::TAGS.iter().map(|s| s.to_string()).collect()
            } else {
                tag
            };
            let mut reports = Vec::new();
            for t in &tags {
                let rep = verify::run_suite(t, seed, instances, tol)
                    .ok_or_else(|| anyhow!("unknown suite tag '{t}'"))?;
                reports.push(rep);
            }
            let all_passed = reports.iter().all(|r| r.passed());
            match settings.format {
                Format::Json => print_json(&Value::Array(
                    reports.iter().map(|r| r.to_json()).collect(),
                )),
                _ => {
                    for r in &reports {
                        if r.passed() {
                            println!("{} pass {}/{}", r.tag, r.instances, r.instances);
                        } else {
                            println!(
                                "{} FAIL {}/{}",
                                r.tag,
                                r.instances - r.failures.len(),
                                r.instances
                            );
                            for f in &r.failures {
                                println!("  {f}");
                            }
                        }
                    }
                }
            }
            Ok(if all_passed { 0 } else { 2 })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
