//! End-to-end acceptance checks. Each criterion prints exactly one
//! `criterion N: pass|FAIL` line (run with `--nocapture` to see them all).

use std::process::Command;
use std::time::Instant;

use cpkit::extremality::{self, Verdict};
use cpkit::joint::{self, SolverParams, Status, Uniqueness};
use cpkit::matcore::Tolerances;
use cpkit::verify;

fn line(n: u32, what: &str, pass: bool, detail: &str) -> bool {
    if pass {
        println!("criterion {n} ({what}): pass");
    } else {
        println!("criterion {n} ({what}): FAIL {detail}");
    }
    pass
}

/// Busch boundary: scan brackets 1/sqrt(2), t = 0.5 feasible with tight
/// marginals, t = 0.75 infeasible with a stabilized gap, within 60 s.
#[test]
fn criterion_1_busch_boundary() {
    let started = Instant::now();
    let tol = Tolerances::default();
    let params = SolverParams::default();

    let out = Command::new(env!("CARGO_BIN_EXE_cpkit"))
        .args(["busch-scan", "--bisect-tol", "1e-3"])
        .output()
        .expect("scan runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let boundary: f64 = stdout
        .lines()
        .find(|l| l.starts_with("# boundary,"))
        .and_then(|l| l.split(',').nth(1))
        .and_then(|s| s.parse().ok())
        .expect("boundary line in CSV output");
    let boundary_ok = (0.7061..=0.7081).contains(&boundary);

    let (m1, m2) = joint::busch_pair_xy(0.5).unwrap();
    let sol = joint::find_joint(&m1, &m2, &params, &tol).unwrap();
    let feasible_ok = match sol.joint() {
        Some(psi) => {
            let g1 = psi.marginal(0).unwrap();
            let g2 = psi.marginal(1).unwrap();
            let r = (0..2)
                .map(|x| {
                    g1.effect(&[x])
                        .unwrap()
                        .dist(&m1.effect(&[x]).unwrap())
                        .max(g2.effect(&[x]).unwrap().dist(&m2.effect(&[x]).unwrap()))
                })
                .fold(0.0f64, f64::max);
            r <= 1e-8
        }
        None => false,
    };

    let (m1, m2) = joint::busch_pair_xy(0.75).unwrap();
    let sol = joint::find_joint(&m1, &m2, &params, &tol).unwrap();
    let infeasible_ok = matches!(sol.status, Status::Infeasible { gap } if gap >= 1e-6);

    let in_time = started.elapsed().as_secs() <= 60;
    let pass = line(
        1,
        "busch boundary",
        boundary_ok && feasible_ok && infeasible_ok && in_time,
        &format!(
            "boundary {boundary} feasible_ok {feasible_ok} infeasible_ok {infeasible_ok} \
             elapsed {:?}",
            started.elapsed()
        ),
    );
    assert!(pass);
}

/// The t = 1/sqrt(2) showcase: feasible, unique, joint extremal, marginals
/// not extremal.
#[test]
fn criterion_2_boundary_showcase() {
    let started = Instant::now();
    let tol = Tolerances::default();
    let params = SolverParams::default();
    let t = 1.0 / 2f64.sqrt();
    let (m1, m2) = joint::busch_pair_xy(t).unwrap();
    let sol = joint::find_joint(&m1, &m2, &params, &tol).unwrap();
    let feasible = sol.is_feasible();
    let unique = matches!(sol.uniqueness, Uniqueness::Unique);
    let joint_extremal = sol
        .joint()
        .map(|psi| {
            extremality::is_extremal_povm(psi, &tol)
                .map(|c| c.verdict == Verdict::Extremal)
                .unwrap_or(false)
        })
        .unwrap_or(false);
    let marginals_not_extremal = [&m1, &m2].iter().all(|m| {
        extremality::is_extremal_povm(m, &tol)
            .map(|c| c.verdict == Verdict::NotExtremal)
            .unwrap_or(false)
    });
    let in_time = started.elapsed().as_secs() <= 30;
    let pass = line(
        2,
        "boundary showcase",
        feasible && unique && joint_extremal && marginals_not_extremal && in_time,
        &format!(
            "feasible {feasible} unique {unique} joint_extremal {joint_extremal} \
             marginals_not_extremal {marginals_not_extremal}"
        ),
    );
    assert!(pass);
}

/// Criteria 3-11 are the theorem property suites at their default instance
/// counts; the whole block must finish within 10 minutes.
#[test]
fn criteria_3_through_11_property_suites() {
    let started = Instant::now();
    let tol = Tolerances::default();
    let seed = 2024;
    let groups: &[(u32, &str, &[&str])] = &[
        (3, "one extremal marginal => unique", &["6a", "9e"]),
        (4, "both marginals extremal => joint extremal", &["6b"]),
        (5, "sharp pairs: product joint", &["6c", "9b", "9c", "9f"]),
        (6, "pure marginal state => product state", &["9a"]),
        (7, "identity marginal => constant partner", &["9d"]),
        (8, "tensor extension preserves extremality", &["10"]),
        (9, "Radon-Nikodym reconstruction", &["p3"]),
        (10, "dilation minimality", &["dilation"]),
        (11, "decomposition witnesses validate", &["11"]),
    ];
    let mut all = true;
    for &(n, what, tags) in groups {
        let mut failures: Vec<String> = Vec::new();
        for tag in tags {
            let rep = verify::run_suite(tag, seed, None, &tol).expect("known tag");
            if !rep.passed() {
                failures.extend(rep.failures.iter().map(|f| format!("[{tag}] {f}")));
            }
        }
        all &= line(n, what, failures.is_empty(), &failures.join("; "));
    }
    let in_time = started.elapsed().as_secs() <= 600;
    assert!(in_time, "suites took {:?}", started.elapsed());
    assert!(all);
}
