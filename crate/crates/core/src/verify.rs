//! Seeded property suites checking the toolkit against the theorems it
//! implements (Thm. 6, Cor. 9, Prop. 10, Cor. 11, Prop. 3, dilation
//! minimality, witness soundness). Shared by the CLI `verify-theorems`
//! subcommand and the integration tests.

use crate::cpmap::{self, Factor, HybridCpMap};
use crate::dilation::KrausDilation;
use crate::extremality;
use crate::joint::{self, FeasibilityProblem, SolverParams, Status, Uniqueness};
use crate::matcore::{self, C64, ComplexMatrix, Side, Tolerances};
use crate::radon_nikodym;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// All suite tags, in report order.
pub const TAGS: &[&str] = &[
    "6a", "6b", "6c", "9a", "9b", "9c", "9d", "9e", "9f", "10", "11", "p3", "dilation",
];

#[derive(Debug, Clone)]
pub struct TagReport {
    pub tag: String,
    pub instances: usize,
    pub failures: Vec<String>,
}

impl TagReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_json(&self) -> Value {
        json!({
            "tag": self.tag,
            "instances": self.instances,
            "passed": self.passed(),
            "failures": self.failures,
        })
    }
}

/// Run one suite. `instances = None` uses the suite's default count.
pub fn run_suite(
    tag: &str,
    seed: u64,
    instances: Option<usize>,
    tol: &Tolerances,
) -> Option<TagReport> {
    let run = |default: usize, f: &dyn Fn(usize, u64, &Tolerances) -> Vec<String>| {
        let n = instances.unwrap_or(default);
        TagReport { tag: tag.to_string(), instances: n, failures: f(n, seed, tol) }
    };
    Some(match tag {
        "6a" => run(50, &suite_6a),
        "6b" => run(20, &suite_6b),
        "6c" => run(30, &suite_6c),
        "9a" => run(20, &suite_9a),
        "9b" => run(10, &suite_9b),
        "9c" => run(10, &suite_9c),
        "9d" => run(10, &suite_9d),
        "9e" => run(20, &suite_9e),
        "9f" => run(10, &suite_9f),
        "10" => run(50, &suite_10),
        "11" => run(30, &suite_11),
        "p3" => run(100, &suite_p3),
        "dilation" => run(100, &suite_dilation),
        _ => return None,
    })
}

/// Run all suites with default instance counts.
pub fn run_all(seed: u64, instances: Option<usize>, tol: &Tolerances) -> Vec<TagReport> {
    TAGS.iter()
        .map(|t| run_suite(t, seed, instances, tol).expect("known tag"))
        .collect()
}

// ---------------------------------------------------------------------------
// Seeded generators.
// ---------------------------------------------------------------------------

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    })
}

/// Unitary via Gram–Schmidt on a random complex matrix.
pub fn random_unitary(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
    loop {
        let g = random_matrix(rng, d, d);
        let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
        let mut ok = true;
        for j in 0..d {
            let mut v: Vec<C64> = (0..d).map(|i| g.get(i, j)).collect();
            for u in &cols {
                let ip: C64 = u.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                for i in 0..d {
                    v[i] -= ip * u[i];
                }
            }
            let norm: f64 = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-6 {
                ok = false;
                break;
            }
            for z in &mut v {
                *z /= norm;
            }
            cols.push(v);
        }
        if ok {
            return ComplexMatrix::from_fn(d, d, |i, j| cols[j][i]);
        }
    }
}

pub fn random_density(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
    let g = random_matrix(rng, d, d);
    let m = g.mul(&g.adjoint());
    m.scale_re(1.0 / m.trace().re)
}

pub fn random_pure_state(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
    let g = random_matrix(rng, d, 1);
    let n = g.frobenius_norm();
    g.scale_re(1.0 / n)
}

/// Rank-1 PVM from a random unitary's columns.
pub fn random_pvm(rng: &mut impl Rng, d: usize) -> HybridCpMap {
    let u = random_unitary(rng, d);
    let effects: Vec<ComplexMatrix> = (0..d)
        .map(|j| {
            let col = ComplexMatrix::from_fn(d, 1, |i, _| u.get(i, j));
            col.mul(&col.adjoint())
        })
        .collect();
    cpmap::povm(effects).expect("projectors resolve the identity")
}

/// Random POVM with `n` outcomes: PSD pieces renormalized by `S^{-1/2}`.
pub fn random_povm(rng: &mut impl Rng, d: usize, n: usize) -> HybridCpMap {
    let pieces: Vec<ComplexMatrix> = (0..n)
        .map(|_| {
            let g = random_matrix(rng, d, d);
            g.mul(&g.adjoint())
        })
        .collect();
    let mut s = ComplexMatrix::zeros(d, d);
    for p in &pieces {
        s = s.add(p);
    }
    let tol = Tolerances::default();
    let si = matcore::sqrt_psd(&matcore::pseudo_inverse(&s, &tol), &tol)
        .expect("sum of random PSD pieces is PD");
    let effects: Vec<ComplexMatrix> = pieces
        .iter()
        .map(|p| si.mul(p).mul(&si).hermitize())
        .collect();
    cpmap::povm(effects).expect("renormalized effects sum to identity")
}

/// Random channel `L(C^q) → L(C^h)` from `r` Kraus operators normalized by
/// `S^{-1/2}`.
pub fn random_channel(rng: &mut impl Rng, q: usize, h: usize, r: usize) -> HybridCpMap {
    let kraus = random_kraus(rng, q, h, r);
    cpmap::channel_from_kraus(&kraus).expect("normalized Kraus family")
}

pub fn random_kraus(rng: &mut impl Rng, q: usize, h: usize, r: usize) -> Vec<ComplexMatrix> {
    let raw: Vec<ComplexMatrix> = (0..r).map(|_| random_matrix(rng, q, h)).collect();
    let mut s = ComplexMatrix::zeros(h, h);
    for k in &raw {
        s = s.add(&k.adjoint().mul(k));
    }
    let tol = Tolerances::default();
    let si = matcore::sqrt_psd(&matcore::pseudo_inverse(&s, &tol), &tol)
        .expect("Kraus Gram sum is PD");
    raw.iter().map(|k| k.mul(&si)).collect()
}

/// The trine POVM on a qubit: effects `(2/3)|φ_k⟩⟨φ_k|` at 120° spacing.
pub fn trine_povm() -> HybridCpMap {
    let effects: Vec<ComplexMatrix> = (0..3)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * k as f64 / 3.0;
            let v = ComplexMatrix::from_real(2, 1, &[(th / 2.0).cos(), (th / 2.0).sin()]);
            v.mul(&v.adjoint()).scale_re(2.0 / 3.0)
        })
        .collect();
    cpmap::povm(effects).expect("trine resolves the identity")
}

/// Pinch a POVM through a PVM: `N_y = Σ_x P_x R_y P_x` (commutes with the
/// PVM by construction).
pub fn pinched_povm(pvm: &HybridCpMap, raw: &HybridCpMap) -> HybridCpMap {
    let d = pvm.out_dim();
    let effects: Vec<ComplexMatrix> = raw
        .blocks()
        .iter()
        .map(|r| {
            let mut acc = ComplexMatrix::zeros(d, d);
            for p in pvm.blocks() {
                acc = acc.add(&p.mul(r).mul(p));
            }
            acc.hermitize()
        })
        .collect();
    cpmap::povm(effects).expect("pinching preserves normalization")
}

/// Heisenberg trash channel `b ↦ tr(σ b)·1_h`.
pub fn trash_channel(sigma: &ComplexMatrix, h: usize) -> HybridCpMap {
    let q = sigma.rows;
    let choi = cpmap::choi_from_action(q, h, |e| {
        ComplexMatrix::identity(h).scale(sigma.mul(e).trace())
    });
    cpmap::channel_from_choi(choi, q, h).expect("trash channel is CP")
}

/// Pinching channel `B ↦ Σ_x P_x B P_x` of a PVM.
pub fn pinching_channel(pvm: &HybridCpMap) -> HybridCpMap {
    cpmap::channel_from_kraus(pvm.blocks()).expect("projector Kraus family")
}

/// Post-processing joint `G(x,y) = p(y|x)·M_x` of a POVM through a random
/// stochastic kernel.
pub fn post_processing_joint(
    rng: &mut impl Rng,
    povm: &HybridCpMap,
    n_out: usize,
) -> HybridCpMap {
    let n_in = povm.blocks().len();
    let kernel: Vec<Vec<f64>> = (0..n_in)
        .map(|_| {
            let raw: Vec<f64> = (0..n_out).map(|_| rng.gen::<f64>() + 0.05).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        })
        .collect();
    let mut blocks = Vec::with_capacity(n_in * n_out);
    for (x, m) in povm.blocks().iter().enumerate() {
        for y in 0..n_out {
            blocks.push(m.scale_re(kernel[x][y]));
        }
    }
    HybridCpMap::new(
        vec![Factor::Classical(n_in), Factor::Classical(n_out)],
        povm.out_dim(),
        povm.normalization().clone(),
        blocks,
    )
    .expect("post-processing preserves shape")
}

/// A random certified-extremal channel (retries until the certificate holds).
pub fn random_extremal_channel(rng: &mut impl Rng, q: usize, h: usize) -> HybridCpMap {
    let tol = Tolerances::default();
    loop {
        let r = rng.gen_range(1..=2usize.min(h));
        let ch = random_channel(rng, q, h, r);
        if let Ok(cert) = extremality::is_extremal(&ch, &tol) {
            if cert.is_extremal() {
                return ch;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Suite helpers.
// ---------------------------------------------------------------------------

fn probe(
    phi1: &HybridCpMap,
    phi2: &HybridCpMap,
    psi: &HybridCpMap,
    seed: u64,
    tol: &Tolerances,
) -> Result<Uniqueness, String> {
    let params = SolverParams { seed, ..SolverParams::default() };
    let prob = FeasibilityProblem::from_marginals(phi1, phi2)
        .map_err(|e| format!("problem setup: {e}"))?;
    Ok(prob.probe_uniqueness(psi, &params, tol))
}

fn expect_unique(
    phi1: &HybridCpMap,
    phi2: &HybridCpMap,
    psi: &HybridCpMap,
    seed: u64,
    tol: &Tolerances,
    ctx: &str,
) -> Result<(), String> {
    match probe(phi1, phi2, psi, seed, tol)? {
        Uniqueness::Unique => Ok(()),
        Uniqueness::NonUnique { step, .. } => {
            Err(format!("{ctx}: joint not unique (kernel step {step:.3e})"))
        }
        Uniqueness::Unprobed => Err(format!("{ctx}: probe did not run")),
    }
}

fn marginals_match(psi: &HybridCpMap, phi1: &HybridCpMap, phi2: &HybridCpMap) -> f64 {
    let m1 = psi.marginal(0).expect("two factors");
    let m2 = psi.marginal(1).expect("two factors");
    let d1 = m1
        .blocks()
        .iter()
        .zip(phi1.blocks())
        .map(|(a, b)| a.dist(b))
        .fold(0.0f64, f64::max);
    let d2 = m2
        .blocks()
        .iter()
        .zip(phi2.blocks())
        .map(|(a, b)| a.dist(b))
        .fold(0.0f64, f64::max);
    d1.max(d2)
}

// ---------------------------------------------------------------------------
// Thm. 6a: one extremal marginal + feasible joint ⇒ unique joint.
// ---------------------------------------------------------------------------

fn suite_6a(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            match i % 3 {
                0 => {
                    // PVM (extremal) with a pinched random POVM
                    let d = 2 + i % 2;
                    let pvm = random_pvm(&mut rng, d);
                    let raw = random_povm(&mut rng, d, 2 + i % 2);
                    let other = pinched_povm(&pvm, &raw);
                    let psi = joint::product_joint_sharp(&pvm, &other, tol)
                        .map_err(|e| format!("product joint: {e}"))?;
                    let cert = extremality::is_extremal(&pvm, tol)
                        .map_err(|e| format!("certificate: {e}"))?;
                    if !cert.is_extremal() {
                        return Err("PVM not certified extremal".into());
                    }
                    expect_unique(&pvm, &other, &psi, seed + i as u64, tol, "PVM x pinched POVM")
                }
                1 => {
                    // unitary channel (extremal) with a trash channel
                    let d = 2 + i % 2;
                    let u = random_unitary(&mut rng, d);
                    let ch = cpmap::unitary_channel(&u).map_err(|e| e.to_string())?;
                    let sigma = random_density(&mut rng, 2);
                    let trash = trash_channel(&sigma, d);
                    let psi = joint::product_joint_sharp(&ch, &trash, tol)
                        .map_err(|e| format!("product joint: {e}"))?;
                    let cert = extremality::is_extremal(&ch, tol)
                        .map_err(|e| format!("certificate: {e}"))?;
                    if !cert.is_extremal() {
                        return Err("unitary channel not certified extremal".into());
                    }
                    expect_unique(&ch, &trash, &psi, seed + i as u64, tol, "unitary x trash")
                }
                _ => {
                    // trine POVM (extremal) with a classical post-processing
                    let trine = trine_povm();
                    let psi = post_processing_joint(&mut rng, &trine, 2 + i % 2);
                    let other = psi.marginal(1).map_err(|e| e.to_string())?;
                    let cert = extremality::is_extremal(&trine, tol)
                        .map_err(|e| format!("certificate: {e}"))?;
                    if !cert.is_extremal() {
                        return Err("trine not certified extremal".into());
                    }
                    expect_unique(&trine, &other, &psi, seed + i as u64, tol, "trine x post-processing")
                }
            }
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Thm. 6b: both marginals extremal ⇒ the (unique) joint is extremal.
// ---------------------------------------------------------------------------

fn suite_6b(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6b);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let (phi1, phi2) = match i % 3 {
                0 => {
                    // two coarse-grainings of one PVM basis (commuting PVMs)
                    let d = 3;
                    let u = random_unitary(&mut rng, d);
                    let proj = |j: usize| {
                        let col = ComplexMatrix::from_fn(d, 1, |r, _| u.get(r, j));
                        col.mul(&col.adjoint())
                    };
                    let m1 = cpmap::povm(vec![proj(0), proj(1).add(&proj(2))])
                        .map_err(|e| e.to_string())?;
                    let m2 = cpmap::povm(vec![proj(0).add(&proj(1)), proj(2)])
                        .map_err(|e| e.to_string())?;
                    (m1, m2)
                }
                1 => {
                    // unitary channel with a pure-state trash channel
                    let d = 2 + i % 2;
                    let u = random_unitary(&mut rng, d);
                    let ch = cpmap::unitary_channel(&u).map_err(|e| e.to_string())?;
                    let v = random_pure_state(&mut rng, 2);
                    let trash = trash_channel(&v.mul(&v.adjoint()), d);
                    (ch, trash)
                }
                _ => {
                    // PVM with a pure-state trash channel (the pinching
                    // channel would not do: B ↦ Σ P_x B P_x is a mixture of
                    // unitary channels, hence not extremal)
                    let d = 2 + i % 2;
                    let pvm = random_pvm(&mut rng, d);
                    let v = random_pure_state(&mut rng, 2);
                    let trash = trash_channel(&v.mul(&v.adjoint()), d);
                    (pvm, trash)
                }
            };
            for (m, name) in [(&phi1, "first"), (&phi2, "second")] {
                let cert = extremality::is_extremal(m, tol).map_err(|e| e.to_string())?;
                if !cert.is_extremal() {
                    return Err(format!("{name} marginal not certified extremal"));
                }
            }
            let psi = joint::product_joint_sharp(&phi1, &phi2, tol)
                .map_err(|e| format!("product joint: {e}"))?;
            let cert = extremality::is_extremal(&psi, tol).map_err(|e| e.to_string())?;
            if !cert.is_extremal() {
                return Err("joint of two extremal marginals not certified extremal".into());
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Thm. 6c: the product joint of a sharp marginal.
// ---------------------------------------------------------------------------

fn suite_6c(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c);
    let params = SolverParams { seed, ..SolverParams::default() };
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let d = 2 + i % 2;
            let pvm = random_pvm(&mut rng, d);
            let (phi1, phi2): (HybridCpMap, HybridCpMap) = match i % 2 {
                0 => {
                    let raw = random_povm(&mut rng, d, 2);
                    (pvm.clone(), pinched_povm(&pvm, &raw))
                }
                _ => (pvm.clone(), pinching_channel(&pvm)),
            };
            let psi = joint::product_joint_sharp(&phi1, &phi2, tol)
                .map_err(|e| format!("product joint: {e}"))?;
            let md = marginals_match(&psi, &phi1, &phi2);
            if md > 1e-8 {
                return Err(format!("marginal mismatch {md:.3e}"));
            }
            // blockwise commutators of the two ranges vanish
            let mut comm = 0.0f64;
            for a in phi1.blocks() {
                for (x, _) in phi2.blocks().iter().enumerate() {
                    let b = phi2
                        .effect(&cpmap::multi_index(x, &phi2.classical_shape()))
                        .map_err(|e| e.to_string())?;
                    comm = comm.max(a.mul(&b).sub(&b.mul(a)).frobenius_norm());
                }
            }
            if comm > 1e-8 {
                return Err(format!("range commutator {comm:.3e}"));
            }
            // PVM + channel pairs: Lüders form √M_x E(B) √M_x
            if phi2.is_channel() {
                let mut dev = 0.0f64;
                for (x, p) in phi1.blocks().iter().enumerate() {
                    for k in 0..d {
                        for l in 0..d {
                            let mut e = ComplexMatrix::zeros(d, d);
                            e.set(k, l, C64::new(1.0, 0.0));
                            let eb = phi2.apply(&[], &e).map_err(|e| e.to_string())?;
                            let got = psi.apply(&[x], &e).map_err(|e| e.to_string())?;
                            dev = dev.max(got.dist(&p.mul(&eb).mul(p)));
                        }
                    }
                }
                if dev > 1e-10 {
                    return Err(format!("Lüders form deviation {dev:.3e}"));
                }
            }
            // an independently found feasible joint coincides with the product
            let sol = joint::find_joint(&phi1, &phi2, &params, tol)
                .map_err(|e| format!("find_joint: {e}"))?;
            if let Status::Feasible(found) = &sol.status {
                let dist = found
                    .blocks()
                    .iter()
                    .zip(psi.blocks())
                    .map(|(a, b)| a.dist(b))
                    .fold(0.0f64, f64::max);
                if dist > 1e-6 {
                    return Err(format!("solver joint differs from product by {dist:.3e}"));
                }
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Cor. 9a: joint state with a pure marginal is a product state.
// ---------------------------------------------------------------------------

/// Wrap a density matrix on `C^{d1} ⊗ C^{d2}` as a two-factor joint map.
pub fn state_as_joint(rho: &ComplexMatrix, d1: usize, d2: usize) -> HybridCpMap {
    HybridCpMap::new(
        vec![Factor::Quantum(d1), Factor::Quantum(d2)],
        1,
        ComplexMatrix::identity(1),
        vec![rho.transpose()],
    )
    .expect("state shapes")
}

fn suite_9a(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9a);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let psi1 = random_pure_state(&mut rng, 2);
            let rho1 = psi1.mul(&psi1.adjoint());
            let both_pure = i % 4 == 0;
            let rho2 = if both_pure {
                let v = random_pure_state(&mut rng, 3);
                v.mul(&v.adjoint())
            } else {
                random_density(&mut rng, 3)
            };
            let rho = rho1.kron(&rho2);
            let jm = state_as_joint(&rho, 2, 3);
            let m1 = jm.marginal(0).map_err(|e| e.to_string())?;
            let m2 = jm.marginal(1).map_err(|e| e.to_string())?;
            // ρ = ρ_1 ⊗ ρ_2 with the computed marginals
            let r1 = m1.blocks()[0].transpose();
            let r2 = m2.blocks()[0].transpose();
            let dist = rho.dist(&r1.kron(&r2));
            if dist > 1e-8 {
                return Err(format!("not a product of its marginals: {dist:.3e}"));
            }
            expect_unique(&m1, &m2, &jm, seed + i as u64, tol, "pure-marginal state")?;
            if both_pure {
                let cert = extremality::is_pure_state(&rho, tol).map_err(|e| e.to_string())?;
                if !cert.is_extremal() {
                    return Err("product of pure marginals not certified pure".into());
                }
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Cor. 9b: joint observable with a sharp marginal is unique and equals
// M(X)N(Y); non-commuting sharp observables are incompatible.
// ---------------------------------------------------------------------------

fn suite_9b(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9b);
    let params = SolverParams { seed, ..SolverParams::default() };
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            if i % 3 == 2 {
                // non-commuting sharp pair: incompatible
                let (m1, m2) = joint::busch_pair_xy(1.0).map_err(|e| e.to_string())?;
                let sol = joint::find_joint(&m1, &m2, &params, tol)
                    .map_err(|e| e.to_string())?;
                return match sol.status {
                    Status::Infeasible { .. } => Ok(()),
                    other => Err(format!(
                        "sharp sigma_x/sigma_y pair not reported infeasible: {other:?}"
                    )),
                };
            }
            let d = 2 + i % 2;
            let pvm = random_pvm(&mut rng, d);
            let other = pinched_povm(&pvm, &random_povm(&mut rng, d, 2));
            let psi = joint::product_joint_sharp(&pvm, &other, tol)
                .map_err(|e| format!("product joint: {e}"))?;
            // J(x,y) = M_x N_y
            let mut dev = 0.0f64;
            for (x, m) in pvm.blocks().iter().enumerate() {
                for (y, nb) in other.blocks().iter().enumerate() {
                    let e = psi.effect(&[x, y]).map_err(|e| e.to_string())?;
                    dev = dev.max(e.dist(&m.mul(nb)));
                }
            }
            if dev > 1e-10 {
                return Err(format!("joint effects differ from M_x N_y by {dev:.3e}"));
            }
            expect_unique(&pvm, &other, &psi, seed + i as u64, tol, "sharp x POVM")
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Cor. 9c: an instrument with a sharp observable marginal is Γ(x,B) =
// M_x E(B), determined by its total channel.
// ---------------------------------------------------------------------------

fn suite_9c(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9c);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let d = 2 + i % 2;
            let pvm = random_pvm(&mut rng, d);
            let pinch = pinching_channel(&pvm);
            let gamma = joint::product_joint_sharp(&pvm, &pinch, tol)
                .map_err(|e| format!("product joint: {e}"))?;
            if !gamma.is_instrument() {
                return Err("joint of POVM and channel is not an instrument".into());
            }
            // Γ(x,B) = M_x E(B) with E the total channel marginal
            let total = gamma.marginal(1).map_err(|e| e.to_string())?;
            let mut dev = 0.0f64;
            for x in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut b = ComplexMatrix::zeros(d, d);
                        b.set(k, l, C64::new(1.0, 0.0));
                        let got = gamma.apply(&[x], &b).map_err(|e| e.to_string())?;
                        let eb = total.apply(&[], &b).map_err(|e| e.to_string())?;
                        dev = dev.max(got.dist(&pvm.blocks()[x].mul(&eb)));
                    }
                }
            }
            if dev > 1e-10 {
                return Err(format!("Γ(x,B) deviates from M_x E(B) by {dev:.3e}"));
            }
            // determined by E: the joint of the marginals is unique
            expect_unique(&pvm, &total, &gamma, seed + i as u64, tol, "sharp instrument")
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Cor. 9d: channels with identity first marginal have a constant second
// marginal (no cloning).
// ---------------------------------------------------------------------------

/// Project a Schrödinger map `T(C^d) → T(C^d ⊗ C^d)` (given as a
/// [`HybridCpMap`] with quantum input `d` and output `d²`) onto the set of
/// CP maps with identity first output marginal. Returns the projected map.
pub fn project_to_identity_marginal(
    f0: &HybridCpMap,
    params: &SolverParams,
    tol: &Tolerances,
) -> Result<HybridCpMap, String> {
    let d = f0.quantum_in_dim();
    let mut prob = FeasibilityProblem::new(
        vec![Factor::Quantum(d)],
        d * d,
        f0.normalization().clone(),
    );
    // Choi of tr_2 ∘ F must equal the Choi of the identity channel
    let id_choi = cpmap::choi_from_action(d, d, |e| e.clone());
    prob.add_constraint_from_fn(
        move |blocks| {
            let f = HybridCpMap::new(
                vec![Factor::Quantum(d)],
                d * d,
                ComplexMatrix::zeros(d * d, d * d),
                blocks.to_vec(),
            )
            .expect("problem shapes");
            vec![cpmap::choi_from_action(d, d, |e| {
                f.apply(&[], e)
                    .expect("basis in range")
                    .partial_trace((d, d), Side::Second)
                    .expect("bipartite output")
            })]
        },
        &[id_choi],
    );
    let start = prob.blocks_to_vec(f0.blocks());
    let sol = prob.solve_from(Some(&start), params, tol);
    match sol.status {
        Status::Feasible(f) => {
            let p = f.total();
            HybridCpMap::new(f.factors().to_vec(), d * d, p, f.blocks().to_vec())
                .map_err(|e| e.to_string())
        }
        other => Err(format!("projection did not converge: {other:?}")),
    }
}

fn suite_9d(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9d);
    let params = SolverParams { seed, ..SolverParams::default() };
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let d = 2;
            // random Schrödinger-direction CP map d -> d², then project
            let kraus = random_kraus(&mut rng, d, d * d, 2);
            let choi = cpmap::choi_from_kraus(&kraus, d, d * d);
            let f0 = HybridCpMap::new(
                vec![Factor::Quantum(d)],
                d * d,
                choi.partial_trace((d, d * d), Side::First)
                    .map_err(|e| e.to_string())?,
                vec![choi],
            )
            .map_err(|e| e.to_string())?;
            let f = project_to_identity_marginal(&f0, &params, tol)?;
            let report = joint::check_no_cloning(&f, 20, seed + i as u64, tol)
                .map_err(|e| format!("no-cloning check: {e}"))?;
            if report.max_deviation > 1e-6 {
                return Err(format!(
                    "second marginal varies by {:.3e}",
                    report.max_deviation
                ));
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Cor. 9e: extremal marginal observable ⇒ unique joint observable; both
// extremal ⇒ the joint observable is extremal.
// ---------------------------------------------------------------------------

fn suite_9e(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            if i % 2 == 0 {
                // one extremal marginal (trine) with a compatible partner
                let trine = trine_povm();
                let psi = post_processing_joint(&mut rng, &trine, 2);
                let other = psi.marginal(1).map_err(|e| e.to_string())?;
                expect_unique(&trine, &other, &psi, seed + i as u64, tol, "extremal observable")
            } else {
                // both marginals extremal PVM coarse-grainings
                let u = random_unitary(&mut rng, 3);
                let proj = |j: usize| {
                    let col = ComplexMatrix::from_fn(3, 1, |r, _| u.get(r, j));
                    col.mul(&col.adjoint())
                };
                let m1 = cpmap::povm(vec![proj(0), proj(1).add(&proj(2))])
                    .map_err(|e| e.to_string())?;
                let m2 = cpmap::povm(vec![proj(0).add(&proj(1)), proj(2)])
                    .map_err(|e| e.to_string())?;
                let psi = joint::product_joint_sharp(&m1, &m2, tol)
                    .map_err(|e| format!("product joint: {e}"))?;
                let cert = extremality::is_extremal(&psi, tol).map_err(|e| e.to_string())?;
                if !cert.is_extremal() {
                    return Err("joint of extremal observables not extremal".into());
                }
                expect_unique(&m1, &m2, &psi, seed + i as u64, tol, "both extremal")
            }
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Cor. 9f: instrument with extremal observable or channel part is unique;
// both extremal ⇒ the instrument is extremal.
// ---------------------------------------------------------------------------

fn suite_9f(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9f);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let d = 2 + i % 2;
            let pvm = random_pvm(&mut rng, d);
            if i % 2 == 0 {
                // one extremal part (the PVM): the joint instrument with its
                // pinching channel is unique
                let pinch = pinching_channel(&pvm);
                let gamma = joint::product_joint_sharp(&pvm, &pinch, tol)
                    .map_err(|e| format!("product joint: {e}"))?;
                return expect_unique(
                    &pvm,
                    &pinch,
                    &gamma,
                    seed + i as u64,
                    tol,
                    "extremal-observable instrument",
                );
            }
            // both parts extremal: PVM with a pure-state trash channel
            let v = random_pure_state(&mut rng, 2);
            let trash = trash_channel(&v.mul(&v.adjoint()), d);
            let gamma = joint::product_joint_sharp(&pvm, &trash, tol)
                .map_err(|e| format!("product joint: {e}"))?;
            for (m, name) in [(&pvm, "observable"), (&trash, "channel")] {
                let cert = extremality::is_extremal(m, tol).map_err(|e| e.to_string())?;
                if !cert.is_extremal() {
                    return Err(format!("{name} part not certified extremal"));
                }
            }
            let cert = extremality::is_extremal(&gamma, tol).map_err(|e| e.to_string())?;
            if !cert.is_extremal() {
                return Err("instrument with two extremal parts not extremal".into());
            }
            expect_unique(&pvm, &trash, &gamma, seed + i as u64, tol, "extremal-part instrument")
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Prop. 10: tensor extension by a PSD normalization preserves extremality.
// ---------------------------------------------------------------------------

fn suite_10(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x10);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let q = 2 + i % 2;
            let h = 2 + (i / 2) % 2;
            let ch = random_extremal_channel(&mut rng, q, h);
            let d2 = 1 + i % 3;
            let g = random_matrix(&mut rng, d2, d2);
            let p2 = g.mul(&g.adjoint()).hermitize();
            let cert = extremality::extend_and_test(&ch, &p2, tol)
                .map_err(|e| format!("extension: {e}"))?;
            if !cert.is_extremal() {
                return Err("extension of an extremal channel not certified extremal".into());
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Witness soundness: every not_extremal verdict carries a valid convex
// decomposition averaging back to the input.
// ---------------------------------------------------------------------------

fn suite_11(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x11);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            // random mixtures: never extremal
            let d = 2 + i % 2;
            let mixed = match i % 3 {
                0 => {
                    // mixture of two random POVMs
                    let a = random_povm(&mut rng, d, 2);
                    let b = random_povm(&mut rng, d, 2);
                    let blocks: Vec<ComplexMatrix> = a
                        .blocks()
                        .iter()
                        .zip(b.blocks())
                        .map(|(x, y)| x.add(y).scale_re(0.5))
                        .collect();
                    cpmap::povm(blocks).map_err(|e| e.to_string())?
                }
                1 => {
                    // mixture of two unitary channels
                    let u = random_unitary(&mut rng, d);
                    let v = random_unitary(&mut rng, d);
                    let cu = cpmap::unitary_channel(&u).map_err(|e| e.to_string())?;
                    let cv = cpmap::unitary_channel(&v).map_err(|e| e.to_string())?;
                    let choi = cu.blocks()[0].add(&cv.blocks()[0]).scale_re(0.5);
                    cpmap::channel_from_choi(choi, d, d).map_err(|e| e.to_string())?
                }
                _ => {
                    // mixture of two Lüders instruments
                    let a = random_povm(&mut rng, d, 2);
                    let b = random_povm(&mut rng, d, 2);
                    let ia = cpmap::lueders_instrument(&a.blocks().to_vec(), tol)
                        .map_err(|e| e.to_string())?;
                    let ib = cpmap::lueders_instrument(&b.blocks().to_vec(), tol)
                        .map_err(|e| e.to_string())?;
                    let blocks: Vec<ComplexMatrix> = ia
                        .blocks()
                        .iter()
                        .zip(ib.blocks())
                        .map(|(x, y)| x.add(y).scale_re(0.5))
                        .collect();
                    HybridCpMap::new(
                        ia.factors().to_vec(),
                        d,
                        ia.normalization().clone(),
                        blocks,
                    )
                    .map_err(|e| e.to_string())?
                }
            };
            let cert = extremality::is_extremal(&mixed, tol).map_err(|e| e.to_string())?;
            if cert.is_extremal() {
                return Err("nontrivial mixture certified extremal".into());
            }
            let (plus, minus) = cert
                .decomposition
                .as_ref()
                .ok_or("not_extremal verdict without a decomposition")?;
            for (half, name) in [(plus, "plus"), (minus, "minus")] {
                let report = half.validate(tol);
                if !report.is_valid() {
                    return Err(format!(
                        "{name} half fails validation: {:?}",
                        report.violations
                    ));
                }
            }
            let mut avg_dev = 0.0f64;
            for ((p, m), c) in plus.blocks().iter().zip(minus.blocks()).zip(mixed.blocks()) {
                avg_dev = avg_dev.max(p.add(m).scale_re(0.5).dist(c));
            }
            if avg_dev > 1e-8 {
                return Err(format!("decomposition average deviates by {avg_dev:.3e}"));
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Prop. 3 roundtrip: Ψ ≤ Φ recovers Ψ through the RN operator; basis
// permutations of the dilation leave tr(E) invariant.
// ---------------------------------------------------------------------------

fn suite_p3(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x93);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let d = 2 + i % 2;
            let phi = random_channel(&mut rng, d, d, 2);
            let dil = KrausDilation::minimal(&phi, tol).map_err(|e| e.to_string())?;
            // random PSD contraction in the commutant: D = ⊕_x (I ⊗ D_x)
            let ranks = dil.ranks().to_vec();
            let d_blocks: Vec<ComplexMatrix> = ranks
                .iter()
                .map(|&r| {
                    let g = random_matrix(&mut rng, r, r);
                    let m = g.mul(&g.adjoint());
                    let top = matcore::min_eigenvalue(&m.scale_re(-1.0), tol)
                        .map(|e| -e)
                        .unwrap_or(1.0)
                        .max(1e-12);
                    m.scale_re(1.0 / top)
                })
                .collect();
            // Ψ from the commutant element
            let n_blocks = phi.blocks().len();
            let q = phi.quantum_in_dim();
            let h = phi.out_dim();
            let mut blocks = Vec::with_capacity(n_blocks);
            for x in 0..n_blocks {
                let choi = cpmap::choi_from_action(q, h, |a| {
                    let mut acc = ComplexMatrix::zeros(h, h);
                    let kraus = &dil.kraus()[x];
                    for (j, kj) in kraus.iter().enumerate() {
                        for (k, kk) in kraus.iter().enumerate() {
                            acc = acc.add(
                                &kj.adjoint().mul(a).mul(kk).scale(d_blocks[x].get(j, k)),
                            );
                        }
                    }
                    acc
                });
                blocks.push(choi.hermitize());
            }
            let psi = HybridCpMap::new(
                phi.factors().to_vec(),
                phi.out_dim(),
                blocks.iter().fold(
                    ComplexMatrix::zeros(phi.out_dim(), phi.out_dim()),
                    |acc, b| {
                        acc.add(
                            &b.partial_trace((phi.quantum_in_dim(), phi.out_dim()), Side::First)
                                .expect("choi block"),
                        )
                    },
                ),
                blocks,
            )
            .map_err(|e| e.to_string())?;
            let rn = radon_nikodym::rn_derivative(&psi, &phi, &dil, tol)
                .map_err(|e| format!("rn_derivative: {e}"))?;
            let rec = rn.reconstruct_choi();
            let dist: f64 = rec
                .iter()
                .zip(psi.blocks())
                .map(|(a, b)| a.dist(b))
                .fold(0.0f64, f64::max);
            if dist > 1e-10 {
                return Err(format!("RN reconstruction error {dist:.3e}"));
            }
            // basis permutation of the dilation: unitary permutation within
            // each outcome's multiplicity space leaves tr(E) invariant
            let trace_before: C64 = rn.blocks().iter().map(|b| b.trace()).sum();
            let unitaries: Vec<ComplexMatrix> = ranks
                .iter()
                .map(|&r| {
                    // cyclic permutation matrix
                    ComplexMatrix::from_fn(r, r, |a, b| {
                        if (a + 1) % r == b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }
                    })
                })
                .collect();
            let dil2 = dil.transformed(&unitaries).map_err(|e| e.to_string())?;
            let rn2 = radon_nikodym::rn_derivative(&psi, &phi, &dil2, tol)
                .map_err(|e| format!("rn on permuted dilation: {e}"))?;
            let trace_after: C64 = rn2.blocks().iter().map(|b| b.trace()).sum();
            if (trace_before - trace_after).norm() > 1e-9 {
                return Err(format!(
                    "tr(E) not invariant under dilation basis permutation: {} vs {}",
                    trace_before.re, trace_after.re
                ));
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

// ---------------------------------------------------------------------------
// Dilation minimality: Kraus count equals Choi rank; reconstruction exact.
// ---------------------------------------------------------------------------

fn suite_dilation(n: usize, seed: u64, tol: &Tolerances) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd1);
    let mut failures = Vec::new();
    for i in 0..n {
        let result = (|| -> Result<(), String> {
            let q = 2 + i % 2;
            let h = 2 + (i / 2) % 2;
            let r = 1 + i % (q * h).min(3);
            let kraus = random_kraus(&mut rng, q, h, r);
            let choi = cpmap::choi_from_kraus(&kraus, q, h);
            let minimal = crate::dilation::minimal_kraus(&choi, q, h, tol)
                .map_err(|e| e.to_string())?;
            let rank = matcore::rank(&choi, tol);
            if minimal.len() != rank {
                return Err(format!(
                    "Kraus count {} differs from Choi rank {rank}",
                    minimal.len()
                ));
            }
            let rec = cpmap::choi_from_kraus(&minimal, q, h);
            let err = rec.dist(&choi);
            if err > 1e-10 {
                return Err(format!("Choi reconstruction error {err:.3e}"));
            }
            Ok(())
        })();
        if let Err(e) = result {
            failures.push(format!("instance {i}: {e}"));
        }
    }
    failures
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_smoke() {
        let tol = Tolerances::default();
        for tag in TAGS {
            let report = run_suite(tag, 42, Some(4), &tol).expect("known tag");
            assert!(
                report.passed(),
                "suite {tag} failed: {:?}",
                report.failures
            );
        }
    }

    #[test]
    fn unknown_tag_is_rejected() {
        let tol = Tolerances::default();
        assert!(run_suite("zz", 0, None, &tol).is_none());
    }

    #[test]
    fn deterministic_reports() {
        let tol = Tolerances::default();
        let a = run_suite("6a", 7, Some(6), &tol).unwrap();
        let b = run_suite("6a", 7, Some(6), &tol).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
