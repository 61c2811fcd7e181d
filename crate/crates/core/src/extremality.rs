//! Extremality certificates for CP maps with fixed normalization.
//!
//! A map `Φ ∈ CP_P` with minimal dilation `(M, π, J)` is extremal iff the
//! compression `E ↦ J† E J` is injective on the commutant `π(A)'`. In Kraus
//! coordinates the commutant elements are block tuples `D_x` and
//!
//! ```text
//! J† E J = Σ_x Σ_{jk} (D_x)_{jk} K_{x,j}† K_{x,k},
//! ```
//!
//! so extremality reduces to the kernel of the matrix whose columns are the
//! flattened products `K_{x,j}† K_{x,k}` (indices within one outcome). A
//! nontrivial kernel vector, Hermitized and normalized to operator norm one,
//! is a witness `E` which splits the map as `Φ = ½Φ_+ + ½Φ_-` with
//! `Φ_±(a) = J† π(a)(1 ± E) J`.

use crate::cpmap::{self, CpError, HybridCpMap};
use crate::dilation::KrausDilation;
use crate::matcore::{self, C64, ComplexMatrix, Tolerances};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Extremal,
    NotExtremal,
}

/// Numeric diagnostics of the kernel test.
#[derive(Debug, Clone, Copy)]
pub struct KernelNumerics {
    /// Smallest singular value of the compression map on the commutant.
    pub smallest_singular: f64,
    /// Decision threshold `rank_tol * largest singular value`.
    pub threshold: f64,
    /// `‖J† E J‖_F` of the returned witness (zero for extremal maps).
    pub kernel_residual: f64,
}

#[derive(Debug, Clone)]
pub struct ExtremalityCertificate {
    pub verdict: Verdict,
    /// Commutant blocks `D_x` of the witness, Hermitian with operator norm 1.
    pub witness: Option<Vec<ComplexMatrix>>,
    /// `(Φ_+, Φ_-)` with `Φ = ½Φ_+ + ½Φ_-`, both in `CP_P`.
    pub decomposition: Option<(HybridCpMap, HybridCpMap)>,
    pub numerics: KernelNumerics,
    /// Set when the smallest singular value is within a factor 10 of the
    /// threshold, i.e. the verdict is numerically fragile.
    pub marginal_numerics: bool,
}

impl ExtremalityCertificate {
    pub fn is_extremal(&self) -> bool {
        self.verdict == Verdict::Extremal
    }

    pub fn to_json(&self) -> Value {
        let mut obj = json!({
            "verdict": match self.verdict {
                Verdict::Extremal => "extremal",
                Verdict::NotExtremal => "not_extremal",
            },
            "smallest_singular": self.numerics.smallest_singular,
            "threshold": self.numerics.threshold,
            "kernel_residual": self.numerics.kernel_residual,
            "marginal_numerics": self.marginal_numerics,
        });
        if let Some(w) = &self.witness {
            obj["witness_blocks"] = Value::Array(
                w.iter().map(cpmap::json::matrix_to_value).collect(),
            );
        }
        if let Some((plus, minus)) = &self.decomposition {
            obj["decomposition"] = json!({
                "plus": cpmap::json::map_to_value(plus),
                "minus": cpmap::json::map_to_value(minus),
            });
        }
        obj
    }
}

fn kraus_columns(family: &[ComplexMatrix]) -> ComplexMatrix {
    let qh = family.first().map(|k| k.rows * k.cols).unwrap_or(0);
    ComplexMatrix::from_fn(qh, family.len(), |i, j| family[j].flatten_rows()[i].conj())
}

/// The Theorem-4 kernel test, uniform over states, POVMs, channels and
/// instruments.
pub fn is_extremal(map: &HybridCpMap, tol: &Tolerances) -> Result<ExtremalityCertificate, CpError> {
    let report = map.validate(tol);
    if !report.is_valid() {
        return Err(CpError::Invalid(format!(
            "map fails validation: {:?}",
            report.violations
        )));
    }
    let dil = KrausDilation::minimal(map, tol)?;
    let h = map.out_dim();
    let ranks = dil.ranks();
    let n_cols: usize = ranks.iter().map(|&r| r * r).sum();
    if n_cols == 0 {
        return Err(CpError::Invalid("map has empty dilation".into()));
    }

    // columns: flatten(K_{x,j}† K_{x,k}), enumerated x, then j, then k
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(n_cols);
    for family in dil.kraus() {
        for j in 0..family.len() {
            for k in 0..family.len() {
                cols.push(family[j].adjoint().mul(&family[k]).flatten_rows());
            }
        }
    }
    let l = ComplexMatrix::from_fn(h * h, n_cols, |i, c| cols[c][i]);
    let gram = l.adjoint().mul(&l);
    let (evals, vecs) = matcore::hermitian_eig(&gram, tol)?;
    let ev_max = evals.first().copied().unwrap_or(0.0).max(0.0);
    let sigma_min = evals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    // the rank cut lives on Gram eigenvalues (squared singular values):
    // eigenvalues of L†L near zero carry solver noise ~1e-15 * ev_max, so a
    // threshold on sigma itself would misread exact kernel directions
    let threshold = (tol.rank_tol * ev_max).sqrt();
    let extremal = sigma_min > threshold;
    let marginal_numerics = sigma_min >= threshold / 10.0 && sigma_min <= threshold * 10.0;
    let numerics = KernelNumerics {
        smallest_singular: sigma_min,
        threshold,
        kernel_residual: 0.0,
    };
    if extremal {
        return Ok(ExtremalityCertificate {
            verdict: Verdict::Extremal,
            witness: None,
            decomposition: None,
            numerics,
            marginal_numerics,
        });
    }

    // kernel vector -> commutant blocks
    let v = vecs.column(gram.rows - 1);
    let mut blocks = Vec::with_capacity(ranks.len());
    let mut off = 0;
    for &r in &ranks {
        blocks.push(ComplexMatrix::from_fn(r, r, |j, k| v[off + j * r + k]));
        off += r * r;
    }
    // Hermitize; if the Hermitian part vanishes use i(D† - D)
    let herm: Vec<ComplexMatrix> = blocks.iter().map(|d| d.hermitize()).collect();
    let hnorm: f64 = herm.iter().map(|d| d.frobenius_norm()).sum();
    let total: f64 = blocks.iter().map(|d| d.frobenius_norm()).sum();
    let witness_raw: Vec<ComplexMatrix> = if hnorm > 1e-8 * total.max(1.0) {
        herm
    } else {
        blocks
            .iter()
            .map(|d| d.adjoint().sub(d).scale(C64::new(0.0, 1.0)).hermitize())
            .collect()
    };
    // normalize to operator norm 1
    let mut op_norm = 0.0f64;
    for d in &witness_raw {
        if d.rows == 0 {
            continue;
        }
        let (ev, _) = matcore::hermitian_eig(d, tol)?;
        for &e in &ev {
            op_norm = op_norm.max(e.abs());
        }
    }
    if op_norm == 0.0 {
        return Err(CpError::Invalid(
            "degenerate kernel vector (zero witness)".into(),
        ));
    }
    let witness: Vec<ComplexMatrix> = witness_raw
        .iter()
        .map(|d| d.scale_re(1.0 / op_norm))
        .collect();

    // residual ‖J† E J‖_F
    let mut compressed = ComplexMatrix::zeros(h, h);
    for (family, d) in dil.kraus().iter().zip(&witness) {
        for j in 0..family.len() {
            for k in 0..family.len() {
                let c = d.get(j, k);
                if c.norm() == 0.0 {
                    continue;
                }
                compressed = compressed.add(&family[j].adjoint().mul(&family[k]).scale(c));
            }
        }
    }
    let kernel_residual = compressed.frobenius_norm();

    // decomposition Φ_± with Choi blocks V_x (I ± D_x) V_x†
    let side = map.quantum_in_dim() * h;
    let mut plus_blocks = Vec::with_capacity(ranks.len());
    let mut minus_blocks = Vec::with_capacity(ranks.len());
    for (family, d) in dil.kraus().iter().zip(&witness) {
        if family.is_empty() {
            plus_blocks.push(ComplexMatrix::zeros(side, side));
            minus_blocks.push(ComplexMatrix::zeros(side, side));
            continue;
        }
        let v = kraus_columns(family);
        let eye = ComplexMatrix::identity(d.rows);
        plus_blocks.push(v.mul(&eye.add(d)).mul(&v.adjoint()));
        minus_blocks.push(v.mul(&eye.sub(d)).mul(&v.adjoint()));
    }
    let plus = HybridCpMap::new(
        map.factors().to_vec(),
        h,
        map.normalization().clone(),
        plus_blocks,
    )?;
    let minus = HybridCpMap::new(
        map.factors().to_vec(),
        h,
        map.normalization().clone(),
        minus_blocks,
    )?;

    Ok(ExtremalityCertificate {
        verdict: Verdict::NotExtremal,
        witness: Some(witness),
        decomposition: Some((plus, minus)),
        numerics: KernelNumerics { kernel_residual, ..numerics },
        marginal_numerics,
    })
}

pub fn is_extremal_channel(
    map: &HybridCpMap,
    tol: &Tolerances,
) -> Result<ExtremalityCertificate, CpError> {
    if !map.is_channel() {
        return Err(CpError::Dimension("map is not a channel".into()));
    }
    is_extremal(map, tol)
}

pub fn is_extremal_povm(
    map: &HybridCpMap,
    tol: &Tolerances,
) -> Result<ExtremalityCertificate, CpError> {
    if !map.is_povm() {
        return Err(CpError::Dimension("map is not a POVM".into()));
    }
    is_extremal(map, tol)
}

pub fn is_extremal_instrument(
    map: &HybridCpMap,
    tol: &Tolerances,
) -> Result<ExtremalityCertificate, CpError> {
    if !map.is_instrument() {
        return Err(CpError::Dimension("map is not an instrument".into()));
    }
    is_extremal(map, tol)
}

/// A state is extremal iff it is a one-dimensional projection. Runs the
/// general kernel test on the state-as-map form; the verdict coincides with
/// `rank(ρ) = 1`.
pub fn is_pure_state(
    rho: &ComplexMatrix,
    tol: &Tolerances,
) -> Result<ExtremalityCertificate, CpError> {
    let state = cpmap::DensityMatrix::new(rho.clone(), tol)?;
    is_extremal(&cpmap::state_as_map(state.matrix())?, tol)
}

/// Tensor-extension test: builds `Φ̃_1(a) = Φ_1(a) ⊗ P_2` and runs the
/// extremality test on it. If `Φ_1` is extremal in `CP_{P_1}` the extension
/// is extremal in `CP_{P_1 ⊗ P_2}`.
pub fn extend_and_test(
    phi1: &HybridCpMap,
    p2: &ComplexMatrix,
    tol: &Tolerances,
) -> Result<ExtremalityCertificate, CpError> {
    let extended = extend(phi1, p2, tol)?;
    is_extremal(&extended, tol)
}

/// The extension `Φ̃_1(a) = Φ_1(a) ⊗ P_2` as a map with the enlarged output.
pub fn extend(
    phi1: &HybridCpMap,
    p2: &ComplexMatrix,
    tol: &Tolerances,
) -> Result<HybridCpMap, CpError> {
    if !p2.is_square() {
        return Err(CpError::Dimension("P_2 must be square".into()));
    }
    let min_eig = matcore::min_eigenvalue(&p2.hermitize(), tol)?;
    if p2.hermitian_asymmetry() > tol.herm_tol * p2.frobenius_norm().max(1.0)
        || min_eig < -tol.psd_tol
    {
        return Err(CpError::Invalid("P_2 must be PSD".into()));
    }
    // the constant map 1 ↦ P_2 on the trivial algebra
    let second = HybridCpMap::new(Vec::new(), p2.rows, p2.clone(), vec![p2.clone()])?;
    Ok(phi1.tensor(&second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmap::Factor;
    use crate::matcore::pauli;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_unitary(rng: &mut impl Rng, d: usize) -> ComplexMatrix {
        let g = ComplexMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let (_, u) = matcore::hermitian_eig(&g.add(&g.adjoint()), &Tolerances::default()).unwrap();
        u
    }

    #[test]
    fn unitary_channels_are_extremal() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 2..=4 {
            let u = random_unitary(&mut rng, d);
            let cert =
                is_extremal_channel(&cpmap::unitary_channel(&u).unwrap(), &tol).unwrap();
            assert!(cert.is_extremal(), "dim {d}");
            assert!(!cert.marginal_numerics);
        }
        let id = cpmap::identity_channel(3);
        assert!(is_extremal_channel(&id, &tol).unwrap().is_extremal());
    }

    #[test]
    fn dephasing_mixture_is_not_extremal() {
        let tol = Tolerances::default();
        let p: f64 = 0.3;
        let k0 = ComplexMatrix::identity(2).scale_re(p.sqrt());
        let k1 = pauli::sigma_z().scale_re((1.0 - p).sqrt());
        let ch = cpmap::channel_from_kraus(&[k0, k1]).unwrap();
        let cert = is_extremal_channel(&ch, &tol).unwrap();
        assert!(!cert.is_extremal());
        assert!(cert.numerics.kernel_residual < 1e-10);
        // the kernel is 2-dimensional here; the diagonal direction exists
        // because K_0†K_0 and K_1†K_1 are both proportional to the identity
        // (it rebalances the two unitary branches)
        let dil = KrausDilation::minimal(&ch, &tol).unwrap();
        let family = &dil.kraus()[0];
        let products = ComplexMatrix::from_fn(2, 4, |i, j| {
            family[i].adjoint().mul(&family[i]).flatten_rows()[j]
        });
        assert_eq!(matcore::rank(&products, &tol), 1);
        let (plus, minus) = cert.decomposition.as_ref().unwrap();
        let avg = plus.blocks()[0].add(&minus.blocks()[0]).scale_re(0.5);
        assert!(avg.dist(&ch.blocks()[0]) < 1e-10);
        assert!(plus.validate(&tol).is_valid());
        assert!(minus.validate(&tol).is_valid());
    }

    #[test]
    fn pvm_is_extremal_noisy_povm_is_not() {
        let tol = Tolerances::default();
        let p0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p1 = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let pvm = cpmap::povm(vec![p0, p1]).unwrap();
        assert!(is_extremal_povm(&pvm, &tol).unwrap().is_extremal());

        let t = 0.6;
        let e_plus = ComplexMatrix::identity(2)
            .add(&pauli::sigma_x().scale_re(t))
            .scale_re(0.5);
        let e_minus = ComplexMatrix::identity(2)
            .sub(&pauli::sigma_x().scale_re(t))
            .scale_re(0.5);
        let noisy = cpmap::povm(vec![e_plus, e_minus]).unwrap();
        let cert = is_extremal_povm(&noisy, &tol).unwrap();
        assert!(!cert.is_extremal());
        let (plus, minus) = cert.decomposition.as_ref().unwrap();
        assert!(plus.validate(&tol).is_valid());
        assert!(minus.validate(&tol).is_valid());
        for x in 0..2 {
            let avg = plus.blocks()[x].add(&minus.blocks()[x]).scale_re(0.5);
            assert!(avg.dist(&noisy.blocks()[x]) < 1e-10);
        }
    }

    #[test]
    fn trine_povm_is_extremal() {
        // three rank-1 effects (2/3)|φ_k⟩⟨φ_k| at 120° in the x-z plane;
        // rank-1 with linearly independent effects
        let tol = Tolerances::default();
        let mut effects = Vec::new();
        for k in 0..3 {
            let theta = 2.0 * std::f64::consts::PI * (k as f64) / 3.0;
            let v = [
                C64::new((theta / 2.0).cos(), 0.0),
                C64::new((theta / 2.0).sin(), 0.0),
            ];
            effects.push(ComplexMatrix::outer(&v, &v).scale_re(2.0 / 3.0));
        }
        let trine = cpmap::povm(effects).unwrap();
        assert!(trine.validate(&tol).is_valid());
        assert!(is_extremal_povm(&trine, &tol).unwrap().is_extremal());
    }

    #[test]
    fn lueders_pvm_instrument_is_extremal() {
        let tol = Tolerances::default();
        let p0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p1 = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let ins = cpmap::lueders_instrument(&[p0, p1], &tol).unwrap();
        assert!(is_extremal_instrument(&ins, &tol).unwrap().is_extremal());
    }

    #[test]
    fn unitary_branch_instruments_are_not_extremal() {
        // Γ(x, B) = p_x U_x† B U_x: the products K_x†K_x = p_x·I collide
        // across outcomes, so weight can be shifted between branches —
        // Γ'(x, B) = (p_x ± ε_x) U_x† B U_x stays a valid instrument. Such
        // instruments are never extremal for ≥ 2 outcomes, unitary branches
        // or not.
        let tol = Tolerances::default();
        let k0 = ComplexMatrix::identity(2).scale_re(0.3f64.sqrt());
        let k1 = pauli::sigma_x().scale_re(0.7f64.sqrt());
        let ins = cpmap::instrument_from_blocks(
            vec![
                cpmap::choi_from_kraus(std::slice::from_ref(&k0), 2, 2),
                cpmap::choi_from_kraus(std::slice::from_ref(&k1), 2, 2),
            ],
            2,
            2,
        )
        .unwrap();
        let cert = is_extremal_instrument(&ins, &tol).unwrap();
        assert!(!cert.is_extremal());
        let (plus, minus) = cert.decomposition.as_ref().unwrap();
        assert!(plus.validate(&tol).is_valid());
        assert!(minus.validate(&tol).is_valid());
        for x in 0..2 {
            let avg = plus.blocks()[x].add(&minus.blocks()[x]).scale_re(0.5);
            assert!(avg.dist(&ins.blocks()[x]) < 1e-10);
        }

        // and a fortiori with a duplicated branch
        let k0a = ComplexMatrix::identity(2).scale_re(0.2f64.sqrt());
        let k0b = ComplexMatrix::identity(2).scale_re(0.1f64.sqrt());
        let dup = cpmap::instrument_from_blocks(
            vec![
                cpmap::choi_from_kraus(std::slice::from_ref(&k0a), 2, 2),
                cpmap::choi_from_kraus(std::slice::from_ref(&k0b), 2, 2),
                cpmap::choi_from_kraus(std::slice::from_ref(&k1), 2, 2),
            ],
            2,
            2,
        )
        .unwrap();
        assert!(!is_extremal_instrument(&dup, &tol).unwrap().is_extremal());
    }

    #[test]
    fn single_outcome_instrument_agrees_with_channel() {
        let tol = Tolerances::default();
        let p: f64 = 0.4;
        let k0 = ComplexMatrix::identity(2).scale_re(p.sqrt());
        let k1 = pauli::sigma_z().scale_re((1.0 - p).sqrt());
        let choi = cpmap::choi_from_kraus(&[k0.clone(), k1.clone()], 2, 2);
        let as_channel = cpmap::channel_from_choi(choi.clone(), 2, 2).unwrap();
        let as_instrument = HybridCpMap::new(
            vec![Factor::Classical(1), Factor::Quantum(2)],
            2,
            ComplexMatrix::identity(2),
            vec![choi],
        )
        .unwrap();
        let c1 = is_extremal_channel(&as_channel, &tol).unwrap();
        let c2 = is_extremal_instrument(&as_instrument, &tol).unwrap();
        assert_eq!(c1.verdict, c2.verdict);
    }

    #[test]
    fn state_purity() {
        let tol = Tolerances::default();
        let pure = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(is_pure_state(&pure, &tol).unwrap().is_extremal());

        let mixed = ComplexMatrix::identity(2).scale_re(0.5);
        let cert = is_pure_state(&mixed, &tol).unwrap();
        assert!(!cert.is_extremal());
        let (plus, minus) = cert.decomposition.as_ref().unwrap();
        // decomposition pieces are valid state-shaped maps averaging back
        assert!(plus.validate(&tol).is_valid());
        assert!(minus.validate(&tol).is_valid());
        let avg = plus.blocks()[0].add(&minus.blocks()[0]).scale_re(0.5);
        assert!(avg.dist(&mixed.transpose()) < 1e-10);

        // random rank-2 state on C^3
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random_unitary(&mut rng, 3);
        let rho = matcore::reassemble(&[0.6, 0.4, 0.0], &u);
        assert!(!is_pure_state(&rho, &tol).unwrap().is_extremal());
    }

    #[test]
    fn invalid_state_is_rejected() {
        let tol = Tolerances::default();
        assert!(is_pure_state(&pauli::sigma_z(), &tol).is_err());
    }

    #[test]
    fn extension_preserves_extremality() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = random_unitary(&mut rng, 2);
        let ch = cpmap::unitary_channel(&u).unwrap();
        // P_2 = I_2
        let cert = extend_and_test(&ch, &ComplexMatrix::identity(2), &tol).unwrap();
        assert!(cert.is_extremal());
        // rank-1 projection
        let proj = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(extend_and_test(&ch, &proj, &tol).unwrap().is_extremal());
    }

    #[test]
    fn extension_of_mixture_stays_non_extremal() {
        let tol = Tolerances::default();
        let p: f64 = 0.5;
        let k0 = ComplexMatrix::identity(2).scale_re(p.sqrt());
        let k1 = pauli::sigma_x().scale_re((1.0 - p).sqrt());
        let ch = cpmap::channel_from_kraus(&[k0, k1]).unwrap();
        assert!(!is_extremal_channel(&ch, &tol).unwrap().is_extremal());
        let cert = extend_and_test(&ch, &ComplexMatrix::identity(2), &tol).unwrap();
        assert!(!cert.is_extremal());
    }

    #[test]
    fn mixtures_of_distinct_extremal_maps_are_detected() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..30 {
            let u = random_unitary(&mut rng, 2);
            let v = random_unitary(&mut rng, 2);
            let ca = cpmap::unitary_channel(&u).unwrap();
            let cb = cpmap::unitary_channel(&v).unwrap();
            if ca.blocks()[0].dist(&cb.blocks()[0]) < 1e-6 {
                continue;
            }
            let mix = HybridCpMap::new(
                ca.factors().to_vec(),
                2,
                ComplexMatrix::identity(2),
                vec![ca.blocks()[0].add(&cb.blocks()[0]).scale_re(0.5)],
            )
            .unwrap();
            let cert = is_extremal_channel(&mix, &tol).unwrap();
            assert!(!cert.is_extremal(), "trial {trial}");
            let (plus, minus) = cert.decomposition.as_ref().unwrap();
            assert!(plus.validate(&tol).is_valid(), "trial {trial}");
            assert!(minus.validate(&tol).is_valid(), "trial {trial}");
            let avg = plus.blocks()[0].add(&minus.blocks()[0]).scale_re(0.5);
            assert!(avg.dist(&mix.blocks()[0]) < 1e-9, "trial {trial}");
        }
    }

    #[test]
    fn certificate_serializes() {
        let tol = Tolerances::default();
        let mixed = ComplexMatrix::identity(2).scale_re(0.5);
        let cert = is_pure_state(&mixed, &tol).unwrap();
        let v = cert.to_json();
        assert_eq!(v["verdict"], "not_extremal");
        assert!(v["witness_blocks"].is_array());
        assert!(v["decomposition"]["plus"].is_object());
    }
}
