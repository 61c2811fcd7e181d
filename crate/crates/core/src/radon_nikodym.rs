//! Radon-Nikodym derivatives of CP maps, and subminimal dilations of
//! joint maps over one marginal's minimal dilation.
//!
//! If `Ψ ≤ Φ` (meaning `Φ - Ψ` is CP), there is a unique positive
//! contraction `E` in the commutant of `Φ`'s minimal dilation with
//! `Ψ(a) = J† π(a) E J`. In block coordinates `E = ⊕_x (I_q ⊗ D_x)` and the
//! Choi blocks factor as `C_x(Ψ) = V_x D_x V_x†`, where the columns of `V_x`
//! are the vectorized minimal Kraus operators of `Φ`. That linear system is
//! solved here through the Kraus Gram matrix, which minimality makes
//! invertible.
//!
//! For a joint map `Ψ` on two (or more) input factors, the same construction
//! applied to `b ↦ Ψ(· ⊗ b)` against the marginal `Ψ(· ⊗ 1)` yields the
//! subminimal dilation: a unital CP map `E` from the remaining factors into
//! the commutant with `Ψ(a ⊗ b) = J† π(a) E(b) J`.

use crate::cpmap::{self, CpError, Factor, HybridCpMap};
use crate::dilation::KrausDilation;
use crate::matcore::{self, C64, ComplexMatrix, Side, Tolerances};

/// Radon-Nikodym operator of `Ψ` with respect to `Φ`, in the commutant
/// coordinates of `Φ`'s minimal dilation: one `r_x × r_x` block per outcome.
#[derive(Debug, Clone)]
pub struct RnOperator {
    blocks: Vec<ComplexMatrix>,
    dilation: KrausDilation,
}

impl RnOperator {
    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn dilation(&self) -> &KrausDilation {
        &self.dilation
    }

    /// The full operator `⊕_x (I_q ⊗ D_x)` on the dilation space.
    pub fn as_operator(&self) -> ComplexMatrix {
        self.dilation
            .embed_commutant_element(&self.blocks)
            .expect("blocks match dilation ranks")
    }

    /// `Ψ(x, a) = J_x† (a ⊗ D_x) J_x`.
    pub fn evaluate(&self, x: usize, a: &ComplexMatrix) -> ComplexMatrix {
        let kraus = &self.dilation.kraus()[x];
        let d = &self.blocks[x];
        let h = self.dilation.out_dim();
        let mut acc = ComplexMatrix::zeros(h, h);
        for k in 0..kraus.len() {
            for j in 0..kraus.len() {
                let c = d.get(k, j);
                if c.norm() == 0.0 {
                    continue;
                }
                acc = acc.add(&kraus[k].adjoint().mul(a).mul(&kraus[j]).scale(c));
            }
        }
        acc
    }

    /// Rebuild `Ψ`'s Choi blocks: `C_x = V_x D_x V_x†`.
    pub fn reconstruct_choi(&self) -> Vec<ComplexMatrix> {
        self.dilation
            .kraus()
            .iter()
            .zip(&self.blocks)
            .map(|(family, d)| {
                let v = kraus_columns(family);
                v.mul(d).mul(&v.adjoint())
            })
            .collect()
    }

    /// Extremes of the block spectra (the invariant `0 ⪯ D ⪯ I` when `Ψ ≤ Φ`).
    pub fn eigenvalue_range(&self, tol: &Tolerances) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for d in &self.blocks {
            let (evals, _) = matcore::hermitian_eig(&d.hermitize(), tol).expect("hermitized");
            if let Some(&max) = evals.first() {
                hi = hi.max(max);
            }
            if let Some(&min) = evals.last() {
                lo = lo.min(min);
            }
        }
        (lo, hi)
    }
}

/// Matrix whose columns are `conj(flatten(K_j))`, so that
/// `C = Σ_j v_j v_j† = V V†`.
fn kraus_columns(family: &[ComplexMatrix]) -> ComplexMatrix {
    let qh = family.first().map(|k| k.rows * k.cols).unwrap_or(0);
    ComplexMatrix::from_fn(qh, family.len(), |i, j| family[j].flatten_rows()[i].conj())
}

/// Most negative eigenvalue over the Choi blocks of `Φ - Ψ` (order check).
fn order_gap(phi: &HybridCpMap, psi: &HybridCpMap, tol: &Tolerances) -> Result<f64, CpError> {
    let mut worst = f64::INFINITY;
    for (cp, cq) in phi.blocks().iter().zip(psi.blocks()) {
        let diff = cp.sub(cq).hermitize();
        worst = worst.min(matcore::min_eigenvalue(&diff, tol)?);
    }
    Ok(worst)
}

/// Radon-Nikodym derivative of `psi` with respect to `phi`, in the
/// coordinates of the given minimal dilation of `phi`.
pub fn rn_derivative(
    psi: &HybridCpMap,
    phi: &HybridCpMap,
    dil: &KrausDilation,
    tol: &Tolerances,
) -> Result<RnOperator, CpError> {
    if psi.classical_shape() != phi.classical_shape()
        || psi.quantum_in_dim() != phi.quantum_in_dim()
        || psi.out_dim() != phi.out_dim()
    {
        return Err(CpError::Dimension(
            "psi and phi must have the same signature".into(),
        ));
    }
    let scale = phi
        .blocks()
        .iter()
        .map(|b| b.frobenius_norm())
        .fold(1.0, f64::max);
    let gap = order_gap(phi, psi, tol)?;
    if gap < -tol.psd_tol * scale {
        return Err(CpError::OrderViolation { min_eig: gap });
    }
    rn_solve(psi, dil, tol)
}

/// The Gram-matrix solve alone, without the `Ψ ≤ Φ` order check. Valid
/// whenever each Choi block of `psi` is supported in the corresponding
/// block of the dilated map (e.g. `Ψ ≤ c·Φ` for some `c > 0`).
pub fn rn_solve(
    psi: &HybridCpMap,
    dil: &KrausDilation,
    tol: &Tolerances,
) -> Result<RnOperator, CpError> {
    let mut blocks = Vec::with_capacity(psi.n_blocks());
    for (family, c_psi) in dil.kraus().iter().zip(psi.blocks()) {
        let v = kraus_columns(family);
        let g = v.adjoint().mul(&v);
        let (gevals, _) = matcore::hermitian_eig(&g, tol)?;
        let gmax = gevals.first().copied().unwrap_or(0.0);
        if gevals.last().copied().unwrap_or(0.0) <= tol.rank_tol * gmax.max(1.0) {
            return Err(CpError::SingularGram);
        }
        // D = G⁻¹ V† C V G⁻¹
        let m = v.adjoint().mul(c_psi).mul(&v);
        let half = matcore::gram_solve(&g, &m, tol);
        let d = matcore::gram_solve(&g, &half.adjoint(), tol).adjoint();
        let back = v.mul(&d).mul(&v.adjoint());
        if back.dist(c_psi) > tol.eq_tol * c_psi.frobenius_norm().max(1.0) {
            return Err(CpError::Invalid(
                "psi is not supported on the dilation of phi".into(),
            ));
        }
        blocks.push(d);
    }
    Ok(RnOperator { blocks, dilation: dil.clone() })
}

// ---------------------------------------------------------------------------
// Subminimal dilation of a joint map.
// ---------------------------------------------------------------------------

/// Subminimal dilation `(M, π, E, J)` of a joint map `Ψ` over the minimal
/// dilation of its marginal `Φ = Ψ(· ⊗ 1)` on one factor.
///
/// The map `E` sends the remaining factors into the commutant
/// `⊕_x L(C^{r_x})`; it is stored as a [`HybridCpMap`] with output dimension
/// `R = Σ_x r_x` whose image is block diagonal. When the remaining part
/// spans several factors, its quantum operators are understood in the kron
/// order the factors appear in `Ψ`.
#[derive(Debug, Clone)]
pub struct SubminimalDilation {
    dilation: KrausDilation,
    e_map: HybridCpMap,
    ranks: Vec<usize>,
}

impl SubminimalDilation {
    pub fn dilation(&self) -> &KrausDilation {
        &self.dilation
    }

    /// The CP map `E` into `L(C^R)` (image block diagonal over outcomes).
    pub fn e_map(&self) -> &HybridCpMap {
        &self.e_map
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    /// Commutant blocks `D_x(δ_y ⊗ b)` of `E` at a rest-algebra element.
    pub fn commutant_blocks(
        &self,
        y: &[usize],
        b: &ComplexMatrix,
    ) -> Result<Vec<ComplexMatrix>, CpError> {
        let full = self.e_map.apply(y, b)?;
        let mut out = Vec::with_capacity(self.ranks.len());
        let mut off = 0;
        for &r in &self.ranks {
            out.push(ComplexMatrix::from_fn(r, r, |i, j| full.get(off + i, off + j)));
            off += r;
        }
        Ok(out)
    }

    /// Factorization `Ψ(δ_x ⊗ a ⊗ δ_y ⊗ b) = J_x† (a ⊗ D_x(δ_y ⊗ b)) J_x`.
    pub fn evaluate(
        &self,
        x: usize,
        a: &ComplexMatrix,
        y: &[usize],
        b: &ComplexMatrix,
    ) -> Result<ComplexMatrix, CpError> {
        let d = self.commutant_blocks(y, b)?;
        let rn = RnOperator { blocks: d, dilation: self.dilation.clone() };
        Ok(rn.evaluate(x, a))
    }
}

/// Compress `psi` at the rest factors: the map `a ↦ Ψ(a ⊗ (δ_y ⊗ b))`
/// keeping only `over_factor` as input.
fn pair_rest(
    psi: &HybridCpMap,
    over: usize,
    y: &[usize],
    b: &ComplexMatrix,
) -> Result<HybridCpMap, CpError> {
    let factors = psi.factors();
    let shape = psi.classical_shape();
    let qdims = psi.quantum_dims();
    let h = psi.out_dim();

    // classical position of the over factor (if classical) and of the rest
    let mut over_cpos = None;
    let mut rest_cpos = Vec::new();
    let mut over_qpos = None;
    let mut rest_qpos = Vec::new();
    let mut cpos = 0;
    let mut qpos = 0;
    for (i, f) in factors.iter().enumerate() {
        match f {
            Factor::Classical(_) => {
                if i == over {
                    over_cpos = Some(cpos);
                } else {
                    rest_cpos.push(cpos);
                }
                cpos += 1;
            }
            Factor::Quantum(_) => {
                if i == over {
                    over_qpos = Some(qpos);
                } else {
                    rest_qpos.push(qpos);
                }
                qpos += 1;
            }
        }
    }
    if y.len() != rest_cpos.len() {
        return Err(CpError::Index(format!(
            "rest classical index {y:?}, expected {} entries",
            rest_cpos.len()
        )));
    }
    let q_rest: usize = rest_qpos.iter().map(|&p| qdims[p]).product();
    if b.rows != q_rest || b.cols != q_rest {
        return Err(CpError::Dimension(format!(
            "rest operator is {}x{}, expected {q_rest}x{q_rest}",
            b.rows, b.cols
        )));
    }

    let over_shape: Vec<usize> = over_cpos
        .map(|p| vec![shape[p]])
        .unwrap_or_default();
    let n_over: usize = over_shape.iter().product::<usize>().max(1);
    let q_over = over_qpos.map(|p| qdims[p]).unwrap_or(1);

    // block tensor layout: quantum slots in order, then H. Bring the rest
    // quantum slots to the front.
    let mut dims = qdims.clone();
    dims.push(h);
    let mut perm: Vec<usize> = rest_qpos.clone();
    perm.extend((0..dims.len()).filter(|k| !rest_qpos.contains(k)));
    let tail = q_over * h;

    let mut blocks = Vec::with_capacity(n_over);
    for xo in 0..n_over {
        let mut acc = ComplexMatrix::zeros(q_over * h, q_over * h);
        // assemble the full classical index from (xo, y)
        let mut full = vec![0usize; shape.len()];
        if let Some(p) = over_cpos {
            full[p] = xo;
        }
        for (k, &p) in rest_cpos.iter().enumerate() {
            full[p] = y[k];
        }
        let block = psi.block(&full)?;
        if q_rest == 1 {
            acc = acc.add(&block.scale(b.get(0, 0)));
        } else {
            let permuted = block.permute_systems(&dims, &perm)?;
            let op = b.transpose().kron(&ComplexMatrix::identity(tail));
            acc = acc.add(&op.mul(&permuted).partial_trace((q_rest, tail), Side::First)?);
        }
        blocks.push(acc);
    }
    let over_factors = vec![psi.factors()[over]];
    let mut m = HybridCpMap::new(over_factors, h, ComplexMatrix::zeros(h, h), blocks)?;
    let p = m.total();
    m = HybridCpMap::new(vec![psi.factors()[over]], h, p, m.blocks().to_vec())?;
    Ok(m)
}

/// Positive parts of a Hermitian matrix: `(pos, neg)` with
/// `hmat = pos - neg`, both PSD.
fn positive_parts(hmat: &ComplexMatrix, tol: &Tolerances) -> (ComplexMatrix, ComplexMatrix) {
    let (evals, v) = matcore::hermitian_eig(hmat, tol).expect("hermitian");
    let pos: Vec<f64> = evals.iter().map(|&e| e.max(0.0)).collect();
    let neg: Vec<f64> = evals.iter().map(|&e| (-e).max(0.0)).collect();
    (matcore::reassemble(&pos, &v), matcore::reassemble(&neg, &v))
}

/// Subminimal dilation of `psi` over `over_factor` (Lemma-8 construction):
/// builds the minimal dilation of the marginal `Φ = Ψ(· ⊗ 1)` and, for each
/// basis element `b` of the remaining factors decomposed into positive parts
/// (`Ψ_b ≤ ‖b‖ Φ` for `b ≥ 0`), the Radon-Nikodym blocks of `Ψ_b`.
pub fn subminimal(
    psi: &HybridCpMap,
    over_factor: usize,
    tol: &Tolerances,
) -> Result<SubminimalDilation, CpError> {
    if psi.factors().len() < 2 {
        return Err(CpError::Dimension(
            "subminimal dilation requires at least two input factors".into(),
        ));
    }
    if over_factor >= psi.factors().len() {
        return Err(CpError::Index(format!(
            "factor {over_factor} of {}",
            psi.factors().len()
        )));
    }
    let marginal = psi.marginal(over_factor)?;
    let dil = KrausDilation::minimal(&marginal, tol)?;
    let ranks = dil.ranks();
    let big_r: usize = ranks.iter().sum();

    // rest algebra shape
    let rest_factors: Vec<Factor> = psi
        .factors()
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != over_factor)
        .map(|(_, f)| *f)
        .collect();
    let rest_shape: Vec<usize> = rest_factors
        .iter()
        .filter_map(|f| match f {
            Factor::Classical(n) => Some(*n),
            _ => None,
        })
        .collect();
    let q_rest: usize = rest_factors
        .iter()
        .filter_map(|f| match f {
            Factor::Quantum(d) => Some(*d),
            _ => None,
        })
        .product();
    let n_rest: usize = rest_shape.iter().product::<usize>().max(1);

    // RN blocks at a positive rest element, scaled so Ψ_b ≤ Φ
    let rn_at_positive = |y: &[usize], b: &ComplexMatrix| -> Result<Vec<ComplexMatrix>, CpError> {
        let (evals, _) = matcore::hermitian_eig(b, tol)?;
        let norm = evals.first().copied().unwrap_or(0.0).max(0.0);
        if norm == 0.0 {
            return Ok(ranks.iter().map(|&r| ComplexMatrix::zeros(r, r)).collect());
        }
        let scaled = b.scale_re(1.0 / norm);
        let psi_b = pair_rest(psi, over_factor, y, &scaled)?;
        let rn = rn_derivative(&psi_b, &marginal, &dil, tol)?;
        Ok(rn.blocks().iter().map(|d| d.scale_re(norm)).collect())
    };

    // blocks D_x(δ_y ⊗ E_ij) for every rest basis element, via the 4-part
    // positive decomposition of each matrix unit
    let embed = |blocks: &[ComplexMatrix]| -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(big_r, big_r);
        let mut off = 0;
        for d in blocks {
            for i in 0..d.rows {
                for j in 0..d.cols {
                    m.set(off + i, off + j, d.get(i, j));
                }
            }
            off += d.rows;
        }
        m
    };

    let mut e_blocks = Vec::with_capacity(n_rest);
    for yflat in 0..n_rest {
        let y = cpmap::multi_index(yflat, &rest_shape);
        // Choi of E restricted to this classical rest index
        let mut choi = ComplexMatrix::zeros(q_rest * big_r, q_rest * big_r);
        for i in 0..q_rest {
            for j in 0..q_rest {
                let mut unit = ComplexMatrix::zeros(q_rest, q_rest);
                unit.set(i, j, C64::new(1.0, 0.0));
                let img = if i == j {
                    embed(&rn_at_positive(&y, &unit)?)
                } else {
                    let hpart = unit.hermitize();
                    let apart = unit
                        .sub(&unit.adjoint())
                        .scale(C64::new(0.0, -0.5));
                    let (hp, hn) = positive_parts(&hpart, tol);
                    let (ap, an) = positive_parts(&apart, tol);
                    let dh = embed(&rn_at_positive(&y, &hp)?)
                        .sub(&embed(&rn_at_positive(&y, &hn)?));
                    let da = embed(&rn_at_positive(&y, &ap)?)
                        .sub(&embed(&rn_at_positive(&y, &an)?));
                    dh.add(&da.scale(C64::new(0.0, 1.0)))
                };
                for a in 0..big_r {
                    for c in 0..big_r {
                        choi.set(i * big_r + a, j * big_r + c, img.get(a, c));
                    }
                }
            }
        }
        e_blocks.push(choi);
    }

    let e_map = HybridCpMap::new(
        rest_factors,
        big_r,
        ComplexMatrix::identity(big_r),
        e_blocks,
    )?;
    Ok(SubminimalDilation { dilation: dil, e_map, ranks })
}
