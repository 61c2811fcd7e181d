//! Unified block-Choi representation of CP maps on hybrid
//! classical/quantum input algebras.
//!
//! A [`HybridCpMap`] models a completely positive map
//! `Φ: A_1 ⊗ ... ⊗ A_k → L(H)` where each input factor is either a finite
//! classical algebra (`n` outcomes) or a full matrix algebra `L(C^d)`, with
//! prescribed normalization `Φ(1) = P`.
//!
//! Storage: for each classical multi-index `x` a Choi matrix `C_x` on
//! `K ⊗ H` (quantum input `K` slow, output `H` fast) such that
//!
//! ```text
//! Γ(x, B) = tr_K[(B^T ⊗ I_H) C_x],        C_x = Σ_ij E_ij ⊗ Γ(x, E_ij).
//! ```
//!
//! States (`Φ(A) = tr(ρA)`), POVMs, channels and instruments are all
//! special cases of this shape; thin views are provided for each.

use crate::matcore::{self, C64, ComplexMatrix, MatError, Side, Tolerances, ONE};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CpError {
    #[error(transparent)]
    Mat(#[from] MatError),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("classical index out of range: {0}")]
    Index(String),
    #[error("invalid map: {0}")]
    Invalid(String),
    #[error("order violation: Phi - Psi is not CP (most negative Choi eigenvalue {min_eig:.3e})")]
    OrderViolation { min_eig: f64 },
    #[error("singular Gram matrix: dilation is not minimal")]
    SingularGram,
    #[error("map is not sharp: {0}")]
    NotSharp(String),
    #[error("theorem violation: {0}")]
    TheoremViolation(String),
    #[error("precondition failed: {what} (residual {residual:.3e})")]
    Precondition { what: String, residual: f64 },
}

/// One input tensor factor of the hybrid algebra.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    /// Classical algebra with `n` outcomes.
    Classical(usize),
    /// Matrix algebra `L(C^d)`.
    Quantum(usize),
}

pub fn flat_index(multi: &[usize], shape: &[usize]) -> usize {
    multi.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

pub fn multi_index(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        out[k] = flat % shape[k];
        flat /= shape[k];
    }
    out
}

/// CP map on a hybrid input algebra, stored as Choi blocks.
#[derive(Debug, Clone)]
pub struct HybridCpMap {
    factors: Vec<Factor>,
    out_dim: usize,
    normalization: ComplexMatrix,
    blocks: Vec<ComplexMatrix>,
}

/// One invariant violation found by [`HybridCpMap::validate`].
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub kind: String,
    pub magnitude: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: &str, magnitude: f64, detail: String) {
        self.violations.push(Violation { kind: kind.to_string(), magnitude, detail });
    }
}

impl HybridCpMap {
    pub fn new(
        factors: Vec<Factor>,
        out_dim: usize,
        normalization: ComplexMatrix,
        blocks: Vec<ComplexMatrix>,
    ) -> Result<Self, CpError> {
        let map = HybridCpMap { factors, out_dim, normalization, blocks };
        map.check_shape()?;
        Ok(map)
    }

    fn check_shape(&self) -> Result<(), CpError> {
        let n_blocks: usize = self.classical_shape().iter().product();
        if self.blocks.len() != n_blocks {
            return Err(CpError::Dimension(format!(
                "expected {} Choi blocks, got {}",
                n_blocks,
                self.blocks.len()
            )));
        }
        let side = self.quantum_in_dim() * self.out_dim;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.rows != side || b.cols != side {
                return Err(CpError::Dimension(format!(
                    "block {} is {}x{}, expected {side}x{side}",
                    i, b.rows, b.cols
                )));
            }
        }
        if self.normalization.rows != self.out_dim || self.normalization.cols != self.out_dim {
            return Err(CpError::Dimension(format!(
                "normalization is {}x{}, expected {h}x{h}",
                self.normalization.rows,
                self.normalization.cols,
                h = self.out_dim
            )));
        }
        Ok(())
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn normalization(&self) -> &ComplexMatrix {
        &self.normalization
    }

    pub fn classical_shape(&self) -> Vec<usize> {
        self.factors
            .iter()
            .filter_map(|f| match f {
                Factor::Classical(n) => Some(*n),
                Factor::Quantum(_) => None,
            })
            .collect()
    }

    pub fn quantum_dims(&self) -> Vec<usize> {
        self.factors
            .iter()
            .filter_map(|f| match f {
                Factor::Quantum(d) => Some(*d),
                Factor::Classical(_) => None,
            })
            .collect()
    }

    pub fn quantum_in_dim(&self) -> usize {
        self.quantum_dims().iter().product()
    }

    pub fn blocks(&self) -> &[ComplexMatrix] {
        &self.blocks
    }

    pub fn block(&self, x: &[usize]) -> Result<&ComplexMatrix, CpError> {
        let shape = self.classical_shape();
        if x.len() != shape.len() || x.iter().zip(&shape).any(|(&i, &n)| i >= n) {
            return Err(CpError::Index(format!("{x:?} for shape {shape:?}")));
        }
        Ok(&self.blocks[flat_index(x, &shape)])
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Specialization predicates (spec: state / POVM / channel / instrument).
    pub fn is_state(&self) -> bool {
        self.out_dim == 1 && self.classical_shape().is_empty()
    }

    pub fn is_povm(&self) -> bool {
        self.quantum_in_dim() == 1 && !self.classical_shape().is_empty()
    }

    pub fn is_channel(&self) -> bool {
        self.classical_shape().is_empty() && self.quantum_in_dim() > 1
    }

    pub fn is_instrument(&self) -> bool {
        !self.classical_shape().is_empty() && self.quantum_in_dim() > 1
    }

    /// `Γ(x, b) = tr_K[(b^T ⊗ I_H) C_x]`.
    pub fn apply(&self, x: &[usize], b: &ComplexMatrix) -> Result<ComplexMatrix, CpError> {
        let q = self.quantum_in_dim();
        if b.rows != q || b.cols != q {
            return Err(CpError::Dimension(format!(
                "argument is {}x{}, quantum input dimension is {q}",
                b.rows, b.cols
            )));
        }
        let block = self.block(x)?;
        let op = b.transpose().kron(&ComplexMatrix::identity(self.out_dim));
        Ok(op.mul(block).partial_trace((q, self.out_dim), Side::First)?)
    }

    /// Effect operator `Γ(x, 1)` of a classical outcome.
    pub fn effect(&self, x: &[usize]) -> Result<ComplexMatrix, CpError> {
        let q = self.quantum_in_dim();
        self.apply(x, &ComplexMatrix::identity(q))
    }

    /// Sum of all blocks partial-traced over the quantum input: `Φ(1)`.
    pub fn total(&self) -> ComplexMatrix {
        let q = self.quantum_in_dim();
        let h = self.out_dim;
        let mut acc = ComplexMatrix::zeros(h, h);
        for b in &self.blocks {
            acc = acc.add(&b.partial_trace((q, h), Side::First).expect("shape checked"));
        }
        acc
    }

    pub fn validate(&self, tol: &Tolerances) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (i, b) in self.blocks.iter().enumerate() {
            let asym = b.hermitian_asymmetry();
            if asym > tol.herm_tol * b.frobenius_norm().max(1.0) {
                report.push("not_hermitian", asym, format!("block {i} is not Hermitian"));
                continue;
            }
            let min_eig = matcore::min_eigenvalue(&b.hermitize(), tol).expect("hermitized");
            if min_eig < -tol.psd_tol {
                report.push(
                    "cp_violation",
                    -min_eig,
                    format!("block {i} has eigenvalue {min_eig:.6e}"),
                );
            }
        }
        let total = self.total();
        let norm_gap = total.dist(&self.normalization);
        if norm_gap > tol.eq_tol {
            report.push(
                "normalization",
                norm_gap,
                format!("|Phi(1) - P|_F = {norm_gap:.6e}"),
            );
        }
        report
    }

    /// Tensor product `Ψ(a ⊗ b) = Φ_1(a) ⊗ Φ_2(b)` on `H_1 ⊗ H_2`.
    pub fn tensor(&self, other: &Self) -> Self {
        let q1 = self.quantum_in_dim();
        let q2 = other.quantum_in_dim();
        let h1 = self.out_dim;
        let h2 = other.out_dim;
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        let shape1 = self.classical_shape();
        let shape2 = other.classical_shape();
        let mut blocks = Vec::with_capacity(self.blocks.len() * other.blocks.len());
        let mut shape = shape1.clone();
        shape.extend_from_slice(&shape2);
        let n: usize = shape.iter().product::<usize>().max(1);
        for flat in 0..n {
            let multi = multi_index(flat, &shape);
            let (x1, x2) = multi.split_at(shape1.len());
            let b1 = &self.blocks[flat_index(x1, &shape1)];
            let b2 = &other.blocks[flat_index(x2, &shape2)];
            // K1 H1 K2 H2 -> K1 K2 H1 H2
            let kr = b1.kron(b2);
            let permuted = kr
                .permute_systems(&[q1, h1, q2, h2], &[0, 2, 1, 3])
                .expect("shapes agree");
            blocks.push(permuted);
        }
        HybridCpMap {
            factors,
            out_dim: h1 * h2,
            normalization: self.normalization.kron(&other.normalization),
            blocks,
        }
    }

    /// Drop a single input factor by plugging in its unit.
    pub fn drop_factor(&self, idx: usize) -> Result<Self, CpError> {
        if idx >= self.factors.len() {
            return Err(CpError::Index(format!(
                "factor {idx} of {}",
                self.factors.len()
            )));
        }
        let shape = self.classical_shape();
        let qdims = self.quantum_dims();
        let h = self.out_dim;
        match self.factors[idx] {
            Factor::Classical(_) => {
                // position among classical factors
                let cpos = self.factors[..idx]
                    .iter()
                    .filter(|f| matches!(f, Factor::Classical(_)))
                    .count();
                let mut new_shape = shape.clone();
                new_shape.remove(cpos);
                let n_new: usize = new_shape.iter().product::<usize>().max(1);
                let side = self.quantum_in_dim() * h;
                let mut blocks = vec![ComplexMatrix::zeros(side, side); n_new];
                for (flat, b) in self.blocks.iter().enumerate() {
                    let mut multi = multi_index(flat, &shape);
                    multi.remove(cpos);
                    let nf = flat_index(&multi, &new_shape);
                    blocks[nf] = blocks[nf].add(b);
                }
                let mut factors = self.factors.clone();
                factors.remove(idx);
                Ok(HybridCpMap {
                    factors,
                    out_dim: h,
                    normalization: self.normalization.clone(),
                    blocks,
                })
            }
            Factor::Quantum(_) => {
                let qpos = self.factors[..idx]
                    .iter()
                    .filter(|f| matches!(f, Factor::Quantum(_)))
                    .count();
                // dims of the block as tensor factors: all quantum dims then H
                let mut dims = qdims.clone();
                dims.push(h);
                // bring factor qpos to the front, keep relative order of the rest
                let mut perm = vec![qpos];
                perm.extend((0..dims.len()).filter(|&k| k != qpos));
                let d = qdims[qpos];
                let rest: usize = dims.iter().product::<usize>() / d;
                let blocks = self
                    .blocks
                    .iter()
                    .map(|b| {
                        b.permute_systems(&dims, &perm)
                            .expect("shapes agree")
                            .partial_trace((d, rest), Side::First)
                            .expect("shapes agree")
                    })
                    .collect();
                let mut factors = self.factors.clone();
                factors.remove(idx);
                Ok(HybridCpMap {
                    factors,
                    out_dim: h,
                    normalization: self.normalization.clone(),
                    blocks,
                })
            }
        }
    }

    /// Marginal keeping one factor, dropping every other one.
    pub fn marginal(&self, keep: usize) -> Result<Self, CpError> {
        if self.factors.len() < 2 {
            return Err(CpError::Dimension(
                "marginal requires a map with at least two factors".into(),
            ));
        }
        if keep >= self.factors.len() {
            return Err(CpError::Index(format!(
                "factor {keep} of {}",
                self.factors.len()
            )));
        }
        let mut m = self.clone();
        let mut kept = keep;
        while m.factors.len() > 1 {
            let drop_idx = if kept == 0 { 1 } else { 0 };
            m = m.drop_factor(drop_idx)?;
            if drop_idx < kept {
                kept -= 1;
            }
        }
        Ok(m)
    }

    /// Composition `self ∘ other` of classical-free maps
    /// (`other: L(G) → L(K)`, `self: L(K) → L(H)`).
    pub fn compose(&self, other: &Self) -> Result<Self, CpError> {
        if !self.classical_shape().is_empty() || !other.classical_shape().is_empty() {
            return Err(CpError::Dimension(
                "compose is defined for classical-free maps".into(),
            ));
        }
        if other.out_dim != self.quantum_in_dim() {
            return Err(CpError::Dimension(format!(
                "inner output dimension {} does not match outer input {}",
                other.out_dim,
                self.quantum_in_dim()
            )));
        }
        let g = other.quantum_in_dim();
        let h = self.out_dim;
        let choi = choi_from_action(g, h, |e| {
            let mid = other.apply(&[], e).expect("dims checked");
            self.apply(&[], &mid).expect("dims checked")
        });
        HybridCpMap::new(
            vec![Factor::Quantum(g)],
            h,
            self.normalization.clone(),
            vec![choi],
        )
    }

    /// Schrödinger-picture dual of a classical-free map: the Choi matrix
    /// with input/output factors swapped and conjugated, representing the
    /// predual `Φ_*` with `tr[T Φ(a)] = tr[Φ_*(T) a]`.
    pub fn schrodinger_dual(&self) -> Result<Self, CpError> {
        if !self.classical_shape().is_empty() {
            return Err(CpError::Dimension(
                "schrodinger_dual is defined for classical-free maps".into(),
            ));
        }
        let q = self.quantum_in_dim();
        let h = self.out_dim;
        let swapped = self.blocks[0]
            .permute_systems(&[q, h], &[1, 0])?
            .conj();
        let p = choi_partial_out(&swapped, h, q);
        HybridCpMap::new(vec![Factor::Quantum(h)], q, p, vec![swapped])
    }
}

fn choi_partial_out(block: &ComplexMatrix, q: usize, h: usize) -> ComplexMatrix {
    block.partial_trace((q, h), Side::First).expect("shape")
}

/// `C = Σ_ij E_ij ⊗ f(E_ij)` for a linear action `f` on `q x q` inputs.
pub fn choi_from_action(
    q: usize,
    h: usize,
    mut f: impl FnMut(&ComplexMatrix) -> ComplexMatrix,
) -> ComplexMatrix {
    let mut c = ComplexMatrix::zeros(q * h, q * h);
    for i in 0..q {
        for j in 0..q {
            let mut e = ComplexMatrix::zeros(q, q);
            e.set(i, j, ONE);
            let img = f(&e);
            for a in 0..h {
                for b in 0..h {
                    c.set(i * h + a, j * h + b, img.get(a, b));
                }
            }
        }
    }
    c
}

/// Choi matrix of `B ↦ Σ_k K_k† B K_k` from Kraus operators (`q x h` each).
pub fn choi_from_kraus(kraus: &[ComplexMatrix], q: usize, h: usize) -> ComplexMatrix {
    let mut c = ComplexMatrix::zeros(q * h, q * h);
    for k in kraus {
        assert_eq!((k.rows, k.cols), (q, h), "Kraus operator must be q x h");
        let v: Vec<C64> = k.flatten_rows().iter().map(|z| z.conj()).collect();
        let outer = ComplexMatrix::outer(&v, &v);
        c = c.add(&outer);
    }
    c
}

// ---------------------------------------------------------------------------
// Constructors for the standard specializations.
// ---------------------------------------------------------------------------

/// POVM from a list of effects, with explicit normalization `P`.
pub fn povm_with_norm(effects: Vec<ComplexMatrix>, p: ComplexMatrix) -> Result<HybridCpMap, CpError> {
    let n = effects.len();
    if n == 0 {
        return Err(CpError::Dimension("POVM needs at least one effect".into()));
    }
    let h = effects[0].rows;
    HybridCpMap::new(vec![Factor::Classical(n)], h, p, effects)
}

/// POVM with the default normalization `P = I`.
pub fn povm(effects: Vec<ComplexMatrix>) -> Result<HybridCpMap, CpError> {
    let h = effects.first().map(|e| e.rows).unwrap_or(0);
    povm_with_norm(effects, ComplexMatrix::identity(h))
}

/// Channel `L(K) → L(H)` from its Choi matrix.
pub fn channel_from_choi(choi: ComplexMatrix, q: usize, h: usize) -> Result<HybridCpMap, CpError> {
    HybridCpMap::new(
        vec![Factor::Quantum(q)],
        h,
        ComplexMatrix::identity(h),
        vec![choi],
    )
}

/// Channel from Kraus operators `K_k : H → K` (as `q x h` matrices).
pub fn channel_from_kraus(kraus: &[ComplexMatrix]) -> Result<HybridCpMap, CpError> {
    let q = kraus[0].rows;
    let h = kraus[0].cols;
    channel_from_choi(choi_from_kraus(kraus, q, h), q, h)
}

/// Unitary channel `B ↦ U† B U`.
pub fn unitary_channel(u: &ComplexMatrix) -> Result<HybridCpMap, CpError> {
    if !u.is_square() {
        return Err(CpError::Dimension("unitary must be square".into()));
    }
    channel_from_kraus(std::slice::from_ref(u))
}

pub fn identity_channel(d: usize) -> HybridCpMap {
    unitary_channel(&ComplexMatrix::identity(d)).expect("identity is square")
}

/// Instrument from per-outcome Choi blocks on `K ⊗ H`.
pub fn instrument_from_blocks(
    blocks: Vec<ComplexMatrix>,
    q: usize,
    h: usize,
) -> Result<HybridCpMap, CpError> {
    HybridCpMap::new(
        vec![Factor::Classical(blocks.len()), Factor::Quantum(q)],
        h,
        ComplexMatrix::identity(h),
        blocks,
    )
}

/// Lüders instrument `Γ(x, B) = √M_x B √M_x` of a POVM.
pub fn lueders_instrument(effects: &[ComplexMatrix], tol: &Tolerances) -> Result<HybridCpMap, CpError> {
    let h = effects[0].rows;
    let mut blocks = Vec::with_capacity(effects.len());
    for m in effects {
        let root = matcore::sqrt_psd(&m.hermitize(), tol)?;
        blocks.push(choi_from_kraus(std::slice::from_ref(&root), h, h));
    }
    instrument_from_blocks(blocks, h, h)
}

/// A density matrix `ρ` viewed as the CP map `L(H) → C`, `A ↦ tr(ρA)`.
pub fn state_as_map(rho: &ComplexMatrix) -> Result<HybridCpMap, CpError> {
    if !rho.is_square() {
        return Err(CpError::Dimension("state must be square".into()));
    }
    let d = rho.rows;
    // Choi of A ↦ tr(ρA) is ρ^T (a 1-dimensional output block).
    HybridCpMap::new(
        vec![Factor::Quantum(d)],
        1,
        ComplexMatrix::identity(1),
        vec![rho.transpose()],
    )
}

/// Inverse of [`state_as_map`]: recover `ρ` from a state-shaped map.
pub fn map_as_state(map: &HybridCpMap) -> Result<ComplexMatrix, CpError> {
    if !map.is_state() {
        return Err(CpError::Dimension("map is not state-shaped".into()));
    }
    Ok(map.blocks()[0].transpose())
}

// ---------------------------------------------------------------------------
// Thin views.
// ---------------------------------------------------------------------------

macro_rules! view {
    ($name:ident, $pred:ident, $what:literal) => {
        #[derive(Debug, Clone)]
        pub struct $name(HybridCpMap);

        impl $name {
            pub fn new(map: HybridCpMap) -> Result<Self, CpError> {
                if map.$pred() {
                    Ok($name(map))
                } else {
                    Err(CpError::Dimension(concat!("map is not ", $what).into()))
                }
            }

            pub fn as_map(&self) -> &HybridCpMap {
                &self.0
            }

            pub fn into_map(self) -> HybridCpMap {
                self.0
            }
        }
    };
}

view!(Povm, is_povm, "a POVM (one classical factor, trivial quantum input)");
view!(Channel, is_channel, "a channel (single quantum factor)");
view!(Instrument, is_instrument, "an instrument (classical and quantum factors)");

impl Povm {
    pub fn effects(&self) -> Vec<ComplexMatrix> {
        self.0.blocks().to_vec()
    }

    pub fn n_outcomes(&self) -> usize {
        self.0.n_blocks()
    }
}

/// Validated density matrix.
#[derive(Debug, Clone)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    pub fn new(rho: ComplexMatrix, tol: &Tolerances) -> Result<Self, CpError> {
        if !rho.is_square() {
            return Err(CpError::Dimension("density matrix must be square".into()));
        }
        let min_eig = matcore::min_eigenvalue(&rho, tol)?;
        if min_eig < -tol.psd_tol {
            return Err(CpError::Invalid(format!(
                "density matrix has eigenvalue {min_eig:.3e}"
            )));
        }
        let tr = rho.trace();
        if (tr - ONE).norm() > tol.eq_tol {
            return Err(CpError::Invalid(format!("trace is {tr}, expected 1")));
        }
        Ok(DensityMatrix(rho))
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }
}

// ---------------------------------------------------------------------------
// JSON interchange format.
// ---------------------------------------------------------------------------

pub mod json {
    //! The CLI's JSON map format:
    //!
    //! ```json
    //! {"classical_shape": [2], "quantum_in_dim": 2, "out_dim": 2,
    //!  "normalization": [[[1,0],[0,0]],[[0,0],[1,0]]],
    //!  "blocks": {"0": M0, "1": M1}}
    //! ```
    //!
    //! A matrix is row-major `[[ [re,im], ... ], ...]`; `normalization`
    //! defaults to the identity; block keys are underscore-joined outcome
    //! indices (the empty string for classical-free maps). An optional
    //! `quantum_factors` array records a tensor split of the quantum input.

    use super::*;
    use serde_json::{Map, Value};
    use std::collections::BTreeMap;

    pub fn matrix_to_value(m: &ComplexMatrix) -> Value {
        Value::Array(
            (0..m.rows)
                .map(|i| {
                    Value::Array(
                        (0..m.cols)
                            .map(|j| {
                                let z = m.get(i, j);
                                serde_json::json!([z.re, z.im])
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }

    pub fn matrix_from_value(v: &Value) -> Result<ComplexMatrix, CpError> {
        let rows = v
            .as_array()
            .ok_or_else(|| CpError::Invalid("matrix must be an array of rows".into()))?;
        if rows.is_empty() {
            return Err(CpError::Invalid("matrix has no rows".into()));
        }
        let mut data = Vec::new();
        let mut cols = None;
        for (i, row) in rows.iter().enumerate() {
            let row = row
                .as_array()
                .ok_or_else(|| CpError::Invalid(format!("row {i} is not an array")))?;
            match cols {
                None => cols = Some(row.len()),
                Some(c) if c != row.len() => {
                    return Err(CpError::Invalid(format!(
                        "row {i} has {} entries, expected {c}",
                        row.len()
                    )))
                }
                _ => {}
            }
            for (j, e) in row.iter().enumerate() {
                let pair = e.as_array().filter(|p| p.len() == 2).ok_or_else(|| {
                    CpError::Invalid(format!("entry ({i},{j}) must be [re, im]"))
                })?;
                let re = pair[0].as_f64().ok_or_else(|| {
                    CpError::Invalid(format!("entry ({i},{j}): re is not a number"))
                })?;
                let im = pair[1].as_f64().ok_or_else(|| {
                    CpError::Invalid(format!("entry ({i},{j}): im is not a number"))
                })?;
                data.push(C64::new(re, im));
            }
        }
        let cols = cols.unwrap();
        Ok(ComplexMatrix::from_vec(rows.len(), cols, data))
    }

    pub fn map_to_value(map: &HybridCpMap) -> Value {
        let shape = map.classical_shape();
        let mut blocks = Map::new();
        let n = map.n_blocks();
        for flat in 0..n {
            let multi = multi_index(flat, &shape);
            let key = multi
                .iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join("_");
            blocks.insert(key, matrix_to_value(&map.blocks()[flat]));
        }
        let mut obj = Map::new();
        obj.insert(
            "classical_shape".into(),
            Value::Array(shape.iter().map(|&n| (n as u64).into()).collect()),
        );
        obj.insert("quantum_in_dim".into(), (map.quantum_in_dim() as u64).into());
        let qdims = map.quantum_dims();
        if qdims.len() > 1 {
            obj.insert(
                "quantum_factors".into(),
                Value::Array(qdims.iter().map(|&d| (d as u64).into()).collect()),
            );
        }
        obj.insert("out_dim".into(), (map.out_dim() as u64).into());
        obj.insert(
            "normalization".into(),
            matrix_to_value(map.normalization()),
        );
        obj.insert("blocks".into(), Value::Object(blocks));
        Value::Object(obj)
    }

    pub fn map_from_value(v: &Value) -> Result<HybridCpMap, CpError> {
        let obj = v
            .as_object()
            .ok_or_else(|| CpError::Invalid("map must be a JSON object".into()))?;
        let shape: Vec<usize> = match obj.get("classical_shape") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|n| n as usize)
                        .ok_or_else(|| CpError::Invalid("classical_shape entries must be integers".into()))
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
            _ => return Err(CpError::Invalid("classical_shape must be an array".into())),
        };
        let q = obj
            .get("quantum_in_dim")
            .and_then(|x| x.as_u64())
            .unwrap_or(1) as usize;
        let h = obj
            .get("out_dim")
            .and_then(|x| x.as_u64())
            .ok_or_else(|| CpError::Invalid("out_dim is required".into()))?
            as usize;
        let qfactors: Vec<usize> = match obj.get("quantum_factors") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|x| {
                    x.as_u64()
                        .map(|n| n as usize)
                        .ok_or_else(|| CpError::Invalid("quantum_factors entries must be integers".into()))
                })
                .collect::<Result<_, _>>()?,
            None => {
                if q > 1 {
                    vec![q]
                } else {
                    Vec::new()
                }
            }
            _ => return Err(CpError::Invalid("quantum_factors must be an array".into())),
        };
        if qfactors.iter().product::<usize>().max(1) != q {
            return Err(CpError::Invalid(
                "quantum_factors do not multiply to quantum_in_dim".into(),
            ));
        }
        let normalization = match obj.get("normalization") {
            Some(v) => matrix_from_value(v)?,
            None => ComplexMatrix::identity(h),
        };
        let blocks_obj = obj
            .get("blocks")
            .and_then(|x| x.as_object())
            .ok_or_else(|| CpError::Invalid("blocks object is required".into()))?;
        let n_blocks: usize = shape.iter().product::<usize>().max(1);
        let side = q * h;
        let mut blocks = vec![ComplexMatrix::zeros(side, side); n_blocks];
        let mut seen: BTreeMap<usize, ()> = BTreeMap::new();
        for (key, mv) in blocks_obj {
            let multi: Vec<usize> = if key.is_empty() {
                Vec::new()
            } else {
                key.split('_')
                    .map(|s| {
                        s.parse::<usize>().map_err(|_| {
                            CpError::Invalid(format!("bad block key '{key}'"))
                        })
                    })
                    .collect::<Result<_, _>>()?
            };
            if multi.len() != shape.len()
                || multi.iter().zip(&shape).any(|(&i, &n)| i >= n)
            {
                return Err(CpError::Invalid(format!(
                    "block key '{key}' does not match classical_shape {shape:?}"
                )));
            }
            let flat = flat_index(&multi, &shape);
            blocks[flat] = matrix_from_value(mv)?;
            seen.insert(flat, ());
        }
        if seen.len() != n_blocks {
            return Err(CpError::Invalid(format!(
                "expected {n_blocks} blocks, found {}",
                seen.len()
            )));
        }
        let mut factors: Vec<Factor> = shape.iter().map(|&n| Factor::Classical(n)).collect();
        factors.extend(qfactors.iter().map(|&d| Factor::Quantum(d)));
        HybridCpMap::new(factors, h, normalization, blocks)
    }

    pub fn map_to_string(map: &HybridCpMap) -> String {
        serde_json::to_string_pretty(&map_to_value(map)).expect("serializable value")
    }

    pub fn map_from_str(s: &str) -> Result<HybridCpMap, CpError> {
        let v: Value = serde_json::from_str(s)
            .map_err(|e| CpError::Invalid(format!("JSON parse error: {e}")))?;
        map_from_value(&v)
    }
}
