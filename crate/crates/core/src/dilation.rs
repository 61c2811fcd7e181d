//! Minimal Stinespring/Kraus dilations and Naimark dilations.
//!
//! For a CP map `Γ` with Choi blocks `C_x` on `K ⊗ H`, the minimal dilation
//! lives on `⊕_x (C^q ⊗ C^{r_x})` with `r_x = rank C_x`:
//!
//! ```text
//! Γ(x, a) = J_x† (a ⊗ I_{r_x}) J_x,     J_x = Σ_j K_{x,j} ⊗ e_j,
//! ```
//!
//! where the Kraus operators `K_{x,j} : H → C^q` come from the spectral
//! decomposition of `C_x`. The commutant of the representation is
//! `⊕_x (I_q ⊗ L(C^{r_x}))`, which is where Radon-Nikodym operators and
//! extremality witnesses live.

use crate::cpmap::{CpError, HybridCpMap};
use crate::matcore::{self, C64, ComplexMatrix, Tolerances, ONE};

/// Kraus operators of one Choi block, from its spectral decomposition.
///
/// Eigenvalues below `rank_tol * lambda_max` are dropped; an eigenvalue
/// below `-psd_tol` means the block is not CP and is an error.
pub fn minimal_kraus(
    choi: &ComplexMatrix,
    q: usize,
    h: usize,
    tol: &Tolerances,
) -> Result<Vec<ComplexMatrix>, CpError> {
    minimal_kraus_scaled(choi, q, h, tol, 0.0)
}

/// Like [`minimal_kraus`] but with the rank cut floored at
/// `rank_tol * scale`. Multi-block maps pass the largest eigenvalue across
/// all blocks as `scale` so that an outcome whose block is numerically zero
/// (e.g. `P_x P_y` junk at 1e-16) yields rank 0 instead of a spurious tiny
/// Kraus operator.
pub fn minimal_kraus_scaled(
    choi: &ComplexMatrix,
    q: usize,
    h: usize,
    tol: &Tolerances,
    scale: f64,
) -> Result<Vec<ComplexMatrix>, CpError> {
    assert_eq!(choi.rows, q * h, "Choi block must be qh x qh");
    let herm = choi.hermitize();
    if choi.hermitian_asymmetry() > tol.herm_tol * choi.frobenius_norm().max(1.0) {
        return Err(CpError::Invalid("Choi block is not Hermitian".into()));
    }
    let (evals, vecs) = matcore::hermitian_eig(&herm, tol)?;
    let lambda_max = evals.first().copied().unwrap_or(0.0).max(0.0);
    let cut = tol.rank_tol * lambda_max.max(scale);
    let mut kraus = Vec::new();
    for (j, &ev) in evals.iter().enumerate() {
        if ev < -tol.psd_tol * lambda_max.max(1.0) {
            return Err(CpError::Invalid(format!(
                "Choi block has eigenvalue {ev:.3e}: not completely positive"
            )));
        }
        if ev <= cut {
            continue;
        }
        let col = vecs.column(j);
        let scaled: Vec<C64> = col.iter().map(|z| z.conj() * ev.sqrt()).collect();
        kraus.push(ComplexMatrix::from_flat_rows(&scaled, q, h));
    }
    Ok(kraus)
}

/// Minimal Stinespring dilation of a [`HybridCpMap`], stored as per-outcome
/// Kraus families.
#[derive(Debug, Clone)]
pub struct KrausDilation {
    q: usize,
    h: usize,
    classical_shape: Vec<usize>,
    /// `kraus[x][j]` is a `q x h` operator; `r_x = kraus[x].len()`.
    kraus: Vec<Vec<ComplexMatrix>>,
}

impl KrausDilation {
    pub fn minimal(map: &HybridCpMap, tol: &Tolerances) -> Result<Self, CpError> {
        let q = map.quantum_in_dim();
        let h = map.out_dim();
        let scale = map
            .blocks()
            .iter()
            .map(|c| c.max_abs() * (q * h) as f64)
            .fold(0.0f64, f64::max);
        let kraus = map
            .blocks()
            .iter()
            .map(|c| minimal_kraus_scaled(c, q, h, tol, scale))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(KrausDilation { q, h, classical_shape: map.classical_shape(), kraus })
    }

    /// Build directly from Kraus families (not necessarily minimal).
    pub fn from_kraus(
        kraus: Vec<Vec<ComplexMatrix>>,
        q: usize,
        h: usize,
        classical_shape: Vec<usize>,
    ) -> Self {
        KrausDilation { q, h, classical_shape, kraus }
    }

    pub fn quantum_in_dim(&self) -> usize {
        self.q
    }

    pub fn out_dim(&self) -> usize {
        self.h
    }

    pub fn classical_shape(&self) -> &[usize] {
        &self.classical_shape
    }

    pub fn kraus(&self) -> &[Vec<ComplexMatrix>] {
        &self.kraus
    }

    /// Multiplicities `r_x` per outcome.
    pub fn ranks(&self) -> Vec<usize> {
        self.kraus.iter().map(|k| k.len()).collect()
    }

    /// Dimension of the dilation space `⊕_x (C^q ⊗ C^{r_x})`.
    pub fn total_dim(&self) -> usize {
        self.ranks().iter().map(|r| self.q * r).sum()
    }

    /// Stinespring operator block `J_x = Σ_j K_{x,j} ⊗ e_j : H → C^q ⊗ C^{r_x}`.
    pub fn j_block(&self, x: usize) -> ComplexMatrix {
        let r = self.kraus[x].len();
        ComplexMatrix::from_fn(self.q * r, self.h, |row, col| {
            let (i, j) = (row / r, row % r);
            self.kraus[x][j].get(i, col)
        })
    }

    /// Full Stinespring operator `J : H → ⊕_x (C^q ⊗ C^{r_x})` (blocks stacked).
    pub fn j_operator(&self) -> ComplexMatrix {
        let total = self.total_dim();
        let mut m = ComplexMatrix::zeros(total, self.h);
        let mut offset = 0;
        for x in 0..self.kraus.len() {
            let jb = self.j_block(x);
            for i in 0..jb.rows {
                for c in 0..self.h {
                    m.set(offset + i, c, jb.get(i, c));
                }
            }
            offset += jb.rows;
        }
        m
    }

    /// Representation `π(δ_x ⊗ a)` restricted to block `x`: `a ⊗ I_{r_x}`.
    pub fn rep_block(&self, x: usize, a: &ComplexMatrix) -> ComplexMatrix {
        a.kron(&ComplexMatrix::identity(self.kraus[x].len()))
    }

    /// Evaluate `Γ(x, a) = J_x† (a ⊗ I) J_x`.
    pub fn evaluate(&self, x: usize, a: &ComplexMatrix) -> ComplexMatrix {
        let mut acc = ComplexMatrix::zeros(self.h, self.h);
        for k in &self.kraus[x] {
            acc = acc.add(&k.adjoint().mul(a).mul(k));
        }
        acc
    }

    /// Reconstruct the Choi block of outcome `x`.
    pub fn choi_block(&self, x: usize) -> ComplexMatrix {
        crate::cpmap::choi_from_kraus(&self.kraus[x], self.q, self.h)
    }

    /// Embed commutant blocks `D_x ∈ L(C^{r_x})` as `⊕_x (I_q ⊗ D_x)` on the
    /// full dilation space.
    pub fn embed_commutant_element(
        &self,
        d_blocks: &[ComplexMatrix],
    ) -> Result<ComplexMatrix, CpError> {
        if d_blocks.len() != self.kraus.len() {
            return Err(CpError::Dimension(format!(
                "expected {} commutant blocks, got {}",
                self.kraus.len(),
                d_blocks.len()
            )));
        }
        let total = self.total_dim();
        let mut m = ComplexMatrix::zeros(total, total);
        let mut offset = 0;
        for (x, d) in d_blocks.iter().enumerate() {
            let r = self.kraus[x].len();
            if d.rows != r || d.cols != r {
                return Err(CpError::Dimension(format!(
                    "commutant block {x} is {}x{}, expected {r}x{r}",
                    d.rows, d.cols
                )));
            }
            let block = ComplexMatrix::identity(self.q).kron(d);
            for i in 0..block.rows {
                for j in 0..block.cols {
                    m.set(offset + i, offset + j, block.get(i, j));
                }
            }
            offset += self.q * r;
        }
        Ok(m)
    }

    /// Re-mix each outcome's Kraus family by a unitary:
    /// `K'_{x,j} = Σ_k U_x[j,k] K_{x,k}`. Represents the same map.
    pub fn transformed(&self, unitaries: &[ComplexMatrix]) -> Result<Self, CpError> {
        if unitaries.len() != self.kraus.len() {
            return Err(CpError::Dimension("one unitary per outcome required".into()));
        }
        let mut kraus = Vec::with_capacity(self.kraus.len());
        for (family, u) in self.kraus.iter().zip(unitaries) {
            let r = family.len();
            if u.rows != r || u.cols != r {
                return Err(CpError::Dimension(format!(
                    "unitary is {}x{}, expected {r}x{r}",
                    u.rows, u.cols
                )));
            }
            let mut out = Vec::with_capacity(r);
            for j in 0..r {
                let mut k = ComplexMatrix::zeros(self.q, self.h);
                for (kk, op) in family.iter().enumerate() {
                    k = k.add(&op.scale(u.get(j, kk)));
                }
                out.push(k);
            }
            kraus.push(out);
        }
        Ok(KrausDilation {
            q: self.q,
            h: self.h,
            classical_shape: self.classical_shape.clone(),
            kraus,
        })
    }

    /// Per-outcome mixing matrices `S_x` with `other.K_{x,j} = Σ_k S_x[j,k] K_{x,k}`.
    ///
    /// For two minimal dilations of the same map these are unitary
    /// (uniqueness of the minimal dilation up to unitary equivalence).
    pub fn mixing_matrices(
        &self,
        other: &Self,
        tol: &Tolerances,
    ) -> Result<Vec<ComplexMatrix>, CpError> {
        if self.q != other.q || self.h != other.h || self.kraus.len() != other.kraus.len() {
            return Err(CpError::Dimension("dilations have different shapes".into()));
        }
        let mut out = Vec::with_capacity(self.kraus.len());
        for (mine, theirs) in self.kraus.iter().zip(&other.kraus) {
            // rows of F are the flattened Kraus operators of self
            let r = mine.len();
            let f = ComplexMatrix::from_fn(r, self.q * self.h, |i, j| {
                mine[i].flatten_rows()[j]
            });
            let g = ComplexMatrix::from_fn(theirs.len(), self.q * self.h, |i, j| {
                theirs[i].flatten_rows()[j]
            });
            // G = S F  =>  S = G F⁺
            let s = g.mul(&matcore::pseudo_inverse(&f, tol));
            // verify the factorization is exact
            if s.mul(&f).dist(&g) > tol.eq_tol * g.frobenius_norm().max(1.0) {
                return Err(CpError::Invalid(
                    "Kraus families do not span the same operator space".into(),
                ));
            }
            out.push(s);
        }
        Ok(out)
    }
}

/// Naimark dilation of a POVM (`q = 1`): an isometry-like operator
/// `V : H → ⊕_x C^{r_x}` with `V† V = P` and orthogonal block projections
/// `Π_x` such that `M_x = V† Π_x V = A_x† A_x`.
#[derive(Debug, Clone)]
pub struct NaimarkDilation {
    h: usize,
    /// `A_x : H → C^{r_x}`, rows are the (1 x h) Kraus operators of effect x.
    blocks: Vec<ComplexMatrix>,
}

impl NaimarkDilation {
    pub fn minimal(map: &HybridCpMap, tol: &Tolerances) -> Result<Self, CpError> {
        if map.quantum_in_dim() != 1 {
            return Err(CpError::Dimension(
                "Naimark dilation requires a trivial quantum input (a POVM)".into(),
            ));
        }
        let h = map.out_dim();
        let dil = KrausDilation::minimal(map, tol)?;
        let blocks = dil
            .kraus()
            .iter()
            .map(|family| {
                ComplexMatrix::from_fn(family.len(), h, |i, j| family[i].get(0, j))
            })
            .collect();
        Ok(NaimarkDilation { h, blocks })
    }

    pub fn out_dim(&self) -> usize {
        self.h
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.rows).collect()
    }

    pub fn total_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.rows).sum()
    }

    pub fn block(&self, x: usize) -> &ComplexMatrix {
        &self.blocks[x]
    }

    /// Stacked operator `V : H → ⊕_x C^{r_x}`.
    pub fn v_operator(&self) -> ComplexMatrix {
        let total = self.total_dim();
        let mut m = ComplexMatrix::zeros(total, self.h);
        let mut offset = 0;
        for b in &self.blocks {
            for i in 0..b.rows {
                for j in 0..self.h {
                    m.set(offset + i, j, b.get(i, j));
                }
            }
            offset += b.rows;
        }
        m
    }

    /// Orthogonal projection onto the block of outcome `x`.
    pub fn projector(&self, x: usize) -> ComplexMatrix {
        let total = self.total_dim();
        let offset: usize = self.blocks[..x].iter().map(|b| b.rows).sum();
        let mut p = ComplexMatrix::zeros(total, total);
        for i in 0..self.blocks[x].rows {
            p.set(offset + i, offset + i, ONE);
        }
        p
    }

    /// `M_x = A_x† A_x`.
    pub fn reconstruct_effect(&self, x: usize) -> ComplexMatrix {
        self.blocks[x].adjoint().mul(&self.blocks[x])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpmap;
    use crate::matcore::pauli;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        })
    }

    #[test]
    fn identity_channel_has_one_kraus() {
        let tol = Tolerances::default();
        let ch = cpmap::identity_channel(3);
        let dil = KrausDilation::minimal(&ch, &tol).unwrap();
        assert_eq!(dil.ranks(), vec![1]);
        // K† a K = a for the single Kraus op
        let a = random_matrix(&mut ChaCha8Rng::seed_from_u64(1), 3, 3);
        assert!(dil.evaluate(0, &a).dist(&a) < 1e-12);
    }

    #[test]
    fn kraus_reconstructs_random_choi() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let ops: Vec<ComplexMatrix> =
                (0..3).map(|_| random_matrix(&mut rng, 2, 3)).collect();
            let choi = cpmap::choi_from_kraus(&ops, 2, 3);
            let kraus = minimal_kraus(&choi, 2, 3, &tol).unwrap();
            assert!(kraus.len() <= 3);
            let back = cpmap::choi_from_kraus(&kraus, 2, 3);
            assert!(back.dist(&choi) < 1e-10);
        }
    }

    #[test]
    fn kraus_count_equals_choi_rank() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // rank-2 Choi on a 4-dimensional space (q = h = 2)
        let ops: Vec<ComplexMatrix> = (0..2).map(|_| random_matrix(&mut rng, 2, 2)).collect();
        let choi = cpmap::choi_from_kraus(&ops, 2, 2);
        assert_eq!(minimal_kraus(&choi, 2, 2, &tol).unwrap().len(), 2);
        assert_eq!(matcore::rank(&choi, &tol), 2);
    }

    #[test]
    fn non_cp_block_is_rejected() {
        let tol = Tolerances::default();
        let m = pauli::sigma_z(); // eigenvalue -1
        assert!(minimal_kraus(&m, 1, 2, &tol).is_err());
    }

    #[test]
    fn stinespring_identity_for_instrument() {
        let tol = Tolerances::default();
        let m0 = ComplexMatrix::from_real(2, 2, &[0.7, 0.1, 0.1, 0.4]);
        let m1 = ComplexMatrix::identity(2).sub(&m0);
        let ins = cpmap::lueders_instrument(&[m0, m1], &tol).unwrap();
        let dil = KrausDilation::minimal(&ins, &tol).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 2, 2);
        for x in 0..2 {
            // J_x† (a ⊗ I) J_x agrees with the map
            let jb = dil.j_block(x);
            let lhs = jb.adjoint().mul(&dil.rep_block(x, &a)).mul(&jb);
            let rhs = ins.apply(&[x], &a).unwrap();
            assert!(lhs.dist(&rhs) < 1e-11);
            assert!(dil.choi_block(x).dist(ins.block(&[x]).unwrap()) < 1e-11);
        }
        // J† J = Phi(1) = I
        let j = dil.j_operator();
        assert!(j.adjoint().mul(&j).dist(&ComplexMatrix::identity(2)) < 1e-11);
    }

    #[test]
    fn transformed_dilation_represents_same_map() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ops: Vec<ComplexMatrix> = (0..2).map(|_| random_matrix(&mut rng, 2, 2)).collect();
        let choi = cpmap::choi_from_kraus(&ops, 2, 2);
        let ch = cpmap::HybridCpMap::new(
            vec![cpmap::Factor::Quantum(2)],
            2,
            choi.partial_trace((2, 2), crate::matcore::Side::First).unwrap(),
            vec![choi.clone()],
        )
        .unwrap();
        let dil = KrausDilation::minimal(&ch, &tol).unwrap();
        // random 2x2 unitary from eigenvectors of a random Hermitian matrix
        let hmat = random_matrix(&mut rng, 2, 2);
        let herm = hmat.add(&hmat.adjoint());
        let (_, u) = matcore::hermitian_eig(&herm, &tol).unwrap();
        let moved = dil.transformed(&[u.clone()]).unwrap();
        assert!(moved.choi_block(0).dist(&choi) < 1e-11);
        // and the mixing matrix recovered between them is unitary
        let s = dil.mixing_matrices(&moved, &tol).unwrap();
        let prod = s[0].mul(&s[0].adjoint());
        assert!(prod.dist(&ComplexMatrix::identity(2)) < 1e-10);
    }

    #[test]
    fn embed_commutant_element_commutes_with_rep() {
        let tol = Tolerances::default();
        let m0 = ComplexMatrix::from_real(2, 2, &[0.7, 0.1, 0.1, 0.4]);
        let m1 = ComplexMatrix::identity(2).sub(&m0);
        let ins = cpmap::lueders_instrument(&[m0, m1], &tol).unwrap();
        let dil = KrausDilation::minimal(&ins, &tol).unwrap();
        let ranks = dil.ranks();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d_blocks: Vec<ComplexMatrix> = ranks
            .iter()
            .map(|&r| random_matrix(&mut rng, r, r))
            .collect();
        let e = dil.embed_commutant_element(&d_blocks).unwrap();
        // pi(delta_x ⊗ a) as a full block-diagonal operator
        let a = random_matrix(&mut rng, 2, 2);
        for x in 0..2 {
            let mut blocks: Vec<ComplexMatrix> = ranks
                .iter()
                .map(|&r| ComplexMatrix::zeros(2 * r, 2 * r))
                .collect();
            blocks[x] = dil.rep_block(x, &a);
            let total = dil.total_dim();
            let mut rep = ComplexMatrix::zeros(total, total);
            let mut off = 0;
            for b in &blocks {
                for i in 0..b.rows {
                    for j in 0..b.cols {
                        rep.set(off + i, off + j, b.get(i, j));
                    }
                }
                off += b.rows;
            }
            assert!(rep.mul(&e).dist(&e.mul(&rep)) < 1e-12);
        }
    }

    #[test]
    fn naimark_of_unsharp_qubit_povm() {
        let tol = Tolerances::default();
        let t = 0.5;
        let e_plus = ComplexMatrix::identity(2)
            .add(&pauli::sigma_x().scale_re(t))
            .scale_re(0.5);
        let e_minus = ComplexMatrix::identity(2)
            .sub(&pauli::sigma_x().scale_re(t))
            .scale_re(0.5);
        let povm = cpmap::povm(vec![e_plus.clone(), e_minus.clone()]).unwrap();
        let nai = NaimarkDilation::minimal(&povm, &tol).unwrap();
        // unsharp effects have full rank 2 -> dilation space is 4-dimensional
        assert_eq!(nai.ranks(), vec![2, 2]);
        let v = nai.v_operator();
        assert!(v.adjoint().mul(&v).dist(&ComplexMatrix::identity(2)) < 1e-11);
        assert!(nai.reconstruct_effect(0).dist(&e_plus) < 1e-11);
        let p0 = nai.projector(0);
        assert!(v.adjoint().mul(&p0).mul(&v).dist(&e_plus) < 1e-11);
        // projectors are orthogonal and sum to the identity
        let p1 = nai.projector(1);
        assert!(p0.mul(&p1).max_abs() < 1e-15);
        assert!(p0.add(&p1).dist(&ComplexMatrix::identity(4)) < 1e-15);
    }

    #[test]
    fn naimark_of_pvm_is_trivial() {
        let tol = Tolerances::default();
        let p0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p1 = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let povm = cpmap::povm(vec![p0, p1]).unwrap();
        let nai = NaimarkDilation::minimal(&povm, &tol).unwrap();
        assert_eq!(nai.ranks(), vec![1, 1]);
        assert_eq!(nai.total_dim(), 2);
    }

    #[test]
    fn naimark_rejects_quantum_input() {
        let tol = Tolerances::default();
        let ch = cpmap::identity_channel(2);
        assert!(NaimarkDilation::minimal(&ch, &tol).is_err());
    }
}
