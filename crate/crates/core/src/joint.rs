//! Compatibility of CP maps: joint-map feasibility, uniqueness probing,
//! product joints for sharp marginals, no-cloning and causal-locality
//! checks, and the noisy qubit pair family.
//!
//! A joint map of `Φ_1: A_1 → L(H)` and `Φ_2: A_2 → L(H)` (same `H`, same
//! normalization) is `Ψ: A_1 ⊗ A_2 → L(H)` with `Ψ(a ⊗ 1) = Φ_1(a)` and
//! `Ψ(1 ⊗ b) = Φ_2(b)`. Existence is a convex feasibility problem: the Choi
//! blocks of `Ψ` must be PSD (a cone constraint) and reproduce the marginals
//! (an affine constraint). It is solved by alternating projections with a
//! Dykstra correction on the cone step; the affine projection is a
//! closed-form least-squares step through a precomputed pseudo-inverse.

use crate::cpmap::{self, CpError, Factor, HybridCpMap};
use crate::extremality;
use crate::matcore::{self, C64, ComplexMatrix, Tolerances};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Real coordinates of Hermitian matrices (Frobenius-isometric).
pub mod coords {
    use super::*;

    /// `n x n` Hermitian -> `n²` reals: diagonal, then `√2·re`, `√2·im` of
    /// the strict upper triangle.
    pub fn to_coords(m: &ComplexMatrix) -> Vec<f64> {
        let n = m.rows;
        let mut v = Vec::with_capacity(n * n);
        for i in 0..n {
            v.push(m.get(i, i).re);
        }
        let s = 2f64.sqrt();
        for i in 0..n {
            for j in (i + 1)..n {
                v.push(s * m.get(i, j).re);
                v.push(s * m.get(i, j).im);
            }
        }
        v
    }

    pub fn from_coords(v: &[f64], n: usize) -> ComplexMatrix {
        let mut m = ComplexMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, C64::new(v[i], 0.0));
        }
        let s = 1.0 / 2f64.sqrt();
        let mut k = n;
        for i in 0..n {
            for j in (i + 1)..n {
                let z = C64::new(s * v[k], s * v[k + 1]);
                m.set(i, j, z);
                m.set(j, i, z.conj());
                k += 2;
            }
        }
        m
    }
}

#[derive(Debug, Clone)]
pub struct SolverParams {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub gap_window: usize,
    pub probe_samples: usize,
    pub uniq_tol: f64,
    pub seed: u64,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            max_iter: 20_000,
            gap_tol: 1e-6,
            gap_window: 200,
            probe_samples: 64,
            uniq_tol: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Status {
    Feasible(HybridCpMap),
    Infeasible { gap: f64 },
    Inconclusive,
}

#[derive(Debug, Clone)]
pub enum Uniqueness {
    Unique,
    NonUnique { direction: Vec<ComplexMatrix>, step: f64 },
    Unprobed,
}

#[derive(Debug, Clone)]
pub struct JointSolution {
    pub status: Status,
    pub uniqueness: Uniqueness,
    pub iterations: usize,
}

impl JointSolution {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, Status::Feasible(_))
    }

    pub fn joint(&self) -> Option<&HybridCpMap> {
        match &self.status {
            Status::Feasible(m) => Some(m),
            _ => None,
        }
    }

    pub fn to_json(&self) -> Value {
        let mut obj = json!({
            "iterations": self.iterations,
            "status": match &self.status {
                Status::Feasible(_) => "feasible",
                Status::Infeasible { .. } => "infeasible",
                Status::Inconclusive => "inconclusive",
            },
            "uniqueness": match &self.uniqueness {
                Uniqueness::Unique => "unique",
                Uniqueness::NonUnique { .. } => "non_unique",
                Uniqueness::Unprobed => "unprobed",
            },
        });
        if let Status::Feasible(m) = &self.status {
            obj["joint"] = cpmap::json::map_to_value(m);
        }
        if let Status::Infeasible { gap } = &self.status {
            obj["gap"] = json!(gap);
        }
        if let Uniqueness::NonUnique { direction, step } = &self.uniqueness {
            obj["step"] = json!(step);
            obj["direction_blocks"] = Value::Array(
                direction.iter().map(cpmap::json::matrix_to_value).collect(),
            );
        }
        obj
    }
}

/// Convex feasibility problem for a block-Choi map of a fixed signature:
/// PSD blocks intersected with a list of affine constraints.
pub struct FeasibilityProblem {
    factors: Vec<Factor>,
    out_dim: usize,
    normalization: ComplexMatrix,
    block_side: usize,
    n_blocks: usize,
    rows: Vec<Vec<f64>>,
    rhs: Vec<f64>,
}

impl FeasibilityProblem {
    pub fn new(factors: Vec<Factor>, out_dim: usize, normalization: ComplexMatrix) -> Self {
        let shape: Vec<usize> = factors
            .iter()
            .filter_map(|f| match f {
                Factor::Classical(n) => Some(*n),
                _ => None,
            })
            .collect();
        let q: usize = factors
            .iter()
            .filter_map(|f| match f {
                Factor::Quantum(d) => Some(*d),
                _ => None,
            })
            .product();
        FeasibilityProblem {
            factors,
            out_dim,
            normalization,
            block_side: q * out_dim,
            n_blocks: shape.iter().product::<usize>().max(1),
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    /// Problem "find a joint of `phi1` and `phi2`": marginal constraints on
    /// both factors plus the normalization constraint.
    pub fn from_marginals(
        phi1: &HybridCpMap,
        phi2: &HybridCpMap,
    ) -> Result<Self, CpError> {
        if phi1.factors().len() != 1 || phi2.factors().len() != 1 {
            return Err(CpError::Dimension(
                "marginal targets must be single-factor maps".into(),
            ));
        }
        if phi1.out_dim() != phi2.out_dim() {
            return Err(CpError::Dimension("marginals must share the output space".into()));
        }
        if phi1.normalization().dist(phi2.normalization())
            > 1e-12 * phi1.normalization().frobenius_norm().max(1.0)
        {
            return Err(CpError::Dimension(
                "marginals must share the normalization".into(),
            ));
        }
        let factors = vec![phi1.factors()[0], phi2.factors()[0]];
        let mut prob =
            FeasibilityProblem::new(factors, phi1.out_dim(), phi1.normalization().clone());
        prob.add_marginal_constraint(0, phi1)?;
        prob.add_marginal_constraint(1, phi2)?;
        prob.add_normalization_constraint();
        Ok(prob)
    }

    pub fn dim(&self) -> usize {
        self.n_blocks * self.block_side * self.block_side
    }

    pub fn blocks_to_vec(&self, blocks: &[ComplexMatrix]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        for b in blocks {
            v.extend(coords::to_coords(b));
        }
        v
    }

    pub fn vec_to_blocks(&self, v: &[f64]) -> Vec<ComplexMatrix> {
        let per = self.block_side * self.block_side;
        (0..self.n_blocks)
            .map(|i| coords::from_coords(&v[i * per..(i + 1) * per], self.block_side))
            .collect()
    }

    fn candidate(&self, v: &[f64]) -> HybridCpMap {
        HybridCpMap::new(
            self.factors.clone(),
            self.out_dim,
            self.normalization.clone(),
            self.vec_to_blocks(v),
        )
        .expect("shapes fixed by the problem")
    }

    /// Generic affine constraint `f(blocks) = rhs`, with `f` real-linear on
    /// Hermitian block tuples and Hermitian-valued.
    pub fn add_constraint_from_fn(
        &mut self,
        f: impl Fn(&[ComplexMatrix]) -> Vec<ComplexMatrix>,
        rhs: &[ComplexMatrix],
    ) {
        let n = self.dim();
        let rhs_vec: Vec<f64> = rhs.iter().flat_map(|m| coords::to_coords(m)).collect();
        let n_rows = rhs_vec.len();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        for k in 0..n {
            let mut e = vec![0.0; n];
            e[k] = 1.0;
            let img = f(&self.vec_to_blocks(&e));
            let col: Vec<f64> = img.iter().flat_map(|m| coords::to_coords(m)).collect();
            assert_eq!(col.len(), n_rows, "constraint output shape must be constant");
            cols.push(col);
        }
        for r in 0..n_rows {
            self.rows.push((0..n).map(|k| cols[k][r]).collect());
            self.rhs.push(rhs_vec[r]);
        }
    }

    /// Constraint: the marginal keeping `factor` equals `target`.
    pub fn add_marginal_constraint(
        &mut self,
        factor: usize,
        target: &HybridCpMap,
    ) -> Result<(), CpError> {
        if factor >= self.factors.len() {
            return Err(CpError::Index(format!(
                "factor {factor} of {}",
                self.factors.len()
            )));
        }
        let factors = self.factors.clone();
        let out_dim = self.out_dim;
        let norm = ComplexMatrix::zeros(out_dim, out_dim);
        let f = move |blocks: &[ComplexMatrix]| -> Vec<ComplexMatrix> {
            let m = HybridCpMap::new(factors.clone(), out_dim, norm.clone(), blocks.to_vec())
                .expect("problem shapes");
            m.marginal(factor).expect("factor checked").blocks().to_vec()
        };
        self.add_constraint_from_fn(f, target.blocks());
        Ok(())
    }

    /// Constraint `Ψ(1) = P`.
    pub fn add_normalization_constraint(&mut self) {
        let factors = self.factors.clone();
        let out_dim = self.out_dim;
        let norm = ComplexMatrix::zeros(out_dim, out_dim);
        let p = self.normalization.clone();
        self.add_constraint_from_fn(
            move |blocks| {
                let m = HybridCpMap::new(
                    factors.clone(),
                    out_dim,
                    norm.clone(),
                    blocks.to_vec(),
                )
                .expect("problem shapes");
                vec![m.total()]
            },
            &[p],
        );
    }

    fn l_matrix(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.rows.len(), self.dim(), |i, j| {
            C64::new(self.rows[i][j], 0.0)
        })
    }

    fn residual(&self, v: &[f64]) -> f64 {
        self.rows
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| {
                let dot: f64 = row.iter().zip(v).map(|(a, x)| a * x).sum();
                (dot - b) * (dot - b)
            })
            .sum::<f64>()
            .sqrt()
    }

    fn project_psd(&self, v: &[f64], tol: &Tolerances) -> Vec<f64> {
        let blocks: Vec<ComplexMatrix> = self
            .vec_to_blocks(v)
            .iter()
            .map(|b| matcore::project_psd(b, tol).expect("coords give Hermitian blocks"))
            .collect();
        self.blocks_to_vec(&blocks)
    }

    /// Orthonormal basis (real coordinate vectors) of the constraint kernel.
    pub fn kernel_basis(&self, tol: &Tolerances) -> Vec<Vec<f64>> {
        let l = self.l_matrix();
        let ns = matcore::null_space(&l, tol);
        (0..ns.cols)
            .map(|j| ns.column(j).iter().map(|z| z.re).collect())
            .collect()
    }

    /// Alternating projections with Dykstra correction on the PSD step,
    /// started from the minimum-norm affine point.
    pub fn solve(&self, params: &SolverParams, tol: &Tolerances) -> JointSolution {
        self.solve_from(None, params, tol)
    }

    /// Like [`solve`](Self::solve) but started from `start` (in block
    /// coordinates). Since the affine projection needs no Dykstra
    /// correction, the iteration converges to the projection of the start
    /// point onto the feasible set when that set is nonempty.
    pub fn solve_from(
        &self,
        start: Option<&[f64]>,
        params: &SolverParams,
        tol: &Tolerances,
    ) -> JointSolution {
        let l = self.l_matrix();
        let pinv = matcore::pseudo_inverse(&l, tol);
        let n = self.dim();
        let scale = self.rhs.iter().map(|b| b * b).sum::<f64>().sqrt().max(1.0);
        let proj_affine = |v: &[f64]| -> Vec<f64> {
            // v - L⁺(Lv - t)
            let lv: Vec<C64> = l.mul_vec(&v.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>());
            let diff: Vec<C64> = lv
                .iter()
                .zip(&self.rhs)
                .map(|(z, &b)| z - C64::new(b, 0.0))
                .collect();
            let corr = pinv.mul_vec(&diff);
            (0..n).map(|i| v[i] - corr[i].re).collect()
        };

        let x0: Vec<f64> = match start {
            Some(s) => s.to_vec(),
            None => vec![0.0; n],
        };
        let mut x = proj_affine(&x0); // min-norm affine point when start is 0
        let mut p = vec![0.0; n];
        let mut gaps: Vec<f64> = Vec::new();
        for iter in 1..=params.max_iter {
            let xp: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
            let y = self.project_psd(&xp, tol);
            for i in 0..n {
                p[i] = xp[i] - y[i];
            }
            if self.residual(&y) <= tol.eq_tol * scale {
                // snap onto the affine set and back into the cone; accept
                // only if the polished point still satisfies the constraints
                let z = self.project_psd(&proj_affine(&y), tol);
                if self.residual(&z) <= 0.5 * tol.eq_tol {
                    return JointSolution {
                        status: Status::Feasible(self.candidate(&z)),
                        uniqueness: Uniqueness::Unprobed,
                        iterations: iter,
                    };
                }
            }
            // When the intersection lies on a low-rank face of the cone,
            // plain alternating projections approach it tangentially
            // (sublinearly). Once the iterate's rank profile has settled,
            // alternating the affine projection with a fixed-rank PSD
            // truncation converges fast; try that periodically.
            if iter % 500 == 0 {
                if let Some(z) = self.facial_refine(&y, tol) {
                    return JointSolution {
                        status: Status::Feasible(self.candidate(&z)),
                        uniqueness: Uniqueness::Unprobed,
                        iterations: iter,
                    };
                }
            }
            x = proj_affine(&y);
            let gap: f64 = y
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            gaps.push(gap);
            if gaps.len() >= params.gap_window {
                let win = &gaps[gaps.len() - params.gap_window..];
                let lo = win.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = win.iter().cloned().fold(0.0f64, f64::max);
                if lo >= params.gap_tol && (hi - lo) <= 1e-3 * hi {
                    return JointSolution {
                        status: Status::Infeasible { gap },
                        uniqueness: Uniqueness::Unprobed,
                        iterations: iter,
                    };
                }
            }
        }
        JointSolution {
            status: Status::Inconclusive,
            uniqueness: Uniqueness::Unprobed,
            iterations: params.max_iter,
        }
    }

    /// Low-rank refinement for intersections lying on a boundary face of
    /// the cone, where alternating projections approach tangentially.
    /// Factor each block as `B_k = Y_k Y_k†` at the rank profile of the
    /// current iterate and drive the affine residual to zero with
    /// Levenberg-Marquardt over the factors; the result is PSD by
    /// construction and accepted only if it meets the constraints tightly.
    fn facial_refine(&self, y: &[f64], tol: &Tolerances) -> Option<Vec<f64>> {
        let blocks = self.vec_to_blocks(y);
        let side = self.block_side;
        let mut eigs = Vec::with_capacity(blocks.len());
        let mut gmax = 0.0f64;
        for b in &blocks {
            let (evals, vecs) = matcore::hermitian_eig(&b.hermitize(), tol).ok()?;
            gmax = gmax.max(evals.first().copied().unwrap_or(0.0));
            eigs.push((evals, vecs));
        }
        if gmax <= 0.0 {
            return None;
        }
        let mut ys: Vec<ComplexMatrix> = Vec::with_capacity(eigs.len());
        for (evals, vecs) in &eigs {
            let r = evals.iter().filter(|&&e| e > 1e-6 * gmax).count();
            ys.push(ComplexMatrix::from_fn(side, r, |i, j| {
                vecs.get(i, j) * evals[j].max(0.0).sqrt()
            }));
        }
        // A full rank profile means the iterate is interior: there is no face
        // to exploit, and plain alternating projections converge fine.
        if ys.iter().all(|y| y.cols == side) {
            return None;
        }
        let per = side * side;
        let rho = |ys: &[ComplexMatrix]| -> Vec<f64> {
            let bs: Vec<ComplexMatrix> = ys.iter().map(|y| y.mul(&y.adjoint())).collect();
            let v = self.blocks_to_vec(&bs);
            self.rows
                .iter()
                .zip(&self.rhs)
                .map(|(row, &b)| row.iter().zip(&v).map(|(a, x)| a * x).sum::<f64>() - b)
                .collect()
        };
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut res = rho(&ys);
        let mut rnorm = norm(&res);
        let mut mu = 1e-4 * gmax.max(1.0);
        let mut stall = 0usize;
        // Constraint violations loosen conclusions drawn from the result only
        // quadratically (a residual eps permits O(sqrt(eps)) effects near the
        // cone boundary), so keep polishing well past the acceptance
        // threshold while the quadratic convergence regime lasts.
        let target = 1e-13 * gmax.max(1.0);
        for _ in 0..80 {
            if rnorm <= target {
                break;
            }
            // Jacobian of the residual in the real/imag parts of the factor
            // entries: perturbing Y by E changes the block by EY† + YE†.
            let mut cols: Vec<Vec<f64>> = Vec::new();
            let mut slots: Vec<(usize, usize, usize, bool)> = Vec::new();
            for (k, yk) in ys.iter().enumerate() {
                for a in 0..side {
                    for b in 0..yk.cols {
                        for &re in &[true, false] {
                            let unit = if re { C64::new(1.0, 0.0) } else { C64::new(0.0, 1.0) };
                            let mut db = ComplexMatrix::zeros(side, side);
                            for i in 0..side {
                                let v1 = unit * yk.get(i, b).conj();
                                let v2 = yk.get(i, b) * unit.conj();
                                db.set(a, i, db.get(a, i) + v1);
                                db.set(i, a, db.get(i, a) + v2);
                            }
                            let dc = coords::to_coords(&db);
                            let col: Vec<f64> = self
                                .rows
                                .iter()
                                .map(|row| {
                                    row[k * per..(k + 1) * per]
                                        .iter()
                                        .zip(&dc)
                                        .map(|(x, d)| x * d)
                                        .sum::<f64>()
                                })
                                .collect();
                            cols.push(col);
                            slots.push((k, a, b, re));
                        }
                    }
                }
            }
            let p = cols.len();
            if p == 0 {
                return None;
            }
            let jtj = ComplexMatrix::from_fn(p, p, |i, j| {
                C64::new(
                    cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum::<f64>(),
                    0.0,
                )
            });
            let jtr = ComplexMatrix::from_fn(p, 1, |i, _| {
                C64::new(
                    -cols[i].iter().zip(&res).map(|(a, b)| a * b).sum::<f64>(),
                    0.0,
                )
            });
            let mut accepted = false;
            for _ in 0..6 {
                let damped = ComplexMatrix::from_fn(p, p, |i, j| {
                    jtj.get(i, j) + if i == j { C64::new(mu, 0.0) } else { C64::new(0.0, 0.0) }
                });
                // The damping term makes the system positive definite, so no
                // rank cut is needed; a relative cut would discard the
                // small-curvature directions the refinement exists to follow.
                let solve_tol = Tolerances {
                    rank_tol: f64::EPSILON,
                    ..*tol
                };
                let delta = matcore::gram_solve(&damped, &jtr, &solve_tol);
                let mut trial = ys.clone();
                for (idx, &(k, a, b, re)) in slots.iter().enumerate() {
                    let d = delta.get(idx, 0).re;
                    let cur = trial[k].get(a, b);
                    trial[k].set(
                        a,
                        b,
                        if re { cur + C64::new(d, 0.0) } else { cur + C64::new(0.0, d) },
                    );
                }
                let tres = rho(&trial);
                let tnorm = norm(&tres);
                if tnorm < rnorm {
                    stall = if tnorm > 0.9 * rnorm { stall + 1 } else { 0 };
                    ys = trial;
                    res = tres;
                    rnorm = tnorm;
                    mu = (mu / 3.0).max(1e-14);
                    accepted = true;
                    break;
                }
                mu *= 10.0;
            }
            if !accepted || stall >= 5 {
                // stalled at a positive residual: rank guess is off or the
                // problem is infeasible on this face
                break;
            }
        }
        if rnorm <= 0.5 * tol.eq_tol {
            let bs: Vec<ComplexMatrix> = ys.iter().map(|y| y.mul(&y.adjoint())).collect();
            return Some(self.blocks_to_vec(&bs));
        }
        None
    }

    /// Search the constraint kernel for a feasible perturbation direction of
    /// `psi`: basis directions plus `probe_samples` random combinations, max
    /// PSD step per direction by bisection. A step above `uniq_tol` is a
    /// constructive disproof of uniqueness.
    pub fn probe_uniqueness(
        &self,
        psi: &HybridCpMap,
        params: &SolverParams,
        tol: &Tolerances,
    ) -> Uniqueness {
        let basis = self.kernel_basis(tol);
        if basis.is_empty() {
            return Uniqueness::Unique;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let mut directions: Vec<Vec<f64>> = basis.clone();
        let k = basis.len();
        for _ in 0..params.probe_samples {
            let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() - 0.5).collect();
            let norm: f64 = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-12 {
                continue;
            }
            let mut d = vec![0.0; self.dim()];
            for (wi, b) in w.iter().zip(&basis) {
                for (j, bj) in b.iter().enumerate() {
                    d[j] += wi / norm * bj;
                }
            }
            directions.push(d);
        }

        let base = psi.blocks();
        let mut best: Option<(Vec<ComplexMatrix>, f64)> = None;
        for d in &directions {
            let delta = self.vec_to_blocks(d);
            for sign in [1.0f64, -1.0] {
                if !line_feasible(base, &delta, sign, tol) {
                    continue;
                }
                let step = max_psd_step(base, &delta, sign, tol);
                if step > params.uniq_tol
                    && best.as_ref().map(|(_, s)| step > *s).unwrap_or(true)
                {
                    let dir: Vec<ComplexMatrix> =
                        delta.iter().map(|m| m.scale_re(sign)).collect();
                    best = Some((dir, step));
                }
            }
        }
        match best {
            Some((direction, step)) => Uniqueness::NonUnique { direction, step },
            None => Uniqueness::Unique,
        }
    }
}

/// Straight-line feasibility of `C_x + t·sign·Δ_x ⪰ 0` for some `t > 0`.
///
/// On the kernel `Z` of each block the compression `A = Z†ΔZ` must be PSD,
/// and on the kernel of `A` the coupling of `Δ` into the range of `C` must
/// vanish (the Schur complement of the zero block is `tA - t²·Z†ΔC⁺ΔZ +
/// O(t³)`). Testing this structurally, instead of only sampling eigenvalues
/// along the line, rejects directions that leave the cone at second order —
/// their eigenvalue dip `~t²` hides below any eigenvalue slack for steps up
/// to `~sqrt(slack)`, which can exceed `uniq_tol`.
fn line_feasible(
    base: &[ComplexMatrix],
    delta: &[ComplexMatrix],
    sign: f64,
    tol: &Tolerances,
) -> bool {
    for (c, d) in base.iter().zip(delta) {
        let d = d.scale_re(sign).hermitize();
        let dnorm = d.frobenius_norm();
        if dnorm < 1e-14 {
            continue;
        }
        let (evals, vecs) = match matcore::hermitian_eig(&c.hermitize(), tol) {
            Ok(e) => e,
            Err(_) => return false,
        };
        let lmax = evals.first().copied().unwrap_or(0.0).max(0.0);
        let zero_idx: Vec<usize> = (0..evals.len())
            .filter(|&i| evals[i] <= tol.rank_tol * lmax.max(1e-300))
            .collect();
        if zero_idx.is_empty() {
            continue;
        }
        let n = c.rows;
        let k = zero_idx.len();
        let z = ComplexMatrix::from_fn(n, k, |i, j| vecs.get(i, zero_idx[j]));
        let a = z.adjoint().mul(&d).mul(&z);
        let (a_evals, a_vecs) = match matcore::hermitian_eig(&a.hermitize(), tol) {
            Ok(e) => e,
            Err(_) => return false,
        };
        if a_evals.last().copied().unwrap_or(0.0) < -1e-8 * dnorm {
            return false;
        }
        for (j, &lam) in a_evals.iter().enumerate() {
            if lam.abs() > 1e-8 * dnorm {
                continue;
            }
            // u = Δ·(Z w) for w in ker(A); its range component must vanish
            let w = ComplexMatrix::from_fn(k, 1, |i, _| a_vecs.get(i, j));
            let u = d.mul(&z.mul(&w));
            let v = u.sub(&z.mul(&z.adjoint().mul(&u)));
            if v.frobenius_norm() > 1e-6 * dnorm {
                return false;
            }
        }
    }
    true
}

/// Largest `t ≥ 0` with all `C_x + t·sign·Δ_x ⪰ -psd_tol` (doubling then
/// bisection on the concave minimum eigenvalue).
fn max_psd_step(
    base: &[ComplexMatrix],
    delta: &[ComplexMatrix],
    sign: f64,
    tol: &Tolerances,
) -> f64 {
    // slack at the eigenvalue-noise floor, not psd_tol: a generous slack
    // would admit second-order infeasible directions as steps ~sqrt(slack),
    // which can exceed uniq_tol
    let base_scale: f64 = base.iter().map(|m| m.frobenius_norm()).fold(1.0, f64::max);
    let delta_scale: f64 = delta.iter().map(|m| m.frobenius_norm()).fold(0.0, f64::max);
    let ok = |t: f64| -> bool {
        let slack = 1e-13 * (base_scale + t * delta_scale);
        base.iter().zip(delta).all(|(c, d)| {
            let m = c.add(&d.scale_re(sign * t)).hermitize();
            matcore::min_eigenvalue(&m, tol).map(|e| e >= -slack).unwrap_or(false)
        })
    };
    if !ok(0.0) {
        return 0.0;
    }
    let mut hi = 1e-6;
    let mut doublings = 0;
    while ok(hi) && doublings < 40 {
        hi *= 2.0;
        doublings += 1;
    }
    if doublings == 40 {
        return hi;
    }
    let mut lo = if doublings == 0 { 0.0 } else { hi / 2.0 };
    for _ in 0..50 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Find a joint map of two single-factor marginals, probing uniqueness when
/// feasible.
pub fn find_joint(
    phi1: &HybridCpMap,
    phi2: &HybridCpMap,
    params: &SolverParams,
    tol: &Tolerances,
) -> Result<JointSolution, CpError> {
    let prob = FeasibilityProblem::from_marginals(phi1, phi2)?;
    let mut sol = prob.solve(params, tol);
    if let Status::Feasible(psi) = &sol.status {
        sol.uniqueness = prob.probe_uniqueness(psi, params, tol);
    }
    Ok(sol)
}

// ---------------------------------------------------------------------------
// Product joint for a sharp first marginal (Thm. 6c).
// ---------------------------------------------------------------------------

fn factor_basis(map: &HybridCpMap) -> Vec<(Vec<usize>, ComplexMatrix, ComplexMatrix)> {
    // (classical index, quantum basis element, image) triples spanning the
    // single input factor; for classical factors the quantum part is 1x1
    let shape = map.classical_shape();
    let q = map.quantum_in_dim();
    let n: usize = shape.iter().product::<usize>().max(1);
    let mut out = Vec::new();
    for flat in 0..n {
        let x = cpmap::multi_index(flat, &shape);
        for i in 0..q {
            for j in 0..q {
                let mut e = ComplexMatrix::zeros(q, q);
                e.set(i, j, C64::new(1.0, 0.0));
                let img = map.apply(&x, &e).expect("basis in range");
                out.push((x.clone(), e, img));
            }
        }
    }
    out
}

/// Max deviation of `Φ` from being a *-homomorphism on its input basis.
pub fn sharpness_defect(map: &HybridCpMap, _tol: &Tolerances) -> f64 {
    let basis = factor_basis(map);
    let mut worst = 0.0f64;
    for (x1, e1, m1) in &basis {
        for (x2, e2, m2) in &basis {
            // (δ_x1 ⊗ e1)(δ_x2 ⊗ e2) = δ_{x1 x2} δ_x1 ⊗ e1 e2
            let prod_alg = if x1 == x2 {
                e1.mul(e2)
            } else {
                ComplexMatrix::zeros(e1.rows, e1.cols)
            };
            let rhs = if x1 == x2 && prod_alg.max_abs() > 0.0 {
                map.apply(x1, &prod_alg).expect("basis in range")
            } else {
                ComplexMatrix::zeros(m1.rows, m1.cols)
            };
            worst = worst.max(m1.mul(m2).dist(&rhs));
        }
    }
    worst
}

/// The joint map `Ψ(a ⊗ b) = Φ_1(a) Φ_2(b)` of a sharp `Φ_1` with a
/// commuting `Φ_2` (Thm. 6c). Errors if `Φ_1` is not sharp or the ranges do
/// not commute.
pub fn product_joint_sharp(
    phi1: &HybridCpMap,
    phi2: &HybridCpMap,
    tol: &Tolerances,
) -> Result<HybridCpMap, CpError> {
    if phi1.factors().len() != 1 || phi2.factors().len() != 1 {
        return Err(CpError::Dimension(
            "product joint takes single-factor maps".into(),
        ));
    }
    if phi1.out_dim() != phi2.out_dim() {
        return Err(CpError::Dimension("maps must share the output space".into()));
    }
    let defect = sharpness_defect(phi1, tol);
    if defect > tol.eq_tol {
        return Err(CpError::NotSharp(format!(
            "first map deviates from a *-homomorphism by {defect:.3e}"
        )));
    }
    let basis1 = factor_basis(phi1);
    let basis2 = factor_basis(phi2);
    let mut comm = 0.0f64;
    for (_, _, m1) in &basis1 {
        for (_, _, m2) in &basis2 {
            comm = comm.max(m1.mul(m2).sub(&m2.mul(m1)).frobenius_norm());
        }
    }
    if comm > tol.eq_tol {
        return Err(CpError::TheoremViolation(format!(
            "ranges do not commute (residual {comm:.3e}); a sharp marginal of a \
             compatible pair must commute with the other marginal"
        )));
    }

    let h = phi1.out_dim();
    let q1 = phi1.quantum_in_dim();
    let q2 = phi2.quantum_in_dim();
    let shape1 = phi1.classical_shape();
    let shape2 = phi2.classical_shape();
    let n1: usize = shape1.iter().product::<usize>().max(1);
    let n2: usize = shape2.iter().product::<usize>().max(1);
    let mut blocks = Vec::with_capacity(n1 * n2);
    for f1 in 0..n1 {
        let x1 = cpmap::multi_index(f1, &shape1);
        // images of the quantum matrix units of factor 1 at this outcome
        let a: Vec<Vec<ComplexMatrix>> = (0..q1)
            .map(|i| {
                (0..q1)
                    .map(|j| {
                        let mut e = ComplexMatrix::zeros(q1, q1);
                        e.set(i, j, C64::new(1.0, 0.0));
                        phi1.apply(&x1, &e).expect("basis")
                    })
                    .collect()
            })
            .collect();
        for f2 in 0..n2 {
            let x2 = cpmap::multi_index(f2, &shape2);
            let b: Vec<Vec<ComplexMatrix>> = (0..q2)
                .map(|k| {
                    (0..q2)
                        .map(|l| {
                            let mut e = ComplexMatrix::zeros(q2, q2);
                            e.set(k, l, C64::new(1.0, 0.0));
                            phi2.apply(&x2, &e).expect("basis")
                        })
                        .collect()
                })
                .collect();
            let choi = cpmap::choi_from_action(q1 * q2, h, |e| {
                let mut acc = ComplexMatrix::zeros(h, h);
                for i in 0..q1 {
                    for j in 0..q1 {
                        for k in 0..q2 {
                            for l in 0..q2 {
                                let c = e.get(i * q2 + k, j * q2 + l);
                                if c.norm() == 0.0 {
                                    continue;
                                }
                                acc = acc.add(&a[i][j].mul(&b[k][l]).scale(c));
                            }
                        }
                    }
                }
                acc
            });
            blocks.push(choi);
        }
    }
    let mut factors = phi1.factors().to_vec();
    factors.extend_from_slice(phi2.factors());
    HybridCpMap::new(factors, h, phi1.normalization().clone(), blocks)
}

// ---------------------------------------------------------------------------
// No-cloning (Cor. 9d) and causal locality (Cor. 11).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct NoCloningReport {
    /// The constant second marginal `σ` with `tr_1[F(T)] = tr(T)·σ`.
    pub sigma: ComplexMatrix,
    /// Residual of the identity-first-marginal precondition.
    pub precondition_residual: f64,
    /// Max deviation of `tr_1[F(T)] - tr(T)·σ` over the sampled inputs.
    pub max_deviation: f64,
}

/// Cor. 9(d): a Schrödinger channel `F: T(H) → T(H ⊗ H)` whose first output
/// marginal is the identity has a constant second marginal.
///
/// `f` is the Schrödinger-direction map as a [`HybridCpMap`]: quantum input
/// of dimension `d`, output dimension `d²` (e.g. the [`HybridCpMap::schrodinger_dual`]
/// of a Heisenberg channel `L(H ⊗ H) → L(H)`).
pub fn check_no_cloning(
    f: &HybridCpMap,
    samples: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<NoCloningReport, CpError> {
    let d = f.quantum_in_dim();
    if f.out_dim() != d * d || !f.classical_shape().is_empty() {
        return Err(CpError::Dimension(
            "expected a map T(H) -> T(H ⊗ H) (input d, output d²)".into(),
        ));
    }
    // precondition: tr_2 F(T) = T on matrix units
    let mut resid = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mut e = ComplexMatrix::zeros(d, d);
            e.set(i, j, C64::new(1.0, 0.0));
            let out = f.apply(&[], &e)?;
            let first = out.partial_trace((d, d), matcore::Side::Second)?;
            resid = resid.max(first.dist(&e));
        }
    }
    if resid > tol.eq_tol {
        return Err(CpError::Precondition {
            what: "first output marginal of F is not the identity".into(),
            residual: resid,
        });
    }
    // σ from the maximally mixed reference state
    let rho0 = ComplexMatrix::identity(d).scale_re(1.0 / d as f64);
    let sigma = f
        .apply(&[], &rho0)?
        .partial_trace((d, d), matcore::Side::First)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev = 0.0f64;
    for _ in 0..samples {
        let g = ComplexMatrix::from_fn(d, d, |_, _| {
            C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let t = g.add(&g.adjoint());
        let second = f
            .apply(&[], &t)?
            .partial_trace((d, d), matcore::Side::First)?;
        dev = dev.max(second.dist(&sigma.scale(t.trace())));
    }
    Ok(NoCloningReport { sigma, precondition_residual: resid, max_deviation: dev })
}

#[derive(Debug, Clone)]
pub struct CausalLocalReport {
    /// `max_A ‖E(A ⊗ 1) - E_1(A) ⊗ 1‖_F` on a matrix-unit basis.
    pub causal_residual_1: f64,
    /// `max_B ‖E(1 ⊗ B) - 1 ⊗ E_2(B)‖_F`.
    pub causal_residual_2: f64,
    pub e1_extremal: bool,
    pub e2_extremal: bool,
    /// `‖Choi(E) - Choi(E_1 ⊗ E_2)‖_F`.
    pub locality_distance: f64,
    /// Set only when causality holds and a marginal is certified extremal,
    /// in which case Cor. 11 forces `E = E_1 ⊗ E_2`.
    pub asserted_local: Option<bool>,
}

impl CausalLocalReport {
    pub fn to_json(&self) -> Value {
        json!({
            "causal_residual_1": self.causal_residual_1,
            "causal_residual_2": self.causal_residual_2,
            "e1_extremal": self.e1_extremal,
            "e2_extremal": self.e2_extremal,
            "locality_distance": self.locality_distance,
            "asserted_local": self.asserted_local,
        })
    }
}

/// Cor. 11: a causal bipartite channel with an extremal marginal is local.
///
/// `e` must carry two quantum input factors (the output splits as
/// `H_1 ⊗ H_2` with `H_1 = e1.out_dim()`).
pub fn check_causal_local(
    e: &HybridCpMap,
    e1: &HybridCpMap,
    e2: &HybridCpMap,
    tol: &Tolerances,
) -> Result<CausalLocalReport, CpError> {
    let dims = e.quantum_dims();
    if dims.len() != 2 || !e.classical_shape().is_empty() {
        return Err(CpError::Dimension(
            "expected a channel with two quantum input factors".into(),
        ));
    }
    let (k1, k2) = (dims[0], dims[1]);
    let (h1, h2) = (e1.out_dim(), e2.out_dim());
    if e1.quantum_in_dim() != k1 || e2.quantum_in_dim() != k2 || e.out_dim() != h1 * h2 {
        return Err(CpError::Dimension("marginal signatures do not match".into()));
    }
    let mut r1 = 0.0f64;
    for i in 0..k1 {
        for j in 0..k1 {
            let mut a = ComplexMatrix::zeros(k1, k1);
            a.set(i, j, C64::new(1.0, 0.0));
            let lhs = e.apply(&[], &a.kron(&ComplexMatrix::identity(k2)))?;
            let rhs = e1.apply(&[], &a)?.kron(&ComplexMatrix::identity(h2));
            r1 = r1.max(lhs.dist(&rhs));
        }
    }
    let mut r2 = 0.0f64;
    for i in 0..k2 {
        for j in 0..k2 {
            let mut b = ComplexMatrix::zeros(k2, k2);
            b.set(i, j, C64::new(1.0, 0.0));
            let lhs = e.apply(&[], &ComplexMatrix::identity(k1).kron(&b))?;
            let rhs = ComplexMatrix::identity(h1).kron(&e2.apply(&[], &b)?);
            r2 = r2.max(lhs.dist(&rhs));
        }
    }
    let c1 = extremality::is_extremal(e1, tol)?;
    let c2 = extremality::is_extremal(e2, tol)?;
    let product = e1.tensor(e2);
    let locality_distance = e.blocks()[0].dist(&product.blocks()[0]);
    let causal = r1 <= tol.eq_tol && r2 <= tol.eq_tol;
    let asserted_local = if causal && (c1.is_extremal() || c2.is_extremal()) {
        Some(locality_distance <= tol.eq_tol)
    } else {
        None
    };
    Ok(CausalLocalReport {
        causal_residual_1: r1,
        causal_residual_2: r2,
        e1_extremal: c1.is_extremal(),
        e2_extremal: c2.is_extremal(),
        locality_distance,
        asserted_local,
    })
}

// ---------------------------------------------------------------------------
// The noisy qubit pair (§6).
// ---------------------------------------------------------------------------

/// Noisy two-outcome qubit observables along two Bloch axes:
/// `x ↦ ½(I + x·t·n̂·σ)`, `x = ±1`. Outcome 0 is `+`.
pub fn busch_pair(
    t: f64,
    axis1: [f64; 3],
    axis2: [f64; 3],
) -> Result<(HybridCpMap, HybridCpMap), CpError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(CpError::Invalid(format!("t = {t} outside [0, 1]")));
    }
    let mk = |axis: [f64; 3]| -> Result<HybridCpMap, CpError> {
        let s = matcore::pauli::bloch(axis);
        let plus = ComplexMatrix::identity(2).add(&s.scale_re(t)).scale_re(0.5);
        let minus = ComplexMatrix::identity(2).sub(&s.scale_re(t)).scale_re(0.5);
        cpmap::povm(vec![plus, minus])
    };
    Ok((mk(axis1)?, mk(axis2)?))
}

/// The default x/y pair of §6.
pub fn busch_pair_xy(t: f64) -> Result<(HybridCpMap, HybridCpMap), CpError> {
    busch_pair(t, [1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
}

#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub t: f64,
    pub status: String,
    pub gap: f64,
    pub iterations: usize,
    pub unique: String,
}

#[derive(Debug, Clone)]
pub struct BuschScan {
    pub points: Vec<ScanPoint>,
    /// Midpoint of the final feasible/infeasible bracket.
    pub boundary: f64,
    pub bracket: (f64, f64),
}

impl BuschScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,status,gap,iterations,unique\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.6},{},{:.6e},{},{}\n",
                p.t, p.status, p.gap, p.iterations, p.unique
            ));
        }
        out
    }
}

/// Bisect the compatibility boundary of the x/y noisy pair over `t`.
pub fn busch_boundary_scan(
    t_min: f64,
    t_max: f64,
    bisect_tol: f64,
    params: &SolverParams,
    tol: &Tolerances,
) -> Result<BuschScan, CpError> {
    let mut points = Vec::new();
    let eval = |t: f64, points: &mut Vec<ScanPoint>| -> Result<bool, CpError> {
        let (m1, m2) = busch_pair_xy(t)?;
        let sol = find_joint(&m1, &m2, params, tol)?;
        let (status, gap, feasible) = match &sol.status {
            Status::Feasible(_) => ("feasible", 0.0, true),
            Status::Infeasible { gap } => ("infeasible", *gap, false),
            Status::Inconclusive => ("inconclusive", f64::NAN, false),
        };
        let unique = match &sol.uniqueness {
            Uniqueness::Unique => "unique",
            Uniqueness::NonUnique { .. } => "non_unique",
            Uniqueness::Unprobed => "unprobed",
        };
        points.push(ScanPoint {
            t,
            status: status.into(),
            gap,
            iterations: sol.iterations,
            unique: unique.into(),
        });
        Ok(feasible)
    };
    let lo_feasible = eval(t_min, &mut points)?;
    let hi_feasible = eval(t_max, &mut points)?;
    if !lo_feasible || hi_feasible {
        return Err(CpError::Invalid(format!(
            "scan endpoints do not bracket the boundary (t_min feasible: \
             {lo_feasible}, t_max feasible: {hi_feasible})"
        )));
    }
    let (mut lo, mut hi) = (t_min, t_max);
    while hi - lo > bisect_tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut points)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    points.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    Ok(BuschScan { points, boundary: 0.5 * (lo + hi), bracket: (lo, hi) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::pauli;

    #[test]
    fn coords_roundtrip_isometric() {
        let m = ComplexMatrix::from_vec(
            2,
            2,
            vec![
                C64::new(1.0, 0.0),
                C64::new(0.3, -0.4),
                C64::new(0.3, 0.4),
                C64::new(-2.0, 0.0),
            ],
        );
        let v = coords::to_coords(&m);
        assert!(coords::from_coords(&v, 2).dist(&m) < 1e-15);
        let norm_v: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm_v - m.frobenius_norm()).abs() < 1e-13);
    }

    #[test]
    fn joint_of_instrument_marginals_is_found() {
        let tol = Tolerances::default();
        let params = SolverParams::default();
        let m0 = ComplexMatrix::from_real(2, 2, &[0.7, 0.1, 0.1, 0.4]);
        let m1 = ComplexMatrix::identity(2).sub(&m0);
        let psi0 = cpmap::lueders_instrument(&[m0, m1], &tol).unwrap();
        let phi1 = psi0.marginal(0).unwrap();
        let phi2 = psi0.marginal(1).unwrap();
        let sol = find_joint(&phi1, &phi2, &params, &tol).unwrap();
        let psi = sol.joint().expect("feasible");
        assert!(psi.validate(&tol).is_valid());
        for (a, b) in psi.marginal(0).unwrap().blocks().iter().zip(phi1.blocks()) {
            assert!(a.dist(b) < 1e-7);
        }
        for (a, b) in psi.marginal(1).unwrap().blocks().iter().zip(phi2.blocks()) {
            assert!(a.dist(b) < 1e-7);
        }
    }

    #[test]
    fn busch_feasibility_flips_at_the_boundary() {
        let tol = Tolerances::default();
        let params = SolverParams::default();
        let (m1, m2) = busch_pair_xy(0.5).unwrap();
        let sol = find_joint(&m1, &m2, &params, &tol).unwrap();
        assert!(sol.is_feasible(), "t = 0.5 must be compatible");

        let (m1, m2) = busch_pair_xy(0.75).unwrap();
        let sol = find_joint(&m1, &m2, &params, &tol).unwrap();
        match sol.status {
            Status::Infeasible { gap } => assert!(gap > 1e-4, "gap = {gap}"),
            ref other => panic!("t = 0.75 must be infeasible, got {other:?}"),
        }

        let (m1, m2) = busch_pair_xy(1.0).unwrap();
        let sol = find_joint(&m1, &m2, &params, &tol).unwrap();
        assert!(matches!(sol.status, Status::Infeasible { .. }));
    }

    #[test]
    fn busch_boundary_joint_is_unique() {
        let tol = Tolerances::default();
        let params = SolverParams::default();
        let t = 1.0 / 2f64.sqrt();
        let (m1, m2) = busch_pair_xy(t).unwrap();
        let sol = find_joint(&m1, &m2, &params, &tol).unwrap();
        let psi = sol.joint().expect("boundary point is compatible");
        assert!(matches!(sol.uniqueness, Uniqueness::Unique));
        // regression fixture: the joint effects are
        // G(x,y) = ¼(I + t(x σ_x + y σ_y))
        for (idx, (sx, sy)) in
            [(0usize, (1.0, 1.0)), (1, (1.0, -1.0)), (2, (-1.0, 1.0)), (3, (-1.0, -1.0))]
        {
            let g = ComplexMatrix::identity(2)
                .add(&pauli::sigma_x().scale_re(sx * t))
                .add(&pauli::sigma_y().scale_re(sy * t))
                .scale_re(0.25);
            assert!(psi.blocks()[idx].dist(&g) < 1e-6, "effect {idx}");
        }
    }

    #[test]
    fn trivial_coin_joint_is_not_unique() {
        let tol = Tolerances::default();
        let params = SolverParams::default();
        let half = ComplexMatrix::identity(2).scale_re(0.5);
        let coin = cpmap::povm(vec![half.clone(), half]).unwrap();
        let sol = find_joint(&coin, &coin, &params, &tol).unwrap();
        let psi = sol.joint().expect("feasible");
        match &sol.uniqueness {
            Uniqueness::NonUnique { direction, step } => {
                assert!(*step > 1e-3);
                // the perturbed map is still a valid joint with the same
                // marginals
                let prob = FeasibilityProblem::from_marginals(&coin, &coin).unwrap();
                let perturbed: Vec<ComplexMatrix> = psi
                    .blocks()
                    .iter()
                    .zip(direction)
                    .map(|(c, d)| c.add(&d.scale_re(*step)))
                    .collect();
                let v = prob.blocks_to_vec(&perturbed);
                assert!(prob.residual(&v) < 1e-8);
            }
            other => panic!("expected non-unique, got {other:?}"),
        }
    }

    #[test]
    fn product_pvm_joint_is_unique() {
        let tol = Tolerances::default();
        let params = SolverParams::default();
        let p0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p1 = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let pvm = cpmap::povm(vec![p0, p1]).unwrap();
        let joint = product_joint_sharp(&pvm, &pvm, &tol).unwrap();
        let prob = FeasibilityProblem::from_marginals(&pvm, &pvm).unwrap();
        assert!(matches!(
            prob.probe_uniqueness(&joint, &params, &tol),
            Uniqueness::Unique
        ));
    }

    #[test]
    fn product_joint_examples() {
        let tol = Tolerances::default();
        let p0 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p1 = ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let pvm = cpmap::povm(vec![p0.clone(), p1.clone()]).unwrap();

        // PVM with itself: effects δ_xy M_x
        let joint = product_joint_sharp(&pvm, &pvm, &tol).unwrap();
        assert!(joint.validate(&tol).is_valid());
        assert!(joint.effect(&[0, 0]).unwrap().dist(&p0) < 1e-12);
        assert!(joint.effect(&[0, 1]).unwrap().max_abs() < 1e-12);

        // a sharp observable is only compatible with channels that commute
        // with it: the identity channel is rejected...
        let id = cpmap::identity_channel(2);
        assert!(matches!(
            product_joint_sharp(&pvm, &id, &tol),
            Err(CpError::TheoremViolation(_))
        ));
        // ...but the pinching channel B ↦ Σ_x P_x B P_x works, and the
        // product joint is the Lüders instrument
        let pinch = cpmap::channel_from_kraus(&[p0.clone(), p1.clone()]).unwrap();
        let ins = product_joint_sharp(&pvm, &pinch, &tol).unwrap();
        assert!(ins.validate(&tol).is_valid());
        let b = pauli::sigma_x();
        let out = ins.apply(&[0], &b).unwrap();
        assert!(out.dist(&p0.mul(&b).mul(&p0)) < 1e-12);

        // PVM with a commuting noisy POVM
        let t = 0.4;
        let nplus = ComplexMatrix::identity(2)
            .add(&pauli::sigma_z().scale_re(t))
            .scale_re(0.5);
        let nminus = ComplexMatrix::identity(2)
            .sub(&pauli::sigma_z().scale_re(t))
            .scale_re(0.5);
        let noisy = cpmap::povm(vec![nplus, nminus]).unwrap();
        let j2 = product_joint_sharp(&pvm, &noisy, &tol).unwrap();
        assert!(j2.validate(&tol).is_valid());
        for (blk, m) in [(0usize, &pvm), (1, &noisy)] {
            for (a, b) in j2.marginal(blk).unwrap().blocks().iter().zip(m.blocks()) {
                assert!(a.dist(b) < 1e-12);
            }
        }

        // errors: not sharp / not commuting
        assert!(matches!(
            product_joint_sharp(&noisy, &pvm, &tol),
            Err(CpError::NotSharp(_))
        ));
        let px0 = ComplexMatrix::identity(2).add(&pauli::sigma_x()).scale_re(0.5);
        let px1 = ComplexMatrix::identity(2).sub(&pauli::sigma_x()).scale_re(0.5);
        let pvm_x = cpmap::povm(vec![px0, px1]).unwrap();
        assert!(matches!(
            product_joint_sharp(&pvm, &pvm_x, &tol),
            Err(CpError::TheoremViolation(_))
        ));
    }

    #[test]
    fn no_cloning_product_form() {
        let tol = Tolerances::default();
        // F(T) = T ⊗ σ0 as a Schrödinger map: input d=2, output 4
        let sigma0 = ComplexMatrix::from_real(2, 2, &[0.8, 0.0, 0.0, 0.2]);
        let choi = cpmap::choi_from_action(2, 4, |e| e.kron(&sigma0));
        let f = HybridCpMap::new(
            vec![Factor::Quantum(2)],
            4,
            choi.partial_trace((2, 4), matcore::Side::First).unwrap(),
            vec![choi],
        )
        .unwrap();
        let report = check_no_cloning(&f, 20, 7, &tol).unwrap();
        assert!(report.sigma.dist(&sigma0) < 1e-10);
        assert!(report.max_deviation < 1e-10);

        // swapped output violates the precondition
        let choi_bad = cpmap::choi_from_action(2, 4, |e| sigma0.kron(e));
        let f_bad = HybridCpMap::new(
            vec![Factor::Quantum(2)],
            4,
            choi_bad.partial_trace((2, 4), matcore::Side::First).unwrap(),
            vec![choi_bad],
        )
        .unwrap();
        assert!(matches!(
            check_no_cloning(&f_bad, 5, 7, &tol),
            Err(CpError::Precondition { .. })
        ));
    }

    #[test]
    fn causal_local_unitaries() {
        let tol = Tolerances::default();
        let u = pauli::sigma_x();
        let v = pauli::bloch([0.0, 0.6, 0.8]);
        let e1 = cpmap::unitary_channel(&u).unwrap();
        let e2 = cpmap::unitary_channel(&v).unwrap();
        let e = e1.tensor(&e2);
        let report = check_causal_local(&e, &e1, &e2, &tol).unwrap();
        assert!(report.causal_residual_1 < 1e-12);
        assert!(report.causal_residual_2 < 1e-12);
        assert!(report.e1_extremal && report.e2_extremal);
        assert_eq!(report.asserted_local, Some(true));
        assert!(report.locality_distance < 1e-12);
    }

    #[test]
    fn causal_branch_mixture_with_extremal_first_marginal_is_local() {
        // e = ½ U⊗V + ½ U⊗W (Choi mixture): first marginal is the extremal
        // U-channel, so Cor. 11 forces e = U ⊗ (½V + ½W)
        let tol = Tolerances::default();
        let u = pauli::sigma_z();
        let v = pauli::sigma_x();
        let w = pauli::bloch([0.0, 1.0, 0.0]);
        let cu = cpmap::unitary_channel(&u).unwrap();
        let cv = cpmap::unitary_channel(&v).unwrap();
        let cw = cpmap::unitary_channel(&w).unwrap();
        let t1 = cu.tensor(&cv);
        let t2 = cu.tensor(&cw);
        let mix_block = t1.blocks()[0].add(&t2.blocks()[0]).scale_re(0.5);
        let e = HybridCpMap::new(
            t1.factors().to_vec(),
            4,
            t1.normalization().clone(),
            vec![mix_block],
        )
        .unwrap();
        let e2_block = cv.blocks()[0].add(&cw.blocks()[0]).scale_re(0.5);
        let e2 = cpmap::channel_from_choi(e2_block, 2, 2).unwrap();
        let report = check_causal_local(&e, &cu, &e2, &tol).unwrap();
        assert!(report.causal_residual_1 < 1e-12);
        assert!(report.causal_residual_2 < 1e-12);
        assert!(report.e1_extremal);
        assert!(!report.e2_extremal);
        assert_eq!(report.asserted_local, Some(true));
        assert!(report.locality_distance < 1e-10);
    }

    #[test]
    fn boundary_scan_brackets_the_busch_bound() {
        let tol = Tolerances::default();
        let params = SolverParams::default();
        let scan = busch_boundary_scan(0.5, 0.9, 5e-3, &params, &tol).unwrap();
        let expect = 1.0 / 2f64.sqrt();
        assert!(
            (scan.boundary - expect).abs() <= 5e-3,
            "boundary {} vs {expect}",
            scan.boundary
        );
        // monotone: no feasible point above an infeasible one
        let max_feasible = scan
            .points
            .iter()
            .filter(|p| p.status == "feasible")
            .map(|p| p.t)
            .fold(0.0f64, f64::max);
        let min_infeasible = scan
            .points
            .iter()
            .filter(|p| p.status == "infeasible")
            .map(|p| p.t)
            .fold(f64::INFINITY, f64::min);
        assert!(max_feasible < min_infeasible);
        let csv = scan.to_csv();
        assert!(csv.starts_with("t,status,gap,iterations,unique\n"));
    }

    #[test]
    fn busch_pair_rejects_bad_t() {
        assert!(busch_pair_xy(1.5).is_err());
        assert!(busch_pair_xy(-0.1).is_err());
    }

    #[test]
    fn pure_first_marginal_forces_product_state() {
        // Cor. 9(a): ρ on C²⊗C³ with pure first marginal is ρ_1 ⊗ ρ_2 and
        // the joint (as a map) is the unique one with those marginals
        let tol = Tolerances::default();
        let params = SolverParams::default();
        let psi1 = ComplexMatrix::from_real(2, 1, &[0.6, 0.8]);
        let rho1 = psi1.mul(&psi1.adjoint());
        let rho2 = ComplexMatrix::from_real(
            3,
            3,
            &[0.5, 0.1, 0.0, 0.1, 0.3, 0.0, 0.0, 0.0, 0.2],
        );
        let rho = rho1.kron(&rho2);
        // two-factor state-shaped joint map
        let joint = HybridCpMap::new(
            vec![Factor::Quantum(2), Factor::Quantum(3)],
            1,
            ComplexMatrix::identity(1),
            vec![rho.transpose()],
        )
        .unwrap();
        let m1 = joint.marginal(0).unwrap();
        let m2 = joint.marginal(1).unwrap();
        // first marginal is the pure state rho1
        assert!(m1.blocks()[0].dist(&rho1.transpose()) < 1e-12);
        let prob = FeasibilityProblem::from_marginals(&m1, &m2).unwrap();
        assert!(matches!(
            prob.probe_uniqueness(&joint, &params, &tol),
            Uniqueness::Unique
        ));
    }
}
