//! Joint-map round trip: for random two-factor maps of every signature kind,
//! the solver finds a joint of the marginals that reproduces both marginals.

use cpkit::cpmap::{Factor, HybridCpMap};
use cpkit::joint::{FeasibilityProblem, SolverParams};
use cpkit::matcore::{ComplexMatrix, Side, Tolerances};
use cpkit::verify;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random two-factor map with strictly positive Choi blocks (an interior
/// point, so the marginals are certainly compatible).
fn random_joint(rng: &mut ChaCha8Rng, factors: Vec<Factor>, h: usize) -> HybridCpMap {
    let q: usize = factors
        .iter()
        .filter_map(|f| match f {
            Factor::Quantum(d) => Some(*d),
            _ => None,
        })
        .product();
    let n_blocks: usize = factors
        .iter()
        .filter_map(|f| match f {
            Factor::Classical(n) => Some(*n),
            _ => None,
        })
        .product::<usize>()
        .max(1);
    let side = q * h;
    let blocks: Vec<ComplexMatrix> = (0..n_blocks)
        .map(|_| {
            let m = verify::random_matrix(rng, side, side + 1);
            m.mul(&m.adjoint())
        })
        .collect();
    let mut p = ComplexMatrix::zeros(h, h);
    for b in &blocks {
        p = p.add(&b.partial_trace((q, h), Side::First).unwrap());
    }
    HybridCpMap::new(factors, h, p, blocks).unwrap()
}

fn marginal_residual(psi: &HybridCpMap, target: &HybridCpMap, keep: usize) -> f64 {
    let got = psi.marginal(keep).unwrap();
    got.blocks()
        .iter()
        .zip(target.blocks())
        .map(|(a, b)| a.dist(b))
        .fold(0.0f64, f64::max)
}

#[test]
fn marginals_of_random_joints_are_compatible() {
    let tol = Tolerances::default();
    let params = SolverParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let kinds: [(Factor, Factor); 4] = [
        (Factor::Classical(2), Factor::Classical(3)),
        (Factor::Classical(2), Factor::Quantum(2)),
        (Factor::Quantum(2), Factor::Classical(3)),
        (Factor::Quantum(2), Factor::Quantum(2)),
    ];
    for i in 0..100 {
        let (f1, f2) = kinds[i % kinds.len()];
        let h = 2 + i % 2;
        let psi0 = random_joint(&mut rng, vec![f1, f2], h);
        let m1 = psi0.marginal(0).unwrap();
        let m2 = psi0.marginal(1).unwrap();
        let prob = FeasibilityProblem::from_marginals(&m1, &m2).unwrap();
        let sol = prob.solve(&params, &tol);
        let psi = sol
            .joint()
            .unwrap_or_else(|| panic!("instance {i}: expected feasible, got {:?}", sol.status));
        let r = marginal_residual(psi, &m1, 0).max(marginal_residual(psi, &m2, 1));
        assert!(
            r <= tol.eq_tol * psi0.total().frobenius_norm().max(1.0),
            "instance {i}: marginal residual {r:.3e}"
        );
    }
}
