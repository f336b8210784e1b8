use std::sync::Arc;

use affine_ocp::euler::{embed, recursion_defects, stationarity_violations, sweep_solve, SweepConfig};
use affine_ocp::model::{affinity_defect, hamiltonian_minimizer, Example1};
use affine_ocp::perturb::{measure_budget, sample_family, PerturbationSpec};
use affine_ocp::solution::{distance_y, sample_on_grid};
use affine_ocp::variation::{gamma, lambda_map, linearize, Disturbance};
use affine_ocp::{ContinuousTriple, ControlAffineProblem, Grid, GridFunction, Interpolation, NormKind, Polytope};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = (f64, f64)> {
    (1.2f64..4.0).prop_flat_map(|b| (0.05f64..=b / 2.0, Just(b)))
}

fn piecewise(n: usize, values: &[f64]) -> GridFunction {
    let g = Grid::new(n, 1.0).unwrap();
    let k = values.len();
    GridFunction::from_fn(g, 1, Interpolation::PiecewiseConstant, |t, o| {
        o[0] = values[((t * k as f64) as usize).min(k - 1)]
    })
}

fn oracle_lin(alpha: f64, beta: f64, n: usize) -> affine_ocp::variation::LinearizationData {
    let p = Example1::new(alpha, beta).unwrap();
    let tr = sample_on_grid(&p.oracle(), Grid::new(n, 1.0).unwrap()).unwrap();
    linearize(&p, &tr).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sweep_recursions_hold_bitwise((alpha, beta) in params(), n in 8usize..300) {
        let p = Example1::new(alpha, beta).unwrap();
        let r = sweep_solve(&p, Grid::new(n, 1.0).unwrap(), &SweepConfig::default(), None).unwrap();
        let (bx, bp) = recursion_defects(&p, &r.triple);
        prop_assert!(bx.is_empty() && bp.is_empty());
        prop_assert_eq!(r.triple.costate.at(n)[0], 0.0);
        prop_assert!(stationarity_violations(&p, &r.triple, SweepConfig::default().tol_round).is_empty());
    }

    #[test]
    fn embedding_keeps_nodes((alpha, beta) in params(), n in 1usize..200) {
        let p = Example1::new(alpha, beta).unwrap();
        let r = sweep_solve(&p, Grid::new(n, 1.0).unwrap(), &SweepConfig::default(), None).unwrap();
        let e = embed(&r.triple);
        let (mut x, mut q) = ([0.0], [0.0]);
        for i in 0..=n {
            let t = r.triple.grid().node(i);
            e.state(t, &mut x);
            e.costate(t, &mut q);
            prop_assert_eq!(x[0], r.triple.state.at(i)[0]);
            prop_assert_eq!(q[0], r.triple.costate.at(i)[0]);
        }
        e.costate(1.0, &mut q);
        prop_assert_eq!(q[0], 0.0);
    }

    #[test]
    fn gamma_is_quadratic(values in prop::collection::vec(-1.0f64..1.0, 1..8)) {
        let lin = oracle_lin(0.5, 2.0, 128);
        let du = piecewise(128, &values);
        let g1 = gamma(&lin, &du).unwrap();
        for c in [-2.0, -1.0, 0.5, 3.0] {
            let gc = gamma(&lin, &du.scaled(c)).unwrap();
            prop_assert!((gc - c * c * g1).abs() <= 1e-10 * (c * c * g1).abs().max(1e-300));
        }
    }

    #[test]
    fn lambda_is_affine(
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        v1 in prop::collection::vec(-1.0f64..1.0, 1..6),
        v2 in prop::collection::vec(-1.0f64..1.0, 1..6),
    ) {
        let lin = oracle_lin(0.5, 2.0, 128);
        let z = Disturbance::default();
        let u0 = lin.reference_control().clone();
        let (d1, d2) = (piecewise(128, &v1), piecewise(128, &v2));
        let base = lambda_map(&lin, &u0, &z).unwrap();
        let l1 = lambda_map(&lin, &u0.add(&d1).unwrap(), &z).unwrap().sub(&base).unwrap();
        let l2 = lambda_map(&lin, &u0.add(&d2).unwrap(), &z).unwrap().sub(&base).unwrap();
        let mix = u0.add(&d1.scaled(a)).unwrap().add(&d2.scaled(b)).unwrap();
        let lm = lambda_map(&lin, &mix, &z).unwrap().sub(&base).unwrap();
        let want = l1.scaled(a).add(&l2.scaled(b)).unwrap();
        prop_assert!(lm.distance(&want, NormKind::Linf).unwrap() <= 1e-9);
    }

    #[test]
    fn symmetry_certificate_is_exact((alpha, beta) in params()) {
        let lin = oracle_lin(alpha, beta, 64);
        prop_assert_eq!(lin.symmetry_defect, 0.0);
        prop_assert_eq!(lin.hessian_asymmetry, 0.0);
    }

    #[test]
    fn minimizer_beats_every_vertex(
        bounds in prop::collection::vec((-3.0f64..0.0, 0.01f64..3.0), 1..5),
        seed in prop::collection::vec(-1.0f64..1.0, 5),
    ) {
        let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
        let hi: Vec<f64> = bounds.iter().map(|b| b.0 + b.1).collect();
        let sigma: Vec<f64> = seed[..lo.len()].to_vec();
        let set = Polytope::new_box(lo, hi).unwrap();
        let v = hamiltonian_minimizer(&sigma, &set);
        let val: f64 = v.iter().zip(&sigma).map(|(a, b)| a * b).sum();
        for w in set.vertices() {
            let other: f64 = w.iter().zip(&sigma).map(|(a, b)| a * b).sum();
            prop_assert!(val <= other + 1e-15);
        }
    }

    #[test]
    fn sampled_members_within_budget(seed in 0u64..1000, rho in 1e-4f64..0.5) {
        let base: Arc<dyn ControlAffineProblem> = Arc::new(Example1::new(0.5, 2.0).unwrap());
        let fam = sample_family(base.clone(), &PerturbationSpec::standard(&*base, rho, 3, seed)).unwrap();
        for m in &fam {
            let (f, g) = measure_budget(m).unwrap();
            prop_assert!(f + g <= rho);
            for x in [-4.0, -0.5, 0.0, 1.3, 4.9] {
                prop_assert!(affinity_defect(m, 0.0, &[x]) <= 1e-13);
            }
        }
    }

    #[test]
    fn distance_is_symmetric((alpha, beta) in params(), n in 4usize..64) {
        let p = Example1::new(alpha, beta).unwrap();
        let r = sweep_solve(&p, Grid::new(n, 1.0).unwrap(), &SweepConfig::default(), None).unwrap();
        let o = p.oracle();
        let d1 = distance_y(&embed(&r.triple), &o, n).total();
        let d2 = distance_y(&o, &embed(&r.triple), n).total();
        prop_assert!(d1 >= 0.0);
        prop_assert!((d1 - d2).abs() <= 1e-12 * d1.max(1.0));
    }

    #[test]
    fn grid_norm_triangle(a in prop::collection::vec(-5.0f64..5.0, 17), b in prop::collection::vec(-5.0f64..5.0, 17)) {
        let g = Grid::new(16, 2.0).unwrap();
        let fa = GridFunction::linear(g, 1, a).unwrap();
        let fb = GridFunction::linear(g, 1, b).unwrap();
        for kind in [NormKind::L1, NormKind::Linf, NormKind::W11] {
            let lhs = fa.add(&fb).unwrap().norm(kind).unwrap();
            let rhs = fa.norm(kind).unwrap() + fb.norm(kind).unwrap();
            prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
        }
    }
}
