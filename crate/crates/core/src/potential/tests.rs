use super::*;
use crate::kernels::{
    model_absorbed_diffusion, model_birth_death, model_pure_killing, model_random, DiffusionCoefficients,
};

fn two_state() -> SubMarkovGenerator {
    SubMarkovGenerator::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap()
}

fn sup_diff(a: &StateFunction, b: &[f64]) -> f64 {
    a.values().iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn excessivity_examples() {
    let l = model_random(6, 2.0, 0.5, 4).unwrap();
    let zero = is_alpha_excessive(&StateFunction::zeros(6), &l, 1.0, EXCESSIVE_TOL).unwrap();
    assert!(zero.holds);
    assert_eq!(zero.residual, 0.0);

    let g: StateFunction = vec![0.1, 0.0, 2.0, 0.5, 0.0, 1.0].into();
    let v = resolvent(&l, 1.0).unwrap().apply(&g).unwrap();
    assert!(is_alpha_excessive(&v, &l, 1.0, EXCESSIVE_TOL).unwrap().holds);
    assert!(ExcessiveFunction::certify(v, &l, 1.0, EXCESSIVE_TOL).is_ok());

    let one = StateFunction::constant(2, 1.0);
    let check = is_alpha_excessive(&one, &two_state(), 1.0, EXCESSIVE_TOL).unwrap();
    assert!(check.holds);
    assert_eq!(check.residual, 1.0);

    let spike: StateFunction = vec![1.0, 0.0].into();
    assert!(!is_alpha_excessive(&spike, &two_state(), 1.0, EXCESSIVE_TOL).unwrap().holds);
    assert!(ExcessiveFunction::certify(spike, &two_state(), 1.0, EXCESSIVE_TOL).is_err());
}

#[test]
fn reduite_of_empty_set_is_zero() {
    let l = model_random(5, 1.0, 0.1, 2).unwrap();
    let r = reduite(&StateFunction::constant(5, 3.0), &StateSet::empty(5), &l, 1.0, REDUITE_TOL).unwrap();
    assert!(r.values.values().iter().all(|&v| v == 0.0));
    assert_eq!(r.sweeps, 0);
}

#[test]
fn reduite_of_one_on_whole_conservative_space_is_one() {
    let r = reduite(&StateFunction::constant(2, 1.0), &StateSet::full(2), &two_state(), 1.0, REDUITE_TOL).unwrap();
    assert!(sup_diff(&r.values, &[1.0, 1.0]) < 1e-12);
}

#[test]
fn two_state_single_point_matches_enumeration() {
    let l = two_state();
    let set = StateSet::from_indices(2, &[0]).unwrap();
    let r = reduite(&StateFunction::constant(2, 1.0), &set, &l, 1.0, REDUITE_TOL).unwrap();
    let oracle = lcp::reduite_by_enumeration(l.rates(), 1.0, &[1.0, 0.0]);
    assert!(sup_diff(&r.values, &oracle) < 1e-8, "{:?} vs {oracle:?}", r.values);
    // hand check: off U, (2)v1 - v0 = 0 → v1 = 1/2
    assert!((oracle[1] - 0.5).abs() < 1e-12);
}

#[test]
fn reduite_matches_enumeration_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..4 {
        let n = 4 + seed as usize;
        let l = model_random(n, 3.0, 0.5, seed).unwrap();
        for _ in 0..5 {
            let f: StateFunction = (0..n).map(|_| rng.random::<f64>() * 2.0 - 0.3).collect::<Vec<_>>().into();
            let set = StateSet::from_predicate(n, |_| rng.random_bool(0.5));
            let alpha = [0.5, 1.0, 2.0][rng.random_range(0..3)];
            let r = reduite(&f, &set, &l, alpha, REDUITE_TOL).unwrap();
            let obstacle: Vec<f64> = (0..n).map(|x| if set.contains(x) { f.eval(x) } else { 0.0 }).collect();
            let oracle = lcp::reduite_by_enumeration(l.rates(), alpha, &obstacle);
            assert!(sup_diff(&r.values, &oracle) < 1e-8);
            assert!(r.complementarity_residual < 1e-8);
            assert!(is_alpha_excessive(&r.values, &l, alpha, EXCESSIVE_TOL).unwrap().holds);
        }
    }
}

#[test]
fn reduite_of_excessive_function_is_itself_on_the_set() {
    let l = model_random(6, 2.0, 0.4, 8).unwrap();
    let g: StateFunction = vec![1.0, 0.2, 0.0, 0.7, 0.0, 0.4].into();
    let v = resolvent(&l, 1.0).unwrap().apply(&g).unwrap();
    let set = StateSet::from_indices(6, &[0, 2, 5]).unwrap();
    let r = reduite(&v, &set, &l, 1.0, REDUITE_TOL).unwrap();
    for x in set.indices() {
        assert!((r.values.eval(x) - v.eval(x)).abs() < 1e-10);
    }
    let full = reduite(&v, &StateSet::full(6), &l, 1.0, REDUITE_TOL).unwrap();
    assert!(sup_diff(&full.values, v.values()) < 1e-10);
}

#[test]
fn reduite_reports_non_convergence() {
    let l = model_random(4, 1.0, 0.0, 1).unwrap();
    let opts = ReduiteOptions { tol: 1e-12, max_sweeps: 3 };
    let err = reduite_with(&StateFunction::constant(4, 1.0), &StateSet::from_indices(4, &[0]).unwrap(), &l, 1.0, &opts);
    assert!(matches!(err, Err(Error::NonConvergence { iterations: 3, .. })));
}

#[test]
fn equilibrium_by_definition_examples() {
    let sp = StateSpace::uniform(2, 0.5).unwrap();
    let l = two_state();
    let empty = e_u_by_definition(&StateSet::empty(2), &l, &sp, 4, 1e-8).unwrap();
    assert!(empty.values.values().iter().all(|&v| v == 0.0));
    let full = e_u_by_definition(&StateSet::full(2), &l, &sp, 4, 1e-8).unwrap();
    assert!(sup_diff(&full.values, &[1.0, 1.0]) < 1e-10);

    let sp8 = StateSpace::uniform(8, 1.0).unwrap();
    let l8 = model_random(8, 2.0, 0.5, 17).unwrap();
    let set = StateSet::from_indices(8, &[1, 4, 6]).unwrap();
    let def = e_u_by_definition(&set, &l8, &sp8, 12, 1e-8).unwrap();
    assert!(def.agreement_residual < 1e-8);
    for pair in def.steps.windows(2) {
        for (a, b) in pair[0].values().iter().zip(pair[1].values()) {
            assert!(b + 2e-10 >= *a);
        }
    }
}

#[test]
fn equilibrium_by_definition_flags_truncated_limit() {
    // With k capped at 1, 1 ∧ G_1 φ stays below 1 and the limit is not reached.
    let sp = StateSpace::uniform(3, 1.0).unwrap();
    let l = model_pure_killing(3, 5.0).unwrap();
    let set = StateSet::from_indices(3, &[0]).unwrap();
    assert!(matches!(
        e_u_by_definition(&set, &l, &sp, 0, 1e-8),
        Err(Error::Disagreement { .. })
    ));
}

#[test]
fn capacity_examples() {
    let sp = StateSpace::uniform(5, 0.2).unwrap();
    let l = model_birth_death(5, &[1.0; 4], &[2.0; 4], &[0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(capacity(&StateSet::empty(5), &sp, &l).unwrap().value, 0.0);
    let cap_e = capacity(&StateSet::full(5), &sp, &l).unwrap().value;
    assert!(cap_e <= sp.integrate(&sp.phi()).unwrap() + 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let u = StateSet::from_predicate(5, |_| rng.random_bool(0.5));
        let v = StateSet::from_predicate(5, |_| rng.random_bool(0.5));
        let cu = capacity(&u, &sp, &l).unwrap().value;
        let cv = capacity(&v, &sp, &l).unwrap().value;
        let cup = capacity(&u.union(&v), &sp, &l).unwrap().value;
        let cap = capacity(&u.intersection(&v), &sp, &l).unwrap().value;
        assert!(cu <= cap_e + CAPACITY_TOL);
        assert!(cup + cap <= cu + cv + CAPACITY_TOL);
    }
}

#[test]
fn dual_bound_examples() {
    let sp = StateSpace::uniform(6, 1.0).unwrap().with_phi(vec![1.0, 0.5, 0.3, 0.9, 0.2, 0.7]).unwrap();
    let l = model_random(6, 2.0, 0.5, 12).unwrap();
    let empty = capacity_dual_lower_bound(&StateSet::empty(6), &sp, &l, 5, 0).unwrap();
    assert!(empty.max.abs() < 1e-14);
    let set = StateSet::from_indices(6, &[2, 3]).unwrap();
    let cap = capacity(&set, &sp, &l).unwrap().value;
    let dual = capacity_dual_lower_bound(&set, &sp, &l, 30, 3).unwrap();
    assert!((dual.samples[0] - cap).abs() < 1e-9);
    assert!(dual.samples.iter().all(|&s| s <= cap + 1e-9));
}

#[test]
fn markov_inequality_examples() {
    let sp = StateSpace::uniform(2, 0.5).unwrap();
    let l = two_state();
    let zero = capacity_markov_inequality(&StateFunction::zeros(2), 0.5, &sp, &l).unwrap();
    assert_eq!((zero.lhs, zero.holds), (0.0, true));
    assert!(zero.rhs.abs() < 1e-15);
    let one = capacity_markov_inequality(&StateFunction::constant(2, 1.0), 0.5, &sp, &l).unwrap();
    assert!((one.lhs - 1.0).abs() < 1e-10);
    assert!((one.rhs - 2.0).abs() < 1e-9);
    assert!(one.holds);
    assert!(capacity_markov_inequality(&StateFunction::zeros(2), 0.0, &sp, &l).is_err());
}

#[test]
fn capacity_phi_comparison() {
    let sp = StateSpace::uniform(5, 1.0).unwrap();
    let phi2 = vec![0.2, 1.0, 0.5, 0.8, 0.3];
    let sp2 = sp.with_phi(phi2.clone()).unwrap();
    let l = model_random(5, 1.5, 0.4, 31).unwrap();
    let (lo, hi) = (0.2, 1.0);
    for mask in 1u32..32 {
        let set = StateSet::from_predicate(5, |x| mask & (1 << x) != 0);
        let c1 = capacity(&set, &sp, &l).unwrap().value;
        let c2 = capacity(&set, &sp2, &l).unwrap().value;
        assert!(c1 > 0.0 && c2 > 0.0);
        assert!(c2 >= lo * c1 - 1e-12 && c2 <= hi * c1 + 1e-12);
    }
}

#[test]
fn modified_sequence_empty_sets() {
    let sp = StateSpace::uniform(3, 1.0).unwrap();
    let l = model_random(3, 1.0, 0.2, 5).unwrap();
    let sets = vec![StateSet::empty(3); 3];
    let seq = build_modified_sequence(&sets, &l, &sp, &ModifiedGrids::default(), 1e-9).unwrap();
    for n in 0..3 {
        assert!(seq.e[n].values().iter().all(|&v| v == 0.0));
        assert!(seq.patch_sets[n].is_empty());
        assert!(seq.e_hat[n].values().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn modified_sequence_full_conservative_space_refines_to_one() {
    let sp = StateSpace::uniform(2, 0.5).unwrap();
    let l = two_state();
    let sets = vec![StateSet::full(2)];
    let mut last_gap = f64::INFINITY;
    let mut patch_sizes = Vec::new();
    for top in [4, 10, 20, 50] {
        let grids = ModifiedGrids { alpha: crate::numerics::dyadic_grid(0, top, 1), l: vec![1.0, 2.0] };
        let seq = build_modified_sequence(&sets, &l, &sp, &grids, 1e-9).unwrap();
        let gap = sup_diff(&seq.e[0], &[1.0, 1.0]);
        assert!(gap <= last_gap);
        last_gap = gap;
        patch_sizes.push(seq.patch_sets[0].count());
        assert!(seq.e_hat[0].values().iter().all(|&v| v >= 1.0));
    }
    assert_eq!(patch_sizes.first(), Some(&2));
    assert_eq!(patch_sizes.last(), Some(&0));
}

#[test]
fn modified_sequence_rejects_growing_sets() {
    let sp = StateSpace::uniform(3, 1.0).unwrap();
    let l = model_random(3, 1.0, 0.2, 5).unwrap();
    let sets = vec![StateSet::from_indices(3, &[0]).unwrap(), StateSet::full(3)];
    assert!(matches!(
        build_modified_sequence(&sets, &l, &sp, &ModifiedGrids::default(), 1e-9),
        Err(Error::SetsNotDecreasing { index: 1 })
    ));
}

#[test]
fn modified_sequence_on_diffusion_boxes() {
    let coeffs = DiffusionCoefficients { drift: &|_| 0.0, diffusion: &|_| 0.05 };
    let l = model_absorbed_diffusion(12, &coeffs).unwrap();
    let sp = StateSpace::uniform(12, 1.0 / 12.0).unwrap();
    let sets: Vec<StateSet> = [(2, 10), (4, 8), (5, 7), (6, 6)]
        .iter()
        .map(|&(a, b)| StateSet::from_predicate(12, |x| x >= a && x < b))
        .collect();
    let seq = build_modified_sequence(&sets, &l, &sp, &ModifiedGrids::default(), 1e-9).unwrap();
    for (n, set) in sets.iter().enumerate() {
        for x in set.indices() {
            assert!(seq.e_hat[n].eval(x) >= 1.0);
        }
        assert!(seq.patch_sets[n].is_empty(), "patch set {} at n={n}", seq.patch_sets[n]);
        let exact = equilibrium(set, &l, REDUITE_TOL).unwrap();
        assert!(sup_diff(&seq.e_hat[n], exact.values()) < 1e-9);
    }
    assert_eq!(seq.capacities[3], 0.0);
    assert!(seq.capacities.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn reduite_is_monotone_in_base_and_set() {
    let l = model_random(7, 2.0, 0.3, 44).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..10 {
        let f: StateFunction = (0..7).map(|_| rng.random::<f64>()).collect::<Vec<_>>().into();
        let g = f.map(|v| v + rng.random::<f64>() * 0.5);
        let u = StateSet::from_predicate(7, |_| rng.random_bool(0.4));
        let v = u.union(&StateSet::from_predicate(7, |_| rng.random_bool(0.4)));
        let rf = reduite(&f, &u, &l, 1.0, REDUITE_TOL).unwrap().values;
        let rg = reduite(&g, &u, &l, 1.0, REDUITE_TOL).unwrap().values;
        let rfv = reduite(&f, &v, &l, 1.0, REDUITE_TOL).unwrap().values;
        for x in 0..7 {
            assert!(rf.eval(x) <= rg.eval(x) + 1e-10);
            assert!(rf.eval(x) <= rfv.eval(x) + 1e-10);
        }
    }
}
