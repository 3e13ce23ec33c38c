//! Closed-form examples run by the `selftest` subcommand. Every case has an
//! answer known by hand, so any failure points at a broken build.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::diagnostics::{build_separating_family, path_regularity_stats, rho_distance, weak_convergence_probe};
use crate::error::Result;
use crate::kernels::{
    adjoint, check_resolvent_identity, check_yosida_resolvent_bound, extend_cemetery, model_birth_death, resolvent,
    SubMarkovGenerator,
};
use crate::potential::{
    build_modified_sequence, capacity, capacity_dual_lower_bound, capacity_markov_inequality, e_u_by_definition,
    is_alpha_excessive, reduite, ModifiedGrids,
};
use crate::simulator::{
    check_two_excessive, hitting_time, invariance_check, mc_exit_bound, mc_laplace, path_rng, sample_chain_step,
    sample_path, sample_paths, McRun, MCEstimate,
};
use crate::space::{StateFunction, StateSet, StateSpace};
use crate::yosida::{approx_form_eval, approx_resolvent, approx_semigroup, convergence_table, yosida_generator};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelfTestCase {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn killing() -> SubMarkovGenerator {
    SubMarkovGenerator::from_rows(&[vec![-1.0]]).expect("valid generator")
}

fn symmetric() -> SubMarkovGenerator {
    SubMarkovGenerator::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).expect("valid generator")
}

fn conservative() -> SubMarkovGenerator {
    SubMarkovGenerator::from_rows(&[vec![-1.0, 0.6, 0.4], vec![0.5, -0.5, 0.0], vec![0.2, 0.8, -1.0]])
        .expect("valid generator")
}

type Case = (&'static str, fn() -> Result<(bool, String)>);

const CASES: &[Case] = &[
    ("integrate zero", || {
        let v = StateSpace::uniform(3, 0.7)?.integrate(&StateFunction::zeros(3))?;
        Ok((v == 0.0, format!("{v}")))
    }),
    ("integrate one gives total mass", || {
        let v = StateSpace::uniform(2, 0.5)?.integrate(&StateFunction::constant(2, 1.0))?;
        Ok((close(v, 1.0, 1e-15), format!("{v}")))
    }),
    ("integrate 1+2+3", || {
        let v = StateSpace::uniform(3, 1.0)?.integrate(&vec![1.0, 2.0, 3.0].into())?;
        Ok((close(v, 6.0, 1e-15), format!("{v}")))
    }),
    ("inner products", || {
        let sp = StateSpace::uniform(2, 1.0)?.with_mass(vec![2.0, 3.0])?;
        let zero = sp.h_inner(&StateFunction::zeros(2), &StateFunction::zeros(2))?;
        let disjoint = sp.h_inner(&vec![1.0, 0.0].into(), &vec![0.0, 1.0].into())?;
        let ones = sp.h_inner(&StateFunction::constant(2, 1.0), &StateFunction::constant(2, 1.0))?;
        Ok((zero == 0.0 && disjoint == 0.0 && close(ones, 5.0, 1e-15), format!("{zero} {disjoint} {ones}")))
    }),
    ("extension to the cemetery", || {
        let z = StateFunction::zeros(3).extend_to_cemetery();
        let one = StateFunction::constant(3, 1.0).extend_to_cemetery();
        Ok((z == vec![0.0; 4] && one == vec![1.0, 1.0, 1.0, 0.0], format!("{one:?}")))
    }),
    ("resolvent of pure killing", || {
        let g = resolvent(&killing(), 1.0)?;
        Ok((close(g.matrix()[(0, 0)], 0.5, 1e-15), format!("{}", g.matrix()[(0, 0)])))
    }),
    ("resolvent of symmetric pair", || {
        let g = resolvent(&symmetric(), 1.0)?;
        let exact = DMatrix::from_row_slice(2, 2, &[2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 2.0 / 3.0]);
        let err = (g.matrix() - exact).amax();
        Ok((err < 1e-15, format!("{err:e}")))
    }),
    ("cemetery defect of pure killing", || {
        let e = extend_cemetery(&resolvent(&killing(), 1.0)?, 1e-12)?;
        let m = e.matrix();
        Ok((close(m[(0, 0)], 0.5, 1e-15) && close(m[(0, 1)], 0.5, 1e-15), format!("{m}")))
    }),
    ("conservative chain has no defect", || {
        let e = extend_cemetery(&resolvent(&conservative(), 0.7)?, 1e-12)?;
        let worst = (0..3).map(|x| e.matrix()[(x, 3)].abs()).fold(0.0, f64::max);
        Ok((worst < 1e-13, format!("{worst:e}")))
    }),
    ("symmetric generator is self-adjoint", || {
        let g = resolvent(&symmetric(), 2.0)?;
        let a = adjoint(&g, &StateSpace::uniform(2, 1.0)?)?;
        let err = (a.matrix() - g.matrix()).amax();
        Ok((err < 1e-15, format!("{err:e}")))
    }),
    ("resolvent identity at equal orders", || {
        let r = check_resolvent_identity(&conservative(), 1.5, 1.5, 1e-11)?;
        Ok((r.residual == 0.0, format!("{:e}", r.residual)))
    }),
    ("resolvent identity scalar", || {
        let g1 = resolvent(&killing(), 1.0)?.matrix()[(0, 0)];
        let g2 = resolvent(&killing(), 2.0)?.matrix()[(0, 0)];
        let r = check_resolvent_identity(&killing(), 1.0, 2.0, 1e-11)?;
        Ok((close(g1 - g2, 1.0 / 6.0, 1e-15) && r.holds, format!("{:e}", r.residual)))
    }),
    ("Yosida resolvent bound for zero", || {
        let r = check_yosida_resolvent_bound(&conservative(), &StateFunction::zeros(3), &[1.0, 4.0], 1e-12)?;
        Ok((r.holds && r.max_violation <= 0.0, format!("{:e}", r.max_violation)))
    }),
    ("birth-death on one state is killing", || {
        let l = model_birth_death(1, &[], &[], &[1.0])?;
        Ok((l.rates()[(0, 0)] == -1.0, format!("{}", l.rates())))
    }),
    ("excessivity certificates", || {
        let l = conservative();
        let zero = is_alpha_excessive(&StateFunction::zeros(3), &l, 1.0, 1e-10)?;
        let pot = resolvent(&l, 1.0)?.apply(&vec![0.2, 0.0, 1.0].into())?;
        let pot = is_alpha_excessive(&pot, &l, 1.0, 1e-10)?;
        let one = is_alpha_excessive(&StateFunction::constant(3, 1.0), &l, 1.0, 1e-10)?;
        Ok((zero.holds && zero.residual == 0.0 && pot.holds && one.holds, String::new()))
    }),
    ("réduite on empty and full sets", || {
        let l = conservative();
        let one = StateFunction::constant(3, 1.0);
        let empty = reduite(&one, &StateSet::empty(3), &l, 1.0, 1e-10)?;
        let full = reduite(&one, &StateSet::full(3), &l, 1.0, 1e-10)?;
        let ok = empty.values.sup_norm() == 0.0 && full.values.values().iter().all(|&v| close(v, 1.0, 1e-10));
        Ok((ok, format!("{:?}", full.values.values())))
    }),
    ("equilibrium by definition", || {
        let l = conservative();
        let sp = StateSpace::uniform(3, 1.0)?;
        let empty = e_u_by_definition(&StateSet::empty(3), &l, &sp, 8, 1e-8)?;
        let full = e_u_by_definition(&StateSet::full(3), &l, &sp, 8, 1e-8)?;
        let ok = empty.values.sup_norm() == 0.0 && full.values.values().iter().all(|&v| close(v, 1.0, 1e-8));
        Ok((ok, format!("{:?}", full.values.values())))
    }),
    ("capacity monotone with empty set zero", || {
        let l = model_birth_death(4, &[1.0, 0.5, 2.0], &[0.3, 1.0, 0.7], &[0.2, 0.0, 0.1, 0.4])?;
        let sp = StateSpace::uniform(4, 0.25)?;
        let empty = capacity(&StateSet::empty(4), &sp, &l)?.value;
        let full = capacity(&StateSet::full(4), &sp, &l)?.value;
        let mut ok = empty == 0.0;
        for mask in 0u32..16 {
            let set = StateSet::from_predicate(4, |x| mask & (1 << x) != 0);
            ok &= capacity(&set, &sp, &l)?.value <= full + 1e-9;
        }
        Ok((ok, format!("Cap(E) = {full}")))
    }),
    ("dual bound on empty set", || {
        let l = conservative();
        let d = capacity_dual_lower_bound(&StateSet::empty(3), &StateSpace::uniform(3, 1.0)?, &l, 8, 1)?;
        Ok((d.max.abs() < 1e-12, format!("{:e}", d.max)))
    }),
    ("Markov inequality examples", || {
        let l = conservative();
        let sp = StateSpace::uniform(3, 1.0)?;
        let zero = capacity_markov_inequality(&StateFunction::zeros(3), 0.5, &sp, &l)?;
        let one = capacity_markov_inequality(&StateFunction::constant(3, 1.0), 0.5, &sp, &l)?;
        let total = sp.integrate(&sp.phi())?;
        let ok = zero.holds && zero.lhs == 0.0 && one.holds && close(one.lhs, total, 1e-9);
        Ok((ok, format!("{} <= {}", one.lhs, one.rhs)))
    }),
    ("modified sequence of empty sets", || {
        let l = conservative();
        let sets = vec![StateSet::empty(3), StateSet::empty(3)];
        let seq = build_modified_sequence(&sets, &l, &StateSpace::uniform(3, 1.0)?, &ModifiedGrids::default(), 1e-9)?;
        let ok = seq.e_hat.iter().all(|e| e.sup_norm() == 0.0) && seq.patch_sets.iter().all(StateSet::is_empty);
        Ok((ok, String::new()))
    }),
    ("Yosida generator of pure killing", || {
        let half = yosida_generator(&killing(), 1.0)?.generator()[(0, 0)];
        let big = yosida_generator(&killing(), 1e6)?.generator()[(0, 0)];
        Ok((close(half, -0.5, 1e-15) && close(big, -1e6 / (1e6 + 1.0), 1e-9), format!("{half} {big}")))
    }),
    ("semigroup at zero and mass conservation", || {
        let ya = yosida_generator(&conservative(), 3.0)?;
        let f: StateFunction = vec![0.3, -1.0, 2.0].into();
        let at_zero = approx_semigroup(&ya, 0.0, &f, 1e-12)?.values == f;
        let ones = approx_semigroup(&ya, 1.5, &StateFunction::constant(3, 1.0), 1e-12)?;
        let kept = ones.values.values().iter().all(|&v| close(v, 1.0, 1e-12));
        Ok((at_zero && kept, String::new()))
    }),
    ("approximate resolvent both routes", || {
        let r = approx_resolvent(&killing(), 1.0, 1.0)?[(0, 0)];
        let lb = yosida_generator(&killing(), 1.0)?.generator()[(0, 0)];
        Ok((close(r, 2.0 / 3.0, 1e-15) && close(1.0 / (1.0 - lb), 2.0 / 3.0, 1e-15), format!("{r}")))
    }),
    ("approximate resolvent conserves mass", || {
        let alpha = 1e-6;
        let r = approx_resolvent(&conservative(), alpha, 4.0)?;
        let worst = r.row_iter().map(|row| (alpha * row.sum() - 1.0).abs()).fold(0.0, f64::max);
        Ok((worst < 1e-6, format!("{worst:e}")))
    }),
    ("approximate form on constants", || {
        let sp = StateSpace::uniform(3, 1.0)?;
        let z = StateFunction::zeros(3);
        let zero = approx_form_eval(&conservative(), &sp, 2.0, &z, &z)?;
        let inv = approx_form_eval(&conservative(), &sp, 5.0, &StateFunction::constant(3, 1.0), &vec![1.0, -2.0, 4.0].into())?;
        Ok((zero == 0.0 && inv.abs() < 1e-12, format!("{inv:e}")))
    }),
    ("convergence table scalar", || {
        let sp = StateSpace::uniform(1, 1.0)?;
        let zero = convergence_table(&killing(), &sp, &StateFunction::zeros(1), 1.0, &[1.0, 2.0])?;
        let t = convergence_table(&killing(), &sp, &StateFunction::constant(1, 1.0), 1.0, &[1.0, 2.0])?;
        let e1 = ((-0.5f64).exp() - (-1f64).exp()).abs();
        let ok = zero.rows.iter().all(|r| r.sup_error == 0.0) && close(t.rows[0].sup_error, e1, 1e-14);
        Ok((ok, format!("e(1) = {:.4}", t.rows[0].sup_error)))
    }),
    ("chain step from cemetery and scalar kernel", || {
        let ya = yosida_generator(&killing(), 1.0)?;
        let mut rng = path_rng(1, 0);
        let stays = (0..1000).all(|_| sample_chain_step(1, ya.chain_step(), &mut rng) == 1);
        let draws = 100_000;
        let same = (0..draws).filter(|_| sample_chain_step(0, ya.chain_step(), &mut rng) == 0).count();
        let p = same as f64 / draws as f64;
        Ok((stays && close(p, 0.5, 4.0 * (0.25 / draws as f64).sqrt()), format!("{p}")))
    }),
    ("paths without arrivals and Poisson mean", || {
        let ya = yosida_generator(&conservative(), 3.0)?;
        let quiet = sample_path(1, &ya, 1e-12, &mut path_rng(2, 0))?;
        let counts: Vec<f64> =
            sample_paths(0, &ya, 2.0, 100_000, 3)?.iter().map(|p| p.jump_count() as f64).collect();
        let est = MCEstimate::from_values(&counts, 3)?;
        Ok((quiet.states == vec![1] && est.agrees_with(6.0, 0.0), format!("{} ± {}", est.mean, est.std_error)))
    }),
    ("hitting time at start and of empty set", || {
        let ya = yosida_generator(&conservative(), 2.0)?;
        let p = sample_path(1, &ya, 5.0, &mut path_rng(4, 0))?;
        let start = hitting_time(&p, &StateSet::from_indices(3, &[1])?) == Some(0.0);
        let never = hitting_time(&p, &StateSet::empty(3)).is_none();
        Ok((start && never, String::new()))
    }),
    ("Laplace estimator examples", || {
        let run = McRun { n_paths: 100_000, horizon: 30.0, seed: 5 };
        let ya = yosida_generator(&killing(), 1.0)?;
        let zero = mc_laplace(0, 1.0, &StateFunction::zeros(1), &ya, run, 1e-9)?.estimate.mean == 0.0;
        let est = mc_laplace(0, 1.0, &StateFunction::constant(1, 1.0), &ya, run, 1e-9)?;
        let yc = yosida_generator(&conservative(), 2.0)?;
        let mass = mc_laplace(0, 0.5, &StateFunction::constant(3, 1.0), &yc, McRun { horizon: 60.0, n_paths: 1_000, ..run }, 1e-9)?;
        let ok = zero && est.estimate.agrees_with(2.0 / 3.0, est.bias_bound) && close(mass.estimate.mean, 2.0, 1e-9);
        Ok((ok, format!("{} ± {}", est.estimate.mean, est.estimate.std_error)))
    }),
    ("exit bound pinned cases", || {
        let l = conservative();
        let ya = yosida_generator(&l, 2.0)?;
        let set = StateSet::from_indices(3, &[0])?;
        let e_hat = StateFunction::constant(3, 1.0);
        let run = McRun { n_paths: 1_000, horizon: 10.0, seed: 6 };
        let inside = mc_exit_bound(0, &set, &e_hat, &ya, run)?;
        let empty = mc_exit_bound(1, &StateSet::empty(3), &StateFunction::zeros(3), &ya, run)?;
        let ok = inside.estimate.mean == 1.0 && inside.verdict && empty.verdict;
        Ok((ok, format!("{}", empty.estimate.mean)))
    }),
    ("2-excessivity of zero and one", || {
        let ya = yosida_generator(&conservative(), 2.0)?;
        let grid = [0.001, 0.1, 1.0, 2.0];
        let zero = check_two_excessive(&StateFunction::zeros(3), &ya, &grid)?;
        let one = check_two_excessive(&StateFunction::constant(3, 1.0), &ya, &grid)?;
        Ok((zero.holds && one.holds, format!("{:e}", one.max_violation)))
    }),
    ("invariance of whole space and premise rejection", || {
        let l = model_birth_death(3, &[1.0, 1.0], &[1.0, 1.0], &[0.0, 0.0, 0.5])?;
        let ya = yosida_generator(&l, 2.0)?;
        let paths = sample_paths(0, &ya, 2.0, 200, 7)?;
        let whole = invariance_check(&l, &paths, &StateSet::full(3))?.holds;
        let refused = invariance_check(&l, &paths, &StateSet::from_indices(3, &[0, 1])?).is_err();
        Ok((whole && refused, String::new()))
    }),
    ("separation and rho at the cemetery", || {
        let fam = build_separating_family(&StateSpace::uniform(1, 1.0)?, &killing(), 1)?;
        let g = fam.g_list()[0].eval(0);
        let rho = rho_distance(0, 1, &fam);
        let l = conservative();
        let ind = build_separating_family(&StateSpace::uniform(3, 1.0)?, &l, 4)?;
        let self_zero = (0..=3).all(|x| rho_distance(x, x, &ind) == 0.0);
        Ok((g > 0.0 && close(rho, 0.5 * g.min(1.0), 1e-15) && self_zero, format!("{rho}")))
    }),
    ("probe scalar discrepancy and constant", || {
        let fam = build_separating_family(&StateSpace::uniform(1, 1.0)?, &killing(), 1)?;
        let r = weak_convergence_probe(&killing(), 0, &[1.0, 4.0], &[1.0], &fam, 2_000, 8)?;
        let exact = 0.5 * ((-0.5f64).exp() - (-1f64).exp());
        Ok((close(r.rows[0].exact_discrepancy, exact, 1e-14), format!("{}", r.rows[0].exact_discrepancy)))
    }),
    ("regularity statistics of quiet and killed paths", || {
        let fam = build_separating_family(&StateSpace::uniform(1, 1.0)?, &killing(), 1)?;
        let ya = yosida_generator(&killing(), 2.0)?;
        let quiet = path_regularity_stats(&sample_paths(0, &ya, 1e-12, 4, 9)?, &fam, &ya, 0.1)?;
        let busy = path_regularity_stats(&sample_paths(0, &ya, 3.0, 500, 10)?, &fam, &ya, 0.1)?;
        let to_cemetery = rho_distance(0, 1, &fam);
        let ok = quiet.max_rho_jump == 0.0 && quiet.rho_modulus == 0.0 && close(busy.max_rho_jump, to_cemetery, 0.0);
        Ok((ok, format!("{}", busy.max_rho_jump)))
    }),
];

/// Runs every case; errors count as failures.
pub fn run_selftest() -> Vec<SelfTestCase> {
    CASES
        .iter()
        .map(|(name, case)| match case() {
            Ok((passed, detail)) => SelfTestCase { name, passed, detail },
            Err(e) => SelfTestCase { name, passed: false, detail: e.to_string() },
        })
        .collect()
}
