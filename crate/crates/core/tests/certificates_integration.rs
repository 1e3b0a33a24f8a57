use lbreg::certificates::{
    lambda_a, nsp_check, nu_constant, polish_solution, project_ystar, rip_constant, solution_set, theta,
    theta_crossing, v_min, verify_convergence, YstarProjector,
};
use lbreg::harness::{gen_gaussian_matrix, gen_signal, SignalKind, SignalSpec};
use lbreg::linalg::{dot, lambda_min_pp, norm2, norm_inf, DenseMatrix};
use lbreg::models::Model;
use lbreg::rng::{mix_seed, Normal};
use lbreg::solvers::{lbreg_bb, lbreg_fixed, SolverOptions, Variant};
use proptest::prelude::*;

fn rip_pairs_closed_form(a: &DenseMatrix) -> f64 {
    let n = a.cols();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut delta: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let (p, q, c) = (dot(&cols[i], &cols[i]), dot(&cols[j], &cols[j]), dot(&cols[i], &cols[j]));
            let mid = 0.5 * (p + q);
            let rad = (0.25 * (p - q) * (p - q) + c * c).sqrt();
            delta = delta.max(mid + rad - 1.0).max(1.0 - (mid - rad));
        }
    }
    delta
}

#[test]
fn rip_of_pairs_matches_closed_form() {
    for seed in 0..5u64 {
        let a = gen_gaussian_matrix(6, 12, seed);
        let r = rip_constant(&a, 2).unwrap();
        assert!((r.delta_k - rip_pairs_closed_form(&a)).abs() <= 1e-12, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rip_is_monotone_in_k(m in 3usize..7, n in 4usize..9, seed in any::<u64>()) {
        let a = gen_gaussian_matrix(m, n, seed);
        let deltas: Vec<f64> = (1..=n.min(4)).map(|k| rip_constant(&a, k).unwrap().delta_k).collect();
        prop_assert!(deltas.iter().all(|&d| d >= 0.0));
        prop_assert!(deltas.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }

    #[test]
    fn theta_is_increasing(d1 in 0.0f64..0.4931, d2 in 0.0f64..0.4931) {
        let (lo, hi) = if d1 < d2 { (d1, d2) } else { (d2, d1) };
        prop_assert!(theta(lo) <= theta(hi));
        prop_assert!(theta(lo) > 0.0);
    }

    #[test]
    fn theta_below_one_exactly_below_crossing(d in 0.0f64..0.99) {
        let c = theta_crossing();
        if (d - c).abs() > 1e-6 {
            prop_assert_eq!(theta(d) < 1.0, d < c);
        }
    }

    #[test]
    fn nsp_margin_tends_to_classical(h in prop::collection::vec(-3.0f64..3.0, 2..10), x_inf in 0.1f64..5.0) {
        prop_assume!(h.iter().any(|&v| v != 0.0));
        let support: Vec<usize> = (0..h.len()).step_by(2).collect();
        let hs: f64 = support.iter().map(|&i| h[i].abs()).sum();
        let hz: f64 = h.iter().map(|v| v.abs()).sum::<f64>() - hs;
        let inf = nsp_check(&h, &support, f64::INFINITY, x_inf).unwrap();
        prop_assert!((inf.margin - (hz - hs)).abs() <= 1e-12);
        let big = nsp_check(&h, &support, 1e12, x_inf).unwrap();
        prop_assert!((big.margin - inf.margin).abs() <= 1e-9);
        let small = nsp_check(&h, &support, 1.0, x_inf).unwrap();
        prop_assert!(small.margin <= inf.margin);
    }

    #[test]
    fn v_min_is_positive(m in 2usize..5, p in 1usize..4, ell in 0usize..4, seed in any::<u64>()) {
        let a = gen_gaussian_matrix(m, p, seed);
        let b = gen_gaussian_matrix(m, ell, seed ^ 0xAB);
        let d: Vec<f64> = Normal::new(seed).vec(p).iter().map(|v| 0.1 + v.abs()).collect();
        let v = v_min(&a, &b, &d).unwrap();
        prop_assert!(v > 0.0);
        let full = a.scaled_aat(Some(&d)).add(&b.aat()).unwrap();
        prop_assert!(v <= lambda_min_pp(&full).unwrap() * (1.0 + 1e-9));
    }
}

struct Instance {
    model: Model,
    a: DenseMatrix,
    x_star: Vec<f64>,
}

fn instance(seed: u64) -> Instance {
    let (m, n) = (6, 12);
    let a = gen_gaussian_matrix(m, n, mix_seed(&[seed, 1]));
    let x0 = gen_signal(SignalSpec {
        n,
        k: 2,
        kind: SignalKind::Gaussian,
        seed: mix_seed(&[seed, 2]),
    })
    .unwrap();
    let model = Model::basis_pursuit(a.clone(), a.matvec(&x0).into(), 4.0 * norm_inf(&x0)).unwrap();
    let t = lbreg_bb(&model, &SolverOptions::new(Variant::Bb).with_tol(1e-11).without_iterates()).unwrap();
    let x_star = polish_solution(&model, t.final_x.as_flat()).unwrap().into_inner();
    Instance { model, a, x_star }
}

#[test]
fn solution_set_partitions_coordinates() {
    for seed in 0..5 {
        let inst = instance(seed);
        let ss = solution_set(&inst.model, &inst.x_star).unwrap();
        let mut all: Vec<usize> = ss.s_plus.iter().chain(&ss.s_minus).chain(&ss.s_zero).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..12).collect::<Vec<_>>());
        assert!(ss.s_plus.iter().all(|&i| inst.x_star[i] > 0.0));
        assert!(ss.s_minus.iter().all(|&i| inst.x_star[i] < 0.0));
    }
}

#[test]
fn gradient_vanishes_on_the_solution_set() {
    for seed in 0..5 {
        let inst = instance(seed);
        let ss = solution_set(&inst.model, &inst.x_star).unwrap();
        let mut proj = YstarProjector::new(&ss, &inst.a).unwrap();
        let mut normal = Normal::new(seed + 50);
        for _ in 0..50 {
            let y: Vec<f64> = normal.vec(6).iter().map(|v| 3.0 * v).collect();
            let p = proj.project(&y).unwrap();
            assert!(ss.contains(&inst.a, &p.y_proj, 1e-9));
            let g = inst.model.dual_gradient(&p.y_proj).unwrap();
            assert!(norm2(&g) <= 1e-9, "seed {seed}: |grad| = {:e}", norm2(&g));
            let again = project_ystar(&ss, &inst.a, &p.y_proj).unwrap();
            assert!(norm_inf(&lbreg::linalg::sub(&again.y_proj, &p.y_proj)) <= 1e-9);
            assert!(again.dist <= 1e-9);
        }
    }
}

#[test]
fn projection_is_closest_among_sampled_members() {
    let inst = instance(3);
    let ss = solution_set(&inst.model, &inst.x_star).unwrap();
    let mut proj = YstarProjector::new(&ss, &inst.a).unwrap();
    let mut normal = Normal::new(77);
    let members: Vec<Vec<f64>> = (0..40)
        .map(|_| proj.project(&normal.vec(6).iter().map(|v| 4.0 * v).collect::<Vec<_>>()).unwrap().y_proj.into_inner())
        .collect();
    for _ in 0..20 {
        let y: Vec<f64> = normal.vec(6).iter().map(|v| 4.0 * v).collect();
        let p = proj.project(&y).unwrap();
        for w in &members {
            assert!(p.dist <= norm2(&lbreg::linalg::sub(&y, w)) + 1e-9);
        }
    }
}

#[test]
fn strong_convexity_report_is_consistent() {
    for seed in 0..4 {
        let inst = instance(seed);
        let rep = nu_constant(&inst.a, &inst.x_star, inst.model.alpha()).unwrap();
        assert!((rep.lambda_a - lambda_a(&inst.a).unwrap()).abs() <= 1e-15);
        assert!((rep.decay_factor - (1.0 - rep.omega.powi(2) * rep.kappa.powi(2))).abs() <= 1e-14);
        assert!(rep.omega * rep.kappa > 0.0 && rep.decay_factor <= 1.0, "{rep:?}");
        assert!(rep.decay_factor > 0.0 && rep.omega < 1.0 && rep.kappa <= 1.0);
        let a4 = rep.alpha.powi(2) * rep.norm_a.powi(4);
        let q = 1.0 - 2.0 * rep.h_star * rep.nu + rep.h_star.powi(2) * a4;
        assert!((q - rep.decay_factor).abs() <= 1e-12);
    }
}

#[test]
fn verify_convergence_rejects_large_steps() {
    let inst = instance(1);
    let ss = solution_set(&inst.model, &inst.x_star).unwrap();
    let rep = nu_constant(&inst.a, &inst.x_star, inst.model.alpha()).unwrap();
    let a4 = rep.alpha.powi(2) * rep.norm_a.powi(4);
    let h = 3.0 * rep.nu / a4;
    let t = lbreg_fixed(&inst.model, &SolverOptions::default().with_step(h).with_max_iter(5)).unwrap();
    assert!(verify_convergence(&inst.model, &t, &ss, &rep, h).is_err());
}

#[test]
fn fixed_step_distance_is_nonincreasing() {
    for seed in 0..4 {
        let inst = instance(seed);
        let ss = solution_set(&inst.model, &inst.x_star).unwrap();
        let rep = nu_constant(&inst.a, &inst.x_star, inst.model.alpha()).unwrap();
        let t = lbreg_fixed(&inst.model, &SolverOptions::default().with_nu(rep.nu).with_max_iter(500)).unwrap();
        let chk = verify_convergence(&inst.model, &t, &ss, &rep, rep.h_star).unwrap();
        assert!(chk.dyk_ok && chk.dyk2_ok && chk.dyk3_ok && chk.rescvx_ok);
        assert!(chk.dist.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
}
