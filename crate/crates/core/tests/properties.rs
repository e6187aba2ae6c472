use nlcns::config::RunConfig;
use nlcns::diagnostics::boundary_closed_form;
use nlcns::entropy_pairs::*;
use nlcns::lagrangian_solver::*;
use nlcns::nonlocal_forces::*;
use nlcns::pressure_laws::{log_grid, validate_hypotheses, BlendParams, PressureLaw};
use nlcns::tridiag;
use proptest::prelude::*;

fn polytropic() -> impl Strategy<Value = PressureLaw> {
    (1.05f64..3.5, 0.05f64..2.0).prop_map(|(g, k)| PressureLaw::polytropic(g, Some(k)).unwrap())
}

fn blend() -> impl Strategy<Value = PressureLaw> {
    (1.2f64..3.0, 0.0f64..1.0, 0.05f64..1.0, 0.05f64..1.0, 0.1f64..1.0, 1.2f64..3.0).prop_map(
        |(g1, frac, k1, k2, lo, ratio)| {
            let g2 = 1.1 + frac * (g1 - 1.1);
            PressureLaw::general_blend(BlendParams {
                gamma1: g1,
                gamma2: g2,
                kappa1: k1,
                kappa2: k2,
                rho_star_low: lo,
                rho_star_high: lo * ratio,
            })
            .unwrap()
        },
    )
    .prop_filter("blend must satisfy the hypotheses", |law| {
        validate_hypotheses(law, &log_grid(1e-4, 20.0, 400)).pass
    })
}

fn any_law() -> impl Strategy<Value = PressureLaw> {
    prop_oneof![polytropic(), blend()]
}

fn sorted_cells(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2..max).prop_flat_map(|n| {
        (
            prop::collection::vec(1e-3f64..0.5, n),
            prop::collection::vec(-2.0f64..2.0, n),
            prop::collection::vec(1e-3f64..1.0, n),
            -3.0f64..0.0,
        )
            .prop_map(|(gaps, u, m, x0)| {
                let mut c = Vec::with_capacity(gaps.len());
                let mut x = x0;
                for g in gaps {
                    x += g;
                    c.push(x);
                }
                (c, u, m)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pressure_is_increasing_and_consistent(law in any_law(), rho in 1e-3f64..5.0) {
        let h = 1e-6 * rho;
        prop_assert!(law.p(rho) > 0.0);
        prop_assert!(law.dp(rho) > 0.0);
        let dp = (law.p(rho + h) - law.p(rho - h)) / (2.0 * h);
        prop_assert!((dp - law.dp(rho)).abs() <= 1e-5 * dp.abs());
        // ρ²e' = P
        let de = (law.e(rho + h) - law.e(rho - h)) / (2.0 * h);
        prop_assert!((rho * rho * de - law.p(rho)).abs() <= 1e-5 * law.p(rho));
        // ρk' = √P'
        let dk = (law.k(rho + h) - law.k(rho - h)) / (2.0 * h);
        prop_assert!((rho * dk - law.dp(rho).sqrt()).abs() <= 1e-5 * law.dp(rho).sqrt());
        let back = law.k_inverse(law.k(rho));
        prop_assert!((back - rho).abs() <= 1e-9 * rho);
    }

    #[test]
    fn linear_generator_gives_momentum_pair(law in polytropic(), rho in 1e-3f64..5.0, u in -3.0f64..3.0) {
        let pair = generate_pair(LinearGenerator, &law, 32).unwrap();
        let v = pair.eval(rho, rho * u);
        let q = rho * u * u + law.p(rho);
        prop_assert!((v.eta - rho * u).abs() <= 1e-12 * (1.0 + (rho * u).abs()));
        prop_assert!((v.q - q).abs() <= 1e-10 * (1.0 + q.abs()));
    }

    #[test]
    fn kernel_is_even_and_compact(law in polytropic(), rho in 1e-3f64..5.0, v in -5.0f64..5.0) {
        let a = kernel_chi(&law, rho, v).unwrap();
        prop_assert_eq!(a, kernel_chi(&law, rho, -v).unwrap());
        prop_assert!(a >= 0.0);
        if v.abs() >= rho.powf(law.theta) {
            prop_assert_eq!(a, 0.0);
        }
    }

    #[test]
    fn alignment_conserves_momentum_and_dissipates((c, u, m) in sorted_cells(200), amp in 0.1f64..3.0, width in 0.1f64..3.0) {
        let k = AlignmentKernel::Gaussian { amplitude: amp, width };
        let v = alignment_cells(&c, &u, &m, &k, None);
        let scale: f64 = m.iter().zip(&u).map(|(a, b)| a * b.abs()).sum::<f64>() * amp * m.iter().sum::<f64>();
        let momentum: f64 = m.iter().zip(&v).map(|(a, b)| a * b).sum();
        prop_assert!(momentum.abs() <= 1e-13 * (1.0 + scale));
        let work: f64 = -m.iter().zip(&u).zip(&v).map(|((a, b), c)| a * b * c).sum::<f64>();
        let diss = alignment_dissipation(&c, &u, &m, &k, None);
        prop_assert!(diss >= 0.0);
        prop_assert!((work - diss).abs() <= 1e-12 * (1.0 + diss));
        // a cutoff beyond the support changes nothing
        let span = c[c.len() - 1] - c[0] + 1.0;
        let vc = alignment_cells(&c, &u, &m, &k, Some(span));
        prop_assert_eq!(v, vc);
    }

    #[test]
    fn cells_to_nodes_keeps_momentum(m in prop::collection::vec(1e-3f64..1.0, 2..100), seed in 0u64..1000) {
        let a: Vec<f64> = (0..m.len()).map(|i| ((i as f64 + seed as f64) * 0.7).sin()).collect();
        let node = cells_to_nodes(&m, &a);
        let n = m.len();
        let node_mass: Vec<f64> = (0..=n)
            .map(|j| 0.5 * (if j > 0 { m[j - 1] } else { 0.0 } + if j < n { m[j] } else { 0.0 }))
            .collect();
        let lhs: f64 = node_mass.iter().zip(&node).map(|(x, y)| x * y).sum();
        let rhs: f64 = m.iter().zip(&a).map(|(x, y)| x * y).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn interaction_energy_matches_double_sum((c, _u, m) in sorted_cells(150)) {
        let mut direct = 0.0;
        for i in 0..c.len() {
            for k in 0..c.len() {
                direct += 0.5 * potential(c[i] - c[k]) * m[i] * m[k];
            }
        }
        let (raw, shifted) = interaction_energy(&c, &m);
        let total: f64 = m.iter().sum();
        prop_assert!((raw - direct).abs() <= 1e-11 * (1.0 + direct.abs()));
        prop_assert!((shifted - raw - 0.25 * total * total).abs() <= 1e-11 * (1.0 + total * total));
        let mut rc = c.clone();
        let mut rm = m.clone();
        rc.reverse();
        rm.reverse();
        let (raw2, _) = interaction_energy(&rc, &rm);
        prop_assert!((raw2 - direct).abs() <= 1e-11 * (1.0 + direct.abs()));
    }

    #[test]
    fn tridiagonal_residual_is_small(n in 1usize..80, seed in 0u64..10_000) {
        let f = |i: usize, s: f64| ((i as f64 + 1.0) * s + seed as f64).sin();
        let lo: Vec<f64> = (0..n).map(|i| -f(i, 1.3).abs()).collect();
        let up: Vec<f64> = (0..n).map(|i| -f(i, 2.1).abs()).collect();
        let di: Vec<f64> = (0..n).map(|i| 2.0 + lo[i].abs() + up[i].abs()).collect();
        let r: Vec<f64> = (0..n).map(|i| f(i, 0.4)).collect();
        let x = tridiag::solve(&lo, &di, &up, &r).unwrap();
        for i in 0..n {
            let mut ax = di[i] * x[i];
            if i > 0 { ax += lo[i] * x[i - 1]; }
            if i + 1 < n { ax += up[i] * x[i + 1]; }
            prop_assert!((ax - r[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn grid_masses_sum_to_total(cells in 2usize..3000, collar in 0usize..30, ratio in 0.1f64..0.9, mass in 0.1f64..10.0) {
        let g = GridSpec { cells, collar_cells: collar, collar_ratio: ratio };
        let m = g.masses(mass);
        prop_assert_eq!(m.len(), cells + 2 * collar);
        let s: f64 = m.iter().sum();
        prop_assert!((s - mass).abs() <= 1e-12 * mass);
        prop_assert!(m.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn closed_form_solves_boundary_ode(g in 1.1f64..3.0, alpha in 0.7f64..1.0, c in 0.05f64..1.0, rho0 in 1e-3f64..2.0, t in 0.0f64..2.0) {
        let eps = 0.01;
        let h = 1e-7;
        let f = |s: f64| boundary_closed_form(rho0, c, g, alpha, eps, s);
        let d = (f(t + h) - f((t - h).max(0.0))) / (t + h - (t - h).max(0.0));
        let want = -(c / eps) * f(t).powf(g + 1.0 - alpha);
        prop_assert!((d - want).abs() <= 1e-4 * want.abs() + 1e-12);
        prop_assert_eq!(f(0.0), rho0);
    }

    #[test]
    fn uniform_state_samples_inside(rho in 0.1f64..3.0, n in 2usize..200, x in -2.0f64..2.0) {
        let s = MassGridState::uniform(rho, -1.0, 1.0, n, 0.01, 1.0, |_| 0.5).unwrap();
        let (r, u) = s.sample(&[x]);
        if x.abs() < 1.0 - 1.0 / n as f64 {
            prop_assert!((r[0] - rho).abs() <= 1e-12 * rho);
            prop_assert!((u[0] - 0.5).abs() <= 1e-12);
        }
        if x.abs() > 1.0 {
            prop_assert_eq!(r[0], 0.0);
        }
        prop_assert!((s.total_mass() - 2.0 * rho).abs() <= 1e-12);
    }

    #[test]
    fn config_roundtrips(gamma in 1.5f64..3.0, alpha in 0.7f64..1.0, extra in 0.01f64..1.0, eps in 1e-3f64..1.0, cells in 2usize..5000, seed in 0u64..i64::MAX as u64) {
        let p = gamma / (gamma - alpha) + extra;
        let text = format!(
            "alpha = {alpha}\np_exponent = {p}\nepsilon = {eps}\nseed = {seed}\n[law]\nkind = \"polytropic\"\ngamma = {gamma}\n\
             [initial.density]\nkind = \"gaussian\"\nmass = 1.0\nwidth = 1.0\n[grid]\ncells = {cells}\n"
        );
        let c = RunConfig::parse(&text).unwrap();
        c.validate().unwrap();
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        prop_assert_eq!(&back, &c);
        let bad = RunConfig::parse(&text.replace(&format!("p_exponent = {p}"), &format!("p_exponent = {}", gamma / (gamma - alpha) - extra.min(0.5)))).unwrap();
        prop_assert!(bad.validate().is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn goursat_is_odd_in_velocity(law in any_law(), rho in 0.05f64..1.5, u in 0.0f64..1.0) {
        let g = goursat_hat(&law, 2.0, 64).unwrap();
        let (a, qa, _, _) = g.eval_rho_u(rho, u);
        let (b, qb, _, _) = g.eval_rho_u(rho, -u);
        prop_assert!((a + b).abs() <= 1e-12 * (1.0 + a.abs()));
        prop_assert!((qa - qb).abs() <= 1e-9 * (1.0 + qa.abs()));
    }
}
