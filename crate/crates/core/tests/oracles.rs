//! Checks against oracles computed independently of the library code paths.

use approx::assert_relative_eq;
use nlcns::entropy_pairs::*;
use nlcns::lagrangian_solver::*;
use nlcns::nonlocal_forces::*;
use nlcns::pressure_laws::PressureLaw;
use nlcns::quad::KernelQuadrature;
use nlcns::tridiag;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn de(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    quadrature::double_exponential::integrate(f, a, b, 1e-13).integral
}

#[test]
fn kernel_quadrature_matches_double_exponential() {
    for &b in &[-0.25, 0.0, 0.5, 1.5, 3.0] {
        let q = KernelQuadrature::new(b, 48).unwrap();
        let w = move |t: f64| (1.0 - t * t).max(0.0).powf(b);
        assert_relative_eq!(q.mass(), de(w, -1.0, 1.0), max_relative = 1e-9);
        let smooth = q.integrate(None, |t| (2.0 * t).cos() + t * t * t);
        assert!((smooth - de(|t| w(t) * ((2.0 * t).cos() + t * t * t), -1.0, 1.0)).abs() < 1e-9);
        for &u in &[0.3, -0.2, 0.7, 0.0] {
            let f = move |t: f64| {
                let y: f64 = u + t;
                y * y.abs()
            };
            let want = de(|t| w(t) * f(t), -1.0, -u) + de(|t| w(t) * f(t), -u, 1.0);
            let got = q.integrate(Some(-u), f);
            assert!((got - want).abs() < 1e-9, "b={b} u={u}: {got} vs {want}");
        }
    }
}

fn dense_solve(mut a: Vec<Vec<f64>>, mut r: Vec<f64>) -> Vec<f64> {
    let n = r.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        r.swap(c, p);
        for i in c + 1..n {
            let f = a[i][c] / a[c][c];
            for k in c..n {
                a[i][k] -= f * a[c][k];
            }
            r[i] -= f * r[c];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (r[i] - s) / a[i][i];
    }
    x
}

#[test]
fn tridiagonal_matches_dense_elimination() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for n in [1usize, 2, 5, 40, 200] {
        let lo: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..1.0)).collect();
        let up: Vec<f64> = (0..n).map(|_| -rng.gen_range(0.0..1.0)).collect();
        let di: Vec<f64> = (0..n).map(|i| 2.5 + rng.gen_range(0.0..1.0) + lo[i].abs()).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            a[i][i] = di[i];
            if i > 0 {
                a[i][i - 1] = lo[i];
            }
            if i + 1 < n {
                a[i][i + 1] = up[i];
            }
        }
        let want = dense_solve(a, r.clone());
        let got = tridiag::solve(&lo, &di, &up, &r).unwrap();
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "n={n}");
        }
    }
}

/// `∂ₓW∗ρ` at `x` for the piecewise-constant density, cell by cell.
fn direct_force(x: f64, node_x: &[f64], mass: &[f64]) -> f64 {
    let mut f = 0.0;
    for i in 0..mass.len() {
        let (a, b) = (node_x[i], node_x[i + 1]);
        let rho = mass[i] / (b - a);
        // ∫_a^b (-sign(x-y) + x - y) ρ dy with x outside (a, b)
        let sign = if x >= b { 1.0 } else { -1.0 };
        f += rho * (-sign * (b - a) + x * (b - a) - 0.5 * (b * b - a * a));
    }
    f
}

#[test]
fn interaction_force_matches_cellwise_integrals() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let n = rng.gen_range(2..1024);
        let gaps: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-3..1.0)).collect();
        let (len, lo) = (rng.gen_range(0.1..10.0), rng.gen_range(-5.0..-0.05));
        let scale = len / gaps.iter().sum::<f64>();
        let mut x = vec![lo];
        for g in &gaps {
            let last = *x.last().unwrap();
            x.push(last + g * scale);
        }
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(1e-4..1.0)).collect();
        let norm: f64 = raw.iter().sum();
        let m: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let c: Vec<f64> = x.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let total: f64 = m.iter().sum();
        let f = interaction_force(&x, &m, &c, total).unwrap();
        for (j, &xj) in x.iter().enumerate() {
            let want = direct_force(xj, &x, &m);
            assert!((f[j] - want).abs() <= 1e-12, "{} vs {}", f[j], want);
        }
    }
}

#[test]
fn gamma3_generated_pair_is_dalembert() {
    let law = PressureLaw::polytropic(3.0, Some(1.0 / 3.0)).unwrap();
    let cubic = FnGenerator {
        value: |s: f64| s * s * s,
        derivative: |s: f64| 3.0 * s * s,
        kink: None,
        label: "cubic".into(),
    };
    let pair = generate_pair(cubic, &law, 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let rho: f64 = rng.gen_range(0.01..3.0);
        let u: f64 = rng.gen_range(-2.0..2.0);
        let (a, b) = (u + rho, u - rho);
        let eta = (a.powi(4) - b.powi(4)) / 8.0;
        let q = (a.powi(5) - b.powi(5)) / 10.0;
        let v = pair.eval(rho, rho * u);
        assert!((v.eta - eta).abs() < 1e-11 * (1.0 + eta.abs()));
        assert!((v.q - q).abs() < 1e-11 * (1.0 + q.abs()));
    }
}

/// `∇q = ∇η·∇F` with every derivative taken by central differences.
fn fd_compatibility(pair: &dyn EntropyPair, law: &PressureLaw, rho: f64, u: f64) -> f64 {
    let m = rho * u;
    let (hr, hm) = (1e-5 * rho, 1e-5 * (rho + m.abs()));
    let d = |f: &dyn Fn(f64, f64) -> f64, dr: f64, dm: f64| (f(rho + dr, m + dm) - f(rho - dr, m - dm)) / (2.0 * (dr + dm));
    let eta = |r: f64, mm: f64| pair.eta(r, mm);
    let q = |r: f64, mm: f64| pair.q(r, mm);
    let (eta_r, eta_m) = (d(&eta, hr, 0.0), d(&eta, 0.0, hm));
    let (q_r, q_m) = (d(&q, hr, 0.0), d(&q, 0.0, hm));
    let dp = (law.p(rho * (1.0 + 1e-6)) - law.p(rho * (1.0 - 1e-6))) / (2e-6 * rho);
    let want_r = eta_m * (dp - u * u);
    let want_m = eta_r + 2.0 * u * eta_m;
    let scale = want_r.abs().max(want_m.abs()).max(1e-12);
    ((q_r - want_r).abs() + (q_m - want_m).abs()) / scale
}

#[test]
fn pairs_satisfy_compatibility_by_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for &g in &[1.4, 2.0, 3.0] {
        let law = PressureLaw::polytropic(g, None).unwrap();
        let gen = FnGenerator {
            value: |s: f64| s * s * s - 0.5 * s,
            derivative: |s: f64| 3.0 * s * s - 0.5,
            kink: None,
            label: "poly".into(),
        };
        let pairs: Vec<Box<dyn EntropyPair>> = vec![
            Box::new(generate_pair(gen, &law, 48).unwrap()),
            Box::new(MechanicalPair::new(&law)),
            Box::new(special_pair_hash(&law).unwrap()),
        ];
        for p in &pairs {
            for _ in 0..30 {
                let rho = rng.gen_range(0.05..3.0);
                let u = rng.gen_range(-1.5..1.5);
                let d = fd_compatibility(p.as_ref(), &law, rho, u);
                assert!(d < 1e-5, "gamma {g} kind {:?} at ({rho}, {u}): {d}", p.kind());
            }
        }
    }
}

#[test]
fn goursat_matches_normalized_hash_for_gamma2() {
    let law = PressureLaw::polytropic(2.0, Some(0.125)).unwrap();
    let g = goursat_hat(&law, 2.0, 256).unwrap();
    let hash = special_pair_hash(&law).unwrap();
    let i0 = KernelQuadrature::new(law.kernel_exponent, 48).unwrap().mass();
    let mut worst = 0.0f64;
    for row in g.table().iter().step_by(97) {
        let [rho, u, eta, _] = *row;
        if rho <= 0.0 || rho > 2.0 {
            continue;
        }
        worst = worst.max((eta - hash.eta(rho, rho * u) / i0).abs());
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn frozen_mode_decays_exponentially() {
    let law = PressureLaw::polytropic(2.0, Some(0.125)).unwrap();
    let cfg = NonlocalConfig::off();
    let cfg = NonlocalConfig { lambda: -0.5, ..cfg };
    let solver = SolverConfig {
        freeze_density: true,
        ..Default::default()
    };
    let mut errs = Vec::new();
    for &dt in &[2e-3, 1e-3] {
        let mut s = MassGridState::uniform(1.0, -10.0, 10.0, 400, 1e-2, 1.0, |_| 1.0).unwrap();
        let mut stepper = Stepper::new(&law, &cfg, &solver);
        let steps = (1.0 / dt) as i32;
        for _ in 0..steps {
            s = stepper.advance(&s, dt).unwrap().0;
        }
        let u = s.node_u[200];
        assert!((u - (1.0 - 0.5 * dt).powi(steps)).abs() < 1e-12);
        errs.push((u - (-0.5f64).exp()).abs());
    }
    assert!(errs[1] < 1e-4);
    assert!(errs[0] / errs[1] > 1.9, "{errs:?}");
}

#[test]
fn constant_state_has_no_entropy_dissipation() {
    let law = PressureLaw::polytropic(2.0, Some(0.125)).unwrap();
    let cfg = NonlocalConfig::off();
    let solver = SolverConfig {
        t_end: 0.5,
        snapshots: 5,
        ..Default::default()
    };
    let s = MassGridState::uniform(1.0, -10.0, 10.0, 400, 1e-2, 1.0, |_| 0.3).unwrap();
    let traj = run_state(s, &law, &cfg, &solver, 10.0).unwrap();
    let d = dissipation_residual(&traj, &MechanicalPair::new(&law), &law, &cfg, [-5.0, 5.0], 200).unwrap();
    let worst = d.field.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
    assert!(worst < 1e-10, "{worst}");
    assert!(d.positive_part < 1e-10 && d.negative_part.abs() < 1e-10);
}
