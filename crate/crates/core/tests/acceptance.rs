//! End-to-end acceptance checks. Each criterion prints one line
//! `criterion NN [PASS|FAIL] <name>: <detail>` and fails on FAIL.

use std::f64::consts::PI;

use chldp::green::{green_error_study, GreenStudyOptions};
use chldp::grid::SpatialGrid;
use chldp::model::CoefficientSpec;
use chldp::numerics::loglog_slope;
use chldp::optimizer::{
    continuum_gramian, convergence_scan, deterministic_path, discrete_gramian, linear_rate, minimize_rate, MRule,
    RateOptions, TranscriptionProblem,
};
use chldp::props;
use chldp::rare_events::{ldp_study, mc_hitting_probability, McSetup};
use chldp::skeleton::{
    average_control, boundedness_study, continuum_error_study, lift_control, skeleton_forward, skeleton_forward_fine,
    skeleton_inverse, time_series_norm_sq, Control, FineControl, SpaceTimePath,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {id:02} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {id} failed: {detail}");
}

fn main() {
    let criteria: [(u32, fn()); 12] = [
        (1, criterion_01_operator_exactness),
        (2, criterion_02_l2h1_inequality),
        (3, criterion_03_green_error_rates),
        (4, criterion_04_skeleton_bijection),
        (5, criterion_05_theta_and_averaging),
        (6, criterion_06_gradient_correctness),
        (7, criterion_07_linear_gaussian_oracle),
        (8, criterion_08_uniform_boundedness),
        (9, criterion_09_skeleton_convergence_rate),
        (10, criterion_10_rate_function_convergence),
        (11, criterion_11_ldp_by_monte_carlo),
        (12, criterion_12_reproducibility),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, run) in criteria {
        let tag = format!("criterion_{id:02}");
        if !filter.is_empty() && !filter.iter().any(|f| tag.contains(f.as_str())) {
            continue;
        }
        if std::panic::catch_unwind(run).is_err() {
            // panics outside `report` (solver errors) still need a line
            println!("criterion {id:02} [FAIL] see panic message above");
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(20240917);
    r.set_stream(stream);
    r
}

/// Smooth random function of `(t, x)`: a few cosine modes with random
/// amplitudes and time profiles.
fn smooth_field(r: &mut ChaCha8Rng, scale: f64) -> impl Fn(f64, f64) -> f64 + Copy {
    let mut a = [0.0; 4];
    let mut w = [0.0; 4];
    for j in 0..4 {
        a[j] = scale * r.random_range(-1.0..1.0) / (1.0 + j as f64);
        w[j] = r.random_range(0.0..3.0);
    }
    move |t: f64, x: f64| (0..4).map(|j| a[j] * (j as f64 * x).cos() * (w[j] * t + j as f64).cos()).sum()
}

fn criterion_01_operator_exactness() {
    let ns = [2, 4, 8, 16, 64, 256];
    let eig = props::eigenpairs(&ns).unwrap();
    let dn = props::dnphi(&ns).unwrap();
    let ibp = props::integration_by_parts(&ns, 100, 1).unwrap();
    let worst = |s: &props::PropSuite| s.rows.iter().map(|r| r.statistic).fold(0.0f64, f64::max);
    report(
        1,
        "operator exactness",
        eig.passed && dn.passed && ibp.passed,
        format!(
            "eigen residual {:.1e}, Dnphi {:.1e}, integration by parts {:.1e}",
            worst(&eig),
            worst(&dn),
            worst(&ibp)
        ),
    );
}

fn criterion_02_l2h1_inequality() {
    let s = props::l2h1(&[8, 16, 32, 64, 128, 256], 1000, 2).unwrap();
    let worst = s.rows.iter().map(|r| r.statistic).fold(0.0f64, f64::max);
    report(
        2,
        "discrete interpolation inequality",
        s.passed,
        format!("1000 vectors per n in 8..256, max lhs/rhs {worst:.3}"),
    );
}

fn criterion_03_green_error_rates() {
    let rep = green_error_study(&GreenStudyOptions::default()).unwrap();
    report(
        3,
        "green error rates",
        rep.slope_e2 <= -1.7 && rep.slope_e1 <= -0.7,
        format!("slope E2 {:.3} (<= -1.7), slope E1 {:.3} (<= -0.7)", rep.slope_e2, rep.slope_e1),
    );
}

fn criterion_04_skeleton_bijection() {
    let coeffs = CoefficientSpec::default().build().unwrap();
    let (n, m, t) = (8, 512, 0.5);
    let mut r = rng(4);
    let mut worst_path = 0.0f64;
    let mut worst_control = 0.0f64;
    for _ in 0..10 {
        // path -> control -> path
        let g = smooth_field(&mut r, 1.0);
        let f = SpaceTimePath::from_fn(n, m, t, |s, x| coeffs.u0(x) + s * g(s, x)).unwrap();
        let h = skeleton_inverse(&coeffs, &f).unwrap();
        let back = skeleton_forward(&coeffs, &h).unwrap();
        let d: Vec<f64> = f.values.iter().zip(&back.values).map(|(a, b)| a - b).collect();
        worst_path = worst_path.max(d.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        // control -> path -> control
        let q = smooth_field(&mut r, 3.0);
        let h = Control::from_fn(n, m, t, q).unwrap();
        let back = skeleton_inverse(&coeffs, &skeleton_forward(&coeffs, &h).unwrap()).unwrap();
        let diff = Control::new(n, m, t, h.values.iter().zip(&back.values).map(|(a, b)| a - b).collect()).unwrap();
        worst_control = worst_control.max(diff.norm_sq().sqrt());
    }
    report(
        4,
        "skeleton bijection",
        worst_path <= 1e-5 && worst_control <= 1e-5,
        format!("n=8 m=512, sup path error {worst_path:.1e}, L2 control error {worst_control:.1e}"),
    );
}

fn criterion_05_theta_and_averaging() {
    let coeffs = CoefficientSpec::default().build().unwrap();
    let (n, m, t) = (4, 256, 0.5);
    let mut r = rng(5);
    let mut theta_err = 0.0f64;
    let mut norm_ok = true;
    let mut path_err = 0.0f64;
    for _ in 0..10 {
        let q: Vec<f64> = (0..n * m).map(|_| r.random_range(-2.0..2.0)).collect();
        let lifted = lift_control(&q, n, m, t).unwrap();
        let exact = time_series_norm_sq(&q, m, t);
        theta_err = theta_err.max((lifted.norm_sq() - exact).abs() / exact);

        let sub = 5;
        let g = smooth_field(&mut r, 2.0);
        let dt = t / m as f64;
        let values: Vec<f64> = (0..m)
            .flat_map(|j| (0..n * sub).map(move |k| (j, k)))
            .map(|(j, k)| {
                let x = (k as f64 + 0.5) * PI / (n * sub) as f64;
                g((j as f64 + 0.5) * dt, x) + 0.3 * (((j + k) % 7) as f64 - 3.0)
            })
            .collect();
        let fine = FineControl::new(n, sub, m, t, values).unwrap();
        let avg = average_control(&fine, n).unwrap();
        norm_ok &= avg.norm_sq() <= fine.norm_sq() * (1.0 + 1e-14);
        let a = skeleton_forward_fine(&coeffs, &fine).unwrap();
        let b = skeleton_forward(&coeffs, &avg).unwrap();
        let d = a.values.iter().zip(&b.values).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
        path_err = path_err.max(d);
    }
    report(
        5,
        "theta and cell averaging",
        theta_err <= 1e-12 && norm_ok && path_err <= 1e-8,
        format!("theta norm rel err {theta_err:.1e}, averaged norm <= norm: {norm_ok}, path difference {path_err:.1e}"),
    );
}

fn gradient_rel_err(n: usize, m: usize, r: &mut ChaCha8Rng) -> f64 {
    let coeffs = CoefficientSpec::default().build().unwrap();
    let det = deterministic_path(&coeffs, n, m, 0.5).unwrap();
    let y = det.terminal_at(1.0).unwrap() + r.random_range(-0.5..0.5);
    let p = TranscriptionProblem::new(&coeffs, n, m, 0.5, 1.0, y).unwrap();
    let mut x = p.extract(&det).unwrap();
    for v in x.iter_mut() {
        *v += r.random_range(-0.3..0.3);
    }
    let g = p.evaluate(&x).unwrap().gradient;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for i in 0..x.len() {
        let h = 1e-6 * x[i].abs().max(1.0);
        let mut xp = x.clone();
        xp[i] += h;
        let mut xm = x.clone();
        xm[i] -= h;
        let fd = (p.evaluate(&xp).unwrap().value - p.evaluate(&xm).unwrap().value) / (2.0 * h);
        num = num.max((g[i] - fd).abs());
        den = den.max(fd.abs());
    }
    num / den
}

fn criterion_06_gradient_correctness() {
    let mut r = rng(6);
    let mut worst = 0.0f64;
    for (n, m) in [(4, 8), (8, 32)] {
        for _ in 0..20 {
            worst = worst.max(gradient_rel_err(n, m, &mut r));
        }
    }
    report(
        6,
        "gradient correctness",
        worst < 1e-5,
        format!("20 points each at (n, m) = (4, 8), (8, 32), max rel err {worst:.1e}"),
    );
}

fn criterion_07_linear_gaussian_oracle() {
    let coeffs = CoefficientSpec::linear_gaussian().build().unwrap();
    // the closed form itself against a dense solve at n = 2
    let (n2, m2, xb2) = (2, 64, 1.0);
    let mut g = Vec::new();
    for i in 0..n2 * m2 {
        let mut v = vec![0.0; n2 * m2];
        v[i] = 1.0;
        let c = Control::new(n2, m2, 0.5, v).unwrap();
        g.push(skeleton_forward(&coeffs, &c).unwrap().terminal_at(xb2).unwrap());
    }
    let w = 0.5 / m2 as f64 * PI / n2 as f64;
    let dense = w / (2.0 * g.iter().map(|v| v * v).sum::<f64>());
    let closed = linear_rate(1.0, discrete_gramian(n2, 0.5, xb2).unwrap());
    let oracle_err = (dense - closed).abs() / closed;

    let xbar = SpatialGrid::new(8).unwrap().node(3);
    let v = discrete_gramian(8, 0.5, xbar).unwrap();
    let mut worst = 0.0f64;
    for y in [0.5, 1.0, 2.0] {
        let r = minimize_rate(&coeffs, 8, 64, 0.5, xbar, y, &RateOptions::default()).unwrap();
        let exact = linear_rate(y, v);
        worst = worst.max((r.value - exact).abs() / exact);
    }
    report(
        7,
        "linear-Gaussian oracle",
        worst < 0.01 && oracle_err < 0.01,
        format!("max rel err vs y^2/(2 v_n) {worst:.2e}; closed form vs dense solve at n=2 {oracle_err:.2e}"),
    );
}

fn criterion_08_uniform_boundedness() {
    let coeffs = CoefficientSpec::default().build().unwrap();
    let h = |t: f64, x: f64| (1.0 + t) * (x.cos() + 0.5 * (3.0 * x).sin());
    let rows = boundedness_study(&coeffs, &[4, 8, 16, 32, 64], 256, 0.5, h, 2.0).unwrap();
    let base = rows[0];
    let ratio = |a: f64, b: f64| (a / b).max(b / a);
    let worst_sup = rows.iter().map(|r| ratio(r.sup_norm, base.sup_norm)).fold(1.0, f64::max);
    let worst_energy = rows.iter().map(|r| ratio(r.energy, base.energy)).fold(1.0, f64::max);
    report(
        8,
        "uniform boundedness",
        worst_sup < 1.5 && worst_energy < 1.5,
        format!("|h| = 2, n in 4..64: sup-norm ratio {worst_sup:.3}, energy ratio {worst_energy:.3}"),
    );
}

fn criterion_09_skeleton_convergence_rate() {
    let coeffs = CoefficientSpec::default().build().unwrap();
    let ns = [8, 16, 32, 64];
    let controls: [fn(f64, f64) -> f64; 3] = [
        |_, x| x.cos(),
        |t, x| 2.0 * t * (2.0 * x).cos() + 0.5,
        |t, x| (x - 1.0).abs() * (1.0 - t),
    ];
    let mut slopes = Vec::new();
    for h in controls {
        let errs = continuum_error_study(&coeffs, &ns, 256, 128, 0.5, h).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = errs.iter().map(|&(n, e)| (n as f64, e)).unzip();
        slopes.push(loglog_slope(&x, &y));
    }
    let worst = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    report(
        9,
        "skeleton convergence rate",
        worst <= -0.7,
        format!("log-log slopes of |Y^n - Y^256|_C: {slopes:.3?}"),
    );
}

fn criterion_10_rate_function_convergence() {
    let opts = RateOptions::default();
    let cubic = CoefficientSpec::default().build().unwrap();
    let y = deterministic_path(&cubic, 32, 1024, 0.5).unwrap().terminal_at(1.0).unwrap() + 0.5;
    let rep = convergence_scan(&cubic, &[8, 16, 32], MRule::default(), 0.5, 1.0, y, &opts).unwrap();
    let d8 = rep.rows[0].diff_to_finest;
    let d16 = rep.rows[1].diff_to_finest;
    let linear = CoefficientSpec::linear_gaussian().build().unwrap();
    let r32 = minimize_rate(&linear, 32, 1024, 0.5, 1.0, 1.0, &opts).unwrap();
    let cont = linear_rate(1.0, continuum_gramian(0.5, 1.0, 512));
    let gap = (r32.value - cont).abs() / cont;
    report(
        10,
        "rate function convergence",
        rep.differences_shrink && d16 < d8 && r32.converged && gap < 0.02,
        format!("cubic |I8-I32| {d8:.2e} > |I16-I32| {d16:.2e}; linear n=32 vs continuum {gap:.2e}"),
    );
}

fn criterion_11_ldp_by_monte_carlo() {
    let opts = RateOptions::default();
    let setup = McSetup {
        n: 8,
        m: 64,
        horizon: 0.5,
        xbar: 1.0,
        samples: 100_000,
        seed: 11,
    };
    let eps = [0.4, 0.2, 0.1];
    let linear = CoefficientSpec::linear_gaussian().build().unwrap();
    // I^n(y) = 1
    let v = chldp::optimizer::midpoint_gramian(8, 64, 0.5, 1.0).unwrap();
    let lin = ldp_study(&linear, &setup, (2.0 * v).sqrt(), &eps, true, &opts).unwrap();
    let cubic = CoefficientSpec::default().build().unwrap();
    let y0 = deterministic_path(&cubic, 8, 64, 0.5).unwrap().terminal_at(1.0).unwrap();
    let cub = ldp_study(&cubic, &setup, y0 + 0.7, &eps, true, &opts).unwrap();
    report(
        11,
        "LDP by Monte Carlo",
        lin.rel_gap < 0.15 && cub.rel_gap < 0.30,
        format!(
            "linear: extrapolated {:.3} vs {:.3} (gap {:.3}); cubic: {:.3} vs {:.3} (gap {:.3})",
            lin.extrapolated, lin.rate_inf, lin.rel_gap, cub.extrapolated, cub.rate_inf, cub.rel_gap
        ),
    );
}

fn reproducible_table() -> String {
    let coeffs = CoefficientSpec::default().build().unwrap();
    let setup = McSetup {
        n: 8,
        m: 32,
        horizon: 0.5,
        xbar: 1.0,
        samples: 2000,
        seed: 3,
    };
    let mut out = String::from("eps,p_hat,std_err\n");
    for eps in [0.2, 0.1] {
        let e = mc_hitting_probability(&coeffs, &setup, eps, 0.3, None).unwrap();
        out += &format!("{},{},{}\n", e.eps, e.p_hat, e.std_err);
    }
    let rep = convergence_scan(&coeffs, &[4, 8], MRule::Fixed { m: 16 }, 0.5, 1.0, 0.4, &RateOptions::default())
        .unwrap();
    for r in rep.rows {
        out += &format!("{},{},{}\n", r.n, r.value, r.iterations);
    }
    out
}

fn criterion_12_reproducibility() {
    let pool = |k| rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
    let serial = pool(1).install(reproducible_table);
    let parallel = pool(4).install(reproducible_table);
    let again = pool(4).install(reproducible_table);
    report(
        12,
        "reproducibility",
        serial == parallel && parallel == again,
        format!("{} bytes, 1 vs 4 worker threads identical: {}", serial.len(), serial == parallel),
    );
}
