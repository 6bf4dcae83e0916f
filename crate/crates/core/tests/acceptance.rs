//! Acceptance suite. Runs every criterion and prints one line per criterion;
//! exits non-zero if any fails. Pass criterion numbers as arguments to run a
//! subset, e.g. `cargo test -p oosr2 --test acceptance -- 5 6 10`.

use std::error::Error;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use oosr2::cli;
use oosr2::inference::{compare_independent, normal_interval, se_delta_parts, z_test_r2_leq_zero, InferenceMethod};
use oosr2::loss::{estimate_mse_boot632, estimate_mse_cv, estimate_mst};
use oosr2::predictors::enet::solve_fixed_design;
use oosr2::predictors::PredictorSpec;
use oosr2::resampling::stream;
use oosr2::sim::{generate_dataset, run_scenario, ScenarioConfig, ScenarioReport};
use oosr2::stats::{mean, sample_sd};
use oosr2::RunConfig;

type Outcome = Result<(bool, String), Box<dyn Error>>;

/// Private stream tag so the suite's draws never coincide with the library's.
const SUITE: u64 = 0xacc;

fn scenario(name: &str, seed: u64, n: usize, beta: f64, n_mc: usize, methods: &[&str]) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        n,
        beta_value: beta,
        n_mc,
        run: RunConfig {
            seed,
            cv_folds: 10,
            cv_repeats: 25,
            ..RunConfig::default()
        },
        methods: methods.iter().map(|m| m.parse().unwrap()).collect(),
        ..ScenarioConfig::default()
    }
}

fn methods_of(sc: &ScenarioConfig) -> Vec<String> {
    sc.methods.iter().map(InferenceMethod::to_string).collect()
}

fn mc_se(xs: &[f64]) -> f64 {
    sample_sd(xs) / (xs.len() as f64).sqrt()
}

fn c1_mst_unbiased() -> Outcome {
    let t = Instant::now();
    let (n, reps) = (20usize, 20_000u64);
    let mut rng = stream(1, SUITE, &[1]);
    let mut sum = 0.0;
    for _ in 0..reps {
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        sum += estimate_mst(&y)?.point;
    }
    let m = sum / reps as f64;
    let target = (n as f64 + 1.0) / n as f64;
    let secs = t.elapsed().as_secs_f64();
    let ok = (m - target).abs() <= 0.01 && secs < 5.0;
    Ok((ok, format!("mean MST {m:.4} vs {target:.4} (±0.01), {secs:.2}s (< 5s)")))
}

fn pooling_vs_averaging(n: usize, seed: u64) -> Result<ScenarioReport, Box<dyn Error>> {
    let sc = scenario(&format!("ols_n{n}"), seed, n, 1.0, 500, &[]);
    Ok(run_scenario(&sc, None)?)
}

fn c2_pooling_unbiased() -> Outcome {
    let rep = pooling_vs_averaging(50, 2)?;
    let r2: Vec<f64> = rep.instances.iter().map(|r| r.r2).collect();
    let m = mean(&r2);
    let bound = 3.0 * mc_se(&r2);
    let diff = m - rep.oracle.true_r2;
    Ok((
        diff.abs() <= bound && rep.instances.len() == 500,
        format!(
            "mean R² {m:.4}, oracle {:.4} (MC se {:.4}), |diff| {:.4} ≤ {bound:.4}",
            rep.oracle.true_r2,
            rep.oracle.mc_se,
            diff.abs()
        ),
    ))
}

fn c3_averaging_test_bias() -> Outcome {
    let rep = pooling_vs_averaging(20, 3)?;
    let pool: Vec<f64> = rep.instances.iter().map(|r| r.r2).collect();
    let avg: Vec<f64> = rep.instances.iter().filter_map(|r| r.r2_averaging_test).collect();
    if avg.len() != pool.len() {
        return Ok((false, format!("averaging R² missing for {} instances", pool.len() - avg.len())));
    }
    let gap = mean(&pool) - mean(&avg);
    let margin = 3.0 * (mc_se(&pool).powi(2) + mc_se(&avg).powi(2)).sqrt();
    Ok((
        gap > margin,
        format!(
            "pooling {:.4}, averaging/test {:.4}, gap {gap:.4} > {margin:.4}",
            mean(&pool),
            mean(&avg)
        ),
    ))
}

fn c4_boot632_bias() -> Outcome {
    let sc = scenario("boot632_vs_cv", 4, 30, 0.5, 300, &[]);
    let spec = PredictorSpec::ols();
    let mut cv = Vec::new();
    let mut b632 = Vec::new();
    for s in 0..sc.n_mc {
        let d = generate_dataset(&sc, s);
        cv.push(estimate_mse_cv(&d, &spec, 10, 25, s as u64, true)?.point);
        b632.push(estimate_mse_boot632(&d, &spec, 100, s as u64)?.point);
    }
    // Both estimators see the same datasets, so the gap is judged against
    // the Monte Carlo error of the per-instance differences.
    let diffs: Vec<f64> = cv.iter().zip(&b632).map(|(a, b)| a - b).collect();
    let gap = mean(&diffs);
    let margin = 2.0 * mc_se(&diffs);
    let unpaired = 2.0 * (mc_se(&cv).powi(2) + mc_se(&b632).powi(2)).sqrt();
    Ok((
        gap > margin,
        format!(
            "CV MSE {:.4}, .632 MSE {:.4}, gap {gap:.4} > {margin:.4} (unpaired margin {unpaired:.4})",
            mean(&cv),
            mean(&b632)
        ),
    ))
}

/// Delta-method variance built from a central-difference gradient of
/// 1 − MSE/MST.
fn numeric_delta_variance(mse: f64, var_mse: f64, mst: f64, var_mst: f64, rho: f64) -> f64 {
    let h = 1e-6;
    let r2 = |a: f64, b: f64| 1.0 - a / b;
    let g1 = (r2(mse + h, mst) - r2(mse - h, mst)) / (2.0 * h);
    let g2 = (r2(mse, mst + h) - r2(mse, mst - h)) / (2.0 * h);
    let cov = rho * (var_mse * var_mst).sqrt();
    g1 * g1 * var_mse + g2 * g2 * var_mst + 2.0 * g1 * g2 * cov
}

fn c5_delta_method() -> Outcome {
    let a = se_delta_parts(1.0, 0.04, 2.0, 0.08, 0.0)?;
    let b = se_delta_parts(1.0, 0.04, 2.0, 0.08, 1.0)?;
    let exact_a = 0.015f64.sqrt();
    let exact_b = (0.015 - 0.25 * 0.0032f64.sqrt()).sqrt();
    let mut ok = (a - exact_a).abs() < 1e-6 && (b - exact_b).abs() < 1e-6;
    ok &= (a - 0.12247).abs() < 5e-6 && (b - 0.02929).abs() < 5e-6;
    let mut rng = stream(5, SUITE, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let mse: f64 = rng.random_range(0.1..5.0);
        let mst: f64 = rng.random_range(0.5..5.0);
        let var_mse: f64 = rng.random_range(0.001..0.5);
        let var_mst: f64 = rng.random_range(0.001..0.5);
        let rho: f64 = rng.random_range(-1.0..1.0);
        let se = se_delta_parts(mse, var_mse, mst, var_mst, rho)?;
        let num = numeric_delta_variance(mse, var_mse, mst, var_mst, rho);
        worst = worst.max((se * se - num).abs() / num);
    }
    ok &= worst <= 1e-6;
    Ok((
        ok,
        format!("examples {a:.6} / {b:.6}; worst finite-difference relative error {worst:.2e}"),
    ))
}

fn c6_enet_orthonormal() -> Outcome {
    let (n, p) = (40, 5);
    let mut rng = stream(6, SUITE, &[]);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let mut raw = DMatrix::from_fn(n, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        for mut c in raw.column_iter_mut() {
            let m = c.mean();
            c.add_scalar_mut(-m);
        }
        let x = raw.qr().q() * (n as f64).sqrt();
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let lambda: f64 = rng.random_range(0.01..1.0);
        let alpha: f64 = rng.random_range(0.0..=1.0);
        let beta = solve_fixed_design(&x, &y, lambda, alpha)?;
        for j in 0..p {
            let ols = x.column(j).iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            let t = lambda * alpha;
            let shrunk = if ols > t {
                ols - t
            } else if ols < -t {
                ols + t
            } else {
                0.0
            };
            worst = worst.max((beta[j] - shrunk / (1.0 + lambda * (1.0 - alpha))).abs());
        }
    }
    Ok((worst <= 1e-8, format!("max coordinate error {worst:.2e} (≤ 1e-8) over 50 instances")))
}

fn c7_type1() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (n, seed) in [(30, 71), (100, 72)] {
        let sc = scenario(&format!("null_n{n}"), seed, n, 0.0, 200, &["delta/jackknife/normal"]);
        let rep = run_scenario(&sc, None)?;
        let d = &rep.diagnostics[0];
        let rate = d.type1_error.ok_or("oracle R² above 0 under the null")?;
        ok &= rate <= 0.07;
        parts.push(format!("n={n}: {rate:.3} (true R² {:.4})", d.true_r2_oracle));
    }
    Ok((ok, format!("rejection rate ≤ 0.07; {}", parts.join(", "))))
}

fn c8_coverage() -> Outcome {
    let mut sc = scenario("coverage_n100", 8, 100, 1.0, 200, &["delta/npboot/normal"]);
    sc.run.n_boot_rho = 50;
    let rep = run_scenario(&sc, None)?;
    let d = &rep.diagnostics[0];
    Ok((
        (0.90..=0.98).contains(&d.coverage),
        format!(
            "{}: coverage {:.3} in [0.90, 0.98], true R² {:.4}, mean R² {:.4}",
            methods_of(&sc)[0],
            d.coverage,
            d.true_r2_oracle,
            d.mean_r2
        ),
    ))
}

fn c9_null_rho() -> Outcome {
    let sc = scenario("null_rho_n50", 9, 50, 0.0, 100, &["delta/jackknife/normal", "delta/npboot/normal"]);
    let rep = run_scenario(&sc, None)?;
    let rhos: Vec<f64> = rep.diagnostics.iter().map(|d| d.mean_rho_hat).collect();
    Ok((
        rhos.iter().all(|r| *r > 0.8),
        format!("mean ρ̂ jackknife {:.3}, npboot {:.3} (> 0.8)", rhos[0], rhos[1]),
    ))
}

fn c10_table_arithmetic() -> Outcome {
    let t = z_test_r2_leq_zero(0.72, 0.07)?;
    let decade_ok = t.p.log10().floor() == 8.06e-25f64.log10().floor();
    let ci = normal_interval(0.72, 0.07, 0.05)?;
    let round2 = |v: f64| (v * 100.0).round() / 100.0;
    let ci_ok = round2(ci.lower) == 0.58 && round2(ci.upper) == 0.86;
    let c = compare_independent(0.72, 0.07, -0.01, 0.15)?;
    Ok((
        decade_ok && ci_ok && c.z >= 4.4,
        format!(
            "p {} (paper 8.06e-25), CI ({:.2}, {:.2}), across z {:.3} (≥ 4.4)",
            cli::format_p(t.p),
            ci.lower,
            ci.upper,
            c.z
        ),
    ))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, Box<dyn Error>> {
    let mut out = Vec::new();
    cli::run(args.iter().copied(), &mut out).map_err(|e| format!("{e:#}"))?;
    Ok(out)
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir()?;
    let csv = dir.path().join("data.csv");
    let mut rng = stream(11, SUITE, &[]);
    let mut text = String::from("y,x1,x2\n");
    for _ in 0..40 {
        let x1: f64 = rng.sample(StandardNormal);
        let x2: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        text.push_str(&format!("{},{x1},{x2}\n", x1 - 0.5 * x2 + e));
    }
    std::fs::write(&csv, text)?;
    let scen = dir.path().join("scenarios.ini");
    std::fs::write(
        &scen,
        "seed = 5\ninstances = 8\noracle_reps = 40\nrepeats = 3\nboot_rho = 20\n\
         [small]\nn = 30\nmethods = delta/jackknife/normal, delta/npboot/percentile\n",
    )?;
    let csv_s = csv.to_str().ok_or("path")?;
    let scen_s = scen.to_str().ok_or("path")?;
    let mut identical = true;
    let mut count = 0;
    for fmt in ["json", "table"] {
        let base = ["oosr2", "analyze", csv_s, "--outcome", "y", "--repeats", "5", "--format", fmt];
        let first = run_cli(&base)?;
        for threads in ["1", "4"] {
            for _ in 0..2 {
                let mut args = vec!["oosr2", "--threads", threads];
                args.extend_from_slice(&base[1..]);
                identical &= run_cli(&args)? == first;
                count += 1;
            }
        }
    }
    let mut sim_outputs = Vec::new();
    for (i, threads) in ["1", "4", "1", "4"].iter().enumerate() {
        let manifest = dir.path().join(format!("manifest{i}.json"));
        let out = run_cli(&["oosr2", "--threads", threads, "simulate", scen_s, "--manifest", manifest.to_str().ok_or("path")?])?;
        sim_outputs.push((out, std::fs::read(&manifest)?));
        count += 1;
    }
    identical &= sim_outputs.windows(2).all(|w| w[0] == w[1]);
    identical &= !sim_outputs[0].0.is_empty();
    Ok((identical, format!("{count} runs across --threads 1/4 byte-identical: {identical}")))
}

fn c12_high_dimensional() -> Outcome {
    let sc = ScenarioConfig {
        name: "enet_p200".into(),
        n: 75,
        p: 200,
        beta_value: 1.0,
        beta_nonzero: 10,
        n_mc: 50,
        oracle_test_size: 0,
        predictor: PredictorSpec::elastic_net(),
        run: RunConfig {
            seed: 12,
            cv_folds: 10,
            cv_repeats: 5,
            ..RunConfig::default()
        },
        methods: vec!["delta/jackknife/normal".parse()?],
        ..ScenarioConfig::default()
    };
    let rep = run_scenario(&sc, None)?;
    let d = &rep.diagnostics[0];
    let raw: Vec<f64> = rep.instances.iter().map(|r| 1.0 - r.mse_raw / r.mst).collect();
    let ok = (d.mean_r2 - d.true_r2_oracle).abs() <= 0.1 && d.coverage >= 0.85;
    Ok((
        ok,
        format!(
            "mean R² {:.4} vs oracle {:.4} (±0.1), coverage {:.3} (≥ 0.85); \
             uncorrected-CV mean R² {:.4}, nested-CV bias {:+.4}",
            d.mean_r2,
            d.true_r2_oracle,
            d.coverage,
            mean(&raw),
            d.bias_r2
        ),
    ))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [(usize, &str, fn() -> Outcome); 12] = [
        (1, "MST unbiasedness", c1_mst_unbiased),
        (2, "pooling R² unbiasedness", c2_pooling_unbiased),
        (3, "averaging with test MST biased down", c3_averaging_test_bias),
        (4, ".632 bootstrap biased down", c4_boot632_bias),
        (5, "delta-method formula", c5_delta_method),
        (6, "elastic net on orthonormal design", c6_enet_orthonormal),
        (7, "type I error", c7_type1),
        (8, "normal CI coverage", c8_coverage),
        (9, "ρ̂ near 1 under the null", c9_null_rho),
        (10, "case-study arithmetic", c10_table_arithmetic),
        (11, "CLI determinism", c11_determinism),
        (12, "high-dimensional elastic net", c12_high_dimensional),
    ];
    let mut failed = Vec::new();
    for (id, name, run) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        println!(
            "criterion {id:>2} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
