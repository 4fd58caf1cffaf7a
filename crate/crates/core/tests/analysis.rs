use burstkit::analysis::{
    binned_rates, deviance_test, fit_fixed_lambda, fit_reduced_model, fit_spline_model, marginal_contrast,
    predict_curve, range_grid, smooth_by_type_test, AnalysisRow, Basis, PenalizedLogistic, SplineConfig, SplineFit,
};
use burstkit::linalg::Matrix;
use burstkit::numeric::median;
use burstkit::token::Voicing;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Paired rows: the same tokens (durations) for every type, with outcomes
/// drawn independently from `truth(type_index, voicing, log_duration)`.
fn simulate(
    n: usize,
    types: &[&str],
    voicings: &[Voicing],
    seed: u64,
    truth: impl Fn(usize, Voicing, f64) -> f64,
) -> Vec<AnalysisRow> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for &v in voicings {
        let durations: Vec<f64> = (0..n).map(|_| r.gen_range(0.02f64..0.2).ln()).collect();
        for (ti, t) in types.iter().enumerate() {
            for (i, &x) in durations.iter().enumerate() {
                rows.push(AnalysisRow {
                    token_id: format!("{v}-{i}"),
                    annotation_type: t.to_string(),
                    voicing: v,
                    log_duration: x,
                    burst: r.gen_bool(truth(ti, v, x).clamp(0.0, 1.0)),
                });
            }
        }
    }
    rows
}

fn truth_curve(x: f64) -> f64 {
    logistic(6.0 + 2.0 * x)
}

#[test]
fn recovers_simulated_logistic_curve() {
    let rows = simulate(5000, &["manual"], &[Voicing::Voiceless], 1, |_, _, x| truth_curve(x));
    let fit: SplineFit<f64> = fit_spline_model(&rows, &SplineConfig::default()).unwrap();
    let mut xs: Vec<f64> = rows.iter().map(|r| r.log_duration).collect();
    xs.sort_by(f64::total_cmp);
    let (lo, hi) = (xs[xs.len() / 20], xs[xs.len() * 19 / 20]);
    let grid: Vec<f64> = (0..=50).map(|i| lo + (hi - lo) * i as f64 / 50.0).collect();
    let curve = predict_curve(&fit, "manual", Voicing::Voiceless, &grid, 0.95).unwrap();
    for p in &curve.points {
        let err = (p.probability - truth_curve(p.log_duration)).abs();
        assert!(err <= 0.05, "x={} fit={} truth={}", p.log_duration, p.probability, truth_curve(p.log_duration));
        assert!(p.probability > 0.0 && p.probability < 1.0);
        assert!(p.lo <= p.probability && p.probability <= p.hi);
    }
    let block = &fit.blocks[0];
    assert!(block.trace.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn constant_group_is_handled_by_the_ridge_floor() {
    let rows = simulate(300, &["manual"], &[Voicing::Voiced, Voicing::Voiceless], 2, |_, v, x| match v {
        Voicing::Voiced => 1.0,
        Voicing::Voiceless => truth_curve(x),
    });
    let fit: SplineFit<f64> = fit_spline_model(&rows, &SplineConfig::default()).unwrap();
    let grid = range_grid(&fit, Voicing::Voiced, 40);
    let curve = predict_curve(&fit, "manual", Voicing::Voiced, &grid, 0.95).unwrap();
    assert!(curve.points.iter().all(|p| p.probability >= 0.99));
}

#[test]
fn roughness_never_increases_with_lambda() {
    let rows = simulate(800, &["manual"], &[Voicing::Voiced], 3, |_, _, x| logistic(3.0 + (3.0 * x).sin() + x));
    let mut prev = f64::INFINITY;
    let mut lambda = 0.01;
    while lambda < 1e4 {
        let (basis, block) = fit_fixed_lambda::<f64>(&rows, 10, lambda).unwrap();
        let rough = block.roughness(&basis);
        assert!(rough <= prev * (1.0 + 1e-9) + 1e-12, "λ={lambda}: {rough} > {prev}");
        prev = rough;
        lambda *= 2.0;
    }
}

#[test]
fn zero_coefficients_give_flat_symmetric_curve() {
    let rows = simulate(200, &["manual"], &[Voicing::Voiced], 4, |_, _, x| truth_curve(x));
    let mut fit: SplineFit<f64> = fit_spline_model(&rows, &SplineConfig::default()).unwrap();
    for t in fit.blocks[0].theta.iter_mut() {
        *t = 0.0;
    }
    let grid = range_grid(&fit, Voicing::Voiced, 25);
    for p in predict_curve(&fit, "manual", Voicing::Voiced, &grid, 0.95).unwrap().points {
        assert_eq!(p.probability, 0.5);
        assert!(((p.hi - 0.5) - (0.5 - p.lo)).abs() < 1e-12);
    }
}

#[test]
fn intervals_widen_at_range_edges() {
    let rows = simulate(2000, &["manual"], &[Voicing::Voiced], 5, |_, _, x| truth_curve(x));
    let fit: SplineFit<f64> = fit_spline_model(&rows, &SplineConfig::default()).unwrap();
    let grid = range_grid(&fit, Voicing::Voiced, 101);
    let pts = predict_curve(&fit, "manual", Voicing::Voiced, &grid, 0.95).unwrap().points;
    // width on the linear-predictor scale is what the design density drives
    let width = |p: &burstkit::analysis::CurvePoint| {
        let logit = |q: f64| (q / (1.0 - q)).ln();
        logit(p.hi) - logit(p.lo)
    };
    let widths: Vec<f64> = pts.iter().map(width).collect();
    let med = median(&widths);
    assert!(widths[0] >= med && widths[100] >= med, "{} {} {med}", widths[0], widths[100]);
    let outside = predict_curve(&fit, "manual", Voicing::Voiced, &[fit.bases[&Voicing::Voiced].hi + 0.1], 0.95)
        .unwrap();
    assert!(outside.points[0].extrapolated);
    assert!(predict_curve(&fit, "nobody", Voicing::Voiced, &grid, 0.95).is_err());
}

#[test]
fn copied_type_gives_exactly_zero_contrast() {
    let mut rows = simulate(1000, &["manual"], &[Voicing::Voiced, Voicing::Voiceless], 6, |_, _, x| truth_curve(x));
    let copies: Vec<AnalysisRow> =
        rows.iter().map(|r| AnalysisRow { annotation_type: "model_a".into(), ..r.clone() }).collect();
    rows.extend(copies);
    let fit: SplineFit<f64> = fit_spline_model(&rows, &SplineConfig::default()).unwrap();
    let c = marginal_contrast(&fit, "manual", "model_a", Voicing::Voiced).unwrap();
    assert_eq!(c.delta, 0.0);
    assert!(c.p_unadjusted > 0.99 && c.p_adjusted > 0.99);
    let own = marginal_contrast(&fit, "manual", "manual", Voicing::Voiced).unwrap();
    assert_eq!(own.delta, 0.0);
}

#[test]
fn injected_shift_is_recovered_and_significant() {
    let rows = simulate(5000, &["manual", "model_a"], &[Voicing::Voiced, Voicing::Voiceless], 7, |t, _, x| {
        0.8 * truth_curve(x) + if t == 1 { 0.06 } else { 0.0 }
    });
    let fit: SplineFit<f64> = fit_spline_model(&rows, &SplineConfig::default()).unwrap();
    for v in Voicing::ALL {
        let c = marginal_contrast(&fit, "model_a", "manual", v).unwrap();
        assert!((c.delta - 0.06).abs() <= 0.02, "{v}: {}", c.delta);
        assert!(c.p_adjusted < 0.05, "{v}: {}", c.p_adjusted);
        let back = marginal_contrast(&fit, "manual", "model_a", v).unwrap();
        assert_eq!(back.delta, -c.delta);
    }
}

#[test]
fn deviance_test_detects_different_curves() {
    let rows = simulate(5000, &["manual", "model_a"], &[Voicing::Voiced], 8, |t, _, x| {
        if t == 0 {
            truth_curve(x)
        } else {
            logistic(-2.0 - 1.5 * x)
        }
    });
    let cfg = SplineConfig::default();
    let (t, _, _) = smooth_by_type_test(&rows, &cfg).unwrap();
    assert!(t.p < 1e-3, "{t:?}");
    let full: SplineFit<f64> = fit_spline_model(&rows, &cfg).unwrap();
    let reduced: SplineFit<f64> = fit_reduced_model(&rows, &cfg).unwrap();
    let same = deviance_test(&full, &full).unwrap();
    assert_eq!((same.chi2, same.p), (0.0, 1.0));
    assert!(deviance_test(&reduced, &full).is_err());
}

/// Kolmogorov–Smirnov p-value against Uniform(0, 1) (asymptotic series
/// with the small-sample correction of Stephens).
fn ks_uniform_p(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut q = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        q += 2.0 * if k % 2 == 1 { 1.0 } else { -1.0 } * (-2.0 * kf * kf * lambda * lambda).exp();
    }
    q.clamp(0.0, 1.0)
}

#[test]
fn null_deviance_test_is_calibrated() {
    let cfg = SplineConfig::default();
    let ps: Vec<f64> = (0..200)
        .map(|rep| {
            let rows = simulate(400, &["manual", "model_a"], &[Voicing::Voiced, Voicing::Voiceless], 1000 + rep, |_, _, x| {
                truth_curve(x)
            });
            smooth_by_type_test(&rows, &cfg).unwrap().0.p
        })
        .collect();
    let p = ks_uniform_p(&ps);
    assert!(p > 0.01, "KS p = {p}");
}

#[test]
fn translation_equivariance() {
    let rows = simulate(1500, &["manual"], &[Voicing::Voiced], 9, |_, _, x| truth_curve(x));
    let shift = 0.7;
    let shifted: Vec<AnalysisRow> =
        rows.iter().map(|r| AnalysisRow { log_duration: r.log_duration + shift, ..r.clone() }).collect();
    let cfg = SplineConfig::default();
    let a: SplineFit<f64> = fit_spline_model(&rows, &cfg).unwrap();
    let b: SplineFit<f64> = fit_spline_model(&shifted, &cfg).unwrap();
    let grid = range_grid(&a, Voicing::Voiced, 60);
    let grid_b: Vec<f64> = grid.iter().map(|x| x + shift).collect();
    let ca = predict_curve(&a, "manual", Voicing::Voiced, &grid, 0.95).unwrap();
    let cb = predict_curve(&b, "manual", Voicing::Voiced, &grid_b, 0.95).unwrap();
    for (p, q) in ca.points.iter().zip(&cb.points) {
        assert!((p.probability - q.probability).abs() < 1e-6);
    }
}

#[test]
fn score_matches_finite_differences() {
    let rows = simulate(300, &["manual"], &[Voicing::Voiced], 10, |_, _, x| truth_curve(x));
    let xs: Vec<f64> = rows.iter().map(|r| r.log_duration).collect();
    let basis = Basis::new(&xs, 10).unwrap();
    let mut data = Vec::new();
    for &x in &xs {
        data.push(1.0);
        data.extend(basis.eval_constrained(x));
    }
    let design = Matrix::from_rows(xs.len(), 10, data);
    let y: Vec<f64> = rows.iter().map(|r| if r.burst { 1.0 } else { 0.0 }).collect();
    let sp = basis.penalty();
    let mut penalty = Matrix::zeros(10, 10);
    for a in 0..9 {
        for b in 0..9 {
            penalty[(a + 1, b + 1)] = sp[(a, b)];
        }
    }
    let problem = PenalizedLogistic { x: &design, y: &y, penalty: &penalty, lambda: 3.0 };
    let mut r = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let theta: Vec<f64> = (0..10).map(|_| r.gen_range(-1.0..1.0)).collect();
        let g = problem.gradient(&theta);
        for j in 0..10 {
            let h = 1e-6;
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (problem.objective(&up) - problem.objective(&dn)) / (2.0 * h);
            let rel = (fd - g[j]).abs() / g[j].abs().max(1.0);
            assert!(rel < 1e-6, "param {j}: {} vs {fd}", g[j]);
        }
    }
}

#[test]
fn binned_rates_from_simulation() {
    let rows = simulate(1000, &["manual"], &[Voicing::Voiced], 12, |_, _, x| truth_curve(x));
    let bins = binned_rates(&rows, 20).unwrap();
    assert_eq!(bins.len(), 20);
    assert!(bins.windows(2).all(|w| w[0].hi_log_duration <= w[1].lo_log_duration));
    assert!(bins.iter().all(|b| b.lo <= b.rate && b.rate <= b.hi));
}

#[test]
fn unpaired_rows_are_rejected() {
    let mut rows = simulate(50, &["manual", "model_a"], &[Voicing::Voiced], 13, |_, _, x| truth_curve(x));
    rows.pop();
    assert!(fit_spline_model::<f64>(&rows, &SplineConfig::default()).is_err());
}

#[test]
fn f32_fit_tracks_f64() {
    let rows = simulate(1000, &["manual"], &[Voicing::Voiced], 14, |_, _, x| truth_curve(x));
    let cfg = SplineConfig::default();
    let a: SplineFit<f64> = fit_spline_model(&rows, &cfg).unwrap();
    let b: SplineFit<f32> = fit_spline_model(&rows, &cfg).unwrap();
    let grid = range_grid(&a, Voicing::Voiced, 20);
    let ca = predict_curve(&a, "manual", Voicing::Voiced, &grid, 0.95).unwrap();
    let cb = predict_curve(&b, "manual", Voicing::Voiced, &grid, 0.95).unwrap();
    for (p, q) in ca.points.iter().zip(&cb.points) {
        assert!((p.probability - q.probability).abs() < 0.02);
    }
}
