use super::*;
use crate::seed::SplitMix64;

fn tensor(f: impl Fn(usize, usize) -> f64, statics: [f64; N_STATIC]) -> FeatureTensor {
    let mut seq = [[0.0; N_CHANNELS]; HOURS];
    for (h, row) in seq.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = f(h, c);
        }
    }
    FeatureTensor {
        stay_id: 1,
        seq,
        static_features: statics,
        label: false,
    }
}

/// Noisy two-class data with a base rate near 0.2.
fn dataset(n: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rng = SplitMix64::new(seed);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| 2.0 * rng.next_f64() - 1.0).collect();
        let z = -1.4 + 1.5 * x[0] - 0.8 * x[1 % dim];
        ys.push(rng.next_f64() < sigmoid(z));
        xs.push(x);
    }
    (xs, ys)
}

#[test]
fn last_hour_examples() {
    let t = tensor(
        |h, _| if h == HOURS - 1 { 1.0 } else { 5.0 },
        [0.0; N_STATIC],
    );
    let f = last_hour_features(&t);
    assert_eq!(&f[..N_CHANNELS], &[1.0; N_CHANNELS]);
    assert_eq!(&f[N_CHANNELS..], &[0.0; N_STATIC]);

    let a = tensor(
        |h, c| if h == HOURS - 1 { c as f64 } else { -1.0 },
        [0.5; N_STATIC],
    );
    let b = tensor(
        |h, c| {
            if h == HOURS - 1 {
                c as f64
            } else {
                h as f64 * 3.0
            }
        },
        [0.5; N_STATIC],
    );
    assert_eq!(last_hour_features(&a), last_hour_features(&b));
}

#[test]
fn last_hour_golden() {
    let statics = [0.25, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let t = tensor(|h, c| (h * 100 + c) as f64, statics);
    let want = [
        4700.0, 4701.0, 4702.0, 4703.0, 4704.0, 4705.0, 4706.0, 4707.0, 4708.0, 4709.0, 4710.0,
        4711.0, 4712.0, 0.25, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0,
    ];
    assert_eq!(last_hour_features(&t), want);
}

#[test]
fn predict_examples() {
    let z = LrModel::zeros(3, 1.0);
    assert_eq!(predict_lr(&z, &[1.0, -2.0, 3.0]), 0.5);
    let m = LrModel {
        weights: vec![1.0, 0.0],
        bias: 0.0,
        lambda: 1.0,
        seed: 0,
    };
    assert!((predict_lr(&m, &[3f64.ln(), 9.0]) - 0.75).abs() < 1e-15);
    assert!(predict_lr(&m, &[0.2, 0.0]) < predict_lr(&m, &[0.3, 0.0]));
}

#[test]
fn gradient_matches_finite_differences() {
    let (xs, ys) = dataset(40, 5, 1);
    let mut m = LrModel {
        weights: vec![0.3, -0.2, 0.1, 0.5, -0.4],
        bias: 0.2,
        lambda: 0.7,
        seed: 0,
    };
    let (_, gw, gb) = objective_and_grad(&m, &xs, &ys).unwrap();
    let delta = 1e-5;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
    for i in 0..=5 {
        fn slot(m: &mut LrModel, i: usize) -> &mut f64 {
            if i < 5 {
                &mut m.weights[i]
            } else {
                &mut m.bias
            }
        }
        let orig = *slot(&mut m, i);
        *slot(&mut m, i) = orig + delta;
        let plus = objective(&m, &xs, &ys).unwrap();
        *slot(&mut m, i) = orig - delta;
        let minus = objective(&m, &xs, &ys).unwrap();
        *slot(&mut m, i) = orig;
        let numeric = (plus - minus) / (2.0 * delta);
        let analytic = if i < 5 { gw[i] } else { gb };
        assert!(
            rel(analytic, numeric) < 1e-6,
            "coordinate {i}: {analytic} vs {numeric}"
        );
    }
}

#[test]
fn huge_lambda_leaves_intercept_only() {
    let (xs, ys) = dataset(300, 6, 2);
    let fit = train_lr(&xs, &ys, 1e6, &LrConfig::default()).unwrap();
    let wnorm = dot(&fit.model.weights, &fit.model.weights).sqrt();
    assert!(wnorm < 1e-3, "{wnorm}");
    let rate = ys.iter().filter(|&&y| y).count() as f64 / ys.len() as f64;
    let logit = (rate / (1.0 - rate)).ln();
    assert!(
        (fit.model.bias - logit).abs() < 1e-3,
        "{} vs {logit}",
        fit.model.bias
    );
}

#[test]
fn separable_line_is_fit_exactly() {
    let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 4.0 - 2.4]).collect();
    let ys: Vec<bool> = xs.iter().map(|x| x[0] > 0.0).collect();
    let fit = train_lr(&xs, &ys, 0.01, &LrConfig::default()).unwrap();
    for (x, &y) in xs.iter().zip(&ys) {
        assert_eq!(predict_lr(&fit.model, x) >= 0.5, y);
    }
}

#[test]
fn optimum_is_stable_under_restart() {
    for (lambda, seed) in [(1.0, 3), (0.01, 4), (1e-4, 5)] {
        let (xs, ys) = dataset(400, 8, seed);
        let cfg = LrConfig::default();
        let fit = train_lr(&xs, &ys, lambda, &cfg).unwrap();
        let at_zero = objective(&LrModel::zeros(8, lambda), &xs, &ys).unwrap();
        assert!(fit.objective <= at_zero);
        assert!(fit.grad_norm < cfg.tol, "{fit:?}");
        let again = train_lr_from(fit.model.clone(), &xs, &ys, &cfg).unwrap();
        assert!((again.objective - fit.objective).abs() < 1e-10);
    }
}

#[test]
fn intercept_is_unpenalized() {
    let xs = vec![vec![0.0; 4]; 10];
    let ys: Vec<bool> = (0..10).map(|i| i < 3).collect();
    let a = train_lr(&xs, &ys, 0.1, &LrConfig::default()).unwrap();
    let b = train_lr(&xs, &ys, 100.0, &LrConfig::default()).unwrap();
    assert!((a.model.bias - b.model.bias).abs() < 1e-8);
    assert!((a.model.bias - (3.0f64 / 7.0).ln()).abs() < 1e-6);
}

#[test]
fn input_errors() {
    let xs = vec![vec![1.0], vec![2.0]];
    assert!(train_lr(&xs, &[true, true], 1.0, &LrConfig::default()).is_err());
    assert!(train_lr(&xs[..1], &[true], 1.0, &LrConfig::default()).is_err());
    assert!(train_lr(&xs, &[true, false], -1.0, &LrConfig::default()).is_err());
    assert!(train_lr(&xs, &[true], 1.0, &LrConfig::default()).is_err());
}

#[test]
fn text_checkpoint_round_trips() {
    let m = LrModel {
        weights: (0..N_FEATURES)
            .map(|i| (i as f64 * 0.37).sin() / 3.0)
            .collect(),
        bias: -1.953_551_064_931_492,
        lambda: 1.0,
        seed: 7,
    };
    let text = encode_lr(&m).unwrap();
    assert_eq!(text.lines().count(), N_FEATURES + 3);
    assert!(text.starts_with("gcs="));
    assert_eq!(decode_lr(&text).unwrap(), m);
    assert!(decode_lr("gcs=1\n").is_err());
}
