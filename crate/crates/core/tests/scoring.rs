use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xscale_core::crosswindow::GlobalContext;
use xscale_core::data::ChannelStats;
use xscale_core::model::{generate_multiscale, Model, ModelConfig};
use xscale_core::scoring::{apply_threshold, pot_threshold, window_score, PotConfig};
use xscale_core::training::{Detector, TrainConfig};

#[test]
fn two_scale_hand_case() {
    // X_2 = window, X_1 = pool-2 of it.
    let window = [1.0, 3.0, 2.0, 2.0, 0.0, 4.0, 5.0, 5.0];
    let bundle = generate_multiscale(&window, &[4, 2]).unwrap();
    assert_eq!(bundle.scale(1), &[2.0, 2.0, 2.0, 5.0]);
    let recon = vec![vec![2.0, 1.0, 2.0, 3.0], vec![1.0, 3.0, 2.0, 2.0, 0.0, 4.0, 5.0, 3.0]];
    // Scale 1 squared error [0, 1, 0, 4] resampled to 8 points at positions
    // 3j/7; scale 2 error is 4 at the last point only.
    let e1 = [0.0, 1.0, 0.0, 4.0];
    let up: Vec<f64> = (0..8)
        .map(|j| {
            let pos = j as f64 * 3.0 / 7.0;
            let l = (pos.floor() as usize).min(3);
            let r = (l + 1).min(3);
            let w = pos - l as f64;
            e1[l] * (1.0 - w) + e1[r] * w
        })
        .collect();
    let e2 = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0];
    let expected: Vec<f64> = up.iter().zip(e2).map(|(a, b)| (a + b) / 2.0).collect();
    let expected_by_hand = [
        0.0,
        3.0 / 14.0,
        3.0 / 14.0 * 2.0,
        (1.0 - 2.0 / 7.0) / 2.0,
        (2.0 / 7.0) / 2.0,
        (4.0 * (1.0 / 7.0)) / 2.0,
        (4.0 * (4.0 / 7.0)) / 2.0,
        (4.0 + 4.0) / 2.0,
    ];
    let got = window_score(&bundle, &recon).unwrap();
    for ((g, e), h) in got.iter().zip(&expected).zip(&expected_by_hand) {
        assert!((g - e).abs() < 1e-12);
        assert!((g - h).abs() < 1e-12, "{g} vs {h}");
    }
}

#[test]
fn shared_offset_leaves_scores_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let window: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let bundle = generate_multiscale(&window, &[4, 2]).unwrap();
    let recon: Vec<Vec<f64>> = (1..=2)
        .map(|i| bundle.scale(i).iter().map(|v| v + rng.random_range(-0.5..0.5)).collect())
        .collect();
    let base = window_score(&bundle, &recon).unwrap();
    let shifted: Vec<f64> = window.iter().map(|v| v + 3.0).collect();
    let shifted_bundle = generate_multiscale(&shifted, &[4, 2]).unwrap();
    let shifted_recon: Vec<Vec<f64>> = recon.iter().map(|r| r.iter().map(|v| v + 3.0).collect()).collect();
    for (a, b) in base.iter().zip(window_score(&shifted_bundle, &shifted_recon).unwrap()) {
        assert!((a - b).abs() < 1e-12);
    }
}

fn detector(window: usize) -> Detector {
    let model_cfg = ModelConfig {
        window,
        kernels: vec![4, 2],
        patch_len: 2,
        d_model: 8,
        heads: 2,
        query_len: 2,
        prototypes: 2,
        ..ModelConfig::default()
    };
    let model = Model::new(model_cfg.clone(), 4).unwrap();
    let context = GlobalContext::random(2, 2, 8, 0.95, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    Detector {
        model,
        context,
        stats: vec![ChannelStats { mean: 0.0, std: 1.0 }],
        config: TrainConfig {
            model: model_cfg,
            ..TrainConfig::default()
        },
    }
}

#[test]
fn tail_window_indexing() {
    let w = 16;
    let det = detector(w);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let series: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let got = det.score_series(&series).unwrap();
    assert_eq!(got.len(), 40);

    // Reference loop: windows at 0, 16 and the tail at 24; each point takes
    // the score from the last window that covers it.
    let mut expected = vec![f64::NAN; 40];
    for start in [0usize, 16, 24] {
        let s = det.score_windows(&[&series[start..start + w]]).unwrap().remove(0);
        for (k, v) in s.into_iter().enumerate() {
            expected[start + k] = v;
        }
    }
    assert_eq!(got, expected);

    let exact = det.score_series(&series[..32]).unwrap();
    assert_eq!(&exact[..16], &det.score_windows(&[&series[..16]]).unwrap()[0][..]);
    assert_eq!(det.score_series(&series[..16]).unwrap().len(), 16);
    assert!(det.score_series(&series[..15]).is_err());
}

#[test]
fn scoring_leaves_context_untouched() {
    let det = detector(16);
    let before = det.context.clone();
    let series: Vec<f64> = (0..48).map(|t| (t as f64 * 0.4).sin()).collect();
    det.score_series(&series).unwrap();
    assert_eq!(det.context, before);
}

fn exponential_scores(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect()
}

#[test]
fn pot_on_exponential_and_uniform() {
    let cfg = PotConfig::default();
    let fit = pot_threshold(&exponential_scores(100_000, 3), &cfg).unwrap();
    assert!(!fit.is_fallback());
    assert!((fit.threshold - 1000f64.ln()).abs() / 1000f64.ln() < 0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let uniform: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>()).collect();
    let fit = pot_threshold(&uniform, &cfg).unwrap();
    assert!((fit.threshold - 0.999).abs() / 0.999 < 0.02);
}

#[test]
fn pot_falls_back_on_degenerate_scores() {
    let fit = pot_threshold(&[0.25; 500], &PotConfig::default()).unwrap();
    assert!(fit.is_fallback());
    assert_eq!(fit.threshold, 0.25);
    let few = pot_threshold(&exponential_scores(200, 5), &PotConfig::default()).unwrap();
    assert!(few.is_fallback());
}

#[test]
fn threshold_examples() {
    let scores = [0.0, 0.5, 1.0, 2.0];
    assert_eq!(apply_threshold(&scores, 5.0), vec![0, 0, 0, 0]);
    assert_eq!(apply_threshold(&scores, -1.0), vec![1, 1, 1, 1]);
    let labels = apply_threshold(&scores, 0.5);
    for (s, l) in scores.iter().zip(labels) {
        assert_eq!(l == 1, *s > 0.5);
    }
}
