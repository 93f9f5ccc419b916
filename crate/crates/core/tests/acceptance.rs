//! Acceptance gate for the workspace. Every test below checks one release
//! criterion end to end and prints a single `acceptance NN name: PASS`/`FAIL`
//! line (visible with `cargo test --test acceptance -- --nocapture`). The
//! tolerances are pinned; loosening them is a release decision, not a test
//! fix.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gsvd_core::analysis::{bias_report, null_energy_fraction, undersample, validate, ValidateOptions};
use gsvd_core::attack::{run_attack, AttackConfig};
use gsvd_core::blackbox::BlackBox;
use gsvd_core::dataset::synth_blobs;
use gsvd_core::demo::{cosine_pair, first_coordinate_scaled, COSINE_PAIR_GAINS};
use gsvd_core::gsvd::{self, build, estimate_gains, GsvdModel};
use gsvd_core::numerics::{norm2, standard_normal, Matrix};
use gsvd_core::svdnet::{
    extract_head_svd, lipschitz_upper_bound, loss, loss_and_grad, rescale_latent, train, NetShape,
    SvdNet, TrainConfig,
};

// ── reporting helpers ─────────────────────────────────────────────────────

fn expect(failures: &mut Vec<String>, ok: bool, msg: String) {
    if !ok {
        failures.push(msg);
    }
}

fn conclude(number: usize, name: &str, failures: Vec<String>, detail: String) {
    if failures.is_empty() {
        println!("acceptance {number:02} {name}: PASS ({detail})");
    } else {
        let what = failures.join("; ");
        println!("acceptance {number:02} {name}: FAIL ({what})");
        panic!("acceptance criterion {number:02} {name} failed: {what}");
    }
}

// ── shared trained model ──────────────────────────────────────────────────

/// Blob classifier shared by the data-driven criteria: 1000 points split
/// 500/500 into construction and holdout halves, a 4-8-6 net trained on the
/// construction block, and the decomposition built from construction gains.
struct Setup {
    net: Arc<SvdNet>,
    model: GsvdModel,
    cons_x: Vec<Vec<f64>>,
    cons_labels: Vec<usize>,
    hold_x: Vec<Vec<f64>>,
    hold_labels: Vec<usize>,
    holdout_accuracy: f64,
}

fn blob_train_config() -> TrainConfig {
    TrainConfig { epochs: 60, batch_size: 64, learning_rate: 3e-3, seed: 5, ..Default::default() }
}

fn setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let ds = synth_blobs(2, 500, 4, 0.5, 21).expect("blob synthesis");
        let labels = ds.labels.clone().expect("blobs are labeled");
        let (cons, hold) = ds.split_at(500).expect("split");
        let cons_labels = labels[..500].to_vec();
        let hold_labels = labels[500..].to_vec();
        let outcome = train(&cons.x, &cons_labels, &NetShape::new(4, vec![8], 2), &blob_train_config())
            .expect("training");
        let net = Arc::new(outcome.net);
        let f = net.as_blackbox();
        let alpha = estimate_gains(&f, &cons.x).expect("gain estimation");
        let model = build(&f, &alpha, 0.1).expect("construction");
        let hits = hold
            .x
            .iter()
            .zip(&hold_labels)
            .filter(|(x, &label)| net.predict(x) == label)
            .count();
        let holdout_accuracy = hits as f64 / hold.x.len() as f64;
        Setup {
            net,
            model,
            cons_x: cons.x,
            cons_labels,
            hold_x: hold.x,
            hold_labels,
            holdout_accuracy,
        }
    })
}

fn random_point(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(lo..hi)).collect()
}

fn unit_point(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let n = norm2(&v);
        if n > 1e-6 {
            return v.iter().map(|c| c / n).collect();
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ── criteria ──────────────────────────────────────────────────────────────

/// The two-coordinate cosine demo must reproduce its pinned scale pair to
/// 1e-9, survive a JSON round trip, and reconstruct the map to 1e-10 — all
/// in under a second.
#[test]
fn criterion_01_demo_scales_match_pinned_values() {
    let started = Instant::now();
    let mut failures = Vec::new();

    let f = cosine_pair();
    let model = build(&f, &COSINE_PAIR_GAINS, 0.1).expect("construction");
    let golden = [14.907119849998598, 0.7453559924999299];
    let sigma_err = max_abs_diff(&model.sigma, &golden);
    expect(&mut failures, sigma_err <= 1e-9, format!("scale error {sigma_err:.3e} > 1e-9"));

    let restored = GsvdModel::from_json(&model.to_json().expect("serialize")).expect("parse");
    let json_err = max_abs_diff(&restored.sigma, &model.sigma);
    expect(&mut failures, restored.perm == model.perm, "permutation changed in round trip".into());
    expect(&mut failures, json_err <= 1e-10, format!("round-trip scale error {json_err:.3e} > 1e-10"));

    let mut recon_err: f64 = 0.0;
    for k in 0..400 {
        let x = [-6.3 + 12.6 * (k as f64 + 0.5) / 400.0];
        if x[0].abs() < 1e-3 {
            continue;
        }
        let truth = f.evaluate(&x).expect("query");
        let recon = gsvd::reconstruct(&model, &f, &x).expect("reconstruction");
        recon_err = recon_err.max(max_abs_diff(&recon, &truth));
    }
    expect(&mut failures, recon_err <= 1e-10, format!("reconstruction error {recon_err:.3e} > 1e-10"));

    let elapsed = started.elapsed().as_secs_f64();
    expect(&mut failures, elapsed < 1.0, format!("took {elapsed:.2}s, budget 1s"));
    conclude(
        1,
        "demo_scales_match_pinned_values",
        failures,
        format!("scale err {sigma_err:.1e}, recon err {recon_err:.1e}, {elapsed:.2}s"),
    );
}

/// For the single-output map `f(x) = a x_1` the lift has a closed form on
/// the unit sphere: output block `sqrt(1-eps) x_1`, input block
/// `sqrt(1 - (1-eps) x_1^2) x`. Both blocks and the left-inverse round trip
/// must match to 1e-12 on ten thousand random unit-norm points.
#[test]
fn criterion_02_single_output_closed_form_on_unit_sphere() {
    let mut failures = Vec::new();
    let a = 2.5;
    let eps = 0.1;
    let f = first_coordinate_scaled(a);
    let model = build(&f, &[a], eps).expect("construction");

    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut out_err: f64 = 0.0;
    let mut in_err: f64 = 0.0;
    let mut round_err: f64 = 0.0;
    for _ in 0..10_000 {
        let x = unit_point(&mut rng, 2);
        let z = gsvd::lift(&model, &f, &x).expect("lift");
        let expected_out = (1.0 - eps).sqrt() * x[0];
        let scale = (1.0 - (1.0 - eps) * x[0] * x[0]).sqrt();
        let expected_in: Vec<f64> = x.iter().map(|c| scale * c).collect();
        out_err = out_err.max((z.output_block()[0] - expected_out).abs());
        in_err = in_err.max(max_abs_diff(z.input_block(), &expected_in));
        let back = gsvd::left_inverse(&model, &z).expect("left inverse");
        round_err = round_err.max(max_abs_diff(&back, &x));
    }
    expect(&mut failures, out_err <= 1e-12, format!("output block error {out_err:.3e} > 1e-12"));
    expect(&mut failures, in_err <= 1e-12, format!("input block error {in_err:.3e} > 1e-12"));
    expect(&mut failures, round_err <= 1e-12, format!("round-trip error {round_err:.3e} > 1e-12"));
    conclude(
        2,
        "single_output_closed_form_on_unit_sphere",
        failures,
        format!("out err {out_err:.1e}, in err {in_err:.1e}, inverse err {round_err:.1e} over 10000 points"),
    );
}

/// Validation on 500 held-out points of the trained blob classifier:
/// reconstruction MSE below 1e-10, left-inverse and norm-preservation
/// errors below 1e-5, no gain violations, under two minutes.
#[test]
fn criterion_03_holdout_validation_metrics() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let s = setup();
    let f = s.net.as_blackbox();
    let report = validate(&s.model, &f, &s.hold_x, &ValidateOptions::default()).expect("validation");

    expect(&mut failures, report.points == 500, format!("expected 500 points, saw {}", report.points));
    expect(
        &mut failures,
        report.recon_mse < 1e-10,
        format!("reconstruction mse {:.3e} >= 1e-10", report.recon_mse),
    );
    expect(
        &mut failures,
        report.left_inv_err < 1e-5,
        format!("left-inverse error {:.3e} >= 1e-5", report.left_inv_err),
    );
    expect(
        &mut failures,
        report.norm_pres_err < 1e-5,
        format!("norm-preservation error {:.3e} >= 1e-5", report.norm_pres_err),
    );
    expect(
        &mut failures,
        report.gain_violations == 0,
        format!("{} gain violations on holdout", report.gain_violations),
    );
    let elapsed = started.elapsed().as_secs_f64();
    expect(&mut failures, elapsed < 120.0, format!("took {elapsed:.1}s, budget 120s"));
    conclude(
        3,
        "holdout_validation_metrics",
        failures,
        format!(
            "mse {:.1e}, left-inv {:.1e}, norm {:.1e}, min gamma {:.3}, {elapsed:.1}s",
            report.recon_mse, report.left_inv_err, report.norm_pres_err, report.min_gamma
        ),
    );
}

/// Across three function families (oscillatory, coordinate projection,
/// random linear) the lift must preserve norms to 1e-9, reconstruct the map
/// to 1e-9, and stay injective over ten thousand sampled pairs per family.
#[test]
fn criterion_04_lift_families_norm_injective_reconstruct() {
    let mut failures = Vec::new();
    let linear =
        Matrix::new(2, 3, vec![1.0, 2.0, 2.0, 0.0, 3.0, 4.0]).expect("matrix");
    let families: Vec<(&str, BlackBox, Vec<f64>, usize, f64)> = vec![
        ("cosine pair", cosine_pair(), COSINE_PAIR_GAINS.to_vec(), 1, 6.3),
        ("scaled first coordinate", first_coordinate_scaled(2.5), vec![2.5], 2, 2.0),
        ("random linear", BlackBox::linear(linear), vec![3.0, 5.0], 3, 2.0),
    ];

    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut detail = Vec::new();
    for (name, f, alpha, dim, span) in families {
        let model = build(&f, &alpha, 0.1).expect("construction");
        let mut norm_err: f64 = 0.0;
        let mut recon_err: f64 = 0.0;
        for _ in 0..1000 {
            let x = loop {
                let x = random_point(&mut rng, dim, -span, span);
                if norm2(&x) > 1e-3 {
                    break x;
                }
            };
            let z = gsvd::lift(&model, &f, &x).expect("lift");
            let y = f.evaluate(&x).expect("query");
            norm_err = norm_err.max((z.norm() - norm2(&x)).abs() / norm2(&x).max(1.0));
            let recon = gsvd::reconstruct(&model, &f, &x).expect("reconstruction");
            recon_err = recon_err.max(max_abs_diff(&recon, &y) / norm2(&y).max(1.0));
        }
        expect(
            &mut failures,
            norm_err <= 1e-9,
            format!("{name}: norm-preservation error {norm_err:.3e} > 1e-9"),
        );
        expect(
            &mut failures,
            recon_err <= 1e-9,
            format!("{name}: reconstruction error {recon_err:.3e} > 1e-9"),
        );

        let mut min_ratio = f64::INFINITY;
        for _ in 0..10_000 {
            let x = loop {
                let x = random_point(&mut rng, dim, -span, span);
                if norm2(&x) > 1e-3 {
                    break x;
                }
            };
            let y = loop {
                let y = random_point(&mut rng, dim, -span, span);
                if norm2(&y) > 1e-3 && max_abs_diff(&x, &y) > 1e-6 {
                    break y;
                }
            };
            let zx = gsvd::lift(&model, &f, &x).expect("lift");
            let zy = gsvd::lift(&model, &f, &y).expect("lift");
            let gap = max_abs_diff(zx.as_slice(), zy.as_slice());
            let sep: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
            min_ratio = min_ratio.min(gap / sep.sqrt());
        }
        expect(
            &mut failures,
            min_ratio > 1e-10,
            format!("{name}: lifted points collapse, worst separation ratio {min_ratio:.3e}"),
        );
        detail.push(format!("{name}: norm {norm_err:.1e}, recon {recon_err:.1e}, sep {min_ratio:.1e}"));
    }
    conclude(4, "lift_families_norm_injective_reconstruct", failures, detail.join("; "));
}

/// Rescaling the latent space by c in {0.1, 3, 100} must leave logits and
/// reconstructions unchanged to 1e-12 while scaling latent distances by
/// exactly c.
#[test]
fn criterion_05_latent_rescaling_invariance() {
    let mut failures = Vec::new();
    let s = setup();
    let points = &s.hold_x[..50];
    let mut detail = Vec::new();

    for c in [0.1, 3.0, 100.0] {
        let rescaled = rescale_latent(&s.net, c).expect("rescale");
        let mut logit_err: f64 = 0.0;
        let mut recon_err: f64 = 0.0;
        let mut dist_err: f64 = 0.0;
        for (i, x) in points.iter().enumerate() {
            let base_logits = s.net.logits(x);
            let new_logits = rescaled.logits(x);
            let scale = norm2(&base_logits).max(1.0);
            logit_err = logit_err.max(max_abs_diff(&base_logits, &new_logits) / scale);

            let base_recon = s.net.decode(&s.net.encode(x));
            let new_recon = rescaled.decode(&rescaled.encode(x));
            recon_err = recon_err
                .max(max_abs_diff(&base_recon, &new_recon) / norm2(&base_recon).max(1.0));

            let y = &points[(i + 1) % points.len()];
            let base_gap: Vec<f64> = s
                .net
                .encode(x)
                .iter()
                .zip(s.net.encode(y))
                .map(|(a, b)| a - b)
                .collect();
            let new_gap: Vec<f64> = rescaled
                .encode(x)
                .iter()
                .zip(rescaled.encode(y))
                .map(|(a, b)| a - b)
                .collect();
            if norm2(&base_gap) > 1e-12 {
                dist_err = dist_err.max((norm2(&new_gap) / (c * norm2(&base_gap)) - 1.0).abs());
            }
        }
        expect(&mut failures, logit_err <= 1e-12, format!("c={c}: logit drift {logit_err:.3e} > 1e-12"));
        expect(
            &mut failures,
            recon_err <= 1e-12,
            format!("c={c}: reconstruction drift {recon_err:.3e} > 1e-12"),
        );
        expect(
            &mut failures,
            dist_err <= 1e-12,
            format!("c={c}: latent distance ratio off by {dist_err:.3e} > 1e-12"),
        );
        detail.push(format!("c={c}: logits {logit_err:.1e}, recon {recon_err:.1e}, dist {dist_err:.1e}"));
    }
    conclude(5, "latent_rescaling_invariance", failures, detail.join("; "));
}

/// The analytic training gradient must agree with central finite
/// differences to a relative error below 1e-4 on every parameter of a small
/// network.
#[test]
fn criterion_06_training_gradient_check() {
    let mut failures = Vec::new();
    let shape = NetShape::new(4, vec![5], 3);
    let mut net = SvdNet::init(&shape, 17).expect("init");
    let cfg = TrainConfig { sv_cutoff: 0.3, on_value: 2.0, off_value: 0.1, ..Default::default() };

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let xs: Vec<Vec<f64>> = (0..10).map(|_| random_point(&mut rng, 4, -1.0, 1.0)).collect();
    let labels: Vec<usize> = (0..10).map(|i| i % 3).collect();

    let (_, _, grad) = loss_and_grad(&net, &xs, &labels, &cfg).expect("gradient");
    let mut params = net.params_flat();
    let count = params.len();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for idx in 0..count {
        let orig = params[idx];
        params[idx] = orig + h;
        net.set_params_flat(&params);
        let (plus, _) = loss(&net, &xs, &labels, &cfg).expect("loss");
        params[idx] = orig - h;
        net.set_params_flat(&params);
        let (minus, _) = loss(&net, &xs, &labels, &cfg).expect("loss");
        params[idx] = orig;
        net.set_params_flat(&params);
        let fd = (plus - minus) / (2.0 * h);
        let denom = grad[idx].abs().max(fd.abs()).max(1e-6);
        worst = worst.max((grad[idx] - fd).abs() / denom);
    }
    expect(&mut failures, worst < 1e-4, format!("worst relative gradient error {worst:.3e} >= 1e-4"));
    conclude(
        6,
        "training_gradient_check",
        failures,
        format!("worst relative error {worst:.1e} over {count} parameters"),
    );
}

/// The directional-search attack must flip at least 90 of the first 100
/// held-out points of a classifier that is itself at least 95% accurate.
#[test]
fn criterion_07_attack_success_rate() {
    let mut failures = Vec::new();
    let s = setup();
    expect(
        &mut failures,
        s.holdout_accuracy >= 0.95,
        format!("holdout accuracy {:.3} below 0.95", s.holdout_accuracy),
    );

    let f = s.net.as_blackbox();
    let cfg = AttackConfig::default();
    let query_cap = 2 + f.d_in() as u64 + (cfg.budget / cfg.step) as u64;
    let mut wins = 0usize;
    let mut queries = 0u64;
    let mut norm_sum = 0.0;
    for x in s.hold_x.iter().take(100) {
        let result = run_attack(&s.model, &f, x, &cfg).expect("attack");
        queries += result.queries;
        expect(
            &mut failures,
            result.queries <= query_cap,
            format!("sample used {} queries, cap {query_cap}", result.queries),
        );
        if result.success {
            wins += 1;
            norm_sum += result.eta_norm;
            expect(&mut failures, result.eta_norm > 0.0, "successful flip with zero perturbation".into());
        }
    }
    expect(&mut failures, wins >= 90, format!("only {wins}/100 attacks flipped the class"));
    conclude(
        7,
        "attack_success_rate",
        failures,
        format!(
            "{wins}/100 flips, accuracy {:.3}, avg queries {:.1}, avg perturbation {:.3}",
            s.holdout_accuracy,
            queries as f64 / 100.0,
            norm_sum / wins.max(1) as f64
        ),
    );
}

/// Latent energy must split exactly between the head's row space and null
/// space (identity to 1e-10 on 500 held-out codes), and undersampling one
/// class must visibly skew the head spectrum: the top-to-second scale ratio
/// grows monotonically as the minority class shrinks, and both the minority
/// null-space energy and the majority dominance exceed their balanced
/// values at the harshest ratio.
#[test]
fn criterion_08_energy_split_and_imbalance_sweep() {
    let mut failures = Vec::new();
    let s = setup();

    let factors = extract_head_svd(&s.net).expect("head factorization");
    let mut identity_err: f64 = 0.0;
    for x in &s.hold_x {
        let code = s.net.encode(x);
        let rotated = factors.vt.matvec(&code);
        let row: f64 = rotated[..2].iter().map(|v| v * v).sum();
        let total: f64 = code.iter().map(|v| v * v).sum();
        let null_frac = null_energy_fraction(&factors.vt, &code, 2).expect("energy fraction");
        identity_err = identity_err.max((row / total + null_frac - 1.0).abs());
    }
    expect(
        &mut failures,
        identity_err <= 1e-10,
        format!("energy identity error {identity_err:.3e} > 1e-10 on 500 codes"),
    );

    let ratios = [1.0, 0.3, 0.1, 0.03];
    let mut reports = Vec::new();
    for &ratio in &ratios {
        let kept = undersample(&s.cons_labels, 2, 0, ratio, 21).expect("undersample");
        let xs: Vec<Vec<f64>> = kept.iter().map(|&i| s.cons_x[i].clone()).collect();
        let ls: Vec<usize> = kept.iter().map(|&i| s.cons_labels[i]).collect();
        let outcome =
            train(&xs, &ls, &NetShape::new(4, vec![8], 2), &blob_train_config()).expect("training");
        let report =
            bias_report(&outcome.net, &s.hold_x, &s.hold_labels, 0, ratio).expect("bias report");
        expect(
            &mut failures,
            report.sigma_ratio.is_finite() && report.sigma_ratio >= 1.0,
            format!("ratio {ratio}: degenerate spectrum ratio {}", report.sigma_ratio),
        );
        reports.push(report);
    }
    for pair in reports.windows(2) {
        expect(
            &mut failures,
            pair[1].sigma_ratio > pair[0].sigma_ratio,
            format!(
                "spectrum ratio did not grow: {:.4} (ratio {}) vs {:.4} (ratio {})",
                pair[0].sigma_ratio, pair[0].sample_ratio, pair[1].sigma_ratio, pair[1].sample_ratio
            ),
        );
    }
    let first = &reports[0];
    let last = &reports[reports.len() - 1];
    expect(
        &mut failures,
        last.null_energy_fraction_minority > 2.0 * first.null_energy_fraction_minority,
        format!(
            "minority null energy did not rise: {:.4} balanced vs {:.4} at ratio {}",
            first.null_energy_fraction_minority, last.null_energy_fraction_minority, last.sample_ratio
        ),
    );
    expect(
        &mut failures,
        last.target_dominance > first.target_dominance,
        format!(
            "majority dominance did not rise: {:.4} balanced vs {:.4} at ratio {}",
            first.target_dominance, last.target_dominance, last.sample_ratio
        ),
    );
    conclude(
        8,
        "energy_split_and_imbalance_sweep",
        failures,
        format!(
            "identity err {identity_err:.1e}; spectrum ratio {:.2} -> {:.2}, null energy {:.4} -> {:.4}, dominance {:.4} -> {:.4}",
            first.sigma_ratio,
            last.sigma_ratio,
            first.null_energy_fraction_minority,
            last.null_energy_fraction_minority,
            first.target_dominance,
            last.target_dominance
        ),
    );
}

/// Understated gains must be caught: halving the true gains of the cosine
/// demo produces points whose slack goes nonpositive, and validation
/// reports them as violations instead of silently lifting.
#[test]
fn criterion_09_gain_violation_detection() {
    let mut failures = Vec::new();
    let f = cosine_pair();
    let halved: Vec<f64> = COSINE_PAIR_GAINS.iter().map(|a| a / 2.0).collect();
    let bad_model = build(&f, &halved, 0.1).expect("construction");

    let slack = gsvd::gamma(&bad_model, &f, &[3.0]).expect("slack");
    expect(&mut failures, slack <= 0.0, format!("slack at x=3 is {slack:.3}, expected nonpositive"));

    let grid: Vec<Vec<f64>> = (0..300).map(|k| vec![0.1 + 6.2 * k as f64 / 299.0]).collect();
    let report = validate(&bad_model, &f, &grid, &ValidateOptions::default()).expect("validation");
    expect(
        &mut failures,
        report.gain_violations >= 1,
        "halved gains produced no reported violations".into(),
    );
    expect(
        &mut failures,
        report.min_gamma <= 0.0,
        format!("minimum slack {:.3} stayed positive", report.min_gamma),
    );

    let good_model = build(&f, &COSINE_PAIR_GAINS, 0.1).expect("construction");
    let good = validate(&good_model, &f, &grid, &ValidateOptions::default()).expect("validation");
    expect(
        &mut failures,
        good.gain_violations == 0,
        format!("true gains still produced {} violations", good.gain_violations),
    );
    conclude(
        9,
        "gain_violation_detection",
        failures,
        format!(
            "halved gains: {} violations, min slack {:.2}; true gains clean",
            report.gain_violations, report.min_gamma
        ),
    );
}

/// The spectral-norm product bound must dominate ten thousand sampled
/// difference quotients of the unwrapped logit map.
#[test]
fn criterion_10_lipschitz_bound_dominates_quotients() {
    let mut failures = Vec::new();
    let s = setup();
    let bound = lipschitz_upper_bound(&s.net).expect("bound");
    expect(&mut failures, bound.is_finite() && bound > 0.0, format!("degenerate bound {bound}"));

    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let mut max_quotient: f64 = 0.0;
    for _ in 0..10_000 {
        let x = random_point(&mut rng, 4, -1.0, 2.0);
        let y = loop {
            let y = random_point(&mut rng, 4, -1.0, 2.0);
            if max_abs_diff(&x, &y) > 1e-9 {
                break y;
            }
        };
        let fx = s.net.unwrapped_logits(&x);
        let fy = s.net.unwrapped_logits(&y);
        let num: f64 = fx.iter().zip(&fy).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let den: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        max_quotient = max_quotient.max(num / den);
    }
    expect(
        &mut failures,
        max_quotient <= bound * (1.0 + 1e-9),
        format!("difference quotient {max_quotient:.6} exceeds bound {bound:.6}"),
    );
    conclude(
        10,
        "lipschitz_bound_dominates_quotients",
        failures,
        format!("max quotient {max_quotient:.3} vs bound {bound:.3} over 10000 pairs"),
    );
}
