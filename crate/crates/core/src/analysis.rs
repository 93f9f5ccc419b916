//! Model quality measurements: decomposition validation on held-out data,
//! latent energy accounting against the head's singular directions, and
//! class-imbalance reports built from both.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::blackbox::BlackBox;
use crate::error::{Error, Result};
use crate::gsvd::{self, GsvdModel};
use crate::numerics::{self, norm2, pairwise_sum, Matrix, DEFAULT_RANK_RTOL};
use crate::svdnet::{extract_head_svd, SvdNet};

// ── decomposition validation ─────────────────────────────────────────────

/// Optional references that turn validation into a recovery measurement.
/// Gains are given in original output order, matching the model's `alpha`.
#[derive(Debug, Clone, Default)]
pub struct ValidateOptions {
    /// Ground-truth per-coordinate gains, when the target map has known
    /// ones.
    pub truth_alpha: Option<Vec<f64>>,
    /// Search-refined gain estimates to score alongside the sampled ones.
    pub searched_alpha: Option<Vec<f64>>,
}

/// Held-out quality of a factorization. Error metrics are worst-case over
/// the validated points except `recon_mse`, which averages squared
/// coordinate errors; recovery entries are the worst per-coordinate
/// fraction of the true gain that the estimate reached.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Nonzero points examined.
    pub points: usize,
    /// Points whose outputs exceeded the modeled gains (`γ ≤ 0`).
    pub gain_violations: usize,
    /// Smallest slack residual seen, violations included.
    pub min_gamma: f64,
    /// Mean squared error of `U Σ v(x)` against the raw outputs.
    pub recon_mse: f64,
    /// Worst relative error of the left inverse round trip.
    pub left_inv_err: f64,
    /// Worst relative deviation of `‖v(x)‖` from `‖x‖`.
    pub norm_pres_err: f64,
    pub gain_recovery_sampled: Option<f64>,
    pub gain_recovery_searched: Option<f64>,
    pub wall_seconds: f64,
}

fn recovery_fraction(estimate: &[f64], truth: &[f64]) -> Option<f64> {
    let mut worst: Option<f64> = None;
    for (e, t) in estimate.iter().zip(truth) {
        if *t > 0.0 {
            let frac = e / t;
            worst = Some(match worst {
                Some(w) => w.min(frac),
                None => frac,
            });
        }
    }
    worst
}

/// Measures the factorization against held-out points (given in original
/// coordinates; deviation views translate internally). One query per
/// nonzero point: the raw output feeds the slack residual, the lift, the
/// reconstruction, and the left inverse without re-evaluation. Zero-norm
/// points are skipped; points that violate the gains are counted and
/// excluded from the lift-based metrics.
pub fn validate(
    model: &GsvdModel,
    f: &BlackBox,
    data: &[Vec<f64>],
    opts: &ValidateOptions,
) -> Result<ValidationReport> {
    let started = Instant::now();
    for alpha in [&opts.truth_alpha, &opts.searched_alpha].into_iter().flatten() {
        if alpha.len() != model.d_out {
            return Err(Error::InvalidInput(
                "reference gains must have one entry per output coordinate".into(),
            ));
        }
    }
    let mut points = 0usize;
    let mut violations = 0usize;
    let mut min_gamma = f64::INFINITY;
    let mut sq_errs: Vec<f64> = Vec::new();
    let mut left_inv_err = 0.0_f64;
    let mut norm_pres_err = 0.0_f64;
    for x_orig in data {
        let x = f.to_local(x_orig);
        let nrm = norm2(&x);
        if nrm == 0.0 {
            continue;
        }
        points += 1;
        let y = f.evaluate(&x)?;
        let g = gsvd::gamma_from_output(model, &y, nrm);
        min_gamma = min_gamma.min(g);
        if g <= 0.0 {
            violations += 1;
            continue;
        }
        let z = gsvd::lift_from_output(model, &x, &y)?;
        let back = model.output_from_lift(&z)?;
        for (a, b) in back.iter().zip(&y) {
            sq_errs.push((a - b) * (a - b));
        }
        let x_rec = gsvd::left_inverse(model, &z)?;
        let diff: Vec<f64> = x_rec.iter().zip(&x).map(|(a, b)| a - b).collect();
        left_inv_err = left_inv_err.max(norm2(&diff) / nrm);
        norm_pres_err = norm_pres_err.max((z.norm() - nrm).abs() / nrm);
    }
    if points == 0 {
        return Err(Error::DegenerateDataset(
            "validation needs at least one nonzero point".into(),
        ));
    }
    let recon_mse = if sq_errs.is_empty() {
        f64::NAN // every point violated the gains; nothing was liftable
    } else {
        pairwise_sum(&sq_errs) / sq_errs.len() as f64
    };
    let gain_recovery_sampled =
        opts.truth_alpha.as_ref().and_then(|t| recovery_fraction(&model.alpha, t));
    let gain_recovery_searched = match (&opts.truth_alpha, &opts.searched_alpha) {
        (Some(t), Some(s)) => recovery_fraction(s, t),
        _ => None,
    };
    Ok(ValidationReport {
        points,
        gain_violations: violations,
        min_gamma,
        recon_mse,
        left_inv_err,
        norm_pres_err,
        gain_recovery_sampled,
        gain_recovery_searched,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

impl ValidationReport {
    /// Fixed-width text rendering for terminal reports.
    pub fn render_table(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "n/a".into())
        }
        let rows = [
            ("points validated".to_string(), self.points.to_string()),
            ("gain violations".to_string(), self.gain_violations.to_string()),
            ("min slack residual".to_string(), format!("{:.6}", self.min_gamma)),
            ("reconstruction mse".to_string(), format!("{:.3e}", self.recon_mse)),
            ("left-inverse rel err (max)".to_string(), format!("{:.3e}", self.left_inv_err)),
            ("norm preservation rel err (max)".to_string(), format!("{:.3e}", self.norm_pres_err)),
            ("gain recovery (sampled)".to_string(), opt(self.gain_recovery_sampled)),
            ("gain recovery (searched)".to_string(), opt(self.gain_recovery_searched)),
            ("wall seconds".to_string(), format!("{:.3}", self.wall_seconds)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out
    }
}

// ── latent energy accounting ─────────────────────────────────────────────

/// Fraction of a latent code's energy that the head cannot see: with the
/// head's right singular basis `Vᵀ`, the rotated code `z = Vᵀ c` spends its
/// first `num_classes` coordinates on directions the head can read and the
/// rest on its structural null space. Returns `Σ_{i≥C} z_i² / ‖z‖²`.
pub fn null_energy_fraction(vt: &Matrix, code: &[f64], num_classes: usize) -> Result<f64> {
    if vt.rows() != vt.cols() || vt.cols() != code.len() {
        return Err(Error::InvalidInput(
            "rotation must be square and match the code length".into(),
        ));
    }
    if num_classes == 0 || num_classes > code.len() {
        return Err(Error::InvalidInput("class count must be in 1..=code length".into()));
    }
    let z = vt.matvec(code);
    let total: f64 = pairwise_sum(&z.iter().map(|v| v * v).collect::<Vec<_>>());
    if total == 0.0 {
        return Err(Error::DegenerateInput("zero code has no energy split".into()));
    }
    let null: f64 = pairwise_sum(&z[num_classes..].iter().map(|v| v * v).collect::<Vec<_>>());
    Ok(null / total)
}

/// Conditioning of the head spectrum: `s[0] / s[1]`, or +∞ once the second
/// singular value is negligible relative to the first (total collapse onto
/// one readable direction). Spectra must be nonincreasing with at least two
/// entries and a positive top value.
pub fn sigma_ratio(s: &[f64], rtol: f64) -> Result<f64> {
    if s.len() < 2 {
        return Err(Error::InvalidInput("spectrum needs at least two singular values".into()));
    }
    if !(s[0].is_finite() && s[0] > 0.0) {
        return Err(Error::DegenerateInput("head spectrum has no positive values".into()));
    }
    if s[1] <= rtol * s[0] {
        return Ok(f64::INFINITY);
    }
    Ok(s[0] / s[1])
}

// ── imbalance construction ───────────────────────────────────────────────

/// Deterministically undersamples every class except `target_class`: each
/// other class keeps `⌈ratio · n_c⌉` members chosen by a seeded shuffle of
/// its index list, the target keeps all of its members, and the surviving
/// indices come back sorted so downstream iteration order is stable.
pub fn undersample(
    labels: &[usize],
    num_classes: usize,
    target_class: usize,
    ratio: f64,
    seed: u64,
) -> Result<Vec<usize>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    if num_classes < 2 {
        return Err(Error::InvalidConfig("undersampling needs at least two classes".into()));
    }
    if target_class >= num_classes {
        return Err(Error::InvalidConfig(format!(
            "target class {target_class} out of range for {num_classes} classes"
        )));
    }
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "undersample ratio must be in (0, 1], got {ratio}"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::InvalidInput(format!(
                "label {l} out of range for {num_classes} classes"
            )));
        }
        by_class[l].push(i);
    }
    if let Some(c) = by_class.iter().position(|v| v.is_empty()) {
        return Err(Error::DegenerateDataset(format!("class {c} has no samples")));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::new();
    for (c, indices) in by_class.iter_mut().enumerate() {
        if c == target_class {
            kept.extend_from_slice(indices);
        } else {
            indices.shuffle(&mut rng);
            let keep = (ratio * indices.len() as f64).ceil() as usize;
            kept.extend_from_slice(&indices[..keep]);
        }
    }
    kept.sort_unstable();
    Ok(kept)
}

// ── imbalance report ─────────────────────────────────────────────────────

/// Head-spectrum view of what class imbalance did to a trained network,
/// measured on an evaluation set (which should itself be balanced so
/// reports at different training ratios are comparable).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasReport {
    /// Undersampling ratio the training set was built with.
    pub sample_ratio: f64,
    /// Singular values of the head, largest first.
    pub sigma_spectrum: Vec<f64>,
    /// Top-to-second singular value ratio (+∞ on collapse, which JSON
    /// renders as null).
    pub sigma_ratio: f64,
    /// Mean null-space energy fraction of codes from the undersampled
    /// (non-target) classes.
    pub null_energy_fraction_minority: f64,
    /// Mean energy fraction along the head's top singular direction over
    /// target-class codes.
    pub target_dominance: f64,
}

/// Builds a [`BiasReport`] for `net` from labeled evaluation points.
pub fn bias_report(
    net: &SvdNet,
    xs: &[Vec<f64>],
    labels: &[usize],
    target_class: usize,
    sample_ratio: f64,
) -> Result<BiasReport> {
    if xs.len() != labels.len() {
        return Err(Error::InvalidInput("points and labels must have equal length".into()));
    }
    let c = net.shape().num_classes;
    if target_class >= c {
        return Err(Error::InvalidInput(format!(
            "target class {target_class} out of range for {c} classes"
        )));
    }
    let factors = extract_head_svd(net)?;
    let mut minority_fracs = Vec::new();
    let mut dominance = Vec::new();
    for (x, &l) in xs.iter().zip(labels) {
        if l >= c {
            return Err(Error::InvalidInput(format!("label {l} out of range for {c} classes")));
        }
        let code = net.encode(x);
        let z = factors.vt.matvec(&code);
        let total: f64 = pairwise_sum(&z.iter().map(|v| v * v).collect::<Vec<_>>());
        if total == 0.0 {
            continue; // zero input encodes to zero; nothing to attribute
        }
        if l == target_class {
            dominance.push(z[0] * z[0] / total);
        } else {
            let null: f64 = pairwise_sum(&z[c..].iter().map(|v| v * v).collect::<Vec<_>>());
            minority_fracs.push(null / total);
        }
    }
    if dominance.is_empty() || minority_fracs.is_empty() {
        return Err(Error::DegenerateDataset(
            "evaluation set must contain target and non-target samples".into(),
        ));
    }
    Ok(BiasReport {
        sample_ratio,
        sigma_ratio: sigma_ratio(&factors.s, DEFAULT_RANK_RTOL)?,
        sigma_spectrum: factors.s,
        null_energy_fraction_minority: numerics::mean(&minority_fracs),
        target_dominance: numerics::mean(&dominance),
    })
}
