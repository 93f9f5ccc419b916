//! Black-box directional misclassification search driven by the
//! factorization.
//!
//! For a classifier read through the decomposition, the scaled lift
//! coordinates `σ_i z_i` are the logits in gain order, so the margin between
//! the winning class and its nearest rival is visible directly in lifted
//! space. The attack estimates the gradient of that margin by finite
//! differences of lifts, then walks the margin-closing direction in fixed
//! radius steps until the predicted class flips or the radius budget runs
//! out. Every oracle access goes through the query counter, so each result
//! carries an exact audit.

use crate::blackbox::BlackBox;
use crate::error::{Error, Result};
use crate::gsvd::{self, GsvdModel, LiftedPoint};
use crate::numerics::norm2;

// ── configuration ────────────────────────────────────────────────────────

/// Search parameters. Radii are `step, 2·step, …` strictly below `budget`;
/// probes are clipped into `[clip_min, clip_max]` componentwise before
/// evaluation (pixel-style domains).
#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Radius increment between probes.
    pub step: f64,
    /// Exclusive upper bound on the probe radius.
    pub budget: f64,
    /// Finite-difference step for the direction estimate.
    pub fd_eps: f64,
    /// Componentwise lower clip bound for probe points.
    pub clip_min: f64,
    /// Componentwise upper clip bound for probe points.
    pub clip_max: f64,
    /// Use central instead of forward differences (doubles the direction
    /// queries, halves the truncation error).
    pub central_diff: bool,
    /// Steer toward this output coordinate (original order) instead of the
    /// nearest rival.
    pub target_override: Option<usize>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            step: 0.25,
            budget: 20.0,
            fd_eps: 1e-3,
            clip_min: 0.0,
            clip_max: 1.0,
            central_diff: false,
            target_override: None,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidConfig("attack step must be positive".into()));
        }
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(Error::InvalidConfig("attack budget must be positive".into()));
        }
        if !(self.fd_eps.is_finite() && self.fd_eps > 0.0) {
            return Err(Error::InvalidConfig("finite-difference step must be positive".into()));
        }
        if !(self.clip_min.is_finite() && self.clip_max.is_finite() && self.clip_min < self.clip_max)
        {
            return Err(Error::InvalidConfig("clip bounds must satisfy min < max".into()));
        }
        Ok(())
    }
}

// ── target selection ─────────────────────────────────────────────────────

/// Source and steering classes in gain (permuted) coordinates, plus the
/// logit margins that chose them. `gaps[i]` is the margin of the source
/// over coordinate `i`; the source's own entry is +∞ so the minimum is
/// always a rival.
#[derive(Debug, Clone)]
pub struct TargetSelection {
    pub i0: usize,
    pub i_star: usize,
    pub gaps: Vec<f64>,
}

fn check_anchor_consistency(model: &GsvdModel, f: &BlackBox) -> Result<()> {
    let ok = match (&model.anchor, f.anchor()) {
        (None, None) => true,
        (Some(a), Some(b)) => *a == b.point,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "model and black box disagree about the deviation anchor".into(),
        ))
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Logits in gain order: `σ_i z_i`, shifted back by the anchor output when
/// the box is a deviation view, so class decisions always happen in the
/// underlying map's coordinates.
fn permuted_logits(model: &GsvdModel, f: &BlackBox, z: &LiftedPoint) -> Vec<f64> {
    (0..model.d_out)
        .map(|i| {
            let base = model.sigma[i] * z.as_slice()[i];
            match f.anchor() {
                Some(a) => base + a.output[model.perm[i]],
                None => base,
            }
        })
        .collect()
}

/// Picks the source class (largest logit) and the steering class (smallest
/// positive margin, or the override) from one lifted point. No queries.
/// Ties resolve to the lowest gain-order index.
pub fn select_target(
    model: &GsvdModel,
    f: &BlackBox,
    z: &LiftedPoint,
    target_override: Option<usize>,
) -> Result<TargetSelection> {
    check_anchor_consistency(model, f)?;
    if model.d_out < 2 {
        return Err(Error::InvalidInput(
            "class steering needs at least two output coordinates".into(),
        ));
    }
    if z.len() != model.lifted_dim() || z.d_out() != model.d_out {
        return Err(Error::InvalidInput("lifted point has wrong shape".into()));
    }
    let logits = permuted_logits(model, f, z);
    let i0 = argmax(&logits);
    let gaps: Vec<f64> = (0..model.d_out)
        .map(|i| if i == i0 { f64::INFINITY } else { logits[i0] - logits[i] })
        .collect();
    let i_star = match target_override {
        Some(orig) => {
            if orig >= model.d_out {
                return Err(Error::InvalidInput(format!(
                    "target override {orig} out of range for {} outputs",
                    model.d_out
                )));
            }
            let i = model.perm_inverse()[orig];
            if i == i0 {
                return Err(Error::InvalidInput(
                    "target override names the source class".into(),
                ));
            }
            i
        }
        None => {
            let mut best = usize::MAX;
            for i in 0..model.d_out {
                if i != i0 && (best == usize::MAX || gaps[i] < gaps[best]) {
                    best = i;
                }
            }
            best
        }
    };
    Ok(TargetSelection { i0, i_star, gaps })
}

// ── direction estimate ───────────────────────────────────────────────────

/// Finite-difference gradient of the margin `σ_i* z_i*(x) − σ_i0 z_i0(x)`
/// at `x` (box coordinates). Forward differences reuse `base` and cost one
/// lift per input coordinate; central differences ignore `base` and cost
/// two. Returns the unnormalized gradient estimate; a vanishing estimate is
/// [`Error::DegenerateDirection`].
pub fn direction(
    model: &GsvdModel,
    f: &BlackBox,
    x: &[f64],
    base: &LiftedPoint,
    sel: &TargetSelection,
    cfg: &AttackConfig,
) -> Result<Vec<f64>> {
    check_anchor_consistency(model, f)?;
    cfg.validate()?;
    if x.len() != model.d_in {
        return Err(Error::InvalidInput("point length does not match d_in".into()));
    }
    let margin = |z: &LiftedPoint| {
        model.sigma[sel.i_star] * z.as_slice()[sel.i_star]
            - model.sigma[sel.i0] * z.as_slice()[sel.i0]
    };
    let eps = cfg.fd_eps;
    let h0 = margin(base);
    let mut d = vec![0.0; model.d_in];
    let mut probe = x.to_vec();
    for j in 0..model.d_in {
        probe[j] = x[j] + eps;
        let plus = margin(&gsvd::lift(model, f, &probe)?);
        if cfg.central_diff {
            probe[j] = x[j] - eps;
            let minus = margin(&gsvd::lift(model, f, &probe)?);
            d[j] = (plus - minus) / (2.0 * eps);
        } else {
            d[j] = (plus - h0) / eps;
        }
        probe[j] = x[j];
    }
    if norm2(&d) == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    Ok(d)
}

// ── line probing ─────────────────────────────────────────────────────────

/// A probe that changed the predicted class.
#[derive(Debug, Clone)]
pub struct ProbeHit {
    /// The clipped adversarial point, original coordinates.
    pub point: Vec<f64>,
    /// Radius at which the flip occurred (before clipping).
    pub radius: f64,
    /// The class the probe flipped to.
    pub class_idx: usize,
}

/// Outcome of walking the ray: the first flip (if any) plus the full list
/// of radii probed.
#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub hit: Option<ProbeHit>,
    pub probes: usize,
    pub probe_radii: Vec<f64>,
}

fn clip_point(x: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    x.iter().map(|v| v.clamp(lo, hi)).collect()
}

/// Walks `clip(x + k·step·d̂)` for `k = 1, 2, …` while the radius stays
/// strictly below the budget, stopping at the first probe whose predicted
/// class differs from `source_idx`. One query per probe.
fn probe_from_source(
    f: &BlackBox,
    x_orig: &[f64],
    dir: &[f64],
    source_idx: usize,
    cfg: &AttackConfig,
) -> Result<ProbeOutcome> {
    let dn = norm2(dir);
    if dn == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let unit: Vec<f64> = dir.iter().map(|v| v / dn).collect();
    let mut probes = 0usize;
    let mut probe_radii = Vec::new();
    for k in 1usize.. {
        let r = k as f64 * cfg.step;
        if r >= cfg.budget {
            break;
        }
        let raw: Vec<f64> = x_orig.iter().zip(&unit).map(|(x, u)| x + r * u).collect();
        let point = clip_point(&raw, cfg.clip_min, cfg.clip_max);
        let y = f.evaluate_original(&point)?;
        probes += 1;
        probe_radii.push(r);
        let class_idx = argmax(&y);
        if class_idx != source_idx {
            return Ok(ProbeOutcome { hit: Some(ProbeHit { point, radius: r, class_idx }), probes, probe_radii });
        }
    }
    Ok(ProbeOutcome { hit: None, probes, probe_radii })
}

/// Standalone ray walk: reads the source class from one evaluation at
/// `x_orig` (original coordinates), then probes along `dir`. Costs one
/// query plus one per probe.
pub fn line_probe(
    f: &BlackBox,
    x_orig: &[f64],
    dir: &[f64],
    cfg: &AttackConfig,
) -> Result<ProbeOutcome> {
    cfg.validate()?;
    if x_orig.len() != f.d_in() || dir.len() != f.d_in() {
        return Err(Error::InvalidInput("point and direction must have length d_in".into()));
    }
    let y0 = f.evaluate_original(x_orig)?;
    probe_from_source(f, x_orig, dir, argmax(&y0), cfg)
}

// ── the full attack ──────────────────────────────────────────────────────

/// What one attacked sample produced. `source_idx` and `target_idx` are
/// original output coordinates; `queries` counts every oracle access the
/// attack itself issued (base lift, direction lifts, probes, and the final
/// confirmation on success).
#[derive(Debug, Clone)]
pub struct AttackResult {
    pub success: bool,
    pub source_idx: usize,
    pub target_idx: usize,
    /// Realized perturbation `x_adv − x` (after clipping); zero on failure.
    pub eta: Vec<f64>,
    pub eta_norm: f64,
    pub probes: usize,
    pub probe_radii: Vec<f64>,
    pub queries: u64,
    /// Why the attack stopped without an adversarial example, if it did.
    pub failure: Option<String>,
}

/// Runs the full search on one point given in original coordinates:
/// lift, margin-based target selection, finite-difference direction,
/// fixed-step ray walk, and a confirming evaluation of the flipped point.
///
/// A vanishing direction and an exhausted budget are reported as failed
/// results, not errors; malformed inputs and gain violations are errors.
pub fn run_attack(
    model: &GsvdModel,
    f: &BlackBox,
    x_orig: &[f64],
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    cfg.validate()?;
    check_anchor_consistency(model, f)?;
    if x_orig.len() != model.d_in {
        return Err(Error::InvalidInput("point length does not match d_in".into()));
    }
    let q0 = f.queries();
    let x_local = f.to_local(x_orig);
    let base = gsvd::lift(model, f, &x_local)?;
    let sel = select_target(model, f, &base, cfg.target_override)?;
    let source_idx = model.perm[sel.i0];
    let target_idx = model.perm[sel.i_star];

    let failed = |probes: usize, probe_radii: Vec<f64>, queries: u64, why: String| AttackResult {
        success: false,
        source_idx,
        target_idx,
        eta: vec![0.0; model.d_in],
        eta_norm: 0.0,
        probes,
        probe_radii,
        queries,
        failure: Some(why),
    };

    let dir = match direction(model, f, &x_local, &base, &sel, cfg) {
        Ok(d) => d,
        Err(Error::DegenerateDirection) => {
            return Ok(failed(
                0,
                Vec::new(),
                f.queries() - q0,
                "search direction vanished: the source and steering logits move together".into(),
            ));
        }
        Err(e) => return Err(e),
    };

    let outcome = probe_from_source(f, x_orig, &dir, source_idx, cfg)?;
    match outcome.hit {
        None => Ok(failed(
            outcome.probes,
            outcome.probe_radii,
            f.queries() - q0,
            "probe budget exhausted without a class flip".into(),
        )),
        Some(hit) => {
            // Confirm the flip with a fresh evaluation of the final point.
            let confirmed = argmax(&f.evaluate_original(&hit.point)?);
            if confirmed == source_idx {
                return Ok(failed(
                    outcome.probes,
                    outcome.probe_radii,
                    f.queries() - q0,
                    "confirmation query did not reproduce the class flip".into(),
                ));
            }
            let eta: Vec<f64> = hit.point.iter().zip(x_orig).map(|(a, x)| a - x).collect();
            let eta_norm = norm2(&eta);
            Ok(AttackResult {
                success: true,
                source_idx,
                target_idx,
                eta,
                eta_norm,
                probes: outcome.probes,
                probe_radii: outcome.probe_radii,
                queries: f.queries() - q0,
                failure: None,
            })
        }
    }
}
