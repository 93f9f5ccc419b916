//! Generalized SVD of a black-box map: `f = U Σ v`.
//!
//! `U` is a permutation of the output coordinates (largest gain first),
//! `Σ = [diag(σ) | 0]` is a d_out x (d_in + d_out) rectangular-diagonal
//! matrix, and `v` is an injective, norm-preserving lift of the input into
//! the combined space. The construction needs only per-coordinate gain
//! bounds `α_i >= sup |f_i(x)| / ‖x‖`; the slack parameter ε keeps the
//! lift's kernel block alive so distinct inputs stay distinguishable.

use serde::{Deserialize, Serialize};

use crate::blackbox::BlackBox;
use crate::error::{Error, Result};
use crate::numerics::{norm2, Matrix};

// ── model ────────────────────────────────────────────────────────────────

/// The constructed factorization. `perm[i]` is the original output
/// coordinate carrying the i-th largest gain; `sigma[i]` is its scale,
/// `sigma` is nonincreasing, and `alpha` keeps the raw per-coordinate gains
/// in original output order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GsvdModel {
    pub d_in: usize,
    pub d_out: usize,
    pub epsilon: f64,
    pub perm: Vec<usize>,
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Anchor point of the deviation view the model was built over, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor: Option<Vec<f64>>,
}

/// A point in the lifted space `R^(d_in + d_out)`: the first `d_out`
/// coordinates are scaled outputs (permuted order), the last `d_in` carry
/// the input direction weighted by the slack residual.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedPoint {
    z: Vec<f64>,
    d_out: usize,
}

impl LiftedPoint {
    pub fn new(z: Vec<f64>, d_out: usize) -> Result<Self> {
        if d_out >= z.len() {
            return Err(Error::InvalidInput(
                "lifted point must have d_in + d_out coordinates".into(),
            ));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("lifted point must be finite".into()));
        }
        Ok(LiftedPoint { z, d_out })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn d_in(&self) -> usize {
        self.z.len() - self.d_out
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.z
    }

    /// First block: outputs divided by their scales, in permuted order.
    pub fn output_block(&self) -> &[f64] {
        &self.z[..self.d_out]
    }

    /// Second block: the input direction, weighted by sqrt(slack residual).
    pub fn input_block(&self) -> &[f64] {
        &self.z[self.d_out..]
    }

    pub fn norm(&self) -> f64 {
        norm2(&self.z)
    }
}

impl GsvdModel {
    /// Lifted-space dimension `d_in + d_out`.
    pub fn lifted_dim(&self) -> usize {
        self.d_in + self.d_out
    }

    /// Inverse of `perm`: position in the sorted order of each original
    /// output coordinate.
    pub fn perm_inverse(&self) -> Vec<usize> {
        let mut inv = vec![0usize; self.perm.len()];
        for (i, &p) in self.perm.iter().enumerate() {
            inv[p] = i;
        }
        inv
    }

    /// The permutation factor U as a d_out x d_out matrix: `U e_i = e_perm[i]`.
    pub fn u_matrix(&self) -> Matrix {
        let n = self.d_out;
        let mut u = Matrix::zeros(n, n);
        for (i, &p) in self.perm.iter().enumerate() {
            u.set(p, i, 1.0);
        }
        u
    }

    /// The rectangular-diagonal factor `Σ = [diag(σ) | 0]`.
    pub fn sigma_matrix(&self) -> Matrix {
        let mut s = Matrix::zeros(self.d_out, self.lifted_dim());
        for (i, &sig) in self.sigma.iter().enumerate() {
            s.set(i, i, sig);
        }
        s
    }

    /// Σ z in original output order: `out[perm[i]] = sigma[i] * z[i]`.
    pub fn output_from_lift(&self, z: &LiftedPoint) -> Result<Vec<f64>> {
        if z.len() != self.lifted_dim() || z.d_out() != self.d_out {
            return Err(Error::InvalidInput("lifted point has wrong shape".into()));
        }
        let mut out = vec![0.0; self.d_out];
        for (i, &p) in self.perm.iter().enumerate() {
            out[p] = self.sigma[i] * z.as_slice()[i];
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let n = self.d_out;
        if self.d_in == 0 || n == 0 {
            return Err(Error::FormatError("model dimensions must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidSlack { epsilon: self.epsilon });
        }
        if self.perm.len() != n || self.alpha.len() != n || self.sigma.len() != n {
            return Err(Error::FormatError("model vectors must all have length d_out".into()));
        }
        let mut seen = vec![false; n];
        for &p in &self.perm {
            if p >= n || seen[p] {
                return Err(Error::FormatError("perm is not a permutation".into()));
            }
            seen[p] = true;
        }
        if self.alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::FormatError("gains must be finite and nonnegative".into()));
        }
        if self.sigma.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::FormatError("scales must be finite and positive".into()));
        }
        if self.sigma.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::FormatError("scales must be nonincreasing".into()));
        }
        // The summed squared gain/scale ratios must stay strictly below 1;
        // this is what keeps the kernel block of the lift alive.
        let rho2: f64 = (0..n)
            .map(|i| {
                let a = self.alpha[self.perm[i]];
                (a / self.sigma[i]).powi(2)
            })
            .sum();
        if rho2 >= 1.0 {
            return Err(Error::FormatError(format!(
                "gain/scale ratios sum to {rho2}, must be < 1"
            )));
        }
        if let Some(anchor) = &self.anchor {
            if anchor.len() != self.d_in {
                return Err(Error::FormatError("anchor length must be d_in".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: GsvdModel =
            serde_json::from_str(s).map_err(|e| Error::FormatError(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }
}

// ── gain estimation ──────────────────────────────────────────────────────

/// Empirical per-coordinate gains over a dataset:
/// `alpha_i = max_x |f_i(x)| / ‖x‖`, zero-norm points skipped. One query per
/// retained point. Errors with `EmptyGainSample` when nothing is retained.
pub fn estimate_gains(f: &BlackBox, data: &[Vec<f64>]) -> Result<Vec<f64>> {
    Ok(estimate_gains_seeded(f, data, 0)?.alpha)
}

/// Gain estimate plus, per output coordinate, the `seeds_per_coord`
/// highest-ratio sample points (best first) — the natural starting points
/// for the local ascent refinement.
pub struct GainEstimate {
    pub alpha: Vec<f64>,
    pub seeds: Vec<Vec<Vec<f64>>>,
}

pub fn estimate_gains_seeded(
    f: &BlackBox,
    data: &[Vec<f64>],
    seeds_per_coord: usize,
) -> Result<GainEstimate> {
    let n = f.d_out();
    let mut alpha = vec![0.0_f64; n];
    // (ratio, sample index) per coordinate, kept sorted descending.
    let mut top: Vec<Vec<(f64, usize)>> = vec![Vec::new(); n];
    let mut retained = 0usize;
    for (idx, x) in data.iter().enumerate() {
        let nrm = norm2(x);
        if nrm == 0.0 {
            continue;
        }
        retained += 1;
        let y = f.evaluate(x)?;
        for i in 0..n {
            let ratio = y[i].abs() / nrm;
            if ratio > alpha[i] {
                alpha[i] = ratio;
            }
            if seeds_per_coord > 0 {
                let t = &mut top[i];
                t.push((ratio, idx));
                t.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
                t.truncate(seeds_per_coord);
            }
        }
    }
    if retained == 0 {
        return Err(Error::EmptyGainSample);
    }
    let seeds = top
        .into_iter()
        .map(|t| t.into_iter().map(|(_, idx)| data[idx].clone()).collect())
        .collect();
    Ok(GainEstimate { alpha, seeds })
}

/// Knobs for the gain ascent. Step length is `lr_scale * ‖seed‖`, finite
/// differences use `fd_scale * (1 + ‖x‖)`, and a step that fails to improve
/// the ratio halves the step length instead of moving.
#[derive(Debug, Clone)]
pub struct GainSearchConfig {
    pub steps: usize,
    pub lr_scale: f64,
    pub fd_scale: f64,
}

impl Default for GainSearchConfig {
    fn default() -> Self {
        GainSearchConfig { steps: 200, lr_scale: 0.05, fd_scale: 1e-4 }
    }
}

/// Refines sampled gains by gradient ascent on `x -> |f_i(x)| / ‖x‖` from
/// each seed (`seeds[i]` lists starting points for output coordinate i).
/// Returns the coordinatewise max of `alpha0` and every ratio observed
/// during the ascent, so the result never drops below `alpha0`.
pub fn gain_search(
    f: &BlackBox,
    alpha0: &[f64],
    seeds: &[Vec<Vec<f64>>],
    cfg: &GainSearchConfig,
) -> Result<Vec<f64>> {
    if alpha0.len() != f.d_out() || seeds.len() != f.d_out() {
        return Err(Error::InvalidInput(
            "alpha0 and seeds must have one entry per output coordinate".into(),
        ));
    }
    let mut alpha = alpha0.to_vec();
    for (i, coord_seeds) in seeds.iter().enumerate() {
        for seed in coord_seeds {
            let refined = ascend_ratio(f, i, seed, cfg)?;
            if refined > alpha[i] {
                alpha[i] = refined;
            }
        }
    }
    Ok(alpha)
}

/// Best ratio observed while ascending `|f_i(x)| / ‖x‖` from `seed`.
fn ascend_ratio(f: &BlackBox, i: usize, seed: &[f64], cfg: &GainSearchConfig) -> Result<f64> {
    let ratio = |f: &BlackBox, x: &[f64]| -> Result<Option<f64>> {
        let nrm = norm2(x);
        if nrm == 0.0 {
            return Ok(None);
        }
        Ok(Some(f.evaluate(x)?[i].abs() / nrm))
    };

    let mut x = seed.to_vec();
    let mut best = match ratio(f, &x)? {
        Some(r) => r,
        None => return Ok(0.0),
    };
    let mut current = best;
    let mut lr = cfg.lr_scale * norm2(seed);
    if lr == 0.0 {
        return Ok(best);
    }
    let d = x.len();
    for _ in 0..cfg.steps {
        let h = cfg.fd_scale * (1.0 + norm2(&x));
        let mut grad = vec![0.0; d];
        for j in 0..d {
            let mut xp = x.clone();
            xp[j] += h;
            let mut xm = x.clone();
            xm[j] -= h;
            let rp = ratio(f, &xp)?.unwrap_or(0.0);
            let rm = ratio(f, &xm)?.unwrap_or(0.0);
            best = best.max(rp).max(rm);
            grad[j] = (rp - rm) / (2.0 * h);
        }
        let gn = norm2(&grad);
        if gn == 0.0 {
            break;
        }
        let candidate: Vec<f64> = (0..d).map(|j| x[j] + lr * grad[j] / gn).collect();
        match ratio(f, &candidate)? {
            Some(r) if r >= current => {
                best = best.max(r);
                current = r;
                x = candidate;
            }
            _ => {
                lr *= 0.5;
                if lr < 1e-12 * norm2(seed) {
                    break;
                }
            }
        }
    }
    Ok(best)
}

// ── construction ─────────────────────────────────────────────────────────

/// Builds the factorization from per-coordinate gains.
///
/// Scales are `σ_i = α_(perm[i]) * sqrt(d_out / (1 - ε))` so the squared
/// ratios sum to `(1 - ε) * n⁺ / d_out < 1` (n⁺ = positive-gain count).
/// Coordinates with zero gain get the fallback scale `min(1, σ_min⁺)`,
/// keeping `sigma` nonincreasing; with no positive gain at all the map is
/// identically zero on the sampled data and construction is refused.
pub fn build(f: &BlackBox, alpha: &[f64], epsilon: f64) -> Result<GsvdModel> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidSlack { epsilon });
    }
    let n = f.d_out();
    if alpha.len() != n {
        return Err(Error::InvalidGains(format!(
            "expected {} gains, got {}",
            n,
            alpha.len()
        )));
    }
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::InvalidGains("gains must be finite and nonnegative".into()));
    }
    if alpha.iter().all(|&a| a == 0.0) {
        return Err(Error::InvalidGains("at least one gain must be positive".into()));
    }

    // Stable descending sort: ties broken by ascending coordinate index.
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by(|&i, &j| alpha[j].partial_cmp(&alpha[i]).unwrap().then(i.cmp(&j)));

    let factor = (n as f64 / (1.0 - epsilon)).sqrt();
    let mut sigma: Vec<f64> = perm.iter().map(|&p| alpha[p] * factor).collect();
    // Zero-gain coordinates sit at the tail after sorting; give them a unit
    // scale, clamped so the sequence stays nonincreasing.
    let smallest_positive = sigma.iter().copied().filter(|&s| s > 0.0).fold(f64::MAX, f64::min);
    let fallback = 1.0_f64.min(smallest_positive);
    for s in sigma.iter_mut() {
        if *s == 0.0 {
            *s = fallback;
        }
    }

    let model = GsvdModel {
        d_in: f.d_in(),
        d_out: n,
        epsilon,
        perm,
        alpha: alpha.to_vec(),
        sigma,
        anchor: f.anchor().map(|a| a.point.clone()),
    };
    model.validate()?;
    Ok(model)
}

// ── slack residual, lift, and inverses ───────────────────────────────────

/// Slack residual from an already-computed output. Exposed for callers that
/// batch evaluations; `gamma` and `lift` use it with one fresh query.
pub fn gamma_from_output(model: &GsvdModel, y: &[f64], x_norm: f64) -> f64 {
    let mut burn = 0.0;
    for i in 0..model.d_out {
        let zi = y[model.perm[i]] / model.sigma[i];
        burn += (zi / x_norm) * (zi / x_norm);
    }
    1.0 - burn
}

/// Slack residual `γ(x) = 1 - Σ_i f_(perm[i])(x)² / (σ_i² ‖x‖²)`.
///
/// Positive on every point whose output respects the gains the model was
/// built from; a negative return is a meaningful "gain violated" signal,
/// not an error. Zero input is rejected. One query.
pub fn gamma(model: &GsvdModel, f: &BlackBox, x: &[f64]) -> Result<f64> {
    let nrm = norm2(x);
    if nrm == 0.0 {
        return Err(Error::DegenerateInput("slack residual undefined at zero".into()));
    }
    let y = f.evaluate(x)?;
    Ok(gamma_from_output(model, &y, nrm))
}

/// Lift from an already-computed output (no query). See [`lift`].
pub fn lift_from_output(model: &GsvdModel, x: &[f64], y: &[f64]) -> Result<LiftedPoint> {
    let nrm = norm2(x);
    if nrm == 0.0 {
        return Ok(LiftedPoint { z: vec![0.0; model.lifted_dim()], d_out: model.d_out });
    }
    let g = gamma_from_output(model, y, nrm);
    if g <= 0.0 {
        return Err(Error::GainViolation { gamma: g, input: x.to_vec() });
    }
    let mut z = Vec::with_capacity(model.lifted_dim());
    for i in 0..model.d_out {
        z.push(y[model.perm[i]] / model.sigma[i]);
    }
    let root = g.sqrt();
    for &xi in x {
        z.push(root * xi);
    }
    Ok(LiftedPoint { z, d_out: model.d_out })
}

/// The norm-preserving lift `v(x)`.
///
/// The output block holds `f_(perm[i])(x) / σ_i`; the input block holds
/// `sqrt(γ(x)) · x`. Norm preservation `‖v(x)‖ = ‖x‖` is an identity:
/// the output block consumes exactly the `(1 - γ)` share of the squared
/// norm that the input block gives up. `v(0) = 0` by definition (no query);
/// otherwise one query. Points that violate the gains cannot be lifted.
pub fn lift(model: &GsvdModel, f: &BlackBox, x: &[f64]) -> Result<LiftedPoint> {
    if x.len() != model.d_in {
        return Err(Error::InvalidInput(format!(
            "input length {} does not match d_in {}",
            x.len(),
            model.d_in
        )));
    }
    if norm2(x) == 0.0 {
        return Ok(LiftedPoint { z: vec![0.0; model.lifted_dim()], d_out: model.d_out });
    }
    let y = f.evaluate(x)?;
    lift_from_output(model, x, &y)
}

/// The same lift computed through the explicit normalization route: append
/// the scaled outputs `δ_i = f_(perm[i])(x) / (σ_i sqrt(γ))` to `x` and
/// rescale the combined vector back to norm `‖x‖`. Algebraically identical
/// to [`lift`] (the combined vector has norm `‖x‖ / sqrt(γ)`), kept as an
/// independent implementation for cross-checking. One query.
pub fn lift_via_normalization(model: &GsvdModel, f: &BlackBox, x: &[f64]) -> Result<LiftedPoint> {
    if x.len() != model.d_in {
        return Err(Error::InvalidInput(format!(
            "input length {} does not match d_in {}",
            x.len(),
            model.d_in
        )));
    }
    let nrm = norm2(x);
    if nrm == 0.0 {
        return Ok(LiftedPoint { z: vec![0.0; model.lifted_dim()], d_out: model.d_out });
    }
    let y = f.evaluate(x)?;
    let g = gamma_from_output(model, &y, nrm);
    if g <= 0.0 {
        return Err(Error::GainViolation { gamma: g, input: x.to_vec() });
    }
    let root = g.sqrt();
    let mut xd = Vec::with_capacity(model.lifted_dim());
    for i in 0..model.d_out {
        xd.push(y[model.perm[i]] / (model.sigma[i] * root));
    }
    xd.extend_from_slice(x);
    let scale = nrm / norm2(&xd);
    let z: Vec<f64> = xd.iter().map(|v| v * scale).collect();
    Ok(LiftedPoint { z, d_out: model.d_out })
}

/// Left inverse of the lift: recovers `x` from `z = v(x)`.
///
/// On the image of `v`, the input block is `sqrt(γ) x` and `‖z‖ = ‖x‖`, so
/// rescaling the input block to the full norm reproduces `x` exactly:
/// `v^{-L}(z) = ‖z‖ z_x / ‖z_x‖`. Zero maps to zero; any other point whose
/// input block vanishes lies off the lift's image with no recoverable
/// direction.
pub fn left_inverse(model: &GsvdModel, z: &LiftedPoint) -> Result<Vec<f64>> {
    if z.len() != model.lifted_dim() || z.d_out() != model.d_out {
        return Err(Error::InvalidInput("lifted point has wrong shape".into()));
    }
    let total = z.norm();
    if total == 0.0 {
        return Ok(vec![0.0; model.d_in]);
    }
    let zx = z.input_block();
    let part = norm2(zx);
    if part == 0.0 {
        return Err(Error::OffManifoldDegenerate);
    }
    let scale = total / part;
    Ok(zx.iter().map(|v| v * scale).collect())
}

/// Round trip `U Σ v(x)`: reconstructs `f(x)` from the factorization.
/// One query (through [`lift`]); zero input reconstructs to zero output.
pub fn reconstruct(model: &GsvdModel, f: &BlackBox, x: &[f64]) -> Result<Vec<f64>> {
    let z = lift(model, f, x)?;
    model.output_from_lift(&z)
}
