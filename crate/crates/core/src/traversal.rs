//! Moving through the lifted space: row/null projections, pullbacks of
//! latent points to inputs, null-space sampling, and class interpolation.
//!
//! The factorization splits the lifted space into a row block that the
//! scale matrix reads and a null block it discards. Row motion changes the
//! outputs; null motion changes only how the input is represented. The
//! tools here exploit that split: sampling decoder inputs that pin the
//! logits, interpolating between class targets, and testing whether two
//! inputs sit in the same output fiber.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blackbox::BlackBox;
use crate::error::{Error, Result};
use crate::gsvd::{self, GsvdModel, LiftedPoint};
use crate::numerics::{self, norm2, standard_normal, Matrix, DEFAULT_RANK_RTOL};
use crate::svdnet::SvdNet;

// ── projections ──────────────────────────────────────────────────────────

/// Complementary orthogonal projections onto the row space and null space
/// of a rectangular-diagonal scale matrix. Entries are exactly 0 or 1, so
/// idempotence and complementarity hold without rounding.
#[derive(Debug, Clone)]
pub struct ProjectionPair {
    pub p_row: Matrix,
    pub p_null: Matrix,
}

/// Builds the projection pair from `Σ = [diag(σ) | 0]`. The input must be
/// exactly rectangular-diagonal (no off-diagonal entries), as produced by
/// [`GsvdModel::sigma_matrix`].
pub fn projections(sigma: &Matrix) -> Result<ProjectionPair> {
    let rows = sigma.rows();
    let cols = sigma.cols();
    if rows > cols {
        return Err(Error::InvalidInput(
            "scale matrix must have at least as many columns as rows".into(),
        ));
    }
    for i in 0..rows {
        for j in 0..cols {
            if i != j && sigma.get(i, j) != 0.0 {
                return Err(Error::InvalidInput(
                    "scale matrix must be rectangular-diagonal".into(),
                ));
            }
        }
    }
    let mut p_row = Matrix::zeros(cols, cols);
    let mut p_null = Matrix::zeros(cols, cols);
    for j in 0..cols {
        let on_row = j < rows && sigma.get(j, j) != 0.0;
        if on_row {
            p_row.set(j, j, 1.0);
        } else {
            p_null.set(j, j, 1.0);
        }
    }
    Ok(ProjectionPair { p_row, p_null })
}

// ── pullbacks ────────────────────────────────────────────────────────────

/// Pulls a lifted point back to input space by rescaling its input block
/// to the full lifted norm: `‖z‖ z_x / ‖z_x‖`.
///
/// On the lift's image this equals the exact left inverse; off the image it
/// extends the same formula, reading the input block as a direction and the
/// total norm as the length. Zero maps to zero; a nonzero point with a
/// vanishing input block has no direction to read.
pub fn naive_decoder(z: &LiftedPoint) -> Result<Vec<f64>> {
    let total = z.norm();
    if total == 0.0 {
        return Ok(vec![0.0; z.d_in()]);
    }
    let zx = z.input_block();
    let part = norm2(zx);
    if part == 0.0 {
        return Err(Error::OffManifoldDegenerate);
    }
    let scale = total / part;
    Ok(zx.iter().map(|v| v * scale).collect())
}

// ── null-space sampling ──────────────────────────────────────────────────

/// A decoder input that realizes a chosen logit vector, plus the logits it
/// pins and the decoded image.
#[derive(Debug, Clone)]
pub struct NullSample {
    pub code: Vec<f64>,
    pub logits: Vec<f64>,
    pub image: Vec<f64>,
}

/// Samples a latent code whose head output is the one-hot of `class_idx`
/// (scaled by `target_value`), perturbed inside the head's null space by
/// seeded Gaussian noise of scale `noise_scale`. The logits are invariant
/// to the noise by construction; only the decoded appearance moves.
pub fn null_sample_scaled(
    net: &SvdNet,
    class_idx: usize,
    target_value: f64,
    noise_scale: f64,
    seed: u64,
) -> Result<NullSample> {
    let c = net.shape().num_classes;
    if class_idx >= c {
        return Err(Error::InvalidInput(format!(
            "class index {class_idx} out of range for {c} classes"
        )));
    }
    if !target_value.is_finite() || !noise_scale.is_finite() || noise_scale < 0.0 {
        return Err(Error::InvalidInput("target and noise scale must be finite".into()));
    }
    let k = net.head();
    let k_pinv = numerics::pseudoinverse(k, DEFAULT_RANK_RTOL)?;
    let mut target = vec![0.0; c];
    target[class_idx] = target_value;
    let mut code = k_pinv.matvec(&target);

    if noise_scale > 0.0 {
        if let Some(basis) = numerics::null_basis(k, DEFAULT_RANK_RTOL)? {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let eta: Vec<f64> =
                (0..basis.cols()).map(|_| noise_scale * standard_normal(&mut rng)).collect();
            let bump = basis.matvec(&eta);
            for (c, b) in code.iter_mut().zip(bump) {
                *c += b;
            }
        }
    }

    let logits = k.matvec(&code);
    let image = net.decode(&code);
    Ok(NullSample { code, logits, image })
}

/// [`null_sample_scaled`] with an unscaled one-hot target.
pub fn null_sample(net: &SvdNet, class_idx: usize, noise_scale: f64, seed: u64) -> Result<NullSample> {
    null_sample_scaled(net, class_idx, 1.0, noise_scale, seed)
}

// ── interpolation ────────────────────────────────────────────────────────

/// One step of a logit-space interpolation.
#[derive(Debug, Clone)]
pub struct InterpPanel {
    pub t: f64,
    pub code: Vec<f64>,
    pub image: Vec<f64>,
}

/// Walks the straight line between two logit vectors, pulling each point
/// back through the head's pseudoinverse and decoding it. Endpoints land
/// exactly on `y1` and `y2` (t = 0 and t = 1).
pub fn interpolate(net: &SvdNet, y1: &[f64], y2: &[f64], steps: usize) -> Result<Vec<InterpPanel>> {
    let c = net.shape().num_classes;
    if y1.len() != c || y2.len() != c {
        return Err(Error::InvalidInput("interpolation endpoints must be logit vectors".into()));
    }
    if steps < 2 {
        return Err(Error::InvalidInput("interpolation needs at least two steps".into()));
    }
    let k_pinv = numerics::pseudoinverse(net.head(), DEFAULT_RANK_RTOL)?;
    let mut panels = Vec::with_capacity(steps);
    for k in 0..steps {
        let t = k as f64 / (steps - 1) as f64;
        let y: Vec<f64> = y1.iter().zip(y2).map(|(a, b)| (1.0 - t) * a + t * b).collect();
        let code = k_pinv.matvec(&y);
        let image = net.decode(&code);
        panels.push(InterpPanel { t, code, image });
    }
    Ok(panels)
}

// ── membership ───────────────────────────────────────────────────────────

/// Do `x_ref` and `x_probe` lie in the same output fiber? True when the row
/// blocks of their lifts agree within `tol` (Euclidean). Two queries.
pub fn membership_null_set(
    model: &GsvdModel,
    f: &BlackBox,
    x_ref: &[f64],
    x_probe: &[f64],
    tol: f64,
) -> Result<bool> {
    let za = gsvd::lift(model, f, x_ref)?;
    let zb = gsvd::lift(model, f, x_probe)?;
    let d2: f64 = za
        .output_block()
        .iter()
        .zip(zb.output_block())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(d2.sqrt() <= tol)
}
