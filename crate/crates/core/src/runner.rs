//! Orchestration: turns one validated configuration into on-disk
//! artifacts, one pipeline stage per command. Every stage stamps the
//! output directory with the configuration hash, the effective seed, and
//! the crate version, and refuses to mix artifacts from different runs.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{self, BiasReport, ValidateOptions};
use crate::attack::run_attack;
use crate::config::RunConfig;
use crate::dataset::{self, Dataset};
use crate::error::{Error, Result};
use crate::gsvd::{self, GsvdModel};
use crate::pgm;
use crate::svdnet::{self, NetShape, SvdNet, TrainReport};
use crate::traversal;

pub const CHECKPOINT_FILE: &str = "svdnet.ckpt";
pub const METRICS_FILE: &str = "metrics.json";
pub const MODEL_FILE: &str = "gsvd.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const ATTACK_CSV_FILE: &str = "attack.csv";
pub const ATTACK_SUMMARY_FILE: &str = "attack_summary.json";
pub const BIAS_SERIES_FILE: &str = "bias_series.json";
pub const INTERP_STRIP_FILE: &str = "interp_strip.pgm";
pub const NULL_STRIP_FILE: &str = "null_strip.pgm";
pub const TRAVERSE_MANIFEST_FILE: &str = "traverse_manifest.json";
pub const STAMP_FILE: &str = "stamp.json";

/// Provenance written next to every artifact.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Stamp {
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: String,
}

/// One configured run bound to an output directory.
pub struct RunContext {
    pub config: RunConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

impl RunContext {
    /// Reads and validates the configuration, hashes its exact bytes, and
    /// prepares the output directory.
    pub fn new(config_path: &Path, seed_override: Option<u64>, out_dir: PathBuf) -> Result<Self> {
        let bytes = std::fs::read(config_path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read {}: {e}", config_path.display()))
        })?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::InvalidConfig(format!("configuration is not UTF-8: {e}")))?;
        let config = RunConfig::from_json(text)?;
        let config_sha256 = format!("{:x}", Sha256::digest(&bytes));
        let seed = seed_override.unwrap_or(config.seed);
        std::fs::create_dir_all(&out_dir)?;
        Ok(RunContext { config, config_sha256, seed, out_dir })
    }

    fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    fn stamp(&self) -> Stamp {
        Stamp {
            config_sha256: self.config_sha256.clone(),
            seed: self.seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// Writes the stamp, or verifies it if an earlier stage already did.
    /// A mismatch means the directory holds artifacts from a different
    /// configuration, seed, or build, and continuing would mix runs.
    fn ensure_stamp(&self) -> Result<()> {
        let path = self.path(STAMP_FILE);
        let fresh = self.stamp();
        if path.exists() {
            let existing: Stamp = serde_json::from_str(&std::fs::read_to_string(&path)?)
                .map_err(|e| Error::FormatError(format!("unreadable stamp: {e}")))?;
            if existing != fresh {
                return Err(Error::InvalidConfig(format!(
                    "output directory {} was stamped by a different run; use a fresh directory",
                    self.out_dir.display()
                )));
            }
            return Ok(());
        }
        write_json(&path, &fresh)
    }

    fn require(&self, file: &str, produced_by: &str) -> Result<PathBuf> {
        let path = self.path(file);
        if !path.exists() {
            return Err(Error::InvalidInput(format!(
                "missing {file} in {}; run `{produced_by}` first",
                self.out_dir.display()
            )));
        }
        Ok(path)
    }

    fn load_dataset(&self) -> Result<Dataset> {
        if let Some(b) = &self.config.dataset.blobs {
            return dataset::synth_blobs(b.classes, b.per_class, b.dim, b.separation, self.seed);
        }
        let idx = self.config.dataset.idx.as_ref().expect("validated: exactly one source");
        dataset::read_idx(&idx.images, &idx.labels)
    }

    /// Construction prefix and held-out block per the configuration.
    fn split(&self, ds: &Dataset) -> Result<(Dataset, Dataset)> {
        let spec = &self.config.construction;
        let n = spec.construction_points.unwrap_or(ds.len() / 2);
        let (cons, rest) = ds.split_at(n)?;
        let holdout = match spec.holdout_points {
            None => rest,
            Some(h) if h == rest.len() => rest,
            Some(h) if h < rest.len() => rest.split_at(h)?.0,
            Some(h) => {
                return Err(Error::InvalidConfig(format!(
                    "holdout of {h} points exceeds the {} left after construction",
                    rest.len()
                )));
            }
        };
        Ok((cons, holdout))
    }

    fn shape_for(&self, d_in: usize, classes: usize) -> NetShape {
        let mut shape = NetShape::new(d_in, self.config.train.hidden.clone(), classes);
        if let Some(e) = self.config.train.encode_dim {
            shape.encode_dim = e;
        }
        shape
    }

    fn load_net(&self) -> Result<Arc<SvdNet>> {
        let path = self.require(CHECKPOINT_FILE, "train-svdnet")?;
        Ok(Arc::new(svdnet::load_checkpoint(&path)?))
    }

    fn load_model(&self) -> Result<GsvdModel> {
        let path = self.require(MODEL_FILE, "build-gsvd")?;
        GsvdModel::from_json(&std::fs::read_to_string(path)?)
    }

    // ── stages ───────────────────────────────────────────────────────

    /// Trains the network on the construction block and checkpoints it.
    pub fn train_svdnet(&self) -> Result<String> {
        self.ensure_stamp()?;
        let ds = self.load_dataset()?;
        let (labels, classes) = labeled(&ds)?;
        let (cons, holdout) = self.split(&ds)?;
        let cons_labels = &labels[..cons.len()];
        let shape = self.shape_for(ds.d_in(), classes);
        let cfg = self.config.train.to_train_config(self.seed);
        let outcome = svdnet::train(&cons.x, cons_labels, &shape, &cfg)?;
        svdnet::save_checkpoint(&outcome.net, &self.path(CHECKPOINT_FILE))?;

        let holdout_labels = &labels[cons.len()..cons.len() + holdout.len()];
        let hits = holdout
            .x
            .iter()
            .zip(holdout_labels)
            .filter(|(x, &l)| outcome.net.predict(x) == l)
            .count();
        let holdout_accuracy = hits as f64 / holdout.len() as f64;

        #[derive(Serialize)]
        struct Metrics<'a> {
            shape: &'a NetShape,
            param_count: usize,
            train: &'a TrainReport,
            holdout_accuracy: f64,
        }
        write_json(
            &self.path(METRICS_FILE),
            &Metrics {
                shape: outcome.net.shape(),
                param_count: outcome.net.param_count(),
                train: &outcome.report,
                holdout_accuracy,
            },
        )?;
        Ok(format!(
            "trained {} parameters on {} points: train accuracy {:.3}, holdout accuracy {:.3}\n",
            outcome.net.param_count(),
            cons.len(),
            outcome.report.train_accuracy,
            holdout_accuracy
        ))
    }

    /// Builds the factorization of the checkpointed network viewed as a
    /// black box, sampling gains over the construction block.
    pub fn build_gsvd(&self) -> Result<String> {
        self.ensure_stamp()?;
        let net = self.load_net()?;
        let f = net.as_blackbox();
        let ds = self.load_dataset()?;
        let (cons, _) = self.split(&ds)?;
        let alpha = gsvd::estimate_gains(&f, &cons.x)?;
        let model = gsvd::build(&f, &alpha, self.config.construction.epsilon)?;
        let mut text = model.to_json()?;
        text.push('\n');
        std::fs::write(self.path(MODEL_FILE), text)?;
        Ok(format!(
            "built factorization over {} outputs from {} gain samples ({} queries); scales {:?}\n",
            model.d_out,
            cons.len(),
            f.queries(),
            model.sigma
        ))
    }

    /// Validates the factorization on the held-out block.
    pub fn validate(&self) -> Result<String> {
        self.ensure_stamp()?;
        let net = self.load_net()?;
        let f = net.as_blackbox();
        let model = self.load_model()?;
        let ds = self.load_dataset()?;
        let (_, holdout) = self.split(&ds)?;
        let report = analysis::validate(&model, &f, &holdout.x, &ValidateOptions::default())?;
        write_json(&self.path(VALIDATION_FILE), &report)?;
        Ok(report.render_table())
    }

    /// Attacks a prefix of the held-out block and writes the per-sample
    /// table plus the aggregate summary.
    pub fn attack(&self) -> Result<String> {
        self.ensure_stamp()?;
        let net = self.load_net()?;
        let f = net.as_blackbox();
        let model = self.load_model()?;
        let ds = self.load_dataset()?;
        let (_, holdout) = self.split(&ds)?;
        let n = self.config.attack.samples;
        if holdout.len() < n {
            return Err(Error::InvalidConfig(format!(
                "attack wants {n} samples but the holdout has {}",
                holdout.len()
            )));
        }
        let cfg = self.config.attack.to_attack_config();
        let mut csv =
            String::from("sample_id,source_idx,target_idx,success,eta_norm,probes,queries,wall_ms\n");
        let mut successes = 0usize;
        let mut eta_norms = Vec::new();
        let mut total_queries = 0u64;
        for (i, x) in holdout.x.iter().take(n).enumerate() {
            let t0 = Instant::now();
            let res = run_attack(&model, &f, x, &cfg)?;
            let wall_ms = t0.elapsed().as_millis();
            if res.success {
                successes += 1;
                eta_norms.push(res.eta_norm);
            }
            total_queries += res.queries;
            csv.push_str(&format!(
                "{i},{},{},{},{},{},{},{wall_ms}\n",
                res.source_idx, res.target_idx, res.success, res.eta_norm, res.probes, res.queries
            ));
        }
        std::fs::write(self.path(ATTACK_CSV_FILE), csv)?;

        #[derive(Serialize)]
        struct AttackSummary {
            samples: usize,
            successes: usize,
            success_percent: f64,
            /// Mean over successful samples; null when none succeeded.
            avg_perturbation_norm: f64,
            avg_queries_per_sample: f64,
        }
        let summary = AttackSummary {
            samples: n,
            successes,
            success_percent: 100.0 * successes as f64 / n as f64,
            avg_perturbation_norm: if eta_norms.is_empty() {
                f64::NAN
            } else {
                crate::numerics::mean(&eta_norms)
            },
            avg_queries_per_sample: total_queries as f64 / n as f64,
        };
        write_json(&self.path(ATTACK_SUMMARY_FILE), &summary)?;
        Ok(format!(
            "attacked {n} held-out samples: {:.1}% flipped, {:.1} queries per sample\n",
            summary.success_percent, summary.avg_queries_per_sample
        ))
    }

    /// Retrains at each undersampling ratio and reports the head spectrum
    /// against the balanced holdout.
    pub fn bias_sweep(&self) -> Result<String> {
        self.ensure_stamp()?;
        let ds = self.load_dataset()?;
        let (labels, classes) = labeled(&ds)?;
        let (cons, holdout) = self.split(&ds)?;
        let cons_labels = &labels[..cons.len()];
        let holdout_labels = &labels[cons.len()..cons.len() + holdout.len()];
        let target = self.config.bias.target_class;
        if target >= classes {
            return Err(Error::InvalidConfig(format!(
                "bias target class {target} out of range for {classes} classes"
            )));
        }
        let shape = self.shape_for(ds.d_in(), classes);
        let cfg = self.config.train.to_train_config(self.seed);
        let mut series: Vec<BiasReport> = Vec::new();
        for &ratio in &self.config.bias.ratios {
            let kept = analysis::undersample(cons_labels, classes, target, ratio, self.seed)?;
            let xs: Vec<Vec<f64>> = kept.iter().map(|&i| cons.x[i].clone()).collect();
            let ls: Vec<usize> = kept.iter().map(|&i| cons_labels[i]).collect();
            let outcome = svdnet::train(&xs, &ls, &shape, &cfg)?;
            series.push(analysis::bias_report(
                &outcome.net,
                &holdout.x,
                holdout_labels,
                target,
                ratio,
            )?);
        }
        write_json(&self.path(BIAS_SERIES_FILE), &series)?;
        let first = series.first().expect("validated: at least one ratio");
        let last = series.last().expect("validated: at least one ratio");
        Ok(format!(
            "swept {} ratios: sigma ratio {:.3} at ratio {} -> {:.3} at ratio {}\n",
            series.len(),
            first.sigma_ratio,
            first.sample_ratio,
            last.sigma_ratio,
            last.sample_ratio
        ))
    }

    /// Renders a logit interpolation strip between two classes and a strip
    /// of null-space variations, plus a manifest describing both.
    pub fn traverse(&self) -> Result<String> {
        self.ensure_stamp()?;
        let net = self.load_net()?;
        let spec = &self.config.traverse;
        let classes = net.shape().num_classes;
        if spec.class_a >= classes || spec.class_b >= classes {
            return Err(Error::InvalidConfig(format!(
                "traversal classes ({}, {}) out of range for {classes} classes",
                spec.class_a, spec.class_b
            )));
        }
        let d_in = net.shape().d_in;
        let rows = spec.image_rows.unwrap_or(1);
        if d_in % rows != 0 {
            return Err(Error::InvalidConfig(format!(
                "{rows} image rows do not divide the input dimension {d_in}"
            )));
        }
        let cols = d_in / rows;

        let one_hot = |c: usize| {
            let mut y = vec![0.0; classes];
            y[c] = spec.target_value;
            y
        };
        let panels =
            traversal::interpolate(&net, &one_hot(spec.class_a), &one_hot(spec.class_b), spec.steps)?;
        let images: Vec<Vec<f64>> = panels.iter().map(|p| p.image.clone()).collect();
        let (w, h, pixels) = pgm::strip(&images, cols, rows)?;
        pgm::write_pgm(&self.path(INTERP_STRIP_FILE), w, h, &pixels)?;

        let mut null_file = None;
        let mut max_logit_deviation = None;
        if spec.null_samples > 0 {
            let mut null_images = Vec::new();
            let mut worst = 0.0_f64;
            let target = one_hot(spec.class_a);
            for k in 0..spec.null_samples {
                let s = traversal::null_sample_scaled(
                    &net,
                    spec.class_a,
                    spec.target_value,
                    spec.noise_scale,
                    self.seed + k as u64,
                )?;
                for (got, want) in s.logits.iter().zip(&target) {
                    worst = worst.max((got - want).abs());
                }
                null_images.push(s.image);
            }
            let (w, h, pixels) = pgm::strip(&null_images, cols, rows)?;
            pgm::write_pgm(&self.path(NULL_STRIP_FILE), w, h, &pixels)?;
            null_file = Some(NULL_STRIP_FILE.to_string());
            max_logit_deviation = Some(worst);
        }

        #[derive(Serialize)]
        struct InterpInfo {
            file: String,
            class_a: usize,
            class_b: usize,
            steps: usize,
            t: Vec<f64>,
        }
        #[derive(Serialize)]
        struct NullInfo {
            file: Option<String>,
            class: usize,
            count: usize,
            noise_scale: f64,
            /// Worst absolute logit deviation from the class target over
            /// all null samples; the head cannot see null-space noise, so
            /// this stays at rounding scale.
            max_logit_deviation: Option<f64>,
        }
        #[derive(Serialize)]
        struct Manifest {
            image_rows: usize,
            image_cols: usize,
            interpolation: InterpInfo,
            null_samples: NullInfo,
        }
        let manifest = Manifest {
            image_rows: rows,
            image_cols: cols,
            interpolation: InterpInfo {
                file: INTERP_STRIP_FILE.to_string(),
                class_a: spec.class_a,
                class_b: spec.class_b,
                steps: spec.steps,
                t: panels.iter().map(|p| p.t).collect(),
            },
            null_samples: NullInfo {
                file: null_file,
                class: spec.class_a,
                count: spec.null_samples,
                noise_scale: spec.noise_scale,
                max_logit_deviation,
            },
        };
        write_json(&self.path(TRAVERSE_MANIFEST_FILE), &manifest)?;
        Ok(format!(
            "rendered {} interpolation panels and {} null variations as {rows}x{cols} images\n",
            spec.steps, spec.null_samples
        ))
    }
}

fn labeled(ds: &Dataset) -> Result<(&[usize], usize)> {
    match (&ds.labels, ds.num_classes) {
        (Some(l), Some(c)) => Ok((l, c)),
        _ => Err(Error::InvalidConfig(format!("dataset {} has no labels", ds.name))),
    }
}
