//! Training orchestration: per-epoch clustering refresh, pseudo-label
//! generation, forward/backward, Adam updates, checkpointing, and the
//! ablation runner.
//!
//! Training never reads frame-level ground truth; the only label input is
//! the video-level weak label carried by each bag.

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cluster;
use crate::error::{Error, Result};
use crate::evaluator;
use crate::feature_store::{FrameTruth, VideoBag};
use crate::labels;
use crate::loss::{self, LossConfig};
use crate::mlp::{self, AdamState, ForwardMode, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WSCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Stream id base for the per-epoch shuffle RNG, separate from dropout
/// streams so toggling dropout never perturbs data order.
const SHUFFLE_STREAM_BASE: u64 = 0x5348_5546_0000_0000;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Refresh clustering every this many epochs.
    pub recluster_every: usize,
    /// Off = anomalous segments all labeled 1 (the "FC + L_c" ablation).
    pub use_pseudo: bool,
    /// Epochs of all-ones labels on anomalous videos before pseudo-labels
    /// kick in. The alignment rule needs score experience to pick the
    /// anomalous cluster: with near-uniform scores it degenerates to a
    /// cluster-size comparison and locks onto the wrong side.
    pub pseudo_warmup: usize,
    /// Off = no cluster-distance term (the "FC + y^p" ablation).
    pub use_lc: bool,
    pub loss: LossConfig,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            epochs: 50,
            seed: 0,
            recluster_every: 1,
            use_pseudo: true,
            pseudo_warmup: 20,
            use_lc: true,
            loss: LossConfig::default(),
            hidden_dim: 512,
            dropout_rate: 0.6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("lr must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.recluster_every == 0 {
            return Err(Error::InvalidConfig("recluster_every must be >= 1".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::InvalidConfig("hidden_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig("dropout must be in [0,1)".into()));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_l: f64,
    pub mean_lr: f64,
    pub mean_lc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    /// One JSON record per epoch. Wall time is deliberately excluded so
    /// reports from identical runs are byte-identical.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.epochs {
            out.push_str(&serde_json::to_string(e).expect("epoch stats serialize"));
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub adam: AdamState,
    pub report: TrainReport,
    pub epochs_done: usize,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn dropout_seed(seed: u64, epoch: usize, video: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((epoch as u64) << 32) | video as u64))
}

/// Trains from fresh parameters over the given bags.
pub fn train(bags: &[VideoBag], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if bags.is_empty() {
        return Err(Error::InvalidConfig("no training videos".into()));
    }
    let input_dim = bags[0].dim;
    let params = mlp::init_params(input_dim, cfg.hidden_dim, cfg.dropout_rate, cfg.seed)?;
    let adam = AdamState::new(&params, cfg.lr);
    resume(params, adam, 0, bags, cfg, cfg.epochs)
}

/// Continues training from existing parameters and optimizer state,
/// starting at absolute epoch `start_epoch`. With the default per-epoch
/// recluster schedule this reproduces an uninterrupted run exactly.
pub fn resume(
    mut params: ModelParams,
    mut adam: AdamState,
    start_epoch: usize,
    bags: &[VideoBag],
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    for bag in bags {
        if bag.dim != params.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "video {} has dim {}, model expects {}",
                bag.video_id, bag.dim, params.input_dim
            )));
        }
    }
    let started = Instant::now();
    let mut cached_assignments: Vec<Option<Vec<u8>>> = vec![None; bags.len()];
    let mut stats = Vec::with_capacity(epochs);

    for epoch in start_epoch..start_epoch + epochs {
        let mut order: Vec<usize> = (0..bags.len()).collect();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        shuffle_rng.set_stream(SHUFFLE_STREAM_BASE + epoch as u64);
        order.shuffle(&mut shuffle_rng);

        let (mut sum_l, mut sum_lr, mut sum_lc) = (0.0, 0.0, 0.0);
        for &v in &order {
            let bag = &bags[v];
            let step = train_step(&params, &adam, bag, cfg, epoch, v, &mut cached_assignments[v])?;
            params = step.params;
            adam = step.adam;
            sum_l += step.total;
            sum_lr += step.regression;
            sum_lc += step.cluster_distance;
        }
        let n = bags.len() as f64;
        let mean_l = sum_l / n;
        if !mean_l.is_finite() {
            return Err(Error::NumericFailure("epoch mean loss"));
        }
        stats.push(EpochStats { epoch, mean_l, mean_lr: sum_lr / n, mean_lc: sum_lc / n });
    }
    Ok(TrainOutcome {
        params,
        adam,
        report: TrainReport { epochs: stats, wall_time_secs: started.elapsed().as_secs_f64() },
        epochs_done: start_epoch + epochs,
    })
}

struct StepOutcome {
    params: ModelParams,
    adam: AdamState,
    total: f64,
    regression: f64,
    cluster_distance: f64,
}

fn train_step(
    params: &ModelParams,
    adam: &AdamState,
    bag: &VideoBag,
    cfg: &TrainConfig,
    epoch: usize,
    video_index: usize,
    cached: &mut Option<Vec<u8>>,
) -> Result<StepOutcome> {
    let m = bag.num_segments;
    let feats = bag.features_f64();

    // one coherent eval-mode snapshot per visit: scores for alignment,
    // hidden reps for cluster geometry
    let eval_cache = mlp::forward(params, &feats, m, ForwardMode::Eval)?;

    let cluster_result = if m >= 2 {
        let refresh = cached.is_none() || epoch % cfg.recluster_every == 0;
        if refresh {
            let res = cluster::two_means(&eval_cache.hidden, m, params.hidden_dim, 100, 1e-9)?;
            *cached = Some(res.assignments.clone());
            Some(res)
        } else {
            let assignments = cached.as_ref().expect("cache populated above");
            Some(cluster::from_assignments(&eval_cache.hidden, m, params.hidden_dim, assignments)?)
        }
    } else {
        None
    };

    let training = if bag.weak_label == 0 {
        labels::training_labels(0, None, m).0
    } else if cfg.use_pseudo && epoch >= cfg.pseudo_warmup {
        let aligned = labels::normalize_for_alignment(&eval_cache.scores);
        let pseudo = cluster_result
            .as_ref()
            .map(|c| labels::pseudo_labels_from_cluster(&aligned, c))
            .transpose()?
            .map(|(p, _degenerate)| p);
        labels::training_labels(1, pseudo.as_ref(), m).0
    } else {
        // ablation: every segment of an anomalous video labeled 1
        labels::training_labels(1, None, m).0
    };

    let train_cache = mlp::forward(
        params,
        &feats,
        m,
        ForwardMode::Train { dropout_seed: dropout_seed(cfg.seed, epoch, video_index) },
    )?;

    let cluster_for_loss = if cfg.use_lc { cluster_result.as_ref() } else { None };
    let breakdown = loss::loss_breakdown(
        &training.values,
        &train_cache.scores,
        cluster_for_loss,
        bag.weak_label,
        params.hidden_dim,
        &cfg.loss,
    )?;
    if !breakdown.total.is_finite() {
        return Err(Error::NumericFailure("per-video loss"));
    }

    let grads = mlp::backward(params, &train_cache, &breakdown.dloss_dscores, &breakdown.dloss_dhidden)?;
    let (new_params, new_adam) = mlp::adam_step(params, &grads, adam)?;
    Ok(StepOutcome {
        params: new_params,
        adam: new_adam,
        total: breakdown.total,
        regression: breakdown.regression,
        cluster_distance: breakdown.cluster_distance,
    })
}

/// Everything needed to continue or evaluate a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    pub loss: LossConfig,
    pub seed: u64,
    pub epochs_done: u64,
    pub recluster_every: u32,
    pub pseudo_warmup: u32,
    pub use_pseudo: bool,
    pub use_lc: bool,
}

impl Checkpoint {
    pub fn train_config(&self, epochs: usize) -> TrainConfig {
        TrainConfig {
            lr: self.adam.lr,
            epochs,
            seed: self.seed,
            recluster_every: self.recluster_every as usize,
            use_pseudo: self.use_pseudo,
            pseudo_warmup: self.pseudo_warmup as usize,
            use_lc: self.use_lc,
            loss: self.loss,
            hidden_dim: self.params.hidden_dim,
            dropout_rate: self.params.dropout_rate,
        }
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let p = &ckpt.params;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(p.input_dim as u32).to_le_bytes());
    buf.extend_from_slice(&(p.hidden_dim as u32).to_le_bytes());
    buf.extend_from_slice(&p.dropout_rate.to_le_bytes());
    for v in p.flatten() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in ckpt.adam.first_moment.iter().chain(&ckpt.adam.second_moment) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&ckpt.adam.step.to_le_bytes());
    for v in [ckpt.adam.lr, ckpt.adam.beta1, ckpt.adam.beta2, ckpt.adam.epsilon] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for v in [ckpt.loss.lambda, ckpt.loss.alpha, ckpt.loss.epsilon_d] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&ckpt.seed.to_le_bytes());
    buf.extend_from_slice(&ckpt.epochs_done.to_le_bytes());
    buf.extend_from_slice(&ckpt.recluster_every.to_le_bytes());
    buf.extend_from_slice(&ckpt.pseudo_warmup.to_le_bytes());
    buf.push(ckpt.use_pseudo as u8);
    buf.push(ckpt.use_lc as u8);
    buf.extend_from_slice(&[0u8; 2]);

    // atomic: temp file then rename
    let tmp = path.with_extension("ckpt-tmp");
    std::fs::write(&tmp, &buf).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.into(),
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[0..4] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic { path: path.into(), expected: "WSCK" });
    }
    let mut c = Cursor { bytes: &bytes, pos: 4, path };
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::WrongVersion { path: path.into(), found: version, expected: CHECKPOINT_VERSION });
    }
    let input_dim = c.u32()? as usize;
    let hidden_dim = c.u32()? as usize;
    let dropout_rate = c.f64()?;
    let num_params = hidden_dim * input_dim + 2 * hidden_dim + 1;
    let flat = c.f64_vec(num_params)?;
    let mut params = ModelParams {
        w1: vec![0.0; hidden_dim * input_dim],
        b1: vec![0.0; hidden_dim],
        w2: vec![0.0; hidden_dim],
        b2: 0.0,
        input_dim,
        hidden_dim,
        dropout_rate,
    };
    params.assign_from_flat(&flat);
    let first_moment = c.f64_vec(num_params)?;
    let second_moment = c.f64_vec(num_params)?;
    let step = c.u64()?;
    let (lr, beta1, beta2, epsilon) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?);
    let loss = LossConfig { lambda: c.f64()?, alpha: c.f64()?, epsilon_d: c.f64()? };
    let seed = c.u64()?;
    let epochs_done = c.u64()?;
    let recluster_every = c.u32()?;
    let pseudo_warmup = c.u32()?;
    let use_pseudo = c.take(1)?[0] != 0;
    let use_lc = c.take(1)?[0] != 0;
    c.take(2)?;
    Ok(Checkpoint {
        params,
        adam: AdamState { first_moment, second_moment, step, lr, beta1, beta2, epsilon },
        loss,
        seed,
        epochs_done,
        recluster_every,
        pseudo_warmup,
        use_pseudo,
        use_lc,
    })
}

pub const ABLATION_VARIANTS: [(&str, bool, bool); 3] = [
    ("FC + L_c + y^p", true, true),
    ("FC + y^p", true, false),
    ("FC + L_c", false, true),
];

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub variant: &'static str,
    pub seed: u64,
    pub auc: f64,
}

/// Trains the three ablation variants per seed and evaluates each on the
/// held-out labeled test split.
pub fn run_ablation(
    train_bags: &[VideoBag],
    test_bags: &[VideoBag],
    truths: &[FrameTruth],
    base_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(ABLATION_VARIANTS.len() * seeds.len());
    for (variant, use_pseudo, use_lc) in ABLATION_VARIANTS {
        for &seed in seeds {
            let cfg = TrainConfig { seed, use_pseudo, use_lc, ..base_cfg.clone() };
            let outcome = train(train_bags, &cfg)?;
            let (auc, _) = evaluator::evaluate(&outcome.params, test_bags, truths)?;
            rows.push(AblationRow { variant, seed, auc });
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv(rows: &[AblationRow], path: &Path) -> Result<()> {
    let mut out = String::from("variant,seed,auc\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.variant, r.seed, r.auc));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
