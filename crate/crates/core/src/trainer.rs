//! Optimization: SGD with momentum, warmup + cosine schedule, the
//! contrastive training loop, teacher pretraining and linear evaluation.

use crate::data::{augment, epoch_batches, AugmentConfig, DataError, Dataset, LabeledExample};
use crate::loss::{gradient_contribution_stats, loss_and_grad_z, KdWeight, LossError, Objective, ProjectedBatch};
use crate::mixing::{build_multiview_batch, MixError, MixKind};
use crate::model::{argmax, ContrastiveModel, LinearProbe, Mlp, ModelDims, ModelError, Teacher, TeacherNet};
use crate::numerics::{self, NumericsError, Rng};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(
        "non-finite loss at epoch {epoch}, batch {batch}; replay with batch seed {replay_seed}"
    )]
    Diverged {
        epoch: usize,
        batch: usize,
        replay_seed: u64,
        last_record: Option<TrainLogRecord>,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LossKind {
    SupCon,
    #[default]
    GenScl,
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::SupCon => "supcon",
            LossKind::GenScl => "genscl",
        })
    }
}

impl FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "supcon" => Ok(LossKind::SupCon),
            "genscl" => Ok(LossKind::GenScl),
            other => Err(format!("unknown loss {other:?} (supcon|genscl)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub tau: f64,
    pub loss: LossKind,
    pub alpha_kd: KdWeight,
    pub mix: MixKind,
    pub beta_alpha: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub hidden: usize,
    pub embed: usize,
    pub proj: usize,
    /// Label-similarity threshold defining "positive" pairs in the logged
    /// `z_i·z_j` diagnostic.
    pub pos_threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 1e-4,
            warmup_epochs: 2,
            tau: 0.1,
            loss: LossKind::GenScl,
            alpha_kd: KdWeight::Weight(0.0),
            mix: MixKind::None,
            beta_alpha: 1.0,
            seed: 0,
            augment: AugmentConfig::default(),
            hidden: 64,
            embed: 32,
            proj: 16,
            pos_threshold: crate::loss::DEFAULT_POSITIVE_THRESHOLD,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        if self.warmup_epochs > self.epochs {
            return bad("warmup_epochs must not exceed epochs");
        }
        if !(self.tau > 0.0) {
            return bad("tau must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.mix != MixKind::None && self.batch_size < 2 {
            return bad("mixing needs batch_size >= 2");
        }
        if !(self.beta_alpha > 0.0) {
            return bad("beta_alpha must be positive");
        }
        if self.loss == LossKind::SupCon {
            if self.mix != MixKind::None {
                return bad("supcon needs one-hot labels; use --loss genscl with mixing");
            }
            if self.alpha_kd.needs_teacher() {
                return bad("knowledge distillation requires the genscl loss");
            }
        }
        if self.proj < 2 {
            return bad("projection dimension must be at least 2");
        }
        Ok(())
    }

    pub fn objective(&self) -> Objective {
        match (self.loss, self.alpha_kd) {
            (LossKind::SupCon, _) => Objective::SupCon,
            (LossKind::GenScl, KdWeight::Weight(a)) if a == 0.0 => Objective::GenScl,
            (LossKind::GenScl, kd) => Objective::KdGenScl(kd),
        }
    }
}

/// Linear warmup `lr·(epoch+1)/warmup` for `epoch < warmup`, then cosine
/// annealing `lr·½(1 + cos(π·(epoch − warmup)/(epochs − warmup)))`.
pub fn lr_at(base_lr: f64, epochs: usize, warmup_epochs: usize, epoch: usize) -> f64 {
    if epoch < warmup_epochs {
        return base_lr * (epoch + 1) as f64 / warmup_epochs as f64;
    }
    let span = epochs.saturating_sub(warmup_epochs).max(1);
    let progress = (epoch - warmup_epochs) as f64 / span as f64;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// Classical momentum SGD with L2 weight decay folded into the gradient:
/// `g ← grad + wd·θ; v ← μ·v + g; θ ← θ − lr·v`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], velocity: &mut [f64], lr: f64, momentum: f64, weight_decay: f64) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), velocity.len());
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        let g = g + weight_decay * *p;
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// One row of the per-epoch metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLogRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    /// Mean `z_i·z_j` over positive pairs (NaN if no batch had one).
    pub mean_pos_dot: f64,
    /// Mean `√(1 − (z_i·z_j)²)` over the same pairs.
    pub tangent_factor: f64,
    pub lr: f64,
    pub wall_clock_secs: f64,
}

impl TrainLogRecord {
    pub const CSV_HEADER: &'static str = "epoch,loss,mean_pos_dot,tangent_factor,lr";

    /// Metrics CSV row; wall-clock time is left out so files are reproducible.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.mean_loss, self.mean_pos_dot, self.tangent_factor, self.lr
        )
    }
}

pub fn metrics_csv(log: &[TrainLogRecord]) -> String {
    let mut out = String::from(TrainLogRecord::CSV_HEADER);
    out.push('\n');
    for r in log {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ContrastiveModel,
    pub log: Vec<TrainLogRecord>,
}

const INIT_STREAM: u64 = 0;

fn epoch_stream(epoch: usize) -> u64 {
    ((epoch as u64) + 1) << 24
}

/// Splits an epoch's shuffled order into batches, folding a singleton tail
/// into the previous batch so every batch has a mixing partner.
fn plan_batches(len: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut batches = epoch_batches(len, batch_size, rng);
    if batches.len() > 1 && batches.last().map_or(false, |b| b.len() == 1) {
        let tail = batches.pop().expect("non-empty");
        batches.last_mut().expect("non-empty").extend(tail);
    }
    batches
}

/// Initial student network for `cfg` on inputs of dimension `input`.
pub fn init_model(input: usize, cfg: &TrainConfig) -> Result<ContrastiveModel> {
    let dims = ModelDims {
        input,
        hidden: cfg.hidden,
        embed: cfg.embed,
        proj: cfg.proj,
    };
    Ok(ContrastiveModel::new(dims, &mut Rng::new(cfg.seed).stream(INIT_STREAM))?)
}

/// Contrastive pretraining of `f` and `g` over mixed multi-viewed batches.
///
/// The optimized quantity is the batch loss divided by the number of views;
/// the gradient flows through every anchor's term. Fully determined by
/// `(ds, cfg, teacher)`.
pub fn train_contrastive(ds: &Dataset, cfg: &TrainConfig, teacher: Option<&Teacher>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let objective = cfg.objective();
    let needs_teacher = matches!(objective, Objective::KdGenScl(_));
    let teacher = match (needs_teacher, teacher) {
        (true, None) => return Err(TrainError::Config("alpha_kd requires a teacher".into())),
        (true, Some(t)) => {
            if t.classes() != ds.classes() {
                return Err(TrainError::Config(format!(
                    "teacher predicts {} classes, dataset has {}",
                    t.classes(),
                    ds.classes()
                )));
            }
            Some(t)
        }
        (false, _) => None,
    };
    let (h, w, _) = ds.shape();
    cfg.augment.validate(h, w)?;
    if ds.len() < 2 && cfg.mix != MixKind::None {
        return Err(TrainError::Config("mixing needs at least two examples".into()));
    }

    let root = Rng::new(cfg.seed);
    let mut model = init_model(ds.input_dim(), cfg)?;
    let mut vel_enc = vec![0.0; model.encoder.params().len()];
    let mut vel_proj = vec![0.0; model.projection.params().len()];
    let mut log: Vec<TrainLogRecord> = Vec::with_capacity(cfg.epochs);
    let started = Instant::now();

    for epoch in 0..cfg.epochs {
        let lr = lr_at(cfg.lr, cfg.epochs, cfg.warmup_epochs, epoch);
        let stream = epoch_stream(epoch);
        let batches = plan_batches(ds.len(), cfg.batch_size, &mut root.stream(stream));
        let mut loss_sum = 0.0;
        let mut dot_sum = 0.0;
        let mut tangent_sum = 0.0;
        let mut stat_batches = 0usize;

        for (b, idx) in batches.iter().enumerate() {
            let batch_id = stream + 1 + b as u64;
            let replay_seed = root.stream_seed(batch_id);
            let examples: Vec<LabeledExample> = idx.iter().map(|&i| ds.get(i).clone()).collect();
            let mv = build_multiview_batch(&examples, &cfg.augment, cfg.mix, cfg.beta_alpha, &mut Rng::new(replay_seed))?;

            let diverged = |last: &[TrainLogRecord]| TrainError::Diverged {
                epoch: epoch + 1,
                batch: b,
                replay_seed,
                last_record: last.last().cloned(),
            };

            let mut traces = Vec::with_capacity(mv.len());
            for v in &mv.views {
                match model.forward_view(v.image.pixels()) {
                    Ok(t) => traces.push(t),
                    Err(ModelError::DegenerateProjection) => return Err(diverged(&log)),
                    Err(e) => return Err(e.into()),
                }
            }
            if traces.iter().any(|t| t.w.iter().any(|x| !x.is_finite())) {
                return Err(diverged(&log));
            }
            let preds = match teacher {
                Some(t) => Some(
                    mv.views
                        .iter()
                        .map(|v| t.predict(v.image.pixels(), &v.soft_label))
                        .collect::<std::result::Result<Vec<_>, _>>()?,
                ),
                None => None,
            };
            let pb = ProjectedBatch::new(traces.iter().map(|t| t.w.clone()).collect(), mv.labels(), preds, cfg.tau)?;
            let (breakdown, grad_z) = loss_and_grad_z(&pb, objective)?;
            let views = pb.len() as f64;
            let batch_loss = breakdown.total / views;
            if !batch_loss.is_finite() {
                return Err(diverged(&log));
            }
            loss_sum += batch_loss;
            if let Some(pos) = gradient_contribution_stats(&pb, cfg.pos_threshold)?.positive {
                dot_sum += pos.mean_dot;
                tangent_sum += pos.mean_tangent;
                stat_batches += 1;
            }

            let mut grads = model.zero_grads();
            for (t, g) in traces.iter().zip(&grad_z) {
                model.backward_view(t, g, &mut grads)?;
            }
            grads.scale(1.0 / views);
            if grads.encoder.iter().chain(&grads.projection).any(|g| !g.is_finite()) {
                return Err(diverged(&log));
            }
            sgd_step(model.encoder.params_mut(), &grads.encoder, &mut vel_enc, lr, cfg.momentum, cfg.weight_decay);
            sgd_step(
                model.projection.params_mut(),
                &grads.projection,
                &mut vel_proj,
                lr,
                cfg.momentum,
                cfg.weight_decay,
            );
        }

        let (mean_pos_dot, tangent_factor) = if stat_batches > 0 {
            (dot_sum / stat_batches as f64, tangent_sum / stat_batches as f64)
        } else {
            (f64::NAN, f64::NAN)
        };
        log.push(TrainLogRecord {
            epoch: epoch + 1,
            mean_loss: loss_sum / batches.len() as f64,
            mean_pos_dot,
            tangent_factor,
            lr,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainOutcome { model, log })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub hidden: usize,
    /// Softening temperature of the frozen teacher's softmax.
    pub temperature: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            hidden: 64,
            temperature: 1.0,
            augment: AugmentConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TeacherOutcome {
    pub teacher: TeacherNet,
    /// Top-1 accuracy on the un-augmented training set.
    pub train_accuracy: f64,
}

fn softmax_ce_grad(logits: &[f64], label: &[f64], temperature: f64) -> Result<(f64, Vec<f64>)> {
    let p = numerics::softmax_with_temperature(logits, temperature)?;
    let loss = -label
        .iter()
        .zip(&p)
        .filter(|(y, _)| **y > 0.0)
        .map(|(y, q)| y * q.max(f64::MIN_POSITIVE).ln())
        .sum::<f64>();
    let grad = p.iter().zip(label).map(|(q, y)| (q - y) / temperature).collect();
    Ok((loss, grad))
}

fn accuracy(net: &Mlp, xs: &[Vec<f64>], classes: &[usize]) -> Result<f64> {
    let mut correct = 0usize;
    for (x, &c) in xs.iter().zip(classes) {
        if argmax(&net.forward(x)?) == c {
            correct += 1;
        }
    }
    Ok(correct as f64 / xs.len().max(1) as f64)
}

/// Cross-entropy pretraining of the teacher classifier `D → hidden → C`.
pub fn train_teacher(ds: &Dataset, cfg: &TeacherConfig) -> Result<TeacherOutcome> {
    if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.momentum) || cfg.batch_size == 0 || !(cfg.temperature > 0.0) {
        return Err(TrainError::Config("invalid teacher optimizer settings".into()));
    }
    let (h, w, _) = ds.shape();
    cfg.augment.validate(h, w)?;
    let root = Rng::new(cfg.seed);
    let mut teacher = TeacherNet::new(ds.input_dim(), cfg.hidden, ds.classes(), &mut root.stream(INIT_STREAM))?;
    teacher.temperature = cfg.temperature;
    let mut velocity = vec![0.0; teacher.net.params().len()];
    for epoch in 0..cfg.epochs {
        let stream = epoch_stream(epoch);
        let batches = epoch_batches(ds.len(), cfg.batch_size, &mut root.stream(stream));
        for (b, idx) in batches.iter().enumerate() {
            let mut rng = root.stream(stream + 1 + b as u64);
            let mut grads = teacher.net.zero_grads();
            for &i in idx {
                let ex = ds.get(i);
                let x = augment(&ex.image, &cfg.augment, &mut rng)?;
                let trace = teacher.net.forward_traced(x.pixels())?;
                let (loss, g) = softmax_ce_grad(trace.output(), &ex.label, cfg.temperature)?;
                if !loss.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch: epoch + 1,
                        batch: b,
                        replay_seed: root.stream_seed(stream + 1 + b as u64),
                        last_record: None,
                    });
                }
                teacher.net.backward(&trace, &g, &mut grads)?;
            }
            grads.iter_mut().for_each(|g| *g /= idx.len() as f64);
            sgd_step(teacher.net.params_mut(), &grads, &mut velocity, cfg.lr, cfg.momentum, cfg.weight_decay);
        }
    }
    let xs: Vec<Vec<f64>> = ds.examples().iter().map(|e| e.image.pixels().to_vec()).collect();
    let classes: Vec<usize> = ds.examples().iter().map(LabeledExample::class).collect();
    let train_accuracy = accuracy(&teacher.net, &xs, &classes)?;
    Ok(TeacherOutcome {
        teacher,
        train_accuracy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 32,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub top1: f64,
    pub train_top1: f64,
    pub probe: LinearProbe,
}

/// Trains a linear classifier on frozen encoder features `h = f(x)` (no
/// augmentation, no mixing) and reports top-1 accuracy on `test`.
pub fn linear_eval(encoder: &Mlp, train: &Dataset, test: &Dataset, cfg: &ProbeConfig) -> Result<ProbeOutcome> {
    if train.classes() != test.classes() {
        return Err(TrainError::Config(format!(
            "train set has {} classes, test set {}",
            train.classes(),
            test.classes()
        )));
    }
    for ds in [train, test] {
        if ds.input_dim() != encoder.input_dim() {
            return Err(TrainError::Config(format!(
                "encoder expects inputs of size {}, dataset {:?} has {}",
                encoder.input_dim(),
                ds.name(),
                ds.input_dim()
            )));
        }
    }
    if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.momentum) || cfg.batch_size == 0 {
        return Err(TrainError::Config("invalid probe optimizer settings".into()));
    }
    let features = |ds: &Dataset| -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let xs = ds
            .examples()
            .iter()
            .map(|e| encoder.forward(e.image.pixels()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((xs, ds.examples().iter().map(LabeledExample::class).collect()))
    };
    let (train_x, train_y) = features(train)?;
    let (test_x, test_y) = features(test)?;

    let classes = train.classes();
    let mut probe = LinearProbe::zeros(encoder.output_dim(), classes)?;
    let mut velocity = vec![0.0; probe.net.params().len()];
    let root = Rng::new(cfg.seed);
    for epoch in 0..cfg.epochs {
        for idx in epoch_batches(train_x.len(), cfg.batch_size, &mut root.stream(epoch as u64)) {
            let mut grads = probe.net.zero_grads();
            for &i in &idx {
                let trace = probe.net.forward_traced(&train_x[i])?;
                let target = crate::data::one_hot(train_y[i], classes);
                let (loss, g) = softmax_ce_grad(trace.output(), &target, 1.0)?;
                if !loss.is_finite() {
                    return Err(TrainError::Diverged {
                        epoch: epoch + 1,
                        batch: 0,
                        replay_seed: root.stream_seed(epoch as u64),
                        last_record: None,
                    });
                }
                probe.net.backward(&trace, &g, &mut grads)?;
            }
            grads.iter_mut().for_each(|g| *g /= idx.len() as f64);
            sgd_step(probe.net.params_mut(), &grads, &mut velocity, cfg.lr, cfg.momentum, cfg.weight_decay);
        }
    }
    Ok(ProbeOutcome {
        top1: accuracy(&probe.net, &test_x, &test_y)?,
        train_top1: accuracy(&probe.net, &train_x, &train_y)?,
        probe,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SyntheticSpec};

    #[test]
    fn schedule_endpoints() {
        let (lr, e, w) = (0.5, 20, 4);
        assert_eq!(lr_at(lr, e, w, 0), 0.125);
        assert_eq!(lr_at(lr, e, w, w - 1), lr);
        assert_eq!(lr_at(lr, e, w, w), lr);
        let tail = lr_at(lr, e, w, e - 1);
        let expect = lr * 0.5 * (1.0 + (std::f64::consts::PI * 15.0 / 16.0).cos());
        assert!((tail - expect).abs() < 1e-15);
        assert!(tail < 0.01);
        assert_eq!(lr_at(lr, e, 0, 0), lr);
    }

    #[test]
    fn schedule_is_continuous_at_warmup_boundary() {
        for (e, w) in [(10, 2), (50, 2), (200, 10), (5, 5)] {
            let lr = 0.3;
            let cosine = lr * std::f64::consts::PI / (2 * (e - w).max(1)) as f64;
            let bound = (lr / w.max(1) as f64).max(cosine) + 1e-12;
            for k in 1..e {
                assert!((lr_at(lr, e, w, k) - lr_at(lr, e, w, k - 1)).abs() <= bound);
            }
        }
    }

    #[test]
    fn sgd_cases() {
        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.0, 0.0];
        sgd_step(&mut p, &[0.0, 0.0], &mut v, 0.1, 0.9, 0.0);
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![1.0, -2.0];
        let mut v = vec![0.0, 0.0];
        sgd_step(&mut p, &[0.5, 1.0], &mut v, 0.1, 0.0, 0.0);
        assert_eq!(p, vec![1.0 - 0.05, -2.0 - 0.1]);

        // f(p) = ½p², ∇f = p
        let mut p = vec![1.0];
        let mut v = vec![0.0];
        let g = p.clone();
        sgd_step(&mut p, &g, &mut v, 0.1, 0.9, 0.0);
        assert!((p[0] - 0.9).abs() < 1e-15);
        // second step carries momentum
        let g = p.clone();
        sgd_step(&mut p, &g, &mut v, 0.1, 0.9, 0.0);
        assert!((p[0] - (0.9 - 0.1 * (0.9 * 1.0 + 0.9))).abs() < 1e-15);
    }

    #[test]
    fn weight_decay_shrinks() {
        let mut p = vec![2.0];
        let mut v = vec![0.0];
        sgd_step(&mut p, &[0.0], &mut v, 0.5, 0.0, 0.1);
        assert!((p[0] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig { lr: 0.0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { warmup_epochs: 60, ..Default::default() },
            TrainConfig { loss: LossKind::SupCon, mix: MixKind::CutMix, ..Default::default() },
            TrainConfig { mix: MixKind::MixUp, batch_size: 1, ..Default::default() },
            TrainConfig { loss: LossKind::SupCon, alpha_kd: KdWeight::TeacherOnly, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err(), "{c:?}");
        }
    }

    #[test]
    fn objective_dispatch() {
        let c = TrainConfig::default();
        assert_eq!(c.objective(), Objective::GenScl);
        let c = TrainConfig { loss: LossKind::SupCon, ..Default::default() };
        assert_eq!(c.objective(), Objective::SupCon);
        let c = TrainConfig { alpha_kd: KdWeight::Weight(5.0), ..Default::default() };
        assert_eq!(c.objective(), Objective::KdGenScl(KdWeight::Weight(5.0)));
    }

    fn tiny() -> Dataset {
        let spec = SyntheticSpec {
            classes: 3,
            per_class: 8,
            ..Default::default()
        };
        generate_synthetic(&spec, &mut Rng::new(1)).unwrap()
    }

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 8,
            warmup_epochs: 0,
            hidden: 16,
            embed: 8,
            proj: 4,
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = tiny();
        let cfg = quick(0);
        let out = train_contrastive(&ds, &cfg, None).unwrap();
        assert_eq!(out.model, init_model(ds.input_dim(), &cfg).unwrap());
        assert!(out.log.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_logs_every_epoch() {
        let ds = tiny();
        let cfg = TrainConfig { mix: MixKind::CutMix, ..quick(3) };
        let a = train_contrastive(&ds, &cfg, None).unwrap();
        let b = train_contrastive(&ds, &cfg, None).unwrap();
        assert_eq!(a.model.checksum(), b.model.checksum());
        assert_eq!(metrics_csv(&a.log), metrics_csv(&b.log));
        assert_eq!(a.log.iter().map(|r| r.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
        assert_ne!(a.model, init_model(ds.input_dim(), &cfg).unwrap());
    }

    #[test]
    fn kd_training_keeps_teacher_frozen() {
        let ds = tiny();
        let teacher = train_teacher(&ds, &TeacherConfig { epochs: 1, hidden: 8, ..Default::default() })
            .unwrap()
            .teacher;
        let before = teacher.net.checksum();
        let t = Teacher::Network(teacher);
        let cfg = TrainConfig { alpha_kd: KdWeight::Weight(1.0), ..quick(2) };
        train_contrastive(&ds, &cfg, Some(&t)).unwrap();
        match &t {
            Teacher::Network(n) => assert_eq!(n.net.checksum(), before),
            Teacher::Oracle { .. } => unreachable!(),
        }
        assert!(train_contrastive(&ds, &cfg, None).is_err());
    }

    #[test]
    fn teacher_zero_epochs_is_initialization() {
        let ds = tiny();
        let cfg = TeacherConfig { epochs: 0, hidden: 8, ..Default::default() };
        let a = train_teacher(&ds, &cfg).unwrap().teacher;
        let b = TeacherNet::new(ds.input_dim(), 8, 3, &mut Rng::new(0).stream(INIT_STREAM)).unwrap();
        assert_eq!(a.net, b.net);
    }

    #[test]
    fn probe_fits_one_example_per_class() {
        let ds = tiny();
        let picks = (0..3).map(|c| ds.get(c * 8).clone()).collect();
        let one = Dataset::new("one", (8, 8, 1), 3, picks).unwrap();
        let enc = Mlp::xavier(&[64, 8, 4], &mut Rng::new(2)).unwrap();
        let out = linear_eval(&enc, &one, &one, &ProbeConfig::default()).unwrap();
        assert_eq!(out.top1, 1.0);
    }

    #[test]
    fn probe_class_mismatch_is_error() {
        let a = tiny();
        let spec = SyntheticSpec { classes: 4, per_class: 2, ..Default::default() };
        let b = generate_synthetic(&spec, &mut Rng::new(1)).unwrap();
        let enc = Mlp::xavier(&[64, 8, 4], &mut Rng::new(2)).unwrap();
        assert!(matches!(
            linear_eval(&enc, &a, &b, &ProbeConfig::default()),
            Err(TrainError::Config(_))
        ));
    }

    #[test]
    fn metrics_csv_format() {
        let r = TrainLogRecord {
            epoch: 1,
            mean_loss: 0.5,
            mean_pos_dot: 0.25,
            tangent_factor: 0.75,
            lr: 0.1,
            wall_clock_secs: 3.0,
        };
        assert_eq!(metrics_csv(&[r]), "epoch,loss,mean_pos_dot,tangent_factor,lr\n1,0.5,0.25,0.75,0.1\n");
    }
}
