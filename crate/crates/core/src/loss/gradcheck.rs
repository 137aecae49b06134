//! Randomized verification of the analytic anchor gradient and of the
//! full-batch feature gradient against central finite differences.

use super::{anchor_gradient_analytic, genscl_loss, loss, loss_and_grad_z, KdWeight, Objective, ProjectedBatch, Result};
use crate::model::normalize_backward;
use crate::numerics::{self, Rng};

/// Deliberate corruption of the analytic side, to prove the check can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mutation {
    #[default]
    None,
    SignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub trials: usize,
    pub seed: u64,
    pub views: Vec<usize>,
    pub dims: Vec<usize>,
    pub taus: Vec<f64>,
    pub classes: usize,
    /// Central-difference step for the per-anchor check.
    pub step: f64,
    /// Step for the whole-batch check. Its loss sums `2N` anchor terms, so
    /// roundoff at a given step is larger.
    pub batch_step: f64,
    pub tolerance: f64,
    pub mutation: Mutation,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            views: vec![4, 6, 8],
            dims: vec![3, 8, 16],
            taus: vec![0.07, 0.5, 1.0],
            classes: 4,
            step: 1e-6,
            batch_step: 1e-5,
            tolerance: 1e-5,
            mutation: Mutation::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub trials: usize,
    /// Worst relative error of the per-anchor analytic gradient.
    pub max_rel_err_anchor: f64,
    /// Worst relative error of the full-batch gradient (GenSCL and KD).
    pub max_rel_err_batch: f64,
    /// Seed of the instance with the worst error.
    pub worst_seed: u64,
    /// Seeds of instances that exceeded the tolerance.
    pub failures: Vec<u64>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn max_rel_err(&self) -> f64 {
        self.max_rel_err_anchor.max(self.max_rel_err_batch)
    }
}

/// Gradients smaller than this are compared in absolute terms. Central
/// differences at `h = 1e-6` carry roughly `1e-10` of roundoff, which would
/// otherwise dominate the ratio near stationary points.
pub const NORM_FLOOR: f64 = 1e-4;

/// `‖a − b‖ / max(‖a‖, ‖b‖, NORM_FLOOR)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    numerics::norm(&diff) / numerics::norm(a).max(numerics::norm(b)).max(NORM_FLOOR)
}

/// A random batch whose soft labels come from MixUp-style blends of two
/// random one-hot labels, with random teacher predictions.
pub fn random_instance(seed: u64, cfg: &GradcheckConfig) -> ProjectedBatch {
    let mut rng = Rng::new(seed);
    let n = cfg.views[rng.below(cfg.views.len())];
    let p = cfg.dims[rng.below(cfg.dims.len())];
    let tau = cfg.taus[rng.below(cfg.taus.len())];
    let c = cfg.classes;
    let w = (0..n)
        .map(|_| (0..p).map(|_| rng.normal() * (0.5 + rng.uniform())).collect())
        .collect();
    let labels = (0..n)
        .map(|_| {
            let (a, b) = (rng.below(c), rng.below(c));
            let lambda = rng.uniform();
            let mut y = vec![0.0; c];
            y[a] += lambda;
            y[b] += 1.0 - lambda;
            y
        })
        .collect();
    let teacher = (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..c).map(|_| 2.0 * rng.normal()).collect();
            numerics::softmax_with_temperature(&logits, 1.0).expect("finite logits")
        })
        .collect();
    ProjectedBatch::new(w, labels, Some(teacher), tau).expect("valid random instance")
}

fn central_difference(w: &[f64], step: f64, mut f: impl FnMut(Vec<f64>) -> f64) -> Vec<f64> {
    (0..w.len())
        .map(|d| {
            let mut plus = w.to_vec();
            plus[d] += step;
            let mut minus = w.to_vec();
            minus[d] -= step;
            (f(plus) - f(minus)) / (2.0 * step)
        })
        .collect()
}

/// Worst per-anchor relative error on one instance.
pub fn check_anchor_gradient(pb: &ProjectedBatch, step: f64, mutation: Mutation) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..pb.len() {
        let mut analytic = anchor_gradient_analytic(pb, i)?;
        if mutation == Mutation::SignFlip {
            analytic.iter_mut().for_each(|g| *g = -*g);
        }
        let fd = central_difference(&pb.w()[i], step, |wi| {
            genscl_loss(&pb.with_w(i, wi).expect("perturbed w stays non-zero"))
                .expect("valid batch")
                .per_anchor[i]
        });
        worst = worst.max(relative_error(&analytic, &fd));
    }
    Ok(worst)
}

/// Worst relative error of `∂L/∂w_ℓ` from the batch kernel, over every view.
pub fn check_batch_gradient(pb: &ProjectedBatch, objective: Objective, step: f64, mutation: Mutation) -> Result<f64> {
    let (_, grad_z) = loss_and_grad_z(pb, objective)?;
    let mut worst: f64 = 0.0;
    for l in 0..pb.len() {
        let mut analytic = normalize_backward(&pb.w()[l], &pb.z()[l], &grad_z[l]);
        if mutation == Mutation::SignFlip {
            analytic.iter_mut().for_each(|g| *g = -*g);
        }
        let fd = central_difference(&pb.w()[l], step, |wl| {
            loss(&pb.with_w(l, wl).expect("perturbed w stays non-zero"), objective)
                .expect("valid batch")
                .total
        });
        worst = worst.max(relative_error(&analytic, &fd));
    }
    Ok(worst)
}

pub fn run(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let base = Rng::new(cfg.seed);
    let mut report = GradcheckReport {
        trials: cfg.trials,
        max_rel_err_anchor: 0.0,
        max_rel_err_batch: 0.0,
        worst_seed: base.stream_seed(0),
        failures: Vec::new(),
    };
    let mut worst = f64::NEG_INFINITY;
    for t in 0..cfg.trials {
        let seed = base.stream_seed(t as u64);
        let pb = random_instance(seed, cfg);
        let anchor = check_anchor_gradient(&pb, cfg.step, cfg.mutation)?;
        let batch = check_batch_gradient(&pb, Objective::GenScl, cfg.batch_step, cfg.mutation)?.max(
            check_batch_gradient(&pb, Objective::KdGenScl(KdWeight::Weight(1.0)), cfg.batch_step, cfg.mutation)?,
        );
        report.max_rel_err_anchor = report.max_rel_err_anchor.max(anchor);
        report.max_rel_err_batch = report.max_rel_err_batch.max(batch);
        let e = anchor.max(batch);
        if e > worst {
            worst = e;
            report.worst_seed = seed;
        }
        if !(e < cfg.tolerance) {
            report.failures.push(seed);
        }
    }
    Ok(report)
}
