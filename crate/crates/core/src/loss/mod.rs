//! Contrastive objectives over a multi-viewed batch of projected features.
//!
//! All three losses share one shape: for anchor `i` with contrasts
//! `A(i) = I \ {i}`,
//!
//! ```text
//! L_i = −c_i Σ_{j∈A(i)} s_ij · log P_ij,   P_ij = softmax_j(z_i·z_j / τ)
//! ```
//!
//! and differ only in the target weights `s_ij` and the normalizer `c_i`:
//!
//! | loss        | `s_ij`                                   | `c_i`       |
//! |-------------|------------------------------------------|-------------|
//! | SupCon      | `1[ỹ_j = ỹ_i]`                           | `1/|P(i)|`  |
//! | GenSCL      | `sim(ỹ_i, ỹ_j)`                          | `1/|A(i)|`  |
//! | KD-GenSCL   | `sim(ỹ_i, ỹ_j) + α·sim(p^t_i, p^t_j)`    | `1/|A(i)|`  |
//!
//! `sim` is cosine similarity. `log P_ij` is always computed as
//! `z_i·z_j/τ − logsumexp`, never by exponentiating first.
//!
//! Anchors with an empty positive set contribute 0 to SupCon.

pub mod gradcheck;

use crate::data::class_of;
use crate::numerics::{self, NumericsError};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LossError {
    #[error("label of view {0} is not one-hot; SupCon needs hard labels, use GenSCL")]
    NotOneHot(usize),
    #[error("a contrastive batch needs at least 2 views, got {0}")]
    TooFewViews(usize),
    #[error("view {0}: {1}")]
    BadView(usize, String),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("anchor index {0} out of range")]
    Anchor(usize),
    #[error("knowledge distillation weight is non-zero but no teacher predictions were given")]
    MissingTeacher,
    #[error("knowledge distillation weight must be finite and non-negative, got {0}")]
    KdWeight(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, LossError>;

const DIST_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-10;

fn check_distribution(v: &[f64]) -> std::result::Result<(), String> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err("entries must be finite and non-negative".into());
    }
    let s: f64 = v.iter().sum();
    if (s - 1.0).abs() > DIST_TOL {
        return Err(format!("entries sum to {s}"));
    }
    Ok(())
}

/// The `2N` projected views of one batch, with their labels and optional
/// teacher predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedBatch {
    w: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    labels: Vec<Vec<f64>>,
    teacher: Option<Vec<Vec<f64>>>,
    tau: f64,
}

impl ProjectedBatch {
    /// Builds a batch from pre-normalization projections `w`; `z` is derived.
    pub fn new(
        w: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        teacher: Option<Vec<Vec<f64>>>,
        tau: f64,
    ) -> Result<Self> {
        let z = w
            .iter()
            .enumerate()
            .map(|(i, wi)| numerics::l2_normalize(wi).map_err(|e| LossError::BadView(i, e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        Self::with_features(w, z, labels, teacher, tau)
    }

    /// Builds a batch whose `w` are already unit vectors (`w = z`).
    pub fn from_unit(z: Vec<Vec<f64>>, labels: Vec<Vec<f64>>, teacher: Option<Vec<Vec<f64>>>, tau: f64) -> Result<Self> {
        Self::with_features(z.clone(), z, labels, teacher, tau)
    }

    fn with_features(
        w: Vec<Vec<f64>>,
        z: Vec<Vec<f64>>,
        labels: Vec<Vec<f64>>,
        teacher: Option<Vec<Vec<f64>>>,
        tau: f64,
    ) -> Result<Self> {
        let n = z.len();
        if n < 2 {
            return Err(LossError::TooFewViews(n));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(LossError::Temperature(tau));
        }
        if labels.len() != n || w.len() != n {
            return Err(LossError::BadView(n, format!("{} w, {} z, {} labels", w.len(), n, labels.len())));
        }
        let p = z[0].len();
        let c = labels[0].len();
        for i in 0..n {
            if z[i].len() != p || w[i].len() != p {
                return Err(LossError::BadView(i, "feature dimension differs".into()));
            }
            numerics::ensure_finite(&w[i]).map_err(|e| LossError::BadView(i, e.to_string()))?;
            if (numerics::norm(&z[i]) - 1.0).abs() > UNIT_TOL {
                return Err(LossError::BadView(i, "z is not unit norm".into()));
            }
            if labels[i].len() != c {
                return Err(LossError::BadView(i, "label length differs".into()));
            }
            check_distribution(&labels[i]).map_err(|m| LossError::BadView(i, format!("label {m}")))?;
        }
        if let Some(t) = &teacher {
            if t.len() != n {
                return Err(LossError::BadView(t.len(), "teacher prediction count differs".into()));
            }
            for (i, ti) in t.iter().enumerate() {
                check_distribution(ti).map_err(|m| LossError::BadView(i, format!("teacher prediction {m}")))?;
            }
        }
        Ok(Self {
            w,
            z,
            labels,
            teacher,
            tau,
        })
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn w(&self) -> &[Vec<f64>] {
        &self.w
    }

    pub fn z(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn labels(&self) -> &[Vec<f64>] {
        &self.labels
    }

    pub fn teacher(&self) -> Option<&[Vec<f64>]> {
        self.teacher.as_deref()
    }

    /// Copy with `w_i` replaced (and `z_i` re-derived).
    pub fn with_w(&self, i: usize, w_i: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.z[i] = numerics::l2_normalize(&w_i).map_err(|e| LossError::BadView(i, e.to_string()))?;
        out.w[i] = w_i;
        Ok(out)
    }

    /// Copy with the views reordered: view `k` of the result is view
    /// `order[k]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let pick = |v: &Vec<Vec<f64>>| order.iter().map(|&k| v[k].clone()).collect();
        Self {
            w: pick(&self.w),
            z: pick(&self.z),
            labels: pick(&self.labels),
            teacher: self.teacher.as_ref().map(pick),
            tau: self.tau,
        }
    }

    fn anchor(&self, i: usize) -> Result<()> {
        if i >= self.len() {
            return Err(LossError::Anchor(i));
        }
        Ok(())
    }
}

/// Contrast indices `A(i)` in ascending order.
pub fn contrasts(i: usize, n: usize) -> impl Iterator<Item = usize> {
    (0..n).filter(move |&j| j != i)
}

/// `log P_ij` for `j ∈ A(i)`, in ascending `j`.
pub fn latent_log_softmax(pb: &ProjectedBatch, i: usize) -> Result<Vec<f64>> {
    pb.anchor(i)?;
    let zi = &pb.z[i];
    let logits: Vec<f64> = contrasts(i, pb.len())
        .map(|j| numerics::dot(zi, &pb.z[j]) / pb.tau)
        .collect();
    let lse = numerics::log_sum_exp(&logits);
    Ok(logits.into_iter().map(|u| u - lse).collect())
}

/// Row `P_ij`, `j ∈ A(i)`, of the latent similarity space `Z(i)`.
pub fn latent_softmax(pb: &ProjectedBatch, i: usize) -> Result<Vec<f64>> {
    Ok(latent_log_softmax(pb, i)?.into_iter().map(f64::exp).collect())
}

/// Cosine similarities `sim(v_i, v_j)` for `j ∈ A(i)`, one row per anchor.
pub fn similarity_rows(vs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = vs.len();
    (0..n)
        .map(|i| {
            contrasts(i, n)
                .map(|j| numerics::cosine_sim(&vs[i], &vs[j]).map_err(LossError::from))
                .collect()
        })
        .collect()
}

/// Relative weight of the teacher term in KD-GenSCL.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KdWeight {
    /// `α_kd` (finite, ≥ 0).
    Weight(f64),
    /// The `α_kd = ∞` limit: only the teacher similarity term is kept.
    TeacherOnly,
}

impl Default for KdWeight {
    fn default() -> Self {
        KdWeight::Weight(0.0)
    }
}

impl KdWeight {
    pub fn needs_teacher(&self) -> bool {
        !matches!(self, KdWeight::Weight(a) if *a == 0.0)
    }
}

impl fmt::Display for KdWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KdWeight::Weight(a) => write!(f, "{a}"),
            KdWeight::TeacherOnly => f.write_str("teacher-only"),
        }
    }
}

impl FromStr for KdWeight {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "teacher-only" || s == "inf" {
            return Ok(KdWeight::TeacherOnly);
        }
        let a: f64 = s
            .parse()
            .map_err(|_| format!("expected a non-negative number or \"teacher-only\", got {s:?}"))?;
        if !(a >= 0.0) || !a.is_finite() {
            return Err(format!("alpha-kd must be finite and non-negative, got {s}"));
        }
        Ok(KdWeight::Weight(a))
    }
}

/// Which member of the loss family to evaluate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    SupCon,
    GenScl,
    KdGenScl(KdWeight),
}

/// Full evaluation of one loss on one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub per_anchor: Vec<f64>,
    /// `Y(i)`: label similarities, row `i` over `j ∈ A(i)`.
    pub label_sim: Vec<Vec<f64>>,
    /// `P^t(i)`: teacher prediction similarities, when used.
    pub teacher_sim: Option<Vec<Vec<f64>>>,
    /// `Z(i)`: latent softmax rows.
    pub latent: Vec<Vec<f64>>,
    /// Mean `z_i·z_j` over pairs with label similarity above 0.5, if any.
    pub mean_pos_dot: Option<f64>,
}

/// Target weights `s_ij` (rows over `A(i)`) and normalizers `c_i`.
struct Targets {
    weights: Vec<Vec<f64>>,
    norms: Vec<f64>,
}

fn build_targets(
    pb: &ProjectedBatch,
    objective: Objective,
) -> Result<(Targets, Vec<Vec<f64>>, Option<Vec<Vec<f64>>>)> {
    let n = pb.len();
    let label_sim = similarity_rows(&pb.labels)?;
    let inv_a = 1.0 / (n - 1) as f64;
    match objective {
        Objective::SupCon => {
            let classes = pb
                .labels
                .iter()
                .enumerate()
                .map(|(i, y)| class_of(y).ok_or(LossError::NotOneHot(i)))
                .collect::<Result<Vec<_>>>()?;
            let mut weights = Vec::with_capacity(n);
            let mut norms = Vec::with_capacity(n);
            for i in 0..n {
                let row: Vec<f64> = contrasts(i, n)
                    .map(|j| if classes[j] == classes[i] { 1.0 } else { 0.0 })
                    .collect();
                let positives = row.iter().filter(|v| **v == 1.0).count();
                norms.push(if positives == 0 { 0.0 } else { 1.0 / positives as f64 });
                weights.push(row);
            }
            Ok((Targets { weights, norms }, label_sim, None))
        }
        Objective::GenScl => Ok((
            Targets {
                weights: label_sim.clone(),
                norms: vec![inv_a; n],
            },
            label_sim,
            None,
        )),
        Objective::KdGenScl(kd) => {
            if let KdWeight::Weight(a) = kd {
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(LossError::KdWeight(a));
                }
            }
            let teacher_sim = match pb.teacher() {
                Some(t) => Some(similarity_rows(t)?),
                None if kd.needs_teacher() => return Err(LossError::MissingTeacher),
                None => None,
            };
            let weights = match (kd, &teacher_sim) {
                (KdWeight::TeacherOnly, Some(ts)) => ts.clone(),
                (KdWeight::Weight(a), Some(ts)) => label_sim
                    .iter()
                    .zip(ts)
                    .map(|(ly, lt)| ly.iter().zip(lt).map(|(y, t)| y + a * t).collect())
                    .collect(),
                (KdWeight::Weight(_), None) => label_sim.clone(),
                (KdWeight::TeacherOnly, None) => unreachable!("checked above"),
            };
            Ok((
                Targets {
                    weights,
                    norms: vec![inv_a; n],
                },
                label_sim,
                teacher_sim,
            ))
        }
    }
}

fn log_softmax_rows(pb: &ProjectedBatch) -> Vec<Vec<f64>> {
    (0..pb.len())
        .map(|i| latent_log_softmax(pb, i).expect("anchor in range"))
        .collect()
}

fn assemble(pb: &ProjectedBatch, objective: Objective) -> Result<(LossBreakdown, Targets, Vec<Vec<f64>>)> {
    let (targets, label_sim, teacher_sim) = build_targets(pb, objective)?;
    let log_p = log_softmax_rows(pb);
    let per_anchor: Vec<f64> = (0..pb.len())
        .map(|i| {
            if targets.norms[i] == 0.0 {
                return 0.0;
            }
            let acc: f64 = targets.weights[i]
                .iter()
                .zip(&log_p[i])
                .map(|(s, lp)| s * lp)
                .sum();
            0.0 - targets.norms[i] * acc
        })
        .collect();
    // fixed ascending-anchor reduction order
    let total = per_anchor.iter().sum();
    let latent = log_p
        .iter()
        .map(|row| row.iter().map(|v| v.exp()).collect())
        .collect();
    let mean_pos_dot = pair_stats(pb, &label_sim, DEFAULT_POSITIVE_THRESHOLD).positive.map(|p| p.mean_dot);
    Ok((
        LossBreakdown {
            total,
            per_anchor,
            label_sim,
            teacher_sim,
            latent,
            mean_pos_dot,
        },
        targets,
        log_p,
    ))
}

/// SupCon (`L^sup_out`). Every label must be one-hot.
pub fn supcon_loss(pb: &ProjectedBatch) -> Result<LossBreakdown> {
    Ok(assemble(pb, Objective::SupCon)?.0)
}

/// Generalized supervised contrastive loss: cross-entropy between label
/// similarity `Y(i)` and latent similarity `Z(i)`, scaled by `1/|A(i)|`.
pub fn genscl_loss(pb: &ProjectedBatch) -> Result<LossBreakdown> {
    Ok(assemble(pb, Objective::GenScl)?.0)
}

/// GenSCL plus `α_kd` times the same cross-entropy against teacher
/// prediction similarity `P^t(i)`.
pub fn kd_genscl_loss(pb: &ProjectedBatch, alpha_kd: KdWeight) -> Result<LossBreakdown> {
    Ok(assemble(pb, Objective::KdGenScl(alpha_kd))?.0)
}

pub fn loss(pb: &ProjectedBatch, objective: Objective) -> Result<LossBreakdown> {
    Ok(assemble(pb, objective)?.0)
}

/// Loss and `∂L/∂z_ℓ` for every view, through every anchor's term (each
/// `z_ℓ` appears as anchor in `L_ℓ` and as contrast in every other `L_i`).
pub fn loss_and_grad_z(pb: &ProjectedBatch, objective: Objective) -> Result<(LossBreakdown, Vec<Vec<f64>>)> {
    let (breakdown, targets, _) = assemble(pb, objective)?;
    let n = pb.len();
    let p = pb.z[0].len();
    let mut grads = vec![vec![0.0; p]; n];
    for i in 0..n {
        let c = targets.norms[i];
        if c == 0.0 {
            continue;
        }
        let row = &targets.weights[i];
        let probs = &breakdown.latent[i];
        let mass: f64 = row.iter().sum();
        for (k, j) in contrasts(i, n).enumerate() {
            // ∂L_i/∂(z_i·z_j/τ)
            let g = -c * (row[k] - mass * probs[k]) / pb.tau;
            if g == 0.0 {
                continue;
            }
            for d in 0..p {
                grads[i][d] += g * pb.z[j][d];
                grads[j][d] += g * pb.z[i][d];
            }
        }
    }
    Ok((breakdown, grads))
}

/// `∂L^gen_i/∂w_i` holding every other view fixed, evaluated term by term:
///
/// ```text
/// 1/(τ‖w_i‖) Σ_{j∈A(i)} (z_j − (z_i·z_j) z_i) · [ (Σ_a sim(ỹ_i,ỹ_a)/|A(i)|)·P_ij − sim(ỹ_i,ỹ_j)/|A(i)| ]
/// ```
pub fn anchor_gradient_analytic(pb: &ProjectedBatch, i: usize) -> Result<Vec<f64>> {
    pb.anchor(i)?;
    let n = pb.len();
    let norm_w = numerics::norm(&pb.w[i]);
    if norm_w == 0.0 {
        return Err(LossError::BadView(i, "w has zero norm".into()));
    }
    let card_a = (n - 1) as f64;
    let probs = latent_softmax(pb, i)?;
    let sims: Vec<f64> = contrasts(i, n)
        .map(|j| numerics::cosine_sim(&pb.labels[i], &pb.labels[j]))
        .collect::<std::result::Result<_, _>>()?;
    let sim_mass: f64 = sims.iter().sum();
    let zi = &pb.z[i];
    let mut grad = vec![0.0; zi.len()];
    for (k, j) in contrasts(i, n).enumerate() {
        let zj = &pb.z[j];
        let cos = numerics::dot(zi, zj);
        let coeff = (sim_mass / card_a) * probs[k] - sims[k] / card_a;
        for d in 0..grad.len() {
            grad[d] += (zj[d] - cos * zi[d]) * coeff;
        }
    }
    let scale = 1.0 / (pb.tau * norm_w);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

pub const DEFAULT_POSITIVE_THRESHOLD: f64 = 0.5;

/// Summary of `z_i·z_j` over a set of unordered pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub count: usize,
    pub mean_dot: f64,
    pub std_dot: f64,
    /// Mean of `√(1 − (z_i·z_j)²)`, the tangent-vector magnitude that scales
    /// each pair's gradient contribution.
    pub mean_tangent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContributionStats {
    /// Pairs with label similarity above the threshold; `None` if no pair
    /// qualifies.
    pub positive: Option<PairStats>,
    pub all: PairStats,
}

fn summarize(dots: &[f64]) -> Option<PairStats> {
    if dots.is_empty() {
        return None;
    }
    let n = dots.len() as f64;
    let mean = dots.iter().sum::<f64>() / n;
    let var = dots.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    let tangent = dots.iter().map(|d| (1.0 - d * d).max(0.0).sqrt()).sum::<f64>() / n;
    Some(PairStats {
        count: dots.len(),
        mean_dot: mean,
        std_dot: var.sqrt(),
        mean_tangent: tangent,
    })
}

fn pair_stats(pb: &ProjectedBatch, label_sim: &[Vec<f64>], threshold: f64) -> ContributionStats {
    let n = pb.len();
    let mut all = Vec::with_capacity(n * (n - 1) / 2);
    let mut pos = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = numerics::dot(&pb.z[i], &pb.z[j]).clamp(-1.0, 1.0);
            all.push(d);
            // row i stores contrasts j ≠ i in ascending order, so j > i sits at j − 1
            if label_sim[i][j - 1] > threshold {
                pos.push(d);
            }
        }
    }
    ContributionStats {
        positive: summarize(&pos),
        all: summarize(&all).expect("at least one pair"),
    }
}

/// Tracks how close feature pairs are to the easy regime `z_i·z_j = ±1`.
pub fn gradient_contribution_stats(pb: &ProjectedBatch, threshold: f64) -> Result<ContributionStats> {
    let label_sim = similarity_rows(&pb.labels)?;
    Ok(pair_stats(pb, &label_sim, threshold))
}
