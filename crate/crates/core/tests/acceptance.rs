//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! The reference losses and finite differences below are written from
//! scratch with plain loops and direct exponentials; they share no code with
//! the library kernels.

use genscl::data::{generate_synthetic, save_dataset, write_dataset, read_dataset, Dataset, Image, SyntheticSpec};
use genscl::loss::{anchor_gradient_analytic, genscl_loss, kd_genscl_loss, supcon_loss, KdWeight, ProjectedBatch};
use genscl::mixing::{build_multiview_batch, cutmix, mixup, LambdaSampler, MixKind};
use genscl::model::{read_checkpoint, Checkpoint};
use genscl::numerics::Rng;
use genscl::trainer::{init_model, linear_eval, metrics_csv, train_contrastive, ProbeConfig, TrainConfig, TrainLogRecord};
use std::time::{Duration, Instant};

// ---------------------------------------------------------------- tolerances

const GRAD_REL_TOL: f64 = 1e-5;
const GRAD_TIME_LIMIT: Duration = Duration::from_secs(10);
const ONE_HOT_TOL: f64 = 1e-12;
const VANISH_TOL: f64 = 1e-8;
const ORACLE_TOL: f64 = 1e-10;
const KS_LIMIT: f64 = 0.01;
/// Fixed from the pilot run, which reached top-1 = 1.0 on this data.
const E2E_TOP1_GATE: f64 = 0.95;
const E2E_BASELINE_MARGIN: f64 = 0.3;
const E2E_TIME_LIMIT: Duration = Duration::from_secs(120);
const TREND_SEEDS: [u64; 5] = [11, 12, 13, 14, 15];
const TREND_MIN_WINS: usize = 4;

// ---------------------------------------------------------------- oracles

fn o_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn o_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        s += a[k] * b[k];
    }
    s
}

fn o_cos(a: &[f64], b: &[f64]) -> f64 {
    o_dot(a, b) / (o_norm(a) * o_norm(b))
}

fn o_unit(v: &[f64]) -> Vec<f64> {
    let n = o_norm(v);
    v.iter().map(|x| x / n).collect()
}

/// `log P_ij` by direct summation of exponentials.
fn o_log_p(z: &[Vec<f64>], tau: f64, i: usize, j: usize) -> f64 {
    let mut denom = 0.0;
    for a in 0..z.len() {
        if a != i {
            denom += (o_dot(&z[i], &z[a]) / tau).exp();
        }
    }
    ((o_dot(&z[i], &z[j]) / tau).exp() / denom).ln()
}

fn o_argmax(y: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..y.len() {
        if y[k] > y[best] {
            best = k;
        }
    }
    best
}

fn o_supcon(w: &[Vec<f64>], y: &[Vec<f64>], tau: f64) -> Vec<f64> {
    let z: Vec<Vec<f64>> = w.iter().map(|v| o_unit(v)).collect();
    let n = z.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut positives = 0usize;
        let mut acc = 0.0;
        for p in 0..n {
            if p != i && o_argmax(&y[p]) == o_argmax(&y[i]) {
                positives += 1;
                acc += o_log_p(&z, tau, i, p);
            }
        }
        if positives > 0 {
            out[i] = -acc / positives as f64;
        }
    }
    out
}

/// Per-anchor loss with target weight `y_sim + alpha·t_sim`, or `t_sim`
/// alone when `alpha` is `None` and a teacher is given.
fn o_kd(w: &[Vec<f64>], y: &[Vec<f64>], t: Option<&[Vec<f64>]>, alpha: Option<f64>, tau: f64) -> Vec<f64> {
    let z: Vec<Vec<f64>> = w.iter().map(|v| o_unit(v)).collect();
    let n = z.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            if j == i {
                continue;
            }
            let weight = match (t, alpha) {
                (Some(t), Some(a)) => o_cos(&y[i], &y[j]) + a * o_cos(&t[i], &t[j]),
                (Some(t), None) => o_cos(&t[i], &t[j]),
                (None, _) => o_cos(&y[i], &y[j]),
            };
            acc += weight * o_log_p(&z, tau, i, j);
        }
        out[i] = -acc / (n - 1) as f64;
    }
    out
}

fn o_genscl(w: &[Vec<f64>], y: &[Vec<f64>], tau: f64) -> Vec<f64> {
    o_kd(w, y, None, None, tau)
}

fn fd_anchor(w: &[Vec<f64>], y: &[Vec<f64>], tau: f64, i: usize, h: f64) -> Vec<f64> {
    (0..w[i].len())
        .map(|d| {
            let mut plus = w.to_vec();
            plus[i][d] += h;
            let mut minus = w.to_vec();
            minus[i][d] -= h;
            (o_genscl(&plus, y, tau)[i] - o_genscl(&minus, y, tau)[i]) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    o_norm(&diff) / o_norm(a).max(o_norm(b)).max(1e-12)
}

// ---------------------------------------------------------------- instances

struct Instance {
    w: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    t: Vec<Vec<f64>>,
    tau: f64,
}

fn pick<T: Copy>(rng: &mut Rng, xs: &[T]) -> T {
    xs[rng.below(xs.len())]
}

fn one_hot(c: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[c] = 1.0;
    v
}

fn random_dist(rng: &mut Rng, classes: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..classes).map(|_| (2.0 * rng.normal()).exp()).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

fn instance(rng: &mut Rng, n: usize, p: usize, tau: f64, classes: usize, soft: bool) -> Instance {
    let w = (0..n).map(|_| (0..p).map(|_| rng.normal()).collect()).collect();
    let y = (0..n)
        .map(|_| {
            let a = one_hot(rng.below(classes), classes);
            if !soft {
                return a;
            }
            let b = one_hot(rng.below(classes), classes);
            let lam = rng.uniform();
            a.iter().zip(&b).map(|(u, v)| lam * u + (1.0 - lam) * v).collect()
        })
        .collect();
    let t = (0..n).map(|_| random_dist(rng, classes)).collect();
    Instance { w, y, t, tau }
}

impl Instance {
    fn batch(&self, with_teacher: bool) -> ProjectedBatch {
        let t = with_teacher.then(|| self.t.clone());
        ProjectedBatch::new(self.w.clone(), self.y.clone(), t, self.tau).expect("valid instance")
    }
}

// ---------------------------------------------------------------- criteria

struct Outcome {
    pass: bool,
    detail: String,
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = Rng::new(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = pick(&mut rng, &[4, 6, 8]);
        let p = pick(&mut rng, &[3, 8, 16]);
        let tau = pick(&mut rng, &[0.07, 0.5, 1.0]);
        let inst = instance(&mut rng, n, p, tau, 4, true);
        let pb = inst.batch(false);
        for i in 0..n {
            let analytic = anchor_gradient_analytic(&pb, i).expect("anchor gradient");
            let fd = fd_anchor(&inst.w, &inst.y, tau, i, 1e-6);
            worst = worst.max(rel_err(&analytic, &fd));
        }
    }
    let elapsed = started.elapsed();
    Outcome {
        pass: worst < GRAD_REL_TOL && elapsed < GRAD_TIME_LIMIT,
        detail: format!("max rel err {worst:.3e} (< {GRAD_REL_TOL:e}), {:.2}s", elapsed.as_secs_f64()),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = Rng::new(202);
    let mut worst_a: f64 = 0.0;
    for _ in 0..1000 {
        let n = 2 * (1 + rng.below(6));
        let p = 2 + rng.below(10);
        let tau = pick(&mut rng, &[0.1, 0.5, 1.0]);
        let inst = instance(&mut rng, n, p, tau, 3, false);
        let pb = inst.batch(false);
        let sup = supcon_loss(&pb).expect("supcon");
        let gen = genscl_loss(&pb).expect("genscl");
        for i in 0..n {
            let c = o_argmax(&inst.y[i]);
            let positives = (0..n).filter(|&p| p != i && o_argmax(&inst.y[p]) == c).count();
            let expect = positives as f64 / (n - 1) as f64 * sup.per_anchor[i];
            worst_a = worst_a.max((gen.per_anchor[i] - expect).abs() / expect.abs().max(1.0));
        }
    }
    let mut bitwise = true;
    for _ in 0..200 {
        let n = 2 * (1 + rng.below(4));
        let inst = instance(&mut rng, n, 5, 0.2, 4, true);
        let pb = inst.batch(true);
        let kd = kd_genscl_loss(&pb, KdWeight::Weight(0.0)).expect("kd");
        let gen = genscl_loss(&pb).expect("genscl");
        bitwise &= kd.total.to_bits() == gen.total.to_bits()
            && kd.per_anchor.iter().zip(&gen.per_anchor).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    let mut two_zero = true;
    for _ in 0..100 {
        let tau = pick(&mut rng, &[0.07, 0.5]);
        let inst = instance(&mut rng, 2, 6, tau, 3, false);
        let pb = inst.batch(true);
        two_zero &= supcon_loss(&pb).unwrap().total == 0.0
            && genscl_loss(&pb).unwrap().total == 0.0
            && kd_genscl_loss(&pb, KdWeight::Weight(2.0)).unwrap().total == 0.0
            && kd_genscl_loss(&pb, KdWeight::TeacherOnly).unwrap().total == 0.0;
    }
    Outcome {
        pass: worst_a <= ONE_HOT_TOL && bitwise && two_zero,
        detail: format!("(a) max dev {worst_a:.2e}; (b) bit-identical {bitwise}; (c) 2N=2 zero {two_zero}"),
    }
}

fn criterion_3() -> Outcome {
    let mut rng = Rng::new(303);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = 2 * (1 + rng.below(4));
        let p = 2 + rng.below(14);
        let dir: Vec<f64> = (0..p).map(|_| rng.normal()).collect();
        let w: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let s = (0.2 + 3.0 * rng.uniform()) * if rng.uniform() < 0.3 { -1.0 } else { 1.0 };
                dir.iter().map(|d| s * d).collect()
            })
            .collect();
        let y: Vec<Vec<f64>> = (0..n).map(|_| random_dist(&mut rng, 3)).collect();
        let pb = ProjectedBatch::new(w, y, None, pick(&mut rng, &[0.07, 0.5, 1.0])).unwrap();
        for i in 0..n {
            worst = worst.max(o_norm(&anchor_gradient_analytic(&pb, i).unwrap()));
        }
    }
    Outcome {
        pass: worst < VANISH_TOL,
        detail: format!("max ‖∂L_i/∂w_i‖ {worst:.2e} (< {VANISH_TOL:e})"),
    }
}

fn criterion_4() -> Outcome {
    let mut rng = Rng::new(404);
    let mut worst: f64 = 0.0;
    for b in 0..1000 {
        let n = 2 * (1 + rng.below(4));
        let tau = 0.5 + 0.5 * rng.uniform();
        let soft = b % 2 == 1;
        let p = 2 + rng.below(15);
        let inst = instance(&mut rng, n, p, tau, 4, soft);
        let pb = inst.batch(true);
        let alpha = 10.0 * rng.uniform();
        let mut pairs = vec![
            (genscl_loss(&pb).unwrap().per_anchor, o_genscl(&inst.w, &inst.y, tau)),
            (
                kd_genscl_loss(&pb, KdWeight::Weight(alpha)).unwrap().per_anchor,
                o_kd(&inst.w, &inst.y, Some(&inst.t), Some(alpha), tau),
            ),
            (
                kd_genscl_loss(&pb, KdWeight::TeacherOnly).unwrap().per_anchor,
                o_kd(&inst.w, &inst.y, Some(&inst.t), None, tau),
            ),
        ];
        if !soft {
            pairs.push((supcon_loss(&pb).unwrap().per_anchor, o_supcon(&inst.w, &inst.y, tau)));
        }
        for (lib, oracle) in pairs {
            let lib_total: f64 = lib.iter().sum();
            let oracle_total: f64 = oracle.iter().sum();
            worst = worst.max((lib_total - oracle_total).abs());
            for (a, o) in lib.iter().zip(&oracle) {
                worst = worst.max((a - o).abs());
            }
        }
    }
    Outcome {
        pass: worst <= ORACLE_TOL,
        detail: format!("max |lib − oracle| {worst:.2e} over SupCon/GenSCL/KD (≤ {ORACLE_TOL:e})"),
    }
}

fn ks_uniform(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (k, x) in xs.iter().enumerate() {
        d = d.max(((k + 1) as f64 / n - x).abs()).max((x - k as f64 / n).abs());
    }
    d
}

fn criterion_5() -> Outcome {
    let mut rng = Rng::new(505);
    let mut area_ok = true;
    for _ in 0..10_000 {
        let (h, w) = (2 + rng.below(15), 2 + rng.below(15));
        let a = Image::zeros(h, w, 1);
        let b = Image::new(h, w, 1, vec![1.0; h * w]).unwrap();
        let (ya, yb) = (one_hot(0, 2), one_hot(1, 2));
        let m = cutmix((&a, &ya), (&b, &yb), rng.uniform(), &mut rng).unwrap();
        let pasted = m.pasted_area.expect("cutmix reports pasted area");
        let counted = m.image.pixels().iter().filter(|&&p| p == 1.0).count();
        let from_lambda = (1.0 - m.lambda) * (h * w) as f64;
        area_ok &= pasted == counted
            && (from_lambda - pasted as f64).abs() < 1e-9
            && m.soft_label == vec![m.lambda, 1.0 - m.lambda];
    }

    let mut mix_ok = true;
    for _ in 0..1000 {
        let (h, w) = (1 + rng.below(8), 1 + rng.below(8));
        let a = Image::new(h, w, 1, (0..h * w).map(|_| rng.uniform()).collect()).unwrap();
        let b = Image::new(h, w, 1, (0..h * w).map(|_| rng.uniform()).collect()).unwrap();
        let (ya, yb) = (random_dist(&mut rng, 3), random_dist(&mut rng, 3));
        let one = mixup((&a, &ya), (&b, &yb), 1.0).unwrap();
        let zero = mixup((&a, &ya), (&b, &yb), 0.0).unwrap();
        // dyadic weights make 1 − (1 − λ) = λ exact
        let lam = rng.below(1025) as f64 / 1024.0;
        let ab = mixup((&a, &ya), (&b, &yb), lam).unwrap();
        let ba = mixup((&b, &yb), (&a, &ya), 1.0 - lam).unwrap();
        mix_ok &= one.image == a && one.soft_label == ya && zero.image == b && zero.soft_label == yb;
        mix_ok &= ab.image == ba.image && ab.soft_label == ba.soft_label;
    }

    let sampler = LambdaSampler::new(1.0).unwrap();
    let mut r = Rng::new(5050);
    let ks = ks_uniform((0..100_000).map(|_| sampler.sample(&mut r)).collect());

    Outcome {
        pass: area_ok && mix_ok && ks < KS_LIMIT,
        detail: format!("cutmix area identity {area_ok}; mixup identities {mix_ok}; Beta(1,1) KS {ks:.4} (< {KS_LIMIT})"),
    }
}

fn separable(seed: u64) -> (Dataset, Dataset) {
    let spec = SyntheticSpec {
        classes: 3,
        per_class: 200,
        height: 8,
        width: 8,
        channels: 1,
        noise_std: 0.05,
    };
    let train = generate_synthetic(&spec, &mut Rng::new(seed)).unwrap();
    let test = generate_synthetic(&SyntheticSpec { per_class: 100, ..spec }, &mut Rng::new(seed ^ 0xA5A5)).unwrap();
    (train, test)
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let (train, test) = separable(1);
    let cfg = TrainConfig::default();
    let probe = ProbeConfig::default();
    let untrained = init_model(train.input_dim(), &cfg).unwrap();
    let baseline = linear_eval(&untrained.encoder, &train, &test, &probe).unwrap().top1;
    let out = train_contrastive(&train, &cfg, None).unwrap();
    let before = out.model.encoder.checksum();
    let top1 = linear_eval(&out.model.encoder, &train, &test, &probe).unwrap().top1;
    let frozen = out.model.encoder.checksum() == before;
    let elapsed = started.elapsed();
    let (first, last) = (&out.log[0], out.log.last().unwrap());
    Outcome {
        pass: top1 >= E2E_TOP1_GATE
            && top1 - baseline >= E2E_BASELINE_MARGIN
            && frozen
            && elapsed < E2E_TIME_LIMIT,
        detail: format!(
            "top1 {top1:.4} (gate {E2E_TOP1_GATE}); untrained baseline {baseline:.4}, margin {:.4} (need ≥ {E2E_BASELINE_MARGIN}); \
             loss {:.4}→{:.4}; pos dot {:.4}→{:.4}; encoder frozen {frozen}; {:.1}s",
            top1 - baseline,
            first.mean_loss,
            last.mean_loss,
            first.mean_pos_dot,
            last.mean_pos_dot,
            elapsed.as_secs_f64()
        ),
    }
}

fn slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in ys.iter().enumerate() {
        num += (x as f64 - mx) * (y - my);
        den += (x as f64 - mx) * (x as f64 - mx);
    }
    num / den
}

fn pos_dot_series(log: &[TrainLogRecord]) -> Vec<f64> {
    log.iter().map(|r| r.mean_pos_dot).collect()
}

fn criterion_7() -> Outcome {
    let mut wins = 0;
    let mut margins = Vec::new();
    let mut mean_none = vec![0.0; TrainConfig::default().epochs];
    let mut mean_cut = mean_none.clone();
    for &seed in &TREND_SEEDS {
        let (train, _) = separable(seed);
        let run = |mix| {
            let cfg = TrainConfig { mix, seed, ..Default::default() };
            pos_dot_series(&train_contrastive(&train, &cfg, None).unwrap().log)
        };
        let (none, cut) = (run(MixKind::None), run(MixKind::CutMix));
        let margin = none.last().unwrap() - cut.last().unwrap();
        if margin >= 0.0 {
            wins += 1;
        }
        margins.push(format!("{margin:+.4}"));
        for e in 0..none.len() {
            mean_none[e] += none[e] / TREND_SEEDS.len() as f64;
            mean_cut[e] += cut[e] / TREND_SEEDS.len() as f64;
        }
    }
    let (s_none, s_cut) = (slope(&mean_none), slope(&mean_cut));
    Outcome {
        pass: wins >= TREND_MIN_WINS && s_none > 0.0 && s_cut > 0.0,
        detail: format!(
            "none ≥ cutmix in {wins}/{} seeds (margins {}); seed-mean slope none {s_none:.2e}, cutmix {s_cut:.2e}",
            TREND_SEEDS.len(),
            margins.join(" ")
        ),
    }
}

fn criterion_8() -> Outcome {
    let dir = std::env::temp_dir().join(format!("gscl-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let spec = SyntheticSpec { per_class: 20, ..Default::default() };
    let files: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let ds = generate_synthetic(&spec, &mut Rng::new(9)).unwrap();
            let path = dir.join(format!("ds{k}.gscl"));
            save_dataset(&ds, &path).unwrap();
            std::fs::read(&path).unwrap()
        })
        .collect();
    let dataset_same = files[0] == files[1];

    let ds = read_dataset(&mut files[0].as_slice(), "ds").unwrap();
    let mut rewritten = Vec::new();
    write_dataset(&ds, &mut rewritten).unwrap();
    let dataset_round = rewritten == files[0];

    let cfg = TrainConfig { epochs: 4, mix: MixKind::CutMix, ..Default::default() };
    let runs: Vec<(Vec<u8>, String)> = (0..2)
        .map(|_| {
            let out = train_contrastive(&ds, &cfg, None).unwrap();
            (Checkpoint::from_model(&out.model).to_bytes(), metrics_csv(&out.log))
        })
        .collect();
    let ckpt_same = runs[0].0 == runs[1].0;
    let metrics_same = runs[0].1 == runs[1].1;
    let ck = read_checkpoint(&mut runs[0].0.as_slice()).unwrap();
    let ckpt_round = ck.to_bytes() == runs[0].0;

    let mut rng_a = Rng::new(3);
    let mut rng_b = Rng::new(3);
    let examples = ds.examples()[..6].to_vec();
    let aug = genscl::data::AugmentConfig::default();
    let batch_same = build_multiview_batch(&examples, &aug, MixKind::MixUp, 1.0, &mut rng_a).unwrap()
        == build_multiview_batch(&examples, &aug, MixKind::MixUp, 1.0, &mut rng_b).unwrap();
    std::fs::remove_dir_all(&dir).ok();
    Outcome {
        pass: dataset_same && dataset_round && ckpt_same && metrics_same && ckpt_round && batch_same,
        detail: format!(
            "dataset bytes {dataset_same}, dataset round trip {dataset_round}, checkpoint bytes {ckpt_same}, \
             metrics {metrics_same}, checkpoint round trip {ckpt_round}, batches {batch_same}"
        ),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("gradient fidelity", criterion_1),
        ("degeneration identities", criterion_2),
        ("easy-pair vanishing", criterion_3),
        ("brute-force oracle equivalence", criterion_4),
        ("mixing correctness", criterion_5),
        ("end-to-end learning signal", criterion_6),
        ("positive-pair similarity trend", criterion_7),
        ("determinism and formats", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        println!("criterion {} [{}]: {} - {}", k + 1, name, if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
