use crate::args::{
    DiagnoseArgs, GenDataArgs, GradcheckArgs, LinearEvalArgs, TeacherSource, TrainArgs, TrainTeacherArgs,
};
use crate::error::{require_file, CliError, CliResult};
use genscl::data::{generate_synthetic, load_dataset, save_dataset, SyntheticSpec};
use genscl::loss::gradcheck::{self, GradcheckConfig};
use genscl::model::{Checkpoint, Teacher};
use genscl::numerics::Rng;
use genscl::trainer::{
    linear_eval, metrics_csv, train_contrastive, train_teacher, ProbeConfig, TeacherConfig, TrainConfig,
};
use serde_json::json;
use std::path::Path;

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// JSON numbers cannot be NaN; non-finite values are reported as null.
fn num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        serde_json::Value::Null
    }
}

pub fn gen_data(a: &GenDataArgs) -> CliResult<String> {
    let spec = SyntheticSpec {
        classes: a.classes,
        per_class: a.per_class,
        height: a.size,
        width: a.size,
        channels: a.channels,
        noise_std: a.noise_std,
    };
    let ds = generate_synthetic(&spec, &mut Rng::new(a.seed)).map_err(|e| CliError::usage(e.to_string()))?;
    save_dataset(&ds, &a.out).map_err(|e| CliError::io(format!("{}: {e}", a.out.display())))?;
    let (h, w, c) = ds.shape();
    Ok(json!({
        "out": a.out.display().to_string(),
        "classes": ds.classes(),
        "count": ds.len(),
        "class_counts": ds.class_counts(),
        "height": h,
        "width": w,
        "channels": c,
    })
    .to_string())
}

pub fn train_teacher_cmd(a: &TrainTeacherArgs) -> CliResult<String> {
    require_file(&a.data, "dataset")?;
    let ds = load_dataset(&a.data)?;
    let cfg = TeacherConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        hidden: a.hidden,
        temperature: a.temperature,
        augment: a.augment.config(),
        seed: a.seed,
    };
    let out = train_teacher(&ds, &cfg)?;
    write_file(&a.out, &Checkpoint::from_teacher(&out.teacher).to_bytes())?;
    Ok(json!({
        "out": a.out.display().to_string(),
        "train_accuracy": out.train_accuracy,
    })
    .to_string())
}

pub fn train_config(a: &TrainArgs) -> TrainConfig {
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        warmup_epochs: a.warmup_epochs,
        tau: a.tau,
        loss: a.loss,
        alpha_kd: a.alpha_kd,
        mix: a.mix,
        beta_alpha: a.beta_alpha,
        seed: a.seed,
        augment: a.augment.config(),
        hidden: a.hidden,
        embed: a.embed,
        proj: a.proj,
        pos_threshold: a.pos_threshold,
    }
}

pub fn train(a: &TrainArgs) -> CliResult<String> {
    require_file(&a.data, "dataset")?;
    let cfg = train_config(a);
    cfg.validate()?;
    if cfg.alpha_kd.needs_teacher() && a.teacher.is_none() {
        return Err(CliError::usage("--alpha-kd needs --teacher (checkpoint path or `oracle`)"));
    }
    let ds = load_dataset(&a.data)?;
    let teacher = match &a.teacher {
        None => None,
        Some(TeacherSource::Oracle) => Some(Teacher::oracle(ds.classes())),
        Some(TeacherSource::Checkpoint(p)) => {
            require_file(p, "teacher checkpoint")?;
            Some(Teacher::Network(Checkpoint::load(p)?.teacher()?))
        }
    };
    let out = train_contrastive(&ds, &cfg, teacher.as_ref())?;
    write_file(&a.out, &Checkpoint::from_model(&out.model).to_bytes())?;
    if let Some(m) = &a.metrics {
        write_file(m, metrics_csv(&out.log).as_bytes())?;
    }
    let last = out.log.last();
    Ok(json!({
        "out": a.out.display().to_string(),
        "objective": format!("{:?}", cfg.objective()),
        "epochs": out.log.len(),
        "final_loss": last.map(|r| num(r.mean_loss)),
        "final_mean_pos_dot": last.map(|r| num(r.mean_pos_dot)),
        "final_tangent_factor": last.map(|r| num(r.tangent_factor)),
        "checksum": format!("{:016x}", out.model.checksum()),
    })
    .to_string())
}

pub fn linear_eval_cmd(a: &LinearEvalArgs) -> CliResult<String> {
    require_file(&a.checkpoint, "checkpoint")?;
    require_file(&a.train, "train dataset")?;
    require_file(&a.test, "test dataset")?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    let encoder = ck.encoder()?;
    let train = load_dataset(&a.train)?;
    let test = load_dataset(&a.test)?;
    let cfg = ProbeConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        lr: a.lr,
        momentum: a.momentum,
        weight_decay: a.weight_decay,
        seed: a.seed,
    };
    let out = linear_eval(encoder, &train, &test, &cfg)?;
    Ok(json!({ "top1": out.top1, "train_top1": out.train_top1 }).to_string())
}

pub fn gradcheck_cmd(a: &GradcheckArgs) -> CliResult<String> {
    if a.trials == 0 || !(a.step > 0.0) || !(a.batch_step > 0.0) || !(a.tolerance > 0.0) {
        return Err(CliError::usage("trials, steps and tolerance must be positive"));
    }
    let cfg = GradcheckConfig {
        trials: a.trials,
        seed: a.seed,
        step: a.step,
        batch_step: a.batch_step,
        tolerance: a.tolerance,
        mutation: a.mutate.0,
        ..Default::default()
    };
    let report = gradcheck::run(&cfg).map_err(|e| CliError::numeric(e.to_string()))?;
    let line = json!({
        "trials": report.trials,
        "passed": report.passed(),
        "max_rel_err": report.max_rel_err(),
        "max_rel_err_anchor": report.max_rel_err_anchor,
        "max_rel_err_batch": report.max_rel_err_batch,
        "tolerance": a.tolerance,
        "worst_seed": report.worst_seed,
        "failures": report.failures.len(),
        "first_failing_seed": report.failures.first(),
    })
    .to_string();
    if report.passed() {
        Ok(line)
    } else {
        println!("{line}");
        Err(CliError::property(format!(
            "gradient check failed on {} of {} instances; first failing instance seed {}",
            report.failures.len(),
            report.trials,
            report.failures[0]
        )))
    }
}

struct Series {
    epochs: Vec<String>,
    values: Vec<String>,
}

fn read_series(path: &Path) -> CliResult<Series> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let (Some(ec), Some(dc)) = (col("epoch"), col("mean_pos_dot")) else {
        return Err(CliError::usage(format!(
            "{}: header must contain epoch and mean_pos_dot",
            path.display()
        )));
    };
    let mut s = Series {
        epochs: Vec::new(),
        values: Vec::new(),
    };
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let fields: Vec<&str> = line.split(',').collect();
        match (fields.get(ec), fields.get(dc)) {
            (Some(e), Some(d)) => {
                s.epochs.push(e.trim().to_string());
                s.values.push(d.trim().to_string());
            }
            _ => return Err(CliError::usage(format!("{}: row {} is short", path.display(), n + 2))),
        }
    }
    Ok(s)
}

pub fn diagnose(a: &DiagnoseArgs) -> CliResult<String> {
    for p in &a.inputs {
        require_file(p, "metrics file")?;
    }
    if !a.names.is_empty() && a.names.len() != a.inputs.len() {
        return Err(CliError::usage(format!(
            "{} names for {} inputs",
            a.names.len(),
            a.inputs.len()
        )));
    }
    if a.inputs.len() == 1 {
        read_series(&a.inputs[0])?;
        let bytes = std::fs::read(&a.inputs[0]).map_err(|e| CliError::io(e.to_string()))?;
        write_file(&a.out, &bytes)?;
        return Ok(json!({ "out": a.out.display().to_string(), "runs": 1, "copied": true }).to_string());
    }
    let series = a.inputs.iter().map(|p| read_series(p)).collect::<CliResult<Vec<_>>>()?;
    for (p, s) in a.inputs.iter().zip(&series).skip(1) {
        if s.epochs != series[0].epochs {
            return Err(CliError::usage(format!(
                "{} covers different epochs than {}",
                p.display(),
                a.inputs[0].display()
            )));
        }
    }
    let names: Vec<String> = if a.names.is_empty() {
        a.inputs
            .iter()
            .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect()
    } else {
        a.names.clone()
    };
    let mut out = format!("epoch,{}\n", names.join(","));
    for (row, epoch) in series[0].epochs.iter().enumerate() {
        out.push_str(epoch);
        for s in &series {
            out.push(',');
            out.push_str(&s.values[row]);
        }
        out.push('\n');
    }
    write_file(&a.out, out.as_bytes())?;
    Ok(json!({
        "out": a.out.display().to_string(),
        "runs": series.len(),
        "epochs": series[0].epochs.len(),
    })
    .to_string())
}
