use std::path::Path;

use fgl_core::bridge::{BridgeModel, MaskSource};
use fgl_core::datagen::{
    build_dataset, DatasetRequest, DistortionPolicy, DistortionSpec, SourcePool,
};
use fgl_core::domain::{
    load_image, save_score_map, validate_manifest, DatasetManifest, ForgeryType,
};
use fgl_core::eval::{
    ablation_table, embed_size_sweep, embed_size_table, evaluate_detection, evaluate_expert,
    evaluate_explanations, render_table, robustness_sweep, robustness_table, run_ablations,
    write_csv, write_json, Ablation,
};
use fgl_core::expert::{
    checkpoint_config, load_training_set, train_flexpert, ExpertModel, TrainingItem,
};
use fgl_core::nn::{GradCheckOptions, GradCheckReport};
use fgl_core::verify::{bridge_grad_check, expert_grad_check, probe_item};
use fgl_core::{bridge, Error, Result};
use serde::Serialize;

use crate::run::{io_err, Run, RunConfig};
use crate::{Cli, Command, GradTarget, TrainArgs};

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.model.rng_seed = cfg.seed;
    cfg.train.seed = cfg.seed;
    cfg.jobs = cli.jobs.unwrap_or(cfg.jobs).max(1);
    if cli.run_dir.is_some() {
        cfg.paths.run_dir = cli.run_dir.clone();
    }
    let train: Option<&TrainArgs> = match &cli.command {
        Command::TrainFlexpert { train, .. }
        | Command::TrainBridge { train, .. }
        | Command::SweepM { train, .. }
        | Command::Ablate { train, .. } => Some(train),
        _ => None,
    };
    if let Some(t) = train {
        cfg.train.epochs = t.epochs.unwrap_or(cfg.train.epochs);
        cfg.train.batch_size = t.batch_size.unwrap_or(cfg.train.batch_size);
        cfg.train.lr = t.lr.unwrap_or(cfg.train.lr);
    }
    let options = serde_json::to_value(&cli.command).expect("command serializes");
    cfg.command = match &options {
        serde_json::Value::Object(m) => m.keys().next().cloned().unwrap_or_default(),
        serde_json::Value::String(s) => s.clone(),
        _ => String::new(),
    };
    cfg.options = options;
    match &cli.command {
        Command::TrainFlexpert { manifest, out, .. } => {
            cfg.paths.data_dir = Some(manifest.clone());
            cfg.paths.checkpoint_out = out.clone();
        }
        Command::TrainBridge {
            manifest,
            expert,
            out,
            ..
        } => {
            cfg.paths.data_dir = Some(manifest.clone());
            cfg.paths.checkpoint_in = Some(expert.clone());
            cfg.paths.checkpoint_out = out.clone();
            if cli.config.is_none() {
                // Architecture follows the expert being extended.
                cfg.model = checkpoint_config(expert)?;
                cfg.model.rng_seed = cfg.seed;
            }
        }
        Command::Synth { out, .. } => cfg.paths.data_dir = Some(out.clone()),
        _ => {}
    }
    cfg.model.validate()?;
    Ok(cfg)
}

/// Run one command; the returned value is the process exit code.
pub fn dispatch(cli: Cli) -> Result<u8> {
    let cfg = resolve(&cli)?;
    // The global pool serves per-image evaluation; a second call in the
    // same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build_global();
    let mut run = Run::open(&cfg)?;
    run.log(&format!(
        "fgl {} seed={} jobs={}",
        cfg.command, cfg.seed, cfg.jobs
    ));
    match cli.command {
        Command::Synth {
            out,
            forged,
            authentic,
            types,
            sources,
            distort,
        } => synth(
            &cfg,
            &mut run,
            &out,
            forged,
            authentic,
            &types,
            sources.as_deref(),
            distort,
        ),
        Command::TrainFlexpert { manifest, out, .. } => {
            let m = DatasetManifest::load(&manifest)?;
            let path = run.checkpoint_out(out.as_deref(), "flexpert.ckpt")?;
            let (_, report) = train_flexpert(&m, &cfg.model, &cfg.train, Some(&path), |l| {
                run.log(&format!(
                    "epoch {} loss {:.4} auc {}",
                    l.epoch,
                    l.mean_loss,
                    l.pixel_auc.map_or("n/a".into(), |a| format!("{a:.4}"))
                ))
            })?;
            write_outputs(&run, "train_flexpert", &report.epochs, &report)?;
            run.log(&format!("checkpoint written to {}", path.display()));
            Ok(0)
        }
        Command::TrainBridge {
            manifest,
            expert,
            out,
            mask_source,
            ..
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let path = run.checkpoint_out(out.as_deref(), "bridge.ckpt")?;
            let (_, report) = bridge::train_bridge(
                &m,
                &expert,
                &cfg.model,
                &cfg.train,
                mask_source.into(),
                Some(&path),
                |l| {
                    run.log(&format!(
                        "epoch {} loss {:.4} ce {:.4} dice {:.4} acc {:.3}",
                        l.epoch, l.mean_loss, l.mean_ce, l.mean_dice, l.accuracy
                    ))
                },
            )?;
            write_outputs(&run, "train_bridge", &report.epochs, &report)?;
            run.log(&format!("checkpoint written to {}", path.display()));
            Ok(0)
        }
        Command::Localize {
            checkpoint,
            image,
            out,
        } => {
            let model = ExpertModel::load(&checkpoint)?;
            let map = model.localize(&load_image(&image)?)?;
            let stem = image
                .file_stem()
                .map_or("image".into(), |s| s.to_string_lossy().into_owned());
            let dest = out.or_else(|| run.output(&format!("{stem}_score.png")));
            if let Some(d) = &dest {
                save_score_map(&map, d)?;
                run.log(&format!("score map written to {}", d.display()));
            }
            let max = map.data().iter().copied().fold(0.0f32, f32::max);
            let area = map.threshold(0.5).area_fraction();
            println!(
                "max score {max:.4}, region at 0.5 covers {:.1}% of the image",
                area * 100.0
            );
            Ok(0)
        }
        Command::Detect { checkpoint, image } => {
            let model = BridgeModel::load(&checkpoint)?;
            let det = model.detect(&load_image(&image)?)?;
            println!(
                "{}",
                serde_json::to_string(&det.classification).expect("classification serializes")
            );
            Ok(0)
        }
        Command::Explain {
            checkpoint,
            image,
            forgery_type,
        } => {
            let kind = forgery_type
                .map(|t| {
                    ForgeryType::parse(&t)
                        .ok_or_else(|| Error::Config(format!("unknown forgery type {t:?}")))
                })
                .transpose()?;
            let model = BridgeModel::load(&checkpoint)?;
            let (_, text) = model.explain(&load_image(&image)?, kind)?;
            println!("{text}");
            Ok(0)
        }
        Command::EvalLoc {
            checkpoint,
            manifest,
        } => {
            let model = ExpertModel::load(&checkpoint)?;
            let items = load_training_set(&DatasetManifest::load(&manifest)?)?;
            let r = evaluate_expert(&model, &items)?;
            let fmt = |v: Option<f64>| v.map_or("n/a".into(), |x| format!("{x:.4}"));
            print!(
                "{}",
                render_table(
                    &["mode", "AUC", "F1"],
                    &[
                        vec!["per-image mean".into(), fmt(r.mean_auc), fmt(r.mean_f1)],
                        vec!["pooled".into(), fmt(r.pooled_auc), fmt(Some(r.pooled_f1))],
                    ]
                )
            );
            write_outputs(&run, "eval_loc", &r.per_image, &r)?;
            Ok(0)
        }
        Command::EvalDet {
            checkpoint,
            manifest,
            mask_source,
        } => {
            let model = BridgeModel::load(&checkpoint)?;
            let items = load_training_set(&DatasetManifest::load(&manifest)?)?;
            let r = evaluate_detection(&model, &items, mask_source.into())?;
            println!(
                "accuracy {:.4} over {} images",
                r.accuracy,
                r.per_image.len()
            );
            let rows: Vec<DetRow> = r
                .per_image
                .iter()
                .map(|d| DetRow {
                    id: d.id.clone(),
                    label: format!("{:?}", d.label).to_lowercase(),
                    verdict: format!("{:?}", d.verdict).to_lowercase(),
                    logit_authentic: d.logits[0],
                    logit_forged: d.logits[1],
                })
                .collect();
            write_outputs(&run, "eval_det", &rows, &r)?;
            Ok(0)
        }
        Command::EvalExplain {
            checkpoint,
            manifest,
        } => {
            let model = BridgeModel::load(&checkpoint)?;
            let m = DatasetManifest::load(&manifest)?;
            let items = load_training_set(&m)?;
            let pairs: Vec<(TrainingItem, String)> = items
                .into_iter()
                .zip(m.entries.iter().map(|e| e.caption.clone()))
                .collect();
            let r = evaluate_explanations(&model, &pairs)?;
            let row = |name: &str, p: fgl_core::eval::Prf| {
                vec![
                    name.to_string(),
                    format!("{:.4}", p.precision),
                    format!("{:.4}", p.recall),
                    format!("{:.4}", p.f1),
                ]
            };
            print!(
                "{}",
                render_table(
                    &["metric", "precision", "recall", "f1"],
                    &[
                        row("ROUGE-1", r.mean.rouge1),
                        row("ROUGE-2", r.mean.rouge2),
                        row("ROUGE-L", r.mean.rouge_l),
                    ]
                )
            );
            if r.unrendered > 0 {
                run.log(&format!(
                    "{} forged verdicts had no region to describe",
                    r.unrendered
                ));
            }
            let rows: Vec<ExplainRow> = r
                .per_image
                .iter()
                .map(|e| ExplainRow {
                    id: e.id.clone(),
                    rendered: e.candidate.is_some(),
                    rouge1_f1: e.scores.rouge1.f1,
                    rouge2_f1: e.scores.rouge2.f1,
                    rouge_l_f1: e.scores.rouge_l.f1,
                })
                .collect();
            write_outputs(&run, "eval_explain", &rows, &r)?;
            Ok(0)
        }
        Command::SweepRobust {
            checkpoint,
            manifest,
            ladder,
        } => {
            let ladder = match ladder {
                Some(p) => read_ladder(&p)?,
                None => DistortionSpec::robustness_ladder(),
            };
            let model = ExpertModel::load(&checkpoint)?;
            let items = load_training_set(&DatasetManifest::load(&manifest)?)?;
            let rows = robustness_sweep(&model, &items, &ladder, cfg.seed)?;
            print!("{}", robustness_table(&rows));
            write_outputs(&run, "sweep_robust", &rows, &rows)?;
            Ok(0)
        }
        Command::SweepM {
            manifest,
            eval_manifest,
            m,
            ..
        } => {
            let (train, eval) = train_eval_items(&manifest, eval_manifest.as_deref())?;
            let rows = embed_size_sweep(&train, &eval, &cfg.model, &m, &cfg.train)?;
            print!("{}", embed_size_table(&rows));
            write_outputs(&run, "sweep_m", &rows, &rows)?;
            Ok(0)
        }
        Command::Ablate {
            manifest,
            eval_manifest,
            ..
        } => {
            let (train, eval) = train_eval_items(&manifest, eval_manifest.as_deref())?;
            let rows = run_ablations(&train, &eval, &cfg.model, &Ablation::ALL, &cfg.train)?;
            print!("{}", ablation_table(&rows));
            write_outputs(&run, "ablate", &rows, &rows)?;
            Ok(0)
        }
        Command::Gradcheck { target } => gradcheck(&cfg, &mut run, target),
        Command::Validate { manifest } => {
            let m = DatasetManifest::load(&manifest)?;
            let violations = validate_manifest(&m);
            for v in &violations {
                println!("{v}");
            }
            println!("{} violations", violations.len());
            Ok(u8::from(!violations.is_empty()))
        }
    }
}

#[derive(Serialize)]
struct DetRow {
    id: String,
    label: String,
    verdict: String,
    logit_authentic: f64,
    logit_forged: f64,
}

#[derive(Serialize)]
struct ExplainRow {
    id: String,
    rendered: bool,
    rouge1_f1: f64,
    rouge2_f1: f64,
    #[serde(rename = "rougeL_f1")]
    rouge_l_f1: f64,
}

#[allow(clippy::too_many_arguments)]
fn synth(
    cfg: &RunConfig,
    run: &mut Run,
    out: &Path,
    forged: usize,
    authentic: usize,
    types: &[String],
    sources: Option<&Path>,
    distort: bool,
) -> Result<u8> {
    let mut req = DatasetRequest::new(forged, authentic, cfg.seed);
    req.image_size = cfg.model.image_size;
    if !types.is_empty() {
        req.types = types
            .iter()
            .map(|t| match ForgeryType::parse(t) {
                Some(ForgeryType::None) | None => {
                    Err(Error::Config(format!("{t:?} is not a forgery type")))
                }
                Some(k) => Ok(k),
            })
            .collect::<Result<_>>()?;
    }
    if distort {
        req.policy = DistortionPolicy::training_default();
    }
    let pool = match sources {
        Some(d) => SourcePool::from_dir(d, req.image_size)?,
        None => SourcePool::Procedural,
    };
    let m = build_dataset(&req, &pool, out, cfg.jobs)?;
    run.log(&format!(
        "wrote {} entries to {}",
        m.len(),
        out.join("manifest.json").display()
    ));
    Ok(0)
}

fn gradcheck(cfg: &RunConfig, run: &mut Run, target: GradTarget) -> Result<u8> {
    let opts = GradCheckOptions {
        seed: cfg.seed,
        ..GradCheckOptions::default()
    };
    let item = probe_item(&cfg.model, cfg.seed)?;
    let mut reports: Vec<(&str, GradCheckReport)> = Vec::new();
    if target != GradTarget::Bridge {
        let mut m = ExpertModel::new(&cfg.model)?;
        reports.push(("expert", expert_grad_check(&mut m, &item, &opts)?));
    }
    if target != GradTarget::Expert {
        let mut m = BridgeModel::new(&cfg.model)?;
        reports.push((
            "bridge",
            bridge_grad_check(&mut m, &item, MaskSource::Predicted, &opts)?,
        ));
    }
    let mut ok = true;
    for (name, r) in &reports {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        ok &= r.passed();
        let worst = r
            .worst()
            .map_or(String::new(), |w| format!(" (worst: {})", w.name));
        println!(
            "{name}: max relative error {:.3e} over {} parameters{worst} tolerance {:.0e} {verdict}",
            r.max_relative_error,
            r.per_parameter.len(),
            r.tolerance
        );
    }
    let all: Vec<_> = reports
        .iter()
        .map(|(n, r)| serde_json::json!({"target": n, "report": r}))
        .collect();
    if let Some(p) = run.output("gradcheck.json") {
        write_json(&all, p)?;
    }
    Ok(u8::from(!ok))
}

fn read_ladder(path: &Path) -> Result<Vec<DistortionSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn train_eval_items(
    train: &Path,
    eval: Option<&Path>,
) -> Result<(Vec<TrainingItem>, Vec<TrainingItem>)> {
    let t = load_training_set(&DatasetManifest::load(train)?)?;
    let e = match eval {
        Some(p) => load_training_set(&DatasetManifest::load(p)?)?,
        None => t.clone(),
    };
    Ok((t, e))
}

/// `outputs/<name>.csv` from `rows` and `outputs/<name>.json` from `full`.
fn write_outputs<R: Serialize, F: Serialize>(
    run: &Run,
    name: &str,
    rows: &[R],
    full: &F,
) -> Result<()> {
    if let (Some(csv), Some(json)) = (
        run.output(&format!("{name}.csv")),
        run.output(&format!("{name}.json")),
    ) {
        write_csv(rows, csv)?;
        write_json(full, json)?;
    }
    Ok(())
}
