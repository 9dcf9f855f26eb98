//! Three-stage curriculum on freshly generated data, with weight averaging
//! over the last stage. Epoch counts are scaled down from the desk schedule
//! so this finishes in about a minute.
//!
//! cargo run --release --example train_pipeline -- [count] [epoch_scale]

use mspt::data::{generate_dataset, Dataset};
use mspt::micronet::{build_model, ArchConfig};
use mspt::trainer::{evaluate_model, holdout_split, Pipeline, StagePlan, SwaConfig, TrainConfig};

fn main() -> mspt::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(400, |s| s.parse().expect("count"));
    let scale: f64 = args.next().map_or(0.2, |s| s.parse().expect("epoch scale"));

    let dir = std::env::temp_dir().join(format!("mspt-train-{}", std::process::id()));
    let m = generate_dataset(count, 7, &dir)?;
    let (tm, vm) = holdout_split(&m, 0.1, 1)?;
    let all = Dataset::load(&m)?;
    let (train, val) = (all.restrict(&tm)?, all.restrict(&vm)?);

    let mut plans = StagePlan::desk();
    for p in &mut plans {
        p.epochs = ((p.epochs as f64 * scale).round() as usize).max(1);
    }
    let arch = ArchConfig::desk();
    let cfg = TrainConfig::default();
    let before = evaluate_model(&build_model(&arch, 1)?, &val, 64, 32)?;

    let out = Pipeline {
        arch: &arch,
        plans: &plans,
        train: &train,
        val: Some(&val),
        config: &cfg,
        swa: SwaConfig::default(),
        seed: 1,
        probe_forgetting: true,
    }
    .run()?;

    for r in &out.log.records {
        println!(
            "stage {} epoch {:>2}  lr {:.2e}  loss {:.4}  val {:.4}",
            r.stage,
            r.epoch,
            r.lr,
            r.loss,
            r.val_score.unwrap_or(f64::NAN)
        );
    }
    let after = out.val_report.expect("validation split is non-empty");
    println!("untrained {:.4} -> trained {:.4} (srcc {:.4}, plcc {:.4})", before.final_score, after.final_score, after.srcc, after.plcc);
    if let Some(f) = out.forgetting {
        println!("on the partial-data subset: {:.4} -> {:.4}", f.before.final_score, f.after.final_score);
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
