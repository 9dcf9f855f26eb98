//! Score a checkpoint against a manifest, or an untrained network against
//! freshly generated data when no arguments are given.
//!
//! cargo run --release --example evaluate -- [checkpoint manifest.csv]

use mspt::data::{generate_dataset, Dataset, Manifest};
use mspt::micronet::{build_model, load_checkpoint, ArchConfig};
use mspt::trainer::{evaluate_model, predict_dataset};

fn main() -> mspt::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arch = ArchConfig::desk();
    let (model, manifest) = match &args[..] {
        [ckpt, manifest] => (load_checkpoint(ckpt, &arch)?, Manifest::load(manifest)?),
        _ => {
            let dir = std::env::temp_dir().join(format!("mspt-eval-{}", std::process::id()));
            (build_model(&arch, 0)?, generate_dataset(40, 2, dir)?)
        }
    };
    let data = Dataset::load(&manifest)?;
    let preds = predict_dataset(&model, &data, 64, 32)?;
    for (s, p) in manifest.samples().iter().zip(&preds).take(5) {
        println!("{:<22} mos {:.3}  predicted {:.3}", s.path, s.mos, p);
    }
    let r = evaluate_model(&model, &data, 64, 32)?;
    println!("n {}  srcc {:.4}  plcc {:.4}  score {:.4}", r.n, r.srcc, r.plcc, r.final_score);
    Ok(())
}
