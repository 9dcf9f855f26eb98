//! The two-stage / three-stage × averaging grid on a small dataset.
//!
//! cargo run --release --example ablation -- [count] [seeds]

use mspt::ablation::{rows_to_csv, Ablation};
use mspt::data::{generate_dataset, Dataset};
use mspt::micronet::ArchConfig;
use mspt::trainer::{holdout_split, StagePlan, TrainConfig};

fn main() -> mspt::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(300, |s| s.parse().expect("count"));
    let seeds: u64 = args.next().map_or(2, |s| s.parse().expect("seeds"));

    let dir = std::env::temp_dir().join(format!("mspt-ablation-{}", std::process::id()));
    let m = generate_dataset(count, 11, &dir)?;
    let (tm, vm) = holdout_split(&m, 0.2, 0)?;
    let all = Dataset::load(&m)?;
    let (train, test) = (all.restrict(&tm)?, all.restrict(&vm)?);

    let plans = [
        StagePlan::new(1, 32, 0.9, 1e-3, 6),
        StagePlan::new(2, 48, 0.9, 1e-4, 2),
        StagePlan::new(3, 48, 1.0, 1e-4, 3),
    ];
    let cfg = TrainConfig { eval_resolution: 48, ..TrainConfig::default() };
    let arch = ArchConfig::desk();
    let ab = Ablation { arch: &arch, plans: &plans, train: &train, test: &test, config: &cfg, swa_frequency: 1 };
    let mut rows = Vec::new();
    for s in 0..seeds {
        rows.extend(ab.run(s)?);
    }
    print!("{}", rows_to_csv(&rows));
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
