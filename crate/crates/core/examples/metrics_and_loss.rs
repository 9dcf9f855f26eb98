//! SRCC / PLCC on small vectors, and the MAE + ranking objective on a batch.

use mspt::losses::{l1_rank_loss_value, LossConfig};
use mspt::metrics::{evaluate, ranks, srcc_closed_form, srcc_pearson_of_ranks};

fn main() -> mspt::Result<()> {
    let truth = [0.91, 0.35, 0.62, 0.10, 0.77, 0.35];
    let pred = [0.80, 0.41, 0.66, 0.22, 0.70, 0.30];

    println!("ranks of truth: {:?}", ranks(&truth)?);
    let r = evaluate(&pred, &truth)?;
    println!("srcc {:.4}  plcc {:.4}  score {:.4}", r.srcc, r.plcc, r.final_score);
    println!("srcc via Pearson of ranks: {:.4}", srcc_pearson_of_ranks(&pred, &truth)?);

    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let b = [2.0, 1.0, 4.0, 3.0, 5.0];
    println!("tie-free closed form: {:.4}", srcc_closed_form(&a, &b)?);

    for lambda in [0.0, 0.5, 1.0] {
        let l = l1_rank_loss_value(&pred, &truth, &LossConfig { lambda })?;
        println!("loss at lambda {lambda}: {l:.5}");
    }
    let worked = l1_rank_loss_value(&[0.5, 0.5], &[0.0, 1.0], &LossConfig::default())?;
    println!("pred [0.5, 0.5] vs target [0, 1]: {worked}");
    Ok(())
}
