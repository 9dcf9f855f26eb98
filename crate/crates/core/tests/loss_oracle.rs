mod common;

use common::*;
use mspt::losses::{l1_rank_loss, l1_rank_loss_value, mae_loss, rank_loss, LossConfig};
use mspt::tensor::{Graph, Tensor};
use rand::Rng;

fn graph_losses(pred: &[f64], target: &[f64], lambda: f64) -> (f64, f64, f64) {
    let n = pred.len();
    let t = Tensor::new(vec![n, 1], target.to_vec()).unwrap();
    let mut g = Graph::new();
    let p = g.constant(Tensor::new(vec![n, 1], pred.to_vec()).unwrap());
    let mae = mae_loss(&mut g, p, &t).unwrap();
    let rank = rank_loss(&mut g, p, &t).unwrap();
    let total = l1_rank_loss(&mut g, p, &t, &LossConfig { lambda }).unwrap();
    let v = |x| g.value(x).item().unwrap();
    (v(mae), v(rank), v(total))
}

#[test]
fn worked_example() {
    let (mae, rank, total) = graph_losses(&[0.5, 0.5], &[0.0, 1.0], 1.0);
    assert!((mae - 0.5).abs() < 1e-15);
    assert!((rank - 0.5).abs() < 1e-15);
    assert!((total - 1.0).abs() < 1e-15);
    assert_eq!(loss_oracle(&[0.5, 0.5], &[0.0, 1.0], 1.0), (0.5, 0.5, 1.0));
}

#[test]
fn matches_pairwise_enumeration() {
    let mut r = rng(99);
    for trial in 0..2000 {
        let n = r.random_range(1..=8usize);
        let lambda = [0.0, 0.5, 1.0, 2.0][trial % 4];
        let mut target: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        if trial % 3 == 0 && n > 1 {
            target[n - 1] = target[0];
        }
        let pred: Vec<f64> = (0..n).map(|_| r.random_range(-0.2..1.2)).collect();
        let want = loss_oracle(&pred, &target, lambda);
        let got = graph_losses(&pred, &target, lambda);
        assert!((got.0 - want.0).abs() < 1e-12);
        assert!((got.1 - want.1).abs() < 1e-12);
        assert!((got.2 - want.2).abs() < 1e-12);
        let v = l1_rank_loss_value(&pred, &target, &LossConfig { lambda }).unwrap();
        assert!((v - want.2).abs() < 1e-12);
    }
}

#[test]
fn perfect_ranking_costs_nothing() {
    let y = [0.1, 0.4, 0.2, 0.9];
    let (mae, rank, total) = graph_losses(&y, &y, 1.0);
    assert_eq!((mae, rank, total), (0.0, 0.0, 0.0));
}

#[test]
fn shape_mismatch_is_rejected() {
    let mut g = Graph::new();
    let p = g.constant(Tensor::zeros(&[3, 1]));
    assert!(mae_loss(&mut g, p, &Tensor::zeros(&[2, 1])).is_err());
    let p = g.constant(Tensor::zeros(&[3]));
    assert!(rank_loss(&mut g, p, &Tensor::zeros(&[3])).is_err());
    assert!(l1_rank_loss_value(&[0.1], &[0.1, 0.2], &LossConfig::default()).is_err());
}
