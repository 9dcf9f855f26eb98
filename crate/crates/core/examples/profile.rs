//! Parameter, MAC and latency report for the desk network, plus the layer
//! ledger.
//!
//! cargo run --release --example profile -- [resolution]

use mspt::micronet::{build_model, ArchConfig};
use mspt::profiler::{profile, Limits};

fn main() -> mspt::Result<()> {
    let r: usize = std::env::args().nth(1).map_or(64, |s| s.parse().expect("resolution"));
    let model = build_model(&ArchConfig::desk(), 0)?;
    let rep = profile(&model, r, Some((3, 20)), &Limits::default())?;

    println!("{:<24} {:>8} {:>12}", "layer", "params", "MACs");
    for (p, m) in rep.params_by_layer.iter().zip(&rep.macs_by_layer) {
        println!("{:<24} {:>8} {:>12}", p.name, p.count, m.count);
    }
    println!(
        "\ntotal {} params ({:.4} M), {} MACs at {r}x{r} ({:.5} G), {} BN buffers",
        rep.num_params, rep.num_params_m, rep.macs, rep.macs_g, rep.buffers
    );
    if let Some(t) = rep.runtime {
        println!("forward {:.2} ms ± {:.2} over {} runs", t.mean_s * 1e3, t.std_s * 1e3, t.repeats);
    }
    println!("within limits: {}", rep.constraints.passed());
    Ok(())
}
