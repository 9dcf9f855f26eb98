//! Size and aspect-ratio histograms of generated data, printed as text bars.
//!
//! cargo run --release --example stats -- [count] [seed]

use mspt::data::{dataset_stats, generate_dataset, Histogram};

fn bars(name: &str, h: &Histogram) {
    println!("{name}");
    let peak = h.counts[h.peak()].max(1);
    for (i, &c) in h.counts.iter().enumerate().filter(|(_, c)| **c > 0) {
        let (lo, hi) = h.bin_range(i);
        println!("  [{lo:>7.2}, {hi:>7.2}) {c:>5} {}", "#".repeat((40 * c / peak) as usize));
    }
}

fn main() -> mspt::Result<()> {
    let mut args = std::env::args().skip(1);
    let count: usize = args.next().map_or(500, |s| s.parse().expect("count"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("seed"));
    let dir = tempfile_dir();
    let m = generate_dataset(count, seed, &dir)?;
    let s = dataset_stats(&m)?;
    bars("width / height", &s.ratio_hist);
    bars("width", &s.width_hist);
    bars("height", &s.height_hist);
    if let Some(r) = s.wh_correlation {
        println!("corr(width, height) = {r:.3}");
    }
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}

fn tempfile_dir() -> std::path::PathBuf {
    std::env::temp_dir().join(format!("mspt-stats-{}", std::process::id()))
}
