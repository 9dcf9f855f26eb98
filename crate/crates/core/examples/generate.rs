//! Write a small synthetic dataset and show a few of its labels.
//!
//! cargo run --release --example generate -- [out_dir] [count] [seed]

use mspt::data::generate_dataset;

fn main() -> mspt::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().unwrap_or_else(|| "data/example".into());
    let count: usize = args.next().map_or(64, |s| s.parse().expect("count"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));

    let m = generate_dataset(count, seed, &out)?;
    println!("{} samples in {out}", m.len());
    for s in m.samples().iter().take(8) {
        let d = s.degradation;
        println!(
            "{:<22} {:>3}x{:<3} mos {:.3}  blur {:.2} noise {:.3} down {:.2} contrast {:.2}",
            s.path, s.width, s.height, s.mos, d.blur, d.noise, d.down, d.contrast
        );
    }
    Ok(())
}
