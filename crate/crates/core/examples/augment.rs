//! Save one generated image next to a handful of training-time augmentations
//! and its eval-time resize.
//!
//! cargo run --release --example augment -- [out_dir] [resolution]

use mspt::data::{augment, generate_sample, resize_eval, stream_rng, AugmentConfig};

fn main() -> mspt::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = std::path::PathBuf::from(args.next().unwrap_or_else(|| "augment_preview".into()));
    let r: usize = args.next().map_or(64, |s| s.parse().expect("resolution"));
    std::fs::create_dir_all(&out).expect("create output directory");

    let g = generate_sample(3, 0)?;
    g.image.save_png(out.join("original.png"))?;
    resize_eval(&g.image, r)?.save_png(out.join("eval.png"))?;
    let cfg = AugmentConfig::default();
    for i in 0..6 {
        let img = augment(&g.image, r, &cfg, &mut stream_rng(3, 99, i))?;
        img.save_png(out.join(format!("train_{i}.png")))?;
    }
    println!(
        "{}x{} source, mos {:.3}; wrote 8 images to {}",
        g.image.width(),
        g.image.height(),
        g.mos,
        out.display()
    );
    Ok(())
}
