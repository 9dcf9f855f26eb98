//! Average a few checkpoints, refresh batch-norm statistics, round-trip the
//! result through the binary format.

use mspt::data::{batch_tensor, generate_sample, resize_eval};
use mspt::micronet::{average_weights, build_model, decode, encode, recompute_bn_stats, ArchConfig};

fn main() -> mspt::Result<()> {
    let arch = ArchConfig::desk();
    let snapshots: Vec<_> = (0..4).map(|s| build_model(&arch, s)).collect::<mspt::Result<_>>()?;
    let avg = average_weights(&snapshots)?;
    println!("averaged {} snapshots, stats stale: {}", snapshots.len(), avg.bn_stale());

    let images = (0..16)
        .map(|i| resize_eval(&generate_sample(5, i)?.image, 32))
        .collect::<mspt::Result<Vec<_>>>()?;
    let batch = batch_tensor(&images.iter().collect::<Vec<_>>())?;
    let avg = recompute_bn_stats(&avg, [batch.clone()])?;
    println!("after recompute, stats stale: {}", avg.bn_stale());

    let bytes = encode(&avg);
    let back = decode(&bytes, &arch)?;
    assert_eq!(back, avg);
    println!("checkpoint: {} bytes, round trip exact", bytes.len());
    println!("scores: {:?}", &back.predict(&batch)?[..4]);

    let mut other = arch.clone();
    other.head_hidden = 16;
    match decode(&bytes, &other) {
        Err(e) => println!("loading into another architecture: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
