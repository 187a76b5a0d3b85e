//! Exact t-SNE on two Gaussian blobs in 50 dimensions.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use repcap::tsne::{run_tsne, TsneConfig};

fn main() -> repcap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut x = Array2::from_shape_simple_fn((60, 50), || rng.sample::<f64, _>(StandardNormal));
    for i in 30..60 {
        x[[i, 0]] += 8.0;
    }
    let cfg = TsneConfig {
        perplexity: 15.0,
        ..TsneConfig::default()
    };
    let low = run_tsne(x.view(), &cfg)?;
    println!("KL after exaggeration {:.4}, final {:.4}", low.kl_after_exaggeration, low.final_kl);
    let centre = |r: std::ops::Range<usize>| {
        let n = r.len() as f64;
        let (sx, sy) = r.fold((0.0, 0.0), |(a, b), i| (a + low.points[[i, 0]], b + low.points[[i, 1]]));
        (sx / n, sy / n)
    };
    let (a, b) = (centre(0..30), centre(30..60));
    println!("blob centres in 2-D: ({:.1}, {:.1}) and ({:.1}, {:.1})", a.0, a.1, b.0, b.1);
    Ok(())
}
