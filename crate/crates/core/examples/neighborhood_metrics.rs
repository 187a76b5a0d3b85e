//! Neighborhood agreement and trustworthiness between a point cloud and a
//! noisy 2-D projection of it.

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use repcap::neighborhood::{sweep, NeighborIndex, SweepMetric, TrustFormula};

fn main() -> repcap::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Array2::from_shape_simple_fn((120, 6), || rng.sample::<f64, _>(StandardNormal));
    let ix = NeighborIndex::build(x.view())?;
    for noise in [0.0, 0.3, 1.0] {
        let y = x.slice(s![.., ..2]).mapv(|v| v + noise * rng.sample::<f64, _>(StandardNormal));
        let iy = NeighborIndex::build(y.view())?;
        let agree = sweep(SweepMetric::Agreement, &ix, &iy, 30)?;
        let trust = sweep(SweepMetric::Trustworthiness(TrustFormula::Standard), &ix, &iy, 30)?;
        println!(
            "noise {noise:.1}: agreement@5 {:.1}%  scalar {:.3} | trust@5 {:.3}  scalar {:.3}",
            agree.values[4], agree.scalar, trust.values[4], trust.scalar
        );
    }
    Ok(())
}
