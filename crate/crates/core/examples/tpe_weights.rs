//! TPE search over simplex weights for a fixed metric bundle, in both
//! aggregation modes.

use repcap::pipeline::{optimize_weights, NormalizedBundle, RcMode};
use repcap::tpe::TpeConfig;

fn main() -> repcap::Result<()> {
    let v = NormalizedBundle {
        n_acc: 1.0,
        n_clust: 0.62,
        n_agree: 0.93,
        n_trust: 0.97,
    };
    let cfg = TpeConfig {
        n_trials: 400,
        seed: 11,
        ..TpeConfig::default()
    };
    for mode in [RcMode::AsWritten, RcMode::Additive] {
        let res = optimize_weights(&v, mode, &cfg)?;
        let w = res.best.weights;
        println!(
            "{mode:<10} RC {:.4} at trial {:>3}: w = ({:.3}, {:.3}, {:.3}, {:.3})",
            res.best.value, res.best.index, w.w_class, w.w_clust, w.w_neighb, w.w_trust
        );
    }
    Ok(())
}
