//! Temporary fine-grained timing probe for one calibration attempt.

use reachbridge::config::{self, RunConfig};
use reachbridge_core::conformal::action_discrepancy;
use reachbridge_core::distill::{generate_dataset, train_ldc};
use reachbridge_core::geom::StateBox;
use reachbridge_core::interval::Interval;
use reachbridge_core::verify::attempt_seeds;
use std::time::Instant;

fn main() {
    let file: RunConfig =
        serde_json::from_str(r#"{"preset":"ip","approach":"action-based"}"#).unwrap();
    let r = config::resolve(&file, Some(0), None).unwrap();

    // Two representative calibration regions: one in the capture corner,
    // one far from it.
    let regions = [
        ("attractor", boxy(&[(0.0, 0.25), (-0.25, 0.0)])),
        ("far", boxy(&[(1.75, 2.0), (-2.0, -1.75)])),
        ("switch-straddle", boxy(&[(0.75, 1.0), (-1.25, -1.0)])),
    ];

    for (name, region) in &regions {
        let seeds = attempt_seeds(0, 7, 0);
        let t0 = Instant::now();
        let ds = generate_dataset(&r.oracle, region, r.vcfg.n_init, r.vcfg.horizon, seeds.dataset)
            .unwrap();
        let t_ds = t0.elapsed().as_secs_f64();

        let mut cfg = r.vcfg.train.clone();
        cfg.seed = seeds.train;
        let t1 = Instant::now();
        let (net, report) = train_ldc(&ds, &cfg).unwrap();
        let t_tr = t1.elapsed().as_secs_f64();

        let t2 = Instant::now();
        let bound = action_discrepancy(
            &net,
            &r.oracle,
            &r.params,
            region,
            r.vcfg.alpha,
            r.vcfg.n_per_region,
            r.vcfg.horizon,
            seeds.calibration,
        )
        .unwrap();
        let t_cal = t2.elapsed().as_secs_f64();

        eprintln!(
            "{name}: dataset {t_ds:.2}s ({} pts), train {t_tr:.2}s ({} epochs, mse {:.2e}, lip {:.2}), calibrate {t_cal:.2}s, bound {:.3e}",
            ds.len(),
            report.epochs_run,
            report.final_mse,
            report.final_lip,
            bound.value
        );
    }
}

fn boxy(bounds: &[(f64, f64)]) -> StateBox {
    StateBox::new(
        bounds
            .iter()
            .map(|&(lo, hi)| Interval::new(lo, hi))
            .collect(),
    )
    .unwrap()
}
