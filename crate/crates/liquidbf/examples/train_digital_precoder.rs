//! Train the liquid and GRU digital precoders on a small synthetic dataset
//! and compare against the matched-filter floor.
//!
//! Run with: cargo run --release --example train_digital_precoder

use liquidbf::baselines::mrt_precoder;
use liquidbf::bf::spectral_efficiency;
use liquidbf::channel::{standard_complex_gaussian, ChannelEstimate};
use liquidbf::lnn::{
    evaluate_precoder, train, CellKind, ChannelSnapshot, Episode, NetState, TrainConfig,
};
use liquidbf::rng::stream;

const SIGMA2: f64 = 1e-10;
const POWER: f64 = 1.0;

fn episodes(count: usize, tag: &str) -> Vec<Episode> {
    let mut rng = stream(21, &["train-demo", tag]);
    (0..count)
        .map(|_| Episode {
            snapshots: (0..2)
                .map(|_| {
                    let h = standard_complex_gaussian(4, 16, &mut rng).map(|z| z * 1e-5);
                    let est = ChannelEstimate::from_unit_error(
                        &h,
                        -10.0,
                        &standard_complex_gaussian(4, 16, &mut rng),
                    );
                    ChannelSnapshot { h_true: vec![est.h_true], h_hat: vec![est.h_hat] }
                })
                .collect(),
        })
        .collect()
}

fn main() -> liquidbf::Result<()> {
    let train_data = episodes(150, "train");
    let eval_data = episodes(30, "eval");
    let cfg = TrainConfig { steps: 300, hidden: 24, episode_len: 2, ..TrainConfig::default() };

    for cell in [CellKind::Cfc, CellKind::Gru] {
        let mut rng = stream(22, &["init", &cell.to_string()]);
        let (params, _, metrics) = train(cell, &train_data, 2, SIGMA2, POWER, &cfg, &mut rng)?;
        let mut se_true = Vec::new();
        let mut se_mrt = Vec::new();
        for ep in &eval_data {
            for snap in &ep.snapshots {
                let eval = evaluate_precoder(
                    &params,
                    &snap.h_hat[0],
                    &NetState::zeros(&params),
                    1.0,
                    SIGMA2,
                    POWER,
                )?;
                se_true.push(spectral_efficiency(&snap.h_true[0], &eval.w, SIGMA2));
                let mrt = mrt_precoder(&snap.h_hat[0], 2, POWER)?;
                se_mrt.push(spectral_efficiency(&snap.h_true[0], &mrt.w, SIGMA2));
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        println!(
            "{cell}: {} params | loss {:.3} -> {:.3} | eval SE {:.3} bps/Hz (mrt floor {:.3})",
            metrics.param_count,
            metrics.loss.first().unwrap(),
            mean(&metrics.loss[metrics.loss.len().saturating_sub(25)..]),
            mean(&se_true),
            mean(&se_mrt),
        );
    }
    Ok(())
}
