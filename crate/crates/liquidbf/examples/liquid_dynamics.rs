//! Liquid-time-constant dynamics: the relaxation ODE against its closed
//! form, and the gating behavior of the closed-form cell.
//!
//! Run with: cargo run --example liquid_dynamics

use liquidbf::lnn::{cfc_cell_forward, ltc_closed_form, ltc_ode_integrate, CfCLayerParams, LTCParams};
use liquidbf::rng::stream;
use rand::Rng;

fn main() {
    // Constant input: the closed form is exact, RK4 should land on it.
    let mut rng = stream(12, &["ltc-demo"]);
    let d = 4;
    let o_tau: Vec<f64> = (0..d).map(|_| rng.gen_range(0.2..1.5)).collect();
    let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let x0: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let f_val: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
    let params = LTCParams { o_tau: o_tau.clone(), a: a.clone(), b: vec![0.0; d] };

    println!("t      RK4                     closed form");
    for t in [0.25, 0.5, 1.0, 2.0, 4.0] {
        let f_ret = f_val.clone();
        let rk4 = ltc_ode_integrate(&x0, |_| vec![0.0], &params, move |_| f_ret.clone(), t, 1e-3);
        let cf = ltc_closed_form(&x0, &a, &o_tau, &f_val, t);
        println!(
            "{t:4.2}   [{}]   [{}]",
            rk4.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(", "),
            cf.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(", ")
        );
    }
    println!("as t grows the state relaxes to a = [{}]", a.iter().map(|v| format!("{v:+.4}")).collect::<Vec<_>>().join(", "));

    // Gate behavior of the trainable cell: large decay rates hand the state
    // to the h head, a zero rate blends g and h evenly.
    println!();
    let layer = CfCLayerParams {
        f: liquidbf::lnn::DenseHead { w: vec![0.0; 8], b: vec![0.0, 8.0], in_dim: 4, out_dim: 2 },
        g: liquidbf::lnn::DenseHead { w: vec![0.0; 8], b: vec![1.0, 1.0], in_dim: 4, out_dim: 2 },
        h: liquidbf::lnn::DenseHead { w: vec![0.0; 8], b: vec![-1.0, -1.0], in_dim: 4, out_dim: 2 },
    };
    for t in [0.0, 0.5, 1.0, 4.0] {
        let out = cfc_cell_forward(&[0.0, 0.0], &[0.0, 0.0], t, &layer);
        println!("t = {t:3.1}: x' = [{:+.4}, {:+.4}]   (g→+tanh(1), h→-tanh(1))", out[0], out[1]);
    }
}
