//! Extend the prediction horizon past the trained range by feeding the
//! network its own output: after each pass the oldest input channel is
//! dropped and the first predicted channel becomes the newest
//! observation.
//!
//!     cargo run --example recursive_prediction

use bevforecast::bev::{build_sample, GridSpec};
use bevforecast::eval::recursive_predict;
use bevforecast::net::{build_network, Head, NetSpec};
use bevforecast::scenes::{synth_highway, SynthConfig};

fn main() -> bevforecast::Result<()> {
    let seq = synth_highway(&SynthConfig {
        n_vehicles: 4,
        duration_s: 10.0,
        seed: 5,
        ..SynthConfig::default()
    })?;
    let gspec = GridSpec {
        width_px: 128,
        height_px: 16,
        x_m_per_px: 1.0,
        y_m_per_px: 0.5,
        origin: (0.0, 0.0),
    };
    let d = 8;
    let sample = build_sample(&seq, 10, d, &gspec)?;

    // The clipped-ReLU head guarantees outputs stay valid occupancy
    // probabilities, so recursion can never drift out of [0,1] no
    // matter how many times predictions are fed back.
    let net = build_network(
        &NetSpec {
            depth: 3,
            base_features: 4,
            in_channels: d,
            out_channels: d,
            head: Head::ClippedRelu,
        },
        9,
    )?;

    let steps = 5;
    let outputs = recursive_predict(&net, &sample.input, steps)?;
    let dt = sample.dt_s;
    println!(
        "base horizons cover {:.1} s; {steps} recursive steps reach {:.1} s",
        d as f64 * dt,
        (d + steps - 1) as f64 * dt
    );
    for (s, out) in outputs.iter().enumerate() {
        let (lo, hi) = out
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let dim = out.dim();
        println!(
            "step {s}: output {}x{}x{}, values in [{lo:.3}, {hi:.3}], deepest channel reaches {:.1} s",
            dim.0,
            dim.1,
            dim.2,
            (s + d) as f64 * dt
        );
        assert!(lo >= 0.0 && hi <= 1.0, "clipped head keeps probabilities valid");
    }
    println!("all {} recursed grids stayed within [0, 1]", steps);
    Ok(())
}
