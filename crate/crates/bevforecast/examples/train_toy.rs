//! Train a small network from scratch on a synthetic scene and watch
//! the loss fall. Demonstrates the full loop: scene -> rasterized
//! samples -> forward/backward -> clipped SGD with momentum ->
//! checkpoint round-trip.
//!
//!     cargo run --release --example train_toy

use bevforecast::bev::GridSpec;
use bevforecast::net::{build_network, count_params, Head, NetSpec};
use bevforecast::scenes::{synth_highway, SynthConfig};
use bevforecast::train::{
    read_checkpoint, train, valid_sample_positions, write_checkpoint, Momentum, TrainConfig,
};

fn main() -> bevforecast::Result<()> {
    let seq = synth_highway(&SynthConfig {
        n_vehicles: 4,
        duration_s: 30.0,
        seed: 3,
        lane_change_prob: 0.0,
        ..SynthConfig::default()
    })?;
    let gspec = GridSpec {
        width_px: 128,
        height_px: 16,
        x_m_per_px: 1.0,
        y_m_per_px: 0.5,
        origin: (0.0, 0.0),
    };
    let d = 4;
    println!(
        "{} frames, {} usable sample positions (need {d} past + {d} future)",
        seq.frames.len(),
        valid_sample_positions(&seq, d).len()
    );

    let spec = NetSpec {
        depth: 3,
        base_features: 4,
        in_channels: d,
        out_channels: d,
        head: Head::Linear,
    };
    let mut net = build_network(&spec, 42)?;
    let mut momentum = Momentum::zeros_like(&net);
    println!("depth-{} net, {} parameters", spec.depth, count_params(&net));

    // The full-scale default lr (1e-6) pairs with ~100k samples; this
    // desk run raises it and leans on momentum instead.
    let cfg = TrainConfig {
        lr: 1e-3,
        momentum: 0.99,
        clip: 1.0,
        epochs: 12,
        seed: 0,
    };
    let mut epoch_loss = Vec::new();
    let per_epoch = valid_sample_positions(&seq, d).len() as u64;
    let summary = train(
        &mut net,
        &mut momentum,
        &seq,
        &gspec,
        d,
        &cfg,
        0,
        |step, loss| {
            let e = ((step - 1) / per_epoch) as usize;
            if e == epoch_loss.len() {
                epoch_loss.push((0.0, 0u64));
            }
            let slot: &mut (f64, u64) = &mut epoch_loss[e];
            slot.0 += loss;
            slot.1 += 1;
        },
    )?;
    for (e, (sum, n)) in epoch_loss.iter().enumerate() {
        println!("epoch {:>2}: mean loss {:.6e}", e + 1, sum / *n as f64);
    }
    println!("total steps: {}", summary.steps);

    // Checkpoints are bit-exact: save, load, and the reloaded network
    // produces identical bytes again.
    let bytes = write_checkpoint(&net, &momentum, summary.steps);
    let ckpt = read_checkpoint(&bytes)?;
    let bytes2 = write_checkpoint(&ckpt.net, &ckpt.momentum, ckpt.iteration);
    assert_eq!(bytes, bytes2);
    println!(
        "checkpoint round-trip: {} bytes, bit-identical after reload",
        bytes.len()
    );
    Ok(())
}
