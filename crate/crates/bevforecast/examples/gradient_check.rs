//! Verify the hand-written backward pass against central finite
//! differences — the standard oracle for from-scratch backpropagation.
//! Probes parameters in every layer type (3x3 conv, transposed conv,
//! 1x1 head conv, biases) through the full network.
//!
//!     cargo run --example gradient_check

use bevforecast::bev::GridSpec;
use bevforecast::net::{build_network, Head, NetSpec};
use bevforecast::scenes::{Frame, VehicleState};
use bevforecast::train::loss_and_gradients;
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bevforecast::Result<()> {
    // A 2-level net exercises every layer type: conv+ReLU, max-pool,
    // transposed conv, skip concatenation, final 1x1 conv + head.
    let spec = NetSpec {
        depth: 2,
        base_features: 2,
        in_channels: 3,
        out_channels: 3,
        head: Head::Linear,
    };
    let mut net = build_network(&spec, 17)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = Array3::from_shape_simple_fn((3, 8, 8), || rng.gen_range(0.0..1.0f64) as f32);
    // A real rendered target keeps the loss task-shaped.
    let gspec = GridSpec {
        width_px: 8,
        height_px: 8,
        x_m_per_px: 1.0,
        y_m_per_px: 1.0,
        origin: (0.0, 0.0),
    };
    let frame = Frame {
        t_index: 0,
        vehicles: vec![VehicleState {
            id: 1,
            cx: 4.2,
            cy: 3.7,
            w: 3.0,
            h: 2.0,
            vx: 0.0,
            vy: 0.0,
        }],
    };
    let plane = bevforecast::bev::render_frame(&frame, &gspec).values;
    let mut target = Array3::zeros((3, 8, 8));
    for k in 0..3 {
        target.index_axis_mut(ndarray::Axis(0), k).assign(&plane);
    }

    let (_, analytic) = loss_and_gradients(&net, &input, &target)?;
    let flat_grads = analytic.flat();

    let n_tensors = net.param_tensors().len();
    println!("{n_tensors} parameter tensors; probing 3 entries of each\n");
    println!(
        "{:>7}  {:>9}  {:>14}  {:>14}  {:>9}",
        "tensor", "entry", "analytic", "finite diff", "rel err"
    );
    let mut worst: f64 = 0.0;
    #[allow(clippy::needless_range_loop)] // ti indexes two parallel structures
    for ti in 0..n_tensors {
        let len = net.param_tensors()[ti].1.len();
        for pi in [0, len / 2, len - 1] {
            let g = flat_grads[ti][pi];
            // Central difference with the realized f32 step: perturb the
            // stored parameter and divide by what actually changed.
            let eps = 1e-5f32;
            let mut probe = |e: f32| -> (f64, f64) {
                let orig = net.param_slices_mut()[ti][pi];
                net.param_slices_mut()[ti][pi] = orig + e;
                let realized = net.param_slices_mut()[ti][pi] as f64;
                let (loss, _) = loss_and_gradients(&net, &input, &target).unwrap();
                net.param_slices_mut()[ti][pi] = orig;
                (loss, realized)
            };
            let (hi, hi_v) = probe(eps);
            let (lo, lo_v) = probe(-eps);
            let fd = (hi - lo) / (hi_v - lo_v);
            let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-12);
            worst = worst.max(rel);
            if pi == len / 2 {
                println!("{ti:>7}  {pi:>9}  {g:>14.6e}  {fd:>14.6e}  {rel:>9.2e}");
            }
            assert!(rel < 1e-4, "tensor {ti} entry {pi}: rel err {rel:.3e}");
        }
    }
    println!("\nworst relative error over all probes: {worst:.3e} (bound 1e-4)");
    Ok(())
}
