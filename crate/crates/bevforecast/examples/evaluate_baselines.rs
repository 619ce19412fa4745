//! Score the two model-free baselines on a synthetic scene: zero-motion
//! (every vehicle stays put) and constant-velocity extrapolation.
//! Longitudinal error eps_x and lateral error eps_y are mean absolute
//! deviations over Hungarian-matched pairs, reported per horizon.
//!
//!     cargo run --example evaluate_baselines

use bevforecast::eval::{evaluate_constant_velocity, evaluate_zero_motion, EvalReport};
use bevforecast::scenes::{synth_highway, SynthConfig};

fn print_report(name: &str, report: &EvalReport) {
    println!("\n{name} ({} positions)", report.n_positions);
    println!(
        "  {:>9}  {:>8}  {:>8}  {:>7}  {:>6}  {:>8}",
        "horizon_s", "eps_x_m", "eps_y_m", "matched", "missed", "spurious"
    );
    for m in &report.horizons {
        let fmt = |v: Option<f64>| v.map_or("-".into(), |e| format!("{e:.3}"));
        println!(
            "  {:>9.1}  {:>8}  {:>8}  {:>7}  {:>6}  {:>8}",
            m.horizon_s,
            fmt(m.eps_x),
            fmt(m.eps_y),
            m.n_matched,
            m.n_missed,
            m.n_spurious
        );
    }
}

fn main() -> bevforecast::Result<()> {
    let seq = synth_highway(&SynthConfig {
        n_vehicles: 8,
        duration_s: 60.0,
        seed: 11,
        ..SynthConfig::default()
    })?;
    let d = 8;
    println!(
        "scene: {} frames at {} Hz; horizons 0.2 .. {:.1} s",
        seq.frames.len(),
        seq.rate_hz,
        d as f64 / seq.rate_hz
    );

    let zero = evaluate_zero_motion(&seq, d)?;
    print_report("zero-motion (predict last frame)", &zero);

    // On constant-velocity traffic the extrapolation is near-exact; its
    // small residual comes from vehicles seen for a single frame only
    // (no velocity estimate) right after they enter the scene.
    let cv = evaluate_constant_velocity(&seq, d)?;
    print_report("constant-velocity extrapolation", &cv);

    let z = zero.horizons.last().unwrap();
    let c = cv.horizons.last().unwrap();
    println!(
        "\nat {:.1} s: zero-motion eps_x {:.2} m vs constant-velocity {:.3} m",
        z.horizon_s,
        z.eps_x.unwrap(),
        c.eps_x.unwrap()
    );
    println!("A learned model has to land between these two to be useful.");
    Ok(())
}
