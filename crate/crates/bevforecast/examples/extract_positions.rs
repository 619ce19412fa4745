//! Subpixel position extraction from an occupancy grid: discrete peak
//! search, probability-mass centroid refinement, and window clearing so
//! several vehicles can be pulled from one image.
//!
//!     cargo run --example extract_positions

use bevforecast::bev::{render_frame, GridSpec};
use bevforecast::extract::{extract_positions, ExtractConfig};
use bevforecast::scenes::{Frame, VehicleState};

fn vehicle(id: u64, cx: f64, cy: f64, w: f64, h: f64) -> VehicleState {
    VehicleState {
        id,
        cx,
        cy,
        w,
        h,
        vx: 0.0,
        vy: 0.0,
    }
}

fn main() -> bevforecast::Result<()> {
    // A single vehicle between pixel centers: the discrete peak can be
    // at most half a pixel accurate, the centroid goes well below that.
    let spec = GridSpec {
        width_px: 16,
        height_px: 8,
        x_m_per_px: 1.0,
        y_m_per_px: 1.0,
        origin: (0.0, 0.0),
    };
    let truth = vehicle(1, 6.63, 3.21, 5.0, 2.0);
    let grid = render_frame(
        &Frame {
            t_index: 0,
            vehicles: vec![truth.clone()],
        },
        &spec,
    );
    let cfg = ExtractConfig::default();
    let est = &extract_positions(&grid, &cfg)[0];
    println!("true position   ({:.3}, {:.3}) m", truth.cx, truth.cy);
    println!(
        "discrete peak   pixel (row {}, col {}) = ({:.3}, {:.3}) m",
        est.discrete_rc.0,
        est.discrete_rc.1,
        est.discrete_rc.1 as f64 + 0.5,
        est.discrete_rc.0 as f64 + 0.5
    );
    println!(
        "subpixel        ({:.3}, {:.3}) m -> error ({:+.3}, {:+.3}) m",
        est.x,
        est.y,
        est.x - truth.cx,
        est.y - truth.cy
    );

    // Several vehicles: peaks are extracted strongest-first, each one's
    // window is cleared so the next search cannot re-find it.
    let spec = GridSpec {
        width_px: 128,
        height_px: 16,
        x_m_per_px: 1.0,
        y_m_per_px: 0.5,
        origin: (0.0, 0.0),
    };
    let fleet = vec![
        vehicle(1, 20.4, 2.1, 4.5, 1.8),
        vehicle(2, 57.8, 5.9, 5.2, 2.0),
        vehicle(3, 103.3, 3.0, 4.1, 1.7),
    ];
    let grid = render_frame(
        &Frame {
            t_index: 0,
            vehicles: fleet.clone(),
        },
        &spec,
    );
    println!("\nfleet of {} on a 128x16 grid:", fleet.len());
    for est in extract_positions(&grid, &cfg) {
        let truth = fleet
            .iter()
            .min_by(|a, b| {
                let da = (a.cx - est.x).abs();
                let db = (b.cx - est.x).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        println!(
            "  peak p={:.3} at ({:7.3}, {:5.3}) m; true ({:7.2}, {:5.2}) -> error ({:+.3}, {:+.3}) m",
            est.peak_p,
            est.x,
            est.y,
            truth.cx,
            truth.cy,
            est.x - truth.cx,
            est.y - truth.cy
        );
    }
    Ok(())
}
