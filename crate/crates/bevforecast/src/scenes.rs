//! Scene ingestion, temporal downsampling, train/test splitting, and
//! synthetic highway generation.
//!
//! A scene is a time-indexed list of frames, each holding the vehicles
//! visible at that sample. Ingested data follows the HighD tracks layout
//! (box corners); synthetic data mimics a bidirectional highway with
//! optional lane changes.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One vehicle at one frame. Positions are box centers in world meters,
/// x longitudinal and y lateral; `w`/`h` are the box extents along x/y.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub id: u64,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    /// Velocity in m/s; zero when the source provides none.
    pub vx: f64,
    pub vy: f64,
}

/// All vehicles visible at one sample index. Ids are unique within a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t_index: usize,
    pub vehicles: Vec<VehicleState>,
}

impl Frame {
    /// The state of vehicle `id` in this frame, if present.
    pub fn vehicle(&self, id: u64) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }
}

/// Time-ordered frames at a fixed sample rate, with the study-area size.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSequence {
    /// Frames with strictly increasing `t_index`.
    pub frames: Vec<Frame>,
    pub rate_hz: f64,
    pub extent_x: f64,
    pub extent_y: f64,
}

/// Configuration for [`synth_highway`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_vehicles: usize,
    /// Lanes per direction; the road carries `2 * n_lanes` lanes total.
    pub n_lanes: usize,
    pub lane_width: f64,
    /// Uniform speed magnitude range (min, max) in m/s.
    pub speed_range: (f64, f64),
    /// Per-second probability that a cruising vehicle starts a lane change.
    pub lane_change_prob: f64,
    pub duration_s: f64,
    pub seed: u64,
    pub rate_hz: f64,
    /// Longitudinal study-area length in meters.
    pub extent_x: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_vehicles: 8,
            n_lanes: 2,
            lane_width: 2.0,
            speed_range: (8.0, 14.0),
            lane_change_prob: 0.0,
            duration_s: 420.0,
            seed: 1,
            rate_hz: 5.0,
            extent_x: 128.0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_lanes == 0 {
            return Err(Error::InvalidArgument("n_lanes must be >= 1".into()));
        }
        if !(self.lane_width > 0.0) {
            return Err(Error::InvalidArgument("lane_width must be > 0".into()));
        }
        if self.speed_range.0 > self.speed_range.1 {
            return Err(Error::InvalidArgument(
                "speed_range min exceeds max".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.lane_change_prob) {
            return Err(Error::InvalidArgument(
                "lane_change_prob must be in [0,1]".into(),
            ));
        }
        if !(self.rate_hz > 0.0) {
            return Err(Error::InvalidArgument("rate_hz must be > 0".into()));
        }
        if !(self.duration_s >= 0.0) {
            return Err(Error::InvalidArgument("duration_s must be >= 0".into()));
        }
        if !(self.extent_x > 0.0) {
            return Err(Error::InvalidArgument("extent_x must be > 0".into()));
        }
        Ok(())
    }
}

/// Parse a HighD-layout tracks table into a scene sequence.
///
/// The CSV must carry at least the columns `frame`, `id`, `x`, `y`,
/// `width`, `height`, where `x`/`y` locate the box's upper-left corner;
/// centers are derived as corner + half extent. `xVelocity`/`yVelocity`
/// are carried when present. Output frames are sorted by frame index and
/// vehicles by id, so row order in the input does not matter.
pub fn ingest_tracks(csv_text: &str, rate_hz: f64) -> Result<SceneSequence> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let col = |name: &str| headers.iter().position(|f| f == name);
    let required = ["frame", "id", "x", "y", "width", "height"];
    let mut idx = [0usize; 6];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = col(name).ok_or_else(|| Error::MissingColumn(name.into()))?;
    }
    let vel_idx = (col("xVelocity"), col("yVelocity"));

    let mut rows: Vec<(u64, VehicleState)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // line 1 is the header
        let record = record.map_err(|e| Error::Parse {
            line,
            msg: e.to_string(),
        })?;
        let field = |j: usize, name: &str| -> Result<f64> {
            let cell = record.get(j).unwrap_or("");
            cell.trim().parse::<f64>().map_err(|_| Error::Parse {
                line,
                msg: format!("column '{name}': expected a number, got '{cell}'"),
            })
        };
        let frame = field(idx[0], "frame")? as u64;
        let id = field(idx[1], "id")? as u64;
        let (x, y) = (field(idx[2], "x")?, field(idx[3], "y")?);
        let (w, h) = (field(idx[4], "width")?, field(idx[5], "height")?);
        let vx = vel_idx.0.map_or(Ok(0.0), |j| field(j, "xVelocity"))?;
        let vy = vel_idx.1.map_or(Ok(0.0), |j| field(j, "yVelocity"))?;
        rows.push((
            frame,
            VehicleState {
                id,
                cx: x + w / 2.0,
                cy: y + h / 2.0,
                w,
                h,
                vx,
                vy,
            },
        ));
    }

    rows.sort_by_key(|r| (r.0, r.1.id));
    let mut frames: Vec<Frame> = Vec::new();
    for (frame_no, v) in rows {
        match frames.last_mut() {
            Some(f) if f.t_index == frame_no as usize => f.vehicles.push(v),
            _ => frames.push(Frame {
                t_index: frame_no as usize,
                vehicles: vec![v],
            }),
        }
    }
    let extent_x = frames
        .iter()
        .flat_map(|f| f.vehicles.iter())
        .map(|v| v.cx + v.w / 2.0)
        .fold(0.0, f64::max)
        .ceil();
    let extent_y = frames
        .iter()
        .flat_map(|f| f.vehicles.iter())
        .map(|v| v.cy + v.h / 2.0)
        .fold(0.0, f64::max)
        .ceil();
    Ok(SceneSequence {
        frames,
        rate_hz,
        extent_x,
        extent_y,
    })
}

/// Keep every `keep_every`-th frame (positions 0, k, 2k, …), dividing the
/// sample rate accordingly and reindexing `t_index` consecutively.
pub fn downsample(seq: &SceneSequence, keep_every: usize) -> Result<SceneSequence> {
    if keep_every == 0 {
        return Err(Error::InvalidArgument("keep_every must be >= 1".into()));
    }
    let frames = seq
        .frames
        .iter()
        .step_by(keep_every)
        .enumerate()
        .map(|(i, f)| Frame {
            t_index: i,
            vehicles: f.vehicles.clone(),
        })
        .collect();
    Ok(SceneSequence {
        frames,
        rate_hz: seq.rate_hz / keep_every as f64,
        extent_x: seq.extent_x,
        extent_y: seq.extent_y,
    })
}

/// Partition sequence ids into (train, test), preserving `seq_ids` order.
/// Ids in neither list are left out; an id in both lists is an error.
pub fn split(
    seq_ids: &[u64],
    train_ids: &[u64],
    test_ids: &[u64],
) -> Result<(Vec<u64>, Vec<u64>)> {
    if let Some(id) = train_ids.iter().find(|id| test_ids.contains(id)) {
        return Err(Error::InvalidArgument(format!(
            "id {id} appears in both train and test sets"
        )));
    }
    let train = seq_ids
        .iter()
        .copied()
        .filter(|id| train_ids.contains(id))
        .collect();
    let test = seq_ids
        .iter()
        .copied()
        .filter(|id| test_ids.contains(id))
        .collect();
    Ok((train, test))
}

/// Lateral ramp duration of a synthetic lane change, in seconds.
const LANE_CHANGE_S: f64 = 3.0;

struct SimVehicle {
    id: u64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    vx: f64,
    lane: usize,
    /// Remaining lane-change time and target lane center, if changing.
    change: Option<(f64, f64)>,
}

/// Generate a deterministic bidirectional highway scene.
///
/// Lanes `0..n_lanes` (lower half) flow +x, lanes `n_lanes..2*n_lanes`
/// (upper half) flow −x. Vehicles cruise at a constant per-vehicle speed;
/// a lane change ramps `cy` linearly to the adjacent lane center over
/// 3 s. Vehicles leaving the longitudinal extent are dropped and a fresh
/// vehicle (new id) enters at the same lane's entry edge, so sequences
/// exercise appearing and disappearing traffic.
pub fn synth_highway(cfg: &SynthConfig) -> Result<SceneSequence> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dt = 1.0 / cfg.rate_hz;
    let n_frames = (cfg.duration_s * cfg.rate_hz).round() as usize + 1;
    let total_lanes = 2 * cfg.n_lanes;
    let extent_y = total_lanes as f64 * cfg.lane_width;
    let lane_cy = |lane: usize| (lane as f64 + 0.5) * cfg.lane_width;

    let draw_speed = {
        let (lo, hi) = cfg.speed_range;
        move |rng: &mut ChaCha8Rng| rng.gen_range(lo..=hi)
    };
    let draw_dims =
        |rng: &mut ChaCha8Rng| (rng.gen_range(3.6..=4.4), rng.gen_range(1.6..=2.0));

    // Initial placement: lanes round-robin, longitudinally spread with jitter.
    let mut next_id = 1u64;
    let mut vehicles: Vec<SimVehicle> = Vec::with_capacity(cfg.n_vehicles);
    let per_lane = cfg.n_vehicles.div_ceil(total_lanes.max(1));
    let spacing = cfg.extent_x / per_lane.max(1) as f64;
    for i in 0..cfg.n_vehicles {
        let lane = i % total_lanes;
        let slot = (i / total_lanes) as f64;
        let jitter = rng.gen_range(-0.25..=0.25) * spacing;
        let (w, h) = draw_dims(&mut rng);
        let speed = draw_speed(&mut rng);
        let dir = if lane < cfg.n_lanes { 1.0 } else { -1.0 };
        vehicles.push(SimVehicle {
            id: next_id,
            cx: (slot + 0.5) * spacing + jitter,
            cy: lane_cy(lane),
            w,
            h,
            vx: dir * speed,
            lane,
            change: None,
        });
        next_id += 1;
    }

    let mut frames = Vec::with_capacity(n_frames);
    for t in 0..n_frames {
        let mut snapshot: Vec<VehicleState> = vehicles
            .iter()
            .map(|v| VehicleState {
                id: v.id,
                cx: v.cx,
                cy: v.cy,
                w: v.w,
                h: v.h,
                vx: v.vx,
                vy: v
                    .change
                    .map_or(0.0, |(remaining, target)| (target - v.cy) / remaining.max(dt)),
            })
            .collect();
        snapshot.sort_by_key(|v| v.id);
        frames.push(Frame {
            t_index: t,
            vehicles: snapshot,
        });

        // Advance to the next frame.
        for v in vehicles.iter_mut() {
            v.cx += v.vx * dt;
            #[allow(clippy::collapsible_match)] // a guard here would need &mut rng
            match v.change {
                Some((remaining, target)) => {
                    if remaining <= dt {
                        v.cy = target; // settle exactly on the lane center
                        v.change = None;
                    } else {
                        v.cy += (target - v.cy) / remaining * dt;
                        v.change = Some((remaining - dt, target));
                    }
                }
                None if cfg.lane_change_prob > 0.0 => {
                    if rng.gen_bool((cfg.lane_change_prob * dt).min(1.0)) {
                        let half = if v.lane < cfg.n_lanes {
                            0..cfg.n_lanes
                        } else {
                            cfg.n_lanes..total_lanes
                        };
                        let mut options = Vec::new();
                        if v.lane > half.start {
                            options.push(v.lane - 1);
                        }
                        if v.lane + 1 < half.end {
                            options.push(v.lane + 1);
                        }
                        if !options.is_empty() {
                            let target = options[rng.gen_range(0..options.len())];
                            v.lane = target;
                            v.change = Some((LANE_CHANGE_S, lane_cy(target)));
                        }
                    }
                }
                None => {}
            }
        }
        // Replace vehicles that left the study area.
        for v in vehicles.iter_mut() {
            let gone = if v.vx >= 0.0 {
                v.cx - v.w / 2.0 > cfg.extent_x
            } else {
                v.cx + v.w / 2.0 < 0.0
            };
            if gone {
                let (w, h) = draw_dims(&mut rng);
                let speed = draw_speed(&mut rng);
                let dir = if v.lane < cfg.n_lanes { 1.0 } else { -1.0 };
                *v = SimVehicle {
                    id: next_id,
                    cx: if dir > 0.0 { -w / 2.0 } else { cfg.extent_x + w / 2.0 },
                    cy: lane_cy(v.lane),
                    w,
                    h,
                    vx: dir * speed,
                    lane: v.lane,
                    change: None,
                };
                next_id += 1;
            }
        }
    }

    Ok(SceneSequence {
        frames,
        rate_hz: cfg.rate_hz,
        extent_x: cfg.extent_x,
        extent_y,
    })
}

/// Serialize a sequence as diffable decimal text: one header line, one
/// `frame` line per frame, one vehicle per line. `f64` values print in
/// Rust's shortest round-trip form, so write→read is lossless.
pub fn write_scenes<W: Write>(seq: &SceneSequence, mut out: W) -> Result<()> {
    writeln!(
        out,
        "bevscenes 1 {} {} {} {}",
        seq.rate_hz,
        seq.extent_x,
        seq.extent_y,
        seq.frames.len()
    )?;
    for f in &seq.frames {
        writeln!(out, "frame {} {}", f.t_index, f.vehicles.len())?;
        for v in &f.vehicles {
            writeln!(
                out,
                "{} {} {} {} {} {} {}",
                v.id, v.cx, v.cy, v.w, v.h, v.vx, v.vy
            )?;
        }
    }
    Ok(())
}

/// Parse the format written by [`write_scenes`].
pub fn read_scenes<R: BufRead>(input: R) -> Result<SceneSequence> {
    let mut lines = input.lines().enumerate();
    let parse_err = |line: usize, msg: String| Error::Parse { line: line + 1, msg };
    let (lno, header) = lines
        .next()
        .ok_or(Error::Truncated)
        .and_then(|(i, l)| Ok((i, l?)))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 6 || fields[0] != "bevscenes" {
        return Err(parse_err(lno, "expected 'bevscenes 1 rate ex ey n'".into()));
    }
    if fields[1] != "1" {
        return Err(Error::BadVersion {
            expected: 1,
            found: fields[1].parse().unwrap_or(0),
        });
    }
    let num = |s: &str, lno: usize| -> Result<f64> {
        s.parse()
            .map_err(|_| parse_err(lno, format!("expected a number, got '{s}'")))
    };
    let rate_hz = num(fields[2], lno)?;
    let extent_x = num(fields[3], lno)?;
    let extent_y = num(fields[4], lno)?;
    let n_frames = num(fields[5], lno)? as usize;

    let mut frames = Vec::with_capacity(n_frames);
    for _ in 0..n_frames {
        let (lno, line) = lines
            .next()
            .ok_or(Error::Truncated)
            .and_then(|(i, l)| Ok((i, l?)))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 || fields[0] != "frame" {
            return Err(parse_err(lno, "expected 'frame t n'".into()));
        }
        let t_index = num(fields[1], lno)? as usize;
        let n_vehicles = num(fields[2], lno)? as usize;
        let mut vehicles = Vec::with_capacity(n_vehicles);
        for _ in 0..n_vehicles {
            let (lno, line) = lines
                .next()
                .ok_or(Error::Truncated)
                .and_then(|(i, l)| Ok((i, l?)))?;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(parse_err(lno, "expected 7 vehicle fields".into()));
            }
            vehicles.push(VehicleState {
                id: num(fields[0], lno)? as u64,
                cx: num(fields[1], lno)?,
                cy: num(fields[2], lno)?,
                w: num(fields[3], lno)?,
                h: num(fields[4], lno)?,
                vx: num(fields[5], lno)?,
                vy: num(fields[6], lno)?,
            });
        }
        frames.push(Frame { t_index, vehicles });
    }
    Ok(SceneSequence {
        frames,
        rate_hz,
        extent_x,
        extent_y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tracks(body: &str) -> String {
        format!("frame,id,x,y,width,height\n{body}")
    }

    #[test]
    fn ingest_converts_corner_to_center() {
        let seq = ingest_tracks(&tracks("1,3,5.0,2.0,5.0,2.0"), 25.0).unwrap();
        assert_eq!(seq.frames.len(), 1);
        let v = &seq.frames[0].vehicles[0];
        assert_eq!((v.cx, v.cy, v.w, v.h), (7.5, 3.0, 5.0, 2.0));
        assert_eq!(v.id, 3);
    }

    #[test]
    fn ingest_empty_body_yields_zero_frames() {
        let seq = ingest_tracks(&tracks(""), 25.0).unwrap();
        assert!(seq.frames.is_empty());
    }

    #[test]
    fn ingest_groups_rows_sharing_a_frame() {
        let seq = ingest_tracks(&tracks("1,1,0,0,4,2\n1,2,10,0,4,2"), 25.0).unwrap();
        assert_eq!(seq.frames.len(), 1);
        assert_eq!(seq.frames[0].vehicles.len(), 2);
    }

    #[test]
    fn ingest_is_insensitive_to_row_order() {
        let a = ingest_tracks(&tracks("2,1,0,0,4,2\n1,2,10,0,4,2\n1,1,3,0,4,2"), 25.0).unwrap();
        let b = ingest_tracks(&tracks("1,1,3,0,4,2\n1,2,10,0,4,2\n2,1,0,0,4,2"), 25.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames[0].vehicles[0].id, 1);
    }

    #[test]
    fn ingest_names_the_missing_column() {
        let err = ingest_tracks("frame,id,x,y,width\n", 25.0).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "height"));
    }

    #[test]
    fn ingest_reports_the_offending_row() {
        let err = ingest_tracks(&tracks("1,1,oops,0,4,2"), 25.0).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("'x'"), "{msg}");
            }
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn ingest_carries_velocities_when_present() {
        let text = "frame,id,x,y,width,height,xVelocity,yVelocity\n1,1,0,0,4,2,31.5,-0.2\n";
        let seq = ingest_tracks(text, 25.0).unwrap();
        let v = &seq.frames[0].vehicles[0];
        assert_eq!((v.vx, v.vy), (31.5, -0.2));
    }

    fn seq_of(n: usize, rate: f64) -> SceneSequence {
        SceneSequence {
            frames: (0..n)
                .map(|t| Frame {
                    t_index: t,
                    vehicles: vec![],
                })
                .collect(),
            rate_hz: rate,
            extent_x: 100.0,
            extent_y: 8.0,
        }
    }

    #[test]
    fn downsample_25hz_to_5hz() {
        let out = downsample(&seq_of(25, 25.0), 5).unwrap();
        assert_eq!(out.frames.len(), 5);
        assert_eq!(out.rate_hz, 5.0);
        assert_eq!(
            out.frames.iter().map(|f| f.t_index).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4]
        );
    }

    #[test]
    fn downsample_identity() {
        let seq = seq_of(7, 25.0);
        assert_eq!(downsample(&seq, 1).unwrap(), seq);
    }

    #[test]
    fn downsample_partial_tail() {
        // 7 frames, keep every 5th: positions {0, 5} survive.
        let out = downsample(&seq_of(7, 25.0), 5).unwrap();
        assert_eq!(out.frames.len(), 2);
    }

    #[test]
    fn downsample_rejects_zero() {
        assert!(downsample(&seq_of(3, 25.0), 0).is_err());
    }

    #[test]
    fn downsample_composes() {
        let seq = seq_of(60, 30.0);
        let ab = downsample(&downsample(&seq, 2).unwrap(), 3).unwrap();
        let once = downsample(&seq, 6).unwrap();
        assert_eq!(ab, once);
    }

    #[test]
    fn split_matches_published_partition() {
        let ids: Vec<u64> = (1..=25).collect();
        let train: Vec<u64> = (1..=20).collect();
        let test: Vec<u64> = (21..=25).collect();
        let (tr, te) = split(&ids, &train, &test).unwrap();
        assert_eq!(tr.len(), 20);
        assert_eq!(te.len(), 5);
        assert_eq!(te, test);
    }

    #[test]
    fn split_allows_empty_train() {
        let (tr, te) = split(&[1, 2], &[], &[1]).unwrap();
        assert!(tr.is_empty());
        assert_eq!(te, vec![1]);
    }

    #[test]
    fn split_rejects_overlap() {
        assert!(split(&[1, 2], &[1], &[1, 2]).is_err());
    }

    #[test]
    fn synth_is_deterministic() {
        let cfg = SynthConfig {
            duration_s: 10.0,
            lane_change_prob: 0.2,
            ..SynthConfig::default()
        };
        assert_eq!(synth_highway(&cfg).unwrap(), synth_highway(&cfg).unwrap());
    }

    #[test]
    fn synth_without_lane_changes_keeps_cy_constant() {
        let cfg = SynthConfig {
            duration_s: 30.0,
            ..SynthConfig::default()
        };
        let seq = synth_highway(&cfg).unwrap();
        let mut seen: std::collections::HashMap<u64, f64> = Default::default();
        for f in &seq.frames {
            for v in &f.vehicles {
                let cy = *seen.entry(v.id).or_insert(v.cy);
                assert_eq!(v.cy, cy, "vehicle {} drifted laterally", v.id);
            }
        }
    }

    #[test]
    fn synth_single_vehicle_kinematics() {
        // 30 m/s at 5 Hz advances exactly 6 m per frame.
        let cfg = SynthConfig {
            n_vehicles: 1,
            speed_range: (30.0, 30.0),
            duration_s: 2.0,
            extent_x: 1000.0,
            ..SynthConfig::default()
        };
        let seq = synth_highway(&cfg).unwrap();
        let positions: Vec<f64> = seq
            .frames
            .iter()
            .map(|f| f.vehicle(1).expect("vehicle 1 stays in extent").cx)
            .collect();
        for pair in positions.windows(2) {
            assert_eq!(pair[1] - pair[0], 6.0);
        }
    }

    #[test]
    fn synth_step_length_is_constant_per_vehicle() {
        let cfg = SynthConfig {
            duration_s: 60.0,
            ..SynthConfig::default()
        };
        let seq = synth_highway(&cfg).unwrap();
        let mut last: std::collections::HashMap<u64, (f64, Option<f64>)> = Default::default();
        for f in &seq.frames {
            for v in &f.vehicles {
                let entry = last.entry(v.id).or_insert((v.cx, None));
                let step = v.cx - entry.0;
                if let Some(prev_step) = entry.1 {
                    if step != 0.0 {
                        assert!((step - prev_step).abs() < 1e-9);
                    }
                }
                *entry = (v.cx, if step != 0.0 { Some(step) } else { entry.1 });
            }
        }
    }

    #[test]
    fn synth_directions_follow_lane_halves() {
        let cfg = SynthConfig {
            n_vehicles: 8,
            duration_s: 1.0,
            ..SynthConfig::default()
        };
        let seq = synth_highway(&cfg).unwrap();
        let half = 2.0 * cfg.lane_width;
        for v in &seq.frames[0].vehicles {
            if v.cy < half {
                assert!(v.vx > 0.0);
            } else {
                assert!(v.vx < 0.0);
            }
        }
    }

    #[test]
    fn synth_respawns_use_fresh_ids() {
        let cfg = SynthConfig {
            n_vehicles: 4,
            duration_s: 120.0,
            ..SynthConfig::default()
        };
        let seq = synth_highway(&cfg).unwrap();
        let mut seen_gone: std::collections::HashSet<u64> = Default::default();
        let mut present_before: std::collections::HashSet<u64> = Default::default();
        for f in &seq.frames {
            let ids: std::collections::HashSet<u64> =
                f.vehicles.iter().map(|v| v.id).collect();
            for id in &present_before {
                if !ids.contains(id) {
                    seen_gone.insert(*id);
                }
            }
            for id in &ids {
                assert!(!seen_gone.contains(id), "id {id} reappeared");
            }
            present_before = ids;
        }
        assert!(!seen_gone.is_empty(), "test scene should have turnover");
    }

    #[test]
    fn scene_text_round_trips() {
        let cfg = SynthConfig {
            duration_s: 5.0,
            lane_change_prob: 0.3,
            ..SynthConfig::default()
        };
        let seq = synth_highway(&cfg).unwrap();
        let mut buf = Vec::new();
        write_scenes(&seq, &mut buf).unwrap();
        let back = read_scenes(&buf[..]).unwrap();
        assert_eq!(seq, back);
    }

    #[test]
    fn scene_text_truncation_is_detected() {
        let seq = synth_highway(&SynthConfig {
            duration_s: 1.0,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_scenes(&seq, &mut buf).unwrap();
        let cut = &buf[..buf.len() / 2];
        // Cutting mid-file loses vehicles or whole frames.
        assert!(read_scenes(cut).is_err());
    }
}
