//! Gaussian bird's-eye-view rasterization and sample-stack assembly.
//!
//! Each vehicle renders as an axis-aligned Gaussian whose standard
//! deviations are half the box extents; overlapping vehicles merge by
//! taking the pixelwise maximum, so values stay in [0,1] and read as
//! occupancy probability. Stacks pair `d` past grids (network input)
//! with `d` future grids (regression target), where future frames keep
//! only vehicles already present in the last past frame: traffic that
//! has not been observed yet cannot be a prediction target.
//!
//! File formats owned here:
//! - grids: binary PGM (`P5`), one byte per pixel, value = round(255·p);
//! - stacks: raw binary, magic `BEVS`, version `1`, then little-endian
//!   `d, height, width` (u32), `dt_s, x_m_per_px, y_m_per_px, origin_x,
//!   origin_y` (f64), then `input` and `target` planes as row-major f32.

use std::io::{Read, Write};

use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::scenes::{Frame, SceneSequence, VehicleState};

/// Gaussian support is cut at this many standard deviations when
/// rasterizing; the omitted contribution is below e^(−8).
const TRUNC_SIGMA: f64 = 4.0;

/// Grid geometry: pixel (r, c) samples the world point
/// `(origin.0 + c·x_m_per_px, origin.1 + r·y_m_per_px)` — no half-pixel
/// offset, so pixel (0,0) sits exactly on the origin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub x_m_per_px: f64,
    pub y_m_per_px: f64,
    /// World coordinate of pixel (0, 0).
    pub origin: (f64, f64),
}

impl Default for GridSpec {
    /// The full-scale highway grid: 512×64 px covering 512×32 m.
    fn default() -> Self {
        GridSpec {
            width_px: 512,
            height_px: 64,
            x_m_per_px: 1.0,
            y_m_per_px: 0.5,
            origin: (0.0, 0.0),
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::InvalidArgument("grid dims must be >= 1".into()));
        }
        if !(self.x_m_per_px > 0.0) || !(self.y_m_per_px > 0.0) {
            return Err(Error::InvalidArgument("resolutions must be > 0".into()));
        }
        Ok(())
    }

    /// World point sampled by pixel (r, c); accepts fractional indices.
    pub fn pixel_to_world(&self, r: f64, c: f64) -> (f64, f64) {
        (
            self.origin.0 + c * self.x_m_per_px,
            self.origin.1 + r * self.y_m_per_px,
        )
    }

    /// Real-valued pixel coordinates (r, c) of a world point; callers
    /// round where a discrete index is needed.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        (
            (y - self.origin.1) / self.y_m_per_px,
            (x - self.origin.0) / self.x_m_per_px,
        )
    }
}

/// An occupancy-probability raster: `values[[r, c]]` ∈ [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub values: Array2<f32>,
}

impl BevGrid {
    /// A zero grid of the spec's dimensions.
    pub fn zeros(spec: GridSpec) -> Self {
        BevGrid {
            spec,
            values: Array2::zeros((spec.height_px, spec.width_px)),
        }
    }

    pub fn from_values(spec: GridSpec, values: Array2<f32>) -> Result<Self> {
        if values.dim() != (spec.height_px, spec.width_px) {
            return Err(Error::Shape(format!(
                "grid values are {:?}, spec says {}x{}",
                values.dim(),
                spec.height_px,
                spec.width_px
            )));
        }
        Ok(BevGrid { spec, values })
    }
}

/// `d` past grids (channel 0 oldest, channel d−1 = time t) and `d`
/// future grids (channel k predicts t + (k+1)·dt), sharing one geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStack {
    pub spec: GridSpec,
    /// Shape `[d, height_px, width_px]`.
    pub input: Array3<f32>,
    /// Shape `[d, height_px, width_px]`.
    pub target: Array3<f32>,
    pub dt_s: f64,
}

impl SampleStack {
    pub fn d(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn input_channel(&self, k: usize) -> ArrayView2<'_, f32> {
        self.input.index_axis(ndarray::Axis(0), k)
    }

    pub fn target_channel(&self, k: usize) -> ArrayView2<'_, f32> {
        self.target.index_axis(ndarray::Axis(0), k)
    }
}

/// Occupancy probability contributed by one vehicle at a world point:
/// `exp(−((x−cx)/(√2·σx))² − ((y−cy)/(√2·σy))²)` with σ = half extent.
pub fn gaussian_at(v: &VehicleState, x: f64, y: f64) -> f64 {
    let sx = v.w / 2.0;
    let sy = v.h / 2.0;
    let dx = (x - v.cx) / (std::f64::consts::SQRT_2 * sx);
    let dy = (y - v.cy) / (std::f64::consts::SQRT_2 * sy);
    (-dx * dx - dy * dy).exp()
}

/// Rasterize one frame: every vehicle's Gaussian, merged by pixelwise
/// maximum. An empty frame renders as all zeros.
pub fn render_frame(frame: &Frame, spec: &GridSpec) -> BevGrid {
    let mut grid = BevGrid::zeros(*spec);
    for v in &frame.vehicles {
        splat_max(&mut grid.values, spec, v);
    }
    grid
}

/// Max-merge one vehicle's truncated Gaussian into `values`. The
/// Gaussian is separable, so per-axis factors are evaluated once.
fn splat_max(values: &mut Array2<f32>, spec: &GridSpec, v: &VehicleState) {
    let (sx, sy) = (v.w / 2.0, v.h / 2.0);
    let c_lo = ((v.cx - TRUNC_SIGMA * sx - spec.origin.0) / spec.x_m_per_px).ceil() as i64;
    let c_hi = ((v.cx + TRUNC_SIGMA * sx - spec.origin.0) / spec.x_m_per_px).floor() as i64;
    let r_lo = ((v.cy - TRUNC_SIGMA * sy - spec.origin.1) / spec.y_m_per_px).ceil() as i64;
    let r_hi = ((v.cy + TRUNC_SIGMA * sy - spec.origin.1) / spec.y_m_per_px).floor() as i64;
    let c_lo = c_lo.max(0) as usize;
    let c_hi = c_hi.min(spec.width_px as i64 - 1);
    let r_lo = r_lo.max(0) as usize;
    let r_hi = r_hi.min(spec.height_px as i64 - 1);
    if c_hi < c_lo as i64 || r_hi < r_lo as i64 {
        return;
    }
    let (c_hi, r_hi) = (c_hi as usize, r_hi as usize);

    let gx: Vec<f64> = (c_lo..=c_hi)
        .map(|c| {
            let x = spec.origin.0 + c as f64 * spec.x_m_per_px;
            let dx = (x - v.cx) / (std::f64::consts::SQRT_2 * sx);
            (-dx * dx).exp()
        })
        .collect();
    let gy: Vec<f64> = (r_lo..=r_hi)
        .map(|r| {
            let y = spec.origin.1 + r as f64 * spec.y_m_per_px;
            let dy = (y - v.cy) / (std::f64::consts::SQRT_2 * sy);
            (-dy * dy).exp()
        })
        .collect();
    for (r, gy_r) in (r_lo..=r_hi).zip(&gy) {
        for (c, gx_c) in (c_lo..=c_hi).zip(&gx) {
            let p = (gy_r * gx_c) as f32;
            let cell = &mut values[[r, c]];
            if p > *cell {
                *cell = p;
            }
        }
    }
}

/// Assemble the training sample anchored at frame position `t`: input
/// channels render frames `t−d+1..=t` as-is; target channels render
/// frames `t+1..=t+d` with vehicles absent from frame `t` removed.
pub fn build_sample(
    seq: &SceneSequence,
    t: usize,
    d: usize,
    spec: &GridSpec,
) -> Result<SampleStack> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be >= 1".into()));
    }
    if t + 1 < d {
        return Err(Error::Range(format!(
            "t={t} needs {} more history frame(s) for d={d}",
            d - 1 - t
        )));
    }
    if t + d >= seq.frames.len() {
        return Err(Error::Range(format!(
            "t={t} needs {} more future frame(s) for d={d} (sequence has {})",
            t + d + 1 - seq.frames.len(),
            seq.frames.len()
        )));
    }
    let (h, w) = (spec.height_px, spec.width_px);
    let mut input = Array3::zeros((d, h, w));
    let mut target = Array3::zeros((d, h, w));
    for k in 0..d {
        let grid = render_frame(&seq.frames[t + 1 + k - d], spec);
        input.index_axis_mut(ndarray::Axis(0), k).assign(&grid.values);
    }
    let present: Vec<u64> = seq.frames[t].vehicles.iter().map(|v| v.id).collect();
    for k in 0..d {
        let future = &seq.frames[t + 1 + k];
        let filtered = Frame {
            t_index: future.t_index,
            vehicles: future
                .vehicles
                .iter()
                .filter(|v| present.contains(&v.id))
                .cloned()
                .collect(),
        };
        let grid = render_frame(&filtered, spec);
        target.index_axis_mut(ndarray::Axis(0), k).assign(&grid.values);
    }
    Ok(SampleStack {
        spec: *spec,
        input,
        target,
        dt_s: 1.0 / seq.rate_hz,
    })
}

/// Encode a grid as a binary PGM (`P5`, maxval 255, byte = round(255·p)).
/// The output is bit-exact across platforms.
pub fn write_pgm(grid: &BevGrid) -> Vec<u8> {
    let (h, w) = grid.values.dim();
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(grid.values.iter().map(|&p| (255.0 * p).round() as u8));
    out
}

/// Decode a binary PGM written by [`write_pgm`]: returns (height, width,
/// values) with bytes mapped back to probabilities `byte/255`.
pub fn read_pgm(bytes: &[u8]) -> Result<(usize, usize, Array2<f32>)> {
    // Header: three whitespace-separated tokens after the magic, then a
    // single whitespace byte, then the payload.
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        let mut found = [0u8; 4];
        for (slot, b) in found.iter_mut().zip(bytes) {
            *slot = *b;
        }
        return Err(Error::BadMagic {
            expected: *b"P5\n\0",
            found,
        });
    }
    let mut pos = 2;
    let mut tokens = [0usize; 3];
    for token in tokens.iter_mut() {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        *token = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or(Error::Parse {
                line: 1,
                msg: "bad PGM header".into(),
            })?;
    }
    pos += 1; // the single whitespace byte before the payload
    let (w, h, maxval) = (tokens[0], tokens[1], tokens[2]);
    if maxval != 255 {
        return Err(Error::Parse {
            line: 1,
            msg: format!("unsupported PGM maxval {maxval}"),
        });
    }
    let payload = bytes.get(pos..pos + w * h).ok_or(Error::Truncated)?;
    let values = Array2::from_shape_vec(
        (h, w),
        payload.iter().map(|&b| b as f32 / 255.0).collect(),
    )
    .expect("payload length checked above");
    Ok((h, w, values))
}

/// Serialize a sample stack in the raw `BEVS` format (see module docs).
pub fn write_stack<W: Write>(stack: &SampleStack, mut out: W) -> Result<()> {
    let (d, h, w) = stack.input.dim();
    out.write_all(b"BEVS")?;
    out.write_all(&1u32.to_le_bytes())?;
    for dim in [d, h, w] {
        out.write_all(&(dim as u32).to_le_bytes())?;
    }
    for val in [
        stack.dt_s,
        stack.spec.x_m_per_px,
        stack.spec.y_m_per_px,
        stack.spec.origin.0,
        stack.spec.origin.1,
    ] {
        out.write_all(&val.to_le_bytes())?;
    }
    for plane in [&stack.input, &stack.target] {
        for &v in plane.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Deserialize the format written by [`write_stack`].
pub fn read_stack<R: Read>(mut input: R) -> Result<SampleStack> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(&mut input, &mut magic)?;
    if &magic != b"BEVS" {
        return Err(Error::BadMagic {
            expected: *b"BEVS",
            found: magic,
        });
    }
    let version = read_u32(&mut input)?;
    if version != 1 {
        return Err(Error::BadVersion {
            expected: 1,
            found: version,
        });
    }
    let d = read_u32(&mut input)? as usize;
    let h = read_u32(&mut input)? as usize;
    let w = read_u32(&mut input)? as usize;
    let mut reals = [0.0f64; 5];
    for r in reals.iter_mut() {
        let mut buf = [0u8; 8];
        read_exact_or_truncated(&mut input, &mut buf)?;
        *r = f64::from_le_bytes(buf);
    }
    let mut read_plane = || -> Result<Array3<f32>> {
        let mut data = vec![0f32; d * h * w];
        for v in data.iter_mut() {
            let mut buf = [0u8; 4];
            read_exact_or_truncated(&mut input, &mut buf)?;
            *v = f32::from_le_bytes(buf);
        }
        Ok(Array3::from_shape_vec((d, h, w), data).expect("shape matches length"))
    };
    let input_plane = read_plane()?;
    let target_plane = read_plane()?;
    let spec = GridSpec {
        width_px: w,
        height_px: h,
        x_m_per_px: reals[1],
        y_m_per_px: reals[2],
        origin: (reals[3], reals[4]),
    };
    Ok(SampleStack {
        spec,
        input: input_plane,
        target: target_plane,
        dt_s: reals[0],
    })
}

pub(crate) fn read_exact_or_truncated<R: Read>(input: &mut R, buf: &mut [u8]) -> Result<()> {
    input.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Truncated
        } else {
            Error::Io(e)
        }
    })
}

pub(crate) fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact_or_truncated(input, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
