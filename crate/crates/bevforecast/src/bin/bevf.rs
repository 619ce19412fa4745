//! `bevf` — bird's-eye-view trajectory forecasting pipeline.
//!
//! One subcommand per pipeline stage: scene acquisition (`ingest`,
//! `synth`), rasterization, training, inference (`predict`, `recurse`),
//! position extraction, evaluation, and architecture inspection.
//! Settings come from built-in defaults, overridden by `--config FILE`
//! (key=value lines), overridden by flags. Every subcommand is
//! deterministic given its flags and seeds.
//!
//! Exit codes: 0 success, 1 runtime failure (one-line diagnostic on
//! stderr), 2 usage error.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ndarray::Axis;

use bevforecast::bev::{build_sample, read_pgm, render_frame, write_pgm, BevGrid, GridSpec};
use bevforecast::config::Config;
use bevforecast::eval::{
    evaluate_constant_velocity, evaluate_net, evaluate_zero_motion, recursive_predict, EvalReport,
};
use bevforecast::extract::extract_positions;
use bevforecast::net::{build_network, count_params, min_input_size, receptive_field, Head};
use bevforecast::scenes::{
    downsample, ingest_tracks, read_scenes, synth_highway, write_scenes, SceneSequence,
    SynthConfig,
};
use bevforecast::train::{read_checkpoint, train, write_checkpoint, Momentum};

#[derive(Parser)]
#[command(
    name = "bevf",
    version,
    about = "Bird's-eye-view highway trajectory forecasting pipeline"
)]
struct Cli {
    /// Key=value config file; flags override file values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parallel stages (fallback: BEVF_THREADS env
    /// var, then all available cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Convert a tracks CSV (columns frame,id,x,y,width,height and
    /// optionally xVelocity,yVelocity; x/y = box corner) to a scene file.
    Ingest {
        /// Input tracks CSV.
        #[arg(long, value_name = "FILE")]
        tracks: PathBuf,
        /// Recording rate of the tracks file in Hz.
        #[arg(long, value_name = "HZ")]
        rate: f64,
        /// Keep every Nth frame (downsample), e.g. 5 turns 25 Hz into 5 Hz.
        #[arg(long, value_name = "N", default_value_t = 1)]
        keep_every: usize,
        /// Output scene file.
        #[arg(long, short, value_name = "FILE")]
        out: PathBuf,
    },

    /// Generate a synthetic multi-lane highway scene.
    Synth {
        #[arg(long, value_name = "SEED")]
        seed: Option<u64>,
        /// Scene length in seconds.
        #[arg(long, value_name = "S")]
        duration: Option<f64>,
        #[arg(long, value_name = "N")]
        vehicles: Option<usize>,
        /// Lanes per driving direction.
        #[arg(long, value_name = "N")]
        lanes: Option<usize>,
        /// Frame rate in Hz.
        #[arg(long, value_name = "HZ")]
        rate: Option<f64>,
        /// Longitudinal extent in meters.
        #[arg(long, value_name = "M")]
        extent: Option<f64>,
        /// Per-second lane-change probability.
        #[arg(long, value_name = "P")]
        lane_change_prob: Option<f64>,
        /// Minimum vehicle speed in m/s.
        #[arg(long, value_name = "V")]
        speed_min: Option<f64>,
        /// Maximum vehicle speed in m/s.
        #[arg(long, value_name = "V")]
        speed_max: Option<f64>,
        /// Output scene file.
        #[arg(long, short, value_name = "FILE")]
        out: PathBuf,
    },

    /// Render scene frames as PGM occupancy images.
    Rasterize {
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
        /// Frame index; omit to render every frame into --out as a directory.
        #[arg(long, value_name = "T")]
        frame: Option<usize>,
        /// Output PGM file (with --frame) or directory (without).
        #[arg(long, short, value_name = "PATH")]
        out: PathBuf,
    },

    /// Train the forecasting network on a scene; writes a checkpoint and
    /// a per-step loss CSV.
    Train {
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
        /// Output checkpoint file.
        #[arg(long, short, value_name = "FILE")]
        out: PathBuf,
        /// Loss CSV path (default: checkpoint path with .loss.csv).
        #[arg(long, value_name = "FILE")]
        loss: Option<PathBuf>,
        /// Continue from an existing checkpoint instead of initializing.
        #[arg(long, value_name = "FILE")]
        resume: Option<PathBuf>,
        #[arg(long, value_name = "LR")]
        lr: Option<f64>,
        #[arg(long, value_name = "M")]
        momentum: Option<f64>,
        /// Gradient-norm clip threshold (0 disables).
        #[arg(long, value_name = "C")]
        clip: Option<f64>,
        #[arg(long, value_name = "N")]
        epochs: Option<usize>,
        #[arg(long, value_name = "SEED")]
        seed: Option<u64>,
        /// Network depth (resolution levels).
        #[arg(long, value_name = "N")]
        depth: Option<usize>,
        /// First-level feature maps.
        #[arg(long, value_name = "K")]
        base_features: Option<usize>,
        /// Output head: linear, tanh, or clipped_relu.
        #[arg(long, value_name = "HEAD")]
        head: Option<String>,
        /// Frames per stack (input depth = predicted horizons).
        #[arg(long, value_name = "D")]
        d: Option<usize>,
    },

    /// Run the network once at scene position T and write the predicted
    /// future grids as PGMs.
    Predict {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
        /// Time index of the last observed frame.
        #[arg(long, value_name = "T")]
        t: usize,
        /// Output directory for pred_NN.pgm files.
        #[arg(long, short, value_name = "DIR")]
        out: PathBuf,
    },

    /// Extract subpixel vehicle positions from a PGM occupancy image.
    Extract {
        #[arg(long, value_name = "FILE")]
        image: PathBuf,
        /// Minimum peak probability.
        #[arg(long, value_name = "P")]
        pmin: Option<f64>,
        /// Output CSV (default: stdout).
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Score a model (or a baseline) on a scene: per-horizon mean
    /// absolute errors, matched/missed/spurious counts.
    Evaluate {
        /// Checkpoint to score; omit when using --baseline.
        #[arg(long, value_name = "FILE", required_unless_present = "baseline")]
        model: Option<PathBuf>,
        /// Score a baseline instead: "zero" (keep last positions) or
        /// "cv" (constant-velocity extrapolation).
        #[arg(long, value_name = "NAME")]
        baseline: Option<String>,
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
        /// Report CSV path (the table always prints to stdout).
        #[arg(long, short, value_name = "FILE")]
        out: Option<PathBuf>,
    },

    /// Feed predictions back as inputs to extend the horizon; writes
    /// every intermediate output stack as PGMs.
    Recurse {
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        #[arg(long, value_name = "FILE")]
        scene: PathBuf,
        /// Time index of the last observed frame.
        #[arg(long, value_name = "T")]
        t: usize,
        /// Number of recursive applications.
        #[arg(long, value_name = "N")]
        steps: usize,
        /// Output directory for step_SS_chan_CC.pgm files.
        #[arg(long, short, value_name = "DIR")]
        out: PathBuf,
    },

    /// Print receptive field, minimum input size, and parameter count
    /// per depth.
    Inspect {
        /// Single depth to report; omit for depths 1..=7.
        #[arg(long, value_name = "N")]
        depth: Option<usize>,
        /// First-level feature maps (default from config).
        #[arg(long, value_name = "K")]
        base_features: Option<usize>,
        /// Stack depth / channel count (default from config).
        #[arg(long, value_name = "D")]
        d: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("bevf: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    init_thread_pool(cli.threads)?;
    let cfg = load_config(cli.config.as_deref())?;
    match cli.cmd {
        Cmd::Ingest {
            tracks,
            rate,
            keep_every,
            out,
        } => cmd_ingest(&tracks, rate, keep_every, &out),
        Cmd::Synth {
            seed,
            duration,
            vehicles,
            lanes,
            rate,
            extent,
            lane_change_prob,
            speed_min,
            speed_max,
            out,
        } => cmd_synth(
            seed,
            duration,
            vehicles,
            lanes,
            rate,
            extent,
            lane_change_prob,
            (speed_min, speed_max),
            &out,
        ),
        Cmd::Rasterize { scene, frame, out } => cmd_rasterize(&cfg, &scene, frame, &out),
        Cmd::Train {
            scene,
            out,
            loss,
            resume,
            lr,
            momentum,
            clip,
            epochs,
            seed,
            depth,
            base_features,
            head,
            d,
        } => {
            let mut cfg = cfg;
            if let Some(v) = lr {
                cfg.train.lr = v;
            }
            if let Some(v) = momentum {
                cfg.train.momentum = v;
            }
            if let Some(v) = clip {
                cfg.train.clip = v;
            }
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = seed {
                cfg.train.seed = v;
            }
            if let Some(v) = depth {
                cfg.net_depth = v;
            }
            if let Some(v) = base_features {
                cfg.net_base_features = v;
            }
            if let Some(v) = &head {
                cfg.net_head = v.parse::<Head>()?;
            }
            if let Some(v) = d {
                cfg.d = v;
            }
            cfg.validate()?;
            cmd_train(&cfg, &scene, &out, loss.as_deref(), resume.as_deref())
        }
        Cmd::Predict {
            model,
            scene,
            t,
            out,
        } => cmd_predict(&cfg, &model, &scene, t, &out),
        Cmd::Extract { image, pmin, out } => {
            let mut cfg = cfg;
            if let Some(p) = pmin {
                cfg.extract.p_min = p;
            }
            cfg.extract.validate()?;
            cmd_extract(&cfg, &image, out.as_deref())
        }
        Cmd::Evaluate {
            model,
            baseline,
            scene,
            out,
        } => cmd_evaluate(&cfg, model.as_deref(), baseline.as_deref(), &scene, out.as_deref()),
        Cmd::Recurse {
            model,
            scene,
            t,
            steps,
            out,
        } => cmd_recurse(&cfg, &model, &scene, t, steps, &out),
        Cmd::Inspect {
            depth,
            base_features,
            d,
        } => cmd_inspect(&cfg, depth, base_features, d),
    }
}

/// Bound rayon's worker count: --threads flag, else BEVF_THREADS, else
/// rayon's default (all available cores).
fn init_thread_pool(flag: Option<usize>) -> anyhow::Result<()> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var("BEVF_THREADS") {
            Ok(s) => Some(
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| anyhow::anyhow!("BEVF_THREADS must be an integer, got {s:?}"))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            anyhow::bail!("thread count must be >= 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow::anyhow!("thread pool: {e}"))?;
    }
    Ok(())
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| anyhow::anyhow!("reading config {}: {e}", p.display()))?;
            Ok(Config::parse_str(&text)?)
        }
        None => Ok(Config::default()),
    }
}

fn read_scene_file(path: &Path) -> anyhow::Result<SceneSequence> {
    let file = fs::File::open(path)
        .map_err(|e| anyhow::anyhow!("opening scene {}: {e}", path.display()))?;
    Ok(read_scenes(std::io::BufReader::new(file))?)
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))
}

fn cmd_ingest(tracks: &Path, rate: f64, keep_every: usize, out: &Path) -> anyhow::Result<()> {
    let text = fs::read_to_string(tracks)
        .map_err(|e| anyhow::anyhow!("reading tracks {}: {e}", tracks.display()))?;
    let mut seq = ingest_tracks(&text, rate)?;
    if keep_every > 1 {
        seq = downsample(&seq, keep_every)?;
    }
    let mut buf = Vec::new();
    write_scenes(&seq, &mut buf)?;
    write_file(out, &buf)?;
    println!(
        "ingested {} frames at {} Hz ({} vehicles in frame 0) -> {}",
        seq.frames.len(),
        seq.rate_hz,
        seq.frames.first().map_or(0, |f| f.vehicles.len()),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    seed: Option<u64>,
    duration: Option<f64>,
    vehicles: Option<usize>,
    lanes: Option<usize>,
    rate: Option<f64>,
    extent: Option<f64>,
    lane_change_prob: Option<f64>,
    speed: (Option<f64>, Option<f64>),
    out: &Path,
) -> anyhow::Result<()> {
    let mut sc = SynthConfig::default();
    if let Some(v) = seed {
        sc.seed = v;
    }
    if let Some(v) = duration {
        sc.duration_s = v;
    }
    if let Some(v) = vehicles {
        sc.n_vehicles = v;
    }
    if let Some(v) = lanes {
        sc.n_lanes = v;
    }
    if let Some(v) = rate {
        sc.rate_hz = v;
    }
    if let Some(v) = extent {
        sc.extent_x = v;
    }
    if let Some(v) = lane_change_prob {
        sc.lane_change_prob = v;
    }
    if let Some(v) = speed.0 {
        sc.speed_range.0 = v;
    }
    if let Some(v) = speed.1 {
        sc.speed_range.1 = v;
    }
    let seq = synth_highway(&sc)?;
    let mut buf = Vec::new();
    write_scenes(&seq, &mut buf)?;
    write_file(out, &buf)?;
    println!(
        "synthesized {} frames at {} Hz, {} vehicles -> {}",
        seq.frames.len(),
        seq.rate_hz,
        sc.n_vehicles,
        out.display()
    );
    Ok(())
}

fn cmd_rasterize(
    cfg: &Config,
    scene: &Path,
    frame: Option<usize>,
    out: &Path,
) -> anyhow::Result<()> {
    let seq = read_scene_file(scene)?;
    match frame {
        Some(t) => {
            let f = seq
                .frames
                .get(t)
                .ok_or_else(|| anyhow::anyhow!("frame {t} out of range (scene has {})", seq.frames.len()))?;
            write_file(out, &write_pgm(&render_frame(f, &cfg.grid)))?;
            println!("rendered frame {t} -> {}", out.display());
        }
        None => {
            fs::create_dir_all(out)
                .map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
            use rayon::prelude::*;
            let results: Vec<anyhow::Result<()>> = seq
                .frames
                .par_iter()
                .enumerate()
                .map(|(t, f)| {
                    write_file(
                        &out.join(format!("frame_{t:05}.pgm")),
                        &write_pgm(&render_frame(f, &cfg.grid)),
                    )
                })
                .collect();
            for r in results {
                r?;
            }
            println!("rendered {} frames -> {}", seq.frames.len(), out.display());
        }
    }
    Ok(())
}

fn cmd_train(
    cfg: &Config,
    scene: &Path,
    out: &Path,
    loss: Option<&Path>,
    resume: Option<&Path>,
) -> anyhow::Result<()> {
    let seq = read_scene_file(scene)?;
    let (mut net, mut momentum, start_iteration) = match resume {
        Some(p) => {
            let bytes =
                fs::read(p).map_err(|e| anyhow::anyhow!("reading checkpoint {}: {e}", p.display()))?;
            let ck = read_checkpoint(&bytes)?;
            (ck.net, ck.momentum, ck.iteration)
        }
        None => {
            let net = build_network(&cfg.net_spec(), cfg.train.seed)?;
            let momentum = Momentum::zeros_like(&net);
            (net, momentum, 0)
        }
    };
    let mut loss_rows = String::from("step,loss\n");
    let summary = train(
        &mut net,
        &mut momentum,
        &seq,
        &cfg.grid,
        cfg.d,
        &cfg.train,
        start_iteration,
        |step, loss| {
            loss_rows.push_str(&format!("{step},{loss:.9e}\n"));
        },
    )?;
    let final_iteration = start_iteration + summary.steps;
    write_file(out, &write_checkpoint(&net, &momentum, final_iteration))?;
    let loss_path = loss
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.with_extension("loss.csv"));
    write_file(&loss_path, loss_rows.as_bytes())?;
    println!(
        "trained {} steps (total {final_iteration}), last-epoch mean loss {:.6e} -> {} + {}",
        summary.steps,
        summary.last_epoch_mean_loss,
        out.display(),
        loss_path.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> anyhow::Result<bevforecast::net::Network> {
    let bytes =
        fs::read(path).map_err(|e| anyhow::anyhow!("reading checkpoint {}: {e}", path.display()))?;
    Ok(read_checkpoint(&bytes)?.net)
}

fn cmd_predict(cfg: &Config, model: &Path, scene: &Path, t: usize, out: &Path) -> anyhow::Result<()> {
    let net = load_model(model)?;
    let seq = read_scene_file(scene)?;
    let d = net.spec.in_channels;
    let sample = build_sample(&seq, t, d, &cfg.grid)?;
    let pred = net.forward(&sample.input)?;
    fs::create_dir_all(out).map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
    for k in 0..d {
        let grid = BevGrid::from_values(cfg.grid, pred.index_axis(Axis(0), k).to_owned())?;
        write_file(&out.join(format!("pred_{k:02}.pgm")), &write_pgm(&grid))?;
    }
    println!(
        "predicted {d} horizons from t={t} ({}..{} s) -> {}",
        sample.dt_s,
        d as f64 * sample.dt_s,
        out.display()
    );
    Ok(())
}

fn cmd_extract(cfg: &Config, image: &Path, out: Option<&Path>) -> anyhow::Result<()> {
    let bytes =
        fs::read(image).map_err(|e| anyhow::anyhow!("reading image {}: {e}", image.display()))?;
    let (h, w, values) = read_pgm(&bytes)?;
    let spec = GridSpec {
        width_px: w,
        height_px: h,
        ..cfg.grid
    };
    let grid = BevGrid::from_values(spec, values)?;
    let estimates = extract_positions(&grid, &cfg.extract);
    let mut csv = String::from("x_m,y_m,peak_p,row_px,col_px\n");
    for e in &estimates {
        csv.push_str(&format!(
            "{:.6},{:.6},{:.6},{},{}\n",
            e.x, e.y, e.peak_p, e.discrete_rc.0, e.discrete_rc.1
        ));
    }
    match out {
        Some(p) => {
            write_file(p, csv.as_bytes())?;
            println!("extracted {} positions -> {}", estimates.len(), p.display());
        }
        None => {
            print!("{csv}");
        }
    }
    Ok(())
}

fn cmd_evaluate(
    cfg: &Config,
    model: Option<&Path>,
    baseline: Option<&str>,
    scene: &Path,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    let seq = read_scene_file(scene)?;
    let report: EvalReport = match (model, baseline) {
        (_, Some("zero")) => evaluate_zero_motion(&seq, cfg.d)?,
        (_, Some("cv")) => evaluate_constant_velocity(&seq, cfg.d)?,
        (_, Some(other)) => anyhow::bail!("unknown baseline {other:?} (expected zero or cv)"),
        (Some(p), None) => {
            let net = load_model(p)?;
            let d = net.spec.in_channels;
            evaluate_net(&net, &seq, &cfg.grid, d, &cfg.extract)?
        }
        (None, None) => unreachable!("clap enforces --model or --baseline"),
    };
    print!("{}", render_report_table(&report));
    if let Some(p) = out {
        write_file(p, report.to_csv().as_bytes())?;
        println!("report -> {}", p.display());
    }
    Ok(())
}

fn render_report_table(report: &EvalReport) -> String {
    let mut s = format!(
        "{} positions evaluated\n{:>9}  {:>9}  {:>9}  {:>8}  {:>7}  {:>8}\n",
        report.n_positions, "horizon_s", "eps_x_m", "eps_y_m", "matched", "missed", "spurious"
    );
    for m in &report.horizons {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |e| format!("{e:.3}"));
        s.push_str(&format!(
            "{:>9.1} {:>10} {:>10} {:>9} {:>8} {:>9}\n",
            m.horizon_s,
            fmt(m.eps_x),
            fmt(m.eps_y),
            m.n_matched,
            m.n_missed,
            m.n_spurious
        ));
    }
    s
}

fn cmd_recurse(
    cfg: &Config,
    model: &Path,
    scene: &Path,
    t: usize,
    steps: usize,
    out: &Path,
) -> anyhow::Result<()> {
    let net = load_model(model)?;
    let seq = read_scene_file(scene)?;
    let d = net.spec.in_channels;
    let sample = build_sample(&seq, t, d, &cfg.grid)?;
    let outputs = recursive_predict(&net, &sample.input, steps)?;
    fs::create_dir_all(out).map_err(|e| anyhow::anyhow!("creating {}: {e}", out.display()))?;
    for (s, stack) in outputs.iter().enumerate() {
        for k in 0..d {
            let grid = BevGrid::from_values(cfg.grid, stack.index_axis(Axis(0), k).to_owned())?;
            write_file(
                &out.join(format!("step_{s:02}_chan_{k:02}.pgm")),
                &write_pgm(&grid),
            )?;
        }
    }
    println!(
        "recursed {steps} steps from t={t} ({} grids) -> {}",
        steps * d,
        out.display()
    );
    Ok(())
}

fn cmd_inspect(
    cfg: &Config,
    depth: Option<usize>,
    base_features: Option<usize>,
    d: Option<usize>,
) -> anyhow::Result<()> {
    let k = base_features.unwrap_or(cfg.net_base_features);
    let d = d.unwrap_or(cfg.d);
    let depths: Vec<usize> = match depth {
        Some(n) => vec![n],
        None => (1..=7).collect(),
    };
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "{:>5}  {:>15}  {:>9}  {:>12}  (k={k}, d={d})",
        "depth", "receptive_field", "min_input", "params"
    )?;
    for n in depths {
        let spec = bevforecast::net::NetSpec {
            depth: n,
            base_features: k,
            in_channels: d,
            out_channels: d,
            head: cfg.net_head,
        };
        let params = count_params(&build_network(&spec, 0)?);
        writeln!(
            stdout,
            "{n:>5}  {:>14}px  {:>7}px  {params:>12}  (~{}k)",
            format!("\u{00b1}{}", receptive_field(n)),
            min_input_size(n),
            (params + 500) / 1000
        )?;
    }
    Ok(())
}
