//! Command-line front end. Every command echoes its resolved configuration
//! as one JSON line on stderr before doing any work.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::classes::NUM_CLASSES;
use crate::dataset::{
    gen_synthetic_scene, gen_trajectory, load_scene_dir, save_observation, save_scene_dir, GlobalScene,
    SceneParams, TrajectoryParams,
};
use crate::error::{Error, Result};
use crate::gaussian::{activate, GaussianConfig, GaussianMemory};
use crate::grid::{VoxelGrid, VoxelMask};
use crate::metrics::{lookback_eval, score};
use crate::pipeline::{run_frames, run_local, run_sequence_with, score_local, RunConfig};
use crate::refine::ConfidenceSchedule;
use crate::snapshot;

#[derive(Debug, Parser, Serialize)]
#[command(name = "occmem", version, about = "Semantic occupancy from a 3D Gaussian memory")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a synthetic room and a camera loop through it.
    GenScene(GenSceneArgs),
    /// Ray-cast depth and semantic images for every frame of a scene.
    Render(RenderArgs),
    /// Local prediction for a single frame.
    RunLocal(RunLocalArgs),
    /// Embodied run over a frame list, one score line per step.
    RunEmbodied(RunEmbodiedArgs),
    /// First-time vs look-back evaluation over the first k frames.
    Lookback(LookbackArgs),
    /// Score a predicted grid against ground truth under a mask.
    Eval(EvalArgs),
    /// Write a memory snapshot as an ASCII PLY point file.
    ExportPly(ExportPlyArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenSceneArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Room extent in meters.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [5.6, 4.8, 3.04])]
    pub extent: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    pub n_frames: usize,
    /// Also render observations.
    #[arg(long)]
    pub render: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
}

/// Knobs shared by the commands that run the pipeline.
#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    /// Spacing of the initial memory lattice (m).
    #[arg(long, default_value_t = 0.16)]
    pub interval: f64,
    /// Number of Gaussians for local prediction.
    #[arg(long, default_value_t = 16200)]
    pub local_count: usize,
    /// Largest Gaussian scale (m).
    #[arg(long, default_value_t = 0.08)]
    pub s_max: f64,
    /// Per-stage confidence for tagged Gaussians.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.0, 0.5])]
    pub theta: Vec<f64>,
    /// Read out tagged Gaussians only.
    #[arg(long)]
    pub only_tagged: bool,
}

impl PipelineArgs {
    pub fn config(&self) -> Result<RunConfig> {
        let cfg = RunConfig {
            gaussian: GaussianConfig {
                interval: self.interval,
                local_count: self.local_count,
                s_max: self.s_max,
                ..Default::default()
            },
            schedule: ConfidenceSchedule {
                theta_tagged: self.theta.clone(),
                theta_untagged: vec![0.0; self.theta.len()],
            },
            only_tagged: self.only_tagged,
            ..Default::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct RunLocalArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub frame: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RunEmbodiedArgs {
    #[arg(long)]
    pub scene: PathBuf,
    /// Frame indices, e.g. `0,1,2` or `0..30` (default: every frame).
    #[arg(long, value_parser = parse_frame_list)]
    pub frames: Option<FrameList>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Also write the grid and memory snapshot after every step.
    #[arg(long)]
    pub dump_steps: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LookbackArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// Bit-packed mask over the ground-truth grid (default: every voxel).
    #[arg(long)]
    pub mask: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExportPlyArgs {
    #[arg(long)]
    pub gmem: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub s_min: f64,
    #[arg(long, default_value_t = 0.08)]
    pub s_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameList(pub Vec<usize>);

/// Parses `0,1,2`, `0..5` or mixes such as `0..3,0..3`.
pub fn parse_frame_list(s: &str) -> std::result::Result<FrameList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: usize = a.parse().map_err(|_| format!("bad range start in `{part}`"))?;
            let b: usize = b.parse().map_err(|_| format!("bad range end in `{part}`"))?;
            out.extend(a..b);
        } else {
            out.push(part.parse().map_err(|_| format!("bad frame index `{part}`"))?);
        }
    }
    if out.is_empty() {
        return Err("empty frame list".into());
    }
    Ok(FrameList(out))
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code: 0 on success, 2 on usage errors, 1 on runtime
/// errors.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return 2;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| run(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn echo(cli: &Cli, resolved: serde_json::Value) {
    eprintln!("{}", json!({ "cli": cli, "resolved": resolved }));
}

fn load_rendered(dir: &Path) -> Result<GlobalScene> {
    let mut scene = load_scene_dir(dir)?;
    if !scene.is_rendered() {
        eprintln!("note: rendering missing observations in memory");
        scene.render_all();
    }
    Ok(scene)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenScene(a) => {
            let extent: [f64; 3] = a
                .extent
                .as_slice()
                .try_into()
                .map_err(|_| Error::InvalidConfig("--extent needs three values".into()))?;
            let params = SceneParams {
                extent,
                ..Default::default()
            };
            let traj = TrajectoryParams {
                n_frames: a.n_frames,
                ..Default::default()
            };
            echo(cli, json!({ "scene": params, "trajectory": traj }));
            let mut scene = gen_synthetic_scene(a.seed, &params)?;
            scene.frames = gen_trajectory(&scene, a.seed, &traj)?;
            if a.render {
                scene.render_all();
            }
            save_scene_dir(&scene, &a.out, Some(a.seed))?;
            println!("{}", json!({ "scene": scene.name, "dims": scene.grid.geometry.dims, "frames": scene.frames.len() }));
        }
        Command::Render(a) => {
            echo(cli, json!({}));
            let mut scene = load_scene_dir(&a.scene)?;
            scene.frames.iter_mut().for_each(|f| f.observation = None);
            scene.render_all();
            for (i, f) in scene.frames.iter().enumerate() {
                if let Some(obs) = &f.observation {
                    save_observation(obs, &a.scene, i)?;
                }
            }
            println!("{}", json!({ "rendered": scene.frames.len() }));
        }
        Command::RunLocal(a) => {
            let cfg = a.pipeline.config()?;
            echo(cli, json!({ "run": cfg }));
            let scene = load_rendered(&a.scene)?;
            let frame = scene
                .frames
                .get(a.frame)
                .ok_or(Error::IndexOutOfRange { index: a.frame, len: scene.frames.len() })?;
            let grid = run_local(frame, &scene.grid.geometry, &cfg, &cfg.oracle_refiner())?;
            grid.save(&a.out)?;
            let report = score_local(&grid, frame, &scene.grid)?;
            println!("{}", json!({ "frame": a.frame, "score": report.to_json() }));
        }
        Command::RunEmbodied(a) => {
            let mut cfg = a.pipeline.config()?;
            cfg.frames = a.frames.as_ref().map(|f| f.0.clone());
            echo(cli, json!({ "run": cfg }));
            let scene = load_rendered(&a.scene)?;
            fs::create_dir_all(&a.out)?;
            let mut lines = fs::File::create(a.out.join("scores.jsonl"))?;
            let out = a.out.clone();
            let res = run_sequence_with(&scene, &cfg, &cfg.oracle_refiner(), |r, grid, state| {
                let line = r.to_json().to_string();
                println!("{line}");
                writeln!(lines, "{line}")?;
                if a.dump_steps {
                    grid.save(out.join(format!("step_{:03}.occg", r.step)))?;
                    snapshot::save(&state.memory, out.join(format!("step_{:03}.gmem", r.step)))?;
                }
                Ok(())
            })?;
            res.grid.save(a.out.join("occ_pred.occg"))?;
            res.state.explored()?.save(a.out.join("explored.bin"))?;
            snapshot::save(&res.state.memory, a.out.join("memory.gmem"))?;
        }
        Command::Lookback(a) => {
            let cfg = a.pipeline.config()?;
            echo(cli, json!({ "run": cfg, "k": a.k }));
            let scene = load_rendered(&a.scene)?;
            let refiner = cfg.oracle_refiner();
            let report = lookback_eval(
                |s, frames| run_frames(s, frames, &cfg, &refiner).map(|(g, _)| g),
                &scene,
                a.k,
            )?;
            println!("{}", report.to_json());
        }
        Command::Eval(a) => {
            echo(cli, json!({}));
            let pred = VoxelGrid::load(&a.pred)?;
            let gt = VoxelGrid::load(&a.gt)?;
            let mask = match &a.mask {
                Some(p) => VoxelMask::load(gt.geometry, p)?,
                None => VoxelMask::full(gt.geometry),
            };
            println!("{}", score(&pred, &gt, &mask)?.to_json());
        }
        Command::ExportPly(a) => {
            let cfg = GaussianConfig {
                s_min: a.s_min,
                s_max: a.s_max,
                ..Default::default()
            };
            cfg.validate()?;
            echo(cli, json!({ "gaussian": cfg }));
            let memory = snapshot::load(&a.gmem)?;
            fs::write(&a.out, ply_text(&memory, &cfg))?;
            println!("{}", json!({ "points": memory.len() }));
        }
    }
    Ok(())
}

/// ASCII PLY with one vertex per Gaussian: position, activated scales,
/// opacity, most likely class and tag.
pub fn ply_text(memory: &GaussianMemory, cfg: &GaussianConfig) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    s.push_str(&format!("element vertex {}\n", memory.len()));
    for p in ["x", "y", "z", "scale_x", "scale_y", "scale_z", "opacity"] {
        s.push_str(&format!("property float {p}\n"));
    }
    s.push_str("property uchar class\nproperty uchar tag\nend_header\n");
    for g in &memory.gaussians {
        let a = activate(g, cfg);
        let mut class = 0;
        for c in 1..NUM_CLASSES {
            if a.class_probs[c] > a.class_probs[class] {
                class = c;
            }
        }
        s.push_str(&format!(
            "{} {} {} {} {} {} {} {} {}\n",
            g.mean.x as f32,
            g.mean.y as f32,
            g.mean.z as f32,
            a.scale.x as f32,
            a.scale.y as f32,
            a.scale.z as f32,
            a.opacity as f32,
            class,
            g.tag as u8
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_lists() {
        assert_eq!(parse_frame_list("0,1,2").unwrap().0, vec![0, 1, 2]);
        assert_eq!(parse_frame_list("0..3,0..3").unwrap().0, vec![0, 1, 2, 0, 1, 2]);
        assert!(parse_frame_list("a").is_err());
        assert!(parse_frame_list("").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(dispatch(["occmem"]), 2);
        assert_eq!(dispatch(["occmem", "eval", "--bogus"]), 2);
        assert_eq!(dispatch(["occmem", "frobnicate"]), 2);
        assert_eq!(dispatch(["occmem", "--help"]), 0);
    }

    #[test]
    fn runtime_errors_exit_1() {
        assert_eq!(dispatch(["occmem", "eval", "--pred", "/nonexistent/a", "--gt", "/nonexistent/b"]), 1);
    }

    #[test]
    fn flag_defaults_match_library_defaults() {
        let cli = Cli::try_parse_from(["occmem", "lookback", "--scene", "x", "--k", "3"]).unwrap();
        let Command::Lookback(a) = cli.command else { panic!() };
        let cfg = a.pipeline.config().unwrap();
        assert_eq!(cfg.gaussian.interval, 0.16);
        assert_eq!(cfg.gaussian.local_count, 16200);
        assert_eq!(cfg.schedule, ConfidenceSchedule::default());
    }
}
