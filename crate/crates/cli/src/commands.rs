use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use meshsplat_client::protocol::{CameraParams, RenderRequest};
use meshsplat_client::Client;
use meshsplat_core::avatar::Avatar;
use meshsplat_core::bundle::AvatarBundle;
use meshsplat_core::dataset::{load_frames, read_sequence, save_frames, FrameRecord};
use meshsplat_core::gaussians::{Camera, Orbit};
use meshsplat_core::geometry::{load_mesh_asset, save_mesh_asset};
use meshsplat_core::math::{Real, Vec3};
use meshsplat_core::offsets::OffsetModel;
use meshsplat_core::render::{benchmark, render, RenderSettings};
use meshsplat_core::synthetic::{
    synthetic_frames, GroundTruth, GroundTruthConfig, SequenceConfig, SyntheticAvatar,
    SyntheticAvatarConfig,
};
use meshsplat_core::train::{load_checkpoint, save_checkpoint, TrainConfig, Trainer};
use meshsplat_core::Error;
use meshsplat_service::{Engine, Service};
use serde_json::json;

use crate::failure::{CliResult, Failure};
use crate::specs::{parse_psi, parse_size, OrbitSpec};
use crate::{
    BenchArgs, Command, NovelViewArgs, OutputArgs, ReenactArgs, RemoteAction, RemoteArgs,
    ServeArgs, SynthArgs, TrainArgs,
};

const DEFAULT_SIZE: (u32, u32) = (512, 512);

pub fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Render(a) => render_sequence(&a.output, &a.data, None, 40.0),
        Command::Reenact(a) => reenact(a),
        Command::NovelView(a) => novel_view(a),
        Command::Bench(a) => bench(a),
        Command::Serve(a) => serve(a),
        Command::Remote(a) => remote(a),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn print_summary(value: serde_json::Value) {
    println!("{value}");
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let (width, height) = parse_size(&a.size)?;
    create_dir(&a.out)?;
    let mesh = SyntheticAvatar::build(&SyntheticAvatarConfig {
        subdivisions: a.subdivisions,
        ..Default::default()
    })
    .mesh;
    let gt = GroundTruth::build(
        mesh.clone(),
        &GroundTruthConfig {
            uv_resolution: a.gt_uv,
            hidden_offset: a.hidden_offset as Real,
            ..Default::default()
        },
    )?;
    let seq = SequenceConfig {
        frames: a.frames,
        width,
        height,
        ..Default::default()
    };
    let train = synthetic_frames(&gt, &seq, a.seed, "train")?;
    let test = synthetic_frames(
        &gt,
        &SequenceConfig {
            frames: a.test_frames,
            ..seq
        },
        a.seed.wrapping_add(1),
        "test",
    )?;
    let mesh_path = save_mesh_asset(&mesh, a.out.join("mesh.json"))?;
    let train_seq = save_frames(a.out.join("train"), &train)?;
    let test_seq = save_frames(a.out.join("test"), &test)?;
    print_summary(json!({
        "mesh": mesh_path,
        "train": train_seq,
        "test": test_seq,
        "psi_dim": mesh.code_dim(),
        "ground_truth_gaussians": gt.field.len(),
    }));
    Ok(())
}

fn training_sequence(data: &Path) -> PathBuf {
    let nested = data.join("train").join("sequence.jsonl");
    if nested.exists() {
        nested
    } else {
        data.join("sequence.jsonl")
    }
}

fn train(a: TrainArgs) -> CliResult<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if a.deterministic {
        config.deterministic = true;
    }
    let mesh = load_mesh_asset(a.data.join("mesh.json"))?;
    let frames = load_frames(training_sequence(&a.data))?;
    let test_seq = a.data.join("test").join("sequence.jsonl");
    let test = if test_seq.exists() {
        Some(load_frames(&test_seq)?)
    } else {
        None
    };
    let total = a
        .steps
        .unwrap_or(config.epochs * config.frames_per_epoch as u64);
    let mut trainer = Trainer::new(config, mesh)?;
    if let Some(p) = &a.checkpoint {
        trainer.restore(&load_checkpoint(p)?)?;
    }
    create_dir(&a.out)?;
    log::info!(
        "training {} gaussians on {} frames, step {} -> {total}",
        trainer.avatar.len(),
        frames.len(),
        trainer.state.step
    );
    let log_path = a.out.join("train_log.jsonl");
    let file = File::options()
        .create(true)
        .append(a.checkpoint.is_some())
        .write(true)
        .truncate(a.checkpoint.is_none())
        .open(&log_path)
        .map_err(|e| Error::Io {
            path: log_path.clone(),
            source: e,
        })?;
    let mut log = BufWriter::new(file);
    let ckpt_path = a.out.join("checkpoint.bin");
    let start = Instant::now();
    while trainer.state.step < total {
        let chunk = match a.checkpoint_every {
            0 => total - trainer.state.step,
            n => n.min(total - trainer.state.step),
        };
        let mut io_error = None;
        trainer.train_steps(&frames, chunk, |r| {
            let line = serde_json::to_string(r).expect("step report serializes");
            if let Err(e) = writeln!(log, "{line}") {
                io_error.get_or_insert(e);
            }
            if r.step % 100 == 0 {
                log::info!("step {} loss {:.3e} ({:.1} ms)", r.step, r.loss_total, r.ms);
            }
        })?;
        if let Some(e) = io_error {
            return Err(Error::Io { path: log_path, source: e }.into());
        }
        if a.checkpoint_every > 0 {
            save_checkpoint(&trainer.checkpoint(), &ckpt_path)?;
        }
    }
    log.flush()?;
    save_checkpoint(&trainer.checkpoint(), &ckpt_path)?;
    let bundle = AvatarBundle::write(&a.out, &trainer)?;
    let mut summary = json!({
        "bundle": bundle,
        "steps": trainer.state.step,
        "gaussians": trainer.avatar.len(),
        "seconds": start.elapsed().as_secs_f64(),
    });
    if let Some(test) = test {
        let eval = trainer.evaluate(&test)?;
        write_json(&a.out.join("metrics.json"), &eval)?;
        summary["test"] = serde_json::to_value(eval).expect("metrics serialize");
    }
    print_summary(summary);
    Ok(())
}

fn output_size(o: &OutputArgs) -> CliResult<Option<(u32, u32)>> {
    o.size.as_deref().map(parse_size).transpose()
}

fn check_psi(avatar: &Avatar, psi: &[Real], what: &str) -> CliResult<()> {
    if psi.len() != avatar.psi_dim() {
        return Err(Failure::new(
            "dimension_mismatch",
            format!(
                "{what}: psi has {} values, this avatar expects {}",
                psi.len(),
                avatar.psi_dim()
            ),
        ));
    }
    Ok(())
}

/// Writes `<out>/<name>.png` (and `.msraw` when asked).
fn write_frame(o: &OutputArgs, avatar: &Avatar, name: &str, psi: &[Real], camera: &Camera, bg: [Real; 3]) -> CliResult<()> {
    let (out, _) = avatar.render(psi, camera, &RenderSettings { background: bg })?;
    out.frame.image.save_png(o.out.join(format!("{name}.png")))?;
    if o.raw {
        out.frame.image.save_raw(o.out.join(format!("{name}.msraw")))?;
    }
    Ok(())
}

fn render_sequence(o: &OutputArgs, data: &Path, orbit: Option<OrbitSpec>, fov: Real) -> CliResult<()> {
    let bundle = AvatarBundle::load(&o.checkpoint)?;
    let records = read_sequence(data)?;
    let size = output_size(o)?;
    create_dir(&o.out)?;
    let bg = bundle.config.background;
    let start = Instant::now();
    let mut written = Vec::with_capacity(records.len());
    for (k, rec) in records.iter().enumerate() {
        check_psi(&bundle.avatar, &rec.psi, &format!("frame {}", rec.frame_id))?;
        let (w, h) = size
            .or(rec.width.zip(rec.height))
            .unwrap_or(DEFAULT_SIZE);
        let camera = match &orbit {
            Some(spec) => Camera::orbit(Vec3::zeros(), &spec.pose(k, records.len(), fov), w, h)?,
            None => rec.camera(w, h)?,
        };
        write_frame(o, &bundle.avatar, &rec.frame_id, &rec.psi, &camera, bg)?;
        let mut out = FrameRecord::from_camera(&rec.frame_id, rec.psi.clone(), &camera);
        out.image_path = Some(format!("{}.png", rec.frame_id).into());
        written.push(out);
    }
    meshsplat_core::dataset::write_sequence(o.out.join("sequence.jsonl"), &written)?;
    print_summary(json!({
        "frames": written.len(),
        "out": o.out,
        "seconds": start.elapsed().as_secs_f64(),
    }));
    Ok(())
}

fn reenact(a: ReenactArgs) -> CliResult<()> {
    let orbit = a.orbit.as_deref().map(OrbitSpec::parse).transpose()?;
    render_sequence(&a.output, &a.data, orbit, a.fov as Real)
}

fn novel_view(a: NovelViewArgs) -> CliResult<()> {
    let o = &a.output;
    let bundle = AvatarBundle::load(&o.checkpoint)?;
    let psi = match &a.psi_json {
        Some(s) => parse_psi(s)?,
        None => vec![0.0; bundle.avatar.psi_dim()],
    };
    check_psi(&bundle.avatar, &psi, "--psi-json")?;
    let spec = OrbitSpec::parse(&a.orbit)?;
    let (w, h) = output_size(o)?.unwrap_or(DEFAULT_SIZE);
    create_dir(&o.out)?;
    for k in 0..spec.frames {
        let camera = Camera::orbit(Vec3::zeros(), &spec.pose(k, spec.frames, a.fov as Real), w, h)?;
        write_frame(o, &bundle.avatar, &format!("view_{k:04}"), &psi, &camera, bundle.config.background)?;
    }
    print_summary(json!({ "frames": spec.frames, "out": o.out }));
    Ok(())
}

fn bench(a: BenchArgs) -> CliResult<()> {
    let (w, h) = parse_size(&a.size)?;
    let report = match &a.checkpoint {
        None => serde_json::to_value(benchmark(&a.gaussians, w, h, a.repetitions, a.seed, a.naive)?)
            .expect("report serializes"),
        Some(p) => {
            let bundle = AvatarBundle::load(p)?;
            let avatar = &bundle.avatar;
            let psi = vec![0.0; avatar.psi_dim()];
            let camera = Camera::orbit(Vec3::zeros(), &Orbit::default(), w, h)?;
            let posed = avatar.pose(&psi)?;
            let scene = posed.composed.scene(&avatar.field);
            let settings = RenderSettings::default();
            render(&scene, &camera, &settings)?;
            let mut ms = Vec::with_capacity(a.repetitions);
            for _ in 0..a.repetitions.max(1) {
                let t = Instant::now();
                render(&scene, &camera, &settings)?;
                ms.push(t.elapsed().as_secs_f64() * 1e3);
            }
            ms.sort_by(f64::total_cmp);
            let median = ms[ms.len() / 2];
            let t = Instant::now();
            avatar.pose(&psi)?;
            json!({
                "gaussians": avatar.len(),
                "width": w,
                "height": h,
                "repetitions": ms.len(),
                "median_ms": median,
                "p95_ms": ms[((ms.len() - 1) as f64 * 0.95).round() as usize],
                "fps": 1e3 / median,
                "pose_ms": t.elapsed().as_secs_f64() * 1e3,
            })
        }
    };
    match &a.out {
        Some(p) => {
            write_json(p, &report)?;
            print_summary(json!({ "report": p }));
        }
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(())
}

/// The ground-truth synthetic head as a servable avatar.
fn synthetic_avatar() -> CliResult<Avatar> {
    let mesh = SyntheticAvatar::build(&SyntheticAvatarConfig::default()).mesh;
    let gt = GroundTruth::build(mesh.clone(), &GroundTruthConfig::default())?;
    let n = gt.field.len();
    let avatar = Avatar {
        offsets: OffsetModel::fixed(n, mesh.code_dim()),
        mesh,
        binding: gt.binding,
        field: gt.field,
    };
    avatar.validate()?;
    Ok(avatar)
}

fn runtime() -> CliResult<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn serve(a: ServeArgs) -> CliResult<()> {
    let (w, h) = parse_size(&a.size)?;
    let avatar = match &a.checkpoint {
        Some(p) => AvatarBundle::load(p)?.avatar,
        None => synthetic_avatar()?,
    };
    let rt = runtime()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind((a.host.as_str(), a.port)).await?;
        let addr = listener.local_addr()?;
        let gaussians = avatar.len();
        let service = Service::start(Engine::new(avatar, w, h));
        println!("{}", json!({ "listening": addr.to_string(), "gaussians": gaussians }));
        std::io::stdout().flush()?;
        log::info!("serving on http://{addr}");
        service.serve(listener).await?;
        Ok(())
    })
}

fn remote(a: RemoteArgs) -> CliResult<()> {
    let client = Client::new(&a.url);
    let rt = runtime()?;
    rt.block_on(async move {
        match a.action {
            RemoteAction::Health => print_summary(serde_json::to_value(client.health().await?).unwrap()),
            RemoteAction::Layout => print_summary(serde_json::to_value(client.layout().await?).unwrap()),
            RemoteAction::Render {
                psi_json,
                orbit,
                fov,
                size,
                out,
            } => {
                let layout = client.layout().await?;
                let psi: Vec<f64> = match &psi_json {
                    Some(s) => parse_psi(s)?.into_iter().map(|v| v as f64).collect(),
                    None => vec![0.0; layout.psi_dim],
                };
                let spec = OrbitSpec::parse(&orbit)?;
                let size = size.as_deref().map(parse_size).transpose()?;
                create_dir(&out)?;
                for k in 0..spec.frames {
                    let pose = spec.pose(k, spec.frames, fov as Real);
                    let req = RenderRequest {
                        psi: psi.clone(),
                        camera: CameraParams {
                            radius: pose.radius as f64,
                            elevation_deg: pose.elevation_deg as f64,
                            azimuth_deg: pose.azimuth_deg as f64,
                            fov_deg: pose.fov_deg as f64,
                        },
                        background: [1.0; 3],
                        width: size.map(|s| s.0),
                        height: size.map(|s| s.1),
                    };
                    let png = client.render(&req).await?;
                    let path = out.join(format!("view_{k:04}.png"));
                    fs::write(&path, png).map_err(|e| Error::Io { path, source: e })?;
                }
                print_summary(json!({ "frames": spec.frames, "out": out }));
            }
        }
        Ok(())
    })
}
