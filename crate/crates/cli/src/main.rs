use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use audcast::codec::VideoClip;
use audcast::data::{list_bundles, synth_bundles, write_dataset, ClipBundle, DatasetSpec, SynthConfig};
use audcast::h2_dit::H2Dit;
use audcast::metrics::{motion_heatmap, BAS_SIGMA};
use audcast::pipeline::{evaluate, format_table, generate_eval_set, run_ablation, seam_stats, AblationSetup, EvalPair, Stage1, Stage2, Variant};
use audcast::r2_dit::R2Dit;
use audcast::train::{format_loss_log, h2_examples, r2_examples, Checkpoint, Denoiser, Frozen, RunConfig, Stage, Trainer};

#[derive(Parser)]
#[command(name = "audcast", version, about = "Audio-driven talking-video diffusion at desk scale")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic dataset of `clip_NNNN/` bundles.
    SynthData {
        #[arg(long, default_value_t = 8)]
        clips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        chunks: usize,
        #[arg(long, default_value_t = 16)]
        chunk_frames: usize,
        #[arg(long, default_value_t = 4)]
        overlap_m: usize,
        #[arg(long, default_value_t = 4)]
        identities: usize,
    },
    /// Train one stage and write checkpoints, `config.txt` and `loss.log` under `--out`.
    Train {
        #[arg(long, value_parser = parse_stage)]
        stage: Stage,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `key=value` run config; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override one config key; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Continue from a checkpoint of the same stage.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Frame stride between training windows.
        #[arg(long, default_value_t = 2)]
        stride: usize,
    },
    /// Generate one video per dataset bundle.
    Sample {
        #[arg(long)]
        h2: PathBuf,
        #[arg(long)]
        r2: Option<PathBuf>,
        #[arg(long)]
        no_refine: bool,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Refuse to sample unless the stage-1 checkpoint was trained with this config's model.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score generated clips against their ground-truth bundles.
    Eval {
        /// Directory of `<bundle>.aclp` files.
        #[arg(long)]
        generated: PathBuf,
        /// Dataset directory of ground-truth bundles.
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = BAS_SIGMA)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the motion heatmap of the generated clips.
        #[arg(long)]
        heatmap: Option<PathBuf>,
    },
    /// Train and score the full model and its ablations.
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        eval_data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated variant keys.
        #[arg(long, default_value = "full,no-r2,no-mt,no-hpe,no-aa,no-ia")]
        variants: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        r2_steps: Option<u64>,
        #[arg(long, default_value_t = 2)]
        stride: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = BAS_SIGMA)]
        sigma: f64,
    },
    /// Accumulated frame-difference heatmap over a set of videos.
    Heatmap {
        /// `.aclp` files or directories holding them (bundle dirs contribute `clip.aclp`, `*.stage1.aclp` is skipped).
        #[arg(long, num_args = 1.., required = true)]
        videos: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_stage(s: &str) -> std::result::Result<Stage, String> {
    Stage::parse(s).map_err(|e| e.to_string())
}

fn load_config(path: Option<&Path>, sets: &[String]) -> Result<RunConfig> {
    let mut run = match path {
        Some(p) => RunConfig::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => RunConfig::default(),
    };
    for kv in sets {
        let (k, v) = kv.split_once('=').ok_or_else(|| audcast::Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        run.set(k.trim(), v.trim())?;
    }
    Ok(run)
}

fn read_bundles(dir: &Path) -> Result<Vec<(String, ClipBundle)>> {
    list_bundles(dir)
        .with_context(|| format!("reading dataset {}", dir.display()))?
        .into_iter()
        .map(|d| {
            let name = d.file_name().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, ClipBundle::read(&d)?))
        })
        .collect()
}

fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::read(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

/// `step loss` lines of an earlier run, up to and including `step`.
fn read_loss_log(path: &Path, step: u64) -> Result<Vec<(u64, f64)>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let mut log = Vec::new();
    for line in fs::read_to_string(path)?.lines() {
        let mut it = line.split_whitespace();
        let (Some(s), Some(l)) = (it.next(), it.next()) else { continue };
        let s: u64 = s.parse().with_context(|| format!("bad loss.log line {line:?}"))?;
        if s <= step {
            log.push((s, l.parse().with_context(|| format!("bad loss.log line {line:?}"))?));
        }
    }
    Ok(log)
}

fn run_training<M: Denoiser>(
    mut tr: Trainer<M>,
    frozen: &Frozen,
    examples: &[M::Example],
    out: &Path,
) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.txt"), tr.run.to_text())?;
    let every = tr.run.checkpoint_every;
    let stage = M::STAGE.name();
    let steps = tr.run.steps;
    tr.train_until(examples, steps, |t| {
        if every > 0 && t.step % every == 0 && t.step < steps {
            Checkpoint::from_trainer(t, &frozen.codec)?.write(out.join(format!("ckpt_{:06}.ackp", t.step)))?;
            fs::write(out.join("loss.log"), format_loss_log(&t.log))?;
        }
        Ok(())
    })?;
    let ck = Checkpoint::from_trainer(&tr, &frozen.codec)?;
    let path = out.join(format!("{stage}.ackp"));
    ck.write(&path)?;
    fs::write(out.join("loss.log"), format_loss_log(&tr.log))?;
    let recent = tr.recent_loss(100).map_or("n/a".into(), |l| format!("{l:.6}"));
    println!(
        "trained stage={stage} steps={} loss_recent100={recent} model_hash={} checkpoint={}",
        tr.step,
        tr.run.model_hash(),
        path.display()
    );
    Ok(())
}

fn train_stage<M: Denoiser>(
    run: RunConfig,
    resume: Option<Checkpoint>,
    bundles: &[ClipBundle],
    stride: usize,
    out: &Path,
    build: fn(&audcast::h2_dit::ModelConfig, &Frozen, &[ClipBundle], usize) -> audcast::Result<Vec<M::Example>>,
) -> Result<()> {
    let (tr, frozen) = match resume {
        Some(ck) => {
            let frozen = ck.frozen()?;
            let steps = run.steps;
            let mut tr = ck.into_trainer::<M>()?;
            tr.run.steps = steps.max(tr.step);
            tr.log = read_loss_log(&out.join("loss.log"), tr.step)?;
            (tr, frozen)
        }
        None => {
            let frozen = Frozen::fit(&run.model, bundles)?;
            (Trainer::<M>::new(run, frozen.norm.clone())?, frozen)
        }
    };
    let examples = build(&tr.run.model, &frozen, bundles, stride)?;
    eprintln!("{} examples, steps {}..{}", examples.len(), tr.step, tr.run.steps);
    run_training(tr, &frozen, &examples, out)
}

fn cmd_train(
    stage: Stage,
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    sets: &[String],
    resume: Option<&Path>,
    steps: Option<u64>,
    lr: Option<f64>,
    seed: Option<u64>,
    stride: usize,
) -> Result<()> {
    let bundles: Vec<ClipBundle> = read_bundles(data)?.into_iter().map(|(_, b)| b).collect();
    let resume = resume.map(read_checkpoint).transpose()?;
    let mut run = match &resume {
        Some(ck) => {
            if ck.stage != stage {
                bail!(audcast::Error::Config(format!("checkpoint is stage {}, not {}", ck.stage.name(), stage.name())));
            }
            ck.config.clone()
        }
        None => load_config(config, sets)?,
    };
    if let Some(s) = steps {
        run.steps = s;
    }
    if resume.is_none() {
        if let Some(l) = lr {
            run.lr = l;
        }
        if let Some(s) = seed {
            run.seed = s;
        }
        if stage == Stage::R2 {
            run.model = R2Dit::config_for(&run.model);
        }
    }
    run.dataset = data.display().to_string();
    run.out = out.display().to_string();
    run.validate()?;
    match stage {
        Stage::H2 => train_stage::<H2Dit>(run, resume, &bundles, stride, out, h2_examples),
        Stage::R2 => train_stage::<R2Dit>(run, resume, &bundles, stride, out, r2_examples),
    }
}

fn cmd_sample(h2: &Path, r2: Option<&Path>, no_refine: bool, data: &Path, out: &Path, seed: u64, config: Option<&Path>) -> Result<()> {
    let ck1 = read_checkpoint(h2)?;
    if ck1.stage != Stage::H2 {
        bail!(audcast::Error::Config(format!("{} is not a stage-1 checkpoint", h2.display())));
    }
    if let Some(c) = config {
        let want = load_config(Some(c), &[])?.model_hash();
        if want != ck1.config.model_hash() {
            bail!(audcast::Error::Config(format!("model hash mismatch: config {want}, checkpoint {}", ck1.config.model_hash())));
        }
    }
    let (m1, den1, fr1) = (ck1.model::<H2Dit>()?, ck1.denoising()?, ck1.frozen()?);
    let refiner = match (r2, no_refine) {
        (Some(p), false) => {
            let ck2 = read_checkpoint(p)?;
            if ck2.stage != Stage::R2 {
                bail!(audcast::Error::Config(format!("{} is not a refiner checkpoint", p.display())));
            }
            if ck2.projection != ck1.projection {
                bail!(audcast::Error::Config("stage checkpoints use different codecs".into()));
            }
            Some((ck2.model::<R2Dit>()?, ck2.denoising()?, ck2.frozen()?, ck2.config.model_hash()))
        }
        (None, false) => bail!(audcast::Error::Config("--r2 is required unless --no-refine is given".into())),
        (_, true) => None,
    };
    let named = read_bundles(data)?;
    let bundles: Vec<ClipBundle> = named.iter().map(|(_, b)| b.clone()).collect();
    let s1 = Stage1 {
        model: &m1,
        den: &den1,
        frozen: &fr1,
    };
    let s2 = refiner.as_ref().map(|(model, den, frozen, _)| Stage2 { model, den, frozen });
    let outs = generate_eval_set(s1, s2, &bundles, seed)?;

    fs::create_dir_all(out)?;
    let mut report = format!(
        "h2_model_hash={}\nr2_model_hash={}\nseed={seed}\nclips={}\n",
        ck1.config.model_hash(),
        refiner.as_ref().map_or("none", |r| r.3.as_str()),
        outs.len()
    );
    for ((name, _), o) in named.iter().zip(&outs) {
        o.video.write(out.join(format!("{name}.aclp")))?;
        if o.refined.is_some() {
            o.stage1.video.write(out.join(format!("{name}.stage1.aclp")))?;
        }
        let plan = &o.stage1.plan;
        let seams = if plan.chunks() >= 2 {
            let s = seam_stats(&o.video, plan)?;
            format!("seam_ratio={:.6} seam_mean={:.6e} intra_mean={:.6e}", s.ratio(), s.seam_mean, s.intra_mean)
        } else {
            "seam_ratio=n/a".into()
        };
        report.push_str(&format!("{name} chunks={} frames={} {seams}\n", plan.chunks(), o.video.frames()));
    }
    fs::write(out.join("sample_report.txt"), &report)?;
    print!("{report}");
    Ok(())
}

fn cmd_eval(generated: &Path, reference: &Path, sigma: f64, out: Option<&Path>, heatmap: Option<&Path>) -> Result<()> {
    let truth = read_bundles(reference)?;
    let mut videos = Vec::new();
    let mut metas = Vec::new();
    for (name, b) in &truth {
        let p = generated.join(format!("{name}.aclp"));
        if !p.exists() {
            eprintln!("unpaired reference={name}");
            continue;
        }
        videos.push(VideoClip::read(&p)?);
        metas.push(b);
    }
    for e in fs::read_dir(generated)? {
        let p = e?.path();
        let stem = p.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if let Some(name) = stem.strip_suffix(".aclp") {
            if !name.contains('.') && !truth.iter().any(|(n, _)| n == name) {
                eprintln!("unpaired generated={name}");
            }
        }
    }
    if videos.is_empty() {
        bail!(audcast::Error::Invalid("no generated clip matches a reference bundle".into()));
    }
    let pairs: Vec<EvalPair> = videos
        .iter()
        .zip(&metas)
        .map(|(v, b)| EvalPair {
            generated: v,
            truth: &b.clip,
            meta: &b.meta,
        })
        .collect();
    let row = evaluate(&pairs, sigma)?;
    let text = format!("pairs={}\n{}\n{}", pairs.len(), row.key_values(""), format_table(&[("generated".into(), row.clone())]));
    if let Some(h) = heatmap {
        let map = motion_heatmap(&videos)?;
        map.write(h)?;
        println!("heatmap_mean={:.6e} heatmap_std={:.6e}", map.mean, map.std);
    }
    if let Some(o) = out {
        fs::write(o, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_ablate(
    data: &Path,
    eval_data: &Path,
    out: &Path,
    variants: &str,
    config: Option<&Path>,
    sets: &[String],
    steps: Option<u64>,
    r2_steps: Option<u64>,
    stride: usize,
    seed: u64,
    sigma: f64,
) -> Result<()> {
    let variants = variants.split(',').map(|v| Variant::parse(v.trim())).collect::<audcast::Result<Vec<_>>>()?;
    let mut h2 = load_config(config, sets)?;
    if let Some(s) = steps {
        h2.steps = s;
    }
    let mut r2 = h2.clone();
    r2.model = R2Dit::config_for(&h2.model);
    if let Some(s) = r2_steps {
        r2.steps = s;
    }
    let setup = AblationSetup {
        h2,
        r2,
        train: read_bundles(data)?.into_iter().map(|(_, b)| b).collect(),
        eval: read_bundles(eval_data)?.into_iter().map(|(_, b)| b).collect(),
        stride,
        sample_seed: seed,
        sigma,
    };
    let results = run_ablation(&setup, &variants, &mut |m| eprintln!("{m}"))?;
    let mut rows = Vec::new();
    let mut kv = String::new();
    for (v, r) in results {
        match r {
            Ok(row) => {
                kv.push_str(&row.key_values(&format!("{}.", v.key())));
                rows.push((v.label().to_string(), row));
            }
            Err(e) => {
                eprintln!("variant={} failed: {e}", v.key());
                kv.push_str(&format!("{}.error={:?}\n", v.key(), e.to_string()));
            }
        }
    }
    fs::create_dir_all(out)?;
    let table = format_table(&rows);
    fs::write(out.join("ablation.txt"), &table)?;
    fs::write(out.join("ablation_metrics.txt"), &kv)?;
    print!("{table}");
    Ok(())
}

fn collect_videos(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter_map(|q| {
                    if q.is_dir() {
                        Some(q.join("clip.aclp")).filter(|c| c.exists())
                    } else {
                        // Stage-1 intermediates written by `sample` are not final videos.
                        let name = q.file_name().and_then(|n| n.to_str()).unwrap_or("");
                        (name.ends_with(".aclp") && !name.ends_with(".stage1.aclp")).then_some(q)
                    }
                })
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!(audcast::Error::Invalid("no .aclp videos found".into()));
    }
    Ok(files)
}

fn cmd_heatmap(paths: &[PathBuf], out: &Path) -> Result<()> {
    let files = collect_videos(paths)?;
    let videos = files.iter().map(VideoClip::read).collect::<audcast::Result<Vec<_>>>()?;
    let map = motion_heatmap(&videos)?;
    map.write(out)?;
    println!("videos={} heatmap_mean={:.6e} heatmap_std={:.6e}", videos.len(), map.mean, map.std);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::SynthData {
            clips,
            seed,
            out,
            chunks,
            chunk_frames,
            overlap_m,
            identities,
        } => {
            let spec = DatasetSpec {
                clips,
                chunks,
                chunk_frames,
                motion_frames: overlap_m,
                identities,
                seed,
            };
            let bundles = synth_bundles(&SynthConfig::default(), &spec)?;
            let dirs = write_dataset(&out, &bundles)?;
            println!("wrote clips={} frames_per_clip={} out={}", dirs.len(), chunks * chunk_frames, out.display());
            Ok(())
        }
        Cmd::Train {
            stage,
            data,
            out,
            config,
            sets,
            resume,
            steps,
            lr,
            seed,
            stride,
        } => cmd_train(stage, &data, &out, config.as_deref(), &sets, resume.as_deref(), steps, lr, seed, stride),
        Cmd::Sample {
            h2,
            r2,
            no_refine,
            data,
            out,
            seed,
            config,
        } => cmd_sample(&h2, r2.as_deref(), no_refine, &data, &out, seed, config.as_deref()),
        Cmd::Eval {
            generated,
            reference,
            sigma,
            out,
            heatmap,
        } => cmd_eval(&generated, &reference, sigma, out.as_deref(), heatmap.as_deref()),
        Cmd::Ablate {
            data,
            eval_data,
            out,
            variants,
            config,
            sets,
            steps,
            r2_steps,
            stride,
            seed,
            sigma,
        } => cmd_ablate(&data, &eval_data, &out, &variants, config.as_deref(), &sets, steps, r2_steps, stride, seed, sigma),
        Cmd::Heatmap { videos, out } => cmd_heatmap(&videos, &out),
    }
}

/// Short machine-readable name of the first library error in the chain.
fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<audcast::Error>() {
            return match err {
                audcast::Error::Shape { .. } => "shape",
                audcast::Error::Invalid(_) => "invalid",
                audcast::Error::Config(_) => "config",
                audcast::Error::MissingCondition(_) => "missing_condition",
                audcast::Error::NonFinite(_) => "non_finite",
                audcast::Error::Format(_) => "format",
                audcast::Error::Io(_) => "io",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
    }
    "runtime"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error kind=usage message={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("error kind={} message={:?}", error_kind(&e), msg);
            ExitCode::FAILURE
        }
    }
}
