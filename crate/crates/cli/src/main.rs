use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use cattleact::association::{
    fit_homography, match_gps_to_tracklets, read_correspondences, read_gps_csv, read_tracklets,
    write_correspondences, write_gps_csv, write_tracklets, DEFAULT_TIME_TOLERANCE_S,
};
use cattleact::augment::{skeleton_aware_cutout, standard_cutout, CutoutConfig, ProtectedRegionSpec};
use cattleact::checkpoint::Checkpoint;
use cattleact::data::{
    generate_synthetic_dataset, generate_synthetic_gps_tracks, load_manifest, ActionClass, Dataset,
    InteractionClass, Record, Split, SyntheticSceneSpec,
};
use cattleact::evaluation::{
    action_occlusion_map, binary_report_from_confusion, export_embeddings, format_binary_table,
    format_metrics, metrics_from_predictions, pair_occlusion_map, pca_project, predict_interactions,
    write_predictions_csv,
};
use cattleact::training::{
    pretrain_action_encoder, train_joint, write_joint_log, write_pretrain_log, CutoutMode,
    JointTrainConfig, PretrainConfig,
};
use cattleact::Error;

const FORMATS: &str = "\
FILE FORMATS
  manifest.jsonl      first line {\"format\":\"cattleact-manifest\",\"version\":1}; then one JSON
                      record per line, kind \"action\" or \"interaction\", image paths relative
                      to the manifest directory
  *.ckpt              magic CACKPT01, u64 LE index length, JSON index, f32 LE tensors
  tracklets.jsonl     {\"track_id\":N,\"frames\":[[t,x0,y0,x1,y1],...]} per line
  gps.csv             cattle_id,timestamp_s,x_m,y_m
  correspondences.csv x_m,y_m,u_px,v_px
  predictions.csv     sample_id,truth,pred,score_no_interaction,score_interest,score_conflict,score_mount
  *.caem              magic CAEM, u16 version, u32 rows, u32 D, rows of (u32 id length, UTF-8 id,
                      kind byte 0=action 1=interaction, label byte 255=none, D f32), all LE
  run.json            command, version, seed, resolved config, input checksums

EXIT CODES
  0 success, 1 runtime failure, 2 usage or configuration error

ENVIRONMENT
  CATTLEACT_SEED      overrides the seed of every config (the --seed flag wins over it)";

#[derive(Parser)]
#[command(name = "cattleact", version, about = "Cattle action/interaction recognition and GPS re-identification", after_help = FORMATS)]
struct Cli {
    /// Seed override for every config.
    #[arg(long, global = true, env = "CATTLEACT_SEED")]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CutoutArg {
    SkeletonAware,
    Standard,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset (manifest.jsonl + images/) and a GPS scene (gps/).
    #[command(after_help = FORMATS)]
    SynthGenerate {
        /// SyntheticSceneSpec JSON.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// GPS recording length in seconds.
        #[arg(long, default_value_t = 60.0)]
        gps_duration: f64,
        /// GPS fixes per second.
        #[arg(long, default_value_t = 1.0)]
        gps_rate: f64,
    },
    /// Triplet pretraining of the action encoder; writes action.ckpt and pretrain_log.csv.
    #[command(after_help = FORMATS)]
    Pretrain {
        /// PretrainConfig JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Joint training; writes joint_final.ckpt, joint_best.ckpt and joint_log.csv.
    #[command(after_help = FORMATS)]
    TrainJoint {
        /// JointTrainConfig JSON. Without an `encoder` key the checkpoint's is used.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Checkpoint from `pretrain`.
        #[arg(long)]
        action_checkpoint: Option<PathBuf>,
        /// Train without an action checkpoint.
        #[arg(long)]
        from_scratch: bool,
        /// Ablation: random action encoder (ignores --action-checkpoint).
        #[arg(long)]
        no_pretrain: bool,
        /// Ablation: plain cutout instead of skeleton-aware cutout.
        #[arg(long)]
        standard_cutout: bool,
        /// Ablation: drop the alignment loss.
        #[arg(long)]
        no_alignment: bool,
        /// Keep the action encoder fixed.
        #[arg(long)]
        freeze_action_encoder: bool,
    },
    /// Interaction metrics; writes metrics.json and predictions.csv.
    #[command(after_help = FORMATS)]
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Tracklet to GPS identity matching; writes assignment.json.
    #[command(after_help = FORMATS)]
    ReidMatch {
        #[arg(long)]
        tracklets: PathBuf,
        #[arg(long)]
        gps: PathBuf,
        #[arg(long)]
        correspondences: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TIME_TOLERANCE_S)]
        time_tolerance: f64,
    },
    /// Occlusion sensitivity for one sample; writes occlusion.json and occlusion.png.
    #[command(after_help = FORMATS)]
    OcclusionMap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sample_id: String,
        #[arg(long)]
        out_dir: PathBuf,
        /// Class name; defaults to the sample's label.
        #[arg(long)]
        target_class: Option<String>,
        #[arg(long, default_value_t = 16)]
        patch_size: usize,
        #[arg(long, default_value_t = 4)]
        stride: usize,
    },
    /// Writes original.png and augmented.png for one sample, plus masks.json.
    #[command(after_help = FORMATS)]
    AugmentPreview {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        sample_id: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "skeleton-aware")]
        mode: CutoutArg,
        #[arg(long, default_value_t = 2)]
        n_masks: usize,
        #[arg(long, default_value_t = 0.3)]
        mask_size_frac: f64,
    },
    /// Embedding dump (embeddings.caem) and a 2-D PCA table (pca.csv).
    #[command(after_help = FORMATS)]
    EmbedExport {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
    },
}

/// An error with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::MissingFile(_)
            | Error::SchemaViolation { .. }
            | Error::InvalidSpec(_)
            | Error::InvalidConfig(_)
            | Error::StageOrder(_)
            | Error::CheckpointMismatch(_)
            | Error::Format { .. }
            | Error::UnknownLabel(_)
            | Error::PatchLargerThanImage { .. }
            | Error::InsufficientClassDiversity(_)
            | Error::InsufficientPoints { .. }
            | Error::Json(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<(T, Value)> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()).into());
    }
    let text = std::fs::read_to_string(path).map_err(Error::from)?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let cfg = serde_json::from_value(raw.clone()).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok((cfg, raw))
}

fn sha256_file(path: &Path) -> Outcome<String> {
    let bytes = std::fs::read(path).map_err(Error::from)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct Run {
    command: &'static str,
    out_dir: PathBuf,
    seed: Option<u64>,
    config: Value,
    inputs: Vec<PathBuf>,
}

impl Run {
    fn finish(&self) -> Outcome<()> {
        let mut inputs = serde_json::Map::new();
        for p in &self.inputs {
            inputs.insert(p.display().to_string(), json!(sha256_file(p)?));
        }
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let doc = json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.config,
            "input_sha256": inputs,
            "timestamp_unix": started,
        });
        write_json(&self.out_dir.join("run.json"), &doc)
    }
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Outcome<()> {
    let text = serde_json::to_string_pretty(v).map_err(Error::from)?;
    std::fs::write(path, text + "\n").map_err(Error::from)?;
    Ok(())
}

fn out_dir(p: &Path) -> Outcome<()> {
    std::fs::create_dir_all(p).map_err(Error::from)?;
    Ok(())
}

fn load_dataset(manifest: &Path) -> Outcome<Dataset> {
    Ok(Dataset::load(load_manifest(manifest)?)?)
}

fn synth_generate(seed: Option<u64>, spec_path: &Path, out: &Path, duration: f64, rate: f64) -> Outcome<()> {
    let (mut spec, _): (SyntheticSceneSpec, _) = read_config(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate()?;
    out_dir(out)?;
    let dataset = generate_synthetic_dataset(&spec)?;
    dataset.write_to(out)?;
    let scene = generate_synthetic_gps_tracks(&spec, duration, rate)?;
    let gps = out.join("gps");
    out_dir(&gps)?;
    write_gps_csv(&gps.join("gps.csv"), &scene.tracks)?;
    write_tracklets(&gps.join("tracklets.jsonl"), &scene.tracklets)?;
    write_correspondences(&gps.join("correspondences.csv"), &scene.correspondences)?;
    write_json(&gps.join("truth.json"), &scene.truth)?;
    let counts = &dataset.manifest.class_counts;
    println!("wrote {} records to {}", dataset.manifest.records.len(), out.display());
    println!("action counts {:?}, interaction counts {:?}", counts.action, counts.interaction);
    Run {
        command: "synth-generate",
        out_dir: out.to_path_buf(),
        seed: Some(spec.seed),
        config: json!({ "spec": spec, "gps_duration": duration, "gps_rate": rate }),
        inputs: vec![spec_path.to_path_buf()],
    }
    .finish()
}

fn pretrain(seed: Option<u64>, config: &Path, manifest: &Path, out: &Path) -> Outcome<()> {
    let (mut cfg, _): (PretrainConfig, _) = read_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.encoder.seed = s;
    }
    cfg.validate()?;
    let dataset = load_dataset(manifest)?;
    out_dir(out)?;
    let outcome = pretrain_action_encoder(&dataset, &cfg)?;
    outcome.checkpoint.save(&out.join("action.ckpt"))?;
    write_pretrain_log(&out.join("pretrain_log.csv"), &outcome.log)?;
    println!(
        "pretrain: mean triplet loss first epoch {:.4}, last epoch {:.4}",
        outcome.epoch_mean_triplet.first().copied().unwrap_or(f64::NAN),
        outcome.epoch_mean_triplet.last().copied().unwrap_or(f64::NAN)
    );
    Run {
        command: "pretrain",
        out_dir: out.to_path_buf(),
        seed: Some(cfg.seed),
        config: serde_json::to_value(&cfg).map_err(Error::from)?,
        inputs: vec![config.to_path_buf(), manifest.to_path_buf()],
    }
    .finish()
}

struct JointFlags {
    action_checkpoint: Option<PathBuf>,
    from_scratch: bool,
    no_pretrain: bool,
    standard_cutout: bool,
    no_alignment: bool,
    freeze_action_encoder: bool,
}

fn train_joint_cmd(seed: Option<u64>, config: &Path, manifest: &Path, out: &Path, flags: JointFlags) -> Outcome<()> {
    let (mut cfg, raw): (JointTrainConfig, Value) = read_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.encoder.seed = s;
    }
    cfg.from_scratch |= flags.from_scratch || flags.no_pretrain;
    cfg.no_alignment |= flags.no_alignment;
    cfg.freeze_action_encoder |= flags.freeze_action_encoder;
    if flags.standard_cutout {
        cfg.augment.cutout_mode = CutoutMode::Standard;
    }
    let mut inputs = vec![config.to_path_buf(), manifest.to_path_buf()];
    let checkpoint = match (&flags.action_checkpoint, flags.no_pretrain) {
        (Some(p), false) => {
            let ck = Checkpoint::load(p)?;
            if raw.get("encoder").is_none() {
                let seed = cfg.encoder.seed;
                cfg.encoder = ck.model.config.clone();
                cfg.encoder.seed = seed;
            }
            inputs.push(p.clone());
            Some(ck)
        }
        (Some(_), true) => {
            log::warn!("--no-pretrain: ignoring the action checkpoint");
            None
        }
        (None, _) => None,
    };
    if checkpoint.is_none() && !cfg.from_scratch {
        return Err(Error::StageOrder(
            "train-joint needs --action-checkpoint from `pretrain`; pass --from-scratch to train without one".into(),
        )
        .into());
    }
    cfg.validate()?;
    let dataset = load_dataset(manifest)?;
    out_dir(out)?;
    let outcome = train_joint(&dataset, checkpoint.as_ref(), &cfg)?;
    outcome.final_checkpoint.save(&out.join("joint_final.ckpt"))?;
    outcome.best_checkpoint.save(&out.join("joint_best.ckpt"))?;
    write_joint_log(&out.join("joint_log.csv"), &outcome.log)?;
    println!(
        "train-joint: validation macro-F1 per epoch {:?}; best epoch {}",
        outcome.val_macro_f1.iter().map(|v| (v * 1e4).round() / 1e4).collect::<Vec<_>>(),
        outcome.best_epoch
    );
    Run {
        command: "train-joint",
        out_dir: out.to_path_buf(),
        seed: Some(cfg.seed),
        config: serde_json::to_value(&cfg).map_err(Error::from)?,
        inputs,
    }
    .finish()
}

fn evaluate(ckpt: &Path, manifest: &Path, out: &Path, split: SplitArg) -> Outcome<()> {
    let model = Checkpoint::load(ckpt)?.model;
    let dataset = load_dataset(manifest)?;
    out_dir(out)?;
    let mut rows = Vec::new();
    for s in [Split::Train, Split::Val, Split::Test] {
        if split.split().is_none_or(|want| want == s) {
            rows.extend(predict_interactions(&model, &dataset, s)?);
        }
    }
    rows.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    let (cm, report) = metrics_from_predictions(&rows)?;
    let binary = binary_report_from_confusion(&cm);
    write_predictions_csv(&out.join("predictions.csv"), &rows)?;
    write_json(
        &out.join("metrics.json"),
        &json!({ "n_samples": rows.len(), "confusion": cm, "report": report, "one_vs_rest": binary }),
    )?;
    print!("{}", format_metrics(&cm, &report));
    print!("{}", format_binary_table(&binary));
    Run {
        command: "evaluate",
        out_dir: out.to_path_buf(),
        seed: None,
        config: json!({ "checkpoint": ckpt, "manifest": manifest }),
        inputs: vec![ckpt.to_path_buf(), manifest.to_path_buf()],
    }
    .finish()
}

fn reid_match(tracklets: &Path, gps: &Path, corr: &Path, out: &Path, tol: f64) -> Outcome<()> {
    let tr = read_tracklets(tracklets)?;
    let tracks = read_gps_csv(gps)?;
    let fit = fit_homography(&read_correspondences(corr)?)?;
    let result = match_gps_to_tracklets(&tr, &tracks, &fit.homography, tol)?;
    out_dir(out)?;
    write_json(
        &out.join("assignment.json"),
        &json!({ "assignment": result, "homography": fit.homography, "reprojection_rms_px": fit.rms_px }),
    )?;
    for (t, c) in &result.matching {
        println!("track {t} -> {c}");
    }
    println!("total cost {:.3} px", result.total_cost);
    Run {
        command: "reid-match",
        out_dir: out.to_path_buf(),
        seed: None,
        config: json!({ "time_tolerance_s": tol }),
        inputs: vec![tracklets.to_path_buf(), gps.to_path_buf(), corr.to_path_buf()],
    }
    .finish()
}

fn find_record<'a>(dataset: &'a Dataset, id: &str) -> Outcome<&'a Record> {
    dataset
        .manifest
        .records
        .iter()
        .find(|r| r.id() == id)
        .ok_or_else(|| usage(format!("no record with id `{id}` in the manifest")))
}

fn class_index(names: &[&str], name: &str) -> Outcome<usize> {
    names
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| Error::UnknownLabel(name.to_string()).into())
}

#[allow(clippy::too_many_arguments)]
fn occlusion(ckpt: &Path, manifest: &Path, id: &str, out: &Path, target: Option<String>, patch: usize, stride: usize) -> Outcome<()> {
    let model = Checkpoint::load(ckpt)?.model;
    let dataset = load_dataset(manifest)?;
    let fill = dataset.channel_mean(Split::Train);
    let (map, size) = match find_record(&dataset, id)? {
        Record::Interaction(r) => {
            let sample = dataset.interaction_sample(r);
            let t = class_index(InteractionClass::NAMES, target.as_deref().unwrap_or(r.label.as_str()))?;
            let size = (sample.union_image.height(), sample.union_image.width());
            (pair_occlusion_map(&model, &sample, t, patch, stride, fill)?, size)
        }
        Record::Action(r) => {
            let sample = dataset.action_sample(r);
            let t = class_index(ActionClass::NAMES, target.as_deref().unwrap_or(r.label.as_str()))?;
            let size = (sample.image.height(), sample.image.width());
            (action_occlusion_map(&model, &sample.image, t, patch, stride, fill)?, size)
        }
    };
    out_dir(out)?;
    write_json(&out.join("occlusion.json"), &map)?;
    map.to_image().resize(size.0, size.1).save_png(&out.join("occlusion.png"))?;
    let (r, c) = map.argmax();
    println!("baseline score {:.4}; largest drop {:.4} at cell ({r}, {c})", map.baseline_score, map.get(r, c));
    Run {
        command: "occlusion-map",
        out_dir: out.to_path_buf(),
        seed: None,
        config: json!({ "sample_id": id, "target_class": map.target_class, "patch_size": patch, "stride": stride, "fill": fill }),
        inputs: vec![ckpt.to_path_buf(), manifest.to_path_buf()],
    }
    .finish()
}

fn augment_preview(seed: Option<u64>, manifest: &Path, id: &str, out: &Path, mode: CutoutArg, n_masks: usize, frac: f64) -> Outcome<()> {
    let dataset = load_dataset(manifest)?;
    let cfg = CutoutConfig {
        n_masks,
        mask_size_frac: frac,
        seed: seed.unwrap_or(0),
        fill: dataset.channel_mean(Split::Train),
        ..CutoutConfig::default()
    };
    cfg.validate()?;
    let (image, outcome) = match find_record(&dataset, id)? {
        Record::Interaction(r) => {
            let s = dataset.interaction_sample(r);
            let o = match mode {
                CutoutArg::SkeletonAware => skeleton_aware_cutout(
                    &s.union_image,
                    &[&s.member_a.skeleton, &s.member_b.skeleton],
                    &ProtectedRegionSpec::interaction(),
                    &cfg,
                ),
                CutoutArg::Standard => standard_cutout(&s.union_image, &cfg),
            };
            (s.union_image, o)
        }
        Record::Action(r) => {
            let s = dataset.action_sample(r);
            let o = match mode {
                CutoutArg::SkeletonAware => skeleton_aware_cutout(&s.image, &[&s.skeleton], &ProtectedRegionSpec::action(), &cfg),
                CutoutArg::Standard => standard_cutout(&s.image, &cfg),
            };
            (s.image, o)
        }
    };
    out_dir(out)?;
    image.save_png(&out.join("original.png"))?;
    outcome.image.save_png(&out.join("augmented.png"))?;
    let masks: Vec<Value> = outcome.masks.iter().map(|m| json!({"row0": m.row0, "col0": m.col0, "size": m.size})).collect();
    let discs: Vec<Value> = outcome
        .discs
        .iter()
        .map(|d| json!({"keypoint": d.keypoint.as_str(), "x": d.x, "y": d.y, "radius": d.radius}))
        .collect();
    write_json(&out.join("masks.json"), &json!({ "masks": masks, "protected": discs, "skipped": outcome.skipped }))?;
    println!("{} masks placed, {} skipped", outcome.masks.len(), outcome.skipped);
    Run {
        command: "augment-preview",
        out_dir: out.to_path_buf(),
        seed: Some(cfg.seed),
        config: json!({ "sample_id": id, "cutout": cfg, "skeleton_aware": matches!(mode, CutoutArg::SkeletonAware) }),
        inputs: vec![manifest.to_path_buf()],
    }
    .finish()
}

fn embed_export(ckpt: &Path, manifest: &Path, out: &Path, split: SplitArg) -> Outcome<()> {
    let model = Checkpoint::load(ckpt)?.model;
    let dataset = load_dataset(manifest)?;
    let dump = export_embeddings(&model, &dataset, split.split())?;
    out_dir(out)?;
    dump.save(&out.join("embeddings.caem"))?;
    if dump.rows.len() >= 2 {
        let pca = pca_project(&dump.matrix(), 2)?;
        let mut w = csv::Writer::from_path(out.join("pca.csv")).map_err(Error::from)?;
        w.write_record(["sample_id", "kind", "label", "pc1", "pc2"]).map_err(Error::from)?;
        for (row, xy) in dump.rows.iter().zip(&pca.coords) {
            let kind = format!("{:?}", row.kind).to_lowercase();
            w.write_record([
                row.sample_id.clone(),
                kind,
                row.label.to_string(),
                xy[0].to_string(),
                xy[1].to_string(),
            ])
            .map_err(Error::from)?;
        }
        w.flush().map_err(Error::from)?;
        if pca.rank_deficient {
            println!("warning: embeddings span fewer than 2 dimensions");
        }
    }
    println!("exported {} embeddings of dimension {}", dump.rows.len(), dump.d);
    Run {
        command: "embed-export",
        out_dir: out.to_path_buf(),
        seed: None,
        config: json!({ "checkpoint": ckpt }),
        inputs: vec![ckpt.to_path_buf(), manifest.to_path_buf()],
    }
    .finish()
}

fn run(cli: Cli) -> Outcome<()> {
    let seed = cli.seed;
    match cli.command {
        Command::SynthGenerate { spec, out_dir, gps_duration, gps_rate } => {
            synth_generate(seed, &spec, &out_dir, gps_duration, gps_rate)
        }
        Command::Pretrain { config, manifest, out_dir } => pretrain(seed, &config, &manifest, &out_dir),
        Command::TrainJoint {
            config,
            manifest,
            out_dir,
            action_checkpoint,
            from_scratch,
            no_pretrain,
            standard_cutout,
            no_alignment,
            freeze_action_encoder,
        } => train_joint_cmd(
            seed,
            &config,
            &manifest,
            &out_dir,
            JointFlags {
                action_checkpoint,
                from_scratch,
                no_pretrain,
                standard_cutout,
                no_alignment,
                freeze_action_encoder,
            },
        ),
        Command::Evaluate { checkpoint, manifest, out_dir, split } => evaluate(&checkpoint, &manifest, &out_dir, split),
        Command::ReidMatch { tracklets, gps, correspondences, out_dir, time_tolerance } => {
            reid_match(&tracklets, &gps, &correspondences, &out_dir, time_tolerance)
        }
        Command::OcclusionMap { checkpoint, manifest, sample_id, out_dir, target_class, patch_size, stride } => {
            occlusion(&checkpoint, &manifest, &sample_id, &out_dir, target_class, patch_size, stride)
        }
        Command::AugmentPreview { manifest, sample_id, out_dir, mode, n_masks, mask_size_frac } => {
            augment_preview(seed, &manifest, &sample_id, &out_dir, mode, n_masks, mask_size_frac)
        }
        Command::EmbedExport { checkpoint, manifest, out_dir, split } => embed_export(&checkpoint, &manifest, &out_dir, split),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
