//! Command-line front end for the detection pipeline.
//!
//! Subcommands: `synth` (synthetic dataset generation), `convert` (VOC XML
//! → YOLO labels), `augment` (augmentation preview), `detect` (image →
//! detections JSON), `eval` (detections + dataset → mAP report),
//! `loss-eval`, `encode`, `decode`, and `schedule`.
//!
//! All commands are deterministic given `--seed`; diagnostics go to the
//! error stream, data to files or standard output; the exit code is 0 iff
//! no per-item failure occurred. The default class table is the 20-class
//! VOC list, overridable with `--classes` or the `YOLO1_CLASSES`
//! environment variable (path to a file with one class name per line).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use yolo1::augment::AugmentPipeline;
use yolo1::codec::{decode, encode, GridConfig, TargetTensor};
use yolo1::dataset::{
    generate_synthetic, parse_voc_xml, read_ppm, read_yolo_labels, write_atomic, write_dataset,
    write_ppm, write_yolo_labels, ClassTable,
};
use yolo1::eval::{mean_ap, ApMode, EvalConfig, GroundTruth, GroundTruthSet};
use yolo1::geometry::BoxYolo;
use yolo1::loss::{yolo_loss, LossParams};
use yolo1::network::{
    builtin_architecture, forward, load_weights, resize_bilinear, ArchitectureDef, NetworkError,
};
use yolo1::postprocess::{detect, NmsConfig};
use yolo1::render::{class_color, draw_box_outline};
use yolo1::rng::{derive_seed, RngStream};
use yolo1::schedule::{lr_at, ScheduleSpec};
use yolo1::Detection;

type AnyError = Box<dyn std::error::Error>;

#[derive(Parser)]
#[command(name = "yolo1", version, about = "Single-shot detection pipeline tools")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Suppress the summary lines on standard output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Class table file (one name per line); defaults to $YOLO1_CLASSES or
    /// the builtin VOC list.
    #[arg(long, global = true)]
    classes: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rectangle dataset under OUT/images + OUT/labels.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 448)]
        size: usize,
        #[arg(long, default_value_t = 7)]
        grid: usize,
    },
    /// Convert a VOC annotation tree (VOC_DIR/Annotations/*.xml) to YOLO
    /// label files (OUT_DIR/NAME.txt).
    Convert {
        #[arg(long)]
        voc_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Apply the augmentation pipeline to a dataset; writes images/ +
    /// labels/ plus preview/ copies with 2-px box outlines.
    Augment {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Pipeline config file (`key = value` lines); defaults built in.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Process only the first N samples.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run a network on one image and emit detections JSON.
    #[command(alias = "forward")]
    Detect(DetectArgs),
    /// Score detections JSON against a dataset's labels.
    Eval {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
        #[arg(long, default_value = "elevenpoint")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the composite loss between two serialized tensors.
    LossEval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, default_value_t = 5.0)]
        lambda_coord: f64,
        #[arg(long, default_value_t = 0.5)]
        lambda_noobj: f64,
    },
    /// Encode a YOLO label file into a serialized grid tensor.
    Encode {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        s: usize,
        #[arg(long, default_value_t = 2)]
        b: usize,
        #[arg(long, default_value_t = 20)]
        c: usize,
    },
    /// Decode a serialized grid tensor back into YOLO label lines.
    Decode {
        #[arg(long)]
        tensor: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a CSV of (step, lr) for a learning-rate schedule.
    Schedule(ScheduleArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Builtin name (full24 | tiny9 | ms6) or path to an architecture JSON.
    #[arg(long)]
    arch: String,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[arg(long, default_value_t = 0.20)]
    conf: f64,
    #[arg(long, default_value_t = 0.45)]
    nms: f64,
    #[arg(long, default_value_t = 100)]
    max: usize,
    /// Write the JSON here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a copy of the image with detection boxes drawn.
    #[arg(long)]
    annotate: Option<PathBuf>,
}

#[derive(Args)]
struct ScheduleArgs {
    /// fixed | multistep | onecycle_cosine
    #[arg(long)]
    kind: String,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    base_lr: Option<f64>,
    /// Comma-separated step indices.
    #[arg(long)]
    milestones: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    #[arg(long)]
    max_lr: Option<f64>,
    #[arg(long)]
    total_steps: Option<usize>,
    #[arg(long, default_value_t = 0.3)]
    pct_start: f64,
    #[arg(long, default_value_t = 25.0)]
    div_factor: f64,
    #[arg(long, default_value_t = 1e4)]
    final_div_factor: f64,
    /// Row count for fixed/multistep (onecycle always emits total_steps).
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Detections JSON element; field order is the serialization order.
#[derive(Serialize, Deserialize)]
struct DetectionJson {
    class: usize,
    name: String,
    score: f64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct ImageDetections {
    image: String,
    detections: Vec<DetectionJson>,
}

#[derive(Serialize)]
struct EvalJson {
    map: f64,
    per_class: BTreeMap<String, f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(failures) if failures == 0 => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} item(s) failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn load_class_table(cli: &Cli) -> Result<ClassTable, AnyError> {
    let path = cli
        .classes
        .clone()
        .or_else(|| std::env::var_os("YOLO1_CLASSES").map(PathBuf::from));
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| format!("class table {}: {e}", p.display()))?;
            Ok(ClassTable::from_text(&text)?)
        }
        None => Ok(ClassTable::default_voc()),
    }
}

fn load_arch(spec: &str) -> Result<ArchitectureDef, AnyError> {
    match builtin_architecture(spec) {
        Ok(arch) => Ok(arch),
        Err(NetworkError::UnknownArchitecture(_)) if Path::new(spec).exists() => {
            let text = std::fs::read_to_string(spec)?;
            let arch: ArchitectureDef = serde_json::from_str(&text)?;
            arch.validate()?;
            Ok(arch)
        }
        Err(e) => Err(e.into()),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), AnyError> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent() {
                if !dir.as_os_str().is_empty() {
                    std::fs::create_dir_all(dir)?;
                }
            }
            write_atomic(path, text.as_bytes())?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn to_json(name_of: impl Fn(usize) -> String, image: &str, dets: &[Detection]) -> ImageDetections {
    ImageDetections {
        image: image.into(),
        detections: dets
            .iter()
            .map(|d| DetectionJson {
                class: d.class_id,
                name: name_of(d.class_id),
                score: d.score,
                cx: d.box_.cx(),
                cy: d.box_.cy(),
                w: d.box_.w(),
                h: d.box_.h(),
            })
            .collect(),
    }
}

fn run(cli: &Cli) -> Result<usize, AnyError> {
    let table = load_class_table(cli)?;
    match &cli.command {
        Command::Synth { out, n, size, grid } => {
            let samples = generate_synthetic(cli.seed, *n, &table, *size, *grid);
            write_dataset(out, &samples)?;
            if !cli.quiet {
                println!("wrote {} samples to {}", samples.len(), out.display());
            }
            Ok(0)
        }
        Command::Convert { voc_dir, out_dir } => cmd_convert(cli, &table, voc_dir, out_dir),
        Command::Augment {
            dataset,
            out,
            config,
            n,
        } => cmd_augment(cli, &table, dataset, out, config.as_deref(), *n),
        Command::Detect(args) => cmd_detect(cli, &table, args),
        Command::Eval {
            detections,
            dataset,
            iou,
            mode,
            out,
        } => cmd_eval(cli, &table, detections, dataset, *iou, mode, out),
        Command::LossEval {
            pred,
            target,
            lambda_coord,
            lambda_noobj,
        } => {
            let pred = TargetTensor::from_bytes(&std::fs::read(pred)?)?;
            let target = TargetTensor::from_bytes(&std::fs::read(target)?)?;
            let params = LossParams {
                lambda_coord: *lambda_coord,
                lambda_noobj: *lambda_noobj,
            };
            let b = yolo_loss(&pred, &target, &params)?;
            println!(
                "{}",
                serde_json::json!({
                    "coord": b.coord,
                    "obj": b.obj,
                    "noobj": b.noobj,
                    "classification": b.classification,
                    "total": b.total,
                })
            );
            Ok(0)
        }
        Command::Encode { labels, out, s, b, c } => {
            let text = std::fs::read_to_string(labels)?;
            let boxes = read_yolo_labels(&text, &table)?;
            let tensor = encode(&boxes, GridConfig::new(*s, *b, *c))?;
            write_atomic(out, &tensor.to_bytes())?;
            if !cli.quiet {
                println!("encoded {} labels to {}", boxes.len(), out.display());
            }
            Ok(0)
        }
        Command::Decode {
            tensor,
            threshold,
            out,
        } => {
            let t = TargetTensor::from_bytes(&std::fs::read(tensor)?)?;
            let dets = decode(&t, *threshold);
            let boxes: Vec<BoxYolo> = dets
                .iter()
                .map(|d| d.box_.with_class(d.class_id))
                .collect();
            emit(out, &write_yolo_labels(&boxes))?;
            Ok(0)
        }
        Command::Schedule(args) => cmd_schedule(args),
    }
}

fn cmd_convert(
    cli: &Cli,
    table: &ClassTable,
    voc_dir: &Path,
    out_dir: &Path,
) -> Result<usize, AnyError> {
    let ann_dir = voc_dir.join("Annotations");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&ann_dir)
        .map_err(|e| format!("{}: {e}", ann_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "xml").unwrap_or(false))
        .collect();
    files.sort();
    std::fs::create_dir_all(out_dir)?;
    let (mut converted, mut objects, mut difficult, mut failures) = (0usize, 0usize, 0usize, 0usize);
    for path in &files {
        let attempt = || -> Result<(usize, usize), AnyError> {
            let text = std::fs::read_to_string(path)?;
            let ann = parse_voc_xml(&text, table)?;
            let mut boxes = Vec::with_capacity(ann.objects.len());
            let mut diff = 0;
            for obj in &ann.objects {
                let id = table.id_of(&obj.name).expect("validated by parser");
                boxes.push(yolo1::geometry::voc_to_yolo(
                    &obj.bndbox,
                    id,
                    ann.width as f64,
                    ann.height as f64,
                )?);
                if obj.difficult {
                    diff += 1;
                }
            }
            let stem = path.file_stem().unwrap().to_string_lossy();
            write_atomic(
                &out_dir.join(format!("{stem}.txt")),
                write_yolo_labels(&boxes).as_bytes(),
            )?;
            Ok((boxes.len(), diff))
        };
        match attempt() {
            Ok((n, d)) => {
                converted += 1;
                objects += n;
                difficult += d;
            }
            Err(e) => {
                failures += 1;
                eprintln!("convert {}: {e}", path.display());
            }
        }
    }
    if !cli.quiet {
        println!(
            "converted {converted} files, {objects} objects, {difficult} skipped(difficult retained, flagged)"
        );
    }
    Ok(failures)
}

fn cmd_augment(
    cli: &Cli,
    table: &ClassTable,
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    n: Option<usize>,
) -> Result<usize, AnyError> {
    let pipeline = match config {
        Some(p) => AugmentPipeline::parse(&std::fs::read_to_string(p)?)?,
        None => AugmentPipeline::default(),
    };
    let images_dir = dataset.join("images");
    let labels_dir = dataset.join("labels");
    let mut stems: Vec<String> = std::fs::read_dir(&images_dir)
        .map_err(|e| format!("{}: {e}", images_dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "ppm").unwrap_or(false))
        .filter_map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .collect();
    stems.sort();
    if let Some(limit) = n {
        stems.truncate(limit);
    }
    for sub in ["images", "labels", "preview"] {
        std::fs::create_dir_all(out.join(sub))?;
    }
    let mut failures = 0usize;
    for (index, stem) in stems.iter().enumerate() {
        let attempt = || -> Result<(), AnyError> {
            let lbl_path = labels_dir.join(format!("{stem}.txt"));
            if !lbl_path.exists() {
                return Err(format!("no label file for image {stem}").into());
            }
            let image = read_ppm(&std::fs::read(images_dir.join(format!("{stem}.ppm")))?)?;
            let labels = read_yolo_labels(&std::fs::read_to_string(&lbl_path)?, table)?;
            let sample = yolo1::dataset::Sample { image, labels };
            let mut rng = RngStream::new(derive_seed(cli.seed, index as u64));
            let augmented = pipeline.apply(&sample, &mut rng)?;
            write_atomic(
                &out.join("images").join(format!("{stem}.ppm")),
                &write_ppm(&augmented.image),
            )?;
            write_atomic(
                &out.join("labels").join(format!("{stem}.txt")),
                write_yolo_labels(&augmented.labels).as_bytes(),
            )?;
            let mut preview = augmented.image.clone();
            for b in &augmented.labels {
                draw_box_outline(&mut preview, b, class_color(b.class_id()), 2);
            }
            write_atomic(
                &out.join("preview").join(format!("{stem}.ppm")),
                &write_ppm(&preview),
            )?;
            Ok(())
        };
        if let Err(e) = attempt() {
            failures += 1;
            eprintln!("augment {stem}: {e}");
        }
    }
    if !cli.quiet {
        println!("augmented {} samples to {}", stems.len() - failures, out.display());
    }
    Ok(failures)
}

fn cmd_detect(cli: &Cli, table: &ClassTable, args: &DetectArgs) -> Result<usize, AnyError> {
    let arch = load_arch(&args.arch)?;
    let weights = load_weights(&arch, &std::fs::read(&args.weights)?)?;
    let image = read_ppm(&std::fs::read(&args.image)?)?;
    let resized = if image.width() == arch.input_w && image.height() == arch.input_h {
        image.clone()
    } else {
        resize_bilinear(&image, arch.input_w, arch.input_h)
    };
    let pred = forward(&arch, &weights, &resized)?;
    let dets = detect(
        &pred,
        &NmsConfig {
            iou_threshold: args.nms,
            conf_threshold: args.conf,
            max_detections: args.max,
        },
    );
    let stem = args
        .image
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name_of = |id: usize| table.name(id).unwrap_or("unknown").to_string();
    let json = serde_json::to_string_pretty(&to_json(name_of, &stem, &dets))?;
    emit(&args.out, &format!("{json}\n"))?;
    if let Some(path) = &args.annotate {
        let mut annotated = image;
        for d in &dets {
            draw_box_outline(&mut annotated, &d.box_, class_color(d.class_id), 2);
        }
        write_atomic(path, &write_ppm(&annotated))?;
    }
    if !cli.quiet {
        eprintln!("{} detections", dets.len());
    }
    Ok(0)
}

fn cmd_eval(
    cli: &Cli,
    table: &ClassTable,
    detections: &Path,
    dataset: &Path,
    iou: f64,
    mode: &str,
    out: &Option<PathBuf>,
) -> Result<usize, AnyError> {
    let ap_mode = match mode {
        "elevenpoint" => ApMode::Elevenpoint,
        "allpoint" => ApMode::Allpoint,
        other => return Err(format!("unknown AP mode: {other}").into()),
    };
    let entries = yolo1::dataset::read_dataset(dataset, table)?;
    let parsed: Vec<ImageDetections> =
        serde_json::from_str(&std::fs::read_to_string(detections)?)?;
    let mut by_image: BTreeMap<&str, &ImageDetections> =
        parsed.iter().map(|d| (d.image.as_str(), d)).collect();
    let mut dets: Vec<Vec<Detection>> = Vec::with_capacity(entries.len());
    let mut gts: GroundTruthSet = Vec::with_capacity(entries.len());
    let mut failures = 0usize;
    for (stem, sample) in &entries {
        let per_image = match by_image.remove(stem.as_str()) {
            Some(d) => d
                .detections
                .iter()
                .map(|j| {
                    Ok(Detection {
                        class_id: j.class,
                        score: j.score,
                        box_: BoxYolo::new(j.class, j.cx, j.cy, j.w, j.h),
                    })
                })
                .collect::<Result<Vec<_>, AnyError>>()?,
            None => Vec::new(),
        };
        dets.push(per_image);
        gts.push(
            sample
                .labels
                .iter()
                .map(|b| GroundTruth {
                    class_id: b.class_id(),
                    box_: b.clone(),
                    difficult: false,
                })
                .collect(),
        );
    }
    for (image, _) in by_image {
        failures += 1;
        eprintln!("eval: detections for unknown image {image}");
    }
    let report = mean_ap(
        &dets,
        &gts,
        &EvalConfig {
            iou_threshold: iou,
            ap_mode,
        },
        table,
    );
    let json = EvalJson {
        map: report.map,
        per_class: report
            .per_class
            .iter()
            .map(|(id, ap)| (table.name(*id).unwrap_or("unknown").to_string(), *ap))
            .collect(),
    };
    emit(out, &format!("{}\n", serde_json::to_string_pretty(&json)?))?;
    if !cli.quiet {
        eprintln!("mAP {:.4} over {} classes", report.map, report.per_class.len());
    }
    Ok(failures)
}

fn cmd_schedule(args: &ScheduleArgs) -> Result<usize, AnyError> {
    let missing = |flag: &str| format!("--{flag} is required for this schedule kind");
    let (spec, rows) = match args.kind.as_str() {
        "fixed" => (
            ScheduleSpec::Fixed {
                lr: args.lr.ok_or_else(|| missing("lr"))?,
            },
            args.steps.ok_or_else(|| missing("steps"))?,
        ),
        "multistep" => {
            let milestones = args
                .milestones
                .as_deref()
                .unwrap_or("")
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| s.trim().parse::<usize>())
                .collect::<Result<Vec<_>, _>>()?;
            (
                ScheduleSpec::Multistep {
                    base_lr: args.base_lr.ok_or_else(|| missing("base-lr"))?,
                    milestones,
                    gamma: args.gamma,
                },
                args.steps.ok_or_else(|| missing("steps"))?,
            )
        }
        "onecycle_cosine" => {
            let total_steps = args.total_steps.ok_or_else(|| missing("total-steps"))?;
            (
                ScheduleSpec::OnecycleCosine {
                    max_lr: args.max_lr.ok_or_else(|| missing("max-lr"))?,
                    total_steps,
                    pct_start: args.pct_start,
                    div_factor: args.div_factor,
                    final_div_factor: args.final_div_factor,
                },
                total_steps,
            )
        }
        other => return Err(format!("unknown schedule kind: {other}").into()),
    };
    let mut csv = String::from("step,lr\n");
    for step in 0..rows {
        csv.push_str(&format!("{step},{}\n", lr_at(&spec, step)?));
    }
    emit(&args.out, &csv)?;
    Ok(0)
}
