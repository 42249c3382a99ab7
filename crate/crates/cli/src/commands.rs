use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use geotag_core::coco::{load_predictions, CocoDataset};
use geotag_core::ingest::{
    load_detections, load_footprints, load_panorama_meta, to_json_lines, CategoryMapping, DetectionSet,
    FootprintSet, LoadReport, PanoramaMeta,
};
use geotag_core::matcher::{generate_coarse_annotations, panorama_intervals, MatchError, RunReport};
use geotag_core::metrics::{coarse_accuracy, evaluate_ap, AccuracyReport, ApParams, ApReport};
use geotag_core::projection::clip_scene;
use geotag_core::raytrace::TraceError;
use geotag_core::render::render_svg;
use geotag_core::synth::{generate_scene, perturb_detections, NoiseConfig, SynthConfig, SyntheticScene};
use geotag_core::{HeadingConvention, PipelineConfig, ThresholdMode, VisibilityInterval};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::provenance::{
    hash_detections, hash_file, sha256_hex, to_json, write_json, write_text, EvalParams, Provenance, RunConfig,
    SynthParams,
};
use crate::{AnnotateArgs, EvalArgs, EvalMode, GeometryArgs, InputArgs, Outcome, RenderArgs, SynthArgs, ThresholdArg, TraceArgs};

pub const FOOTPRINTS_FILE: &str = "footprints.geojson";
pub const METAS_FILE: &str = "metas.jsonl";
pub const MAPPING_FILE: &str = "mapping.json";
pub const DETECTIONS_FILE: &str = "detections.json";
pub const GT_FILE: &str = "gt.json";
pub const SCENE_FILE: &str = "scene.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRACE_REPORT_FILE: &str = "trace_report.json";

fn resolve(explicit: &Option<PathBuf>, scene: &Option<PathBuf>, default_name: &str, role: &str) -> Result<PathBuf> {
    explicit
        .clone()
        .or_else(|| scene.as_ref().map(|d| d.join(default_name)))
        .ok_or_else(|| anyhow!("missing input: pass --{role} or --scene"))
}

fn require(path: &Path, role: &str) -> Result<()> {
    if !path.is_file() {
        bail!("missing input {role}: {} does not exist", path.display());
    }
    Ok(())
}

fn warn_rejections(what: &str, report: &LoadReport) {
    for r in &report.rejected {
        log::warn!("{what} record {} ({}) rejected: {}", r.index, r.id.as_deref().unwrap_or("?"), r.reason);
    }
    for w in &report.warnings {
        log::warn!("{what}: {w}");
    }
}

struct SceneInputs {
    footprints: FootprintSet,
    metas: Vec<PanoramaMeta>,
    mapping: CategoryMapping,
    loads: BTreeMap<String, LoadReport>,
    paths: BTreeMap<&'static str, PathBuf>,
}

fn load_scene_inputs(inputs: &InputArgs) -> Result<SceneInputs> {
    let fp = resolve(&inputs.footprints, &inputs.scene, FOOTPRINTS_FILE, "footprints")?;
    let mp = resolve(&inputs.metas, &inputs.scene, METAS_FILE, "metas")?;
    let cp = resolve(&inputs.mapping, &inputs.scene, MAPPING_FILE, "mapping")?;
    for (p, role) in [(&fp, "footprints"), (&mp, "metas"), (&cp, "mapping")] {
        require(p, role)?;
    }
    let mapping = CategoryMapping::load(&cp).context("loading category mapping")?;
    let (footprints, fp_report) = load_footprints(&fp, &mapping).context("loading footprints")?;
    let (metas, meta_report) = load_panorama_meta(&mp).context("loading panorama metadata")?;
    warn_rejections("footprint", &fp_report);
    warn_rejections("panorama", &meta_report);
    Ok(SceneInputs {
        footprints,
        metas,
        mapping,
        loads: [("footprints".to_string(), fp_report), ("metas".to_string(), meta_report)].into(),
        paths: [("footprints", fp), ("metas", mp), ("mapping", cp)].into(),
    })
}

fn pipeline_from(geometry: &GeometryArgs) -> PipelineConfig {
    PipelineConfig {
        radius_m: geometry.radius,
        step_deg: geometry.step_deg,
        heading: HeadingConvention::from_flip(geometry.flip_heading),
        indexed_sweep: !geometry.brute_force,
        ..PipelineConfig::default()
    }
}

fn provenance_for(command: &str, pipeline: &PipelineConfig, inputs: &SceneInputs) -> Result<Provenance> {
    let mut cfg = RunConfig::new(command, pipeline);
    for (role, p) in &inputs.paths {
        cfg = cfg.input(role, p);
    }
    let mut prov = Provenance::new(cfg);
    for (role, p) in &inputs.paths {
        prov.input_hashes.insert(role.to_string(), hash_file(p)?);
    }
    Ok(prov)
}

/// File-system safe stem for a panorama id.
pub fn file_stem(pano_id: &str) -> String {
    let safe: String = pano_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    if safe == pano_id {
        safe
    } else {
        // Keep distinct ids distinct after sanitising.
        format!("{safe}-{}", &sha256_hex(pano_id.as_bytes())[..8])
    }
}

pub fn interval_file_name(pano_id: &str) -> String {
    format!("{}.intervals.json", file_stem(pano_id))
}

/// One panorama's trace output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub pano_id: String,
    pub meta: PanoramaMeta,
    pub provenance: Provenance,
    pub intervals: Vec<VisibilityInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPanorama {
    pub pano_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub provenance: Provenance,
    pub panoramas: usize,
    pub written: Vec<String>,
    pub skipped: Vec<SkippedPanorama>,
    pub loads: BTreeMap<String, LoadReport>,
}

pub fn cmd_trace(args: &TraceArgs) -> Result<Outcome> {
    let inputs = load_scene_inputs(&args.inputs)?;
    let pipeline = pipeline_from(&args.geometry);
    pipeline.validate()?;
    let mut prov = provenance_for("trace", &pipeline, &inputs)?;
    prov.run_config = prov.run_config.output("intervals_dir", &args.out);

    use rayon::prelude::*;
    let traced: Vec<(usize, Result<Vec<VisibilityInterval>, MatchError>)> = inputs
        .metas
        .par_iter()
        .enumerate()
        .map(|(i, m)| (i, panorama_intervals(&inputs.footprints, m, &pipeline)))
        .collect();

    let mut written = Vec::new();
    let mut skipped = Vec::new();
    for (i, result) in traced {
        let meta = &inputs.metas[i];
        match result {
            Ok(intervals) => {
                let name = interval_file_name(&meta.pano_id);
                write_json(
                    &args.out.join(&name),
                    &TraceFile {
                        pano_id: meta.pano_id.clone(),
                        meta: meta.clone(),
                        provenance: prov.clone(),
                        intervals,
                    },
                )?;
                written.push(name);
            }
            Err(MatchError::Trace(TraceError::DegenerateScene(b))) => {
                log::warn!("panorama {} skipped: camera inside building {b}", meta.pano_id);
                skipped.push(SkippedPanorama {
                    pano_id: meta.pano_id.clone(),
                    reason: format!("camera inside building {b}"),
                });
            }
            Err(e) => return Err(e).with_context(|| format!("tracing panorama {}", meta.pano_id)),
        }
    }
    let outcome = if skipped.is_empty() { Outcome::Clean } else { Outcome::Partial };
    write_json(
        &args.out.join(TRACE_REPORT_FILE),
        &TraceReport {
            provenance: prov,
            panoramas: inputs.metas.len(),
            written,
            skipped,
            loads: inputs.loads,
        },
    )?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotateReport {
    pub provenance: Provenance,
    pub loads: BTreeMap<String, LoadReport>,
    pub run: RunReport,
}

pub fn cmd_annotate(args: &AnnotateArgs) -> Result<Outcome> {
    let mut inputs = load_scene_inputs(&args.inputs)?;
    let dp = resolve(&args.detections, &args.inputs.scene, DETECTIONS_FILE, "detections")?;
    require(&dp, "detections")?;
    let (dets, det_report): (DetectionSet, LoadReport) = load_detections(&dp).context("loading detections")?;
    warn_rejections("detection", &det_report);
    inputs.loads.insert("detections".into(), det_report);

    let pipeline = PipelineConfig {
        iou_x_min: args.iou_x,
        threshold: match args.threshold_mode {
            ThresholdArg::Adaptive => ThresholdMode::Adaptive,
            ThresholdArg::Fixed => ThresholdMode::Fixed(args.fixed_threshold),
        },
        batch_size: args.batch_size,
        seed: args.seed,
        ..pipeline_from(&args.geometry)
    };
    let mut prov = provenance_for("annotate", &pipeline, &inputs)?;
    prov.run_config = prov.run_config.input("detections", &dp).output("annotations", &args.out);
    if let Some(r) = &args.report {
        prov.run_config = prov.run_config.output("report", r);
    }
    prov.input_hashes.insert("detections".into(), hash_detections(&dets));

    let (coarse, run) = generate_coarse_annotations(&inputs.metas, &inputs.footprints, &dets, &pipeline)?;
    let mut dataset = CocoDataset::from_coarse(&inputs.metas, &inputs.mapping, &coarse);
    dataset.info = Some(serde_json::to_value(&prov)?);
    write_json(&args.out, &dataset)?;

    let outcome = if run.is_clean() { Outcome::Clean } else { Outcome::Partial };
    log::info!(
        "{} of {} boxes annotated over {} batches",
        run.totals.annotated,
        run.totals.input_boxes,
        run.batches.len()
    );
    if let Some(path) = &args.report {
        write_json(
            path,
            &AnnotateReport {
                provenance: prov,
                loads: inputs.loads,
                run,
            },
        )?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub provenance: Provenance,
    /// `None` inside means accuracy is undefined (no coarse boxes).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<AccuracyReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ap: Option<ApReport>,
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Outcome> {
    require(&args.gt, "gt")?;
    require(&args.pred, "pred")?;
    let gt = CocoDataset::load(&args.gt).context("loading ground truth")?.to_annotation_set();
    let pred = load_predictions(&args.pred).context("loading predictions")?;

    let mut cfg = RunConfig::new("eval", &PipelineConfig::default())
        .input("gt", &args.gt)
        .input("pred", &args.pred);
    cfg.eval = Some(EvalParams {
        mode: format!("{:?}", args.mode).to_lowercase(),
        accuracy_iou: args.iou_thr,
    });
    if let Some(o) = &args.out {
        cfg = cfg.output("metrics", o);
    }
    let mut prov = Provenance::new(cfg);
    prov.input_hashes.insert("gt".into(), hash_file(&args.gt)?);
    prov.input_hashes.insert("pred".into(), hash_file(&args.pred)?);

    let accuracy = matches!(args.mode, EvalMode::Accuracy | EvalMode::All).then(|| coarse_accuracy(&pred, &gt, args.iou_thr));
    let ap = matches!(args.mode, EvalMode::Ap | EvalMode::All).then(|| evaluate_ap(&pred, &gt, &ApParams::default()));
    if let Some(a) = &accuracy {
        match a.accuracy {
            Some(v) => log::info!("accuracy {v:.4} ({} / {})", a.correct, a.total),
            None => log::info!("accuracy undefined: no coarse annotations"),
        }
    }
    let out = EvalOutput {
        provenance: prov,
        accuracy,
        ap,
    };
    match &args.out {
        Some(path) => write_json(path, &out)?,
        None => print!("{}", to_json(&out)?),
    }
    Ok(Outcome::Clean)
}

pub fn cmd_render(args: &RenderArgs) -> Result<Outcome> {
    let inputs = load_scene_inputs(&args.inputs)?;
    let mut pipeline = pipeline_from(&args.geometry);
    let (meta, intervals, trace_prov) = match &args.trace {
        Some(path) => {
            require(path, "trace")?;
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let tf: TraceFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            if tf.pano_id != args.pano {
                bail!("{} holds panorama {}, not {}", path.display(), tf.pano_id, args.pano);
            }
            pipeline.radius_m = tf.provenance.run_config.radius_m;
            pipeline.step_deg = tf.provenance.run_config.step_deg;
            pipeline.heading = HeadingConvention::from_flip(tf.provenance.run_config.flip_heading);
            (tf.meta, tf.intervals, Some(tf.provenance))
        }
        None => {
            let meta = inputs
                .metas
                .iter()
                .find(|m| m.pano_id == args.pano)
                .cloned()
                .ok_or_else(|| anyhow!("panorama {} not found in metadata", args.pano))?;
            let intervals = match panorama_intervals(&inputs.footprints, &meta, &pipeline) {
                Ok(iv) => iv,
                Err(MatchError::Trace(TraceError::DegenerateScene(b))) => {
                    log::warn!("camera inside building {b}; drawing without intervals");
                    Vec::new()
                }
                Err(e) => return Err(e.into()),
            };
            (meta, intervals, None)
        }
    };
    pipeline.validate()?;
    let scene = clip_scene(&inputs.footprints, &meta, pipeline.radius_m)?;
    let mut prov = provenance_for("render", &pipeline, &inputs)?;
    prov.run_config = prov.run_config.output("svg", &args.out);
    if let Some(path) = &args.trace {
        prov.run_config = prov.run_config.input("trace", path);
        prov.input_hashes.insert("trace".into(), hash_file(path)?);
    }
    let metadata = json!({ "provenance": prov, "pano_id": meta.pano_id, "trace_provenance": trace_prov });
    let svg = render_svg(&scene, Some(&meta), &intervals, Some(&serde_json::to_string(&metadata)?));
    write_text(&args.out, &svg)?;
    Ok(Outcome::Clean)
}

/// What `synth` wrote, with hashes of each file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub run_config: RunConfig,
    pub files: BTreeMap<String, String>,
    pub cameras: usize,
    pub buildings: usize,
    pub ground_truth_boxes: usize,
    pub detections: usize,
}

#[derive(Serialize)]
struct SceneFile<'a> {
    run_config: &'a RunConfig,
    scene: &'a SyntheticScene,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<Outcome> {
    let scene_cfg = SynthConfig {
        n_buildings: args.buildings,
        n_cameras: args.cameras,
        corridor_width: args.corridor_width,
        category_count: args.categories,
        radius_m: args.radius,
        ..SynthConfig::default()
    };
    let noise = NoiseConfig {
        shift_frac: args.noise_shift,
        scale_frac: args.noise_scale,
        min_iou: args.min_iou,
        true_score: (args.score_min, args.score_max),
        false_positive_rate: args.fp_rate,
        ..NoiseConfig::none()
    };
    let detection_seed = args.detection_seed.unwrap_or(args.seed);
    let scene = generate_scene(args.seed, &scene_cfg)?;
    let dets = perturb_detections(&scene, &noise, detection_seed)?;

    let pipeline = PipelineConfig {
        radius_m: args.radius,
        ..PipelineConfig::default()
    };
    let mut cfg = RunConfig::new("synth", &pipeline);
    cfg.synth = Some(SynthParams {
        seed: args.seed,
        detection_seed,
        scene: scene_cfg,
        noise,
    });
    let names = [FOOTPRINTS_FILE, METAS_FILE, MAPPING_FILE, DETECTIONS_FILE, GT_FILE, SCENE_FILE];
    for name in names {
        cfg = cfg.output(name, &args.out.join(name));
    }

    let mut gt = scene.ground_truth_dataset();
    gt.info = Some(json!({ "run_config": cfg }));
    let det_records: Vec<_> = dets
        .iter()
        .map(|d| json!({ "pano_id": d.pano_id, "bbox": d.bbox.to_array(), "score": d.score, "category_id": d.category_id }))
        .collect();
    let mut geojson = scene.footprints.to_geojson();
    geojson["run_config"] = serde_json::to_value(&cfg)?;

    let contents: Vec<(&str, String)> = vec![
        (FOOTPRINTS_FILE, to_json(&geojson)?),
        (METAS_FILE, to_json_lines(&scene.metas())),
        (MAPPING_FILE, to_json(&scene.mapping)?),
        (DETECTIONS_FILE, to_json(&det_records)?),
        (GT_FILE, to_json(&gt)?),
        (SCENE_FILE, to_json(&SceneFile { run_config: &cfg, scene: &scene })?),
    ];
    let mut files = BTreeMap::new();
    for (name, text) in &contents {
        write_text(&args.out.join(name), text)?;
        files.insert(name.to_string(), sha256_hex(text.as_bytes()));
    }
    write_json(
        &args.out.join(MANIFEST_FILE),
        &SynthManifest {
            run_config: cfg,
            files,
            cameras: scene.cameras.len(),
            buildings: scene.footprints.len(),
            ground_truth_boxes: scene.ground_truth_boxes().count(),
            detections: dets.len(),
        },
    )?;
    Ok(Outcome::Clean)
}
