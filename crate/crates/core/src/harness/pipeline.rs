use std::ops::Range;
use std::path::{Path, PathBuf};

use ndarray::{s, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, FlowTransforms, ImageSource};
use super::container::{write_container, ArrayData, Container};
use crate::encode::{
    flow_encode, forward, phase_difference, phase_to_velocity, Acquisition, Encoding, FlowEncodingSpec, FlowPair,
    KSpaceSeries,
};
use crate::error::{Error, Result};
use crate::phantom::{
    apply_bulk_motion, coil_maps_synthetic, make_cine_phantom, make_flow_phantom, GridSpec, PhantomConfig,
    PhantomTruth, Stage,
};
use crate::physio::{
    detect_end_expiration, export_signal_overlay, extract_physio, select_beats, signals_csv, BeatSelection,
    PhysioSignals,
};
use crate::quant::{
    flow_metrics, function_params, repeatability_report, ventricular_volumes, AnalysisMode, QuantReport,
    RepeatabilityStats,
};
use crate::recon::{
    artifact_energy, coil_reweight, estimate_sensitivities, score_reconstruct, temporal_pca_basis, zero_filled,
    CoilWeights, Transform, TransformSet, Uwt3,
};
use crate::sampling::{cava_generate_with, cava_rebin, gro_generate, SamplingPattern};
use crate::types::{nrmse, CoilMaps, ImageSeries, C64};

/// One simulated acquisition: a stage of one subject's scan.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RunKey {
    pub stage: Stage,
    pub subject: usize,
    pub repeat: usize,
    pub seed: u64,
}

impl RunKey {
    pub fn subject_label(&self) -> String {
        format!("s{:02}", self.subject)
    }

    pub fn dir_name(&self) -> String {
        format!("{}_{}_r{}", self.stage, self.subject_label(), self.repeat)
    }
}

/// All runs of an experiment, stage-major.
pub fn run_keys(cfg: &ExperimentConfig) -> Vec<RunKey> {
    let mut keys = Vec::new();
    for &stage in &cfg.stages {
        for subject in 0..cfg.subjects {
            for (repeat, &seed) in cfg.seeds.iter().enumerate() {
                keys.push(RunKey {
                    stage,
                    subject,
                    repeat,
                    seed: seed.wrapping_mul(1_000_003).wrapping_add(subject as u64),
                });
            }
        }
    }
    keys
}

/// Stage physiology with the subject's fixed deviations and the run's random
/// start phases applied.
pub fn run_phantom(cfg: &ExperimentConfig, key: &RunKey, frame_interval_ms: f64, frames: usize) -> Result<PhantomConfig> {
    let mut p = cfg.stage_phantom(key.stage, frame_interval_ms, frames)?;
    let mut subject = ChaCha8Rng::seed_from_u64(0x5eed_0000 + key.subject as u64);
    let v = cfg.subject_variation;
    let size = 1.0 + v * (2.0 * subject.random::<f64>() - 1.0);
    let rate = 1.0 + v * (2.0 * subject.random::<f64>() - 1.0);
    p.edv_ml *= size;
    p.esv_ml *= size;
    p.heart_rate_bpm *= rate;
    if cfg.randomize_phases {
        let mut run = ChaCha8Rng::seed_from_u64(key.seed);
        p.resp_phase = run.random();
        p.cardiac_phase = run.random();
    }
    p.seed = key.seed;
    Ok(p)
}

/// Beat used in each analysis mode: the physiology-selected beat for EE
/// and the first complete beat for AP.
pub fn mode_beat(beats: &BeatSelection, mode: AnalysisMode) -> Range<usize> {
    match mode {
        AnalysisMode::Ee => beats.chosen_beat().frames.clone(),
        AnalysisMode::Ap => beats.beats[0].frames.clone(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconSummary {
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub final_objective: Option<f64>,
    /// Objective after each iteration (empty for zero-filled images).
    pub objective: Vec<f64>,
    /// Against the noise-free phantom series.
    pub nrmse: f64,
    pub artifact_energy: Option<f64>,
    /// Same data reconstructed without coil reweighting, when requested.
    pub artifact_energy_unweighted: Option<f64>,
    pub coil_weights: Option<CoilWeights>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysioSummary {
    pub resp_hz: f64,
    pub cardiac_hz: f64,
    pub hr_bpm: f64,
    pub aphr_percent: f64,
    pub windows: Vec<Range<usize>>,
    pub beats: BeatSelection,
    pub ee_beat: Range<usize>,
    pub ap_beat: Range<usize>,
}

/// Outcome of one cine acquisition.
#[derive(Clone, Debug)]
pub struct CineRun {
    pub key: RunKey,
    pub phantom: PhantomConfig,
    pub truth: PhantomTruth,
    /// Analysed slice (complex for reconstructed sources).
    pub image: ImageSeries<C64>,
    pub signals: PhysioSignals,
    pub physio: PhysioSummary,
    pub recon: Option<ReconSummary>,
    pub report: QuantReport,
    pub pattern: Option<SamplingPattern>,
}

/// Outcome of one flow acquisition.
#[derive(Clone, Debug)]
pub struct FlowRun {
    pub key: RunKey,
    pub phantom: PhantomConfig,
    pub velocity: ImageSeries<f64>,
    pub signals: PhysioSignals,
    pub physio: PhysioSummary,
    pub recon: Option<ReconSummary>,
    /// Velocity NRMSE against truth inside the vessel.
    pub velocity_nrmse: f64,
    pub report: QuantReport,
}

fn acquisition_maps(p: &PhantomConfig) -> Result<CoilMaps> {
    let grid = GridSpec::new(p.ny, p.nx, p.pixel_mm);
    let maps = coil_maps_synthetic(p.ncoils, grid, p.seed)?;
    if p.bulk_motion.is_empty() {
        Ok(maps)
    } else {
        apply_bulk_motion(&maps, &p.bulk_motion, &p.frame_times_s(), p.pixel_mm)
    }
}

/// GRO acquisition of one cine slice.
pub fn acquire_cine(
    cfg: &ExperimentConfig,
    p: &PhantomConfig,
    image: &ImageSeries<C64>,
    seed: u64,
) -> Result<(SamplingPattern, KSpaceSeries)> {
    let maps = acquisition_maps(p)?;
    let pattern = gro_generate(p.ny, cfg.cine.lines_per_frame, p.frames, cfg.cine.gro_s, cfg.cine.gro_alpha)?;
    let acq = Acquisition::new(cfg.noise.sigma, seed ^ 0xc1e, cfg.cine.tr_ms);
    let k = forward(image, &maps, &pattern, acq)?;
    Ok((pattern, k))
}

/// CAVA acquisition of both flow encodings, concatenated in time
/// (compensated first).
pub fn acquire_flow(
    cfg: &ExperimentConfig,
    p: &PhantomConfig,
    pair: &FlowPair,
    seed: u64,
) -> Result<(SamplingPattern, KSpaceSeries)> {
    let maps = acquisition_maps(p)?;
    let order = cava_generate_with(p.ny, p.frames * cfg.flow.lines_per_frame, cfg.flow.cava_s, cfg.flow.cava_alpha)?;
    let pattern = cava_rebin(&order, cfg.flow.lines_per_frame)?;
    let acq = |seed: u64, encoding| Acquisition {
        venc: Some(cfg.flow.venc_cm_s),
        encoding,
        ..Acquisition::new(cfg.noise.sigma, seed, cfg.flow.tr_ms)
    };
    let kc = forward(&pair.compensated, &maps, &pattern, acq(seed ^ 0xf10c, Encoding::Compensated))?;
    let ke = forward(&pair.encoded, &maps, &pattern, acq(seed ^ 0xf10e, Encoding::Encoded))?;
    Ok((pattern, kc.concat(&ke)?))
}

/// Samples concatenated along the line axis, `(coils, lines, nx)`, with the
/// acquired line indices and each frame's first row.
pub fn kspace_container(k: &KSpaceSeries) -> Result<Container> {
    let views: Vec<_> = k.frames.iter().map(|f| f.data.view()).collect();
    let data = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Undefined(e.to_string()))?;
    let i64s = |v: Vec<i64>| ArrayData::I64(ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[v.len()]), v).expect("1-D"));
    let lines: Vec<i64> = k.frames.iter().flat_map(|f| f.lines.iter().map(|&l| l as i64)).collect();
    let starts: Vec<i64> = k
        .frames
        .iter()
        .scan(0i64, |acc, f| {
            let s = *acc;
            *acc += f.lines.len() as i64;
            Some(s)
        })
        .collect();
    Ok(Container::new(serde_json::json!({
        "ny": k.ny,
        "nx": k.nx,
        "ncoils": k.ncoils,
        "frames": k.nframes(),
        "tr_ms": k.tr_ms,
        "readouts_per_frame": k.readouts_per_frame,
        "pixel_mm": k.pixel_mm,
        "sigma": k.sigma,
        "venc": k.venc,
    }))
    .with("kspace", ArrayData::from_c64(&data))
    .with("lines", i64s(lines))
    .with("frame_start", i64s(starts)))
}

struct Reconstructed {
    image: ImageSeries<C64>,
    iterations: usize,
    converged: bool,
    restarts: usize,
    objective: Vec<f64>,
    weights: Option<CoilWeights>,
}

/// Sensitivity estimation, optional reweighting and reconstruction.
fn reconstruct(
    cfg: &ExperimentConfig,
    kspace: &KSpaceSeries,
    source: ImageSource,
    reweight: bool,
    transforms: impl Fn(&KSpaceSeries, &CoilMaps) -> Result<TransformSet>,
) -> Result<Reconstructed> {
    let maps = estimate_sensitivities(kspace, cfg.recon.calib_width)?;
    let (data, maps, weights) = if reweight {
        let (w, k) = coil_reweight(kspace)?;
        let m = maps.weighted(&w.weights);
        (k, m, Some(w))
    } else {
        (kspace.clone(), maps, None)
    };
    match source {
        ImageSource::ZeroFilled => Ok(Reconstructed {
            image: zero_filled(&data, &maps)?,
            iterations: 0,
            converged: true,
            restarts: 0,
            objective: Vec::new(),
            weights,
        }),
        ImageSource::Cs => {
            let mut ts = transforms(&data, &maps)?;
            let r = score_reconstruct(&data, &maps, &mut ts, cfg.recon.solver())?;
            Ok(Reconstructed {
                objective: r.objective,
                image: r.image,
                iterations: r.iterations,
                converged: r.converged,
                restarts: r.restarts,
                weights,
            })
        }
        ImageSource::Truth => unreachable!("truth images are not reconstructed"),
    }
}

fn summarize_physio(signals: &PhysioSignals, cfg: &ExperimentConfig) -> Result<PhysioSummary> {
    let windows = detect_end_expiration(&signals.resp, cfg.physio);
    let beats = select_beats(signals, &windows, cfg.physio)?;
    Ok(PhysioSummary {
        resp_hz: signals.resp_hz,
        cardiac_hz: signals.cardiac_hz,
        hr_bpm: signals.hr_bpm,
        aphr_percent: signals.aphr_percent,
        ee_beat: mode_beat(&beats, AnalysisMode::Ee),
        ap_beat: mode_beat(&beats, AnalysisMode::Ap),
        windows,
        beats,
    })
}

/// Cine acquisition, reconstruction, physiology and ventricular function in
/// both analysis modes.
pub fn run_cine(cfg: &ExperimentConfig, key: &RunKey) -> Result<CineRun> {
    let p = run_phantom(cfg, key, cfg.cine_frame_interval_ms(), cfg.phantom.frames)?;
    let ph = make_cine_phantom(&p)?;
    let slice = cfg.cine.recon_slices[0];
    let truth_img = ph.slices[slice].to_complex();
    let cine_truth = ph.truth.cine.as_ref().ok_or_else(|| Error::Undefined("cine truth missing".into()))?;

    let (image, recon, pattern) = if cfg.cine.source == ImageSource::Truth {
        (truth_img.clone(), None, None)
    } else {
        let (pattern, k) = acquire_cine(cfg, &p, &truth_img, key.seed)?;
        let uwt = |_: &KSpaceSeries, _: &CoilMaps| TransformSet::uwt(cfg.recon.uwt_levels, cfg.recon.threshold_scale);
        let r = reconstruct(cfg, &k, cfg.cine.source, cfg.recon.reweight, uwt)?;
        let dynamic = &cine_truth.dynamic_masks[slice];
        let unweighted = if cfg.recon.compare_reweight {
            let other = reconstruct(cfg, &k, cfg.cine.source, !cfg.recon.reweight, uwt)?;
            Some(artifact_energy(&other.image, dynamic)?)
        } else {
            None
        };
        let energy = artifact_energy(&r.image, dynamic)?;
        let (with, without) = match (cfg.recon.reweight, unweighted) {
            (true, u) => (energy, u),
            (false, Some(u)) => (u, Some(energy)),
            (false, None) => (energy, None),
        };
        let summary = ReconSummary {
            iterations: r.iterations,
            converged: r.converged,
            restarts: r.restarts,
            final_objective: r.objective.last().copied(),
            objective: r.objective.clone(),
            nrmse: nrmse(&r.image.data, &truth_img.data),
            artifact_energy: Some(with),
            artifact_energy_unweighted: without,
            coil_weights: r.weights,
        };
        (r.image, Some(summary), Some(pattern))
    };

    let signals = extract_physio(&image.magnitude(), cfg.age_years)?;
    let physio = summarize_physio(&signals, cfg)?;
    let mut report = QuantReport::default();
    let pixel_area = p.pixel_mm * p.pixel_mm;
    for mode in [AnalysisMode::Ee, AnalysisMode::Ap] {
        let beat = mode_beat(&physio.beats, mode);
        let lv = ventricular_volumes(&cine_truth.lv_masks, beat.clone(), p.slice_thickness_mm, pixel_area)?;
        let rv = ventricular_volumes(&cine_truth.rv_masks, beat, p.slice_thickness_mm, pixel_area)?;
        let fp = function_params(lv.edv_ml, lv.esv_ml, signals.hr_bpm)?
            .with_rv(rv.edv_ml, rv.esv_ml)?
            .with_stage(key.stage.label());
        report.push_all(&key.subject_label(), key.repeat, key.stage.label(), mode, &fp.parameters());
    }
    Ok(CineRun {
        key: key.clone(),
        phantom: p,
        truth: ph.truth,
        image,
        signals,
        physio,
        recon,
        report,
        pattern,
    })
}

/// Split a two-segment series `(2T, y, x)` into its halves.
fn halves(x: &Array3<C64>) -> (Array3<C64>, Array3<C64>) {
    let t = x.len_of(Axis(0)) / 2;
    (x.slice(s![..t, .., ..]).to_owned(), x.slice(s![t.., .., ..]).to_owned())
}

/// Phase-contrast acquisition of one vessel slice, joint reconstruction
/// of both encodings and flow quantification in both analysis modes.
pub fn run_flow(cfg: &ExperimentConfig, key: &RunKey) -> Result<FlowRun> {
    let p = run_phantom(cfg, key, cfg.flow_frame_interval_ms(), cfg.flow.frames)?;
    let ph = make_flow_phantom(&p)?;
    let flow_truth = ph.truth.flow.as_ref().ok_or_else(|| Error::Undefined("flow truth missing".into()))?;
    let spec = FlowEncodingSpec::new(cfg.flow.venc_cm_s)?;
    let pair = flow_encode(&ph.velocity, &ph.magnitude, spec)?;

    let (comp, enc, recon) = if cfg.flow.source == ImageSource::Truth {
        (pair.compensated.clone(), pair.encoded.clone(), None)
    } else {
        let (_, k) = acquire_flow(cfg, &p, &pair, key.seed)?;
        let transforms = |data: &KSpaceSeries, maps: &CoilMaps| {
            let mut members = vec![Transform::Uwt(Uwt3::new(cfg.recon.uwt_levels)?)];
            if cfg.flow.transforms == FlowTransforms::UwtPca {
                let zf = zero_filled(data, maps)?;
                let (a, b) = halves(&zf.data);
                members.push(Transform::Pca(temporal_pca_basis(&[&a, &b])?));
            }
            TransformSet::new(members, 2, cfg.recon.threshold_scale)
        };
        // CAVA frames need not contain the centre line; skip reweighting
        // when too few do
        let reweight = cfg.recon.reweight && coil_reweight(&k).is_ok();
        let r = reconstruct(cfg, &k, cfg.flow.source, reweight, transforms)?;
        let (a, b) = halves(&r.image.data);
        let both = ndarray::concatenate(Axis(0), &[pair.compensated.data.view(), pair.encoded.data.view()])
            .expect("equal shapes");
        let summary = ReconSummary {
            iterations: r.iterations,
            converged: r.converged,
            restarts: r.restarts,
            final_objective: r.objective.last().copied(),
            objective: r.objective.clone(),
            nrmse: nrmse(&r.image.data, &both),
            artifact_energy: None,
            artifact_energy_unweighted: None,
            coil_weights: r.weights,
        };
        let wrap = |d| ImageSeries::new(d, p.pixel_mm, p.frame_interval_ms);
        (wrap(a), wrap(b), Some(summary))
    };

    let velocity = phase_to_velocity(&phase_difference(&comp, &enc)?, spec);
    let mut err = 0.0;
    let mut norm = 0.0;
    ndarray::Zip::from(&velocity.data)
        .and(&flow_truth.velocity)
        .and(&flow_truth.vessel_masks)
        .for_each(|&v, &t, &inside| {
            if inside {
                err += (v - t) * (v - t);
                norm += t * t;
            }
        });
    let signals = extract_physio(&comp.magnitude(), cfg.age_years)?;
    let physio = summarize_physio(&signals, cfg)?;
    let mut report = QuantReport::default();
    for mode in [AnalysisMode::Ee, AnalysisMode::Ap] {
        let beat = mode_beat(&physio.beats, mode);
        let fp = flow_metrics(&velocity, &flow_truth.vessel_masks, beat, signals.hr_bpm, cfg.flow.vessel, cfg.flow.venc_cm_s)?;
        report.push_all(&key.subject_label(), key.repeat, key.stage.label(), mode, &fp.parameters());
    }
    Ok(FlowRun {
        key: key.clone(),
        phantom: p,
        velocity,
        signals,
        physio,
        recon,
        velocity_nrmse: if norm > 0.0 { (err / norm).sqrt() } else { 0.0 },
        report,
    })
}

/// Per-run record written as `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub key: RunKey,
    pub cine: Option<std::result::Result<RunDetails, String>>,
    pub flow: Option<std::result::Result<RunDetails, String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunDetails {
    pub physio: PhysioSummary,
    pub recon: Option<ReconSummary>,
    pub velocity_nrmse: Option<f64>,
}

impl RunRecord {
    pub fn errors(&self) -> Vec<String> {
        [("cine", &self.cine), ("flow", &self.flow)]
            .into_iter()
            .filter_map(|(kind, r)| match r {
                Some(Err(e)) => Some(format!("{} {kind}: {e}", self.key.dir_name())),
                _ => None,
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub crate_version: String,
    pub container_version: u32,
    pub config_sha256: String,
    pub files: Vec<ManifestEntry>,
}

/// Result of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub dir: PathBuf,
    pub records: Vec<RunRecord>,
    pub report: QuantReport,
    pub repeatability: Vec<RepeatabilityStats>,
    pub manifest: Manifest,
}

impl ExperimentOutcome {
    pub fn errors(&self) -> Vec<String> {
        self.records.iter().flat_map(RunRecord::errors).collect()
    }
}

fn write_text(dir: &Path, rel: &str, text: &str) -> Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn mask_u8(b: &[bool]) -> ArrayData {
    ArrayData::U8(ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[b.len()]), b.iter().map(|&x| u8::from(x)).collect()).expect("1-D"))
}

fn signal_container(signals: &PhysioSignals, physio: &PhysioSummary, images: &ImageSeries<C64>, save: bool) -> Result<Container> {
    let overlay = export_signal_overlay(images, signals)?;
    let frames = ndarray::ArrayD::from_shape_vec(
        ndarray::IxDyn(&[overlay.len()]),
        overlay.iter().map(|o| o.frame as i64).collect(),
    )
    .expect("1-D");
    let ee: Vec<bool> = (0..signals.resp.len()).map(|f| physio.windows.iter().any(|w| w.contains(&f))).collect();
    let mut c = Container::new(serde_json::json!({
        "fps": signals.fps,
        "resp_hz": signals.resp_hz,
        "cardiac_hz": signals.cardiac_hz,
        "hr_bpm": signals.hr_bpm,
        "aphr_percent": signals.aphr_percent,
        "pixel_mm": images.pixel_mm,
        "frame_interval_ms": images.frame_interval_ms,
    }))
    .with("resp", ArrayData::vector(&signals.resp))
    .with("cardiac", ArrayData::vector(&signals.cardiac))
    .with("overlay_frame", ArrayData::I64(frames))
    .with("overlay_resp", ArrayData::vector(&overlay.iter().map(|o| o.resp).collect::<Vec<_>>()))
    .with("overlay_marker", ArrayData::vector(&overlay.iter().map(|o| o.marker).collect::<Vec<_>>()))
    .with("ee_flag", mask_u8(&ee));
    if save {
        c = c.with("image", ArrayData::from_c64(&images.data));
    }
    Ok(c)
}

fn persist_cine(dir: &Path, run: &CineRun, save_images: bool) -> Result<()> {
    let mut c = signal_container(&run.signals, &run.physio, &run.image, save_images)?;
    if let Some(pattern) = &run.pattern {
        c = c.with("sampling_mask", ArrayData::U8(pattern.mask().into_dyn()));
    }
    if let Some(truth) = &run.truth.cine {
        c = c.with("truth_lv_volume", ArrayData::vector(&truth.lv_volumes_ml));
    }
    c = c.with("truth_resp", ArrayData::vector(&run.truth.respiratory));
    if let Some(r) = &run.recon {
        c = c.with("objective", ArrayData::vector(&r.objective));
    }
    write_container(&dir.join("cine.rtxc"), &c)?;
    write_text(dir, "cine_signals.csv", &signals_csv(&run.signals, &run.physio.windows, &run.physio.beats))
}

fn persist_flow(dir: &Path, run: &FlowRun, save_images: bool) -> Result<()> {
    let mut c = signal_container(&run.signals, &run.physio, &run.velocity.to_complex(), false)?;
    if let Some(r) = &run.recon {
        c = c.with("objective", ArrayData::vector(&r.objective));
    }
    if save_images {
        c = c.with("velocity", ArrayData::F32(run.velocity.data.mapv(|v| v as f32).into_dyn()));
    }
    write_container(&dir.join("flow.rtxc"), &c)?;
    write_text(dir, "flow_signals.csv", &signals_csv(&run.signals, &run.physio.windows, &run.physio.beats))
}

fn sha256_file(path: &Path) -> Result<(u64, String)> {
    let bytes = std::fs::read(path)?;
    Ok((bytes.len() as u64, hex::encode(Sha256::digest(&bytes))))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p.strip_prefix(root).map(|r| r != Path::new("manifest.json")).unwrap_or(true) {
            out.push(p);
        }
    }
    Ok(())
}

/// Hash every file under `dir` (except the manifest itself) and write
/// `manifest.json`.
pub fn write_manifest(dir: &Path, cfg: &ExperimentConfig) -> Result<Manifest> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    let mut entries = Vec::with_capacity(files.len());
    for f in files {
        let (bytes, sha256) = sha256_file(&f)?;
        let rel = f.strip_prefix(dir).expect("under root").to_string_lossy().replace('\\', "/");
        entries.push(ManifestEntry { path: rel, bytes, sha256 });
    }
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        container_version: super::container::VERSION,
        config_sha256: cfg.hash(),
        files: entries,
    };
    write_text(dir, "manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

/// Run every (stage, subject, repeat) serially, persist all artifacts under
/// `cfg.output_dir`, then emit reports and the manifest. A failing run is
/// recorded and the remaining runs proceed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    write_text(&dir, "config.toml", &cfg.to_toml_string())?;
    let mut records = Vec::new();
    let mut report = QuantReport::default();
    for key in run_keys(cfg) {
        let run_dir = dir.join("runs").join(key.dir_name());
        std::fs::create_dir_all(&run_dir)?;
        let mut run_report = QuantReport::default();
        let cine = cfg.cine.enabled.then(|| {
            log::info!("cine {}", key.dir_name());
            run_cine(cfg, &key)
                .and_then(|r| {
                    persist_cine(&run_dir, &r, cfg.save_images)?;
                    run_report.rows.extend(r.report.rows.iter().cloned());
                    Ok(RunDetails {
                        physio: r.physio,
                        recon: r.recon,
                        velocity_nrmse: None,
                    })
                })
                .map_err(|e| e.to_string())
        });
        let flow = cfg.flow.enabled.then(|| {
            log::info!("flow {}", key.dir_name());
            run_flow(cfg, &key)
                .and_then(|r| {
                    persist_flow(&run_dir, &r, cfg.save_images)?;
                    run_report.rows.extend(r.report.rows.iter().cloned());
                    Ok(RunDetails {
                        physio: r.physio,
                        recon: r.recon,
                        velocity_nrmse: Some(r.velocity_nrmse),
                    })
                })
                .map_err(|e| e.to_string())
        });
        let record = RunRecord { key, cine, flow };
        for e in record.errors() {
            log::warn!("{e}");
        }
        write_text(&run_dir, "run.json", &serde_json::to_string_pretty(&record)?)?;
        write_text(&run_dir, "quant.csv", &run_report.to_csv())?;
        write_text(&run_dir, "quant.json", &serde_json::to_string_pretty(&run_report)?)?;
        report.rows.extend(run_report.rows);
        records.push(record);
    }
    write_text(&dir, "quant.csv", &report.to_csv())?;
    write_text(&dir, "quant.json", &serde_json::to_string_pretty(&report)?)?;
    let errors: Vec<String> = records.iter().flat_map(RunRecord::errors).collect();
    write_text(&dir, "errors.json", &serde_json::to_string_pretty(&errors)?)?;
    let repeatability = if cfg.repeats >= 2 {
        repeat_statistics(&report)?
    } else {
        Vec::new()
    };
    super::report::report(&dir)?;
    let manifest = write_manifest(&dir, cfg)?;
    Ok(ExperimentOutcome {
        dir,
        records,
        report,
        repeatability,
        manifest,
    })
}

/// Repeatability of the first two scans in both modes.
pub fn repeat_statistics(report: &QuantReport) -> Result<Vec<RepeatabilityStats>> {
    let (a, b) = (report.repeat(0), report.repeat(1));
    [AnalysisMode::Ee, AnalysisMode::Ap]
        .into_iter()
        .map(|m| repeatability_report(&a, &b, m))
        .collect()
}
