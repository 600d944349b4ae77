//! Ventricular function, flow quantification and scan-rescan statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;

use ndarray::{Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ImageSeries;

/// Percentile of `|v|` inside the ROI used as the per-frame peak velocity.
pub const VMAX_PERCENTILE: f64 = 95.0;
/// Minimum number of slices for a volumetric measurement.
pub const MIN_SLICES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AnalysisMode {
    #[serde(rename = "EE", alias = "ee")]
    Ee,
    #[serde(rename = "AP", alias = "ap")]
    Ap,
}

impl AnalysisMode {
    pub fn label(&self) -> &'static str {
        match self {
            AnalysisMode::Ee => "EE",
            AnalysisMode::Ap => "AP",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ee" => Some(AnalysisMode::Ee),
            "ap" => Some(AnalysisMode::Ap),
            _ => None,
        }
    }
}

impl fmt::Display for AnalysisMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VentricleVolumes {
    pub edv_ml: f64,
    pub esv_ml: f64,
    pub ed_frame: usize,
    pub es_frame: usize,
    /// Volume of every frame in the beat, mL.
    pub volumes_ml: Vec<f64>,
}

/// Disc-summation volumes of one ventricle over a beat. `masks` holds one
/// `(frame, y, x)` array per slice.
pub fn ventricular_volumes(
    masks: &[Array3<bool>],
    beat: Range<usize>,
    slice_thickness_mm: f64,
    pixel_area_mm2: f64,
) -> Result<VentricleVolumes> {
    if masks.len() < MIN_SLICES {
        return Err(Error::InvalidConfig(format!(
            "{} slices given, at least {MIN_SLICES} needed",
            masks.len()
        )));
    }
    if !(slice_thickness_mm > 0.0 && pixel_area_mm2 > 0.0) {
        return Err(Error::InvalidConfig("slice thickness and pixel area must be positive".into()));
    }
    let frames = masks[0].len_of(Axis(0));
    if masks.iter().any(|m| m.dim() != masks[0].dim()) {
        return Err(Error::DimensionMismatch("slice masks differ in shape".into()));
    }
    if beat.is_empty() || beat.end > frames {
        return Err(Error::InvalidConfig(format!("beat {beat:?} outside 0..{frames}")));
    }
    let voxel_ml = pixel_area_mm2 * slice_thickness_mm / 1000.0;
    let mut volumes = Vec::with_capacity(beat.len());
    for f in beat.clone() {
        let count: usize = masks
            .iter()
            .map(|m| m.index_axis(Axis(0), f).iter().filter(|&&b| b).count())
            .sum();
        if count == 0 {
            return Err(Error::EmptyMask(format!("frame {f} is empty on every slice")));
        }
        volumes.push(count as f64 * voxel_ml);
    }
    let (ed, &edv) = volumes
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty beat");
    let (es, &esv) = volumes
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .expect("non-empty beat");
    Ok(VentricleVolumes {
        edv_ml: edv,
        esv_ml: esv,
        ed_frame: beat.start + ed,
        es_frame: beat.start + es,
        volumes_ml: volumes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VentricleFunction {
    pub edv_ml: f64,
    pub esv_ml: f64,
    pub sv_ml: f64,
    pub ef_percent: f64,
}

impl VentricleFunction {
    pub fn new(edv_ml: f64, esv_ml: f64) -> Result<Self> {
        if !(esv_ml >= 0.0 && esv_ml <= edv_ml) || !edv_ml.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= ESV <= EDV, got ESV {esv_ml}, EDV {edv_ml}"
            )));
        }
        let sv = edv_ml - esv_ml;
        Ok(Self {
            edv_ml,
            esv_ml,
            sv_ml: sv,
            ef_percent: if edv_ml > 0.0 { 100.0 * sv / edv_ml } else { 0.0 },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionParams {
    pub lv: VentricleFunction,
    pub rv: Option<VentricleFunction>,
    pub hr_bpm: f64,
    /// LV output, L/min.
    pub co_l_min: f64,
    pub stage: Option<String>,
}

impl FunctionParams {
    pub fn with_rv(mut self, edv_ml: f64, esv_ml: f64) -> Result<Self> {
        self.rv = Some(VentricleFunction::new(edv_ml, esv_ml)?);
        Ok(self)
    }

    pub fn with_stage(mut self, stage: impl Into<String>) -> Self {
        self.stage = Some(stage.into());
        self
    }

    /// `(parameter, value)` pairs in a fixed order.
    pub fn parameters(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, v: &VentricleFunction| {
            out.push((format!("{prefix}EDV"), v.edv_ml));
            out.push((format!("{prefix}ESV"), v.esv_ml));
            out.push((format!("{prefix}SV"), v.sv_ml));
            out.push((format!("{prefix}EF"), v.ef_percent));
        };
        push("LV", &self.lv);
        if let Some(rv) = &self.rv {
            push("RV", rv);
        }
        out.push(("HR".into(), self.hr_bpm));
        out.push(("CO".into(), self.co_l_min));
        out
    }
}

/// SV, EF and CO of the left ventricle.
pub fn function_params(edv_ml: f64, esv_ml: f64, hr_bpm: f64) -> Result<FunctionParams> {
    if !(hr_bpm > 0.0 && hr_bpm.is_finite()) {
        return Err(Error::InvalidConfig(format!("heart rate must be positive, got {hr_bpm}")));
    }
    let lv = VentricleFunction::new(edv_ml, esv_ml)?;
    Ok(FunctionParams {
        lv,
        rv: None,
        hr_bpm,
        co_l_min: lv.sv_ml * hr_bpm / 1000.0,
        stage: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Vessel {
    /// Ascending aorta.
    AAo,
    /// Main pulmonary artery.
    MPA,
}

impl Vessel {
    pub fn label(&self) -> &'static str {
        match self {
            Vessel::AAo => "AAo",
            Vessel::MPA => "MPA",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowParams {
    pub vessel: Vessel,
    pub vmax_cm_s: f64,
    pub nff_ml: f64,
    pub sv_ml: f64,
    pub co_l_min: f64,
    pub venc_cm_s: f64,
}

impl FlowParams {
    pub fn parameters(&self) -> Vec<(String, f64)> {
        let v = self.vessel.label();
        vec![
            (format!("{v}_Vmax"), self.vmax_cm_s),
            (format!("{v}_NFF"), self.nff_ml),
            (format!("{v}_SV"), self.sv_ml),
            (format!("{v}_CO"), self.co_l_min),
        ]
    }
}

/// Linear-interpolation percentile (`p` in 0..=100) of unsorted data.
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of empty slice");
    values.sort_by(f64::total_cmp);
    let pos = (p / 100.0).clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
}

/// Net forward flow and peak velocity over one beat. `velocity` is in cm/s;
/// `roi` is either one `(1, y, x)` mask for all frames or one mask per frame.
pub fn flow_metrics(
    velocity: &ImageSeries<f64>,
    roi: &Array3<bool>,
    beat: Range<usize>,
    hr_bpm: f64,
    vessel: Vessel,
    venc_cm_s: f64,
) -> Result<FlowParams> {
    let (t, ny, nx) = velocity.data.dim();
    let (rt, ry, rx) = roi.dim();
    if (ry, rx) != (ny, nx) || (rt != 1 && rt != t) {
        return Err(Error::DimensionMismatch(format!(
            "ROI {:?} does not fit velocity series {:?}",
            roi.dim(),
            velocity.data.dim()
        )));
    }
    if beat.is_empty() || beat.end > t {
        return Err(Error::InvalidConfig(format!("beat {beat:?} outside 0..{t}")));
    }
    if !(hr_bpm > 0.0) {
        return Err(Error::InvalidConfig(format!("heart rate must be positive, got {hr_bpm}")));
    }
    let area_cm2 = velocity.pixel_area_mm2() / 100.0;
    let dt_s = velocity.frame_interval_ms / 1000.0;
    let mut nff = 0.0;
    let mut vmax: f64 = 0.0;
    let mut speeds = Vec::new();
    for f in beat {
        let mask = roi.index_axis(Axis(0), if rt == 1 { 0 } else { f });
        speeds.clear();
        let mut sum = 0.0;
        ndarray::Zip::from(&mask)
            .and(&velocity.data.index_axis(Axis(0), f))
            .for_each(|&inside, &v| {
                if inside {
                    sum += v;
                    speeds.push(v.abs());
                }
            });
        if speeds.is_empty() {
            return Err(Error::EmptyMask(format!("ROI empty at frame {f}")));
        }
        nff += sum * area_cm2 * dt_s;
        vmax = vmax.max(percentile(&mut speeds, VMAX_PERCENTILE));
    }
    Ok(FlowParams {
        vessel,
        vmax_cm_s: vmax,
        nff_ml: nff,
        sv_ml: nff,
        co_l_min: nff * hr_bpm / 1000.0,
        venc_cm_s,
    })
}

/// `100 |x1 - x2| / (|x1 + x2| / 2)`, percent.
pub fn nmae(x1: f64, x2: f64) -> Result<f64> {
    let mean = 0.5 * (x1 + x2).abs();
    if mean == 0.0 || !mean.is_finite() {
        return Err(Error::Undefined(format!("NMAE of {x1} and {x2}")));
    }
    Ok(100.0 * (x1 - x2).abs() / mean)
}

/// Lin's concordance correlation coefficient with population moments.
pub fn ccc(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::SeriesTooShort("CCC needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let va = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n;
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let den = va + vb + (ma - mb).powi(2);
    if den == 0.0 {
        return Ok(1.0);
    }
    if va == 0.0 && vb == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * cov / den)
}

/// One measured value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantRow {
    pub subject: String,
    /// Scan index of the subject (0 for the first scan).
    pub repeat: usize,
    pub stage: String,
    pub parameter: String,
    pub value: f64,
    pub mode: AnalysisMode,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantReport {
    pub rows: Vec<QuantRow>,
}

impl QuantReport {
    pub fn push_all(&mut self, subject: &str, repeat: usize, stage: &str, mode: AnalysisMode, params: &[(String, f64)]) {
        for (p, v) in params {
            self.rows.push(QuantRow {
                subject: subject.into(),
                repeat,
                stage: stage.into(),
                parameter: p.clone(),
                value: *v,
                mode,
            });
        }
    }

    pub fn value(&self, stage: &str, parameter: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.stage == stage && r.parameter == parameter)
            .map(|r| r.value)
    }

    /// Rows of one scan repeat.
    pub fn repeat(&self, repeat: usize) -> QuantReport {
        QuantReport {
            rows: self.rows.iter().filter(|r| r.repeat == repeat).cloned().collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("subject,repeat,stage,parameter,value,mode\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.subject, r.repeat, r.stage, r.parameter, r.value, r.mode
            ));
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityRow {
    pub parameter: String,
    pub stage: String,
    pub mode: AnalysisMode,
    pub subjects: Vec<String>,
    /// NMAE of every subject's repeat pair, percent.
    pub nmae_percent: Vec<f64>,
    pub median_nmae_percent: f64,
    pub mean_nmae_percent: f64,
    /// Concordance across subjects; `None` with fewer than two subjects.
    pub ccc: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityStats {
    pub rows: Vec<RepeatabilityRow>,
}

impl RepeatabilityStats {
    pub fn get(&self, parameter: &str, stage: &str, mode: AnalysisMode) -> Option<&RepeatabilityRow> {
        self.rows
            .iter()
            .find(|r| r.parameter == parameter && r.stage == stage && r.mode == mode)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,stage,mode,n,median_nmae_percent,mean_nmae_percent,ccc\n");
        for r in &self.rows {
            let ccc = r.ccc.map(|c| c.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.parameter,
                r.stage,
                r.mode,
                r.subjects.len(),
                r.median_nmae_percent,
                r.mean_nmae_percent,
                ccc
            ));
        }
        out
    }
}

fn median_of(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Pair the two repeats by `(subject, stage, parameter)` and report NMAE and
/// CCC per `(parameter, stage)`. Rows of the other mode are ignored.
pub fn repeatability_report(rep1: &QuantReport, rep2: &QuantReport, mode: AnalysisMode) -> Result<RepeatabilityStats> {
    type Key = (String, String, String);
    let index = |r: &QuantReport| -> Result<BTreeMap<Key, f64>> {
        let mut m = BTreeMap::new();
        for row in r.rows.iter().filter(|row| row.mode == mode) {
            let key = (row.parameter.clone(), row.stage.clone(), row.subject.clone());
            if m.insert(key.clone(), row.value).is_some() {
                return Err(Error::KeyMismatch(format!("duplicate row {key:?}")));
            }
        }
        Ok(m)
    };
    let (a, b) = (index(rep1)?, index(rep2)?);
    if a.len() != b.len() || a.keys().zip(b.keys()).any(|(x, y)| x != y) {
        let missing: Vec<_> = a.keys().filter(|k| !b.contains_key(*k)).chain(b.keys().filter(|k| !a.contains_key(*k))).collect();
        return Err(Error::KeyMismatch(format!("repeats are not matched: {missing:?}")));
    }
    let mut groups: BTreeMap<(String, String), (Vec<String>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((param, stage, subject), &x1) in &a {
        let x2 = b[&(param.clone(), stage.clone(), subject.clone())];
        let g = groups.entry((param.clone(), stage.clone())).or_default();
        g.0.push(subject.clone());
        g.1.push(x1);
        g.2.push(x2);
    }
    let mut rows = Vec::with_capacity(groups.len());
    for ((parameter, stage), (subjects, x1, x2)) in groups {
        let errors = x1
            .iter()
            .zip(&x2)
            .map(|(&p, &q)| if p == q { Ok(0.0) } else { nmae(p, q) })
            .collect::<Result<Vec<f64>>>()?;
        let ccc = if subjects.len() >= 2 { Some(ccc(&x1, &x2)?) } else { None };
        rows.push(RepeatabilityRow {
            median_nmae_percent: median_of(&errors),
            mean_nmae_percent: errors.iter().sum::<f64>() / errors.len() as f64,
            parameter,
            stage,
            mode,
            subjects,
            nmae_percent: errors,
            ccc,
        });
    }
    Ok(RepeatabilityStats { rows })
}
