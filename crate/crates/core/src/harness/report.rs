use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{RunDetails, RunRecord};
use crate::error::Result;
use crate::quant::{repeatability_report, AnalysisMode, QuantReport};

/// Files produced by [`report`] and the tables that could not be filled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub tables: Vec<String>,
    /// `(table, reason)` for each table left empty.
    pub missing: Vec<(String, String)>,
}

fn load_records(dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = dir.join("runs");
    let mut out = Vec::new();
    if !runs.is_dir() {
        return Ok(out);
    }
    let mut paths: Vec<_> = std::fs::read_dir(&runs)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
    paths.sort();
    for p in paths {
        let file = p.join("run.json");
        if file.is_file() {
            out.push(serde_json::from_str(&std::fs::read_to_string(file)?)?);
        }
    }
    Ok(out)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-stage traces, repeat scatter, repeatability bars, artifact scores and
/// physiology tables under `<dir>/report/`, rebuilt from the persisted runs.
pub fn report(dir: &Path) -> Result<ReportSummary> {
    let cfg = ExperimentConfig::load(&dir.join("config.toml"))?;
    let quant: QuantReport = if dir.join("quant.json").is_file() {
        serde_json::from_str(&std::fs::read_to_string(dir.join("quant.json"))?)?
    } else {
        QuantReport::default()
    };
    let records = load_records(dir)?;
    let out = dir.join("report");
    std::fs::create_dir_all(&out)?;
    let mut summary = ReportSummary::default();
    let emit = |name: &str, text: String, summary: &mut ReportSummary| -> Result<()> {
        std::fs::write(out.join(name), text)?;
        summary.tables.push(name.to_string());
        Ok(())
    };

    // per-stage traces in the primary mode, over subjects and repeats
    let mut traces: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    let stage_index = |s: &str| cfg.stages.iter().position(|st| st.label() == s).unwrap_or(usize::MAX);
    let mut names: BTreeMap<(usize, String), String> = BTreeMap::new();
    for r in quant.rows.iter().filter(|r| r.mode == cfg.mode) {
        let key = (stage_index(&r.stage), r.parameter.clone());
        names.entry(key.clone()).or_insert_with(|| r.stage.clone());
        traces.entry(key).or_default().push(r.value);
    }
    let mut text = String::from("stage,parameter,mode,n,mean,min,max\n");
    for ((idx, parameter), values) in &traces {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let stage = &names[&(*idx, parameter.clone())];
        text.push_str(&format!("{stage},{parameter},{},{},{mean},{min},{max}\n", cfg.mode, values.len()));
    }
    if traces.is_empty() {
        summary.missing.push(("traces.csv".into(), "no quantified runs".into()));
    }
    emit("traces.csv", text, &mut summary)?;

    // scan-rescan scatter and repeatability
    let (rep1, rep2) = (quant.repeat(0), quant.repeat(1));
    let mut scatter = String::from("subject,stage,parameter,mode,rep1,rep2\n");
    let second: BTreeMap<_, f64> = rep2
        .rows
        .iter()
        .map(|r| ((r.subject.clone(), r.stage.clone(), r.parameter.clone(), r.mode), r.value))
        .collect();
    for r in &rep1.rows {
        if let Some(v2) = second.get(&(r.subject.clone(), r.stage.clone(), r.parameter.clone(), r.mode)) {
            scatter.push_str(&format!("{},{},{},{},{},{v2}\n", r.subject, r.stage, r.parameter, r.mode, r.value));
        }
    }
    emit("repeat_scatter.csv", scatter, &mut summary)?;
    let mut rep_csv = String::new();
    let mut rep_json = Vec::new();
    if rep2.rows.is_empty() {
        summary.missing.push(("repeatability.csv".into(), "fewer than two repeats".into()));
    } else {
        for mode in [AnalysisMode::Ee, AnalysisMode::Ap] {
            match repeatability_report(&rep1, &rep2, mode) {
                Ok(stats) => {
                    let csv = stats.to_csv();
                    if rep_csv.is_empty() {
                        rep_csv.push_str(csv.lines().next().unwrap_or_default());
                        rep_csv.push('\n');
                    }
                    for line in csv.lines().skip(1) {
                        rep_csv.push_str(line);
                        rep_csv.push('\n');
                    }
                    rep_json.push(stats);
                }
                Err(e) => summary.missing.push(("repeatability.csv".into(), format!("{mode}: {e}"))),
            }
        }
    }
    if rep_csv.is_empty() {
        rep_csv.push_str("parameter,stage,mode,n,median_nmae_percent,mean_nmae_percent,ccc\n");
    }
    emit("repeatability.csv", rep_csv, &mut summary)?;
    emit("repeatability.json", serde_json::to_string_pretty(&rep_json)?, &mut summary)?;

    // artifact energy with and without reweighting
    let mut art = String::from("run,stage,subject,repeat,without_reweighting,with_reweighting\n");
    let mut paired = 0;
    let ok = |r: &Option<std::result::Result<RunDetails, String>>| r.as_ref().and_then(|x| x.as_ref().ok()).cloned();
    for rec in &records {
        if let Some(recon) = ok(&rec.cine).and_then(|d| d.recon) {
            if recon.artifact_energy_unweighted.is_some() {
                paired += 1;
            }
            art.push_str(&format!(
                "{},{},{},{},{},{}\n",
                rec.key.dir_name(),
                rec.key.stage,
                rec.key.subject,
                rec.key.repeat,
                fmt_opt(recon.artifact_energy_unweighted),
                fmt_opt(recon.artifact_energy)
            ));
        }
    }
    if paired == 0 {
        summary.missing.push(("artifact_scores.csv".into(), "no run reconstructed both with and without reweighting".into()));
    }
    emit("artifact_scores.csv", art, &mut summary)?;

    // physiology per run
    let mut phys = String::from("run,kind,resp_hz,cardiac_hz,hr_bpm,aphr_percent,beats,ee_beat_start,ee_beat_end,ap_beat_start,ap_beat_end,error\n");
    for rec in &records {
        for (kind, r) in [("cine", &rec.cine), ("flow", &rec.flow)] {
            match r {
                Some(Ok(d)) => {
                    let p = &d.physio;
                    phys.push_str(&format!(
                        "{},{kind},{},{},{},{},{},{},{},{},{},\n",
                        rec.key.dir_name(),
                        p.resp_hz,
                        p.cardiac_hz,
                        p.hr_bpm,
                        p.aphr_percent,
                        p.beats.beats.len(),
                        p.ee_beat.start,
                        p.ee_beat.end,
                        p.ap_beat.start,
                        p.ap_beat.end
                    ));
                }
                Some(Err(e)) => {
                    phys.push_str(&format!("{},{kind},,,,,,,,,,\"{}\"\n", rec.key.dir_name(), e.replace('"', "'")));
                }
                None => {}
            }
        }
    }
    if records.is_empty() {
        summary.missing.push(("physio.csv".into(), "no runs found".into()));
    }
    emit("physio.csv", phys, &mut summary)?;
    std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
