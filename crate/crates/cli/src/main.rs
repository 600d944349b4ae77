use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use rtex::encode::{flow_encode, FlowEncodingSpec};
use rtex::harness::{
    acquire_cine, acquire_flow, kspace_container, report, run_cine, run_experiment, run_flow, run_keys, run_phantom,
    write_container, ArrayData, Container, ExperimentConfig, ImageSource, PhysioSummary, ReconSummary, RunKey,
};
use rtex::phantom::{make_cine_phantom, make_flow_phantom, Stage};
use rtex::physio::signals_csv;
use rtex::quant::{AnalysisMode, QuantReport};
use rtex::sampling::{cava_generate_with, cava_rebin, gro_generate, pattern_stats, SamplingPattern};

#[derive(Parser)]
#[command(name = "rtex", version, about = "Real-time exercise CMR simulation and analysis pipeline")]
struct Cli {
    /// Partial TOML config merged over the built-in defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Exercise stage (rest, 20W, 40W, 60W); defaults to the first configured stage.
    #[arg(long, global = true)]
    stage: Option<String>,
    /// Analysis mode for selected-beat outputs.
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Disable coil reweighting.
    #[arg(long, global = true)]
    no_reweight: bool,
    /// Base seed; repeat r uses seed + r.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Format of tables printed to stdout.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    /// Solver iteration cap.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Solver stopping tolerance on the relative update.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Threshold scale k.
    #[arg(long, global = true)]
    threshold_scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Ee,
    Ap,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Kind {
    Cine,
    Flow,
}

#[derive(Subcommand)]
enum Command {
    /// Build the stage phantom and write its images and truth.
    Phantom {
        #[arg(long, value_enum, default_value = "cine")]
        kind: Kind,
    },
    /// Print the sampling pattern as a frames x ny 0/1 matrix (csv) or its statistics (json).
    Sample {
        #[arg(long, value_enum, default_value = "cine")]
        kind: Kind,
    },
    /// Simulate the multi-coil acquisition and write the k-space samples.
    Encode {
        #[arg(long, value_enum, default_value = "cine")]
        kind: Kind,
    },
    /// Reconstruct one acquisition and write the images and convergence trace.
    Recon {
        #[arg(long, value_enum, default_value = "cine")]
        kind: Kind,
    },
    /// Extract respiratory and cardiac signals and the beat selection.
    Physio {
        #[arg(long, value_enum, default_value = "cine")]
        kind: Kind,
    },
    /// Quantify one acquisition in the selected analysis mode.
    Quant {
        #[arg(long, value_enum, default_value = "cine")]
        kind: Kind,
    },
    /// Run the full experiment and write all artifacts and the manifest.
    Run,
    /// Rebuild the report tables of an experiment directory.
    Report,
}

impl Cli {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.stage {
            let stage = Stage::parse(s).ok_or_else(|| anyhow!("unknown stage {s:?}"))?;
            cfg.stages = vec![stage];
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                Mode::Ee => AnalysisMode::Ee,
                Mode::Ap => AnalysisMode::Ap,
            };
        }
        if self.no_reweight {
            cfg.recon.reweight = false;
        }
        if let Some(seed) = self.seed {
            cfg.seeds = (0..cfg.repeats as u64).map(|r| seed + r).collect();
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(n) = self.iterations {
            cfg.recon.iterations = n;
        }
        if let Some(t) = self.tol {
            cfg.recon.tol = t;
        }
        if let Some(k) = self.threshold_scale {
            cfg.recon.threshold_scale = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn first_key(cfg: &ExperimentConfig) -> RunKey {
    run_keys(cfg).into_iter().next().expect("validated config has runs")
}

fn write(cfg: &ExperimentConfig, name: &str, c: &Container) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.output_dir)?;
    let path = cfg.output_dir.join(name);
    write_container(&path, c)?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn emit_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_phantom(cfg: &ExperimentConfig, kind: Kind) -> Result<()> {
    let key = first_key(cfg);
    let (interval, frames) = match kind {
        Kind::Cine => (cfg.cine_frame_interval_ms(), cfg.phantom.frames),
        Kind::Flow => (cfg.flow_frame_interval_ms(), cfg.flow.frames),
    };
    let p = run_phantom(cfg, &key, interval, frames)?;
    let meta = serde_json::json!({ "stage": key.stage.label(), "seed": key.seed, "phantom": p });
    let (container, truth) = match kind {
        Kind::Cine => {
            let ph = make_cine_phantom(&p)?;
            let mut c = Container::new(meta).with("truth_resp", ArrayData::vector(&ph.truth.respiratory));
            for (i, s) in ph.slices.iter().enumerate() {
                c = c.with(&format!("slice_{i}"), ArrayData::from_f64(&s.data));
            }
            if let Some(t) = &ph.truth.cine {
                c = c.with("truth_lv_volume", ArrayData::vector(&t.lv_volumes_ml));
            }
            (c, ph.truth)
        }
        Kind::Flow => {
            let ph = make_flow_phantom(&p)?;
            let c = Container::new(meta)
                .with("magnitude", ArrayData::from_f64(&ph.magnitude.data))
                .with("velocity", ArrayData::from_f64(&ph.velocity.data))
                .with("truth_resp", ArrayData::vector(&ph.truth.respiratory));
            (c, ph.truth)
        }
    };
    let path = write(cfg, &format!("phantom_{}.rtxc", key.stage), &container)?;
    println!("{} frames, {} whole beats -> {}", p.frames, truth.beats.len(), path.display());
    Ok(())
}

fn pattern(cfg: &ExperimentConfig, kind: Kind) -> Result<(SamplingPattern, f64)> {
    let p = &cfg.phantom;
    Ok(match kind {
        Kind::Cine => (
            gro_generate(p.ny, cfg.cine.lines_per_frame, p.frames, cfg.cine.gro_s, cfg.cine.gro_alpha)?,
            cfg.cine.tr_ms,
        ),
        Kind::Flow => {
            let lines = cfg.flow.lines_per_frame;
            let order = cava_generate_with(p.ny, cfg.flow.frames * lines, cfg.flow.cava_s, cfg.flow.cava_alpha)?;
            (cava_rebin(&order, lines)?, cfg.flow.tr_ms)
        }
    })
}

fn cmd_sample(cfg: &ExperimentConfig, kind: Kind, format: Format) -> Result<()> {
    let (p, tr) = pattern(cfg, kind)?;
    match format {
        Format::Csv => print!("{}", p.to_csv()),
        Format::Json => emit_json(&serde_json::json!({ "stats": pattern_stats(&p, tr), "pattern": p }))?,
    }
    Ok(())
}

fn cmd_encode(cfg: &ExperimentConfig, kind: Kind) -> Result<()> {
    let key = first_key(cfg);
    let (pattern, k) = match kind {
        Kind::Cine => {
            let p = run_phantom(cfg, &key, cfg.cine_frame_interval_ms(), cfg.phantom.frames)?;
            let ph = make_cine_phantom(&p)?;
            acquire_cine(cfg, &p, &ph.slices[cfg.cine.recon_slices[0]].to_complex(), key.seed)?
        }
        Kind::Flow => {
            let p = run_phantom(cfg, &key, cfg.flow_frame_interval_ms(), cfg.flow.frames)?;
            let ph = make_flow_phantom(&p)?;
            let pair = flow_encode(&ph.velocity, &ph.magnitude, FlowEncodingSpec::new(cfg.flow.venc_cm_s)?)?;
            acquire_flow(cfg, &p, &pair, key.seed)?
        }
    };
    let c = kspace_container(&k)?.with("sampling_mask", ArrayData::U8(pattern.mask().into_dyn()));
    let path = write(cfg, &format!("kspace_{}.rtxc", key.stage), &c)?;
    println!("{} frames x {} coils, R {:.2} -> {}", k.nframes(), k.ncoils, pattern.realized_r(), path.display());
    Ok(())
}

fn recon_row(r: &Option<ReconSummary>) -> String {
    match r {
        Some(r) => format!(
            "{},{},{},{},{}",
            r.iterations,
            r.converged,
            r.nrmse,
            r.final_objective.map(|v| v.to_string()).unwrap_or_default(),
            r.artifact_energy.map(|v| v.to_string()).unwrap_or_default()
        ),
        None => ",,,,".into(),
    }
}

fn cmd_recon(cfg: &ExperimentConfig, kind: Kind, format: Format) -> Result<()> {
    if (kind == Kind::Cine && cfg.cine.source == ImageSource::Truth)
        || (kind == Kind::Flow && cfg.flow.source == ImageSource::Truth)
    {
        bail!("image source is \"truth\"; nothing to reconstruct");
    }
    let key = first_key(cfg);
    let (summary, c) = match kind {
        Kind::Cine => {
            let run = run_cine(cfg, &key)?;
            let c = Container::new(serde_json::json!({ "stage": key.stage.label(), "recon": run.recon }))
                .with("image", ArrayData::from_c64(&run.image.data));
            (run.recon, c)
        }
        Kind::Flow => {
            let run = run_flow(cfg, &key)?;
            let c = Container::new(serde_json::json!({ "stage": key.stage.label(), "recon": run.recon }))
                .with("velocity", ArrayData::from_f64(&run.velocity.data));
            (run.recon, c)
        }
    };
    let c = match &summary {
        Some(r) => c.with("objective", ArrayData::vector(&r.objective)),
        None => c,
    };
    let path = write(cfg, &format!("recon_{}.rtxc", key.stage), &c)?;
    match format {
        Format::Csv => println!("iterations,converged,nrmse,final_objective,artifact_energy\n{}", recon_row(&summary)),
        Format::Json => emit_json(&summary)?,
    }
    info!("images in {}", path.display());
    Ok(())
}

fn cmd_physio(cfg: &ExperimentConfig, kind: Kind, format: Format) -> Result<()> {
    let key = first_key(cfg);
    let (signals, physio): (_, PhysioSummary) = match kind {
        Kind::Cine => {
            let r = run_cine(cfg, &key)?;
            (r.signals, r.physio)
        }
        Kind::Flow => {
            let r = run_flow(cfg, &key)?;
            (r.signals, r.physio)
        }
    };
    match format {
        Format::Csv => print!("{}", signals_csv(&signals, &physio.windows, &physio.beats)),
        Format::Json => emit_json(&physio)?,
    }
    Ok(())
}

fn print_report(report: &QuantReport, mode: AnalysisMode, format: Format) -> Result<()> {
    let rows = QuantReport {
        rows: report.rows.iter().filter(|r| r.mode == mode).cloned().collect(),
    };
    match format {
        Format::Csv => print!("{}", rows.to_csv()),
        Format::Json => emit_json(&rows)?,
    }
    Ok(())
}

fn cmd_quant(cfg: &ExperimentConfig, kind: Kind, format: Format) -> Result<()> {
    let key = first_key(cfg);
    let report = match kind {
        Kind::Cine => run_cine(cfg, &key)?.report,
        Kind::Flow => run_flow(cfg, &key)?.report,
    };
    print_report(&report, cfg.mode, format)
}

fn cmd_run(cfg: &ExperimentConfig, format: Format) -> Result<()> {
    let out = run_experiment(cfg)?;
    let errors = out.errors();
    for e in &errors {
        eprintln!("run failed: {e}");
    }
    print_report(&out.report, cfg.mode, format)?;
    info!("{} files in {}, manifest.json written", out.manifest.files.len(), out.dir.display());
    Ok(())
}

fn cmd_report(dir: &Path, format: Format) -> Result<()> {
    let summary = report(dir)?;
    match format {
        Format::Csv => {
            for t in &summary.tables {
                println!("{}", dir.join("report").join(t).display());
            }
            for (t, why) in &summary.missing {
                eprintln!("{t}: {why}");
            }
        }
        Format::Json => emit_json(&summary)?,
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = cli.config()?;
    match &cli.command {
        Command::Phantom { kind } => cmd_phantom(&cfg, *kind),
        Command::Sample { kind } => cmd_sample(&cfg, *kind, cli.format),
        Command::Encode { kind } => cmd_encode(&cfg, *kind),
        Command::Recon { kind } => cmd_recon(&cfg, *kind, cli.format),
        Command::Physio { kind } => cmd_physio(&cfg, *kind, cli.format),
        Command::Quant { kind } => cmd_quant(&cfg, *kind, cli.format),
        Command::Run => cmd_run(&cfg, cli.format),
        Command::Report => cmd_report(&cfg.output_dir, cli.format),
    }
}
