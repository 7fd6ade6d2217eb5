//! Command-line front end. Reports go to standard output as `key=value`
//! lines; failures are one `CATEGORY/message` line on standard error.

use std::ffi::OsString;
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sdt_core::data::{SampleTuple, SynthConfig};
use sdt_core::energy::{audit, EnergyConstants, EnergyReport, LayerKind};
use sdt_core::metrics::{evaluate, MetricsReport, METRIC_EPS};
use sdt_core::model::Network;
use sdt_core::train::{train, LossRecord};
use sdt_core::{Error, Result};

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::dataset::{generate, load_dataset};
use crate::format::{io_err, read_spk, write_depth, write_pgm};

#[derive(Debug, Parser)]
#[command(name = "sdt", version, about = "Spike-driven transformer for event-stream depth estimation")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset (SPKT + DPTH + FEAT per sample, plus manifest).
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        samples: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 64)]
        height: usize,
        #[arg(long, default_value_t = 64)]
        width: usize,
        #[arg(long, default_value_t = 4)]
        timesteps: usize,
        #[arg(long, default_value_t = 0.15)]
        contrast_threshold: f64,
        #[arg(long, default_value_t = 16)]
        teacher_dim: usize,
    },
    /// Train from a run configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Also write the loss curve here.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset directory.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Per-sample metric rows.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Predict depth for one spike stream (`.pgm` output writes 16-bit PGM,
    /// anything else DPTH).
    Infer {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        spk: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Theoretical energy audit of one spike stream.
    Energy {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        spk: PathBuf,
        #[arg(long, default_value_t = 4.6)]
        e_mac_pj: f64,
        #[arg(long, default_value_t = 0.9)]
        e_ac_pj: f64,
        /// Per-layer rows.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a freshly initialised checkpoint for a run configuration.
    Init {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Worker threads from `SDT_THREADS` (default 1).
pub fn threads() -> Result<usize> {
    match std::env::var("SDT_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("SDT_THREADS must be a positive integer, got '{v}'"))),
        },
    }
}

struct Report<'a, W: Write> {
    out: &'a mut W,
}

impl<W: Write> Report<'_, W> {
    fn kv(&mut self, k: impl Display, v: impl Display) -> Result<()> {
        writeln!(self.out, "{k}={v}").map_err(|e| Error::Io(format!("stdout: {e}")))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// Loss curve as CSV with header `step,total,l_p,l_2`.
pub fn loss_csv(curve: &[LossRecord]) -> String {
    let mut s = String::from("step,total,l_p,l_2\n");
    for r in curve {
        s.push_str(&format!("{},{},{},{}\n", r.step, r.total, r.l_p, r.l_2));
    }
    s
}

/// Per-layer energy rows as CSV.
pub fn energy_csv(r: &EnergyReport) -> String {
    let mut s = String::from("layer,kind,synop_count,firing_rate,energy_pJ\n");
    for row in &r.rows {
        s.push_str(&format!("{},{},{},{},{}\n", row.name, row.kind.name(), row.synop_count, row.firing_rate, row.energy_pj));
    }
    s
}

/// Per-sample metrics with a fixed-order reduction; samples are split into
/// contiguous chunks over `threads` workers.
pub fn evaluate_parallel(net: &Network<f32>, data: &[SampleTuple], threads: usize) -> Result<Vec<MetricsReport>> {
    let one = |s: &SampleTuple| net.infer(&s.spikes).and_then(|p| evaluate(&p, &s.depth, METRIC_EPS));
    if threads <= 1 || data.len() <= 1 {
        return data.iter().map(one).collect();
    }
    let chunk = data.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = data.chunks(chunk).map(|c| scope.spawn(move || c.iter().map(one).collect::<Result<Vec<_>>>())).collect();
        let mut out = Vec::with_capacity(data.len());
        for h in handles {
            out.extend(h.join().map_err(|_| Error::Numeric("evaluation worker panicked".into()))??);
        }
        Ok(out)
    })
}

fn metric_row(name: impl Display, m: &MetricsReport) -> String {
    let vals: Vec<String> = m.fields().iter().map(|(_, v)| v.to_string()).collect();
    format!("{name},{},{}\n", vals.join(","), m.n_valid)
}

fn energy_lines<W: Write>(rep: &mut Report<'_, W>, e: &EnergyReport) -> Result<()> {
    rep.kv("e_mac_pJ", e.constants.e_mac_pj)?;
    rep.kv("e_ac_pJ", e.constants.e_ac_pj)?;
    for (i, row) in e.rows.iter().enumerate() {
        rep.kv(format_args!("layer.{i:02}.name"), &row.name)?;
        rep.kv(format_args!("layer.{i:02}.kind"), row.kind.name())?;
        rep.kv(format_args!("layer.{i:02}.synop_count"), row.synop_count)?;
        rep.kv(format_args!("layer.{i:02}.firing_rate"), row.firing_rate)?;
        rep.kv(format_args!("layer.{i:02}.energy_pJ"), row.energy_pj)?;
    }
    rep.kv("spike_pJ", e.total_of(LayerKind::SpikeDriven))?;
    rep.kv("float_pJ", e.total_of(LayerKind::Float))?;
    rep.kv("total_pJ", e.total_pj)?;
    rep.kv("total_mJ", e.energy_mj())?;
    rep.kv("param_count", e.param_count)
}

/// Parse `args` (program name first) and run the subcommand, writing the
/// report to `out`.
pub fn run<I, T, W>(args: I, out: &mut W) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
    W: Write,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{e}").map_err(|e| Error::Io(format!("stdout: {e}")))?;
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            return Err(Error::Config(first.to_string()));
        }
    };
    let mut rep = Report { out };
    match cli.cmd {
        Command::Gen { out, samples, seed, height, width, timesteps, contrast_threshold, teacher_dim } => {
            let cfg = SynthConfig {
                seed,
                samples,
                timesteps,
                height,
                width,
                contrast_threshold,
                teacher_dim,
                ..SynthConfig::default()
            };
            let files = generate(&out, &cfg)?;
            rep.kv("out", out.display())?;
            rep.kv("samples", samples)?;
            rep.kv("files", files.len())?;
        }
        Command::Train { config, csv } => {
            let cfg = RunConfig::parse(&read_text(&config)?)?;
            cfg.require(&["data", "out"])?;
            let base = config.parent().unwrap_or(Path::new(""));
            let (data_dir, out_dir) = (base.join(cfg.data.as_ref().unwrap()), base.join(cfg.out.as_ref().unwrap()));
            let data = load_dataset(&data_dir)?;
            fs::create_dir_all(&out_dir).map_err(|e| io_err(&out_dir, e))?;
            eprintln!("training on {} samples from {}", data.len(), data_dir.display());
            let outcome = train(&data, &cfg.model, &cfg.distill, &cfg.train, |step, net| {
                if cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0 {
                    save_checkpoint(&out_dir.join(format!("step_{step:06}.sdtw")), net)?;
                }
                Ok(())
            })?;
            let ckpt = out_dir.join("model.sdtw");
            save_checkpoint(&ckpt, &outcome.network)?;
            let text = loss_csv(&outcome.curve);
            let curve_path = out_dir.join("loss.csv");
            write_text(&curve_path, &text)?;
            if let Some(p) = csv {
                write_text(&p, &text)?;
            }
            let (first, last) = (outcome.curve.first(), outcome.curve.last());
            rep.kv("steps", outcome.curve.len())?;
            rep.kv("initial_l_2", first.map_or(0.0, |r| r.l_2))?;
            rep.kv("final_total", last.map_or(0.0, |r| r.total))?;
            rep.kv("final_l_p", last.map_or(0.0, |r| r.l_p))?;
            rep.kv("final_l_2", last.map_or(0.0, |r| r.l_2))?;
            rep.kv("param_count", sdt_core::energy::param_count(&outcome.network))?;
            rep.kv("checkpoint", ckpt.display())?;
            rep.kv("loss_csv", curve_path.display())?;
        }
        Command::Eval { ckpt, data, csv } => {
            let net = load_checkpoint(&ckpt)?;
            let samples = load_dataset(&data)?;
            let first = samples.first().ok_or(Error::EmptyMask)?;
            for s in &samples {
                net.check_input(&s.spikes)?;
            }
            let per = evaluate_parallel(&net, &samples, threads()?)?;
            let mean = MetricsReport::average(&per)?;
            let energy = audit(&net, first, &EnergyConstants::default())?;
            rep.kv("samples", samples.len())?;
            rep.kv("n_valid", mean.n_valid)?;
            rep.kv("depth_domain", "normalized")?;
            for (k, v) in mean.fields() {
                rep.kv(k, v)?;
            }
            rep.kv("energy_total_mJ", energy.energy_mj())?;
            rep.kv("param_count", energy.param_count)?;
            if let Some(p) = csv {
                let mut s = String::from("sample,abs_rel,sq_rel,mae,rmse_log,si_log,delta1,delta2,delta3,n_valid\n");
                for (i, m) in per.iter().enumerate() {
                    s.push_str(&metric_row(i, m));
                }
                s.push_str(&metric_row("mean", &mean));
                write_text(&p, &s)?;
            }
        }
        Command::Infer { ckpt, spk, out } => {
            let net = load_checkpoint(&ckpt)?;
            let spikes = read_spk(&spk)?;
            let depth = net.infer(&spikes)?;
            let pgm = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            if pgm {
                write_pgm(&out, &depth)?;
            } else {
                write_depth(&out, &depth)?;
            }
            let mean = depth.values().iter().map(|&v| v as f64).sum::<f64>() / depth.values().len() as f64;
            rep.kv("out", out.display())?;
            rep.kv("format", if pgm { "pgm16" } else { "dpth" })?;
            rep.kv("height", depth.h())?;
            rep.kv("width", depth.w())?;
            rep.kv("mean_depth", mean)?;
        }
        Command::Energy { ckpt, spk, e_mac_pj, e_ac_pj, csv } => {
            if !(e_mac_pj >= 0.0 && e_ac_pj >= 0.0) {
                return Err(Error::Config("energy constants must be non-negative".into()));
            }
            let net = load_checkpoint(&ckpt)?;
            let spikes = read_spk(&spk)?;
            let c = net.config();
            let depth = sdt_core::data::DepthMap::new(c.height, c.width, vec![0.0; c.height * c.width])?;
            let sample = SampleTuple::new(spikes, depth, None)?;
            let e = audit(&net, &sample, &EnergyConstants { e_mac_pj, e_ac_pj })?;
            rep.kv("input_firing_rate", sample.spikes.firing_rate())?;
            energy_lines(&mut rep, &e)?;
            if let Some(p) = csv {
                write_text(&p, &energy_csv(&e))?;
            }
        }
        Command::Init { config, out } => {
            let cfg = RunConfig::parse(&read_text(&config)?)?;
            let net = Network::<f32>::new(&cfg.model, cfg.train.seed)?;
            save_checkpoint(&out, &net)?;
            rep.kv("checkpoint", out.display())?;
            rep.kv("param_count", net.param_count())?;
        }
    }
    Ok(())
}

/// Exit status per error category.
pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        "CONFIG" => 2,
        "DATA" => 3,
        "NUMERIC" => 4,
        _ => 5,
    }
}
