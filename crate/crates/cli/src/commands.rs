//! One function per subcommand. Every stage reads and writes plain files
//! under the data and run directories.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use gbdl::data::{self, Dataset, Mask, Volume};
use gbdl::metrics::MetricRow;
use gbdl::model::{self, SegNet};
use gbdl::train::{self, EpochLog, EvalCase};

use crate::config::RunConfig;
use crate::error::CliError;

pub const LRL_CHECKPOINT: &str = "lrl.ckpt";
pub const SEG_CHECKPOINT: &str = "seg.ckpt";
pub const BASELINE_CHECKPOINT: &str = "baseline.ckpt";
pub const PSEUDO_DIR: &str = "pseudo";
pub const PREDICTION_DIR: &str = "predictions";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BENCH_FILE: &str = "bench_passes.csv";

pub struct Context {
    pub cfg: RunConfig,
    pub threads: usize,
}

impl Context {
    fn run_path(&self, name: &str) -> PathBuf {
        self.cfg.run_dir.join(name)
    }

    fn dataset(&self) -> Result<Dataset, CliError> {
        let manifest = self.cfg.data_dir.join(data::MANIFEST_NAME);
        if !manifest.exists() {
            return Err(CliError::Data(format!(
                "dataset not found: {} (run gen-data first)",
                manifest.display()
            )));
        }
        Ok(data::load_dataset(&manifest)?)
    }

    fn ensure_run_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.cfg.run_dir).map_err(|e| CliError::io(&self.cfg.run_dir, e))
    }

    fn segnet(&self, checkpoint: Option<&Path>) -> Result<SegNet, CliError> {
        let path = checkpoint.map_or_else(|| self.run_path(SEG_CHECKPOINT), Path::to_path_buf);
        Ok(model::load_segnet(&path)?)
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_log(path: &Path, logs: &[EpochLog]) -> Result<(), CliError> {
    let mut text = String::from("stage epoch total ce dice mse kl\n");
    for l in logs {
        writeln!(text, "{l}").expect("string write");
        println!("{l}");
    }
    write(path, text)
}

pub fn gen_data(ctx: &Context) -> Result<(), CliError> {
    let ds = data::generate(&ctx.cfg.data)?;
    let manifest = data::save_dataset(&ds, &ctx.cfg.data_dir)?;
    println!(
        "wrote {} labeled, {} unlabeled and {} test volumes to {}",
        ds.train_labeled.len(),
        ds.train_unlabeled.len(),
        ds.test.len(),
        manifest.display()
    );
    Ok(())
}

pub fn train_lrl(ctx: &Context) -> Result<(), CliError> {
    let ds = ctx.dataset()?;
    ctx.ensure_run_dir()?;
    let (lrl, logs) = train::train_lrl(&ds, &ctx.cfg.train)?;
    write_log(&ctx.run_path("lrl_loss.log"), &logs)?;
    model::save_checkpoint(&ctx.run_path(LRL_CHECKPOINT), &lrl)?;
    Ok(())
}

fn pseudo_path(dir: &Path, id: &str, k: usize) -> PathBuf {
    dir.join(format!("{id}.{k}.msk"))
}

pub fn make_pseudo(ctx: &Context) -> Result<(), CliError> {
    let ds = ctx.dataset()?;
    let ckpt = ctx.run_path(LRL_CHECKPOINT);
    if !ckpt.exists() {
        return Err(CliError::Data(format!(
            "checkpoint not found: {} (run train-lrl first)",
            ckpt.display()
        )));
    }
    let lrl = model::load_lrl(&ckpt)?;
    let vols = ds.unlabeled_volumes();
    let masks = train::make_pseudo_labels(&lrl, &vols, &ctx.cfg.train)?;
    let dir = ctx.run_path(PSEUDO_DIR);
    create_dir(&dir)?;
    let pairs = ctx.cfg.train.pseudo_pairs;
    for (i, m) in masks.iter().enumerate() {
        data::write_mask(&pseudo_path(&dir, &m.id, i % pairs), m)?;
    }
    println!("wrote {} pseudo-labels to {}", masks.len(), dir.display());
    Ok(())
}

fn read_pseudo(ctx: &Context, ds: &Dataset) -> Result<Vec<Mask>, CliError> {
    let dir = ctx.run_path(PSEUDO_DIR);
    if ds.train_unlabeled.is_empty() {
        return Ok(Vec::new());
    }
    if !dir.is_dir() {
        return Err(CliError::Data(format!(
            "no pseudo-labels in {} (run make-pseudo first)",
            dir.display()
        )));
    }
    let mut out = Vec::new();
    let mut missing = Vec::new();
    for s in &ds.train_unlabeled {
        for k in 0..ctx.cfg.train.pseudo_pairs {
            let p = pseudo_path(&dir, &s.volume.id, k);
            if p.exists() {
                out.push(data::read_mask(&p, &s.volume.id)?);
            } else {
                missing.push(p.display().to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::Data(format!(
            "missing pseudo-labels (run make-pseudo first): {}",
            missing.join(", ")
        )));
    }
    Ok(out)
}

pub fn train_seg(ctx: &Context, baseline: bool) -> Result<(), CliError> {
    let ds = ctx.dataset()?;
    ctx.ensure_run_dir()?;
    let (net, logs, name, log) = if baseline {
        let (n, l) = train::train_baseline(&ds, &ctx.cfg.train)?;
        (n, l, BASELINE_CHECKPOINT, "baseline_loss.log")
    } else {
        let pseudo = read_pseudo(ctx, &ds)?;
        let (n, l) = train::train_segnet(&ds, &pseudo, &ctx.cfg.train)?;
        (n, l, SEG_CHECKPOINT, "seg_loss.log")
    };
    write_log(&ctx.run_path(log), &logs)?;
    model::save_checkpoint(&ctx.run_path(name), &net)?;
    Ok(())
}

fn prediction_paths(dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{id}.msk")), dir.join(format!("{id}.entropy.vol")))
}

pub fn predict(ctx: &Context, checkpoint: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let net = ctx.segnet(checkpoint)?;
    let ds = ctx.dataset()?;
    let dir = out.map_or_else(|| ctx.run_path(PREDICTION_DIR), Path::to_path_buf);
    create_dir(&dir)?;
    let passes = ctx.cfg.train.passes;
    for (v, s) in ds.test.iter().enumerate() {
        let pred = train::bayesian_predict(&net, &s.volume, v, passes, ctx.cfg.train.seed, ctx.threads)?;
        let (mask, entropy) = prediction_paths(&dir, &s.volume.id);
        data::write_mask(&mask, &pred.mask(&s.volume.id))?;
        data::write_volume(&entropy, &pred.entropy_volume(&s.volume.id))?;
    }
    println!("wrote {} predictions ({passes} passes) to {}", ds.test.len(), dir.display());
    Ok(())
}

fn report(rows: &[MetricRow]) -> String {
    let mut text = format!("{}\n", MetricRow::csv_header());
    for r in rows.iter().chain(std::iter::once(&MetricRow::mean(rows))) {
        text.push_str(&r.to_csv());
        text.push('\n');
    }
    text
}

pub fn eval(ctx: &Context, predictions: Option<&Path>, out: Option<&Path>) -> Result<(), CliError> {
    let ds = ctx.dataset()?;
    let dir = predictions.map_or_else(|| ctx.run_path(PREDICTION_DIR), Path::to_path_buf);
    let mut preds: Vec<(Mask, Volume)> = Vec::new();
    for s in &ds.test {
        let (mask, entropy) = prediction_paths(&dir, &s.volume.id);
        if !mask.exists() || !entropy.exists() {
            return Err(CliError::Data(format!(
                "no prediction for {} in {} (run predict first)",
                s.volume.id,
                dir.display()
            )));
        }
        preds.push((data::read_mask(&mask, &s.volume.id)?, data::read_volume(&entropy, &s.volume.id)?));
    }
    let cases: Vec<EvalCase> = ds
        .test
        .iter()
        .zip(&preds)
        .map(|(s, (m, e))| EvalCase {
            truth: &s.mask,
            hard_mask: m.labels(),
            entropy: e.data(),
        })
        .collect();
    let rows = train::evaluate(&cases, ctx.cfg.eval.patch, ctx.cfg.eval.threshold)?;
    let text = report(&rows);
    let path = out.map_or_else(|| ctx.run_path(METRICS_FILE), Path::to_path_buf);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(&path, &text)?;
    print!("{text}");
    Ok(())
}

pub fn bench_passes(ctx: &Context, checkpoint: Option<&Path>) -> Result<(), CliError> {
    let net = ctx.segnet(checkpoint)?;
    let ds = ctx.dataset()?;
    if ds.test.is_empty() {
        return Err(CliError::Data("dataset has no test volumes".into()));
    }
    let seed = ctx.cfg.train.seed;
    let mut text = String::from("T,mean_ms,dice,pavpu\n");
    for &t in &ctx.cfg.eval.bench_passes {
        let mut best = f64::INFINITY;
        let mut preds = Vec::new();
        for _ in 0..ctx.cfg.eval.bench_repeats {
            let start = Instant::now();
            preds = ds
                .test
                .iter()
                .enumerate()
                .map(|(v, s)| train::bayesian_predict(&net, &s.volume, v, t, seed, ctx.threads))
                .collect::<Result<Vec<_>, _>>()?;
            best = best.min(start.elapsed().as_secs_f64() * 1e3);
        }
        let cases: Vec<EvalCase> = ds.test.iter().zip(&preds).map(|(s, p)| EvalCase::new(&s.mask, p)).collect();
        let mean = MetricRow::mean(&train::evaluate(&cases, ctx.cfg.eval.patch, ctx.cfg.eval.threshold)?);
        let line = format!("{t},{:.3},{:.6},{:.6}", best / ds.test.len() as f64, mean.dice, mean.pavpu);
        println!("{line}");
        text.push_str(&line);
        text.push('\n');
    }
    ctx.ensure_run_dir()?;
    write(&ctx.run_path(BENCH_FILE), text)
}
