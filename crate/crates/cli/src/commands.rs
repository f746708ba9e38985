use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ushar_core::metrics::{
    contrast_db, evaluate_experiment, write_figures, EvalOptions, GsmRegion, MeanSd, MetricReport, Pairing,
};
use ushar_core::phantom::{make_experiment_datasets, make_test_split, ExperimentKind};
use ushar_core::{build_named_dataset, DomainDataset};
use ushar_gan::{ContentLayer, TrainingConfig};

/// Invalid invocation or configuration, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Parser, Debug)]
#[command(name = "ushar", version, about = "Unpaired ultrasound harmonization and denoising")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate synthetic carotid phantom domains.
    Phantom(PhantomArgs),
    /// Train a generator and two discriminators on unpaired domains.
    Train(TrainArgs),
    /// Translate a directory of images with a trained checkpoint.
    Translate(TranslateArgs),
    /// Compute the metric report of a translated set.
    Evaluate(EvaluateArgs),
    /// Print the summary tables of an existing report and redraw figures.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Harmonization,
    Denoising,
}

impl From<Kind> for ExperimentKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Harmonization => ExperimentKind::Harmonization,
            Kind::Denoising => ExperimentKind::Denoising,
        }
    }
}

#[derive(Args, Debug)]
struct PhantomArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    /// Images per training domain.
    #[arg(long)]
    n: usize,
    /// Held-out source images written to `<source>_test`.
    #[arg(long, default_value_t = 0)]
    n_test: usize,
    #[arg(long, default_value_t = 96)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file whose keys take precedence over the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Continue from this checkpoint directory instead of starting fresh.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    lr_constant_epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    pool_size: Option<usize>,
    #[arg(long)]
    base_filters: Option<usize>,
    #[arg(long)]
    residual_blocks: Option<usize>,
    #[arg(long)]
    disc_filters: Option<usize>,
    #[arg(long, value_enum)]
    content_layer: Option<ContentArg>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ContentArg {
    Trunk,
    Pixel,
}

#[derive(Args, Debug)]
struct TranslateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "translated")]
    suffix: String,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    translated: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Masks of the source images, matched by file stem.
    #[arg(long)]
    masks: PathBuf,
    /// Output directory for report.json, report.csv and figures/.
    #[arg(long)]
    report: PathBuf,
    #[arg(long, default_value_t = 256)]
    bins: usize,
    /// `all` or `sampled:<k>`.
    #[arg(long, default_value = "all")]
    pairing: String,
    /// `plaque_im` or `whole_image`.
    #[arg(long, default_value = "plaque_im")]
    gsm_region: String,
    #[arg(long, default_value_t = 25.0)]
    gsm_threshold: f64,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory written by `evaluate`.
    #[arg(long)]
    report: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Train(a) => cmd_train(a),
        Command::Translate(a) => cmd_translate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn mean_contrast(ds: &DomainDataset) -> Result<Option<f64>> {
    let masks = match ds.load_all_masks()? {
        Some(m) => m,
        None => return Ok(None),
    };
    let mut sum = 0.0;
    for (i, mask) in masks.iter().enumerate() {
        sum += contrast_db(&ds.load(i)?, mask)?.db;
    }
    Ok(Some(sum / masks.len() as f64))
}

fn describe(ds: &DomainDataset) -> Result<String> {
    let contrast = mean_contrast(ds)?.map(|c| format!(", mean contrast {c:.1} dB")).unwrap_or_default();
    Ok(format!(
        "{}: {} images of {}x{}{contrast}",
        ds.name,
        ds.len(),
        ds.dims.0,
        ds.dims.1
    ))
}

fn cmd_phantom(a: PhantomArgs) -> Result<()> {
    if a.n == 0 {
        return usage("--n must be at least 1");
    }
    if a.size < 32 {
        return usage("--size must be at least 32");
    }
    let kind: ExperimentKind = a.kind.into();
    let size = (a.size, a.size);
    let (source, target) = make_experiment_datasets(kind, a.n, size, &a.out, a.seed)?;
    println!("{}", describe(&source)?);
    println!("{}", describe(&target)?);
    if let (Some(s), Some(t)) = (mean_contrast(&source)?, mean_contrast(&target)?) {
        println!("contrast separation (target - source): {:.1} dB", t - s);
    }
    if a.n_test > 0 {
        let test = make_test_split(kind, a.n_test, size, &a.out, a.seed)?;
        println!("{}", describe(&test)?);
    }
    Ok(())
}

/// Dataset rooted at `dir`, looking in `dir/images` and `dir/masks` when
/// the phantom layout is used.
fn open_dataset(dir: &Path) -> Result<DomainDataset> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    let images = dir.join("images");
    let ds = if images.is_dir() {
        let masks = dir.join("masks");
        build_named_dataset(&name, &images, masks.is_dir().then_some(masks.as_path()))
    } else {
        build_named_dataset(&name, dir, None)
    };
    ds.with_context(|| format!("reading images from {}", dir.display()))
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn training_config(a: &TrainArgs, data_size: (usize, usize)) -> Result<TrainingConfig> {
    let mut cfg = TrainingConfig::default();
    macro_rules! set {
        ($flag:expr, $field:expr) => {
            if let Some(v) = $flag {
                $field = v;
            }
        };
    }
    set!(a.epochs, cfg.epochs);
    set!(a.lr, cfg.lr_initial);
    set!(a.batch_size, cfg.batch_size);
    set!(a.lambda1, cfg.weights.lambda1);
    set!(a.lambda2, cfg.weights.lambda2);
    set!(a.seed, cfg.seed);
    set!(a.checkpoint_every, cfg.checkpoint_every);
    set!(a.pool_size, cfg.pool_size);
    set!(a.base_filters, cfg.generator.base_filters);
    set!(a.residual_blocks, cfg.generator.n_residual_blocks);
    set!(a.disc_filters, cfg.discriminator.base_filters);
    cfg.lr_constant_epochs = a.lr_constant_epochs.unwrap_or(cfg.epochs / 2);
    cfg.image_size = a.image_size.unwrap_or(data_size.0);
    if let Some(c) = a.content_layer {
        cfg.content_layer = match c {
            ContentArg::Trunk => ContentLayer::Trunk,
            ContentArg::Pixel => ContentLayer::Pixel,
        };
    }
    if let Some(path) = &a.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: toml::Value = match toml::from_str(&text) {
            Ok(v) => v,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
        let mut value = toml::Value::try_from(&cfg)?;
        merge(&mut value, file);
        cfg = match value.try_into() {
            Ok(c) => c,
            Err(e) => return usage(format!("{}: {e}", path.display())),
        };
    }
    if let Err(e) = cfg.validate() {
        return usage(e.to_string());
    }
    Ok(cfg)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let source = open_dataset(&a.source)?;
    let target = open_dataset(&a.target)?;
    if source.dims != target.dims {
        bail!(
            "source images are {}x{} but target images are {}x{}",
            source.dims.0,
            source.dims.1,
            target.dims.0,
            target.dims.1
        );
    }
    let outcome = match &a.resume {
        Some(ckpt) => ushar_gan::resume(ckpt, &source, &target, &a.out)?,
        None => {
            let cfg = training_config(&a, source.dims)?;
            fs::create_dir_all(&a.out)?;
            fs::write(a.out.join("config.toml"), cfg.to_toml_string()?)?;
            ushar_gan::train(cfg, &source, &target, &a.out)?
        }
    };
    if let Some(last) = outcome.epochs.last() {
        println!(
            "epoch {}: total {:.4}, L_c {:.4}, L_n {:.4}, discriminator accuracy {:.3}",
            last.epoch + 1,
            last.total,
            last.l_c,
            last.l_n,
            last.d_accuracy()
        );
    }
    let fired = outcome.epochs.iter().filter(|e| e.collapse).count();
    if fired > 0 {
        println!("warning: mode-collapse sentinel fired in {fired} epoch(s)");
    }
    println!("checkpoint: {}", outcome.checkpoint.display());
    Ok(())
}

fn cmd_translate(a: TranslateArgs) -> Result<()> {
    let input = open_dataset(&a.input)?;
    let out = ushar_gan::translate_batch(&a.checkpoint, &input, &a.out, &a.suffix)?;
    println!("translated {} images into {}", out.len(), a.out.display());
    Ok(())
}

fn parse_pairing(s: &str) -> Result<Pairing> {
    if s == "all" {
        return Ok(Pairing::AllPairs);
    }
    match s.strip_prefix("sampled:").map(str::parse::<usize>) {
        Some(Ok(k)) if k > 0 => Ok(Pairing::Sampled(k)),
        _ => usage(format!("--pairing must be `all` or `sampled:<k>`, got `{s}`")),
    }
}

/// Index of the translated file for each source stem: an exact stem match
/// or `<stem>_<suffix>`.
fn align(source: &[String], translated: &[String]) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = translated.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    source
        .iter()
        .map(|stem| {
            if let Some(&i) = index.get(stem.as_str()) {
                return Ok(i);
            }
            let prefix = format!("{stem}_");
            let hits: Vec<usize> = translated
                .iter()
                .enumerate()
                .filter(|(_, t)| t.starts_with(&prefix))
                .map(|(i, _)| i)
                .collect();
            match hits.as_slice() {
                [i] => Ok(*i),
                [] => bail!("no translated image for `{stem}`"),
                _ => bail!("several translated images match `{stem}`"),
            }
        })
        .collect()
}

fn cmd_evaluate(a: EvaluateArgs) -> Result<()> {
    let opts = EvalOptions {
        bins: a.bins,
        pairing: parse_pairing(&a.pairing)?,
        gsm_region: a.gsm_region.parse::<GsmRegion>().map_err(UsageError)?,
        gsm_threshold: a.gsm_threshold,
    };
    if opts.bins == 0 || opts.bins > 256 {
        return usage("--bins must lie in 1..=256");
    }
    let source_dir = if a.source.join("images").is_dir() { a.source.join("images") } else { a.source.clone() };
    let source = build_named_dataset("source", &source_dir, Some(&a.masks))
        .with_context(|| format!("reading {} with masks {}", source_dir.display(), a.masks.display()))?;
    let translated = open_dataset(&a.translated)?;
    let target = open_dataset(&a.target)?;

    let names = source.stems();
    let order = align(&names, &translated.stems())?;
    let src = source.load_all()?;
    let masks = source.load_all_masks()?.expect("masks were requested");
    let out: Vec<_> = order.iter().map(|&i| translated.load(i)).collect::<ushar_core::Result<_>>()?;
    let tgt = target.load_all()?;
    let report = evaluate_experiment(&names, &src, &out, &tgt, &masks, &opts)?;

    fs::create_dir_all(&a.report)?;
    report.write_json(&a.report.join("report.json"))?;
    report.write_csv(&a.report.join("report.csv"))?;
    let figures = write_figures(&report, &a.report.join("figures"))?;
    print_summary(&report);
    println!("wrote report.json, report.csv and {} figures to {}", figures.len(), a.report.display());
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    let path = a.report.join("report.json");
    let report = MetricReport::read_json(&path).with_context(|| format!("reading {}", path.display()))?;
    print_summary(&report);
    let figures = write_figures(&report, &a.report.join("figures"))?;
    println!("redrew {} figures in {}", figures.len(), a.report.join("figures").display());
    Ok(())
}

fn fmt(stat: Option<&MeanSd>) -> String {
    match stat {
        Some(s) => format!("{:.3} ({:.3})", s.mean, s.sd),
        None => "n/a".into(),
    }
}

fn print_summary(r: &MetricReport) {
    let get = |k: &str| r.aggregates.get(k);
    println!("images: {}", r.n);
    println!("feature similarity      source          translated");
    println!("  BD                    {:<15} {}", fmt(get("bd_source")), fmt(get("bd")));
    println!("  HC                    {:<15} {}", fmt(get("hc_source")), fmt(get("hc")));
    println!("structural similarity (source vs translated)");
    for (label, key) in [
        ("whole image", "ssim_whole"),
        ("lumen", "ssim_lumen"),
        ("plaque/IM", "ssim_plaque_im"),
        ("adventitia", "ssim_adventitia"),
    ] {
        println!("  {label:<22}{}", fmt(get(key)));
    }
    println!("risk markers            source          translated");
    println!("  GSM                   {:<15} {}", fmt(get("gsm_in")), fmt(get("gsm_out")));
    println!("  contrast (dB)         {:<15} {}", fmt(get("contrast_in_db")), fmt(get("contrast_out_db")));
    println!(
        "reclassified at GSM {}: {} ({:.1}%)",
        r.options.gsm_threshold,
        r.reclassified_count,
        100.0 * r.reclassified_fraction
    );
}
