use std::path::Path;

use anyhow::{Context, Result};
use fragnet::arch::{estimate_flops, ArchKind, Network, NetworkConfig};
use fragnet::checkpoint::Checkpoint;
use fragnet::data::synth::{generate_synthetic, SynthConfig};
use fragnet::data::{load_image, load_manifest, load_split, resize_pad, Manifest, Split, WordSet};
use fragnet::eval::{
    evaluate_nn, evaluate_pages, evaluate_retrieval, evaluate_words, heatmap as word_heatmap, predict_word_probs,
    Distance,
};
use fragnet::train::{LogRecord, Trainer};
use fragnet::{FragError, Scalar};

use crate::config::{Precision, RunConfig};
use crate::{default_out_dir, ensure_dir, write_file, EvalArgs, FlopsArgs, HeatmapArgs, SynthArgs, TrainArgs};

fn set_threads(n: usize) {
    // read by the GEMM kernels on first use
    std::env::set_var("MATMUL_NUM_THREADS", n.to_string());
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let out = a.out.unwrap_or_else(default_out_dir);
    let mut cfg = SynthConfig::new(a.writers, a.train_words, a.test_words, a.seed);
    cfg.words_per_page = a.words_per_page;
    cfg.validate()?;
    ensure_dir(&out)?;
    let made = generate_synthetic(&cfg, &out)?;
    println!("{} ({} words)", made.train_path.display(), made.train.len());
    println!("{} ({} words)", made.test_path.display(), made.test.len());
    Ok(())
}

/// Settings for a run: defaults (or the resumed checkpoint's settings), then
/// the config file, then flags.
fn run_config(a: &TrainArgs, resumed: Option<&Checkpoint>) -> Result<RunConfig> {
    let mut c = RunConfig::defaults(default_out_dir());
    if let Some(ck) = resumed {
        c.arch = ck.config.kind;
        c.q = ck.config.fragment_size;
        c.writers = Some(ck.config.writers);
        c.plan = ck.plan.clone();
    }
    if let Some(path) = &a.config {
        c.apply_file(path)?;
    }
    let flags: [(&str, Option<String>); 13] = [
        ("arch", a.arch.clone()),
        ("q", a.q.map(|v| v.to_string())),
        ("writers", a.writers.map(|v| v.to_string())),
        ("train", a.train.as_ref().map(|p| p.display().to_string())),
        ("test", a.test.as_ref().map(|p| p.display().to_string())),
        ("epochs", a.epochs.map(|v| v.to_string())),
        ("batch_size", a.batch_size.map(|v| v.to_string())),
        ("lr_schedule", a.lr_schedule.clone()),
        ("seed", a.seed.map(|v| v.to_string())),
        ("checkpoint_every", a.checkpoint_every.map(|v| v.to_string())),
        ("out", a.out.as_ref().map(|p| p.display().to_string())),
        ("threads", a.threads.map(|v| v.to_string())),
        ("precision", a.precision.clone()),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            c.set(key, &v)?;
        }
    }
    c.validate()?;
    Ok(c)
}

fn network_config(c: &RunConfig, writers: usize) -> NetworkConfig {
    match c.arch {
        ArchKind::FragNet => NetworkConfig::fragnet(c.q, writers),
        ArchKind::WordImgNet => NetworkConfig::wordimgnet(writers),
    }
}

fn check_exists(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        return Err(FragError::Config(format!("{what} {} does not exist", path.display())).into());
    }
    Ok(())
}

pub fn train(a: TrainArgs) -> Result<()> {
    let resumed = a.resume.as_deref().map(Checkpoint::load).transpose()?;
    let c = run_config(&a, resumed.as_ref())?;
    let train_path = c
        .train
        .clone()
        .ok_or_else(|| FragError::Config("a training manifest is required (--train)".into()))?;
    check_exists(&train_path, "training manifest")?;
    let (train, test) = match &c.test {
        Some(t) => {
            check_exists(t, "test manifest")?;
            let (tr, te) = load_split(&train_path, t)?;
            (tr, Some(te))
        }
        None => (load_manifest(&train_path, Split::Train)?, None),
    };
    if train.is_empty() {
        return Err(FragError::Config(format!("{} has no records", train_path.display())).into());
    }
    let seen = train.writer_count().max(test.as_ref().map_or(0, Manifest::writer_count));
    let writers = c.writers.unwrap_or(seen.max(2));
    if writers < seen {
        return Err(FragError::Config(format!("--writers {writers} but the manifests use writer ids up to {}", seen - 1)).into());
    }
    set_threads(c.threads);
    let net_cfg = network_config(&c, writers);
    ensure_dir(&c.out)?;
    match c.precision {
        Precision::F32 => train_with::<f32>(&c, net_cfg, &train, test.as_ref(), resumed.as_ref()),
        Precision::F64 => train_with::<f64>(&c, net_cfg, &train, test.as_ref(), resumed.as_ref()),
    }
}

fn train_with<T: Scalar>(
    c: &RunConfig,
    net_cfg: NetworkConfig,
    train: &Manifest,
    test: Option<&Manifest>,
    resume: Option<&Checkpoint>,
) -> Result<()> {
    let (h, w) = (net_cfg.input_height, net_cfg.input_width);
    let train_set = WordSet::from_manifest(train, h, w, net_cfg.writers).context("loading training images")?;
    let test_set = test
        .map(|m| WordSet::from_manifest(m, h, w, net_cfg.writers))
        .transpose()
        .context("loading test images")?;
    let mut trainer = match resume {
        Some(ck) => {
            ck.expect_config(&net_cfg)?;
            let mut t = ck.trainer::<T>()?;
            t.plan = c.plan.clone();
            t
        }
        None => Trainer::new(Network::<T>::new(net_cfg.clone(), c.plan.seed)?, c.plan.clone())?,
    };
    eprintln!(
        "training {} on {} words ({} writers), epochs {}..{}",
        net_cfg.label(),
        train_set.len(),
        net_cfg.writers,
        trainer.epoch,
        c.plan.epochs
    );
    let log_path = c.out.join("train.log");
    // a resumed run keeps the log lines of the epochs it already has
    let mut log = String::new();
    if resume.is_some() {
        let old = std::fs::read_to_string(&log_path).unwrap_or_default();
        for line in old.lines() {
            if line.parse::<LogRecord>().is_ok_and(|r| r.epoch < trainer.epoch) {
                log.push_str(line);
                log.push('\n');
            }
        }
    }
    let out = c.out.clone();
    trainer.fit(&train_set, test_set.as_ref(), |t, record| {
        println!("{record}");
        log.push_str(&format!("{record}\n"));
        std::fs::write(&log_path, &log).map_err(|e| FragError::Io {
            path: log_path.clone(),
            source: e,
        })?;
        let every = t.plan.checkpoint_every;
        if every > 0 && (record.epoch + 1) % every == 0 {
            Checkpoint::from_trainer(t).save(&out.join(format!("checkpoint-epoch{:03}.ckpt", record.epoch + 1)))?;
        }
        Ok(())
    })?;
    let final_path = c.out.join("final.ckpt");
    Checkpoint::from_trainer(&trainer).save(&final_path)?;
    eprintln!("wrote {} and {}", log_path.display(), final_path.display());
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let distance = Distance::parse(&a.distance)?;
    let precision = Precision::parse(&a.precision)?;
    if !["word", "page", "nn", "retrieval"].contains(&a.mode.as_str()) {
        return Err(FragError::Config(format!("unknown mode {:?} (word|page|nn|retrieval)", a.mode)).into());
    }
    if a.batch_size == 0 || a.threads == 0 {
        return Err(FragError::Config("batch size and threads must be positive".into()).into());
    }
    check_exists(&a.checkpoint, "checkpoint")?;
    check_exists(&a.test, "test manifest")?;
    set_threads(a.threads);
    match precision {
        Precision::F32 => eval_with::<f32>(&a, distance),
        Precision::F64 => eval_with::<f64>(&a, distance),
    }
}

fn eval_with<T: Scalar>(a: &EvalArgs, distance: Distance) -> Result<()> {
    let ck = Checkpoint::load(&a.checkpoint)?;
    let net = ck.network::<T>()?;
    let cfg = net.config().clone();
    let (h, w) = (cfg.input_height, cfg.input_width);
    // features can be extracted for writers the network never saw
    let label_limit = if matches!(a.mode.as_str(), "word" | "page") { cfg.writers } else { usize::MAX };
    let (train_manifest, test_manifest) = match (&a.train, a.mode.as_str()) {
        (Some(tr), _) => {
            check_exists(tr, "training manifest")?;
            let (tr, te) = load_split(tr, &a.test)?;
            (Some(tr), te)
        }
        (None, "nn") => return Err(FragError::Config("nn mode needs --train to build writer models".into()).into()),
        (None, _) => (None, load_manifest(&a.test, Split::Test)?),
    };
    let test = WordSet::from_manifest(&test_manifest, h, w, label_limit).context("loading test images")?;
    let probs = predict_word_probs(&net, &test, a.batch_size)?;
    let report = match a.mode.as_str() {
        "word" => evaluate_words(&probs, &test)?,
        "page" => evaluate_pages(&probs, &test)?,
        "retrieval" => evaluate_retrieval(&probs, &test, distance)?,
        _ => {
            let train = WordSet::from_manifest(train_manifest.as_ref().expect("checked above"), h, w, usize::MAX)
                .context("loading training images")?;
            let train_probs = predict_word_probs(&net, &train, a.batch_size)?;
            evaluate_nn(&train_probs, &train.labels, &probs, &test, distance)?
        }
    };
    if a.by_word_length && report.by_word_length.is_empty() {
        eprintln!("note: the manifest has no transcriptions, so there is no word-length breakdown");
    }
    let table = report.to_table(a.per_writer, a.by_word_length);
    print!("{table}");
    let out = a.out.clone().unwrap_or_else(default_out_dir);
    ensure_dir(&out)?;
    write_file(&out.join(format!("eval-{}.txt", a.mode)), &table)?;
    write_file(&out.join(format!("eval-{}.metrics", a.mode)), report.to_metrics())?;
    Ok(())
}

pub fn heatmap(a: HeatmapArgs) -> Result<()> {
    match Precision::parse(&a.precision)? {
        Precision::F32 => heatmap_with::<f32>(&a),
        Precision::F64 => heatmap_with::<f64>(&a),
    }
}

fn heatmap_with<T: Scalar>(a: &HeatmapArgs) -> Result<()> {
    check_exists(&a.checkpoint, "checkpoint")?;
    let ck = Checkpoint::load(&a.checkpoint)?;
    if ck.config.kind != ArchKind::FragNet {
        return Err(FragError::Unsupported("heatmaps need a FragNet checkpoint (WordImgNet has no fragments)".into()).into());
    }
    let net = ck.network::<T>()?;
    let image = resize_pad::<T>(&load_image(&a.image)?, ck.config.input_height, ck.config.input_width)?;
    let map = word_heatmap(&net, &image, a.class)?;
    let out = a.out.clone().unwrap_or_else(default_out_dir);
    ensure_dir(&out)?;
    let stem = a.image.file_stem().map_or("word".into(), |s| s.to_string_lossy().into_owned());
    let png = out.join(format!("{stem}-heatmap.png"));
    let txt = out.join(format!("{stem}-heatmap.txt"));
    fragnet::data::save_image(&png, &map.to_image())?;
    let text = map.describe();
    write_file(&txt, &text)?;
    print!("{text}");
    eprintln!("wrote {} and {}", png.display(), txt.display());
    Ok(())
}

pub fn flops(a: FlopsArgs) -> Result<()> {
    let kind = ArchKind::parse(&a.arch)?;
    let cfg = match kind {
        ArchKind::FragNet => {
            if !fragnet::arch::FRAGMENT_SIZES.contains(&a.q) {
                return Err(FragError::Config(format!("q must be one of 16, 32, 64, got {}", a.q)).into());
            }
            NetworkConfig::fragnet(a.q, a.writers)
        }
        ArchKind::WordImgNet => NetworkConfig::wordimgnet(a.writers),
    };
    print!("{}", estimate_flops(&cfg)?.to_table());
    Ok(())
}
