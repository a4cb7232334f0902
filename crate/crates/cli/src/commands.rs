use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use jcif::codec::{lambda_for, psnr, CodecConfig, CodecModel, RasterImage};
use jcif::dataset::{build_dataset, read_tensor, write_tensor, DatasetManifest, Sample, Split, SplitRatios, SyntheticSceneConfig, MANIFEST_FILE};
use jcif::hash_head::{HashHead, HashHeadConfig, LabelVector};
use jcif::pipeline::{self, Archive, Decoder, RdRow};
use jcif::retrieval::{write_metrics_csv, HashTable, Relevance};
use jcif::trainer::{train_stage1, train_stage2, write_log_csv, Checkpoint, TaskSet, TrainSchedule};
use sha2::{Digest, Sha256};

use crate::{CompressArgs, DecompressArgs, EvaluateArgs, GenDataArgs, IndexArgs, QueryArgs, RdCurveArgs, SplitArg, Tasks, TrainArgs};

/// A bad flag combination or missing precondition; exits with 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

/// 0 success, 2 usage/config, 1 I/O, 3 missing entity, 4 format/compatibility.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(err) = cause.downcast_ref::<jcif::Error>() {
            return match err {
                jcif::Error::Config(_) => 2,
                jcif::Error::Io { .. } => 1,
                jcif::Error::NotFound(_) => 3,
                jcif::Error::Format(_) | jcif::Error::Compatibility(_) => 4,
                jcif::Error::Numerics(_) | jcif::Error::NonFinite(_) => 1,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 1;
        }
    }
    1
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(anyhow::Error::new(jcif::Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, format!("{what} not found")))));
    }
    Ok(())
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn split_of(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    }
}

fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    require_file(&path, "dataset manifest")?;
    Ok(DatasetManifest::load(&path)?)
}

fn load_split(dir: &Path, manifest: &DatasetManifest, split: Split) -> Result<Vec<Sample>> {
    manifest.load_split(dir, split).with_context(|| format!("loading the {split} split"))
}

fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    require_file(path, "checkpoint")?;
    Checkpoint::load(path).with_context(|| format!("reading checkpoint {}", path.display()))
}

fn joint_parts(ckpt: Checkpoint, path: &Path) -> Result<(CodecModel, HashHead)> {
    match ckpt.hash_head {
        Some(head) => Ok((ckpt.codec, head)),
        None => Err(usage(format!("{} is a stage-{} checkpoint without a hashing head; run `train --stage 2` first", path.display(), ckpt.stage))),
    }
}

fn save_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| jcif::Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| jcif::Error::io(path, e))?;
    Ok(())
}

fn write_csv(path: &Path, fill: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    fill(&mut buf).map_err(|e| jcif::Error::io(path, e))?;
    save_bytes(path, &buf)
}

pub fn gen_data(a: &GenDataArgs) -> Result<()> {
    let config = SyntheticSceneConfig { size: a.size, noise: a.noise, seed: a.seed, ..Default::default() };
    let manifest = build_dataset(&config, a.n, &SplitRatios::default(), &a.out)?;
    println!(
        "images {} train {} val {} test {} classes {}",
        manifest.entries.len(),
        manifest.split_count(Split::Train),
        manifest.split_count(Split::Val),
        manifest.split_count(Split::Test),
        manifest.classes
    );
    println!("manifest sha256 {}", digest(manifest.to_text().as_bytes()));
    Ok(())
}

fn schedule_of(a: &TrainArgs) -> TrainSchedule {
    let defaults = TrainSchedule::default();
    TrainSchedule {
        stage1_steps: if a.stage == 1 { a.steps.unwrap_or(defaults.stage1_steps) } else { defaults.stage1_steps },
        stage2_steps: if a.stage == 2 { a.steps.unwrap_or(defaults.stage2_steps) } else { defaults.stage2_steps },
        learning_rate: a.lr,
        compression_lr_factor: a.lr_factor,
        batch_size: a.batch,
        seed: a.seed,
        early_stop_window: a.early_stop_window,
        early_stop_tolerance: a.early_stop_tolerance,
        tasks: match a.tasks {
            Tasks::Four => TaskSet::Four,
            Tasks::Hashing => TaskSet::HashingOnly,
        },
    }
}

pub fn train(a: &TrainArgs) -> Result<()> {
    if a.stage == 2 && a.checkpoint.is_none() {
        return Err(usage("stage 2 needs a stage-1 checkpoint: pass --checkpoint <path>"));
    }
    let manifest = load_manifest(&a.data)?;
    if let Some(c) = &a.checkpoint {
        require_file(c, "checkpoint")?;
    }
    let data = load_split(&a.data, &manifest, Split::Train)?;
    let first = data.first().ok_or_else(|| usage("the training split is empty"))?;
    let schedule = schedule_of(a);
    let start = Instant::now();

    let (ckpt, report) = if a.stage == 1 {
        let values = first.image.pixel_count() * first.image.channels();
        let lambda = a.lambda.unwrap_or_else(|| lambda_for(a.lambda_setting, values));
        let config = CodecConfig { image_channels: first.image.channels(), lambda, ..Default::default() };
        let mut codec = CodecModel::new(config, a.seed)?;
        let report = train_stage1(&mut codec, &data, &schedule)?;
        (Checkpoint { stage: 1, schedule, codec, hash_head: None }, report)
    } else {
        let path = a.checkpoint.as_deref().expect("checked above");
        let mut codec = load_checkpoint(path)?.codec;
        let defaults = HashHeadConfig::with_bits(a.bits);
        let config = HashHeadConfig {
            classes: manifest.classes,
            latent_channels: codec.config.latent_channels,
            alpha: a.alpha.unwrap_or(defaults.alpha),
            gamma: a.gamma.unwrap_or(defaults.gamma),
            ..defaults
        };
        let mut head = HashHead::new(config, a.seed)?;
        let report = train_stage2(&mut codec, &mut head, &data, &schedule)?;
        (Checkpoint { stage: 2, schedule, codec, hash_head: Some(head) }, report)
    };

    let bytes = ckpt.to_bytes();
    save_bytes(&a.out, &bytes)?;
    let log = a.log.clone().unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    write_csv(&log, |w| write_log_csv(w, &report.rows))?;
    let last = report.rows.last();
    println!(
        "stage {} steps {}{} seconds {:.1}",
        a.stage,
        report.steps(),
        if report.stopped_early { " (early stop)" } else { "" },
        start.elapsed().as_secs_f64()
    );
    if let Some(r) = last {
        println!("last L_C {:.4} bpp {:.4} psnr {:.2}", r.compression, r.bpp, r.psnr);
    }
    println!("checkpoint {} sha256 {}", a.out.display(), digest(&bytes));
    Ok(())
}

pub fn compress(a: &CompressArgs) -> Result<()> {
    let manifest = load_manifest(&a.data)?;
    let (codec, head) = joint_parts(load_checkpoint(&a.checkpoint)?, &a.checkpoint)?;
    let samples = load_split(&a.data, &manifest, split_of(a.split))?;
    let (archive, stats) = pipeline::compress(&codec, &head, &samples)?;
    let bytes = archive.to_bytes();
    save_bytes(&a.out, &bytes)?;
    println!(
        "images {} bytes {} bpp {:.4} estimated bpp {:.4}",
        stats.images,
        bytes.len(),
        stats.bpp(),
        stats.estimated_bpp()
    );
    println!("archive {} sha256 {}", a.out.display(), digest(&bytes));
    Ok(())
}

fn load_archive(path: &Path) -> Result<Archive> {
    require_file(path, "archive")?;
    Archive::load(path).with_context(|| format!("reading archive {}", path.display()))
}

pub fn decompress(a: &DecompressArgs) -> Result<()> {
    let archive = load_archive(&a.archive)?;
    let codec = load_checkpoint(&a.checkpoint)?.codec;
    let original = match &a.data {
        Some(dir) => {
            let manifest = load_manifest(dir)?;
            let entry = manifest.entries.iter().find(|e| e.id == a.id).cloned();
            match entry {
                Some(e) => Some(RasterImage::from_tensor(&read_tensor(&dir.join(&e.path))?.1)?),
                None => None,
            }
        }
        None => None,
    };
    let entry = archive.get(a.id)?;
    let mut decoder = Decoder::new(&codec);
    let image = decoder.image(entry)?;
    let mut line = format!("id {} decodes {} size {}x{}x{}", a.id, decoder.decodes(), image.height(), image.width(), image.channels());
    if let Some(orig) = original {
        line.push_str(&format!(" psnr {:.2}", psnr(&orig, &image, 1.0)?));
    }
    println!("{line}");
    if let Some(out) = &a.out {
        if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| jcif::Error::io(dir, e))?;
        }
        write_tensor(out, &format!("image:{}", a.id), &image.to_tensor())?;
    }
    Ok(())
}

pub fn index(a: &IndexArgs) -> Result<()> {
    let archive = load_archive(&a.archive)?;
    let table = archive.index()?;
    let bytes = table.to_bytes();
    save_bytes(&a.out, &bytes)?;
    println!("images {} buckets {} bits {}", table.len(), table.bucket_count(), table.bits());
    println!("index {} sha256 {}", a.out.display(), digest(&bytes));
    Ok(())
}

fn load_index(path: &Path) -> Result<HashTable> {
    require_file(path, "index")?;
    let bytes = fs::read(path).map_err(|e| jcif::Error::io(path, e))?;
    HashTable::from_bytes(&bytes).with_context(|| format!("reading index {}", path.display()))
}

pub fn query(a: &QueryArgs) -> Result<()> {
    let table = load_index(&a.index)?;
    let (codec, head) = joint_parts(load_checkpoint(&a.checkpoint)?, &a.checkpoint)?;
    if head.config.code_bits != table.bits() {
        return Err(jcif::Error::Compatibility(format!(
            "index holds {}-bit codes but the checkpoint produces {}-bit codes",
            table.bits(),
            head.config.code_bits
        ))
        .into());
    }
    if let Some(path) = &a.archive {
        let archive = load_archive(path)?;
        if archive.code_bits() != table.bits() || archive.len() != table.len() {
            return Err(jcif::Error::Compatibility(format!(
                "index ({} images, {} bits) was not built from this archive ({} images, {} bits)",
                table.len(),
                table.bits(),
                archive.len(),
                archive.code_bits()
            ))
            .into());
        }
    }
    let image = match (&a.image, a.id) {
        (Some(path), _) => {
            require_file(path, "query image")?;
            RasterImage::from_tensor(&read_tensor(path)?.1)?
        }
        (None, Some(id)) => {
            let dir = a.data.as_deref().expect("clap requires --data with --id");
            let manifest = load_manifest(dir)?;
            let e = manifest.entries.iter().find(|e| e.id == id).ok_or_else(|| jcif::Error::NotFound(format!("image id {id} is not in the dataset")))?;
            RasterImage::from_tensor(&read_tensor(&dir.join(&e.path))?.1)?
        }
        (None, None) => return Err(usage("pass --image <file> or --id <id> --data <dir>")),
    };
    let code = pipeline::hash_images(&codec, &head, &[&image])?.remove(0);
    let res = table.query(&code, a.top_k)?;
    println!("rank,id,distance");
    for (rank, (id, d)) in res.ids.iter().zip(&res.distances).enumerate() {
        println!("{},{},{}", rank + 1, id, d);
    }
    println!("results {} decodes 0 seconds {:.6}", res.ids.len(), res.seconds);
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let manifest = load_manifest(&a.data)?;
    let (codec, head) = joint_parts(load_checkpoint(&a.checkpoint)?, &a.checkpoint)?;
    let archive = load_archive(&a.archive)?;
    if archive.code_bits() != head.config.code_bits {
        return Err(jcif::Error::Compatibility(format!(
            "archive holds {}-bit codes, checkpoint produces {}-bit codes",
            archive.code_bits(),
            head.config.code_bits
        ))
        .into());
    }
    let relevance = match a.min_cosine {
        Some(t) if !(0.0..=1.0).contains(&t) => return Err(usage(format!("--min-cosine {t} outside [0, 1]"))),
        Some(t) => Relevance::CosineAtLeast(t),
        None => Relevance::ShareLabel,
    };
    let labels: BTreeMap<u64, LabelVector> = manifest.entries.iter().map(|e| (e.id, e.labels.clone())).collect();
    let mut gallery_labels = BTreeMap::new();
    for e in archive.entries() {
        let l = labels.get(&e.id).ok_or_else(|| jcif::Error::NotFound(format!("archived id {} has no manifest entry", e.id)))?;
        gallery_labels.insert(e.id, l.clone());
    }
    let queries = load_split(&a.data, &manifest, Split::Val)?;
    let ev = pipeline::evaluate(&codec, &head, &archive, &queries, &gallery_labels, relevance, a.k)?;

    fs::create_dir_all(&a.out).map_err(|e| jcif::Error::io(&a.out, e))?;
    write_csv(&a.out.join("summary.csv"), |w| pipeline::write_summary_csv(w, &[&ev.joint, &ev.standard]))?;
    write_csv(&a.out.join("joint_queries.csv"), |w| write_metrics_csv(w, &ev.joint.queries))?;
    write_csv(&a.out.join("standard_queries.csv"), |w| write_metrics_csv(w, &ev.standard.queries))?;
    println!("{}", pipeline::SUMMARY_HEADER);
    for p in [&ev.joint, &ev.standard] {
        let r = &p.report;
        println!("{},{},{:.4},{:.4},{:.4},{},{:.3},{}", p.name, r.k, r.precision, r.recall, r.map.map, r.queries, r.total_seconds, p.decodes);
    }
    Ok(())
}

pub fn rd_curve(a: &RdCurveArgs) -> Result<()> {
    let missing: Vec<String> = a.checkpoints.iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()).collect();
    if !missing.is_empty() {
        return Err(usage(format!("missing checkpoints: {}", missing.join(", "))));
    }
    let manifest = load_manifest(&a.data)?;
    let samples = load_split(&a.data, &manifest, split_of(a.split))?;
    if samples.is_empty() {
        return Err(usage("the evaluation split is empty"));
    }
    let images: Vec<&RasterImage> = samples.iter().map(|s| &s.image).collect();
    let baseline = pipeline::baseline_curve(&images)?;
    let mut rows = Vec::new();
    for path in &a.checkpoints {
        let codec = load_checkpoint(path)?.codec;
        let p = pipeline::measure(&codec, &images)?;
        println!(
            "{} lambda {} bpp {:.4} psnr {:.2} baseline psnr {:.2}",
            path.display(),
            codec.config.lambda,
            p.bpp,
            p.psnr,
            pipeline::baseline_psnr_at(&baseline, p.bpp)
        );
        rows.push(RdRow { lambda: codec.config.lambda, bpp: p.bpp, psnr: p.psnr });
    }
    write_csv(&a.out, |w| pipeline::write_rd_csv(w, &rows))?;
    println!("monotone {}", pipeline::is_monotone(&rows));
    Ok(())
}
