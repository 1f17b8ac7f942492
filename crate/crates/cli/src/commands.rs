use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use hat_core::attribution::{detectors, lam, write_heatmap, write_metrics, write_raw_map, LamConfig, Patch};
use hat_core::checkpoint::Checkpoint;
use hat_core::data::{degradations, psnr_y, ssim_y, ImageBuffer, Pair, PairManifest, Record};
use hat_core::model::{complexity, restorers, HatModel, Restorer, PRESETS};
use hat_core::registry::Options;
use hat_core::training::{Phase, RunOutputs, Schedule, TrainConfig, Trainer};
use hat_core::{Error, Result};
use hat_tensor::Element;

use crate::args::*;
use crate::source::load_checkpoint;

pub fn run<T: Element>(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Train(a) => train::<T>(a),
        Command::Sr(a) => sr::<T>(a),
        Command::Lam(a) => attribution::<T>(a),
        Command::Complexity(a) => profile(a),
        Command::Degrade(a) => degrade(a),
        Command::DumpFeatures(a) => dump_features::<T>(a),
        Command::List => list::<T>(),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// PNG files directly inside `dir`, sorted by name.
fn png_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let png = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if png && path.is_file() {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::data(format!("no PNG files in {}", dir.display())));
    }
    Ok(out)
}

fn load_pairs(path: &Path) -> Result<Vec<Pair>> {
    PairManifest::load(path)?.load_pairs()
}

fn train<T: Element>(a: &TrainArgs) -> Result<()> {
    let pairs = load_pairs(&a.manifest)?;
    let validation = match &a.val_manifest {
        Some(p) => load_pairs(p)?,
        None => Vec::new(),
    };
    let mut trainer = if let Some(path) = &a.resume {
        let fixed = a.init.is_some()
            || a.config.given()
            || a.phase.is_some()
            || a.steps.is_some()
            || a.seed.is_some()
            || a.batch.is_some()
            || a.patch.is_some()
            || a.lr.is_some()
            || a.val_every.is_some()
            || a.checkpoint_every.is_some()
            || a.no_augment;
        if fixed {
            return Err(Error::config(
                "--resume continues the saved run; only --manifest, --val-manifest and --out apply",
            ));
        }
        Trainer::resume(&load_checkpoint::<T>(path)?)?
    } else {
        let phase: Phase = a.phase.as_deref().unwrap_or("scratch").parse()?;
        let mut schedule = Schedule::reference(phase).rescaled(a.steps.unwrap_or(1000));
        if let Some(lr) = a.lr {
            schedule = schedule.with_initial_lr(lr);
        }
        let seed = a.seed.unwrap_or(0);
        let config = TrainConfig {
            phase,
            schedule,
            batch: a.batch.unwrap_or(4),
            patch: a.patch.unwrap_or(64),
            augment: !a.no_augment,
            seed,
            val_every: a.val_every.unwrap_or(0),
            checkpoint_every: a.checkpoint_every.unwrap_or(0),
        };
        match (phase, &a.init) {
            (Phase::Finetune, None) => return Err(Error::config("--phase finetune requires --init CHECKPOINT")),
            (_, Some(init)) => {
                if a.config.given() {
                    return Err(Error::config("--init carries its own configuration; drop --preset/--config/--set"));
                }
                Trainer::finetune(&load_checkpoint::<T>(init)?, config)?
            }
            (_, None) => Trainer::new(HatModel::new(a.config.resolve()?, seed)?, config)?,
        }
    };
    for pair in &pairs {
        if pair.scale != trainer.model.config().scale {
            return Err(Error::data(format!(
                "manifest pair scale {} differs from model scale {}",
                pair.scale,
                trainer.model.config().scale
            )));
        }
    }
    create_dir(&a.out)?;
    let log_path = a.out.join("train.log");
    let file = OpenOptions::new().create(true).append(true).open(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut tee = Tee { file, path: log_path };
    let until = trainer.config.schedule.total_steps;
    let mut out = RunOutputs { log: Some(&mut tee), checkpoint: Some(a.out.join("last.ck")), validation: &validation };
    trainer.run(&pairs, until, &mut out)?;
    Ok(())
}

/// Writes log lines to stdout and to the run log.
struct Tee {
    file: fs::File,
    path: PathBuf,
}

impl Write for Tee {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        io::stdout().write_all(buf)?;
        self.file.write_all(buf)?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        io::stdout().flush()?;
        self.file.flush().map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", self.path.display())))
    }
}

fn restore_image<T: Element>(model: &HatModel<T>, img: &ImageBuffer) -> Result<ImageBuffer> {
    let want = model.config().in_channels;
    if img.channels() != want {
        return Err(Error::data(format!("image has {} channels, model expects {want}", img.channels())));
    }
    let out = model.infer(&img.to_tensor::<T>())?;
    if !out.all_finite() {
        return Err(Error::Numeric("model produced non-finite output".into()));
    }
    Ok(ImageBuffer::from_tensor(&out, 0)?.quantized())
}

fn sr<T: Element>(a: &SrArgs) -> Result<()> {
    let model = a.model.load::<T>()?;
    let crop = model.config().scale;
    let jobs: Vec<(PathBuf, PathBuf, Option<PathBuf>)> = if a.input.is_dir() {
        create_dir(&a.output)?;
        png_files(&a.input)?
            .into_iter()
            .map(|p| {
                let name = p.file_name().expect("file name").to_owned();
                let gt = a.gt.as_ref().map(|g| g.join(&name));
                (p, a.output.join(&name), gt)
            })
            .collect()
    } else {
        if let Some(parent) = a.output.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        vec![(a.input.clone(), a.output.clone(), a.gt.clone())]
    };
    let (mut psnr_sum, mut ssim_sum, mut scored) = (0.0, 0.0, 0usize);
    for (input, output, gt) in &jobs {
        let sr = restore_image(&model, &ImageBuffer::read_png(input)?)?;
        sr.write_png(output)?;
        if let Some(gt) = gt {
            let gt = ImageBuffer::read_png(gt)?;
            let (p, s) = (psnr_y(&sr, &gt, crop)?, ssim_y(&sr, &gt, crop)?);
            println!("image={} psnr_y={p:.4} ssim_y={s:.6}", input.display());
            psnr_sum += p;
            ssim_sum += s;
            scored += 1;
        }
    }
    if scored > 1 {
        let n = scored as f64;
        println!("mean psnr_y={:.4} ssim_y={:.6} images={scored}", psnr_sum / n, ssim_sum / n);
    }
    Ok(())
}

fn attribution<T: Element>(a: &LamArgs) -> Result<()> {
    let detector = detectors::<T>().build(&a.detector, &Options::new())?;
    let model: Box<dyn Restorer<T>> = if a.restorer == "hat" {
        Box::new(a.model.load::<T>()?)
    } else {
        if a.model.checkpoint.is_some() || a.model.config.given() {
            return Err(Error::config(format!("restorer `{}` takes no checkpoint or model configuration", a.restorer)));
        }
        restorers::<T>().build(&a.restorer, &Options::new().with("seed", a.model.seed))?
    };
    let cfg = LamConfig { sigma: a.sigma, steps: a.steps, patch: Patch { x: a.x, y: a.y, l: a.l } };
    let img = ImageBuffer::read_png(&a.input)?;
    let result = lam(model.as_ref(), detector.as_ref(), &img.to_tensor::<T>(), &cfg)?;
    create_dir(&a.out)?;
    write_heatmap(&a.out.join("heatmap.png"), &result)?;
    write_raw_map(&a.out.join("map.bin"), &result)?;
    write_metrics(&a.out.join("lam.txt"), &result, &cfg, detector.name())?;
    println!(
        "gini={} di={} completeness_residual={} target_delta={} zero_map={}",
        result.gini, result.di, result.completeness_residual, result.target_delta, result.all_zero
    );
    Ok(())
}

fn parse_hw(raw: &str) -> Result<(usize, usize)> {
    let bad = || Error::config(format!("--hw `{raw}` is not HxW"));
    let (h, w) = raw.split_once(['x', 'X']).ok_or_else(bad)?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    if h == 0 || w == 0 {
        return Err(bad());
    }
    Ok((h, w))
}

fn profile(a: &ComplexityArgs) -> Result<()> {
    let (h, w) = parse_hw(&a.hw)?;
    let start = Instant::now();
    let r = complexity(&a.config.resolve()?, h, w)?;
    println!(
        "params={} params_m={:.3} multi_adds={} multi_adds_g={:.3} hw={}x{} seconds={:.4}",
        r.param_count,
        r.param_count as f64 / 1e6,
        r.multi_adds,
        r.multi_adds as f64 / 1e9,
        r.height,
        r.width,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn degrade(a: &DegradeArgs) -> Result<()> {
    let options = Options::new().with("scale", a.scale).with("sigma", a.sigma);
    let deg = degradations().build(&a.kind, &options)?;
    let (lq_dir, hq_dir) = (a.output.join("lq"), a.output.join("hq"));
    create_dir(&lq_dir)?;
    create_dir(&hq_dir)?;
    let mut manifest = PairManifest { degradation: deg.describe(), records: Vec::new() };
    for (i, path) in png_files(&a.input)?.iter().enumerate() {
        let (lq, hq) = deg.apply(&ImageBuffer::read_png(path)?, a.seed.wrapping_add(i as u64))?;
        let name = path.file_name().expect("file name");
        let record = Record { lq: lq_dir.join(name), hq: hq_dir.join(name), scale: deg.scale() };
        lq.write_png(&record.lq)?;
        hq.write_png(&record.hq)?;
        manifest.records.push(record);
    }
    let path = a.output.join("pairs.txt");
    manifest.save(&path)?;
    println!("pairs={} manifest={}", manifest.records.len(), path.display());
    Ok(())
}

fn dump_features<T: Element>(a: &FeatureArgs) -> Result<()> {
    let model = a.model.load::<T>()?;
    let img = ImageBuffer::read_png(&a.input)?;
    let mut ck = Checkpoint::<T>::new();
    ck.meta.insert("kind".into(), "features".into());
    ck.meta.insert("input".into(), a.input.display().to_string());
    for (name, t) in model.features(&img.to_tensor::<T>())? {
        println!("{name} {:?}", t.shape());
        ck.tensors.insert(name, t);
    }
    ck.save(&a.output)
}

fn list<T: Element>() -> Result<()> {
    println!("presets:");
    for (name, about) in PRESETS {
        println!("  {name:<14} {about}");
    }
    let sections: [(&str, Vec<(&str, &str)>); 3] = [
        ("degradations", degradations().describe().collect()),
        ("detectors", detectors::<T>().describe().collect()),
        ("restorers", restorers::<T>().describe().collect()),
    ];
    for (title, entries) in sections {
        println!("{title}:");
        for (name, about) in entries {
            println!("  {name:<14} {about}");
        }
    }
    Ok(())
}
