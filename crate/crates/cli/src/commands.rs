use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hetagg::aggregation::build_hetero_aggregate;
use hetagg::config::Config;
use hetagg::dataset::{
    assemble_batches, batches_csv, run_sweep, split_train_eval, Manifest, Split, SweepSettings,
};
use hetagg::descriptors::{descriptor_report, DescriptorReport};
use hetagg::geometry::{read_aggregate, write_aggregate};
use hetagg::metrics::{
    baseline_mae, calibrate_thresholds, compare_descriptor_distributions, histogram, threshold_mixing_ratio,
    BaselineSample, StreamingMean,
};
use hetagg::par::Executor;
use hetagg::render::{
    decode_pgm16, encode_pgm16, encode_raw_f32, render, scale_max, ImageMetadata, IntensityModel,
};
use hetagg::rng::derive_seed;
use hetagg::{Error, ModelParams, RandomStream};

use crate::{error_record, Failure, GlobalArgs};

/// Stream indices reserved for whole-run draws; entry streams use small indices.
const SPLIT_STREAM: u64 = u64::MAX;
const BATCH_STREAM: u64 = u64::MAX - 1;

type CmdResult = Result<(), Failure>;

pub struct Context {
    global: GlobalArgs,
    cfg: Config,
    exec: Executor,
    model: IntensityModel,
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Error> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

impl Context {
    pub fn new(global: GlobalArgs, cfg: Config) -> Result<Self, Error> {
        fs::create_dir_all(&global.out).map_err(|e| Error::io(&global.out, e))?;
        let model = cfg.intensity_model()?;
        let exec = Executor::with_jobs(global.jobs);
        Ok(Self { global, cfg, exec, model })
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.global.out.join(rel)
    }

    /// Resolved configuration plus the command's own arguments as comments.
    fn snapshot(&self, command: &str) -> Result<(), Error> {
        let text = format!("# command: {command}\n{}", self.cfg.to_text());
        write_file(&self.out("config.resolved.txt"), text)
    }

    pub fn generate(&self, theta: &str, count: usize) -> CmdResult {
        let theta = ModelParams::from_str(theta)?;
        self.snapshot(&format!("generate --theta {theta} --count {count}"))?;
        let seed = self.cfg.seed;
        let results = self.exec.map_range(count, |i| {
            let mut rng = RandomStream::new(derive_seed(seed, i as u64));
            build_hetero_aggregate(&theta, &self.cfg.growth, &mut rng)
        });
        let mut csv = format!("index,seed,{}\n", DescriptorReport::csv_header());
        let mut failed = 0;
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(a) => {
                    write_file(&self.out(&format!("geometry/agg_{i:05}.txt")), write_aggregate(&a))?;
                    csv.push_str(&format!("{i},{},{}\n", derive_seed(seed, i as u64), descriptor_report(&a).csv_row()));
                }
                Err(e) => {
                    failed += 1;
                    eprintln!("{}", error_record(&e, Some(&format!("agg_{i:05}"))));
                }
            }
        }
        write_file(&self.out("descriptors.csv"), csv)?;
        if failed > 0 {
            return Err(Failure::Entries { failed, total: count });
        }
        log::info!("wrote {count} aggregates to {}", self.global.out.display());
        Ok(())
    }

    pub fn render(&self, inputs: &[PathBuf], raw: bool) -> CmdResult {
        let mut files = Vec::new();
        for input in inputs {
            if input.is_dir() {
                let mut found: Vec<PathBuf> = fs::read_dir(input)
                    .map_err(|e| Error::io(input, e))?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|x| x == "txt"))
                    .collect();
                found.sort();
                files.extend(found);
            } else {
                files.push(input.clone());
            }
        }
        self.snapshot(&format!("render{}", if raw { " --raw" } else { "" }))?;
        let seed = self.cfg.seed;
        let config_hash = self.cfg.hash();
        let results = self.exec.map(&files, |path| -> Result<(), Error> {
            let i = files.iter().position(|p| p == path).unwrap_or(0);
            let text = read_text(path)?;
            let a = read_aggregate(&text).map_err(|e| e.in_file(path))?;
            let image_seed = derive_seed(seed, i as u64);
            let img = render(&a, &self.cfg.render, &self.model, &mut RandomStream::new(image_seed))?;
            let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| format!("image_{i}"));
            let v_max = scale_max(&img);
            write_file(&self.out(&format!("{stem}.pgm")), encode_pgm16(&img, v_max))?;
            let meta = ImageMetadata {
                width: img.width,
                height: img.height,
                pixel_size_nm: img.pixel_size,
                v_max,
                seed: image_seed,
                theta: a.provenance.as_ref().map(|p| p.params.to_string()),
                config_hash: config_hash.clone(),
            };
            write_file(&self.out(&format!("{stem}.json")), meta.to_json())?;
            if raw {
                write_file(&self.out(&format!("{stem}.f32")), encode_raw_f32(&img))?;
            }
            Ok(())
        });
        let mut failed = 0;
        for (path, r) in files.iter().zip(results) {
            if let Err(e) = r {
                failed += 1;
                eprintln!("{}", error_record(&e, Some(&path.display().to_string())));
            }
        }
        if failed > 0 {
            return Err(Failure::Entries { failed, total: files.len() });
        }
        Ok(())
    }

    pub fn dataset(&self, nu: Option<usize>) -> CmdResult {
        let nu = nu.unwrap_or(self.cfg.dataset.nu);
        self.snapshot(&format!("dataset --nu {nu}"))?;
        let hash = self.cfg.hash();
        let settings = SweepSettings {
            growth: &self.cfg.growth,
            render: &self.cfg.render,
            model: &self.model,
            fov_retries: self.cfg.dataset.fov_retries,
            config_hash: &hash,
            write_raw: self.cfg.dataset.write_raw,
        };
        let seed = self.cfg.seed;
        let outcome = run_sweep(&self.cfg.sweep, &settings, seed, &self.global.out, &self.exec)?;
        let mut split_rng = RandomStream::new(derive_seed(seed, SPLIT_STREAM));
        let manifest = split_train_eval(&outcome.manifest, &self.cfg.dataset.split, &mut split_rng)?;
        manifest.write(&self.out("manifest.csv"))?;
        let mut batch_rng = RandomStream::new(derive_seed(seed, BATCH_STREAM));
        for split in [Split::Train, Split::Eval] {
            match assemble_batches(&manifest, split, nu, &mut batch_rng) {
                Ok(batches) => write_file(&self.out(&format!("batches_{split}.csv")), batches_csv(&batches))?,
                Err(e @ Error::InsufficientEntries { .. }) => log::warn!("no {split} batches: {e}"),
                Err(e) => return Err(e.into()),
            }
        }
        if !outcome.failures.is_empty() {
            log::warn!("{} entries failed, see failures.csv", outcome.failures.len());
        }
        println!(
            "entries: {} (train {}, eval {}), reused: {}, failed: {}",
            manifest.entries.len(),
            manifest.count(Split::Train),
            manifest.count(Split::Eval),
            outcome.reused,
            outcome.failures.len()
        );
        Ok(())
    }

    pub fn metrics(&self, manifest: Option<&Path>, pairs: Option<&Path>, count: Option<usize>) -> CmdResult {
        let pairs = match (manifest, pairs) {
            (Some(m), _) => Manifest::read(m)?.by_config(None).into_iter().map(|(t, _)| (t, t)).collect(),
            (None, Some(p)) => read_pairs(p)?,
            (None, None) => return Err(Error::Config("metrics needs --manifest or --pairs".into()).into()),
        };
        let samples = count.unwrap_or(self.cfg.metrics.per_config_samples);
        self.snapshot(&format!("metrics --count {samples}"))?;
        let report = compare_descriptor_distributions(&pairs, samples, &self.cfg.growth, self.cfg.seed, &self.exec)?;
        write_file(&self.out("comparison_summary.csv"), report.summary_csv())?;
        write_file(&self.out("comparison_pairs.csv"), report.pairs_csv())?;
        write_file(&self.out("comparison_samples.csv"), report.samples_csv())?;
        write_file(&self.out("comparison_histograms.csv"), report.histogram_csv(self.cfg.metrics.histogram_bins))?;
        print!("{}", report.summary_csv());
        Ok(())
    }

    pub fn baseline(&self, manifest_path: &Path, nu: Option<usize>) -> CmdResult {
        let nu = nu.unwrap_or(self.cfg.dataset.nu);
        self.snapshot(&format!("baseline --nu {nu}"))?;
        let manifest = Manifest::read(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let load = |split: Split| -> Result<Vec<(u64, BaselineSample)>, Error> {
            let entries: Vec<_> = manifest.entries.iter().filter(|e| e.split == Some(split)).collect();
            self.exec
                .map(&entries, |e| {
                    let image = load_image(&base.join(&e.image_path))?;
                    Ok((e.id, BaselineSample { image, rho: e.descriptors.mixing_ratio }))
                })
                .into_iter()
                .collect()
        };
        let train = load(Split::Train)?;
        let eval = load(Split::Eval)?;
        if train.is_empty() {
            return Err(Error::InvalidParams("manifest has no training entries".into()).into());
        }
        let area = self.cfg.growth.radius.mean_projected_area();
        let areas = [area, area];
        let train_samples: Vec<BaselineSample> = train.into_iter().map(|(_, s)| s).collect();
        let cal = calibrate_thresholds(&train_samples, self.cfg.metrics.grid_resolution, areas, &self.exec)?;
        let eval_samples: Vec<BaselineSample> = eval.iter().map(|(_, s)| s.clone()).collect();
        let eval_mae = (!eval_samples.is_empty()).then(|| baseline_mae(&eval_samples, cal.t_bg, cal.t_mat, areas));

        let by_id: BTreeMap<u64, &BaselineSample> = eval.iter().map(|(id, s)| (*id, s)).collect();
        let mut batch_rng = RandomStream::new(derive_seed(self.cfg.seed, BATCH_STREAM));
        let batch_mae = match assemble_batches(&manifest, Split::Eval, nu, &mut batch_rng) {
            Ok(batches) if !batches.is_empty() => {
                let errors: StreamingMean = batches
                    .iter()
                    .map(|b| {
                        let (est, truth): (StreamingMean, StreamingMean) = (
                            b.members
                                .iter()
                                .map(|id| threshold_mixing_ratio(&by_id[id].image, cal.t_bg, cal.t_mat, areas[0], areas[1]))
                                .collect(),
                            b.members.iter().map(|id| by_id[id].rho).collect(),
                        );
                        (est.mean() - truth.mean()).abs()
                    })
                    .collect();
                Some(errors.mean())
            }
            Ok(_) => None,
            Err(e) => {
                log::warn!("no eval batches: {e}");
                None
            }
        };
        let report = serde_json::json!({
            "t_bg": cal.t_bg,
            "t_mat": cal.t_mat,
            "candidates": cal.candidates,
            "grid_resolution": self.cfg.metrics.grid_resolution,
            "train_mae": cal.mae,
            "eval_mae": eval_mae,
            "eval_batch_mae": batch_mae,
            "nu": nu,
            "mean_projected_area_nm2": area,
        });
        let text = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(&self.out("baseline.json"), &text)?;
        println!("{text}");
        Ok(())
    }

    pub fn plotdata(&self, samples: &Path) -> CmdResult {
        self.snapshot("plotdata")?;
        let text = read_text(samples)?;
        // descriptor -> (pair, side) -> values
        let mut groups: BTreeMap<String, BTreeMap<(usize, String), Vec<f64>>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::parse(i + 1, format!("expected pair,side,descriptor,value, got {line:?}")).in_file(samples);
            if f.len() != 4 {
                return Err(bad().into());
            }
            let pair: usize = f[0].parse().map_err(|_| bad())?;
            let value: f64 = f[3].parse().map_err(|_| bad())?;
            groups.entry(f[2].to_string()).or_default().entry((pair, f[1].to_string())).or_default().push(value);
        }
        let bins = self.cfg.metrics.histogram_bins;
        for (descriptor, sets) in &groups {
            let mut hist = String::from("pair,side,bin_lo,bin_hi,count\n");
            let mut density = String::from("pair,side,x,density\n");
            for ((pair, side), values) in sets {
                let pooled = sets.iter().filter(|((p, _), _)| p == pair).flat_map(|(_, v)| v.iter().copied());
                let lo = pooled.clone().fold(f64::INFINITY, f64::min);
                let hi = pooled.fold(f64::NEG_INFINITY, f64::max);
                let width = (hi - lo) / bins as f64;
                for (k, c) in histogram(values, lo, hi, bins).into_iter().enumerate() {
                    let b = if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width };
                    hist.push_str(&format!("{pair},{side},{},{b},{c}\n", lo + k as f64 * width));
                }
                for (x, d) in kde(values, 100) {
                    density.push_str(&format!("{pair},{side},{x},{d}\n"));
                }
            }
            write_file(&self.out(&format!("hist_{descriptor}.csv")), hist)?;
            write_file(&self.out(&format!("density_{descriptor}.csv")), density)?;
        }
        Ok(())
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(ModelParams, ModelParams)>, Error> {
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(Error::parse(i + 1, "expected `df,rho,c0,c1 df,rho,c0,c1`").in_file(path));
        }
        let parse = |s: &str| ModelParams::from_str(s).map_err(|e| Error::parse(i + 1, e.to_string()).in_file(path));
        pairs.push((parse(parts[0])?, parse(parts[1])?));
    }
    Ok(pairs)
}

/// Decodes a PGM written by this tool using the `v_max` from its sidecar.
fn load_image(pgm: &Path) -> Result<hetagg::render::ImageGrid, Error> {
    let sidecar = pgm.with_extension("json");
    let meta = ImageMetadata::from_json(&read_text(&sidecar)?).map_err(|e| e.in_file(&sidecar))?;
    let bytes = fs::read(pgm).map_err(|e| Error::io(pgm, e))?;
    let mut img = decode_pgm16(&bytes, meta.v_max).map_err(|e| e.in_file(pgm))?;
    img.pixel_size = meta.pixel_size_nm;
    Ok(img)
}

/// Gaussian kernel density estimate with Silverman's bandwidth on `points`
/// evenly spaced abscissae. Empty for fewer than two distinct values.
fn kde(values: &[f64], points: usize) -> Vec<(f64, f64)> {
    let stats: StreamingMean = values.iter().copied().collect();
    let sd = stats.variance().sqrt();
    if sd.is_nan() || sd <= 0.0 {
        return Vec::new();
    }
    let n = values.len() as f64;
    let h = 1.06 * sd * n.powf(-0.2);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let norm = 1.0 / (n * h * (2.0 * std::f64::consts::PI).sqrt());
    (0..points)
        .map(|k| {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let d: f64 = values.iter().map(|v| (-0.5 * ((x - v) / h).powi(2)).exp()).sum();
            (x, d * norm)
        })
        .collect()
}
