use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Manifest, ManifestEntry, SweepSpec};
use crate::aggregation::{build_hetero_aggregate, GrowthConfig};
use crate::descriptors::{descriptor_report, DescriptorReport};
use crate::error::{Error, Result};
use crate::geometry::{write_aggregate, Aggregate, ModelParams};
use crate::par::Executor;
use crate::render::{encode_pgm16, encode_raw_f32, render, scale_max, ImageGrid, ImageMetadata, IntensityModel, RenderConfig};
use crate::rng::{derive_seed, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryPlan {
    pub id: u64,
    pub theta: ModelParams,
    /// Derived from the master seed and `id`.
    pub seed: u64,
}

/// Entries in id order: configurations in sweep order, `per_config` entries each.
pub fn plan_sweep(spec: &SweepSpec, master_seed: u64) -> Result<Vec<EntryPlan>> {
    let per = spec.per_config();
    let mut plans = Vec::new();
    for theta in spec.configs(master_seed)? {
        for _ in 0..per {
            let id = plans.len() as u64;
            plans.push(EntryPlan { id, theta, seed: derive_seed(master_seed, id) });
        }
    }
    Ok(plans)
}

#[derive(Debug, Clone)]
pub struct SweepSettings<'a> {
    pub growth: &'a GrowthConfig,
    pub render: &'a RenderConfig,
    pub model: &'a IntensityModel,
    /// Fresh aggregates drawn when one does not fit the field of view.
    pub fov_retries: usize,
    pub config_hash: &'a str,
    pub write_raw: bool,
}

#[derive(Debug, Clone)]
pub struct EntryArtifacts {
    pub plan: EntryPlan,
    /// Index of the draw that fit the field of view.
    pub attempt: usize,
    pub aggregate: Aggregate,
    pub image: ImageGrid,
    pub render_seed: u64,
    pub descriptors: DescriptorReport,
}

/// Generates, renders and describes one entry. Draw `k` uses the seed
/// `derive_seed(plan.seed, k)` for the geometry and its child 0 for the image.
pub fn build_entry(plan: &EntryPlan, settings: &SweepSettings) -> Result<EntryArtifacts> {
    let mut last = None;
    for attempt in 0..=settings.fov_retries {
        let mut rng = RandomStream::new(derive_seed(plan.seed, attempt as u64));
        let aggregate = build_hetero_aggregate(&plan.theta, settings.growth, &mut rng)?;
        let mut image_rng = rng.child(0);
        match render(&aggregate, settings.render, settings.model, &mut image_rng) {
            Ok(image) => {
                let descriptors = descriptor_report(&aggregate);
                return Ok(EntryArtifacts {
                    plan: *plan,
                    attempt,
                    aggregate,
                    image,
                    render_seed: image_rng.seed(),
                    descriptors,
                });
            }
            Err(e @ Error::FieldOfViewOverflow { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

/// Per-entry sidecar written after all of the entry's files, so its presence
/// marks the entry as complete.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryRecord {
    pub id: u64,
    pub theta: String,
    pub seed: u64,
    pub attempt: usize,
    pub geometry_path: String,
    pub image_path: String,
    pub v_max: f64,
    pub descriptors: DescriptorReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FailureRecord {
    pub id: u64,
    pub theta: ModelParams,
    pub seed: u64,
    pub kind: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    /// Successful entries in id order, without split tags.
    pub manifest: Manifest,
    pub failures: Vec<FailureRecord>,
    /// Entries found complete on disk and not regenerated.
    pub reused: usize,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}-{n}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Stores `bytes` under `dir/<h0h1>/<sha256>.<ext>` and returns that relative path.
fn store(out: &Path, dir: &str, ext: &str, bytes: &[u8]) -> Result<String> {
    let hash = hex::encode(Sha256::digest(bytes));
    let rel = format!("{dir}/{}/{hash}.{ext}", &hash[..2]);
    let path = out.join(&rel);
    if !path.exists() {
        write_atomic(&path, bytes)?;
    }
    Ok(rel)
}

fn record_path(out: &Path, id: u64) -> std::path::PathBuf {
    out.join("entries").join(format!("{id:08}.json"))
}

fn load_complete(out: &Path, plan: &EntryPlan) -> Option<EntryRecord> {
    let text = fs::read_to_string(record_path(out, plan.id)).ok()?;
    let rec: EntryRecord = serde_json::from_str(&text).ok()?;
    let matches = rec.id == plan.id && rec.seed == plan.seed && rec.theta == plan.theta.to_string();
    (matches && out.join(&rec.geometry_path).is_file() && out.join(&rec.image_path).is_file()).then_some(rec)
}

fn write_entry(out: &Path, art: &EntryArtifacts, settings: &SweepSettings) -> Result<EntryRecord> {
    let geometry_path = store(out, "geometry", "txt", write_aggregate(&art.aggregate).as_bytes())?;
    let v_max = scale_max(&art.image);
    let image_path = store(out, "images", "pgm", &encode_pgm16(&art.image, v_max))?;
    let meta = ImageMetadata {
        width: art.image.width,
        height: art.image.height,
        pixel_size_nm: art.image.pixel_size,
        v_max,
        seed: art.render_seed,
        theta: Some(art.plan.theta.to_string()),
        config_hash: settings.config_hash.to_string(),
    };
    let stem = image_path.trim_end_matches(".pgm");
    write_atomic(&out.join(format!("{stem}.json")), meta.to_json().as_bytes())?;
    if settings.write_raw {
        write_atomic(&out.join(format!("{stem}.f32")), &encode_raw_f32(&art.image))?;
    }
    let rec = EntryRecord {
        id: art.plan.id,
        theta: art.plan.theta.to_string(),
        seed: art.plan.seed,
        attempt: art.attempt,
        geometry_path,
        image_path,
        v_max,
        descriptors: art.descriptors.clone(),
    };
    let json = serde_json::to_string_pretty(&rec).expect("entry record serializes");
    write_atomic(&record_path(out, rec.id), json.as_bytes())?;
    Ok(rec)
}

fn csv_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn failures_csv(failures: &[FailureRecord]) -> String {
    let mut out = String::from("id,theta_df,theta_rho,theta_0,theta_1,seed,error,message\n");
    for f in failures {
        let t = &f.theta;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            f.id,
            t.theta_df,
            t.theta_rho,
            t.theta_0,
            t.theta_1,
            f.seed,
            f.kind,
            csv_quote(&f.message)
        ));
    }
    out
}

enum Outcome {
    Done(EntryRecord, bool),
    Failed(FailureRecord),
}

/// Runs every entry of the sweep into `out`, reusing entries already
/// completed there. Generation and rendering failures go to `failures.csv`;
/// I/O errors abort.
pub fn run_sweep(
    spec: &SweepSpec,
    settings: &SweepSettings,
    master_seed: u64,
    out: &Path,
    exec: &Executor,
) -> Result<SweepOutcome> {
    settings.growth.validate()?;
    settings.render.validate()?;
    let plans = plan_sweep(spec, master_seed)?;
    fs::create_dir_all(out.join("entries")).map_err(|e| Error::io(out, e))?;

    let results = exec.map(&plans, |plan| -> Result<Outcome> {
        if let Some(rec) = load_complete(out, plan) {
            return Ok(Outcome::Done(rec, true));
        }
        match build_entry(plan, settings) {
            Ok(art) => Ok(Outcome::Done(write_entry(out, &art, settings)?, false)),
            Err(e @ Error::Io { .. }) => Err(e),
            Err(e) => Ok(Outcome::Failed(FailureRecord {
                id: plan.id,
                theta: plan.theta,
                seed: plan.seed,
                kind: e.kind(),
                message: e.to_string(),
            })),
        }
    });

    let mut outcome = SweepOutcome::default();
    for (plan, result) in plans.iter().zip(results) {
        match result? {
            Outcome::Done(rec, reused) => {
                outcome.reused += reused as usize;
                outcome.manifest.entries.push(ManifestEntry {
                    id: rec.id,
                    theta: plan.theta,
                    seed: rec.seed,
                    geometry_path: rec.geometry_path,
                    image_path: rec.image_path,
                    split: None,
                    descriptors: rec.descriptors,
                });
            }
            Outcome::Failed(f) => {
                log::warn!("entry {} ({}) failed: {}", f.id, f.theta, f.message);
                outcome.failures.push(f);
            }
        }
    }
    write_atomic(&out.join("failures.csv"), failures_csv(&outcome.failures).as_bytes())?;
    log::info!(
        "sweep finished: {} entries, {} reused, {} failed",
        outcome.manifest.entries.len(),
        outcome.reused,
        outcome.failures.len()
    );
    Ok(outcome)
}
