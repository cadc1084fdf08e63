//! Parameter sweeps, manifests, train/eval splits, batches and image
//! preprocessing.

mod images;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::descriptors::{DescriptorReport, DESCRIPTOR_COLUMNS};
use crate::error::{Error, Result};
use crate::geometry::ModelParams;
use crate::rng::derive_seed;

pub use images::{augment, invert_nonbackground, preprocess, preprocess_or_zero, AugmentParams};
pub use sweep::{
    build_entry, plan_sweep, run_sweep, EntryArtifacts, EntryPlan, EntryRecord, FailureRecord, SweepOutcome,
    SweepSettings,
};

/// Seed domain for the per-triple choice of fractal dimensions.
const DF_CHOICE_DOMAIN: u64 = 0x6466_5f63_686f_6963;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub df_values: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub c0_values: Vec<u32>,
    pub c1_values: Vec<u32>,
    pub aggregates_per_triple: usize,
    pub df_choices_per_triple: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            df_values: (15..=25).map(|k| k as f64 / 10.0).collect(),
            rho_values: (1..=9).map(|k| k as f64 / 10.0).collect(),
            c0_values: (1..=6).collect(),
            c1_values: (1..=6).collect(),
            aggregates_per_triple: 100,
            df_choices_per_triple: 2,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.df_values.is_empty()
            || self.rho_values.is_empty()
            || self.c0_values.is_empty()
            || self.c1_values.is_empty()
        {
            return Err(Error::Config("every sweep axis needs at least one value".into()));
        }
        if self.df_choices_per_triple == 0 || self.df_choices_per_triple > self.df_values.len() {
            return Err(Error::Config(format!(
                "df_choices_per_triple must be in 1..={}, got {}",
                self.df_values.len(),
                self.df_choices_per_triple
            )));
        }
        if self.aggregates_per_triple == 0 || !self.aggregates_per_triple.is_multiple_of(self.df_choices_per_triple) {
            return Err(Error::Config(format!(
                "aggregates_per_triple ({}) must be a positive multiple of df_choices_per_triple ({})",
                self.aggregates_per_triple, self.df_choices_per_triple
            )));
        }
        for &df in &self.df_values {
            for &rho in &self.rho_values {
                ModelParams::new(df, rho, self.c0_values[0], self.c1_values[0])?;
            }
        }
        for &c0 in &self.c0_values {
            for &c1 in &self.c1_values {
                ModelParams::new(self.df_values[0], self.rho_values[0], c0, c1)?;
            }
        }
        Ok(())
    }

    /// `(θ_ρ, θ_0, θ_1)` triples in sweep order.
    pub fn triples(&self) -> Vec<(f64, u32, u32)> {
        let mut out = Vec::new();
        for &rho in &self.rho_values {
            for &c0 in &self.c0_values {
                for &c1 in &self.c1_values {
                    out.push((rho, c0, c1));
                }
            }
        }
        out
    }

    pub fn per_config(&self) -> usize {
        self.aggregates_per_triple / self.df_choices_per_triple
    }

    /// Full parameter vectors of the sweep: for each triple, the fractal
    /// dimensions are drawn without replacement from `df_values` using a
    /// stream derived from the master seed and the triple index.
    pub fn configs(&self, master_seed: u64) -> Result<Vec<ModelParams>> {
        self.validate()?;
        let mut out = Vec::new();
        for (t, (rho, c0, c1)) in self.triples().into_iter().enumerate() {
            let mut rng = crate::RandomStream::new(derive_seed(master_seed ^ DF_CHOICE_DOMAIN, t as u64));
            let mut picks =
                rand::seq::index::sample(&mut rng, self.df_values.len(), self.df_choices_per_triple).into_vec();
            picks.sort_unstable();
            for i in picks {
                out.push(ModelParams::new(self.df_values[i], rho, c0, c1)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Eval,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Eval => "eval",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "eval" => Ok(Split::Eval),
            _ => Err(Error::parse(0, format!("unknown split {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub id: u64,
    pub theta: ModelParams,
    pub seed: u64,
    /// Relative to the manifest's directory, `/`-separated.
    pub geometry_path: String,
    pub image_path: String,
    pub split: Option<Split>,
    pub descriptors: DescriptorReport,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

const MANIFEST_HEAD: [&str; 10] = [
    "id",
    "theta_df",
    "theta_rho",
    "theta_0",
    "theta_1",
    "seed",
    "n_particles",
    "geometry_path",
    "image_path",
    "split",
];

impl Manifest {
    pub fn csv_header() -> String {
        MANIFEST_HEAD.iter().chain(&DESCRIPTOR_COLUMNS[1..]).copied().collect::<Vec<_>>().join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for e in &self.entries {
            let d = e.descriptors.csv_fields();
            let head = [
                e.id.to_string(),
                e.theta.theta_df.to_string(),
                e.theta.theta_rho.to_string(),
                e.theta.theta_0.to_string(),
                e.theta.theta_1.to_string(),
                e.seed.to_string(),
                d[0].clone(),
                e.geometry_path.clone(),
                e.image_path.clone(),
                e.split.map(|s| s.to_string()).unwrap_or_default(),
            ];
            out.push_str(&head.iter().chain(&d[1..]).cloned().collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == Self::csv_header() => {}
            _ => return Err(Error::parse(1, "manifest header does not match")),
        }
        let mut entries = Vec::new();
        for (i, line) in lines {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != MANIFEST_HEAD.len() + DESCRIPTOR_COLUMNS.len() - 1 {
                return Err(Error::parse(lineno, format!("expected {} fields, got {}", Self::csv_header().split(',').count(), f.len())));
            }
            let bad = |what: &str| Error::parse(lineno, format!("bad {what}"));
            let theta = ModelParams::new(
                f[1].parse().map_err(|_| bad("theta_df"))?,
                f[2].parse().map_err(|_| bad("theta_rho"))?,
                f[3].parse().map_err(|_| bad("theta_0"))?,
                f[4].parse().map_err(|_| bad("theta_1"))?,
            )
            .map_err(|e| Error::parse(lineno, e.to_string()))?;
            let mut desc = vec![f[6]];
            desc.extend_from_slice(&f[10..]);
            entries.push(ManifestEntry {
                id: f[0].parse().map_err(|_| bad("id"))?,
                theta,
                seed: f[5].parse().map_err(|_| bad("seed"))?,
                geometry_path: f[7].to_string(),
                image_path: f[8].to_string(),
                split: if f[9].is_empty() { None } else { Some(f[9].parse().map_err(|_| bad("split"))?) },
                descriptors: DescriptorReport::from_csv_fields(&desc)
                    .map_err(|e| Error::parse(lineno, e.to_string()))?,
            });
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text).map_err(|e| e.in_file(path))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        sweep::write_atomic(path, self.to_csv().as_bytes())
    }

    /// Entry indices grouped by configuration, in order of first appearance.
    pub fn by_config(&self, split: Option<Split>) -> Vec<(ModelParams, Vec<usize>)> {
        let mut order = Vec::new();
        let mut groups: BTreeMap<_, Vec<usize>> = BTreeMap::new();
        for (i, e) in self.entries.iter().enumerate() {
            if split.is_some() && e.split != split {
                continue;
            }
            let key = e.theta.key();
            if !groups.contains_key(&key) {
                order.push(e.theta);
            }
            groups.entry(key).or_default().push(i);
        }
        order.into_iter().map(|t| (t, groups.remove(&t.key()).unwrap_or_default())).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.entries.iter().filter(|e| e.split == Some(split)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitPolicy {
    /// Fail on the first configuration that cannot be split.
    Strict,
    /// Drop such configurations with a warning.
    #[default]
    Exclude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitOptions {
    pub fraction: f64,
    pub min_per_config: usize,
    pub policy: SplitPolicy,
}

impl Default for SplitOptions {
    fn default() -> Self {
        Self { fraction: 0.6, min_per_config: 20, policy: SplitPolicy::Exclude }
    }
}

/// Stratified split: within each configuration the entries are shuffled and
/// the first `round(fraction · n)` become training entries.
pub fn split_train_eval<R: Rng + ?Sized>(m: &Manifest, opts: &SplitOptions, rng: &mut R) -> Result<Manifest> {
    if !(opts.fraction > 0.0 && opts.fraction < 1.0) {
        return Err(Error::Config(format!("split fraction must be in (0, 1), got {}", opts.fraction)));
    }
    let mut out = Manifest::default();
    for (theta, mut members) in m.by_config(None) {
        members.shuffle(rng);
        let n = members.len();
        let n_train = (opts.fraction * n as f64).round() as usize;
        let n_eval = n - n_train;
        if n_train < opts.min_per_config || n_eval < opts.min_per_config {
            let err =
                Error::SplitInfeasible { config: theta.to_string(), train: n_train, eval: n_eval, min: opts.min_per_config };
            match opts.policy {
                SplitPolicy::Strict => return Err(err),
                SplitPolicy::Exclude => {
                    log::warn!("{err}; configuration excluded");
                    continue;
                }
            }
        }
        for (k, &i) in members.iter().enumerate() {
            let mut e = m.entries[i].clone();
            e.split = Some(if k < n_train { Split::Train } else { Split::Eval });
            out.entries.push(e);
        }
    }
    out.entries.sort_by_key(|e| e.id);
    Ok(out)
}

/// ν entries sharing one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub theta: ModelParams,
    /// Entry ids.
    pub members: Vec<u64>,
}

/// Splits each configuration of `split` into full batches of `nu` entries
/// drawn without replacement; leftovers are unused.
pub fn assemble_batches<R: Rng + ?Sized>(m: &Manifest, split: Split, nu: usize, rng: &mut R) -> Result<Vec<Batch>> {
    if nu == 0 {
        return Err(Error::Config("batch size must be >= 1".into()));
    }
    let mut batches = Vec::new();
    for (theta, mut members) in m.by_config(Some(split)) {
        if members.len() < nu {
            return Err(Error::InsufficientEntries { config: theta.to_string(), available: members.len(), needed: nu });
        }
        members.shuffle(rng);
        for chunk in members.chunks_exact(nu) {
            batches.push(Batch { theta, members: chunk.iter().map(|&i| m.entries[i].id).collect() });
        }
    }
    Ok(batches)
}

pub fn batches_csv(batches: &[Batch]) -> String {
    let mut out = String::from("batch,theta_df,theta_rho,theta_0,theta_1,members\n");
    for (b, batch) in batches.iter().enumerate() {
        let ids: Vec<String> = batch.members.iter().map(u64::to_string).collect();
        let t = &batch.theta;
        out.push_str(&format!("{b},{},{},{},{},{}\n", t.theta_df, t.theta_rho, t.theta_0, t.theta_1, ids.join(";")));
    }
    out
}
