//! Error measures, the descriptor-distribution comparison and the
//! threshold baseline for mixing-ratio estimation.

use crate::aggregation::{build_hetero_aggregate, GrowthConfig};
use crate::descriptors::{average_cluster_size, hetero_coordination, total_coordination};
use crate::error::{Error, Result};
use crate::geometry::{Label, ModelParams};
use crate::par::Executor;
use crate::render::ImageGrid;
use crate::rng::{derive_seed, RandomStream};

/// Ground truth and predictions of equal, non-zero length.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries {
    y: Vec<f64>,
    y_hat: Vec<f64>,
}

impl PairedSeries {
    pub fn new(y: Vec<f64>, y_hat: Vec<f64>) -> Result<Self> {
        if y.is_empty() || y.len() != y_hat.len() {
            return Err(Error::InvalidParams(format!(
                "paired series need equal non-zero lengths, got {} and {}",
                y.len(),
                y_hat.len()
            )));
        }
        if !y.iter().chain(&y_hat).all(|v| v.is_finite()) {
            return Err(Error::InvalidParams("paired series contain non-finite values".into()));
        }
        Ok(Self { y, y_hat })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn y_hat(&self) -> &[f64] {
        &self.y_hat
    }
}

pub fn mse(s: &PairedSeries) -> f64 {
    s.y.iter().zip(&s.y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / s.len() as f64
}

pub fn mae(s: &PairedSeries) -> f64 {
    s.y.iter().zip(&s.y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / s.len() as f64
}

/// `1 - MSE(y, ŷ) / MSE(y, ȳ)`.
pub fn r_squared(s: &PairedSeries) -> Result<f64> {
    let mean = s.y.iter().sum::<f64>() / s.len() as f64;
    let spread = s.y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / s.len() as f64;
    if spread == 0.0 {
        return Err(Error::ConstantTruth);
    }
    Ok(1.0 - mse(s) / spread)
}

/// Welford accumulator for mean and variance.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StreamingMean {
    n: usize,
    mean: f64,
    m2: f64,
}

impl StreamingMean {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; 0 for fewer than two values.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

impl FromIterator<f64> for StreamingMean {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        iter.into_iter().for_each(|x| acc.push(x));
        acc
    }
}

/// Mean and unbiased variance by the two-pass formula.
pub fn two_pass_mean_var(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    };
    (mean, var)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Descriptor {
    /// Average observable cluster size of label 1.
    SLabel1,
    ZHetero,
    ZTotal,
}

impl Descriptor {
    pub const ALL: [Descriptor; 3] = [Descriptor::SLabel1, Descriptor::ZHetero, Descriptor::ZTotal];

    pub fn name(self) -> &'static str {
        match self {
            Descriptor::SLabel1 => "s_label1",
            Descriptor::ZHetero => "z_hetero",
            Descriptor::ZTotal => "z_total",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.name() == s)
    }
}

/// Sample values of one side of a comparison, per descriptor. Aggregates
/// without label-1 particles contribute nothing to `S_label1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DescriptorSamples {
    pub values: [Vec<f64>; 3],
}

impl DescriptorSamples {
    pub fn stats(&self, d: Descriptor) -> StreamingMean {
        self.values[d as usize].iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairComparison {
    pub theta: ModelParams,
    pub theta_hat: ModelParams,
    pub truth: DescriptorSamples,
    pub predicted: DescriptorSamples,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSummary {
    pub descriptor: Descriptor,
    /// Mean over pairs of |mean under θ - mean under θ̂|.
    pub mae: f64,
    /// Across pairs, of the θ̂ means against the θ means. `None` when the θ
    /// means are all equal.
    pub r_squared: Option<f64>,
    /// Mean over pairs of the standard error of the difference of means.
    pub mc_standard_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub per_config_samples: usize,
    pub pairs: Vec<PairComparison>,
    pub summaries: Vec<DescriptorSummary>,
}

pub const HISTOGRAM_BINS: usize = 20;

fn sample_descriptors(theta: &ModelParams, cfg: &GrowthConfig, seed: u64) -> Result<[Option<f64>; 3]> {
    let a = build_hetero_aggregate(theta, cfg, &mut RandomStream::new(seed))?;
    Ok([average_cluster_size(&a, Label::Tio2).ok(), Some(hetero_coordination(&a)), Some(total_coordination(&a))])
}

/// Draws `per_config_samples` aggregates under θ and, from independent
/// streams, under θ̂ for each pair and compares descriptor means.
pub fn compare_descriptor_distributions(
    pairs: &[(ModelParams, ModelParams)],
    per_config_samples: usize,
    cfg: &GrowthConfig,
    master_seed: u64,
    exec: &Executor,
) -> Result<ComparisonReport> {
    if per_config_samples == 0 {
        return Err(Error::InvalidParams("per_config_samples must be >= 1".into()));
    }
    let per_pair = 2 * per_config_samples;
    let draws = exec.map_range(pairs.len() * per_pair, |job| {
        let (pair, rest) = (job / per_pair, job % per_pair);
        let (side, j) = (rest / per_config_samples, rest % per_config_samples);
        let theta = if side == 0 { &pairs[pair].0 } else { &pairs[pair].1 };
        let stream = derive_seed(master_seed, (2 * pair + side) as u64);
        sample_descriptors(theta, cfg, derive_seed(stream, j as u64))
    });
    let mut draws = draws.into_iter();
    let mut comparisons = Vec::with_capacity(pairs.len());
    for &(theta, theta_hat) in pairs {
        let mut sides = [DescriptorSamples::default(), DescriptorSamples::default()];
        for side in &mut sides {
            for _ in 0..per_config_samples {
                let values = draws.next().expect("one draw per job")?;
                for (k, v) in values.into_iter().enumerate() {
                    if let Some(v) = v {
                        side.values[k].push(v);
                    }
                }
            }
        }
        let [truth, predicted] = sides;
        comparisons.push(PairComparison { theta, theta_hat, truth, predicted });
    }

    let mut summaries = Vec::new();
    for d in Descriptor::ALL {
        let (mut y, mut y_hat, mut se) = (Vec::new(), Vec::new(), Vec::new());
        for c in &comparisons {
            let (t, p) = (c.truth.stats(d), c.predicted.stats(d));
            if t.count() == 0 || p.count() == 0 {
                continue;
            }
            y.push(t.mean());
            y_hat.push(p.mean());
            se.push((t.std_error().powi(2) + p.std_error().powi(2)).sqrt());
        }
        if y.is_empty() {
            log::warn!("no pair has samples for {}", d.name());
            continue;
        }
        let series = PairedSeries::new(y, y_hat)?;
        summaries.push(DescriptorSummary {
            descriptor: d,
            mae: mae(&series),
            r_squared: r_squared(&series).ok(),
            mc_standard_error: se.iter().sum::<f64>() / se.len() as f64,
        });
    }
    Ok(ComparisonReport { per_config_samples, pairs: comparisons, summaries })
}

/// Counts per bin of `bins` equal bins on `[lo, hi]`; the top edge is
/// inclusive and values outside are dropped.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if !(v >= lo && v <= hi) {
            continue;
        }
        let k = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    counts
}

fn quoted(theta: &ModelParams) -> String {
    format!("\"{theta}\"")
}

impl ComparisonReport {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("descriptor,mae,r_squared,mc_standard_error,configs,samples_per_config\n");
        for s in &self.summaries {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                s.descriptor.name(),
                s.mae,
                s.r_squared.map(|r| r.to_string()).unwrap_or_default(),
                s.mc_standard_error,
                self.pairs.len(),
                self.per_config_samples
            ));
        }
        out
    }

    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("pair,theta,theta_hat,descriptor,n_truth,mean_truth,se_truth,n_pred,mean_pred,se_pred\n");
        for (i, c) in self.pairs.iter().enumerate() {
            for d in Descriptor::ALL {
                let (t, p) = (c.truth.stats(d), c.predicted.stats(d));
                out.push_str(&format!(
                    "{i},{},{},{},{},{},{},{},{},{}\n",
                    quoted(&c.theta),
                    quoted(&c.theta_hat),
                    d.name(),
                    t.count(),
                    t.mean(),
                    t.std_error(),
                    p.count(),
                    p.mean(),
                    p.std_error()
                ));
            }
        }
        out
    }

    /// Long-format sample values: `pair,side,descriptor,value` with side
    /// `truth` or `predicted`.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("pair,side,descriptor,value\n");
        for (i, c) in self.pairs.iter().enumerate() {
            for (side, s) in [("truth", &c.truth), ("predicted", &c.predicted)] {
                for d in Descriptor::ALL {
                    for v in &s.values[d as usize] {
                        out.push_str(&format!("{i},{side},{},{v}\n", d.name()));
                    }
                }
            }
        }
        out
    }

    /// Per pair and descriptor, both sides binned on the pooled range.
    pub fn histogram_csv(&self, bins: usize) -> String {
        let mut out = String::from("pair,descriptor,bin_lo,bin_hi,count_truth,count_pred\n");
        for (i, c) in self.pairs.iter().enumerate() {
            for d in Descriptor::ALL {
                let (t, p) = (&c.truth.values[d as usize], &c.predicted.values[d as usize]);
                let pooled = t.iter().chain(p);
                let lo = pooled.clone().copied().fold(f64::INFINITY, f64::min);
                let hi = pooled.copied().fold(f64::NEG_INFINITY, f64::max);
                if !lo.is_finite() {
                    continue;
                }
                let (ht, hp) = (histogram(t, lo, hi, bins), histogram(p, lo, hi, bins));
                let width = (hi - lo) / bins as f64;
                for k in 0..bins {
                    let a = lo + k as f64 * width;
                    let b = if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width };
                    out.push_str(&format!("{i},{},{a},{b},{},{}\n", d.name(), ht[k], hp[k]));
                }
            }
        }
        out
    }
}

/// Classifies pixels above `t_mat` as label 0 and pixels in `(t_bg, t_mat]`
/// as label 1, converts the areas to particle counts with the mean projected
/// areas and returns the label-0 fraction (0.5 when nothing is classified).
pub fn threshold_mixing_ratio(img: &ImageGrid, t_bg: f64, t_mat: f64, mean_area_0: f64, mean_area_1: f64) -> f64 {
    let (mut bright, mut dark) = (0usize, 0usize);
    for &v in &img.values {
        if v > t_mat {
            bright += 1;
        } else if v > t_bg {
            dark += 1;
        }
    }
    if bright + dark == 0 {
        log::warn!("no pixel classified as material, mixing ratio defaults to 0.5");
    }
    let px = img.pixel_size * img.pixel_size;
    estimate_from_counts(bright as f64 * px, dark as f64 * px, mean_area_0, mean_area_1)
}

fn estimate_from_counts(area_0: f64, area_1: f64, mean_area_0: f64, mean_area_1: f64) -> f64 {
    let (n0, n1) = (area_0 / mean_area_0, area_1 / mean_area_1);
    if n0 + n1 == 0.0 {
        return 0.5;
    }
    n0 / (n0 + n1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSample {
    pub image: ImageGrid,
    /// Ground-truth mixing ratio.
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub t_bg: f64,
    pub t_mat: f64,
    /// Training MAE at the chosen pair.
    pub mae: f64,
    pub candidates: usize,
}

/// Candidate thresholds `u_k = t_max (k + 1) / (R + 1)`, `k < R`, where
/// `t_max` is the largest pixel value over all samples. Background
/// thresholds additionally include 0.
pub fn threshold_grid(samples: &[BaselineSample], grid_resolution: usize) -> Vec<f64> {
    let t_max = samples.iter().map(|s| s.image.max()).fold(0.0, f64::max);
    let r = grid_resolution as f64;
    (0..grid_resolution).map(|k| t_max * (k as f64 + 1.0) / (r + 1.0)).collect()
}

/// Exhaustive search over `(t_bg, t_mat)` with `t_bg ∈ {0} ∪ grid`,
/// `t_mat ∈ grid`, `t_bg < t_mat`, minimizing the MAE against the true
/// mixing ratios. Ties go to the first pair in scan order.
pub fn calibrate_thresholds(
    samples: &[BaselineSample],
    grid_resolution: usize,
    mean_areas: [f64; 2],
    exec: &Executor,
) -> Result<Calibration> {
    if samples.is_empty() || grid_resolution == 0 {
        return Err(Error::InvalidParams("calibration needs samples and grid_resolution >= 1".into()));
    }
    let mut levels = vec![0.0];
    levels.extend(threshold_grid(samples, grid_resolution));
    // above[i][j]: pixel area of sample i strictly above levels[j].
    let above: Vec<Vec<f64>> = exec.map(samples, |s| {
        let mut v = s.image.values.clone();
        v.sort_unstable_by(f64::total_cmp);
        let px = s.image.pixel_size * s.image.pixel_size;
        levels.iter().map(|&t| (v.len() - v.partition_point(|&x| x <= t)) as f64 * px).collect()
    });
    let pairs: Vec<(usize, usize)> =
        (0..levels.len()).flat_map(|a| (a + 1..levels.len()).map(move |b| (a, b))).filter(|&(a, b)| levels[a] < levels[b]).collect();
    if pairs.is_empty() {
        return Err(Error::InvalidParams("threshold grid is empty (all images zero?)".into()));
    }
    let errors = exec.map(&pairs, |&(a, b)| {
        samples
            .iter()
            .zip(&above)
            .map(|(s, ab)| (estimate_from_counts(ab[b], ab[a] - ab[b], mean_areas[0], mean_areas[1]) - s.rho).abs())
            .sum::<f64>()
            / samples.len() as f64
    });
    let mut best = 0;
    for (k, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = k;
        }
    }
    let (a, b) = pairs[best];
    Ok(Calibration { t_bg: levels[a], t_mat: levels[b], mae: errors[best], candidates: pairs.len() })
}

/// MAE of the threshold estimate over `samples`.
pub fn baseline_mae(samples: &[BaselineSample], t_bg: f64, t_mat: f64, mean_areas: [f64; 2]) -> f64 {
    samples
        .iter()
        .map(|s| (threshold_mixing_ratio(&s.image, t_bg, t_mat, mean_areas[0], mean_areas[1]) - s.rho).abs())
        .sum::<f64>()
        / samples.len() as f64
}

/// True iff no value lies strictly between `2 (n_max - 1) / n_max` and 2,
/// the gap below 2 in the attainable total coordination numbers of
/// connected aggregates with at most `n_max` particles.
pub fn gap_set_check(values: &[f64], n_max: usize) -> bool {
    let lower = 2.0 * (n_max as f64 - 1.0) / n_max as f64;
    !values.iter().any(|&v| v > lower && v < 2.0)
}
