//! Two-stage cluster-cluster hetero-aggregation under a fractal-dimension
//! constraint.
//!
//! Primary clusters are grown particle by particle; finished clusters are then
//! attached one after another to the growing aggregate. Every new particle (or
//! cluster) is placed with its center of mass on a sphere around the current
//! center of mass whose radius is chosen so that the merged set satisfies
//! `N / k_f = (R_g / a)^D_f` with equal masses and the mean radius `a`
//! ([`placement_radius`]). On that sphere the position is drawn uniformly
//! among the directions that give at least one contact and no overlap.
//!
//! For very small sets the constraint can be unreachable: a dimer with
//! `k_f = 1.3` would need a center distance of at least `2.3 a`, beyond the
//! contact range `2.02 a`. When no direction on the target sphere yields a
//! contact, the radius is moved to the nearest value at which a contact is
//! reachable and the draw proceeds there.

use rand::Rng;
use rand_distr::{Distribution, LogNormal, UnitSphere};

use crate::error::{Error, Result};
use crate::geometry::{
    center_of_mass, in_contact, overlaps, radius_of_gyration_of, Aggregate, Label, MassWeighting,
    ModelParams, Particle, Provenance, Vec3, CONTACT_SLACK, DEFAULT_KF,
};
use crate::rng::RandomStream;

/// Log-normal law of particle radii, parameterized by the mean and standard
/// deviation of the radius itself (nm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusDistribution {
    pub mean: f64,
    pub std: f64,
}

impl Default for RadiusDistribution {
    fn default() -> Self {
        Self { mean: 12.0, std: 3.0 }
    }
}

impl RadiusDistribution {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean > 0.0 && self.mean.is_finite()) || !(self.std >= 0.0 && self.std.is_finite()) {
            return Err(Error::Config(format!(
                "radius distribution needs mean > 0 and std >= 0, got ({}, {})",
                self.mean, self.std
            )));
        }
        Ok(())
    }

    /// Parameters `(μ_ln, σ_ln)` of the underlying normal law, by moment
    /// matching.
    pub fn log_params(&self) -> (f64, f64) {
        let var_ln = (1.0 + (self.std / self.mean).powi(2)).ln();
        (self.mean.ln() - var_ln / 2.0, var_ln.sqrt())
    }

    /// E[π r²] in nm².
    pub fn mean_projected_area(&self) -> f64 {
        std::f64::consts::PI * (self.mean * self.mean + self.std * self.std)
    }
}

pub fn sample_radius<R: Rng + ?Sized>(dist: &RadiusDistribution, rng: &mut R) -> f64 {
    if dist.std == 0.0 {
        return dist.mean;
    }
    let (mu, sigma) = dist.log_params();
    LogNormal::new(mu, sigma).expect("valid log-normal parameters").sample(rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthConfig {
    pub k_f: f64,
    /// Contact slack used when drawing positions; the validators always use
    /// [`CONTACT_SLACK`].
    pub contact_slack: f64,
    pub max_position_attempts: usize,
    /// Full restarts of a cluster or aggregate before giving up.
    pub max_restarts: usize,
    /// Consecutive failed attachments of fresh clusters before the whole
    /// aggregate is restarted.
    pub max_cluster_resamples: usize,
    pub target_size_min: usize,
    pub target_size_max: usize,
    pub radius: RadiusDistribution,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            k_f: DEFAULT_KF,
            contact_slack: CONTACT_SLACK,
            max_position_attempts: 1000,
            max_restarts: 100,
            max_cluster_resamples: 20,
            target_size_min: 20,
            target_size_max: 80,
            radius: RadiusDistribution::default(),
        }
    }
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_f > 0.0) {
            return Err(Error::Config(format!("k_f must be positive, got {}", self.k_f)));
        }
        if !(self.contact_slack >= 1.0) {
            return Err(Error::Config(format!("contact_slack must be >= 1, got {}", self.contact_slack)));
        }
        if self.max_position_attempts == 0 {
            return Err(Error::Config("max_position_attempts must be >= 1".into()));
        }
        if self.target_size_min == 0 || self.target_size_min > self.target_size_max {
            return Err(Error::Config(format!(
                "target size range {}..={} is empty",
                self.target_size_min, self.target_size_max
            )));
        }
        self.radius.validate()
    }
}

/// A homogeneous, connected, non-overlapping cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimaryCluster {
    pub particles: Aggregate,
    pub label: Label,
}

/// Counters collected while building an aggregate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GrowthStats {
    pub placements: usize,
    /// Placements where the target sphere admitted no contact and the radius
    /// was moved to the nearest reachable value.
    pub snapped_placements: usize,
    /// Whether the final attachment (or particle) used a snapped radius.
    pub last_placement_snapped: bool,
    pub cluster_resamples: usize,
    pub aggregate_restarts: usize,
}

impl GrowthStats {
    fn absorb(&mut self, other: &GrowthStats) {
        self.placements += other.placements;
        self.snapped_placements += other.snapped_placements;
        self.cluster_resamples += other.cluster_resamples;
        self.aggregate_restarts += other.aggregate_restarts;
    }
}

/// Radius of the sphere (around the aggregate's center of mass) on which the
/// added unit's center of mass must lie for the merged equal-mass set to have
/// fractal dimension `d_f` with mean radius `a`.
pub fn placement_radius(
    n_a: usize,
    n_c: usize,
    r_a: f64,
    r_c: f64,
    a: f64,
    d_f: f64,
    k_f: f64,
) -> Result<f64> {
    if n_a == 0 || n_c == 0 {
        return Err(Error::InvalidParams("placement needs non-empty sets".into()));
    }
    let (na, nc) = (n_a as f64, n_c as f64);
    let n = na + nc;
    let radicand =
        a * a * n * n / (na * nc) * (n / k_f).powf(2.0 / d_f) - n / nc * r_a * r_a - n / na * r_c * r_c;
    if radicand < 0.0 {
        return Err(Error::InfeasiblePlacement { radicand });
    }
    Ok(radicand.sqrt())
}

pub fn sample_on_sphere<R: Rng + ?Sized>(center: Vec3, d: f64, rng: &mut R) -> Vec3 {
    let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
    center + Vec3::new(x, y, z) * d
}

/// Label of the next primary cluster: 1 with probability
/// `(1-θ_ρ)θ_0 / ((1-θ_ρ)θ_0 + θ_ρ θ_1)`.
pub fn sample_label<R: Rng + ?Sized>(theta: &ModelParams, rng: &mut R) -> Result<Label> {
    let p1 = label_one_probability(theta)?;
    Ok(if rng.random::<f64>() < p1 { Label::Tio2 } else { Label::Wo3 })
}

pub fn label_one_probability(theta: &ModelParams) -> Result<f64> {
    let w1 = (1.0 - theta.theta_rho) * theta.theta_0 as f64;
    let denom = w1 + theta.theta_rho * theta.theta_1 as f64;
    if !(denom > 0.0) {
        return Err(Error::InvalidParams(format!("label probability undefined for {theta}")));
    }
    Ok(w1 / denom)
}

/// A unit to be placed: particle offsets relative to its own equal-mass
/// center of mass.
struct Placement<'a> {
    fixed: &'a [Particle],
    fixed_com: Vec3,
    moving: &'a [Particle],
}

/// Directions on the placement sphere that bring one (fixed, moving) pair
/// into contact form a band `u·ŵ ∈ [lo, hi]`.
#[derive(Debug, Clone, Copy)]
struct ContactBand {
    axis: Vec3,
    lo: f64,
    hi: f64,
    /// The pair is in contact for every direction (degenerate geometry).
    everywhere: bool,
}

impl ContactBand {
    fn weight(&self) -> f64 {
        if self.everywhere {
            2.0
        } else {
            self.hi - self.lo
        }
    }

    fn contains(&self, u: Vec3) -> bool {
        if self.everywhere {
            return true;
        }
        let c = u.dot(self.axis);
        c >= self.lo && c <= self.hi
    }
}

struct PlacedUnit {
    translation: Vec3,
    snapped: bool,
}

impl Placement<'_> {
    /// `(w, s)` per pair, where `w` is the fixed particle's position relative
    /// to `fixed_com + moving offset` and `s` the radius sum.
    fn pairs(&self) -> Vec<(Vec3, f64)> {
        let mut out = Vec::with_capacity(self.fixed.len() * self.moving.len());
        for f in self.fixed {
            for m in self.moving {
                out.push((f.position - self.fixed_com - m.position, f.radius + m.radius));
            }
        }
        out
    }

    fn bands(pairs: &[(Vec3, f64)], d: f64, slack: f64) -> Vec<ContactBand> {
        // Shrink the band by a relative hair so that sampled points satisfy
        // the closed contact predicate after rounding.
        let (lo_f, hi_f) = (1.0 + 1e-12, slack * (1.0 - 1e-12));
        let mut bands = Vec::new();
        for &(w, s) in pairs {
            let big_d = w.norm();
            let (s_lo, s_hi) = (s * lo_f, s * hi_f);
            if big_d * d <= 1e-12 * s * s {
                let dist = big_d.max(d);
                if dist >= s_lo && dist <= s_hi {
                    bands.push(ContactBand { axis: Vec3::ZERO, lo: -1.0, hi: 1.0, everywhere: true });
                }
                continue;
            }
            let base = d * d + big_d * big_d;
            let denom = 2.0 * d * big_d;
            let hi = ((base - s_lo * s_lo) / denom).min(1.0);
            let lo = ((base - s_hi * s_hi) / denom).max(-1.0);
            if hi > lo {
                bands.push(ContactBand { axis: w / big_d, lo, hi, everywhere: false });
            }
        }
        bands
    }

    /// Nearest radius to `target` at which some pair can sit in the middle of
    /// its contact range.
    fn nearest_reachable(pairs: &[(Vec3, f64)], target: f64, slack: f64) -> f64 {
        let mid = (1.0 + slack) / 2.0;
        let mut best = f64::INFINITY;
        let mut best_gap = f64::INFINITY;
        for &(w, s) in pairs {
            let big_d = w.norm();
            let sm = s * mid;
            let lo = (big_d - sm).abs();
            let hi = big_d + sm;
            let candidate = target.clamp(lo, hi);
            let gap = (candidate - target).abs();
            if gap < best_gap {
                best_gap = gap;
                best = candidate;
            }
        }
        best
    }

    fn sample<R: Rng + ?Sized>(&self, target: f64, cfg: &GrowthConfig, rng: &mut R) -> Result<PlacedUnit> {
        let pairs = self.pairs();
        let slack = cfg.contact_slack;
        let mut d = target;
        let mut bands = Self::bands(&pairs, d, slack);
        let mut snapped = false;
        if bands.is_empty() {
            d = Self::nearest_reachable(&pairs, target, slack);
            bands = Self::bands(&pairs, d, slack);
            snapped = true;
            if bands.is_empty() {
                return Err(Error::PlacementExhausted { attempts: 0 });
            }
        }
        let mut cumulative = Vec::with_capacity(bands.len());
        let mut total = 0.0;
        for b in &bands {
            total += b.weight();
            cumulative.push(total);
        }

        for _ in 0..cfg.max_position_attempts {
            let pick = rng.random::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= pick).min(bands.len() - 1);
            let band = &bands[k];
            let u = if band.everywhere {
                let [x, y, z]: [f64; 3] = UnitSphere.sample(rng);
                Vec3::new(x, y, z)
            } else {
                let c = band.lo + (band.hi - band.lo) * rng.random::<f64>();
                let psi = std::f64::consts::TAU * rng.random::<f64>();
                let (e1, e2) = band.axis.orthonormal_basis();
                let sin = (1.0 - c * c).max(0.0).sqrt();
                band.axis * c + (e1 * psi.cos() + e2 * psi.sin()) * sin
            };
            // Thinning by band multiplicity makes the accepted direction
            // uniform on the union of bands.
            let multiplicity = bands.iter().filter(|b| b.contains(u)).count().max(1);
            if multiplicity > 1 && rng.random::<f64>() * multiplicity as f64 >= 1.0 {
                continue;
            }
            let translation = self.fixed_com + u * d;
            if self.admissible(translation) {
                return Ok(PlacedUnit { translation, snapped });
            }
        }
        Err(Error::PlacementExhausted { attempts: cfg.max_position_attempts })
    }

    fn admissible(&self, translation: Vec3) -> bool {
        let mut touching = false;
        for m in self.moving {
            let moved = Particle { position: m.position + translation, ..*m };
            for f in self.fixed {
                if overlaps(f, &moved) {
                    return false;
                }
                touching |= in_contact(f, &moved);
            }
        }
        touching
    }
}

fn equal_mass_com(ps: &[Particle]) -> Vec3 {
    center_of_mass(ps, MassWeighting::Equal)
}

fn mean_radius(a: &[Particle], b: &[Particle]) -> f64 {
    let sum: f64 = a.iter().chain(b).map(|p| p.radius).sum();
    sum / (a.len() + b.len()) as f64
}

pub fn grow_primary_cluster(
    size: usize,
    theta_df: f64,
    label: Label,
    dist: &RadiusDistribution,
    cfg: &GrowthConfig,
    rng: &mut RandomStream,
) -> Result<PrimaryCluster> {
    grow_primary_cluster_traced(size, theta_df, label, dist, cfg, rng).map(|(c, _)| c)
}

fn grow_primary_cluster_traced(
    size: usize,
    theta_df: f64,
    label: Label,
    dist: &RadiusDistribution,
    cfg: &GrowthConfig,
    rng: &mut RandomStream,
) -> Result<(PrimaryCluster, GrowthStats)> {
    if size == 0 {
        return Err(Error::InvalidParams("primary cluster size must be >= 1".into()));
    }
    let mut stats = GrowthStats::default();
    let mut last_reason = String::new();
    'restart: for _ in 0..=cfg.max_restarts {
        let mut ps = vec![Particle::new(Vec3::ZERO, sample_radius(dist, rng), label)];
        while ps.len() < size {
            let r = sample_radius(dist, rng);
            let newcomer = [Particle::new(Vec3::ZERO, r, label)];
            let a = mean_radius(&ps, &newcomer);
            let rg = radius_of_gyration_of(&ps, MassWeighting::Equal);
            let placed = placement_radius(ps.len(), 1, rg, 0.0, a, theta_df, cfg.k_f).and_then(|d| {
                Placement { fixed: &ps, fixed_com: equal_mass_com(&ps), moving: &newcomer }.sample(d, cfg, rng)
            });
            match placed {
                Ok(unit) => {
                    stats.placements += 1;
                    stats.snapped_placements += unit.snapped as usize;
                    stats.last_placement_snapped = unit.snapped;
                    ps.push(Particle::new(unit.translation, r, label));
                }
                Err(e) => {
                    last_reason = e.to_string();
                    continue 'restart;
                }
            }
        }
        let cluster = PrimaryCluster { particles: Aggregate::new(ps), label };
        return Ok((cluster, stats));
    }
    Err(Error::GenerationFailed { restarts: cfg.max_restarts, reason: last_reason })
}

/// Attaches `cluster` to `agg` by a rigid translation of the cluster.
pub fn attach_cluster(
    agg: &Aggregate,
    cluster: &PrimaryCluster,
    theta_df: f64,
    cfg: &GrowthConfig,
    rng: &mut RandomStream,
) -> Result<Aggregate> {
    attach_traced(agg, cluster, theta_df, cfg, rng).map(|(a, _)| a)
}

fn attach_traced(
    agg: &Aggregate,
    cluster: &PrimaryCluster,
    theta_df: f64,
    cfg: &GrowthConfig,
    rng: &mut RandomStream,
) -> Result<(Aggregate, bool)> {
    let fixed = &agg.particles;
    let incoming = &cluster.particles.particles;
    if fixed.is_empty() || incoming.is_empty() {
        return Err(Error::InvalidParams("cannot attach empty sets".into()));
    }
    let a = mean_radius(fixed, incoming);
    let r_a = radius_of_gyration_of(fixed, MassWeighting::Equal);
    let r_c = radius_of_gyration_of(incoming, MassWeighting::Equal);
    let d = placement_radius(fixed.len(), incoming.len(), r_a, r_c, a, theta_df, cfg.k_f)?;
    let com_c = equal_mass_com(incoming);
    let moving: Vec<Particle> =
        incoming.iter().map(|p| Particle { position: p.position - com_c, ..*p }).collect();
    let unit = Placement { fixed, fixed_com: equal_mass_com(fixed), moving: &moving }.sample(d, cfg, rng)?;
    let mut merged = agg.clone();
    merged
        .particles
        .extend(moving.iter().map(|p| Particle { position: p.position + unit.translation, ..*p }));
    Ok((merged, unit.snapped))
}

/// Draws one hetero-aggregate from the model with parameters `theta`.
pub fn build_hetero_aggregate(
    theta: &ModelParams,
    cfg: &GrowthConfig,
    rng: &mut RandomStream,
) -> Result<Aggregate> {
    build_hetero_aggregate_traced(theta, cfg, rng).map(|(a, _)| a)
}

pub fn build_hetero_aggregate_traced(
    theta: &ModelParams,
    cfg: &GrowthConfig,
    rng: &mut RandomStream,
) -> Result<(Aggregate, GrowthStats)> {
    theta.validate()?;
    cfg.validate()?;
    let seed = rng.seed();
    let target = rng.random_range(cfg.target_size_min..=cfg.target_size_max);
    let mut stats = GrowthStats::default();
    let mut last_reason = String::new();

    'restart: for restart in 0..=cfg.max_restarts {
        stats.aggregate_restarts = restart;
        let label = sample_label(theta, rng)?;
        let (first, s) =
            grow_primary_cluster_traced(theta.cluster_size(label), theta.theta_df, label, &cfg.radius, cfg, rng)?;
        stats.absorb(&s);
        stats.last_placement_snapped = s.last_placement_snapped;
        let mut agg = first.particles;
        let mut cluster_of = vec![0u32; agg.len()];
        let mut n_clusters = 1u32;

        while agg.len() < target {
            let label = sample_label(theta, rng)?;
            let size = theta.cluster_size(label);
            let mut failures = 0;
            loop {
                let (cluster, s) =
                    grow_primary_cluster_traced(size, theta.theta_df, label, &cfg.radius, cfg, rng)?;
                stats.absorb(&s);
                match attach_traced(&agg, &cluster, theta.theta_df, cfg, rng) {
                    Ok((merged, snapped)) => {
                        stats.placements += 1;
                        stats.snapped_placements += snapped as usize;
                        stats.last_placement_snapped = snapped;
                        agg = merged;
                        cluster_of.extend(std::iter::repeat_n(n_clusters, size));
                        n_clusters += 1;
                        break;
                    }
                    Err(e @ (Error::InfeasiblePlacement { .. } | Error::PlacementExhausted { .. })) => {
                        failures += 1;
                        stats.cluster_resamples += 1;
                        if failures > cfg.max_cluster_resamples {
                            last_reason = e.to_string();
                            continue 'restart;
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        agg.provenance = Some(Provenance { seed, params: *theta, primary_cluster: cluster_of });
        return Ok((agg, stats));
    }
    Err(Error::GenerationFailed { restarts: cfg.max_restarts, reason: last_reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{contact_graph, fractal_dimension, is_connected, mixing_ratio, radius_of_gyration};
    use approx::assert_relative_eq;

    fn cfg() -> GrowthConfig {
        GrowthConfig::default()
    }

    #[test]
    fn log_normal_moments() {
        let dist = RadiusDistribution::default();
        let mut rng = RandomStream::new(11);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| sample_radius(&dist, &mut rng)).collect();
        assert!(draws.iter().all(|&r| r > 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 12.0).abs() < 0.1, "mean {mean}");
        assert!((var.sqrt() - 3.0).abs() < 0.1, "std {}", var.sqrt());
    }

    #[test]
    fn degenerate_radius_distribution() {
        let dist = RadiusDistribution { mean: 12.0, std: 0.0 };
        let mut rng = RandomStream::new(1);
        assert!((0..100).all(|_| sample_radius(&dist, &mut rng) == 12.0));
        let tiny = RadiusDistribution { mean: 12.0, std: 1e-9 };
        assert!((0..100).all(|_| (sample_radius(&tiny, &mut rng) - 12.0).abs() < 1e-6));
    }

    #[test]
    fn placement_radius_examples() {
        let d = placement_radius(1, 1, 0.0, 0.0, 1.0, 2.0, 1.3).unwrap();
        assert_relative_eq!(d, (4.0f64 * 2.0 / 1.3).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(d, 2.48069, epsilon = 1e-5);
        let d1 = placement_radius(7, 3, 4.0, 2.0, 1.5, 1.8, 1.3).unwrap();
        let d2 = placement_radius(7, 3, 12.0, 6.0, 4.5, 1.8, 1.3).unwrap();
        assert_relative_eq!(d2, 3.0 * d1, max_relative = 1e-12);
        assert!(matches!(
            placement_radius(1, 10, 0.0, 50.0, 1.0, 2.0, 1.3),
            Err(Error::InfeasiblePlacement { .. })
        ));
    }

    /// Places two point sets at the computed distance along an arbitrary axis,
    /// recomputes the merged R_g and inverts the scaling law.
    #[test]
    fn placement_radius_recovers_target_dimension() {
        let mut rng = RandomStream::new(5);
        for &df in &[1.5, 1.8, 2.0, 2.5] {
            let mk = |n: usize, rng: &mut RandomStream| -> Vec<Particle> {
                (0..n)
                    .map(|_| {
                        let r = rng.random_range(8.0..16.0);
                        Particle::new(sample_on_sphere(Vec3::ZERO, rng.random_range(0.0..40.0), rng), r, Label::Wo3)
                    })
                    .collect()
            };
            let a_set = mk(17, &mut rng);
            let c_set = mk(4, &mut rng);
            let a = mean_radius(&a_set, &c_set);
            let r_a = radius_of_gyration_of(&a_set, MassWeighting::Equal);
            let r_c = radius_of_gyration_of(&c_set, MassWeighting::Equal);
            let d = placement_radius(17, 4, r_a, r_c, a, df, 1.3).unwrap();
            let ca = equal_mass_com(&a_set);
            let cc = equal_mass_com(&c_set);
            let shift = ca + Vec3::new(0.3, -0.4, 0.866).normalized() * d - cc;
            let mut merged = Aggregate::new(a_set.clone());
            merged.particles.extend(c_set.iter().map(|p| Particle { position: p.position + shift, ..*p }));
            let got = fractal_dimension(&merged, 1.3, MassWeighting::Equal).unwrap();
            assert_relative_eq!(got, df, max_relative = 1e-9);
        }
    }

    #[test]
    fn sphere_sampling() {
        let c = Vec3::new(1.0, 2.0, 3.0);
        let mut rng = RandomStream::new(3);
        assert_eq!(sample_on_sphere(c, 0.0, &mut rng), c);
        let n = 100_000;
        let d = 2.5;
        let mut sums = [0.0; 3];
        let mut zs = Vec::with_capacity(n);
        for _ in 0..n {
            let p = sample_on_sphere(c, d, &mut rng);
            assert!((p.distance(c) - d).abs() <= 1e-9 * d);
            let q = (p - c) / d;
            sums[0] += q.x;
            sums[1] += q.y;
            sums[2] += q.z;
            zs.push(q.z);
        }
        // Each coordinate of a uniform unit vector has variance 1/3.
        let stderr = (1.0f64 / 3.0 / n as f64).sqrt();
        for s in sums {
            assert!((s / n as f64).abs() < 3.0 * stderr);
        }
        // Archimedes: z is uniform on [-1, 1]. One-sample KS at alpha = 0.01.
        zs.sort_by(f64::total_cmp);
        let ks = zs
            .iter()
            .enumerate()
            .map(|(i, &z)| {
                let cdf = (z + 1.0) / 2.0;
                (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 1.628 / (n as f64).sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn label_probabilities() {
        let p = |rho, c0, c1| label_one_probability(&ModelParams::new(1.8, rho, c0, c1).unwrap()).unwrap();
        assert_relative_eq!(p(0.5, 3, 3), 0.5);
        assert_relative_eq!(p(0.1, 1, 6), 0.6, max_relative = 1e-14);
        assert_eq!(p(0.0, 2, 5), 1.0);
        let theta = ModelParams::new(1.8, 0.0, 2, 5).unwrap();
        let mut rng = RandomStream::new(0);
        assert!((0..1000).all(|_| sample_label(&theta, &mut rng).unwrap() == Label::Tio2));
    }

    #[test]
    fn label_frequency_matches_bernoulli() {
        let theta = ModelParams::new(1.8, 0.1, 1, 6).unwrap();
        let mut rng = RandomStream::new(99);
        let n = 100_000;
        let ones = (0..n).filter(|_| sample_label(&theta, &mut rng).unwrap() == Label::Tio2).count();
        let freq = ones as f64 / n as f64;
        let se = (0.6 * 0.4 / n as f64).sqrt();
        assert!((freq - 0.6).abs() < 3.0 * se, "frequency {freq}");
    }

    #[test]
    fn primary_cluster_small_sizes() {
        let mut rng = RandomStream::new(21);
        let dist = RadiusDistribution::default();
        let one = grow_primary_cluster(1, 1.8, Label::Wo3, &dist, &cfg(), &mut rng).unwrap();
        assert_eq!(one.particles.len(), 1);
        assert_eq!(one.particles.particles[0].position, Vec3::ZERO);
        for _ in 0..50 {
            let two = grow_primary_cluster(2, 1.8, Label::Tio2, &dist, &cfg(), &mut rng).unwrap();
            let (p, q) = (&two.particles.particles[0], &two.particles.particles[1]);
            let dist_pq = p.position.distance(q.position);
            let s = p.radius + q.radius;
            assert!(dist_pq >= s - 1e-9 && dist_pq <= 1.01 * s, "{dist_pq} vs {s}");
        }
    }

    #[test]
    fn primary_clusters_are_valid() {
        let mut rng = RandomStream::new(8);
        let dist = RadiusDistribution::default();
        for _ in 0..500 {
            let c = grow_primary_cluster(6, 1.8, Label::Wo3, &dist, &cfg(), &mut rng).unwrap();
            assert_eq!(c.particles.len(), 6);
            assert!(c.particles.is_valid());
            assert!(c.particles.particles.iter().all(|p| p.label == Label::Wo3));
        }
    }

    #[test]
    fn attach_single_particles() {
        let mut rng = RandomStream::new(4);
        let agg = Aggregate::new(vec![Particle::new(Vec3::ZERO, 10.0, Label::Wo3)]);
        let cluster = PrimaryCluster {
            particles: Aggregate::new(vec![Particle::new(Vec3::ZERO, 14.0, Label::Tio2)]),
            label: Label::Tio2,
        };
        let merged = attach_cluster(&agg, &cluster, 2.0, &cfg(), &mut rng).unwrap();
        assert_eq!(merged.len(), 2);
        assert!(merged.is_valid());
    }

    #[test]
    fn attach_random_clusters_valid_and_on_target() {
        let mut rng = RandomStream::new(17);
        let dist = RadiusDistribution::default();
        let theta = ModelParams::new(1.8, 0.5, 3, 3).unwrap();
        let base = build_hetero_aggregate(&theta, &GrowthConfig { target_size_min: 30, target_size_max: 30, ..cfg() }, &mut rng).unwrap();
        let mut on_target = 0;
        for trial in 0..500 {
            let size = 1 + trial % 6;
            let cluster = grow_primary_cluster(size, 1.8, Label::Tio2, &dist, &cfg(), &mut rng).unwrap();
            let Ok((merged, snapped)) = attach_traced(&base, &cluster, 1.8, &cfg(), &mut rng) else {
                continue;
            };
            assert!(merged.is_valid());
            if !snapped {
                let df = fractal_dimension(&merged, 1.3, MassWeighting::Equal).unwrap();
                assert_relative_eq!(df, 1.8, max_relative = 1e-6);
                on_target += 1;
            }
        }
        assert!(on_target > 400, "only {on_target} attachments on target");
    }

    #[test]
    fn all_tio2_when_rho_zero() {
        let theta = ModelParams::new(1.8, 0.0, 2, 3).unwrap();
        let mut rng = RandomStream::new(2);
        let a = build_hetero_aggregate(&theta, &cfg(), &mut rng).unwrap();
        assert_eq!(mixing_ratio(&a), 0.0);
    }

    #[test]
    fn size_window_and_validity() {
        let mut rng = RandomStream::new(31);
        for (i, theta) in [(1.5, 0.3, 1, 6), (2.5, 0.7, 6, 2), (2.0, 0.5, 4, 4)].iter().enumerate() {
            let theta = ModelParams::new(theta.0, theta.1, theta.2, theta.3).unwrap();
            for _ in 0..10 {
                let mut stream = rng.child(i as u64);
                let _: u64 = rng.random();
                let mut peek = stream.clone();
                let target = peek.random_range(20..=80usize);
                let a = build_hetero_aggregate(&theta, &cfg(), &mut stream).unwrap();
                let max_c = theta.theta_0.max(theta.theta_1) as usize;
                assert!(a.len() >= target && a.len() < target + max_c);
                assert!(a.is_valid());
                let prov = a.provenance.as_ref().unwrap();
                assert_eq!(prov.primary_cluster.len(), a.len());
                assert!(is_connected(&contact_graph(&a)));
            }
        }
    }

    #[test]
    fn identical_seed_identical_aggregate() {
        let theta = ModelParams::new(2.1, 0.4, 2, 3).unwrap();
        let a = build_hetero_aggregate(&theta, &cfg(), &mut RandomStream::new(77)).unwrap();
        let b = build_hetero_aggregate(&theta, &cfg(), &mut RandomStream::new(77)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mean_mixing_ratio_tracks_theta_rho() {
        let theta = ModelParams::new(1.8, 0.5, 3, 3).unwrap();
        let root = RandomStream::new(1234);
        let n = 200;
        let mean = (0..n)
            .map(|i| mixing_ratio(&build_hetero_aggregate(&theta, &cfg(), &mut root.child(i)).unwrap()))
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() <= 0.05, "mean rho {mean}");
    }

    #[test]
    fn empirical_dimension_centered_on_target() {
        let theta = ModelParams::new(2.0, 0.5, 3, 2).unwrap();
        let root = RandomStream::new(99);
        let n = 100;
        let dfs: Vec<f64> = (0..n)
            .map(|i| {
                let a = build_hetero_aggregate(&theta, &cfg(), &mut root.child(i)).unwrap();
                assert!(radius_of_gyration(&a, MassWeighting::Equal) > 0.0);
                fractal_dimension(&a, 1.3, MassWeighting::Equal).unwrap()
            })
            .collect();
        let mean = dfs.iter().sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.1, "mean D_f {mean}");
    }
}
