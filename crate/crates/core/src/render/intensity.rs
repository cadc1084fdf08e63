//! Thickness → intensity curves per material, with several variants per
//! material standing in for crystal phase and orientation.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Label;

/// Monotone piecewise-linear curve from thickness (nm) to detector fraction.
/// Constant beyond the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityCurve {
    thickness: Vec<f64>,
    intensity: Vec<f64>,
}

impl IntensityCurve {
    pub fn new(thickness: Vec<f64>, intensity: Vec<f64>) -> Result<Self> {
        if thickness.len() != intensity.len() || thickness.len() < 2 {
            return Err(Error::Config("intensity curve needs at least two (thickness, intensity) knots".into()));
        }
        if thickness[0] != 0.0 || intensity[0] != 0.0 {
            return Err(Error::Config("intensity curve must start at (0, 0)".into()));
        }
        if thickness.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("curve thickness knots must be strictly increasing".into()));
        }
        if intensity.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::Config("intensity curve must be nondecreasing".into()));
        }
        if intensity.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Config("intensities must lie in [0, 1]".into()));
        }
        Ok(Self { thickness, intensity })
    }

    /// `I(t) = i_inf (1 - exp(-t / decay))` sampled every `step` nm up to `t_max`.
    pub fn saturating(i_inf: f64, decay: f64, t_max: f64, step: f64) -> Result<Self> {
        let n = (t_max / step).ceil() as usize;
        let thickness: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
        let intensity = thickness.iter().map(|&t| i_inf * (1.0 - (-t / decay).exp())).collect();
        Self::new(thickness, intensity)
    }

    pub fn linear(slope: f64, t_max: f64) -> Result<Self> {
        Self::new(vec![0.0, t_max], vec![0.0, slope * t_max])
    }

    pub fn t_max(&self) -> f64 {
        *self.thickness.last().unwrap()
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let k = self.thickness.partition_point(|&x| x <= t);
        if k >= self.thickness.len() {
            return *self.intensity.last().unwrap();
        }
        let (t0, t1) = (self.thickness[k - 1], self.thickness[k]);
        let (i0, i1) = (self.intensity[k - 1], self.intensity[k]);
        i0 + (i1 - i0) * (t - t0) / (t1 - t0)
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.thickness.iter().copied().zip(self.intensity.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityModel {
    variants: [Vec<IntensityCurve>; 2],
}

impl Default for IntensityModel {
    /// Saturating curves, 10 variants per material spread ±10% around
    /// WO3 (I∞ = 0.60, λ = 40 nm) and TiO2 (I∞ = 0.20, λ = 60 nm).
    fn default() -> Self {
        const VARIANTS: usize = 10;
        let family = |i_inf: f64, decay: f64| -> Vec<IntensityCurve> {
            (0..VARIANTS)
                .map(|k| {
                    let f = 0.9 + 0.2 * k as f64 / (VARIANTS - 1) as f64;
                    IntensityCurve::saturating(i_inf * f, decay * f, 200.0, 0.5).expect("valid default curve")
                })
                .collect()
        };
        Self { variants: [family(0.60, 40.0), family(0.20, 60.0)] }
    }
}

impl IntensityModel {
    pub fn new(wo3: Vec<IntensityCurve>, tio2: Vec<IntensityCurve>) -> Result<Self> {
        if wo3.is_empty() || tio2.is_empty() {
            return Err(Error::Config("every material needs at least one intensity variant".into()));
        }
        Ok(Self { variants: [wo3, tio2] })
    }

    /// Same curve for every particle of a material.
    pub fn single(wo3: IntensityCurve, tio2: IntensityCurve) -> Self {
        Self { variants: [vec![wo3], vec![tio2]] }
    }

    pub fn variants(&self, label: Label) -> &[IntensityCurve] {
        &self.variants[label.index()]
    }

    pub fn curve(&self, label: Label, variant: usize) -> &IntensityCurve {
        &self.variants[label.index()][variant]
    }

    pub fn draw_variant<R: Rng + ?Sized>(&self, label: Label, rng: &mut R) -> usize {
        rng.random_range(0..self.variants[label.index()].len())
    }

    /// Largest intensity any curve reaches.
    pub fn max_intensity(&self) -> f64 {
        self.variants.iter().flatten().flat_map(|c| c.knots().map(|(_, i)| i)).fold(0.0, f64::max)
    }

    /// Parses `material variant thickness intensity` lines. Material is `0`,
    /// `1`, `WO3` or `TiO2`; `#` starts a comment.
    pub fn from_lut_text(text: &str) -> Result<Self> {
        let mut knots: [Vec<Vec<(f64, f64)>>; 2] = [Vec::new(), Vec::new()];
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(Error::parse(line_no, "expected `material variant thickness intensity`"));
            }
            let label = match f[0] {
                "0" | "WO3" | "wo3" => Label::Wo3,
                "1" | "TiO2" | "tio2" | "TIO2" => Label::Tio2,
                other => return Err(Error::parse(line_no, format!("unknown material {other:?}"))),
            };
            let variant: usize = f[1].parse().map_err(|_| Error::parse(line_no, format!("bad variant {:?}", f[1])))?;
            let t: f64 = f[2].parse().map_err(|_| Error::parse(line_no, format!("bad thickness {:?}", f[2])))?;
            let i: f64 = f[3].parse().map_err(|_| Error::parse(line_no, format!("bad intensity {:?}", f[3])))?;
            let per = &mut knots[label.index()];
            if per.len() <= variant {
                per.resize(variant + 1, Vec::new());
            }
            per[variant].push((t, i));
        }
        let build = |label: Label, per: Vec<Vec<(f64, f64)>>| -> Result<Vec<IntensityCurve>> {
            per.into_iter()
                .enumerate()
                .map(|(v, mut pts)| {
                    if pts.is_empty() {
                        return Err(Error::Config(format!("{} variant {v} has no knots", label.material())));
                    }
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let (t, i) = pts.into_iter().unzip();
                    IntensityCurve::new(t, i)
                        .map_err(|e| Error::Config(format!("{} variant {v}: {e}", label.material())))
                })
                .collect()
        };
        let [k0, k1] = knots;
        Self::new(build(Label::Wo3, k0)?, build(Label::Tio2, k1)?)
    }

    pub fn to_lut_text(&self) -> String {
        let mut out = String::from("# material variant thickness_nm intensity\n");
        for label in Label::ALL {
            for (v, curve) in self.variants(label).iter().enumerate() {
                for (t, i) in curve.knots() {
                    let _ = writeln!(out, "{} {v} {t:.17e} {i:.17e}", label.index());
                }
            }
        }
        out
    }
}
