//! Synthetic STEM-like projection images.
//!
//! Each particle is projected along z into a thickness map, translated into
//! intensities through a per-particle curve variant, blurred with a Gaussian
//! whose width grows with the particle's distance from the focal plane
//! (`σ = |z| tan β`), and summed. Shot noise and scan noise are applied to the
//! sum.

mod intensity;
mod pgm;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{Aggregate, MassWeighting, Particle};

pub use intensity::{IntensityCurve, IntensityModel};
pub use pgm::{decode_pgm16, encode_pgm16, encode_raw_f32, scale_max, ImageMetadata};

/// Shot-noise counts above this mean are drawn from a Gaussian.
pub const POISSON_LIMIT: f64 = 1e6;

/// Blur kernels are truncated at this many standard deviations.
pub const KERNEL_TRUNCATION: f64 = 4.0;

/// Row-major real image with physical pixel size (nm/px). `origin` is the
/// world position of the center of pixel (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub pixel_size: f64,
    pub origin: [f64; 2],
    pub values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(width: usize, height: usize, pixel_size: f64, origin: [f64; 2]) -> Self {
        Self { width, height, pixel_size, origin, values: vec![0.0; width * height] }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.width * self.height);
        Self { values, ..self.clone() }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.values[y * self.width + x] = v;
    }

    pub fn sum(&self) -> f64 {
        neumaier_sum(self.values.iter().copied())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// World coordinates of a pixel center.
    pub fn pixel_center(&self, x: usize, y: usize) -> [f64; 2] {
        [self.origin[0] + x as f64 * self.pixel_size, self.origin[1] + y as f64 * self.pixel_size]
    }

    /// Bilinear sample at fractional pixel coordinates, clamped to the edges.
    pub fn sample_clamped(&self, x: f64, y: f64) -> f64 {
        let xc = x.clamp(0.0, (self.width - 1) as f64);
        let yc = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (xc - x0 as f64, yc - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

pub fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScanMode {
    /// Independent displacement per pixel.
    #[default]
    PerPixel,
    /// One displacement per scan row.
    PerRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderConfig {
    /// Semi-convergence angle (rad).
    pub beta: f64,
    /// Electron dose (electrons/Å²). Non-finite disables shot noise.
    pub dose: f64,
    /// Beam displacement standard deviation (nm).
    pub scan_sigma: f64,
    pub scan_mode: ScanMode,
    pub width: usize,
    pub height: usize,
    /// nm per pixel.
    pub pixel_size: f64,
    pub quantize_levels: usize,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            beta: 0.0211,
            dose: 149.0,
            scan_sigma: 0.01,
            scan_mode: ScanMode::PerPixel,
            width: 512,
            height: 512,
            pixel_size: 1.0,
            quantize_levels: 256,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < std::f64::consts::FRAC_PI_2) {
            return Err(Error::Config(format!("beta must be in (0, π/2), got {}", self.beta)));
        }
        if !(self.dose > 0.0) {
            return Err(Error::Config(format!("dose must be positive, got {}", self.dose)));
        }
        if !(self.scan_sigma >= 0.0 && self.scan_sigma.is_finite()) {
            return Err(Error::Config(format!("scan_sigma must be >= 0, got {}", self.scan_sigma)));
        }
        if self.width == 0 || self.height == 0 || !(self.pixel_size > 0.0) {
            return Err(Error::Config("image grid needs positive width, height and pixel size".into()));
        }
        if self.quantize_levels < 2 {
            return Err(Error::Config("quantize_levels must be >= 2".into()));
        }
        Ok(())
    }

    /// Noise-free variant of this configuration.
    pub fn noiseless(&self) -> Self {
        Self { dose: f64::INFINITY, scan_sigma: 0.0, ..self.clone() }
    }

    /// Defocus blur width (nm) for a particle at height `z` above the focal plane.
    pub fn sigma_stem(&self, z: f64) -> f64 {
        z.abs() * self.beta.tan()
    }

    /// Pixel area in Å².
    pub fn pixel_area_a2(&self) -> f64 {
        (self.pixel_size * 10.0).powi(2)
    }
}

/// A rectangular window of an image, in pixel coordinates.
#[derive(Debug, Clone)]
struct Patch {
    x0: i64,
    y0: i64,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Patch {
    /// Pixels whose centers lie within `reach` of the particle axis, plus a
    /// `margin`-pixel border.
    fn around(p: &Particle, grid: &ImageGrid, reach: f64, margin: usize) -> Patch {
        let ps = grid.pixel_size;
        let cx = (p.position.x - grid.origin[0]) / ps;
        let cy = (p.position.y - grid.origin[1]) / ps;
        let r = reach / ps;
        let m = margin as i64;
        let x0 = (cx - r).floor() as i64 - m;
        let x1 = (cx + r).ceil() as i64 + m;
        let y0 = (cy - r).floor() as i64 - m;
        let y1 = (cy + r).ceil() as i64 + m;
        let width = (x1 - x0 + 1) as usize;
        let height = (y1 - y0 + 1) as usize;
        Patch { x0, y0, width, height, values: vec![0.0; width * height] }
    }

    fn fill_thickness(&mut self, p: &Particle, grid: &ImageGrid) {
        let ps = grid.pixel_size;
        let r2 = p.radius * p.radius;
        for j in 0..self.height {
            let wy = grid.origin[1] + (self.y0 + j as i64) as f64 * ps - p.position.y;
            for i in 0..self.width {
                let wx = grid.origin[0] + (self.x0 + i as i64) as f64 * ps - p.position.x;
                let s2 = wx * wx + wy * wy;
                self.values[j * self.width + i] = if s2 < r2 { 2.0 * (r2 - s2).sqrt() } else { 0.0 };
            }
        }
    }

    fn blur(&mut self, sigma_px: f64) {
        blur_buffer(&mut self.values, self.width, self.height, sigma_px);
    }

    /// Adds the patch into `image`, clipping at the image border.
    fn accumulate(&self, image: &mut [f64], comp: &mut [f64], width: usize, height: usize) {
        for j in 0..self.height {
            let y = self.y0 + j as i64;
            if y < 0 || y >= height as i64 {
                continue;
            }
            for i in 0..self.width {
                let x = self.x0 + i as i64;
                if x < 0 || x >= width as i64 {
                    continue;
                }
                let v = self.values[j * self.width + i];
                if v == 0.0 {
                    continue;
                }
                let k = y as usize * width + x as usize;
                let t = image[k] + v;
                if image[k].abs() >= v.abs() {
                    comp[k] += (image[k] - t) + v;
                } else {
                    comp[k] += (v - t) + image[k];
                }
                image[k] = t;
            }
        }
    }
}

/// Normalized sampled Gaussian truncated at [`KERNEL_TRUNCATION`] σ.
pub fn gaussian_kernel(sigma_px: f64) -> Vec<f64> {
    if !(sigma_px > 0.0) {
        return vec![1.0];
    }
    let half = (KERNEL_TRUNCATION * sigma_px).ceil() as i64;
    let mut k: Vec<f64> =
        (-half..=half).map(|x| (-(x * x) as f64 / (2.0 * sigma_px * sigma_px)).exp()).collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= total);
    k
}

/// Separable Gaussian convolution in place, zero outside the buffer.
fn blur_buffer(values: &mut [f64], width: usize, height: usize, sigma_px: f64) {
    if !(sigma_px > 0.0) {
        return;
    }
    let kernel = gaussian_kernel(sigma_px);
    let half = (kernel.len() / 2) as i64;
    let mut tmp = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sx = x as i64 + k as i64 - half;
                if sx >= 0 && sx < width as i64 {
                    acc += w * row[sx as usize];
                }
            }
            tmp[y * width + x] = acc;
        }
    }
    for x in 0..width {
        for y in 0..height {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let sy = y as i64 + k as i64 - half;
                if sy >= 0 && sy < height as i64 {
                    acc += w * tmp[sy as usize * width + x];
                }
            }
            values[y * width + x] = acc;
        }
    }
}

/// Chord length (nm) of the z-ray through the sphere at every pixel center.
pub fn thickness_map(p: &Particle, grid: &ImageGrid) -> ImageGrid {
    let mut patch = Patch::around(p, grid, p.radius, 0);
    patch.fill_thickness(p, grid);
    let mut out = grid.with_values(vec![0.0; grid.width * grid.height]);
    let mut comp = vec![0.0; out.values.len()];
    patch.accumulate(&mut out.values, &mut comp, grid.width, grid.height);
    out
}

/// Draws a curve variant for the particle and maps its thickness map through it.
pub fn particle_intensity_map<R: Rng + ?Sized>(
    p: &Particle,
    grid: &ImageGrid,
    model: &IntensityModel,
    rng: &mut R,
) -> ImageGrid {
    let curve = model.curve(p.label, model.draw_variant(p.label, rng));
    let mut map = thickness_map(p, grid);
    map.values.iter_mut().for_each(|v| *v = curve.eval(*v));
    map
}

pub fn defocus_blur(map: &ImageGrid, sigma_px: f64) -> ImageGrid {
    let mut out = map.clone();
    blur_buffer(&mut out.values, out.width, out.height, sigma_px);
    out
}

/// Grid whose center sits on the aggregate's equal-mass center of mass.
pub fn centered_grid(a: &Aggregate, cfg: &RenderConfig) -> ImageGrid {
    let com = a.center_of_mass(MassWeighting::Equal);
    let ps = cfg.pixel_size;
    let origin = [
        com.x - (cfg.width as f64 - 1.0) / 2.0 * ps,
        com.y - (cfg.height as f64 - 1.0) / 2.0 * ps,
    ];
    ImageGrid::zeros(cfg.width, cfg.height, ps, origin)
}

/// Noise-free image: per-particle intensity maps, each blurred according to
/// its height above the focal plane through the center of mass, summed.
pub fn compose<R: Rng + ?Sized>(
    a: &Aggregate,
    cfg: &RenderConfig,
    model: &IntensityModel,
    rng: &mut R,
) -> Result<ImageGrid> {
    cfg.validate()?;
    let com = a.center_of_mass(MassWeighting::Equal);
    let mut grid = centered_grid(a, cfg);
    let half_w = cfg.width as f64 * cfg.pixel_size / 2.0;
    let half_h = cfg.height as f64 * cfg.pixel_size / 2.0;
    for (k, p) in a.particles.iter().enumerate() {
        let sigma = cfg.sigma_stem(p.position.z - com.z);
        let reach_x = (p.position.x - com.x).abs() + p.radius + 3.0 * sigma;
        let reach_y = (p.position.y - com.y).abs() + p.radius + 3.0 * sigma;
        if reach_x > half_w || reach_y > half_h {
            let (extent_nm, half_width_nm) = if reach_x - half_w > reach_y - half_h {
                (reach_x, half_w)
            } else {
                (reach_y, half_h)
            };
            return Err(Error::FieldOfViewOverflow { particle: k, extent_nm, half_width_nm });
        }
    }
    let variants: Vec<usize> = a.particles.iter().map(|p| model.draw_variant(p.label, rng)).collect();
    let mut comp = vec![0.0; grid.values.len()];
    for (p, &variant) in a.particles.iter().zip(&variants) {
        let sigma_px = cfg.sigma_stem(p.position.z - com.z) / cfg.pixel_size;
        let margin = (KERNEL_TRUNCATION * sigma_px).ceil() as usize;
        let mut patch = Patch::around(p, &grid, p.radius, margin);
        patch.fill_thickness(p, &grid);
        let curve = model.curve(p.label, variant);
        patch.values.iter_mut().for_each(|v| *v = curve.eval(*v));
        patch.blur(sigma_px);
        patch.accumulate(&mut grid.values, &mut comp, cfg.width, cfg.height);
    }
    for (v, c) in grid.values.iter_mut().zip(comp) {
        *v += c;
    }
    Ok(grid)
}

pub fn apply_shot_noise<R: Rng + ?Sized>(img: &ImageGrid, cfg: &RenderConfig, rng: &mut R) -> ImageGrid {
    if !cfg.dose.is_finite() {
        return img.clone();
    }
    let scale = cfg.dose * cfg.pixel_area_a2();
    let values = img
        .values
        .iter()
        .map(|&v| {
            let lambda = scale * v;
            if !(lambda > 0.0) {
                return 0.0;
            }
            let count = if lambda <= POISSON_LIMIT {
                Poisson::new(lambda).expect("positive mean").sample(rng)
            } else {
                Normal::new(lambda, lambda.sqrt()).expect("positive std").sample(rng).max(0.0)
            };
            count / scale
        })
        .collect();
    img.with_values(values)
}

pub fn apply_scan_noise<R: Rng + ?Sized>(img: &ImageGrid, cfg: &RenderConfig, rng: &mut R) -> ImageGrid {
    if cfg.scan_sigma == 0.0 {
        return img.clone();
    }
    let jitter = Normal::new(0.0, cfg.scan_sigma / img.pixel_size).expect("finite scan sigma");
    let mut out = img.clone();
    for y in 0..img.height {
        let row_shift = match cfg.scan_mode {
            ScanMode::PerRow => Some((jitter.sample(rng), jitter.sample(rng))),
            ScanMode::PerPixel => None,
        };
        for x in 0..img.width {
            let (dx, dy) = row_shift.unwrap_or_else(|| (jitter.sample(rng), jitter.sample(rng)));
            out.set(x, y, img.sample_clamped(x as f64 + dx, y as f64 + dy));
        }
    }
    out
}

/// Shot noise followed by scan noise.
pub fn apply_noise<R: Rng + ?Sized>(img: &ImageGrid, cfg: &RenderConfig, rng: &mut R) -> ImageGrid {
    let shot = apply_shot_noise(img, cfg, rng);
    apply_scan_noise(&shot, cfg, rng)
}

pub fn render<R: Rng + ?Sized>(
    a: &Aggregate,
    cfg: &RenderConfig,
    model: &IntensityModel,
    rng: &mut R,
) -> Result<ImageGrid> {
    let clean = compose(a, cfg, model, rng)?;
    Ok(apply_noise(&clean, cfg, rng))
}
