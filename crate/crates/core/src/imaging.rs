//! Synthetic target chips, corruption models, and feature extraction.
//!
//! Chips are small grayscale intensity grids. [`generate_chip`] renders one of
//! six object silhouettes with pose jitter, a lit-side highlight, an acoustic
//! shadow trailing away from the sensor, and low-amplitude seabed clutter.
//! [`add_noise`] and [`apply_blur`] are the two corruption models used by the
//! sweeps, and [`vectorize`] produces the unit-norm feature vectors that the
//! dictionary and solver consume.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Smallest chip side accepted by [`generate_chip`].
pub const MIN_CHIP_SIDE: usize = 16;
/// Smallest feature side accepted by [`vectorize`].
pub const MIN_FEATURE_SIDE: usize = 4;

/// Rectangular grayscale image, row-major, nominal intensity range `[0, 1]`.
///
/// Corrupted chips may leave the nominal range; nothing here clamps except
/// PGM export.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageChip {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl ImageChip {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "chip dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(format!(
                "chip {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// A chip with every pixel set to `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Mean of squared intensities.
    pub fn mean_power(&self) -> f64 {
        self.pixels.iter().map(|p| p * p).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Object classes. The first four are the main classes, the last two are
/// treated as foreign objects that never appear in a dictionary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ShapeClass {
    Block = 0,
    Cone = 1,
    Cylinder = 2,
    Sphere = 3,
    Torus = 4,
    Pipe = 5,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; 6] = [
        ShapeClass::Block,
        ShapeClass::Cone,
        ShapeClass::Cylinder,
        ShapeClass::Sphere,
        ShapeClass::Torus,
        ShapeClass::Pipe,
    ];
    pub const MAIN: [ShapeClass; 4] = [
        ShapeClass::Block,
        ShapeClass::Cone,
        ShapeClass::Cylinder,
        ShapeClass::Sphere,
    ];
    pub const FOREIGN: [ShapeClass; 2] = [ShapeClass::Torus, ShapeClass::Pipe];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(index: u8) -> Option<Self> {
        Self::ALL.get(index as usize).copied()
    }

    pub fn is_main(self) -> bool {
        (self as u8) < 4
    }

    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Block => "block",
            ShapeClass::Cone => "cone",
            ShapeClass::Cylinder => "cylinder",
            ShapeClass::Sphere => "sphere",
            ShapeClass::Torus => "torus",
            ShapeClass::Pipe => "pipe",
        }
    }

    /// Per-class pool sizes of the reference sonar chip collection
    /// (blocks 88, cones 66, cylinders 308, spheres 66, pipes 22, toruses 22).
    pub fn reference_pool_size(self) -> usize {
        match self {
            ShapeClass::Block => 88,
            ShapeClass::Cone => 66,
            ShapeClass::Cylinder => 308,
            ShapeClass::Sphere => 66,
            ShapeClass::Torus => 22,
            ShapeClass::Pipe => 22,
        }
    }
}

impl fmt::Display for ShapeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        ShapeClass::ALL
            .into_iter()
            .find(|c| {
                let name = c.name();
                lower == name || lower == format!("{name}s") || lower == format!("{name}es")
            })
            .ok_or_else(|| Error::invalid(format!("unknown shape class '{s}'")))
    }
}

/// Width and height of the downsampled feature grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureDim {
    pub width: usize,
    pub height: usize,
}

impl FeatureDim {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Default for FeatureDim {
    fn default() -> Self {
        Self::new(16, 16)
    }
}

impl fmt::Display for FeatureDim {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl FromStr for FeatureDim {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (w, h) = s
            .trim()
            .split_once(['x', 'X'])
            .ok_or_else(|| Error::invalid(format!("expected WxH, got '{s}'")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("expected WxH, got '{s}'")))
        };
        Ok(Self::new(parse(w)?, parse(h)?))
    }
}

/// Test-time corruption: blur first, then additive noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub noise_variance: f64,
    pub blur_intensity: f64,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(noise_variance: f64, blur_intensity: f64, seed: u64) -> Result<Self> {
        check_non_negative("noise variance", noise_variance)?;
        check_non_negative("blur intensity", blur_intensity)?;
        Ok(Self {
            noise_variance,
            blur_intensity,
            seed,
        })
    }

    pub fn apply(&self, chip: &ImageChip) -> Result<ImageChip> {
        let blurred = apply_blur(chip, self.blur_intensity)?;
        add_noise(&blurred, self.noise_variance, self.seed)
    }
}

fn check_non_negative(what: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::invalid(format!(
            "{what} must be finite and >= 0, got {v}"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Chip synthesis
// ---------------------------------------------------------------------------

/// Object pose in normalized chip coordinates (`[-1, 1]` on both axes).
#[derive(Debug, Clone, Copy)]
struct Pose {
    angle: f64,
    scale: f64,
    cx: f64,
    cy: f64,
}

impl Pose {
    /// Maps a chip-frame point into the object frame.
    #[inline]
    fn to_object(self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        let du = (u - self.cx) / self.scale;
        let dv = (v - self.cy) / self.scale;
        (c * du + s * dv, -s * du + c * dv)
    }
}

fn inside(class: ShapeClass, p: (f64, f64)) -> bool {
    let (x, y) = p;
    match class {
        ShapeClass::Block => x.abs() <= 0.36 && y.abs() <= 0.24,
        ShapeClass::Cone => {
            // isoceles triangle, apex at (0, -0.42), base at y = 0.32
            if !(-0.42..=0.32).contains(&y) {
                return false;
            }
            let half_width = 0.38 * (y + 0.42) / 0.74;
            x.abs() <= half_width
        }
        ShapeClass::Cylinder => (x / 0.52).powi(2) + (y / 0.17).powi(2) <= 1.0,
        ShapeClass::Sphere => x * x + y * y <= 0.31 * 0.31,
        ShapeClass::Torus => {
            let r2 = x * x + y * y;
            (0.17 * 0.17..=0.35 * 0.35).contains(&r2)
        }
        ShapeClass::Pipe => x.abs() <= 0.66 && y.abs() <= 0.055,
    }
}

fn angle_jitter(class: ShapeClass) -> f64 {
    match class {
        ShapeClass::Pipe => PI / 2.0,
        ShapeClass::Cylinder => 45f64.to_radians(),
        _ => 30f64.to_radians(),
    }
}

/// Bilinear value noise on a coarse lattice; smooth seabed texture.
struct ValueNoise {
    cells: usize,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let lattice = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random::<f64>())
            .collect();
        Self { cells, lattice }
    }

    /// `fx`, `fy` in `[0, 1]`.
    fn sample(&self, fx: f64, fy: f64) -> f64 {
        let gx = fx * self.cells as f64;
        let gy = fy * self.cells as f64;
        let ix = (gx.floor() as usize).min(self.cells - 1);
        let iy = (gy.floor() as usize).min(self.cells - 1);
        let tx = gx - ix as f64;
        let ty = gy - iy as f64;
        let at = |x: usize, y: usize| self.lattice[y * (self.cells + 1) + x];
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Renders a synthetic target chip.
///
/// The sensor looks along `+x`: the object face toward `-x` carries the
/// highlight and an acoustic shadow trails toward `+x`. Output is a pure
/// function of `(class, pose_seed, size)` and every pixel lies in `[0, 1]`.
pub fn generate_chip(class: ShapeClass, pose_seed: u64, size: (usize, usize)) -> Result<ImageChip> {
    let (width, height) = size;
    if width < MIN_CHIP_SIDE || height < MIN_CHIP_SIDE {
        return Err(Error::invalid(format!(
            "chip size must be at least {MIN_CHIP_SIDE}x{MIN_CHIP_SIDE}, got {width}x{height}"
        )));
    }

    let stream = pose_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(class.index() as u64 + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(stream);

    let jitter = angle_jitter(class);
    let pose = Pose {
        angle: rng.random_range(-jitter..=jitter),
        scale: rng.random_range(0.85..=1.15),
        cx: rng.random_range(-0.06..=0.06),
        cy: rng.random_range(-0.06..=0.06),
    };
    let brightness = rng.random_range(0.8..=1.0);
    let clutter_level = rng.random_range(0.03..=0.10);
    let texture = ValueNoise::new(&mut rng, 8);

    let to_unit = |px: f64, extent: usize| 2.0 * px / extent as f64 - 1.0;
    let shadow_len = 0.4;
    let shadow_steps = ((shadow_len * width as f64 / 2.0).ceil() as usize).max(1);

    let mut pixels = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let fx = (col as f64 + 0.5) / width as f64;
            let fy = (row as f64 + 0.5) / height as f64;
            let background =
                clutter_level * (0.6 + 0.8 * texture.sample(fx, fy)) + 0.03 * rng.random::<f64>();

            // 3x3 supersampled coverage and shading
            let mut coverage = 0.0;
            let mut shade = 0.0;
            for sy in 0..3 {
                for sx in 0..3 {
                    let u = to_unit(col as f64 + (sx as f64 + 0.5) / 3.0, width);
                    let v = to_unit(row as f64 + (sy as f64 + 0.5) / 3.0, height);
                    if inside(class, pose.to_object(u, v)) {
                        coverage += 1.0 / 9.0;
                        // lit side toward -x
                        let t = ((pose.cx - u) / (0.6 * pose.scale)).clamp(-1.0, 1.0);
                        shade += (0.55 + 0.4 * t) / 9.0;
                    }
                }
            }

            let value = if coverage > 0.0 {
                let lit = brightness * shade / coverage;
                coverage * lit + (1.0 - coverage) * background
            } else {
                let u = to_unit(col as f64 + 0.5, width);
                let v = to_unit(row as f64 + 0.5, height);
                let step = shadow_len / shadow_steps as f64;
                let shadowed = (1..=shadow_steps)
                    .any(|k| inside(class, pose.to_object(u - k as f64 * step, v)));
                if shadowed {
                    0.25 * background
                } else {
                    background
                }
            };
            pixels.push(value.clamp(0.0, 1.0));
        }
    }
    ImageChip::new(width, height, pixels)
}

// ---------------------------------------------------------------------------
// Corruption
// ---------------------------------------------------------------------------

/// Adds i.i.d. zero-mean Gaussian noise of the given variance. No clamping.
pub fn add_noise(chip: &ImageChip, variance: f64, seed: u64) -> Result<ImageChip> {
    check_non_negative("noise variance", variance)?;
    if variance == 0.0 {
        return Ok(chip.clone());
    }
    let normal = Normal::new(0.0, variance.sqrt())
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = chip
        .pixels
        .iter()
        .map(|p| p + normal.sample(&mut rng))
        .collect();
    ImageChip::new(chip.width, chip.height, pixels)
}

/// Signal-to-noise ratio in dB: `10·log10(mean(clean²) / variance)`.
pub fn snr_db(clean: &ImageChip, variance: f64) -> f64 {
    10.0 * (clean.mean_power() / variance).log10()
}

/// Side of the blur kernel for intensity `b`: `max(1, round(b))`, bumped to
/// the next odd number.
pub fn blur_kernel_side(b: f64) -> usize {
    let side = (b.round() as usize).max(1);
    if side.is_multiple_of(2) {
        side + 1
    } else {
        side
    }
}

/// Normalized square Gaussian kernel with standard deviation `b`, row-major.
pub fn gaussian_kernel(b: f64) -> Result<(usize, Vec<f64>)> {
    check_non_negative("blur intensity", b)?;
    let side = blur_kernel_side(b);
    if b == 0.0 || side == 1 {
        return Ok((1, vec![1.0]));
    }
    let half = (side / 2) as isize;
    let two_var = 2.0 * b * b;
    let mut weights = Vec::with_capacity(side * side);
    for dy in -half..=half {
        for dx in -half..=half {
            weights.push((-((dx * dx + dy * dy) as f64) / two_var).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok((side, weights))
}

/// Convolves with [`gaussian_kernel`]`(b)` using replicate-edge boundaries.
pub fn apply_blur(chip: &ImageChip, b: f64) -> Result<ImageChip> {
    let (side, kernel) = gaussian_kernel(b)?;
    if side == 1 {
        return Ok(chip.clone());
    }
    let half = (side / 2) as isize;
    let (w, h) = (chip.width as isize, chip.height as isize);
    let mut out = Vec::with_capacity(chip.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            let mut k = 0;
            for dy in -half..=half {
                let sy = (y + dy).clamp(0, h - 1) as usize;
                for dx in -half..=half {
                    let sx = (x + dx).clamp(0, w - 1) as usize;
                    acc += kernel[k] * chip.pixels[sy * chip.width + sx];
                    k += 1;
                }
            }
            out.push(acc);
        }
    }
    ImageChip::new(chip.width, chip.height, out)
}

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

/// Area-weighted overlap of source pixels with each output cell along one axis.
fn overlap_weights(src: usize, dst: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let lo = i as f64 * ratio;
            let hi = (i + 1) as f64 * ratio;
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(src);
            (first..last)
                .filter_map(|p| {
                    let w = (hi.min(p as f64 + 1.0) - lo.max(p as f64)).max(0.0);
                    (w > 0.0).then_some((p, w))
                })
                .collect()
        })
        .collect()
}

/// Area-average downsample to `width × height`, row-major.
///
/// Each output value is the mean of the chip over the output cell's footprint,
/// with fractional pixel overlaps weighted by area.
pub fn downsample(chip: &ImageChip, width: usize, height: usize) -> Result<Vec<f64>> {
    if width == 0 || height == 0 || width > chip.width || height > chip.height {
        return Err(Error::invalid(format!(
            "cannot downsample {}x{} chip to {width}x{height}",
            chip.width, chip.height
        )));
    }
    let wx = overlap_weights(chip.width, width);
    let wy = overlap_weights(chip.height, height);
    let cell_area = (chip.width as f64 / width as f64) * (chip.height as f64 / height as f64);
    let mut out = Vec::with_capacity(width * height);
    for row in &wy {
        for col in &wx {
            let mut acc = 0.0;
            for &(py, ay) in row {
                for &(px, ax) in col {
                    acc += ay * ax * chip.get(px, py);
                }
            }
            out.push(acc / cell_area);
        }
    }
    Ok(out)
}

/// Downsamples to `dim`, flattens row-major, and scales to unit ℓ2 norm.
///
/// An all-zero chip maps to the zero vector.
pub fn vectorize(chip: &ImageChip, dim: FeatureDim) -> Result<Vec<f64>> {
    if dim.width < MIN_FEATURE_SIDE || dim.height < MIN_FEATURE_SIDE {
        return Err(Error::invalid(format!(
            "feature grid must be at least {MIN_FEATURE_SIDE}x{MIN_FEATURE_SIDE}, got {dim}"
        )));
    }
    if chip.pixels.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("chip contains non-finite pixels"));
    }
    let mut v = downsample(chip, dim.width, dim.height)?;
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// PGM
// ---------------------------------------------------------------------------

/// Encodes as binary 8-bit PGM (`P5`, maxval 255). Pixels are clamped to
/// `[0, 1]` and rounded to the nearest level.
pub fn write_pgm(chip: &ImageChip) -> Result<Vec<u8>> {
    if chip.pixels.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("cannot encode non-finite pixels"));
    }
    let mut out = format!("P5\n{} {}\n255\n", chip.width, chip.height).into_bytes();
    out.extend(
        chip.pixels
            .iter()
            .map(|p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

struct PgmCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl PgmCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(start, format!("{what} out of range")))
    }
}

/// Decodes a binary 8-bit PGM (`P5`) stream; levels map to `[0, 1]` by `/255`.
pub fn read_pgm(bytes: &[u8]) -> Result<ImageChip> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::parse(0, "missing P5 magic"));
    }
    let mut cur = PgmCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval_at = cur.pos;
    let maxval = cur.number("maxval")?;
    if maxval != 255 {
        return Err(Error::parse(
            maxval_at,
            format!("maxval {maxval} unsupported, expected 255"),
        ));
    }
    if width == 0 || height == 0 {
        return Err(Error::parse(maxval_at, "zero image dimension"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(Error::parse(cur.pos, "expected whitespace after maxval")),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::parse(cur.pos, "image dimensions overflow"))?;
    let payload = &bytes[cur.pos..];
    if payload.len() < n {
        return Err(Error::parse(
            bytes.len(),
            format!(
                "truncated payload: expected {n} bytes, found {}",
                payload.len()
            ),
        ));
    }
    let pixels = payload[..n].iter().map(|&b| b as f64 / 255.0).collect();
    ImageChip::new(width, height, pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn impulse(side: usize) -> ImageChip {
        let mut px = vec![0.0; side * side];
        px[(side / 2) * side + side / 2] = 1.0;
        ImageChip::new(side, side, px).unwrap()
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_chip(ShapeClass::Sphere, 7, (64, 64)).unwrap();
        let b = generate_chip(ShapeClass::Sphere, 7, (64, 64)).unwrap();
        assert_eq!(a.pixels(), b.pixels());
        assert_eq!((a.width(), a.height()), (64, 64));
    }

    #[test]
    fn pose_seed_changes_pixels() {
        let a = generate_chip(ShapeClass::Block, 1, (64, 64)).unwrap();
        let b = generate_chip(ShapeClass::Block, 2, (64, 64)).unwrap();
        assert_ne!(a.pixels(), b.pixels());
    }

    #[test]
    fn generated_pixels_in_unit_range() {
        for class in ShapeClass::ALL {
            for seed in 0..5 {
                let chip = generate_chip(class, seed, (48, 40)).unwrap();
                assert!(chip.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }

    #[test]
    fn torus_has_dark_center() {
        let chip = generate_chip(ShapeClass::Torus, 3, (64, 64)).unwrap();
        // brute-force radial profile around the chip center
        let (cx, cy) = (31.5, 31.5);
        let mut rings = vec![(0.0, 0usize); 33];
        for y in 0..64 {
            for x in 0..64 {
                let r = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                let bin = r.round() as usize;
                if bin < rings.len() {
                    rings[bin].0 += chip.get(x, y);
                    rings[bin].1 += 1;
                }
            }
        }
        let profile: Vec<f64> = rings.iter().map(|(s, n)| s / *n as f64).collect();
        let center = chip.get(32, 32);
        let ring_peak = profile.iter().cloned().fold(f64::MIN, f64::max);
        assert!(center < ring_peak, "center {center} ring peak {ring_peak}");
        assert!(center < 0.5 * ring_peak);
    }

    #[test]
    fn tiny_chip_rejected() {
        assert!(matches!(
            generate_chip(ShapeClass::Cone, 0, (15, 64)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn zero_noise_is_identity() {
        let chip = generate_chip(ShapeClass::Cone, 4, (32, 32)).unwrap();
        assert_eq!(add_noise(&chip, 0.0, 99).unwrap(), chip);
    }

    #[test]
    fn negative_noise_variance_rejected() {
        let chip = ImageChip::filled(16, 16, 0.5).unwrap();
        assert!(add_noise(&chip, -0.1, 0).is_err());
    }

    #[test]
    fn noise_sample_statistics() {
        let chip = generate_chip(ShapeClass::Cylinder, 11, (64, 64)).unwrap();
        let noisy = add_noise(&chip, 0.04, 5).unwrap();
        let diff: Vec<f64> = noisy
            .pixels()
            .iter()
            .zip(chip.pixels())
            .map(|(a, b)| a - b)
            .collect();
        let n = diff.len() as f64;
        let mean = diff.iter().sum::<f64>() / n;
        let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 0.04).abs() <= 0.2 * 0.04, "var {var}");
    }

    #[test]
    fn noise_does_not_clamp() {
        let chip = ImageChip::filled(64, 64, 0.0).unwrap();
        let noisy = add_noise(&chip, 0.1, 1).unwrap();
        assert!(noisy.pixels().iter().any(|p| *p < 0.0));
    }

    #[test]
    fn snr_at_tenth_variance() {
        // chip with mean power 0.01 (rms intensity 0.1): σ² = 0.1 gives −10 dB
        let clean = ImageChip::filled(64, 64, 0.1).unwrap();
        let noisy = add_noise(&clean, 0.1, 17).unwrap();
        let noise_power = noisy
            .pixels()
            .iter()
            .zip(clean.pixels())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 4096.0;
        let empirical = 10.0 * (clean.mean_power() / noise_power).log10();
        assert!((empirical + 10.0).abs() <= 3.0, "empirical SNR {empirical}");
        assert!((snr_db(&clean, 0.1) + 10.0).abs() < 1e-9);
        // unit-power chip under the same formula sits at +10 dB
        let unit = ImageChip::filled(64, 64, 1.0).unwrap();
        assert!((snr_db(&unit, 0.1) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn kernel_side_rule() {
        assert_eq!(blur_kernel_side(0.0), 1);
        assert_eq!(blur_kernel_side(0.4), 1);
        assert_eq!(blur_kernel_side(1.0), 1);
        assert_eq!(blur_kernel_side(1.5), 3);
        assert_eq!(blur_kernel_side(2.0), 3);
        assert_eq!(blur_kernel_side(3.0), 3);
        assert_eq!(blur_kernel_side(4.0), 5);
        assert_eq!(blur_kernel_side(6.0), 7);
    }

    #[test]
    fn kernel_sums_to_one() {
        for b in [0.5, 1.5, 2.0, 3.3, 6.0, 9.0] {
            let (_, k) = gaussian_kernel(b).unwrap();
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_blur_is_identity() {
        let chip = generate_chip(ShapeClass::Block, 2, (32, 32)).unwrap();
        assert_eq!(apply_blur(&chip, 0.0).unwrap(), chip);
    }

    #[test]
    fn blur_of_impulse_is_kernel() {
        let chip = impulse(15);
        let out = apply_blur(&chip, 2.0).unwrap();
        let (side, kernel) = gaussian_kernel(2.0).unwrap();
        let half = side / 2;
        for ky in 0..side {
            for kx in 0..side {
                let got = out.get(7 + kx - half, 7 + ky - half);
                assert!((got - kernel[ky * side + kx]).abs() < 1e-15);
            }
        }
        let total: f64 = out.pixels().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn blur_preserves_constant() {
        let chip = ImageChip::filled(20, 17, 0.37).unwrap();
        for b in [1.0, 2.0, 4.0, 6.0, 12.0] {
            let out = apply_blur(&chip, b).unwrap();
            assert!(out.pixels().iter().all(|p| (p - 0.37).abs() < 1e-12));
        }
    }

    #[test]
    fn negative_blur_rejected() {
        let chip = ImageChip::filled(16, 16, 0.5).unwrap();
        assert!(apply_blur(&chip, -1.0).is_err());
    }

    #[test]
    fn vectorize_unit_norm() {
        let chip = generate_chip(ShapeClass::Sphere, 3, (64, 64)).unwrap();
        let v = vectorize(&chip, FeatureDim::new(16, 16)).unwrap();
        assert_eq!(v.len(), 256);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vectorize_constant_chip() {
        let chip = ImageChip::filled(30, 21, 0.8).unwrap();
        for (w, h) in [(4, 4), (7, 5), (30, 21), (9, 13)] {
            let v = vectorize(&chip, FeatureDim::new(w, h)).unwrap();
            let expected = 1.0 / ((w * h) as f64).sqrt();
            assert!(v.iter().all(|a| (a - expected).abs() < 1e-12));
        }
    }

    #[test]
    fn downsample_two_by_two_block() {
        let chip = ImageChip::new(2, 2, vec![0.1, 0.4, 0.7, 0.2]).unwrap();
        let brute = chip.pixels().iter().sum::<f64>() / 4.0;
        let v = downsample(&chip, 1, 1).unwrap();
        assert!((v[0] - brute).abs() < 1e-15);
    }

    #[test]
    fn downsample_fractional_cells() {
        // 3 -> 2 along x: cells cover [0,1.5) and [1.5,3)
        let chip = ImageChip::new(3, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let v = downsample(&chip, 2, 1).unwrap();
        assert!((v[0] - (1.0 + 0.5 * 2.0) / 1.5).abs() < 1e-12);
        assert!((v[1] - (0.5 * 2.0 + 4.0) / 1.5).abs() < 1e-12);
    }

    #[test]
    fn vectorize_zero_chip_is_zero() {
        let chip = ImageChip::filled(16, 16, 0.0).unwrap();
        let v = vectorize(&chip, FeatureDim::new(8, 8)).unwrap();
        assert!(v.iter().all(|a| *a == 0.0));
    }

    #[test]
    fn vectorize_rejects_oversized_grid() {
        let chip = ImageChip::filled(16, 16, 0.5).unwrap();
        assert!(vectorize(&chip, FeatureDim::new(17, 8)).is_err());
        assert!(vectorize(&chip, FeatureDim::new(3, 8)).is_err());
    }

    #[test]
    fn pgm_extremes_round_trip_exactly() {
        for v in [0.0, 1.0] {
            let chip = ImageChip::filled(4, 4, v).unwrap();
            let back = read_pgm(&write_pgm(&chip).unwrap()).unwrap();
            assert_eq!(back, chip);
        }
    }

    #[test]
    fn pgm_random_round_trip_within_half_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let px: Vec<f64> = (0..64).map(|_| rng.random::<f64>()).collect();
        let chip = ImageChip::new(8, 8, px).unwrap();
        let back = read_pgm(&write_pgm(&chip).unwrap()).unwrap();
        let worst = chip
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 510.0 + 1e-15, "{worst}");
    }

    #[test]
    fn pgm_header_with_comments() {
        let mut bytes = b"P5\n# made by hand\n2 1\n# another\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let chip = read_pgm(&bytes).unwrap();
        assert_eq!(chip.pixels(), &[0.0, 1.0]);
    }

    #[test]
    fn pgm_errors_carry_offsets() {
        match read_pgm(b"P2\n1 1\n255\n\0") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
        match read_pgm(b"P5\n4 4\n255\n\0\0") {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 13);
                assert!(message.contains("truncated"));
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            read_pgm(b"P5\nx 4\n255\n"),
            Err(Error::Parse { offset: 3, .. })
        ));
        assert!(read_pgm(b"P5\n1 1\n65535\n\0\0").is_err());
    }

    #[test]
    fn class_names_parse() {
        for c in ShapeClass::ALL {
            assert_eq!(c.name().parse::<ShapeClass>().unwrap(), c);
        }
        assert_eq!("Toruses".parse::<ShapeClass>().unwrap(), ShapeClass::Torus);
        assert_eq!(
            "Cylinders".parse::<ShapeClass>().unwrap(),
            ShapeClass::Cylinder
        );
        assert!("boat".parse::<ShapeClass>().is_err());
    }

    #[test]
    fn feature_dim_parse() {
        assert_eq!(
            "16x16".parse::<FeatureDim>().unwrap(),
            FeatureDim::new(16, 16)
        );
        assert_eq!(
            " 8X12 ".parse::<FeatureDim>().unwrap(),
            FeatureDim::new(8, 12)
        );
        assert!("16".parse::<FeatureDim>().is_err());
    }
}
