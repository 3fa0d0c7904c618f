//! Deterministic simulation of missing-completely-at-random masks.
//!
//! Masks are never stored: each sample's mask is regenerated on demand from a
//! 64-bit seed hashed out of the sample's own feature values, so every
//! consumer of a dataset sees the same entries missing across runs. The hash
//! is FNV-1a over the little-endian bytes of the features quantized to six
//! decimal places, mixed with a caller-provided salt. Seeds feed
//! `ChaCha8Rng::seed_from_u64` (a splitmix-style expansion into a
//! counter-based stream cipher), which is platform-independent.
//!
//! Two mechanisms are provided:
//! - uniform: each entry is missing independently with probability `rate`;
//! - rectangular: a single axis-aligned rectangle of a 2-D grid is missing
//!   (or, for rates above one half, observed). Rectangle width and height
//!   are drawn from a Beta distribution whose parameters are calibrated
//!   numerically so that the average missing rate hits the target.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::MaskedSample;
use crate::error::{Error, Result};

pub const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Number of evenly spaced parameter values simulated per calibration sweep
/// over `[1, 10]` (step 0.05), with linear interpolation in between.
pub const CALIBRATION_GRID_POINTS: usize = 181;
/// Monte Carlo draws per simulated grid point.
pub const CALIBRATION_DRAWS: usize = 100_000;
/// Calibrated parameters must reproduce the target rate this closely.
pub const CALIBRATION_TOLERANCE: f64 = 0.01;

#[inline]
pub fn fnv1a_step(hash: u64, byte: u8) -> u64 {
    (hash ^ u64::from(byte)).wrapping_mul(FNV_PRIME)
}

/// 64-bit FNV-1a over a byte stream.
pub fn fnv1a_64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(FNV_OFFSET, fnv1a_step)
}

/// Binary observation mask: `true` (1) = observed, `false` (0) = missing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    bits: Vec<bool>,
}

impl Mask {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Mask { bits }
    }

    pub fn all_observed(len: usize) -> Self {
        Mask { bits: vec![true; len] }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_observed(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn missing_count(&self) -> usize {
        self.len() - self.observed_count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.missing_count() as f64 / self.len() as f64
        }
    }

    pub fn complement(&self) -> Mask {
        Mask {
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// Mask as a 0/1 vector for Hadamard arithmetic.
    pub fn as_f64(&self) -> Array1<f64> {
        Array1::from_iter(self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }))
    }

    /// Run-length encoding: the value of bit 0 plus the lengths of the
    /// alternating runs. An empty mask encodes as `first=true, runs=[]`.
    pub fn run_length_encode(&self) -> MaskRle {
        let first = self.bits.first().copied().unwrap_or(true);
        let mut runs = Vec::new();
        let mut current = first;
        let mut len = 0usize;
        for &b in &self.bits {
            if b == current {
                len += 1;
            } else {
                runs.push(len);
                current = b;
                len = 1;
            }
        }
        if len > 0 {
            runs.push(len);
        }
        MaskRle { first, runs }
    }

    pub fn from_rle(rle: &MaskRle) -> Mask {
        let mut bits = Vec::with_capacity(rle.runs.iter().sum());
        let mut value = rle.first;
        for &len in &rle.runs {
            bits.extend(std::iter::repeat(value).take(len));
            value = !value;
        }
        Mask { bits }
    }
}

/// Run-length encoded mask, the export format for mask dumps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskRle {
    pub first: bool,
    pub runs: Vec<usize>,
}

/// Missingness mechanism selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Uniform,
    Rectangular,
}

/// Calibrated Beta parameters for the rectangular mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectSpec {
    pub grid: (usize, usize),
    pub alpha: f64,
    pub beta: f64,
    /// When set (rates above one half), the rectangle is the observed region
    /// and everything else is missing.
    pub invert: bool,
}

/// Mechanism, rate, and seeding policy for deterministic mask synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessSpec {
    pub mechanism: Mechanism,
    pub rate: f64,
    pub salt: u64,
    pub rect: Option<RectSpec>,
}

impl MissingnessSpec {
    pub fn uniform(rate: f64, salt: u64) -> Result<Self> {
        check_rate(rate)?;
        Ok(MissingnessSpec {
            mechanism: Mechanism::Uniform,
            rate,
            salt,
            rect: None,
        })
    }

    /// Builds a rectangular spec by calibrating Beta parameters for `rate`
    /// on the given grid.
    pub fn rectangular(rate: f64, grid: (usize, usize), salt: u64) -> Result<Self> {
        let calib = calibrate_beta(rate, grid)?;
        Ok(MissingnessSpec {
            mechanism: Mechanism::Rectangular,
            rate,
            salt,
            rect: Some(RectSpec {
                grid,
                alpha: calib.alpha,
                beta: calib.beta,
                invert: calib.invert,
            }),
        })
    }
}

/// A sampled rectangle: integer center plus real-valued width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectParams {
    pub center_x: usize,
    pub center_y: usize,
    pub width: f64,
    pub height: f64,
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) || !rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "missing rate {rate} must lie in [0, 1]"
        )));
    }
    Ok(())
}

/// Deterministic 64-bit seed for a feature vector: FNV-1a over the
/// little-endian bytes of each feature quantized to six decimal places, then
/// over the salt's little-endian bytes.
pub fn hash_seed(features: ArrayView1<'_, f64>, salt: u64) -> Result<u64> {
    let mut hash = FNV_OFFSET;
    for &x in features.iter() {
        if !x.is_finite() {
            return Err(Error::non_finite("hash_seed feature"));
        }
        let quantized = (x * 1e6).round() as i64;
        for byte in quantized.to_le_bytes() {
            hash = fnv1a_step(hash, byte);
        }
    }
    for byte in salt.to_le_bytes() {
        hash = fnv1a_step(hash, byte);
    }
    Ok(hash)
}

/// Uniform MCAR mask: each entry is missing independently with probability
/// `rate`, drawn from an RNG seeded by [`hash_seed`].
pub fn gen_uniform_mask(features: ArrayView1<'_, f64>, rate: f64, salt: u64) -> Result<Mask> {
    check_rate(rate)?;
    let seed = hash_seed(features, salt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits = (0..features.len())
        .map(|_| rng.random::<f64>() >= rate)
        .collect();
    Ok(Mask::from_bits(bits))
}

/// Rectangular MCAR mask on a 2-D grid, flattened row-major. Draw order per
/// sample: center x, center y, width, height.
pub fn gen_rect_mask(grid: &Array2<f64>, spec: &MissingnessSpec) -> Result<Mask> {
    let rect = spec.rect.as_ref().ok_or_else(|| {
        Error::InvalidArgument("rectangular mask generation needs calibrated rect parameters".into())
    })?;
    if spec.mechanism != Mechanism::Rectangular {
        return Err(Error::InvalidArgument(
            "gen_rect_mask called with a non-rectangular spec".into(),
        ));
    }
    let (n_x, n_y) = rect.grid;
    if grid.nrows() != n_x || grid.ncols() != n_y {
        return Err(Error::shape(
            "gen_rect_mask",
            format!("{n_x}x{n_y} grid"),
            format!("{}x{}", grid.nrows(), grid.ncols()),
        ));
    }
    let flat = grid
        .as_slice()
        .ok_or_else(|| Error::InvalidArgument("grid must be contiguous row-major".into()))?;
    let seed = hash_seed(ArrayView1::from(flat), spec.salt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = sample_rect_params(&mut rng, rect, (n_x, n_y));
    Ok(rect_mask_from_params(&params, (n_x, n_y), rect.invert))
}

fn sample_rect_params(rng: &mut ChaCha8Rng, rect: &RectSpec, grid: (usize, usize)) -> RectParams {
    let (n_x, n_y) = grid;
    let center_x = rng.random_range(0..n_x);
    let center_y = rng.random_range(0..n_y);
    let width = sample_beta(rng, rect.alpha, rect.beta) * n_x as f64;
    let height = sample_beta(rng, rect.alpha, rect.beta) * n_y as f64;
    RectParams {
        center_x,
        center_y,
        width,
        height,
    }
}

/// Rasterizes a rectangle into a mask. A cell `(i, j)` is inside when its
/// center `(i + 0.5, j + 0.5)` lies in the half-open box
/// `[cx - w/2, cx + w/2) x [cy - h/2, cy + h/2)`. Inside cells are missing,
/// or observed when `invert` is set.
pub fn rect_mask_from_params(params: &RectParams, grid: (usize, usize), invert: bool) -> Mask {
    let (n_x, n_y) = grid;
    let (x_start, x_end) = axis_cell_range(params.center_x as f64, params.width, n_x);
    let (y_start, y_end) = axis_cell_range(params.center_y as f64, params.height, n_y);
    let mut bits = vec![!invert; n_x * n_y];
    for i in x_start..x_end {
        for j in y_start..y_end {
            bits[i * n_y + j] = invert;
        }
    }
    Mask::from_bits(bits)
}

/// Indices of cells whose centers fall inside `[c - w/2, c + w/2)`, clipped
/// to `[0, n)`. Shared by the rasterizer and the calibration simulation so
/// the two can never disagree.
fn axis_cell_range(center: f64, width: f64, n: usize) -> (usize, usize) {
    let lo = (center - width / 2.0).max(0.0);
    let hi = (center + width / 2.0).min(n as f64);
    if hi <= lo {
        return (0, 0);
    }
    // Cell i is inside iff lo <= i + 0.5 < hi.
    let start = (lo - 0.5).ceil().max(0.0) as usize;
    let end = ((hi - 0.5).ceil().max(0.0) as usize).min(n);
    if end <= start {
        (0, 0)
    } else {
        (start, end)
    }
}

/// Beta(alpha, beta) sampler. The single-parameter families used by the
/// calibrated rectangular mechanism go through exact inverse-CDF transforms;
/// the general case uses Marsaglia-Tsang gamma sampling.
pub fn sample_beta(rng: &mut ChaCha8Rng, alpha: f64, beta: f64) -> f64 {
    if (beta - 1.0).abs() < 1e-12 {
        rng.random::<f64>().powf(1.0 / alpha)
    } else if (alpha - 1.0).abs() < 1e-12 {
        1.0 - rng.random::<f64>().powf(1.0 / beta)
    } else {
        let g1 = sample_gamma(rng, alpha);
        let g2 = sample_gamma(rng, beta);
        g1 / (g1 + g2)
    }
}

/// Marsaglia-Tsang squeeze method, valid for shape >= 1.
fn sample_gamma(rng: &mut ChaCha8Rng, shape: f64) -> f64 {
    debug_assert!(shape >= 1.0);
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (3.0 * d.sqrt());
    loop {
        let x: f64 = StandardNormal.sample(rng);
        let v = (1.0 + c * x).powi(3);
        if v <= 0.0 {
            continue;
        }
        let u: f64 = rng.random();
        if u < 1.0 - 0.0331 * x.powi(4) {
            return d * v;
        }
        if u.ln() < 0.5 * x * x + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Expected missing rate of the (non-inverted) rectangular mechanism under
/// Beta(alpha, beta) sizing, estimated by Monte Carlo over `draws` samples.
pub fn simulate_rect_rate(
    alpha: f64,
    beta: f64,
    grid: (usize, usize),
    draws: usize,
    seed: u64,
) -> f64 {
    let (n_x, n_y) = grid;
    let total = (n_x * n_y) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..draws {
        let center_x = rng.random_range(0..n_x);
        let center_y = rng.random_range(0..n_y);
        let width = sample_beta(&mut rng, alpha, beta) * n_x as f64;
        let height = sample_beta(&mut rng, alpha, beta) * n_y as f64;
        let (xs, xe) = axis_cell_range(center_x as f64, width, n_x);
        let (ys, ye) = axis_cell_range(center_y as f64, height, n_y);
        sum += ((xe - xs) * (ye - ys)) as f64 / total;
    }
    sum / draws as f64
}

/// Result of calibrating the rectangular mechanism for a target rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaCalibration {
    pub alpha: f64,
    pub beta: f64,
    pub invert: bool,
    /// Simulated mean missing rate at the returned parameters (before
    /// inversion).
    pub achieved: f64,
}

const CALIBRATION_SEED: u64 = 0x5eed_ca11_b0a7_ed01;

/// Calibrates Beta parameters so the rectangular mechanism's average missing
/// rate matches `rate` within [`CALIBRATION_TOLERANCE`].
///
/// The search keeps one parameter fixed at 1 and sweeps the other over
/// `[1, 10]`: with `alpha = 1`, growing `beta` shrinks rectangles (rates
/// below the Beta(1,1) pivot); with `beta = 1`, growing `alpha` enlarges
/// them. Rates above one half are calibrated at `1 - rate` with the invert
/// flag set, so only the rectangle is observed.
pub fn calibrate_beta(rate: f64, grid: (usize, usize)) -> Result<BetaCalibration> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "rectangular calibration needs a rate in (0, 1), got {rate}"
        )));
    }
    if rate > 0.5 {
        // Quantize the complement so calibrate(r) and calibrate(1 - r)
        // return identical parameters despite floating-point subtraction.
        let complement = ((1.0 - rate) * 1e12).round() / 1e12;
        let mut calib = calibrate_non_inverted(complement, grid)?;
        calib.invert = true;
        return Ok(calib);
    }
    calibrate_non_inverted(rate, grid)
}

fn calibrate_non_inverted(rate: f64, grid: (usize, usize)) -> Result<BetaCalibration> {
    let pivot = simulate_rect_rate(1.0, 1.0, grid, CALIBRATION_DRAWS, CALIBRATION_SEED);
    let sweep_beta = rate <= pivot;
    let mut params = Vec::with_capacity(CALIBRATION_GRID_POINTS);
    let mut rates = Vec::with_capacity(CALIBRATION_GRID_POINTS);
    for i in 0..CALIBRATION_GRID_POINTS {
        let p = 1.0 + 9.0 * i as f64 / (CALIBRATION_GRID_POINTS - 1) as f64;
        let (a, b) = if sweep_beta { (1.0, p) } else { (p, 1.0) };
        params.push(p);
        rates.push(simulate_rect_rate(
            a,
            b,
            grid,
            CALIBRATION_DRAWS,
            CALIBRATION_SEED.wrapping_add(i as u64),
        ));
    }
    // Rates decrease along a beta sweep and increase along an alpha sweep;
    // normalize to an increasing view for the bracket search.
    let increasing: Vec<(f64, f64)> = if sweep_beta {
        params.iter().rev().zip(rates.iter().rev()).map(|(&p, &r)| (p, r)).collect()
    } else {
        params.iter().zip(rates.iter()).map(|(&p, &r)| (p, r)).collect()
    };
    let min_rate = increasing.first().map(|&(_, r)| r).unwrap();
    let max_rate = increasing.last().map(|&(_, r)| r).unwrap();
    if rate < min_rate - CALIBRATION_TOLERANCE || rate > max_rate + CALIBRATION_TOLERANCE {
        return Err(Error::UnreachableRate {
            target: rate,
            min: min_rate.min(1e-9),
            max: max_rate,
        });
    }
    let clamped = rate.clamp(min_rate, max_rate);
    let mut param = increasing.last().unwrap().0;
    for window in increasing.windows(2) {
        let (p0, r0) = window[0];
        let (p1, r1) = window[1];
        if clamped >= r0 && clamped <= r1 {
            let t = if r1 > r0 { (clamped - r0) / (r1 - r0) } else { 0.0 };
            param = p0 + t * (p1 - p0);
            break;
        }
    }
    let (alpha, beta) = if sweep_beta { (1.0, param) } else { (param, 1.0) };
    let achieved = simulate_rect_rate(alpha, beta, grid, CALIBRATION_DRAWS, CALIBRATION_SEED ^ 0xa5a5);
    if (achieved - rate).abs() > CALIBRATION_TOLERANCE {
        return Err(Error::UnreachableRate {
            target: rate,
            min: min_rate,
            max: max_rate,
        });
    }
    Ok(BetaCalibration {
        alpha,
        beta,
        invert: false,
        achieved,
    })
}

/// Generates the mask for one flat feature vector under `spec`. Rectangular
/// specs require the vector length to match the calibrated grid (row-major).
pub fn gen_mask(features: ArrayView1<'_, f64>, spec: &MissingnessSpec) -> Result<Mask> {
    match spec.mechanism {
        Mechanism::Uniform => gen_uniform_mask(features, spec.rate, spec.salt),
        Mechanism::Rectangular => {
            let rect = spec.rect.as_ref().ok_or_else(|| {
                Error::InvalidArgument("rectangular spec without calibrated parameters".into())
            })?;
            let (n_x, n_y) = rect.grid;
            if features.len() != n_x * n_y {
                return Err(Error::shape(
                    "gen_mask (rectangular)",
                    format!("{} features ({n_x}x{n_y})", n_x * n_y),
                    format!("{}", features.len()),
                ));
            }
            let grid = Array2::from_shape_vec((n_x, n_y), features.to_vec())
                .expect("length checked above");
            gen_rect_mask(&grid, spec)
        }
    }
}

/// Copies observed entries verbatim and fills missing entries with NaN; the
/// mask stays alongside as the source of truth.
pub fn apply_mask(features: ArrayView1<'_, f64>, mask: &Mask) -> Result<MaskedSample> {
    if features.len() != mask.len() {
        return Err(Error::shape(
            "apply_mask",
            format!("{} features", mask.len()),
            format!("{}", features.len()),
        ));
    }
    let values = Array1::from_iter(
        features
            .iter()
            .zip(mask.bits())
            .map(|(&x, &observed)| if observed { x } else { f64::NAN }),
    );
    Ok(MaskedSample::new(values, mask.clone(), None))
}
