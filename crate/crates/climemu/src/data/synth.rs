//! Seeded synthetic scenarios: a desk-scale stand-in for emission-pathway
//! simulation archives.
//!
//! Every scenario draws its forcing trajectory parameters from one ChaCha
//! stream, so a seed pins the entire suite bit-for-bit. Outputs follow the
//! documented ground truth below, plus optional smooth noise of amplitude
//! `noise` on tas.
//!
//! Ground truth (`T` is the noisy tas value at a cell):
//!
//! ```text
//! tas  = 0.4 + 0.9 co2 (1 + 0.4 sin^2(lat)) + resp(ch4) (1 + 0.3 cos(lat))
//!        - 0.45 (so2 + bc)
//!        resp(ch4) = 0.8 ch4 / (0.4 + ch4)    (plain 0.5 ch4 in linear mode)
//! dtr  = 0.3 + 0.25 tanh(T - 1.5)             (0.3 + 0.25 (T - 1.5) linear)
//! pr   = T + exp(0.7 (T - 1.5)) + 0.5         (1.7 T + 0.5 linear)
//! pr90 = 1.3 T + exp(0.8 (T - 1.5)) + 0.8     (2.1 T + 0.8 linear)
//! ```
//!
//! pr and pr90 amplify tas perturbations everywhere (their slopes in `T`
//! exceed 1), so precipitation is deliberately the harder target.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Grid, OutputVariable, ScenarioDataset};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// Generator settings.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub seed: u64,
    pub n_scenarios: usize,
    pub n_years: usize,
    pub n_lat: usize,
    pub n_lon: usize,
    /// Pointwise standard deviation of the smooth tas noise; 0 disables it.
    pub noise: f64,
    /// First simulated year; years run to `start_year + n_years - 1`.
    pub start_year: i32,
    /// Make all responses affine in the forcings (exactness tests).
    pub linear: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            n_scenarios: 3,
            n_years: 51,
            n_lat: 8,
            n_lon: 16,
            noise: 0.1,
            start_year: 2050,
            linear: false,
        }
    }
}

/// Cell-center latitudes, south to north.
pub fn grid_for(n_lat: usize, n_lon: usize) -> Grid {
    let step = 180.0 / n_lat as f64;
    let lat_degrees = (0..n_lat)
        .map(|i| -90.0 + step * (i as f64 + 0.5))
        .collect();
    Grid {
        n_lat,
        n_lon,
        lat_degrees,
    }
}

/// Fixed aerosol emission patterns (identical across scenarios; only the
/// amplitude path varies). `center_lat` places the bump, `width` its decay.
fn aerosol_pattern(grid: &Grid, center_lat: f64, width: f64, phase: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.cells());
    for lat in &grid.lat_degrees {
        let band = (-((lat - center_lat) / width).powi(2) / 2.0).exp();
        for j in 0..grid.n_lon {
            let lon = 2.0 * PI * j as f64 / grid.n_lon as f64;
            out.push(band * (1.0 + 0.5 * (lon + phase).cos()));
        }
    }
    out
}

/// Noiseless tas field from one year's forcings.
pub fn ground_truth_tas(
    co2: f64,
    ch4: f64,
    so2: &[f64],
    bc: &[f64],
    grid: &Grid,
    linear: bool,
) -> Vec<f64> {
    let resp = if linear {
        0.5 * ch4
    } else {
        0.8 * ch4 / (0.4 + ch4)
    };
    let mut out = Vec::with_capacity(grid.cells());
    let mut g = 0;
    for lat in &grid.lat_degrees {
        let latr = lat * PI / 180.0;
        let warm = 1.0 + 0.4 * latr.sin().powi(2);
        let patc = 1.0 + 0.3 * latr.cos();
        for _ in 0..grid.n_lon {
            out.push(0.4 + 0.9 * co2 * warm + resp * patc - 0.45 * (so2[g] + bc[g]));
            g += 1;
        }
    }
    out
}

/// Derived outputs from a (possibly noisy) tas value.
pub fn derived_outputs(tas: f64, linear: bool) -> (f64, f64, f64) {
    let t = tas - 1.5;
    if linear {
        (0.3 + 0.25 * t, 1.7 * tas + 0.5, 2.1 * tas + 0.8)
    } else {
        (
            0.3 + 0.25 * t.tanh(),
            tas + (0.7 * t).exp() + 0.5,
            1.3 * tas + (0.8 * t).exp() + 0.8,
        )
    }
}

/// Generates the scenario suite. Deterministic: the same options produce
/// bit-identical datasets.
pub fn synth_scenarios(opts: &SynthOptions) -> Result<Vec<ScenarioDataset>> {
    if opts.n_scenarios == 0 || opts.n_years == 0 || opts.n_lat == 0 || opts.n_lon == 0 {
        return Err(Error::InvalidDimensions(
            "scenario, year and grid counts must all be >= 1".into(),
        ));
    }
    if !opts.noise.is_finite() || opts.noise < 0.0 {
        return Err(Error::InvalidDimensions(format!(
            "noise must be >= 0, got {}",
            opts.noise
        )));
    }
    let grid = grid_for(opts.n_lat, opts.n_lon);
    let cells = grid.cells();
    let so2_pattern = aerosol_pattern(&grid, 35.0, 25.0, 0.0);
    let bc_pattern = aerosol_pattern(&grid, 10.0, 20.0, PI / 2.0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut datasets = Vec::with_capacity(opts.n_scenarios);
    for s in 0..opts.n_scenarios {
        // Per-scenario trajectory parameters, in a fixed draw order.
        let co2_slope = rng.gen_range(0.6..1.4);
        let co2_curve = rng.gen_range(0.0..0.4);
        let ch4_scale = rng.gen_range(0.4..1.2);
        let ch4_half = rng.gen_range(0.3..0.9);
        let so2_amp = rng.gen_range(0.4..1.0);
        let bc_amp = rng.gen_range(0.2..0.6);

        let n = opts.n_years;
        let years: Vec<i32> = (0..n).map(|t| opts.start_year + t as i32).collect();
        let mut co2 = Vec::with_capacity(n);
        let mut ch4 = Vec::with_capacity(n);
        let mut so2 = Vec::with_capacity(n * cells);
        let mut bc = Vec::with_capacity(n * cells);
        let mut tas = Vec::with_capacity(n * cells);
        let mut dtr = Vec::with_capacity(n * cells);
        let mut pr = Vec::with_capacity(n * cells);
        let mut pr90 = Vec::with_capacity(n * cells);

        for t in 0..n {
            let tau = if n > 1 { t as f64 / (n - 1) as f64 } else { 0.0 };
            let co2_t = 0.2 + co2_slope * tau + co2_curve * tau * tau;
            let ch4_t = 0.1 + ch4_scale * tau / (tau + ch4_half);
            co2.push(co2_t);
            ch4.push(ch4_t);

            let so2_t: Vec<f64> = so2_pattern
                .iter()
                .map(|p| so2_amp * (1.0 - 0.6 * tau) * p)
                .collect();
            let bc_t: Vec<f64> = bc_pattern
                .iter()
                .map(|p| bc_amp * (1.0 - 0.5 * tau) * p)
                .collect();

            let clean = ground_truth_tas(co2_t, ch4_t, &so2_t, &bc_t, &grid, opts.linear);
            let noise = if opts.noise > 0.0 {
                smooth_noise(&mut rng, &grid, opts.noise)
            } else {
                vec![0.0; cells]
            };
            for g in 0..cells {
                let t_full = clean[g] + noise[g];
                let (d, p, p90) = derived_outputs(t_full, opts.linear);
                tas.push(t_full);
                dtr.push(d);
                pr.push(p);
                pr90.push(p90);
            }
            so2.extend_from_slice(&so2_t);
            bc.extend_from_slice(&bc_t);
        }

        let mut outputs = BTreeMap::new();
        outputs.insert(OutputVariable::Tas, DenseMatrix::new(n, cells, tas)?);
        outputs.insert(OutputVariable::Dtr, DenseMatrix::new(n, cells, dtr)?);
        outputs.insert(OutputVariable::Pr, DenseMatrix::new(n, cells, pr)?);
        outputs.insert(OutputVariable::Pr90, DenseMatrix::new(n, cells, pr90)?);

        let dataset = ScenarioDataset {
            name: format!("scenario_{s:02}"),
            years,
            grid: grid.clone(),
            co2,
            ch4,
            so2: DenseMatrix::new(n, cells, so2)?,
            bc: DenseMatrix::new(n, cells, bc)?,
            outputs,
        };
        dataset.validate()?;
        datasets.push(dataset);
    }
    Ok(datasets)
}

/// Spatially smooth zero-mean noise: three random low-frequency plane waves
/// scaled so the pointwise standard deviation is about `sigma`.
fn smooth_noise(rng: &mut ChaCha8Rng, grid: &Grid, sigma: f64) -> Vec<f64> {
    let mut waves = Vec::with_capacity(3);
    for _ in 0..3 {
        // uniform[-1,1] has variance 1/3; x sqrt(2) gives the three waves
        // (each with E[sin^2] = 1/2) a combined pointwise variance of 1
        let amp = rng.gen_range(-1.0..1.0) * std::f64::consts::SQRT_2;
        let p = rng.gen_range(1..4) as f64;
        let q = rng.gen_range(1..4) as f64;
        let phase = rng.gen_range(0.0..2.0 * PI);
        waves.push((amp, p, q, phase));
    }
    let mut out = Vec::with_capacity(grid.cells());
    for i in 0..grid.n_lat {
        for j in 0..grid.n_lon {
            let mut v = 0.0;
            for (amp, p, q, phase) in &waves {
                let arg = 2.0 * PI * (p * i as f64 / grid.n_lat as f64 + q * j as f64 / grid.n_lon as f64)
                    + phase;
                v += amp * arg.sin();
            }
            out.push(sigma * v);
        }
    }
    out
}
