//! Scenario datasets: per-year forcing inputs (CO2 and CH4 scalars, SO2 and
//! black-carbon fields) and per-year output fields on a lat/lon grid, plus
//! the feature pipeline that turns forcings into regression inputs.
//!
//! Datasets travel as CBX files (see [`cbx`]) and can be synthesized at
//! desk scale by [`synth`].

pub mod cbx;
pub mod synth;

use std::collections::BTreeMap;
use std::io::Write;

use crate::eof::{eof_fit, EofBasis};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, DenseVector};

/// Regular lat/lon grid. Latitudes are cell centers in degrees, strictly
/// increasing (south to north); longitudes are implicit, evenly spaced
/// starting at 0 degrees east.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n_lat: usize,
    pub n_lon: usize,
    pub lat_degrees: Vec<f64>,
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn lon_degrees(&self, j: usize) -> f64 {
        j as f64 * 360.0 / self.n_lon as f64
    }

    /// Per-cell cosine-latitude weights in field order (lat-major).
    pub fn area_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.cells());
        for lat in &self.lat_degrees {
            let wl = (lat * std::f64::consts::PI / 180.0).cos();
            for _ in 0..self.n_lon {
                w.push(wl);
            }
        }
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_lat == 0 || self.n_lon == 0 {
            return Err(Error::InvalidDimensions("empty grid".into()));
        }
        if self.lat_degrees.len() != self.n_lat {
            return Err(Error::InvalidDimensions(format!(
                "{} latitudes for n_lat = {}",
                self.lat_degrees.len(),
                self.n_lat
            )));
        }
        for (i, lat) in self.lat_degrees.iter().enumerate() {
            if !lat.is_finite() || *lat < -90.0 || *lat > 90.0 {
                return Err(Error::InvalidDimensions(format!("latitude {lat} out of range")));
            }
            if i > 0 && self.lat_degrees[i - 1] >= *lat {
                return Err(Error::InvalidDimensions(
                    "latitudes must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The four emulated output fields, in CBX mask-bit order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OutputVariable {
    Tas,
    Dtr,
    Pr,
    Pr90,
}

impl OutputVariable {
    pub const ALL: [OutputVariable; 4] = [
        OutputVariable::Tas,
        OutputVariable::Dtr,
        OutputVariable::Pr,
        OutputVariable::Pr90,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OutputVariable::Tas => "tas",
            OutputVariable::Dtr => "dtr",
            OutputVariable::Pr => "pr",
            OutputVariable::Pr90 => "pr90",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }

    pub fn mask_bit(self) -> u32 {
        match self {
            OutputVariable::Tas => 1,
            OutputVariable::Dtr => 1 << 1,
            OutputVariable::Pr => 1 << 2,
            OutputVariable::Pr90 => 1 << 3,
        }
    }
}

/// One scenario: per-year forcings and (optionally) per-year output fields.
/// Field matrices are year-major: row t is the flattened lat-major field of
/// year `years[t]`.
#[derive(Debug, Clone)]
pub struct ScenarioDataset {
    pub name: String,
    pub years: Vec<i32>,
    pub grid: Grid,
    /// Cumulative CO2 emissions, one scalar per year.
    pub co2: Vec<f64>,
    /// Global CH4 concentration, one scalar per year.
    pub ch4: Vec<f64>,
    /// SO2 field per year, n_years x cells.
    pub so2: DenseMatrix,
    /// Black-carbon field per year, n_years x cells.
    pub bc: DenseMatrix,
    /// Output variables present in this dataset (absent for
    /// prediction-only inputs).
    pub outputs: BTreeMap<OutputVariable, DenseMatrix>,
}

impl ScenarioDataset {
    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        self.years.iter().position(|&y| y == year)
    }

    pub fn output(&self, var: OutputVariable) -> Result<&DenseMatrix> {
        self.outputs
            .get(&var)
            .ok_or_else(|| Error::MissingVariable(var.name().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let n = self.years.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        for w in self.years.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::InvalidDimensions(
                    "years must be strictly increasing".into(),
                ));
            }
        }
        let cells = self.grid.cells();
        if self.co2.len() != n || self.ch4.len() != n {
            return Err(Error::InvalidDimensions(
                "scalar forcing length != year count".into(),
            ));
        }
        for (label, m) in [("so2", &self.so2), ("bc", &self.bc)] {
            if m.rows() != n || m.cols() != cells {
                return Err(Error::InvalidDimensions(format!(
                    "{label} field is {}x{}, expected {n}x{cells}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        for (var, m) in &self.outputs {
            if m.rows() != n || m.cols() != cells {
                return Err(Error::InvalidDimensions(format!(
                    "{} field is {}x{}, expected {n}x{cells}",
                    var.name(),
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(())
    }
}

/// How aerosol fields are summarized into per-year features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Area-weighted global means of SO2 and BC (2 features).
    GlobalMean,
    /// First k EOF coefficients of each aerosol field (2k features).
    EofK(usize),
}

/// Per-year regression inputs.
#[derive(Debug, Clone)]
pub struct FeatureTable {
    /// One row per year.
    pub x: DenseMatrix,
    pub feature_names: Vec<String>,
}

/// Feature pipeline fitted on training data and frozen for test data:
/// aerosol EOF bases (in `EofK` mode) and per-feature standardization
/// statistics all come from the training years.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    pub mode: FeatureMode,
    pub names: Vec<String>,
    pub means: Vec<f64>,
    /// Population standard deviations; 0 marks a constant feature whose
    /// standardized value is pinned to 0.
    pub stds: Vec<f64>,
    pub so2_basis: Option<EofBasis>,
    pub bc_basis: Option<EofBasis>,
}

impl FeatureExtractor {
    /// Fits the pipeline on the pooled years of `datasets`.
    pub fn fit(datasets: &[&ScenarioDataset], mode: FeatureMode) -> Result<Self> {
        if datasets.is_empty() || datasets.iter().all(|d| d.n_years() == 0) {
            return Err(Error::EmptyDataset);
        }
        let (so2_basis, bc_basis) = match mode {
            FeatureMode::GlobalMean => (None, None),
            FeatureMode::EofK(k) => {
                let so2 = stack_fields(datasets, |d| &d.so2)?;
                let bc = stack_fields(datasets, |d| &d.bc)?;
                (Some(eof_fit(&so2, k)?), Some(eof_fit(&bc, k)?))
            }
        };
        let names = feature_names(mode);
        let mut extractor = FeatureExtractor {
            mode,
            names,
            means: Vec::new(),
            stds: Vec::new(),
            so2_basis,
            bc_basis,
        };

        let mut rows: Vec<Vec<f64>> = Vec::new();
        for d in datasets {
            rows.extend(extractor.raw_rows(d)?);
        }
        let n = rows.len();
        let width = extractor.names.len();
        let mut means = vec![0.0; width];
        let mut stds = vec![0.0; width];
        for c in 0..width {
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n as f64;
            let var = rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            means[c] = mean;
            stds[c] = if std <= 1e-12 * mean.abs().max(1.0) {
                0.0
            } else {
                std
            };
        }
        extractor.means = means;
        extractor.stds = stds;
        Ok(extractor)
    }

    /// Standardized feature rows for one dataset.
    pub fn transform(&self, d: &ScenarioDataset) -> Result<FeatureTable> {
        let rows = self.raw_rows(d)?;
        let width = self.names.len();
        let mut data = Vec::with_capacity(rows.len() * width);
        for row in &rows {
            for c in 0..width {
                let v = if self.stds[c] == 0.0 {
                    0.0
                } else {
                    (row[c] - self.means[c]) / self.stds[c]
                };
                data.push(v);
            }
        }
        Ok(FeatureTable {
            x: DenseMatrix::new(rows.len(), width, data)?,
            feature_names: self.names.clone(),
        })
    }

    /// Unstandardized per-year feature rows.
    fn raw_rows(&self, d: &ScenarioDataset) -> Result<Vec<Vec<f64>>> {
        d.validate()?;
        let weights = d.grid.area_weights();
        let wsum: f64 = weights.iter().sum();
        let mut rows = Vec::with_capacity(d.n_years());
        for t in 0..d.n_years() {
            let mut row = vec![d.co2[t], d.ch4[t]];
            match self.mode {
                FeatureMode::GlobalMean => {
                    row.push(weighted_mean(d.so2.row(t), &weights, wsum));
                    row.push(weighted_mean(d.bc.row(t), &weights, wsum));
                }
                FeatureMode::EofK(_) => {
                    let so2_basis = self.so2_basis.as_ref().expect("fit in EofK mode");
                    let bc_basis = self.bc_basis.as_ref().expect("fit in EofK mode");
                    let field = DenseMatrix::new(1, d.grid.cells(), d.so2.row(t).to_vec())?;
                    let coeffs = so2_basis.project(&field)?;
                    row.extend_from_slice(coeffs.row(0));
                    let field = DenseMatrix::new(1, d.grid.cells(), d.bc.row(t).to_vec())?;
                    let coeffs = bc_basis.project(&field)?;
                    row.extend_from_slice(coeffs.row(0));
                }
            }
            rows.push(row);
        }
        Ok(rows)
    }
}

fn feature_names(mode: FeatureMode) -> Vec<String> {
    let mut names = vec!["co2".to_string(), "ch4".to_string()];
    match mode {
        FeatureMode::GlobalMean => {
            names.push("so2_mean".to_string());
            names.push("bc_mean".to_string());
        }
        FeatureMode::EofK(k) => {
            for i in 1..=k {
                names.push(format!("so2_eof{i}"));
            }
            for i in 1..=k {
                names.push(format!("bc_eof{i}"));
            }
        }
    }
    names
}

fn weighted_mean(field: &[f64], weights: &[f64], wsum: f64) -> f64 {
    field
        .iter()
        .zip(weights)
        .map(|(v, w)| v * w)
        .sum::<f64>()
        / wsum
}

/// Stacks the selected per-year field matrices of several datasets into one
/// samples-by-cells matrix.
pub fn stack_fields<'a, F>(datasets: &[&'a ScenarioDataset], select: F) -> Result<DenseMatrix>
where
    F: Fn(&'a ScenarioDataset) -> &'a DenseMatrix,
{
    let cells = datasets
        .first()
        .map(|d| d.grid.cells())
        .ok_or(Error::EmptyDataset)?;
    let total: usize = datasets.iter().map(|d| d.n_years()).sum();
    let mut data = Vec::with_capacity(total * cells);
    for d in datasets {
        let m = select(d);
        if m.cols() != cells {
            return Err(Error::GridMismatch(format!(
                "field width {} vs {cells}",
                m.cols()
            )));
        }
        data.extend_from_slice(m.data());
    }
    DenseMatrix::new(total, cells, data)
}

/// One-shot feature construction: fit the pipeline on `d` itself and apply
/// it. Standardized columns therefore have zero mean and unit variance over
/// this dataset's years (constants pinned to 0).
pub fn build_features(d: &ScenarioDataset, mode: FeatureMode) -> Result<FeatureTable> {
    FeatureExtractor::fit(&[d], mode)?.transform(d)
}

/// CSV form of a feature table: header row of feature names, one row per
/// year, `.` decimal separator, `\n` line endings.
pub fn write_features_csv<W: Write>(table: &FeatureTable, mut w: W) -> Result<()> {
    writeln!(w, "{}", table.feature_names.join(","))?;
    for r in 0..table.x.rows() {
        let row: Vec<String> = table.x.row(r).iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Per-year target vector for one EOF component, used by the benchmark
/// pipeline.
pub fn column_vector(m: &DenseMatrix, col: usize) -> DenseVector {
    m.col(col)
}
