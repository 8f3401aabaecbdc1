//! Windowed-RMSE evaluation and the three-regressor benchmark driver.
//!
//! A lead-time window selects a span of years; fields are averaged over the
//! window's years first, then compared by (optionally area-weighted)
//! spatial RMSE. The benchmark trains GPR, SVR and KRR per output variable
//! on EOF coefficients of the training fields, reconstructs predicted test
//! fields and fills one RMSE cell per (model, variable, window).

use std::collections::BTreeMap;

use crate::data::{
    stack_fields, FeatureExtractor, FeatureMode, OutputVariable, ScenarioDataset,
};
use crate::eof::eof_fit;
use crate::error::{Error, Result};
use crate::gpr::{grid_select, GprGrid};
use crate::kernel::KernelExpr;
use crate::krr::{cv_select, CvGrid};
use crate::linalg::{DenseMatrix, DenseVector};
use crate::svr::{SvrModel, SvrParams};

/// Inclusive span of years with a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadTimeWindow {
    pub label: String,
    pub year_start: i32,
    pub year_end: i32,
}

impl LeadTimeWindow {
    pub fn new(label: impl Into<String>, year_start: i32, year_end: i32) -> Self {
        Self {
            label: label.into(),
            year_start,
            year_end,
        }
    }
}

/// The six standard lead-time columns: 2050, 2100, 2045-2055, 2090-2100,
/// 2050-2100 and a 20-year average taken over 2081-2100.
pub fn default_windows() -> Vec<LeadTimeWindow> {
    vec![
        LeadTimeWindow::new("2050", 2050, 2050),
        LeadTimeWindow::new("2100", 2100, 2100),
        LeadTimeWindow::new("2045-2055", 2045, 2055),
        LeadTimeWindow::new("2090-2100", 2090, 2100),
        LeadTimeWindow::new("2050-2100", 2050, 2100),
        LeadTimeWindow::new("20Y average", 2081, 2100),
    ]
}

/// Window-averaged, optionally cosine-latitude-weighted RMSE between the
/// two datasets' fields for one variable.
///
/// Years entering the average are those present in both datasets and
/// inside the window; the window must catch at least one such year.
pub fn rmse_window(
    pred: &ScenarioDataset,
    truth: &ScenarioDataset,
    variable: OutputVariable,
    window: &LeadTimeWindow,
    area_weighted: bool,
) -> Result<f64> {
    if pred.grid != truth.grid {
        return Err(Error::GridMismatch(format!(
            "{}x{} vs {}x{}",
            pred.grid.n_lat, pred.grid.n_lon, truth.grid.n_lat, truth.grid.n_lon
        )));
    }
    let pf = pred.output(variable)?;
    let tf = truth.output(variable)?;

    let years: Vec<i32> = truth
        .years
        .iter()
        .copied()
        .filter(|y| *y >= window.year_start && *y <= window.year_end)
        .filter(|y| pred.year_index(*y).is_some())
        .collect();
    if years.is_empty() {
        return Err(Error::WindowNotCovered(window.label.clone()));
    }

    let cells = truth.grid.cells();
    let mut p_mean = vec![0.0; cells];
    let mut t_mean = vec![0.0; cells];
    for &y in &years {
        let pi = pred.year_index(y).expect("filtered above");
        let ti = truth.year_index(y).expect("year from truth");
        for g in 0..cells {
            p_mean[g] += pf[(pi, g)];
            t_mean[g] += tf[(ti, g)];
        }
    }
    let ny = years.len() as f64;
    let weights = if area_weighted {
        truth.grid.area_weights()
    } else {
        vec![1.0; cells]
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for g in 0..cells {
        let diff = p_mean[g] / ny - t_mean[g] / ny;
        num += weights[g] * diff * diff;
        den += weights[g];
    }
    Ok((num / den).sqrt())
}

/// Windowed RMSE per (model, variable, window).
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dataset: String,
    pub area_weighted: bool,
    pub models: Vec<String>,
    pub variables: Vec<OutputVariable>,
    pub windows: Vec<LeadTimeWindow>,
    rmse: BTreeMap<(String, OutputVariable, String), f64>,
}

impl EvalReport {
    pub fn get(&self, model: &str, variable: OutputVariable, window_label: &str) -> Option<f64> {
        self.rmse
            .get(&(model.to_string(), variable, window_label.to_string()))
            .copied()
    }

    fn insert(&mut self, model: &str, variable: OutputVariable, window_label: &str, value: f64) {
        self.rmse.insert(
            (model.to_string(), variable, window_label.to_string()),
            value,
        );
    }

    /// `model,variable,window,rmse` rows in fixed (model, variable,
    /// window) order; values printed with full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,variable,window,rmse\n");
        for model in &self.models {
            for &variable in &self.variables {
                for window in &self.windows {
                    let v = self
                        .get(model, variable, &window.label)
                        .map(|v| format!("{v}"))
                        .unwrap_or_default();
                    out.push_str(&format!(
                        "{model},{},{},{v}\n",
                        variable.name(),
                        window.label
                    ));
                }
            }
        }
        out
    }

    /// Aligned text layout: one block per variable, models as rows and
    /// windows as columns.
    pub fn render_table(&self) -> String {
        let model_width = self
            .models
            .iter()
            .map(|m| m.len())
            .max()
            .unwrap_or(5)
            .max(5);
        let col_width = self
            .windows
            .iter()
            .map(|w| w.label.len())
            .max()
            .unwrap_or(9)
            .max(9);
        let weighting = if self.area_weighted {
            "area-weighted"
        } else {
            "unweighted"
        };
        let mut out = format!("RMSE on {} ({weighting})\n", self.dataset);
        for &variable in &self.variables {
            out.push_str(&format!("\n[{}]\n", variable.name()));
            out.push_str(&format!("{:<model_width$}", "model"));
            for w in &self.windows {
                out.push_str(&format!("  {:>col_width$}", w.label));
            }
            out.push('\n');
            for model in &self.models {
                out.push_str(&format!("{model:<model_width$}"));
                for w in &self.windows {
                    match self.get(model, variable, &w.label) {
                        Some(v) => out.push_str(&format!("  {v:>col_width$.4}")),
                        None => out.push_str(&format!("  {:>col_width$}", "-")),
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Direct comparison of a prediction dataset against truth (no training).
pub fn evaluate_pair(
    pred: &ScenarioDataset,
    truth: &ScenarioDataset,
    windows: &[LeadTimeWindow],
    area_weighted: bool,
) -> Result<EvalReport> {
    let variables: Vec<OutputVariable> = OutputVariable::ALL
        .into_iter()
        .filter(|v| pred.outputs.contains_key(v) && truth.outputs.contains_key(v))
        .collect();
    if variables.is_empty() {
        return Err(Error::MissingVariable(
            "no output variable present in both datasets".into(),
        ));
    }
    let mut report = EvalReport {
        dataset: truth.name.clone(),
        area_weighted,
        models: vec![pred.name.clone()],
        variables: variables.clone(),
        windows: windows.to_vec(),
        rmse: BTreeMap::new(),
    };
    for &variable in &variables {
        for window in windows {
            let v = rmse_window(pred, truth, variable, window, area_weighted)?;
            report.insert(&pred.name, variable, &window.label, v);
        }
    }
    Ok(report)
}

/// The three regressors the benchmark compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelKind {
    Gpr,
    Svr,
    Krr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Gpr, ModelKind::Svr, ModelKind::Krr];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Gpr => "gpr",
            ModelKind::Svr => "svr",
            ModelKind::Krr => "krr",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Hyperparameter search spaces for the benchmark. Variance-like values
/// are relative to each EOF component's target variance so one config
/// serves components of very different scales.
#[derive(Debug, Clone)]
pub struct ModelGrids {
    pub gpr_template: KernelExpr,
    pub gpr_lengthscales: Vec<f64>,
    /// Multiplied by the component's target variance.
    pub gpr_variances_rel: Vec<f64>,
    /// Multiplied by the component's target variance.
    pub gpr_noise_rel: Vec<f64>,
    pub krr_grid: CvGrid,
    pub svr_kernel: KernelExpr,
    /// Multiplied by the component's target standard deviation.
    pub svr_epsilon_rel: f64,
    /// Multiplied by the component's target standard deviation.
    pub svr_c_rel: f64,
    pub svr_tol: f64,
    pub svr_max_iter: usize,
}

impl Default for ModelGrids {
    fn default() -> Self {
        Self {
            gpr_template: KernelExpr::default_matern32(),
            gpr_lengthscales: vec![0.5, 1.0, 2.0, 4.0],
            gpr_variances_rel: vec![0.5, 1.0, 2.0],
            gpr_noise_rel: vec![1e-6, 1e-4, 1e-2, 1e-1],
            krr_grid: CvGrid::default_grid(),
            svr_kernel: KernelExpr::default_matern32(),
            svr_epsilon_rel: 0.1,
            svr_c_rel: 100.0,
            svr_tol: 1e-3,
            svr_max_iter: 100_000,
        }
    }
}

/// Benchmark settings: which models, the reduction rank, featurization,
/// seed and evaluation windows.
#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    pub models: Vec<ModelKind>,
    pub eof_k: usize,
    pub feature_mode: FeatureMode,
    pub seed: u64,
    pub area_weighted: bool,
    pub windows: Vec<LeadTimeWindow>,
    pub grids: ModelGrids,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            eof_k: 5,
            feature_mode: FeatureMode::GlobalMean,
            seed: 0,
            area_weighted: true,
            windows: default_windows(),
            grids: ModelGrids::default(),
        }
    }
}

/// Trains every configured model on the training scenarios, predicts the
/// test scenario and returns the RMSE table. Deterministic for a fixed
/// seed and config.
pub fn run_benchmark(
    train: &[ScenarioDataset],
    test: &ScenarioDataset,
    config: &BenchmarkConfig,
) -> Result<EvalReport> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for d in train {
        if d.grid != test.grid {
            return Err(Error::GridMismatch(format!(
                "training scenario {} does not match the test grid",
                d.name
            )));
        }
    }
    let variables: Vec<OutputVariable> = OutputVariable::ALL
        .into_iter()
        .filter(|v| {
            test.outputs.contains_key(v) && train.iter().all(|d| d.outputs.contains_key(v))
        })
        .collect();
    if variables.is_empty() {
        return Err(Error::MissingVariable(
            "no output variable present in all datasets".into(),
        ));
    }

    let train_refs: Vec<&ScenarioDataset> = train.iter().collect();
    let extractor = FeatureExtractor::fit(&train_refs, config.feature_mode)?;
    let mut x_rows: Vec<f64> = Vec::new();
    let mut n_rows = 0;
    let mut width = 0;
    for d in &train_refs {
        let t = extractor.transform(d)?;
        width = t.x.cols();
        n_rows += t.x.rows();
        x_rows.extend_from_slice(t.x.data());
    }
    let x_train = DenseMatrix::new(n_rows, width, x_rows)?;
    let x_test = extractor.transform(test)?.x;

    // Predicted output fields per model.
    let mut predicted: BTreeMap<ModelKind, BTreeMap<OutputVariable, DenseMatrix>> =
        config.models.iter().map(|m| (*m, BTreeMap::new())).collect();

    for &variable in &variables {
        let fields = stack_fields(&train_refs, |d| {
            d.outputs.get(&variable).expect("variable filtered present")
        })?;
        let basis = eof_fit(&fields, config.eof_k)?;
        let coeffs = basis.project(&fields)?;

        for &model in &config.models {
            let mut pred_coeffs = DenseMatrix::zeros(x_test.rows(), config.eof_k);
            for comp in 0..config.eof_k {
                let y = coeffs.col(comp);
                let column = predict_component(model, &x_train, &y, &x_test, config)?;
                for r in 0..x_test.rows() {
                    pred_coeffs[(r, comp)] = column[r];
                }
            }
            let fields = basis.reconstruct(&pred_coeffs)?;
            predicted
                .get_mut(&model)
                .expect("model key inserted above")
                .insert(variable, fields);
        }
    }

    let mut report = EvalReport {
        dataset: test.name.clone(),
        area_weighted: config.area_weighted,
        models: config.models.iter().map(|m| m.name().to_string()).collect(),
        variables: variables.clone(),
        windows: config.windows.clone(),
        rmse: BTreeMap::new(),
    };
    for &model in &config.models {
        let pred_dataset = ScenarioDataset {
            name: model.name().to_string(),
            years: test.years.clone(),
            grid: test.grid.clone(),
            co2: test.co2.clone(),
            ch4: test.ch4.clone(),
            so2: test.so2.clone(),
            bc: test.bc.clone(),
            outputs: predicted.remove(&model).expect("populated above"),
        };
        for &variable in &variables {
            for window in &config.windows {
                let v = rmse_window(&pred_dataset, test, variable, window, config.area_weighted)?;
                report.insert(model.name(), variable, &window.label, v);
            }
        }
    }
    Ok(report)
}

/// Population variance of a target vector.
fn target_variance(y: &DenseVector) -> f64 {
    let mean = y.mean();
    y.as_slice().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / y.len() as f64
}

/// Trains one regressor on a single EOF-coefficient target and predicts
/// the test rows.
fn predict_component(
    model: ModelKind,
    x_train: &DenseMatrix,
    y: &DenseVector,
    x_test: &DenseMatrix,
    config: &BenchmarkConfig,
) -> Result<DenseVector> {
    let scale_var = target_variance(y).max(1e-12);
    let grids = &config.grids;
    match model {
        ModelKind::Gpr => {
            let grid = GprGrid {
                lengthscales: grids.gpr_lengthscales.clone(),
                variances: grids
                    .gpr_variances_rel
                    .iter()
                    .map(|v| v * scale_var)
                    .collect(),
                noise_variances: grids.gpr_noise_rel.iter().map(|v| v * scale_var).collect(),
            };
            let m = grid_select(x_train, y, &grids.gpr_template, &grid)?;
            Ok(m.predict(x_test)?.mean)
        }
        ModelKind::Krr => {
            let (m, _) = cv_select(x_train, y, &grids.krr_grid, config.seed)?;
            m.predict(x_test)
        }
        ModelKind::Svr => {
            let scale_std = scale_var.sqrt();
            let params = SvrParams {
                epsilon: grids.svr_epsilon_rel * scale_std,
                c: grids.svr_c_rel * scale_std,
                tol: grids.svr_tol,
                max_iter: grids.svr_max_iter,
                debug_checks: false,
            };
            let m = SvrModel::fit(x_train, y, &grids.svr_kernel, &params)?;
            m.predict(x_test)
        }
    }
}
