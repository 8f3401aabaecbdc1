//! Trained-model bundles: per-variable EOF basis, per-component regressors
//! and the frozen feature pipeline, in one framed binary file.
//!
//! Layout: magic `CBM1`, then tagged sections `[tag: 4 bytes][len: u64 LE]
//! [payload]` in a fixed order. Floats are stored as raw little-endian
//! bits and kernels as canonical DSL text, so a reloaded bundle predicts
//! bit-identically.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::data::{FeatureExtractor, FeatureMode, Grid, OutputVariable, ScenarioDataset};
use crate::eof::{eof_fit, EofBasis};
use crate::error::{Error, Result};
use crate::eval::ModelKind;
use crate::gpr::GprModel;
use crate::kernel::{parse_kernel, print_kernel};
use crate::krr::KrrModel;
use crate::linalg::{CholeskyFactor, DenseMatrix, DenseVector};
use crate::svr::{SvrModel, SvrParams};

const MAGIC: [u8; 4] = *b"CBM1";

/// One trained regressor for a single EOF component.
#[derive(Debug, Clone)]
pub enum ComponentRegressor {
    Gpr(GprModel),
    Svr(SvrModel),
    Krr(KrrModel),
}

impl ComponentRegressor {
    fn predict(&self, xq: &DenseMatrix) -> Result<DenseVector> {
        match self {
            ComponentRegressor::Gpr(m) => Ok(m.predict(xq)?.mean),
            ComponentRegressor::Svr(m) => m.predict(xq),
            ComponentRegressor::Krr(m) => m.predict(xq),
        }
    }
}

/// EOF basis plus one regressor per kept component.
#[derive(Debug, Clone)]
pub struct VariableModels {
    pub basis: EofBasis,
    pub regressors: Vec<ComponentRegressor>,
}

/// Everything needed to predict output fields from forcings.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub model: ModelKind,
    pub eof_k: usize,
    pub grid: Grid,
    pub extractor: FeatureExtractor,
    pub per_variable: BTreeMap<OutputVariable, VariableModels>,
    /// Config echo for provenance (`key=value` pairs, order preserved).
    pub meta: Vec<(String, String)>,
}

/// Fixed hyperparameters for `train_bundle`.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub kernel: crate::kernel::KernelExpr,
    pub noise_variance: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub eof_k: usize,
    pub feature_mode: FeatureMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::Gpr,
            kernel: crate::kernel::KernelExpr::default_matern32(),
            noise_variance: 1e-4,
            lambda: 1e-4,
            epsilon: 0.1,
            c: 10.0,
            tol: 1e-3,
            max_iter: 100_000,
            eof_k: 5,
            feature_mode: FeatureMode::GlobalMean,
        }
    }
}

/// Trains one bundle on the pooled training scenarios with fixed
/// hyperparameters.
pub fn train_bundle(train: &[ScenarioDataset], config: &TrainConfig) -> Result<ModelBundle> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let grid = train[0].grid.clone();
    for d in train {
        if d.grid != grid {
            return Err(Error::GridMismatch(format!(
                "scenario {} uses a different grid",
                d.name
            )));
        }
    }
    let variables: Vec<OutputVariable> = OutputVariable::ALL
        .into_iter()
        .filter(|v| train.iter().all(|d| d.outputs.contains_key(v)))
        .collect();
    if variables.is_empty() {
        return Err(Error::MissingVariable(
            "training data carries no output variables".into(),
        ));
    }

    let refs: Vec<&ScenarioDataset> = train.iter().collect();
    let extractor = FeatureExtractor::fit(&refs, config.feature_mode)?;
    let mut x_rows = Vec::new();
    let mut n = 0;
    let mut width = 0;
    for d in &refs {
        let t = extractor.transform(d)?;
        width = t.x.cols();
        n += t.x.rows();
        x_rows.extend_from_slice(t.x.data());
    }
    let x_train = DenseMatrix::new(n, width, x_rows)?;

    let mut per_variable = BTreeMap::new();
    for &variable in &variables {
        let fields = crate::data::stack_fields(&refs, |d| {
            d.outputs.get(&variable).expect("variable filtered present")
        })?;
        let basis = eof_fit(&fields, config.eof_k)?;
        let coeffs = basis.project(&fields)?;
        let mut regressors = Vec::with_capacity(config.eof_k);
        for comp in 0..config.eof_k {
            let y = coeffs.col(comp);
            let reg = match config.model {
                ModelKind::Gpr => ComponentRegressor::Gpr(GprModel::fit(
                    &x_train,
                    &y,
                    &config.kernel,
                    config.noise_variance,
                )?),
                ModelKind::Krr => ComponentRegressor::Krr(KrrModel::fit(
                    &x_train,
                    &y,
                    &config.kernel,
                    config.lambda,
                )?),
                ModelKind::Svr => {
                    let params = SvrParams {
                        epsilon: config.epsilon,
                        c: config.c,
                        tol: config.tol,
                        max_iter: config.max_iter,
                        debug_checks: false,
                    };
                    ComponentRegressor::Svr(SvrModel::fit(&x_train, &y, &config.kernel, &params)?)
                }
            };
            regressors.push(reg);
        }
        per_variable.insert(variable, VariableModels { basis, regressors });
    }

    let meta = vec![
        ("model".to_string(), config.model.name().to_string()),
        ("kernel".to_string(), print_kernel(&config.kernel)),
        ("eof_k".to_string(), config.eof_k.to_string()),
        (
            "feature_mode".to_string(),
            match config.feature_mode {
                FeatureMode::GlobalMean => "global_mean".to_string(),
                FeatureMode::EofK(k) => format!("eof_k:{k}"),
            },
        ),
        (
            "noise_variance".to_string(),
            format!("{}", config.noise_variance),
        ),
        ("lambda".to_string(), format!("{}", config.lambda)),
        ("epsilon".to_string(), format!("{}", config.epsilon)),
        ("c".to_string(), format!("{}", config.c)),
    ];

    Ok(ModelBundle {
        model: config.model,
        eof_k: config.eof_k,
        grid,
        extractor,
        per_variable,
        meta,
    })
}

impl ModelBundle {
    /// Predicts output fields for the scenario's forcings. The second
    /// return value carries per-cell predictive variance fields and is
    /// `Some` only when requested on a GPR bundle.
    pub fn predict(
        &self,
        d: &ScenarioDataset,
        with_variance: bool,
    ) -> Result<(ScenarioDataset, Option<ScenarioDataset>)> {
        if d.grid != self.grid {
            return Err(Error::GridMismatch(format!(
                "input grid {}x{} does not match the bundle's {}x{}",
                d.grid.n_lat, d.grid.n_lon, self.grid.n_lat, self.grid.n_lon
            )));
        }
        if with_variance && self.model != ModelKind::Gpr {
            return Err(Error::InvalidHyperparameter(format!(
                "variance output requires a gpr bundle, this one is {}",
                self.model.name()
            )));
        }
        let x = self.extractor.transform(d)?.x;
        let n = x.rows();
        let cells = self.grid.cells();

        let mut outputs = BTreeMap::new();
        let mut variance_outputs = BTreeMap::new();
        for (&variable, vm) in &self.per_variable {
            let k = vm.basis.k;
            let mut coeffs = DenseMatrix::zeros(n, k);
            let mut coeff_vars = DenseMatrix::zeros(n, k);
            for (comp, reg) in vm.regressors.iter().enumerate() {
                match (with_variance, reg) {
                    (true, ComponentRegressor::Gpr(m)) => {
                        let post = m.predict(&x)?;
                        for r in 0..n {
                            coeffs[(r, comp)] = post.mean[r];
                            coeff_vars[(r, comp)] = post.variance[r];
                        }
                    }
                    _ => {
                        let mean = reg.predict(&x)?;
                        for r in 0..n {
                            coeffs[(r, comp)] = mean[r];
                        }
                    }
                }
            }
            outputs.insert(variable, vm.basis.reconstruct(&coeffs)?);
            if with_variance {
                // Components are treated as independent, so field variance
                // is the pattern-squared-weighted sum of coefficient
                // variances.
                let mut var_field = DenseMatrix::zeros(n, cells);
                for r in 0..n {
                    for comp in 0..k {
                        let cv = coeff_vars[(r, comp)];
                        if cv != 0.0 {
                            for g in 0..cells {
                                let w = vm.basis.components[(comp, g)];
                                var_field[(r, g)] += cv * w * w;
                            }
                        }
                    }
                }
                variance_outputs.insert(variable, var_field);
            }
        }

        let base = ScenarioDataset {
            name: format!("{}_pred", d.name),
            years: d.years.clone(),
            grid: d.grid.clone(),
            co2: d.co2.clone(),
            ch4: d.ch4.clone(),
            so2: d.so2.clone(),
            bc: d.bc.clone(),
            outputs,
        };
        let variance = if with_variance {
            Some(ScenarioDataset {
                name: format!("{}_variance", d.name),
                years: d.years.clone(),
                grid: d.grid.clone(),
                co2: d.co2.clone(),
                ch4: d.ch4.clone(),
                so2: d.so2.clone(),
                bc: d.bc.clone(),
                outputs: variance_outputs,
            })
        } else {
            None
        };
        Ok((base, variance))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&MAGIC)?;

        let mut meta = Vec::new();
        for (k, v) in &self.meta {
            meta.extend_from_slice(format!("{k}={v}\n").as_bytes());
        }
        section(&mut w, b"META", &meta)?;

        let mut grid = Vec::new();
        grid.write_u32::<LittleEndian>(self.grid.n_lat as u32)?;
        grid.write_u32::<LittleEndian>(self.grid.n_lon as u32)?;
        for lat in &self.grid.lat_degrees {
            grid.write_f64::<LittleEndian>(*lat)?;
        }
        section(&mut w, b"GRID", &grid)?;

        let mut feat = Vec::new();
        write_extractor(&mut feat, &self.extractor)?;
        section(&mut w, b"FEAT", &feat)?;

        for (&variable, vm) in &self.per_variable {
            let mut buf = Vec::new();
            buf.write_u8(variable.mask_bit().trailing_zeros() as u8)?;
            write_basis(&mut buf, &vm.basis)?;
            section(&mut w, b"EOFB", &buf)?;
            for (comp, reg) in vm.regressors.iter().enumerate() {
                let mut buf = Vec::new();
                buf.write_u8(variable.mask_bit().trailing_zeros() as u8)?;
                buf.write_u32::<LittleEndian>(comp as u32)?;
                let tag = match reg {
                    ComponentRegressor::Gpr(m) => {
                        write_gpr(&mut buf, m)?;
                        b"GPRM"
                    }
                    ComponentRegressor::Svr(m) => {
                        write_svr(&mut buf, m)?;
                        b"SVRM"
                    }
                    ComponentRegressor::Krr(m) => {
                        write_krr(&mut buf, m)?;
                        b"KRRM"
                    }
                };
                section(&mut w, tag, &buf)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<ModelBundle> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)
            .map_err(|e| truncated(e, "magic"))?;
        if magic != MAGIC {
            return Err(Error::BadMagic);
        }

        let mut meta: Vec<(String, String)> = Vec::new();
        let mut grid: Option<Grid> = None;
        let mut extractor: Option<FeatureExtractor> = None;
        let mut per_variable: BTreeMap<OutputVariable, VariableModels> = BTreeMap::new();
        let mut pending: BTreeMap<OutputVariable, Vec<(u32, ComponentRegressor)>> =
            BTreeMap::new();

        loop {
            let mut tag = [0u8; 4];
            match r.read_exact(&mut tag) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let len = r
                .read_u64::<LittleEndian>()
                .map_err(|e| truncated(e, "section length"))? as usize;
            let mut payload = vec![0u8; len];
            r.read_exact(&mut payload)
                .map_err(|e| truncated(e, "section payload"))?;
            let mut p = payload.as_slice();
            match &tag {
                b"META" => {
                    for line in std::str::from_utf8(&payload)
                        .map_err(|_| Error::InvalidHeader("META is not UTF-8".into()))?
                        .lines()
                    {
                        if let Some((k, v)) = line.split_once('=') {
                            meta.push((k.to_string(), v.to_string()));
                        }
                    }
                }
                b"GRID" => {
                    let n_lat = p.read_u32::<LittleEndian>()? as usize;
                    let n_lon = p.read_u32::<LittleEndian>()? as usize;
                    let mut lat = vec![0.0; n_lat];
                    p.read_f64_into::<LittleEndian>(&mut lat)?;
                    grid = Some(Grid {
                        n_lat,
                        n_lon,
                        lat_degrees: lat,
                    });
                }
                b"FEAT" => extractor = Some(read_extractor(&mut p)?),
                b"EOFB" => {
                    let var = variable_from_bit(p.read_u8()?)?;
                    let basis = read_basis(&mut p)?;
                    per_variable.insert(
                        var,
                        VariableModels {
                            basis,
                            regressors: Vec::new(),
                        },
                    );
                }
                b"GPRM" | b"SVRM" | b"KRRM" => {
                    let var = variable_from_bit(p.read_u8()?)?;
                    let comp = p.read_u32::<LittleEndian>()?;
                    let reg = match &tag {
                        b"GPRM" => ComponentRegressor::Gpr(read_gpr(&mut p)?),
                        b"SVRM" => ComponentRegressor::Svr(read_svr(&mut p)?),
                        _ => ComponentRegressor::Krr(read_krr(&mut p)?),
                    };
                    pending.entry(var).or_default().push((comp, reg));
                }
                other => {
                    return Err(Error::InvalidHeader(format!(
                        "unknown bundle section {:?}",
                        String::from_utf8_lossy(other)
                    )))
                }
            }
        }

        let grid = grid.ok_or_else(|| Error::InvalidHeader("bundle lacks GRID".into()))?;
        let extractor =
            extractor.ok_or_else(|| Error::InvalidHeader("bundle lacks FEAT".into()))?;
        for (var, mut regs) in pending {
            regs.sort_by_key(|(comp, _)| *comp);
            let vm = per_variable
                .get_mut(&var)
                .ok_or_else(|| Error::InvalidHeader("regressor without basis".into()))?;
            vm.regressors = regs.into_iter().map(|(_, r)| r).collect();
        }
        let model_name = meta
            .iter()
            .find(|(k, _)| k == "model")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::InvalidHeader("bundle lacks model meta".into()))?;
        let model = ModelKind::from_name(&model_name)
            .ok_or_else(|| Error::InvalidHeader(format!("unknown model `{model_name}`")))?;
        let eof_k = per_variable
            .values()
            .next()
            .map(|vm| vm.basis.k)
            .unwrap_or(0);
        Ok(ModelBundle {
            model,
            eof_k,
            grid,
            extractor,
            per_variable,
            meta,
        })
    }
}

fn variable_from_bit(bit: u8) -> Result<OutputVariable> {
    OutputVariable::ALL
        .into_iter()
        .find(|v| v.mask_bit().trailing_zeros() as u8 == bit)
        .ok_or_else(|| Error::InvalidHeader(format!("unknown variable bit {bit}")))
}

fn truncated(e: std::io::Error, what: &str) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::TruncatedFile(format!("while reading {what}"))
    } else {
        Error::Io(e)
    }
}

fn section<W: Write>(w: &mut W, tag: &[u8; 4], payload: &[u8]) -> Result<()> {
    w.write_all(tag)?;
    w.write_u64::<LittleEndian>(payload.len() as u64)?;
    w.write_all(payload)?;
    Ok(())
}

fn write_matrix<W: Write>(w: &mut W, m: &DenseMatrix) -> Result<()> {
    w.write_u32::<LittleEndian>(m.rows() as u32)?;
    w.write_u32::<LittleEndian>(m.cols() as u32)?;
    for v in m.data() {
        w.write_f64::<LittleEndian>(*v)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<DenseMatrix> {
    let rows = r.read_u32::<LittleEndian>()? as usize;
    let cols = r.read_u32::<LittleEndian>()? as usize;
    let mut data = vec![0.0; rows * cols];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    DenseMatrix::new(rows, cols, data)
        .map_err(|_| Error::InvalidHeader("non-finite matrix in bundle".into()))
}

fn write_vector<W: Write>(w: &mut W, v: &DenseVector) -> Result<()> {
    w.write_u32::<LittleEndian>(v.len() as u32)?;
    for x in v.as_slice() {
        w.write_f64::<LittleEndian>(*x)?;
    }
    Ok(())
}

fn read_vector<R: Read>(r: &mut R) -> Result<DenseVector> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut data = vec![0.0; len];
    r.read_f64_into::<LittleEndian>(&mut data)?;
    Ok(DenseVector::from(data))
}

fn write_string<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::InvalidHeader("non-UTF-8 string in bundle".into()))
}

fn write_kernel<W: Write>(w: &mut W, k: &crate::kernel::KernelExpr) -> Result<()> {
    write_string(w, &print_kernel(k))
}

fn read_kernel<R: Read>(r: &mut R) -> Result<crate::kernel::KernelExpr> {
    parse_kernel(&read_string(r)?)
}

fn write_basis<W: Write>(w: &mut W, b: &EofBasis) -> Result<()> {
    write_vector(w, &b.mean_field)?;
    write_matrix(w, &b.components)?;
    write_vector(w, &b.singular_values)?;
    w.write_f64::<LittleEndian>(b.total_variance)?;
    Ok(())
}

fn read_basis<R: Read>(r: &mut R) -> Result<EofBasis> {
    let mean_field = read_vector(r)?;
    let components = read_matrix(r)?;
    let singular_values = read_vector(r)?;
    let total_variance = r.read_f64::<LittleEndian>()?;
    let k = components.rows();
    Ok(EofBasis {
        mean_field,
        components,
        singular_values,
        k,
        total_variance,
    })
}

fn write_gpr<W: Write>(w: &mut W, m: &GprModel) -> Result<()> {
    write_matrix(w, &m.x_train)?;
    write_vector(w, &m.alpha)?;
    write_matrix(w, m.factor.l())?;
    w.write_f64::<LittleEndian>(m.factor.jitter_applied())?;
    write_kernel(w, &m.kernel)?;
    w.write_f64::<LittleEndian>(m.noise_variance)?;
    w.write_f64::<LittleEndian>(m.y_mean)?;
    Ok(())
}

fn read_gpr<R: Read>(r: &mut R) -> Result<GprModel> {
    let x_train = read_matrix(r)?;
    let alpha = read_vector(r)?;
    let l = read_matrix(r)?;
    let jitter = r.read_f64::<LittleEndian>()?;
    let kernel = read_kernel(r)?;
    let noise_variance = r.read_f64::<LittleEndian>()?;
    let y_mean = r.read_f64::<LittleEndian>()?;
    Ok(GprModel {
        x_train,
        alpha,
        factor: CholeskyFactor::from_parts(l, jitter),
        kernel,
        noise_variance,
        y_mean,
    })
}

fn write_svr<W: Write>(w: &mut W, m: &SvrModel) -> Result<()> {
    write_matrix(w, &m.x_support)?;
    write_vector(w, &m.dual_coef)?;
    w.write_u32::<LittleEndian>(m.support_indices.len() as u32)?;
    for idx in &m.support_indices {
        w.write_u32::<LittleEndian>(*idx as u32)?;
    }
    w.write_f64::<LittleEndian>(m.bias)?;
    write_kernel(w, &m.kernel)?;
    w.write_f64::<LittleEndian>(m.epsilon)?;
    w.write_f64::<LittleEndian>(m.c)?;
    w.write_u8(u8::from(m.converged))?;
    Ok(())
}

fn read_svr<R: Read>(r: &mut R) -> Result<SvrModel> {
    let x_support = read_matrix(r)?;
    let dual_coef = read_vector(r)?;
    let n_idx = r.read_u32::<LittleEndian>()? as usize;
    let mut support_indices = Vec::with_capacity(n_idx);
    for _ in 0..n_idx {
        support_indices.push(r.read_u32::<LittleEndian>()? as usize);
    }
    let bias = r.read_f64::<LittleEndian>()?;
    let kernel = read_kernel(r)?;
    let epsilon = r.read_f64::<LittleEndian>()?;
    let c = r.read_f64::<LittleEndian>()?;
    let converged = r.read_u8()? != 0;
    Ok(SvrModel {
        x_support,
        dual_coef,
        support_indices,
        bias,
        kernel,
        epsilon,
        c,
        converged,
    })
}

fn write_krr<W: Write>(w: &mut W, m: &KrrModel) -> Result<()> {
    write_matrix(w, &m.x_train)?;
    write_vector(w, &m.alpha)?;
    w.write_f64::<LittleEndian>(m.bias)?;
    write_kernel(w, &m.kernel)?;
    w.write_f64::<LittleEndian>(m.lambda)?;
    Ok(())
}

fn read_krr<R: Read>(r: &mut R) -> Result<KrrModel> {
    let x_train = read_matrix(r)?;
    let alpha = read_vector(r)?;
    let bias = r.read_f64::<LittleEndian>()?;
    let kernel = read_kernel(r)?;
    let lambda = r.read_f64::<LittleEndian>()?;
    Ok(KrrModel {
        x_train,
        alpha,
        bias,
        kernel,
        lambda,
    })
}

fn write_extractor<W: Write>(w: &mut W, e: &FeatureExtractor) -> Result<()> {
    match e.mode {
        FeatureMode::GlobalMean => w.write_u8(0)?,
        FeatureMode::EofK(k) => {
            w.write_u8(1)?;
            w.write_u32::<LittleEndian>(k as u32)?;
        }
    }
    w.write_u32::<LittleEndian>(e.names.len() as u32)?;
    for name in &e.names {
        write_string(w, name)?;
    }
    for v in &e.means {
        w.write_f64::<LittleEndian>(*v)?;
    }
    for v in &e.stds {
        w.write_f64::<LittleEndian>(*v)?;
    }
    for basis in [&e.so2_basis, &e.bc_basis] {
        match basis {
            Some(b) => {
                w.write_u8(1)?;
                write_basis(w, b)?;
            }
            None => w.write_u8(0)?,
        }
    }
    Ok(())
}

fn read_extractor<R: Read>(r: &mut R) -> Result<FeatureExtractor> {
    let mode = match r.read_u8()? {
        0 => FeatureMode::GlobalMean,
        1 => FeatureMode::EofK(r.read_u32::<LittleEndian>()? as usize),
        other => {
            return Err(Error::InvalidHeader(format!(
                "unknown feature mode tag {other}"
            )))
        }
    };
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut names = Vec::with_capacity(n);
    for _ in 0..n {
        names.push(read_string(r)?);
    }
    let mut means = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut means)?;
    let mut stds = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut stds)?;
    let so2_basis = if r.read_u8()? == 1 {
        Some(read_basis(r)?)
    } else {
        None
    };
    let bc_basis = if r.read_u8()? == 1 {
        Some(read_basis(r)?)
    } else {
        None
    };
    Ok(FeatureExtractor {
        mode,
        names,
        means,
        stds,
        so2_basis,
        bc_basis,
    })
}
