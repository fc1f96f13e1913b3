//! Posterior files: long-format CSV with a commented preamble.
//!
//! ```text
//! # method=gibbs
//! # config_hash=3f9c0a71d2b4e815
//! # dims=2
//! # states=2
//! # features=5
//! # samples=100
//! sample,kind,dim,state,index,value
//! 0,lambda_bar,1,,,1.9673
//! 0,weight,1,1,0,1.184
//! 0,transition,1,1,2,0.0081
//! factor,gamma_shape,1,,,3941.2
//! factor,gamma_rate,,,,2000
//! factor,weight_mean,1,2,3,-0.26
//! factor,weight_cov,1,2,7,0.0004
//! factor,dirichlet,2,1,1,2781
//! ```
//!
//! `dim` and `state` are 1-based. For `weight` and `weight_mean`, `index`
//! is the 0-based position in `[μ, w_11, …, w_1B, w_21, …, w_MB]`; for
//! `weight_cov` it is `row · features + col`; for `transition` and
//! `dirichlet` it is the 1-based destination state. `factor` rows appear
//! only for mean-field fits. Values are printed in shortest round-trip form.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gibbs::posterior_mean;
use crate::meanfield::MFState;
use crate::model::ModelParams;
use crate::priors::{dirichlet_mean, normalise_row};

pub const POSTERIOR_HEADER: &str = "sample,kind,dim,state,index,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Gibbs,
    MeanField,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Gibbs => "gibbs",
            Method::MeanField => "mean-field",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "gibbs" => Some(Method::Gibbs),
            "mean-field" => Some(Method::MeanField),
            _ => None,
        }
    }
}

/// Mean-field factor parameters as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorParams {
    pub gamma_shape: Vec<f64>,
    pub gamma_rate: f64,
    /// `[i][k]`.
    pub weight_means: Vec<Vec<DVector<f64>>>,
    pub weight_covs: Vec<Vec<DMatrix<f64>>>,
    pub dirichlet: Vec<Vec<Vec<f64>>>,
}

impl FactorParams {
    pub fn from_state(state: &MFState) -> Self {
        Self {
            gamma_shape: state.gamma_shapes(),
            gamma_rate: state.gamma_rate,
            weight_means: state.dims.iter().map(|d| d.means.clone()).collect(),
            weight_covs: state.dims.iter().map(|d| d.covs.clone()).collect(),
            dirichlet: state.transition_posterior.clone(),
        }
    }

    pub fn posterior_mean(&self) -> Result<ModelParams> {
        let mut transition = self.dirichlet.clone();
        for row in transition.iter_mut().flatten() {
            *row = dirichlet_mean(row);
            normalise_row(row);
        }
        ModelParams::new(
            transition,
            self.gamma_shape
                .iter()
                .map(|a| a / self.gamma_rate)
                .collect(),
            self.weight_means
                .iter()
                .map(|per| per.iter().map(|m| m.as_slice().to_vec()).collect())
                .collect(),
        )
    }
}

/// Parameter samples plus, for mean-field fits, the factor parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorFile {
    pub method: Method,
    pub config_hash: String,
    pub dims: usize,
    pub states: usize,
    pub features: usize,
    pub samples: Vec<ModelParams>,
    pub factors: Option<FactorParams>,
}

impl PosteriorFile {
    pub fn gibbs(samples: Vec<ModelParams>, config_hash: &str) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::contract("no samples to save"))?;
        Ok(Self {
            method: Method::Gibbs,
            config_hash: config_hash.into(),
            dims: first.dims(),
            states: first.states(),
            features: first.feature_len(),
            samples,
            factors: None,
        })
    }

    pub fn mean_field(state: &MFState, draws: Vec<ModelParams>, config_hash: &str) -> Self {
        let factors = FactorParams::from_state(state);
        Self {
            method: Method::MeanField,
            config_hash: config_hash.into(),
            dims: factors.gamma_shape.len(),
            states: factors.dirichlet.first().map_or(0, Vec::len),
            features: factors.weight_means[0][0].len(),
            samples: draws,
            factors: Some(factors),
        }
    }

    /// Factor means for mean-field fits, the sample average for Gibbs.
    pub fn posterior_mean(&self) -> Result<ModelParams> {
        match &self.factors {
            Some(f) => f.posterior_mean(),
            None => posterior_mean(&self.samples),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# method={}", self.method.as_str());
        let _ = writeln!(out, "# config_hash={}", self.config_hash);
        let _ = writeln!(out, "# dims={}", self.dims);
        let _ = writeln!(out, "# states={}", self.states);
        let _ = writeln!(out, "# features={}", self.features);
        let _ = writeln!(out, "# samples={}", self.samples.len());
        out.push_str(POSTERIOR_HEADER);
        out.push('\n');
        for (s, p) in self.samples.iter().enumerate() {
            for (i, lb) in p.lambda_bar.iter().enumerate() {
                let _ = writeln!(out, "{s},lambda_bar,{},,,{lb}", i + 1);
            }
            for (i, per) in p.weights.iter().enumerate() {
                for (k, w) in per.iter().enumerate() {
                    for (j, v) in w.iter().enumerate() {
                        let _ = writeln!(out, "{s},weight,{},{},{j},{v}", i + 1, k + 1);
                    }
                }
            }
            for (i, rows) in p.transition.iter().enumerate() {
                for (k, row) in rows.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        let _ = writeln!(out, "{s},transition,{},{},{},{v}", i + 1, k + 1, j + 1);
                    }
                }
            }
        }
        if let Some(f) = &self.factors {
            for (i, a) in f.gamma_shape.iter().enumerate() {
                let _ = writeln!(out, "factor,gamma_shape,{},,,{a}", i + 1);
            }
            let _ = writeln!(out, "factor,gamma_rate,,,,{}", f.gamma_rate);
            for (i, per) in f.weight_means.iter().enumerate() {
                for (k, m) in per.iter().enumerate() {
                    for (j, v) in m.iter().enumerate() {
                        let _ = writeln!(out, "factor,weight_mean,{},{},{j},{v}", i + 1, k + 1);
                    }
                }
            }
            for (i, per) in f.weight_covs.iter().enumerate() {
                for (k, c) in per.iter().enumerate() {
                    for r in 0..c.nrows() {
                        for col in 0..c.ncols() {
                            let _ = writeln!(
                                out,
                                "factor,weight_cov,{},{},{},{}",
                                i + 1,
                                k + 1,
                                r * c.ncols() + col,
                                c[(r, col)]
                            );
                        }
                    }
                }
            }
            for (i, rows) in f.dirichlet.iter().enumerate() {
                for (k, row) in rows.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        let _ = writeln!(out, "factor,dirichlet,{},{},{},{v}", i + 1, k + 1, j + 1);
                    }
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::read(BufReader::new(file), path)
    }

    /// Parses a posterior file; `path` only labels error messages.
    pub fn read<R: BufRead>(reader: R, path: &Path) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: PathBuf::from(path),
            line,
            message,
        };
        let mut meta: std::collections::HashMap<String, String> = Default::default();
        let mut header_seen = false;
        let mut rows: Vec<(usize, Vec<String>)> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.map_err(|source| Error::Io {
                path: path.to_owned(),
                source,
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(c) = line.strip_prefix('#') {
                if let Some((k, v)) = c.trim().split_once('=') {
                    meta.insert(k.trim().to_owned(), v.trim().to_owned());
                }
                continue;
            }
            if !header_seen {
                if line != POSTERIOR_HEADER {
                    return Err(err(lineno, format!("expected header `{POSTERIOR_HEADER}`")));
                }
                header_seen = true;
                continue;
            }
            let cols: Vec<String> = line.split(',').map(|c| c.trim().to_owned()).collect();
            if cols.len() != 6 {
                return Err(err(
                    lineno,
                    format!("expected 6 columns, found {}", cols.len()),
                ));
            }
            rows.push((lineno, cols));
        }
        let need = |key: &str| {
            meta.get(key)
                .cloned()
                .ok_or_else(|| err(0, format!("missing `# {key}=`")))
        };
        let count = |key: &str| -> Result<usize> {
            need(key)?
                .parse()
                .map_err(|e| err(0, format!("bad `{key}`: {e}")))
        };
        let method_name = need("method")?;
        let method = Method::parse(&method_name)
            .ok_or_else(|| err(0, format!("unknown method `{method_name}`")))?;
        let (m, k, p, n) = (
            count("dims")?,
            count("states")?,
            count("features")?,
            count("samples")?,
        );
        if m == 0 || k == 0 || p == 0 {
            return Err(err(0, "dims, states and features must be positive".into()));
        }
        let blank = ModelParams {
            transition: vec![vec![vec![f64::NAN; k]; k]; m],
            lambda_bar: vec![f64::NAN; m],
            weights: vec![vec![vec![f64::NAN; p]; k]; m],
        };
        let mut samples = vec![blank; n];
        let mut factors = (method == Method::MeanField).then(|| FactorParams {
            gamma_shape: vec![f64::NAN; m],
            gamma_rate: f64::NAN,
            weight_means: vec![vec![DVector::from_element(p, f64::NAN); k]; m],
            weight_covs: vec![vec![DMatrix::from_element(p, p, f64::NAN); k]; m],
            dirichlet: vec![vec![vec![f64::NAN; k]; k]; m],
        });

        for (lineno, c) in &rows {
            let lineno = *lineno;
            let bad = |what: &str| err(lineno, format!("bad {what}"));
            let value: f64 = c[5].parse().map_err(|_| bad("value"))?;
            let one_based = |s: &str, max: usize, what: &str| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if (1..=max).contains(&v) => Ok(v - 1),
                    _ => Err(bad(what)),
                }
            };
            let index = |s: &str, max: usize| -> Result<usize> {
                match s.parse::<usize>() {
                    Ok(v) if v < max => Ok(v),
                    _ => Err(bad("index")),
                }
            };
            let kind = c[1].as_str();
            if c[0] == "factor" {
                let f = factors
                    .as_mut()
                    .ok_or_else(|| bad("factor row in a Gibbs file"))?;
                match kind {
                    "gamma_shape" => f.gamma_shape[one_based(&c[2], m, "dim")?] = value,
                    "gamma_rate" => f.gamma_rate = value,
                    "weight_mean" => {
                        let (i, s) = (one_based(&c[2], m, "dim")?, one_based(&c[3], k, "state")?);
                        f.weight_means[i][s][index(&c[4], p)?] = value;
                    }
                    "weight_cov" => {
                        let (i, s) = (one_based(&c[2], m, "dim")?, one_based(&c[3], k, "state")?);
                        let j = index(&c[4], p * p)?;
                        f.weight_covs[i][s][(j / p, j % p)] = value;
                    }
                    "dirichlet" => {
                        let (i, s) = (one_based(&c[2], m, "dim")?, one_based(&c[3], k, "state")?);
                        f.dirichlet[i][s][one_based(&c[4], k, "destination state")?] = value;
                    }
                    _ => return Err(bad("kind")),
                }
                continue;
            }
            let sample = index(&c[0], n).map_err(|_| bad("sample"))?;
            let target = &mut samples[sample];
            match kind {
                "lambda_bar" => target.lambda_bar[one_based(&c[2], m, "dim")?] = value,
                "weight" => {
                    let (i, s) = (one_based(&c[2], m, "dim")?, one_based(&c[3], k, "state")?);
                    target.weights[i][s][index(&c[4], p)?] = value;
                }
                "transition" => {
                    let (i, s) = (one_based(&c[2], m, "dim")?, one_based(&c[3], k, "state")?);
                    target.transition[i][s][one_based(&c[4], k, "destination state")?] = value;
                }
                _ => return Err(bad("kind")),
            }
        }

        for (s, p) in samples.iter().enumerate() {
            let complete = p
                .lambda_bar
                .iter()
                .chain(p.weights.iter().flatten().flatten())
                .chain(p.transition.iter().flatten().flatten())
                .all(|v| !v.is_nan());
            if !complete {
                return Err(err(0, format!("sample {s} is incomplete")));
            }
            p.validate()
                .map_err(|e| err(0, format!("sample {s}: {e}")))?;
        }
        if let Some(f) = &factors {
            let complete = f
                .gamma_shape
                .iter()
                .chain(std::iter::once(&f.gamma_rate))
                .chain(f.weight_means.iter().flatten().flat_map(|v| v.iter()))
                .chain(f.weight_covs.iter().flatten().flat_map(|v| v.iter()))
                .chain(f.dirichlet.iter().flatten().flatten())
                .all(|v| !v.is_nan());
            if !complete {
                return Err(err(0, "factor parameters are incomplete".into()));
            }
        }
        if method == Method::Gibbs && samples.is_empty() {
            return Err(err(0, "a Gibbs posterior needs at least one sample".into()));
        }
        Ok(Self {
            method,
            config_hash: meta.get("config_hash").cloned().unwrap_or_default(),
            dims: m,
            states: k,
            features: p,
            samples,
            factors,
        })
    }
}
