//! The four heart-rate predictors behind one specification and one trained
//! model type, plus versioned model files.

pub mod baseline;
pub mod forest;
pub mod importance;
pub mod ridge;
pub mod svr;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DeviationMode, TargetKind};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

use self::baseline::{BaselineModel, DEFAULT_WINDOW_SECONDS};
use self::forest::{ForestParams, RandomForest};
use self::ridge::RidgeRegressor;
use self::svr::{SvrParams, SvrRegressor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Baseline,
    Ridge,
    Svr,
    Forest,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Baseline, ModelKind::Ridge, ModelKind::Svr, ModelKind::Forest];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Baseline => "baseline",
            ModelKind::Ridge => "ridge",
            ModelKind::Svr => "svr",
            ModelKind::Forest => "forest",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown model kind `{s}`")))
    }
}

/// Tree depth limit; serialized as an integer or the string `"unlimited"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MaxDepth {
    #[default]
    Unlimited,
    Limited(usize),
}

impl MaxDepth {
    pub fn as_option(self) -> Option<usize> {
        match self {
            MaxDepth::Unlimited => None,
            MaxDepth::Limited(d) => Some(d),
        }
    }
}

impl Serialize for MaxDepth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaxDepth::Unlimited => s.serialize_str("unlimited"),
            MaxDepth::Limited(d) => s.serialize_u64(*d as u64),
        }
    }
}

impl<'de> Deserialize<'de> for MaxDepth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Depth(u64),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Depth(v) => Ok(MaxDepth::Limited(v as usize)),
            Repr::Word(w) if w == "unlimited" => Ok(MaxDepth::Unlimited),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "max_depth must be an integer or \"unlimited\", got \"{w}\""
            ))),
        }
    }
}

/// Hyperparameters for any of the four predictors. Fields a kind does not
/// use are carried along unchanged so one spec can be shared.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Ridge L2 penalty.
    pub alpha: f64,
    /// SVR box constraint.
    pub c: f64,
    /// SVR tube half-width, in target units.
    pub epsilon: f64,
    pub svr_tol: f64,
    pub svr_max_iter: usize,
    pub n_trees: usize,
    pub max_depth: MaxDepth,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub seed: u64,
    /// Baseline block length in seconds.
    pub baseline_window: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Forest,
            alpha: 1.0,
            c: 1.0,
            epsilon: 0.1,
            svr_tol: 1e-3,
            svr_max_iter: 10_000_000,
            n_trees: 100,
            max_depth: MaxDepth::Unlimited,
            min_leaf: 5,
            bootstrap: true,
            seed: 42,
            baseline_window: DEFAULT_WINDOW_SECONDS,
        }
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    /// Default specs for all four kinds, baseline first.
    pub fn default_suite() -> Vec<Self> {
        ModelKind::ALL.into_iter().map(Self::new).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad(format!("C must be > 0, got {}", self.c));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.svr_tol > 0.0) || self.svr_max_iter == 0 {
            return bad("SVR tolerance and iteration cap must be positive".into());
        }
        if self.n_trees == 0 || self.min_leaf == 0 {
            return bad("n_trees and min_leaf must be >= 1".into());
        }
        if self.max_depth == MaxDepth::Limited(0) {
            return bad("max_depth must be >= 1 or \"unlimited\"".into());
        }
        if self.baseline_window == 0 {
            return bad("baseline_window must be > 0".into());
        }
        Ok(())
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth.as_option(),
            min_leaf: self.min_leaf,
            max_features: None,
            bootstrap: self.bootstrap,
            seed: self.seed,
        }
    }

    pub fn svr_params<T: Scalar>(&self) -> SvrParams<T> {
        SvrParams {
            c: T::of(self.c),
            epsilon: T::of(self.epsilon),
            tol: T::of(self.svr_tol),
            max_iter: self.svr_max_iter,
            ..SvrParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", content = "state", rename_all = "lowercase")]
pub enum ModelState<T> {
    Baseline(BaselineModel),
    Ridge(RidgeRegressor<T>),
    Svr(SvrRegressor<T>),
    Forest(RandomForest<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TrainedModel<T> {
    pub spec: ModelSpec,
    pub n_features: usize,
    pub state: ModelState<T>,
}

/// Fits the model described by `spec`. The baseline needs no fitting; it
/// predicts from the heart-rate timeline (see [`baseline::baseline_interpolate`]).
pub fn fit_model<T: Scalar>(spec: &ModelSpec, x: &Matrix<T>, y: &[T]) -> Result<TrainedModel<T>> {
    spec.validate()?;
    let state = match spec.kind {
        ModelKind::Baseline => ModelState::Baseline(BaselineModel {
            window_s: spec.baseline_window,
        }),
        ModelKind::Ridge => ModelState::Ridge(RidgeRegressor::fit(x, y, T::of(spec.alpha))?),
        ModelKind::Svr => ModelState::Svr(SvrRegressor::fit(x, y, &spec.svr_params())?.0),
        ModelKind::Forest => ModelState::Forest(RandomForest::fit(x, y, &spec.forest_params())?),
    };
    Ok(TrainedModel {
        spec: *spec,
        n_features: x.n_cols(),
        state,
    })
}

impl<T: Scalar> TrainedModel<T> {
    pub fn kind(&self) -> ModelKind {
        self.spec.kind
    }

    /// One prediction per feature row.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        if x.n_rows() == 0 {
            return Ok(Vec::new());
        }
        if x.n_cols() != self.n_features {
            return Err(Error::SchemaMismatch {
                expected: self.n_features,
                found: x.n_cols(),
            });
        }
        match &self.state {
            ModelState::Baseline(_) => Err(Error::Data(
                "the baseline predicts from the heart-rate timeline, not from feature rows".into(),
            )),
            ModelState::Ridge(m) => Ok(m.predict(x)),
            ModelState::Svr(m) => Ok(m.predict(x)),
            ModelState::Forest(m) => Ok(m.predict(x)),
        }
    }

    pub fn as_forest(&self) -> Option<&RandomForest<T>> {
        match &self.state {
            ModelState::Forest(f) => Some(f),
            _ => None,
        }
    }
}

pub const MODEL_FORMAT: &str = "hrgap-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Self-describing model file: the trained model plus the feature schema it
/// expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ModelFile<T> {
    pub format: String,
    pub version: u32,
    pub feature_names: Vec<String>,
    pub deviation_mode: DeviationMode,
    pub target_kind: TargetKind,
    pub model: TrainedModel<T>,
}

impl<T: Scalar> ModelFile<T> {
    pub fn new(
        model: TrainedModel<T>,
        feature_names: &[&str],
        deviation_mode: DeviationMode,
        target_kind: TargetKind,
    ) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            feature_names: feature_names.iter().map(|s| s.to_string()).collect(),
            deviation_mode,
            target_kind,
            model,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        serde_json::to_writer(&mut w, self)?;
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let out: Self = serde_json::from_reader(BufReader::new(file))?;
        if out.format != MODEL_FORMAT || out.version != MODEL_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "{}: unsupported model format {} v{}",
                path.display(),
                out.format,
                out.version
            )));
        }
        Ok(out)
    }

    /// Fails unless the file's feature names equal `names`.
    pub fn check_schema(&self, names: &[&str]) -> Result<()> {
        if self.feature_names.len() != names.len()
            || self.feature_names.iter().zip(names).any(|(a, b)| a != b)
        {
            return Err(Error::SchemaMismatch {
                expected: self.feature_names.len(),
                found: names.len(),
            });
        }
        Ok(())
    }
}
