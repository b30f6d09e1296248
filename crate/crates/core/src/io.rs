//! JSON instance files.
//!
//! ```json
//! {
//!   "blocks": [1, 1],
//!   "H": [[1, 0], [0, 1]],
//!   "g": [0, 0],
//!   "A": [[1, 1]],
//!   "b": [2],
//!   "theta": [
//!     {"kind": "l1", "params": {"lambda": 0.5}},
//!     {"kind": "box", "params": {"lower": [0], "upper": [null]}, "sigma": [[0]]}
//!   ],
//!   "x0": [0, 0],
//!   "mu0": [0]
//! }
//! ```
//!
//! Matrices are row-major nested arrays. Box bounds use `null` for an infinite
//! bound. `opaque` terms wrap a catalog term as `{"inner": {...}}` and are
//! solved through their proximal map only. `x0` and `mu0` are optional start
//! points (zero by default).

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ProblemInstance;
use crate::prox::{BlackBox, ProxFn, ProxKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaDoc {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Map<String, Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub blocks: Vec<usize>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    pub g: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub theta: Vec<ThetaDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu0: Option<Vec<f64>>,
}

/// A validated instance together with its start point.
#[derive(Clone, Debug)]
pub struct LoadedInstance {
    pub instance: ProblemInstance,
    pub x0: DVector<f64>,
    pub mu0: DVector<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct L1Params {
    lambda: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxParams {
    lower: Vec<Option<f64>>,
    upper: Vec<Option<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadraticParams {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    q: Vec<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OpaqueParams {
    inner: ThetaDoc,
}

fn params<T: DeserializeOwned>(doc: &ThetaDoc, field: &str) -> Result<T> {
    let value = Value::Object(doc.params.clone().unwrap_or_default());
    serde_json::from_value(value).map_err(|e| Error::structural(format!("{field}.params"), e.to_string()))
}

fn matrix(rows: &[Vec<f64>], ncols_if_empty: usize, field: &str) -> Result<DMatrix<f64>> {
    linalg::from_rows(rows, ncols_if_empty).ok_or_else(|| Error::structural(field, "rows have different lengths"))
}

impl ThetaDoc {
    /// Converts to a catalog term of dimension `dim`; `field` names the entry in errors.
    pub fn to_prox(&self, dim: usize, field: &str) -> Result<ProxFn> {
        let base = match self.kind.as_str() {
            "zero" => {
                if self.params.as_ref().is_some_and(|p| !p.is_empty()) {
                    return Err(Error::structural(format!("{field}.params"), "zero takes no parameters"));
                }
                ProxFn::zero(dim)
            }
            "l1" => ProxFn::l1(dim, params::<L1Params>(self, field)?.lambda),
            "box" => {
                let p: BoxParams = params(self, field)?;
                let lower = DVector::from_iterator(p.lower.len(), p.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)));
                let upper = DVector::from_iterator(p.upper.len(), p.upper.iter().map(|v| v.unwrap_or(f64::INFINITY)));
                ProxFn::boxed(lower, upper)
            }
            "quadratic" => {
                let p: QuadraticParams = params(self, field)?;
                ProxFn::quadratic(matrix(&p.p, dim, &format!("{field}.params.P"))?, DVector::from_vec(p.q))
            }
            "opaque" => {
                let p: OpaqueParams = params(self, field)?;
                let inner = p.inner.to_prox(dim, &format!("{field}.params.inner"))?;
                inner.validate(dim, &format!("{field}.params.inner"))?;
                ProxFn::opaque(Arc::new(BlackBox(inner)))
            }
            other => {
                return Err(Error::structural(
                    format!("{field}.kind"),
                    format!("unknown kind `{other}` (expected zero, l1, box, quadratic or opaque)"),
                ))
            }
        };
        let sigma = match &self.sigma {
            Some(rows) => matrix(rows, dim, &format!("{field}.sigma"))?,
            None => DMatrix::zeros(dim, dim),
        };
        Ok(base.with_sigma(sigma))
    }

    pub fn from_prox(f: &ProxFn) -> Result<Self> {
        let mut map = Map::new();
        let num = |v: f64| Value::from(v);
        match &f.kind {
            ProxKind::Zero => {}
            ProxKind::L1 { lambda } => {
                map.insert("lambda".into(), num(*lambda));
            }
            ProxKind::Box { lower, upper } => {
                let bound = |v: &f64| if v.is_finite() { num(*v) } else { Value::Null };
                map.insert("lower".into(), Value::Array(lower.iter().map(bound).collect()));
                map.insert("upper".into(), Value::Array(upper.iter().map(bound).collect()));
            }
            ProxKind::Quadratic { p, q } => {
                map.insert("P".into(), serde_json::to_value(linalg::to_rows(p))?);
                map.insert("q".into(), serde_json::to_value(q.as_slice())?);
            }
            ProxKind::Opaque(op) => {
                let inner = op
                    .catalog()
                    .ok_or_else(|| Error::Unsupported("opaque term has no serializable description".into()))?;
                map.insert("inner".into(), serde_json::to_value(ThetaDoc::from_prox(inner)?)?);
            }
        }
        let sigma = (f.sigma.iter().any(|v| *v != 0.0)).then(|| linalg::to_rows(&f.sigma));
        Ok(Self {
            kind: f.kind.name().into(),
            params: (!map.is_empty()).then_some(map),
            sigma,
        })
    }
}

impl InstanceDoc {
    pub fn from_instance(inst: &ProblemInstance, x0: Option<&DVector<f64>>, mu0: Option<&DVector<f64>>) -> Result<Self> {
        Ok(Self {
            blocks: inst.blocks.dims().to_vec(),
            h: linalg::to_rows(&inst.h),
            g: inst.g.iter().copied().collect(),
            a: linalg::to_rows(&inst.a),
            b: inst.b.iter().copied().collect(),
            theta: inst.theta.iter().map(ThetaDoc::from_prox).collect::<Result<_>>()?,
            x0: x0.map(|v| v.iter().copied().collect()),
            mu0: mu0.map(|v| v.iter().copied().collect()),
        })
    }

    /// Builds and validates the instance and its start point.
    pub fn load(&self) -> Result<LoadedInstance> {
        let d: usize = self.blocks.iter().sum();
        let h = matrix(&self.h, d, "H")?;
        let a = matrix(&self.a, d, "A")?;
        if self.theta.len() != self.blocks.len() {
            return Err(Error::structural(
                "theta",
                format!("expected {} entries, got {}", self.blocks.len(), self.theta.len()),
            ));
        }
        let theta = self
            .theta
            .iter()
            .zip(&self.blocks)
            .enumerate()
            .map(|(i, (t, &di))| t.to_prox(di, &format!("theta[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        let instance = ProblemInstance::new(
            self.blocks.clone(),
            h,
            DVector::from_vec(self.g.clone()),
            a,
            DVector::from_vec(self.b.clone()),
            theta,
        )?;
        let start = |v: &Option<Vec<f64>>, len: usize, field: &str| -> Result<DVector<f64>> {
            match v {
                None => Ok(DVector::zeros(len)),
                Some(v) if v.len() == len && v.iter().all(|x| x.is_finite()) => Ok(DVector::from_vec(v.clone())),
                Some(v) => Err(Error::structural(
                    field,
                    format!("expected {len} finite entries, got {}", v.len()),
                )),
            }
        };
        let x0 = start(&self.x0, instance.d(), "x0")?;
        let mu0 = start(&self.mu0, instance.m(), "mu0")?;
        Ok(LoadedInstance { instance, x0, mu0 })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn parse_instance(text: &str) -> Result<LoadedInstance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    doc.load()
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<LoadedInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    parse_instance(&text)
}

/// Writes `text` to `dir/name`, creating `dir` if needed.
pub fn write_output(dir: impl AsRef<Path>, name: &str, text: &str) -> Result<()> {
    fs::create_dir_all(dir.as_ref())?;
    fs::write(dir.as_ref().join(name), text)?;
    Ok(())
}
