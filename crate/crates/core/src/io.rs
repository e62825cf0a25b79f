//! JSON encodings of inputs and outputs. Complex numbers are `[re, im]`;
//! matrices are `{"rows", "cols", "data"}` with row-major `data`.

use serde::{Deserialize, Serialize};

use crate::channel::{kraus_from_stinespring, Dilation, KrausMap, MapKind};
use crate::distance::DistanceConfig;
use crate::energy::EnergyObservable;
use crate::error::{Error, Result};
use crate::matcore::{c64, CMat};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixRepr {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixRepr {
    pub fn from_cmat(m: &CMat) -> Self {
        MatrixRepr { rows: m.rows(), cols: m.cols(), data: m.row_major().iter().map(|z| [z.re, z.im]).collect() }
    }

    pub fn to_cmat(&self) -> Result<CMat> {
        let entries: Vec<_> = self.data.iter().map(|&[re, im]| c64(re, im)).collect();
        CMat::from_row_major(self.rows, self.cols, &entries)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KrausRepr {
    #[serde(default = "default_kind")]
    pub kind: MapKind,
    pub ops: Vec<MatrixRepr>,
}

fn default_kind() -> MapKind {
    MapKind::Cp
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationRepr {
    pub v: MatrixRepr,
    pub d_out: usize,
    pub env_dim: usize,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRepr {
    dilation: DilationRepr,
    observable: EnergyObservable,
    energy: f64,
    #[serde(default)]
    schedule: Option<Vec<f64>>,
    #[serde(default)]
    config: DistanceConfig,
}

/// Inputs of a truncation study.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub dilation: Dilation,
    pub observable: EnergyObservable,
    pub energy: f64,
    pub schedule: Option<Vec<f64>>,
    pub config: DistanceConfig,
}

pub fn kraus_to_repr(k: &KrausMap) -> KrausRepr {
    KrausRepr { kind: k.kind(), ops: k.ops().iter().map(MatrixRepr::from_cmat).collect() }
}

pub fn dilation_to_repr(d: &Dilation) -> DilationRepr {
    DilationRepr { v: MatrixRepr::from_cmat(d.operator()), d_out: d.d_out(), env_dim: d.env_dim() }
}

fn kraus_from_repr(r: &KrausRepr) -> Result<KrausMap> {
    let ops = r
        .ops
        .iter()
        .enumerate()
        .map(|(i, m)| m.to_cmat().map_err(|e| Error::Invalid(format!("ops[{i}]: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    KrausMap::new(ops, r.kind)
}

fn dilation_from_repr(r: &DilationRepr) -> Result<Dilation> {
    let v = r.v.to_cmat().map_err(|e| Error::Invalid(format!("v: {e}")))?;
    Dilation::new(v, r.d_out, r.env_dim)
}

pub fn parse_matrix(text: &str) -> Result<CMat> {
    serde_json::from_str::<MatrixRepr>(text)?.to_cmat()
}

pub fn parse_observable(text: &str) -> Result<EnergyObservable> {
    Ok(serde_json::from_str(text)?)
}

pub fn parse_kraus(text: &str) -> Result<KrausMap> {
    kraus_from_repr(&serde_json::from_str(text)?)
}

pub fn parse_dilation(text: &str) -> Result<Dilation> {
    dilation_from_repr(&serde_json::from_str(text)?)
}

/// A map given either as a Kraus family (`ops`) or a dilation (`v`).
pub fn parse_map(text: &str) -> Result<KrausMap> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    let obj = value.as_object().ok_or_else(|| Error::Invalid("map must be a JSON object".into()))?;
    if obj.contains_key("ops") {
        parse_kraus(text)
    } else if obj.contains_key("v") {
        kraus_from_stinespring(&parse_dilation(text)?, None)
    } else {
        Err(Error::Invalid("map needs either an `ops` (Kraus) or a `v` (dilation) field".into()))
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let r: ScenarioRepr = serde_json::from_str(text)?;
    if !(r.energy > 0.0) {
        return Err(Error::Invalid(format!("energy: must be positive, got {}", r.energy)));
    }
    r.config.validate()?;
    Ok(Scenario {
        dilation: dilation_from_repr(&r.dilation).map_err(|e| Error::Invalid(format!("dilation: {e}")))?,
        observable: r.observable,
        energy: r.energy,
        schedule: r.schedule,
        config: r.config,
    })
}

/// Largest point count accepted by [`parse_grid`].
pub const MAX_GRID_POINTS: usize = 100_000;

/// `lo:hi:n`, `n >= 2` evenly spaced points from `lo` to `hi` inclusive.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, n] = parts[..] else {
        return Err(Error::Invalid(format!("grid `{spec}` is not of the form lo:hi:n")));
    };
    let num = |s: &str, what: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Invalid(format!("grid {what} `{s}` is not a finite number")))
    };
    let (lo, hi) = (num(lo, "lower end")?, num(hi, "upper end")?);
    let n: usize = n.trim().parse().map_err(|_| Error::Invalid(format!("grid count `{n}` is not an integer")))?;
    if !(2..=MAX_GRID_POINTS).contains(&n) {
        return Err(Error::Invalid(format!("grid count must lie in [2, {MAX_GRID_POINTS}], got {n}")));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Invalid(format!("grid needs 0 < lo < hi, got {lo}:{hi}")));
    }
    Ok((0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            lo * (1.0 - t) + hi * t
        })
        .collect())
}
