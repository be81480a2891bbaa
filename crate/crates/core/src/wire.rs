//! JSON wire format for `/v1/predict`.
//!
//! Request:
//!
//! ```json
//! {
//!   "samples": [
//!     {"encoding": "f32le", "shape": [2], "data": "AACAPwAAAEA="},
//!     {"encoding": "pgm", "data": "UDUgMiAxIDI1NQoA/w=="}
//!   ],
//!   "policy": {"kind": "at_least", "k": 2}
//! }
//! ```
//!
//! `f32le` data is `4 * D` little-endian IEEE-754 bytes; `pgm` data is a
//! binary P5 image whose header carries the shape (`[1, H, W]`), pixels
//! divided by the ensemble's `pixel_scale`.
//!
//! Response keys are sorted bytewise: one key per model id mapping to the
//! batch-ordered labels, `_batch_size`, and `_combined` when a policy was
//! requested.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ensemble::{Ensemble, EnsembleOutput};
use crate::error::{Error, Result};
use crate::model::{InputShape, SampleBatch, BINARY_LABELS};
use crate::pgm::{decode_pgm, Pgm};
use crate::policy::SensitivityPolicy;

pub const COMBINED_KEY: &str = "_combined";
pub const BATCH_SIZE_KEY: &str = "_batch_size";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodedSample {
    pub encoding: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    pub data: String,
}

impl EncodedSample {
    pub fn f32le(shape: &InputShape, values: &[f32]) -> Self {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        EncodedSample {
            encoding: "f32le".into(),
            shape: Some(shape.dims().to_vec()),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn pgm(image: &Pgm) -> Self {
        Self::pgm_bytes(&image.encode())
    }

    /// Wraps already-encoded P5 bytes without re-encoding them.
    pub fn pgm_bytes(bytes: &[u8]) -> Self {
        EncodedSample {
            encoding: "pgm".into(),
            shape: None,
            data: STANDARD.encode(bytes),
        }
    }

    fn decode(&self, index: usize, pixel_scale: f64) -> Result<(InputShape, Vec<f32>)> {
        let bad = |msg: String| Error::BadRequest(format!("sample {index}: {msg}"));
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| bad(format!("invalid base64: {e}")))?;
        match self.encoding.as_str() {
            "f32le" => {
                let dims = self
                    .shape
                    .clone()
                    .ok_or_else(|| bad("f32le samples need a shape".into()))?;
                let shape = InputShape::new(dims).map_err(|e| bad(e.to_string()))?;
                let expected = shape.len().saturating_mul(4);
                if bytes.len() != expected {
                    return Err(bad(format!(
                        "shape {shape} needs {expected} bytes, got {}",
                        bytes.len()
                    )));
                }
                let values = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                Ok((shape, values))
            }
            "pgm" => {
                if self.shape.is_some() {
                    return Err(bad("pgm samples carry their shape in the header".into()));
                }
                let image = decode_pgm(&bytes).map_err(|e| bad(e.to_string()))?;
                let shape =
                    InputShape::image(1, image.height, image.width).map_err(|e| bad(e.to_string()))?;
                Ok((shape, image.to_f32(pixel_scale)))
            }
            other => Err(bad(format!("unknown encoding {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Any,
    All,
    AtLeast,
}

impl From<SensitivityPolicy> for PolicySpec {
    fn from(p: SensitivityPolicy) -> Self {
        match p {
            SensitivityPolicy::Any => PolicySpec {
                kind: PolicyKind::Any,
                k: None,
            },
            SensitivityPolicy::All => PolicySpec {
                kind: PolicyKind::All,
                k: None,
            },
            SensitivityPolicy::AtLeast(k) => PolicySpec {
                kind: PolicyKind::AtLeast,
                k: Some(k),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionRequest {
    pub samples: Vec<EncodedSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicySpec>,
}

impl PredictionRequest {
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("request serialization is infallible")
    }
}

// Policies stay untyped until decode so type errors surface as BadPolicy.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequest {
    samples: Vec<EncodedSample>,
    #[serde(default)]
    policy: Option<Value>,
}

fn parse_policy(value: &Value) -> Result<SensitivityPolicy> {
    let bad = |msg: &str| Error::BadPolicy(msg.to_string());
    let obj = value
        .as_object()
        .ok_or_else(|| bad("policy must be an object"))?;
    if let Some(key) = obj.keys().find(|k| *k != "kind" && *k != "k") {
        return Err(Error::BadPolicy(format!("unknown policy field {key:?}")));
    }
    let kind = obj
        .get("kind")
        .and_then(Value::as_str)
        .ok_or_else(|| bad("policy.kind must be a string"))?;
    let k = match obj.get("k") {
        None | Some(Value::Null) => None,
        Some(v) => Some(
            v.as_u64()
                .and_then(|k| usize::try_from(k).ok())
                .ok_or_else(|| bad("policy.k must be a non-negative integer"))?,
        ),
    };
    match kind {
        "any" => Ok(SensitivityPolicy::Any),
        "all" => Ok(SensitivityPolicy::All),
        "at_least" => k
            .map(SensitivityPolicy::AtLeast)
            .ok_or_else(|| bad("at_least policy needs an integer k")),
        other => Err(Error::BadPolicy(format!(
            "unknown policy kind {other:?} (expected any, all or at_least)"
        ))),
    }
}

/// Decodes a request body into one sample-major batch plus the requested policy.
pub fn decode_request(
    body: &[u8],
    pixel_scale: f64,
) -> Result<(SampleBatch, Option<SensitivityPolicy>)> {
    let raw: RawRequest =
        serde_json::from_slice(body).map_err(|e| Error::BadRequest(format!("invalid JSON: {e}")))?;
    if raw.samples.is_empty() {
        return Err(Error::BadRequest("samples must not be empty".into()));
    }
    let policy = raw.policy.as_ref().map(parse_policy).transpose()?;

    let mut shape: Option<InputShape> = None;
    let mut data = Vec::new();
    for (i, sample) in raw.samples.iter().enumerate() {
        let (s, values) = sample.decode(i, pixel_scale)?;
        match &shape {
            Some(first) if first != &s => {
                return Err(Error::BadRequest(format!(
                    "sample {i} has shape {s}, sample 0 has {first}"
                )))
            }
            Some(_) => {}
            None => shape = Some(s),
        }
        data.extend(values);
    }
    let shape = shape.expect("at least one sample");
    let batch = SampleBatch::new(shape, data).map_err(|e| match e {
        Error::BadRequest(m) => Error::BadRequest(m),
        other => Error::BadRequest(other.to_string()),
    })?;
    Ok((batch, policy))
}

/// Serializes model outputs (and optional combined votes) with sorted keys.
pub fn render_response(ensemble: &Ensemble, out: &EnsembleOutput, combined: Option<&[u8]>) -> Vec<u8> {
    let mut body: BTreeMap<&str, Value> = BTreeMap::new();
    for (id, labels) in out.model_ids.iter().zip(ensemble.render_labels(out)) {
        body.insert(id, labels.into());
    }
    body.insert(BATCH_SIZE_KEY, out.batch_size().into());
    if let Some(votes) = combined {
        let labels: Vec<&str> = votes
            .iter()
            .map(|&v| BINARY_LABELS[usize::from(v)])
            .collect();
        body.insert(COMBINED_KEY, labels.into());
    }
    serde_json::to_vec(&body).expect("response serialization is infallible")
}

/// Body of `GET /v1/models`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleInfo {
    pub models: Vec<ModelInfo>,
    pub input_shape: Vec<usize>,
    pub bytes_used: u64,
    pub memory_budget_bytes: u64,
    pub max_batch: usize,
    pub binary_compatible: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub input_shape: Vec<usize>,
    pub labels: Vec<String>,
    pub parameter_bytes: u64,
}

impl EnsembleInfo {
    pub fn describe(ensemble: &Ensemble) -> Self {
        EnsembleInfo {
            models: ensemble
                .models()
                .iter()
                .map(|m| ModelInfo {
                    id: m.id().to_string(),
                    input_shape: m.input_shape().dims().to_vec(),
                    labels: m.labels().to_vec(),
                    parameter_bytes: m.parameter_bytes(),
                })
                .collect(),
            input_shape: ensemble.shared_shape().dims().to_vec(),
            bytes_used: ensemble.bytes_used(),
            memory_budget_bytes: ensemble.memory_budget_bytes(),
            max_batch: ensemble.max_batch(),
            binary_compatible: ensemble.binary_compatible(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

/// Client-side view of a successful response.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionResponse {
    pub batch_size: usize,
    pub models: BTreeMap<String, Vec<String>>,
    pub combined: Option<Vec<String>>,
}

impl PredictionResponse {
    pub fn from_slice(body: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Http(format!("unexpected response body: {msg}"));
        let map: Map<String, Value> =
            serde_json::from_slice(body).map_err(|e| Error::Http(e.to_string()))?;
        let strings = |v: &Value| -> Option<Vec<String>> {
            v.as_array()?
                .iter()
                .map(|s| s.as_str().map(str::to_string))
                .collect()
        };
        let mut batch_size = None;
        let mut combined = None;
        let mut models = BTreeMap::new();
        for (key, value) in &map {
            match key.as_str() {
                BATCH_SIZE_KEY => {
                    batch_size = value.as_u64().map(|b| b as usize);
                }
                COMBINED_KEY => {
                    combined = Some(strings(value).ok_or_else(|| bad("_combined"))?);
                }
                id => {
                    models.insert(id.to_string(), strings(value).ok_or_else(|| bad(id))?);
                }
            }
        }
        Ok(PredictionResponse {
            batch_size: batch_size.ok_or_else(|| bad("missing _batch_size"))?,
            models,
            combined,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(v: Value) -> Vec<u8> {
        serde_json::to_vec(&v).unwrap()
    }

    #[test]
    fn decodes_f32le_sample() {
        // 1.0f32 = 00 00 80 3f, 2.0f32 = 00 00 00 40
        let data = STANDARD.encode([0u8, 0, 128, 63, 0, 0, 0, 64]);
        let req = body(serde_json::json!({
            "samples": [{"encoding": "f32le", "shape": [2], "data": data}]
        }));
        let (batch, policy) = decode_request(&req, 255.0).unwrap();
        assert_eq!(batch.batch_size(), 1);
        assert_eq!(batch.data(), &[1.0, 2.0]);
        assert_eq!(policy, None);
    }

    #[test]
    fn decodes_pgm_sample() {
        // hand-assembled P5 bytes: 2x1, maxval 255, pixels [0, 255]
        let mut bytes = b"P5\n2 1\n255\n".to_vec();
        bytes.extend([0u8, 255]);
        let req = body(serde_json::json!({
            "samples": [{"encoding": "pgm", "data": STANDARD.encode(&bytes)}]
        }));
        let (batch, _) = decode_request(&req, 255.0).unwrap();
        assert_eq!(batch.shape().dims(), &[1, 1, 2]);
        assert_eq!(batch.data(), &[0.0, 1.0]);

        let (batch, _) = decode_request(&req, 510.0).unwrap();
        assert_eq!(batch.data(), &[0.0, 0.5]);
    }

    #[test]
    fn encoders_match_decoder() {
        let shape = InputShape::flat(3).unwrap();
        let req = PredictionRequest {
            samples: vec![
                EncodedSample::f32le(&shape, &[0.5, -1.25, 3.0]),
                EncodedSample::f32le(&shape, &[0.0, 1e-3, 7.0]),
            ],
            policy: Some(SensitivityPolicy::AtLeast(2).into()),
        };
        let (batch, policy) = decode_request(&req.to_json(), 255.0).unwrap();
        assert_eq!(batch.data(), &[0.5, -1.25, 3.0, 0.0, 1e-3, 7.0]);
        assert_eq!(policy, Some(SensitivityPolicy::AtLeast(2)));
    }

    #[test]
    fn bad_requests() {
        let one = STANDARD.encode(1.0f32.to_le_bytes());
        let nan = STANDARD.encode(f32::NAN.to_le_bytes());
        let cases = [
            serde_json::json!({"samples": []}),
            serde_json::json!({}),
            serde_json::json!({"samples": [{"encoding": "f32le", "shape": [2], "data": one}]}),
            serde_json::json!({"samples": [{"encoding": "f32le", "data": one}]}),
            serde_json::json!({"samples": [{"encoding": "f32le", "shape": [1], "data": "!!"}]}),
            serde_json::json!({"samples": [{"encoding": "f32le", "shape": [1], "data": nan}]}),
            serde_json::json!({"samples": [{"encoding": "png", "data": one}]}),
            serde_json::json!({"samples": [{"encoding": "f32le", "shape": [0], "data": ""}]}),
            serde_json::json!({"samples": [
                {"encoding": "f32le", "shape": [1], "data": one},
                {"encoding": "f32le", "shape": [1, 1, 1], "data": one}
            ]}),
            serde_json::json!({"samples": [{"encoding": "pgm", "data": one}]}),
            serde_json::json!({"samples": [{"encoding": "f32le", "shape": [1], "data": one}], "extra": 1}),
            serde_json::json!({"samples": "nope"}),
        ];
        for case in cases {
            let err = decode_request(&body(case.clone()), 255.0).unwrap_err();
            assert!(matches!(err, Error::BadRequest(_)), "{case}: {err}");
        }
        assert!(matches!(
            decode_request(b"{not json", 255.0),
            Err(Error::BadRequest(_))
        ));
    }

    #[test]
    fn policies() {
        let one = STANDARD.encode(1.0f32.to_le_bytes());
        let with = |p: Value| {
            decode_request(
                &body(serde_json::json!({
                    "samples": [{"encoding": "f32le", "shape": [1], "data": one}],
                    "policy": p
                })),
                255.0,
            )
            .map(|(_, p)| p)
        };
        assert_eq!(with(serde_json::json!({"kind": "any"})).unwrap(), Some(SensitivityPolicy::Any));
        assert_eq!(with(serde_json::json!({"kind": "all"})).unwrap(), Some(SensitivityPolicy::All));
        assert_eq!(
            with(serde_json::json!({"kind": "at_least", "k": 3})).unwrap(),
            Some(SensitivityPolicy::AtLeast(3))
        );
        assert_eq!(with(Value::Null).unwrap(), None);
        for bad in [
            serde_json::json!({"kind": "most"}),
            serde_json::json!({"kind": "at_least"}),
            serde_json::json!({"kind": "at_least", "k": "2"}),
            serde_json::json!({"kind": "at_least", "k": -1}),
            serde_json::json!({"kind": "at_least", "k": 1.5}),
            serde_json::json!({"kind": 1}),
            serde_json::json!({"kind": "any", "weights": [1]}),
            serde_json::json!("any"),
        ] {
            assert!(matches!(with(bad.clone()), Err(Error::BadPolicy(_))), "{bad}");
        }
    }

    #[test]
    fn response_parsing() {
        let parsed = PredictionResponse::from_slice(
            br#"{"_batch_size":2,"_combined":["present","absent"],"m1":["present","absent"]}"#,
        )
        .unwrap();
        assert_eq!(parsed.batch_size, 2);
        assert_eq!(parsed.models["m1"], vec!["present", "absent"]);
        assert_eq!(parsed.combined.unwrap().len(), 2);
        assert!(PredictionResponse::from_slice(br#"{"m1":["a"]}"#).is_err());
    }
}
