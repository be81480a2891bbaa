//! Samples, the shared preprocessing transform and the LIN1 linear classifier.
//!
//! A LIN1 file is a JSON document:
//!
//! ```json
//! {
//!   "format": "lin1",
//!   "id": "m1",
//!   "input_shape": [2],
//!   "labels": ["absent", "present"],
//!   "weights": [[1, 0], [0, 1]],
//!   "bias": [0, 0]
//! }
//! ```
//!
//! `weights` holds one row of `D` numbers per class, where `D` is the product
//! of `input_shape`. Unknown fields are rejected.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels a model must carry, in this order, to take part in a sensitivity policy.
pub const BINARY_LABELS: [&str; 2] = ["absent", "present"];

/// Either `[D]` for flat vectors or `[C, H, W]` for images.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct InputShape(Vec<usize>);

impl InputShape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() != 1 && dims.len() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "input shape must have 1 or 3 dims, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::ShapeMismatch(format!(
                "input shape dims must be >= 1, got {dims:?}"
            )));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::ShapeMismatch(format!("input shape {dims:?} overflows")))?;
        Ok(InputShape(dims))
    }

    pub fn flat(len: usize) -> Result<Self> {
        Self::new(vec![len])
    }

    pub fn image(channels: usize, height: usize, width: usize) -> Result<Self> {
        Self::new(vec![channels, height, width])
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    /// Flattened length `D`.
    pub fn len(&self) -> usize {
        self.0.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Channel count: `C` for images, 1 for flat vectors.
    pub fn channels(&self) -> usize {
        match self.0.as_slice() {
            [c, _, _] => *c,
            _ => 1,
        }
    }

    pub fn is_flat(&self) -> bool {
        self.0.len() == 1
    }
}

impl fmt::Display for InputShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

/// `B` samples of one shape, stored row-major and sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    shape: InputShape,
    data: Vec<f32>,
}

impl SampleBatch {
    pub fn new(shape: InputShape, data: Vec<f32>) -> Result<Self> {
        let d = shape.len();
        if data.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::ShapeMismatch(format!(
                "{} values is not a whole number of samples of shape {shape}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadRequest(format!(
                "non-finite value in sample {} at offset {}",
                i / d,
                i % d
            )));
        }
        Ok(SampleBatch { shape, data })
    }

    pub fn from_samples(shape: InputShape, samples: &[Vec<f32>]) -> Result<Self> {
        let d = shape.len();
        if let Some(bad) = samples.iter().find(|s| s.len() != d) {
            return Err(Error::ShapeMismatch(format!(
                "sample has {} values, shape {shape} needs {d}",
                bad.len()
            )));
        }
        Self::new(shape, samples.concat())
    }

    pub fn batch_size(&self) -> usize {
        self.data.len() / self.shape.len()
    }

    pub fn shape(&self) -> &InputShape {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn sample(&self, index: usize) -> &[f32] {
        let d = self.shape.len();
        &self.data[index * d..(index + 1) * d]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.shape.len())
    }

    /// Same values viewed under another shape of equal flattened length.
    pub fn reshape(self, shape: InputShape) -> Result<Self> {
        if shape.len() != self.shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot view shape {} as {shape}",
                self.shape
            )));
        }
        Ok(SampleBatch {
            shape,
            data: self.data,
        })
    }
}

fn default_pixel_scale() -> f64 {
    255.0
}

/// Per-channel normalization `(x - mean_c) / std_c`.
///
/// `pixel_scale` is not applied here: it divides integer pixel encodings
/// (PGM) when they are decoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSpec {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    #[serde(default = "default_pixel_scale")]
    pub pixel_scale: f64,
}

impl Default for PreprocessSpec {
    fn default() -> Self {
        PreprocessSpec {
            mean: vec![0.0],
            std: vec![1.0],
            pixel_scale: default_pixel_scale(),
        }
    }
}

impl PreprocessSpec {
    pub fn new(mean: Vec<f64>, std: Vec<f64>, pixel_scale: f64) -> Result<Self> {
        let spec = PreprocessSpec {
            mean,
            std,
            pixel_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.is_empty() || self.std.is_empty() {
            return Err(Error::InvalidArgument(
                "preprocess mean and std must be non-empty".into(),
            ));
        }
        if self.mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("preprocess mean must be finite".into()));
        }
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidArgument(
                "every preprocess std entry must be > 0".into(),
            ));
        }
        if !(self.pixel_scale.is_finite() && self.pixel_scale > 0.0) {
            return Err(Error::InvalidArgument("pixel_scale must be > 0".into()));
        }
        Ok(())
    }

    /// Fails unless mean and std have length 1 or the channel count of `shape`.
    pub fn check_shape(&self, shape: &InputShape) -> Result<()> {
        let c = shape.channels();
        for (name, v) in [("mean", &self.mean), ("std", &self.std)] {
            if v.len() != 1 && v.len() != c {
                return Err(Error::ShapeMismatch(format!(
                    "preprocess {name} has {} entries, shape {shape} has {c} channel(s)",
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn preprocess(raw: &SampleBatch, spec: &PreprocessSpec) -> Result<SampleBatch> {
    spec.check_shape(raw.shape())?;
    let d = raw.shape().len();
    let plane = d / raw.shape().channels();
    let pick = |v: &[f64], c: usize| if v.len() == 1 { v[0] } else { v[c] };

    let data = raw
        .data()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = (i % d) / plane;
            ((f64::from(x) - pick(&spec.mean, c)) / pick(&spec.std, c)) as f32
        })
        .collect();
    SampleBatch::new(raw.shape().clone(), data)
}

/// `[A-Za-z0-9][A-Za-z0-9_.-]*`
pub fn is_valid_model_id(id: &str) -> bool {
    let mut chars = id.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphanumeric() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

/// On-disk LIN1 layout; field order here is the serialized order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lin1Document {
    pub format: String,
    pub id: String,
    pub input_shape: Vec<usize>,
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f32>>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    id: String,
    input_shape: InputShape,
    labels: Vec<String>,
    // K rows of D, row-major
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl LinearModel {
    pub fn new(
        id: impl Into<String>,
        input_shape: InputShape,
        labels: Vec<String>,
        weights: Vec<Vec<f32>>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        let id = id.into();
        let bad = |msg: String| Error::MalformedModel(msg);
        if !is_valid_model_id(&id) {
            return Err(bad(format!(
                "id {id:?} must match [A-Za-z0-9][A-Za-z0-9_.-]*"
            )));
        }
        let k = labels.len();
        if k < 2 {
            return Err(bad(format!("model {id} needs at least 2 labels, got {k}")));
        }
        if labels.iter().any(String::is_empty) {
            return Err(bad(format!("model {id} has an empty label")));
        }
        for (i, label) in labels.iter().enumerate() {
            if labels[..i].contains(label) {
                return Err(bad(format!("model {id} has duplicate label {label:?}")));
            }
        }
        if weights.len() != k {
            return Err(bad(format!(
                "model {id} has {} weight rows for {k} labels",
                weights.len()
            )));
        }
        let d = input_shape.len();
        if let Some((row, w)) = weights.iter().enumerate().find(|(_, w)| w.len() != d) {
            return Err(bad(format!(
                "model {id} weight row {row} has length {}, input shape {input_shape} needs {d}",
                w.len()
            )));
        }
        if bias.len() != k {
            return Err(bad(format!(
                "model {id} has {} bias entries for {k} labels",
                bias.len()
            )));
        }
        if weights.iter().flatten().chain(&bias).any(|v| !v.is_finite()) {
            return Err(bad(format!("model {id} has non-finite parameters")));
        }
        Ok(LinearModel {
            id,
            input_shape,
            labels,
            weights: weights.concat(),
            bias,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn input_shape(&self) -> &InputShape {
        &self.input_shape
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn weight_row(&self, class: usize) -> &[f32] {
        let d = self.input_shape.len();
        &self.weights[class * d..(class + 1) * d]
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Accounted size: 4 bytes per weight and bias parameter.
    pub fn parameter_bytes(&self) -> u64 {
        4 * (self.weights.len() as u64 + self.bias.len() as u64)
    }

    pub fn is_binary(&self) -> bool {
        self.labels.iter().map(String::as_str).eq(BINARY_LABELS)
    }

    pub fn to_document(&self) -> Lin1Document {
        Lin1Document {
            format: "lin1".into(),
            id: self.id.clone(),
            input_shape: self.input_shape.dims().to_vec(),
            labels: self.labels.clone(),
            weights: (0..self.num_classes())
                .map(|k| self.weight_row(k).to_vec())
                .collect(),
            bias: self.bias.clone(),
        }
    }

    pub fn from_document(doc: Lin1Document) -> Result<Self> {
        if doc.format != "lin1" {
            return Err(Error::MalformedModel(format!(
                "format must be \"lin1\", got {:?}",
                doc.format
            )));
        }
        let shape = InputShape::new(doc.input_shape)
            .map_err(|e| Error::MalformedModel(format!("model {}: {e}", doc.id)))?;
        LinearModel::new(doc.id, shape, doc.labels, doc.weights, doc.bias)
    }
}

pub fn parse_model_file(bytes: &[u8]) -> Result<LinearModel> {
    let doc: Lin1Document =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedModel(e.to_string()))?;
    LinearModel::from_document(doc)
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

pub fn linear_predict(model: &LinearModel, batch: &SampleBatch) -> Result<Vec<usize>> {
    let d = model.input_shape.len();
    if batch.shape().len() != d {
        return Err(Error::ShapeMismatch(format!(
            "model {} expects {d} inputs, batch samples have {}",
            model.id,
            batch.shape().len()
        )));
    }
    let mut logits = vec![0.0f64; model.num_classes()];
    Ok(batch
        .samples()
        .map(|x| {
            for (k, logit) in logits.iter_mut().enumerate() {
                let dot: f64 = model
                    .weight_row(k)
                    .iter()
                    .zip(x)
                    .map(|(&w, &v)| f64::from(w) * f64::from(v))
                    .sum();
                *logit = dot + f64::from(model.bias[k]);
            }
            argmax(&logits)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn identity_doc() -> &'static str {
        r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["absent","present"],
            "weights":[[1,0],[0,1]],"bias":[0,0]}"#
    }

    fn flat(d: usize) -> InputShape {
        InputShape::flat(d).unwrap()
    }

    fn model(weights: Vec<Vec<f32>>, bias: Vec<f32>) -> LinearModel {
        let d = weights[0].len();
        let labels = (0..weights.len()).map(|k| format!("c{k}")).collect();
        LinearModel::new("m", flat(d), labels, weights, bias).unwrap()
    }

    #[test]
    fn parses_identity_model() {
        let m = parse_model_file(identity_doc().as_bytes()).unwrap();
        assert_eq!(m.id(), "m1");
        assert_eq!(m.input_shape().dims(), &[2]);
        assert_eq!(m.labels(), &["absent", "present"]);
        assert_eq!(m.weight_row(0), &[1.0, 0.0]);
        assert_eq!(m.weight_row(1), &[0.0, 1.0]);
        assert_eq!(m.bias(), &[0.0, 0.0]);
        assert!(m.is_binary());
        assert_eq!(m.parameter_bytes(), 4 * (4 + 2));
    }

    #[test]
    fn rejects_bad_documents() {
        let cases = [
            // weights row length != D
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a","b"],"weights":[[1,0,0],[0,1,0]],"bias":[0,0]}"#,
            // duplicate labels
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a","a"],"weights":[[1,0],[0,1]],"bias":[0,0]}"#,
            // reserved id prefix
            r#"{"format":"lin1","id":"_m","input_shape":[2],"labels":["a","b"],"weights":[[1,0],[0,1]],"bias":[0,0]}"#,
            // unknown field
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a","b"],"weights":[[1,0],[0,1]],"bias":[0,0],"extra":1}"#,
            // wrong format tag
            r#"{"format":"lin2","id":"m1","input_shape":[2],"labels":["a","b"],"weights":[[1,0],[0,1]],"bias":[0,0]}"#,
            // missing bias
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a","b"],"weights":[[1,0],[0,1]]}"#,
            // single class
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a"],"weights":[[1,0]],"bias":[0]}"#,
            // bias length
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a","b"],"weights":[[1,0],[0,1]],"bias":[0]}"#,
            // two-dim shape
            r#"{"format":"lin1","id":"m1","input_shape":[1,2],"labels":["a","b"],"weights":[[1,0],[0,1]],"bias":[0,0]}"#,
            // empty label
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a",""],"weights":[[1,0],[0,1]],"bias":[0,0]}"#,
            // overflows f32
            r#"{"format":"lin1","id":"m1","input_shape":[2],"labels":["a","b"],"weights":[[1e39,0],[0,1]],"bias":[0,0]}"#,
            "not json",
        ];
        for doc in cases {
            let err = parse_model_file(doc.as_bytes()).unwrap_err();
            assert!(matches!(err, Error::MalformedModel(_)), "{doc}: {err}");
        }
    }

    #[test]
    fn model_ids() {
        for ok in ["m1", "A", "resnet-18.v2", "a_b"] {
            assert!(is_valid_model_id(ok), "{ok}");
        }
        for bad in ["", "_combined", "-m", ".m", "m 1", "m/1", "é"] {
            assert!(!is_valid_model_id(bad), "{bad}");
        }
    }

    #[test]
    fn document_round_trip() {
        let m = parse_model_file(identity_doc().as_bytes()).unwrap();
        let text = serde_json::to_vec(&m.to_document()).unwrap();
        assert_eq!(parse_model_file(&text).unwrap(), m);
    }

    #[test]
    fn shapes() {
        assert!(InputShape::new(vec![]).is_err());
        assert!(InputShape::new(vec![2, 2]).is_err());
        assert!(InputShape::new(vec![3, 0, 2]).is_err());
        let s = InputShape::image(3, 2, 2).unwrap();
        assert_eq!((s.len(), s.channels()), (12, 3));
        assert_eq!(flat(5).channels(), 1);
    }

    #[test]
    fn batch_rejects_non_finite_and_ragged() {
        assert!(matches!(
            SampleBatch::new(flat(2), vec![]),
            Err(Error::EmptyBatch)
        ));
        assert!(SampleBatch::new(flat(2), vec![1.0, 2.0, 3.0]).is_err());
        assert!(SampleBatch::new(flat(2), vec![1.0, f32::NAN]).is_err());
        assert!(SampleBatch::new(flat(1), vec![f32::INFINITY]).is_err());
        let b = SampleBatch::new(flat(2), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(b.batch_size(), 2);
        assert_eq!(b.sample(1), &[3.0, 4.0]);
    }

    #[test]
    fn preprocess_scalar_cases() {
        let one = |x: f32, mean: f64, std: f64| {
            let b = SampleBatch::new(flat(1), vec![x]).unwrap();
            let spec = PreprocessSpec::new(vec![mean], vec![std], 255.0).unwrap();
            preprocess(&b, &spec).unwrap().data()[0]
        };
        assert_eq!(one(1.0, 0.5, 0.5), 1.0);
        assert_eq!(one(0.5, 0.5, 2.0), 0.0);
    }

    #[test]
    fn preprocess_per_channel_matches_loop_oracle() {
        let shape = InputShape::image(3, 2, 2).unwrap();
        let raw: Vec<f32> = (0..12).map(|i| i as f32 * 0.25).collect();
        let batch = SampleBatch::new(shape, raw.clone()).unwrap();
        let spec = PreprocessSpec::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0], 255.0).unwrap();
        let out = preprocess(&batch, &spec).unwrap();

        let mut expected = Vec::new();
        for c in 0..3 {
            for pos in 0..4 {
                expected.push(raw[c * 4 + pos] - c as f32);
            }
        }
        assert_eq!(out.data(), expected.as_slice());
        assert_eq!(out.shape(), batch.shape());
    }

    #[test]
    fn preprocess_rejects_channel_mismatch() {
        let batch = SampleBatch::new(InputShape::image(3, 1, 1).unwrap(), vec![0.0; 3]).unwrap();
        let spec = PreprocessSpec::new(vec![0.0, 0.0], vec![1.0], 255.0).unwrap();
        assert!(matches!(
            preprocess(&batch, &spec),
            Err(Error::ShapeMismatch(_))
        ));
        let flat_batch = SampleBatch::new(flat(3), vec![0.0; 3]).unwrap();
        let spec = PreprocessSpec::new(vec![0.0, 0.0, 0.0], vec![1.0], 255.0).unwrap();
        assert!(preprocess(&flat_batch, &spec).is_err());
    }

    #[test]
    fn preprocess_spec_validation() {
        assert!(PreprocessSpec::new(vec![0.0], vec![0.0], 255.0).is_err());
        assert!(PreprocessSpec::new(vec![0.0], vec![-1.0], 255.0).is_err());
        assert!(PreprocessSpec::new(vec![0.0], vec![1.0], 0.0).is_err());
        assert!(PreprocessSpec::new(vec![], vec![1.0], 1.0).is_err());
    }

    #[test]
    fn predict_examples() {
        let identity = model(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.0]);
        let batch = SampleBatch::new(flat(2), vec![0.2, 0.9, 0.5, 0.5]).unwrap();
        assert_eq!(linear_predict(&identity, &batch).unwrap(), vec![1, 0]);

        // logits [3, 7, 1]
        let three = model(
            vec![vec![1.0, 2.0], vec![3.0, 4.0], vec![0.0, 0.0]],
            vec![0.0, 0.0, 1.0],
        );
        let x = SampleBatch::new(flat(2), vec![1.0, 1.0]).unwrap();
        assert_eq!(linear_predict(&three, &x).unwrap(), vec![1]);

        let wrong = SampleBatch::new(flat(3), vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(
            linear_predict(&three, &wrong),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn predict_accumulates_in_double() {
        // 1e8 + 1 - 1e8 vanishes in f32 accumulation but not in f64.
        let m = model(vec![vec![0.0; 3], vec![1e8, 1.0, -1e8]], vec![0.5, 0.0]);
        let x = SampleBatch::new(flat(3), vec![1.0, 1.0, 1.0]).unwrap();
        assert_eq!(linear_predict(&m, &x).unwrap(), vec![1]);
    }

    proptest! {
        #[test]
        fn argmax_is_lowest_maximizer(raw in proptest::collection::vec(-3i8..3, 1..9)) {
            // small integer range forces frequent ties
            let logits: Vec<f64> = raw.iter().map(|&v| f64::from(v)).collect();
            let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let expected = logits.iter().position(|&v| v == max).unwrap();
            prop_assert_eq!(argmax(&logits), expected);
        }

        #[test]
        fn preprocess_is_linear_with_zero_mean(
            xs in proptest::collection::vec(-100.0f32..100.0, 1..16),
            a in -10.0f32..10.0,
            std in 0.1f64..10.0,
        ) {
            let spec = PreprocessSpec::new(vec![0.0], vec![std], 255.0).unwrap();
            let shape = flat(xs.len());
            let scaled: Vec<f32> = xs.iter().map(|x| a * x).collect();
            let lhs = preprocess(&SampleBatch::new(shape.clone(), scaled).unwrap(), &spec).unwrap();
            let rhs = preprocess(&SampleBatch::new(shape, xs).unwrap(), &spec).unwrap();
            for (l, r) in lhs.data().iter().zip(rhs.data()) {
                let r = a * r;
                prop_assert!((l - r).abs() <= 1e-6 * l.abs().max(r.abs()), "{} vs {}", l, r);
            }
        }

        #[test]
        fn predict_is_deterministic(xs in proptest::collection::vec(-1.0f32..1.0, 4)) {
            let m = model(vec![vec![0.3, -0.2, 0.1, 0.9], vec![-0.5, 0.4, 0.2, 0.0]], vec![0.1, -0.1]);
            let batch = SampleBatch::new(flat(4), xs).unwrap();
            prop_assert_eq!(linear_predict(&m, &batch).unwrap(), linear_predict(&m, &batch).unwrap());
        }
    }
}
