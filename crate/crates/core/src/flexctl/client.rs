//! HTTP client for a running gateway and the `predict` command.

use std::path::PathBuf;
use std::fs;

use crate::error::{Error, Result};
use crate::flexctl::fixtures::SplitMix64;
use crate::model::InputShape;
use crate::pgm::decode_pgm;
use crate::policy::SensitivityPolicy;
use crate::wire::{EncodedSample, EnsembleInfo, PredictionRequest, PredictionResponse};

/// Raw outcome of one HTTP exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.body).into_owned()
    }

    /// Non-2xx replies become `Error::Http` carrying status and body.
    pub fn into_success(self) -> Result<Vec<u8>> {
        if self.is_success() {
            Ok(self.body)
        } else {
            Err(Error::Http(format!("status {}: {}", self.status, self.text())))
        }
    }
}

#[derive(Debug, Clone)]
pub struct GatewayClient {
    http: reqwest::Client,
    endpoint: String,
}

impl GatewayClient {
    pub fn new(endpoint: impl Into<String>) -> Self {
        GatewayClient {
            http: reqwest::Client::new(),
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    async fn send(&self, req: reqwest::RequestBuilder) -> Result<Reply> {
        let resp = req
            .send()
            .await
            .map_err(|e| Error::Http(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status().as_u16();
        let body = resp
            .bytes()
            .await
            .map_err(|e| Error::Http(format!("{}: {e}", self.endpoint)))?;
        Ok(Reply {
            status,
            body: body.to_vec(),
        })
    }

    pub async fn get(&self, path: &str) -> Result<Reply> {
        self.send(self.http.get(format!("{}{path}", self.endpoint))).await
    }

    /// Posts an already-serialized request body to `/v1/predict`.
    pub async fn predict_raw(&self, body: Vec<u8>) -> Result<Reply> {
        self.send(
            self.http
                .post(format!("{}/v1/predict", self.endpoint))
                .header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(body),
        )
        .await
    }

    pub async fn predict(&self, request: &PredictionRequest) -> Result<PredictionResponse> {
        let body = self.predict_raw(request.to_json()).await?.into_success()?;
        PredictionResponse::from_slice(&body)
    }

    pub async fn models(&self) -> Result<EnsembleInfo> {
        let body = self.get("/v1/models").await?.into_success()?;
        serde_json::from_slice(&body).map_err(|e| Error::Http(format!("bad /v1/models body: {e}")))
    }
}

/// Random f32le samples in `[-1, 1)`, reproducible from `seed`.
pub fn random_samples(shape: &InputShape, batch: usize, seed: u64) -> Vec<EncodedSample> {
    let mut rng = SplitMix64::new(seed);
    (0..batch)
        .map(|_| {
            let values: Vec<f32> = (0..shape.len()).map(|_| rng.next_signed_unit()).collect();
            EncodedSample::f32le(shape, &values)
        })
        .collect()
}

/// Where `predict` gets its samples.
#[derive(Debug, Clone)]
pub enum SampleSource {
    Random { batch: usize, seed: u64 },
    /// `.pgm` files are sent as images; anything else as raw little-endian f32.
    Files(Vec<PathBuf>),
}

pub fn samples_from_files(files: &[PathBuf], shape: &InputShape) -> Result<Vec<EncodedSample>> {
    files
        .iter()
        .map(|path| {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let is_pgm = path
                .extension()
                .is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"));
            if is_pgm {
                decode_pgm(&bytes)
                    .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
                return Ok(EncodedSample::pgm_bytes(&bytes));
            }
            if bytes.len() != 4 * shape.len() {
                return Err(Error::InvalidArgument(format!(
                    "{}: {} bytes, ensemble input {shape} needs {}",
                    path.display(),
                    bytes.len(),
                    4 * shape.len()
                )));
            }
            let values: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Ok(EncodedSample::f32le(shape, &values))
        })
        .collect()
}

/// Builds a request from `source`, posts it and returns the parsed response.
pub async fn predict_cmd(
    client: &GatewayClient,
    source: &SampleSource,
    policy: Option<SensitivityPolicy>,
) -> Result<PredictionResponse> {
    let info = client.models().await?;
    let shape = InputShape::new(info.input_shape.clone())?;
    let samples = match source {
        SampleSource::Random { batch, seed } => random_samples(&shape, *batch, *seed),
        SampleSource::Files(files) => samples_from_files(files, &shape)?,
    };
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to send".into()));
    }
    client
        .predict(&PredictionRequest {
            samples,
            policy: policy.map(Into::into),
        })
        .await
}

/// Pretty JSON in the wire layout.
pub fn render_response(resp: &PredictionResponse) -> String {
    let mut map = serde_json::Map::new();
    for (id, labels) in &resp.models {
        map.insert(id.clone(), labels.clone().into());
    }
    map.insert(crate::wire::BATCH_SIZE_KEY.into(), resp.batch_size.into());
    if let Some(c) = &resp.combined {
        map.insert(crate::wire::COMBINED_KEY.into(), c.clone().into());
    }
    serde_json::to_string_pretty(&map).expect("response renders")
}
