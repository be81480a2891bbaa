//! Encode a request, run it through the gateway handler without a socket and
//! decode the response.
//!
//! cargo run -p ensemblegate --example wire_protocol

use ensemblegate::flexctl::gen_model;
use ensemblegate::flexctl::Classes;
use ensemblegate::gateway::predict_response;
use ensemblegate::pgm::Pgm;
use ensemblegate::wire::{EncodedSample, PredictionRequest};
use ensemblegate::{Ensemble, InputShape, PreprocessSpec, SensitivityPolicy};

#[tokio::main]
async fn main() -> ensemblegate::Result<()> {
    let models = vec![
        gen_model(1, 4, Classes::Binary, "a")?,
        gen_model(2, 4, Classes::Binary, "b")?,
    ];
    let ensemble = Ensemble::new(models, PreprocessSpec::default(), 1 << 10, 8)?;

    let request = PredictionRequest {
        samples: vec![
            EncodedSample::f32le(&InputShape::flat(4)?, &[0.5, -0.25, 1.0, 0.0]),
            EncodedSample::f32le(&InputShape::flat(4)?, &[-1.0, 0.0, 0.0, 1.0]),
        ],
        policy: Some(SensitivityPolicy::Any.into()),
    };
    let body = request.to_json();
    println!("request:  {}", String::from_utf8_lossy(&body));

    let response = predict_response(&ensemble, &body);
    println!("status:   {}", response.status());
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX)
        .await
        .expect("in-memory body");
    println!("response: {}", String::from_utf8_lossy(&bytes));

    // a 2x2 PGM has the same length as the flat [4] model input
    let image = PredictionRequest {
        samples: vec![EncodedSample::pgm(&Pgm::new(2, 2, vec![0, 64, 128, 255])?)],
        policy: None,
    };
    let response = predict_response(&ensemble, &image.to_json());
    let bytes = axum::body::to_bytes(response.into_body(), usize::MAX)
        .await
        .expect("in-memory body");
    println!("pgm:      {}", String::from_utf8_lossy(&bytes));

    let bad = predict_response(&ensemble, br#"{"samples":[]}"#);
    let bytes = axum::body::to_bytes(bad.into_body(), usize::MAX)
        .await
        .expect("in-memory body");
    println!("error:    {}", String::from_utf8_lossy(&bytes));
    Ok(())
}
