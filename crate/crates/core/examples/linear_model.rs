//! Build a LIN1 model by hand, round-trip it through JSON and classify a batch.
//!
//! cargo run -p ensemblegate --example linear_model

use ensemblegate::flexctl::fixtures::model_document;
use ensemblegate::{linear_predict, parse_model_file, InputShape, LinearModel, SampleBatch};

fn main() -> ensemblegate::Result<()> {
    let model = LinearModel::new(
        "diag",
        InputShape::flat(2)?,
        vec!["left".into(), "right".into()],
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![0.0, 0.0],
    )?;
    let bytes = model_document(&model);
    println!("{}", String::from_utf8_lossy(&bytes).trim_end());

    let parsed = parse_model_file(&bytes)?;
    assert_eq!(parsed, model);
    println!("parameter bytes: {}", parsed.parameter_bytes());

    // [0.5, 0.5] ties, and ties go to the lowest class index
    let batch = SampleBatch::from_samples(
        InputShape::flat(2)?,
        &[vec![0.9, 0.1], vec![0.1, 0.9], vec![0.5, 0.5]],
    )?;
    for (sample, class) in batch.samples().zip(linear_predict(&parsed, &batch)?) {
        println!("{sample:?} -> {}", parsed.labels()[class]);
    }
    Ok(())
}
