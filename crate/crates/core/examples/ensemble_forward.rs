//! Generate fixture models, write a manifest, load it under a memory budget and
//! run one forward call for a whole batch.
//!
//! cargo run -p ensemblegate --example ensemble_forward

use ensemblegate::flexctl::fixtures::{gen_manifest, gen_model, write_manifest, write_model};
use ensemblegate::flexctl::Classes;
use ensemblegate::{load_ensemble, Error, InputShape, ModelManifest, PreprocessSpec, SampleBatch};

fn main() -> ensemblegate::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| Error::io("tempdir", e))?;
    let mut paths = Vec::new();
    for (i, seed) in [11u64, 12, 13].into_iter().enumerate() {
        let path = dir.path().join(format!("m{i}.json"));
        write_model(&gen_model(seed, 8, Classes::Binary, &format!("m{i}"))?, &path)?;
        paths.push(path);
    }

    // each model needs 4 * (2*8 + 2) = 72 bytes
    let out = dir.path().join("manifest.json");
    for budget in [215, 216] {
        let manifest = gen_manifest(&paths, budget, 16, PreprocessSpec::default(), &out)?;
        match load_ensemble(&manifest) {
            Ok(e) => println!("budget {budget}: loaded {} models, {} bytes", e.len(), e.bytes_used()),
            Err(err) => println!("budget {budget}: {err}"),
        }
        write_manifest(&manifest, &out)?;
    }

    let ensemble = load_ensemble(&ModelManifest::from_path(&out)?)?;
    let samples: Vec<Vec<f32>> = (0..4)
        .map(|i| (0..8).map(|j| ((i * 8 + j) as f32 / 16.0) - 1.0).collect())
        .collect();
    let batch = SampleBatch::from_samples(InputShape::flat(8)?, &samples)?;
    let out = ensemble.forward(&batch)?;
    for (id, labels) in out.model_ids.iter().zip(ensemble.render_labels(&out)) {
        println!("{id}: {labels:?}");
    }
    println!("preprocess ran {} time(s)", ensemble.preprocess_count());
    Ok(())
}
