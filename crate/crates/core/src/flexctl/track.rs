//! Chronological tracking: send ordered frames in consecutive windows.
//!
//! Frames are the `.pgm` files of a directory in lexicographic file-name
//! order. Each window of up to `W` frames becomes one request, and the last
//! window carries whatever remains.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::flexctl::client::GatewayClient;
use crate::pgm::decode_pgm;
use crate::policy::SensitivityPolicy;
use crate::wire::{EncodedSample, PredictionRequest, PredictionResponse};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowResult {
    pub index: usize,
    pub frames: Vec<String>,
    pub response: PredictionResponse,
}

/// `.pgm` files in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut frames = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_pgm = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"));
        if is_pgm && path.is_file() {
            frames.push(path);
        }
    }
    if frames.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{}: no .pgm frames found",
            dir.display()
        )));
    }
    frames.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(frames)
}

/// Batch sizes for `frames` split into windows of at most `window`.
pub fn window_sizes(frames: usize, window: usize) -> Vec<usize> {
    if window == 0 {
        return Vec::new();
    }
    (0..frames)
        .step_by(window)
        .map(|start| window.min(frames - start))
        .collect()
}

pub async fn track_cmd(
    client: &GatewayClient,
    frame_dir: &Path,
    window: usize,
    policy: Option<SensitivityPolicy>,
) -> Result<Vec<WindowResult>> {
    if window == 0 {
        return Err(Error::InvalidArgument("window must be >= 1".into()));
    }
    let paths = list_frames(frame_dir)?;
    // Decode everything up front so a bad frame fails before any request.
    let mut frames = Vec::with_capacity(paths.len());
    for path in &paths {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        decode_pgm(&bytes).map_err(|e| {
            Error::InvalidArgument(format!("undecodable frame {}: {e}", path.display()))
        })?;
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        frames.push((name, bytes));
    }

    let mut results = Vec::new();
    for (index, chunk) in frames.chunks(window).enumerate() {
        let request = PredictionRequest {
            samples: chunk.iter().map(|(_, b)| EncodedSample::pgm_bytes(b)).collect(),
            policy: policy.map(Into::into),
        };
        let response = client.predict(&request).await?;
        results.push(WindowResult {
            index,
            frames: chunk.iter().map(|(n, _)| n.clone()).collect(),
            response,
        });
    }
    Ok(results)
}

/// One line per frame, grouped by window, in chronological order.
///
/// ```text
/// window 0 (3 frames)
///   frame_000.pgm  combined=absent  m1=absent m2=absent
/// ```
pub fn render_timeline(results: &[WindowResult]) -> String {
    let mut out = String::new();
    for w in results {
        let _ = writeln!(out, "window {} ({} frames)", w.index, w.frames.len());
        for (i, frame) in w.frames.iter().enumerate() {
            let _ = write!(out, "  {frame}");
            if let Some(combined) = &w.response.combined {
                let _ = write!(out, "  combined={}", combined[i]);
            }
            let _ = write!(out, " ");
            for (id, labels) in &w.response.models {
                let _ = write!(out, " {id}={}", labels[i]);
            }
            out.push('\n');
        }
    }
    out
}
