mod common;

use ensemblegate::flexctl::track::{track_cmd, window_sizes};
use ensemblegate::flexctl::GatewayClient;
use proptest::prelude::*;

use common::*;

async fn track_values(frames: usize, window: usize) -> (Vec<Recorded>, Vec<Vec<String>>) {
    let server = RecordingServer::start();
    let dir = tempfile::tempdir().unwrap();
    // frame i carries pixel value i, so order is visible in the recorded batches
    write_frames(dir.path(), frames, |i| i as u8);
    // decoy files that must be skipped
    std::fs::write(dir.path().join("notes.txt"), b"x").unwrap();
    let client = GatewayClient::new(server.endpoint());
    let results = track_cmd(&client, dir.path(), window, None).await.unwrap();
    let names = results.iter().map(|w| w.frames.clone()).collect();
    (server.batches(), names)
}

fn first_values(batches: &[Recorded]) -> Vec<Vec<u32>> {
    batches
        .iter()
        .map(|b| b.iter().map(|s| s[0] as u32).collect())
        .collect()
}

#[tokio::test]
async fn six_frames_window_three() {
    let (batches, names) = track_values(6, 3).await;
    assert_eq!(first_values(&batches), vec![vec![0, 1, 2], vec![3, 4, 5]]);
    assert_eq!(names[1], ["frame_003.pgm", "frame_004.pgm", "frame_005.pgm"]);
}

#[tokio::test]
async fn seven_frames_window_three_leaves_a_short_tail() {
    let (batches, _) = track_values(7, 3).await;
    assert_eq!(first_values(&batches), vec![vec![0, 1, 2], vec![3, 4, 5], vec![6]]);
    // every pixel of a frame is sent, not just the first
    assert!(batches.iter().flatten().all(|s| s.len() == 4 && s.iter().all(|&v| v == s[0])));
}

#[tokio::test]
async fn window_larger_than_sequence_sends_one_batch() {
    let (batches, _) = track_values(2, 10).await;
    assert_eq!(first_values(&batches), vec![vec![0, 1]]);
}

proptest! {
    #[test]
    fn window_sizes_cover_frames_in_order(frames in 0usize..200, window in 1usize..40) {
        let sizes = window_sizes(frames, window);
        prop_assert_eq!(sizes.iter().sum::<usize>(), frames);
        prop_assert_eq!(sizes.len(), frames.div_ceil(window));
        if let Some((last, full)) = sizes.split_last() {
            prop_assert!(full.iter().all(|&s| s == window));
            prop_assert!(*last >= 1 && *last <= window);
        }
    }
}
