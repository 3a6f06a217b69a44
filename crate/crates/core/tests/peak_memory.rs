//! Tensor high-water marks of eager forwards. Allocation accounting is
//! process-wide, so this binary holds a single test.

use eadl_core::attention::AttentionSpec;
use eadl_core::encoder::{forward, Mode, ModelCheckpoint, ModelConfig, TokenBatch};
use eadl_core::numcore::{alloc_stats, reset_peak, Eager};

/// Bytes the forward allocates above what is live when it starts.
fn peak(ckpt: &ModelCheckpoint, n: usize) -> usize {
    let ids: Vec<u32> = (0..n as u32).map(|i| 4 + i % 20).collect();
    let batch = TokenBatch::single(ids).unwrap();
    reset_peak();
    let base = alloc_stats().current_bytes;
    let out = forward(&mut Eager::new(), &ckpt.config, &ckpt.weights, &batch, Mode::Eval).unwrap();
    drop(out);
    alloc_stats().peak_bytes - base
}

fn model(spec: AttentionSpec, hidden: usize) -> ModelCheckpoint {
    let config = ModelConfig {
        hidden_dim: hidden,
        ffn_dim: 2 * hidden,
        attention_spec: spec,
        ..ModelConfig::tiny(32, 1024)
    };
    ModelCheckpoint::init(config, 0).unwrap()
}

#[test]
fn peak_bytes_track_score_material() {
    let window = AttentionSpec::SlidingWindow {
        window: 8,
        dilation: 1,
        global: vec![],
    };
    for hidden in [16, 32] {
        let full = model(AttentionSpec::Full, hidden);
        let win = model(window.clone(), hidden);
        let lens = [128, 256, 512];
        let full_peaks: Vec<usize> = lens.iter().map(|&n| peak(&full, n)).collect();
        let win_peaks: Vec<usize> = lens.iter().map(|&n| peak(&win, n)).collect();

        assert_eq!(peak(&full, 256), full_peaks[1], "repeatable accounting");

        for w in full_peaks.windows(2) {
            assert!(w[1] as f64 / w[0] as f64 > 2.5, "hidden {hidden}: full doubling {w:?}");
        }
        assert!(full_peaks[2] >= 8 * full_peaks[0], "hidden {hidden}: full {full_peaks:?}");
        for w in win_peaks.windows(2) {
            assert!((w[1] as f64 / w[0] as f64) < 2.5, "hidden {hidden}: window doubling {w:?}");
        }
        // Activations of a fixed window are linear in length.
        assert!(win_peaks[2] <= 4 * win_peaks[0], "hidden {hidden}: window {win_peaks:?}");
    }
}
