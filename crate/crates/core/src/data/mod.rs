//! Recording container, windowing, normalisation and synthetic data.

pub mod noise;
pub mod normalize;
pub mod recording;
pub mod synth;
pub mod window;

pub use noise::perturb_noise;
pub use normalize::{fit_normalizer, ChannelNormalizer};
pub use recording::{load_recording, responses_csv, save_recording, RecordingSet, Split, Splits};
pub use synth::{generate_synthetic, generate_with_truth, SynthConfig, Synthetic};
pub use window::{make_windows, Sample, Windows};
