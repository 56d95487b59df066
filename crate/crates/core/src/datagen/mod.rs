//! Synthetic two-speaker noisy mixtures and WAV file I/O.

mod dataset;
mod mixture;
mod synth;
mod wav;

pub use dataset::{
    build_dataset, load_split, read_manifest, write_manifest, DatasetConfig, ManifestEntry, Split, Utterance,
    MANIFEST_FILE,
};
pub use mixture::{active_len, make_mixture, MixConfig, MixtureExample, MixtureMeta};
pub use synth::{apply_fir, reverb_fir, synth_noise, synth_speaker, SynthSpeakerSpec};
pub use wav::{wav_read, wav_write, WavFormat};

impl From<MixtureExample> for Utterance {
    fn from(m: MixtureExample) -> Self {
        Utterance {
            mixture: m.mixture,
            sources: m.sources,
        }
    }
}
