#![allow(dead_code)]

use mrhvid::dictionary::{train_dictionary, TrainConfig, TrainingTrace, VisualDictionary};
use mrhvid::evaluation::{full_mask, training_features, SignatureBank};
use mrhvid::features::RegionLayout;
use mrhvid::synth::{generate_dataset, SynthOutput, SynthSpec};
use tempfile::TempDir;

/// Training faces taken from each train video when fitting a dictionary.
pub const TRAIN_FRAMES: usize = 10;

pub struct Prepared {
    pub dir: TempDir,
    pub data: SynthOutput,
    pub dict: VisualDictionary,
    pub trace: TrainingTrace,
    pub bank: SignatureBank,
}

/// Generates a dataset, fits a dictionary on its train persons and extracts
/// every face signature.
pub fn prepare(spec: &SynthSpec, components: usize) -> Prepared {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(spec, dir.path()).unwrap();
    let layout = RegionLayout::default();
    let feats = training_features(&data.manifest, dir.path(), &layout, Some(TRAIN_FRAMES)).unwrap();
    let config = TrainConfig {
        components,
        seed: spec.seed,
        ..TrainConfig::default()
    };
    let (dict, trace) = train_dictionary(&feats, &config).unwrap();
    let bank = SignatureBank::extract(&data.manifest, dir.path(), &dict, &layout, &full_mask(&data.manifest)).unwrap();
    Prepared { dir, data, dict, trace, bank }
}
