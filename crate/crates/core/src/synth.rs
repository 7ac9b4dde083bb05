//! Synthetic labelled identities for end-to-end experiments.
//!
//! Each person owns a smooth random texture drawn around a shared face-like
//! layout. Frames add Gaussian pixel noise and an affine intensity change; the
//! reported eye coordinates are perturbed to mimic eye-localisation error.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ingest::{
    save_manifest, save_pgm, DatasetManifest, FaceRecord, GrayImage, PersonEntry, Role, VideoEntry,
    CANONICAL_LEFT_EYE, CANONICAL_RIGHT_EYE, FACE_SIZE,
};
use crate::{Error, Result};

/// Side length of generated frames.
pub const IMAGE_SIZE: usize = 96;
/// Offset of the canonical face inside a frame.
const MARGIN: f64 = ((IMAGE_SIZE - FACE_SIZE) / 2) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JitterMode {
    /// Each eye coordinate moves independently, up to `crop_jitter * 64` px.
    Uniform,
    /// Eyes are spread or pinched about their midpoint by `1 +/- crop_jitter`,
    /// giving two distinct apparent face sizes.
    Bimodal,
}

impl std::str::FromStr for JitterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(JitterMode::Uniform),
            "bimodal" => Ok(JitterMode::Bimodal),
            other => Err(Error::InvalidParameter(format!("unknown jitter mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Enrolled identities.
    pub persons: usize,
    pub videos_per_person: usize,
    /// Leading videos of each person marked `enroll`; the rest are `probe`.
    pub enroll_videos: usize,
    pub frames_per_video: usize,
    /// Extra identities with a single `train` video, for dictionaries and cohorts.
    pub train_persons: usize,
    /// Standard deviation of additive pixel noise, in gray levels.
    pub noise_sigma: f64,
    /// Eye-localisation error as a fraction of the face width.
    pub crop_jitter: f64,
    pub jitter_mode: JitterMode,
    /// Gain is drawn from `1 +/- intensity_jitter`, offset from `+/- 64 * intensity_jitter`.
    pub intensity_jitter: f64,
    /// Weight of the person-specific texture relative to the shared layout.
    pub distinctiveness: f64,
    /// Highest spatial frequency, in cycles per face width.
    pub max_frequency: f64,
    pub texture_waves: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            persons: 10,
            videos_per_person: 10,
            enroll_videos: 5,
            frames_per_video: 40,
            train_persons: 16,
            noise_sigma: 20.0,
            crop_jitter: 0.1,
            jitter_mode: JitterMode::Uniform,
            intensity_jitter: 0.1,
            distinctiveness: 0.15,
            max_frequency: 4.0,
            texture_waves: 12,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParameter(format!("synth: {msg}")));
        if self.persons == 0 || self.videos_per_person == 0 || self.frames_per_video == 0 {
            return bad("persons, videos_per_person and frames_per_video must be at least 1");
        }
        if self.enroll_videos > self.videos_per_person {
            return bad("enroll_videos exceeds videos_per_person");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be a finite value >= 0");
        }
        if !(0.0..=0.3).contains(&self.crop_jitter) {
            return bad("crop_jitter must lie in [0, 0.3]");
        }
        if !(0.0..1.0).contains(&self.intensity_jitter) {
            return bad("intensity_jitter must lie in [0, 1)");
        }
        if !(self.distinctiveness >= 0.0 && self.distinctiveness.is_finite()) {
            return bad("distinctiveness must be a finite value >= 0");
        }
        if !(self.max_frequency > 0.0 && self.max_frequency.is_finite()) || self.texture_waves == 0 {
            return bad("texture needs a positive max_frequency and at least one wave");
        }
        Ok(())
    }
}

/// What the generator did to one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    pub person_id: String,
    pub video_id: String,
    pub frame: u64,
    /// Euclidean norm of the four eye-coordinate offsets, in pixels.
    pub jitter_magnitude: f64,
    /// 0 for the shrunken and 1 for the enlarged crop in bimodal mode.
    pub mode: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: DatasetManifest,
    pub truth: Vec<FrameTruth>,
}

/// Confidence reported for a given eye jitter; strictly decreasing.
pub fn confidence_for_jitter(magnitude: f64) -> f64 {
    (-magnitude / 16.0).exp()
}

#[derive(Debug, Clone)]
struct Wave {
    fx: f64,
    fy: f64,
    phase: f64,
    amp: f64,
}

#[derive(Debug, Clone)]
struct Texture {
    waves: Vec<Wave>,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng, count: usize, max_freq: f64) -> Self {
        let amp = (2.0 / count as f64).sqrt();
        let waves = (0..count)
            .map(|_| {
                let r = max_freq * rng.random::<f64>().sqrt();
                let theta = rng.random::<f64>() * TAU;
                Wave {
                    fx: r * theta.cos() / FACE_SIZE as f64,
                    fy: r * theta.sin() / FACE_SIZE as f64,
                    phase: rng.random::<f64>() * TAU,
                    amp,
                }
            })
            .collect();
        Self { waves }
    }

    /// Roughly unit RMS.
    fn eval(&self, u: f64, v: f64) -> f64 {
        self.waves
            .iter()
            .map(|w| w.amp * (TAU * (w.fx * u + w.fy * v) + w.phase).cos())
            .sum()
    }
}

fn blob(u: f64, v: f64, cu: f64, cv: f64, su: f64, sv: f64) -> f64 {
    let du = (u - cu) / su;
    let dv = (v - cv) / sv;
    (-0.5 * (du * du + dv * dv)).exp()
}

/// Dark eyes and mouth, a lighter nose bridge, in canonical face coordinates.
fn layout(u: f64, v: f64) -> f64 {
    let (l, r) = (CANONICAL_LEFT_EYE, CANONICAL_RIGHT_EYE);
    -1.6 * blob(u, v, l.x, l.y, 5.0, 3.0) - 1.6 * blob(u, v, r.x, r.y, 5.0, 3.0)
        - 1.2 * blob(u, v, 32.0, 50.0, 9.0, 3.0)
        + 0.8 * blob(u, v, 32.0, 36.0, 3.5, 9.0)
}

fn render_identity(shared: &Texture, own: &Texture, distinctiveness: f64) -> Vec<f64> {
    let norm = (1.0 + distinctiveness * distinctiveness).sqrt();
    let mut pixels = Vec::with_capacity(IMAGE_SIZE * IMAGE_SIZE);
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let (u, v) = (x as f64 - MARGIN, y as f64 - MARGIN);
            let t = (shared.eval(u, v) + distinctiveness * own.eval(u, v)) / norm;
            pixels.push(128.0 + 28.0 * t + 24.0 * layout(u, v));
        }
    }
    pixels
}

fn true_eyes() -> [[f64; 2]; 2] {
    [
        [CANONICAL_LEFT_EYE.x + MARGIN, CANONICAL_LEFT_EYE.y + MARGIN],
        [CANONICAL_RIGHT_EYE.x + MARGIN, CANONICAL_RIGHT_EYE.y + MARGIN],
    ]
}

fn jitter_eyes(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> ([[f64; 2]; 2], f64, Option<u8>) {
    let eyes = true_eyes();
    match spec.jitter_mode {
        JitterMode::Uniform => {
            // per-frame severity, so some frames are well aligned and some are not
            let reach = rng.random::<f64>() * spec.crop_jitter * FACE_SIZE as f64;
            let mut out = eyes;
            let mut sq = 0.0;
            for p in out.iter_mut() {
                for c in p.iter_mut() {
                    let d = reach * rng.random_range(-1.0..=1.0);
                    *c += d;
                    sq += d * d;
                }
            }
            (out, sq.sqrt(), None)
        }
        JitterMode::Bimodal => {
            let mode = u8::from(rng.random::<bool>());
            let scale = if mode == 1 { 1.0 + spec.crop_jitter } else { 1.0 - spec.crop_jitter };
            let mid = [(eyes[0][0] + eyes[1][0]) / 2.0, (eyes[0][1] + eyes[1][1]) / 2.0];
            let mut out = eyes;
            let mut sq = 0.0;
            for (p, orig) in out.iter_mut().zip(eyes) {
                for c in 0..2 {
                    p[c] = mid[c] + scale * (orig[c] - mid[c]);
                    sq += (p[c] - orig[c]).powi(2);
                }
            }
            (out, sq.sqrt(), Some(mode))
        }
    }
}

/// Face box implied by a pair of eyes, matching the canonical crop geometry.
fn box_from_eyes(eyes: &[[f64; 2]; 2]) -> [f64; 4] {
    let s = (eyes[1][0] - eyes[0][0]).hypot(eyes[1][1] - eyes[0][1])
        / (CANONICAL_RIGHT_EYE.x - CANONICAL_LEFT_EYE.x);
    let size = s * FACE_SIZE as f64;
    [
        eyes[0][0] - s * CANONICAL_LEFT_EYE.x,
        eyes[0][1] - s * CANONICAL_LEFT_EYE.y,
        size,
        size,
    ]
}

/// Writes `manifest.json` and `images/*.pgm` under `out_dir`.
pub fn generate_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<SynthOutput> {
    spec.validate()?;
    let image_dir = out_dir.join("images");
    fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|e| Error::InvalidParameter(format!("synth noise: {e}")))?;
    let shared = Texture::random(&mut rng, spec.texture_waves, spec.max_frequency);

    let mut plan: Vec<(String, Vec<(String, Role)>)> = (0..spec.persons)
        .map(|p| {
            let videos = (0..spec.videos_per_person)
                .map(|v| {
                    if v < spec.enroll_videos {
                        (format!("enroll{v:02}"), Role::Enroll)
                    } else {
                        (format!("probe{:02}", v - spec.enroll_videos), Role::Probe)
                    }
                })
                .collect();
            (format!("p{p:03}"), videos)
        })
        .collect();
    plan.extend((0..spec.train_persons).map(|t| (format!("t{t:03}"), vec![("train00".to_string(), Role::Train)])));

    let mut persons = Vec::with_capacity(plan.len());
    let mut truth = Vec::new();
    for (person_id, videos) in plan {
        let own = Texture::random(&mut rng, spec.texture_waves, spec.max_frequency);
        let base = render_identity(&shared, &own, spec.distinctiveness);
        let mut entries = Vec::with_capacity(videos.len());
        for (video_id, role) in videos {
            let mut frames = Vec::with_capacity(spec.frames_per_video);
            for f in 0..spec.frames_per_video {
                let gain = 1.0 + spec.intensity_jitter * rng.random_range(-1.0..=1.0);
                let offset = 64.0 * spec.intensity_jitter * rng.random_range(-1.0..=1.0);
                let pixels = base
                    .iter()
                    .map(|&b| {
                        let n = if spec.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                        gain * (b - 128.0) + 128.0 + offset + n
                    })
                    .collect();
                let image = GrayImage::new(IMAGE_SIZE, IMAGE_SIZE, pixels)?;
                let rel = format!("images/{person_id}_{video_id}_{f:03}.pgm");
                save_pgm(out_dir.join(&rel), &image)?;

                let (eyes, magnitude, mode) = jitter_eyes(&mut rng, spec);
                frames.push(FaceRecord {
                    frame: f as u64,
                    image: rel,
                    face_box: box_from_eyes(&eyes),
                    eyes: Some(eyes),
                    confidence: Some(confidence_for_jitter(magnitude)),
                });
                truth.push(FrameTruth {
                    person_id: person_id.clone(),
                    video_id: video_id.clone(),
                    frame: f as u64,
                    jitter_magnitude: magnitude,
                    mode,
                });
            }
            entries.push(VideoEntry { video_id, role, frames });
        }
        persons.push(PersonEntry { person_id, videos: entries });
    }

    let mut manifest = DatasetManifest { persons };
    manifest.normalize()?;
    save_manifest(out_dir.join("manifest.json"), &manifest)?;
    Ok(SynthOutput { manifest, truth })
}
