//! Choosing a subset of faces from a video.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ingest::{FaceRecord, VideoEntry};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    Sequential,
    Random,
    Confidence,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [
        SelectionMethod::Sequential,
        SelectionMethod::Random,
        SelectionMethod::Confidence,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SelectionMethod::Sequential => "sequential",
            SelectionMethod::Random => "random",
            SelectionMethod::Confidence => "confidence",
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(SelectionMethod::Sequential),
            "random" => Ok(SelectionMethod::Random),
            "confidence" => Ok(SelectionMethod::Confidence),
            other => Err(Error::InvalidParameter(format!("unknown selection method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub method: SelectionMethod,
    pub m: usize,
    /// Only used by [`SelectionMethod::Random`].
    #[serde(default)]
    pub seed: u64,
}

impl SelectionSpec {
    pub fn new(method: SelectionMethod, m: usize, seed: u64) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidParameter("selection size m must be at least 1".into()));
        }
        Ok(Self { method, m, seed })
    }
}

/// Indices (into the video's chronologically sorted frames) of the chosen faces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    /// Set when fewer than `m` faces were available.
    pub truncated: bool,
}

impl Selection {
    pub fn records<'a>(&self, video: &'a VideoEntry) -> Vec<&'a FaceRecord> {
        self.indices.iter().map(|&i| &video.frames[i]).collect()
    }
}

fn check_video(video: &VideoEntry, m: usize) -> Result<(usize, bool)> {
    if video.frames.is_empty() {
        return Err(Error::Empty("video frames"));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("selection size m must be at least 1".into()));
    }
    let n = video.frames.len();
    Ok((m.min(n), m > n))
}

pub fn select_sequential(video: &VideoEntry, m: usize) -> Result<Selection> {
    let (take, truncated) = check_video(video, m)?;
    Ok(Selection {
        indices: (0..take).collect(),
        truncated,
    })
}

/// Seeded partial Fisher-Yates draw without replacement; output in frame order.
pub fn select_random(video: &VideoEntry, m: usize, seed: u64) -> Result<Selection> {
    let (take, truncated) = check_video(video, m)?;
    let n = video.frames.len();
    let mut pool: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..take {
        let j = rng.random_range(i..n);
        pool.swap(i, j);
    }
    let mut indices = pool[..take].to_vec();
    indices.sort_unstable();
    Ok(Selection { indices, truncated })
}

/// Highest-confidence faces, ties to the earlier frame; output in frame order.
pub fn select_by_confidence(video: &VideoEntry, m: usize) -> Result<Selection> {
    let (take, truncated) = check_video(video, m)?;
    let mut scored = Vec::with_capacity(video.frames.len());
    for (i, rec) in video.frames.iter().enumerate() {
        match rec.confidence {
            Some(c) if !c.is_nan() => scored.push((c, i)),
            _ => return Err(Error::MissingConfidence { frame: rec.frame }),
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut indices: Vec<usize> = scored[..take].iter().map(|&(_, i)| i).collect();
    indices.sort_unstable();
    Ok(Selection { indices, truncated })
}

pub fn select(video: &VideoEntry, spec: &SelectionSpec) -> Result<Selection> {
    match spec.method {
        SelectionMethod::Sequential => select_sequential(video, spec.m),
        SelectionMethod::Random => select_random(video, spec.m, spec.seed),
        SelectionMethod::Confidence => select_by_confidence(video, spec.m),
    }
}
