//! Enrol/probe verification protocols, error rates and cost accounting.
//!
//! Every probe video is compared with every enrolled person's gallery; a trial
//! is genuine when the identities agree. The minimum error rate is
//! `min_t (FAR_t + FRR_t) / 2`, found by an exact sweep over the observed scores.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{cluster_gallery, kmeans_cluster, ClusterMode, DEFAULT_MAX_ITER};
use crate::dictionary::VisualDictionary;
use crate::features::{extract_features, FeatureVector, RegionLayout};
use crate::ingest::{crop_record, load_signatures, save_signatures, DatasetManifest, Role};
use crate::matching::{prepared_set_distance, CohortSet, PreparedSignature};
use crate::selection::{select, SelectionSpec};
use crate::signature::{average_signatures, compute_mrh, MrhSignature};
use crate::{Error, Result};

pub const DEFAULT_COHORTS: usize = 32;

/// Which sides of a trial face selection applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionSides {
    Both,
    Probe,
    Gallery,
}

impl std::str::FromStr for SelectionSides {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(SelectionSides::Both),
            "probe" => Ok(SelectionSides::Probe),
            "gallery" => Ok(SelectionSides::Gallery),
            other => Err(Error::InvalidParameter(format!("unknown selection side `{other}`"))),
        }
    }
}

impl SelectionSides {
    fn covers(self, side: Side) -> bool {
        matches!(
            (self, side),
            (SelectionSides::Both, _)
                | (SelectionSides::Probe, Side::Probe)
                | (SelectionSides::Gallery, Side::Gallery)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Probe,
    Gallery,
}

/// How the faces of a video (or gallery) become signatures to match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Pipeline {
    /// One average signature per probe video and per gallery.
    AllFacesAverage,
    /// Average of the selected faces, per probe video and per gallery.
    Select {
        spec: SelectionSpec,
        sides: SelectionSides,
    },
    /// Cluster centroids represent the gallery; probes are averaged unless
    /// `cluster_probe` is set.
    Cluster {
        k: usize,
        mode: ClusterMode,
        #[serde(default)]
        cluster_probe: bool,
    },
    /// Every face signature is kept and matched pairwise.
    PerFace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    /// Enrolment videos used per person; `None` uses all.
    pub enroll_videos_per_person: Option<usize>,
    /// Probe videos used per person; `None` uses all.
    pub probes_per_person: Option<usize>,
    pub pipeline: Pipeline,
    pub cohort_count: usize,
    pub max_iter: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            enroll_videos_per_person: None,
            probes_per_person: None,
            pipeline: Pipeline::AllFacesAverage,
            cohort_count: DEFAULT_COHORTS,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct GalleryRef {
    person: usize,
    videos: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct ProbeRef {
    person: usize,
    video: usize,
}

/// Resolved enrol/probe structure of a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    galleries: Vec<GalleryRef>,
    probes: Vec<ProbeRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TrialPair {
    pub probe_id: String,
    pub gallery_person_id: String,
    pub is_genuine: bool,
}

fn probe_id(manifest: &DatasetManifest, person: usize, video: usize) -> String {
    let p = &manifest.persons[person];
    format!("{}/{}", p.person_id, p.videos[video].video_id)
}

impl Protocol {
    pub fn build(manifest: &DatasetManifest, config: &ProtocolConfig) -> Result<Self> {
        let mut galleries = Vec::new();
        let mut probes = Vec::new();
        for (pi, person) in manifest.persons.iter().enumerate() {
            let indices_with = |role| -> Vec<usize> {
                person
                    .videos
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| v.role == role)
                    .map(|(i, _)| i)
                    .collect()
            };
            let mut enroll = indices_with(Role::Enroll);
            let mut probe = indices_with(Role::Probe);
            if enroll.is_empty() && probe.is_empty() {
                continue;
            }
            if enroll.is_empty() {
                return Err(Error::Protocol(format!(
                    "person `{}` has probe videos but no enrolment videos",
                    person.person_id
                )));
            }
            if let Some(n) = config.enroll_videos_per_person {
                enroll.truncate(n);
            }
            if let Some(q) = config.probes_per_person {
                probe.truncate(q);
            }
            galleries.push(GalleryRef {
                person: pi,
                videos: enroll,
            });
            probes.extend(probe.into_iter().map(|video| ProbeRef { person: pi, video }));
        }
        if galleries.len() < 2 {
            return Err(Error::Protocol(format!(
                "need at least two enrolled persons, found {}",
                galleries.len()
            )));
        }
        if probes.is_empty() {
            return Err(Error::Protocol("no probe videos in manifest".into()));
        }
        if galleries.iter().any(|g| g.videos.is_empty()) {
            return Err(Error::Protocol("enrol_videos_per_person must be at least 1".into()));
        }
        Ok(Self { galleries, probes })
    }

    pub fn gallery_count(&self) -> usize {
        self.galleries.len()
    }

    pub fn probe_count(&self) -> usize {
        self.probes.len()
    }

    pub fn trial_count(&self) -> usize {
        self.galleries.len() * self.probes.len()
    }

    pub fn pairs(&self, manifest: &DatasetManifest) -> Vec<TrialPair> {
        let mut out = Vec::with_capacity(self.trial_count());
        for p in &self.probes {
            let pid = probe_id(manifest, p.person, p.video);
            for g in &self.galleries {
                out.push(TrialPair {
                    probe_id: pid.clone(),
                    gallery_person_id: manifest.persons[g.person].person_id.clone(),
                    is_genuine: g.person == p.person,
                });
            }
        }
        out
    }
}

/// Every probe video against every enrolled person.
pub fn generate_trials(manifest: &DatasetManifest, config: &ProtocolConfig) -> Result<Vec<TrialPair>> {
    Ok(Protocol::build(manifest, config)?.pairs(manifest))
}

/// Per-face signatures indexed `[person][video][frame]`; `None` where not extracted.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureBank {
    faces: Vec<Vec<Vec<Option<MrhSignature>>>>,
}

/// Faces to extract, shaped like the manifest.
pub type FaceMask = Vec<Vec<Vec<bool>>>;

pub fn full_mask(manifest: &DatasetManifest) -> FaceMask {
    manifest
        .persons
        .iter()
        .map(|p| p.videos.iter().map(|v| vec![true; v.frames.len()]).collect())
        .collect()
}

fn empty_mask(manifest: &DatasetManifest) -> FaceMask {
    manifest
        .persons
        .iter()
        .map(|p| p.videos.iter().map(|v| vec![false; v.frames.len()]).collect())
        .collect()
}

fn check_path_component(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(Error::InvalidParameter(format!(
            "id `{id}` cannot be used as a file name"
        )));
    }
    Ok(())
}

impl SignatureBank {
    /// Aligns each masked face and computes its signature, in parallel.
    pub fn extract(
        manifest: &DatasetManifest,
        base_dir: &Path,
        dict: &VisualDictionary,
        layout: &RegionLayout,
        mask: &FaceMask,
    ) -> Result<Self> {
        let jobs: Vec<(usize, usize, usize)> = mask
            .iter()
            .enumerate()
            .flat_map(|(p, videos)| {
                videos.iter().enumerate().flat_map(move |(v, frames)| {
                    frames
                        .iter()
                        .enumerate()
                        .filter(|(_, &m)| m)
                        .map(move |(f, _)| (p, v, f))
                })
            })
            .collect();
        let sigs = jobs
            .par_iter()
            .map(|&(p, v, f)| {
                let rec = &manifest.persons[p].videos[v].frames[f];
                let crop = crop_record(rec, base_dir)?;
                compute_mrh(&crop, dict, layout)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut faces: Vec<Vec<Vec<Option<MrhSignature>>>> = manifest
            .persons
            .iter()
            .map(|p| p.videos.iter().map(|v| vec![None; v.frames.len()]).collect())
            .collect();
        for ((p, v, f), s) in jobs.into_iter().zip(sigs) {
            faces[p][v][f] = Some(s);
        }
        Ok(Self { faces })
    }

    pub fn from_nested(faces: Vec<Vec<Vec<MrhSignature>>>) -> Self {
        Self {
            faces: faces
                .into_iter()
                .map(|p| p.into_iter().map(|v| v.into_iter().map(Some).collect()).collect())
                .collect(),
        }
    }

    pub fn extracted(&self) -> usize {
        self.faces.iter().flatten().flatten().filter(|s| s.is_some()).count()
    }

    pub fn get(&self, person: usize, video: usize, frame: usize) -> Result<&MrhSignature> {
        self.faces
            .get(person)
            .and_then(|p| p.get(video))
            .and_then(|v| v.get(frame))
            .and_then(Option::as_ref)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "no signature for person {person}, video {video}, frame {frame}"
                ))
            })
    }

    pub fn video(&self, person: usize, video: usize) -> Result<Vec<MrhSignature>> {
        let frames = self
            .faces
            .get(person)
            .and_then(|p| p.get(video))
            .ok_or_else(|| Error::InvalidParameter(format!("no video {person}/{video} in bank")))?;
        (0..frames.len()).map(|f| self.get(person, video, f).cloned()).collect()
    }

    /// Writes one `<dir>/<person_id>/<video_id>.mrh` file per fully extracted video.
    pub fn save_dir(&self, manifest: &DatasetManifest, dir: &Path) -> Result<()> {
        for (p, person) in manifest.persons.iter().enumerate() {
            check_path_component(&person.person_id)?;
            let person_dir = dir.join(&person.person_id);
            fs::create_dir_all(&person_dir).map_err(|e| Error::io(&person_dir, e))?;
            for (v, video) in person.videos.iter().enumerate() {
                check_path_component(&video.video_id)?;
                if let Ok(sigs) = self.video(p, v) {
                    save_signatures(person_dir.join(format!("{}.mrh", video.video_id)), &sigs)?;
                }
            }
        }
        Ok(())
    }

    /// Reads the layout written by [`SignatureBank::save_dir`]; missing videos stay empty.
    pub fn load_dir(manifest: &DatasetManifest, dir: &Path) -> Result<Self> {
        let mut faces = Vec::with_capacity(manifest.persons.len());
        for person in &manifest.persons {
            let mut videos = Vec::with_capacity(person.videos.len());
            for video in &person.videos {
                let path = dir
                    .join(&person.person_id)
                    .join(format!("{}.mrh", video.video_id));
                if !path.exists() {
                    videos.push(vec![None; video.frames.len()]);
                    continue;
                }
                let sigs = load_signatures(&path)?;
                if sigs.len() != video.frames.len() {
                    return Err(Error::Format(format!(
                        "{} holds {} signatures for {} frames",
                        path.display(),
                        sigs.len(),
                        video.frames.len()
                    )));
                }
                videos.push(sigs.into_iter().map(Some).collect());
            }
            faces.push(videos);
        }
        Ok(Self { faces })
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Per-video random-selection seed, stable under manifest reordering.
pub fn video_seed(seed: u64, person_id: &str, video_id: &str) -> u64 {
    let mut z = seed ^ fnv1a(format!("{person_id}/{video_id}").as_bytes());
    // splitmix64 finaliser
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Frames of a video that feed the pipeline on the given side, plus whether a
/// selection was truncated.
fn used_frames(
    manifest: &DatasetManifest,
    person: usize,
    video: usize,
    pipeline: &Pipeline,
    side: Side,
) -> Result<(Vec<usize>, bool)> {
    let p = &manifest.persons[person];
    let v = &p.videos[video];
    match pipeline {
        Pipeline::Select { spec, sides } if sides.covers(side) => {
            let spec = SelectionSpec {
                seed: video_seed(spec.seed, &p.person_id, &v.video_id),
                ..*spec
            };
            let s = select(v, &spec)?;
            Ok((s.indices, s.truncated))
        }
        _ => Ok(((0..v.frames.len()).collect(), false)),
    }
}

/// First frame of the first training video of each of the first `count`
/// persons that have one.
fn cohort_sources(manifest: &DatasetManifest, count: usize) -> Vec<(usize, usize)> {
    manifest
        .persons
        .iter()
        .enumerate()
        .filter_map(|(pi, p)| {
            p.videos
                .iter()
                .position(|v| v.role == Role::Train)
                .map(|vi| (pi, vi))
        })
        .take(count)
        .collect()
}

/// Marks every face the configured pipeline reads, so extraction can skip the rest.
pub fn plan_faces(manifest: &DatasetManifest, config: &ProtocolConfig) -> Result<FaceMask> {
    let protocol = Protocol::build(manifest, config)?;
    let mut mask = empty_mask(manifest);
    for probe in &protocol.probes {
        let (frames, _) = used_frames(manifest, probe.person, probe.video, &config.pipeline, Side::Probe)?;
        for f in frames {
            mask[probe.person][probe.video][f] = true;
        }
    }
    for g in &protocol.galleries {
        for &v in &g.videos {
            let (frames, _) = used_frames(manifest, g.person, v, &config.pipeline, Side::Gallery)?;
            for f in frames {
                mask[g.person][v][f] = true;
            }
        }
    }
    for (p, v) in cohort_sources(manifest, config.cohort_count) {
        mask[p][v][0] = true;
    }
    Ok(mask)
}

pub fn build_cohorts(
    manifest: &DatasetManifest,
    bank: &SignatureBank,
    count: usize,
) -> Result<CohortSet> {
    if count == 0 {
        return Err(Error::InvalidParameter("cohort count must be at least 1".into()));
    }
    let sources = cohort_sources(manifest, count);
    if sources.is_empty() {
        return Err(Error::Protocol("no training videos to draw cohorts from".into()));
    }
    if sources.len() < count {
        log::warn!(
            "requested {count} cohorts but only {} training persons exist",
            sources.len()
        );
    }
    let sigs = sources
        .iter()
        .map(|&(p, v)| bank.get(p, v, 0).cloned())
        .collect::<Result<Vec<_>>>()?;
    CohortSet::new(sigs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub probe_id: String,
    pub gallery_person_id: String,
    pub is_genuine: bool,
    pub distance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialSet {
    pub scores: Vec<TrialScore>,
}

impl TrialSet {
    pub fn from_labelled(genuine: &[f64], impostor: &[f64]) -> Self {
        let mk = |d: f64, is_genuine: bool, i: usize| TrialScore {
            probe_id: format!("t{i}"),
            gallery_person_id: if is_genuine { "same".into() } else { "other".into() },
            is_genuine,
            distance: d,
        };
        let scores = genuine
            .iter()
            .map(|&d| (d, true))
            .chain(impostor.iter().map(|&d| (d, false)))
            .enumerate()
            .map(|(i, (d, g))| mk(d, g, i))
            .collect();
        Self { scores }
    }

    pub fn genuine(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().filter(|s| s.is_genuine).map(|s| s.distance)
    }

    pub fn impostor(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().filter(|s| !s.is_genuine).map(|s| s.distance)
    }

    /// CSV with header `probe_id,gallery_person_id,is_genuine,distance`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.scores {
            w.serialize(s).map_err(csv_error)?;
        }
        w.flush().map_err(|e| Error::io("<scores csv>", e))
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let scores = r
            .deserialize()
            .collect::<std::result::Result<Vec<TrialScore>, _>>()
            .map_err(csv_error)?;
        Ok(Self { scores })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("scores csv: {e}"))
}

fn sorted_scores(trials: &TrialSet) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut genuine: Vec<f64> = trials.genuine().collect();
    let mut impostor: Vec<f64> = trials.impostor().collect();
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::Protocol(
            "error rates need at least one genuine and one impostor trial".into(),
        ));
    }
    if genuine.iter().chain(&impostor).any(|d| d.is_nan()) {
        return Err(Error::NonFinite("trial distances"));
    }
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);
    Ok((genuine, impostor))
}

/// Number of sorted entries `<= t`.
fn count_le(sorted: &[f64], t: f64) -> usize {
    sorted.partition_point(|&d| d <= t)
}

fn rates(genuine: &[f64], impostor: &[f64], t: f64) -> (f64, f64) {
    let far = count_le(impostor, t) as f64 / impostor.len() as f64;
    let frr = (genuine.len() - count_le(genuine, t)) as f64 / genuine.len() as f64;
    (far, frr)
}

/// `(FAR, FRR)` at threshold `t`, accepting distances `<= t`.
pub fn far_frr(trials: &TrialSet, t: f64) -> Result<(f64, f64)> {
    let (genuine, impostor) = sorted_scores(trials)?;
    Ok(rates(&genuine, &impostor, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialCounts {
    pub genuine: usize,
    pub impostor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub mer: f64,
    pub threshold_star: f64,
    pub far_curve: Vec<(f64, f64)>,
    pub frr_curve: Vec<(f64, f64)>,
    pub trial_counts: TrialCounts,
}

/// Candidate thresholds: one below the smallest score, every distinct score,
/// midpoints between neighbours, and one above the largest.
pub fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut distinct: Vec<f64> = scores.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let (Some(&lo), Some(&hi)) = (distinct.first(), distinct.last()) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(2 * distinct.len() + 1);
    out.push(lo - lo.abs().max(1.0));
    for (i, &d) in distinct.iter().enumerate() {
        out.push(d);
        if let Some(&next) = distinct.get(i + 1) {
            out.push(d + (next - d) / 2.0);
        }
    }
    out.push(hi + hi.abs().max(1.0));
    out
}

/// Minimum over thresholds of `(FAR + FRR) / 2`; ties go to the smallest threshold.
pub fn mer(trials: &TrialSet) -> Result<ErrorReport> {
    let (genuine, impostor) = sorted_scores(trials)?;
    let all: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    let candidates = candidate_thresholds(&all);
    let mut best = (f64::INFINITY, f64::NAN);
    let mut far_curve = Vec::with_capacity(candidates.len());
    let mut frr_curve = Vec::with_capacity(candidates.len());
    for &t in &candidates {
        let (far, frr) = rates(&genuine, &impostor, t);
        far_curve.push((t, far));
        frr_curve.push((t, frr));
        let err = 0.5 * (far + frr);
        if err < best.0 {
            best = (err, t);
        }
    }
    Ok(ErrorReport {
        mer: best.0,
        threshold_star: best.1,
        far_curve,
        frr_curve,
        trial_counts: TrialCounts {
            genuine: genuine.len(),
            impostor: impostor.len(),
        },
    })
}

/// Per-operation reference timings (seconds) used for break-even arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub extraction_seconds: f64,
    pub distance_seconds: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            extraction_seconds: 0.390,
            distance_seconds: 0.002,
        }
    }
}

impl CostModel {
    /// Face count at which naive all-pairs matching (`N^2` distances) costs as
    /// much as extracting `N` signatures.
    pub fn break_even_faces(&self) -> f64 {
        self.extraction_seconds / self.distance_seconds
    }

    pub fn extraction_cost(&self, faces: usize) -> f64 {
        self.extraction_seconds * faces as f64
    }

    pub fn matching_cost(&self, distances: usize) -> f64 {
        self.distance_seconds * distances as f64
    }
}

/// Operation counts of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    /// Distinct face signatures consumed by probes, galleries and cohorts.
    pub signature_extractions: usize,
    pub probe_extractions: usize,
    pub gallery_extractions: usize,
    pub cohort_extractions: usize,
    /// Probe-gallery signature distances, `sum over trials of K_p * K_g`.
    pub distance_evaluations: usize,
    pub trials: usize,
    pub max_pairs_per_trial: usize,
    /// Distances from matched signatures to the cohort.
    pub cohort_distance_evaluations: usize,
    pub truncated_selections: usize,
    pub model: CostModel,
    pub estimated_extraction_seconds: f64,
    pub estimated_matching_seconds: f64,
    pub break_even_faces: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ProtocolConfig,
    pub cohorts: usize,
    #[serde(flatten)]
    pub errors: ErrorReport,
    pub cost: CostReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub trials: TrialSet,
    pub report: ExperimentReport,
}

fn signatures_of(bank: &SignatureBank, person: usize, frames_by_video: &[(usize, Vec<usize>)]) -> Result<Vec<Vec<MrhSignature>>> {
    frames_by_video
        .iter()
        .map(|(v, frames)| {
            frames
                .iter()
                .map(|&f| bank.get(person, *v, f).cloned())
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

fn reduce_probe(pipeline: &Pipeline, sigs: Vec<MrhSignature>, max_iter: usize) -> Result<Vec<MrhSignature>> {
    match *pipeline {
        Pipeline::PerFace => Ok(sigs),
        Pipeline::Cluster {
            k,
            cluster_probe: true,
            ..
        } => Ok(kmeans_cluster(&sigs, k, max_iter)?.centroids),
        _ => Ok(vec![average_signatures(&sigs)?]),
    }
}

fn reduce_gallery(pipeline: &Pipeline, videos: Vec<Vec<MrhSignature>>, max_iter: usize) -> Result<Vec<MrhSignature>> {
    match *pipeline {
        Pipeline::PerFace => Ok(videos.into_iter().flatten().collect()),
        Pipeline::Cluster { k, mode, .. } => cluster_gallery(&videos, k, mode, max_iter),
        _ => {
            let all: Vec<MrhSignature> = videos.into_iter().flatten().collect();
            Ok(vec![average_signatures(&all)?])
        }
    }
}

/// Runs the configured pipeline over a manifest whose face signatures are in `bank`.
pub fn run_experiment(
    manifest: &DatasetManifest,
    bank: &SignatureBank,
    config: &ProtocolConfig,
) -> Result<ExperimentOutput> {
    if let Pipeline::Cluster { k: 0, .. } = config.pipeline {
        return Err(Error::InvalidParameter("cluster k must be at least 1".into()));
    }
    let protocol = Protocol::build(manifest, config)?;
    let cohorts = build_cohorts(manifest, bank, config.cohort_count)?;
    let pipeline = &config.pipeline;

    let mut truncated = 0;
    let mut probe_faces = 0;
    let mut probe_inputs = Vec::with_capacity(protocol.probes.len());
    for p in &protocol.probes {
        let (frames, t) = used_frames(manifest, p.person, p.video, pipeline, Side::Probe)?;
        truncated += usize::from(t);
        probe_faces += frames.len();
        probe_inputs.push((p.person, vec![(p.video, frames)]));
    }
    let mut gallery_faces = 0;
    let mut gallery_inputs = Vec::with_capacity(protocol.galleries.len());
    for g in &protocol.galleries {
        let mut per_video = Vec::with_capacity(g.videos.len());
        for &v in &g.videos {
            let (frames, t) = used_frames(manifest, g.person, v, pipeline, Side::Gallery)?;
            truncated += usize::from(t);
            gallery_faces += frames.len();
            per_video.push((v, frames));
        }
        gallery_inputs.push((g.person, per_video));
    }

    let prepare = |sigs: Vec<MrhSignature>| -> Result<Vec<PreparedSignature>> {
        sigs.into_iter()
            .map(|s| PreparedSignature::new(s, &cohorts))
            .collect()
    };
    let probes: Vec<Vec<PreparedSignature>> = probe_inputs
        .par_iter()
        .map(|(person, frames)| {
            let sigs = signatures_of(bank, *person, frames)?.into_iter().flatten().collect();
            prepare(reduce_probe(pipeline, sigs, config.max_iter)?)
        })
        .collect::<Result<_>>()?;
    let galleries: Vec<Vec<PreparedSignature>> = gallery_inputs
        .par_iter()
        .map(|(person, frames)| {
            let videos = signatures_of(bank, *person, frames)?;
            prepare(reduce_gallery(pipeline, videos, config.max_iter)?)
        })
        .collect::<Result<_>>()?;

    let pairs = protocol.pairs(manifest);
    let n_gal = galleries.len();
    let scored = (0..pairs.len())
        .into_par_iter()
        .map(|i| prepared_set_distance(&probes[i / n_gal], &galleries[i % n_gal]))
        .collect::<Result<Vec<_>>>()?;

    let distance_evaluations = scored.iter().map(|&(_, c)| c).sum();
    let max_pairs_per_trial = scored.iter().map(|&(_, c)| c).max().unwrap_or(0);
    let scores = pairs
        .into_iter()
        .zip(&scored)
        .map(|(pair, &(distance, _))| TrialScore {
            probe_id: pair.probe_id,
            gallery_person_id: pair.gallery_person_id,
            is_genuine: pair.is_genuine,
            distance,
        })
        .collect();
    let trials = TrialSet { scores };
    let errors = mer(&trials)?;

    let matched_sigs: usize = probes.iter().chain(&galleries).map(Vec::len).sum();
    let model = CostModel::default();
    let signature_extractions = probe_faces + gallery_faces + cohorts.len();
    let cost = CostReport {
        signature_extractions,
        probe_extractions: probe_faces,
        gallery_extractions: gallery_faces,
        cohort_extractions: cohorts.len(),
        distance_evaluations,
        trials: trials.scores.len(),
        max_pairs_per_trial,
        cohort_distance_evaluations: matched_sigs * cohorts.len(),
        truncated_selections: truncated,
        model,
        estimated_extraction_seconds: model.extraction_cost(signature_extractions),
        estimated_matching_seconds: model.matching_cost(distance_evaluations),
        break_even_faces: model.break_even_faces(),
    };
    Ok(ExperimentOutput {
        trials,
        report: ExperimentReport {
            config: config.clone(),
            cohorts: cohorts.len(),
            errors,
            cost,
        },
    })
}

/// Block features of every face in `train` videos, optionally capped per video.
pub fn training_features(
    manifest: &DatasetManifest,
    base_dir: &Path,
    layout: &RegionLayout,
    frames_per_video: Option<usize>,
) -> Result<Vec<FeatureVector>> {
    let records: Vec<_> = manifest
        .persons
        .iter()
        .flat_map(|p| p.videos_with_role(Role::Train))
        .flat_map(|v| v.frames.iter().take(frames_per_video.unwrap_or(usize::MAX)))
        .collect();
    if records.is_empty() {
        return Err(Error::Protocol("no training faces in manifest".into()));
    }
    let per_face = records
        .par_iter()
        .map(|rec| {
            let crop = crop_record(rec, base_dir)?;
            Ok(extract_features(&crop, layout)
                .into_iter()
                .flat_map(|r| r.vectors)
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_face.into_iter().flatten().collect())
}

/// Extracts exactly the faces the pipeline needs, then runs it.
pub fn run_experiment_from_images(
    manifest: &DatasetManifest,
    base_dir: &Path,
    dict: &VisualDictionary,
    config: &ProtocolConfig,
) -> Result<ExperimentOutput> {
    let mask = plan_faces(manifest, config)?;
    let bank = SignatureBank::extract(manifest, base_dir, dict, &RegionLayout::default(), &mask)?;
    run_experiment(manifest, &bank, config)
}
