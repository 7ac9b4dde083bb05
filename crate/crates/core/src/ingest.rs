//! Dataset manifests, image loading, eye-based face alignment and the binary
//! signature file format.

use std::collections::HashSet;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::signature::{MrhSignature, REGION_COUNT};
use crate::{Error, Result};

/// Side length of the aligned inner face.
pub const FACE_SIZE: usize = 64;

/// Canonical eye positions in the aligned crop; 32 px apart, centred.
pub const CANONICAL_LEFT_EYE: Point = Point { x: 16.0, y: 24.0 };
pub const CANONICAL_RIGHT_EYE: Point = Point { x: 48.0, y: 24.0 };

const SIGNATURE_MAGIC: &[u8; 4] = b"MRH1";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Enroll,
    Probe,
    Train,
}

/// One detected face in one frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceRecord {
    pub frame: u64,
    /// Image path, relative to the manifest directory unless absolute.
    pub image: String,
    /// `[x, y, w, h]` in pixels.
    #[serde(rename = "box")]
    pub face_box: [f64; 4],
    /// `[[lx, ly], [rx, ry]]`, absent when the eye detector failed.
    #[serde(default)]
    pub eyes: Option<[[f64; 2]; 2]>,
    /// Detector confidence, higher is more face-like.
    #[serde(default)]
    pub confidence: Option<f64>,
}

impl FaceRecord {
    /// Eye positions from the record, falling back to box-based approximation.
    pub fn eye_points(&self) -> Result<(Point, Point)> {
        match self.eyes {
            Some([[lx, ly], [rx, ry]]) => Ok((Point::new(lx, ly), Point::new(rx, ry))),
            None => approximate_eyes(self.face_box),
        }
    }

    pub fn resolve_image(&self, base_dir: &Path) -> PathBuf {
        let p = Path::new(&self.image);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEntry {
    pub video_id: String,
    pub role: Role,
    pub frames: Vec<FaceRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonEntry {
    pub person_id: String,
    pub videos: Vec<VideoEntry>,
}

impl PersonEntry {
    pub fn videos_with_role(&self, role: Role) -> impl Iterator<Item = &VideoEntry> {
        self.videos.iter().filter(move |v| v.role == role)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub persons: Vec<PersonEntry>,
}

impl DatasetManifest {
    /// Parses and validates manifest JSON. `origin` is used only in error messages.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let mut manifest: DatasetManifest =
            serde_json::from_str(text).map_err(|e| Error::ManifestParse {
                path: origin.to_path_buf(),
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        manifest.normalize()?;
        Ok(manifest)
    }

    /// Sorts frames chronologically and checks every structural invariant.
    pub fn normalize(&mut self) -> Result<()> {
        let mut person_ids = HashSet::new();
        for person in &mut self.persons {
            if !person_ids.insert(person.person_id.clone()) {
                return Err(Error::DuplicateId {
                    kind: "person",
                    id: person.person_id.clone(),
                });
            }
            let mut video_ids = HashSet::new();
            for video in &mut person.videos {
                if !video_ids.insert(video.video_id.clone()) {
                    return Err(Error::DuplicateId {
                        kind: "video",
                        id: format!("{}/{}", person.person_id, video.video_id),
                    });
                }
                if video.frames.is_empty() {
                    return Err(Error::EmptyVideo {
                        person_id: person.person_id.clone(),
                        video_id: video.video_id.clone(),
                    });
                }
                video.frames.sort_by_key(|f| f.frame);
                for pair in video.frames.windows(2) {
                    if pair[0].frame == pair[1].frame {
                        return Err(Error::InvalidManifest(format!(
                            "video {}/{} repeats frame index {}",
                            person.person_id, video.video_id, pair[0].frame
                        )));
                    }
                }
                for rec in &video.frames {
                    validate_record(rec).map_err(|msg| {
                        Error::InvalidManifest(format!(
                            "{}/{} frame {}: {msg}",
                            person.person_id, video.video_id, rec.frame
                        ))
                    })?;
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn validate_record(rec: &FaceRecord) -> std::result::Result<(), String> {
    let [_, _, w, h] = rec.face_box;
    if rec.face_box.iter().any(|v| !v.is_finite()) {
        return Err("face box has non-finite coordinates".into());
    }
    if w <= 0.0 || h <= 0.0 {
        return Err(format!("face box has non-positive size {w}x{h}"));
    }
    if let Some([[lx, _], [rx, _]]) = rec.eyes {
        if lx >= rx {
            return Err(format!("left eye x {lx} is not left of right eye x {rx}"));
        }
    }
    Ok(())
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_json(&text, path)
}

pub fn save_manifest(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_json()?).map_err(|e| Error::io(path, e))
}

/// Row-major grayscale image with intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Empty("image"));
        }
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    /// Pixel value, or 0 outside the image.
    fn get_or_zero(&self, x: i64, y: i64) -> f64 {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            0.0
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear sample at continuous coordinates; pixel centres sit on integers.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as i64, y0 as i64);
        let top = (1.0 - fx) * self.get_or_zero(xi, yi) + fx * self.get_or_zero(xi + 1, yi);
        let bottom =
            (1.0 - fx) * self.get_or_zero(xi, yi + 1) + fx * self.get_or_zero(xi + 1, yi + 1);
        (1.0 - fy) * top + fy * bottom
    }
}

/// Loads a PGM or PNG file; colour input is converted with 0.299R + 0.587G + 0.114B.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<f64> = match img {
        image::DynamicImage::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        image::DynamicImage::ImageLumaA8(buf) => {
            buf.pixels().map(|p| f64::from(p.0[0])).collect()
        }
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                0.299 * f64::from(p.0[0]) + 0.587 * f64::from(p.0[1]) + 0.114 * f64::from(p.0[2])
            })
            .collect(),
    };
    GrayImage::new(width, height, pixels)
}

/// Writes an 8-bit binary PGM, rounding and clamping intensities.
pub fn save_pgm(path: impl AsRef<Path>, image: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = image
        .pixels
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    image::save_buffer_with_format(
        path,
        &bytes,
        image.width as u32,
        image.height as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Pnm,
    )
    .map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Aligned 64x64 inner face.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceCrop {
    pixels: Vec<f64>,
}

impl FaceCrop {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != FACE_SIZE * FACE_SIZE {
            return Err(Error::FaceSize {
                expected: FACE_SIZE,
                width: pixels.len() / FACE_SIZE.max(1),
                height: FACE_SIZE,
            });
        }
        Ok(Self { pixels })
    }

    pub fn from_image(image: &GrayImage) -> Result<Self> {
        if image.width != FACE_SIZE || image.height != FACE_SIZE {
            return Err(Error::FaceSize {
                expected: FACE_SIZE,
                width: image.width,
                height: image.height,
            });
        }
        Ok(Self {
            pixels: image.pixels.clone(),
        })
    }

    pub fn from_fn(f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            pixels: GrayImage::from_fn(FACE_SIZE, FACE_SIZE, f).pixels,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * FACE_SIZE + x]
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: FACE_SIZE,
            height: FACE_SIZE,
            pixels: self.pixels.clone(),
        }
    }
}

/// Eye locations guessed from the face box when the eye detector found nothing.
pub fn approximate_eyes(face_box: [f64; 4]) -> Result<(Point, Point)> {
    let [x, y, w, h] = face_box;
    if !(w > 0.0 && h > 0.0) {
        return Err(Error::DegenerateBox { w, h });
    }
    let eye_y = y + 0.38 * h;
    Ok((
        Point::new(x + 0.30 * w, eye_y),
        Point::new(x + 0.70 * w, eye_y),
    ))
}

/// Warps `image` with the similarity transform taking the given eyes to the
/// canonical crop positions, sampling bilinearly with zero fill.
pub fn align_crop(image: &GrayImage, left_eye: Point, right_eye: Point) -> Result<FaceCrop> {
    let dx = right_eye.x - left_eye.x;
    let dy = right_eye.y - left_eye.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(Error::CoincidentEyes {
            x: left_eye.x,
            y: left_eye.y,
        });
    }
    if ![left_eye.x, left_eye.y, right_eye.x, right_eye.y]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("eye coordinates"));
    }
    let canon_dx = CANONICAL_RIGHT_EYE.x - CANONICAL_LEFT_EYE.x;
    // Output-to-source map: src = left + A * (out - canonical_left), with
    // A = scale * rotation; this keeps `a` and `b` exact for axis-aligned eyes.
    let a = dx / canon_dx;
    let b = dy / canon_dx;
    let pixels = GrayImage::from_fn(FACE_SIZE, FACE_SIZE, |u, v| {
        let du = u as f64 - CANONICAL_LEFT_EYE.x;
        let dv = v as f64 - CANONICAL_LEFT_EYE.y;
        let sx = left_eye.x + a * du - b * dv;
        let sy = left_eye.y + b * du + a * dv;
        image.sample_bilinear(sx, sy)
    })
    .pixels;
    Ok(FaceCrop { pixels })
}

/// Loads the record's image and aligns it.
pub fn crop_record(record: &FaceRecord, base_dir: &Path) -> Result<FaceCrop> {
    let image = load_image(record.resolve_image(base_dir))?;
    let (l, r) = record.eye_points()?;
    align_crop(&image, l, r)
}

pub fn write_signatures<W: Write>(mut out: W, signatures: &[MrhSignature]) -> Result<()> {
    let g = signatures.first().map_or(0, MrhSignature::components);
    if let Some(bad) = signatures.iter().find(|s| s.components() != g) {
        return Err(Error::DimensionMismatch {
            expected: g,
            actual: bad.components(),
        });
    }
    let io = |e| Error::io("<signature stream>", e);
    out.write_all(SIGNATURE_MAGIC).map_err(io)?;
    for v in [g, REGION_COUNT, signatures.len()] {
        let v = u32::try_from(v)
            .map_err(|_| Error::Format(format!("header value {v} exceeds u32")))?;
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for sig in signatures {
        for v in sig.values() {
            out.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

pub fn read_signatures<R: Read>(mut input: R) -> Result<Vec<MrhSignature>> {
    let mut bytes = Vec::new();
    input
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io("<signature stream>", e))?;
    if bytes.len() < 16 || &bytes[..4] != SIGNATURE_MAGIC {
        return Err(Error::Format("missing MRH1 signature header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (g, regions, count) = (word(0), word(1), word(2));
    if regions != REGION_COUNT {
        return Err(Error::Format(format!(
            "expected {REGION_COUNT} regions per signature, file declares {regions}"
        )));
    }
    let per_sig = regions * g;
    let body = &bytes[16..];
    if body.len() != count * per_sig * 8 {
        return Err(Error::Format(format!(
            "body holds {} bytes, header implies {}",
            body.len(),
            count * per_sig * 8
        )));
    }
    if count > 0 && g == 0 {
        return Err(Error::Format("zero-component signatures".into()));
    }
    let floats: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    floats
        .chunks_exact(per_sig.max(1))
        .take(count)
        .map(|chunk| MrhSignature::from_values(g, chunk.to_vec()))
        .collect()
}

pub fn save_signatures(path: impl AsRef<Path>, signatures: &[MrhSignature]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_signatures(BufWriter::new(file), signatures).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn load_signatures(path: impl AsRef<Path>) -> Result<Vec<MrhSignature>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_signatures(std::io::BufReader::new(file))
}
