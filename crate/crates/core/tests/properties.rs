mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mrhvid::dictionary::{train_dictionary, TrainConfig, VisualDictionary};
use mrhvid::evaluation::{full_mask, run_experiment, training_features, ProtocolConfig, SignatureBank};
use mrhvid::features::{dct2, extract_features, Block, RegionLayout};
use mrhvid::ingest::{align_crop, DatasetManifest, read_signatures, write_signatures, FaceCrop, GrayImage, Point, Role};
use mrhvid::matching::d_raw;
use mrhvid::signature::{average_signatures, compute_mrh, MrhSignature, REGION_COUNT};
use mrhvid::synth::{generate_dataset, SynthSpec};

/// Smooth analytic test pattern, in 64x64 canonical coordinates.
fn pattern(x: f64, y: f64) -> f64 {
    128.0 + 60.0 * (2.0 * PI * x / 29.0).sin() * (2.0 * PI * y / 23.0).cos() + 0.4 * x
}

#[test]
fn alignment_undoes_scaling() {
    let original = GrayImage::from_fn(64, 64, |x, y| pattern(x as f64, y as f64));
    for scale in [2.0, 1.5] {
        let size = (64.0 * scale) as usize;
        let big = GrayImage::from_fn(size, size, |x, y| pattern(x as f64 / scale, y as f64 / scale));
        let crop = align_crop(&big, Point::new(16.0 * scale, 24.0 * scale), Point::new(48.0 * scale, 24.0 * scale)).unwrap();
        for y in 0..64 {
            for x in 0..64 {
                let diff = (crop.get(x, y) - original.get(x, y)).abs();
                assert!(diff < 0.5, "scale {scale} at ({x}, {y}): {diff}");
            }
        }
    }
}

#[test]
fn signature_file_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sigs: Vec<MrhSignature> = (0..3)
        .map(|_| MrhSignature::from_values(8, (0..REGION_COUNT * 8).map(|_| rng.random::<f64>() / 7.0).collect()).unwrap())
        .collect();
    let mut buf = Vec::new();
    write_signatures(&mut buf, &sigs).unwrap();
    assert_eq!(buf.len(), 16 + 3 * REGION_COUNT * 8 * 8);
    let back = read_signatures(&buf[..]).unwrap();
    for (a, b) in sigs.iter().zip(&back) {
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

fn naive_dct(b: &Block) -> Block {
    let alpha = |k: usize| if k == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
    let mut out = [[0.0; 8]; 8];
    for (k, row) in out.iter_mut().enumerate() {
        for (l, v) in row.iter_mut().enumerate() {
            let mut s = 0.0;
            for (y, brow) in b.iter().enumerate() {
                for (x, &p) in brow.iter().enumerate() {
                    s += p * ((2 * y + 1) as f64 * k as f64 * PI / 16.0).cos() * ((2 * x + 1) as f64 * l as f64 * PI / 16.0).cos();
                }
            }
            *v = alpha(k) * alpha(l) * s;
        }
    }
    out
}

/// First 15 AC coefficients in JPEG zig-zag order, found by walking the
/// anti-diagonals rather than from a table.
fn naive_zigzag(c: &Block) -> Vec<f64> {
    let mut order = Vec::new();
    for s in 0..15usize {
        let cells: Vec<(usize, usize)> = (0..=s).filter(|&i| i < 8 && s - i < 8).map(|i| (i, s - i)).collect();
        // even diagonals run bottom-left to top-right, odd ones the reverse
        if s % 2 == 0 {
            order.extend(cells.iter().rev());
        } else {
            order.extend(cells.iter());
        }
    }
    order[1..16].iter().map(|&(r, col)| c[r][col]).collect()
}

fn naive_feature(face: &FaceCrop, x0: usize, y0: usize) -> Vec<f64> {
    let mut b = [[0.0; 8]; 8];
    for (dy, row) in b.iter_mut().enumerate() {
        for (dx, v) in row.iter_mut().enumerate() {
            *v = face.get(x0 + dx, y0 + dy);
        }
    }
    let mean = b.iter().flatten().sum::<f64>() / 64.0;
    let var = b.iter().flatten().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
    for v in b.iter_mut().flatten() {
        *v = (*v - mean) / var.sqrt();
    }
    naive_zigzag(&naive_dct(&b))
}

fn naive_posterior(dict: &VisualDictionary, f: &[f64]) -> Vec<f64> {
    let lik: Vec<f64> = (0..dict.components())
        .map(|g| {
            let mut p = dict.weights()[g];
            for d in 0..f.len() {
                let var = dict.variance(g)[d];
                p *= (-(f[d] - dict.mean(g)[d]).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
            }
            p
        })
        .collect();
    let total: f64 = lik.iter().sum();
    lik.iter().map(|l| l / total).collect()
}

#[test]
fn signature_matches_direct_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = 3;
    let means = (0..g * 15).map(|_| rng.random_range(-1.0..1.0)).collect();
    let variances = (0..g * 15).map(|_| rng.random_range(1.0..3.0)).collect();
    let dict = VisualDictionary::new(15, vec![0.2, 0.3, 0.5], means, variances).unwrap();
    let face = FaceCrop::from_fn(|x, y| pattern(x as f64 * 1.3, y as f64 * 0.7) + rng.random_range(0.0..20.0));
    let sig = compute_mrh(&face, &dict, &RegionLayout::default()).unwrap();

    // regions are 21 px bands, the last one 22 px; blocks every 4 px that fit
    let bands = [(0, 21), (21, 42), (42, 64)];
    for (r, region) in sig.regions().enumerate() {
        let (ys, ye) = bands[r / 3];
        let (xs, xe) = bands[r % 3];
        let mut acc = vec![0.0; g];
        let mut count = 0;
        for y0 in (ys..).step_by(4).take_while(|y| y + 8 <= ye) {
            for x0 in (xs..).step_by(4).take_while(|x| x + 8 <= xe) {
                let post = naive_posterior(&dict, &naive_feature(&face, x0, y0));
                acc.iter_mut().zip(&post).for_each(|(a, p)| *a += p);
                count += 1;
            }
        }
        assert_eq!(count, 16);
        for (a, b) in region.iter().zip(&acc) {
            assert!((a - b / count as f64).abs() < 1e-12, "region {r}: {a} vs {}", b / count as f64);
        }
    }
}

#[test]
fn features_and_signatures_ignore_brightness_and_contrast() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = FaceCrop::from_fn(|x, y| pattern(x as f64, y as f64) + rng.random_range(-10.0..10.0));
    let shifted = FaceCrop::new(base.pixels().iter().map(|p| 1.7 * p + 35.0).collect()).unwrap();
    let layout = RegionLayout::default();
    for (a, b) in extract_features(&base, &layout).iter().zip(extract_features(&shifted, &layout)) {
        for (fa, fb) in a.vectors.iter().zip(&b.vectors) {
            assert!(fa.0.iter().zip(&fb.0).all(|(x, y)| (x - y).abs() < 1e-6));
        }
    }
    let means = (0..4 * 15).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dict = VisualDictionary::new(15, vec![0.25; 4], means, vec![1.0; 60]).unwrap();
    let sa = compute_mrh(&base, &dict, &layout).unwrap();
    let sb = compute_mrh(&shifted, &dict, &layout).unwrap();
    assert!(d_raw(&sa, &sb).unwrap() < 1e-6);
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ranks = |v: &[f64]| {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            for &k in &idx[i..=j] {
                r[k] = (i + j) as f64 / 2.0;
            }
            i = j + 1;
        }
        r
    };
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn small_spec(seed: u64) -> SynthSpec {
    SynthSpec {
        persons: 3,
        videos_per_person: 2,
        enroll_videos: 1,
        frames_per_video: 10,
        train_persons: 4,
        seed,
        ..SynthSpec::default()
    }
}

#[test]
fn synth_is_deterministic_and_confidence_tracks_jitter() {
    let spec = SynthSpec { crop_jitter: 0.2, ..small_spec(8) };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out_a = generate_dataset(&spec, a.path()).unwrap();
    let out_b = generate_dataset(&spec, b.path()).unwrap();
    assert_eq!(out_a.truth, out_b.truth);
    assert_eq!(std::fs::read(a.path().join("manifest.json")).unwrap(), std::fs::read(b.path().join("manifest.json")).unwrap());
    for rec in out_a.manifest.persons.iter().flat_map(|p| &p.videos).flat_map(|v| &v.frames) {
        assert_eq!(std::fs::read(a.path().join(&rec.image)).unwrap(), std::fs::read(b.path().join(&rec.image)).unwrap());
    }

    let jitter: Vec<f64> = out_a.truth.iter().map(|t| t.jitter_magnitude).collect();
    let confidence: Vec<f64> = out_a
        .manifest
        .persons
        .iter()
        .flat_map(|p| &p.videos)
        .flat_map(|v| &v.frames)
        .map(|r| r.confidence.unwrap())
        .collect();
    let rho = spearman(&jitter, &confidence);
    assert!(rho < -0.9, "spearman {rho}");
}

fn within_person_mean(manifest: &DatasetManifest, bank: &SignatureBank) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0;
    for (pi, person) in manifest.persons.iter().enumerate() {
        let sigs: Vec<MrhSignature> = person
            .videos
            .iter()
            .enumerate()
            .filter(|(_, v)| v.role != Role::Train)
            .flat_map(|(vi, _)| bank.video(pi, vi).unwrap())
            .collect();
        for i in 0..sigs.len() {
            for j in i + 1..sigs.len() {
                total += d_raw(&sigs[i], &sigs[j]).unwrap();
                pairs += 1;
            }
        }
    }
    total / pairs as f64
}

#[test]
fn unperturbed_identities_match_perfectly() {
    let spec = SynthSpec { noise_sigma: 0.0, crop_jitter: 0.0, intensity_jitter: 0.0, ..small_spec(2) };
    let p = common::prepare(&spec, 8);
    assert_eq!(within_person_mean(&p.data.manifest, &p.bank), 0.0);
    let report = run_experiment(&p.data.manifest, &p.bank, &ProtocolConfig::default()).unwrap();
    assert_eq!(report.report.errors.mer, 0.0);
}

#[test]
fn more_noise_spreads_each_identity() {
    let spec = |noise_sigma| SynthSpec { noise_sigma, crop_jitter: 0.0, ..small_spec(3) };
    // one dictionary for every noise level
    let reference = common::prepare(&spec(10.0), 16);
    let means: Vec<f64> = [0.0, 10.0, 30.0]
        .iter()
        .map(|&sigma| {
            let dir = tempfile::tempdir().unwrap();
            let data = generate_dataset(&spec(sigma), dir.path()).unwrap();
            let bank = SignatureBank::extract(
                &data.manifest,
                dir.path(),
                &reference.dict,
                &RegionLayout::default(),
                &full_mask(&data.manifest),
            )
            .unwrap();
            within_person_mean(&data.manifest, &bank)
        })
        .collect();
    assert!(means[0] < means[1] && means[1] < means[2], "{means:?}");
}

#[test]
fn em_trace_is_monotone_on_face_features() {
    let dir = tempfile::tempdir().unwrap();
    let data = generate_dataset(&small_spec(5), dir.path()).unwrap();
    let feats = training_features(&data.manifest, dir.path(), &RegionLayout::default(), Some(5)).unwrap();
    let (_, trace) = train_dictionary(&feats, &TrainConfig { components: 8, ..TrainConfig::default() }).unwrap();
    assert!(trace.iterations >= 1);
    assert!(trace.log_likelihoods.windows(2).all(|w| w[1] >= w[0] - 1e-9));
}

fn block_strategy() -> impl Strategy<Value = Block> {
    prop::array::uniform8(prop::array::uniform8(-100.0f64..100.0))
}

fn sig_strategy() -> impl Strategy<Value = MrhSignature> {
    prop::collection::vec(0.0f64..1.0, REGION_COUNT * 3).prop_map(|v| MrhSignature::from_values(3, v).unwrap())
}

proptest! {
    #[test]
    fn dct_is_linear(a in block_strategy(), b in block_strategy(), s in -3.0f64..3.0) {
        let mut mix = [[0.0; 8]; 8];
        for i in 0..8 {
            for j in 0..8 {
                mix[i][j] = a[i][j] + s * b[i][j];
            }
        }
        let (ca, cb, cm) = (dct2(&a), dct2(&b), dct2(&mix));
        for i in 0..8 {
            for j in 0..8 {
                prop_assert!((cm[i][j] - (ca[i][j] + s * cb[i][j])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dct_matches_definition_and_keeps_energy(b in block_strategy()) {
        let fast = dct2(&b);
        let slow = naive_dct(&b);
        let mut e_in = 0.0;
        let mut e_out = 0.0;
        for i in 0..8 {
            for j in 0..8 {
                prop_assert!((fast[i][j] - slow[i][j]).abs() < 1e-9);
                e_in += b[i][j] * b[i][j];
                e_out += fast[i][j] * fast[i][j];
            }
        }
        prop_assert!((e_in - e_out).abs() <= 1e-9 * e_in.max(1.0));
    }

    #[test]
    fn average_ignores_order(sigs in prop::collection::vec(sig_strategy(), 1..12), seed in any::<u64>()) {
        let mut shuffled = sigs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = average_signatures(&sigs).unwrap();
        let b = average_signatures(&shuffled).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
