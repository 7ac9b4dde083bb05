//! Raw and cohort-normalised L1 distances between signatures, set matching
//! and threshold decisions.

use serde::Serialize;

use crate::signature::MrhSignature;
use crate::{Error, Result};

fn check_same(x: &MrhSignature, y: &MrhSignature) -> Result<()> {
    if x.components() != y.components() {
        return Err(Error::DimensionMismatch {
            expected: x.components(),
            actual: y.components(),
        });
    }
    Ok(())
}

/// L1 distance over all region histograms.
pub fn d_raw(x: &MrhSignature, y: &MrhSignature) -> Result<f64> {
    check_same(x, y)?;
    Ok(l1(x, y))
}

fn l1(x: &MrhSignature, y: &MrhSignature) -> f64 {
    x.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).sum()
}

/// Signatures of non-matching reference faces used to normalise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSet {
    cohorts: Vec<MrhSignature>,
}

impl CohortSet {
    pub fn new(cohorts: Vec<MrhSignature>) -> Result<Self> {
        let first = cohorts.first().ok_or(Error::Empty("cohort set"))?;
        if let Some(bad) = cohorts.iter().find(|c| c.components() != first.components()) {
            return Err(Error::DimensionMismatch {
                expected: first.components(),
                actual: bad.components(),
            });
        }
        Ok(Self { cohorts })
    }

    pub fn len(&self) -> usize {
        self.cohorts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cohorts.is_empty()
    }

    pub fn signatures(&self) -> &[MrhSignature] {
        &self.cohorts
    }

    pub fn components(&self) -> usize {
        self.cohorts[0].components()
    }

    /// Mean raw distance from `x` to the cohort.
    pub fn mean_distance(&self, x: &MrhSignature) -> Result<f64> {
        check_same(x, &self.cohorts[0])?;
        Ok(self.cohorts.iter().map(|c| l1(x, c)).sum::<f64>() / self.cohorts.len() as f64)
    }
}

/// A signature paired with its mean cohort distance, so repeated comparisons
/// do not rescan the cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSignature {
    pub signature: MrhSignature,
    pub cohort_mean: f64,
}

impl PreparedSignature {
    pub fn new(signature: MrhSignature, cohorts: &CohortSet) -> Result<Self> {
        let cohort_mean = cohorts.mean_distance(&signature)?;
        Ok(Self {
            signature,
            cohort_mean,
        })
    }
}

fn normalized(x: &PreparedSignature, y: &PreparedSignature) -> Result<f64> {
    check_same(&x.signature, &y.signature)?;
    let raw = l1(&x.signature, &y.signature);
    let denom = 0.5 * (x.cohort_mean + y.cohort_mean);
    // denom >= raw / 2 by the triangle inequality, so it only vanishes with raw
    if denom <= 0.0 {
        return Err(Error::DegenerateComparison);
    }
    Ok(raw / denom)
}

/// Raw distance divided by the average distance of both signatures to the cohort.
pub fn d_norm(x: &MrhSignature, y: &MrhSignature, cohorts: &CohortSet) -> Result<f64> {
    check_same(x, y)?;
    let px = PreparedSignature::new(x.clone(), cohorts)?;
    let py = PreparedSignature::new(y.clone(), cohorts)?;
    normalized(&px, &py)
}

/// Minimum normalised distance over every probe/gallery pair, and the number
/// of pairs evaluated.
pub fn prepared_set_distance(
    probe: &[PreparedSignature],
    gallery: &[PreparedSignature],
) -> Result<(f64, usize)> {
    if probe.is_empty() || gallery.is_empty() {
        return Err(Error::Empty("signature set"));
    }
    let mut best = f64::INFINITY;
    for p in probe {
        for g in gallery {
            best = best.min(normalized(p, g)?);
        }
    }
    Ok((best, probe.len() * gallery.len()))
}

pub fn set_distance(
    probe: &[MrhSignature],
    gallery: &[MrhSignature],
    cohorts: &CohortSet,
) -> Result<f64> {
    let prep = |s: &[MrhSignature]| {
        s.iter()
            .map(|x| PreparedSignature::new(x.clone(), cohorts))
            .collect::<Result<Vec<_>>>()
    };
    prepared_set_distance(&prep(probe)?, &prep(gallery)?).map(|(d, _)| d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchDecision {
    pub distance: f64,
    pub threshold: f64,
    pub matched: bool,
}

/// Accepts when `distance <= threshold`.
pub fn decide(distance: f64, threshold: f64) -> Result<MatchDecision> {
    if distance.is_nan() || threshold.is_nan() {
        return Err(Error::NonFinite("match decision input"));
    }
    Ok(MatchDecision {
        distance,
        threshold,
        matched: distance <= threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signature::REGION_COUNT;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sig(rng: &mut ChaCha8Rng, g: usize) -> MrhSignature {
        let mut values = Vec::with_capacity(REGION_COUNT * g);
        for _ in 0..REGION_COUNT {
            let raw: Vec<f64> = (0..g).map(|_| rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            values.extend(raw.iter().map(|v| v / s));
        }
        MrhSignature::from_values(g, values).unwrap()
    }

    /// Region 0 holds `first`; remaining regions are identical `[1, 0]`.
    fn toy(first: [f64; 2]) -> MrhSignature {
        let mut v = first.to_vec();
        for _ in 1..REGION_COUNT {
            v.extend([1.0, 0.0]);
        }
        MrhSignature::from_values(2, v).unwrap()
    }

    #[test]
    fn raw_distance_basics() {
        let x = toy([1.0, 0.0]);
        let y = toy([0.0, 1.0]);
        assert_eq!(d_raw(&x, &x).unwrap(), 0.0);
        assert_eq!(d_raw(&x, &y).unwrap(), 2.0);
        assert!(d_raw(&x, &MrhSignature::uniform(3)).is_err());
    }

    #[test]
    fn norm_of_identical_pair_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_sig(&mut rng, 4);
        let cohorts = CohortSet::new(vec![random_sig(&mut rng, 4), random_sig(&mut rng, 4)]).unwrap();
        assert_eq!(d_norm(&x, &x, &cohorts).unwrap(), 0.0);
    }

    #[test]
    fn norm_hand_computed() {
        // x, y and the cohort are pairwise 2 apart.
        let x = toy([1.0, 0.0]);
        let y = toy([0.0, 1.0]);
        let mut cv = vec![0.0, 0.0];
        cv.extend(std::iter::repeat_n([1.0, 0.0], REGION_COUNT - 1).flatten());
        cv[2] = 0.5;
        cv[3] = 0.5;
        let c = MrhSignature::from_values(2, cv).unwrap();
        assert_eq!(d_raw(&x, &c).unwrap(), 2.0);
        assert_eq!(d_raw(&y, &c).unwrap(), 2.0);
        let cohorts = CohortSet::new(vec![c]).unwrap();
        assert_eq!(d_norm(&x, &y, &cohorts).unwrap(), 1.0);
    }

    #[test]
    fn duplicated_cohort_leaves_norm_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (x, y) = (random_sig(&mut rng, 5), random_sig(&mut rng, 5));
        let cs: Vec<_> = (0..4).map(|_| random_sig(&mut rng, 5)).collect();
        let twice: Vec<_> = cs.iter().chain(&cs).cloned().collect();
        let a = d_norm(&x, &y, &CohortSet::new(cs).unwrap()).unwrap();
        let b = d_norm(&x, &y, &CohortSet::new(twice).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn degenerate_normaliser_is_an_error() {
        let x = MrhSignature::uniform(3);
        let cohorts = CohortSet::new(vec![x.clone()]).unwrap();
        assert!(matches!(d_norm(&x, &x, &cohorts), Err(Error::DegenerateComparison)));
        assert!(matches!(
            set_distance(&[x.clone()], &[x.clone()], &cohorts),
            Err(Error::DegenerateComparison)
        ));
    }

    #[test]
    fn set_distance_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cohorts = CohortSet::new((0..3).map(|_| random_sig(&mut rng, 4)).collect()).unwrap();
        let (p, g) = (random_sig(&mut rng, 4), random_sig(&mut rng, 4));
        assert_eq!(
            set_distance(&[p.clone()], &[g.clone()], &cohorts).unwrap(),
            d_norm(&p, &g, &cohorts).unwrap()
        );
        let probes: Vec<_> = (0..3).map(|_| random_sig(&mut rng, 4)).collect();
        let mut gallery: Vec<_> = (0..4).map(|_| random_sig(&mut rng, 4)).collect();
        let mut brute = f64::INFINITY;
        for a in &probes {
            for b in &gallery {
                brute = brute.min(d_norm(a, b, &cohorts).unwrap());
            }
        }
        assert_eq!(set_distance(&probes, &gallery, &cohorts).unwrap(), brute);
        gallery.push(probes[1].clone());
        assert_eq!(set_distance(&probes, &gallery, &cohorts).unwrap(), 0.0);
        assert!(set_distance(&[], &gallery, &cohorts).is_err());
    }

    #[test]
    fn decisions() {
        assert!(decide(0.5, 0.5).unwrap().matched);
        assert!(!decide(0.500001, 0.5).unwrap().matched);
        assert!(decide(0.0, 3.0).unwrap().matched);
        assert!(decide(f64::NAN, 1.0).is_err());
    }

    fn sig_strategy(g: usize) -> impl Strategy<Value = MrhSignature> {
        prop::collection::vec(0.0f64..1.0, REGION_COUNT * g)
            .prop_map(move |v| MrhSignature::from_values(g, v).unwrap())
    }

    proptest! {
        #[test]
        fn norm_is_symmetric_and_scale_free(
            x in sig_strategy(3), y in sig_strategy(3),
            cs in prop::collection::vec(sig_strategy(3), 1..5),
            scale in 0.1f64..10.0,
        ) {
            let cohorts = CohortSet::new(cs.clone()).unwrap();
            let a = d_norm(&x, &y, &cohorts).unwrap();
            prop_assert_eq!(a, d_norm(&y, &x, &cohorts).unwrap());
            let sc = |s: &MrhSignature| MrhSignature::from_values(3, s.values().iter().map(|v| v * scale).collect()).unwrap();
            let scaled = CohortSet::new(cs.iter().map(sc).collect()).unwrap();
            let b = d_norm(&sc(&x), &sc(&y), &scaled).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.max(1.0), "{} vs {}", a, b);
        }

        #[test]
        fn adding_gallery_never_increases_distance(
            probe in prop::collection::vec(sig_strategy(2), 1..3),
            gallery in prop::collection::vec(sig_strategy(2), 1..4),
            extra in sig_strategy(2),
            cs in prop::collection::vec(sig_strategy(2), 1..3),
        ) {
            let cohorts = CohortSet::new(cs).unwrap();
            let before = set_distance(&probe, &gallery, &cohorts).unwrap();
            let mut more = gallery.clone();
            more.push(extra);
            prop_assert!(set_distance(&probe, &more, &cohorts).unwrap() <= before);
        }
    }
}
