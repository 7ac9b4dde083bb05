//! Multi-region histogram signatures.

use crate::dictionary::VisualDictionary;
use crate::features::{extract_features, RegionLayout};
use crate::ingest::FaceCrop;
use crate::{Error, Result};

pub const REGION_COUNT: usize = 9;

/// Nine region-average posterior histograms, row-major over the 3x3 grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MrhSignature {
    components: usize,
    values: Vec<f64>,
}

impl MrhSignature {
    /// `values` holds `REGION_COUNT * components` entries, region by region.
    pub fn from_values(components: usize, values: Vec<f64>) -> Result<Self> {
        if components == 0 {
            return Err(Error::Empty("signature components"));
        }
        if values.len() != REGION_COUNT * components {
            return Err(Error::DimensionMismatch {
                expected: REGION_COUNT * components,
                actual: values.len(),
            });
        }
        Ok(Self { components, values })
    }

    /// Every region uniform over `components` bins.
    pub fn uniform(components: usize) -> Self {
        Self {
            components,
            values: vec![1.0 / components as f64; REGION_COUNT * components],
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn region(&self, r: usize) -> &[f64] {
        &self.values[r * self.components..(r + 1) * self.components]
    }

    pub fn regions(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.components)
    }
}

pub fn compute_mrh(
    face: &FaceCrop,
    dict: &VisualDictionary,
    layout: &RegionLayout,
) -> Result<MrhSignature> {
    if layout.region_count() != REGION_COUNT {
        return Err(Error::Layout(format!(
            "signatures need {REGION_COUNT} regions, layout has {}",
            layout.region_count()
        )));
    }
    let g = dict.components();
    let mut values = vec![0.0; REGION_COUNT * g];
    let mut post = vec![0.0; g];
    for region in extract_features(face, layout) {
        let acc = &mut values[region.region_index * g..(region.region_index + 1) * g];
        for f in &region.vectors {
            dict.posterior_into(&f.0, &mut post)?;
            for (a, p) in acc.iter_mut().zip(&post) {
                *a += p;
            }
        }
        let m = region.vectors.len() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
    }
    MrhSignature::from_values(g, values)
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Elementwise mean of signatures sharing the same component count.
pub fn average_signatures<S: AsRef<MrhSignature>>(sigs: &[S]) -> Result<MrhSignature> {
    let first = sigs.first().ok_or(Error::Empty("signature list"))?.as_ref();
    let g = first.components;
    if let Some(bad) = sigs.iter().find(|s| s.as_ref().components != g) {
        return Err(Error::DimensionMismatch {
            expected: g,
            actual: bad.as_ref().components,
        });
    }
    if sigs.len() == 1 {
        return Ok(first.clone());
    }
    let n = sigs.len() as f64;
    let values = (0..first.values.len())
        .map(|i| compensated_sum(sigs.iter().map(|s| s.as_ref().values[i])) / n)
        .collect();
    Ok(MrhSignature {
        components: g,
        values,
    })
}

impl AsRef<MrhSignature> for MrhSignature {
    fn as_ref(&self) -> &MrhSignature {
        self
    }
}
