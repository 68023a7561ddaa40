use serde::{Deserialize, Serialize};

use super::Box3D;
use crate::error::{Error, Result};
use crate::priors::SizePriorDB;

/// What to do with a box whose category has no size prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnknownCategoryPolicy {
    #[default]
    KeepWithWarning,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeDecision {
    pub keep: bool,
    /// Box-to-prior ratios, largest dimension first on both sides.
    pub ratios: Option<[f64; 3]>,
    pub unknown_category: bool,
}

fn sorted_desc(mut d: [f64; 3]) -> [f64; 3] {
    d.sort_by(|a, b| b.total_cmp(a));
    d
}

/// Keeps a box iff `t < dim / prior < 1/t` holds strictly for every
/// dimension, pairing dimensions largest-to-largest.
pub fn size_filter(b: &Box3D, priors: &SizePriorDB, t: f64, policy: UnknownCategoryPolicy) -> Result<SizeDecision> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::invalid(format!("size threshold must lie in (0, 1), got {t}")));
    }
    let Some(prior) = priors.get(&b.category) else {
        return Ok(SizeDecision {
            keep: policy == UnknownCategoryPolicy::KeepWithWarning,
            ratios: None,
            unknown_category: true,
        });
    };
    let dims = sorted_desc(b.dims());
    let prior = sorted_desc(prior);
    let ratios = [dims[0] / prior[0], dims[1] / prior[1], dims[2] / prior[2]];
    let upper = 1.0 / t;
    let keep = ratios.iter().all(|&r| t < r && r < upper);
    Ok(SizeDecision {
        keep,
        ratios: Some(ratios),
        unknown_category: false,
    })
}
