use serde::{Deserialize, Serialize};

use super::{Kind, SdgError};

/// Per-strategy sample counts; the jailbreak bucket takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountAllocation {
    pub diverse: u64,
    pub in_domain: u64,
    pub inapplicable: u64,
    pub jailbreak: u64,
    pub total: u64,
}

impl CountAllocation {
    pub fn count(&self, kind: Kind) -> u64 {
        match kind {
            Kind::Diverse => self.diverse,
            Kind::InDomain => self.in_domain,
            Kind::Inapplicable => self.inapplicable,
            Kind::Jailbreak => self.jailbreak,
        }
    }

    pub fn as_tuple(&self) -> (u64, u64, u64, u64) {
        (self.diverse, self.in_domain, self.inapplicable, self.jailbreak)
    }
}

/// `f64::round` rounds half away from zero.
fn rounded_share(ratio: f64, total: u64) -> Result<u64, SdgError> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(SdgError::InvalidRatio(ratio));
    }
    Ok((ratio * total as f64).round() as u64)
}

pub fn allocate_counts(total: u64, r_d: f64, r_i: f64, r_p: f64) -> Result<CountAllocation, SdgError> {
    let diverse = rounded_share(r_d, total)?;
    let in_domain = rounded_share(r_i, total)?;
    let inapplicable = rounded_share(r_p, total)?;
    let used = diverse
        .checked_add(in_domain)
        .and_then(|s| s.checked_add(inapplicable))
        .filter(|&s| s <= total)
        .ok_or(SdgError::RatioOverflow {
            diverse,
            in_domain,
            inapplicable,
            total,
        })?;
    Ok(CountAllocation {
        diverse,
        in_domain,
        inapplicable,
        jailbreak: total - used,
        total,
    })
}
