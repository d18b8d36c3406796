//! Inter-rater agreement: Cohen's kappa for two raters, Fleiss' kappa for many.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cohen's kappa `(p_o - p_e) / (1 - p_e)`; 1.0 when both raters are constant and agree.
pub fn cohen_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "label sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("kappa needs at least one item"));
    }
    let n = a.len() as f64;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64;
    let mut marginals: BTreeMap<&L, (f64, f64)> = BTreeMap::new();
    for l in a {
        marginals.entry(l).or_default().0 += 1.0;
    }
    for l in b {
        marginals.entry(l).or_default().1 += 1.0;
    }
    let p_o = agree / n;
    let p_e: f64 = marginals.values().map(|(x, y)| (x / n) * (y / n)).sum();
    if p_e >= 1.0 {
        return Ok(1.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FleissKappa {
    pub kappa: f64,
    /// Every rating fell in one category; kappa is reported as 1.0 by convention.
    pub degenerate: bool,
}

/// Fleiss' kappa over `ratings[item][rater]`; every item needs the same rater count.
pub fn fleiss_kappa<L: Ord>(ratings: &[Vec<L>]) -> Result<FleissKappa> {
    let Some(first) = ratings.first() else {
        return Err(Error::invalid("Fleiss' kappa needs at least one item"));
    };
    let raters = first.len();
    if raters < 2 {
        return Err(Error::invalid("Fleiss' kappa needs at least two raters"));
    }
    if ratings.iter().any(|r| r.len() != raters) {
        return Err(Error::invalid("every item needs the same number of ratings"));
    }
    let n = raters as f64;
    let items = ratings.len() as f64;
    let mut totals: BTreeMap<&L, f64> = BTreeMap::new();
    let mut p_bar = 0.0;
    for item in ratings {
        let mut counts: BTreeMap<&L, f64> = BTreeMap::new();
        for l in item {
            *counts.entry(l).or_default() += 1.0;
            *totals.entry(l).or_default() += 1.0;
        }
        let agree: f64 = counts.values().map(|c| c * c).sum::<f64>() - n;
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= items;
    let p_e: f64 = totals.values().map(|t| (t / (items * n)).powi(2)).sum();
    if p_e >= 1.0 {
        return Ok(FleissKappa {
            kappa: 1.0,
            degenerate: true,
        });
    }
    Ok(FleissKappa {
        kappa: (p_bar - p_e) / (1.0 - p_e),
        degenerate: false,
    })
}
