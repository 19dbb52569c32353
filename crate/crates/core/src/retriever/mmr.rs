//! Maximal marginal relevance selection.
//!
//! Greedy: the first pick is the candidate most cosine-similar to the query;
//! each later pick maximizes
//! `lambda * cos(v, query) - (1 - lambda) * max_{s in selected} cos(v, s)`.
//! Ties go to the lower row.

use crate::error::{Error, Result};
use crate::metric::cosine;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmrConfig {
    pub lambda: f64,
    /// Each query draws `candidate_multiplier × picks` unique candidates.
    pub candidate_multiplier: usize,
}

impl Default for MmrConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            candidate_multiplier: 2,
        }
    }
}

impl MmrConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.candidate_multiplier < 2 {
            return Err(Error::Config(format!(
                "candidate_multiplier must be >= 2, got {}",
                self.candidate_multiplier
            )));
        }
        Ok(())
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda must be in [0, 1], got {lambda}")));
    }
    Ok(())
}

/// Returns exactly `k` rows in selection order.
pub fn mmr_select(query: &[f32], candidates: &[(usize, &[f32])], k: usize, lambda: f64) -> Result<Vec<usize>> {
    check_lambda(lambda)?;
    if candidates.is_empty() {
        return Err(Error::EmptyData);
    }
    if k > candidates.len() {
        return Err(Error::KTooLarge {
            k,
            available: candidates.len(),
        });
    }
    let relevance: Vec<f64> = candidates
        .iter()
        .map(|(_, v)| cosine(v, query))
        .collect::<Result<_>>()?;

    let n = candidates.len();
    let mut taken = vec![false; n];
    let mut max_sim = vec![f64::NEG_INFINITY; n];
    let mut picks = Vec::with_capacity(k);

    for step in 0..k {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in (0..n).filter(|&i| !taken[i]) {
            let score = if step == 0 {
                relevance[i]
            } else {
                lambda * relevance[i] - (1.0 - lambda) * max_sim[i]
            };
            let row = candidates[i].0;
            let better = match best {
                None => true,
                Some((s, r, _)) => score > s || (score == s && row < r),
            };
            if better {
                best = Some((score, row, i));
            }
        }
        let (_, row, chosen) = best.expect("k <= candidates");
        taken[chosen] = true;
        picks.push(row);
        if step + 1 < k {
            let cv = candidates[chosen].1;
            for i in (0..n).filter(|&i| !taken[i]) {
                let s = cosine(candidates[i].1, cv)?;
                if s > max_sim[i] {
                    max_sim[i] = s;
                }
            }
        }
    }
    Ok(picks)
}
