use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{par, rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParamRange {
    /// Inclusive integer range.
    Int { lo: i64, hi: i64 },
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
}

impl ParamRange {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ParamRange::Int { lo, hi } => rng.random_range(lo..=hi) as f64,
            ParamRange::Uniform { lo, hi } if lo == hi => lo,
            ParamRange::Uniform { lo, hi } => rng.random_range(lo..hi),
            ParamRange::LogUniform { lo, hi } if lo == hi => lo,
            ParamRange::LogUniform { lo, hi } => rng.random_range(lo.ln()..hi.ln()).exp(),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let ok = match *self {
            ParamRange::Int { lo, hi } => lo <= hi,
            ParamRange::Uniform { lo, hi } => lo <= hi && lo.is_finite() && hi.is_finite(),
            ParamRange::LogUniform { lo, hi } => lo > 0.0 && lo <= hi && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("search range for {name} is empty or invalid")))
        }
    }
}

pub type Candidate = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: Vec<(String, ParamRange)>,
}

impl SearchSpace {
    pub fn new(params: &[(&str, ParamRange)]) -> Self {
        SearchSpace {
            params: params.iter().map(|(n, r)| (n.to_string(), *r)).collect(),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Candidate {
        self.params.iter().map(|(n, r)| (n.clone(), r.sample(rng))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HpoBudget {
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub best_score: f64,
    /// Every evaluated candidate with its score, in draw order.
    pub log: Vec<(Candidate, f64)>,
}

/// Draws `budget.iterations` candidates from `space`, scores them with
/// `evaluate` (in parallel) and keeps the highest score; ties go to the
/// earlier draw and NaN scores never win.
pub fn random_search<F>(space: &SearchSpace, budget: HpoBudget, seed: u64, evaluate: F) -> Result<SearchOutcome>
where
    F: Fn(&Candidate) -> Result<f64> + Sync + Send,
{
    if budget.iterations == 0 {
        return Err(Error::Config("search budget must be at least 1".into()));
    }
    for (n, r) in &space.params {
        r.validate(n)?;
    }
    let mut rng = rng::stream(seed, &[0x5EA]);
    let candidates: Vec<Candidate> = (0..budget.iterations).map(|_| space.sample(&mut rng)).collect();
    let scores = par::try_map_slice(&candidates, |c| evaluate(c))?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] || scores[best].is_nan() && !s.is_nan() {
            best = i;
        }
    }
    Ok(SearchOutcome {
        best: candidates[best].clone(),
        best_score: scores[best],
        log: candidates.into_iter().zip(scores).collect(),
    })
}
