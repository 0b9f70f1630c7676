//! Spectrum-based fault localization with the Ochiai formula
//! `ef / sqrt(F * (ef + ep))`.

use std::cmp::Ordering;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::minilang::{ExecutionTrace, StmtId};
use crate::model::ModelError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Spectrum {
    /// Failing tests covering the statement.
    pub ef: u64,
    /// Passing tests covering the statement.
    pub ep: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageMatrix {
    /// Indexed by statement id.
    pub spectra: Vec<Spectrum>,
    pub failing: u64,
    pub passing: u64,
}

impl CoverageMatrix {
    pub fn from_traces(stmt_count: usize, traces: &[ExecutionTrace]) -> Self {
        let mut m = CoverageMatrix { spectra: vec![Spectrum::default(); stmt_count], failing: 0, passing: 0 };
        for t in traces {
            let passed = t.passed();
            if passed {
                m.passing += 1;
            } else {
                m.failing += 1;
            }
            for &id in &t.covered {
                if let Some(s) = m.spectra.get_mut(id as usize) {
                    if passed {
                        s.ep += 1;
                    } else {
                        s.ef += 1;
                    }
                }
            }
        }
        m
    }

    pub fn nf(&self, id: StmtId) -> u64 {
        self.failing - self.spectra[id as usize].ef
    }

    /// Same matrix with every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        CoverageMatrix {
            spectra: self.spectra.iter().map(|s| Spectrum { ef: s.ef * k, ep: s.ep * k }).collect(),
            failing: self.failing * k,
            passing: self.passing * k,
        }
    }
}

pub fn ochiai_score<T: Float>(s: Spectrum, failing: u64) -> T {
    if s.ef == 0 {
        return T::zero();
    }
    let ef = T::from(s.ef).unwrap();
    let denom = T::from(failing).unwrap() * T::from(s.ef + s.ep).unwrap();
    ef / denom.sqrt()
}

/// Exact score comparison: `ef_a^2 (ef_b + ep_b)` against `ef_b^2 (ef_a + ep_a)`,
/// which orders like the scores without rounding.
fn compare(a: Spectrum, b: Spectrum) -> Ordering {
    match (a.ef, b.ef) {
        (0, 0) => Ordering::Equal,
        (0, _) => Ordering::Less,
        (_, 0) => Ordering::Greater,
        _ => {
            let lhs = (a.ef as u128).pow(2) * (b.ef + b.ep) as u128;
            let rhs = (b.ef as u128).pow(2) * (a.ef + a.ep) as u128;
            lhs.cmp(&rhs)
        }
    }
}

/// Statements by descending suspiciousness, ties by ascending id.
pub fn ochiai<T: Float>(matrix: &CoverageMatrix) -> Result<Vec<(StmtId, T)>, ModelError> {
    if matrix.failing == 0 {
        return Err(ModelError::Contract("ochiai needs at least one failing test".into()));
    }
    let mut ids: Vec<StmtId> = (0..matrix.spectra.len() as StmtId).collect();
    ids.sort_by(|&a, &b| compare(matrix.spectra[b as usize], matrix.spectra[a as usize]).then(a.cmp(&b)));
    Ok(ids
        .into_iter()
        .map(|id| (id, ochiai_score(matrix.spectra[id as usize], matrix.failing)))
        .collect())
}
