//! Consistent-response classification.
//!
//! A response is consistent when its participant responded in at least
//! `window_w - missing_m` of the `window_w` weeks strictly before the
//! analysis week. Weeks of the dataset with fewer than `window_w` prior
//! calendar weeks are warm-up weeks and are always marked not consistent.

use crate::data::ResponseTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConsistencyParams {
    /// Number of weeks strictly before the analysis week to inspect.
    pub window_w: usize,
    /// Missing responses tolerated within the window.
    pub missing_m: usize,
}

impl ConsistencyParams {
    pub fn new(window_w: usize, missing_m: usize) -> Result<Self> {
        if window_w < 1 || missing_m >= window_w {
            return Err(Error::Config(format!(
                "consistency parameters require 0 <= missing ({missing_m}) < window ({window_w}) and window >= 1"
            )));
        }
        Ok(ConsistencyParams {
            window_w,
            missing_m,
        })
    }
}

impl Default for ConsistencyParams {
    fn default() -> Self {
        ConsistencyParams {
            window_w: 4,
            missing_m: 1,
        }
    }
}

/// Per-response consistency flags, aligned with `responses.rows()`.
/// Defined only for weeks where a response exists.
#[derive(Debug, Clone)]
pub struct ConsistencyMark {
    pub params: ConsistencyParams,
    pub consistent: Vec<bool>,
}

impl ConsistencyMark {
    pub fn count_consistent(&self) -> usize {
        self.consistent.iter().filter(|&&c| c).count()
    }
}

/// Whether a response at `week` is consistent given the participant's
/// responded week indices (sorted). `week` must carry a response.
pub fn is_consistent(responded_weeks: &[usize], week: usize, params: &ConsistencyParams) -> bool {
    if week < params.window_w {
        // Warm-up: fewer than window_w weeks exist before this one in the
        // dataset calendar.
        return false;
    }
    let lo = week - params.window_w;
    let in_window = responded_weeks
        .iter()
        .filter(|&&w| w >= lo && w < week)
        .count();
    in_window >= params.window_w - params.missing_m
}

/// Classifies every response in the table.
pub fn mark_consistency(responses: &ResponseTable, params: &ConsistencyParams) -> ConsistencyMark {
    let mut consistent = vec![false; responses.len()];
    let mut offset = 0usize;
    for (_, history) in responses.participants() {
        let weeks: Vec<usize> = history.iter().map(|r| r.week).collect();
        for (i, &week) in weeks.iter().enumerate() {
            consistent[offset + i] = is_consistent(&weeks, week, params);
        }
        offset += history.len();
    }
    ConsistencyMark {
        params: *params,
        consistent,
    }
}

/// Row indices of the consistent subset, plus the full mark table.
pub fn consistent_subset(
    responses: &ResponseTable,
    params: &ConsistencyParams,
) -> (Vec<usize>, ConsistencyMark) {
    let marks = mark_consistency(responses, params);
    let subset = marks
        .consistent
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| c.then_some(i))
        .collect();
    (subset, marks)
}

/// Per-week fraction of responses excluded by the filter. Weeks with zero
/// responses yield `None`, never 0/0.
pub fn fraction_excluded(responses: &ResponseTable, marks: &ConsistencyMark) -> Vec<Option<f64>> {
    let n_weeks = responses.calendar().len();
    let mut total = vec![0usize; n_weeks];
    let mut kept = vec![0usize; n_weeks];
    for (i, row) in responses.rows().iter().enumerate() {
        total[row.week] += 1;
        if marks.consistent[i] {
            kept[row.week] += 1;
        }
    }
    (0..n_weeks)
        .map(|w| {
            if total[w] == 0 {
                None
            } else {
                Some(1.0 - kept[w] as f64 / total[w] as f64)
            }
        })
        .collect()
}
