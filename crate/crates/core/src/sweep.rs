//! Consistency-parameter trade-off grid: fraction of responses excluded
//! and relative incidence change per (window, missing-allowed, grouping).

use crate::consistency::{fraction_excluded, mark_consistency, ConsistencyParams};
use crate::data::ResponseTable;
use crate::error::Result;
use crate::incidents::{mark_onsets, SymptomGrouping};
use crate::week::SurveyWeek;

#[derive(Debug, Clone)]
pub struct SweepWeek {
    pub week: SurveyWeek,
    /// `None` for weeks with zero responses.
    pub fraction_excluded: Option<f64>,
    /// Unweighted all-responses estimate (the baseline).
    pub baseline: Option<f64>,
    /// Unweighted consistent-subset estimate.
    pub filtered: Option<f64>,
    /// (filtered - baseline) / baseline; `None` when the baseline is zero
    /// or either estimate is unavailable.
    pub rel_change: Option<f64>,
}

/// Five-number summary over weeks (type-7 quantiles).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n_weeks: usize,
}

pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    Some(Quartiles {
        min: sorted[0],
        q1: quantile(0.25),
        median: quantile(0.5),
        q3: quantile(0.75),
        max: *sorted.last().unwrap(),
        n_weeks: sorted.len(),
    })
}

/// Summary of one grid point, computed over all weeks and again over
/// weeks passing the high-exclusion filter (both reported, labelled).
#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub fraction_excluded_all: Option<Quartiles>,
    pub fraction_excluded_filtered: Option<Quartiles>,
    pub rel_change_all: Option<Quartiles>,
    pub rel_change_filtered: Option<Quartiles>,
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub window_w: usize,
    pub missing_m: usize,
    pub grouping: SymptomGrouping,
    pub weekly: Vec<SweepWeek>,
    pub summary: SweepSummary,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub exclusion_threshold: f64,
}

/// Removes weeks whose excluded fraction exceeds `threshold` from summary
/// statistics.
pub fn filter_high_exclusion_weeks(series: &[SweepWeek], threshold: f64) -> Vec<SweepWeek> {
    let filtered: Vec<SweepWeek> = series
        .iter()
        .filter(|w| w.fraction_excluded.is_some_and(|f| f <= threshold))
        .cloned()
        .collect();
    if filtered.is_empty() && !series.is_empty() {
        log::warn!("all weeks exceed exclusion threshold {threshold}; summary will be empty");
    }
    filtered
}

fn summarize(weekly: &[SweepWeek], threshold: f64) -> SweepSummary {
    let filtered = filter_high_exclusion_weeks(weekly, threshold);
    let fractions = |rows: &[SweepWeek]| {
        let v: Vec<f64> = rows.iter().filter_map(|w| w.fraction_excluded).collect();
        quartiles(&v)
    };
    let changes = |rows: &[SweepWeek]| {
        let v: Vec<f64> = rows.iter().filter_map(|w| w.rel_change).collect();
        quartiles(&v)
    };
    SweepSummary {
        fraction_excluded_all: fractions(weekly),
        fraction_excluded_filtered: fractions(&filtered),
        rel_change_all: changes(weekly),
        rel_change_filtered: changes(&filtered),
    }
}

/// Evaluates the (window, missing) grid. Estimates are unweighted so the
/// grid isolates the consistency filter's effect; invalid grid points
/// (missing >= window) are skipped with a warning.
pub fn run_sweep(
    responses: &ResponseTable,
    w_range: impl Iterator<Item = usize> + Clone,
    m_range: impl Iterator<Item = usize> + Clone,
    groupings: &[SymptomGrouping],
    exclusion_threshold: f64,
) -> Result<SweepResult> {
    let n_weeks = responses.calendar().len();
    let onsets: Vec<(SymptomGrouping, Vec<bool>)> = groupings
        .iter()
        .map(|&g| Ok((g, mark_onsets(responses, g)?.is_onset)))
        .collect::<Result<_>>()?;

    // Baseline per (grouping, week): unweighted all-responses estimate.
    let mut week_totals = vec![0usize; n_weeks];
    for row in responses.rows() {
        week_totals[row.week] += 1;
    }
    let baseline: Vec<Vec<Option<f64>>> = onsets
        .iter()
        .map(|(_, flags)| {
            let mut counts = vec![0usize; n_weeks];
            for (i, row) in responses.rows().iter().enumerate() {
                if flags[i] {
                    counts[row.week] += 1;
                }
            }
            (0..n_weeks)
                .map(|w| (week_totals[w] > 0).then(|| counts[w] as f64 / week_totals[w] as f64))
                .collect()
        })
        .collect();

    let mut points = Vec::new();
    for window_w in w_range {
        for missing_m in m_range.clone() {
            let params = match ConsistencyParams::new(window_w, missing_m) {
                Ok(p) => p,
                Err(_) => {
                    log::warn!("skipping invalid grid point (W={window_w}, M={missing_m})");
                    continue;
                }
            };
            let marks = mark_consistency(responses, &params);
            let excluded = fraction_excluded(responses, &marks);

            let mut kept_totals = vec![0usize; n_weeks];
            for (i, row) in responses.rows().iter().enumerate() {
                if marks.consistent[i] {
                    kept_totals[row.week] += 1;
                }
            }

            for (g_idx, (grouping, flags)) in onsets.iter().enumerate() {
                let mut kept_onsets = vec![0usize; n_weeks];
                for (i, row) in responses.rows().iter().enumerate() {
                    if marks.consistent[i] && flags[i] {
                        kept_onsets[row.week] += 1;
                    }
                }
                let weekly: Vec<SweepWeek> = (0..n_weeks)
                    .map(|w| {
                        let filtered = (kept_totals[w] > 0)
                            .then(|| kept_onsets[w] as f64 / kept_totals[w] as f64);
                        let base = baseline[g_idx][w];
                        let rel_change = match (base, filtered) {
                            (Some(b), Some(f)) if b > 0.0 => Some((f - b) / b),
                            _ => None,
                        };
                        SweepWeek {
                            week: responses.week(w),
                            fraction_excluded: excluded[w],
                            baseline: base,
                            filtered,
                            rel_change,
                        }
                    })
                    .collect();
                let summary = summarize(&weekly, exclusion_threshold);
                points.push(SweepPoint {
                    window_w,
                    missing_m,
                    grouping: *grouping,
                    weekly,
                    summary,
                });
            }
        }
    }
    points.sort_by_key(|p| (p.window_w, p.missing_m, p.grouping));
    Ok(SweepResult {
        points,
        exclusion_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::parse_responses;
    use crate::incidents::ALL_GROUPINGS;

    const HEADER: &str = "participant_id,week_ending,cough,fever,sore_throat,shortness_of_breath,runny_nose,loss_taste_smell\n";

    fn full_panel(n: usize, weeks: usize) -> ResponseTable {
        let mut csv = HEADER.to_string();
        let start = chrono::NaiveDate::from_ymd_opt(2020, 5, 3).unwrap();
        for p in 0..n {
            for w in 0..weeks {
                let date = start + chrono::Duration::weeks(w as i64);
                // One participant ill in week 6 so baselines are non-zero.
                let ill = p == 0 && w == 6;
                csv.push_str(&format!(
                    "P{p},{date},{c},{f},0,0,0,0\n",
                    c = ill as u8,
                    f = ill as u8
                ));
            }
        }
        parse_responses(csv.as_bytes()).unwrap()
    }

    #[test]
    fn full_panel_grid_is_flat() {
        let table = full_panel(10, 12);
        let result = run_sweep(&table, 1..=4, 0..=2, &ALL_GROUPINGS, 0.25).unwrap();
        for point in &result.points {
            for week in &point.weekly[point.window_w..] {
                assert_eq!(week.fraction_excluded, Some(0.0));
                if let Some(rel) = week.rel_change {
                    assert!(rel.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn invalid_grid_points_skipped() {
        let table = full_panel(3, 6);
        let result = run_sweep(&table, 1..=2, 0..=2, &ALL_GROUPINGS, 0.25).unwrap();
        // Valid points: (1,0), (2,0), (2,1) x 3 groupings.
        assert_eq!(result.points.len(), 9);
    }

    #[test]
    fn exclusion_filter_drops_high_weeks() {
        let week = |f: Option<f64>| SweepWeek {
            week: crate::week::WeekCalendar::spanning(
                chrono::NaiveDate::from_ymd_opt(2020, 5, 3).unwrap(),
                chrono::NaiveDate::from_ymd_opt(2020, 5, 3).unwrap(),
            )
            .unwrap()
            .week(0),
            fraction_excluded: f,
            baseline: Some(0.1),
            filtered: Some(0.1),
            rel_change: Some(0.0),
        };
        let series = vec![week(Some(0.1)), week(Some(0.30)), week(None)];
        let kept = filter_high_exclusion_weeks(&series, 0.25);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].fraction_excluded, Some(0.1));

        // threshold=0: only zero-exclusion weeks survive.
        let series = vec![week(Some(0.0)), week(Some(0.01))];
        assert_eq!(filter_high_exclusion_weeks(&series, 0.0).len(), 1);

        // no week above threshold: identity.
        let series = vec![week(Some(0.1)), week(Some(0.2))];
        assert_eq!(filter_high_exclusion_weeks(&series, 0.25).len(), 2);
    }

    #[test]
    fn quartiles_of_constant_series() {
        let q = quartiles(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(q.median, 0.5);
        assert_eq!(q.q1, 0.5);
        assert_eq!(q.n_weeks, 3);
        assert!(quartiles(&[]).is_none());
    }
}
