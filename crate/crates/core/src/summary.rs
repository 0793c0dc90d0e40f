//! Descriptive demographic summaries of the response cohort: per-factor
//! response and participant breakdowns, weekly response counts, and the
//! per-participant response-count distribution.

use std::collections::{BTreeMap, BTreeSet};

use crate::consistency::ConsistencyMark;
use crate::data::{ParticipantTable, ResponseTable};
use crate::week::SurveyWeek;

#[derive(Debug, Clone, PartialEq)]
pub struct FactorRow {
    pub factor: String,
    pub group: String,
    /// Average responses per survey week (count and share of all responses).
    pub avg_weekly_responses: f64,
    pub pct_responses: f64,
    pub avg_weekly_consistent: f64,
    pub pct_consistent_responses: f64,
    /// Unique participants with at least one response (count and share).
    pub participants: usize,
    pub pct_participants: f64,
    /// Unique participants consistent in at least one week.
    pub consistent_participants: usize,
    pub pct_consistent_participants: f64,
}

#[derive(Debug, Clone)]
pub struct WeeklyCount {
    pub week: SurveyWeek,
    pub responses: usize,
    pub consistent_responses: usize,
}

#[derive(Debug, Clone)]
pub struct DemographicSummary {
    pub rows: Vec<FactorRow>,
    pub weekly_counts: Vec<WeeklyCount>,
    /// (number of responses submitted, participants with that many).
    pub responses_per_person: Vec<(usize, usize)>,
    /// Cumulative probability of a participant having responded to x or
    /// fewer surveys; non-decreasing, ends at 1.
    pub cumulative_responses_per_person: Vec<(usize, f64)>,
    /// Responses whose participant_id is absent from the demographics
    /// table, grouped under "unknown" and surfaced as a warning count.
    pub unknown_participant_responses: usize,
}

fn age_decade(age: Option<u32>) -> String {
    match age {
        None => "unknown".to_string(),
        Some(a) if a >= 80 => "80+".to_string(),
        Some(a) => {
            let lo = (a / 10) * 10;
            format!("{lo}-{}", lo + 9)
        }
    }
}

/// Tallies responses, consistent responses, and unique participants per
/// demographic group. When `marks` is `None` the consistent columns are
/// zero.
pub fn summarize_demographics(
    responses: &ResponseTable,
    participants: &ParticipantTable,
    marks: Option<&ConsistencyMark>,
) -> DemographicSummary {
    let n_weeks = responses.calendar().len().max(1);
    let unknown = "unknown".to_string();

    // factor -> group -> (responses, consistent responses)
    let mut response_tally: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
    // factor -> group -> participant sets
    let mut participant_tally: BTreeMap<(String, String), BTreeSet<&str>> = BTreeMap::new();
    let mut consistent_participant_tally: BTreeMap<(String, String), BTreeSet<&str>> =
        BTreeMap::new();

    let mut weekly = vec![(0usize, 0usize); responses.calendar().len()];
    let mut per_person: BTreeMap<&str, usize> = BTreeMap::new();
    let mut unknown_responses = 0usize;

    for (i, row) in responses.rows().iter().enumerate() {
        let participant = participants.get(&row.participant_id);
        if participant.is_none() {
            unknown_responses += 1;
        }
        let consistent = marks.is_some_and(|m| m.consistent[i]);
        let groups = [
            (
                "age".to_string(),
                age_decade(participant.and_then(|p| p.age_years)),
            ),
            (
                "ethnicity".to_string(),
                participant
                    .and_then(|p| p.ethnicity.clone())
                    .unwrap_or_else(|| unknown.clone()),
            ),
            (
                "gender".to_string(),
                participant
                    .and_then(|p| p.gender.clone())
                    .unwrap_or_else(|| unknown.clone()),
            ),
            (
                "region".to_string(),
                participant
                    .and_then(|p| p.region.clone())
                    .unwrap_or_else(|| unknown.clone()),
            ),
        ];
        for key in groups {
            let entry = response_tally.entry(key.clone()).or_default();
            entry.0 += 1;
            if consistent {
                entry.1 += 1;
            }
            participant_tally
                .entry(key.clone())
                .or_default()
                .insert(&row.participant_id);
            if consistent {
                consistent_participant_tally
                    .entry(key)
                    .or_default()
                    .insert(&row.participant_id);
            }
        }

        weekly[row.week].0 += 1;
        if consistent {
            weekly[row.week].1 += 1;
        }
        *per_person.entry(&row.participant_id).or_default() += 1;
    }
    if unknown_responses > 0 {
        log::warn!("{unknown_responses} responses from participants missing demographics");
    }

    let total_responses: usize = weekly.iter().map(|w| w.0).sum();
    let total_consistent: usize = weekly.iter().map(|w| w.1).sum();
    let total_participants = per_person.len();
    let total_consistent_participants: usize = {
        let mut set = BTreeSet::new();
        if let Some(marks) = marks {
            for (i, row) in responses.rows().iter().enumerate() {
                if marks.consistent[i] {
                    set.insert(row.participant_id.as_str());
                }
            }
        }
        set.len()
    };

    let pct = |part: usize, whole: usize| {
        if whole == 0 {
            0.0
        } else {
            100.0 * part as f64 / whole as f64
        }
    };

    let rows = response_tally
        .iter()
        .map(|((factor, group), &(resp, cons))| {
            let uniques = participant_tally
                .get(&(factor.clone(), group.clone()))
                .map_or(0, |s| s.len());
            let cons_uniques = consistent_participant_tally
                .get(&(factor.clone(), group.clone()))
                .map_or(0, |s| s.len());
            FactorRow {
                factor: factor.clone(),
                group: group.clone(),
                avg_weekly_responses: resp as f64 / n_weeks as f64,
                pct_responses: pct(resp, total_responses),
                avg_weekly_consistent: cons as f64 / n_weeks as f64,
                pct_consistent_responses: pct(cons, total_consistent),
                participants: uniques,
                pct_participants: pct(uniques, total_participants),
                consistent_participants: cons_uniques,
                pct_consistent_participants: pct(cons_uniques, total_consistent_participants),
            }
        })
        .collect();

    let weekly_counts = weekly
        .iter()
        .enumerate()
        .map(|(w, &(responses_n, consistent_n))| WeeklyCount {
            week: responses.week(w),
            responses: responses_n,
            consistent_responses: consistent_n,
        })
        .collect();

    let mut histogram: BTreeMap<usize, usize> = BTreeMap::new();
    for &count in per_person.values() {
        *histogram.entry(count).or_default() += 1;
    }
    let responses_per_person: Vec<(usize, usize)> = histogram.into_iter().collect();
    let mut cumulative = Vec::with_capacity(responses_per_person.len());
    let mut acc = 0usize;
    for &(count, n) in &responses_per_person {
        acc += n;
        cumulative.push((count, acc as f64 / total_participants.max(1) as f64));
    }

    DemographicSummary {
        rows,
        weekly_counts,
        responses_per_person,
        cumulative_responses_per_person: cumulative,
        unknown_participant_responses: unknown_responses,
    }
}
