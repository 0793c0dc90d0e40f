//! Symptom groupings and incident classification.
//!
//! A qualifying week opens or continues an incident. Two qualifying weeks
//! separated by exactly one no-response week belong to the same incident
//! (the interstitial week is bridged); two or more missing weeks, or any
//! responded week that does not qualify, start a new incident. The first
//! qualifying week of each incident is its onset.

use std::fmt;

use crate::data::{ResponseRecord, ResponseTable, Symptoms};
use crate::error::{Error, Result};

/// A predicate over the six symptom flags. The three built-in groupings
/// nest: ILI implies CLI2+, which implies CLI1+.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SymptomGrouping {
    /// Any one or more symptoms.
    Cli1Plus,
    /// Any two or more symptoms.
    Cli2Plus,
    /// At least both cough and fever.
    Ili,
}

pub const ALL_GROUPINGS: [SymptomGrouping; 3] = [
    SymptomGrouping::Cli1Plus,
    SymptomGrouping::Cli2Plus,
    SymptomGrouping::Ili,
];

impl SymptomGrouping {
    pub fn meets(&self, symptoms: &Symptoms) -> bool {
        match self {
            SymptomGrouping::Cli1Plus => symptoms.count() >= 1,
            SymptomGrouping::Cli2Plus => symptoms.count() >= 2,
            SymptomGrouping::Ili => symptoms.cough && symptoms.fever,
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "CLI1+" => Ok(SymptomGrouping::Cli1Plus),
            "CLI2+" => Ok(SymptomGrouping::Cli2Plus),
            "ILI" => Ok(SymptomGrouping::Ili),
            other => Err(Error::Config(format!(
                "unknown symptom grouping '{other}' (expected CLI1+, CLI2+, or ILI)"
            ))),
        }
    }
}

impl fmt::Display for SymptomGrouping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SymptomGrouping::Cli1Plus => "CLI1+",
            SymptomGrouping::Cli2Plus => "CLI2+",
            SymptomGrouping::Ili => "ILI",
        };
        f.write_str(name)
    }
}

pub fn meets_grouping(report: &ResponseRecord, grouping: SymptomGrouping) -> bool {
    grouping.meets(&report.symptoms)
}

/// A maximal run of weeks meeting one grouping for one participant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Incident {
    /// Deterministic: (participant, grouping, onset week index).
    pub incident_id: String,
    pub participant_id: String,
    pub grouping: SymptomGrouping,
    pub onset_week: usize,
    /// Qualifying weeks of the run, in order. Bridged no-response weeks are
    /// tracked separately and never contribute to numerators or denominators.
    pub member_weeks: Vec<usize>,
    pub bridged_weeks: Vec<usize>,
}

/// Partitions a participant's qualifying weeks into incidents.
///
/// `history` must be that participant's responses sorted by week with no
/// duplicate weeks (the layout `ResponseTable` guarantees).
pub fn assign_incidents(
    history: &[ResponseRecord],
    grouping: SymptomGrouping,
) -> Result<Vec<Incident>> {
    for pair in history.windows(2) {
        if pair[1].week <= pair[0].week {
            return Err(Error::Contract(
                "history must be sorted by week with no duplicates".into(),
            ));
        }
        if pair[1].participant_id != pair[0].participant_id {
            return Err(Error::Contract(
                "history must belong to a single participant".into(),
            ));
        }
    }

    let mut incidents: Vec<Incident> = Vec::new();
    let mut prev_week: Option<usize> = None; // last responded week
    for record in history {
        if !grouping.meets(&record.symptoms) {
            prev_week = Some(record.week);
            continue;
        }
        let week = record.week;
        let continues = match incidents.last() {
            Some(last) => {
                let last_member = *last.member_weeks.last().unwrap();
                // Adjacent qualifying weeks, or a single unresponded week in
                // between. A responded non-qualifying week always breaks.
                let no_interstitial_response = prev_week == Some(last_member);
                week == last_member + 1 || (week == last_member + 2 && no_interstitial_response)
            }
            None => false,
        };
        if continues {
            let last = incidents.last_mut().unwrap();
            let last_member = *last.member_weeks.last().unwrap();
            if week == last_member + 2 {
                last.bridged_weeks.push(last_member + 1);
            }
            last.member_weeks.push(week);
        } else {
            incidents.push(Incident {
                incident_id: format!("{}:{}:{}", record.participant_id, grouping, week),
                participant_id: record.participant_id.clone(),
                grouping,
                onset_week: week,
                member_weeks: vec![week],
                bridged_weeks: Vec::new(),
            });
        }
        prev_week = Some(week);
    }
    Ok(incidents)
}

/// Per-response onset flags, aligned with `responses.rows()`.
#[derive(Debug, Clone)]
pub struct OnsetTable {
    pub grouping: SymptomGrouping,
    pub is_onset: Vec<bool>,
}

/// Marks `is_onset` true exactly on onset weeks of `assign_incidents`.
pub fn mark_onsets(responses: &ResponseTable, grouping: SymptomGrouping) -> Result<OnsetTable> {
    let mut is_onset = vec![false; responses.len()];
    let mut offset = 0usize;
    for (_, history) in responses.participants() {
        let incidents = assign_incidents(history, grouping)?;
        let mut onset_iter = incidents.iter().map(|i| i.onset_week).peekable();
        for (i, record) in history.iter().enumerate() {
            if onset_iter.peek() == Some(&record.week) {
                is_onset[offset + i] = true;
                onset_iter.next();
            }
        }
        offset += history.len();
    }
    Ok(OnsetTable { grouping, is_onset })
}
