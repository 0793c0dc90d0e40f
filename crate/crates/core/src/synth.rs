//! Synthetic cohort generation with controllable reporting and
//! self-selection biases, plus independent oracles (bootstrap interval,
//! naive incident scan) used for validation. Generation uses ChaCha8, a
//! portable seedable generator, so outputs reproduce across platforms.

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{
    AgeBand, Participant, ParticipantTable, ReferencePopulation, ResponseRecord, ResponseTable,
    Symptoms,
};
use crate::error::{Error, Result};
use crate::estimation::weighted_proportion;
use crate::incidents::{Incident, SymptomGrouping, ALL_GROUPINGS};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthBand {
    /// Age band label, e.g. "0-4" or a union like "0-9"; open bands like
    /// "85+" are allowed.
    pub band: String,
    /// Weekly probability of a new illness onset while well.
    pub onset_prob: f64,
    /// Share of the cohort registered from this band (normalized).
    pub registration: f64,
    /// Reference population count for this band (split evenly across its
    /// 5-year groups).
    pub reference_count: f64,
}

fn default_share() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthRegion {
    pub name: String,
    #[serde(default = "default_share")]
    pub share: f64,
    /// Multiplies every band's onset probability for this region.
    #[serde(default = "default_share")]
    pub incidence_multiplier: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_participants: usize,
    pub weeks: usize,
    pub seed: u64,
    /// Sunday ending the first survey week; defaults to 2020-05-03.
    #[serde(default)]
    pub start_week: Option<NaiveDate>,
    pub mean_illness_weeks: f64,
    /// Response probability in a week with no symptoms.
    pub p_resp_well: f64,
    /// Response probability in a symptomatic week.
    pub p_resp_ill: f64,
    pub age_bands: Vec<SynthBand>,
    #[serde(default)]
    pub regions: Vec<SynthRegion>,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64, what: &str| {
            if !(0.0..=1.0).contains(&p) {
                Err(Error::Config(format!("{what} must be in [0,1], got {p}")))
            } else {
                Ok(())
            }
        };
        if self.n_participants == 0 || self.weeks == 0 {
            return Err(Error::Config("cohort needs participants and weeks".into()));
        }
        if self.mean_illness_weeks < 1.0 {
            return Err(Error::Config("mean_illness_weeks must be >= 1".into()));
        }
        prob(self.p_resp_well, "p_resp_well")?;
        prob(self.p_resp_ill, "p_resp_ill")?;
        if self.age_bands.is_empty() {
            return Err(Error::Config("at least one age band required".into()));
        }
        for band in &self.age_bands {
            AgeBand::parse(&band.band)?;
            prob(band.onset_prob, "onset_prob")?;
            if band.registration < 0.0 || band.reference_count < 0.0 {
                return Err(Error::Config(
                    "registration shares and reference counts must be non-negative".into(),
                ));
            }
        }
        if self.age_bands.iter().map(|b| b.registration).sum::<f64>() <= 0.0 {
            return Err(Error::Config("registration shares sum to zero".into()));
        }
        for region in &self.regions {
            if region.share < 0.0 {
                return Err(Error::Config("region shares must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// A small demonstration config: mild symptom-reporting bias, one
    /// region, three bands.
    pub fn example() -> Self {
        SynthConfig {
            n_participants: 2000,
            weeks: 30,
            seed: 1,
            start_week: None,
            mean_illness_weeks: 2.0,
            p_resp_well: 0.85,
            p_resp_ill: 0.9,
            age_bands: vec![
                SynthBand {
                    band: "0-14".into(),
                    onset_prob: 0.08,
                    registration: 0.15,
                    reference_count: 900_000.0,
                },
                SynthBand {
                    band: "15-64".into(),
                    onset_prob: 0.04,
                    registration: 0.6,
                    reference_count: 3_200_000.0,
                },
                SynthBand {
                    band: "65+".into(),
                    onset_prob: 0.03,
                    registration: 0.25,
                    reference_count: 800_000.0,
                },
            ],
            regions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruthRow {
    pub week: usize,
    pub grouping: SymptomGrouping,
    /// Fraction of the full cohort whose complete (gap-free) symptom
    /// history marks this week as an onset.
    pub true_incidence: f64,
}

#[derive(Debug)]
pub struct SynthCohort {
    pub responses: ResponseTable,
    pub participants: ParticipantTable,
    pub reference: ReferencePopulation,
    pub ground_truth: Vec<GroundTruthRow>,
    pub start_week: NaiveDate,
}

const ETHNICITIES: [&str; 4] = ["GroupA", "GroupB", "GroupC", "GroupD"];

fn sample_symptoms(rng: &mut ChaCha8Rng) -> Symptoms {
    // Symptom count distribution, then symptoms chosen uniformly without
    // replacement. Cough and fever co-occur whenever both are drawn, so
    // every grouping sees realistic rates.
    let count_weights = [0.35, 0.30, 0.20, 0.10, 0.04, 0.01];
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut count = 1;
    for (i, w) in count_weights.iter().enumerate() {
        acc += w;
        if u <= acc {
            count = i + 1;
            break;
        }
    }
    let mut indices: Vec<usize> = (0..6).collect();
    indices.shuffle(rng);
    let mut flags = [false; 6];
    for &i in indices.iter().take(count) {
        flags[i] = true;
    }
    Symptoms::from_flags(flags)
}

fn sample_duration(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    // Geometric on {1, 2, ...} with mean `mean`.
    if mean <= 1.0 {
        return 1;
    }
    let q = 1.0 / mean;
    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    (u.ln() / (1.0 - q).ln()).ceil().max(1.0) as usize
}

fn pick_weighted(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u: f64 = rng.gen_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Generates a deterministic cohort: same seed, byte-identical output.
pub fn generate_cohort(config: &SynthConfig) -> Result<SynthCohort> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start = config
        .start_week
        .unwrap_or_else(|| NaiveDate::from_ymd_opt(2020, 5, 3).unwrap());
    if !crate::week::is_sunday(start) {
        return Err(Error::Config(format!("start_week {start} is not a Sunday")));
    }

    let bands: Vec<AgeBand> = config
        .age_bands
        .iter()
        .map(|b| AgeBand::parse(&b.band))
        .collect::<Result<_>>()?;
    let registration: Vec<f64> = config.age_bands.iter().map(|b| b.registration).collect();
    let regions: Vec<SynthRegion> = if config.regions.is_empty() {
        vec![SynthRegion {
            name: "National".into(),
            share: 1.0,
            incidence_multiplier: 1.0,
        }]
    } else {
        config.regions.clone()
    };
    let region_shares: Vec<f64> = regions.iter().map(|r| r.share).collect();

    let mut reference = ReferencePopulation::new();
    let region_total: f64 = region_shares.iter().sum();
    for (band_cfg, band) in config.age_bands.iter().zip(&bands) {
        let groups = band.five_year_groups(85);
        for region in &regions {
            let share = region.share / region_total;
            for group in &groups {
                reference.insert(
                    &region.name,
                    *group,
                    band_cfg.reference_count * share / groups.len() as f64,
                )?;
            }
        }
    }

    let mut participants = Vec::with_capacity(config.n_participants);
    let mut records = Vec::new();
    // Complete symptom panels for ground-truth classification.
    let mut full_panels: Vec<Vec<Option<Symptoms>>> = Vec::with_capacity(config.n_participants);

    for i in 0..config.n_participants {
        let pid = format!("P{i:05}");
        let band_idx = pick_weighted(&mut rng, &registration);
        let band = bands[band_idx];
        let age_top = band.upper.unwrap_or(band.lower + 10);
        let age = rng.gen_range(band.lower..=age_top);
        let region_idx = pick_weighted(&mut rng, &region_shares);
        let region = &regions[region_idx];
        let gender = if rng.gen_bool(0.5) { "F" } else { "M" };
        let ethnicity = ETHNICITIES[rng.gen_range(0..ETHNICITIES.len())];
        participants.push(Participant {
            participant_id: pid.clone(),
            age_years: Some(age),
            gender: Some(gender.to_string()),
            ethnicity: Some(ethnicity.to_string()),
            region: Some(region.name.clone()),
            postcode: None,
        });

        let onset_prob =
            (config.age_bands[band_idx].onset_prob * region.incidence_multiplier).min(1.0);
        let mut remaining_ill = 0usize;
        let mut panel: Vec<Option<Symptoms>> = Vec::with_capacity(config.weeks);
        for week in 0..config.weeks {
            if remaining_ill == 0 && rng.gen_bool(onset_prob) {
                remaining_ill = sample_duration(&mut rng, config.mean_illness_weeks);
            }
            let symptoms = if remaining_ill > 0 {
                remaining_ill -= 1;
                Some(sample_symptoms(&mut rng))
            } else {
                None
            };
            panel.push(symptoms);

            let p_resp = if symptoms.is_some() {
                config.p_resp_ill
            } else {
                config.p_resp_well
            };
            if rng.gen_bool(p_resp) {
                let date = start + chrono::Duration::weeks(week as i64);
                records.push((pid.clone(), date, symptoms.unwrap_or_default(), 0));
            }
        }
        full_panels.push(panel);
    }

    // Anchor the calendar so sparse response patterns cannot shrink it.
    records.push(("CAL".into(), start, Symptoms::default(), 0));
    records.push((
        "CAL".into(),
        start + chrono::Duration::weeks(config.weeks as i64 - 1),
        Symptoms::default(),
        0,
    ));
    participants.push(Participant {
        participant_id: "CAL".into(),
        age_years: None,
        gender: None,
        ethnicity: None,
        region: None,
        postcode: None,
    });

    let ground_truth = ground_truth_from_panels(&full_panels, config.weeks, config.n_participants);
    Ok(SynthCohort {
        responses: ResponseTable::from_records(records)?,
        participants: ParticipantTable::from_participants(participants)?,
        reference,
        ground_truth,
        start_week: start,
    })
}

fn ground_truth_from_panels(
    panels: &[Vec<Option<Symptoms>>],
    weeks: usize,
    n: usize,
) -> Vec<GroundTruthRow> {
    let mut rows = Vec::new();
    for grouping in ALL_GROUPINGS {
        let mut onsets = vec![0usize; weeks];
        for panel in panels {
            let mut prev_qualified = false;
            for (week, symptoms) in panel.iter().enumerate() {
                let qualifies = symptoms.is_some_and(|s| grouping.meets(&s));
                if qualifies && !prev_qualified {
                    onsets[week] += 1;
                }
                prev_qualified = qualifies;
            }
        }
        for (week, &count) in onsets.iter().enumerate() {
            rows.push(GroundTruthRow {
                week,
                grouping,
                true_incidence: count as f64 / n as f64,
            });
        }
    }
    rows
}

/// Percentile bootstrap interval for a weighted proportion.
#[derive(Debug, Clone, Copy)]
pub struct BootstrapCi {
    pub low: f64,
    pub high: f64,
    /// Resamples where every outcome was identical.
    pub degenerate_resamples: usize,
}

pub fn bootstrap_ci(y: &[bool], w: &[f64], replicates: usize, seed: u64) -> Result<BootstrapCi> {
    if y.len() < 2 {
        return Err(Error::Contract("bootstrap requires n >= 2".into()));
    }
    if replicates < 1000 {
        return Err(Error::Contract(
            "bootstrap requires >= 1000 replicates".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = y.len();
    let mut estimates = Vec::with_capacity(replicates);
    let mut degenerate = 0usize;
    let mut ry = vec![false; n];
    let mut rw = vec![0.0f64; n];
    for _ in 0..replicates {
        for k in 0..n {
            let i = rng.gen_range(0..n);
            ry[k] = y[i];
            rw[k] = w[i];
        }
        if ry.iter().all(|&v| v == ry[0]) {
            degenerate += 1;
        }
        estimates.push(weighted_proportion(&ry, &rw));
    }
    estimates.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let quantile = |q: f64| {
        let pos = q * (estimates.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        estimates[lo] + (pos - lo as f64) * (estimates[hi] - estimates[lo])
    };
    Ok(BootstrapCi {
        low: quantile(0.025),
        high: quantile(0.975),
        degenerate_resamples: degenerate,
    })
}

/// Naive re-implementation of incident classification over a dense
/// week-state array, for cross-validation against `assign_incidents`.
pub fn incident_oracle(
    history: &[ResponseRecord],
    grouping: SymptomGrouping,
) -> Result<Vec<Incident>> {
    if history.is_empty() {
        return Ok(Vec::new());
    }
    let participant_id = history[0].participant_id.clone();
    let max_week = history.iter().map(|r| r.week).max().unwrap();

    #[derive(Clone, Copy, PartialEq)]
    enum State {
        NoResponse,
        NotQualifying,
        Qualifying,
    }
    let mut states = vec![State::NoResponse; max_week + 1];
    for record in history {
        if states[record.week] != State::NoResponse {
            return Err(Error::Contract("duplicate week in history".into()));
        }
        states[record.week] = if grouping.meets(&record.symptoms) {
            State::Qualifying
        } else {
            State::NotQualifying
        };
    }

    let mut incidents: Vec<Incident> = Vec::new();
    let mut in_run = false;
    for week in 0..states.len() {
        match states[week] {
            State::Qualifying => {
                if in_run {
                    incidents.last_mut().unwrap().member_weeks.push(week);
                } else {
                    incidents.push(Incident {
                        incident_id: format!("{participant_id}:{grouping}:{week}"),
                        participant_id: participant_id.clone(),
                        grouping,
                        onset_week: week,
                        member_weeks: vec![week],
                        bridged_weeks: Vec::new(),
                    });
                    in_run = true;
                }
            }
            State::NotQualifying => in_run = false,
            State::NoResponse => {
                if in_run {
                    // A run survives exactly one missing week, and only if
                    // the next week qualifies.
                    let next_qualifies =
                        week + 1 < states.len() && states[week + 1] == State::Qualifying;
                    if next_qualifies {
                        incidents.last_mut().unwrap().bridged_weeks.push(week);
                    } else {
                        in_run = false;
                    }
                }
            }
        }
    }
    Ok(incidents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{write_responses, Symptoms};
    use crate::incidents::assign_incidents;

    #[test]
    fn same_seed_is_byte_identical() {
        let config = SynthConfig {
            n_participants: 50,
            weeks: 10,
            ..SynthConfig::example()
        };
        let a = generate_cohort(&config).unwrap();
        let b = generate_cohort(&config).unwrap();
        let mut out_a = Vec::new();
        let mut out_b = Vec::new();
        write_responses(&a.responses, &mut out_a).unwrap();
        write_responses(&b.responses, &mut out_b).unwrap();
        assert_eq!(out_a, out_b);
    }

    #[test]
    fn different_seed_differs() {
        let config = SynthConfig {
            n_participants: 50,
            weeks: 10,
            ..SynthConfig::example()
        };
        let other = SynthConfig {
            seed: 2,
            ..config.clone()
        };
        let a = generate_cohort(&config).unwrap();
        let b = generate_cohort(&other).unwrap();
        let mut out_a = Vec::new();
        let mut out_b = Vec::new();
        write_responses(&a.responses, &mut out_a).unwrap();
        write_responses(&b.responses, &mut out_b).unwrap();
        assert_ne!(out_a, out_b);
    }

    #[test]
    fn full_panel_when_response_probability_one() {
        let config = SynthConfig {
            n_participants: 20,
            weeks: 8,
            p_resp_well: 1.0,
            p_resp_ill: 1.0,
            ..SynthConfig::example()
        };
        let cohort = generate_cohort(&config).unwrap();
        // 20 participants x 8 weeks plus the two calendar anchor rows.
        assert_eq!(cohort.responses.len(), 20 * 8 + 2);
    }

    #[test]
    fn invalid_probabilities_rejected() {
        let config = SynthConfig {
            p_resp_well: 1.5,
            ..SynthConfig::example()
        };
        assert!(generate_cohort(&config).is_err());
    }

    #[test]
    fn oracle_agrees_on_worked_examples() {
        let record = |week: usize, flags: [bool; 6]| ResponseRecord {
            participant_id: "P1".into(),
            week,
            symptoms: Symptoms::from_flags(flags),
        };
        let histories = vec![
            vec![
                record(0, [true, true, false, false, false, false]),
                record(1, [true, false, false, false, false, false]),
                record(2, [true, false, false, false, true, false]),
            ],
            vec![
                record(0, [true, false, false, false, false, false]),
                record(2, [true, false, false, false, false, false]),
            ],
            vec![
                record(0, [true, false, false, false, false, false]),
                record(3, [true, false, false, false, false, false]),
            ],
        ];
        for history in histories {
            for grouping in ALL_GROUPINGS {
                let expected = assign_incidents(&history, grouping).unwrap();
                let oracle = incident_oracle(&history, grouping).unwrap();
                assert_eq!(expected.len(), oracle.len());
                for (a, b) in expected.iter().zip(&oracle) {
                    assert_eq!(a.onset_week, b.onset_week);
                    assert_eq!(a.member_weeks, b.member_weeks);
                    assert_eq!(a.bridged_weeks, b.bridged_weeks);
                }
            }
        }
    }

    #[test]
    fn bootstrap_scale_invariance_and_degenerate_width() {
        let y: Vec<bool> = (0..100).map(|i| i < 10).collect();
        let w = vec![1.0; 100];
        let a = bootstrap_ci(&y, &w, 1000, 7).unwrap();
        let w2 = vec![2.0; 100];
        let b = bootstrap_ci(&y, &w2, 1000, 7).unwrap();
        assert_eq!((a.low, a.high), (b.low, b.high));

        let y = vec![true; 10];
        let ci = bootstrap_ci(&y, &[1.0; 10], 1000, 7).unwrap();
        assert_eq!((ci.low, ci.high), (1.0, 1.0));
        assert_eq!(ci.degenerate_resamples, 1000);
    }
}
