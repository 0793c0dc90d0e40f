//! End-to-end acceptance checks. Each test prints one PASS line; a failed
//! assertion reports the criterion as failed.

use chrono::NaiveDate;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use flusight_core::consistency::{mark_consistency, ConsistencyParams};
use flusight_core::data::ResponseRecord;
use flusight_core::data::{parse_reference_population, AgeBand, ResponseTable, Symptoms};
use flusight_core::estimation::{
    compare_groups, estimate_by, estimate_cell, weighted_proportion, EstimateConfig, FactorSplit,
};
use flusight_core::incidents::{assign_incidents, SymptomGrouping, ALL_GROUPINGS};
use flusight_core::raking::{build_margins, rake, MarginSpec, RakeOptions, Scope};
use flusight_core::synth::{
    bootstrap_ci, generate_cohort, incident_oracle, SynthBand, SynthConfig, SynthRegion,
};
use flusight_core::week::WeekCalendar;

fn week0() -> flusight_core::week::SurveyWeek {
    let d = NaiveDate::from_ymd_opt(2020, 5, 3).unwrap();
    WeekCalendar::spanning(d, d).unwrap().week(0)
}

fn symptoms(flags: [bool; 6]) -> Symptoms {
    Symptoms::from_flags(flags)
}

/// Criterion 1: incident assignment matches the brute-force oracle on every
/// response pattern of length 8 over five per-week states.
#[test]
fn acceptance_1_incident_oracle_equivalence() {
    // States: 0 no response, 1 asymptomatic, 2 one symptom (cough),
    // 3 two symptoms (cough + runny nose), 4 cough + fever.
    let state_symptoms = [
        None,
        Some(symptoms([false; 6])),
        Some(symptoms([true, false, false, false, false, false])),
        Some(symptoms([true, false, false, false, true, false])),
        Some(symptoms([true, true, false, false, false, false])),
    ];
    let weeks = 8usize;
    let total = 5usize.pow(weeks as u32);
    let mut checked = 0usize;
    for code in 0..total {
        let mut history = Vec::new();
        let mut c = code;
        for week in 0..weeks {
            let state = c % 5;
            c /= 5;
            if let Some(s) = state_symptoms[state] {
                history.push(ResponseRecord {
                    participant_id: "P".into(),
                    week,
                    symptoms: s,
                });
            }
        }
        for &grouping in &ALL_GROUPINGS {
            let got = assign_incidents(&history, grouping).unwrap();
            let want = incident_oracle(&history, grouping).unwrap();
            assert_eq!(got, want, "pattern code {code}, grouping {grouping}");
            checked += 1;
        }
    }
    assert_eq!(checked, total * 3);
    println!("acceptance 1 incident oracle equivalence ({checked} cases): PASS");
}

/// Criterion 2: the worked 3-week sequence splits into one CLI1+ incident
/// and two CLI2+ incidents.
#[test]
fn acceptance_2_worked_three_week_example() {
    let history = vec![
        ResponseRecord {
            participant_id: "P".into(),
            week: 0,
            symptoms: symptoms([true, true, false, false, false, false]),
        },
        ResponseRecord {
            participant_id: "P".into(),
            week: 1,
            symptoms: symptoms([true, false, false, false, false, false]),
        },
        ResponseRecord {
            participant_id: "P".into(),
            week: 2,
            symptoms: symptoms([true, false, false, false, true, false]),
        },
    ];
    let cli1 = assign_incidents(&history, SymptomGrouping::Cli1Plus).unwrap();
    let cli2 = assign_incidents(&history, SymptomGrouping::Cli2Plus).unwrap();
    assert_eq!(cli1.len(), 1);
    assert_eq!(cli1[0].onset_week, 0);
    assert_eq!(cli1[0].member_weeks, vec![0, 1, 2]);
    assert_eq!(cli2.len(), 2);
    assert_eq!(cli2[0].onset_week, 0);
    assert_eq!(cli2[0].member_weeks, vec![0]);
    assert_eq!(cli2[1].onset_week, 2);
    println!("acceptance 2 worked three-week example: PASS");
}

fn random_table(rng: &mut ChaCha8Rng, participants: usize, weeks: usize) -> ResponseTable {
    let start = NaiveDate::from_ymd_opt(2020, 5, 3).unwrap();
    let mut records = Vec::new();
    for p in 0..participants {
        for w in 0..weeks {
            if rng.gen_bool(0.6) {
                records.push((
                    format!("P{p:03}"),
                    start + chrono::Duration::weeks(w as i64),
                    symptoms([false; 6]),
                    0u64,
                ));
            }
        }
    }
    ResponseTable::from_records(records).unwrap()
}

/// Criterion 3: consistency subsets nest in both parameters on random
/// tables, and the minimal-window grid points agree up to window length.
#[test]
fn acceptance_3_consistency_nesting() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tables = 0usize;
    for _ in 0..1000 {
        let table = random_table(&mut rng, 8, 12);
        if table.is_empty() {
            continue;
        }
        let marks = |w: usize, m: usize| {
            mark_consistency(&table, &ConsistencyParams::new(w, m).unwrap()).consistent
        };
        for w in 1..=8usize {
            for m in 0..w {
                let base = marks(w, m);
                let wider = marks(w + 1, m);
                for i in 0..base.len() {
                    assert!(
                        !wider[i] || base[i],
                        "consistent(W+1,M) must be a subset of consistent(W,M)"
                    );
                }
                if m + 1 < w {
                    let laxer = marks(w, m + 1);
                    for i in 0..base.len() {
                        assert!(
                            !base[i] || laxer[i],
                            "consistent(W,M) must be a subset of consistent(W,M+1)"
                        );
                    }
                }
            }
        }
        // The three minimal grid points all require one response in the
        // window. Past the warm-up weeks they agree except where the window
        // length itself matters (a lone response exactly 2 or 3 weeks
        // back), so they form an inclusion chain there.
        let minimal = [marks(1, 0), marks(2, 1), marks(3, 2)];
        let weeks: Vec<usize> = table.rows().iter().map(|r| r.week).collect();
        for pair in minimal.windows(2) {
            for i in 0..pair[0].len() {
                if weeks[i] < 3 {
                    continue;
                }
                assert!(
                    !pair[0][i] || pair[1][i],
                    "minimal grid points must form an inclusion chain"
                );
            }
        }
        tables += 1;
    }
    println!("acceptance 3 consistency nesting ({tables} tables): PASS");
}

/// Criterion 4: raking reproduces closed-form post-stratification for one
/// margin, hits multi-margin targets within tolerance, and is invariant to
/// reference-count scale.
#[test]
fn acceptance_4_raking() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let opts = RakeOptions::default();

    // Single margin vs closed form.
    for _ in 0..50 {
        let k = rng.gen_range(2..=4usize);
        let n = 30usize;
        let mut assignment: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        for (c, slot) in assignment.iter_mut().enumerate().take(k) {
            *slot = c;
        }
        let targets: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let margin = MarginSpec::new(
            "var",
            (0..k).map(|c| format!("c{c}")).collect(),
            targets.clone(),
        )
        .unwrap();
        let table = rake(
            std::slice::from_ref(&assignment),
            std::slice::from_ref(&margin),
            &opts,
        )
        .unwrap();
        let mut counts = vec![0usize; k];
        for &c in &assignment {
            counts[c] += 1;
        }
        for (i, &c) in assignment.iter().enumerate() {
            let closed = n as f64 * margin.targets[c] / counts[c] as f64;
            assert!(
                (table.weights[i] - closed).abs() < 1e-12,
                "single-margin weight differs from post-stratification"
            );
        }
    }

    // Multi-margin fixtures: every joint cell occupied, random targets.
    for &(ka, kb) in &[(2usize, 2usize), (5usize, 3usize)] {
        for _ in 0..20 {
            let n = 100usize;
            let mut a: Vec<usize> = (0..n).map(|_| rng.gen_range(0..ka)).collect();
            let mut b: Vec<usize> = (0..n).map(|_| rng.gen_range(0..kb)).collect();
            let mut i = 0;
            for ca in 0..ka {
                for cb in 0..kb {
                    a[i] = ca;
                    b[i] = cb;
                    i += 1;
                }
            }
            let mut margin = |name: &str, k: usize| {
                let targets: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
                MarginSpec::new(name, (0..k).map(|c| format!("c{c}")).collect(), targets)
            };
            let margins = vec![margin("a", ka).unwrap(), margin("b", kb).unwrap()];
            let table = rake(&[a.clone(), b.clone()], &margins, &opts).unwrap();
            assert!(table.converged);
            for (assignment, margin) in [(&a, &margins[0]), (&b, &margins[1])] {
                let total: f64 = table.weights.iter().sum();
                for (c, &target) in margin.targets.iter().enumerate() {
                    let got: f64 = assignment
                        .iter()
                        .zip(&table.weights)
                        .filter(|(&cc, _)| cc == c)
                        .map(|(_, &w)| w)
                        .sum::<f64>()
                        / total;
                    assert!(
                        (got - target).abs() < 1e-9,
                        "marginal proportion off target: {got} vs {target}"
                    );
                }
            }
        }
    }

    // Reference-count scale invariance.
    let csv = "region,age_group,count\nNorth,0-4,100\nNorth,5-9,200\nSouth,0-4,50\nSouth,5-9,150\n";
    let reference = parse_reference_population(csv.as_bytes()).unwrap();
    let bands = vec![
        AgeBand::parse("0-4").unwrap(),
        AgeBand::parse("5-9").unwrap(),
    ];
    let m1 = build_margins(&reference, &bands, &Scope::National).unwrap();
    let m2 = build_margins(&reference.scaled(1000.0), &bands, &Scope::National).unwrap();
    for (t1, t2) in m1.targets.iter().zip(&m2.targets) {
        assert!((t1 - t2).abs() < 1e-12);
    }
    println!("acceptance 4 raking vs post-stratification and scale invariance: PASS");
}

/// Criterion 5: the logit CI matches hand values, attains nominal coverage,
/// and agrees with a bootstrap oracle.
#[test]
fn acceptance_5_confidence_intervals() {
    // (a) hand-computed delta-method values.
    let y: Vec<bool> = (0..100).map(|i| i < 50).collect();
    let w = vec![1.0; 100];
    let cell = estimate_cell(
        SymptomGrouping::Ili,
        week0(),
        "overall",
        "all",
        &y,
        &w,
        0.95,
    )
    .unwrap();
    assert!((cell.p_hat - 0.5).abs() < 1e-12);
    assert!(
        (cell.ci_low - 0.4027).abs() < 1e-3,
        "ci_low {}",
        cell.ci_low
    );
    assert!(
        (cell.ci_high - 0.5973).abs() < 1e-3,
        "ci_high {}",
        cell.ci_high
    );

    // (b) empirical coverage over simulated cells.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 500usize;
    let w = vec![1.0; n];
    let ps = [0.02, 0.05, 0.10];
    let mut covered = 0usize;
    let mut cells = 0usize;
    for rep in 0..2000 {
        let p = ps[rep % ps.len()];
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
        let cell = estimate_cell(
            SymptomGrouping::Ili,
            week0(),
            "overall",
            "all",
            &y,
            &w,
            0.95,
        )
        .unwrap();
        if cell.ci_low <= p && p <= cell.ci_high {
            covered += 1;
        }
        cells += 1;
    }
    let coverage = covered as f64 / cells as f64;
    assert!(
        (0.93..=0.97).contains(&coverage),
        "coverage {coverage} outside [0.93, 0.97]"
    );

    // (c) analytic endpoints vs a percentile bootstrap at n = 1000.
    let n = 1000usize;
    let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.05)).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let cell = estimate_cell(
        SymptomGrouping::Ili,
        week0(),
        "overall",
        "all",
        &y,
        &w,
        0.95,
    )
    .unwrap();
    let boot = bootstrap_ci(&y, &w, 2000, 55).unwrap();
    assert!(
        (cell.ci_low - boot.low).abs() / boot.low < 0.10,
        "lower endpoint: analytic {} vs bootstrap {}",
        cell.ci_low,
        boot.low
    );
    assert!(
        (cell.ci_high - boot.high).abs() / boot.high < 0.10,
        "upper endpoint: analytic {} vs bootstrap {}",
        cell.ci_high,
        boot.high
    );
    println!(
        "acceptance 5 confidence intervals (coverage {:.3}): PASS",
        coverage
    );
}

fn bias_config(seed: u64) -> SynthConfig {
    SynthConfig {
        n_participants: 8000,
        weeks: 30,
        seed,
        start_week: None,
        mean_illness_weeks: 2.5,
        p_resp_well: 0.6,
        p_resp_ill: 0.9,
        age_bands: vec![SynthBand {
            band: "0-79".into(),
            onset_prob: 0.05,
            registration: 1.0,
            reference_count: 1_000_000.0,
        }],
        regions: Vec::new(),
    }
}

/// Criterion 6: on a cohort that responds more readily when symptomatic,
/// the consistent-subset estimate sits below the naive estimate.
#[test]
fn acceptance_6_consistency_filter_lowers_estimates() {
    let params = ConsistencyParams::default();
    let mut below = 0usize;
    let mut total = 0usize;
    let mut rel_decreases = Vec::new();
    for seed in 0..20u64 {
        let cohort = generate_cohort(&bias_config(seed)).unwrap();
        let mut config = EstimateConfig::new(Scope::National);
        config.groupings = vec![SymptomGrouping::Cli1Plus];
        config.params = params;
        config.weighted = false;
        config.consistent_only = false;
        let naive = estimate_by(
            &cohort.responses,
            &cohort.participants,
            &cohort.reference,
            &config,
        )
        .unwrap();
        config.consistent_only = true;
        let filtered = estimate_by(
            &cohort.responses,
            &cohort.participants,
            &cohort.reference,
            &config,
        )
        .unwrap();
        for cell in &filtered {
            if cell.week.index < params.window_w {
                continue;
            }
            let base = naive
                .iter()
                .find(|c| c.week.index == cell.week.index)
                .unwrap();
            total += 1;
            if cell.p_hat < base.p_hat {
                below += 1;
            }
            if base.p_hat > 0.0 {
                rel_decreases.push((base.p_hat - cell.p_hat) / base.p_hat);
            }
        }
    }
    let frac_below = below as f64 / total as f64;
    rel_decreases.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = rel_decreases[rel_decreases.len() / 2];
    assert!(
        frac_below >= 0.95,
        "filtered estimate below naive in only {frac_below:.3} of weeks"
    );
    assert!(
        (0.02..=0.15).contains(&median),
        "median relative decrease {median:.4} outside [0.02, 0.15]"
    );
    println!(
        "acceptance 6 reporting-bias correction (below in {:.1}% of weeks, median decrease {:.1}%): PASS",
        100.0 * frac_below,
        100.0 * median
    );
}

/// Criterion 7: when a high-incidence age group is under-represented in the
/// panel, age weighting raises the estimate.
#[test]
fn acceptance_7_reweighting_raises_estimates() {
    let mut above = 0usize;
    let mut total = 0usize;
    for seed in 100..110u64 {
        let config = SynthConfig {
            n_participants: 3000,
            weeks: 25,
            seed,
            start_week: None,
            mean_illness_weeks: 2.0,
            p_resp_well: 0.85,
            p_resp_ill: 0.85,
            age_bands: vec![
                SynthBand {
                    band: "0-14".into(),
                    onset_prob: 0.09,
                    registration: 0.1,
                    reference_count: 1_500_000.0,
                },
                SynthBand {
                    band: "15-79".into(),
                    onset_prob: 0.03,
                    registration: 0.9,
                    reference_count: 1_500_000.0,
                },
            ],
            regions: Vec::new(),
        };
        let cohort = generate_cohort(&config).unwrap();
        let mut est = EstimateConfig::new(Scope::National);
        est.groupings = vec![SymptomGrouping::Cli1Plus];
        est.consistent_only = false;
        est.weighted = false;
        let unweighted = estimate_by(
            &cohort.responses,
            &cohort.participants,
            &cohort.reference,
            &est,
        )
        .unwrap();
        est.weighted = true;
        let weighted = estimate_by(
            &cohort.responses,
            &cohort.participants,
            &cohort.reference,
            &est,
        )
        .unwrap();
        for cell in &weighted {
            let base = unweighted
                .iter()
                .find(|c| c.week.index == cell.week.index)
                .unwrap();
            total += 1;
            if cell.p_hat > base.p_hat {
                above += 1;
            }
        }
    }
    let frac = above as f64 / total as f64;
    assert!(
        frac >= 0.95,
        "weighted estimate above unweighted in only {frac:.3} of weeks"
    );
    println!(
        "acceptance 7 self-selection reweighting (above in {:.1}% of weeks): PASS",
        100.0 * frac
    );
}

/// Criterion 8: the two-group test holds its size under the null and
/// detects a 2% vs 5% difference at n = 2000 per group.
#[test]
fn acceptance_8_two_group_test_calibration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 2000usize;
    let w = vec![1.0; n];
    let simulate =
        |rng: &mut ChaCha8Rng, p: f64| -> Vec<bool> { (0..n).map(|_| rng.gen_bool(p)).collect() };
    let cell = |y: &[bool]| {
        estimate_cell(SymptomGrouping::Ili, week0(), "location", "x", y, &w, 0.95).unwrap()
    };

    let mut null_hits = 0usize;
    let null_weeks = 2000usize;
    for _ in 0..null_weeks {
        let a = cell(&simulate(&mut rng, 0.05));
        let b = cell(&simulate(&mut rng, 0.05));
        let cmp = compare_groups(&a, &b);
        assert!(!cmp.indeterminate);
        if cmp.significant {
            null_hits += 1;
        }
    }
    let size = null_hits as f64 / null_weeks as f64;
    assert!(
        (0.03..=0.07).contains(&size),
        "null rejection rate {size} outside [0.03, 0.07]"
    );

    let mut power_hits = 0usize;
    let power_weeks = 500usize;
    for _ in 0..power_weeks {
        let a = cell(&simulate(&mut rng, 0.02));
        let b = cell(&simulate(&mut rng, 0.05));
        if compare_groups(&a, &b).significant {
            power_hits += 1;
        }
    }
    let power = power_hits as f64 / power_weeks as f64;
    assert!(power > 0.90, "power {power} not above 0.90");
    println!(
        "acceptance 8 two-group test (size {:.3}, power {:.3}): PASS",
        size, power
    );
}

/// Weight-scale invariance backing the determinism criterion: scaling all
/// weights by a constant leaves the estimate unchanged.
#[test]
fn acceptance_weight_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let y: Vec<bool> = (0..200).map(|_| rng.gen_bool(0.1)).collect();
    let w: Vec<f64> = (0..200).map(|_| rng.gen_range(0.5..2.0)).collect();
    let scaled: Vec<f64> = w.iter().map(|x| x * 1000.0).collect();
    let p1 = weighted_proportion(&y, &w);
    let p2 = weighted_proportion(&y, &scaled);
    assert!((p1 - p2).abs() < 1e-12);
    println!("acceptance weight-scale invariance: PASS");
}

/// The estimation pipeline respects the location split used by criterion 8's
/// CLI counterpart: the split produces one cell per scope per week.
#[test]
fn acceptance_location_split_shape() {
    let config = SynthConfig {
        regions: vec![
            SynthRegion {
                name: "North".into(),
                share: 0.5,
                incidence_multiplier: 1.0,
            },
            SynthRegion {
                name: "South".into(),
                share: 0.5,
                incidence_multiplier: 1.0,
            },
        ],
        ..SynthConfig::example()
    };
    let cohort = generate_cohort(&config).unwrap();
    let mut est = EstimateConfig::new(Scope::Regions(vec!["North".into()]));
    est.groupings = vec![SymptomGrouping::Cli1Plus];
    est.split = FactorSplit::Locations(vec![
        Scope::Regions(vec!["North".into()]),
        Scope::Regions(vec!["South".into()]),
    ]);
    est.trim_warmup = true;
    let cells = estimate_by(
        &cohort.responses,
        &cohort.participants,
        &cohort.reference,
        &est,
    )
    .unwrap();
    assert!(!cells.is_empty());
    for c in &cells {
        assert_eq!(c.factor_name, "location");
    }
    println!("acceptance location split shape: PASS");
}
