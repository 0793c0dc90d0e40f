//! Weighted incidence proportions with design-based 95% confidence
//! intervals on the logit scale, per-cell estimation drivers, two-group
//! significance tests, and adjustment-effect comparisons.

use statrs::distribution::{Beta, ContinuousCDF, Normal};

use crate::consistency::{mark_consistency, ConsistencyMark, ConsistencyParams};
use crate::data::{AgeBand, ParticipantTable, ReferencePopulation, ResponseTable};
use crate::error::{Error, Result};
use crate::incidents::{mark_onsets, SymptomGrouping};
use crate::raking::{weekly_weights, RakeOptions, Scope};
use crate::week::SurveyWeek;

/// Normal 97.5% quantile, pinned so cross-implementation diffs are
/// explainable.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiMethod {
    /// Wald interval on the logit scale, back-transformed.
    LogitWald,
    /// Exact binomial (Clopper-Pearson) on the effective sample size, used
    /// when the weighted proportion is exactly 0 or 1.
    ExactFallback,
    /// Single-response cell: variance undefined, no interval.
    NoCi,
}

impl CiMethod {
    pub fn label(&self) -> &'static str {
        match self {
            CiMethod::LogitWald => "logit_wald",
            CiMethod::ExactFallback => "exact_fallback",
            CiMethod::NoCi => "no_ci",
        }
    }
}

/// One estimated cell: weighted incidence proportion with its interval.
#[derive(Debug, Clone)]
pub struct EstimateCell {
    pub grouping: SymptomGrouping,
    pub week: SurveyWeek,
    pub factor_name: String,
    pub factor_value: String,
    pub n: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub sum_w: f64,
    pub sum_w2: f64,
    pub method: CiMethod,
}

/// Weighted mean of binary onset flags: sum(w*y)/sum(w).
pub fn weighted_proportion(y: &[bool], w: &[f64]) -> f64 {
    debug_assert_eq!(y.len(), w.len());
    let sum_w: f64 = w.iter().sum();
    let sum_wy: f64 = y.iter().zip(w).filter(|(&y, _)| y).map(|(_, &w)| w).sum();
    sum_wy / sum_w
}

/// With-replacement linearized variance of the weighted proportion,
/// treating the weights as fixed. Undefined for n < 2.
pub fn linearized_variance(y: &[bool], w: &[f64], p_hat: f64) -> Option<f64> {
    let n = y.len();
    if n < 2 {
        return None;
    }
    let sum_w: f64 = w.iter().sum();
    let z: Vec<f64> = y
        .iter()
        .zip(w)
        .map(|(&y, &w)| w * ((y as u8 as f64) - p_hat) / sum_w)
        .collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    let ss: f64 = z.iter().map(|zi| (zi - mean).powi(2)).sum();
    Some(n as f64 / (n as f64 - 1.0) * ss)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn inv_logit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn normal_quantile(q: f64) -> f64 {
    if (q - 0.975).abs() < 1e-12 {
        Z_975
    } else {
        Normal::new(0.0, 1.0).unwrap().inverse_cdf(q)
    }
}

/// Wald interval on the logit scale, back-transformed. Requires
/// 0 < p_hat < 1; degenerate proportions go through `exact_ci`.
pub fn logit_ci(p_hat: f64, var: f64, level: f64) -> (f64, f64) {
    if var == 0.0 {
        return (p_hat, p_hat);
    }
    let se_logit = var.sqrt() / (p_hat * (1.0 - p_hat));
    let z = normal_quantile(0.5 + level / 2.0);
    (
        inv_logit(logit(p_hat) - z * se_logit),
        inv_logit(logit(p_hat) + z * se_logit),
    )
}

/// Clopper-Pearson interval on the effective sample size
/// n_eff = (sum w)^2 / sum w^2, for cells where p_hat is exactly 0 or 1.
pub fn exact_ci(p_hat: f64, sum_w: f64, sum_w2: f64, level: f64) -> (f64, f64) {
    let n_eff = sum_w * sum_w / sum_w2;
    let x = p_hat * n_eff;
    let alpha = 1.0 - level;
    // Degenerate cells have x = 0 or x = n_eff, where the Clopper-Pearson
    // beta quantiles reduce to closed forms. Interior x falls back to the
    // numeric beta quantile.
    let low = if x <= 0.0 {
        0.0
    } else if x >= n_eff {
        (alpha / 2.0).powf(1.0 / n_eff)
    } else {
        Beta::new(x, n_eff - x + 1.0)
            .map(|b| b.inverse_cdf(alpha / 2.0))
            .unwrap_or(0.0)
    };
    let high = if x >= n_eff {
        1.0
    } else if x <= 0.0 {
        1.0 - (alpha / 2.0).powf(1.0 / n_eff)
    } else {
        Beta::new(x + 1.0, n_eff - x)
            .map(|b| b.inverse_cdf(1.0 - alpha / 2.0))
            .unwrap_or(1.0)
    };
    (low, high)
}

/// Builds one estimate cell from onset flags and weights, or `None` for an
/// empty cell.
pub fn estimate_cell(
    grouping: SymptomGrouping,
    week: SurveyWeek,
    factor_name: &str,
    factor_value: &str,
    y: &[bool],
    w: &[f64],
    level: f64,
) -> Option<EstimateCell> {
    let n = y.len();
    if n == 0 {
        return None;
    }
    let sum_w: f64 = w.iter().sum();
    let sum_w2: f64 = w.iter().map(|w| w * w).sum();
    let p_hat = weighted_proportion(y, w);
    let (ci_low, ci_high, method) = match linearized_variance(y, w, p_hat) {
        None => (p_hat, p_hat, CiMethod::NoCi),
        Some(var) => {
            if p_hat <= 0.0 || p_hat >= 1.0 {
                let (lo, hi) = exact_ci(p_hat, sum_w, sum_w2, level);
                (lo, hi, CiMethod::ExactFallback)
            } else {
                let (lo, hi) = logit_ci(p_hat, var, level);
                (lo, hi, CiMethod::LogitWald)
            }
        }
    };
    Some(EstimateCell {
        grouping,
        week,
        factor_name: factor_name.to_string(),
        factor_value: factor_value.to_string(),
        n,
        p_hat,
        ci_low,
        ci_high,
        sum_w,
        sum_w2,
        method,
    })
}

/// Result of a two-group significance test on the logit scale.
#[derive(Debug, Clone)]
pub struct GroupComparison {
    pub cell_a: EstimateCell,
    pub cell_b: EstimateCell,
    pub z: f64,
    pub p_value: f64,
    pub significant: bool,
    /// True when either proportion is degenerate and the test is undefined.
    pub indeterminate: bool,
}

/// Tests the difference of two disjoint cells' proportions on the logit
/// scale. Degenerate proportions yield an indeterminate comparison.
pub fn compare_groups(cell_a: &EstimateCell, cell_b: &EstimateCell) -> GroupComparison {
    let degenerate =
        |c: &EstimateCell| c.p_hat <= 0.0 || c.p_hat >= 1.0 || c.method == CiMethod::NoCi;
    if degenerate(cell_a) || degenerate(cell_b) {
        return GroupComparison {
            cell_a: cell_a.clone(),
            cell_b: cell_b.clone(),
            z: f64::NAN,
            p_value: f64::NAN,
            significant: false,
            indeterminate: true,
        };
    }
    let se_logit = |c: &EstimateCell| {
        // Recover var from the stored interval half-width on the logit scale.
        (logit(c.ci_high) - logit(c.p_hat)) / Z_975
    };
    let (se_a, se_b) = (se_logit(cell_a), se_logit(cell_b));
    let z = (logit(cell_a.p_hat) - logit(cell_b.p_hat)) / (se_a * se_a + se_b * se_b).sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let p_value = 2.0 * (1.0 - normal.cdf(z.abs()));
    GroupComparison {
        cell_a: cell_a.clone(),
        cell_b: cell_b.clone(),
        z,
        p_value,
        significant: p_value < 0.05,
        indeterminate: false,
    }
}

/// Factor split applied on top of (grouping, week).
#[derive(Debug, Clone, Default)]
pub enum FactorSplit {
    #[default]
    None,
    AgeBands(Vec<AgeBand>),
    Locations(Vec<Scope>),
}

#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub groupings: Vec<SymptomGrouping>,
    pub params: ConsistencyParams,
    /// Raking bands (default 5-year groups).
    pub bands: Vec<AgeBand>,
    /// Base analysis scope when no location split is requested.
    pub scope: Scope,
    pub split: FactorSplit,
    pub level: f64,
    pub rake_opts: RakeOptions,
    /// Apply age weighting.
    pub weighted: bool,
    /// Restrict to the consistent-response subset.
    pub consistent_only: bool,
    /// Drop warm-up weeks from output entirely.
    pub trim_warmup: bool,
}

impl EstimateConfig {
    pub fn new(scope: Scope) -> Self {
        EstimateConfig {
            groupings: crate::incidents::ALL_GROUPINGS.to_vec(),
            params: ConsistencyParams::default(),
            bands: crate::data::default_bands(),
            scope,
            split: FactorSplit::None,
            level: 0.95,
            rake_opts: RakeOptions::default(),
            weighted: true,
            consistent_only: true,
            trim_warmup: false,
        }
    }
}

fn all_consistent(n: usize) -> ConsistencyMark {
    ConsistencyMark {
        params: ConsistencyParams::default(),
        consistent: vec![true; n],
    }
}

/// Rows and weights for one (week, scope), either raked or unit weights.
fn week_rows_and_weights(
    responses: &ResponseTable,
    marks: &ConsistencyMark,
    participants: &ParticipantTable,
    reference: &ReferencePopulation,
    config: &EstimateConfig,
    scope: &Scope,
    week: usize,
) -> Result<(Vec<usize>, Vec<f64>)> {
    if config.weighted {
        let ww = weekly_weights(
            responses,
            marks,
            participants,
            reference,
            &config.bands,
            scope,
            week,
            &config.rake_opts,
        )?;
        Ok((ww.rows, ww.table.weights))
    } else {
        let mut rows = Vec::new();
        for (i, row) in responses.rows().iter().enumerate() {
            if row.week != week || !marks.consistent[i] {
                continue;
            }
            match scope {
                Scope::National => rows.push(i),
                Scope::Regions(_) => {
                    let region = participants
                        .get(&row.participant_id)
                        .and_then(|p| p.region.as_deref());
                    if region.is_some_and(|r| scope.contains_region(r)) {
                        rows.push(i);
                    }
                }
            }
        }
        let n = rows.len();
        Ok((rows, vec![1.0; n]))
    }
}

/// Per-cell estimates for every (grouping x week x factor) combination.
///
/// Onsets are classified on the full response table; the consistency
/// filter and weights apply to the estimation rows only.
pub fn estimate_by(
    responses: &ResponseTable,
    participants: &ParticipantTable,
    reference: &ReferencePopulation,
    config: &EstimateConfig,
) -> Result<Vec<EstimateCell>> {
    let marks = if config.consistent_only {
        mark_consistency(responses, &config.params)
    } else {
        all_consistent(responses.len())
    };
    let onsets: Vec<(SymptomGrouping, Vec<bool>)> = config
        .groupings
        .iter()
        .map(|&g| Ok((g, mark_onsets(responses, g)?.is_onset)))
        .collect::<Result<_>>()?;

    let scopes: Vec<(String, Scope)> = match &config.split {
        FactorSplit::Locations(scopes) => scopes.iter().map(|s| (s.label(), s.clone())).collect(),
        _ => vec![(config.scope.label(), config.scope.clone())],
    };

    let first_week = if config.consistent_only && config.trim_warmup {
        config.params.window_w
    } else {
        0
    };

    let mut cells = Vec::new();
    for (scope_label, scope) in &scopes {
        for week in first_week..responses.calendar().len() {
            let (rows, weights) = week_rows_and_weights(
                responses,
                &marks,
                participants,
                reference,
                config,
                scope,
                week,
            )?;
            if rows.is_empty() {
                log::debug!("week {week} scope {scope_label}: empty cell skipped");
                continue;
            }
            for (grouping, onset_flags) in &onsets {
                let y: Vec<bool> = rows.iter().map(|&i| onset_flags[i]).collect();
                match &config.split {
                    FactorSplit::AgeBands(bands) => {
                        for band in bands {
                            let mut by = Vec::new();
                            let mut bw = Vec::new();
                            for (k, &i) in rows.iter().enumerate() {
                                let age = participants
                                    .get(&responses.rows()[i].participant_id)
                                    .and_then(|p| p.age_years);
                                if age.is_some_and(|a| band.contains(a)) {
                                    by.push(y[k]);
                                    bw.push(weights[k]);
                                }
                            }
                            if let Some(cell) = estimate_cell(
                                *grouping,
                                responses.week(week),
                                "age_band",
                                &band.to_string(),
                                &by,
                                &bw,
                                config.level,
                            ) {
                                cells.push(cell);
                            }
                        }
                    }
                    FactorSplit::Locations(_) => {
                        if let Some(cell) = estimate_cell(
                            *grouping,
                            responses.week(week),
                            "location",
                            scope_label,
                            &y,
                            &weights,
                            config.level,
                        ) {
                            cells.push(cell);
                        }
                    }
                    FactorSplit::None => {
                        if let Some(cell) = estimate_cell(
                            *grouping,
                            responses.week(week),
                            "overall",
                            "all",
                            &y,
                            &weights,
                            config.level,
                        ) {
                            cells.push(cell);
                        }
                    }
                }
            }
        }
    }
    // Deterministic output ordering.
    cells.sort_by(|a, b| {
        (a.grouping, a.week.index, &a.factor_value).cmp(&(
            b.grouping,
            b.week.index,
            &b.factor_value,
        ))
    });
    Ok(cells)
}

/// Pairs up location-split cells per (grouping, week) and tests each pair.
pub fn compare_locations(cells: &[EstimateCell]) -> Result<Vec<GroupComparison>> {
    let mut labels: Vec<&str> = cells
        .iter()
        .filter(|c| c.factor_name == "location")
        .map(|c| c.factor_value.as_str())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() != 2 {
        return Err(Error::Config(format!(
            "location comparison requires exactly two scopes, found {}",
            labels.len()
        )));
    }
    let (label_a, label_b) = (labels.remove(0), labels.remove(0));
    let mut comparisons = Vec::new();
    for a in cells.iter().filter(|c| c.factor_value == label_a) {
        if let Some(b) = cells
            .iter()
            .find(|c| c.factor_value == label_b && c.grouping == a.grouping && c.week == a.week)
        {
            comparisons.push(compare_groups(a, b));
        }
    }
    Ok(comparisons)
}

/// Relative change of adjusted estimate series against the naive baseline.
#[derive(Debug, Clone)]
pub struct AdjustmentEffect {
    pub grouping: SymptomGrouping,
    pub week: SurveyWeek,
    pub naive: f64,
    pub consistent_only: Option<f64>,
    pub weighted_only: Option<f64>,
    pub both: Option<f64>,
    /// (adjusted - naive) / naive; `None` when the estimate or the naive
    /// baseline is unavailable.
    pub rel_consistent: Option<f64>,
    pub rel_weighted: Option<f64>,
    pub rel_both: Option<f64>,
}

/// Computes the naive, consistent-only, weighted-only, and fully-adjusted
/// weekly estimate series plus their relative changes.
pub fn adjustment_effect(
    responses: &ResponseTable,
    participants: &ParticipantTable,
    reference: &ReferencePopulation,
    base: &EstimateConfig,
) -> Result<Vec<AdjustmentEffect>> {
    let variant = |weighted: bool, consistent_only: bool| EstimateConfig {
        weighted,
        consistent_only,
        split: FactorSplit::None,
        ..base.clone()
    };
    let naive = estimate_by(responses, participants, reference, &variant(false, false))?;
    let consistent = estimate_by(responses, participants, reference, &variant(false, true))?;
    let weighted = estimate_by(responses, participants, reference, &variant(true, false))?;
    let both = estimate_by(responses, participants, reference, &variant(true, true))?;

    let lookup = |cells: &[EstimateCell], g: SymptomGrouping, week: usize| -> Option<f64> {
        cells
            .iter()
            .find(|c| c.grouping == g && c.week.index == week)
            .map(|c| c.p_hat)
    };

    let mut effects = Vec::new();
    for cell in &naive {
        let g = cell.grouping;
        let week = cell.week.index;
        let p_naive = cell.p_hat;
        let rel = |p: Option<f64>| {
            if p_naive > 0.0 {
                p.map(|p| (p - p_naive) / p_naive)
            } else {
                None
            }
        };
        let p_c = lookup(&consistent, g, week);
        let p_w = lookup(&weighted, g, week);
        let p_b = lookup(&both, g, week);
        effects.push(AdjustmentEffect {
            grouping: g,
            week: cell.week,
            naive: p_naive,
            consistent_only: p_c,
            weighted_only: p_w,
            both: p_b,
            rel_consistent: rel(p_c),
            rel_weighted: rel(p_w),
            rel_both: rel(p_b),
        });
    }
    Ok(effects)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::week::WeekCalendar;
    use approx::assert_relative_eq;

    fn week0() -> SurveyWeek {
        let d = chrono::NaiveDate::from_ymd_opt(2020, 5, 3).unwrap();
        WeekCalendar::spanning(d, d).unwrap().week(0)
    }

    #[test]
    fn weighted_mean_examples() {
        let y: Vec<bool> = (0..100).map(|i| i < 10).collect();
        let w = vec![1.0; 100];
        assert_relative_eq!(weighted_proportion(&y, &w), 0.10);

        assert_relative_eq!(weighted_proportion(&[true, false], &[3.0, 1.0]), 0.75);
    }

    #[test]
    fn equal_weight_variance_reduces_to_binomial_form() {
        let y: Vec<bool> = (0..100).map(|i| i < 50).collect();
        let w = vec![1.0; 100];
        let p = weighted_proportion(&y, &w);
        let var = linearized_variance(&y, &w, p).unwrap();
        assert_relative_eq!(var, 0.25 / 99.0, epsilon = 1e-15);
    }

    #[test]
    fn variance_zero_when_outcomes_identical() {
        let y = vec![true; 10];
        let w = vec![2.0; 10];
        let p = weighted_proportion(&y, &w);
        let var = linearized_variance(&y, &w, p).unwrap();
        assert!(var.abs() < 1e-30);
    }

    #[test]
    fn variance_invariant_under_weight_scaling() {
        let y: Vec<bool> = (0..20).map(|i| i % 3 == 0).collect();
        let w: Vec<f64> = (0..20).map(|i| 1.0 + (i as f64) * 0.1).collect();
        let p = weighted_proportion(&y, &w);
        let var = linearized_variance(&y, &w, p).unwrap();
        let w2: Vec<f64> = w.iter().map(|x| x * 7.5).collect();
        let var2 = linearized_variance(&y, &w2, p).unwrap();
        assert_relative_eq!(var, var2, epsilon = 1e-15);
    }

    #[test]
    fn logit_ci_hand_computed_example() {
        // p=0.5, n=100, equal weights.
        let var = 0.25 / 99.0;
        let (lo, hi) = logit_ci(0.5, var, 0.95);
        assert_relative_eq!(lo, 0.4027, epsilon = 1e-3);
        assert_relative_eq!(hi, 0.5973, epsilon = 1e-3);
    }

    #[test]
    fn zero_variance_gives_point_interval() {
        let (lo, hi) = logit_ci(0.3, 0.0, 0.95);
        assert_eq!((lo, hi), (0.3, 0.3));
    }

    #[test]
    fn degenerate_cell_uses_exact_fallback() {
        let y = vec![false; 50];
        let w = vec![1.0; 50];
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
        assert_eq!(cell.method, CiMethod::ExactFallback);
        assert_eq!(cell.p_hat, 0.0);
        assert_eq!(cell.ci_low, 0.0);
        // Clopper-Pearson at x=0: upper = 1 - (alpha/2)^(1/n).
        assert_relative_eq!(
            cell.ci_high,
            1.0 - 0.025f64.powf(1.0 / 50.0),
            epsilon = 1e-9
        );
    }

    #[test]
    fn single_response_cell_has_no_ci() {
        let cell = estimate_cell(
            SymptomGrouping::Ili,
            week0(),
            "overall",
            "all",
            &[true],
            &[1.0],
            0.95,
        )
        .unwrap();
        assert_eq!(cell.method, CiMethod::NoCi);
        assert_eq!((cell.ci_low, cell.ci_high), (1.0, 1.0));
    }

    #[test]
    fn empty_cell_emits_nothing() {
        assert!(estimate_cell(
            SymptomGrouping::Ili,
            week0(),
            "overall",
            "all",
            &[],
            &[],
            0.95
        )
        .is_none());
    }

    fn cell_with(p: f64, n: usize) -> EstimateCell {
        let ones = (p * n as f64).round() as usize;
        let y: Vec<bool> = (0..n).map(|i| i < ones).collect();
        estimate_cell(
            SymptomGrouping::Ili,
            week0(),
            "location",
            "x",
            &y,
            &vec![1.0; n],
            0.95,
        )
        .unwrap()
    }

    #[test]
    fn identical_cells_compare_as_null() {
        let a = cell_with(0.1, 200);
        let cmp = compare_groups(&a, &a);
        assert!(cmp.z.abs() < 1e-12);
        assert_relative_eq!(cmp.p_value, 1.0, epsilon = 1e-12);
        assert!(!cmp.significant);
    }

    #[test]
    fn comparison_symmetric_under_swap() {
        let a = cell_with(0.05, 500);
        let b = cell_with(0.10, 500);
        let ab = compare_groups(&a, &b);
        let ba = compare_groups(&b, &a);
        assert_relative_eq!(ab.z, -ba.z, epsilon = 1e-12);
        assert_relative_eq!(ab.p_value, ba.p_value, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_comparison_is_indeterminate() {
        let a = cell_with(0.0, 50);
        let b = cell_with(0.1, 50);
        let cmp = compare_groups(&a, &b);
        assert!(cmp.indeterminate);
        assert!(!cmp.significant);
    }
}
