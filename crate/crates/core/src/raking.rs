//! Raking (iterative proportional fitting) of response weights to
//! reference-population margins.

use std::collections::BTreeSet;

use crate::consistency::ConsistencyMark;
use crate::data::{AgeBand, ParticipantTable, ReferencePopulation, ResponseTable};
use crate::error::{Error, Result};

/// Location scope of an analysis: the whole reference population or a
/// named set of regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scope {
    National,
    Regions(Vec<String>),
}

impl Scope {
    pub fn label(&self) -> String {
        match self {
            Scope::National => "national".to_string(),
            Scope::Regions(regions) => regions.join("+"),
        }
    }

    pub fn contains_region(&self, region: &str) -> bool {
        match self {
            Scope::National => true,
            Scope::Regions(regions) => regions.iter().any(|r| r == region),
        }
    }
}

/// One raking margin: ordered categories with target proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginSpec {
    pub variable: String,
    pub categories: Vec<String>,
    pub targets: Vec<f64>,
}

impl MarginSpec {
    pub fn new(variable: &str, categories: Vec<String>, targets: Vec<f64>) -> Result<Self> {
        if categories.len() != targets.len() || categories.is_empty() {
            return Err(Error::Config(format!(
                "margin '{variable}' categories and targets must be non-empty and equal length"
            )));
        }
        if targets.iter().any(|&t| t < 0.0 || !t.is_finite()) {
            return Err(Error::Validation(format!(
                "margin '{variable}' has a negative or non-finite target"
            )));
        }
        let sum: f64 = targets.iter().sum();
        if sum <= 0.0 {
            return Err(Error::Validation(format!(
                "margin '{variable}' targets sum to zero"
            )));
        }
        // Accept raw counts; store proportions.
        let targets = targets.iter().map(|t| t / sum).collect();
        Ok(MarginSpec {
            variable: variable.to_string(),
            categories,
            targets,
        })
    }
}

/// Age-margin targets from a reference population, aggregated over the
/// scope's regions before normalizing. National analyses therefore use
/// nationally aggregated targets, never combined sub-national weights.
pub fn build_margins(
    reference: &ReferencePopulation,
    bands: &[AgeBand],
    scope: &Scope,
) -> Result<MarginSpec> {
    let regions: Vec<&str> = match scope {
        Scope::National => reference.regions(),
        Scope::Regions(list) => {
            if list.is_empty() {
                return Err(Error::Config("empty location scope".into()));
            }
            for region in list {
                if !reference.contains_region(region) {
                    return Err(Error::Validation(format!(
                        "scope region '{region}' not present in reference population"
                    )));
                }
            }
            list.iter().map(String::as_str).collect()
        }
    };
    let mut categories = Vec::with_capacity(bands.len());
    let mut targets = Vec::with_capacity(bands.len());
    for band in bands {
        // Re-validate: AgeBand values built via new/parse are always unions
        // of 5-year groups, but bands may arrive constructed directly.
        AgeBand::new(band.lower, band.upper)?;
        categories.push(band.to_string());
        targets.push(reference.band_count(regions.iter().copied(), *band));
    }
    MarginSpec::new("age_band", categories, targets)
}

/// What to do when a margin category with positive target has no sample
/// rows: fold its target into the nearest non-empty category, or fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyCellPolicy {
    #[default]
    Collapse,
    Strict,
}

#[derive(Debug, Clone, Copy)]
pub struct RakeOptions {
    /// Max absolute deviation between weighted marginal proportions and
    /// targets at convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub empty_cells: EmptyCellPolicy,
}

impl Default for RakeOptions {
    fn default() -> Self {
        RakeOptions {
            tol: 1e-9,
            max_iter: 50,
            empty_cells: EmptyCellPolicy::Collapse,
        }
    }
}

/// Calibration weights for one raking run.
#[derive(Debug, Clone)]
pub struct WeightTable {
    /// One weight per sample row, strictly positive, normalized so the sum
    /// equals the sample size.
    pub weights: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub max_deviation: f64,
    /// Categories folded away by the collapse policy, as (margin, category).
    pub collapsed: Vec<(String, String)>,
}

fn collapse_empty(
    margin: &MarginSpec,
    counts: &[usize],
    policy: EmptyCellPolicy,
) -> Result<(MarginSpec, Vec<(String, String)>)> {
    let empties: Vec<usize> = (0..margin.categories.len())
        .filter(|&c| counts[c] == 0 && margin.targets[c] > 0.0)
        .collect();
    if empties.is_empty() {
        return Ok((margin.clone(), Vec::new()));
    }
    if policy == EmptyCellPolicy::Strict {
        return Err(Error::EmptyCategory {
            margin: margin.variable.clone(),
            category: margin.categories[empties[0]].clone(),
        });
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::Validation(format!(
            "margin '{}' has no sample rows in any category",
            margin.variable
        )));
    }
    let mut targets = margin.targets.clone();
    let mut collapsed = Vec::new();
    for &c in &empties {
        // Nearest non-empty category; ties resolve to the lower index.
        let dest = (0..counts.len())
            .filter(|&d| counts[d] > 0)
            .min_by_key(|&d| (c.abs_diff(d), d))
            .unwrap();
        targets[dest] += targets[c];
        targets[c] = 0.0;
        collapsed.push((margin.variable.clone(), margin.categories[c].clone()));
        log::warn!(
            "margin '{}': empty category '{}' collapsed into '{}'",
            margin.variable,
            margin.categories[c],
            margin.categories[dest]
        );
    }
    Ok((
        MarginSpec {
            variable: margin.variable.clone(),
            categories: margin.categories.clone(),
            targets,
        },
        collapsed,
    ))
}

/// Iterative proportional fitting.
///
/// `assignments[m][i]` is row `i`'s category index under margin `m`.
/// Initial weights are 1; the result is normalized so the weights sum to
/// the number of rows.
pub fn rake(
    assignments: &[Vec<usize>],
    margins: &[MarginSpec],
    opts: &RakeOptions,
) -> Result<WeightTable> {
    if margins.is_empty() || assignments.len() != margins.len() {
        return Err(Error::Config(
            "rake requires one assignment vector per margin".into(),
        ));
    }
    let n = assignments[0].len();
    if n == 0 {
        return Ok(WeightTable {
            weights: Vec::new(),
            iterations: 0,
            converged: true,
            max_deviation: 0.0,
            collapsed: Vec::new(),
        });
    }
    for (m, margin) in margins.iter().enumerate() {
        if assignments[m].len() != n {
            return Err(Error::Contract(
                "assignment vectors must all have the sample length".into(),
            ));
        }
        if let Some(&bad) = assignments[m]
            .iter()
            .find(|&&c| c >= margin.categories.len())
        {
            return Err(Error::Contract(format!(
                "category index {bad} out of range for margin '{}'",
                margin.variable
            )));
        }
    }

    // Resolve empty cells up front so targets stay fixed during iteration.
    let mut effective: Vec<MarginSpec> = Vec::with_capacity(margins.len());
    let mut collapsed = Vec::new();
    for (m, margin) in margins.iter().enumerate() {
        let mut counts = vec![0usize; margin.categories.len()];
        for &c in &assignments[m] {
            counts[c] += 1;
        }
        let (eff, mut folded) = collapse_empty(margin, &counts, opts.empty_cells)?;
        collapsed.append(&mut folded);
        effective.push(eff);
    }

    let mut weights = vec![1.0f64; n];
    let mut iterations = 0;
    let mut max_dev = f64::INFINITY;
    while iterations < opts.max_iter {
        iterations += 1;
        for (m, margin) in effective.iter().enumerate() {
            let mut sums = vec![0.0f64; margin.categories.len()];
            for (i, &c) in assignments[m].iter().enumerate() {
                sums[c] += weights[i];
            }
            let total: f64 = sums.iter().sum();
            let factors: Vec<f64> = margin
                .targets
                .iter()
                .zip(&sums)
                .map(|(&t, &s)| if s > 0.0 { t * total / s } else { 1.0 })
                .collect();
            for (i, &c) in assignments[m].iter().enumerate() {
                weights[i] *= factors[c];
            }
        }
        max_dev = deviation(&weights, assignments, &effective);
        if max_dev < opts.tol {
            break;
        }
    }
    let converged = max_dev < opts.tol;
    if !converged {
        log::warn!(
            "raking did not converge after {iterations} iterations (max deviation {max_dev:.3e})"
        );
    }

    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w *= n as f64 / total;
    }
    Ok(WeightTable {
        weights,
        iterations,
        converged,
        max_deviation: max_dev,
        collapsed,
    })
}

fn deviation(weights: &[f64], assignments: &[Vec<usize>], margins: &[MarginSpec]) -> f64 {
    let total: f64 = weights.iter().sum();
    let mut max_dev = 0.0f64;
    for (m, margin) in margins.iter().enumerate() {
        let mut sums = vec![0.0f64; margin.categories.len()];
        for (i, &c) in assignments[m].iter().enumerate() {
            sums[c] += weights[i];
        }
        for (c, &target) in margin.targets.iter().enumerate() {
            if target > 0.0 || sums[c] > 0.0 {
                max_dev = max_dev.max((sums[c] / total - target).abs());
            }
        }
    }
    max_dev
}

/// Weights for one (week, scope) cell of the consistent subset, with the
/// rows they apply to.
#[derive(Debug, Clone)]
pub struct WeekWeights {
    pub week: usize,
    pub scope: Scope,
    /// Row indices into the response table, aligned with `table.weights`.
    pub rows: Vec<usize>,
    pub table: WeightTable,
    /// Responses dropped because the participant lacks the demographics the
    /// scope requires (age, or region for sub-national scopes).
    pub dropped_missing_demographics: usize,
}

/// Rakes one week's consistent responses in scope to the reference age
/// margins.
#[allow(clippy::too_many_arguments)]
pub fn weekly_weights(
    responses: &ResponseTable,
    marks: &ConsistencyMark,
    participants: &ParticipantTable,
    reference: &ReferencePopulation,
    bands: &[AgeBand],
    scope: &Scope,
    week: usize,
    opts: &RakeOptions,
) -> Result<WeekWeights> {
    let margin = build_margins(reference, bands, scope)?;
    let band_of = |age: u32| bands.iter().position(|b| b.contains(age));

    let mut rows = Vec::new();
    let mut categories = Vec::new();
    let mut dropped = 0usize;
    for (i, row) in responses.rows().iter().enumerate() {
        if row.week != week || !marks.consistent[i] {
            continue;
        }
        let participant = participants.get(&row.participant_id);
        let in_scope = match (&scope, participant.and_then(|p| p.region.as_deref())) {
            (Scope::National, _) => true,
            (Scope::Regions(_), Some(region)) => scope.contains_region(region),
            (Scope::Regions(_), None) => {
                dropped += 1;
                continue;
            }
        };
        if !in_scope {
            continue;
        }
        match participant.and_then(|p| p.age_years).and_then(band_of) {
            Some(category) => {
                rows.push(i);
                categories.push(category);
            }
            None => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!(
            "week {week} scope {}: {dropped} consistent responses dropped for missing demographics",
            scope.label()
        );
    }
    if rows.is_empty() {
        log::warn!(
            "week {week} scope {}: no consistent responses",
            scope.label()
        );
        return Ok(WeekWeights {
            week,
            scope: scope.clone(),
            rows,
            table: WeightTable {
                weights: Vec::new(),
                iterations: 0,
                converged: true,
                max_deviation: 0.0,
                collapsed: Vec::new(),
            },
            dropped_missing_demographics: dropped,
        });
    }
    let table = rake(&[categories], &[margin], opts)?;
    Ok(WeekWeights {
        week,
        scope: scope.clone(),
        rows,
        table,
        dropped_missing_demographics: dropped,
    })
}

/// Deduplicated regions appearing in a participant table, for validation.
pub fn observed_regions(participants: &ParticipantTable) -> Vec<String> {
    let set: BTreeSet<String> = participants
        .iter()
        .filter_map(|p| p.region.clone())
        .collect();
    set.into_iter().collect()
}
