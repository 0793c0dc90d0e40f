//! Command-line pipeline: validate inputs, estimate weekly incidence,
//! sweep consistency parameters, summarize demographics, and generate
//! synthetic cohorts.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime error. Errors
//! are also emitted as JSON on stderr. Log level comes from `RUST_LOG`.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use flusight_core::consistency::{fraction_excluded, mark_consistency, ConsistencyParams};
use flusight_core::data::{
    default_bands, parse_demographics, parse_reference_population, parse_responses, AgeBand,
    ParticipantTable, ReferencePopulation, ResponseTable,
};
use flusight_core::error::Error as CoreError;
use flusight_core::estimation::{
    adjustment_effect, compare_locations, estimate_by, EstimateConfig, FactorSplit,
};
use flusight_core::incidents::{assign_incidents, SymptomGrouping, ALL_GROUPINGS};
use flusight_core::raking::{weekly_weights, EmptyCellPolicy, RakeOptions, Scope};
use flusight_core::summary::summarize_demographics;
use flusight_core::sweep::{run_sweep, Quartiles};
use flusight_core::synth::{generate_cohort, SynthConfig};

const SCHEMA_VERSION: &str = "# schema_version: 1";

#[derive(Parser)]
#[command(
    name = "flusight",
    about = "Weekly symptom-onset incidence estimation from participatory survey data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct InputArgs {
    /// Response table CSV (participant_id,week_ending,<six symptom flags>)
    #[arg(long)]
    responses: PathBuf,
    /// Participant demographics CSV
    #[arg(long)]
    participants: PathBuf,
    /// Reference population CSV (region,age_group,count)
    #[arg(long)]
    reference: PathBuf,
}

#[derive(Args, Clone)]
struct FilterArgs {
    /// Symptom groupings to analyse (CLI1+, CLI2+, ILI); defaults to all
    #[arg(long = "grouping")]
    groupings: Vec<String>,
    /// Consistency window size in weeks
    #[arg(long, default_value_t = 4)]
    window: usize,
    /// Missing weeks allowed within the window
    #[arg(long, default_value_t = 1)]
    missing: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate the input files, reporting totals and warnings
    Validate {
        #[command(flatten)]
        inputs: InputArgs,
    },
    /// Weekly incidence estimates with 95% confidence intervals
    Estimate {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        /// Analysis scope: "national" or a comma-separated region list
        #[arg(long, default_value = "national")]
        scope: String,
        /// Raking age bands as comma-separated labels; defaults to 5-year groups
        #[arg(long)]
        bands: Option<String>,
        /// Split estimates by these report bands instead of one overall series
        #[arg(long)]
        by_bands: Option<String>,
        /// Second region list to compare against --scope (or "rest")
        #[arg(long)]
        compare: Option<String>,
        /// Confidence level
        #[arg(long, default_value_t = 0.95)]
        ci_level: f64,
        /// Error instead of collapsing empty raking categories
        #[arg(long)]
        strict_cells: bool,
        /// Drop warm-up weeks from the output entirely
        #[arg(long)]
        trim_warmup: bool,
        /// Disable age weighting
        #[arg(long)]
        no_weighting: bool,
        /// Use all responses instead of the consistent subset
        #[arg(long)]
        all_responses: bool,
        /// Also write adjustment_effect.csv (naive vs adjusted series)
        #[arg(long)]
        adjustment_effect: bool,
        /// Debug export: weights.csv
        #[arg(long)]
        export_weights: bool,
        /// Debug export: consistency_marks.csv
        #[arg(long)]
        export_marks: bool,
        /// Debug export: incidents.csv
        #[arg(long)]
        export_incidents: bool,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Consistency-parameter trade-off grid
    Sweep {
        #[command(flatten)]
        inputs: InputArgs,
        /// Groupings to analyse; defaults to all
        #[arg(long = "grouping")]
        groupings: Vec<String>,
        /// Window range, e.g. 1..8 (inclusive)
        #[arg(long, default_value = "1..8")]
        w: String,
        /// Missing-allowed range, e.g. 0..2 (inclusive)
        #[arg(long, default_value = "0..2")]
        m: String,
        /// Exclude weeks losing more than this fraction from summaries
        #[arg(long, default_value_t = 0.25)]
        exclusion_threshold: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Demographic summary tables
    Summarize {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic cohort dataset
    Synth {
        /// TOML cohort configuration
        #[arg(long)]
        config: PathBuf,
        /// Override the config's RNG seed
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let validation = err.downcast_ref::<CoreError>().is_some_and(|e| {
                matches!(
                    e,
                    CoreError::Parse { .. }
                        | CoreError::Schema(_)
                        | CoreError::Validation(_)
                        | CoreError::DuplicateKey { .. }
                        | CoreError::Config(_)
                        | CoreError::EmptyCategory { .. }
                )
            });
            let kind = if validation { "validation" } else { "runtime" };
            let payload = serde_json::json!({
                "error": { "kind": kind, "message": format!("{err:#}") }
            });
            eprintln!("{payload}");
            if validation {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { inputs } => cmd_validate(&inputs),
        Command::Estimate {
            inputs,
            filter,
            scope,
            bands,
            by_bands,
            compare,
            ci_level,
            strict_cells,
            trim_warmup,
            no_weighting,
            all_responses,
            adjustment_effect,
            export_weights,
            export_marks,
            export_incidents,
            out,
        } => cmd_estimate(EstimateArgs {
            inputs,
            filter,
            scope,
            bands,
            by_bands,
            compare,
            ci_level,
            strict_cells,
            trim_warmup,
            no_weighting,
            all_responses,
            adjustment_effect,
            export_weights,
            export_marks,
            export_incidents,
            out,
        }),
        Command::Sweep {
            inputs,
            groupings,
            w,
            m,
            exclusion_threshold,
            out,
        } => cmd_sweep(&inputs, &groupings, &w, &m, exclusion_threshold, &out),
        Command::Summarize {
            inputs,
            filter,
            out,
        } => cmd_summarize(&inputs, &filter, &out),
        Command::Synth { config, seed, out } => cmd_synth(&config, seed, &out),
    }
}

struct Inputs {
    responses: ResponseTable,
    participants: ParticipantTable,
    reference: ReferencePopulation,
}

fn load_inputs(args: &InputArgs) -> Result<Inputs> {
    let responses = parse_responses(
        File::open(&args.responses)
            .with_context(|| format!("opening {}", args.responses.display()))?,
    )?;
    let participants = parse_demographics(
        File::open(&args.participants)
            .with_context(|| format!("opening {}", args.participants.display()))?,
    )?;
    let reference = parse_reference_population(
        File::open(&args.reference)
            .with_context(|| format!("opening {}", args.reference.display()))?,
    )?;
    Ok(Inputs {
        responses,
        participants,
        reference,
    })
}

fn parse_groupings(names: &[String]) -> Result<Vec<SymptomGrouping>> {
    if names.is_empty() {
        return Ok(ALL_GROUPINGS.to_vec());
    }
    names
        .iter()
        .map(|n| SymptomGrouping::parse(n).map_err(Into::into))
        .collect()
}

fn parse_scope(spec: &str) -> Scope {
    if spec.eq_ignore_ascii_case("national") {
        Scope::National
    } else {
        Scope::Regions(spec.split(',').map(|s| s.trim().to_string()).collect())
    }
}

fn parse_bands(spec: &str) -> Result<Vec<AgeBand>> {
    spec.split(',')
        .map(|s| AgeBand::parse(s).map_err(Into::into))
        .collect()
}

fn parse_range(spec: &str) -> Result<std::ops::RangeInclusive<usize>> {
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: usize = lo.trim().parse().context("range start")?;
        let hi: usize = hi.trim().parse().context("range end")?;
        Ok(lo..=hi)
    } else {
        let v: usize = spec.trim().parse().context("range value")?;
        Ok(v..=v)
    }
}

/// Writes through a temp file in the same directory, then renames.
fn atomic_write(path: &Path, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy())
            .unwrap_or_default()
    ));
    {
        let mut file = File::create(&tmp)?;
        body(&mut file)?;
        file.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

fn cmd_validate(inputs: &InputArgs) -> Result<()> {
    let data = load_inputs(inputs)?;
    let mut unknown = 0usize;
    for row in data.responses.rows() {
        if data.participants.get(&row.participant_id).is_none() {
            unknown += 1;
        }
    }
    let mut missing_age = 0usize;
    let mut missing_region = 0usize;
    for p in data.participants.iter() {
        if p.age_years.is_none() {
            missing_age += 1;
        }
        if p.region.is_none() {
            missing_region += 1;
        }
    }
    println!("responses: {}", data.responses.len());
    println!(
        "weeks: {} ({} to {})",
        data.responses.calendar().len(),
        data.responses.calendar().date(0),
        data.responses
            .calendar()
            .date(data.responses.calendar().len() - 1)
    );
    println!("participants: {}", data.participants.len());
    println!("reference regions: {}", data.reference.regions().len());
    println!("warnings:");
    println!("  responses with unknown participant: {unknown}");
    println!("  participants missing age: {missing_age}");
    println!("  participants missing region: {missing_region}");
    println!("validation: OK");
    Ok(())
}

struct EstimateArgs {
    inputs: InputArgs,
    filter: FilterArgs,
    scope: String,
    bands: Option<String>,
    by_bands: Option<String>,
    compare: Option<String>,
    ci_level: f64,
    strict_cells: bool,
    trim_warmup: bool,
    no_weighting: bool,
    all_responses: bool,
    adjustment_effect: bool,
    export_weights: bool,
    export_marks: bool,
    export_incidents: bool,
    out: PathBuf,
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let data = load_inputs(&args.inputs)?;
    let groupings = parse_groupings(&args.filter.groupings)?;
    let params = ConsistencyParams::new(args.filter.window, args.filter.missing)?;
    let scope = parse_scope(&args.scope);
    let bands = match &args.bands {
        Some(spec) => parse_bands(spec)?,
        None => default_bands(),
    };
    if !(0.0..1.0).contains(&args.ci_level) || args.ci_level <= 0.5 {
        bail!(CoreError::Config(format!(
            "ci-level must be in (0.5, 1), got {}",
            args.ci_level
        )));
    }

    let split = if let Some(compare_spec) = &args.compare {
        let Scope::Regions(a_regions) = &scope else {
            bail!(CoreError::Config(
                "--compare requires --scope to name a region list".into()
            ));
        };
        let b = if compare_spec.eq_ignore_ascii_case("rest") {
            let rest: Vec<String> = data
                .reference
                .regions()
                .into_iter()
                .filter(|r| !a_regions.iter().any(|a| a == r))
                .map(String::from)
                .collect();
            if rest.is_empty() {
                bail!(CoreError::Config(
                    "--compare rest is empty: scope covers every region".into()
                ));
            }
            Scope::Regions(rest)
        } else {
            parse_scope(compare_spec)
        };
        FactorSplit::Locations(vec![scope.clone(), b])
    } else if let Some(spec) = &args.by_bands {
        FactorSplit::AgeBands(parse_bands(spec)?)
    } else {
        FactorSplit::None
    };

    let config = EstimateConfig {
        groupings,
        params,
        bands,
        scope,
        split,
        level: args.ci_level,
        rake_opts: RakeOptions {
            empty_cells: if args.strict_cells {
                EmptyCellPolicy::Strict
            } else {
                EmptyCellPolicy::Collapse
            },
            ..RakeOptions::default()
        },
        weighted: !args.no_weighting,
        consistent_only: !args.all_responses,
        trim_warmup: args.trim_warmup,
    };

    let cells = estimate_by(
        &data.responses,
        &data.participants,
        &data.reference,
        &config,
    )?;
    atomic_write(&args.out.join("estimates.csv"), |w| {
        writeln!(w, "{SCHEMA_VERSION}")?;
        writeln!(
            w,
            "grouping,week_ending,factor_name,factor_value,n,p_hat,ci_low,ci_high,method"
        )?;
        for c in &cells {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                c.grouping,
                c.week.ending,
                c.factor_name,
                c.factor_value,
                c.n,
                c.p_hat,
                c.ci_low,
                c.ci_high,
                c.method.label()
            )?;
        }
        Ok(())
    })?;

    if args.compare.is_some() {
        let comparisons = compare_locations(&cells)?;
        atomic_write(&args.out.join("comparisons.csv"), |w| {
            writeln!(w, "{SCHEMA_VERSION}")?;
            writeln!(
                w,
                "grouping,week_ending,location_a,location_b,p_a,p_b,z,p_value,significant"
            )?;
            for c in &comparisons {
                let (z, p) = if c.indeterminate {
                    (String::new(), String::new())
                } else {
                    (c.z.to_string(), c.p_value.to_string())
                };
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    c.cell_a.grouping,
                    c.cell_a.week.ending,
                    c.cell_a.factor_value,
                    c.cell_b.factor_value,
                    c.cell_a.p_hat,
                    c.cell_b.p_hat,
                    z,
                    p,
                    if c.indeterminate {
                        "indeterminate"
                    } else if c.significant {
                        "true"
                    } else {
                        "false"
                    }
                )?;
            }
            Ok(())
        })?;
    }

    if args.adjustment_effect {
        let effects = adjustment_effect(
            &data.responses,
            &data.participants,
            &data.reference,
            &config,
        )?;
        atomic_write(&args.out.join("adjustment_effect.csv"), |w| {
            writeln!(w, "{SCHEMA_VERSION}")?;
            writeln!(
                w,
                "grouping,week_ending,naive,consistent_only,weighted_only,both,rel_consistent,rel_weighted,rel_both"
            )?;
            for e in &effects {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{},{}",
                    e.grouping,
                    e.week.ending,
                    e.naive,
                    fmt_opt(e.consistent_only),
                    fmt_opt(e.weighted_only),
                    fmt_opt(e.both),
                    fmt_opt(e.rel_consistent),
                    fmt_opt(e.rel_weighted),
                    fmt_opt(e.rel_both)
                )?;
            }
            Ok(())
        })?;
    }

    write_debug_exports(&args, &data, &config)?;
    Ok(())
}

fn write_debug_exports(args: &EstimateArgs, data: &Inputs, config: &EstimateConfig) -> Result<()> {
    let calendar = data.responses.calendar();
    if args.export_marks || args.export_weights {
        let marks = mark_consistency(&data.responses, &config.params);
        if args.export_marks {
            atomic_write(&args.out.join("consistency_marks.csv"), |w| {
                writeln!(w, "{SCHEMA_VERSION}")?;
                writeln!(w, "participant_id,week_ending,consistent")?;
                for (i, row) in data.responses.rows().iter().enumerate() {
                    writeln!(
                        w,
                        "{},{},{}",
                        row.participant_id,
                        calendar.date(row.week),
                        marks.consistent[i]
                    )?;
                }
                Ok(())
            })?;
        }
        if args.export_weights {
            atomic_write(&args.out.join("weights.csv"), |w| {
                writeln!(w, "{SCHEMA_VERSION}")?;
                writeln!(w, "participant_id,week_ending,scope,weight")?;
                for week in 0..calendar.len() {
                    let ww = weekly_weights(
                        &data.responses,
                        &marks,
                        &data.participants,
                        &data.reference,
                        &config.bands,
                        &config.scope,
                        week,
                        &config.rake_opts,
                    )?;
                    for (row_idx, weight) in ww.rows.iter().zip(&ww.table.weights) {
                        let row = &data.responses.rows()[*row_idx];
                        writeln!(
                            w,
                            "{},{},{},{}",
                            row.participant_id,
                            calendar.date(row.week),
                            config.scope.label(),
                            weight
                        )?;
                    }
                }
                Ok(())
            })?;
        }
    }
    if args.export_incidents {
        atomic_write(&args.out.join("incidents.csv"), |w| {
            writeln!(w, "{SCHEMA_VERSION}")?;
            writeln!(
                w,
                "participant_id,grouping,incident_id,onset_week,member_weeks"
            )?;
            for grouping in &config.groupings {
                for (pid, history) in data.responses.participants() {
                    for incident in assign_incidents(history, *grouping)? {
                        let members: Vec<String> = incident
                            .member_weeks
                            .iter()
                            .map(|&m| calendar.date(m).to_string())
                            .collect();
                        writeln!(
                            w,
                            "{},{},{},{},{}",
                            pid,
                            grouping,
                            incident.incident_id,
                            calendar.date(incident.onset_week),
                            members.join("|")
                        )?;
                    }
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

fn write_quartiles(
    w: &mut dyn Write,
    window: usize,
    missing: usize,
    grouping: SymptomGrouping,
    metric: &str,
    filtered: bool,
    q: Option<Quartiles>,
) -> Result<()> {
    let (min, q1, median, q3, max, n) = match q {
        Some(q) => (
            q.min.to_string(),
            q.q1.to_string(),
            q.median.to_string(),
            q.q3.to_string(),
            q.max.to_string(),
            q.n_weeks.to_string(),
        ),
        None => Default::default(),
    };
    writeln!(
        w,
        "{window},{missing},{grouping},{metric},{filtered},{min},{q1},{median},{q3},{max},{n}"
    )?;
    Ok(())
}

fn cmd_sweep(
    inputs: &InputArgs,
    groupings: &[String],
    w_spec: &str,
    m_spec: &str,
    exclusion_threshold: f64,
    out: &Path,
) -> Result<()> {
    let data = load_inputs(inputs)?;
    let groupings = parse_groupings(groupings)?;
    let result = run_sweep(
        &data.responses,
        parse_range(w_spec)?,
        parse_range(m_spec)?,
        &groupings,
        exclusion_threshold,
    )?;

    atomic_write(&out.join("sweep_weekly.csv"), |w| {
        writeln!(w, "{SCHEMA_VERSION}")?;
        writeln!(
            w,
            "window,missing,grouping,week_ending,fraction_excluded,baseline,filtered,rel_change"
        )?;
        for point in &result.points {
            for week in &point.weekly {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    point.window_w,
                    point.missing_m,
                    point.grouping,
                    week.week.ending,
                    fmt_opt(week.fraction_excluded),
                    fmt_opt(week.baseline),
                    fmt_opt(week.filtered),
                    fmt_opt(week.rel_change)
                )?;
            }
        }
        Ok(())
    })?;

    atomic_write(&out.join("sweep_summary.csv"), |w| {
        writeln!(w, "{SCHEMA_VERSION}")?;
        writeln!(
            w,
            "window,missing,grouping,metric,exclusion_filtered,min,q1,median,q3,max,n_weeks"
        )?;
        for p in &result.points {
            let s = &p.summary;
            write_quartiles(
                w,
                p.window_w,
                p.missing_m,
                p.grouping,
                "fraction_excluded",
                false,
                s.fraction_excluded_all,
            )?;
            write_quartiles(
                w,
                p.window_w,
                p.missing_m,
                p.grouping,
                "fraction_excluded",
                true,
                s.fraction_excluded_filtered,
            )?;
            write_quartiles(
                w,
                p.window_w,
                p.missing_m,
                p.grouping,
                "rel_change",
                false,
                s.rel_change_all,
            )?;
            write_quartiles(
                w,
                p.window_w,
                p.missing_m,
                p.grouping,
                "rel_change",
                true,
                s.rel_change_filtered,
            )?;
        }
        Ok(())
    })?;
    Ok(())
}

fn cmd_summarize(inputs: &InputArgs, filter: &FilterArgs, out: &Path) -> Result<()> {
    let data = load_inputs(inputs)?;
    let params = ConsistencyParams::new(filter.window, filter.missing)?;
    let marks = mark_consistency(&data.responses, &params);
    let summary = summarize_demographics(&data.responses, &data.participants, Some(&marks));

    atomic_write(&out.join("demographic_summary.csv"), |w| {
        writeln!(w, "{SCHEMA_VERSION}")?;
        writeln!(
            w,
            "factor,group,avg_weekly_responses,pct_responses,avg_weekly_consistent,pct_consistent_responses,participants,pct_participants,consistent_participants,pct_consistent_participants"
        )?;
        for r in &summary.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.factor,
                r.group,
                r.avg_weekly_responses,
                r.pct_responses,
                r.avg_weekly_consistent,
                r.pct_consistent_responses,
                r.participants,
                r.pct_participants,
                r.consistent_participants,
                r.pct_consistent_participants
            )?;
        }
        Ok(())
    })?;

    atomic_write(&out.join("weekly_counts.csv"), |w| {
        writeln!(w, "{SCHEMA_VERSION}")?;
        writeln!(
            w,
            "week_ending,responses,consistent_responses,fraction_excluded"
        )?;
        let fractions = fraction_excluded(&data.responses, &marks);
        for (count, fraction) in summary.weekly_counts.iter().zip(fractions) {
            writeln!(
                w,
                "{},{},{},{}",
                count.week.ending,
                count.responses,
                count.consistent_responses,
                fmt_opt(fraction)
            )?;
        }
        Ok(())
    })?;

    atomic_write(&out.join("responses_per_person.csv"), |w| {
        writeln!(w, "{SCHEMA_VERSION}")?;
        writeln!(w, "responses,participants,cumulative_probability")?;
        for ((count, n), (_, cumulative)) in summary
            .responses_per_person
            .iter()
            .zip(&summary.cumulative_responses_per_person)
        {
            writeln!(w, "{count},{n},{cumulative}")?;
        }
        Ok(())
    })?;
    if summary.unknown_participant_responses > 0 {
        log::warn!(
            "{} responses from unknown participants grouped under 'unknown'",
            summary.unknown_participant_responses
        );
    }
    Ok(())
}

fn cmd_synth(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let raw = std::fs::read_to_string(config_path)
        .with_context(|| format!("reading {}", config_path.display()))?;
    let mut config: SynthConfig = toml::from_str(&raw)
        .map_err(|e| CoreError::Config(format!("invalid synth config: {e}")))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let cohort = generate_cohort(&config)?;

    atomic_write(&out.join("responses.csv"), |w| {
        flusight_core::data::write_responses(&cohort.responses, w)?;
        Ok(())
    })?;

    atomic_write(&out.join("participants.csv"), |w| {
        writeln!(w, "participant_id,age,gender,ethnicity,region,postcode")?;
        for p in cohort.participants.iter() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                p.participant_id,
                p.age_years.map(|a| a.to_string()).unwrap_or_default(),
                p.gender.clone().unwrap_or_default(),
                p.ethnicity.clone().unwrap_or_default(),
                p.region.clone().unwrap_or_default(),
                p.postcode.clone().unwrap_or_default()
            )?;
        }
        Ok(())
    })?;

    atomic_write(&out.join("reference_population.csv"), |w| {
        writeln!(w, "region,age_group,count")?;
        for (region, group, count) in cohort.reference.entries() {
            writeln!(w, "{region},{group},{count}")?;
        }
        Ok(())
    })?;

    atomic_write(&out.join("ground_truth.csv"), |w| {
        writeln!(w, "{SCHEMA_VERSION}")?;
        writeln!(w, "week_ending,grouping,true_incidence")?;
        for row in &cohort.ground_truth {
            let date = cohort.start_week + chrono::Duration::weeks(row.week as i64);
            writeln!(w, "{date},{},{}", row.grouping, row.true_incidence)?;
        }
        Ok(())
    })?;
    Ok(())
}
