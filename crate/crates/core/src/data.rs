//! Survey response, participant, and reference-population tables.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::ops::Range;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::week::{SurveyWeek, WeekCalendar};

/// The six surveyed symptoms as presence/absence flags.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Symptoms {
    pub cough: bool,
    pub fever: bool,
    pub sore_throat: bool,
    pub shortness_of_breath: bool,
    pub runny_nose: bool,
    pub loss_taste_smell: bool,
}

pub const SYMPTOM_COLUMNS: [&str; 6] = [
    "cough",
    "fever",
    "sore_throat",
    "shortness_of_breath",
    "runny_nose",
    "loss_taste_smell",
];

impl Symptoms {
    pub fn flags(&self) -> [bool; 6] {
        [
            self.cough,
            self.fever,
            self.sore_throat,
            self.shortness_of_breath,
            self.runny_nose,
            self.loss_taste_smell,
        ]
    }

    pub fn from_flags(flags: [bool; 6]) -> Self {
        Symptoms {
            cough: flags[0],
            fever: flags[1],
            sore_throat: flags[2],
            shortness_of_breath: flags[3],
            runny_nose: flags[4],
            loss_taste_smell: flags[5],
        }
    }

    pub fn count(&self) -> usize {
        self.flags().iter().filter(|&&f| f).count()
    }

    pub fn any(&self) -> bool {
        self.count() > 0
    }
}

/// One participant-week symptom report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseRecord {
    pub participant_id: String,
    /// Week index into the owning table's calendar.
    pub week: usize,
    pub symptoms: Symptoms,
}

/// Indexed, immutable table of survey responses.
///
/// Rows are sorted by (participant_id, week index); each participant's rows
/// occupy a contiguous range. The calendar is the closed range
/// [min week, max week] observed in the input; a missing (participant, week)
/// pair means "no response" that week.
#[derive(Debug, Clone)]
pub struct ResponseTable {
    calendar: WeekCalendar,
    rows: Vec<ResponseRecord>,
    by_participant: BTreeMap<String, Range<usize>>,
}

impl ResponseTable {
    /// Builds a table from raw (participant, week-ending date, symptoms)
    /// triples, with optional source line numbers for error reporting.
    pub fn from_records(records: Vec<(String, NaiveDate, Symptoms, u64)>) -> Result<Self> {
        if records.is_empty() {
            // Empty table with a degenerate one-week calendar placeholder is
            // avoided: represent emptiness with an arbitrary valid Sunday.
            let d = NaiveDate::from_ymd_opt(2020, 5, 3).unwrap();
            return Ok(ResponseTable {
                calendar: WeekCalendar::spanning(d, d)?,
                rows: Vec::new(),
                by_participant: BTreeMap::new(),
            });
        }
        let first = records.iter().map(|r| r.1).min().unwrap();
        let last = records.iter().map(|r| r.1).max().unwrap();
        let calendar = WeekCalendar::spanning(first, last)?;

        let mut rows: Vec<(ResponseRecord, u64)> = records
            .into_iter()
            .map(|(pid, date, symptoms, line)| {
                let week = calendar.index_of(date)?;
                Ok((
                    ResponseRecord {
                        participant_id: pid,
                        week,
                        symptoms,
                    },
                    line,
                ))
            })
            .collect::<Result<_>>()?;
        rows.sort_by(|a, b| (&a.0.participant_id, a.0.week).cmp(&(&b.0.participant_id, b.0.week)));
        for pair in rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.0.participant_id == b.0.participant_id && a.0.week == b.0.week {
                return Err(Error::DuplicateKey {
                    key: format!("({}, {})", a.0.participant_id, calendar.date(a.0.week)),
                    first_line: a.1,
                    second_line: b.1,
                });
            }
        }

        let rows: Vec<ResponseRecord> = rows.into_iter().map(|(r, _)| r).collect();
        let mut by_participant = BTreeMap::new();
        let mut start = 0usize;
        for i in 1..=rows.len() {
            if i == rows.len() || rows[i].participant_id != rows[start].participant_id {
                by_participant.insert(rows[start].participant_id.clone(), start..i);
                start = i;
            }
        }
        Ok(ResponseTable {
            calendar,
            rows,
            by_participant,
        })
    }

    pub fn calendar(&self) -> &WeekCalendar {
        &self.calendar
    }

    pub fn rows(&self) -> &[ResponseRecord] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// A participant's rows, sorted by week.
    pub fn participant_rows(&self, participant_id: &str) -> &[ResponseRecord] {
        match self.by_participant.get(participant_id) {
            Some(range) => &self.rows[range.clone()],
            None => &[],
        }
    }

    /// Iterates (participant_id, rows) in participant order.
    pub fn participants(&self) -> impl Iterator<Item = (&str, &[ResponseRecord])> {
        self.by_participant
            .iter()
            .map(move |(pid, range)| (pid.as_str(), &self.rows[range.clone()]))
    }

    pub fn week(&self, index: usize) -> SurveyWeek {
        self.calendar.week(index)
    }

    /// Row indices for one week, in row order.
    pub fn row_indices_in_week(&self, week: usize) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.rows[i].week == week)
            .collect()
    }
}

/// Reads `responses.csv`. Header must be exactly the documented columns.
pub fn parse_responses<R: Read>(source: R) -> Result<ResponseTable> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("participant_id")
        .chain(std::iter::once("week_ending"))
        .chain(SYMPTOM_COLUMNS)
        .collect();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "responses header mismatch: expected {expected:?}, got {got:?}"
        )));
    }

    let mut records = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 8 {
            return Err(Error::Parse {
                line,
                message: format!("expected 8 fields, got {}", record.len()),
            });
        }
        let pid = record[0].to_string();
        let date: NaiveDate = record[1].parse().map_err(|e| Error::Parse {
            line,
            message: format!("malformed date '{}': {e}", &record[1]),
        })?;
        let mut flags = [false; 6];
        for (i, flag) in flags.iter_mut().enumerate() {
            *flag = match &record[2 + i] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "symptom flag '{}' must be 0 or 1 (column {})",
                            other, SYMPTOM_COLUMNS[i]
                        ),
                    })
                }
            };
        }
        records.push((pid, date, Symptoms::from_flags(flags), line));
    }
    ResponseTable::from_records(records)
}

/// Writes a table back in the `responses.csv` schema (canonical ordering).
pub fn write_responses<W: Write>(table: &ResponseTable, sink: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["participant_id", "week_ending"];
    header.extend(SYMPTOM_COLUMNS);
    writer.write_record(&header)?;
    for row in table.rows() {
        let mut record = vec![
            row.participant_id.clone(),
            table.calendar().date(row.week).to_string(),
        ];
        record.extend(
            row.symptoms
                .flags()
                .iter()
                .map(|&f| if f { "1" } else { "0" }.to_string()),
        );
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Participant demographics captured at enrolment. Age is a snapshot taken
/// at ingestion and never recomputed per week.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Participant {
    pub participant_id: String,
    pub age_years: Option<u32>,
    pub gender: Option<String>,
    pub ethnicity: Option<String>,
    pub region: Option<String>,
    pub postcode: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ParticipantTable {
    map: BTreeMap<String, Participant>,
}

impl ParticipantTable {
    pub fn from_participants(participants: Vec<Participant>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in participants {
            if let Some(age) = p.age_years {
                if age > 120 {
                    return Err(Error::Validation(format!(
                        "participant {} has implausible age {age}",
                        p.participant_id
                    )));
                }
            }
            if map.insert(p.participant_id.clone(), p.clone()).is_some() {
                return Err(Error::Validation(format!(
                    "duplicate participant_id {}",
                    p.participant_id
                )));
            }
        }
        Ok(ParticipantTable { map })
    }

    pub fn get(&self, participant_id: &str) -> Option<&Participant> {
        self.map.get(participant_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Participant> {
        self.map.values()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Reads `participants.csv`. Empty demographic fields become `None`.
pub fn parse_demographics<R: Read>(source: R) -> Result<ParticipantTable> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let expected = [
        "participant_id",
        "age",
        "gender",
        "ethnicity",
        "region",
        "postcode",
    ];
    if headers != expected {
        return Err(Error::Schema(format!(
            "participants header mismatch: expected {expected:?}, got {headers:?}"
        )));
    }
    let mut participants = Vec::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let opt = |s: &str| {
            if s.is_empty() {
                None
            } else {
                Some(s.to_string())
            }
        };
        let age_years = if record[1].is_empty() {
            None
        } else {
            Some(record[1].parse::<u32>().map_err(|e| Error::Parse {
                line,
                message: format!("malformed age '{}': {e}", &record[1]),
            })?)
        };
        participants.push(Participant {
            participant_id: record[0].to_string(),
            age_years,
            gender: opt(&record[2]),
            ethnicity: opt(&record[3]),
            region: opt(&record[4]),
            postcode: opt(&record[5]),
        });
    }
    ParticipantTable::from_participants(participants)
}

/// A contiguous age band `[lower, upper]` or open-ended `lower+`.
///
/// Bands must be unions of 5-year groups: `lower` is a multiple of 5 and a
/// closed `upper` ends a 5-year group (upper ≡ 4 mod 5).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgeBand {
    pub lower: u32,
    pub upper: Option<u32>,
}

impl AgeBand {
    pub fn new(lower: u32, upper: Option<u32>) -> Result<Self> {
        let band = AgeBand { lower, upper };
        if !lower.is_multiple_of(5) {
            return Err(Error::Schema(format!(
                "age band {band} lower bound is not a multiple of 5"
            )));
        }
        if let Some(u) = upper {
            if u < lower || u % 5 != 4 {
                return Err(Error::Schema(format!(
                    "age band {band} is not a union of 5-year groups"
                )));
            }
        }
        Ok(band)
    }

    pub fn parse(label: &str) -> Result<Self> {
        let label = label.trim();
        if let Some(lower) = label.strip_suffix('+') {
            let lower = lower
                .parse::<u32>()
                .map_err(|_| Error::Schema(format!("malformed age band label '{label}'")))?;
            return AgeBand::new(lower, None);
        }
        let (lo, hi) = label
            .split_once('-')
            .ok_or_else(|| Error::Schema(format!("malformed age band label '{label}'")))?;
        let lower = lo
            .parse::<u32>()
            .map_err(|_| Error::Schema(format!("malformed age band label '{label}'")))?;
        let upper = hi
            .parse::<u32>()
            .map_err(|_| Error::Schema(format!("malformed age band label '{label}'")))?;
        AgeBand::new(lower, Some(upper))
    }

    pub fn contains(&self, age: u32) -> bool {
        age >= self.lower && self.upper.is_none_or(|u| age <= u)
    }

    /// True for a single 5-year group (e.g. 0-4) or the open top group.
    pub fn is_five_year_group(&self) -> bool {
        match self.upper {
            Some(u) => u == self.lower + 4,
            None => true,
        }
    }

    /// The 5-year groups making up this band, using `top` as the open-ended
    /// group's lower bound for bands with no upper limit.
    pub fn five_year_groups(&self, top: u32) -> Vec<AgeBand> {
        let upper = match self.upper {
            Some(u) => u,
            None => top.max(self.lower),
        };
        let mut groups = Vec::new();
        let mut lo = self.lower;
        while lo <= upper {
            if lo >= top && self.upper.is_none() {
                groups.push(AgeBand {
                    lower: lo,
                    upper: None,
                });
                break;
            }
            groups.push(AgeBand {
                lower: lo,
                upper: Some(lo + 4),
            });
            lo += 5;
        }
        groups
    }
}

impl std::fmt::Display for AgeBand {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.upper {
            Some(u) => write!(f, "{}-{}", self.lower, u),
            None => write!(f, "{}+", self.lower),
        }
    }
}

/// The default analysis bands: 5-year groups 0-4 through 80-84, then 85+.
pub fn default_bands() -> Vec<AgeBand> {
    let mut bands: Vec<AgeBand> = (0..17)
        .map(|i| AgeBand {
            lower: i * 5,
            upper: Some(i * 5 + 4),
        })
        .collect();
    bands.push(AgeBand {
        lower: 85,
        upper: None,
    });
    bands
}

/// Reference population counts by (region, 5-year age group).
#[derive(Debug, Clone, Default)]
pub struct ReferencePopulation {
    entries: BTreeMap<(String, AgeBand), f64>,
}

impl ReferencePopulation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, region: &str, group: AgeBand, count: f64) -> Result<()> {
        if !group.is_five_year_group() {
            return Err(Error::Schema(format!(
                "reference age group {group} is not a 5-year group"
            )));
        }
        if count < 0.0 || !count.is_finite() {
            return Err(Error::Validation(format!(
                "reference count for ({region}, {group}) is negative or non-finite"
            )));
        }
        if self
            .entries
            .insert((region.to_string(), group), count)
            .is_some()
        {
            return Err(Error::Validation(format!(
                "duplicate reference entry ({region}, {group})"
            )));
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, AgeBand, f64)> {
        self.entries.iter().map(|((r, g), &c)| (r.as_str(), *g, c))
    }

    pub fn regions(&self) -> Vec<&str> {
        let mut regions: Vec<&str> = self.entries.keys().map(|(r, _)| r.as_str()).collect();
        regions.dedup();
        regions
    }

    pub fn contains_region(&self, region: &str) -> bool {
        self.entries.keys().any(|(r, _)| r == region)
    }

    /// Total count over a set of regions for every 5-year group intersecting
    /// `band`. The open-ended reference group absorbs any open-ended band.
    pub fn band_count<'a>(
        &self,
        regions: impl Iterator<Item = &'a str> + Clone,
        band: AgeBand,
    ) -> f64 {
        self.entries
            .iter()
            .filter(|((r, g), _)| {
                regions.clone().any(|sr| sr == r.as_str()) && band.contains(g.lower)
            })
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        ReferencePopulation {
            entries: self
                .entries
                .iter()
                .map(|(k, &v)| (k.clone(), v * factor))
                .collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads `reference_population.csv` with columns `region,age_group,count`.
pub fn parse_reference_population<R: Read>(source: R) -> Result<ReferencePopulation> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let expected = ["region", "age_group", "count"];
    if headers != expected {
        return Err(Error::Schema(format!(
            "reference header mismatch: expected {expected:?}, got {headers:?}"
        )));
    }
    let mut reference = ReferencePopulation::new();
    for result in reader.records() {
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let group = AgeBand::parse(&record[1])?;
        let count = record[2].parse::<f64>().map_err(|e| Error::Parse {
            line,
            message: format!("malformed count '{}': {e}", &record[2]),
        })?;
        if count < 0.0 {
            return Err(Error::Validation(format!(
                "negative reference count at line {line}"
            )));
        }
        reference.insert(&record[0], group, count)?;
    }
    Ok(reference)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(csv: &str) -> Result<ResponseTable> {
        parse_responses(csv.as_bytes())
    }

    #[test]
    fn parses_direct_field_mapping() {
        let t = table(
            "participant_id,week_ending,cough,fever,sore_throat,shortness_of_breath,runny_nose,loss_taste_smell\n\
             P1,2020-05-03,1,1,0,0,0,0\n",
        )
        .unwrap();
        assert_eq!(t.len(), 1);
        let row = &t.rows()[0];
        assert!(row.symptoms.cough && row.symptoms.fever);
        assert_eq!(row.symptoms.count(), 2);
        assert_eq!(t.calendar().date(row.week).to_string(), "2020-05-03");
    }

    #[test]
    fn empty_file_with_header_is_empty_table() {
        let t = table(
            "participant_id,week_ending,cough,fever,sore_throat,shortness_of_breath,runny_nose,loss_taste_smell\n",
        )
        .unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let err = table(
            "participant_id,week_ending,cough,fever,sore_throat,shortness_of_breath,runny_nose,loss_taste_smell\n\
             P1,2020-05-03,1,0,0,0,0,0\n\
             P1,2020-05-03,0,1,0,0,0,0\n",
        )
        .unwrap_err();
        match err {
            Error::DuplicateKey {
                first_line,
                second_line,
                ..
            } => {
                assert_eq!(first_line, 2);
                assert_eq!(second_line, 3);
            }
            other => panic!("expected duplicate-key error, got {other}"),
        }
    }

    #[test]
    fn unknown_symptom_column_is_schema_error() {
        let err = table(
            "participant_id,week_ending,cough,fever,sore_throat,shortness_of_breath,runny_nose,headache\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn malformed_date_reports_line() {
        let err = table(
            "participant_id,week_ending,cough,fever,sore_throat,shortness_of_breath,runny_nose,loss_taste_smell\n\
             P1,notadate,1,0,0,0,0,0\n",
        )
        .unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn age_band_parsing() {
        assert_eq!(
            AgeBand::parse("0-4").unwrap(),
            AgeBand {
                lower: 0,
                upper: Some(4)
            }
        );
        assert_eq!(
            AgeBand::parse("85+").unwrap(),
            AgeBand {
                lower: 85,
                upper: None
            }
        );
        assert!(AgeBand::parse("0-3").is_err());
        assert!(AgeBand::parse("3-7").is_err());
        assert!(AgeBand::parse("x").is_err());
    }

    #[test]
    fn reference_population_parses_and_validates() {
        let r = parse_reference_population(
            "region,age_group,count\nAuckland,0-4,100000\nAuckland,5-9,90000\nWellington,0-4,50000\nWellington,5-9,40000\n"
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(r.entries().count(), 4);
        let band = AgeBand::parse("0-9").unwrap();
        assert_eq!(r.band_count(["Auckland"].into_iter(), band), 190000.0);
        assert_eq!(
            r.band_count(["Auckland", "Wellington"].into_iter(), band),
            280000.0
        );

        let err =
            parse_reference_population("region,age_group,count\nAuckland,0-3,100\n".as_bytes())
                .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));

        let err =
            parse_reference_population("region,age_group,count\nAuckland,0-4,-5\n".as_bytes())
                .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn participant_age_cap() {
        let err = parse_demographics(
            "participant_id,age,gender,ethnicity,region,postcode\nP1,130,F,Other,Auckland,\n"
                .as_bytes(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn band_decomposes_into_five_year_groups() {
        let band = AgeBand::parse("0-9").unwrap();
        assert_eq!(
            band.five_year_groups(85),
            vec![
                AgeBand::parse("0-4").unwrap(),
                AgeBand::parse("5-9").unwrap()
            ]
        );
        let open = AgeBand::parse("80+").unwrap();
        assert_eq!(
            open.five_year_groups(85),
            vec![
                AgeBand::parse("80-84").unwrap(),
                AgeBand::parse("85+").unwrap()
            ]
        );
    }
}
