//! Epidemiological survey weeks: each week ends on a Sunday and weeks are
//! indexed consecutively within a dataset's calendar.

use chrono::{Datelike, Duration, NaiveDate, Weekday};

use crate::error::{Error, Result};

/// One epidemiological week, identified by the Sunday it ends on and its
/// ordinal position within the dataset calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SurveyWeek {
    pub ending: NaiveDate,
    pub index: usize,
}

/// The contiguous closed range of survey weeks covered by a dataset.
///
/// Week gaps are forbidden: a participant simply has no record in weeks
/// they did not respond.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeekCalendar {
    start: NaiveDate,
    len: usize,
}

pub fn is_sunday(date: NaiveDate) -> bool {
    date.weekday() == Weekday::Sun
}

impl WeekCalendar {
    /// Builds the calendar spanning `[first, last]` inclusive. Both dates
    /// must be Sundays.
    pub fn spanning(first: NaiveDate, last: NaiveDate) -> Result<Self> {
        if !is_sunday(first) || !is_sunday(last) {
            return Err(Error::Validation(format!(
                "week-ending dates must be Sundays (got {first} and {last})"
            )));
        }
        if last < first {
            return Err(Error::Validation(format!(
                "calendar end {last} precedes start {first}"
            )));
        }
        let days = (last - first).num_days();
        Ok(WeekCalendar {
            start: first,
            len: (days / 7) as usize + 1,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn start(&self) -> NaiveDate {
        self.start
    }

    pub fn date(&self, index: usize) -> NaiveDate {
        self.start + Duration::weeks(index as i64)
    }

    pub fn week(&self, index: usize) -> SurveyWeek {
        SurveyWeek {
            ending: self.date(index),
            index,
        }
    }

    /// Index of a week-ending date, or an error if it is not a Sunday or
    /// falls outside the calendar.
    pub fn index_of(&self, date: NaiveDate) -> Result<usize> {
        if !is_sunday(date) {
            return Err(Error::Validation(format!(
                "week-ending date {date} is not a Sunday"
            )));
        }
        let days = (date - self.start).num_days();
        if days < 0 || (days / 7) as usize >= self.len {
            return Err(Error::Validation(format!(
                "date {date} outside calendar [{}, {}]",
                self.start,
                self.date(self.len - 1)
            )));
        }
        Ok((days / 7) as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = SurveyWeek> + '_ {
        (0..self.len).map(|i| self.week(i))
    }
}
