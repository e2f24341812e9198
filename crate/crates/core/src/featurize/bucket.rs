use chrono::{DateTime, NaiveDate, NaiveTime, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::ROWS;
use crate::error::{Error, Result};
use crate::ingest::PriceBar;

/// Exchange-local hour at which the session closes and the first row opens.
pub const CLOSE_HOUR: u32 = 16;

/// Which close the twelve buckets run up to.
///
/// `TargetClose` ends at 16:00 on the target day itself, so the last rows
/// overlap that day's session. `PriorClose` stops at the previous close and
/// never sees the target session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowEnd {
    #[default]
    TargetClose,
    PriorClose,
}

impl std::str::FromStr for WindowEnd {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target_close" => Ok(WindowEnd::TargetClose),
            "prior_close" => Ok(WindowEnd::PriorClose),
            other => Err(Error::Config(format!("unknown window_end {other:?}"))),
        }
    }
}

/// Half-open `[start, end)` span of tweets feeding one target day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DayWindow {
    pub target: NaiveDate,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl DayWindow {
    pub fn contains(&self, ts: DateTime<Utc>) -> bool {
        self.start <= ts && ts < self.end
    }
}

/// 16:00 exchange-local on `date`, as a UTC instant.
pub fn close_instant(date: NaiveDate, tz: Tz) -> DateTime<Utc> {
    let local = date.and_time(NaiveTime::from_hms_opt(CLOSE_HOUR, 0, 0).expect("valid time"));
    tz.from_local_datetime(&local)
        .earliest()
        .expect("16:00 is never skipped by a DST transition")
        .with_timezone(&Utc)
}

/// Row of the matrix a timestamp lands in: 16-18 is row 0, 14-16 is row 11.
pub fn bucket_index(ts: DateTime<Utc>, tz: Tz) -> usize {
    let hour = ts.with_timezone(&tz).hour();
    (((hour + 24 - CLOSE_HOUR) % 24) / 2) as usize
}

/// One window per bar from index 1 on, keyed by that bar's date. Under
/// `TargetClose` a window runs from the previous bar's close to this bar's
/// close, so weekend and holiday posts roll forward into the next session.
pub fn day_windows(bars: &[PriceBar], policy: WindowEnd, tz: Tz) -> Vec<DayWindow> {
    let closes: Vec<DateTime<Utc>> = bars.iter().map(|b| close_instant(b.date, tz)).collect();
    (1..bars.len())
        .filter_map(|i| {
            let (start, end) = match policy {
                WindowEnd::TargetClose => (closes[i - 1], closes[i]),
                WindowEnd::PriorClose if i >= 2 => (closes[i - 2], closes[i - 1]),
                WindowEnd::PriorClose => return None,
            };
            Some(DayWindow {
                target: bars[i].date,
                start,
                end,
            })
        })
        .collect()
}

/// Splits the items inside `window` into the twelve rows. `items` must be
/// sorted by `ts`.
pub fn bucket<T: Clone>(
    items: &[T],
    ts: impl Fn(&T) -> DateTime<Utc>,
    window: &DayWindow,
    tz: Tz,
) -> Vec<Vec<T>> {
    let lo = items.partition_point(|t| ts(t) < window.start);
    let hi = items.partition_point(|t| ts(t) < window.end);
    let mut groups = vec![Vec::new(); ROWS];
    for item in &items[lo..hi] {
        groups[bucket_index(ts(item), tz)].push(item.clone());
    }
    groups
}
