//! Exchange session calendar.
//!
//! Sessions are the half-open local interval `[open, close)` on weekdays
//! that are not listed as holidays. A daily close is treated as an
//! observation at the `close` instant of its date.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{
    DateTime, Datelike, Days, FixedOffset, LocalResult, NaiveDate, NaiveDateTime, NaiveTime,
    TimeZone, Utc, Weekday,
};
use chrono_tz::Tz;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CalendarError {
    #[error("open time {open} is not before close time {close}")]
    EmptySession { open: NaiveTime, close: NaiveTime },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("missing key `{0}`")]
    MissingKey(&'static str),
}

/// Fixed UTC offset or a named zone with daylight-saving rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Zone {
    Fixed(FixedOffset),
    Named(Tz),
}

impl Zone {
    pub fn to_local(&self, t: DateTime<Utc>) -> NaiveDateTime {
        match self {
            Zone::Fixed(off) => t.with_timezone(off).naive_local(),
            Zone::Named(tz) => t.with_timezone(tz).naive_local(),
        }
    }

    /// Local wall time to UTC. Ambiguous times take the earlier instant;
    /// times inside a spring-forward gap are moved past the gap.
    pub fn to_utc(&self, local: NaiveDateTime) -> DateTime<Utc> {
        fn pick<T: TimeZone>(tz: &T, local: NaiveDateTime) -> DateTime<Utc> {
            let mut probe = local;
            loop {
                match tz.from_local_datetime(&probe) {
                    LocalResult::Single(t) | LocalResult::Ambiguous(t, _) => {
                        return t.with_timezone(&Utc)
                    }
                    LocalResult::None => probe += chrono::Duration::minutes(15),
                }
            }
        }
        match self {
            Zone::Fixed(off) => pick(off, local),
            Zone::Named(tz) => pick(tz, local),
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Zone::Fixed(off) => write!(f, "{off}"),
            Zone::Named(tz) => write!(f, "{}", tz.name()),
        }
    }
}

impl FromStr for Zone {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.starts_with('+') || s.starts_with('-') {
            return s
                .parse::<FixedOffset>()
                .map(Zone::Fixed)
                .map_err(|e| format!("bad offset `{s}`: {e}"));
        }
        s.parse::<Tz>()
            .map(Zone::Named)
            .map_err(|e| format!("unknown zone `{s}`: {e}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TradingCalendar {
    open: NaiveTime,
    close: NaiveTime,
    zone: Zone,
    holidays: BTreeSet<NaiveDate>,
}

impl TradingCalendar {
    pub fn new(
        open: NaiveTime,
        close: NaiveTime,
        zone: Zone,
        holidays: impl IntoIterator<Item = NaiveDate>,
    ) -> Result<Self, CalendarError> {
        if open >= close {
            return Err(CalendarError::EmptySession { open, close });
        }
        Ok(Self {
            open,
            close,
            zone,
            holidays: holidays.into_iter().collect(),
        })
    }

    /// 09:00–17:30 Europe/Paris, no holidays.
    pub fn european() -> Self {
        Self::new(
            NaiveTime::from_hms_opt(9, 0, 0).unwrap(),
            NaiveTime::from_hms_opt(17, 30, 0).unwrap(),
            Zone::Named(chrono_tz::Europe::Paris),
            [],
        )
        .unwrap()
    }

    pub fn open_time(&self) -> NaiveTime {
        self.open
    }

    pub fn close_time(&self) -> NaiveTime {
        self.close
    }

    pub fn zone(&self) -> Zone {
        self.zone
    }

    pub fn holidays(&self) -> &BTreeSet<NaiveDate> {
        &self.holidays
    }

    /// Parses the `key=value` calendar file (`open`, `close`, `zone`,
    /// `holidays`). Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, CalendarError> {
        let (mut open, mut close, mut zone) = (None, None, None);
        let mut holidays = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| CalendarError::Parse {
                line: line_no,
                reason,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            let value = value.trim();
            match key.trim() {
                "open" => open = Some(parse_time(value).map_err(err)?),
                "close" => close = Some(parse_time(value).map_err(err)?),
                "zone" => zone = Some(value.parse::<Zone>().map_err(err)?),
                "holidays" => {
                    for d in value.split(',').map(str::trim).filter(|d| !d.is_empty()) {
                        let date = NaiveDate::parse_from_str(d, "%Y-%m-%d")
                            .map_err(|e| err(format!("bad holiday `{d}`: {e}")))?;
                        holidays.push(date);
                    }
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        Self::new(
            open.ok_or(CalendarError::MissingKey("open"))?,
            close.ok_or(CalendarError::MissingKey("close"))?,
            zone.ok_or(CalendarError::MissingKey("zone"))?,
            holidays,
        )
    }

    pub fn to_text(&self) -> String {
        let holidays: Vec<String> = self.holidays.iter().map(|d| d.to_string()).collect();
        format!(
            "open={}\nclose={}\nzone={}\nholidays={}\n",
            self.open.format("%H:%M"),
            self.close.format("%H:%M"),
            self.zone,
            holidays.join(",")
        )
    }

    pub fn is_trading_day(&self, date: NaiveDate) -> bool {
        !matches!(date.weekday(), Weekday::Sat | Weekday::Sun) && !self.holidays.contains(&date)
    }

    pub fn is_trading_hours(&self, t: DateTime<Utc>) -> bool {
        let local = self.zone.to_local(t);
        self.is_trading_day(local.date()) && local.time() >= self.open && local.time() < self.close
    }

    pub fn open_instant(&self, date: NaiveDate) -> DateTime<Utc> {
        self.zone.to_utc(date.and_time(self.open))
    }

    pub fn close_instant(&self, date: NaiveDate) -> DateTime<Utc> {
        self.zone.to_utc(date.and_time(self.close))
    }

    pub fn local_date(&self, t: DateTime<Utc>) -> NaiveDate {
        self.zone.to_local(t).date()
    }

    pub fn next_trading_day(&self, date: NaiveDate) -> NaiveDate {
        let mut d = date + Days::new(1);
        while !self.is_trading_day(d) {
            d = d + Days::new(1);
        }
        d
    }

    pub fn prev_trading_day(&self, date: NaiveDate) -> NaiveDate {
        let mut d = date - Days::new(1);
        while !self.is_trading_day(d) {
            d = d - Days::new(1);
        }
        d
    }

    pub fn add_trading_days(&self, date: NaiveDate, n: u32) -> NaiveDate {
        (0..n).fold(date, |d, _| self.next_trading_day(d))
    }

    /// Number of trading days `d` with `from < d <= to`; zero when
    /// `to <= from`.
    pub fn trading_days_between(&self, from: NaiveDate, to: NaiveDate) -> u32 {
        let mut count = 0;
        let mut d = from;
        while d < to {
            d = d + Days::new(1);
            if self.is_trading_day(d) {
                count += 1;
            }
        }
        count
    }

    /// First session open at or after `t`.
    pub fn next_open(&self, t: DateTime<Utc>) -> DateTime<Utc> {
        let date = self.local_date(t);
        if self.is_trading_day(date) {
            let open = self.open_instant(date);
            if open >= t {
                return open;
            }
        }
        self.open_instant(self.next_trading_day(date))
    }

    /// Trading date of the first close at or after `t`.
    pub fn session_date(&self, t: DateTime<Utc>) -> NaiveDate {
        let date = self.local_date(t);
        if self.is_trading_day(date) && self.close_instant(date) >= t {
            date
        } else {
            self.next_trading_day(date)
        }
    }

    /// All trading dates in `[first, last]`.
    pub fn trading_dates(&self, first: NaiveDate, last: NaiveDate) -> Vec<NaiveDate> {
        first
            .iter_days()
            .take_while(|d| *d <= last)
            .filter(|d| self.is_trading_day(*d))
            .collect()
    }
}

fn parse_time(s: &str) -> Result<NaiveTime, String> {
    NaiveTime::parse_from_str(s, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(s, "%H:%M"))
        .map_err(|e| format!("bad time `{s}`: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paris(y: i32, m: u32, d: u32, h: u32, mi: u32, s: u32, ms: u32) -> DateTime<Utc> {
        let local = NaiveDate::from_ymd_opt(y, m, d)
            .unwrap()
            .and_hms_milli_opt(h, mi, s, ms)
            .unwrap();
        Zone::Named(chrono_tz::Europe::Paris).to_utc(local)
    }

    #[test]
    fn session_boundaries() {
        let cal = TradingCalendar::european();
        // 2024-03-06 is a Wednesday, 2024-03-09 a Saturday
        assert!(cal.is_trading_hours(paris(2024, 3, 6, 10, 30, 0, 0)));
        assert!(cal.is_trading_hours(paris(2024, 3, 6, 9, 0, 0, 0)));
        assert!(!cal.is_trading_hours(paris(2024, 3, 6, 17, 30, 0, 0)));
        assert!(cal.is_trading_hours(paris(2024, 3, 6, 17, 29, 59, 999)));
        assert!(!cal.is_trading_hours(paris(2024, 3, 9, 11, 0, 0, 0)));
    }

    #[test]
    fn summer_time_shifts_utc_open() {
        let cal = TradingCalendar::european();
        let winter = NaiveDate::from_ymd_opt(2024, 1, 10).unwrap();
        let summer = NaiveDate::from_ymd_opt(2024, 7, 10).unwrap();
        assert_eq!(cal.open_instant(winter).format("%H:%M").to_string(), "08:00");
        assert_eq!(cal.open_instant(summer).format("%H:%M").to_string(), "07:00");
    }

    #[test]
    fn holidays_close_the_session() {
        let xmas = NaiveDate::from_ymd_opt(2024, 12, 25).unwrap();
        let cal = TradingCalendar::new(
            NaiveTime::from_hms_opt(9, 0, 0).unwrap(),
            NaiveTime::from_hms_opt(17, 30, 0).unwrap(),
            "Europe/Paris".parse().unwrap(),
            [xmas],
        )
        .unwrap();
        assert!(!cal.is_trading_hours(paris(2024, 12, 25, 10, 0, 0, 0)));
        assert_eq!(
            cal.next_trading_day(NaiveDate::from_ymd_opt(2024, 12, 24).unwrap()),
            NaiveDate::from_ymd_opt(2024, 12, 26).unwrap()
        );
    }

    #[test]
    fn next_open_and_session_date() {
        let cal = TradingCalendar::european();
        let fri_evening = paris(2024, 3, 8, 20, 0, 0, 0);
        let monday = NaiveDate::from_ymd_opt(2024, 3, 11).unwrap();
        assert_eq!(cal.next_open(fri_evening), cal.open_instant(monday));
        assert_eq!(cal.session_date(fri_evening), monday);
        let wed_early = paris(2024, 3, 6, 7, 0, 0, 0);
        let wed = NaiveDate::from_ymd_opt(2024, 3, 6).unwrap();
        assert_eq!(cal.next_open(wed_early), cal.open_instant(wed));
        assert_eq!(cal.session_date(paris(2024, 3, 6, 17, 30, 0, 0)), wed);
    }

    #[test]
    fn trading_day_arithmetic() {
        let cal = TradingCalendar::european();
        let fri = NaiveDate::from_ymd_opt(2024, 3, 8).unwrap();
        let tue = NaiveDate::from_ymd_opt(2024, 3, 12).unwrap();
        assert_eq!(cal.add_trading_days(fri, 2), tue);
        assert_eq!(cal.trading_days_between(fri, tue), 2);
        assert_eq!(cal.trading_days_between(tue, fri), 0);
        assert_eq!(cal.prev_trading_day(NaiveDate::from_ymd_opt(2024, 3, 11).unwrap()), fri);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let text = "# desk calendar\nopen=09:00\nclose=17:30\nzone=Europe/Paris\nholidays=2024-12-25,2024-12-26\n";
        let cal = TradingCalendar::parse(text).unwrap();
        assert_eq!(cal.holidays().len(), 2);
        assert_eq!(TradingCalendar::parse(&cal.to_text()).unwrap(), cal);

        let fixed = TradingCalendar::parse("open=09:30\nclose=16:00\nzone=-05:00\n").unwrap();
        assert!(matches!(fixed.zone(), Zone::Fixed(_)));

        assert!(matches!(
            TradingCalendar::parse("open=17:30\nclose=09:00\nzone=UTC\n"),
            Err(CalendarError::EmptySession { .. })
        ));
        assert_eq!(
            TradingCalendar::parse("open=09:00\nzone=UTC\n"),
            Err(CalendarError::MissingKey("close"))
        );
        assert!(matches!(
            TradingCalendar::parse("open=09:00\nclose=10:00\nzone=Mars/Olympus\n"),
            Err(CalendarError::Parse { line: 3, .. })
        ));
    }
}
