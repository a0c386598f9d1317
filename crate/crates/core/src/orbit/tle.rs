//! Two-line element sets.
//!
//! Mean elements are treated as osculating at the TLE epoch; there is no SGP4
//! model behind this parser.

use thiserror::Error;

use super::{EarthModel, KeplerianElements, OrbitError};
use crate::scalar::Real;

const LINE_LEN: usize = 69;
const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TleLine {
    One,
    Two,
}

impl std::fmt::Display for TleLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TleLine::One => f.write_str("line 1"),
            TleLine::Two => f.write_str("line 2"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TleError {
    #[error("{line}: expected {LINE_LEN} characters, found {len}")]
    LineLength { line: TleLine, len: usize },
    #[error("{line}: checksum digit is {found}, computed {expected}")]
    ChecksumMismatch {
        line: TleLine,
        expected: u8,
        found: u8,
    },
    #[error("{line}: malformed field `{field}`")]
    MalformedField { line: TleLine, field: &'static str },
    #[error(transparent)]
    Elements(#[from] OrbitError),
}

/// Parsed TLE fields used by the propagator.
#[derive(Debug, Clone, PartialEq)]
pub struct Tle {
    pub catalog_number: u32,
    /// Four-digit year.
    pub epoch_year: u16,
    /// Day of year with fraction, 1.0 = Jan 1 00:00 UTC.
    pub epoch_day: f64,
    pub inclination_deg: f64,
    pub raan_deg: f64,
    pub eccentricity: f64,
    pub arg_perigee_deg: f64,
    pub mean_anomaly_deg: f64,
    pub mean_motion_rev_day: f64,
    pub rev_number: u32,
}

/// Mod-10 checksum over the first 68 columns: digits count their value, '-' counts one.
pub fn tle_checksum(line: &str) -> u8 {
    let sum: u32 = line
        .bytes()
        .take(LINE_LEN - 1)
        .map(|c| match c {
            b'0'..=b'9' => (c - b'0') as u32,
            b'-' => 1,
            _ => 0,
        })
        .sum();
    (sum % 10) as u8
}

fn check_line(raw: &str, which: TleLine) -> Result<&str, TleError> {
    let line = raw.trim_end_matches(['\r', '\n']);
    if line.len() != LINE_LEN || !line.is_ascii() {
        return Err(TleError::LineLength {
            line: which,
            len: line.chars().count(),
        });
    }
    let expect_no = match which {
        TleLine::One => b'1',
        TleLine::Two => b'2',
    };
    if line.as_bytes()[0] != expect_no {
        return Err(TleError::MalformedField {
            line: which,
            field: "line number",
        });
    }
    let found = line.as_bytes()[LINE_LEN - 1];
    if !found.is_ascii_digit() {
        return Err(TleError::MalformedField {
            line: which,
            field: "checksum",
        });
    }
    let found = found - b'0';
    let expected = tle_checksum(line);
    if found != expected {
        return Err(TleError::ChecksumMismatch {
            line: which,
            expected,
            found,
        });
    }
    Ok(line)
}

/// Columns are 1-based and inclusive, as in the format definition.
fn field<'a>(line: &'a str, from: usize, to: usize) -> &'a str {
    line[from - 1..to].trim()
}

fn num<T: std::str::FromStr>(
    line: &str,
    from: usize,
    to: usize,
    which: TleLine,
    name: &'static str,
) -> Result<T, TleError> {
    field(line, from, to)
        .parse()
        .map_err(|_| TleError::MalformedField {
            line: which,
            field: name,
        })
}

pub fn parse_tle(line1: &str, line2: &str) -> Result<Tle, TleError> {
    use TleLine::{One, Two};
    let l1 = check_line(line1, One)?;
    let l2 = check_line(line2, Two)?;

    let catalog_number: u32 = num(l1, 3, 7, One, "catalog number")?;
    let catalog_2: u32 = num(l2, 3, 7, Two, "catalog number")?;
    if catalog_number != catalog_2 {
        return Err(TleError::MalformedField {
            line: Two,
            field: "catalog number",
        });
    }
    let yy: u16 = num(l1, 19, 20, One, "epoch year")?;
    let epoch_day: f64 = num(l1, 21, 32, One, "epoch day")?;

    let ecc_digits = field(l2, 27, 33);
    if ecc_digits.is_empty() || !ecc_digits.bytes().all(|c| c.is_ascii_digit()) {
        return Err(TleError::MalformedField {
            line: Two,
            field: "eccentricity",
        });
    }
    let eccentricity: f64 =
        format!("0.{ecc_digits}")
            .parse()
            .map_err(|_| TleError::MalformedField {
                line: Two,
                field: "eccentricity",
            })?;

    Ok(Tle {
        catalog_number,
        epoch_year: if yy < 57 { 2000 + yy } else { 1900 + yy },
        epoch_day,
        inclination_deg: num(l2, 9, 16, Two, "inclination")?,
        raan_deg: num(l2, 18, 25, Two, "right ascension")?,
        eccentricity,
        arg_perigee_deg: num(l2, 35, 42, Two, "argument of perigee")?,
        mean_anomaly_deg: num(l2, 44, 51, Two, "mean anomaly")?,
        mean_motion_rev_day: num(l2, 53, 63, Two, "mean motion")?,
        rev_number: num::<u32>(l2, 64, 68, Two, "revolution number").unwrap_or(0),
    })
}

fn is_leap(y: i64) -> bool {
    (y % 4 == 0 && y % 100 != 0) || y % 400 == 0
}

impl Tle {
    /// Epoch as seconds since 2000-01-01 00:00 UTC.
    pub fn epoch_seconds_since_2000(&self) -> f64 {
        let y = self.epoch_year as i64;
        let days_before: i64 = if y >= 2000 {
            (2000..y)
                .map(|yr| if is_leap(yr) { 366 } else { 365 })
                .sum()
        } else {
            -(y..2000)
                .map(|yr| if is_leap(yr) { 366 } else { 365 })
                .sum::<i64>()
        };
        (days_before as f64 + self.epoch_day - 1.0) * SECONDS_PER_DAY
    }

    /// Semi-major axis from mean motion by Kepler's third law.
    pub fn semi_major_axis_km<T: Real>(&self, earth: &EarthModel<T>) -> T {
        let n = T::lit(self.mean_motion_rev_day * std::f64::consts::TAU / SECONDS_PER_DAY);
        (earth.mu_km3_s2 / (n * n)).cbrt()
    }

    /// Elements stamped with `epoch_s` on the scenario clock.
    pub fn to_elements<T: Real>(
        &self,
        earth: &EarthModel<T>,
        epoch_s: T,
    ) -> Result<KeplerianElements<T>, TleError> {
        Ok(KeplerianElements::new(
            self.semi_major_axis_km(earth),
            T::lit(self.eccentricity),
            T::lit(self.inclination_deg.to_radians()),
            T::lit(self.raan_deg.to_radians()),
            T::lit(self.arg_perigee_deg.to_radians()),
            T::lit(self.mean_anomaly_deg.to_radians()),
            epoch_s,
            earth,
        )?)
    }
}

/// Mean motion in rev/day for a semi-major axis.
pub fn mean_motion_rev_day<T: Real>(a_km: T, earth: &EarthModel<T>) -> f64 {
    earth.mean_motion(a_km).to_f64().unwrap_or(f64::NAN) * SECONDS_PER_DAY / std::f64::consts::TAU
}

fn with_checksum(mut body: String) -> String {
    debug_assert_eq!(body.len(), LINE_LEN - 1);
    let c = tle_checksum(&body);
    body.push(char::from(b'0' + c));
    body
}

/// Renders elements as a TLE pair with valid checksums.
///
/// Angles are written with four decimals and mean motion with eight, the
/// resolution of the format.
pub fn format_tle<T: Real>(
    catalog_number: u32,
    epoch_year: u16,
    epoch_day: f64,
    el: &KeplerianElements<T>,
    earth: &EarthModel<T>,
) -> (String, String) {
    let deg = |r: T| r.to_f64().unwrap_or(f64::NAN).to_degrees();
    let ecc = (el.eccentricity.to_f64().unwrap_or(0.0) * 1e7).round() as u64;
    let l1 = format!(
        "1 {:05}U 00001A   {:02}{:012.8} +.00000000 +00000-0 +00000-0 0  999",
        catalog_number % 100_000,
        epoch_year % 100,
        epoch_day,
    );
    let l2 = format!(
        "2 {:05} {:8.4} {:8.4} {:07} {:8.4} {:8.4} {:11.8}{:5}",
        catalog_number % 100_000,
        deg(el.inclination_rad),
        deg(el.raan_rad),
        ecc.min(9_999_999),
        deg(el.arg_perigee_rad),
        deg(el.mean_anomaly_rad),
        mean_motion_rev_day(el.semi_major_axis_km, earth),
        0,
    );
    (with_checksum(l1), with_checksum(l2))
}

#[cfg(test)]
mod tests {
    use super::*;

    const ISS1: &str = "1 25544U 98067A   08264.51782528 -.00002182  00000-0 -11606-4 0  2927";
    const ISS2: &str = "2 25544  51.6416 247.4627 0006703 130.5360 325.0288 15.72125391563537";

    #[test]
    fn parses_reference_pair() {
        let t = parse_tle(ISS1, ISS2).unwrap();
        assert_eq!(t.catalog_number, 25544);
        assert_eq!(t.epoch_year, 2008);
        assert!((t.inclination_deg - 51.6416).abs() < 1e-12);
        assert!((t.eccentricity - 0.0006703).abs() < 1e-15);
        assert!((t.mean_motion_rev_day - 15.72125391).abs() < 1e-12);
        let a: f64 = t.semi_major_axis_km(&EarthModel::default());
        assert!((a - 6730.0).abs() < 5.0, "{a}");
    }

    #[test]
    fn altered_checksum_is_detected() {
        let mut bad = ISS1.to_string();
        let last = bad.pop().unwrap();
        bad.push(char::from(b'0' + ((last as u8 - b'0' + 1) % 10)));
        assert!(matches!(
            parse_tle(&bad, ISS2),
            Err(TleError::ChecksumMismatch {
                line: TleLine::One,
                ..
            })
        ));
    }

    #[test]
    fn truncated_line_is_rejected() {
        assert_eq!(
            parse_tle(&ISS1[..60], ISS2),
            Err(TleError::LineLength {
                line: TleLine::One,
                len: 60
            })
        );
    }

    #[test]
    fn non_numeric_field_is_rejected() {
        let mut l2 = ISS2.to_string();
        l2.replace_range(8..16, "  5x.641");
        let l2 = {
            let body = &l2[..68];
            with_checksum(body.to_string())
        };
        assert!(matches!(
            parse_tle(ISS1, &l2),
            Err(TleError::MalformedField {
                field: "inclination",
                ..
            })
        ));
    }

    #[test]
    fn formatted_lines_round_trip() {
        let earth = EarthModel::<f64>::default();
        let el = KeplerianElements::new(
            7151.0,
            0.0012,
            86.4_f64.to_radians(),
            30.0_f64.to_radians(),
            90.0_f64.to_radians(),
            12.5_f64.to_radians(),
            0.0,
            &earth,
        )
        .unwrap();
        let (l1, l2) = format_tle(12345, 2024, 100.5, &el, &earth);
        assert_eq!(l1.len(), 69);
        assert_eq!(l2.len(), 69);
        let t = parse_tle(&l1, &l2).unwrap();
        let back = t.to_elements(&earth, 0.0).unwrap();
        // Mean motion recomputed from the derived axis reproduces the field.
        let n = mean_motion_rev_day(back.semi_major_axis_km, &earth);
        assert!((n - t.mean_motion_rev_day).abs() < 1e-9);
        assert!((back.semi_major_axis_km - 7151.0).abs() < 1e-3);
        assert!((t.epoch_day - 100.5).abs() < 1e-12);
        assert!((back.eccentricity - 0.0012).abs() < 1e-12);
    }
}
