//! RFC 3339 timestamps, UTC, millisecond precision.

/// Format microseconds since the Unix epoch as `YYYY-MM-DDThh:mm:ss.mmmZ`.
pub fn rfc3339_utc_millis(unix_micros: u64) -> String {
    let total_secs = unix_micros / 1_000_000;
    let millis = (unix_micros % 1_000_000) / 1_000;
    let days = (total_secs / 86_400) as i64;
    let secs_of_day = total_secs % 86_400;
    let (year, month, day) = civil_from_days(days);
    format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z",
        year,
        month,
        day,
        secs_of_day / 3600,
        (secs_of_day / 60) % 60,
        secs_of_day % 60,
        millis
    )
}

// Days since 1970-01-01 to (year, month, day) in the proleptic Gregorian
// calendar; era-based algorithm over 400-year cycles.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}
