//! Parsing of grid arguments: `a,b,c`, `start:step:end` or `start..end`.

use std::str::FromStr;

use crate::CliError;

fn parse_one<T: FromStr>(s: &str) -> Result<T, CliError> {
    s.trim().parse().map_err(|_| CliError::BadGrid(format!("cannot parse {s:?}")))
}

/// Values from `start` to `end` inclusive, tolerating rounding at the end.
fn float_range(start: f64, step: f64, end: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0) || end < start {
        return Err(CliError::BadGrid(format!("empty range {start}:{step}:{end}")));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // Round to 12 digits so 0.05·3 prints as 0.15.
    Ok((0..=n).map(|i| ((start + step * i as f64) * 1e12).round() / 1e12).collect())
}

pub fn parse_floats(spec: &str, default_step: f64) -> Result<Vec<f64>, CliError> {
    if let Some((a, b)) = spec.split_once("..") {
        return float_range(parse_one(a)?, default_step, parse_one(b)?);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        return float_range(parse_one(parts[0])?, parse_one(parts[1])?, parse_one(parts[2])?);
    }
    spec.split(',').map(parse_one).collect()
}

pub fn parse_counts(spec: &str, default_step: usize) -> Result<Vec<usize>, CliError> {
    let range = |a: usize, step: usize, b: usize| {
        if step == 0 || b < a {
            Err(CliError::BadGrid(format!("empty range {a}:{step}:{b}")))
        } else {
            Ok((a..=b).step_by(step).collect())
        }
    };
    if let Some((a, b)) = spec.split_once("..") {
        return range(parse_one(a)?, default_step, parse_one(b)?);
    }
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() == 3 {
        return range(parse_one(parts[0])?, parse_one(parts[1])?, parse_one(parts[2])?);
    }
    spec.split(',').map(parse_one).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_floats("0.05:0.05:0.40", 0.1).unwrap().len(), 8);
        assert_eq!(parse_floats("0.05..0.40", 0.05).unwrap()[2], 0.15);
        assert_eq!(parse_floats("0.1,0.3", 0.05).unwrap(), vec![0.1, 0.3]);
        assert_eq!(parse_counts("50..1000", 50).unwrap().len(), 20);
        assert_eq!(parse_counts("50:100:250", 1).unwrap(), vec![50, 150, 250]);
        assert_eq!(parse_counts("7", 1).unwrap(), vec![7]);
        assert!(parse_counts("9..3", 1).is_err());
        assert!(parse_floats("x", 0.1).is_err());
    }
}
