//! Univariate time series.
//!
//! Accepted text: one value per line, or comma-separated lines whose last
//! field is the value (for example `time,value`). Blank lines and lines
//! starting with `#` are ignored. The first remaining line is treated as a
//! header and skipped if its value field does not parse as a number; any
//! later unparsable line is an error.

use std::path::Path;

use super::{read_text, DataError};

pub fn parse_series(text: &str) -> Result<Vec<f64>, DataError> {
    let mut values = Vec::new();
    let mut first = true;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim().trim_matches('"');
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ if first => {}
            _ => {
                return Err(DataError::Parse {
                    line: n + 1,
                    message: format!("not a finite number: {field:?}"),
                })
            }
        }
        first = false;
    }
    Ok(values)
}

pub fn read_series_file(path: &Path) -> Result<Vec<f64>, DataError> {
    parse_series(&read_text(path)?)
}

/// Ordered values with the train/test boundary: `values[..boundary]` is train.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesDataset {
    pub values: Vec<f64>,
    pub boundary: usize,
}

impl SeriesDataset {
    pub fn new(values: Vec<f64>, boundary: usize) -> Result<Self, DataError> {
        if boundary > values.len() {
            return Err(DataError::Invalid(format!(
                "boundary {boundary} beyond series of length {}",
                values.len()
            )));
        }
        Ok(Self { values, boundary })
    }

    pub fn train(&self) -> &[f64] {
        &self.values[..self.boundary]
    }

    pub fn test(&self) -> &[f64] {
        &self.values[self.boundary..]
    }
}

/// `x ↦ (x − min)/(max − min)` with bounds from the training values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * (self.max - self.min) + self.min
    }
}

pub fn normalize_minmax(train: &[f64]) -> Result<(MinMax, Vec<f64>), DataError> {
    let min = train.iter().copied().fold(f64::INFINITY, f64::min);
    let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return Err(DataError::Invalid("training series is constant or empty".into()));
    }
    let t = MinMax { min, max };
    Ok((t, train.iter().map(|x| t.apply(*x)).collect()))
}

/// Inputs `values[..n−1]` and targets `values[1..]`.
pub fn one_step_split(values: &[f64]) -> Result<(Vec<f64>, Vec<f64>), DataError> {
    if values.len() < 2 {
        return Err(DataError::Invalid("series needs at least two values".into()));
    }
    Ok((values[..values.len() - 1].to_vec(), values[1..].to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_and_csv() {
        assert_eq!(parse_series("1\n2.5\n\n-3e1\n").unwrap(), vec![1.0, 2.5, -30.0]);
        let csv = "time,sunspots\n1749.0,58.0\n1749.083,62.6\n";
        assert_eq!(parse_series(csv).unwrap(), vec![58.0, 62.6]);
        assert_eq!(parse_series("\"Date\",\"Temp\"\n\"1981-01-01\",20.7\n").unwrap(), vec![20.7]);
        assert!(matches!(parse_series("1\nx\n"), Err(DataError::Parse { line: 2, .. })));
        assert!(parse_series("1\nNaN\n").is_err());
    }

    #[test]
    fn minmax_examples() {
        let (t, z) = normalize_minmax(&[2.0, 4.0, 6.0]).unwrap();
        assert_eq!(z, vec![0.0, 0.5, 1.0]);
        assert_eq!(t.apply(8.0), 1.5);
        for x in [-3.3, 2.0, 7.1, 1e3] {
            assert!((t.invert(t.apply(x)) - x).abs() < 1e-12);
        }
        assert!(normalize_minmax(&[1.0, 1.0]).is_err());
        assert!(normalize_minmax(&[]).is_err());
    }

    #[test]
    fn split_examples() {
        let (x, y) = one_step_split(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((x, y), (vec![1.0, 2.0], vec![2.0, 3.0]));
        assert_eq!(one_step_split(&[4.0, 5.0]).unwrap(), (vec![4.0], vec![5.0]));
        assert!(one_step_split(&[1.0]).is_err());
        let values: Vec<f64> = (0..3650).map(f64::from).collect();
        let s = SeriesDataset::new(values, 3001).unwrap();
        assert_eq!(one_step_split(s.train()).unwrap().0.len(), 3000);
        assert!(SeriesDataset::new(vec![1.0], 2).is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn parser_never_panics(text in "[0-9a-z,.\\-#\"\n ]{0,80}") {
                let _ = parse_series(&text);
            }
        }
    }
}
