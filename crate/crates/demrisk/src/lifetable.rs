//! Mortality tables: loading, validation, scaling, and the survival queries
//! every other module builds on.
//!
//! A table stores annual death probabilities `qx` for contiguous integer ages
//! and must close with `qx = 1` at its terminal age, so that deferred death
//! probabilities over the full remaining range always sum to one. Tables are
//! immutable after construction and safe to share across threads.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

/// Errors raised while loading, scaling, or querying a mortality table.
#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read life table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{row}: malformed row {content:?} (expected `age,qx`)")]
    MalformedRow {
        path: String,
        row: usize,
        content: String,
    },
    #[error("{path}:{row}: probability out of range: qx = {value}")]
    ProbabilityOutOfRange {
        path: String,
        row: usize,
        value: f64,
    },
    #[error("{path}:{row}: age gap at {expected} (found {found})")]
    AgeGap {
        path: String,
        row: usize,
        expected: u32,
        found: u32,
    },
    #[error("life table {name:?} has no rows at or above age {min_age}")]
    Empty { name: String, min_age: u32 },
    #[error("life table {name:?} must close with qx = 1 at its terminal age (found {value} at age {age})")]
    OpenEnded { name: String, age: u32, value: f64 },
    #[error("probability {value} at age {age} outside [0, 1] in table {name:?}")]
    InvalidProbability { name: String, age: u32, value: f64 },
    #[error("age {age} outside table {name:?} range {min}..={max}")]
    AgeOutOfRange {
        name: String,
        age: u32,
        min: u32,
        max: u32,
    },
    #[error("scaling schedule has no multiplier for age {age}")]
    MissingMultiplier { age: u32 },
    #[error("multiplier {multiplier} at age {age} is not positive")]
    NonPositiveMultiplier { age: u32, multiplier: f64 },
    #[error("scaled probability {value} at age {age} leaves [0, 1]")]
    ScaledOutOfRange { age: u32, value: f64 },
}

/// Annual death probabilities indexed by contiguous integer ages.
#[derive(Debug, Clone, PartialEq)]
pub struct LifeTable {
    name: String,
    min_age: u32,
    qx: Vec<f64>,
}

impl LifeTable {
    /// Builds a table from raw probabilities starting at `min_age`.
    /// The last entry is the terminal age and must equal 1.
    pub fn new(name: impl Into<String>, min_age: u32, qx: Vec<f64>) -> Result<Self, TableError> {
        let name = name.into();
        if qx.is_empty() {
            return Err(TableError::Empty { name, min_age });
        }
        for (i, &q) in qx.iter().enumerate() {
            if !(0.0..=1.0).contains(&q) || !q.is_finite() {
                return Err(TableError::InvalidProbability {
                    name,
                    age: min_age + i as u32,
                    value: q,
                });
            }
        }
        let terminal = *qx.last().expect("non-empty");
        if terminal != 1.0 {
            return Err(TableError::OpenEnded {
                name,
                age: min_age + (qx.len() - 1) as u32,
                value: terminal,
            });
        }
        Ok(Self { name, min_age, qx })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn min_age(&self) -> u32 {
        self.min_age
    }

    /// Terminal age: the last tabulated age, where `qx = 1`.
    pub fn max_age(&self) -> u32 {
        self.min_age + (self.qx.len() - 1) as u32
    }

    pub fn len(&self) -> usize {
        self.qx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.qx.is_empty()
    }

    /// Annual death probability at age `x`.
    pub fn qx(&self, x: u32) -> Result<f64, TableError> {
        if x < self.min_age || x > self.max_age() {
            return Err(TableError::AgeOutOfRange {
                name: self.name.clone(),
                age: x,
                min: self.min_age,
                max: self.max_age(),
            });
        }
        Ok(self.qx[(x - self.min_age) as usize])
    }

    /// n-year survival probability from age `x`:
    /// product of (1 - q) over ages x .. x+n-1. `npx(x, 0) = 1`.
    pub fn npx(&self, x: u32, n: u32) -> Result<f64, TableError> {
        if n == 0 {
            return Ok(1.0);
        }
        let mut p = 1.0;
        for h in 0..n {
            p *= 1.0 - self.qx(x + h)?;
        }
        Ok(p)
    }

    /// Deferred death probability: survive `h` years from age `x`, then die
    /// in the following year.
    pub fn deferred_qx(&self, x: u32, h: u32) -> Result<f64, TableError> {
        Ok(self.npx(x, h)? * self.qx(x + h)?)
    }

    /// Applies an age-dependent multiplier to every non-terminal probability.
    /// The terminal age keeps `qx = 1`. A scaled value outside [0, 1] is an
    /// error, never a clamp.
    pub fn scale(&self, schedule: &ScalingSchedule) -> Result<LifeTable, TableError> {
        let mut scaled = Vec::with_capacity(self.qx.len());
        let terminal_idx = self.qx.len() - 1;
        for (i, &q) in self.qx.iter().enumerate() {
            if i == terminal_idx {
                scaled.push(1.0);
                continue;
            }
            let age = self.min_age + i as u32;
            let m = schedule.multiplier(age)?;
            let v = m * q;
            if !(0.0..=1.0).contains(&v) {
                return Err(TableError::ScaledOutOfRange { age, value: v });
            }
            scaled.push(v);
        }
        Ok(LifeTable {
            name: format!("{} (scaled)", self.name),
            min_age: self.min_age,
            qx: scaled,
        })
    }
}

/// Loads a life table from a CSV file with rows `age,qx`.
///
/// Ages must be strictly increasing and contiguous; probabilities use a dot
/// decimal separator regardless of locale. Rows below `min_age` are dropped.
/// An optional `age,qx` header line is skipped.
pub fn load_life_table(path: impl AsRef<Path>, min_age: u32) -> Result<LifeTable, TableError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| TableError::Io {
        path: display.clone(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());

    let mut rows: Vec<(u32, f64)> = Vec::new();
    let mut prev_age: Option<u32> = None;
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',');
        let age_field = fields.next().unwrap_or("").trim();
        let q_field = fields.next().unwrap_or("").trim();
        if fields.next().is_some() || q_field.is_empty() {
            return Err(TableError::MalformedRow {
                path: display,
                row,
                content: trimmed.to_string(),
            });
        }
        if row == 1 && age_field.parse::<u32>().is_err() {
            // Header line.
            continue;
        }
        let age: u32 = age_field.parse().map_err(|_| TableError::MalformedRow {
            path: display.clone(),
            row,
            content: trimmed.to_string(),
        })?;
        let q: f64 = q_field.parse().map_err(|_| TableError::MalformedRow {
            path: display.clone(),
            row,
            content: trimmed.to_string(),
        })?;
        if !(0.0..=1.0).contains(&q) || !q.is_finite() {
            return Err(TableError::ProbabilityOutOfRange {
                path: display,
                row,
                value: q,
            });
        }
        if let Some(prev) = prev_age {
            if age != prev + 1 {
                return Err(TableError::AgeGap {
                    path: display,
                    row,
                    expected: prev + 1,
                    found: age,
                });
            }
        }
        prev_age = Some(age);
        rows.push((age, q));
    }
    let kept: Vec<f64> = rows
        .iter()
        .filter(|(age, _)| *age >= min_age)
        .map(|&(_, q)| q)
        .collect();
    let start_age = rows
        .iter()
        .map(|&(age, _)| age)
        .find(|&age| age >= min_age)
        .ok_or(TableError::Empty {
            name: name.clone(),
            min_age,
        })?;
    LifeTable::new(name, start_age, kept)
}

/// Age-dependent multipliers applied to death probabilities when deriving a
/// first-order table from a second-order one.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalingSchedule {
    /// Same factor at every age.
    Constant(f64),
    /// Linear in age between two anchors, held flat outside them.
    LinearRamp {
        start_age: u32,
        start: f64,
        end_age: u32,
        end: f64,
    },
    /// Explicit per-age factors; every non-terminal age must be covered.
    PerAge(BTreeMap<u32, f64>),
}

impl ScalingSchedule {
    /// Multiplier for `age`; errors on missing or non-positive entries.
    pub fn multiplier(&self, age: u32) -> Result<f64, TableError> {
        let m = match self {
            ScalingSchedule::Constant(f) => *f,
            ScalingSchedule::LinearRamp {
                start_age,
                start,
                end_age,
                end,
            } => {
                if age <= *start_age {
                    *start
                } else if age >= *end_age {
                    *end
                } else {
                    let span = (*end_age - *start_age) as f64;
                    let pos = (age - *start_age) as f64;
                    start + (end - start) * pos / span
                }
            }
            ScalingSchedule::PerAge(map) => {
                *map.get(&age).ok_or(TableError::MissingMultiplier { age })?
            }
        };
        if m <= 0.0 || !m.is_finite() {
            return Err(TableError::NonPositiveMultiplier { age, multiplier: m });
        }
        Ok(m)
    }
}

impl Default for ScalingSchedule {
    /// The bundled prudence schedule: 0.90 at age 40 falling linearly to
    /// 0.80 at age 60, flat outside that band.
    fn default() -> Self {
        ScalingSchedule::LinearRamp {
            start_age: 40,
            start: 0.90,
            end_age: 60,
            end: 0.80,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Write;

    fn constant_table(q: f64, min_age: u32, terminal: u32) -> LifeTable {
        let mut qx = vec![q; (terminal - min_age) as usize];
        qx.push(1.0);
        LifeTable::new("const", min_age, qx).unwrap()
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_table_from_csv() {
        let mut body = String::from("age,qx\n");
        for age in 40..120 {
            body.push_str(&format!("{age},0.001\n"));
        }
        body.push_str("120,1.0\n");
        let f = write_csv(&body);
        let t = load_life_table(f.path(), 40).unwrap();
        assert_eq!(t.len(), 81);
        assert_eq!(t.min_age(), 40);
        assert_eq!(t.qx(120).unwrap(), 1.0);
    }

    #[test]
    fn min_age_truncates_leading_rows() {
        let f = write_csv("38,0.1\n39,0.1\n40,0.2\n41,1.0\n");
        let t = load_life_table(f.path(), 40).unwrap();
        assert_eq!(t.min_age(), 40);
        assert_eq!(t.len(), 2);
        assert_eq!(t.qx(40).unwrap(), 0.2);
    }

    #[test]
    fn rejects_probability_out_of_range() {
        let f = write_csv("40,0.5\n41,1.2\n42,1.0\n");
        let err = load_life_table(f.path(), 40).unwrap_err();
        assert!(matches!(
            err,
            TableError::ProbabilityOutOfRange { row: 2, .. }
        ));
        assert!(err.to_string().contains("probability out of range"));
    }

    #[test]
    fn rejects_age_gap() {
        let f = write_csv("40,0.5\n42,1.0\n");
        let err = load_life_table(f.path(), 40).unwrap_err();
        assert!(matches!(
            err,
            TableError::AgeGap {
                row: 2,
                expected: 41,
                found: 42,
                ..
            }
        ));
        assert!(err.to_string().contains("age gap at 41"));
    }

    #[test]
    fn rejects_malformed_row() {
        let f = write_csv("40,0.5\nnot-a-row\n");
        let err = load_life_table(f.path(), 40).unwrap_err();
        assert!(matches!(err, TableError::MalformedRow { row: 2, .. }));
    }

    #[test]
    fn rejects_missing_file() {
        let err = load_life_table("/nonexistent/table.csv", 0).unwrap_err();
        assert!(matches!(err, TableError::Io { .. }));
    }

    #[test]
    fn rejects_open_ended_table() {
        let f = write_csv("40,0.5\n41,0.6\n");
        let err = load_life_table(f.path(), 40).unwrap_err();
        assert!(matches!(err, TableError::OpenEnded { age: 41, .. }));
    }

    #[test]
    fn qx_at_terminal_age_is_one() {
        let t = constant_table(0.1, 40, 60);
        assert_eq!(t.qx(60).unwrap(), 1.0);
    }

    #[test]
    fn qx_below_min_age_errors() {
        let t = constant_table(0.1, 40, 60);
        assert!(matches!(
            t.qx(39),
            Err(TableError::AgeOutOfRange { age: 39, .. })
        ));
    }

    #[test]
    fn constant_table_lookup() {
        let t = constant_table(0.1, 40, 60);
        assert_eq!(t.qx(50).unwrap(), 0.1);
    }

    #[test]
    fn npx_zero_years_is_one() {
        let t = constant_table(0.1, 40, 60);
        assert_eq!(t.npx(40, 0).unwrap(), 1.0);
    }

    #[test]
    fn npx_constant_table() {
        let t = constant_table(0.1, 40, 60);
        assert!((t.npx(40, 2).unwrap() - 0.81).abs() < 1e-15);
    }

    #[test]
    fn npx_through_terminal_age_is_zero() {
        let t = constant_table(0.1, 40, 60);
        assert_eq!(t.npx(40, 21).unwrap(), 0.0);
    }

    #[test]
    fn deferred_qx_examples() {
        let t = constant_table(0.1, 40, 60);
        assert_eq!(t.deferred_qx(40, 0).unwrap(), t.qx(40).unwrap());
        assert!((t.deferred_qx(40, 1).unwrap() - 0.09).abs() < 1e-15);
    }

    #[test]
    fn deferred_qx_partitions_unity() {
        let t = constant_table(0.03, 40, 75);
        let total: f64 = (0..=(75 - 40)).map(|h| t.deferred_qx(40, h).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_schedule_is_identity() {
        let t = constant_table(0.123456789, 40, 80);
        let scaled = t.scale(&ScalingSchedule::Constant(1.0)).unwrap();
        assert_eq!(scaled.qx, t.qx);
    }

    #[test]
    fn constant_schedule_scales_probabilities() {
        let t = constant_table(0.1, 40, 60);
        let scaled = t.scale(&ScalingSchedule::Constant(0.85)).unwrap();
        assert!((scaled.qx(50).unwrap() - 0.085).abs() < 1e-15);
        assert_eq!(scaled.qx(60).unwrap(), 1.0);
    }

    #[test]
    fn oversized_multiplier_is_an_error() {
        let t = constant_table(0.1, 40, 60);
        let err = t.scale(&ScalingSchedule::Constant(20.0)).unwrap_err();
        assert!(matches!(err, TableError::ScaledOutOfRange { .. }));
    }

    #[test]
    fn per_age_schedule_must_cover_range() {
        let t = constant_table(0.1, 40, 42);
        let mut map = BTreeMap::new();
        map.insert(40, 0.9);
        let err = t.scale(&ScalingSchedule::PerAge(map)).unwrap_err();
        assert!(matches!(err, TableError::MissingMultiplier { age: 41 }));
    }

    #[test]
    fn default_ramp_interpolates() {
        let s = ScalingSchedule::default();
        assert_eq!(s.multiplier(40).unwrap(), 0.90);
        assert_eq!(s.multiplier(60).unwrap(), 0.80);
        assert!((s.multiplier(50).unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(s.multiplier(30).unwrap(), 0.90);
        assert_eq!(s.multiplier(70).unwrap(), 0.80);
    }

    prop_compose! {
        fn arb_table()(min_age in 0u32..90, qs in prop::collection::vec(0.0001f64..0.9, 1..50)) -> LifeTable {
            let mut qx = qs;
            qx.push(1.0);
            LifeTable::new("random", min_age, qx).unwrap()
        }
    }

    proptest! {
        #[test]
        fn npx_satisfies_one_year_recursion(t in arb_table(), n in 0u32..40) {
            let x = t.min_age();
            if x + n < t.max_age() {
                let lhs = t.npx(x, n + 1).unwrap();
                let rhs = t.npx(x, n).unwrap() * (1.0 - t.qx(x + n).unwrap());
                prop_assert!((lhs - rhs).abs() <= 1e-15 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn deferred_probabilities_sum_to_one(t in arb_table()) {
            let x = t.min_age();
            let span = t.max_age() - x;
            let total: f64 = (0..=span).map(|h| t.deferred_qx(x, h).unwrap()).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }
    }
}
