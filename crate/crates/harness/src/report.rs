//! Per-member price statistics across distribution modes.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::run::mode_dirs;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriceStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl PriceStats {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len().max(1) as f64;
        Self {
            mean: x.iter().sum::<f64>() / n,
            min: x.iter().copied().fold(f64::INFINITY, f64::min),
            max: x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// One row per member, one mean/min/max block per mode.
#[derive(Clone, Debug, PartialEq)]
pub struct PriceTable {
    pub modes: Vec<String>,
    pub rows: Vec<(u32, Vec<PriceStats>)>,
}

impl PriceTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("prosumer_id");
        for m in &self.modes {
            s += &format!(",{m}_mean,{m}_min,{m}_max");
        }
        s.push('\n');
        for (id, stats) in &self.rows {
            s += &id.to_string();
            for p in stats {
                s += &format!(",{:.4},{:.4},{:.4}", p.mean, p.min, p.max);
            }
            s.push('\n');
        }
        s
    }
}

impl fmt::Display for PriceTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:>6}", "member")?;
        for m in &self.modes {
            write!(f, " | {:^22}", m)?;
        }
        writeln!(f)?;
        write!(f, "{:>6}", "")?;
        for _ in &self.modes {
            write!(f, " | {:>6} {:>6} {:>6}", "mean", "min", "max")?;
        }
        writeln!(f)?;
        for (id, stats) in &self.rows {
            write!(f, "{id:>6}")?;
            for p in stats {
                write!(f, " | {:>6.2} {:>6.2} {:>6.2}", p.mean, p.min, p.max)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Price table of every solved mode under `run`, read from its
/// `prices.csv` files.
pub fn report_prices(run: &Path) -> Result<PriceTable> {
    let dirs = mode_dirs(run);
    if dirs.is_empty() {
        return Err(HarnessError::EmptyRun(run.to_path_buf()));
    }
    let mut modes = Vec::new();
    let mut per_member: BTreeMap<u32, Vec<PriceStats>> = BTreeMap::new();
    for (k, (mode, dir)) in dirs.iter().enumerate() {
        modes.push(mode.as_str().to_string());
        let path = dir.join("prices.csv");
        let text = std::fs::read_to_string(&path).map_err(|source| HarnessError::Io { path: path.clone(), source })?;
        let mut series: BTreeMap<u32, Vec<(usize, f64)>> = BTreeMap::new();
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        for (line, rec) in rdr.records().enumerate() {
            let parsed = rec.ok().and_then(|r| {
                Some((r.get(0)?.parse::<u32>().ok()?, r.get(1)?.parse::<usize>().ok()?, r.get(2)?.parse::<f64>().ok()?))
            });
            let (id, t, x) = parsed.ok_or_else(|| HarnessError::Config {
                path: path.clone(),
                line: Some(line + 2),
                msg: "expected prosumer_id,t,x_dkk_per_kwh".into(),
            })?;
            series.entry(id).or_default().push((t, x));
        }
        for (id, mut xs) in series {
            xs.sort_by_key(|p| p.0);
            let values: Vec<f64> = xs.iter().map(|p| p.1).collect();
            let row = per_member.entry(id).or_default();
            // Members missing from an earlier mode get blank blocks.
            row.resize(k, PriceStats { mean: f64::NAN, min: f64::NAN, max: f64::NAN });
            row.push(PriceStats::of(&values));
        }
    }
    let width = modes.len();
    let rows = per_member
        .into_iter()
        .map(|(id, mut stats)| {
            stats.resize(width, PriceStats { mean: f64::NAN, min: f64::NAN, max: f64::NAN });
            (id, stats)
        })
        .collect();
    Ok(PriceTable { modes, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let p = PriceStats::of(&[2.0; 6]);
        assert_eq!((p.mean, p.min, p.max), (2.0, 2.0, 2.0));
    }

    #[test]
    fn table_from_run_directory() {
        let dir = tempfile::tempdir().unwrap();
        let none = dir.path().join("none");
        std::fs::create_dir_all(&none).unwrap();
        std::fs::write(none.join("prices.csv"), "prosumer_id,t,x_dkk_per_kwh\n1,1,1\n1,2,3\n2,1,0\n2,2,0\n").unwrap();
        let equal = dir.path().join("equal");
        std::fs::create_dir_all(&equal).unwrap();
        std::fs::write(equal.join("prices.csv"), "prosumer_id,t,x_dkk_per_kwh\n1,1,2\n1,2,2\n2,1,1\n2,2,1\n").unwrap();
        let t = report_prices(dir.path()).unwrap();
        assert_eq!(t.modes, vec!["none", "equal"]);
        assert_eq!(
            t.to_csv(),
            "prosumer_id,none_mean,none_min,none_max,equal_mean,equal_min,equal_max\n\
             1,2.0000,1.0000,3.0000,2.0000,2.0000,2.0000\n\
             2,0.0000,0.0000,0.0000,1.0000,1.0000,1.0000\n"
        );
        assert!(t.to_string().lines().count() == 4);
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(report_prices(dir.path()), Err(HarnessError::EmptyRun(_))));
    }
}
