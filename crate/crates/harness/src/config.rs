//! Run configuration: a flat `key = value` file, `#` starts a comment.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `network`, `contract`, `prices` | instance files, relative to the config file | required |
//! | `profiles` | profiles file, or `synth` for seeded synthetic profiles | required |
//! | `pv_owners` | member ids with PV when `profiles = synth` | none |
//! | `variation` | capacity-curve variation factor; unset keeps the contract caps | unset |
//! | `beta` | tariff discount applied to every period; unset keeps the contract | unset |
//! | `modes` | comma list of `none`, `equal`, `proportional` | `none` |
//! | `gamma`, `rho` | regularizer and price-cap weights | `1e-6`, `1e-4` |
//! | `gap_tol`, `feasibility_tol` | solver tolerances | `1e-9`, `1e-9` |
//! | `backend` | `native` or `external` | `native` |
//! | `external_command` | program run as `command model.txt solution.txt` | unset |
//! | `node_limit`, `time_limit_s` | search budget per solve | `200000`, `600` |
//! | `parallel` | parallel node evaluation inside one solve | `false` |
//! | `beta_grid`, `variation_grid` | sweep axes, comma lists | `0,0.3,0.6,0.9`, `0.5,0.75,1` |
//! | `variation_floor` | sweep cells below it are flagged | `0.4` |
//! | `hours_per_period` | merge this many hours into one period | `1` |
//! | `seed` | seed of synthetic profiles | `42` |

use std::path::{Path, PathBuf};
use std::time::Duration;

use ecprice_core::bilevel::Budget;
use ecprice_core::instance::{Backend, DistributionMode, PricingConfig};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum ProfileSource {
    File(PathBuf),
    Synthetic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub path: PathBuf,
    pub network: PathBuf,
    pub profiles: ProfileSource,
    pub contract: PathBuf,
    pub prices: PathBuf,
    pub pv_owners: Vec<u32>,
    pub variation: Option<f64>,
    pub beta: Option<f64>,
    pub modes: Vec<DistributionMode>,
    pub pricing: PricingConfig,
    pub external_command: Option<String>,
    pub node_limit: usize,
    pub time_limit: Duration,
    pub parallel: bool,
    pub beta_grid: Vec<f64>,
    pub variation_grid: Vec<f64>,
    pub variation_floor: f64,
    pub hours_per_period: usize,
    pub seed: u64,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
            path: path.to_path_buf(),
            line: None,
            msg: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    /// Parses config text; relative paths resolve against the directory of
    /// `path`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let dir = path.parent().unwrap_or(Path::new("."));
        let err = |line: usize, msg: String| HarnessError::Config {
            path: path.to_path_buf(),
            line: Some(line),
            msg,
        };
        let mut network = None;
        let mut profiles = None;
        let mut contract = None;
        let mut prices = None;
        let mut backend = "native".to_string();
        let mut cfg = RunConfig {
            path: path.to_path_buf(),
            network: PathBuf::new(),
            profiles: ProfileSource::Synthetic,
            contract: PathBuf::new(),
            prices: PathBuf::new(),
            pv_owners: Vec::new(),
            variation: None,
            beta: None,
            modes: vec![DistributionMode::None],
            pricing: PricingConfig::default(),
            external_command: None,
            node_limit: 200_000,
            time_limit: Duration::from_secs(600),
            parallel: false,
            beta_grid: vec![0.0, 0.3, 0.6, 0.9],
            variation_grid: vec![0.5, 0.75, 1.0],
            variation_floor: 0.4,
            hours_per_period: 1,
            seed: 42,
        };

        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .map(|(a, b)| (a.trim(), b.trim()))
                .ok_or_else(|| err(line, format!("expected `key = value`, found `{content}`")))?;
            let num = |v: &str| -> Result<f64> {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| err(line, format!("`{key}`: `{v}` is not a number")))
            };
            let int = |v: &str| -> Result<u64> {
                v.parse::<u64>()
                    .map_err(|_| err(line, format!("`{key}`: `{v}` is not a nonnegative integer")))
            };
            let list = |v: &str| -> Result<Vec<f64>> {
                v.split(',').map(|s| num(s.trim())).collect()
            };
            match key {
                "network" => network = Some(dir.join(value)),
                "profiles" => profiles = Some(value.to_string()),
                "contract" => contract = Some(dir.join(value)),
                "prices" => prices = Some(dir.join(value)),
                "pv_owners" => {
                    cfg.pv_owners = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| int(s.trim()).map(|v| v as u32))
                        .collect::<Result<_>>()?
                }
                "variation" => cfg.variation = Some(num(value)?),
                "beta" => cfg.beta = Some(num(value)?),
                "modes" => {
                    cfg.modes = value
                        .split(',')
                        .map(|s| {
                            DistributionMode::parse(s.trim())
                                .ok_or_else(|| err(line, format!("unknown distribution mode `{}`", s.trim())))
                        })
                        .collect::<Result<_>>()?
                }
                "gamma" => cfg.pricing.gamma = num(value)?,
                "rho" => cfg.pricing.rho = num(value)?,
                "gap_tol" => cfg.pricing.gap_tol = num(value)?,
                "feasibility_tol" => cfg.pricing.feasibility_tol = num(value)?,
                "backend" => backend = value.to_string(),
                "external_command" => cfg.external_command = Some(value.to_string()),
                "node_limit" => cfg.node_limit = int(value)? as usize,
                "time_limit_s" => cfg.time_limit = Duration::from_secs_f64(num(value)?.max(0.0)),
                "parallel" => {
                    cfg.parallel = value
                        .parse()
                        .map_err(|_| err(line, format!("`parallel`: `{value}` is not true or false")))?
                }
                "beta_grid" => cfg.beta_grid = list(value)?,
                "variation_grid" => cfg.variation_grid = list(value)?,
                "variation_floor" => cfg.variation_floor = num(value)?,
                "hours_per_period" => cfg.hours_per_period = int(value)? as usize,
                "seed" => cfg.seed = int(value)?,
                _ => return Err(err(line, format!("unknown key `{key}`"))),
            }
        }

        let missing = |key: &str| HarnessError::Config {
            path: path.to_path_buf(),
            line: None,
            msg: format!("missing key `{key}`"),
        };
        cfg.network = network.ok_or_else(|| missing("network"))?;
        cfg.contract = contract.ok_or_else(|| missing("contract"))?;
        cfg.prices = prices.ok_or_else(|| missing("prices"))?;
        cfg.profiles = match profiles.ok_or_else(|| missing("profiles"))?.as_str() {
            "synth" => ProfileSource::Synthetic,
            file => ProfileSource::File(dir.join(file)),
        };
        cfg.set_backend(&backend)?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Selects the solver backend by name.
    pub fn set_backend(&mut self, name: &str) -> Result<()> {
        self.pricing.backend = match name {
            "native" => Backend::Native,
            "external" => Backend::External {
                command: self.external_command.clone().ok_or_else(|| HarnessError::Config {
                    path: self.path.clone(),
                    line: None,
                    msg: "backend `external` needs `external_command`".into(),
                })?,
            },
            other => {
                return Err(HarnessError::Config {
                    path: self.path.clone(),
                    line: None,
                    msg: format!("unknown backend `{other}`"),
                })
            }
        };
        Ok(())
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: String| {
            Err(HarnessError::Config {
                path: self.path.clone(),
                line: None,
                msg,
            })
        };
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.variation.is_some_and(|v| !unit(v)) {
            return bad("`variation` must lie in [0, 1]".into());
        }
        if self.beta.is_some_and(|b| !unit(b)) {
            return bad("`beta` must lie in [0, 1]".into());
        }
        if self.beta_grid.is_empty() || self.variation_grid.is_empty() {
            return bad("sweep grids must not be empty".into());
        }
        if !self.beta_grid.iter().chain(&self.variation_grid).all(|&x| unit(x)) {
            return bad("sweep grid values must lie in [0, 1]".into());
        }
        if self.modes.is_empty() {
            return bad("`modes` is empty".into());
        }
        if self.hours_per_period == 0 {
            return bad("`hours_per_period` must be positive".into());
        }
        if self.pricing.rho <= 0.0 {
            return bad("`rho` must be positive".into());
        }
        if self.pricing.gamma < 0.0 {
            return bad("`gamma` must be nonnegative".into());
        }
        Ok(())
    }

    pub fn budget(&self) -> Budget {
        Budget {
            node_limit: self.node_limit,
            time_limit: self.time_limit,
            parallel: self.parallel,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "network = net.json\nprofiles = p.csv\ncontract = c.csv\nprices = x.csv\n";

    #[test]
    fn defaults_and_relative_paths() {
        let cfg = RunConfig::parse(BASE, Path::new("/data/run.cfg")).unwrap();
        assert_eq!(cfg.network, PathBuf::from("/data/net.json"));
        assert_eq!(cfg.profiles, ProfileSource::File("/data/p.csv".into()));
        assert_eq!(cfg.modes, vec![DistributionMode::None]);
        assert_eq!(cfg.variation, None);
        assert!(!cfg.parallel);
        assert_eq!(cfg.pricing.backend, Backend::Native);
    }

    #[test]
    fn grids_modes_and_comments() {
        let text = format!(
            "{BASE}# sweep\nbeta_grid = 0.4, 0.6\nvariation_grid = 0.5,1 # trailing\nmodes = none,equal\nvariation = 1\nprofiles = synth\npv_owners = 1,3\n"
        );
        let cfg = RunConfig::parse(&text, Path::new("run.cfg")).unwrap();
        assert_eq!(cfg.beta_grid, vec![0.4, 0.6]);
        assert_eq!(cfg.variation_grid, vec![0.5, 1.0]);
        assert_eq!(cfg.modes, vec![DistributionMode::None, DistributionMode::Equal]);
        assert_eq!(cfg.variation, Some(1.0));
        assert_eq!(cfg.profiles, ProfileSource::Synthetic);
        assert_eq!(cfg.pv_owners, vec![1, 3]);
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse(&format!("{BASE}colour = red\n"), Path::new("a.cfg")).unwrap_err();
        assert_eq!(e.to_string(), "a.cfg:5: unknown key `colour`");
        let e = RunConfig::parse(&format!("{BASE}beta = lots\n"), Path::new("a.cfg")).unwrap_err();
        assert!(e.to_string().starts_with("a.cfg:5:"));
        let e = RunConfig::parse("network = n.json\n", Path::new("a.cfg")).unwrap_err();
        assert!(e.to_string().contains("missing key"));
        let e = RunConfig::parse(&format!("{BASE}variation = 1.5\n"), Path::new("a.cfg")).unwrap_err();
        assert!(e.to_string().contains("[0, 1]"));
        let e = RunConfig::parse(&format!("{BASE}backend = external\n"), Path::new("a.cfg")).unwrap_err();
        assert!(e.to_string().contains("external_command"));
        assert_eq!(e.exit_code(), 4);
    }
}
