//! Experiment scenarios and their flat `key = value` text format.
//!
//! ```text
//! # desk-scale sweep
//! m = 32
//! users = 4
//! n_k = 2
//! d_k = 2
//! k_s = 16, 12, 8
//! snr_db = -6, 0, 6, 12, 18
//! trials = 20
//! algorithms = wmmse, allsp, aullsp, greedy
//! ```
//!
//! Per-user lists given as a single value are broadcast to every user. Angles
//! are in radians, or in degrees under the `_deg` keys. Unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelParams;
use crate::config::{noise_from_snr, SystemConfig};
use crate::cost::ResourceGrid;
use crate::error::{PrecodingError, Result};
use crate::selection::SelectionRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Wmmse,
    Allsp,
    Aullsp,
    Greedy,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Wmmse, Algorithm::Allsp, Algorithm::Aullsp, Algorithm::Greedy];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Wmmse => "wmmse",
            Algorithm::Allsp => "allsp",
            Algorithm::Aullsp => "aullsp",
            Algorithm::Greedy => "greedy",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = PrecodingError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| PrecodingError::InvalidConfig(format!("unknown algorithm '{s}'")))
    }
}

fn rule_name(rule: SelectionRule) -> &'static str {
    match rule {
        SelectionRule::Penalized => "penalized",
        SelectionRule::PlainGradient => "plain",
        SelectionRule::Guarded => "guarded",
    }
}

fn parse_rule(s: &str) -> Result<SelectionRule> {
    match s {
        "penalized" => Ok(SelectionRule::Penalized),
        "plain" => Ok(SelectionRule::PlainGradient),
        "guarded" => Ok(SelectionRule::Guarded),
        _ => Err(PrecodingError::InvalidConfig(format!("unknown selection rule '{s}'"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ChannelSource {
    Synthesize(ChannelParams),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    /// Base configuration. `k_s`, `seed` and `sigma2` are overridden per cell
    /// when the corresponding sweep lists are set.
    pub cfg: SystemConfig,
    pub channel: ChannelSource,
    pub algorithms: Vec<Algorithm>,
    /// Empty means "use `cfg.sigma2` as given".
    pub snr_db: Vec<f64>,
    pub k_s: Vec<usize>,
    /// Seeds `cfg.seed .. cfg.seed + trials`.
    pub trials: usize,
    pub grid: ResourceGrid,
    pub max_iter: usize,
    pub tol: f64,
    pub rule: SelectionRule,
    pub out_dir: PathBuf,
}

impl Scenario {
    /// `M = 32`, four users with two antennas and two streams each.
    pub fn desk() -> Self {
        Scenario {
            cfg: SystemConfig::uniform(32, 4, 2, 2, 16),
            channel: ChannelSource::Synthesize(ChannelParams::default()),
            algorithms: Algorithm::ALL.to_vec(),
            snr_db: vec![-6.0, 0.0, 6.0, 12.0, 18.0],
            k_s: vec![16, 12, 8],
            trials: 20,
            grid: ResourceGrid::reference(),
            max_iter: 50,
            tol: 1e-5,
            rule: SelectionRule::Penalized,
            out_dir: PathBuf::from("out"),
        }
    }

    /// `M = 128`, four users with four antennas and four streams each.
    pub fn full_scale() -> Self {
        Scenario {
            cfg: SystemConfig::uniform(128, 4, 4, 4, 64),
            k_s: vec![64, 48, 32],
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PrecodingError::InvalidConfig(m.into()));
        if self.algorithms.is_empty() {
            return bad("no algorithms selected");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.k_s.is_empty() {
            return bad("k_s sweep is empty");
        }
        if !(self.tol > 0.0) {
            return bad("tolerance must be positive");
        }
        self.grid.validate()?;
        for cfg in self.cells().map(|(_, snr, k_s)| self.cell_config(0, snr, k_s)) {
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.trials as u64).map(move |t| self.cfg.seed + t)
    }

    /// SNR points; a single point derived from `cfg.sigma2` when the list is empty.
    pub fn snr_points(&self) -> Vec<f64> {
        if self.snr_db.is_empty() {
            vec![10.0 * (self.cfg.p_max / self.cfg.sigma2[0]).log10()]
        } else {
            self.snr_db.clone()
        }
    }

    fn cells(&self) -> impl Iterator<Item = (usize, f64, usize)> + '_ {
        let snrs = self.snr_points();
        snrs.into_iter()
            .enumerate()
            .flat_map(move |(i, s)| self.k_s.iter().map(move |&k| (i, s, k)))
    }

    /// Configuration for one (seed, snr, K_s) cell.
    pub fn cell_config(&self, seed_offset: u64, snr_db: f64, k_s: usize) -> SystemConfig {
        let mut cfg = self.cfg.clone().with_k_s(k_s).with_seed(self.cfg.seed + seed_offset);
        if !self.snr_db.is_empty() {
            cfg.sigma2 = noise_from_snr(cfg.p_max, cfg.users(), snr_db);
        }
        cfg
    }

    /// Canonical text; `parse(to_text(s)) == s`.
    pub fn to_text(&self) -> String {
        let list = |v: &[String]| v.join(", ");
        let nums = |v: &[f64]| list(&v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>());
        let ints = |v: &[usize]| list(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        let mut out = String::new();
        let mut put = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        put("m", self.cfg.m.to_string());
        put("users", self.cfg.users().to_string());
        put("n_k", ints(&self.cfg.n_k));
        put("d_k", ints(&self.cfg.d_k));
        put("p_max", format!("{:?}", self.cfg.p_max));
        put("sigma2", nums(&self.cfg.sigma2));
        put("alpha", nums(&self.cfg.alpha));
        put("seed", self.cfg.seed.to_string());
        put("k_s", ints(&self.k_s));
        put("snr_db", nums(&self.snr_db));
        put("trials", self.trials.to_string());
        put(
            "algorithms",
            list(&self.algorithms.iter().map(|a| a.name().to_string()).collect::<Vec<_>>()),
        );
        match &self.channel {
            ChannelSource::Synthesize(p) => {
                put("paths", p.paths.to_string());
                put("angle_spread", format!("{:?}", p.angle_spread));
                put("sector", format!("{:?}", p.sector));
                put("spacing", format!("{:?}", p.spacing));
            }
            ChannelSource::File(path) => put("channel_file", path.display().to_string()),
        }
        put(
            "grid",
            format!(
                "{}, {}, {}, {}",
                self.grid.rbs, self.grid.subcarriers_per_rb, self.grid.slots, self.grid.data_symbols_per_slot
            ),
        );
        put("max_iter", self.max_iter.to_string());
        put("tol", format!("{:?}", self.tol));
        put("rule", rule_name(self.rule).to_string());
        put("out_dir", self.out_dir.display().to_string());
        out
    }

    /// First 12 hex digits of the SHA-256 of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }

    /// Parses the text format on top of [`Scenario::desk`] defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| PrecodingError::Parse {
                line: i + 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            let key = k.trim().to_string();
            if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(PrecodingError::Parse {
                    line: i + 1,
                    message: format!("duplicate key '{key}'"),
                });
            }
        }

        let mut sc = Scenario::desk();
        let mut params = ChannelParams::default();
        let mut file: Option<PathBuf> = None;
        let users_line = entries.get("users").map(|(l, _)| *l);
        let users: Option<usize> = match entries.get("users") {
            Some((line, v)) => Some(scalar(*line, v)?),
            None => None,
        };
        let mut per_user: BTreeMap<&str, (usize, String)> = BTreeMap::new();

        for (key, (line, v)) in &entries {
            let line = *line;
            match key.as_str() {
                "users" => {}
                "m" => sc.cfg.m = scalar(line, v)?,
                "n_k" | "d_k" | "sigma2" | "alpha" => {
                    per_user.insert(key.as_str(), (line, v.clone()));
                }
                "p_max" => sc.cfg.p_max = scalar(line, v)?,
                "seed" => sc.cfg.seed = scalar(line, v)?,
                "k_s" => sc.k_s = list(line, v)?,
                "snr_db" => sc.snr_db = list(line, v)?,
                "trials" => sc.trials = scalar(line, v)?,
                "algorithms" => sc.algorithms = list(line, v)?,
                "paths" => params.paths = scalar(line, v)?,
                "angle_spread" => params.angle_spread = scalar(line, v)?,
                "angle_spread_deg" => params.angle_spread = scalar::<f64>(line, v)?.to_radians(),
                "sector" => params.sector = scalar(line, v)?,
                "sector_deg" => params.sector = scalar::<f64>(line, v)?.to_radians(),
                "spacing" => params.spacing = scalar(line, v)?,
                "channel_file" => file = Some(PathBuf::from(v)),
                "grid" => {
                    let g: Vec<u64> = list(line, v)?;
                    if g.len() != 4 {
                        return Err(PrecodingError::Parse {
                            line,
                            message: "grid needs rbs, subcarriers, slots, symbols".into(),
                        });
                    }
                    sc.grid = ResourceGrid::new(g[0], g[1], g[2], g[3])?;
                }
                "max_iter" => sc.max_iter = scalar(line, v)?,
                "tol" => sc.tol = scalar(line, v)?,
                "rule" => sc.rule = parse_rule(v).map_err(|e| PrecodingError::Parse {
                    line,
                    message: e.to_string(),
                })?,
                "out_dir" => sc.out_dir = PathBuf::from(v),
                other => {
                    return Err(PrecodingError::Parse {
                        line,
                        message: format!("unknown key '{other}'"),
                    })
                }
            }
        }

        let k = match (users, per_user.get("n_k")) {
            (Some(k), _) => k,
            (None, Some((line, v))) => list::<usize>(*line, v)?.len(),
            (None, None) => sc.cfg.users(),
        };
        if k == 0 {
            return Err(PrecodingError::Parse {
                line: users_line.unwrap_or(0),
                message: "users must be positive".into(),
            });
        }
        sc.cfg.n_k = broadcast(per_user.get("n_k"), &sc.cfg.n_k, k)?;
        sc.cfg.d_k = broadcast(per_user.get("d_k"), &sc.cfg.d_k, k)?;
        sc.cfg.sigma2 = broadcast(per_user.get("sigma2"), &sc.cfg.sigma2, k)?;
        sc.cfg.alpha = broadcast(per_user.get("alpha"), &sc.cfg.alpha, k)?;
        sc.cfg.k_s = sc.k_s.first().copied().unwrap_or(sc.cfg.k_s);
        sc.channel = match file {
            Some(p) => ChannelSource::File(p),
            None => ChannelSource::Synthesize(params),
        };
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PrecodingError::io(path, e))?;
        Self::parse(&text)
    }
}

fn scalar<T: FromStr>(line: usize, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim().parse().map_err(|e: T::Err| PrecodingError::Parse {
        line,
        message: format!("bad value '{v}': {e}"),
    })
}

fn list<T: FromStr>(line: usize, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| scalar(line, x)).collect()
}

/// A per-user list: absent keeps a broadcast of the default, one value is
/// repeated, otherwise the length must match.
fn broadcast<T: FromStr + Clone>(entry: Option<&(usize, String)>, default: &[T], k: usize) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let (line, vals) = match entry {
        Some((line, v)) => (*line, list::<T>(*line, v)?),
        None => (0, default.to_vec()),
    };
    match vals.len() {
        n if n == k => Ok(vals),
        1 => Ok(vec![vals[0].clone(); k]),
        n if entry.is_none() && n > 0 => Ok(vec![vals[0].clone(); k]),
        n => Err(PrecodingError::Parse {
            line,
            message: format!("expected 1 or {k} values, got {n}"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_defaults_validate() {
        let sc = Scenario::desk();
        sc.validate().unwrap();
        assert_eq!(sc.cfg.n(), 8);
        assert_eq!(sc.cfg.d(), 8);
        Scenario::full_scale().validate().unwrap();
    }

    #[test]
    fn text_round_trip() {
        let mut sc = Scenario::desk();
        sc.cfg.alpha = vec![1.0, 0.5, 2.0, 1.0];
        sc.rule = SelectionRule::Guarded;
        sc.grid = ResourceGrid::long_period();
        let back = Scenario::parse(&sc.to_text()).unwrap();
        assert_eq!(back, sc);
        assert_eq!(back.hash(), sc.hash());
    }

    #[test]
    fn broadcast_and_overrides() {
        let text = "m = 16\nusers = 2\nn_k = 2\nd_k = 1, 2 # mixed\nk_s = 8\nsnr_db = 0\ntrials = 3\nalgorithms = allsp\n";
        let sc = Scenario::parse(text).unwrap();
        assert_eq!(sc.cfg.n_k, vec![2, 2]);
        assert_eq!(sc.cfg.d_k, vec![1, 2]);
        assert_eq!(sc.cfg.sigma2.len(), 2);
        assert_eq!(sc.algorithms, vec![Algorithm::Allsp]);
        sc.validate().unwrap();
        let cell = sc.cell_config(2, 0.0, 8);
        assert_eq!(cell.seed, 2);
        assert_eq!(cell.sigma2, vec![1.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Scenario::parse("frobnicate = 1"), Err(PrecodingError::Parse { line: 1, .. })));
        assert!(Scenario::parse("m = 8\nm = 9").is_err());
        assert!(Scenario::parse("m 8").is_err());
        assert!(Scenario::parse("users = 3\nn_k = 1, 2").is_err());
        assert!(Scenario::parse("algorithms = fastest").is_err());
        let mut sc = Scenario::desk();
        sc.trials = 0;
        assert!(sc.validate().is_err());
        sc = Scenario::desk();
        sc.k_s = vec![4];
        assert!(sc.validate().is_err());
    }

    #[test]
    fn channel_file_key() {
        let sc = Scenario::parse("channel_file = /tmp/h.txt").unwrap();
        assert_eq!(sc.channel, ChannelSource::File(PathBuf::from("/tmp/h.txt")));
    }
}
