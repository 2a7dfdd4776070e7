//! Run configuration: a TOML file merged with command-line overrides.
//!
//! ```toml
//! task = "reject"
//! seed = 1
//! out = "runs/qubit"
//!
//! [target]
//! counts = [25, 25, 25, 25]
//! pom = "tetra"
//!
//! [proposal]
//! n = 14
//! kappa = 0.1
//!
//! [sampling]
//! N = 100000
//! ```
//!
//! Every table rejects unknown keys. The merged result is validated before
//! any sampling starts.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    GenUniform,
    GenProposal,
    Reject,
    Verify,
    Ml,
    AcceptanceScan,
    Slice,
    Histogram,
    Fwhm,
    ShiftFraction,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.to_possible_value().expect("no skipped variants").get_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    #[default]
    Exact,
    Bernoulli,
}

/// A list of numbers written either as `[a, b, …]` or as a string
/// `"start:stop:step"` / `"a,b,c"`.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    List(Vec<f64>),
    Text(String),
}

impl GridSpec {
    fn resolve(&self, field: &str) -> Result<Vec<f64>, CliError> {
        match self {
            GridSpec::List(v) => Ok(v.clone()),
            GridSpec::Text(s) => parse_grid(s).map_err(|m| CliError::config(field, m)),
        }
    }
}

/// Parses `"start:stop:step"` or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number {t:?} in grid {s:?}"));
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        [a, b, h] => {
            let (a, b, h) = (num(a)?, num(b)?, num(h)?);
            if !(h > 0.0) || !(b >= a) {
                return Err(format!("grid {s:?} needs stop ≥ start and a positive step"));
            }
            let steps = ((b - a) / h).round();
            if ((a + steps * h) - b).abs() > 1e-9 * h.max(1.0) {
                return Err(format!("step of grid {s:?} does not divide its range"));
            }
            if steps > 1e7 {
                return Err(format!("grid {s:?} has too many points"));
            }
            // Rounded to 12 decimals so that "0:1:0.05" yields 0.15, not 0.15000000000000002.
            let tidy = |x: f64| (x * 1e12).round() / 1e12;
            Ok((0..=steps as usize).map(|i| if i == steps as usize { b } else { tidy(a + i as f64 * h) }).collect())
        }
        [_] => s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect(),
        _ => Err(format!("grid {s:?} must be start:stop:step or a comma list")),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    task: Option<Task>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    #[serde(default)]
    state: StateSection,
    #[serde(default)]
    target: TargetSection,
    #[serde(default)]
    proposal: ProposalSection,
    #[serde(default)]
    sampling: SamplingSection,
    #[serde(default)]
    verify: VerifySection,
    #[serde(default)]
    scan: ScanSection,
    #[serde(default)]
    slice: SliceSection,
    #[serde(default)]
    histogram: HistogramSection,
    #[serde(default)]
    fwhm: FwhmSection,
    #[serde(default)]
    shift: ShiftSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSection {
    m: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetSection {
    counts: Option<Vec<f64>>,
    counts_file: Option<PathBuf>,
    pom: Option<String>,
    pom_file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalSection {
    n: Option<usize>,
    kappa: Option<f64>,
    x1: Option<f64>,
    x2: Option<f64>,
    delta_file: Option<PathBuf>,
    split: Option<Split>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplingSection {
    #[serde(rename = "N")]
    total: Option<u64>,
    chunk_size: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct VerifySection {
    lambda_grid: Option<GridSpec>,
    q_grid_points: Option<usize>,
    n_uniform: Option<u64>,
    input: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScanSection {
    n: Option<Vec<usize>>,
    kappa: Option<GridSpec>,
    x1: Option<GridSpec>,
    x2: Option<GridSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SliceSection {
    directions: Option<Vec<[f64; 3]>>,
    points: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistogramSection {
    selector: Option<String>,
    bins: Option<usize>,
    lo: Option<f64>,
    width: Option<f64>,
    z_peak: Option<f64>,
    input: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FwhmSection {
    n: Option<Vec<usize>>,
    z_grid: Option<GridSpec>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShiftSection {
    n: Option<Vec<usize>>,
    dz_grid: Option<GridSpec>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub kappa: Option<f64>,
    pub counts: Option<String>,
    pub pom: Option<String>,
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    pub total: Option<u64>,
    pub chunk_size: Option<u64>,
    pub lambda_grid: Option<String>,
    pub input: Option<PathBuf>,
}

/// Fully resolved settings; serialized into the manifest.
#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub task: Task,
    pub seed: u64,
    pub out: PathBuf,
    pub threads: Option<usize>,
    pub m: Option<usize>,
    pub counts: Option<Vec<f64>>,
    pub counts_file: Option<PathBuf>,
    pub pom: Option<String>,
    pub pom_file: Option<PathBuf>,
    pub n: Option<usize>,
    pub kappa: f64,
    pub x1: f64,
    pub x2: f64,
    pub delta_file: Option<PathBuf>,
    pub split: Split,
    #[serde(rename = "N")]
    pub total: u64,
    pub chunk_size: u64,
    pub lambda_grid: Vec<f64>,
    pub q_grid_points: usize,
    pub n_uniform: u64,
    pub input: Option<PathBuf>,
    pub scan_n: Vec<usize>,
    pub scan_kappa: Vec<f64>,
    pub scan_x1: Vec<f64>,
    pub scan_x2: Vec<f64>,
    pub slice_directions: Vec<[f64; 3]>,
    pub slice_points: usize,
    pub selector: Option<String>,
    pub bins: usize,
    pub lo: f64,
    pub width: f64,
    pub z_peak: Option<f64>,
    pub fwhm_n: Vec<usize>,
    pub z_grid: Vec<f64>,
    pub shift_n: Vec<usize>,
    pub dz_grid: Vec<f64>,
}

pub const DEFAULT_CHUNK_SIZE: u64 = 1 << 20;

impl RunConfig {
    /// Reads the optional config file, applies overrides, fills defaults
    /// and validates.
    pub fn load(ov: Overrides) -> Result<Self, CliError> {
        let file = match &ov.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::config("config", format!("cannot read {}: {e}", p.display())))?;
                toml::from_str::<FileConfig>(&text).map_err(|e| CliError::config("config", e.message().to_string()))?
            }
            None => FileConfig::default(),
        };
        // Relative paths inside a config file are taken relative to it.
        let base = ov.config.as_deref().and_then(Path::parent).map(Path::to_path_buf).unwrap_or_default();
        let rel = |p: Option<PathBuf>| p.map(|p| if p.is_absolute() { p } else { base.join(p) });

        let task = ov.task.or(file.task).ok_or_else(|| CliError::config("task", "no task given"))?;
        let counts = match ov.counts {
            Some(s) => Some(
                s.parse::<wishart_states::target::Counts>()
                    .map_err(|e| CliError::config("target.counts", e.to_string()))?
                    .values()
                    .to_vec(),
            ),
            None => file.target.counts,
        };
        let lambda_grid = match ov.lambda_grid {
            Some(s) => parse_grid(&s).map_err(|m| CliError::config("verify.lambda_grid", m))?,
            None => match &file.verify.lambda_grid {
                Some(g) => g.resolve("verify.lambda_grid")?,
                None => wishart_states::verify::default_grid(),
            },
        };
        let m = ov.m.or(file.state.m);
        let n = ov.n.or(file.proposal.n);
        let kappa = ov.kappa.or(file.proposal.kappa).unwrap_or(0.0);
        let x1 = ov.x1.or(file.proposal.x1).unwrap_or(1.0);
        let x2 = ov.x2.or(file.proposal.x2).unwrap_or(0.0);
        let grid_or = |g: &Option<GridSpec>, field: &str, default: Vec<f64>| match g {
            Some(g) => g.resolve(field),
            None => Ok(default),
        };
        let cfg = RunConfig {
            task,
            seed: ov.seed.or(file.seed).unwrap_or(1),
            out: ov.out.or(rel(file.out)).unwrap_or_else(|| PathBuf::from(".")),
            threads: ov.threads.or(file.threads),
            m,
            counts,
            counts_file: rel(file.target.counts_file),
            pom: ov.pom.or(file.target.pom),
            pom_file: rel(file.target.pom_file),
            n,
            kappa,
            x1,
            x2,
            delta_file: rel(file.proposal.delta_file),
            split: file.proposal.split.unwrap_or_default(),
            total: ov.total.or(file.sampling.total).unwrap_or(100_000),
            chunk_size: ov.chunk_size.or(file.sampling.chunk_size).unwrap_or(DEFAULT_CHUNK_SIZE),
            lambda_grid,
            q_grid_points: file.verify.q_grid_points.unwrap_or(1001),
            n_uniform: file.verify.n_uniform.unwrap_or(1_000_000),
            input: ov.input.or(rel(file.verify.input)).or(rel(file.histogram.input)),
            scan_n: file.scan.n.unwrap_or_else(|| n.into_iter().collect()),
            scan_kappa: grid_or(&file.scan.kappa, "scan.kappa", vec![kappa])?,
            scan_x1: grid_or(&file.scan.x1, "scan.x1", vec![x1])?,
            scan_x2: grid_or(&file.scan.x2, "scan.x2", vec![x2])?,
            slice_directions: file.slice.directions.unwrap_or_else(|| {
                let s = 1.0 / 3f64.sqrt();
                vec![[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [s, s, s]]
            }),
            slice_points: file.slice.points.unwrap_or(201),
            selector: file.histogram.selector,
            bins: file.histogram.bins.unwrap_or(50),
            lo: file.histogram.lo.unwrap_or(-1.0),
            width: file.histogram.width.unwrap_or(0.04),
            z_peak: file.histogram.z_peak,
            fwhm_n: file.fwhm.n.unwrap_or_else(|| n.into_iter().collect()),
            z_grid: grid_or(&file.fwhm.z_grid, "fwhm.z_grid", parse_grid("0.05:0.95:0.05").expect("valid"))?,
            shift_n: file.shift.n.unwrap_or_else(|| match (n, m) {
                (Some(n), _) => vec![n],
                (None, Some(m)) => vec![m, m + 1],
                _ => Vec::new(),
            }),
            dz_grid: grid_or(&file.shift.dz_grid, "shift.dz_grid", parse_grid("0:1:0.05").expect("valid"))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn needs_target(&self) -> bool {
        matches!(self.task, Task::Reject | Task::Verify | Task::Ml | Task::AcceptanceScan | Task::Slice)
    }

    fn validate(&self) -> Result<(), CliError> {
        let err = |f: &str, m: String| Err(CliError::config(f, m));
        if self.threads == Some(0) {
            return err("threads", "must be positive".into());
        }
        if let Some(m) = self.m {
            if m < 2 {
                return err("state.m", format!("need m ≥ 2, got {m}"));
            }
        }
        if let Some(n) = self.n {
            if n < 2 {
                return err("proposal.n", format!("need n ≥ 2, got {n}"));
            }
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return err("proposal.kappa", format!("{} outside [0, 1]", self.kappa));
        }
        if !(0.0..=1.0).contains(&self.x1) {
            return err("proposal.x1", format!("{} outside [0, 1]", self.x1));
        }
        if !self.x2.is_finite() {
            return err("proposal.x2", "must be finite".into());
        }
        if self.total == 0 {
            return err("sampling.N", "must be positive".into());
        }
        if self.chunk_size == 0 {
            return err("sampling.chunk_size", "must be positive".into());
        }
        if self.counts.is_some() && self.counts_file.is_some() {
            return err("target.counts", "give counts or counts_file, not both".into());
        }
        if self.pom.is_some() && self.pom_file.is_some() {
            return err("target.pom", "give pom or pom_file, not both".into());
        }
        if self.delta_file.is_some() && self.x2 != 0.0 {
            return err("proposal.delta_file", "an explicit shift replaces x2; leave x2 at 0".into());
        }
        let g = &self.lambda_grid;
        if g.len() < 2 || g.windows(2).any(|w| !(w[1] > w[0])) || g[0] < 0.0 || g[g.len() - 1] > 1.0 {
            return err("verify.lambda_grid", "need at least two increasing values in [0, 1]".into());
        }
        if self.q_grid_points < 2 {
            return err("verify.q_grid_points", "need at least 2".into());
        }
        if self.n_uniform == 0 {
            return err("verify.n_uniform", "must be positive".into());
        }
        if self.needs_target() && self.counts.is_none() && self.counts_file.is_none() {
            return err("target.counts", format!("task {} needs counts", self.task));
        }
        match self.task {
            Task::GenUniform | Task::Histogram | Task::Fwhm | Task::ShiftFraction if self.m.is_none() => {
                return err("state.m", format!("task {} needs m", self.task));
            }
            Task::GenProposal if self.m.is_none() && self.counts.is_none() && self.counts_file.is_none() => {
                return err("state.m", "task gen-proposal needs m or counts".into());
            }
            _ => {}
        }
        let needs_n = matches!(self.task, Task::GenProposal | Task::Reject | Task::Slice)
            || (self.task == Task::Verify && self.input.is_none());
        if needs_n && self.n.is_none() {
            return err("proposal.n", format!("task {} needs n", self.task));
        }
        match self.task {
            Task::AcceptanceScan => {
                if self.scan_n.is_empty() {
                    return err("scan.n", "need at least one n".into());
                }
                for (f, v) in [("scan.kappa", &self.scan_kappa), ("scan.x1", &self.scan_x1)] {
                    if v.is_empty() || v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                        return err(f, "need values in [0, 1]".into());
                    }
                }
                if self.scan_x2.is_empty() {
                    return err("scan.x2", "need at least one value".into());
                }
            }
            Task::Slice => {
                if self.slice_points < 3 {
                    return err("slice.points", "need at least 3".into());
                }
                for d in &self.slice_directions {
                    let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if !(norm > 0.0) {
                        return err("slice.directions", "directions must be nonzero".into());
                    }
                }
            }
            Task::Histogram => {
                match self.selector.as_deref().map(str::trim) {
                    None | Some("") => return err("histogram.selector", "empty selector".into()),
                    Some(_) => {}
                }
                if self.bins == 0 || !(self.width > 0.0) || !self.lo.is_finite() {
                    return err("histogram.bins", "need bins ≥ 1, a positive width and a finite lower edge".into());
                }
                if let Some(z) = self.z_peak {
                    if !(z.abs() < 1.0) {
                        return err("histogram.z_peak", format!("need |z_peak| < 1, got {z}"));
                    }
                }
            }
            Task::Fwhm => {
                if self.fwhm_n.is_empty() {
                    return err("fwhm.n", "need at least one n".into());
                }
                if self.z_grid.iter().any(|z| !(z.abs() < 1.0)) {
                    return err("fwhm.z_grid", "need |z| < 1".into());
                }
            }
            Task::ShiftFraction => {
                if self.shift_n.is_empty() {
                    return err("shift.n", "need at least one n".into());
                }
                if self.dz_grid.iter().any(|z| !z.is_finite()) {
                    return err("shift.dz_grid", "values must be finite".into());
                }
            }
            _ => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("0:1:0.25").unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(parse_grid("0.1, 0.5,0.9").unwrap(), vec![0.1, 0.5, 0.9]);
        let g = parse_grid("0:1:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[10], 1.0);
        assert_eq!(parse_grid("0:1:0.05").unwrap()[3], 0.15);
        assert!(parse_grid("0:1:0.3").is_err());
        assert!(parse_grid("1:0:0.1").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn file_keys_are_checked() {
        assert!(toml::from_str::<FileConfig>("[proposal]\nkapa = 0.1").is_err());
        let f: FileConfig = toml::from_str("task = \"ml\"\n[target]\ncounts = [1, 2.5]\n[sampling]\nN = 7").unwrap();
        assert_eq!(f.task, Some(Task::Ml));
        assert_eq!(f.target.counts, Some(vec![1.0, 2.5]));
        assert_eq!(f.sampling.total, Some(7));
    }

    #[test]
    fn overrides_win() {
        let ov = Overrides { task: Some(Task::GenUniform), m: Some(3), total: Some(10), ..Default::default() };
        let c = RunConfig::load(ov).unwrap();
        assert_eq!(c.m, Some(3));
        assert_eq!(c.total, 10);
        assert_eq!(c.chunk_size, DEFAULT_CHUNK_SIZE);
        let bad = Overrides { task: Some(Task::GenUniform), kappa: Some(1.5), m: Some(2), ..Default::default() };
        assert!(matches!(RunConfig::load(bad), Err(CliError::Config { .. })));
    }
}
