//! TOML run configuration.
//!
//! ```toml
//! [scenario]
//! n = 32
//! k = 16            # or m = 2
//! spacing = 0.5
//! theta_deg = 41.177
//! snr_db = 0.0
//! snapshots = 32
//! step_deg = 1.0
//! signal_model = "repeated-frame"
//! root_filter = "all"
//!
//! [run]
//! seed = 1
//! trials = 200
//! methods = ["apa", "hadpa", "hdapa", "rm-hdapa"]
//! format = "csv"
//! out = "curve.csv"
//!
//! [sweep-snr]
//! values = [-10.0, -5.0, 0.0, 5.0, 10.0]
//!
//! [complexity]
//! axis = "stepsize"
//! values = [1.0, 0.5, 0.25, 0.125]
//! ```
//!
//! Every error carries `path:line:column`.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use toml::Spanned;

use crate::complexity::Method;
use crate::experiments::{ComplexityAxis, OutputFormat, ScenarioPoint, SweepAxis};
use crate::frontend::SignalModel;
use crate::root_music::RootFilter;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: PathBuf,
    /// 1-based; `None` for errors not tied to a position (e.g. I/O).
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{l}:{c}: {}", self.path.display(), self.message),
            _ => write!(f, "{}: {}", self.path.display(), self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub n: Option<Spanned<usize>>,
    pub k: Option<Spanned<usize>>,
    pub m: Option<Spanned<usize>>,
    pub spacing: Option<Spanned<f64>>,
    pub theta_deg: Option<Spanned<f64>>,
    pub snr_db: Option<Spanned<f64>>,
    pub snapshots: Option<Spanned<usize>>,
    pub step_deg: Option<Spanned<f64>>,
    pub signal_model: Option<SignalModel>,
    pub root_filter: Option<RootFilter>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: Option<u64>,
    pub trials: Option<Spanned<usize>>,
    pub methods: Option<Spanned<Vec<Method>>>,
    pub format: Option<OutputFormat>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub values: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSweepSection<A> {
    pub axis: Option<A>,
    pub values: Option<Spanned<Vec<f64>>>,
}

impl<A> Default for AxisSweepSection<A> {
    fn default() -> Self {
        Self {
            axis: None,
            values: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub scenario: ScenarioSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default, rename = "sweep-snr")]
    pub sweep_snr: SweepSection,
    #[serde(default, rename = "sweep-stepsize")]
    pub sweep_stepsize: SweepSection,
    #[serde(default, rename = "sweep-snapshots")]
    pub sweep_snapshots: SweepSection,
    #[serde(default, rename = "sweep-n")]
    pub sweep_n: SweepSection,
    #[serde(default)]
    pub crlb: AxisSweepSection<SweepAxis>,
    #[serde(default)]
    pub complexity: AxisSweepSection<ComplexityAxis>,
}

/// Parsed file together with its source, for positioned errors.
#[derive(Debug)]
pub struct Config {
    pub path: PathBuf,
    text: String,
    pub file: ConfigFile,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, col)
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: e.to_string(),
        })?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, ConfigError> {
        match toml::from_str::<ConfigFile>(&text) {
            Ok(file) => Ok(Self {
                path: path.to_path_buf(),
                text,
                file,
            }),
            Err(e) => {
                let (line, column) = match e.span() {
                    Some(s) => {
                        let (l, c) = line_col(&text, s.start);
                        (Some(l), Some(c))
                    }
                    None => (None, None),
                };
                Err(ConfigError {
                    path: path.to_path_buf(),
                    line,
                    column,
                    message: e.message().trim().to_string(),
                })
            }
        }
    }

    pub fn error_at(&self, span: Range<usize>, message: impl Into<String>) -> ConfigError {
        let (l, c) = line_col(&self.text, span.start);
        ConfigError {
            path: self.path.clone(),
            line: Some(l),
            column: Some(c),
            message: message.into(),
        }
    }

    /// Overlays the `[scenario]` section on `base`, checking each value.
    pub fn apply_scenario(&self, base: &mut ScenarioPoint) -> Result<(), ConfigError> {
        let s = &self.file.scenario;
        let at = |span: Range<usize>, msg: String| self.error_at(span, msg);

        if let Some(n) = &s.n {
            base.n_elements = *n.get_ref();
        }
        match (&s.k, &s.m) {
            (Some(k), Some(m)) => {
                if k.get_ref() * m.get_ref() != base.n_elements {
                    return Err(at(m.span(), format!("k * m must equal n = {}", base.n_elements)));
                }
                base.n_subarrays = *k.get_ref();
            }
            (Some(k), None) => base.n_subarrays = *k.get_ref(),
            (None, Some(m)) => {
                let m_val = *m.get_ref();
                if m_val == 0 || !base.n_elements.is_multiple_of(m_val) {
                    return Err(at(
                        m.span(),
                        format!("m = {m_val} does not divide n = {}", base.n_elements),
                    ));
                }
                base.n_subarrays = base.n_elements / m_val;
            }
            (None, None) => {}
        }
        if let Err(e) = base.geometry() {
            let span = s.k.as_ref().or(s.m.as_ref()).or(s.n.as_ref()).map(|v| v.span());
            return Err(match span {
                Some(sp) => self.error_at(sp, e.to_string()),
                None => self.error_at(0..0, e.to_string()),
            });
        }
        if let Some(v) = &s.spacing {
            base.spacing = *v.get_ref();
            base.geometry().map_err(|e| at(v.span(), e.to_string()))?;
        }
        if let Some(v) = &s.theta_deg {
            base.theta_deg = *v.get_ref();
            base.angle().map_err(|e| at(v.span(), e.to_string()))?;
        }
        if let Some(v) = &s.snr_db {
            base.snr_db = *v.get_ref();
            if !base.snr_db.is_finite() {
                return Err(at(v.span(), "snr_db must be finite".into()));
            }
        }
        if let Some(v) = &s.snapshots {
            base.snapshots = *v.get_ref();
            if base.snapshots == 0 {
                return Err(at(v.span(), "snapshots must be at least 1".into()));
            }
        }
        if let Some(v) = &s.step_deg {
            base.step_deg = *v.get_ref();
            base.grid().map_err(|e| at(v.span(), e.to_string()))?;
        }
        if let Some(v) = s.signal_model {
            base.signal_model = v;
        }
        if let Some(v) = s.root_filter {
            base.root_filter = v;
        }
        Ok(())
    }

    pub fn trials(&self) -> Result<Option<usize>, ConfigError> {
        match &self.file.run.trials {
            Some(t) if *t.get_ref() == 0 => Err(self.error_at(t.span(), "trials must be at least 1")),
            Some(t) => Ok(Some(*t.get_ref())),
            None => Ok(None),
        }
    }

    pub fn methods(&self) -> Result<Option<Vec<Method>>, ConfigError> {
        match &self.file.run.methods {
            Some(m) if m.get_ref().is_empty() => Err(self.error_at(m.span(), "methods must not be empty")),
            Some(m) => Ok(Some(m.get_ref().clone())),
            None => Ok(None),
        }
    }

    /// Values of the `[sweep-*]` section for `axis`, checked against `base`.
    pub fn sweep_values(&self, axis: SweepAxis, base: &ScenarioPoint) -> Result<Option<Vec<f64>>, ConfigError> {
        let section = match axis {
            SweepAxis::Snr => &self.file.sweep_snr,
            SweepAxis::Stepsize => &self.file.sweep_stepsize,
            SweepAxis::Snapshots => &self.file.sweep_snapshots,
            SweepAxis::Elements => &self.file.sweep_n,
            SweepAxis::SubarraySize => return Ok(None),
        };
        self.checked_values(section.values.as_ref(), axis, base)
    }

    pub fn crlb_sweep(&self, base: &ScenarioPoint) -> Result<Option<(SweepAxis, Vec<f64>)>, ConfigError> {
        let axis = self.file.crlb.axis.unwrap_or(SweepAxis::Snr);
        Ok(self
            .checked_values(self.file.crlb.values.as_ref(), axis, base)?
            .map(|v| (axis, v)))
    }

    pub fn complexity_sweep(&self) -> (Option<ComplexityAxis>, Option<&Spanned<Vec<f64>>>) {
        (self.file.complexity.axis, self.file.complexity.values.as_ref())
    }

    pub fn checked_values(
        &self,
        values: Option<&Spanned<Vec<f64>>>,
        axis: SweepAxis,
        base: &ScenarioPoint,
    ) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some(v) = values else { return Ok(None) };
        if v.get_ref().is_empty() {
            return Err(self.error_at(v.span(), "values must not be empty"));
        }
        for &x in v.get_ref() {
            base.with_axis(axis, x)
                .map_err(|e| self.error_at(v.span(), format!("value {x}: {e}")))?;
        }
        Ok(Some(v.get_ref().clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Config, ConfigError> {
        Config::parse(Path::new("run.toml"), text.to_string())
    }

    #[test]
    fn full_file_round_trip() {
        let cfg = parse(
            "[scenario]\nn = 128\nm = 8\ntheta_deg = 20.0\nsignal_model = \"independent-blocks\"\n\
             [run]\nseed = 9\ntrials = 10\nmethods = [\"apa\", \"rm-hdapa\"]\nformat = \"json\"\n\
             [sweep-snr]\nvalues = [0.0, 10.0]\n",
        )
        .unwrap();
        let mut p = ScenarioPoint::default();
        cfg.apply_scenario(&mut p).unwrap();
        assert_eq!((p.n_elements, p.n_subarrays), (128, 16));
        assert_eq!(p.signal_model, SignalModel::IndependentBlocks);
        assert_eq!(cfg.file.run.seed, Some(9));
        assert_eq!(
            cfg.methods().unwrap().unwrap(),
            vec![Method::Apa, Method::RootMusicHdapa]
        );
        assert_eq!(cfg.file.run.format, Some(OutputFormat::Json));
        assert_eq!(cfg.sweep_values(SweepAxis::Snr, &p).unwrap().unwrap(), vec![0.0, 10.0]);
    }

    #[test]
    fn syntax_errors_are_positioned() {
        let e = parse("[scenario]\nn = 32\nk = \n").unwrap_err();
        assert_eq!(e.line, Some(3));
        assert!(e.to_string().starts_with("run.toml:3:"));
    }

    #[test]
    fn unknown_keys_and_methods_are_positioned() {
        let e = parse("[run]\ntrials = 5\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, Some(3));
        let e = parse("[run]\nmethods = [\"apa\", \"music\"]\n").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn semantic_errors_are_positioned() {
        let cfg = parse("[scenario]\nn = 32\nk = 5\n").unwrap();
        let e = cfg.apply_scenario(&mut ScenarioPoint::default()).unwrap_err();
        assert_eq!(e.line, Some(3));

        let cfg = parse("[scenario]\nstep_deg = 0.7\n").unwrap();
        let e = cfg.apply_scenario(&mut ScenarioPoint::default()).unwrap_err();
        assert_eq!((e.line, e.column), (Some(2), Some(12)));

        let cfg = parse("\n[sweep-n]\nvalues = [32.0, 33.0]\n").unwrap();
        let e = cfg
            .sweep_values(SweepAxis::Elements, &ScenarioPoint::default())
            .unwrap_err();
        assert_eq!(e.line, Some(3));

        let cfg = parse("[run]\n\ntrials = 0\n").unwrap();
        assert_eq!(cfg.trials().unwrap_err().line, Some(3));
    }

    #[test]
    fn axis_short_names() {
        let cfg = parse("[crlb]\naxis = \"m\"\n[complexity]\naxis = \"n\"\n").unwrap();
        assert_eq!(cfg.file.crlb.axis, Some(SweepAxis::SubarraySize));
        assert_eq!(cfg.file.complexity.axis, Some(ComplexityAxis::Elements));
    }

    #[test]
    fn missing_file_is_reported() {
        let e = Config::load(Path::new("/nonexistent/run.toml")).unwrap_err();
        assert!(e.line.is_none());
    }
}
