//! Experiment configuration: a TOML file, then `--set key.path=value`
//! overrides, then validation.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use oamplab_core::oamp::VarianceTracking;
use oamplab_core::{make_kappa_spectrum, ChannelSpectrum, Constellation, Prior};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub prior: PriorConfig,
    pub code: CodeConfig,
    pub detector: DetectorConfig,
    pub montecarlo: MonteCarloConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    pub snr_db: f64,
    /// Replaces `snr_db` when present.
    pub snr_db_sweep: Option<Vec<f64>>,
    /// Singular values from a spectrum CSV instead of the kappa ladder.
    pub spectrum_file: Option<PathBuf>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            m: 512,
            n: 512,
            kappa: 10.0,
            snr_db: 8.0,
            snr_db_sweep: None,
            spectrum_file: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    /// `qpsk`, `bpsk`, `gaussian` or `bernoulli-gaussian(p)`.
    pub name: String,
    /// Constellation CSV (`re,im,prob` rows); overrides `name`.
    pub constellation_file: Option<PathBuf>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            name: "qpsk".into(),
            constellation_file: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CodeConfig {
    /// Parity-check matrix in alist format; a regular code is built otherwise.
    pub alist: Option<PathBuf>,
    pub n: usize,
    pub dv: usize,
    pub dc: usize,
    pub seed: u64,
    pub inner_iters: usize,
    /// Transfer-curve CSV for `rate` and `match-check`.
    pub curve: Option<PathBuf>,
    pub rho_grid: Vec<f64>,
    pub blocks_per_point: usize,
}

impl Default for CodeConfig {
    fn default() -> Self {
        let mut rho_grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05).collect();
        rho_grid.extend([2.5, 3.0, 4.0, 6.0, 10.0, 20.0, 50.0, 100.0]);
        CodeConfig {
            alist: None,
            n: 8192,
            dv: 3,
            dc: 6,
            seed: 1,
            inner_iters: 50,
            curve: None,
            rho_grid,
            blocks_per_point: 24,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub outer_iters: usize,
    /// `analytic` or `empirical`.
    pub variance_tracking: String,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            outer_iters: 30,
            variance_tracking: "analytic".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    /// Blocks per point (BER sweeps) or trials (conformance).
    pub trials: usize,
    /// Stops a BER point early once this many bit errors are counted.
    pub target_bit_errors: Option<usize>,
    pub master_seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            trials: 100,
            target_bit_errors: Some(200),
            master_seed: 1,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// `bits` or `nats`.
    pub units: String,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            units: "bits".into(),
            formats: vec!["csv".into()],
        }
    }
}

/// Rate units for printed and written values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Units {
    Bits,
    Nats,
}

impl Units {
    pub fn convert(self, nats: f64) -> f64 {
        match self {
            Units::Bits => nats / std::f64::consts::LN_2,
            Units::Nats => nats,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Units::Bits => "bits",
            Units::Nats => "nats",
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies `key.path=value` overrides and
    /// validates the result.
    pub fn load(path: Option<&std::path::Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig = toml::Value::Table(value)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("invalid config: {}", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.system;
        if s.m == 0 {
            bail!("system.m: must be at least 1");
        }
        if s.n == 0 {
            bail!("system.n: must be at least 1");
        }
        if !(s.kappa >= 1.0) || !s.kappa.is_finite() {
            bail!("system.kappa: must be a finite value >= 1, got {}", s.kappa);
        }
        if !s.snr_db.is_finite() {
            bail!("system.snr_db: must be finite");
        }
        if let Some(sweep) = &s.snr_db_sweep {
            if sweep.is_empty() {
                bail!("system.snr_db_sweep: must not be empty");
            }
            if let Some(i) = sweep.iter().position(|x| !x.is_finite()) {
                bail!("system.snr_db_sweep[{i}]: must be finite");
            }
        }
        if self.montecarlo.trials == 0 {
            bail!("montecarlo.trials: must be at least 1");
        }
        if self.montecarlo.target_bit_errors == Some(0) {
            bail!("montecarlo.target_bit_errors: must be at least 1");
        }
        if self.detector.outer_iters == 0 {
            bail!("detector.outer_iters: must be at least 1");
        }
        VarianceTracking::from_name(&self.detector.variance_tracking)
            .map_err(|e| anyhow!("detector.variance_tracking: {e}"))?;
        self.units()?;
        if let Some(f) = self.output.formats.iter().find(|f| f.as_str() != "csv") {
            bail!("output.formats: unsupported format {f:?} (only csv)");
        }
        let c = &self.code;
        if c.blocks_per_point == 0 {
            bail!("code.blocks_per_point: must be at least 1");
        }
        if c.rho_grid.is_empty() {
            bail!("code.rho_grid: must not be empty");
        }
        if c.rho_grid.windows(2).any(|w| !(w[1] > w[0])) || c.rho_grid.iter().any(|r| !(*r >= 0.0)) {
            bail!("code.rho_grid: must be nonnegative and strictly increasing");
        }
        Ok(())
    }

    pub fn units(&self) -> Result<Units> {
        match self.output.units.as_str() {
            "bits" => Ok(Units::Bits),
            "nats" => Ok(Units::Nats),
            other => bail!("output.units: expected bits or nats, got {other:?}"),
        }
    }

    pub fn snr_points_db(&self) -> Vec<f64> {
        self.system
            .snr_db_sweep
            .clone()
            .unwrap_or_else(|| vec![self.system.snr_db])
    }

    pub fn spectrum(&self) -> Result<ChannelSpectrum> {
        match &self.system.spectrum_file {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("system.spectrum_file: {}", p.display()))?;
                ChannelSpectrum::from_csv(&text).with_context(|| format!("system.spectrum_file: {}", p.display()))
            }
            None => make_kappa_spectrum(self.system.m, self.system.n, self.system.kappa).context("system"),
        }
    }

    pub fn prior(&self) -> Result<Prior> {
        match &self.prior.constellation_file {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).with_context(|| format!("prior.constellation_file: {}", p.display()))?;
                let name = p.file_stem().map_or("custom".into(), |s| s.to_string_lossy().into_owned());
                let c = Constellation::from_csv(name, &text)
                    .with_context(|| format!("prior.constellation_file: {}", p.display()))?;
                Ok(Prior::Discrete(c))
            }
            None => Prior::from_name(&self.prior.name).map_err(|e| anyhow!("prior.name: {e}")),
        }
    }

    pub fn tracking(&self) -> VarianceTracking {
        VarianceTracking::from_name(&self.detector.variance_tracking).unwrap_or_default()
    }
}

/// Sets `a.b.c = value`, parsing `value` as a TOML literal and falling back
/// to a bare string.
fn apply_override(root: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override {spec:?}: expected key.path=value"))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override {spec:?}: empty key segment");
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {spec:?}: {p} is not a table"))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn overrides_apply_by_path() {
        let cfg = ExperimentConfig::load(
            None,
            &["system.kappa=50".into(), "prior.name=bpsk".into(), "system.snr_db_sweep=[1, 2.5]".into()],
        )
        .unwrap();
        assert_eq!(cfg.system.kappa, 50.0);
        assert_eq!(cfg.prior.name, "bpsk");
        assert_eq!(cfg.snr_points_db(), vec![1.0, 2.5]);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::load(None, &["montecarlo.trials=0".into()]).unwrap_err();
        assert!(e.to_string().contains("montecarlo.trials"), "{e}");
        let e = ExperimentConfig::load(None, &["system.snr_db_sweep=[]".into()]).unwrap_err();
        assert!(e.to_string().contains("system.snr_db_sweep"), "{e}");
        let e = ExperimentConfig::load(None, &["system.kapa=3".into()]).unwrap_err();
        assert!(e.to_string().contains("kapa"), "{e}");
    }
}
