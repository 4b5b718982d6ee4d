//! Run configuration: a TOML file with one table per stage, plus
//! `section.key=value` overrides from the command line.

use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use newsflow_core::backtest::Strategy;
use newsflow_core::baselines::SsestmParams;
use newsflow_core::embedding::OovPolicy;
use newsflow_core::workflow::{ModelKind, ModelParams, WindowSpec};
use newsflow_core::{CellKind, HorizonConfig, LabelQuantile, RnnConfig, StrategyConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub news: PathBuf,
    pub daily_prices: PathBuf,
    pub minute_prices: Option<PathBuf>,
    /// Calendar file; the built-in European calendar when absent.
    pub calendar: Option<PathBuf>,
    pub market: String,
    pub static_table: Option<PathBuf>,
    /// Precomputed contextual embeddings for `rnn-contextual`.
    pub embeddings: Option<PathBuf>,
    /// Artifact directory.
    pub out: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            news: "news.csv".into(),
            daily_prices: "daily.csv".into(),
            minute_prices: None,
            calendar: None,
            market: "IDX".into(),
            static_table: None,
            embeddings: None,
            out: "run".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingSection {
    pub intraday_minutes: i64,
    pub overnight_days: u32,
    pub quantile: f64,
}

impl Default for LabelingSection {
    fn default() -> Self {
        Self {
            intraday_minutes: 30,
            overnight_days: 1,
            quantile: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowsSection {
    pub train_days: usize,
    pub test_days: usize,
    pub step_days: usize,
}

impl Default for WindowsSection {
    fn default() -> Self {
        let w = WindowSpec::default();
        Self {
            train_days: w.train_days,
            test_days: w.test_days,
            step_days: w.step_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsSection {
    pub kinds: Vec<String>,
}

impl Default for ModelsSection {
    fn default() -> Self {
        Self {
            kinds: vec!["nbc".into(), "ssestm".into(), "rnn-static".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NbcSection {
    pub alpha: f64,
}

impl Default for NbcSection {
    fn default() -> Self {
        Self { alpha: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsestmSection {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub kappa: u64,
    pub lambda: f64,
    pub grid_step: f64,
}

impl Default for SsestmSection {
    fn default() -> Self {
        let p = SsestmParams::default();
        Self {
            alpha_plus: p.alpha_plus,
            alpha_minus: p.alpha_minus,
            kappa: p.kappa,
            lambda: p.lambda,
            grid_step: p.grid_step,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnnSection {
    pub cell: String,
    pub layer_widths: Vec<usize>,
    pub dropout: f64,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub tolerance: f64,
    /// `zero` or `skip` for words missing from the static table.
    pub oov: String,
}

impl Default for RnnSection {
    fn default() -> Self {
        let c = RnnConfig::default();
        Self {
            cell: c.cell.to_string(),
            layer_widths: c.layer_widths,
            dropout: c.dropout,
            seed: c.seed,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            tolerance: c.tolerance,
            oov: "zero".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Per-tail percentiles.
    pub grid: Vec<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            grid: vec![0.5, 1.0, 2.5, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BacktestSection {
    pub strategies: Vec<String>,
    pub lookback: u32,
    pub unit: f64,
    pub top_k: usize,
    pub cost_rate: f64,
    pub trading_days: u32,
}

impl Default for BacktestSection {
    fn default() -> Self {
        let s = StrategyConfig::default();
        Self {
            strategies: vec!["s1".into(), "s2".into()],
            lookback: s.lookback,
            unit: s.unit,
            top_k: s.top_k,
            cost_rate: s.cost_rate,
            trading_days: s.trading_days,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    pub labeling: LabelingSection,
    pub windows: WindowsSection,
    pub models: ModelsSection,
    pub nbc: NbcSection,
    pub ssestm: SsestmSection,
    pub rnn: RnnSection,
    pub eval: EvalSection,
    pub backtest: BacktestSection,
}

/// Typed view of a validated [`RunConfig`] with paths made absolute.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub base: PathBuf,
    pub horizon: HorizonConfig,
    pub quantile: LabelQuantile,
    pub windows: WindowSpec,
    pub models: Vec<ModelKind>,
    pub params: ModelParams,
    pub oov: OovPolicy,
    pub grid: Vec<f64>,
    pub strategies: Vec<Strategy>,
    pub strategy: StrategyConfig,
}

impl Resolved {
    pub fn path(&self, p: &Path) -> PathBuf {
        self.base.join(p)
    }

    pub fn out(&self) -> PathBuf {
        self.path(&self.raw.data.out)
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

/// Sets `section.key` (or a top-level `key`) in `table` to `value`, read
/// as a TOML value when it parses as one and as a bare string otherwise.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    let Some((section, field)) = key.trim().split_once('.') else {
        table.insert(key.trim().to_string(), parsed);
        return Ok(());
    };
    let slot = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match slot {
        toml::Value::Table(t) => {
            t.insert(field.to_string(), parsed);
            Ok(())
        }
        _ => Err(config_err(format!("`{section}` is not a table"))),
    }
}

/// Reads the config file (if any), applies overrides and validates.
/// Relative paths resolve against the config file's directory, or the
/// working directory without one.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Resolved, CliError> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_err(format!("cannot read {}: {e}", p.display())))?;
            let table: toml::Table = toml::from_str(&text).map_err(config_err)?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (table, base)
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let raw: RunConfig = toml::Value::Table(table).try_into().map_err(config_err)?;
    resolve(raw, base)
}

pub fn resolve(raw: RunConfig, base: PathBuf) -> Result<Resolved, CliError> {
    let l = &raw.labeling;
    let horizon = HorizonConfig::new(Duration::minutes(l.intraday_minutes), l.overnight_days)
        .map_err(config_err)?;
    let quantile = LabelQuantile::new(l.quantile).map_err(config_err)?;
    let windows = WindowSpec {
        train_days: raw.windows.train_days,
        test_days: raw.windows.test_days,
        step_days: raw.windows.step_days,
    };
    windows.validate().map_err(config_err)?;
    let mut models = Vec::new();
    for k in &raw.models.kinds {
        let kind: ModelKind = k.parse().map_err(config_err)?;
        if models.contains(&kind) {
            return Err(config_err(format!("model `{kind}` listed twice")));
        }
        models.push(kind);
    }
    if models.is_empty() {
        return Err(config_err("no models selected"));
    }
    if !(raw.nbc.alpha > 0.0 && raw.nbc.alpha.is_finite()) {
        return Err(config_err(format!("nbc alpha {} must be positive", raw.nbc.alpha)));
    }
    let s = &raw.ssestm;
    let ssestm = SsestmParams {
        alpha_plus: s.alpha_plus,
        alpha_minus: s.alpha_minus,
        kappa: s.kappa,
        lambda: s.lambda,
        grid_step: s.grid_step,
    };
    ssestm.validate().map_err(config_err)?;
    let r = &raw.rnn;
    let rnn = RnnConfig {
        cell: r.cell.parse::<CellKind>().map_err(config_err)?,
        layer_widths: r.layer_widths.clone(),
        dropout: r.dropout,
        seed: r.seed,
        learning_rate: r.learning_rate,
        batch_size: r.batch_size,
        max_epochs: r.max_epochs,
        patience: r.patience,
        tolerance: r.tolerance,
    };
    rnn.validate().map_err(config_err)?;
    let oov = match r.oov.as_str() {
        "zero" => OovPolicy::Zero,
        "skip" => OovPolicy::Skip,
        other => return Err(config_err(format!("unknown oov policy `{other}` (zero, skip)"))),
    };
    if raw.eval.grid.is_empty() || raw.eval.grid.iter().any(|&n| !(n > 0.0 && n < 50.0)) {
        return Err(config_err("eval grid needs percentiles in (0, 50)"));
    }
    let b = &raw.backtest;
    let strategy = StrategyConfig {
        lookback: b.lookback,
        unit: b.unit,
        top_k: b.top_k,
        cost_rate: b.cost_rate,
        trading_days: b.trading_days,
    };
    strategy.validate().map_err(config_err)?;
    let strategies = b
        .strategies
        .iter()
        .map(|s| s.parse::<Strategy>().map_err(config_err))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Resolved {
        params: ModelParams {
            nbc_alpha: raw.nbc.alpha,
            ssestm,
            rnn,
        },
        grid: raw.eval.grid.clone(),
        raw,
        base,
        horizon,
        quantile,
        windows,
        models,
        oov,
        strategies,
        strategy,
    })
}
