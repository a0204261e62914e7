//! The run configuration: a TOML key/value tree whose defaults reproduce
//! the five-user reference scenario, plus dotted-key command-line
//! overrides.

use serde::{Deserialize, Serialize};
use sicsim_core::fec::ConvCode;
use sicsim_core::modem::PilotMode;
use sicsim_core::montecarlo::{PhaseMode, Scenario, StopRule};
use sicsim_core::receiver::{Decoder, DetectorConfig, SnrGrid, UserOrder};

use crate::CliError;

#[derive(Debug, Clone, Deserialize, Serialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: ScenarioSection,
    pub code: CodeSection,
    pub interleaver: InterleaverSection,
    pub detector: DetectorSection,
    pub sweep: SweepSection,
    pub stop: StopSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub k_users: usize,
    pub n_info: usize,
    pub n_pilot: usize,
    pub zeta: f64,
    /// Per-user amplitudes; empty means unit amplitude for every user.
    pub amplitudes: Vec<f64>,
    /// `"random"` or a fixed per-user phase list in radians.
    pub phase_mode: PhaseModeValue,
    /// `"coded_preamble"` or `"orthogonal"`.
    pub pilot_mode: String,
    pub seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            k_users: 5,
            n_info: 100,
            n_pilot: 30,
            zeta: 0.25,
            amplitudes: Vec::new(),
            phase_mode: PhaseModeValue::Name("random".into()),
            pilot_mode: "coded_preamble".into(),
            seed: 1,
        }
    }
}

/// `phase_mode` accepts either the string `"random"` or an array of fixed
/// phases.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum PhaseModeValue {
    Name(String),
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CodeSection {
    /// Generator polynomials written with octal digits, e.g. `[171, 133]`.
    pub generators_octal: Vec<u32>,
    pub constraint_length: u32,
}

impl Default for CodeSection {
    fn default() -> Self {
        CodeSection {
            generators_octal: vec![171, 133],
            constraint_length: 7,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterleaverSection {
    pub rows: usize,
}

impl Default for InterleaverSection {
    fn default() -> Self {
        InterleaverSection { rows: 8 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub stages: usize,
    /// `"viterbi"` or `"bcjr"`.
    pub decoder: String,
    pub combining: bool,
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub snr_step_db: f64,
    /// `"index"` or `"estimated_power"`.
    pub user_order: String,
}

impl Default for DetectorSection {
    fn default() -> Self {
        let grid = SnrGrid::default();
        DetectorSection {
            stages: 3,
            decoder: "viterbi".into(),
            combining: true,
            snr_min_db: grid.min_db,
            snr_max_db: grid.max_db,
            snr_step_db: grid.step_db,
            user_order: "index".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Eb/N0 grid in dB.
    pub ebno_db: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            ebno_db: vec![0.0, 2.0, 4.0, 6.0],
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct StopSection {
    pub min_errors: u64,
    pub max_frames: u64,
}

impl Default for StopSection {
    fn default() -> Self {
        let s = StopRule::default();
        StopSection {
            min_errors: s.min_errors,
            max_frames: s.max_frames,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub csv_path: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            csv_path: "ber.csv".into(),
        }
    }
}

impl RunConfig {
    /// Parses the optional config file and applies dotted-key overrides;
    /// any unknown or ill-typed key is a config error.
    pub fn load(path: Option<&str>, overrides: &[String]) -> Result<RunConfig, CliError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("cannot read config {p}: {e}")))?,
            None => String::new(),
        };
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Config(format!("config parse error: {e}")))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("config error: {e}")))?;
        config.resolve()?;
        Ok(config)
    }

    /// Fills derived defaults so the printed config is fully explicit.
    fn resolve(&mut self) -> Result<(), CliError> {
        if self.scenario.amplitudes.is_empty() {
            self.scenario.amplitudes = vec![1.0; self.scenario.k_users];
        }
        Ok(())
    }

    /// Converts the validated key tree into a simulation scenario.
    pub fn to_scenario(&self) -> Result<Scenario, CliError> {
        if self.code.generators_octal.len() != 2 {
            return Err(CliError::Config(format!(
                "code.generators_octal needs exactly two generators, got {}",
                self.code.generators_octal.len()
            )));
        }
        let code = ConvCode::new(
            self.code.constraint_length,
            [
                parse_octal("code.generators_octal", self.code.generators_octal[0])?,
                parse_octal("code.generators_octal", self.code.generators_octal[1])?,
            ],
        )
        .map_err(|e| CliError::Config(format!("code: {e}")))?;
        let phase_mode = match &self.scenario.phase_mode {
            PhaseModeValue::Name(s) if s == "random" => PhaseMode::Random,
            PhaseModeValue::Name(s) => {
                return Err(CliError::Config(format!(
                    "scenario.phase_mode: expected \"random\" or a phase list, got \"{s}\""
                )))
            }
            PhaseModeValue::Fixed(p) => PhaseMode::Fixed(p.clone()),
        };
        let pilot_mode = match self.scenario.pilot_mode.as_str() {
            "coded_preamble" => PilotMode::CodedPreamble,
            "orthogonal" => PilotMode::Orthogonal,
            other => {
                return Err(CliError::Config(format!(
                    "scenario.pilot_mode: unknown mode \"{other}\""
                )))
            }
        };
        let decoder = match self.detector.decoder.as_str() {
            "viterbi" => Decoder::Viterbi,
            "bcjr" => Decoder::Bcjr,
            other => {
                return Err(CliError::Config(format!(
                    "detector.decoder: unknown decoder \"{other}\""
                )))
            }
        };
        let user_order = match self.detector.user_order.as_str() {
            "index" => UserOrder::Index,
            "estimated_power" => UserOrder::EstimatedPower,
            other => {
                return Err(CliError::Config(format!(
                    "detector.user_order: unknown order \"{other}\""
                )))
            }
        };
        Ok(Scenario {
            k_users: self.scenario.k_users,
            n_info: self.scenario.n_info,
            n_pilot: self.scenario.n_pilot,
            zeta: self.scenario.zeta,
            amplitudes: self.scenario.amplitudes.clone(),
            phase_mode,
            pilot_mode,
            code,
            interleaver_rows: self.interleaver.rows,
            detector: DetectorConfig {
                stages: self.detector.stages,
                decoder,
                combining: self.detector.combining,
                snr_grid: SnrGrid {
                    min_db: self.detector.snr_min_db,
                    max_db: self.detector.snr_max_db,
                    step_db: self.detector.snr_step_db,
                },
                user_order,
            },
            seed: self.scenario.seed,
        })
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            min_errors: self.stop.min_errors,
            max_frames: self.stop.max_frames,
        }
    }
}

/// Reads an integer whose decimal digits are an octal polynomial
/// (`171` -> 0o171).
fn parse_octal(key: &str, written: u32) -> Result<u32, CliError> {
    u32::from_str_radix(&written.to_string(), 8)
        .map_err(|_| CliError::Config(format!("{key}: {written} is not a valid octal polynomial")))
}

/// Applies one `dotted.key=value` override to the raw key tree. The value
/// is parsed as a TOML literal; anything that does not parse is taken as
/// a bare string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override \"{spec}\" is not of form key=value")))?;
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(t) => t["v"].clone(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(CliError::Config(format!("override key \"{path}\" is malformed")));
    }
    let mut node = table;
    for k in &keys[..keys.len() - 1] {
        node = node
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                CliError::Config(format!("override key \"{path}\": \"{k}\" is not a table"))
            })?;
    }
    node.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}
