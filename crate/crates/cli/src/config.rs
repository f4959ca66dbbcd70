//! Experiment configuration: one validator shared by the flag form and the
//! JSON-file form.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlx_core::claim::IntervalSet;
use nlx_core::{Claim, Driver};
use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Gexp,
    Capacity,
    Choquet,
    Gap,
    PdeCompare,
    Slope,
    Classify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Gexp => "gexp",
            Self::Capacity => "capacity",
            Self::Choquet => "choquet",
            Self::Gap => "gap",
            Self::PdeCompare => "pde-compare",
            Self::Slope => "slope",
            Self::Classify => "classify",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

impl Format {
    pub fn name(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

/// Fields as they arrive from flags or JSON, before validation.
#[derive(Clone, Debug, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    /// Driver literal: zero, linear:<nu>, kappa:<mu>[,<nu>].
    #[arg(long)]
    pub driver: Option<String>,
    /// Claim literal, e.g. threshold:1, indicator:1,2, logistic:2.
    #[arg(long, allow_hyphen_values = true)]
    pub claim: Option<String>,
    /// Two claim literals for the gap command.
    #[arg(long, num_args = 2, allow_hyphen_values = true)]
    pub claims: Option<Vec<String>>,
    /// Horizon T.
    #[arg(long = "T", allow_hyphen_values = true)]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    /// Lattice steps.
    #[arg(long, allow_hyphen_values = true)]
    pub steps: Option<i64>,
    /// Choquet thresholds.
    #[arg(long, allow_hyphen_values = true)]
    pub thresholds: Option<i64>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Interval union for the capacity command, e.g. "[1,inf)" or "[0,1];[2,3]".
    #[arg(long)]
    pub set: Option<String>,
    /// Space points for pde-compare, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x: Option<Vec<f64>>,
    /// PDE grid points.
    #[arg(long, allow_hyphen_values = true)]
    pub nx: Option<i64>,
    /// Slope direction b for the slope command.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Horizons for the slope command, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub horizons: Option<Vec<f64>>,
    /// Number of time points for classify.
    #[arg(long = "time-points", allow_hyphen_values = true)]
    #[serde(rename = "time_points")]
    pub time_points: Option<i64>,
}

#[derive(Debug, Parser)]
#[command(
    name = "nlx",
    version,
    about = "g-expectations, g-capacities and Choquet expectations on a binomial lattice"
)]
pub struct Cli {
    /// JSON experiment file; flags given on the command line override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Option<CommandArgs>,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// g-expectation of a claim with a Richardson pair.
    Gexp(RawConfig),
    /// g-capacity of an interval union.
    Capacity(RawConfig),
    /// Choquet expectation against the g-capacity.
    Choquet(RawConfig),
    /// Additivity gaps of E_g and of the Choquet integral on a comonotonic pair.
    Gap(RawConfig),
    /// PDE versus lattice values of E_g[f(W_T + x)].
    PdeCompare(RawConfig),
    /// (E_g[b W_s] - E[b W_s]) / s against g(0, b, 0).
    Slope(RawConfig),
    /// Decomposes the driver as mu |z| + nu z and decides linearity in z.
    Classify(RawConfig),
}

impl CommandArgs {
    fn split(self) -> (Command, RawConfig) {
        match self {
            Self::Gexp(r) => (Command::Gexp, r),
            Self::Capacity(r) => (Command::Capacity, r),
            Self::Choquet(r) => (Command::Choquet, r),
            Self::Gap(r) => (Command::Gap, r),
            Self::PdeCompare(r) => (Command::PdeCompare, r),
            Self::Slope(r) => (Command::Slope, r),
            Self::Classify(r) => (Command::Classify, r),
        }
    }
}

/// A fully validated experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub driver: String,
    pub claims: Vec<String>,
    pub horizon: f64,
    pub steps: usize,
    pub thresholds: usize,
    pub format: Format,
    pub output: Option<PathBuf>,
    pub set: Option<String>,
    pub x: Vec<f64>,
    pub nx: usize,
    pub b: f64,
    pub horizons: Vec<f64>,
    pub time_points: usize,
}

pub const DEFAULT_STEPS: usize = 2000;
pub const DEFAULT_THRESHOLDS: usize = 200;
pub const DEFAULT_NX: usize = 1201;
pub const DEFAULT_TIME_POINTS: usize = 11;
pub const DEFAULT_X: [f64; 3] = [-1.0, 0.0, 1.0];
pub const DEFAULT_HORIZONS: [f64; 3] = [0.1, 0.05, 0.025];

fn invalid(field: &str, why: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {why}"))
}

fn positive_int(field: &str, v: Option<i64>, default: usize) -> Result<usize, CliError> {
    match v {
        None => Ok(default),
        Some(n) if n > 0 => Ok(n as usize),
        Some(n) => Err(invalid(
            field,
            format!("must be a positive integer, got {n}"),
        )),
    }
}

fn positive_real(field: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

impl RawConfig {
    /// Fields set here replace those of `base`.
    fn over(self, base: RawConfig) -> RawConfig {
        RawConfig {
            driver: self.driver.or(base.driver),
            claim: self.claim.or(base.claim),
            claims: self.claims.or(base.claims),
            horizon: self.horizon.or(base.horizon),
            steps: self.steps.or(base.steps),
            thresholds: self.thresholds.or(base.thresholds),
            format: self.format.or(base.format),
            output: self.output.or(base.output),
            set: self.set.or(base.set),
            x: self.x.or(base.x),
            nx: self.nx.or(base.nx),
            b: self.b.or(base.b),
            horizons: self.horizons.or(base.horizons),
            time_points: self.time_points.or(base.time_points),
        }
    }
}

/// Checks every field the command needs and parses the literals.
pub fn validate(command: Command, raw: RawConfig) -> Result<ExperimentConfig, CliError> {
    let driver = raw.driver.ok_or_else(|| invalid("driver", "is required"))?;
    Driver::parse(&driver).map_err(|e| invalid("driver", e))?;
    let horizon = positive_real("T", raw.horizon.unwrap_or(1.0))?;
    let steps = positive_int("steps", raw.steps, DEFAULT_STEPS)?;
    let thresholds = positive_int("thresholds", raw.thresholds, DEFAULT_THRESHOLDS)?;
    let nx = positive_int("nx", raw.nx, DEFAULT_NX)?;
    let time_points = positive_int("time_points", raw.time_points, DEFAULT_TIME_POINTS)?;

    let claims = match command {
        Command::Gap => {
            let pair = raw
                .claims
                .ok_or_else(|| invalid("claims", "the gap command needs two claims"))?;
            if pair.len() != 2 {
                return Err(invalid(
                    "claims",
                    format!("expected two claims, got {}", pair.len()),
                ));
            }
            pair
        }
        Command::Gexp | Command::Choquet | Command::PdeCompare => {
            vec![raw.claim.ok_or_else(|| invalid("claim", "is required"))?]
        }
        _ => Vec::new(),
    };
    for c in &claims {
        Claim::parse(c).map_err(|e| invalid("claim", e))?;
    }
    let set = match command {
        Command::Capacity => {
            let s = raw.set.ok_or_else(|| invalid("set", "is required"))?;
            IntervalSet::<f64>::parse(&s).map_err(|e| invalid("set", e))?;
            Some(s)
        }
        _ => None,
    };
    let x = raw.x.unwrap_or_else(|| DEFAULT_X.to_vec());
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(invalid("x", "needs at least one finite point"));
    }
    let b = raw.b.unwrap_or(1.0);
    if !b.is_finite() {
        return Err(invalid("b", "must be finite"));
    }
    let horizons = raw.horizons.unwrap_or_else(|| DEFAULT_HORIZONS.to_vec());
    if horizons.is_empty() {
        return Err(invalid("horizons", "needs at least one horizon"));
    }
    for &s in &horizons {
        positive_real("horizons", s)?;
    }
    if command == Command::Classify && time_points < 2 {
        return Err(invalid("time_points", "must be at least 2"));
    }
    if command == Command::PdeCompare && nx < 3 {
        return Err(invalid("nx", "must be at least 3"));
    }
    if matches!(command, Command::Gexp | Command::Capacity | Command::Gap) && steps < 2 {
        return Err(invalid(
            "steps",
            "must be at least 2 for the Richardson pair",
        ));
    }
    if command == Command::Choquet && thresholds < 2 {
        return Err(invalid("thresholds", "must be at least 2"));
    }
    Ok(ExperimentConfig {
        command,
        driver,
        claims,
        horizon,
        steps,
        thresholds,
        format: raw.format.unwrap_or_default(),
        output: raw.output,
        set,
        x,
        nx,
        b,
        horizons,
        time_points,
    })
}

/// Reads a JSON experiment file.
pub fn load_file(path: &Path) -> Result<(Command, RawConfig), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let bad = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(bad)?;
    let command = value
        .as_object_mut()
        .and_then(|m| m.remove("command"))
        .ok_or_else(|| CliError::Config(format!("{}: command: is required", path.display())))?;
    let command: Command = serde_json::from_value(command).map_err(bad)?;
    let raw: RawConfig = serde_json::from_value(value).map_err(bad)?;
    Ok((command, raw))
}

/// Builds the config from parsed arguments, merging a `--config` file if given.
pub fn from_cli(cli: Cli) -> Result<ExperimentConfig, CliError> {
    let flags = cli.command.map(CommandArgs::split);
    match (cli.config, flags) {
        (None, None) => Err(CliError::Config("no command given; see nlx --help".into())),
        (None, Some((command, raw))) => validate(command, raw),
        (Some(path), flags) => {
            let (file_command, file_raw) = load_file(&path)?;
            match flags {
                None => validate(file_command, file_raw),
                Some((command, _)) if command != file_command => Err(CliError::Config(format!(
                    "command: {} on the command line but {} in {}",
                    command.name(),
                    file_command.name(),
                    path.display()
                ))),
                Some((command, raw)) => validate(command, raw.over(file_raw)),
            }
        }
    }
}

/// Parses `argv` (including the program name) into a validated config.
pub fn parse_config<I, T>(argv: I) -> Result<ExperimentConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
    from_cli(cli)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        std::iter::once("nlx".to_string())
            .chain(s.split_whitespace().map(String::from))
            .collect()
    }

    #[test]
    fn gap_flags_are_valid() {
        let c = parse_config(args(
            "gap --driver kappa:0.5,0 --claims threshold:1 indicator:1,2 --T 1 --steps 2000",
        ))
        .unwrap();
        assert_eq!(c.command, Command::Gap);
        assert_eq!(c.claims, vec!["threshold:1", "indicator:1,2"]);
        assert_eq!((c.horizon, c.steps), (1.0, 2000));
    }

    #[test]
    fn negative_horizon_names_the_field() {
        let e =
            parse_config(args("gexp --driver kappa:0.5,0 --claim threshold:1 --T -1")).unwrap_err();
        assert!(e.to_string().contains("T:"), "{e}");
    }

    #[test]
    fn malformed_literals_and_numbers_are_rejected() {
        for bad in [
            "gexp --driver kappa:x --claim threshold:1",
            "gexp --driver zero --claim wobble:1",
            "gexp --driver zero --claim threshold:1 --steps 0",
            "choquet --driver zero --claim threshold:1 --thresholds -5",
            "capacity --driver zero --set [2,1]",
            "gap --driver zero --claims threshold:1",
            "frobnicate --driver zero",
        ] {
            assert!(parse_config(args(bad)).is_err(), "{bad}");
        }
    }

    #[test]
    fn json_file_matches_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gap.json");
        std::fs::write(
            &path,
            r#"{"command": "gap", "driver": "kappa:0.5,0", "claims": ["threshold:1", "indicator:1,2"], "T": 1, "steps": 2000}"#,
        )
        .unwrap();
        let from_file = parse_config(args(&format!("--config {}", path.display()))).unwrap();
        let from_flags = parse_config(args(
            "gap --driver kappa:0.5,0 --claims threshold:1 indicator:1,2 --T 1 --steps 2000",
        ))
        .unwrap();
        assert_eq!(from_file, from_flags);
        let overridden = parse_config(args(&format!(
            "gap --config {} --steps 400",
            path.display()
        )))
        .unwrap();
        assert_eq!(overridden.steps, 400);
    }

    #[test]
    fn unknown_json_fields_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"command": "gexp", "driver": "zero", "claim": "threshold:1", "stepz": 3}"#,
        )
        .unwrap();
        assert!(parse_config(args(&format!("--config {}", path.display()))).is_err());
    }
}
