//! Flat `key = value` run configuration. Keys are long flag names without
//! the leading dashes; a flag given on the command line wins.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use super::CliError;

pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "workers",
    // sampler
    "preset",
    "chains",
    "burn-in",
    "samples",
    "thin",
    "tau-pos-scale",
    "tau-beta-scale",
    // fit / reproduce-example
    "model",
    "data",
    "outcome-label",
    "dump-chains",
    "hr-scale",
    "outcome",
    "variant",
    "out-dir",
    // simulate trial
    "delta-pos",
    "delta-neg",
    "n",
    "lambda",
    "p-trt",
    "p-neg",
    "censor-time",
    // simulate study
    "scenario",
    "reps",
    "resume",
    "report",
    "n-studies",
    "n-pos",
    "n-both",
    "n-mix",
    "mu-beta",
    "tau-beta-sq",
    "d-pos",
    "tau-pos-sq",
    // shared
    "out",
    "input",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |m: String| CliError::Validation(format!("config line {}: {m}", i + 1));
            let (key, value) = line.split_once('=').ok_or_else(|| bad(format!("expected `key = value`, got `{line}`")))?;
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            let value = value.trim().trim_matches('"').to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(bad(format!("unknown key `{key}`")));
            }
            if values.insert(key.clone(), value).is_some() {
                return Err(bad(format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { values })
    }

    pub fn get<T>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "unlisted config key {key}");
        self.values
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::Validation(format!("config key `{key}` = `{v}`: {e}"))))
            .transpose()
    }

    /// `cli` if given, otherwise the config value.
    pub fn pick<T>(&self, cli: Option<T>, key: &str) -> Result<Option<T>, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        match cli {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn require<T>(&self, cli: Option<T>, key: &str) -> Result<T, CliError>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.pick(cli, key)?.ok_or_else(|| CliError::Validation(format!("missing required option --{key}")))
    }

    /// A switch is on if given on the command line or set true in the file.
    pub fn switch(&self, cli: bool, key: &str) -> Result<bool, CliError> {
        Ok(cli || self.get::<bool>(key)?.unwrap_or(false))
    }
}

/// Value of an environment variable, parsed.
pub fn env_value<T>(name: &str) -> Result<Option<T>, CliError>
where
    T: FromStr,
    T::Err: Display,
{
    match std::env::var(name) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| CliError::Validation(format!("{name}=`{v}`: {e}"))),
        _ => Ok(None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_typed_values() {
        let c = Config::parse("# run\nseed = 7\nburn_in=100\n--preset = \"desk\"\nhr-scale = true\n\n").unwrap();
        assert_eq!(c.get::<u64>("seed").unwrap(), Some(7));
        assert_eq!(c.get::<usize>("burn-in").unwrap(), Some(100));
        assert_eq!(c.get::<String>("preset").unwrap().as_deref(), Some("desk"));
        assert!(c.switch(false, "hr-scale").unwrap());
        assert!(!c.switch(false, "resume").unwrap());
        assert_eq!(c.get::<usize>("chains").unwrap(), None);
    }

    #[test]
    fn command_line_wins() {
        let c = Config::parse("seed = 7").unwrap();
        assert_eq!(c.pick(Some(3u64), "seed").unwrap(), Some(3));
        assert_eq!(c.pick(None::<u64>, "seed").unwrap(), Some(7));
        assert!(c.require(None::<f64>, "lambda").is_err());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(matches!(Config::parse("seed 7"), Err(CliError::Validation(_))));
        assert!(matches!(Config::parse("colour = red"), Err(CliError::Validation(_))));
        assert!(matches!(Config::parse("seed = 1\nseed = 2"), Err(CliError::Validation(_))));
        let c = Config::parse("seed = many").unwrap();
        assert!(matches!(c.get::<u64>("seed"), Err(CliError::Validation(_))));
    }
}
