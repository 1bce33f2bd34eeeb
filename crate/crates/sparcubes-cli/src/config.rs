//! Plain key = value config files. Keys are the flag names with the
//! leading dashes stripped (`deform-iters = 100`); values typed on the
//! command line always win. Unknown keys are rejected.

use anyhow::{bail, Context};
use clap::parser::ValueSource;
use clap::ArgMatches;
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

pub struct ConfigFile {
    values: BTreeMap<String, String>,
    used: RefCell<Vec<String>>,
    path: PathBuf,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<ConfigFile> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("{}:{}: expected `key = value`", path.display(), ln + 1);
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigFile {
            values,
            used: RefCell::new(Vec::new()),
            path: path.to_path_buf(),
        })
    }

    fn take(&self, matches: &ArgMatches, key: &str) -> Option<String> {
        let value = self.values.get(key)?;
        self.used.borrow_mut().push(key.to_string());
        // clap ids use underscores where the flag uses dashes
        let id = key.replace('-', "_");
        if matches.value_source(id.as_str()) == Some(ValueSource::CommandLine) {
            return None; // explicit flag wins
        }
        Some(value.clone())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, raw: &str) -> anyhow::Result<T> {
        raw.parse().map_err(|_| {
            anyhow::anyhow!(
                "{}: bad value {raw:?} for key {key:?}",
                self.path.display()
            )
        })
    }

    pub fn override_u32(&self, m: &ArgMatches, key: &str, out: &mut u32) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = self.parse(key, &raw)?;
        }
        Ok(())
    }

    pub fn override_u64(&self, m: &ArgMatches, key: &str, out: &mut u64) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = self.parse(key, &raw)?;
        }
        Ok(())
    }

    pub fn override_usize(&self, m: &ArgMatches, key: &str, out: &mut usize) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = self.parse(key, &raw)?;
        }
        Ok(())
    }

    pub fn override_f64(&self, m: &ArgMatches, key: &str, out: &mut f64) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = self.parse(key, &raw)?;
        }
        Ok(())
    }

    pub fn override_bool(&self, m: &ArgMatches, key: &str, out: &mut bool) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = self.parse(key, &raw)?;
        }
        Ok(())
    }

    pub fn override_string(&self, m: &ArgMatches, key: &str, out: &mut String) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = raw;
        }
        Ok(())
    }

    pub fn override_opt_usize(
        &self,
        m: &ArgMatches,
        key: &str,
        out: &mut Option<usize>,
    ) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = Some(self.parse(key, &raw)?);
        }
        Ok(())
    }

    pub fn override_opt_path(
        &self,
        m: &ArgMatches,
        key: &str,
        out: &mut Option<PathBuf>,
    ) -> anyhow::Result<()> {
        if let Some(raw) = self.take(m, key) {
            *out = Some(PathBuf::from(raw));
        }
        Ok(())
    }

    /// Reject unknown keys so typos never silently change behavior.
    pub fn finish(&self) -> anyhow::Result<()> {
        let used = self.used.borrow();
        for key in self.values.keys() {
            if !used.contains(key) {
                bail!(
                    "{}: unknown config key {key:?}",
                    self.path.display()
                );
            }
        }
        Ok(())
    }
}
