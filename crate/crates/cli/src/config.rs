//! Config-file layering, resolved-config provenance and the run log.
//!
//! Every subcommand accepts `--config FILE` holding flat `key = value`
//! lines whose keys mirror the long flag names. Precedence is flag over
//! file over built-in default; seeds have no built-in default at all, so
//! they must arrive through a flag or the file. After a command resolves
//! its parameters it writes them to `config.resolved` in the output
//! directory, so every artifact records exactly what produced it.
//! Timestamps never appear in outputs; they are confined to the `run.log`
//! sidecar.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::exit::CliError;

/// Parsed `key = value` config file with use-tracking, so typos (keys no
/// command parameter consumed) become usage errors instead of silent
/// no-ops.
pub struct ConfigFile {
    path: Option<PathBuf>,
    map: BTreeMap<String, String>,
    used: std::cell::RefCell<std::collections::BTreeSet<String>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        if let Some(p) = path {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("config file {}: {e}", p.display())))?;
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(CliError::Usage(format!(
                        "{}:{}: expected `key = value`, got {raw:?}",
                        p.display(),
                        lineno + 1
                    )));
                };
                let key = key.trim().to_string();
                if map.insert(key.clone(), value.trim().to_string()).is_some() {
                    return Err(CliError::Usage(format!(
                        "{}:{}: duplicate key {key:?}",
                        p.display(),
                        lineno + 1
                    )));
                }
            }
        }
        Ok(Self {
            path: path.map(Path::to_path_buf),
            map,
            used: Default::default(),
        })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        let v = self.map.get(key)?;
        self.used.borrow_mut().insert(key.to_string());
        Some(v.as_str())
    }

    /// Marks `key` as recognized even when a flag overrides the file value,
    /// so only genuinely unknown keys trip [`ConfigFile::finish`].
    fn touch(&self, key: &str) {
        if self.map.contains_key(key) {
            self.used.borrow_mut().insert(key.to_string());
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| {
                CliError::Usage(format!("config key {key} = {v:?}: {e}"))
            }),
        }
    }

    /// Errors on config keys nothing consumed; call after all `resolve`s.
    pub fn finish(&self) -> Result<(), CliError> {
        let used = self.used.borrow();
        let unused: Vec<&String> = self.map.keys().filter(|k| !used.contains(*k)).collect();
        if let Some(k) = unused.first() {
            return Err(CliError::Usage(format!(
                "config file {} has unknown key {k:?}",
                self.path.as_deref().unwrap_or(Path::new("?")).display()
            )));
        }
        Ok(())
    }
}

/// Accumulates the fully resolved parameters of one command run and writes
/// them next to the outputs.
#[derive(Default)]
pub struct Resolved {
    pairs: Vec<(String, String)>,
}

impl Resolved {
    pub fn put(&mut self, key: &str, value: impl Display) {
        self.pairs.push((key.to_string(), value.to_string()));
    }

    /// Flag-over-file-over-default resolution for one parameter, recording
    /// the winning value.
    pub fn resolve<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        file: &ConfigFile,
        default: Option<T>,
    ) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => {
                file.touch(key);
                v
            }
            None => match file.get::<T>(key)? {
                Some(v) => v,
                None => default.ok_or_else(|| {
                    CliError::Usage(format!(
                        "missing required parameter --{key} (flag or config key)"
                    ))
                })?,
            },
        };
        self.put(key, &value);
        Ok(value)
    }

    /// Path-valued required parameter (paths are not `Display`, so they
    /// bypass the generic resolver).
    pub fn resolve_path(
        &mut self,
        key: &str,
        flag: Option<PathBuf>,
        file: &ConfigFile,
    ) -> Result<PathBuf, CliError> {
        let value = match flag {
            Some(v) => {
                file.touch(key);
                v
            }
            None => match file.raw(key) {
                Some(v) => PathBuf::from(v),
                None => {
                    return Err(CliError::Usage(format!(
                        "missing required parameter --{key} (flag or config key)"
                    )))
                }
            },
        };
        self.put(key, value.display());
        Ok(value)
    }

    /// Like [`Resolved::resolve`] but the parameter stays optional.
    pub fn resolve_opt<T: FromStr + Display>(
        &mut self,
        key: &str,
        flag: Option<T>,
        file: &ConfigFile,
    ) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => {
                file.touch(key);
                Some(v)
            }
            None => file.get::<T>(key)?,
        };
        if let Some(v) = &value {
            self.put(key, v);
        }
        Ok(value)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.pairs {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }

    /// Writes `config.resolved` into `out_dir` (creating the directory).
    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Data(format!("creating {}: {e}", out_dir.display())))?;
        let path = out_dir.join("config.resolved");
        std::fs::write(&path, self.to_text())
            .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
    }
}

/// Appends one line to the `run.log` sidecar in `out_dir`. This is the only
/// place wall-clock time is recorded, so every other artifact stays
/// byte-identical across reruns.
pub fn log_run(out_dir: &Path, command: &str, status: &str) {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let line = format!("unix={secs} cmd={command} status={status}\n");
    let _ = std::fs::create_dir_all(out_dir);
    if let Ok(mut f) = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out_dir.join("run.log"))
    {
        use std::io::Write;
        let _ = f.write_all(line.as_bytes());
    }
}
