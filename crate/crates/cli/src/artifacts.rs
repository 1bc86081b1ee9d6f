//! Output files. Every write goes to a temporary file in the target
//! directory and is renamed into place.

use std::io::Write;
use std::path::{Path, PathBuf};

use feedopt::bundle::MatrixBundle;

use crate::scenario::Scenario;
use crate::CliError;

pub const HASH_KEY: &str = "scenario.hash";

pub struct OutDir {
    pub root: PathBuf,
    pub hash: String,
}

impl OutDir {
    pub fn create(root: &Path, scenario: &Scenario) -> Result<Self, CliError> {
        std::fs::create_dir_all(root).map_err(|e| CliError::Io(root.display().to_string(), e))?;
        Ok(OutDir { root: root.to_path_buf(), hash: scenario.hash() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    /// Writes the bundle with the scenario hash added to its metadata.
    pub fn write_bundle(&self, name: &str, bundle: &MatrixBundle) -> Result<PathBuf, CliError> {
        let mut b = bundle.clone();
        b.set(HASH_KEY, &self.hash);
        self.write(name, b.to_text().as_bytes())
    }

    /// `key = value` report preceded by the scenario hash.
    pub fn write_report(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        self.write(name, format!("{HASH_KEY} = {}\n{body}", self.hash).as_bytes())
    }

    /// The resolved scenario, so every run can be replayed.
    pub fn write_scenario(&self, scenario: &Scenario) -> Result<PathBuf, CliError> {
        self.write("scenario.toml", format!("# {HASH_KEY} = {}\n{}", self.hash, scenario.to_toml()).as_bytes())
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(path.display().to_string(), e);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn read_bundle(path: &Path) -> Result<MatrixBundle, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    Ok(MatrixBundle::parse(&text)?)
}

/// Refuses a bundle made from a different design unless `force` is set.
pub fn check_hash(bundle: &MatrixBundle, expected: &str, force: bool) -> Result<(), CliError> {
    match bundle.meta.get(HASH_KEY) {
        Some(h) if h == expected => Ok(()),
        _ if force => Ok(()),
        Some(h) => Err(CliError::Invalid(format!(
            "bundle was made from scenario {h}, this scenario is {expected}; rerun synthesize or pass --force"
        ))),
        None => Err(CliError::Invalid("bundle carries no scenario hash; pass --force to use it anyway".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_whole_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.txt");
        write_atomic(&p, b"first version, long").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn hash_check() {
        let mut b = MatrixBundle::new();
        assert!(check_hash(&b, "abc", false).is_err());
        assert!(check_hash(&b, "abc", true).is_ok());
        b.set(HASH_KEY, "abc");
        assert!(check_hash(&b, "abc", false).is_ok());
        assert!(check_hash(&b, "abd", false).is_err());
        assert!(check_hash(&b, "abd", true).is_ok());
    }
}
