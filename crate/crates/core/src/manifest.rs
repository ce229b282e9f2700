//! Dataset manifests: which CSV holds which variable.

use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{align_mixed_frequency, load_csv, AlignedTable, Frequency, TimeSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Target,
    Feature,
}

fn default_header() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub frequency: Frequency,
    pub role: Role,
    #[serde(default = "default_header")]
    pub header: bool,
}

/// Variable name → CSV location, in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DataManifest {
    pub series: IndexMap<String, SeriesEntry>,
}

impl DataManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: DataManifest = serde_json::from_str(text)?;
        m.target()?;
        Ok(m)
    }

    pub fn target(&self) -> Result<&str> {
        let targets: Vec<&String> = self
            .series
            .iter()
            .filter(|(_, e)| e.role == Role::Target)
            .map(|(n, _)| n)
            .collect();
        match targets.as_slice() {
            [one] => Ok(one.as_str()),
            [] => Err(Error::Config("manifest declares no target series".into())),
            many => Err(Error::Config(format!("manifest declares several targets: {many:?}"))),
        }
    }

    /// Loads every series, target first.
    pub fn load(&self, base_dir: &Path) -> Result<LoadedData> {
        let target = self.target()?.to_string();
        let mut order: Vec<(&String, &SeriesEntry)> = self.series.iter().collect();
        order.sort_by_key(|(_, e)| e.role != Role::Target);
        let series = order
            .into_iter()
            .map(|(name, e)| {
                let path = if e.path.is_absolute() {
                    e.path.clone()
                } else {
                    base_dir.join(&e.path)
                };
                load_csv(&path, name, e.frequency, e.header)
            })
            .collect::<Result<Vec<_>>>()?;
        if series[0].frequency() == Frequency::Monthly {
            return Err(Error::Config(format!(
                "target `{target}` must be daily or weekly to define the forecasting grid"
            )));
        }
        Ok(LoadedData { target, series })
    }
}

/// Reads a manifest file and the CSVs it names.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<(DataManifest, LoadedData)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest = DataManifest::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Config(format!("{}: {j}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let data = manifest.load(base)?;
    Ok((manifest, data))
}

/// Loaded series with the target first.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub target: String,
    pub series: Vec<TimeSeries>,
}

impl LoadedData {
    pub fn names(&self) -> Vec<&str> {
        self.series.iter().map(|s| s.name()).collect()
    }

    pub fn has(&self, name: &str) -> bool {
        self.series.iter().any(|s| s.name() == name)
    }

    /// All series aligned on the target's grid at `frequency`.
    pub fn table(&self, frequency: Frequency) -> Result<AlignedTable> {
        align_mixed_frequency(&self.series, frequency)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn loads_relative_paths_target_first() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("oil.csv"), "date,value\n2020-01-01,10\n2020-01-02,-3\n").unwrap();
        fs::write(dir.path().join("fx.csv"), "2020-01-01,0.75\n2020-01-02,0.76\n").unwrap();
        let manifest = r#"{
            "oil": {"path": "oil.csv", "frequency": "daily", "role": "feature"},
            "cadusd": {"path": "fx.csv", "frequency": "daily", "role": "target", "header": false}
        }"#;
        fs::write(dir.path().join("m.json"), manifest).unwrap();
        let (m, data) = load_manifest(dir.path().join("m.json")).unwrap();
        assert_eq!(m.target().unwrap(), "cadusd");
        assert_eq!(data.names(), vec!["cadusd", "oil"]);
        let t = data.table(Frequency::Daily).unwrap();
        assert_eq!(t.column("oil").unwrap(), &[10.0, -3.0]);
    }

    #[test]
    fn manifest_errors() {
        let none = r#"{"oil": {"path": "a.csv", "frequency": "daily", "role": "feature"}}"#;
        assert!(matches!(DataManifest::from_json(none), Err(Error::Config(_))));
        let bad = r#"{"oil": {"path": "a.csv", "frequency": "hourly", "role": "feature"}}"#;
        assert!(DataManifest::from_json(bad).is_err());
        let dir = tempfile::tempdir().unwrap();
        let missing = r#"{"fx": {"path": "nope.csv", "frequency": "daily", "role": "target"}}"#;
        fs::write(dir.path().join("m.json"), missing).unwrap();
        let err = load_manifest(dir.path().join("m.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("nope.csv"));
    }
}
