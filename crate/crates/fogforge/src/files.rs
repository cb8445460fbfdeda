//! JSON file helpers and the scenario file format.
//!
//! A scenario file looks like
//!
//! ```json
//! {
//!   "config": { "device_count": 20, "rows_per_app": 3, "seed": 7 },
//!   "devices": [{ "id": 0, "speed": 1.0, "latency": 50.0, "cost": 20.0, "is_cloud": true }],
//!   "applications": [{ "rows": 3, "ops": [[1.0, 1.0, 1.0]], "edges": [[0, 0, 0, 1]] }]
//! }
//! ```
//!
//! Edges are `[row, col, row, col]` of source then target, zero-based, and
//! must include the row chains. `config` is optional and unknown keys are
//! ignored.

use std::fs;
use std::path::Path;

use fogforge_core::instance::{Scenario, ScenarioConfig};
use fogforge_core::{Application, Device, DeviceSet, ServiceId};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationFile {
    pub rows: usize,
    pub ops: Vec<Vec<f64>>,
    pub edges: Vec<[usize; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ScenarioConfig>,
    pub devices: Vec<Device>,
    pub applications: Vec<ApplicationFile>,
}

impl From<&Scenario> for ScenarioFile {
    fn from(sc: &Scenario) -> Self {
        let applications = sc
            .applications
            .iter()
            .map(|app| ApplicationFile {
                rows: app.rows(),
                ops: app.ops_grid(),
                edges: app.edge_ids().map(|(a, b)| [a.row, a.col, b.row, b.col]).collect(),
            })
            .collect();
        ScenarioFile {
            config: Some(sc.config.clone()),
            devices: sc.devices.as_slice().to_vec(),
            applications,
        }
    }
}

impl ScenarioFile {
    pub fn into_scenario(self) -> fogforge_core::Result<Scenario> {
        let devices = DeviceSet::new(self.devices)?;
        let applications = self
            .applications
            .into_iter()
            .map(|a| {
                if a.ops.len() != a.rows {
                    return Err(fogforge_core::Error::InvalidApplication(format!(
                        "rows = {} but {} operation rows",
                        a.rows,
                        a.ops.len()
                    )));
                }
                let edges: Vec<(ServiceId, ServiceId)> =
                    a.edges.iter().map(|e| (ServiceId::new(e[0], e[1]), ServiceId::new(e[2], e[3]))).collect();
                Application::from_edges(a.ops, &edges)
            })
            .collect::<fogforge_core::Result<Vec<_>>>()?;
        Ok(Scenario { config: self.config.unwrap_or_default(), devices, applications })
    }
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let file: ScenarioFile = read_json(path)?;
    file.into_scenario().map_err(|e| Error::Schema { path: path.into(), message: e.to_string() })
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    write_json(path, &ScenarioFile::from(scenario))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fogforge_core::instance::generate_scenario;

    #[test]
    fn scenario_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let sc = generate_scenario(&ScenarioConfig::desk().with_seed(3)).unwrap();
        write_scenario(&path, &sc).unwrap();
        assert_eq!(read_scenario(&path).unwrap(), sc);
    }

    #[test]
    fn hand_written_file_without_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        let text = r#"{
            "devices": [
                {"id": 0, "speed": 1.0, "latency": 50.0, "cost": 20.0, "is_cloud": true, "zone": "eu"},
                {"id": 1, "speed": 2.0, "latency": 1.0, "cost": 1.0, "is_cloud": false}
            ],
            "applications": [{"rows": 1, "ops": [[1.0, 2.0]], "edges": [[0, 0, 0, 1]]}]
        }"#;
        std::fs::write(&path, text).unwrap();
        let sc = read_scenario(&path).unwrap();
        assert_eq!(sc.devices.len(), 2);
        assert_eq!(sc.applications[0].len(), 2);
    }

    #[test]
    fn bad_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"devices": [], "applications": []}"#).unwrap();
        let err = read_scenario(&path).unwrap_err();
        assert!(err.to_string().contains("bad.json"));
        assert_eq!(err.exit_code(), 2);
        let missing = read_scenario(&dir.path().join("nope.json")).unwrap_err();
        assert!(matches!(missing, Error::Io { .. }));
    }
}
