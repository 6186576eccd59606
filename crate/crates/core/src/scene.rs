//! Scene files: `{"centers": [[x, y], ...], "labels": [...]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BilliardTable, Vec2};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub centers: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl SceneFile {
    pub fn from_table(table: &BilliardTable) -> Self {
        Self {
            centers: table.centers().iter().map(|&c| c.into()).collect(),
            labels: table.labels().map(<[String]>::to_vec),
        }
    }

    pub fn into_table(self) -> Result<BilliardTable> {
        BilliardTable::with_labels(
            self.centers.into_iter().map(Vec2::from).collect(),
            self.labels,
        )
    }
}

/// Parse a scene from JSON text, enforcing the table invariants.
pub fn parse_scene(text: &str) -> Result<BilliardTable> {
    let file: SceneFile = serde_json::from_str(text).map_err(|e| Error::SceneParse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_table()
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<BilliardTable> {
    parse_scene(&std::fs::read_to_string(path)?)
}

pub fn scene_to_json(table: &BilliardTable) -> String {
    serde_json::to_string_pretty(&SceneFile::from_table(table)).expect("scene serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_centers_and_labels() {
        let t = parse_scene(r#"{"centers": [[0,0],[4,0]], "labels": ["a","b"]}"#).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.label(1), "b");
        assert_eq!(parse_scene(&scene_to_json(&t)).unwrap(), t);
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse_scene("{\"centers\": [[0,0],\n [4,0]],, }").unwrap_err();
        match err {
            Error::SceneParse { line, column, .. } => {
                assert_eq!(line, 2);
                assert!(column > 0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn reports_offending_pair() {
        let err = parse_scene(r#"{"centers": [[0,0],[5,0],[6.5,0]]}"#).unwrap_err();
        assert!(matches!(err, Error::Overlap { i: 1, j: 2, .. }));
        assert!(err.to_string().contains("1 and 2"));
    }
}
