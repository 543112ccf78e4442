use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Keys set by flags, collected before merging.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_owned(), serde_json::to_value(v).expect("flag values serialize"));
        }
        self
    }
}

/// Settings resolved from defaults, then the config file, then flags, plus
/// the keys that were given explicitly by either source.
#[derive(Debug)]
pub struct Resolved<T> {
    pub value: T,
    pub explicit: BTreeSet<String>,
}

/// Reads a config file. A run manifest is accepted too: its `config`
/// snapshot is used.
fn read_config(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let value: Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut map = match value {
        Value::Object(map) => map,
        _ => bail!("config {} must hold a JSON object", path.display()),
    };
    if let Some(Value::Object(inner)) = map.remove("config") {
        return Ok(inner);
    }
    Ok(map)
}

pub fn resolve<T: Serialize + DeserializeOwned>(
    defaults: &T,
    config: Option<&Path>,
    flags: Overrides,
) -> Result<Resolved<T>> {
    let Value::Object(mut merged) = serde_json::to_value(defaults)? else {
        bail!("settings must serialize to an object");
    };
    let mut explicit = BTreeSet::new();
    let mut layers = Vec::new();
    if let Some(path) = config {
        layers.push((format!("config {}", path.display()), read_config(path)?));
    }
    layers.push(("flags".to_owned(), flags.0));
    for (source, layer) in layers {
        for (key, value) in layer {
            if !merged.contains_key(&key) {
                let known: Vec<&str> = merged.keys().map(String::as_str).collect();
                bail!("unknown key `{key}` in {source}; expected one of: {}", known.join(", "));
            }
            explicit.insert(key.clone());
            merged.insert(key, value);
        }
    }
    let value = serde_json::from_value(Value::Object(merged)).context("invalid settings")?;
    Ok(Resolved { value, explicit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;
    use std::io::Write;

    #[derive(Serialize, Deserialize, Debug, PartialEq)]
    struct S {
        a: u32,
        b: f64,
        c: Option<String>,
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"a": 5, "b": 2.5}}"#).unwrap();
        let mut flags = Overrides::default();
        flags.set("b", Some(9.0));
        let r = resolve(&S { a: 1, b: 1.0, c: None }, Some(f.path()), flags).unwrap();
        assert_eq!(r.value, S { a: 5, b: 9.0, c: None });
        assert_eq!(r.explicit.into_iter().collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn manifest_snapshot_is_accepted() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"version": "x", "config": {{"a": 3}}}}"#).unwrap();
        let r = resolve(&S { a: 1, b: 1.0, c: None }, Some(f.path()), Overrides::default()).unwrap();
        assert_eq!(r.value.a, 3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, r#"{{"zzz": 1}}"#).unwrap();
        let err = resolve(&S { a: 1, b: 1.0, c: None }, Some(f.path()), Overrides::default()).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }
}
