//! Category size priors and volume ratios.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::{Deserialize, Serialize};

use crate::annotate::Box3D;
use crate::error::{Error, Result};

/// Key reserved for the free-text provenance note in prior files.
pub const SOURCE_KEY: &str = "_source";

/// Category -> reference (L, W, H) in meters. Keys are lowercased and trimmed.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SizePriorDB {
    entries: BTreeMap<String, [f64; 3]>,
    source: Option<String>,
}

pub fn normalize_category(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Raw key/value pairs in document order, duplicates included.
struct RawEntries(Vec<(String, serde_json::Value)>);

impl<'de> Deserialize<'de> for RawEntries {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = RawEntries;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object mapping category names to [L, W, H]")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<RawEntries, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, serde_json::Value>()? {
                    out.push((k, v));
                }
                Ok(RawEntries(out))
            }
        }
        d.deserialize_map(V)
    }
}

impl SizePriorDB {
    /// Parses a prior file: `{"<category>": [L, W, H], ..., "_source": "..."}`.
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let raw: RawEntries = serde_json::from_slice(bytes).map_err(|e| {
            Error::format(format!("size priors: {} at line {}, column {}", e, e.line(), e.column()))
        })?;
        let mut entries = BTreeMap::new();
        let mut source = None;
        for (key, value) in raw.0 {
            if key == SOURCE_KEY {
                let s = value
                    .as_str()
                    .ok_or_else(|| Error::format(format!("size priors: field `{SOURCE_KEY}` must be a string")))?;
                source = Some(s.to_owned());
                continue;
            }
            let name = normalize_category(&key);
            if name.is_empty() {
                return Err(Error::format(format!("size priors: empty category name `{key}`")));
            }
            let dims = parse_dims(&key, &value)?;
            if entries.insert(name.clone(), dims).is_some() {
                return Err(Error::format(format!(
                    "size priors: duplicate category `{name}` (from key `{key}`)"
                )));
            }
        }
        Ok(Self { entries, source })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, [f64; 3])>, source: Option<String>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (k, dims) in entries {
            let name = normalize_category(&k);
            if name.is_empty() || !dims.iter().all(|d| d.is_finite() && *d > 0.0) {
                return Err(Error::invalid(format!("bad prior entry `{k}`: {dims:?}")));
            }
            if map.insert(name.clone(), dims).is_some() {
                return Err(Error::invalid(format!("duplicate category `{name}`")));
            }
        }
        Ok(Self { entries: map, source })
    }

    pub fn get(&self, category: &str) -> Option<[f64; 3]> {
        self.entries.get(&normalize_category(category)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn source(&self) -> Option<&str> {
        self.source.as_deref()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        for (k, v) in &self.entries {
            obj.insert(k.clone(), serde_json::json!(v));
        }
        if let Some(s) = &self.source {
            obj.insert(SOURCE_KEY.into(), serde_json::Value::String(s.clone()));
        }
        serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("priors serialise")
    }
}

fn parse_dims(key: &str, value: &serde_json::Value) -> Result<[f64; 3]> {
    let arr = value
        .as_array()
        .filter(|a| a.len() == 3)
        .ok_or_else(|| Error::format(format!("size priors: field `{key}` must be an array of 3 numbers")))?;
    let mut dims = [0.0; 3];
    for (i, v) in arr.iter().enumerate() {
        let d = v
            .as_f64()
            .ok_or_else(|| Error::format(format!("size priors: field `{key}`[{i}] is not a number")))?;
        if !(d.is_finite() && d > 0.0) {
            return Err(Error::format(format!("size priors: field `{key}`[{i}] = {d} must be positive")));
        }
        dims[i] = d;
    }
    Ok(dims)
}

/// `(L·W·H) / (L_ref·W_ref·H_ref)`.
pub fn volume_ratio(b: &Box3D, ref_dims: [f64; 3]) -> Result<f64> {
    volume_ratio_dims(b.dims(), ref_dims)
}

pub fn volume_ratio_dims(dims: [f64; 3], ref_dims: [f64; 3]) -> Result<f64> {
    if !dims.iter().chain(&ref_dims).all(|d| d.is_finite() && *d > 0.0) {
        return Err(Error::invalid(format!(
            "volume ratio needs positive dimensions, got {dims:?} vs {ref_dims:?}"
        )));
    }
    Ok(dims.iter().product::<f64>() / ref_dims.iter().product::<f64>())
}
