use serde::{Deserialize, Serialize};

use super::StorageError;

pub const MAX_KEY_LEN: usize = 1024;

/// A globally unique object key: a namespace followed by one or more
/// slash-separated path segments. Keys order lexicographically over their
/// full string form, which makes listings deterministic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ObjectKey {
    full: String,
}

impl ObjectKey {
    pub fn new(namespace: &str, path: &str) -> Result<ObjectKey, StorageError> {
        Self::parse(&format!("{namespace}/{path}"))
    }

    /// Parse a full "namespace/segment/..." key string.
    pub fn parse(s: &str) -> Result<ObjectKey, StorageError> {
        if s.len() > MAX_KEY_LEN {
            return Err(StorageError::InvalidKey(format!(
                "key length {} exceeds {MAX_KEY_LEN} bytes",
                s.len()
            )));
        }
        let segments: Vec<&str> = s.split('/').collect();
        if segments.len() < 2 {
            return Err(StorageError::InvalidKey(format!(
                "key {s:?} needs a namespace and at least one path segment"
            )));
        }
        for seg in &segments {
            if seg.is_empty() {
                return Err(StorageError::InvalidKey(format!(
                    "key {s:?} has an empty segment"
                )));
            }
            if *seg == "." || *seg == ".." {
                return Err(StorageError::InvalidKey(format!(
                    "key {s:?} has a relative segment"
                )));
            }
        }
        Ok(ObjectKey {
            full: s.to_string(),
        })
    }

    pub fn namespace(&self) -> &str {
        self.full.split('/').next().unwrap()
    }

    pub fn path(&self) -> &str {
        &self.full[self.namespace().len() + 1..]
    }

    pub fn as_str(&self) -> &str {
        &self.full
    }

    pub fn segments(&self) -> impl Iterator<Item = &str> {
        self.full.split('/')
    }

    pub fn has_prefix(&self, prefix: &str) -> bool {
        self.full.starts_with(prefix)
    }
}

impl std::fmt::Display for ObjectKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.full)
    }
}

impl TryFrom<String> for ObjectKey {
    type Error = StorageError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        ObjectKey::parse(&s)
    }
}

impl From<ObjectKey> for String {
    fn from(k: ObjectKey) -> String {
        k.full
    }
}

impl std::str::FromStr for ObjectKey {
    type Err = StorageError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectKey::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_namespace_and_path() {
        let k = ObjectKey::parse("jobs/j1/result/0").unwrap();
        assert_eq!(k.namespace(), "jobs");
        assert_eq!(k.path(), "j1/result/0");
        assert_eq!(k.to_string(), "jobs/j1/result/0");
    }

    #[test]
    fn rejects_bad_segments() {
        assert!(ObjectKey::parse("jobs").is_err());
        assert!(ObjectKey::parse("jobs//x").is_err());
        assert!(ObjectKey::parse("jobs/../x").is_err());
        assert!(ObjectKey::parse("jobs/./x").is_err());
        assert!(ObjectKey::parse(&format!("ns/{}", "a".repeat(2000))).is_err());
    }

    #[test]
    fn orders_lexicographically() {
        let mut keys = vec![
            ObjectKey::parse("b/1").unwrap(),
            ObjectKey::parse("a/2").unwrap(),
            ObjectKey::parse("a/10").unwrap(),
        ];
        keys.sort();
        let strs: Vec<&str> = keys.iter().map(|k| k.as_str()).collect();
        assert_eq!(strs, vec!["a/10", "a/2", "b/1"]);
    }
}
