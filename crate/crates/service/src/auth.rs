use std::path::Path;

use serde::Deserialize;

use crate::ServiceError;

#[derive(Debug, Clone, Deserialize)]
struct TokenEntry {
    token: String,
    owner: String,
}

#[derive(Debug, Deserialize)]
struct TokenFile {
    #[serde(default)]
    tokens: Vec<TokenEntry>,
}

/// Static bearer tokens, each mapped to an owner identity.
///
/// ```toml
/// [[tokens]]
/// token = "4f1c..."
/// owner = "site-a"
/// ```
#[derive(Debug, Clone, Default)]
pub struct TokenStore {
    entries: Vec<TokenEntry>,
}

fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl TokenStore {
    pub fn from_pairs<I, T, O>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (T, O)>,
        T: Into<String>,
        O: Into<String>,
    {
        TokenStore { entries: pairs.into_iter().map(|(t, o)| TokenEntry { token: t.into(), owner: o.into() }).collect() }
    }

    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        let file: TokenFile = toml::from_str(text).map_err(|e| ServiceError::Config(format!("token file: {e}")))?;
        if let Some(e) = file.tokens.iter().find(|e| e.token.len() < 16 || e.owner.trim().is_empty()) {
            return Err(ServiceError::Config(format!(
                "token for owner {:?} must be at least 16 characters with a non-empty owner",
                e.owner
            )));
        }
        Ok(TokenStore { entries: file.tokens })
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Owner for an `Authorization` header value, if it carries a known token.
    pub fn identify(&self, header: &str) -> Option<&str> {
        let (scheme, token) = header.trim().split_once(' ')?;
        if !scheme.eq_ignore_ascii_case("bearer") {
            return None;
        }
        let token = token.trim().as_bytes();
        // scan every entry so timing does not reveal which one matched
        let mut found = None;
        for e in &self.entries {
            if ct_eq(e.token.as_bytes(), token) {
                found = Some(e.owner.as_str());
            }
        }
        found
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bearer_parsing() {
        let s = TokenStore::from_toml("[[tokens]]\ntoken = \"aaaaaaaaaaaaaaaa\"\nowner = \"a\"\n").unwrap();
        assert_eq!(s.identify("Bearer aaaaaaaaaaaaaaaa"), Some("a"));
        assert_eq!(s.identify("bearer  aaaaaaaaaaaaaaaa "), Some("a"));
        assert_eq!(s.identify("Basic aaaaaaaaaaaaaaaa"), None);
        assert_eq!(s.identify("Bearer aaaaaaaaaaaaaaab"), None);
        assert_eq!(s.identify("Bearer"), None);
        assert!(TokenStore::from_toml("[[tokens]]\ntoken = \"short\"\nowner = \"a\"\n").is_err());
    }
}
