//! Bearer tokens mapped to author handles.

use std::collections::HashMap;
use std::path::Path;

/// Parsed token file: one `token handle` pair per line; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenTable {
    handles: HashMap<String, String>,
}

impl TokenTable {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut handles = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(token), Some(handle), None) => {
                    handles.insert(token.to_string(), handle.to_string());
                }
                _ => return Err(format!("line {}: expected `token handle`", n + 1)),
            }
        }
        Ok(Self { handles })
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn handle(&self, token: &str) -> Option<&str> {
        self.handles.get(token).map(String::as_str)
    }
}

/// Token from an `Authorization: Bearer <token>` header value.
pub fn bearer(header: &str) -> Option<&str> {
    let (scheme, token) = header.split_once(' ')?;
    scheme.eq_ignore_ascii_case("bearer").then(|| token.trim())
}
