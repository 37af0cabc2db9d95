//! Static API tokens from `tokens.tsv`: `token<TAB>scopes<TAB>points`, where
//! scopes is a comma list of READ, EXPORT, IMPORT, ADMIN and points is a
//! comma list of ids or `*`.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Read,
    Export,
    Import,
    Admin,
}

impl FromStr for Scope {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_uppercase().as_str() {
            "READ" => Ok(Scope::Read),
            "EXPORT" => Ok(Scope::Export),
            "IMPORT" => Ok(Scope::Import),
            "ADMIN" => Ok(Scope::Admin),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AllowedPoints {
    All,
    Only(BTreeSet<u32>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiToken {
    pub scopes: BTreeSet<Scope>,
    pub points: AllowedPoints,
}

impl ApiToken {
    pub fn has(&self, scope: Scope) -> bool {
        self.scopes.contains(&scope)
    }

    pub fn allows(&self, point_id: u32) -> bool {
        match &self.points {
            AllowedPoints::All => true,
            AllowedPoints::Only(set) => set.contains(&point_id),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TokenFileError {
    #[error("reading tokens: {0}")]
    Io(#[from] std::io::Error),
    #[error("tokens line {line}: {reason}")]
    Malformed { line: usize, reason: &'static str },
}

#[derive(Debug, Clone, Default)]
pub struct TokenTable {
    tokens: HashMap<String, ApiToken>,
}

impl TokenTable {
    pub fn parse(text: &str) -> Result<Self, TokenFileError> {
        let mut tokens = HashMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let bad = |reason| TokenFileError::Malformed { line, reason };
            let cols: Vec<&str> = l.split('\t').map(str::trim).collect();
            if cols.len() != 3 || cols[0].is_empty() {
                return Err(bad("expected token, scopes and points separated by tabs"));
            }
            let scopes = cols[1]
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(Scope::from_str)
                .collect::<Result<BTreeSet<_>, _>>()
                .map_err(|_| bad("unknown scope"))?;
            let points = if cols[2] == "*" {
                AllowedPoints::All
            } else {
                AllowedPoints::Only(
                    cols[2]
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(|s| s.trim().parse::<u32>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("bad point id"))?,
                )
            };
            if tokens.insert(cols[0].to_string(), ApiToken { scopes, points }).is_some() {
                return Err(bad("duplicate token"));
            }
        }
        Ok(TokenTable { tokens })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenFileError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, token: &str) -> Option<&ApiToken> {
        self.tokens.get(token)
    }

    pub fn insert(&mut self, token: impl Into<String>, t: ApiToken) {
        self.tokens.insert(token.into(), t);
    }
}
