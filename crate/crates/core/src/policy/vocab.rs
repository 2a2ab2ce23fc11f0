use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Ordered symbol table. Ids are dense `0..size`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    symbols: Vec<String>,
    eos: TokenId,
    bos: Option<TokenId>,
}

pub const EOS_SYMBOL: &str = "</s>";
pub const BOS_SYMBOL: &str = "<s>";
pub const ANSWER_DELIMITER: &str = "#";

impl Vocabulary {
    pub fn new(symbols: Vec<String>, eos: &str, bos: Option<&str>) -> Result<Self> {
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::Config(format!("vocabulary symbol {i} is empty")));
            }
            if symbols[..i].contains(s) {
                return Err(Error::Config(format!("duplicate vocabulary symbol {s:?}")));
            }
        }
        let find = |sym: &str| {
            symbols
                .iter()
                .position(|s| s == sym)
                .map(|p| p as TokenId)
                .ok_or_else(|| Error::Config(format!("vocabulary lacks {sym:?}")))
        };
        let eos = find(eos)?;
        let bos = bos.map(find).transpose()?;
        Ok(Self { symbols, eos, bos })
    }

    /// Digits, `+`, `=`, `;`, the answer delimiter `#`, and the two sentinels.
    pub fn arithmetic() -> Self {
        let mut symbols: Vec<String> = (0..10).map(|d| d.to_string()).collect();
        symbols.extend(["+", "=", ";", ANSWER_DELIMITER, BOS_SYMBOL, EOS_SYMBOL].map(String::from));
        Self::new(symbols, EOS_SYMBOL, Some(BOS_SYMBOL)).expect("static vocabulary is valid")
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn bos(&self) -> Option<TokenId> {
        self.bos
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn id(&self, symbol: &str) -> Option<TokenId> {
        self.symbols.iter().position(|s| s == symbol).map(|p| p as TokenId)
    }

    pub fn symbol(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn contains(&self, id: TokenId) -> bool {
        (id as usize) < self.symbols.len()
    }

    /// Greedy longest-match tokenization of a symbol string.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        let mut out = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let best = self
                .symbols
                .iter()
                .enumerate()
                .filter(|(_, s)| rest.starts_with(s.as_str()))
                .max_by_key(|(_, s)| s.len());
            match best {
                Some((id, s)) => {
                    out.push(id as TokenId);
                    rest = &rest[s.len()..];
                }
                None => {
                    return Err(Error::Input(format!("cannot tokenize {rest:?}")));
                }
            }
        }
        Ok(out)
    }

    pub fn decode(&self, tokens: &[TokenId]) -> String {
        tokens
            .iter()
            .map(|&t| self.symbol(t).unwrap_or("\u{fffd}"))
            .collect()
    }

    /// Stable 64-bit fingerprint of the ordered symbol list.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for s in &self.symbols {
            hasher.update(s.as_bytes());
            hasher.update([0u8]);
        }
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
    }
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::arithmetic()
    }
}
