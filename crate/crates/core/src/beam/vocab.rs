use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::BeamError;

pub type TokenId = u32;

pub const DEFAULT_EOS: &str = "<eos>";

/// Finite token set with one distinguished end-of-sequence token.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    eos: TokenId,
    index: HashMap<String, TokenId>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    eos: String,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = BeamError;

    fn try_from(r: VocabularyRepr) -> Result<Self, BeamError> {
        Vocabulary::new(r.tokens, &r.eos)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            eos: v.eos_token().to_string(),
            tokens: v.tokens,
        }
    }
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos: &str) -> Result<Self, BeamError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(BeamError::InvalidVocabulary(format!("token {t:?} is empty or contains whitespace")));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(BeamError::InvalidVocabulary(format!("duplicate token {t:?}")));
            }
        }
        let eos = *index
            .get(eos)
            .ok_or_else(|| BeamError::InvalidVocabulary(format!("end-of-sequence token {eos:?} missing")))?;
        Ok(Self { tokens, eos, index })
    }

    /// The toy postfix language: `x`, digits, `+`, `-`, `*`, then `<eos>`.
    pub fn toy() -> Self {
        let mut tokens: Vec<String> = vec!["x".into()];
        tokens.extend((0..10).map(|d| d.to_string()));
        tokens.extend(["+", "-", "*", DEFAULT_EOS].map(String::from));
        Self::new(tokens, DEFAULT_EOS).expect("toy vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn eos_token(&self) -> &str {
        &self.tokens[self.eos as usize]
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Result<TokenId, BeamError> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| BeamError::UnknownToken(token.to_string()))
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TokenId>, BeamError> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Program text: non-EOS tokens joined by single spaces.
    pub fn render<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        tokens
            .iter()
            .map(AsRef::as_ref)
            .filter(|t| *t != self.eos_token())
            .collect::<Vec<_>>()
            .join(" ")
    }
}
