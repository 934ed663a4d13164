//! JSON artifact for a prefix together with its head. Doubles are written as
//! shortest round-trip decimal strings so export/import is bit-exact.

use serde::{Deserialize, Serialize};

use super::universal::embed_dim;
use super::{AttentionHeadParams, PrefixTokens};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrefixArtifact {
    pub d: usize,
    pub m: usize,
    pub lambda: String,
    #[serde(rename = "M")]
    pub m_const: String,
    pub augmented: bool,
    pub tokens: Vec<Vec<String>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<String>>,
    #[serde(rename = "W_V")]
    pub w_v: Vec<Vec<String>>,
}

fn enc(v: f64) -> String {
    format!("{v:e}")
}

fn dec(s: &str) -> Result<f64> {
    s.parse::<f64>().map_err(|e| Error::Schema(format!("bad number {s:?}: {e}")))
}

fn enc_rows(rows: &[Vec<f64>]) -> Vec<Vec<String>> {
    rows.iter().map(|r| r.iter().copied().map(enc).collect()).collect()
}

fn dec_rows(rows: &[Vec<String>], cols: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|r| {
            if r.len() != cols {
                return Err(Error::Schema(format!("{what}: row of length {} where {cols} expected", r.len())));
            }
            r.iter().map(|s| dec(s)).collect()
        })
        .collect()
}

pub fn export_prefix(prefix: &PrefixTokens, head: &AttentionHeadParams) -> Result<String> {
    if prefix.d != head.d {
        return Err(Error::Schema(format!("prefix dimension {} differs from head dimension {}", prefix.d, head.d)));
    }
    let art = PrefixArtifact {
        d: prefix.d,
        m: prefix.m,
        lambda: enc(prefix.lambda),
        m_const: enc(prefix.m_const),
        augmented: prefix.augmented,
        tokens: enc_rows(&prefix.tokens),
        h: enc_rows(&head.h.to_rows()),
        w_v: enc_rows(&head.w_v.to_rows()),
    };
    serde_json::to_string_pretty(&art).map_err(|e| Error::Schema(e.to_string()))
}

pub fn import_prefix(json: &str) -> Result<(PrefixTokens, AttentionHeadParams)> {
    let art: PrefixArtifact = serde_json::from_str(json).map_err(|e| Error::Schema(e.to_string()))?;
    let d = art.d;
    if d != embed_dim(art.m, art.augmented) {
        return Err(Error::Schema(format!("d = {d} inconsistent with m = {} (augmented = {})", art.m, art.augmented)));
    }
    let square = |rows: &[Vec<String>], what: &str| -> Result<Matrix> {
        if rows.len() != d {
            return Err(Error::Schema(format!("{what} has {} rows, expected {d}", rows.len())));
        }
        Matrix::from_rows(&dec_rows(rows, d, what)?)
    };
    let head = AttentionHeadParams::new(square(&art.h, "H")?, square(&art.w_v, "W_V")?)
        .map_err(|e| Error::Schema(e.to_string()))?;
    let prefix = PrefixTokens::new(
        d,
        art.m,
        dec(&art.lambda)?,
        dec_rows(&art.tokens, d, "tokens")?,
        dec(&art.m_const)?,
        art.augmented,
    )
    .map_err(|e| Error::Schema(e.to_string()))?;
    Ok((prefix, head))
}
