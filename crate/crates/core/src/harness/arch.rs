//! Architecture strings such as `4000Z-1000L-4000Z-10`.

use crate::error::{Error, Result};
use crate::layers::{Architecture, HiddenSpec, UnitKind};

/// Parses `<count><kind>` hidden tokens (`Z` zero-bias ReLU, `R` ReLU, `L` linear)
/// separated by `-`, followed by the softmax class count. Positions in errors are 1-based.
pub fn parse_architecture(spec: &str) -> Result<Architecture> {
    let tokens: Vec<&str> = spec.trim().split('-').map(str::trim).collect();
    let err = |position: usize, token: &str, msg: &str| Error::Architecture {
        position,
        token: token.to_string(),
        msg: msg.to_string(),
    };
    let (last, hidden_tokens) = tokens
        .split_last()
        .expect("split yields at least one token");
    let mut hidden = Vec::with_capacity(hidden_tokens.len());
    for (i, tok) in hidden_tokens.iter().enumerate() {
        let position = i + 1;
        let split = tok.find(|c: char| !c.is_ascii_digit()).unwrap_or(tok.len());
        let (digits, kind) = tok.split_at(split);
        if digits.is_empty() {
            return Err(err(position, tok, "expected a layer size before the kind"));
        }
        let width: usize = digits
            .parse()
            .map_err(|_| err(position, tok, "layer size does not fit in an integer"))?;
        if width == 0 {
            return Err(err(position, tok, "layer size must be positive"));
        }
        let kind = match kind {
            "Z" | "z" => UnitKind::ZeroBias,
            "R" | "r" => UnitKind::Relu,
            "L" | "l" => UnitKind::Linear,
            "" => return Err(err(position, tok, "missing layer kind (Z, R or L)")),
            _ => {
                return Err(err(
                    position,
                    tok,
                    "unknown layer kind (expected Z, R or L)",
                ))
            }
        };
        hidden.push(HiddenSpec { width, kind });
    }
    let position = tokens.len();
    let classes: usize = last
        .parse()
        .map_err(|_| err(position, last, "the last token must be the class count"))?;
    if classes == 0 {
        return Err(err(position, last, "class count must be positive"));
    }
    Ok(Architecture { hidden, classes })
}
