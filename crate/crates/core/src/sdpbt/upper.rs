//! Where the incumbent cost `f̄` comes from.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::TightenError;
use crate::ipm::local_upper_bound;
use crate::netmodel::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpperBoundSource {
    /// Given on the command line.
    Given,
    /// Read from a known-solutions file.
    KnownSolutions { file: String },
    /// Best verified point of a multistart local solve.
    MultiStart {
        starts: usize,
        verified: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    pub value: f64,
    pub source: UpperBoundSource,
}

/// Looks `case` up in a two-column `case,objective` file. Blank lines,
/// `#` comments and a header row are skipped.
pub fn known_solution(text: &str, case: &str) -> Result<Option<f64>, TightenError> {
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split(',').map(str::trim);
        let (Some(name), Some(value), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(TightenError::UpperBound(format!(
                "line {}: expected two columns",
                n + 1
            )));
        };
        if name != case {
            continue;
        }
        return match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Some(v)),
            _ => Err(TightenError::UpperBound(format!(
                "line {}: bad objective `{value}`",
                n + 1
            ))),
        };
    }
    Ok(None)
}

/// Resolves `f̄` in order of precedence: an explicit value, an entry for
/// `net.name` in `known`, then a multistart local solve.
pub fn resolve_upper_bound(
    net: &Network,
    given: Option<f64>,
    known: Option<&Path>,
    starts: usize,
    seed: u64,
) -> Result<UpperBound, TightenError> {
    if let Some(v) = given {
        if !v.is_finite() {
            return Err(TightenError::UpperBound(format!(
                "given value {v} is not finite"
            )));
        }
        return Ok(UpperBound {
            value: v,
            source: UpperBoundSource::Given,
        });
    }
    if let Some(path) = known {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TightenError::UpperBound(format!("{}: {e}", path.display())))?;
        if let Some(v) = known_solution(&text, &net.name)? {
            return Ok(UpperBound {
                value: v,
                source: UpperBoundSource::KnownSolutions {
                    file: path.display().to_string(),
                },
            });
        }
    }
    let local = local_upper_bound(net, starts, seed);
    if !local.objective.is_finite() {
        return Err(TightenError::NoUpperBound);
    }
    Ok(UpperBound {
        value: local.objective,
        source: UpperBoundSource::MultiStart {
            starts: local.starts,
            verified: local.verified,
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_skips_comments_and_header() {
        let text = "# best known\ncase,objective\ncase_a, 12.5\ncase_b,3\n";
        assert_eq!(known_solution(text, "case_b").unwrap(), Some(3.0));
        assert_eq!(known_solution(text, "case_c").unwrap(), None);
        assert!(known_solution("a,b,c\n", "a").is_err());
        assert!(known_solution("a,inf\n", "a").is_err());
    }

    #[test]
    fn explicit_value_wins() {
        let net = crate::netmodel::tests::two_bus();
        let ub = resolve_upper_bound(&net, Some(7.0), None, 1, 0).unwrap();
        assert_eq!(ub.value, 7.0);
        assert_eq!(ub.source, UpperBoundSource::Given);
    }
}
