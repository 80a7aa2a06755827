use std::collections::HashMap;
use std::io::BufRead;

use crate::error::{Error, Result};

/// Word vectors read from a text file with one `token v1 v2 ... vd` per line.
#[derive(Clone, Debug, Default)]
pub struct PretrainedVectors {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f32>>,
}

impl PretrainedVectors {
    /// Parses the whole stream. Every line must have the same dimension;
    /// blank lines are skipped. A repeated token keeps its first vector.
    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut out = PretrainedVectors::default();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<embeddings>", e))?;
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values = fields
                .enumerate()
                .map(|(j, f)| {
                    f.parse::<f32>().map_err(|e| Error::Parse {
                        line: i + 1,
                        column: j + 2,
                        message: format!("bad decimal `{f}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f32>>>()?;
            if values.is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    column: 2,
                    message: "token without a vector".into(),
                });
            }
            if out.dim == 0 {
                out.dim = values.len();
            } else if values.len() != out.dim {
                return Err(Error::Parse {
                    line: i + 1,
                    column: values.len() + 1,
                    message: format!("expected {} values, found {}", out.dim, values.len()),
                });
            }
            out.vectors.entry(token.to_string()).or_insert(values);
        }
        Ok(out)
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.vectors.get(token).map(Vec::as_slice)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_vectors() {
        let text = "the 0.1 0.2 0.3\n\ncat -1 0 1.5\nthe 9 9 9\n";
        let v = PretrainedVectors::read(text.as_bytes()).unwrap();
        assert_eq!(v.dim, 3);
        assert_eq!(v.get("the"), Some(&[0.1f32, 0.2, 0.3][..]));
        assert_eq!(v.get("cat"), Some(&[-1.0f32, 0.0, 1.5][..]));
        assert!(v.get("dog").is_none());
    }

    #[test]
    fn ragged_rows_are_an_error() {
        let err = PretrainedVectors::read("a 1 2\nb 1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
