use crate::error::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F score in [0, 1] with recall weighted by `β = 1.2`.
pub fn rouge_l(candidate: &[String], reference: &[String]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("reference"));
    }
    let l = lcs_len(candidate, reference);
    if l == 0 {
        return Ok(0.0);
    }
    let p = l as f64 / candidate.len() as f64;
    let r = l as f64 / reference.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    Ok((1.0 + b2) * p * r / (r + b2 * p))
}

/// Best score over several references.
pub fn rouge_l_multi(candidate: &[String], references: &[Vec<String>]) -> Result<f64> {
    let mut best: Option<f64> = None;
    for r in references {
        let s = rouge_l(candidate, r)?;
        best = Some(best.map_or(s, |b| b.max(s)));
    }
    best.ok_or(Error::Empty("reference list"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn hand_cases() {
        assert_eq!(rouge_l(&t("a b c"), &t("a b c")).unwrap(), 1.0);
        assert_eq!(rouge_l(&t("a b"), &t("c d")).unwrap(), 0.0);
        // P = 0.75, R = 1
        let f = rouge_l(&t("a b c d"), &t("a c d")).unwrap();
        assert!((100.0 * f - 87.98).abs() < 0.005, "{f}");
        assert!(rouge_l(&t("a"), &[]).is_err());
        assert_eq!(rouge_l(&[], &t("a")).unwrap(), 0.0);
    }

    #[test]
    fn lcs_small() {
        assert_eq!(lcs_len(&[1, 2, 3, 4, 1], &[3, 4, 1, 2, 1]), 3);
        assert_eq!(lcs_len::<u8>(&[], &[1]), 0);
    }
}
