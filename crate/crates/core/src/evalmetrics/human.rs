use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Judgement {
    pub rater: String,
    pub question: String,
    pub criterion: String,
    pub yes: bool,
}

/// Reads `rater,question_id,criterion,0|1` rows (comma or tab separated).
/// A first row whose last field is not 0/1 is taken as a header; `#` lines
/// and blank lines are skipped.
pub fn parse_judgements(text: &str) -> Result<Vec<Judgement>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let sep = if line.contains('\t') { '\t' } else { ',' };
        let f: Vec<&str> = line.split(sep).map(str::trim).collect();
        let err = |column: usize, message: String| Error::Parse {
            line: i + 1,
            column,
            message,
        };
        if f.len() != 4 {
            return Err(err(1, format!("expected 4 fields, found {}", f.len())));
        }
        let yes = match f[3] {
            "1" => true,
            "0" => false,
            _ if out.is_empty() && i == first_data_line(text) => continue,
            other => return Err(err(4, format!("judgement must be 0 or 1, got `{other}`"))),
        };
        out.push(Judgement {
            rater: f[0].to_string(),
            question: f[1].to_string(),
            criterion: f[2].to_string(),
            yes,
        });
    }
    Ok(out)
}

fn first_data_line(text: &str) -> usize {
    text.lines()
        .position(|l| !l.trim().is_empty() && !l.trim().starts_with('#'))
        .unwrap_or(0)
}

/// Per criterion: the mean over raters of each rater's percentage of "yes".
/// Every rater must judge every (question, criterion) pair exactly once.
pub fn human_eval_aggregate(judgements: &[Judgement]) -> Result<BTreeMap<String, f64>> {
    if judgements.is_empty() {
        return Err(Error::Empty("judgement table"));
    }
    let raters: BTreeSet<&str> = judgements.iter().map(|j| j.rater.as_str()).collect();
    let questions: BTreeSet<&str> = judgements.iter().map(|j| j.question.as_str()).collect();
    let criteria: BTreeSet<&str> = judgements.iter().map(|j| j.criterion.as_str()).collect();
    let mut cells: BTreeMap<(&str, &str, &str), bool> = BTreeMap::new();
    for j in judgements {
        if cells
            .insert((&j.rater, &j.criterion, &j.question), j.yes)
            .is_some()
        {
            return Err(Error::contract(format!(
                "rater {} judged question {} on {} twice",
                j.rater, j.question, j.criterion
            )));
        }
    }
    let mut missing = Vec::new();
    for r in &raters {
        for c in &criteria {
            for q in &questions {
                if !cells.contains_key(&(*r, *c, *q)) {
                    missing.push(format!("{r}/{q}/{c}"));
                }
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingJudgements(missing));
    }
    let nq = questions.len() as f64;
    Ok(criteria
        .iter()
        .map(|c| {
            let per_rater: f64 = raters
                .iter()
                .map(|r| {
                    let yes = questions.iter().filter(|q| cells[&(*r, *c, **q)]).count();
                    100.0 * yes as f64 / nq
                })
                .sum();
            (c.to_string(), per_rater / raters.len() as f64)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One criterion, `totals[r]` yes answers for rater r over `n` questions.
    pub(crate) fn table(totals: &[usize], n: usize) -> Vec<Judgement> {
        let mut out = Vec::new();
        for (r, &yes) in totals.iter().enumerate() {
            for q in 0..n {
                out.push(Judgement {
                    rater: format!("r{r}"),
                    question: format!("q{q}"),
                    criterion: "correct".into(),
                    yes: q < yes,
                });
            }
        }
        out
    }

    #[test]
    fn three_raters() {
        let agg = human_eval_aggregate(&table(&[80, 79, 73], 100)).unwrap();
        assert!((agg["correct"] - 77.33).abs() < 0.005);
    }

    #[test]
    fn all_yes_and_single_rater() {
        assert_eq!(human_eval_aggregate(&table(&[10, 10], 10)).unwrap()["correct"], 100.0);
        assert_eq!(human_eval_aggregate(&table(&[7], 20)).unwrap()["correct"], 35.0);
    }

    #[test]
    fn missing_cells_are_listed() {
        let mut t = table(&[1, 1], 2);
        t.remove(3);
        match human_eval_aggregate(&t) {
            Err(Error::MissingJudgements(m)) => assert_eq!(m, vec!["r1/q1/correct"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn parses_with_header_and_tabs() {
        let text = "rater,question_id,criterion,value\nA,1,fluent,1\nA,2,fluent,0\n";
        let j = parse_judgements(text).unwrap();
        assert_eq!(j.len(), 2);
        assert!(j[0].yes && !j[1].yes);
        assert_eq!(parse_judgements("A\t1\tfluent\t1\n").unwrap().len(), 1);
        assert!(parse_judgements("A,1,fluent,1\nA,2,fluent,yes\n").is_err());
        assert!(parse_judgements("A,1,1\n").is_err());
    }
}
