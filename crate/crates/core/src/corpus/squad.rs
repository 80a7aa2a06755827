use serde::Deserialize;

use crate::error::Result;

#[derive(Deserialize)]
struct Document {
    data: Vec<Article>,
}

#[derive(Deserialize)]
struct Article {
    paragraphs: Vec<Paragraph>,
}

#[derive(Deserialize)]
struct Paragraph {
    context: String,
    qas: Vec<Qa>,
}

#[derive(Deserialize)]
struct Qa {
    #[serde(default)]
    id: Option<String>,
    question: String,
    answers: Vec<Answer>,
}

#[derive(Deserialize)]
struct Answer {
    text: String,
    answer_start: usize,
}

/// One (sentence, question, answer) triple pulled out of a paragraph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SquadRecord {
    pub id: String,
    pub sentence: String,
    pub question: String,
    pub answer: String,
    /// Character offset of the answer inside `sentence`.
    pub answer_offset: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub offset_outside_context: usize,
    pub no_answer: usize,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.offset_outside_context + self.no_answer
    }
}

/// Splits on `.`, `?` or `!` followed by whitespace. Returns char ranges
/// (start inclusive, end exclusive) of the trimmed sentences.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if matches!(chars[i], '.' | '?' | '!') && chars.get(i + 1).is_some_and(|c| c.is_whitespace()) {
            out.push((start, i + 1));
            i += 1;
            while i < chars.len() && chars[i].is_whitespace() {
                i += 1;
            }
            start = i;
            continue;
        }
        i += 1;
    }
    if start < chars.len() {
        out.push((start, chars.len()));
    }
    out
}

/// Reads a SQuAD v1.1 document into one record per question (first answer
/// only). The sentence is the context sentence holding the answer offset.
pub fn parse_squad(json: &str) -> Result<(Vec<SquadRecord>, SkipReport)> {
    let doc: Document = serde_json::from_str(json)?;
    let mut records = Vec::new();
    let mut skipped = SkipReport::default();
    for article in &doc.data {
        for para in &article.paragraphs {
            let chars: Vec<char> = para.context.chars().collect();
            let sentences = split_sentences(&para.context);
            for (qi, qa) in para.qas.iter().enumerate() {
                let Some(ans) = qa.answers.first() else {
                    skipped.no_answer += 1;
                    continue;
                };
                let len = ans.text.chars().count();
                if ans.answer_start >= chars.len() || ans.answer_start + len > chars.len() {
                    skipped.offset_outside_context += 1;
                    continue;
                }
                let Some(&(s, e)) = sentences
                    .iter()
                    .find(|(s, e)| (*s..*e).contains(&ans.answer_start))
                else {
                    // offset points at inter-sentence whitespace
                    skipped.offset_outside_context += 1;
                    continue;
                };
                records.push(SquadRecord {
                    id: qa.id.clone().unwrap_or_else(|| format!("q{}", records.len() + qi)),
                    sentence: chars[s..e].iter().collect(),
                    question: qa.question.clone(),
                    answer: ans.text.clone(),
                    answer_offset: ans.answer_start - s,
                });
            }
        }
    }
    Ok((records, skipped))
}
