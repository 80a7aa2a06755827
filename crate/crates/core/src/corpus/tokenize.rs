/// Token that replaces a literal `|` so the tagged format stays unambiguous.
pub const PIPE_TOKEN: &str = "<pipe>";

/// Lowercases, splits on whitespace and makes every non-alphanumeric
/// character its own token. `|` becomes [`PIPE_TOKEN`].
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            flush(&mut word, &mut out);
        } else if ch == '|' {
            flush(&mut word, &mut out);
            out.push(PIPE_TOKEN.to_string());
        } else if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
        } else if ch.is_control() {
            flush(&mut word, &mut out);
        } else {
            flush(&mut word, &mut out);
            out.push(ch.to_lowercase().collect());
        }
    }
    flush(&mut word, &mut out);
    out
}

fn flush(word: &mut String, out: &mut Vec<String>) {
    if !word.is_empty() {
        out.push(std::mem::take(word));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Ron Goodwin, and Dawn French"),
            vec!["ron", "goodwin", ",", "and", "dawn", "french"]
        );
    }

    #[test]
    fn empty_input() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("   \t\n").is_empty());
    }

    #[test]
    fn pipes_are_escaped() {
        assert_eq!(tokenize("A|B"), vec!["a", "<pipe>", "b"]);
    }

    #[test]
    fn collapses_whitespace() {
        assert_eq!(tokenize("  a \t\tb\n"), vec!["a", "b"]);
    }

    #[test]
    fn non_ascii_words_survive() {
        assert_eq!(tokenize("Ça va? Über"), vec!["ça", "va", "?", "über"]);
    }
}
