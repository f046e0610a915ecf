//! Small text utilities shared by the matcher, the scripted provider and the
//! gap reporter.

use alloc::string::String;
use alloc::vec::Vec;

/// Words dropped before similarity scoring: articles, pronouns, auxiliaries.
pub const STOP_WORDS: [&str; 30] = [
    "a", "an", "the", "i", "me", "my", "we", "our", "you", "your", "he", "she", "it", "its",
    "they", "them", "their", "is", "are", "was", "were", "be", "been", "am", "do", "does", "did",
    "have", "has", "had",
];

/// Lowercases and splits on every non-alphanumeric run. Stop words are kept.
pub fn raw_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Tokens used for similarity: [`raw_tokens`] minus [`STOP_WORDS`].
pub fn tokens(text: &str) -> Vec<String> {
    raw_tokens(text)
        .into_iter()
        .filter(|t| !STOP_WORDS.contains(&t.as_str()))
        .collect()
}

/// Canonical form used to key fixture lookups: lowercase alphanumeric
/// tokens joined by single spaces.
pub fn normalize_query(text: &str) -> String {
    raw_tokens(text).join(" ")
}

/// Case-insensitive pattern match over a user utterance.
///
/// A pattern without `*` matches when it occurs as a substring. A pattern
/// containing `*` must match the whole text; each `*` captures the shortest
/// run that lets the rest of the pattern match, and captures are returned in
/// order (trimmed).
pub fn match_pattern(pattern: &str, text: &str) -> Option<Vec<String>> {
    let pattern = pattern.to_lowercase();
    let lowered = text.to_lowercase();
    if !pattern.contains('*') {
        return lowered.contains(pattern.as_str()).then(Vec::new);
    }
    let pat: Vec<char> = pattern.chars().collect();
    let txt: Vec<char> = lowered.chars().collect();
    // Captures are cut from the original text so user casing survives.
    let original: Vec<char> = text.chars().collect();
    if original.len() != txt.len() {
        // Lowercasing changed the char count; captures fall back to lowercase.
        return wildcard(&pat, &txt, &txt);
    }
    wildcard(&pat, &txt, &original)
}

fn wildcard(pat: &[char], txt: &[char], original: &[char]) -> Option<Vec<String>> {
    let mut spans = Vec::new();
    if wildcard_at(pat, 0, txt, 0, &mut spans) {
        Some(
            spans
                .into_iter()
                .map(|(s, e)| original[s..e].iter().collect::<String>().trim().into())
                .collect(),
        )
    } else {
        None
    }
}

fn wildcard_at(
    pat: &[char],
    pi: usize,
    txt: &[char],
    ti: usize,
    spans: &mut Vec<(usize, usize)>,
) -> bool {
    if pi == pat.len() {
        return ti == txt.len();
    }
    if pat[pi] == '*' {
        for end in ti..=txt.len() {
            spans.push((ti, end));
            if wildcard_at(pat, pi + 1, txt, end, spans) {
                return true;
            }
            spans.pop();
        }
        return false;
    }
    ti < txt.len() && pat[pi] == txt[ti] && wildcard_at(pat, pi + 1, txt, ti + 1, spans)
}

/// Replaces `{1}`, `{2}`, ... with the matching capture. Unknown indices are
/// left untouched.
pub fn fill_captures(template: &str, captures: &[String]) -> String {
    if captures.is_empty() || !template.contains('{') {
        return template.into();
    }
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after.find('}');
        let index = close.and_then(|c| after[..c].parse::<usize>().ok());
        match (close, index) {
            (Some(c), Some(i)) if i >= 1 && i <= captures.len() => {
                out.push_str(&captures[i - 1]);
                rest = &after[c + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Splits a CamelCase identifier into words: `BookFlight` -> `[Book, Flight]`.
pub fn camel_words(ident: &str) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for ch in ident.chars() {
        if !ch.is_alphanumeric() {
            words.push(String::new());
            continue;
        }
        let starts_word = ch.is_uppercase()
            && words
                .last()
                .and_then(|w| w.chars().last())
                .map(|prev| !prev.is_uppercase())
                .unwrap_or(true);
        if starts_word || words.is_empty() {
            words.push(String::new());
        }
        if let Some(w) = words.last_mut() {
            w.push(ch);
        }
    }
    words.retain(|w| !w.is_empty());
    words
}

fn is_vowel(c: char) -> bool {
    matches!(c.to_ascii_lowercase(), 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Present participle of an English verb (`Book` -> `Booking`,
/// `Schedule` -> `Scheduling`, `Plan` -> `Planning`).
pub fn gerund(verb: &str) -> String {
    let chars: Vec<char> = verb.chars().collect();
    let n = chars.len();
    if n >= 3 && chars[n - 1] == 'e' && chars[n - 2] != 'e' && !is_vowel(chars[n - 2]) {
        let mut s: String = chars[..n - 1].iter().collect();
        s.push_str("ing");
        return s;
    }
    let vowel_count = chars.iter().filter(|c| is_vowel(**c)).count();
    if n >= 3
        && vowel_count == 1
        && !is_vowel(chars[n - 1])
        && !matches!(chars[n - 1], 'w' | 'x' | 'y')
        && is_vowel(chars[n - 2])
        && !is_vowel(chars[n - 3])
    {
        let mut s: String = chars.iter().collect();
        s.push(chars[n - 1]);
        s.push_str("ing");
        return s;
    }
    let mut s: String = chars.iter().collect();
    s.push_str("ing");
    s
}

/// Developer-facing capability label for an intent action: verb-object
/// actions become object + gerund (`BookFlight` -> `FlightBooking`).
/// Single-word actions are returned unchanged.
pub fn capability_label(action: &str) -> String {
    let words = camel_words(action);
    if words.len() < 2 {
        return words.into_iter().next().unwrap_or_default();
    }
    let mut out: String = words[1..].concat();
    out.push_str(&gerund(&words[0]));
    out
}

/// Lowercase, space-separated phrase for a capability label
/// (`FlightBooking` -> `flight booking`).
pub fn capability_phrase(label: &str) -> String {
    camel_words(label)
        .iter()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn tokenizer_lowercases_and_splits() {
        assert_eq!(
            raw_tokens("Send, draft and manage e-mail!"),
            vec!["send", "draft", "and", "manage", "e", "mail"]
        );
        assert_eq!(tokens("The team is here"), vec!["team", "here"]);
        assert!(tokens("").is_empty());
    }

    #[test]
    fn stop_list_has_thirty_distinct_words() {
        let mut v: Vec<&str> = STOP_WORDS.to_vec();
        v.sort_unstable();
        v.dedup();
        assert_eq!(v.len(), 30);
    }

    #[test]
    fn substring_and_wildcard_patterns() {
        assert_eq!(match_pattern("score", "What is the SCORE?"), Some(vec![]));
        assert_eq!(match_pattern("score", "hello"), None);
        assert_eq!(
            match_pattern("book a flight to * for *", "Book a flight to London for next Tuesday"),
            Some(vec!["London".into(), "next Tuesday".into()])
        );
        assert_eq!(match_pattern("book *", "please book x"), None);
    }

    #[test]
    fn captures_fill_templates() {
        let caps = vec![String::from("London")];
        assert_eq!(fill_captures("fly to {1} {2} {x}", &caps), "fly to London {2} {x}");
    }

    #[test]
    fn capability_labels() {
        assert_eq!(capability_label("BookFlight"), "FlightBooking");
        assert_eq!(capability_label("SendEmail"), "EmailSending");
        assert_eq!(capability_label("ScheduleMeeting"), "MeetingScheduling");
        assert_eq!(capability_label("PlanTrip"), "TripPlanning");
        assert_eq!(capability_label("OpenTicket"), "TicketOpening");
        assert_eq!(capability_label("Translate"), "Translate");
        assert_eq!(capability_label(""), "");
        assert_eq!(capability_phrase("FlightBooking"), "flight booking");
    }
}
