//! Normalisation, tokenisation and rule-based sentence segmentation.
//!
//! Tokens never contain whitespace, so `detokenize` is a plain space join and
//! stored datasets can be re-split with `split_whitespace`.

/// Tokens ending in a period that are not sentence terminators. Matching is
/// done on the lowercased token.
pub const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "prof.", "st.", "jr.", "sr.", "mt.", "ft.", "gen.", "gov.", "sen.", "rep.", "rev.",
    "capt.", "col.", "lt.", "sgt.", "vs.", "etc.", "approx.", "e.g.", "i.e.", "u.s.", "u.k.", "u.n.", "a.m.", "p.m.",
    "inc.", "ltd.", "co.", "corp.", "jan.", "feb.", "mar.", "apr.", "jun.", "jul.", "aug.", "sep.", "sept.", "oct.",
    "nov.", "dec.",
];

pub const TERMINATORS: &[&str] = &[".", "!", "?"];

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

pub fn is_abbreviation(token: &str) -> bool {
    ABBREVIATIONS.contains(&token)
}

/// True for tokens made only of punctuation; these are not counted as words.
pub fn is_punct_token(token: &str) -> bool {
    !token.is_empty() && token.chars().all(is_punct)
}

/// Removes every `<...>` markup tag (no whitespace inside the brackets).
pub fn strip_tags(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find(|c: char| c == '>' || c == '<' || c.is_whitespace()) {
            Some(end) if after[end..].starts_with('>') => {
                out.push(' ');
                rest = &after[end + 1..];
            }
            _ => {
                out.push('<');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Lowercases, strips tags and splits leading/trailing punctuation into
/// single-character tokens. Known abbreviations keep their period.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = strip_tags(text).to_lowercase();
    let mut tokens = Vec::new();
    for word in lowered.split_whitespace() {
        let chars: Vec<char> = word.chars().collect();
        let mut lo = 0;
        let mut hi = chars.len();
        while lo < hi && is_punct(chars[lo]) {
            tokens.push(chars[lo].to_string());
            lo += 1;
        }
        let mut trailing = Vec::new();
        while lo < hi {
            let core: String = chars[lo..hi].iter().collect();
            if is_abbreviation(&core) || !is_punct(chars[hi - 1]) {
                break;
            }
            trailing.push(chars[hi - 1].to_string());
            hi -= 1;
        }
        if lo < hi {
            tokens.push(chars[lo..hi].iter().collect());
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_ref());
    }
    out
}

fn is_terminator(token: &str) -> bool {
    TERMINATORS.contains(&token)
}

/// Tokens up to and including the first standalone terminator, or the whole
/// input when there is none.
pub fn first_sentence<S: AsRef<str>>(tokens: &[S]) -> &[S] {
    match tokens.iter().position(|t| is_terminator(t.as_ref())) {
        Some(i) => &tokens[..=i],
        None => tokens,
    }
}

/// Repeated application of [`first_sentence`]; a trailing fragment without
/// terminator counts as a sentence.
pub fn sentences<S: AsRef<str>>(tokens: &[S]) -> Vec<&[S]> {
    let mut out = Vec::new();
    let mut rest = tokens;
    while !rest.is_empty() {
        let s = first_sentence(rest);
        out.push(s);
        rest = &rest[s.len()..];
    }
    out
}

pub fn sentence_count<S: AsRef<str>>(tokens: &[S]) -> usize {
    sentences(tokens).len()
}

pub fn word_count<S: AsRef<str>>(tokens: &[S]) -> usize {
    tokens.iter().filter(|t| !is_punct_token(t.as_ref())).count()
}
