//! Name and type pattern alignment with wildcard witnesses.

use serde::{Deserialize, Serialize};

use crate::pointcut::{NameChunk, NamePattern, TypePattern, TypeSegment};

/// How one `*` took part in a match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Witness {
    Empty,
    NonEmpty,
    NoMatch,
}

/// Splits a qualified name into matchable segments. Anonymous-class
/// suffixes become segments of their own (`App$1` -> `App`, `$1`), so an
/// anonymous class reads as a member of its enclosing type.
pub fn name_segments(name: &str) -> Vec<String> {
    let mut out = Vec::new();
    for part in name.split('.') {
        let mut current = String::new();
        for c in part.chars() {
            if c == '$' && !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
            current.push(c);
        }
        out.push(current);
    }
    out
}

/// Matches chunks against `text`; on success returns the length consumed by
/// each `*`. Stars are tried longest-first, left to right.
pub fn match_name(pattern: &NamePattern, text: &str) -> Option<Vec<usize>> {
    fn go(chunks: &[NameChunk], text: &[char], spans: &mut Vec<usize>) -> bool {
        match chunks.split_first() {
            None => text.is_empty(),
            Some((NameChunk::Lit(lit), rest)) => {
                let lit: Vec<char> = lit.chars().collect();
                text.len() >= lit.len() && text[..lit.len()] == lit[..] && go(rest, &text[lit.len()..], spans)
            }
            Some((NameChunk::Star, rest)) => {
                for take in (0..=text.len()).rev() {
                    spans.push(take);
                    if go(rest, &text[take..], spans) {
                        return true;
                    }
                    spans.pop();
                }
                false
            }
        }
    }
    let chars: Vec<char> = text.chars().collect();
    let mut spans = Vec::new();
    go(&pattern.chunks, &chars, &mut spans).then_some(spans)
}

/// Pattern segments after splitting `$` suffixes like names are split.
fn pattern_segments(pattern: &TypePattern) -> Vec<Option<NamePattern>> {
    let mut out = Vec::new();
    for seg in &pattern.segments {
        match seg {
            TypeSegment::AnyPackage => out.push(None),
            TypeSegment::Name(n) => {
                let text = n.text();
                for piece in name_segments(&text) {
                    out.push(NamePattern::parse(&piece));
                }
            }
        }
    }
    out
}

fn spans_to_witnesses(spans: &[usize]) -> Vec<Witness> {
    spans
        .iter()
        .map(|&n| if n == 0 { Witness::Empty } else { Witness::NonEmpty })
        .collect()
}

/// Matches the pattern's segments against a qualified name, ignoring the
/// `+` flag. A pattern without any `.` is compared with the trailing
/// segments of the name (simple-name matching).
pub fn match_segments(pattern: &TypePattern, name: &str) -> Option<Vec<Witness>> {
    fn go(pat: &[Option<NamePattern>], segs: &[String], spans: &mut Vec<usize>) -> bool {
        match pat.split_first() {
            None => segs.is_empty(),
            Some((None, rest)) => {
                for take in (0..=segs.len()).rev() {
                    let mark = spans.len();
                    if go(rest, &segs[take..], spans) {
                        return true;
                    }
                    spans.truncate(mark);
                }
                false
            }
            Some((Some(np), rest)) => {
                let Some((first, tail)) = segs.split_first() else {
                    return false;
                };
                let Some(local) = match_name(np, first) else {
                    return false;
                };
                let mark = spans.len();
                spans.extend(local);
                if go(rest, tail, spans) {
                    return true;
                }
                spans.truncate(mark);
                false
            }
        }
    }
    let mut pat = pattern_segments(pattern);
    let dotted = pattern.segments.len() > 1;
    if !dotted {
        pat.insert(0, None);
    }
    let segs = name_segments(name);
    let mut spans = Vec::new();
    go(&pat, &segs, &mut spans).then(|| spans_to_witnesses(&spans))
}
