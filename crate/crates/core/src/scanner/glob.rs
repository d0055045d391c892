//! Glob expressions over `/`-separated relative paths.
//!
//! Grammar:
//!
//! - `*` matches any run of characters inside one path segment
//! - `**` as a whole segment matches zero or more segments
//! - `?` matches exactly one character other than `/`
//! - `[abc]`, `[a-z]`, `[!a-z]` / `[^a-z]` match one character from (or outside) a set
//! - `\x` matches `x` literally
//!
//! Patterns are anchored at both ends and matching is case-sensitive. `**`
//! that shares a segment with other characters behaves like two `*`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid glob `{pattern}` at position {position}: {kind}")]
pub struct GlobError {
    pub pattern: String,
    /// Character offset into `pattern`.
    pub position: usize,
    pub kind: GlobErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GlobErrorKind {
    Empty,
    EmptySegment,
    UnclosedClass,
    EmptyClass,
    SeparatorInClass,
    InvalidRange(char, char),
    DanglingEscape,
}

impl fmt::Display for GlobErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobErrorKind::Empty => write!(f, "empty pattern"),
            GlobErrorKind::EmptySegment => write!(f, "empty path segment"),
            GlobErrorKind::UnclosedClass => write!(f, "unclosed character class"),
            GlobErrorKind::EmptyClass => write!(f, "empty character class"),
            GlobErrorKind::SeparatorInClass => write!(f, "`/` inside character class"),
            GlobErrorKind::InvalidRange(lo, hi) => write!(f, "invalid range {lo}-{hi}"),
            GlobErrorKind::DanglingEscape => write!(f, "trailing backslash"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ClassItem {
    Char(char),
    Range(char, char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Literal(char),
    AnyChar,
    Star,
    Class { negated: bool, items: Vec<ClassItem> },
}

impl Token {
    fn matches(&self, c: char) -> bool {
        match self {
            Token::Literal(l) => *l == c,
            Token::AnyChar => true,
            Token::Star => true,
            Token::Class { negated, items } => {
                let hit = items.iter().any(|item| match *item {
                    ClassItem::Char(x) => x == c,
                    ClassItem::Range(lo, hi) => lo <= c && c <= hi,
                });
                hit != *negated
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    AnyDepth,
    Pattern(Vec<Token>),
}

/// A compiled glob.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Glob {
    source: String,
    segments: Vec<Segment>,
}

impl Glob {
    pub fn parse(pattern: &str) -> Result<Glob, GlobError> {
        let err = |position: usize, kind: GlobErrorKind| GlobError {
            pattern: pattern.to_string(),
            position,
            kind,
        };
        if pattern.is_empty() {
            return Err(err(0, GlobErrorKind::Empty));
        }

        let chars: Vec<char> = pattern.chars().collect();
        let mut segments = Vec::new();
        let mut tokens = Vec::new();
        let mut seg_start = 0;
        let mut i = 0;

        let finish = |tokens: Vec<Token>, seg_text: &[char], start: usize| {
            if seg_text.is_empty() {
                return Err(err(start, GlobErrorKind::EmptySegment));
            }
            if seg_text == ['*', '*'] {
                Ok(Segment::AnyDepth)
            } else {
                Ok(Segment::Pattern(tokens))
            }
        };

        while i < chars.len() {
            let c = chars[i];
            match c {
                '/' => {
                    segments.push(finish(std::mem::take(&mut tokens), &chars[seg_start..i], seg_start)?);
                    seg_start = i + 1;
                    i += 1;
                }
                '*' => {
                    tokens.push(Token::Star);
                    i += 1;
                }
                '?' => {
                    tokens.push(Token::AnyChar);
                    i += 1;
                }
                '\\' => {
                    let Some(&next) = chars.get(i + 1) else {
                        return Err(err(i, GlobErrorKind::DanglingEscape));
                    };
                    tokens.push(Token::Literal(next));
                    i += 2;
                }
                '[' => {
                    let open = i;
                    i += 1;
                    let mut negated = false;
                    if matches!(chars.get(i), Some('!') | Some('^')) {
                        negated = true;
                        i += 1;
                    }
                    let mut items = Vec::new();
                    loop {
                        let Some(&ch) = chars.get(i) else {
                            return Err(err(open, GlobErrorKind::UnclosedClass));
                        };
                        match ch {
                            ']' => {
                                if items.is_empty() {
                                    return Err(err(i, GlobErrorKind::EmptyClass));
                                }
                                i += 1;
                                break;
                            }
                            '/' => return Err(err(i, GlobErrorKind::SeparatorInClass)),
                            _ => {
                                let is_range = chars.get(i + 1) == Some(&'-')
                                    && chars.get(i + 2).is_some_and(|&h| h != ']');
                                if is_range {
                                    let hi = chars[i + 2];
                                    if hi == '/' {
                                        return Err(err(i + 2, GlobErrorKind::SeparatorInClass));
                                    }
                                    if hi < ch {
                                        return Err(err(i, GlobErrorKind::InvalidRange(ch, hi)));
                                    }
                                    items.push(ClassItem::Range(ch, hi));
                                    i += 3;
                                } else {
                                    items.push(ClassItem::Char(ch));
                                    i += 1;
                                }
                            }
                        }
                    }
                    tokens.push(Token::Class { negated, items });
                }
                _ => {
                    tokens.push(Token::Literal(c));
                    i += 1;
                }
            }
        }
        segments.push(finish(tokens, &chars[seg_start..], seg_start)?);

        Ok(Glob {
            source: pattern.to_string(),
            segments,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.source
    }

    /// Match against a relative, `/`-separated path.
    pub fn is_match(&self, path: &str) -> bool {
        let parts: Vec<&str> = path.split('/').collect();
        wildcard_match(
            &self.segments,
            &parts,
            |s| matches!(s, Segment::AnyDepth),
            |seg, part| match seg {
                Segment::AnyDepth => true,
                Segment::Pattern(tokens) => {
                    let chars: Vec<char> = part.chars().collect();
                    wildcard_match(tokens, &chars, |t| matches!(t, Token::Star), |t, c| t.matches(*c))
                }
            },
        )
    }
}

impl fmt::Display for Glob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl std::str::FromStr for Glob {
    type Err = GlobError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Glob::parse(s)
    }
}

/// Backtracking wildcard match where `is_star` items absorb any run of text
/// items and every other item consumes exactly one.
fn wildcard_match<P, T>(
    pattern: &[P],
    text: &[T],
    is_star: impl Fn(&P) -> bool,
    matches_one: impl Fn(&P, &T) -> bool,
) -> bool {
    let (mut p, mut t) = (0, 0);
    let mut resume: Option<(usize, usize)> = None;
    while t < text.len() {
        if p < pattern.len() && is_star(&pattern[p]) {
            resume = Some((p, t));
            p += 1;
        } else if p < pattern.len() && matches_one(&pattern[p], &text[t]) {
            p += 1;
            t += 1;
        } else if let Some((sp, st)) = resume {
            p = sp + 1;
            t = st + 1;
            resume = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    pattern[p..].iter().all(is_star)
}
