//! Independent reference implementations used to cross-check the library.
#![allow(dead_code)]

use patternscout_core::evaluation::{Annotation, ConfusionMatrix, Prediction, RepoMeta};
use patternscout_core::prioritizer::FileCandidate;
use regex::Regex;

/// Translate a glob to an anchored regex over `path + "/"`.
///
/// Each plain segment becomes `<segment>/`; a `**` segment becomes
/// `(?:[^/]+/)*`, i.e. zero or more whole segments.
pub fn glob_regex(pattern: &str) -> Regex {
    let mut re = String::from("^");
    for seg in pattern.split('/') {
        if seg == "**" {
            re.push_str("(?:[^/]+/)*");
            continue;
        }
        let chars: Vec<char> = seg.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            match chars[i] {
                '*' => re.push_str("[^/]*"),
                '?' => re.push_str("[^/]"),
                '\\' => {
                    i += 1;
                    re.push_str(&regex::escape(&chars[i].to_string()));
                }
                '[' => {
                    let close = i + 1 + chars[i + 1..].iter().position(|c| *c == ']').expect("closed class");
                    let mut body: Vec<char> = chars[i + 1..close].to_vec();
                    re.push('[');
                    // a negated class still never matches the separator
                    if matches!(body.first(), Some('!') | Some('^')) {
                        re.push_str("^/");
                        body.remove(0);
                    }
                    for c in body {
                        if c == '-' {
                            re.push('-');
                        } else {
                            re.push_str(&regex::escape(&c.to_string()));
                        }
                    }
                    re.push(']');
                    i = close;
                }
                c => re.push_str(&regex::escape(&c.to_string())),
            }
            i += 1;
        }
        re.push('/');
    }
    re.push('$');
    Regex::new(&re).expect("oracle regex compiles")
}

pub fn glob_oracle_matches(pattern: &str, path: &str) -> bool {
    glob_regex(pattern).is_match(&format!("{path}/"))
}

/// Repeatedly take the best remaining candidate.
pub fn select_top_oracle(candidates: &[FileCandidate], n: usize) -> Vec<FileCandidate> {
    let mut pool = candidates.to_vec();
    let mut out = Vec::new();
    while out.len() < n && !pool.is_empty() {
        let mut best = 0;
        for i in 1..pool.len() {
            let (a, b) = (&pool[i], &pool[best]);
            if a.priority > b.priority || (a.priority == b.priority && a.path < b.path) {
                best = i;
            }
        }
        out.push(pool.remove(best));
    }
    out
}

pub fn confusion_recount(predictions: &[Prediction], truth: &[Annotation]) -> ConfusionMatrix {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for p in predictions {
        for t in truth {
            if t.repo_id == p.repo_id && t.pattern == p.pattern {
                match (p.detected, t.present) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, false) => tn += 1,
                    (false, true) => fn_ += 1,
                }
            }
        }
    }
    ConfusionMatrix::new(tp, fp, tn, fn_)
}

/// The six selection criteria written out with literal bounds.
pub fn dataset_predicate(r: &RepoMeta) -> bool {
    r.stars.unwrap() >= 10
        && r.active_months.unwrap() >= 6
        && r.size_kb.unwrap() >= 100
        && r.size_kb.unwrap() <= 100 * 1024
        && r.matching_artifacts.unwrap() >= 3
        && r.recent_commits.unwrap() >= 5
        && r.contributors.unwrap() >= 2
}
