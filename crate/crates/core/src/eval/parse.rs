//! Answer extraction from free-form model replies.

use serde::{Deserialize, Serialize};

use crate::scenarios::Category;

const EXCERPT_CHARS: usize = 280;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    /// `None` when no label could be recovered.
    pub label: Option<String>,
    pub rationale_text: String,
    pub per_frame_descriptions: Vec<String>,
}

/// Phrases mapped to labels, in normalised form (lowercase, `_`/`-` as
/// spaces).
pub fn synonyms(category: Category) -> &'static [(&'static str, &'static str)] {
    match category {
        Category::ForwardBackward => &[
            ("forward", "forward"),
            ("forwards", "forward"),
            ("moving ahead", "forward"),
            ("backward", "backward"),
            ("backwards", "backward"),
            ("reversing", "backward"),
            ("in reverse", "backward"),
        ],
        Category::AccelDecel => &[
            ("accelerate", "accelerate"),
            ("accelerates", "accelerate"),
            ("accelerating", "accelerate"),
            ("acceleration", "accelerate"),
            ("speeding up", "accelerate"),
            ("speeds up", "accelerate"),
            ("decelerate", "decelerate"),
            ("decelerates", "decelerate"),
            ("decelerating", "decelerate"),
            ("deceleration", "decelerate"),
            ("slowing down", "decelerate"),
            ("slows down", "decelerate"),
            ("braking", "decelerate"),
        ],
        Category::LeftRight => &[
            ("left", "left"),
            ("turning left", "left"),
            ("right", "right"),
            ("turning right", "right"),
        ],
        Category::Traffic => &[
            ("traffic", "traffic"),
            ("yes", "traffic"),
            ("no traffic", "no_traffic"),
            ("no", "no_traffic"),
            ("not traffic", "no_traffic"),
        ],
        Category::Speeding => &[
            ("speeding", "speeding"),
            ("no speeding", "no_speeding"),
            ("not speeding", "no_speeding"),
            ("isn't speeding", "no_speeding"),
            ("within the speed limit", "no_speeding"),
        ],
        Category::OpenSetObject => &[
            ("yes", "yes"),
            ("no", "no"),
            ("cannot keep moving", "no"),
            ("must stop", "no"),
        ],
        Category::Plane => &[
            ("can keep moving", "can_keep_moving"),
            ("cannot keep moving", "cannot_keep_moving"),
            ("can't keep moving", "cannot_keep_moving"),
            ("must stop", "cannot_keep_moving"),
            ("yes", "can_keep_moving"),
            ("no", "cannot_keep_moving"),
        ],
        Category::Planning => &[("red", "red"), ("green", "green"), ("blue", "blue")],
    }
}

fn normalize(text: &str) -> Vec<char> {
    text.chars()
        .map(|c| match c {
            '_' | '-' => ' ',
            '\u{2019}' => '\'',
            c => c.to_ascii_lowercase(),
        })
        .collect()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

/// Label of the match ending last; among matches ending at the same place
/// the longest phrase wins.
fn last_mention(text: &[char], category: Category) -> Option<&'static str> {
    let mut best: Option<(usize, usize, &'static str)> = None;
    for (phrase, label) in synonyms(category) {
        let p: Vec<char> = phrase.chars().collect();
        if p.len() > text.len() {
            continue;
        }
        for start in 0..=text.len() - p.len() {
            let end = start + p.len();
            if text[start..end] != p[..] {
                continue;
            }
            if start > 0 && is_word(text[start - 1]) || end < text.len() && is_word(text[end]) {
                continue;
            }
            let better = match best {
                None => true,
                Some((e, len, _)) => end > e || end == e && p.len() > len,
            };
            if better {
                best = Some((end, p.len(), label));
            }
        }
    }
    best.map(|(_, _, l)| l)
}

fn answer_line(raw: &str) -> Option<(usize, &str)> {
    let lines: Vec<&str> = raw.lines().collect();
    lines.iter().enumerate().rev().find_map(|(i, line)| {
        let t = line.trim_start().trim_start_matches(['*', '#', ' ']);
        let lower = t.to_ascii_lowercase();
        lower
            .starts_with("answer")
            .then(|| t["answer".len()..].trim_start())
            .and_then(|rest| rest.strip_prefix(':'))
            .map(|rest| (i, rest.trim().trim_matches('*').trim()))
    })
}

fn frame_descriptions(raw: &str) -> Vec<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| {
            let lower = l.to_ascii_lowercase();
            let lower = lower.trim_start_matches(['*', '-', ' ']);
            lower.starts_with("frame ") && lower[6..].starts_with(|c: char| c.is_ascii_digit())
        })
        .map(str::to_string)
        .collect()
}

/// Prefers an `ANSWER:` line, then the last synonym mention anywhere in the
/// reply. Never fails; unrecognised text yields `label: None`.
pub fn parse_answer(raw: &str, category: Category) -> ParsedAnswer {
    let mut label = None;
    let mut skip_line = None;
    if let Some((i, content)) = answer_line(raw) {
        skip_line = Some(i);
        let norm = normalize(content);
        let exact: String = norm.iter().collect::<String>().trim().trim_end_matches('.').to_string();
        label = category
            .answer_set()
            .iter()
            .find(|l| normalize(l).into_iter().collect::<String>() == exact)
            .map(|l| l.to_string())
            .or_else(|| last_mention(&norm, category).map(str::to_string));
    }
    if label.is_none() {
        label = last_mention(&normalize(raw), category).map(str::to_string);
    }
    let rationale: String = raw
        .lines()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip_line)
        .map(|(_, l)| l)
        .collect::<Vec<_>>()
        .join("\n")
        .trim()
        .chars()
        .take(EXCERPT_CHARS)
        .collect();
    ParsedAnswer {
        label,
        rationale_text: rationale,
        per_frame_descriptions: frame_descriptions(raw),
    }
}
