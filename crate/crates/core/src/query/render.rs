//! Canonical sentence for a structured query.

use super::vocab;
use super::{AttributeConstraint, RelationalConstraint, StructuredQuery, Task};
use crate::projection::Frame;

fn article(next_word: &str, definite: bool) -> &'static str {
    if definite {
        "the"
    } else if next_word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn noun_phrase(attrs: &[AttributeConstraint], definite: bool) -> String {
    let mut sorted: Vec<&AttributeConstraint> = attrs.iter().collect();
    sorted.sort();
    let mut words: Vec<String> = sorted
        .iter()
        .map(|a| vocab::surface(&a.key, &a.value).map_or_else(|| a.value.replace('_', " "), str::to_owned))
        .collect();
    if !words.last().is_some_and(|w| vocab::is_noun_like(w)) {
        words.push("person".into());
    }
    format!("{} {}", article(&words[0], definite), words.join(" "))
}

fn pronoun(anchor: &[AttributeConstraint]) -> &'static str {
    match anchor.iter().find(|a| a.key == "gender").map(|a| a.value.as_str()) {
        Some("male") => "his",
        Some("female") => "her",
        _ => "their",
    }
}

fn relation(r: &RelationalConstraint, anchor: &[AttributeConstraint]) -> String {
    let mut out = String::new();
    match r.frame {
        Frame::Robot => {
            out.push_str("positioned");
            if let Some(bin) = r.distance_bin {
                out.push_str(&format!(" at a {bin} distance"));
            }
            if let Some(dir) = r.direction {
                out.push_str(&format!(" to the {}", dir.words()));
            }
            out.push_str(" relative to the robot");
        }
        Frame::Person if r.adjacency == Some(true) => {
            out.push_str(&format!("next to {}", noun_phrase(&r.related_attrs, false)));
        }
        Frame::Person if r.occlusion == Some(true) => {
            out.push_str(&format!("occluded by {}", noun_phrase(&r.related_attrs, false)));
        }
        Frame::Person => {
            out.push_str(&format!("who has {} positioned", noun_phrase(&r.related_attrs, false)));
            if let Some(dir) = r.direction {
                out.push_str(&format!(" to {} {}", pronoun(anchor), dir.words()));
            }
            if let Some(bin) = r.distance_bin {
                out.push_str(&format!(" at a {bin} distance"));
            }
        }
    }
    out
}

/// Renders the canonical sentence; parsing it returns an equal query.
pub fn render_query(q: &StructuredQuery) -> String {
    let (opener, definite) = match q.task {
        Task::Vg => ("find".to_owned(), false),
        Task::VqaExists => ("is there".to_owned(), false),
        Task::VqaCount => ("count".to_owned(), true),
        Task::VqaAttribute => (format!("what is the {} of", q.vqa_attribute_key.as_deref().unwrap_or("gender")), true),
    };
    let mut parts = vec![opener, noun_phrase(&q.anchor_attrs, definite)];
    for (i, r) in q.relations.iter().enumerate() {
        if i > 0 {
            parts.push("and".into());
        }
        parts.push(relation(r, &q.anchor_attrs));
    }
    parts.join(" ")
}
