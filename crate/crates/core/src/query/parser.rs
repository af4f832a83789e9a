//! Recursive-descent parser for the query language.
//!
//! ```text
//! query      := vg | exists | count | attrq
//! vg         := "find" np rel*
//! exists     := ("is" | "are") "there" np rel*
//! count      := ("count" | "how many") np rel*
//! attrq      := "what is the" KEY "of" np rel*
//! np         := [article] (ATTRWORD | "young adult")* [HEAD]      -- at least one word
//! rel        := relperson | relrobot | relinv | reladj | relocc
//! relperson  := "who has" np "positioned" ["to" PRONOUN SECTOR] ["at" ["a"] BIN "distance"]
//! relrobot   := ["positioned"] ["at" ["a"] BIN "distance"] ["to the" SECTOR] "relative to" ROBOT
//! relinv     := ["positioned"] "to the" SECTOR "of" np ["at" ["a"] BIN "distance"]
//! reladj     := "next to" np
//! relocc     := "occluded by" np
//! ROBOT      := "the robot" | "me" ["the robot"]
//! ```
//!
//! Words are case-insensitive runs of letters and digits; every other
//! character separates words, so `front-left`, `front_left` and `front left`
//! are the same sector.

use super::vocab;
use super::{AttributeConstraint, QueryError, RelationalConstraint, StructuredQuery, Task};
use crate::projection::{DistanceBin, Sector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject unknown words inside noun phrases (otherwise they are skipped).
    pub strict: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { strict: true }
    }
}

#[derive(Debug, Clone)]
struct Word {
    text: String,
    offset: usize,
}

fn tokenize(text: &str) -> Vec<Word> {
    let mut words = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            words.push(Word { text: text[s..i].to_lowercase(), offset: s });
        }
    }
    if let Some(s) = start {
        words.push(Word { text: text[s..].to_lowercase(), offset: s });
    }
    words
}

/// Words that end a noun phrase without being part of it.
const NP_BOUNDARY: [&str; 9] = ["who", "positioned", "next", "occluded", "to", "at", "relative", "of", "and"];

struct Parser {
    words: Vec<Word>,
    pos: usize,
    end: usize,
    opts: ParseOptions,
}

impl Parser {
    fn peek(&self) -> Option<&str> {
        self.peek_at(0)
    }

    fn peek_at(&self, ahead: usize) -> Option<&str> {
        self.words.get(self.pos + ahead).map(|w| w.text.as_str())
    }

    fn offset(&self) -> usize {
        self.words.get(self.pos).map_or(self.end, |w| w.offset)
    }

    fn eat(&mut self, word: &str) -> bool {
        if self.peek() == Some(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_any(&mut self, words: &[&str]) -> bool {
        match self.peek() {
            Some(w) if words.contains(&w) => {
                self.pos += 1;
                true
            }
            _ => false,
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, QueryError> {
        let found = self.peek().map_or("end of query".to_owned(), |w| format!("{w:?}"));
        Err(QueryError::Syntax { offset: self.offset(), message: format!("{}, found {found}", message.into()) })
    }

    fn expect(&mut self, word: &str) -> Result<(), QueryError> {
        if self.eat(word) {
            Ok(())
        } else {
            self.error(format!("expected {word:?}"))
        }
    }

    fn query(&mut self) -> Result<StructuredQuery, QueryError> {
        let mut key = None;
        let task = if self.eat("find") {
            Task::Vg
        } else if self.eat_any(&["is", "are"]) {
            self.expect("there")?;
            Task::VqaExists
        } else if self.eat("count") {
            Task::VqaCount
        } else if self.eat("how") {
            self.expect("many")?;
            Task::VqaCount
        } else if self.eat("what") {
            self.expect("is")?;
            self.eat("the");
            match self.peek() {
                Some(k) if vocab::KEYS.contains(&k) => {
                    key = Some(k.to_owned());
                    self.pos += 1;
                }
                _ => return self.error("expected an attribute key (gender, age, race or action)"),
            }
            self.expect("of")?;
            Task::VqaAttribute
        } else {
            return self.error("expected \"find\", \"is there\", \"count\", \"how many\" or \"what is the\"");
        };
        let anchor_attrs = self.noun_phrase()?;
        let mut relations = Vec::new();
        while self.peek().is_some() {
            self.eat("and");
            relations.push(self.relation()?);
        }
        let mut q = StructuredQuery { task, anchor_attrs, relations, vqa_attribute_key: key };
        q.canonicalize();
        Ok(q)
    }

    fn noun_phrase(&mut self) -> Result<Vec<AttributeConstraint>, QueryError> {
        let start = self.offset();
        self.eat_any(&["a", "an", "the", "any"]);
        let mut attrs: Vec<AttributeConstraint> = Vec::new();
        let mut words = 0;
        while let Some(word) = self.peek() {
            let offset = self.offset();
            if let Some(implied) = vocab::head_noun(word) {
                self.pos += 1;
                words += 1;
                if let Some(gender) = implied {
                    push_attr(&mut attrs, "gender", gender, offset)?;
                }
                break;
            }
            if word == "young" && matches!(self.peek_at(1), Some("adult" | "adults")) {
                self.pos += 2;
                words += 1;
                push_attr(&mut attrs, "age", "young_adult", offset)?;
                continue;
            }
            if let Some((key, value)) = vocab::attribute_word(word) {
                self.pos += 1;
                words += 1;
                push_attr(&mut attrs, key, value, offset)?;
                continue;
            }
            if NP_BOUNDARY.contains(&word) {
                break;
            }
            if self.opts.strict {
                return Err(QueryError::UnknownAttributeWord { offset, word: word.to_owned() });
            }
            self.pos += 1;
        }
        if words == 0 {
            return Err(QueryError::Syntax { offset: start, message: "expected a noun phrase".into() });
        }
        Ok(attrs)
    }

    fn sector(&mut self) -> Result<Sector, QueryError> {
        let sector = if self.eat("front") {
            if self.eat("left") {
                Sector::FrontLeft
            } else if self.eat("right") {
                Sector::FrontRight
            } else {
                Sector::Front
            }
        } else if self.eat("back") {
            if self.eat("left") {
                Sector::BackLeft
            } else if self.eat("right") {
                Sector::BackRight
            } else {
                Sector::Back
            }
        } else if self.eat("left") {
            Sector::Left
        } else if self.eat("right") {
            Sector::Right
        } else {
            return self.error("expected a direction (front, front left, left, back left, back, back right, right, front right)");
        };
        Ok(sector)
    }

    /// `"at" ["a"] BIN "distance"`, with the leading "at" already consumed.
    fn distance_tail(&mut self) -> Result<DistanceBin, QueryError> {
        self.eat("a");
        let bin = match self.peek() {
            Some("close") => DistanceBin::Close,
            Some("medium") => DistanceBin::Medium,
            Some("far") => DistanceBin::Far,
            _ => return self.error("expected a distance (close, medium or far)"),
        };
        self.pos += 1;
        self.expect("distance")?;
        Ok(bin)
    }

    fn robot_reference(&mut self) -> Result<(), QueryError> {
        self.expect("relative")?;
        self.expect("to")?;
        if self.eat("me") {
            if self.peek() == Some("the") && self.peek_at(1) == Some("robot") {
                self.pos += 2;
            }
            return Ok(());
        }
        self.expect("the")?;
        self.expect("robot")
    }

    fn relation(&mut self) -> Result<RelationalConstraint, QueryError> {
        if self.eat("who") {
            self.expect("has")?;
            let related = self.noun_phrase()?;
            self.expect("positioned")?;
            let mut direction = None;
            let mut bin = None;
            if self.eat("to") {
                if !self.eat_any(&["his", "her", "their", "its"]) {
                    return self.error("expected \"his\", \"her\" or \"their\"");
                }
                direction = Some(self.sector()?);
            }
            if self.eat("at") {
                bin = Some(self.distance_tail()?);
            }
            if direction.is_none() && bin.is_none() {
                return self.error("expected \"to his <direction>\" or \"at a <distance> distance\"");
            }
            return Ok(RelationalConstraint::person(direction, bin, related));
        }
        if self.eat("next") {
            self.expect("to")?;
            return Ok(RelationalConstraint::adjacent_to(self.noun_phrase()?));
        }
        if self.eat("occluded") {
            self.expect("by")?;
            return Ok(RelationalConstraint::occluded_by(self.noun_phrase()?));
        }
        self.eat("positioned");
        if self.eat("at") {
            let bin = self.distance_tail()?;
            let mut direction = None;
            if self.eat("to") {
                self.expect("the")?;
                direction = Some(self.sector()?);
            }
            self.robot_reference()?;
            return Ok(RelationalConstraint::robot(direction, Some(bin)));
        }
        if self.eat("to") {
            self.expect("the")?;
            let direction = self.sector()?;
            if self.eat("of") {
                let related = self.noun_phrase()?;
                let bin = if self.eat("at") { Some(self.distance_tail()?) } else { None };
                return Ok(RelationalConstraint::person(Some(direction), bin, related));
            }
            let bin = if self.eat("at") { Some(self.distance_tail()?) } else { None };
            self.robot_reference()?;
            return Ok(RelationalConstraint::robot(Some(direction), bin));
        }
        self.error("expected a relation (\"who has\", \"positioned\", \"to the\", \"next to\" or \"occluded by\")")
    }
}

fn push_attr(attrs: &mut Vec<AttributeConstraint>, key: &str, value: &str, offset: usize) -> Result<(), QueryError> {
    match attrs.iter().find(|a| a.key == key) {
        Some(a) if a.value != value => Err(QueryError::Syntax {
            offset,
            message: format!("conflicting {key} values {:?} and {value:?}", a.value),
        }),
        Some(_) => Ok(()),
        None => {
            attrs.push(AttributeConstraint::new(key, value));
            Ok(())
        }
    }
}

/// Parses a sentence of the query language with strict vocabulary checking.
pub fn parse_query(text: &str) -> Result<StructuredQuery, QueryError> {
    parse_query_with(text, ParseOptions::default())
}

pub fn parse_query_with(text: &str, opts: ParseOptions) -> Result<StructuredQuery, QueryError> {
    let words = tokenize(text);
    if words.is_empty() {
        return Err(QueryError::Syntax { offset: 0, message: "empty query".into() });
    }
    let mut parser = Parser { words, pos: 0, end: text.len(), opts };
    let q = parser.query()?;
    q.validate().map_err(|e| match e {
        QueryError::Schema(message) => QueryError::Syntax { offset: 0, message },
        other => other,
    })?;
    Ok(q)
}
