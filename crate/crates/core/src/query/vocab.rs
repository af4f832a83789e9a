//! Closed vocabulary of the query language: attribute words, head nouns and
//! the canonical surface form of each attribute value.

/// Attribute keys a query may constrain, in canonical (sorted) order.
pub const KEYS: [&str; 4] = ["action", "age", "gender", "race"];

pub const GENDERS: [&str; 2] = ["male", "female"];
pub const AGES: [&str; 5] = ["child", "adolescent", "young_adult", "adult", "elderly"];
pub const RACES: [&str; 4] = ["white", "black", "asian", "other"];
pub const ACTIONS: [&str; 4] = ["standing", "sitting", "walking", "talking"];

/// Canonical values of `key`, or `None` for keys outside the vocabulary.
pub fn values(key: &str) -> Option<&'static [&'static str]> {
    match key {
        "gender" => Some(&GENDERS),
        "age" => Some(&AGES),
        "race" => Some(&RACES),
        "action" => Some(&ACTIONS),
        _ => None,
    }
}

pub fn is_known(key: &str, value: &str) -> bool {
    values(key).is_some_and(|vs| vs.contains(&value))
}

/// Single-word attribute surface forms, including plurals and the age
/// synonyms (`young` is a young adult, `old` and `senior` are elderly).
pub fn attribute_word(word: &str) -> Option<(&'static str, &'static str)> {
    let pair = match word {
        "male" | "males" => ("gender", "male"),
        "female" | "females" => ("gender", "female"),
        "child" | "children" | "kid" | "kids" => ("age", "child"),
        "adolescent" | "adolescents" | "teen" | "teens" | "teenager" | "teenagers" => ("age", "adolescent"),
        "young" => ("age", "young_adult"),
        "adult" | "adults" => ("age", "adult"),
        "elderly" | "old" | "senior" | "seniors" => ("age", "elderly"),
        "white" => ("race", "white"),
        "black" => ("race", "black"),
        "asian" => ("race", "asian"),
        "other" => ("race", "other"),
        "standing" => ("action", "standing"),
        "sitting" => ("action", "sitting"),
        "walking" => ("action", "walking"),
        "talking" => ("action", "talking"),
        _ => return None,
    };
    Some(pair)
}

/// Head nouns that close a noun phrase, with the gender they imply.
pub fn head_noun(word: &str) -> Option<Option<&'static str>> {
    match word {
        "person" | "persons" | "people" | "human" | "humans" | "individual" | "individuals" => Some(None),
        "man" | "men" => Some(Some("male")),
        "woman" | "women" => Some(Some("female")),
        _ => None,
    }
}

/// Canonical surface word for a known attribute value.
pub fn surface(key: &str, value: &str) -> Option<&'static str> {
    let word = match (key, value) {
        ("age", "young_adult") => "young",
        _ => values(key)?.iter().find(|v| **v == value)?,
    };
    Some(word)
}

/// Surface words that read as a noun on their own ("a female", "an adult").
pub fn is_noun_like(word: &str) -> bool {
    matches!(word, "male" | "female" | "child" | "adolescent" | "adult")
}
