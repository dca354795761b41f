//! A compact English lexicon with universal part-of-speech tags, lemmas and
//! morphological features. It backs the rule-based annotator, the rule-based
//! correction backend and the synthetic corpus generator, so all three agree
//! on the same vocabulary.

use std::collections::HashMap;
use std::sync::LazyLock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexEntry {
    pub pos: &'static str,
    pub lemma: String,
    /// `Key=Value` pairs in canonical (sorted) order.
    pub feats: Vec<(&'static str, &'static str)>,
}

/// (lemma, third person singular, past, past participle, gerund)
pub const VERBS: &[(&str, &str, &str, &str, &str)] = &[
    ("run", "runs", "ran", "run", "running"),
    ("play", "plays", "played", "played", "playing"),
    ("jump", "jumps", "jumped", "jumped", "jumping"),
    ("sit", "sits", "sat", "sat", "sitting"),
    ("fly", "flies", "flew", "flown", "flying"),
    ("shine", "shines", "shone", "shone", "shining"),
    ("go", "goes", "went", "gone", "going"),
    ("eat", "eats", "ate", "eaten", "eating"),
    ("sleep", "sleeps", "slept", "slept", "sleeping"),
    ("walk", "walks", "walked", "walked", "walking"),
    ("ride", "rides", "rode", "ridden", "riding"),
    ("swim", "swims", "swam", "swum", "swimming"),
    ("rain", "rains", "rained", "rained", "raining"),
    ("happen", "happens", "happened", "happened", "happening"),
    ("see", "sees", "saw", "seen", "seeing"),
    ("look", "looks", "looked", "looked", "looking"),
    ("like", "likes", "liked", "liked", "liking"),
    ("think", "thinks", "thought", "thought", "thinking"),
    ("come", "comes", "came", "come", "coming"),
    ("fall", "falls", "fell", "fallen", "falling"),
    ("throw", "throws", "threw", "thrown", "throwing"),
    ("catch", "catches", "caught", "caught", "catching"),
    ("chase", "chases", "chased", "chased", "chasing"),
    ("grow", "grows", "grew", "grown", "growing"),
    ("stand", "stands", "stood", "stood", "standing"),
    ("drive", "drives", "drove", "driven", "driving"),
    ("sing", "sings", "sang", "sung", "singing"),
    ("read", "reads", "read", "read", "reading"),
    ("watch", "watches", "watched", "watched", "watching"),
    ("climb", "climbs", "climbed", "climbed", "climbing"),
    ("take", "takes", "took", "taken", "taking"),
    ("make", "makes", "made", "made", "making"),
    ("want", "wants", "wanted", "wanted", "wanting"),
    ("live", "lives", "lived", "lived", "living"),
    ("visit", "visits", "visited", "visited", "visiting"),
    ("listen", "listens", "listened", "listened", "listening"),
    ("arrive", "arrives", "arrived", "arrived", "arriving"),
    ("enjoy", "enjoys", "enjoyed", "enjoyed", "enjoying"),
    ("feel", "feels", "felt", "felt", "feeling"),
    ("get", "gets", "got", "gotten", "getting"),
    ("bring", "brings", "brought", "brought", "bringing"),
    ("buy", "buys", "bought", "bought", "buying"),
    ("open", "opens", "opened", "opened", "opening"),
    ("wait", "waits", "waited", "waited", "waiting"),
    ("help", "helps", "helped", "helped", "helping"),
    ("carry", "carries", "carried", "carried", "carrying"),
    ("hide", "hides", "hid", "hidden", "hiding"),
    ("bark", "barks", "barked", "barked", "barking"),
    ("roll", "rolls", "rolled", "rolled", "rolling"),
    ("float", "floats", "floated", "floated", "floating"),
];

/// (singular, plural)
pub const NOUNS: &[(&str, &str)] = &[
    ("dog", "dogs"),
    ("cat", "cats"),
    ("ball", "balls"),
    ("tree", "trees"),
    ("car", "cars"),
    ("sun", "suns"),
    ("bird", "birds"),
    ("house", "houses"),
    ("boy", "boys"),
    ("girl", "girls"),
    ("flower", "flowers"),
    ("bike", "bikes"),
    ("boat", "boats"),
    ("fish", "fish"),
    ("child", "children"),
    ("man", "men"),
    ("woman", "women"),
    ("mouse", "mice"),
    ("park", "parks"),
    ("river", "rivers"),
    ("road", "roads"),
    ("sky", "skies"),
    ("picture", "pictures"),
    ("day", "days"),
    ("school", "schools"),
    ("music", "music"),
    ("family", "families"),
    ("friend", "friends"),
    ("kite", "kites"),
    ("apple", "apples"),
    ("umbrella", "umbrellas"),
    ("grass", "grasses"),
    ("water", "water"),
    ("weekend", "weekends"),
    ("game", "games"),
    ("book", "books"),
    ("rain", "rains"),
    ("home", "homes"),
    ("morning", "mornings"),
    ("time", "times"),
    ("food", "food"),
    ("hour", "hours"),
    ("leaf", "leaves"),
    ("garden", "gardens"),
];

/// (positive, comparative, superlative)
pub const ADJECTIVES: &[(&str, &str, &str)] = &[
    ("big", "bigger", "biggest"),
    ("small", "smaller", "smallest"),
    ("red", "redder", "reddest"),
    ("blue", "bluer", "bluest"),
    ("green", "greener", "greenest"),
    ("yellow", "yellower", "yellowest"),
    ("brown", "browner", "brownest"),
    ("gray", "grayer", "grayest"),
    ("happy", "happier", "happiest"),
    ("sunny", "sunnier", "sunniest"),
    ("good", "better", "best"),
    ("bad", "worse", "worst"),
    ("fast", "faster", "fastest"),
    ("tall", "taller", "tallest"),
    ("old", "older", "oldest"),
    ("young", "younger", "youngest"),
    ("beautiful", "more beautiful", "most beautiful"),
    ("wet", "wetter", "wettest"),
    ("nice", "nicer", "nicest"),
    ("white", "whiter", "whitest"),
];

const CLOSED: &[(&str, &str, &str, &str)] = &[
    ("a", "DET", "a", "Definite=Ind|PronType=Art"),
    ("an", "DET", "a", "Definite=Ind|PronType=Art"),
    ("the", "DET", "the", "Definite=Def|PronType=Art"),
    ("this", "DET", "this", "Number=Sing|PronType=Dem"),
    ("that", "DET", "that", "Number=Sing|PronType=Dem"),
    ("these", "DET", "this", "Number=Plur|PronType=Dem"),
    ("those", "DET", "that", "Number=Plur|PronType=Dem"),
    ("some", "DET", "some", "PronType=Ind"),
    ("many", "ADJ", "many", "Degree=Pos"),
    ("my", "PRON", "my", "Person=1|Poss=Yes|PronType=Prs"),
    ("your", "PRON", "your", "Person=2|Poss=Yes|PronType=Prs"),
    ("his", "PRON", "his", "Gender=Masc|Person=3|Poss=Yes|PronType=Prs"),
    ("her", "PRON", "she", "Gender=Fem|Person=3|PronType=Prs"),
    ("its", "PRON", "its", "Person=3|Poss=Yes|PronType=Prs"),
    ("their", "PRON", "their", "Person=3|Poss=Yes|PronType=Prs"),
    ("i", "PRON", "I", "Case=Nom|Number=Sing|Person=1|PronType=Prs"),
    ("you", "PRON", "you", "Person=2|PronType=Prs"),
    (
        "he",
        "PRON",
        "he",
        "Case=Nom|Gender=Masc|Number=Sing|Person=3|PronType=Prs",
    ),
    (
        "she",
        "PRON",
        "she",
        "Case=Nom|Gender=Fem|Number=Sing|Person=3|PronType=Prs",
    ),
    ("it", "PRON", "it", "Number=Sing|Person=3|PronType=Prs"),
    ("we", "PRON", "we", "Case=Nom|Number=Plur|Person=1|PronType=Prs"),
    (
        "they",
        "PRON",
        "they",
        "Case=Nom|Number=Plur|Person=3|PronType=Prs",
    ),
    ("me", "PRON", "I", "Case=Acc|Number=Sing|Person=1|PronType=Prs"),
    (
        "him",
        "PRON",
        "he",
        "Case=Acc|Gender=Masc|Number=Sing|Person=3|PronType=Prs",
    ),
    ("us", "PRON", "we", "Case=Acc|Number=Plur|Person=1|PronType=Prs"),
    (
        "them",
        "PRON",
        "they",
        "Case=Acc|Number=Plur|Person=3|PronType=Prs",
    ),
    ("what", "PRON", "what", "PronType=Int"),
    ("who", "PRON", "who", "PronType=Int"),
    ("something", "PRON", "something", "Number=Sing|PronType=Ind"),
    ("everyone", "PRON", "everyone", "Number=Sing|PronType=Tot"),
    (
        "is",
        "AUX",
        "be",
        "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin",
    ),
    (
        "am",
        "AUX",
        "be",
        "Mood=Ind|Number=Sing|Person=1|Tense=Pres|VerbForm=Fin",
    ),
    ("are", "AUX", "be", "Mood=Ind|Tense=Pres|VerbForm=Fin"),
    ("was", "AUX", "be", "Mood=Ind|Number=Sing|Tense=Past|VerbForm=Fin"),
    ("were", "AUX", "be", "Mood=Ind|Tense=Past|VerbForm=Fin"),
    ("be", "AUX", "be", "VerbForm=Inf"),
    ("been", "AUX", "be", "Tense=Past|VerbForm=Part"),
    ("will", "AUX", "will", "VerbForm=Fin"),
    ("can", "AUX", "can", "VerbForm=Fin"),
    ("would", "AUX", "would", "VerbForm=Fin"),
    ("do", "AUX", "do", "Mood=Ind|Tense=Pres|VerbForm=Fin"),
    (
        "does",
        "AUX",
        "do",
        "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin",
    ),
    ("did", "AUX", "do", "Mood=Ind|Tense=Past|VerbForm=Fin"),
    (
        "has",
        "AUX",
        "have",
        "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin",
    ),
    ("have", "AUX", "have", "Mood=Ind|Tense=Pres|VerbForm=Fin"),
    ("had", "AUX", "have", "Mood=Ind|Tense=Past|VerbForm=Fin"),
    ("in", "ADP", "in", ""),
    ("on", "ADP", "on", ""),
    ("at", "ADP", "at", ""),
    ("to", "ADP", "to", ""),
    ("with", "ADP", "with", ""),
    ("under", "ADP", "under", ""),
    ("near", "ADP", "near", ""),
    ("of", "ADP", "of", ""),
    ("for", "ADP", "for", ""),
    ("from", "ADP", "from", ""),
    ("into", "ADP", "into", ""),
    ("after", "ADP", "after", ""),
    ("behind", "ADP", "behind", ""),
    ("and", "CCONJ", "and", ""),
    ("but", "CCONJ", "but", ""),
    ("or", "CCONJ", "or", ""),
    ("because", "SCONJ", "because", ""),
    ("if", "SCONJ", "if", ""),
    ("when", "SCONJ", "when", ""),
    ("then", "ADV", "then", "PronType=Dem"),
    ("there", "PRON", "there", "PronType=Dem"),
    ("here", "ADV", "here", "PronType=Dem"),
    ("very", "ADV", "very", ""),
    ("more", "ADV", "more", ""),
    ("now", "ADV", "now", ""),
    ("quickly", "ADV", "quickly", ""),
    ("happily", "ADV", "happily", ""),
    ("soon", "ADV", "soon", ""),
    ("together", "ADV", "together", ""),
    ("yesterday", "ADV", "yesterday", ""),
    ("often", "ADV", "often", ""),
    ("also", "ADV", "also", ""),
    ("maybe", "ADV", "maybe", ""),
    ("not", "PART", "not", "Polarity=Neg"),
    ("yes", "INTJ", "yes", ""),
    ("no", "INTJ", "no", ""),
    ("um", "INTJ", "um", ""),
    ("uh", "INTJ", "uh", ""),
    ("one", "NUM", "one", "NumType=Card"),
    ("two", "NUM", "two", "NumType=Card"),
    ("three", "NUM", "three", "NumType=Card"),
    ("next", "ADJ", "next", "Degree=Pos"),
];

fn parse_feats(s: &'static str) -> Vec<(&'static str, &'static str)> {
    let mut v: Vec<_> = s
        .split('|')
        .filter(|p| !p.is_empty())
        .filter_map(|p| p.split_once('='))
        .collect();
    v.sort();
    v
}

fn entry(pos: &'static str, lemma: &str, feats: &'static str) -> LexEntry {
    LexEntry {
        pos,
        lemma: lemma.to_string(),
        feats: parse_feats(feats),
    }
}

static LEXICON: LazyLock<HashMap<String, LexEntry>> = LazyLock::new(|| {
    let mut m: HashMap<String, LexEntry> = HashMap::new();
    // Later inserts do not overwrite: closed-class entries win, then verbs.
    let mut put = |form: &str, e: LexEntry| {
        m.entry(form.to_string()).or_insert(e);
    };
    for &(form, pos, lemma, feats) in CLOSED {
        put(form, entry(pos, lemma, feats));
    }
    for &(lemma, s3, past, part, ger) in VERBS {
        put(lemma, entry("VERB", lemma, "VerbForm=Inf"));
        put(
            s3,
            entry(
                "VERB",
                lemma,
                "Mood=Ind|Number=Sing|Person=3|Tense=Pres|VerbForm=Fin",
            ),
        );
        put(past, entry("VERB", lemma, "Mood=Ind|Tense=Past|VerbForm=Fin"));
        put(part, entry("VERB", lemma, "Tense=Past|VerbForm=Part"));
        put(ger, entry("VERB", lemma, "VerbForm=Ger"));
    }
    for &(sing, plur) in NOUNS {
        put(sing, entry("NOUN", sing, "Number=Sing"));
        put(plur, entry("NOUN", sing, "Number=Plur"));
    }
    for &(pos, cmp, sup) in ADJECTIVES {
        put(pos, entry("ADJ", pos, "Degree=Pos"));
        if !cmp.contains(' ') {
            put(cmp, entry("ADJ", pos, "Degree=Cmp"));
            put(sup, entry("ADJ", pos, "Degree=Sup"));
        }
    }
    m
});

/// Looks a token up, falling back to orthographic heuristics for unknown
/// forms. Never fails.
pub fn lookup(token: &str) -> LexEntry {
    let lower = token.to_lowercase();
    if let Some(e) = LEXICON.get(&lower) {
        return e.clone();
    }
    guess(token, &lower)
}

pub fn is_known(token: &str) -> bool {
    LEXICON.contains_key(&token.to_lowercase())
}

fn guess(token: &str, lower: &str) -> LexEntry {
    if lower.is_empty() {
        return entry("X", "", "");
    }
    if lower.chars().all(|c| !c.is_alphanumeric()) {
        let is_punct = lower.chars().all(|c| {
            matches!(
                c,
                '.' | ',' | '!' | '?' | ';' | ':' | '"' | '\'' | '(' | ')' | '-'
            )
        });
        return if is_punct {
            entry("PUNCT", lower, "")
        } else {
            entry("SYM", lower, "")
        };
    }
    if lower.chars().all(|c| c.is_ascii_digit()) {
        return entry("NUM", lower, "NumType=Card");
    }
    if token.chars().next().is_some_and(|c| c.is_uppercase()) {
        return entry("PROPN", token, "Number=Sing");
    }
    if let Some(stem) = lower.strip_suffix("ing").filter(|s| s.len() > 2) {
        return entry("VERB", stem, "VerbForm=Ger");
    }
    if let Some(stem) = lower.strip_suffix("ed").filter(|s| s.len() > 2) {
        return entry("VERB", stem, "Mood=Ind|Tense=Past|VerbForm=Fin");
    }
    if lower.ends_with("ly") && lower.len() > 4 {
        return entry("ADV", lower, "");
    }
    if let Some(stem) = lower
        .strip_suffix('s')
        .filter(|s| s.len() > 2 && !s.ends_with('s'))
    {
        return entry("NOUN", stem, "Number=Plur");
    }
    entry("NOUN", lower, "Number=Sing")
}

/// Verb forms by lemma.
pub fn verb_forms(
    lemma: &str,
) -> Option<&'static (
    &'static str,
    &'static str,
    &'static str,
    &'static str,
    &'static str,
)> {
    VERBS.iter().find(|v| v.0 == lemma)
}

pub fn noun_plural(singular: &str) -> Option<&'static str> {
    NOUNS.iter().find(|n| n.0 == singular).map(|n| n.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_forms() {
        let went = lookup("went");
        assert_eq!(went.pos, "VERB");
        assert_eq!(went.lemma, "go");
        assert!(went.feats.contains(&("Tense", "Past")));
        assert_eq!(lookup("The").pos, "DET");
        assert_eq!(lookup("children").lemma, "child");
        assert_eq!(lookup("is").pos, "AUX");
    }

    #[test]
    fn guesses_for_unknown_forms() {
        assert_eq!(lookup("#").pos, "SYM");
        assert_eq!(lookup(".").pos, "PUNCT");
        assert_eq!(lookup("42").pos, "NUM");
        assert_eq!(lookup("Taipei").pos, "PROPN");
        assert_eq!(lookup("blorping").pos, "VERB");
        assert_eq!(lookup("zorbs").feats, vec![("Number", "Plur")]);
    }
}
