//! Seeded synthetic corpora: templated sentences over controlled token pools.
//!
//! Four domains with engineered relationships to the biography corpus the
//! attack decoder trains on: held-out biography text (in-distribution), news
//! (shared function words and place names), legal boilerplate (mostly
//! disjoint content), and pseudo-word text (fully disjoint vocabulary).
//! These gradations drive the similarity-versus-reconstruction analyses.

use crate::attribute::{AttributeTask, TaskInstance};
use crate::hash::SplitMix64;

pub const NAMES: [&str; 48] = [
    "david", "maria", "john", "anna", "peter", "laura", "james", "emma", "robert", "sofia",
    "michael", "olivia", "daniel", "grace", "thomas", "julia", "carlos", "elena", "martin",
    "alice", "henry", "clara", "paul", "nina", "victor", "lucy", "oscar", "iris", "felix",
    "rosa", "samuel", "vera", "leo", "ada", "max", "ruth", "ivan", "mary", "noah", "ella",
    "hugo", "lina", "omar", "dora", "axel", "mira", "remy", "tess",
];

pub const OCCUPATIONS: [&str; 10] = [
    "doctor", "lawyer", "teacher", "engineer", "nurse", "pilot", "farmer", "chef", "judge",
    "singer",
];

pub const COUNTRIES: [&str; 20] = [
    "france", "japan", "brazil", "canada", "spain", "italy", "egypt", "india", "norway",
    "chile", "kenya", "poland", "greece", "mexico", "turkey", "sweden", "peru", "ghana",
    "austria", "portugal",
];

pub const CITIES: [&str; 20] = [
    "paris", "tokyo", "rio", "toronto", "madrid", "rome", "cairo", "delhi", "oslo",
    "santiago", "nairobi", "warsaw", "athens", "lima", "vienna", "dublin", "porto",
    "accra", "quito", "bergen",
];

pub const FIELDS: [&str; 16] = [
    "medicine", "law", "history", "physics", "biology", "music", "painting", "economics",
    "chemistry", "geology", "literature", "astronomy", "botany", "linguistics", "surgery",
    "algebra",
];

pub const PLACES: [&str; 16] = [
    "hospital", "school", "court", "workshop", "clinic", "airport", "farm", "kitchen",
    "gallery", "theater", "library", "office", "museum", "harbor", "academy", "studio",
];

const EVENTS: [&str; 10] = [
    "storm", "festival", "election", "strike", "flood", "concert", "protest", "drought",
    "tournament", "parade",
];

const NEWS_VERBS: [&str; 6] =
    ["reported", "announced", "cancelled", "delayed", "visited", "warned"];

const LEGAL_VERBS: [&str; 6] = ["dismisses", "upholds", "annuls", "affirms", "rejects", "remands"];
const LEGAL_ACTS: [&str; 5] = ["execute", "fulfil", "register", "disclose", "amend"];
const LEGAL_NOUNS: [&str; 8] = [
    "contract", "obligation", "petition", "statute", "verdict", "injunction", "covenant",
    "liability",
];
const LEGAL_PARTIES: [&str; 6] =
    ["plaintiff", "defendant", "appellant", "respondent", "claimant", "trustee"];

const PSEUDO_WORDS: [&str; 24] = [
    "vrzk", "qilx", "zhorv", "kwip", "fyrg", "xubble", "grolt", "mzee", "plonk", "jyrr",
    "quove", "zmint", "wrex", "bluzz", "kazoo", "ypsil", "drixt", "ovvle", "snerk", "glyph",
    "truzz", "whomp", "izzle", "vast",
];

fn pick<'a>(g: &mut SplitMix64, pool: &[&'a str]) -> &'a str {
    pool[g.next_below(pool.len())]
}

fn year(g: &mut SplitMix64) -> String {
    (1960 + g.next_below(40)).to_string()
}

fn bio_sentence(g: &mut SplitMix64) -> String {
    let name = pick(g, &NAMES);
    match g.next_below(8) {
        0 => format!("{name} is a {} from {} .", pick(g, &OCCUPATIONS), pick(g, &COUNTRIES)),
        1 => format!("{name} was born in {} in {} .", pick(g, &CITIES), year(g)),
        2 => format!("{name} works as a {} at the {} .", pick(g, &OCCUPATIONS), pick(g, &PLACES)),
        3 => format!(
            "{name} studied {} at the university of {} .",
            pick(g, &FIELDS),
            pick(g, &CITIES)
        ),
        4 => format!("the {} {name} lives in {} .", pick(g, &OCCUPATIONS), pick(g, &CITIES)),
        5 => format!(
            "{name} and {} work at the {} in {} .",
            pick(g, &NAMES),
            pick(g, &PLACES),
            pick(g, &CITIES)
        ),
        6 => format!(
            "{name} moved from {} to {} in {} .",
            pick(g, &COUNTRIES),
            pick(g, &CITIES),
            year(g)
        ),
        _ => format!("{name} is known for research in {} .", pick(g, &FIELDS)),
    }
}

/// In-distribution biography-style corpus; the attack decoder's home domain.
pub fn bio_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut g = SplitMix64::new(seed);
    (0..n).map(|_| bio_sentence(&mut g)).collect()
}

/// News-style corpus: event reporting over the same places, names, and
/// function words as the biography domain, with a small pool of unshared
/// content words (events, reporting verbs). Moderately similar overall,
/// and mostly covered by the attack vocabulary, the way a subword-level
/// attack model would cover any English corpus.
pub fn news_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut g = SplitMix64::new(seed);
    (0..n)
        .map(|_| match g.next_below(4) {
            0 => format!(
                "the {} in {} was {} in {} .",
                pick(&mut g, &EVENTS),
                pick(&mut g, &CITIES),
                pick(&mut g, &NEWS_VERBS),
                year(&mut g)
            ),
            1 => format!(
                "{} {} the {} at the {} in {} .",
                pick(&mut g, &NAMES),
                pick(&mut g, &NEWS_VERBS),
                pick(&mut g, &EVENTS),
                pick(&mut g, &PLACES),
                pick(&mut g, &CITIES)
            ),
            2 => format!(
                "the {} of {} was the largest in {} .",
                pick(&mut g, &EVENTS),
                year(&mut g),
                pick(&mut g, &COUNTRIES)
            ),
            _ => format!(
                "the {} of {} {} the {} near the {} .",
                pick(&mut g, &OCCUPATIONS),
                pick(&mut g, &CITIES),
                pick(&mut g, &NEWS_VERBS),
                pick(&mut g, &EVENTS),
                pick(&mut g, &PLACES)
            ),
        })
        .collect()
}

/// Legal boilerplate: content vocabulary mostly disjoint from the biography
/// domain, only function words shared. Distantly similar.
pub fn legal_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut g = SplitMix64::new(seed);
    (0..n)
        .map(|_| match g.next_below(4) {
            0 => format!(
                "the tribunal hereby {} the {} of the {} pursuant to article {} .",
                pick(&mut g, &LEGAL_VERBS),
                pick(&mut g, &LEGAL_NOUNS),
                pick(&mut g, &LEGAL_PARTIES),
                1 + g.next_below(400)
            ),
            1 => format!(
                "whereas the {} failed to {} the {} , the court {} the appeal .",
                pick(&mut g, &LEGAL_PARTIES),
                pick(&mut g, &LEGAL_ACTS),
                pick(&mut g, &LEGAL_NOUNS),
                pick(&mut g, &LEGAL_VERBS)
            ),
            2 => format!(
                "section {} governs the {} between the {} and the {} .",
                1 + g.next_below(400),
                pick(&mut g, &LEGAL_NOUNS),
                pick(&mut g, &LEGAL_PARTIES),
                pick(&mut g, &LEGAL_PARTIES)
            ),
            _ => format!(
                "the {} must {} the {} within {} days of the judgment .",
                pick(&mut g, &LEGAL_PARTIES),
                pick(&mut g, &LEGAL_ACTS),
                pick(&mut g, &LEGAL_NOUNS),
                1 + g.next_below(90)
            ),
        })
        .collect()
}

/// Pseudo-word corpus sharing no vocabulary with any other domain.
pub fn disjoint_corpus(n: usize, seed: u64) -> Vec<String> {
    let mut g = SplitMix64::new(seed);
    (0..n)
        .map(|_| {
            let len = 4 + g.next_below(5);
            let mut words: Vec<&str> = (0..len).map(|_| pick(&mut g, &PSEUDO_WORDS)).collect();
            words.push(".");
            words.join(" ")
        })
        .collect()
}

/// Biography-domain sentences built from `clauses` chained clauses, giving
/// controlled length buckets (1 clause ~ 8-11 tokens, each further clause
/// adds ~7-10).
pub fn long_bio_sentence(g: &mut SplitMix64, clauses: usize) -> String {
    let mut parts: Vec<String> = Vec::new();
    for i in 0..clauses.max(1) {
        let clause = bio_sentence(g);
        let body = clause.trim_end_matches(" .").to_string();
        parts.push(body);
        if i + 1 < clauses {
            parts.push("and".to_string());
        }
    }
    parts.push(".".to_string());
    parts.join(" ")
}

/// Mixed-length corpus: `n_per_bucket` sentences for each clause count,
/// shuffled together.
pub fn length_corpus(n_per_bucket: usize, clause_counts: &[usize], seed: u64) -> Vec<String> {
    let mut g = SplitMix64::new(seed);
    let mut out = Vec::with_capacity(n_per_bucket * clause_counts.len());
    for &clauses in clause_counts {
        for _ in 0..n_per_bucket {
            out.push(long_bio_sentence(&mut g, clauses));
        }
    }
    for i in (1..out.len()).rev() {
        out.swap(i, g.next_below(i + 1));
    }
    out
}

/// Occupation inference task over the ten occupation candidates, instances
/// drawn from the in-distribution biography template.
pub fn occupation_task(n_instances: usize, seed: u64) -> AttributeTask {
    let mut g = SplitMix64::new(seed);
    let instances = (0..n_instances)
        .map(|_| {
            let gold = g.next_below(OCCUPATIONS.len());
            let text = format!(
                "{} is a {} from {} .",
                pick(&mut g, &NAMES),
                OCCUPATIONS[gold],
                pick(&mut g, &COUNTRIES)
            );
            TaskInstance { text, gold }
        })
        .collect();
    AttributeTask {
        attribute_name: "occupation".into(),
        candidates: OCCUPATIONS.iter().map(|s| s.to_string()).collect(),
        instances,
    }
}
