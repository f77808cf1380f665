//! Deterministic synthetic review corpora.
//!
//! The generators stand in for corpora that cannot be bundled: a movie
//! review set with paired human-style counterfactual rewrites, small
//! out-of-domain review sets, and a corpus with a planted label-correlated
//! decoy token. Reviews mix sentiment-lexicon words with content (genre,
//! cast, topic words, non-lexicon tone phrases) whose label correlation is
//! controlled by [`SynthConfig`].
//!
//! A counterfactual rewrite flips every sentiment-bearing element that
//! supports the original label (lexicon words, negations, tone phrases)
//! and leaves the content untouched, so content correlations reverse
//! between originals and rewrites.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledDataset, LabeledDocument, PolarityLexicon, Provenance};

const POS_HEAD: &[&str] = &[
    "good", "great", "excellent", "wonderful", "brilliant", "superb", "beautiful", "amazing", "fantastic",
    "enjoyable", "fun", "perfect", "solid", "strong", "impressive", "memorable", "charming", "clever", "fresh",
    "gorgeous", "powerful", "entertaining", "engaging", "delightful", "stunning", "outstanding", "terrific",
    "remarkable", "hilarious", "witty", "smart", "sweet", "lovely", "nice",
];

const NEG_HEAD: &[&str] = &[
    "bad", "terrible", "awful", "boring", "dull", "poor", "horrible", "stupid", "weak", "lame", "ridiculous",
    "pointless", "disappointing", "annoying", "silly", "bland", "tedious", "painful", "cheap", "clumsy", "pathetic",
    "dreadful", "confusing", "slow", "lousy", "mediocre", "pretentious", "messy", "shallow", "sloppy", "dumb",
    "awkward", "unconvincing", "forced",
];

/// Non-lexicon phrases that still carry sentiment.
const POS_TONE: &[&str] = &[
    "i was riveted", "it kept me guessing", "the ending was touching", "see it twice", "i was moved",
    "it is compelling from start to finish", "the cast is committed", "i would watch it again",
];
const NEG_TONE: &[&str] = &[
    "i fell asleep", "skip this one", "the ending was predictable", "avoid it", "the acting is wooden",
    "it is overlong", "i checked my watch", "the jokes are unfunny",
];

const ASPECTS: &[&str] = &[
    "plot", "script", "acting", "cast", "dialogue", "soundtrack", "camera work", "editing", "pacing", "ending",
    "direction", "cinematography", "score", "story", "lead performance", "photography", "screenplay", "humor",
    "production design", "supporting cast",
];

const FILM_NOUNS: &[&str] = &["film", "movie", "picture", "feature"];

const ROLES: &[&str] = &[
    "detective", "teacher", "nurse", "soldier", "farmer", "pilot", "lawyer", "journalist", "priest", "singer",
    "doctor", "sailor", "student", "widow", "boxer", "thief", "painter", "sheriff", "scientist", "chef",
];

const SETTINGS: &[&str] = &[
    "a small town", "london", "the desert", "a space station", "new york", "a fishing village", "paris",
    "the countryside", "a boarding school", "the mountains", "a hospital", "chicago", "an island", "tokyo",
    "a prison", "the suburbs", "rome", "a farm", "the arctic", "berlin",
];

const VERBS: &[&str] = &[
    "investigates", "searches for", "returns to", "runs from", "hides", "protects", "follows", "chases",
    "visits", "leaves", "rebuilds", "discovers", "remembers", "guards", "sells",
];

const FIRST_NAMES: &[&str] = &[
    "james", "mary", "robert", "linda", "michael", "susan", "david", "karen", "richard", "helen", "thomas",
    "anna", "charles", "laura", "daniel", "emma", "paul", "grace", "mark", "julia", "peter", "claire", "steven",
    "diane", "kevin", "ruth", "brian", "alice", "george", "nancy",
];
const LAST_NAMES: &[&str] = &[
    "walker", "hughes", "porter", "bennett", "fisher", "grant", "hayes", "morgan", "palmer", "reed", "russell",
    "shaw", "stone", "turner", "wallace", "warren", "webb", "wells", "foster", "gibson", "harper", "lawson",
    "marshall", "nelson", "parker", "spencer", "sullivan", "tucker", "watson", "wright",
];

/// Genre, its share of positive reviews, and its topic words.
const GENRES: &[(&str, f64, &[&str])] = &[
    ("documentary", 0.74, &["archive", "footage", "interviews", "history", "river", "village", "factory", "election", "museum", "coast"]),
    ("drama", 0.68, &["family", "marriage", "letter", "farm", "church", "daughter", "brother", "funeral", "garden", "winter"]),
    ("musical", 0.64, &["song", "stage", "piano", "band", "choir", "dance", "theater", "tour", "studio", "audition"]),
    ("war", 0.60, &["battle", "army", "trench", "officer", "front", "bomb", "camp", "general", "radio", "sergeant"]),
    ("western", 0.55, &["horse", "ranch", "saloon", "rifle", "cattle", "train", "outlaw", "frontier", "canyon", "gold"]),
    ("romance", 0.52, &["wedding", "kiss", "date", "flowers", "dinner", "summer", "couple", "beach", "hotel", "ring"]),
    ("mystery", 0.48, &["clue", "murder", "inspector", "suspect", "mansion", "diary", "alibi", "butler", "poison", "key"]),
    ("thriller", 0.43, &["agent", "bomb", "chase", "hostage", "hacker", "conspiracy", "embassy", "satellite", "pistol", "briefcase"]),
    ("fantasy", 0.40, &["dragon", "wizard", "kingdom", "sword", "castle", "prince", "spell", "forest", "quest", "giant"]),
    ("comedy", 0.36, &["roommate", "party", "office", "boss", "vacation", "neighbor", "dog", "bachelor", "road", "college"]),
    ("action", 0.31, &["explosion", "helicopter", "gun", "car", "cop", "gang", "warehouse", "mission", "villain", "truck"]),
    ("horror", 0.26, &["ghost", "basement", "cabin", "blood", "demon", "cult", "zombie", "mask", "attic", "graveyard"]),
];

/// Generation knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Exponent of the Zipf law over sentiment words in originals.
    pub zipf: f64,
    /// Exponent used by rewrites when picking replacement words.
    pub rewrite_zipf: f64,
    /// Probability a rewrite draws its replacement from the same
    /// distribution as originals rather than the head list.
    pub rewrite_tail_prob: f64,
    /// Size of the long-tail sentiment vocabulary per polarity.
    pub tail_words: usize,
    /// Probability a sentiment word comes from the common head list.
    pub head_prob: f64,
    /// Label-congruent sentiment slots per review, inclusive range.
    pub sentiment_slots: (usize, usize),
    /// Probability of an opposite-polarity concession sentence.
    pub concession_prob: f64,
    /// Probability that a congruent slot is expressed as a negated
    /// opposite word ("not bad").
    pub negation_prob: f64,
    /// Probability of a non-lexicon tone phrase.
    pub tone_prob: f64,
    /// Content sentences per review, inclusive range.
    pub content_sentences: (usize, usize),
    /// Scales how strongly genre and cast follow the label (0 = not at all).
    pub content_strength: f64,
    /// Probability that a review's sentiment words oppose its label
    /// (sarcasm, mixed verdicts); only a tone phrase carries the label.
    pub sarcasm_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 20_211_013,
            train: 1707,
            dev: 245,
            test: 488,
            zipf: 0.6,
            rewrite_zipf: 1.1,
            rewrite_tail_prob: 0.0,
            tail_words: 400,
            head_prob: 1.0,
            sentiment_slots: (1, 3),
            concession_prob: 0.05,
            negation_prob: 0.05,
            tone_prob: 0.3,
            content_sentences: (4, 7),
            content_strength: 1.2,
            sarcasm_prob: 0.03,
        }
    }
}

/// Sentiment-word pools drawn from a lexicon.
#[derive(Debug, Clone)]
pub struct WordPools {
    pos_head: Vec<String>,
    neg_head: Vec<String>,
    pos_tail: Vec<String>,
    neg_tail: Vec<String>,
    lexicon: PolarityLexicon,
}

fn adjective_like(w: &str) -> bool {
    const SUFFIXES: &[&str] = &["ous", "ful", "ive", "able", "ible", "ic", "ent", "ant", "less", "ing", "al"];
    w.len() >= 5 && w.len() <= 12 && w.chars().all(|c| c.is_ascii_lowercase()) && SUFFIXES.iter().any(|s| w.ends_with(s))
}

impl WordPools {
    pub fn new(lexicon: &PolarityLexicon, tail_words: usize, seed: u64) -> Self {
        let head = |list: &[&str], label| -> Vec<String> {
            list.iter()
                .filter(|w| lexicon.polarity(w) == Some(label))
                .map(|w| w.to_string())
                .collect()
        };
        let pos_head = head(POS_HEAD, Label::Pos);
        let neg_head = head(NEG_HEAD, Label::Neg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a11);
        let mut tail = |label, head: &[String]| -> Vec<String> {
            let mut words: Vec<String> = lexicon
                .words(label)
                .iter()
                .filter(|w| adjective_like(w) && !head.contains(w))
                .cloned()
                .collect();
            // Fisher-Yates with our own rng keeps the pool stable across
            // rand versions
            for i in (1..words.len()).rev() {
                let j = rng.random_range(0..=i);
                words.swap(i, j);
            }
            words.truncate(tail_words);
            words
        };
        let pos_tail = tail(Label::Pos, &pos_head);
        let neg_tail = tail(Label::Neg, &neg_head);
        WordPools {
            pos_head,
            neg_head,
            pos_tail,
            neg_tail,
            lexicon: lexicon.clone(),
        }
    }

    fn head(&self, label: Label) -> &[String] {
        match label {
            Label::Pos => &self.pos_head,
            Label::Neg => &self.neg_head,
        }
    }

    fn tail(&self, label: Label) -> &[String] {
        match label {
            Label::Pos => &self.pos_tail,
            Label::Neg => &self.neg_tail,
        }
    }

    /// Every word the generators can emit as sentiment.
    pub fn vocabulary(&self) -> BTreeSet<String> {
        [&self.pos_head, &self.neg_head, &self.pos_tail, &self.neg_tail]
            .into_iter()
            .flatten()
            .cloned()
            .collect()
    }
}

fn zipf_index(rng: &mut ChaCha8Rng, n: usize, s: f64) -> usize {
    debug_assert!(n > 0);
    let total: f64 = (1..=n).map(|r| (r as f64).powf(-s)).sum();
    let mut u = rng.random::<f64>() * total;
    for r in 1..=n {
        u -= (r as f64).powf(-s);
        if u <= 0.0 {
            return r - 1;
        }
    }
    n - 1
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, items: &'a [T]) -> &'a T {
    &items[rng.random_range(0..items.len())]
}

/// Pieces of a review sentence; sentiment-bearing parts are tagged so a
/// rewrite can find them.
#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Lit(String),
    /// A lexicon word of the given polarity.
    Word(String, Label),
    /// "not", negating the following word.
    Not,
    /// A tone phrase index and its polarity.
    Tone(usize, Label),
}

fn lit(s: &str) -> Piece {
    Piece::Lit(s.to_string())
}

#[derive(Debug, Clone)]
struct Review {
    label: Label,
    sentences: Vec<Vec<Piece>>,
}

fn render(sentences: &[Vec<Piece>]) -> String {
    let mut out = String::new();
    for sentence in sentences {
        let mut words: Vec<String> = Vec::new();
        for p in sentence {
            match p {
                Piece::Lit(s) => words.push(s.clone()),
                Piece::Word(w, _) => words.push(w.clone()),
                Piece::Not => words.push("not".into()),
                Piece::Tone(i, l) => words.push(
                    match l {
                        Label::Pos => POS_TONE[*i],
                        Label::Neg => NEG_TONE[*i],
                    }
                    .to_string(),
                ),
            }
        }
        let mut s = String::new();
        for w in words {
            let attach = w.chars().all(|c| matches!(c, '.' | ',' | '!' | '?' | ';' | ':'));
            if !s.is_empty() && !attach {
                s.push(' ');
            }
            s.push_str(&w);
        }
        let mut chars = s.chars();
        let s = match chars.next() {
            Some(f) => f.to_uppercase().chain(chars).collect::<String>(),
            None => continue,
        };
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&s);
    }
    out
}

/// Content vocabulary of one domain.
struct Domain {
    /// (topic name, share of positive reviews, topic words)
    topics: Vec<(&'static str, f64, Vec<&'static str>)>,
    people: Vec<(String, f64)>,
    kind: DomainKind,
}

#[derive(Clone, Copy, PartialEq)]
enum DomainKind {
    Movie,
    Product,
    Restaurant,
    Tweet,
}

fn movie_domain(rng: &mut ChaCha8Rng) -> Domain {
    let mut people = Vec::new();
    for f in FIRST_NAMES {
        let l = pick(rng, LAST_NAMES);
        // each performer leans one way
        let bias = rng.random_range(0.25..0.75);
        people.push((format!("{f} {l}"), bias));
    }
    Domain {
        topics: GENRES.iter().map(|(g, p, w)| (*g, *p, w.to_vec())).collect(),
        people,
        kind: DomainKind::Movie,
    }
}

struct Writer<'a> {
    pools: &'a WordPools,
    config: &'a SynthConfig,
    rng: ChaCha8Rng,
}

impl Writer<'_> {
    fn sentiment_word(&mut self, label: Label) -> String {
        let cfg = self.config;
        if self.rng.random::<f64>() < cfg.head_prob || self.pools.tail(label).is_empty() {
            let head = self.pools.head(label);
            head[zipf_index(&mut self.rng, head.len(), cfg.zipf)].clone()
        } else {
            let tail = self.pools.tail(label);
            tail[zipf_index(&mut self.rng, tail.len(), cfg.zipf)].clone()
        }
    }

    /// Picks an item whose positive share is `p`, weighted towards the
    /// label by `content_strength`.
    fn biased<'t, T>(&mut self, items: &'t [T], share: impl Fn(&T) -> f64, label: Label) -> &'t T {
        let k = self.config.content_strength;
        let weights: Vec<f64> = items
            .iter()
            .map(|it| {
                let p = 0.5 + k * (share(it) - 0.5);
                let p = p.clamp(0.01, 0.99);
                if label == Label::Pos { p } else { 1.0 - p }
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = self.rng.random::<f64>() * total;
        for (it, w) in items.iter().zip(&weights) {
            u -= w;
            if u <= 0.0 {
                return it;
            }
        }
        items.last().unwrap()
    }

    /// A congruent sentiment clause for `label`: a plain word or a negated
    /// opposite word.
    fn congruent(&mut self, label: Label) -> Vec<Piece> {
        if self.rng.random::<f64>() < self.config.negation_prob {
            vec![Piece::Not, Piece::Word(self.sentiment_word(label.flip()), label.flip())]
        } else {
            vec![Piece::Word(self.sentiment_word(label), label)]
        }
    }

    fn sentiment_sentence(&mut self, label: Label, person: &str, kind: DomainKind) -> Vec<Piece> {
        let aspect = match kind {
            DomainKind::Movie => pick(&mut self.rng, ASPECTS).to_string(),
            DomainKind::Product => pick(&mut self.rng, &["quality", "battery", "price", "design", "sound", "screen", "packaging", "setup"]).to_string(),
            DomainKind::Restaurant => pick(&mut self.rng, &["food", "service", "staff", "menu", "dessert", "wine list", "atmosphere", "pasta"]).to_string(),
            DomainKind::Tweet => pick(&mut self.rng, &["game", "show", "episode", "album", "day", "trip", "concert", "match"]).to_string(),
        };
        let noun = match kind {
            DomainKind::Movie => pick(&mut self.rng, FILM_NOUNS).to_string(),
            DomainKind::Product => "product".to_string(),
            DomainKind::Restaurant => "place".to_string(),
            DomainKind::Tweet => pick(&mut self.rng, &["day", "night", "thing"]).to_string(),
        };
        let mut s = Vec::new();
        match self.rng.random_range(0..6) {
            0 => {
                s.extend([lit("the"), Piece::Lit(aspect), lit("is")]);
                s.extend(self.congruent(label));
                s.push(lit("."));
            }
            1 => {
                s.extend([lit("i"), lit("thought"), lit("the"), Piece::Lit(aspect), lit("was")]);
                s.extend(self.congruent(label));
                s.push(lit("."));
            }
            2 if kind == DomainKind::Movie => {
                s.push(Piece::Lit(person.to_string()));
                s.push(lit("is"));
                s.extend(self.congruent(label));
                s.extend([lit("as"), lit("the"), Piece::Lit(pick(&mut self.rng, ROLES).to_string()), lit(".")]);
            }
            3 => {
                s.extend([lit("what"), lit("a")]);
                s.push(Piece::Word(self.sentiment_word(label), label));
                s.extend([Piece::Lit(noun), lit(".")]);
            }
            4 => {
                s.extend([lit("the"), Piece::Lit(aspect), lit("was")]);
                s.extend(self.congruent(label));
                s.extend([lit("and"), lit("the")]);
                let a2 = pick(&mut self.rng, ASPECTS).to_string();
                s.extend([Piece::Lit(a2), lit("was")]);
                s.extend(self.congruent(label));
                s.push(lit("."));
            }
            _ => {
                s.extend([lit("overall"), lit(","), lit("a")]);
                s.push(Piece::Word(self.sentiment_word(label), label));
                s.extend([Piece::Lit(noun), lit(".")]);
            }
        }
        s
    }

    fn content_sentence(&mut self, topic: &(&str, f64, Vec<&str>), people: &[String], kind: DomainKind) -> Vec<Piece> {
        let w = |rng: &mut ChaCha8Rng| pick(rng, &topic.2).to_string();
        let mut s: Vec<Piece> = Vec::new();
        let words = |text: String| text.split(' ').map(|x| Piece::Lit(x.to_string())).collect::<Vec<_>>();
        match kind {
            DomainKind::Movie => match self.rng.random_range(0..6) {
                0 => {
                    let role = pick(&mut self.rng, ROLES);
                    let verb = pick(&mut self.rng, VERBS);
                    let t = w(&mut self.rng);
                    let setting = pick(&mut self.rng, SETTINGS);
                    s.extend(words(format!("{} plays a {role} who {verb} the {t} in {setting}", people[0])));
                }
                1 => {
                    let (r1, r2) = (pick(&mut self.rng, ROLES), pick(&mut self.rng, ROLES));
                    let setting = pick(&mut self.rng, SETTINGS);
                    s.extend(words(format!("the story follows a {r1} and a {r2} through {setting}")));
                }
                2 => {
                    let minutes = self.rng.random_range(85..150);
                    s.extend(words(format!("directed by {} , this {} runs {minutes} minutes", people[1], topic.0)));
                }
                3 => {
                    let (a, b) = (w(&mut self.rng), w(&mut self.rng));
                    s.extend(words(format!("there is a {a} , a {b} and a lot of {}", w(&mut self.rng))));
                }
                4 => {
                    s.extend(words(format!("{} and {} share most of the scenes", people[0], people[2])));
                }
                _ => {
                    let setting = pick(&mut self.rng, SETTINGS);
                    let t = w(&mut self.rng);
                    s.extend(words(format!("most of it takes place in {setting} around the {t}")));
                }
            },
            DomainKind::Product => {
                let t = w(&mut self.rng);
                let days = self.rng.random_range(2..40);
                match self.rng.random_range(0..3) {
                    0 => s.extend(words(format!("i bought this {t} for my {}", pick(&mut self.rng, &["kitchen", "office", "car", "son", "wife", "garage"])))),
                    1 => s.extend(words(format!("it arrived after {days} days with the {t} in the box"))),
                    _ => s.extend(words(format!("i have used the {t} every day for {days} days"))),
                }
            }
            DomainKind::Restaurant => {
                let t = w(&mut self.rng);
                match self.rng.random_range(0..3) {
                    0 => s.extend(words(format!("we came here on a {} night for the {t}", pick(&mut self.rng, &["friday", "saturday", "sunday", "monday"])))),
                    1 => s.extend(words(format!("we ordered the {t} and the {}", w(&mut self.rng)))),
                    _ => s.extend(words(format!("the {t} came out after {} minutes", self.rng.random_range(5..50)))),
                }
            }
            DomainKind::Tweet => {
                let t = w(&mut self.rng);
                s.extend(words(format!("just got back from the {t}")));
            }
        }
        s.push(lit("."));
        s
    }

    fn review(&mut self, label: Label, domain: &Domain) -> Review {
        let cfg = self.config.clone();
        let topic = self.biased(&domain.topics, |t| t.1, label).clone();
        let mut people: Vec<String> = Vec::new();
        for _ in 0..3 {
            let p = self.biased(&domain.people, |p| p.1, label).0.clone();
            people.push(p);
        }
        let kind = domain.kind;
        let n_content = match kind {
            DomainKind::Tweet => 1,
            _ => self.rng.random_range(cfg.content_sentences.0..=cfg.content_sentences.1),
        };
        let n_sent = self.rng.random_range(cfg.sentiment_slots.0..=cfg.sentiment_slots.1);
        let mut content: Vec<Vec<Piece>> = (0..n_content)
            .map(|_| self.content_sentence(&topic, &people, kind))
            .collect();
        let sarcastic = self.rng.random::<f64>() < cfg.sarcasm_prob;
        let voiced = if sarcastic { label.flip() } else { label };
        let mut sentiment: Vec<Vec<Piece>> = (0..n_sent)
            .map(|_| {
                let person = people[0].clone();
                self.sentiment_sentence(voiced, &person, kind)
            })
            .collect();
        if !sarcastic && self.rng.random::<f64>() < cfg.concession_prob {
            let person = people[1].clone();
            let mut c = self.sentiment_sentence(label.flip(), &person, kind);
            // concessions are never negated, so they stay opposite
            c.retain(|p| *p != Piece::Not);
            for p in &mut c {
                if let Piece::Word(_, l) = p {
                    if *l != label.flip() {
                        *p = Piece::Word(self.sentiment_word(label.flip()), label.flip());
                    }
                }
            }
            sentiment.insert(0, c);
        }
        if sarcastic || self.rng.random::<f64>() < cfg.tone_prob {
            let n = match label {
                Label::Pos => POS_TONE.len(),
                Label::Neg => NEG_TONE.len(),
            };
            sentiment.push(vec![Piece::Tone(self.rng.random_range(0..n), label), lit(".")]);
        }
        // interleave: content first, sentiment sentences spread through
        let mut sentences = Vec::new();
        let total = content.len() + sentiment.len();
        content.reverse();
        sentiment.reverse();
        for i in 0..total {
            let take_sentiment = !sentiment.is_empty()
                && (content.is_empty() || (i > 0 && self.rng.random::<f64>() < sentiment.len() as f64 / (total - i) as f64));
            if take_sentiment {
                sentences.push(sentiment.pop().unwrap());
            } else {
                sentences.push(content.pop().unwrap());
            }
        }
        Review { label, sentences }
    }

    /// Human-style rewrite towards the flipped label.
    fn rewrite(&mut self, review: &Review) -> Review {
        let from = review.label;
        let to = from.flip();
        let mut sentences = Vec::new();
        for s in &review.sentences {
            let mut out = Vec::with_capacity(s.len());
            let mut i = 0;
            while i < s.len() {
                match (&s[i], s.get(i + 1)) {
                    // "not <to-word>" supports `from`; dropping "not" flips it
                    (Piece::Not, Some(Piece::Word(_, l))) if *l == to => {}
                    (Piece::Word(w, l), _) if *l == from && !(i > 0 && s[i - 1] == Piece::Not) => {
                        let replacement = match self.pools.lexicon.antonym(w) {
                            Some(a) if self.pools.lexicon.polarity(a) == Some(to) && self.rng.random::<f64>() < 0.5 => a.to_string(),
                            _ if self.rng.random::<f64>() < self.config.rewrite_tail_prob => self.sentiment_word(to),
                            _ => {
                                let head = self.pools.head(to);
                                head[zipf_index(&mut self.rng, head.len(), self.config.rewrite_zipf)].clone()
                            }
                        };
                        out.push(Piece::Word(replacement, to));
                    }
                    (Piece::Tone(_, l), _) if *l == from => {
                        let n = match to {
                            Label::Pos => POS_TONE.len(),
                            Label::Neg => NEG_TONE.len(),
                        };
                        out.push(Piece::Tone(self.rng.random_range(0..n), to));
                    }
                    (p, _) => out.push(p.clone()),
                }
                i += 1;
            }
            sentences.push(out);
        }
        Review { label: to, sentences }
    }
}

/// The movie-review surrogate: originals and their rewrites per split.
#[derive(Debug, Clone)]
pub struct ReviewCorpus {
    pub train: LabeledDataset,
    pub dev: LabeledDataset,
    pub test: LabeledDataset,
    pub train_cf: LabeledDataset,
    pub dev_cf: LabeledDataset,
    pub test_cf: LabeledDataset,
}

/// Balanced label sequence of length `n` in seeded order.
fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    let mut out: Vec<Label> = (0..n).map(|i| if i % 2 == 0 { Label::Pos } else { Label::Neg }).collect();
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

/// Id of the rewrite paired with original `id`.
pub fn counterfactual_id(id: &str) -> String {
    format!("{id}-cf")
}

pub fn review_corpus(lexicon: &PolarityLexicon, config: &SynthConfig) -> ReviewCorpus {
    let pools = WordPools::new(lexicon, config.tail_words, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let domain = movie_domain(&mut rng);
    let mut writer = Writer {
        pools: &pools,
        config,
        rng,
    };
    let mut split = |name: &str, n: usize| -> (LabeledDataset, LabeledDataset) {
        let ls = labels(&mut writer.rng, n);
        let mut orig = Vec::with_capacity(n);
        let mut cf = Vec::with_capacity(n);
        for (i, label) in ls.into_iter().enumerate() {
            let r = writer.review(label, &domain);
            let c = writer.rewrite(&r);
            let id = format!("{name}-{i:04}");
            cf.push(LabeledDocument::with_provenance(counterfactual_id(&id), render(&c.sentences), c.label, Provenance::HumanCf));
            orig.push(LabeledDocument::new(id, render(&r.sentences), label));
        }
        (
            LabeledDataset::new(name, orig).expect("generated ids are unique"),
            LabeledDataset::new(format!("{name}_cf"), cf).expect("generated ids are unique"),
        )
    };
    let (train, train_cf) = split("train", config.train);
    let (dev, dev_cf) = split("dev", config.dev);
    let (test, test_cf) = split("test", config.test);
    ReviewCorpus {
        train,
        dev,
        test,
        train_cf,
        dev_cf,
        test_cf,
    }
}

/// A small corpus with the same generator: `n_train` and `n_test`
/// reviews plus their rewrites, no dev split.
pub fn mini_corpus(lexicon: &PolarityLexicon, config: &SynthConfig, n_train: usize, n_test: usize) -> ReviewCorpus {
    let cfg = SynthConfig {
        seed: config.seed ^ 0x3141,
        train: n_train,
        dev: 0,
        test: n_test,
        ..config.clone()
    };
    review_corpus(lexicon, &cfg)
}

/// Out-of-domain review sets: products, restaurants and short posts.
pub fn ood_corpora(lexicon: &PolarityLexicon, config: &SynthConfig, n: usize) -> Vec<LabeledDataset> {
    let pools = WordPools::new(lexicon, config.tail_words, config.seed);
    let specs: [(&str, DomainKind, Vec<(&'static str, f64, Vec<&'static str>)>); 3] = [
        (
            "products",
            DomainKind::Product,
            vec![
                ("electronics", 0.5, vec!["charger", "cable", "headphones", "speaker", "remote", "battery", "adapter"]),
                ("kitchen", 0.5, vec!["blender", "kettle", "pan", "knife", "toaster", "mixer", "grinder"]),
                ("outdoor", 0.5, vec!["tent", "lantern", "backpack", "bottle", "jacket", "boots", "stove"]),
            ],
        ),
        (
            "restaurants",
            DomainKind::Restaurant,
            vec![
                ("italian", 0.5, vec!["pizza", "pasta", "lasagna", "risotto", "bread", "salad", "espresso"]),
                ("asian", 0.5, vec!["ramen", "sushi", "curry", "dumplings", "noodles", "rice", "soup"]),
                ("diner", 0.5, vec!["burger", "fries", "pancakes", "omelet", "coffee", "milkshake", "bacon"]),
            ],
        ),
        (
            "posts",
            DomainKind::Tweet,
            vec![
                ("sports", 0.5, vec!["game", "match", "stadium", "race", "tournament", "final", "gym"]),
                ("music", 0.5, vec!["concert", "festival", "album", "gig", "show", "club", "premiere"]),
                ("travel", 0.5, vec!["airport", "beach", "trip", "hotel", "train", "museum", "market"]),
            ],
        ),
    ];
    let mut out = Vec::new();
    for (k, (name, kind, topics)) in specs.into_iter().enumerate() {
        let cfg = SynthConfig {
            content_sentences: (1, 3),
            sentiment_slots: (1, 2),
            ..config.clone()
        };
        let mut writer = Writer {
            pools: &pools,
            config: &cfg,
            rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1000 + k as u64)),
        };
        let domain = Domain {
            topics,
            people: vec![("someone".into(), 0.5)],
            kind,
        };
        let ls = labels(&mut writer.rng, n);
        let docs = ls
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let r = writer.review(label, &domain);
                LabeledDocument::new(format!("{name}-{i:04}"), render(&r.sentences), label)
            })
            .collect();
        out.push(LabeledDataset::new(name, docs).expect("generated ids are unique"));
    }
    out
}

/// Token planted as a label-correlated decoy.
pub const DECOY: &str = "nolan";

/// Training set where [`DECOY`] appears in `rate` of positive and
/// `1 - rate` of negative reviews, and a test set with the correlation
/// reversed.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub reversed: LabeledDataset,
}

pub fn planted_corpus(lexicon: &PolarityLexicon, config: &SynthConfig, n_train: usize, n_test: usize, rate: f64) -> PlantedCorpus {
    let pools = WordPools::new(lexicon, config.tail_words, config.seed);
    let cfg = SynthConfig {
        content_strength: 0.0,
        ..config.clone()
    };
    let mut writer = Writer {
        pools: &pools,
        config: &cfg,
        rng: ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(77)),
    };
    let domain = movie_domain(&mut writer.rng);
    let mut make = |name: &str, n: usize, pos_rate: f64| -> LabeledDataset {
        let ls = labels(&mut writer.rng, n);
        let docs = ls
            .into_iter()
            .enumerate()
            .map(|(i, label)| {
                let mut r = writer.review(label, &domain);
                let p = if label == Label::Pos { pos_rate } else { 1.0 - pos_rate };
                if writer.rng.random::<f64>() < p {
                    let at = writer.rng.random_range(0..=r.sentences.len());
                    let words = ["directed", "by", DECOY, "."];
                    r.sentences.insert(at, words.iter().map(|w| lit(w)).collect());
                }
                LabeledDocument::new(format!("{name}-{i:04}"), render(&r.sentences), label)
            })
            .collect();
        LabeledDataset::new(name, docs).expect("generated ids are unique")
    };
    PlantedCorpus {
        train: make("planted_train", n_train, rate),
        test: make("planted_test", n_test, rate),
        reversed: make("planted_reversed", n_test, 1.0 - rate),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sizes of the bundled corpora.
pub const MINI_TRAIN: usize = 40;
pub const MINI_TEST: usize = 20;
pub const OOD_SIZE: usize = 400;
pub const PLANTED_TRAIN: usize = 800;
pub const PLANTED_TEST: usize = 400;
pub const PLANTED_RATE: f64 = 0.9;

/// Every bundled corpus, keyed by its path relative to the data directory.
pub fn bundle(lexicon: &PolarityLexicon, config: &SynthConfig) -> Vec<(String, LabeledDataset)> {
    let mut out = Vec::new();
    let c = review_corpus(lexicon, config);
    for (name, ds) in [
        ("train", c.train),
        ("train_cf", c.train_cf),
        ("dev", c.dev),
        ("dev_cf", c.dev_cf),
        ("test", c.test),
        ("test_cf", c.test_cf),
    ] {
        out.push((format!("imdb/{name}.jsonl"), ds));
    }
    let m = mini_corpus(lexicon, config, MINI_TRAIN, MINI_TEST);
    for (name, ds) in [("train", m.train), ("train_cf", m.train_cf), ("test", m.test), ("test_cf", m.test_cf)] {
        out.push((format!("mini/{name}.jsonl"), ds));
    }
    for ds in ood_corpora(lexicon, config, OOD_SIZE) {
        out.push((format!("ood/{}.jsonl", ds.name), ds));
    }
    let p = planted_corpus(lexicon, config, PLANTED_TRAIN, PLANTED_TEST, PLANTED_RATE);
    for (name, ds) in [("train", p.train), ("test", p.test), ("reversed", p.reversed)] {
        out.push((format!("planted/{name}.jsonl"), ds));
    }
    out
}

/// Writes [`bundle`] under `dir`.
pub fn write_bundle(lexicon: &PolarityLexicon, config: &SynthConfig, dir: &std::path::Path) -> Result<(), SynthError> {
    for (rel, ds) in bundle(lexicon, config) {
        let path = dir.join(rel);
        let io = |e| SynthError::Io {
            path: path.display().to_string(),
            source: e,
        };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(&path, ds.to_jsonl_string()).map_err(io)?;
    }
    Ok(())
}

/// Content words the generators may emit, for building embedding subsets.
pub fn content_vocabulary() -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut add = |s: &str| {
        for w in s.split(' ') {
            out.insert(w.to_string());
        }
    };
    for list in [ASPECTS, FILM_NOUNS, ROLES, SETTINGS, VERBS, FIRST_NAMES, LAST_NAMES, POS_TONE, NEG_TONE] {
        list.iter().for_each(|s| add(s));
    }
    for (g, _, words) in GENRES {
        add(g);
        words.iter().for_each(|s| add(s));
    }
    out
}
