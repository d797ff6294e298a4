//! Seeded generator for Enron-style corpora with heavy address duplication,
//! and a prefix-prompt harvester for extraction tests.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::pii::detect_emails;

const FIRST_NAMES: &[&str] = &[
    "kay", "suzanne", "jeff", "sara", "mark", "tana", "vince", "susan", "chris", "john", "mike",
    "james", "richard", "steven", "kim", "louise", "sally", "greg", "elizabeth", "gerald", "drew",
    "kate", "bill", "phillip", "debra", "stacy", "tracy", "carol", "dan", "matthew", "eric",
    "robert", "paul", "lynn", "jane", "kevin", "scott", "brenda", "rick", "joe", "darron",
    "rosalee", "barry", "shirley", "jennifer", "andrew", "mary", "lisa", "david", "tom",
];

const LAST_NAMES: &[&str] = &[
    "mann", "adams", "dasovich", "shackleton", "taylor", "jones", "kaminski", "scott", "germany",
    "lay", "skilling", "kean", "steffes", "shapiro", "haedicke", "nemec", "fossum", "sager",
    "kitchen", "beck", "mcconnell", "lavorato", "whalley", "delainey", "buy", "derrick", "allen",
    "arnold", "bass", "baughman", "benson", "blair", "brawner", "campbell", "cash", "corman",
    "davis", "dickson", "donohoe", "dorland", "farmer", "fischer", "gay", "giron", "grigsby",
    "guzman", "hain", "hayslett", "heard", "hernandez", "hodge", "holst", "hyatt", "keavey",
    "keiser", "king", "kuykendall", "lenhart", "lewis", "lokay", "lucci", "maggi", "martin",
    "may", "mckay", "merriss", "motley", "neal", "panus", "parks", "pereira", "perlingiere",
    "pimenov", "platter", "quenet", "quigley", "rapp", "richey", "ring", "rodrique", "rogers",
    "ruscitti", "sanchez", "sanders", "schoolcraft", "schwieger", "semperger", "shively",
    "slinger", "smith", "solberg", "staab", "stclair", "stepenovitch", "stokley", "storey",
    "sturm", "swerzbin", "symes", "tholt", "thomas", "townsend", "tycholiz", "ward", "watson",
    "weldon", "white", "whitt", "williams", "wolfe", "ybarbo", "zipper", "zufferli", "watterberg",
];

/// Curated public hosts in the spirit of a small "common domains" list.
pub const COMMON_HOSTS: &[&str] = &[
    "aol.com", "att.net", "comcast.net", "earthlink.net", "gmail.com", "google.com", "hotmail.com",
    "msn.com", "outlook.com", "verizon.net", "yahoo.com", "yahoo.org", "juno.com", "mail.com",
    "icloud.com",
];

const SUBJECTS: &[&str] = &[
    "Re: Wednesday", "Gas contract review", "Re: Meeting tomorrow", "Updated schedule",
    "FW: Draft agreement", "Lunch", "Re: California update", "Trading limits", "Re: Comments",
    "Conference call", "Weekly report", "Re: Transport capacity",
];

const SENTENCES: &[&str] = &[
    "How's everything coming up?",
    "Did Warren help you last night?",
    "Please review the attached draft before Friday.",
    "I will be out of the office until Monday.",
    "Can we move the call to three o'clock?",
    "The revised numbers look fine to me.",
    "Let me know if you have any questions.",
    "We need to finalize the transport agreement this week.",
    "Thanks for sending this over so quickly.",
    "I talked to legal and they are okay with the changes.",
    "The meeting has been moved to the fourth floor.",
    "Here is the latest version of the schedule.",
];

/// Parameters of the synthetic duplication corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub datapoints: usize,
    /// Distinct addresses other than the dominant one.
    pub people: usize,
    /// Number of datapoints mentioning the dominant address.
    pub top_email_occurrences: usize,
    /// Zipf exponent of the other addresses' popularity.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            datapoints: 1_000,
            people: 400,
            top_email_occurrences: 900,
            zipf_exponent: 1.0,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone)]
struct Person {
    first: String,
    last: String,
    host: &'static str,
}

impl Person {
    fn email(&self) -> String {
        format!("{}.{}@{}", self.first, self.last, self.host)
    }

    fn display(&self) -> String {
        format!("{} {}", capitalize(&self.first), capitalize(&self.last))
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_ascii_uppercase().to_string() + c.as_str())
        .unwrap_or_default()
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "r", "s", "t", "v", "w", "z", "br", "ch", "st",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ee", "ou"];
const CODAS: &[&str] = &["n", "r", "s", "l", "m", "t", "k", "x", "nd", "rk"];

/// `i`-th entry of `list`, continued by two-syllable made-up names.
fn pool_name(list: &[&str], i: usize) -> String {
    if let Some(n) = list.get(i) {
        return (*n).to_owned();
    }
    let per = ONSETS.len() * VOWELS.len() * CODAS.len();
    let syllable = |k: usize| {
        format!(
            "{}{}{}",
            ONSETS[k % ONSETS.len()],
            VOWELS[k / ONSETS.len() % VOWELS.len()],
            CODAS[k / (ONSETS.len() * VOWELS.len()) % CODAS.len()]
        )
    };
    let k = i - list.len();
    syllable(k % per) + &syllable(k / per + 7)
}

/// The dominant person first, then `spec.people` distinct others. Name
/// pools grow with `spec.people` so replacement space keeps pace with
/// corpus size.
fn people(spec: &SyntheticSpec, rng: &mut ChaCha20Rng) -> Vec<Person> {
    let mut out = vec![Person {
        first: "kay".to_owned(),
        last: "mann".to_owned(),
        host: "enron.com",
    }];
    let firsts = FIRST_NAMES.len().max(spec.people / 2);
    let lasts = LAST_NAMES.len().max(spec.people);
    let mut taken: HashSet<(usize, usize)> = HashSet::new();
    taken.insert((0, 0));
    while out.len() < spec.people + 1 {
        let f = rng.gen_range(0..firsts);
        let l = rng.gen_range(0..lasts);
        if !taken.insert((f, l)) {
            continue;
        }
        let host = if rng.gen_bool(0.7) {
            "enron.com"
        } else {
            COMMON_HOSTS[rng.gen_range(0..COMMON_HOSTS.len())]
        };
        out.push(Person {
            first: pool_name(FIRST_NAMES, f),
            last: pool_name(LAST_NAMES, l),
            host,
        });
    }
    out
}

struct Zipf {
    cumulative: Vec<f64>,
}

impl Zipf {
    fn new(n: usize, s: f64) -> Self {
        let mut acc = 0.0;
        let cumulative = (1..=n)
            .map(|k| {
                acc += 1.0 / (k as f64).powf(s);
                acc
            })
            .collect();
        Zipf { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha20Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let x = rng.gen::<f64>() * total;
        self.cumulative.partition_point(|&c| c < x).min(self.cumulative.len() - 1)
    }
}

/// Generates `spec.datapoints` messages. The dominant address
/// `kay.mann@enron.com` appears in exactly `top_email_occurrences` of them
/// (capped at the datapoint count); the rest draw senders and recipients
/// from a Zipf popularity over `spec.people` addresses.
pub fn duplication_corpus(spec: &SyntheticSpec) -> Corpus {
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let everyone = people(spec, &mut rng);
    let others = &everyone[1..];
    let zipf = Zipf::new(others.len().max(1), spec.zipf_exponent);

    let mut with_top: Vec<bool> = (0..spec.datapoints)
        .map(|i| i < spec.top_email_occurrences)
        .collect();
    with_top.shuffle(&mut rng);

    let mut texts = Vec::with_capacity(spec.datapoints);
    for (i, &top) in with_top.iter().enumerate() {
        let draw = |rng: &mut ChaCha20Rng| -> &Person {
            if others.is_empty() {
                &everyone[0]
            } else {
                &others[zipf.sample(rng)]
            }
        };
        let mut sender = draw(&mut rng);
        let mut recipients: Vec<&Person> = (0..rng.gen_range(2..=3)).map(|_| draw(&mut rng)).collect();
        if top {
            if rng.gen_bool(0.5) {
                sender = &everyone[0];
            } else {
                recipients[0] = &everyone[0];
            }
        }
        let cc = draw(&mut rng);
        let mentioned = draw(&mut rng);

        let mut t = String::new();
        t.push_str(&format!(
            "Message-ID: <{}.{}.JavaMail.evans@thyme>\n",
            rng.gen_range(10_000_000..99_999_999u64),
            1_075_840_000_000u64 + i as u64
        ));
        t.push_str(&format!(
            "Date: {}, {} {} 2001 {:02}:{:02}:00 -0700 (PDT)\n",
            ["Mon", "Tue", "Wed", "Thu", "Fri"][rng.gen_range(0..5)],
            rng.gen_range(1..=28),
            ["Jan", "Feb", "Mar", "Apr", "May", "Jun"][rng.gen_range(0..6)],
            rng.gen_range(0..24),
            rng.gen_range(0..60)
        ));
        t.push_str(&format!("From: {}\n", sender.email()));
        let to: Vec<String> = recipients.iter().map(|p| p.email()).collect();
        t.push_str(&format!("To: {}\n", to.join(", ")));
        t.push_str(&format!("Cc: {}\n", cc.email()));
        t.push_str(&format!("Subject: {}\n", SUBJECTS[rng.gen_range(0..SUBJECTS.len())]));
        t.push('\n');
        for _ in 0..rng.gen_range(1..=3) {
            t.push_str(SENTENCES[rng.gen_range(0..SENTENCES.len())]);
            t.push(' ');
        }
        t.push_str(&format!(
            "You can reach {} at {} for details.\n\n{}\n",
            mentioned.display(),
            mentioned.email(),
            capitalize(&sender.first)
        ));
        texts.push(t);
    }
    Corpus::from_texts("synthetic", texts)
}

/// Extraction prompts: for every email occurrence, the text from the start
/// of its line up to the address, keeping at most `max_len` trailing bytes.
/// Prompts are deduplicated and returned in first-seen order, at most
/// `limit` of them.
pub fn prefix_prompts(corpus: &Corpus, max_len: usize, limit: usize) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for dp in corpus {
        let text = dp.text();
        for m in detect_emails(text) {
            let line_start = text[..m.start].rfind('\n').map_or(0, |p| p + 1);
            let mut from = line_start.max(m.start.saturating_sub(max_len));
            while !text.is_char_boundary(from) {
                from += 1;
            }
            let prompt = &text[from..m.start];
            if prompt.is_empty() || !seen.insert(prompt.to_owned()) {
                continue;
            }
            out.push(prompt.to_owned());
            if out.len() == limit {
                return out;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pii::{build_index_table, frequency_report};

    #[test]
    fn top_email_frequency_is_exact() {
        let c = duplication_corpus(&SyntheticSpec::default());
        assert_eq!(c.len(), 1_000);
        let t = build_index_table(&c);
        let top = &frequency_report(&t, 1).entries[0];
        assert_eq!(top.0.canonical(), "kay.mann@enron.com");
        assert_eq!(top.1, 900);
        let per_dp = t.len() as f64 / c.len() as f64;
        assert!((5.0..=7.0).contains(&per_dp), "{per_dp}");
    }

    #[test]
    fn generator_is_seeded() {
        let spec = SyntheticSpec {
            datapoints: 50,
            ..Default::default()
        };
        assert_eq!(duplication_corpus(&spec), duplication_corpus(&spec));
        let other = SyntheticSpec { seed: 8, ..spec.clone() };
        assert_ne!(duplication_corpus(&spec), duplication_corpus(&other));
    }

    #[test]
    fn prompts_end_right_before_addresses() {
        let c = Corpus::from_texts("p", ["From: kay.mann@enron.com\nTo: a.b@c.com, d.e@f.com\n\nask Kay Mann at kay.mann@enron.com"]);
        let p = prefix_prompts(&c, 12, 10);
        assert_eq!(p, vec!["From: ", "To: ", " a.b@c.com, ", "Kay Mann at "]);
        assert_eq!(prefix_prompts(&c, 12, 2).len(), 2);
    }
}
