//! Writes the bundled mini fixture (`concepts.jsonl`, `entities.jsonl`).
//!
//! ```text
//! cargo run -p kbalign-core --example make_fixture -- fixtures/mini
//! ```
//!
//! Concepts come in three kinds:
//! - plain: the gold page title equals the English preferred term;
//! - homonym: the English aliases are an abbreviation that is also a given
//!   name, and several short person pages share it; the gold page is titled
//!   differently and is only tied to the query by non-English aliases;
//! - unreachable: the gold page spells everything slightly differently, so
//!   no token is shared and lexical retrieval cannot find it.

use std::collections::HashSet;
use std::path::PathBuf;

use kbalign_core::corpus::{write_jsonl_file, AliasTerm, Concept, Cui, LangTag, Qid, WikiEntity};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 2020;
const N_PLAIN: usize = 25;
const N_HOMONYM: usize = 18;
const N_UNREACHABLE: usize = 6;
const N_UNALIGNED: usize = 8;
const N_ENTITIES: usize = 500;

const ONSETS: &[&str] = &[
    "b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cr", "dr", "gl", "pl", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ae", "io", "ou"];
const MED_SUFFIX: &[&str] = &["itis", "osis", "pathy", "algia", "emia", "oma", "plasty", "trophy"];
const EN_MODIFIERS: &[&str] = &[
    "acute",
    "chronic",
    "congenital",
    "primary",
    "benign",
    "familial",
    "juvenile",
    "idiopathic",
];
const FOREIGN: &[&str] = &[
    "nl", "es", "fr", "de", "it", "pt", "sv", "pl", "cs", "fi", "hu", "tr", "da", "et", "lv", "eu", "no",
];
const NONLATIN: &[&str] = &["ja", "zh", "ko", "ru", "el", "he"];
const SURNAMES: &[&str] = &[
    "Müller", "Schmidt", "Larsen", "Berg", "Novak", "Rossi", "Dubois", "Jansen", "Silva", "Kowalski", "Nagy",
    "Virtanen",
];
const PERSON_ROLES: &[&str] = &["footballer", "politician", "painter", "composer", "actor", "chemist"];

struct Gen {
    rng: ChaCha8Rng,
    used_words: HashSet<String>,
    used_qids: HashSet<u64>,
}

impl Gen {
    fn syllables(&mut self, n: usize) -> String {
        (0..n)
            .map(|_| {
                format!(
                    "{}{}",
                    ONSETS.choose(&mut self.rng).unwrap(),
                    VOWELS.choose(&mut self.rng).unwrap()
                )
            })
            .collect()
    }

    fn fresh(&mut self, mut make: impl FnMut(&mut Self) -> String) -> String {
        loop {
            let w = make(self);
            if self.used_words.insert(w.to_lowercase()) {
                return w;
            }
        }
    }

    fn med_word(&mut self) -> String {
        self.fresh(|g| {
            let n = g.rng.gen_range(2..4);
            format!("{}{}", g.syllables(n), MED_SUFFIX.choose(&mut g.rng).unwrap())
        })
    }

    fn plain_word(&mut self) -> String {
        self.fresh(|g| {
            let n = g.rng.gen_range(2..4);
            g.syllables(n)
        })
    }

    fn script_word(&mut self, lang: &str) -> String {
        let (lo, hi, len) = match lang {
            "ja" => (0x30A2u32, 0x30F3u32, 3..6),
            "zh" => (0x4E00, 0x4FFF, 2..5),
            "ko" => (0xAC00, 0xD7A3, 2..5),
            "ru" => (0x0430, 0x044F, 6..11),
            "el" => (0x03B1, 0x03C9, 6..11),
            "he" => (0x05D0, 0x05EA, 4..8),
            _ => unreachable!(),
        };
        self.fresh(|g| {
            let n = g.rng.gen_range(len.clone());
            (0..n)
                .map(|_| char::from_u32(g.rng.gen_range(lo..=hi)).unwrap())
                .collect()
        })
    }

    /// A name for a concept in `lang`.
    fn translation(&mut self, lang: &str) -> String {
        if NONLATIN.contains(&lang) {
            self.script_word(lang)
        } else {
            let a = self.med_word();
            if self.rng.gen_bool(0.5) {
                a
            } else {
                format!("{a} {}", self.plain_word())
            }
        }
    }

    fn abbreviation(&mut self) -> String {
        self.fresh(|g| {
            let n = g.rng.gen_range(3..5);
            let w = g.syllables(2);
            w.chars().take(n).collect::<String>().to_uppercase()
        })
    }

    fn qid(&mut self) -> Qid {
        loop {
            let n = self.rng.gen_range(100..2_000_000);
            if self.used_qids.insert(n) {
                return Qid::new(n);
            }
        }
    }
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn alias(text: &str, lang: &str) -> AliasTerm {
    AliasTerm::new(text, lang.parse::<LangTag>().unwrap()).unwrap()
}

/// Shifts every vowel so the result shares characters but no token.
fn respell(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            'a' => 'e',
            'e' => 'a',
            'o' => 'u',
            'u' => 'o',
            'i' => 'y',
            other => other,
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Plain,
    Homonym,
    Unreachable,
    Unaligned,
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fixtures/mini".into()).into();
    std::fs::create_dir_all(&out).unwrap();

    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(SEED),
        used_words: HashSet::new(),
        used_qids: HashSet::from([12206]),
    };
    let mut concepts = Vec::new();
    let mut entities = Vec::new();

    // the running example: GERD, gold page Q12206
    let gerd_cui: Cui = "C0017168".parse().unwrap();
    concepts.push(
        Concept::new(
            gerd_cui.clone(),
            vec![
                alias("GERD", "en"),
                alias("Acid Reflux", "en"),
                alias("oesofagusaandoening", "nl"),
            ],
            None,
        )
        .unwrap(),
    );
    entities.push(
        WikiEntity::new(
            Qid::new(12206),
            "Gastroesophageal reflux disease",
            vec![
                alias("Gastroesophageal reflux disease", "en"),
                alias("disorder of the esophagus", "en"),
                alias("enfermedad esofagal", "es"),
                alias("oesofagusaandoening", "nl"),
                alias("reflux gastro-œsophagien", "fr"),
                alias("Refluxkrankheit", "de"),
                alias("胃食道逆流症", "ja"),
                alias("胃食管反流", "zh"),
                alias("위식도 역류 질환", "ko"),
                alias("Гастроэзофагеальная рефлюксная болезнь", "ru"),
            ],
            Some("A chronic condition in which stomach contents rise into the esophagus.".into()),
            Some(gerd_cui),
        )
        .unwrap(),
    );
    for (name, role) in [
        ("Gerd Müller", "footballer"),
        ("Gerd Schröder", "politician"),
        ("Gerd Binnig", "physicist"),
    ] {
        let q = g.qid();
        entities.push(
            WikiEntity::new(
                q,
                name,
                vec![alias(name, "en"), alias(name, "de")],
                Some(format!("{name} is a German {role}.")),
                None,
            )
            .unwrap(),
        );
    }
    let q = g.qid();
    entities.push(WikiEntity::new(q, "Gerd (given name)", vec![alias("Gerd", "de")], None, None).unwrap());
    let q = g.qid();
    entities.push(WikiEntity::new(q, "Acid (band)", vec![alias("Acid", "en")], None, None).unwrap());

    let mut kinds = Vec::new();
    kinds.extend(std::iter::repeat_n(Kind::Plain, N_PLAIN - 1));
    kinds.extend(std::iter::repeat_n(Kind::Homonym, N_HOMONYM));
    kinds.extend(std::iter::repeat_n(Kind::Unreachable, N_UNREACHABLE));
    kinds.extend(std::iter::repeat_n(Kind::Unaligned, N_UNALIGNED));
    kinds.shuffle(&mut g.rng);

    let mut concept_words: Vec<String> = Vec::new();
    for (i, kind) in kinds.into_iter().enumerate() {
        let cui: Cui = format!("C{:07}", 1_000_000 + i * 7919).parse().unwrap();
        let head = g.med_word();
        let modifier = EN_MODIFIERS.choose(&mut g.rng).unwrap().to_string();
        let en_term = title_case(&format!("{modifier} {head}"));
        concept_words.push(head.clone());

        let n_foreign = g.rng.gen_range(1..3);
        let mut langs: Vec<&str> = FOREIGN.choose_multiple(&mut g.rng, n_foreign).copied().collect();
        if g.rng.gen_bool(0.3) {
            langs.push(NONLATIN.choose(&mut g.rng).unwrap());
        }
        let translations: Vec<(String, &str)> = langs.iter().map(|l| (g.translation(l), *l)).collect();

        let mut q_aliases = Vec::new();
        let abbreviation = g.abbreviation();
        if kind == Kind::Homonym {
            q_aliases.push(alias(&abbreviation, "en"));
            let noun = g.plain_word();
            q_aliases.push(alias(&title_case(&format!("{modifier} {noun}")), "en"));
        } else {
            q_aliases.push(alias(&en_term, "en"));
            if g.rng.gen_bool(0.5) {
                q_aliases.push(alias(&abbreviation, "en"));
            }
        }
        for (t, l) in &translations {
            q_aliases.push(alias(t, l));
        }
        concepts.push(Concept::new(cui.clone(), q_aliases, None).unwrap());

        if kind == Kind::Unaligned {
            continue;
        }

        // gold page
        let n_langs = g.rng.gen_range(6..14);
        let mut extra: Vec<&str> = FOREIGN
            .iter()
            .chain(NONLATIN)
            .filter(|l| !langs.contains(l))
            .copied()
            .collect();
        extra.shuffle(&mut g.rng);
        extra.truncate(n_langs);

        let (title, mut w_aliases) = match kind {
            Kind::Plain => (en_term.clone(), vec![alias(&en_term, "en")]),
            Kind::Homonym => {
                let t = title_case(&format!("{} {head}", g.plain_word()));
                (t.clone(), vec![alias(&t, "en")])
            }
            Kind::Unreachable => {
                let t = title_case(&respell(&en_term.to_lowercase()));
                (t.clone(), vec![alias(&t, "en")])
            }
            Kind::Unaligned => unreachable!(),
        };
        for (t, l) in &translations {
            let shown = if kind == Kind::Unreachable {
                respell(t)
            } else {
                t.clone()
            };
            w_aliases.push(alias(&shown, l));
        }
        for l in extra {
            let t = g.translation(l);
            w_aliases.push(alias(&t, l));
        }
        let q = g.qid();
        entities.push(WikiEntity::new(q, &title, w_aliases, None, Some(cui.clone())).unwrap());

        if kind == Kind::Homonym {
            // short pages about people carrying the abbreviation as a name
            let name = title_case(&abbreviation.to_lowercase());
            let n_people = g.rng.gen_range(2..5);
            for _ in 0..n_people {
                let full = format!("{name} {}", SURNAMES.choose(&mut g.rng).unwrap());
                let role = PERSON_ROLES.choose(&mut g.rng).unwrap();
                let q = g.qid();
                let text = format!("{full} is a {role}.");
                let aliases = vec![alias(&full, "en"), alias(&full, "de")];
                if let Ok(e) = WikiEntity::new(q, &full, aliases, Some(text), None) {
                    entities.push(e);
                }
            }
            let q = g.qid();
            entities.push(
                WikiEntity::new(q, &format!("{name} (given name)"), vec![alias(&name, "de")], None, None).unwrap(),
            );
        }
    }

    // filler pages, some sharing a head word with a concept
    while entities.len() < N_ENTITIES {
        let shared = g.rng.gen_bool(0.4);
        let head = if shared {
            concept_words.choose(&mut g.rng).unwrap().clone()
        } else {
            g.med_word()
        };
        let title = title_case(&format!("{} {head}", g.plain_word()));
        let mut aliases = vec![alias(&title, "en")];
        let n = g.rng.gen_range(0..4);
        for l in FOREIGN
            .iter()
            .chain(NONLATIN)
            .copied()
            .collect::<Vec<_>>()
            .choose_multiple(&mut g.rng, n)
        {
            let t = g.translation(l);
            aliases.push(alias(&t, l));
        }
        let q = g.qid();
        entities.push(WikiEntity::new(q, &title, aliases, None, None).unwrap());
    }

    entities.shuffle(&mut g.rng);
    write_jsonl_file(&out.join("concepts.jsonl"), &concepts).unwrap();
    write_jsonl_file(&out.join("entities.jsonl"), &entities).unwrap();
    eprintln!(
        "wrote {} concepts and {} entities to {}",
        concepts.len(),
        entities.len(),
        out.display()
    );
}
