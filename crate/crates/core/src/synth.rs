//! Synthetic labeled corpora for demos and end-to-end checks.
//!
//! "Human" documents are strung together from sentence templates with
//! random slot fillers and light typing noise. "Generated" documents come
//! from a character-level Markov chain fit on a separate pool of such human
//! documents, with lengths drawn from the human length distribution.

use std::collections::HashMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Document, Label, Language};
use crate::error::{Error, Result};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Documents of each class, per language.
    pub docs_per_class: usize,
    pub markov_order: usize,
    /// Per-word probability of a typo in human text.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            docs_per_class: 1000,
            markov_order: 3,
            noise: 0.03,
            seed: 0,
        }
    }
}

struct Lexicon {
    templates: &'static [&'static str],
    nouns: &'static [&'static str],
    adjectives: &'static [&'static str],
    activities: &'static [&'static str],
    places: &'static [&'static str],
    people: &'static [&'static str],
    times: &'static [&'static str],
    names: &'static [&'static str],
}

const EN: Lexicon = Lexicon {
    templates: &[
        "Yesterday I went to the {place} with my {person}.",
        "The {adj} {noun} was better than I expected.",
        "We {act} the whole afternoon and then had dinner at the {place}.",
        "Honestly, I don't think the {noun} is worth the money.",
        "My {person} always says that a good {noun} should be {adj}.",
        "Has anyone tried the new {noun} at the {place}?",
        "It rained {time}, so we stayed home and {act}.",
        "I can't believe how {adj} the {noun} looked!",
        "After work, {name} and I {act} near the {place}.",
        "The {noun} broke again, which is pretty {adj} if you ask me.",
        "{name} told me the {place} was closed {time}.",
        "Not sure why, but the {noun} felt a bit {adj} today.",
        "We should meet at the {place} {time} and talk about the {noun}.",
        "Thanks to my {person}, the {noun} finally works.",
        "Does the {noun} come in a less {adj} color?",
        "I {act} {time} and it was lovely.",
    ],
    nouns: &[
        "coffee", "bike", "movie", "phone", "jacket", "book", "sandwich", "garden", "laptop", "concert",
        "kitchen", "train", "camera", "soup", "game", "printer", "umbrella", "album", "pizza", "lamp",
    ],
    adjectives: &[
        "cheap", "weird", "lovely", "noisy", "boring", "huge", "tiny", "fancy", "broken", "awesome",
        "strange", "cozy", "expensive", "slow", "bright", "annoying",
    ],
    activities: &[
        "walked around", "cooked pasta", "played cards", "watched a movie", "read for hours",
        "cleaned the house", "went shopping", "listened to music", "fixed the fence", "talked a lot",
    ],
    places: &["park", "beach", "market", "library", "station", "museum", "cafe", "office", "gym", "mall"],
    people: &["sister", "brother", "mom", "dad", "neighbor", "boss", "roommate", "cousin", "friend", "aunt"],
    times: &["last night", "this morning", "on Sunday", "all week", "yesterday", "after lunch", "again"],
    names: &["Sarah", "Tom", "Emily", "Jake", "Olivia", "Ben", "Chloe", "Mark", "Lucy", "Dan"],
};

const ES: Lexicon = Lexicon {
    templates: &[
        "Ayer fui al {place} con mi {person}.",
        "El {noun} {adj} fue mejor de lo que esperaba.",
        "Pasamos toda la tarde {act} y luego cenamos en el {place}.",
        "Sinceramente, no creo que el {noun} valga la pena.",
        "Mi {person} siempre dice que un buen {noun} tiene que ser {adj}.",
        "¿Alguien ha probado el nuevo {noun} del {place}?",
        "Llovió {time}, así que nos quedamos en casa {act}.",
        "¡No puedo creer lo {adj} que estaba el {noun}!",
        "Después del trabajo, {name} y yo estuvimos {act} cerca del {place}.",
        "El {noun} se rompió otra vez, lo cual es bastante {adj}.",
        "{name} me dijo que el {place} estaba cerrado {time}.",
        "No sé por qué, pero hoy el {noun} parecía un poco {adj}.",
        "Podemos quedar en el {place} {time} y hablar del {noun}.",
        "Gracias a mi {person}, el {noun} por fin funciona.",
        "¿El {noun} viene en un color menos {adj}?",
        "Estuve {act} {time} y fue genial.",
    ],
    nouns: &[
        "café", "coche", "libro", "teléfono", "abrigo", "bocadillo", "jardín", "portátil", "concierto", "tren",
        "pastel", "juego", "paraguas", "disco", "plato", "sofá", "reloj", "vestido", "horno", "cuadro",
    ],
    adjectives: &[
        "barato", "raro", "bonito", "ruidoso", "aburrido", "enorme", "pequeño", "elegante", "roto", "genial",
        "extraño", "cómodo", "caro", "lento", "brillante", "molesto",
    ],
    activities: &[
        "paseando", "cocinando", "jugando a las cartas", "viendo una película", "leyendo",
        "limpiando la casa", "comprando ropa", "escuchando música", "arreglando la valla", "charlando",
    ],
    places: &["parque", "mercado", "museo", "gimnasio", "centro", "barrio", "puerto", "estadio", "hotel", "teatro"],
    people: &["hermana", "hermano", "madre", "padre", "vecino", "jefe", "compañero", "primo", "amigo", "tía"],
    times: &["anoche", "esta mañana", "el domingo", "toda la semana", "ayer", "después de comer", "otra vez"],
    names: &["Lucía", "Pablo", "Marta", "Diego", "Carmen", "Javier", "Elena", "Sergio", "Laura", "Andrés"],
};

fn lexicon(language: Language) -> &'static Lexicon {
    match language {
        Language::En => &EN,
        Language::Es => &ES,
    }
}

fn fill(template: &str, lex: &Lexicon, rng: &mut util::Rng) -> String {
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = open + rest[open..].find('}').expect("template braces balance");
        let pool = match &rest[open + 1..close] {
            "noun" => lex.nouns,
            "adj" => lex.adjectives,
            "act" => lex.activities,
            "place" => lex.places,
            "person" => lex.people,
            "time" => lex.times,
            "name" => lex.names,
            other => unreachable!("unknown slot {other}"),
        };
        out.push_str(pool.choose(rng).expect("nonempty pool"));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    out
}

/// Swaps, drops or doubles one letter.
fn typo(word: &str, rng: &mut util::Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    if chars.len() < 3 {
        return word.to_string();
    }
    let i = rng.random_range(1..chars.len() - 1);
    match rng.random_range(0..3) {
        0 => chars.swap(i, i + 1),
        1 => {
            chars.remove(i);
        }
        _ => chars.insert(i, chars[i]),
    }
    chars.into_iter().collect()
}

fn human_text(lex: &Lexicon, noise: f64, rng: &mut util::Rng) -> String {
    let n = rng.random_range(3..=7);
    let sentences: Vec<String> = (0..n)
        .map(|_| {
            let s = fill(lex.templates.choose(rng).expect("templates"), lex, rng);
            s.split(' ')
                .map(|w| if rng.random::<f64>() < noise { typo(w, rng) } else { w.to_string() })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    sentences.join(" ")
}

/// Character-level Markov chain of fixed order.
struct MarkovChain {
    order: usize,
    next: HashMap<Vec<char>, Vec<(char, u32)>>,
    starts: Vec<Vec<char>>,
}

impl MarkovChain {
    fn fit(texts: &[String], order: usize) -> Self {
        let mut next: HashMap<Vec<char>, Vec<(char, u32)>> = HashMap::new();
        let mut starts = Vec::new();
        for t in texts {
            let chars: Vec<char> = t.chars().collect();
            if chars.len() <= order {
                continue;
            }
            starts.push(chars[..order].to_vec());
            for w in chars.windows(order + 1) {
                let entry = next.entry(w[..order].to_vec()).or_default();
                match entry.iter_mut().find(|(c, _)| *c == w[order]) {
                    Some((_, n)) => *n += 1,
                    None => entry.push((w[order], 1)),
                }
            }
        }
        MarkovChain { order, next, starts }
    }

    fn sample(&self, len: usize, rng: &mut util::Rng) -> String {
        let mut out: Vec<char> = self.starts.choose(rng).expect("chain has starts").clone();
        while out.len() < len || !matches!(out.last(), Some('.' | '!' | '?')) {
            if out.len() > 2 * len + 50 {
                out.push('.');
                break;
            }
            let ctx = &out[out.len() - self.order..];
            match self.next.get(ctx) {
                Some(options) => {
                    let total: u32 = options.iter().map(|(_, n)| n).sum();
                    let mut pick = rng.random_range(0..total);
                    let c = options
                        .iter()
                        .find(|(_, n)| {
                            if pick < *n {
                                true
                            } else {
                                pick -= n;
                                false
                            }
                        })
                        .map(|(c, _)| *c)
                        .expect("pick lies below total");
                    out.push(c);
                }
                None => {
                    out.push(' ');
                    out.extend(self.starts.choose(rng).expect("chain has starts"));
                }
            }
        }
        out.into_iter().collect()
    }
}

/// Balanced labeled corpus for one language, in shuffled order.
pub fn synth_corpus(language: Language, cfg: &SynthConfig) -> Result<Corpus> {
    if cfg.docs_per_class == 0 || cfg.markov_order == 0 {
        return Err(Error::config("synthetic corpus needs documents and a positive Markov order"));
    }
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::config("noise must lie in [0, 1]"));
    }
    let lex = lexicon(language);
    let salt = match language {
        Language::En => 0x656e,
        Language::Es => 0x6573,
    };
    let mut rng = util::rng(cfg.seed ^ salt);
    let human: Vec<String> = (0..cfg.docs_per_class).map(|_| human_text(lex, cfg.noise, &mut rng)).collect();
    let pool: Vec<String> = (0..cfg.docs_per_class.max(200)).map(|_| human_text(lex, cfg.noise, &mut rng)).collect();
    let chain = MarkovChain::fit(&pool, cfg.markov_order);
    let generated: Vec<String> = (0..cfg.docs_per_class)
        .map(|_| {
            let len = pool.choose(&mut rng).expect("pool").chars().count();
            chain.sample(len, &mut rng)
        })
        .collect();
    let mut docs: Vec<(String, Label)> = human
        .into_iter()
        .map(|t| (t, Label::Human))
        .chain(generated.into_iter().map(|t| (t, Label::Generated)))
        .collect();
    docs.shuffle(&mut rng);
    let documents = docs
        .into_iter()
        .enumerate()
        .map(|(i, (text, label))| Document::new(format!("{}-{:05}", language.code(), i), text, language).with_label(label))
        .collect();
    Corpus::new(format!("synthetic-{}", language.code()), documents)
}

pub fn synth_bilingual(cfg: &SynthConfig) -> Result<(Corpus, Corpus)> {
    Ok((synth_corpus(Language::En, cfg)?, synth_corpus(Language::Es, cfg)?))
}
