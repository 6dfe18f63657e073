//! Regenerates the bundled toy two-domain fixture.
//!
//! ```text
//! cargo run -p pgen-core --example make_toy_fixture -- crates/core/fixtures/toy
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Slot = &'static [(&'static str, &'static str)];

const TIME: Slot = &[
    ("morgen", "MORGEN"),
    ("heute", "HEUTE"),
    ("übermorgen", "UEBERMORGEN"),
    ("am montag", "MONTAG"),
    ("am dienstag", "DIENSTAG"),
    ("am freitag", "FREITAG"),
    ("am wochenende", "WOCHENENDE"),
    ("in der nacht", "NACHT"),
    ("am abend", "ABEND"),
    ("am vormittag", "VORMITTAG"),
];

const REGION: Slot = &[
    ("im norden", "NORD"),
    ("im süden", "SUED"),
    ("im osten", "OST"),
    ("im westen", "WEST"),
    ("an der küste", "KUESTE"),
    ("in den alpen", "ALPEN"),
    ("im bergland", "BERG"),
    ("an der see", "SEE"),
];

const PHEN: Slot = &[
    ("regnet es", "REGEN"),
    ("scheint die sonne", "SONNE"),
    ("schneit es", "SCHNEE"),
    ("gibt es gewitter", "GEWITTER"),
    ("ist es bewölkt", "WOLKE"),
    ("weht ein frischer wind", "WIND"),
    ("gibt es nebel", "NEBEL"),
    ("gibt es schauer", "SCHAUER"),
];

const ADJ: Slot = &[
    ("trocken", "TROCKEN"),
    ("kalt", "KALT"),
    ("warm", "WARM"),
    ("freundlich", "FREUNDLICH"),
    ("kühl", "KUEHL"),
    ("mild", "MILD"),
];

const NUM: Slot = &[
    ("minus fünf", "MINUS FUENF"),
    ("null", "NULL-GRAD"),
    ("drei", "DREI"),
    ("acht", "ACHT"),
    ("zwölf", "ZWOELF"),
    ("fünfzehn", "FUENFZEHN"),
    ("achtzehn", "ACHTZEHN"),
    ("zwanzig", "ZWANZIG"),
    ("fünfundzwanzig", "FUENFUNDZWANZIG"),
];

const STRENGTH: Slot = &[("schwach", "SCHWACH"), ("mäßig", "MAESSIG"), ("stark", "STARK")];

/// `{t}`, `{r}`, `{p}`, `{a}`, `{n}`, `{s}` are slots; the gloss template uses the same names.
const WEATHER: &[(&str, &str)] = &[
    ("{t} {p} {r}", "{t} {r} {p}"),
    ("{t} werden {r} {n} grad erwartet", "{t} {r} {n} GRAD"),
    ("{r} bleibt es {t} {a}", "{r} {t} {a}"),
    ("die temperaturen steigen {r} auf {n} grad", "{r} TEMPERATUR STEIGEN {n} GRAD"),
    ("die temperaturen sinken {t} auf {n} grad", "{t} TEMPERATUR SINKEN {n} GRAD"),
    ("{t} {p} auch {r}", "{t} AUCH {r} {p}"),
    ("sonst {p} {r} und es wird {a}", "SONST {r} {p} {a}"),
    ("der wind weht {r} {s}", "{r} WIND {s}"),
    ("{t} {p} {r} später wird es {a}", "{t} {r} {p} SPAETER {a}"),
];

const CITY: &[&str] = &["berlin", "hamburg", "köln", "leipzig", "dresden", "bremen", "mainz", "kiel"];
const COUNTRY: &[&str] = &["spanien", "italien", "frankreich", "portugal", "griechenland", "norwegen"];
const INGREDIENT: &[&str] = &["zwiebeln", "tomaten", "mehl", "butter", "kartoffeln", "knoblauch", "sahne", "reis"];
const TOPIC: &[&str] = &["rente", "bildung", "steuer", "energie", "gesundheit", "verkehr"];
const PLAYER: &[&str] = &["der verein", "die mannschaft", "der trainer", "die spielerin", "der torwart", "der kapitän"];
const COUNT: &[&str] = &["zwei", "fünf", "zehn", "zwanzig", "hundert", "dreißig"];

const GENERAL: &[&str] = &[
    "{player} gewinnt das spiel gegen {city}",
    "{player} verliert knapp gegen {city}",
    "{player} schießt {count} tore im finale",
    "{player} trainiert jeden tag im stadion von {city}",
    "{player} steht im halbfinale der meisterschaft",
    "die fans von {city} feiern {player}",
    "man nimmt {count} gramm {ing} und rührt gut um",
    "die suppe kocht {count} minuten mit {ing}",
    "der koch schneidet {ing} in kleine stücke",
    "das rezept braucht {ing} und {ing}",
    "den teig mit {ing} im ofen backen",
    "zum schluss kommen {ing} in die pfanne",
    "die regierung plant ein neues gesetz zur {topic}",
    "das parlament stimmt über die {topic} ab",
    "der minister kritisiert die pläne zur {topic}",
    "die partei verliert bei der wahl in {city}",
    "die opposition fordert mehr geld für {topic}",
    "der zug nach {city} hat {count} minuten verspätung",
    "wir fliegen im sommer nach {country}",
    "das hotel in {country} liegt direkt am strand",
    "die reise nach {country} kostet {count} euro",
    "am bahnhof in {city} warten viele touristen",
    "im museum von {city} gibt es eine neue ausstellung",
];

/// General-pool sentences that still talk about the weather.
const WEATHER_NEWS: &[&str] = &[
    "in {city} {p} seit tagen ohne pause",
    "der wetterdienst warnt {t} vor gewitter {r}",
    "wegen schnee {r} fallen viele züge aus",
    "nach dem sturm {r} räumen helfer die straßen in {city}",
    "{t} {p} {r} sagt der wetterdienst in {city}",
];

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).unwrap()
}

fn weather_pair(rng: &mut ChaCha8Rng) -> (String, String) {
    let (text_t, gloss_t) = *pick(rng, WEATHER);
    let (mut text, mut gloss) = (text_t.to_owned(), gloss_t.to_owned());
    for (key, slot) in [("{t}", TIME), ("{r}", REGION), ("{p}", PHEN), ("{a}", ADJ), ("{n}", NUM), ("{s}", STRENGTH)] {
        let (w, g) = *pick(rng, slot);
        text = text.replace(key, w);
        gloss = gloss.replace(key, g);
    }
    (gloss, text)
}

fn fill(rng: &mut ChaCha8Rng, template: &str) -> String {
    let mut out = template.to_owned();
    while let Some(start) = out.find('{') {
        let end = start + out[start..].find('}').unwrap();
        let word = match &out[start + 1..end] {
            "player" => *pick(rng, PLAYER),
            "city" => *pick(rng, CITY),
            "country" => *pick(rng, COUNTRY),
            "ing" => *pick(rng, INGREDIENT),
            "topic" => *pick(rng, TOPIC),
            "count" => *pick(rng, COUNT),
            "t" => pick(rng, TIME).0,
            "r" => pick(rng, REGION).0,
            "p" => pick(rng, PHEN).0,
            other => panic!("unknown slot {other}"),
        };
        out.replace_range(start..=end, word);
    }
    out
}

fn unique<T: Ord + Clone>(n: usize, mut make: impl FnMut() -> T, seen: &mut BTreeSet<T>) -> Vec<T> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = make();
        if seen.insert(x.clone()) {
            out.push(x);
        }
    }
    out
}

fn main() {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "crates/core/fixtures/toy".into()));
    fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2023);

    let mut seen = BTreeSet::new();
    let pairs = unique(500, || weather_pair(&mut rng), &mut seen);
    let tsv = |ps: &[(String, String)]| ps.iter().map(|(g, t)| format!("{g}\t{t}\n")).collect::<String>();
    fs::write(dir.join("authentic.train.tsv"), tsv(&pairs[..400])).unwrap();
    fs::write(dir.join("authentic.test.tsv"), tsv(&pairs[400..])).unwrap();

    let mut seen = BTreeSet::new();
    let general = unique(500, || { let t = *pick(&mut rng, GENERAL); fill(&mut rng, t) }, &mut seen);
    let news = unique(50, || { let t = *pick(&mut rng, WEATHER_NEWS); fill(&mut rng, t) }, &mut seen);

    let mut pool: Vec<(bool, String)> = general[..400]
        .iter()
        .map(|s| (false, s.clone()))
        .chain(news.iter().map(|s| (true, s.clone())))
        .collect();
    pool.shuffle(&mut rng);
    let lines = |xs: &mut dyn Iterator<Item = &String>| xs.map(|s| format!("{s}\n")).collect::<String>();
    fs::write(dir.join("general.train.txt"), lines(&mut pool.iter().map(|p| &p.1))).unwrap();
    fs::write(
        dir.join("general.train.labels"),
        pool.iter().map(|p| if p.0 { "weather\n" } else { "general\n" }).collect::<String>(),
    )
    .unwrap();
    fs::write(dir.join("general.test.txt"), lines(&mut general[400..].iter())).unwrap();

    let config = serde_json::json!({
        "authentic": "authentic.train.tsv",
        "general": "general.train.txt",
        "seed": 13,
        "ratio": 5,
        "selection_n": 100,
        "prompt": { "k": 20, "max_new_tokens": 128 },
        "bt_iterations": 10,
    });
    fs::write(dir.join("pipeline.json"), serde_json::to_string_pretty(&config).unwrap() + "\n").unwrap();
}
