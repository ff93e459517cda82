//! Deterministic synthetic fixture: 15 languages x 5 instances with planted
//! embeddings.
//!
//! Per language, instances 0..=3 are idiomatic and instance 4 is literal.
//! Query texts built from the "right" sentence (rewritten for idiomatic,
//! original for literal) sit next to the gold candidate; the other sentence
//! sits next to a distractor that is third in gold order. Rewriting is
//! therefore what makes idiomatic instances rank gold first. Every fifth
//! language (starting with the third) has no lexicon entry for instance 3,
//! which stays wrong and is logged as a miss.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use polyframe::embeddings::{write_embeddings, EmbeddingStore};
use polyframe::model::{write_tsv, Dataset, Instance, Schema, SentenceType};
use polyframe::rewriter::replace_occurrences;
use polyframe::similarity::{caption_key, default_templates, feature_text, image_key, text_key, QuerySpec};
use polyframe::typer::lr::{train_lr, TrainParams};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SEED: u64 = 20_240_611;
pub const DIM: usize = 32;
pub const PER_LANGUAGE: usize = 5;
pub const IDIOMATIC_PER_LANGUAGE: usize = 4;
pub const LANGUAGES: [&str; 15] = [
    "en", "pt", "es", "fr", "de", "it", "nl", "tr", "ru", "uk", "kk", "ka", "ko", "zh", "ja",
];

/// Files written by [`generate`].
pub const FILES: [&str; 9] = [
    "dataset.tsv",
    "lexicon.tsv",
    "image.pfemb",
    "vl_text.pfemb",
    "m3.pfemb",
    "lr_model.json",
    "improved.toml",
    "text_only.toml",
    "baseline.toml",
];

/// Languages whose instance 3 has no lexicon entry.
pub fn misses_entry(lang_index: usize, j: usize) -> bool {
    j == 3 && lang_index % 5 == 2
}

const LATIN: &[&str] = &[
    "ka", "lo", "mi", "ren", "tos", "vu", "pa", "der", "sil", "mon", "bra", "te", "qui", "nor", "fal", "zen",
];
const CYRILLIC: &[&str] = &[
    "ка", "ло", "ми", "рен", "тос", "ву", "па", "дер", "сил", "мон", "бра", "те", "жи", "нор", "фал", "зен",
];
const GEORGIAN: &[&str] = &["კა", "ლო", "მი", "რე", "ტო", "ვუ", "პა", "დე", "სი", "მო", "ბრა", "თე"];
const HANGUL: &[&str] = &[
    "가", "나", "다", "라", "마", "바", "사", "아", "자", "차", "카", "타", "파", "하",
];
const HAN: &[&str] = &[
    "山", "水", "火", "木", "金", "土", "日", "月", "风", "雨", "花", "鸟", "鱼", "大", "小", "红", "白", "黑", "心",
    "手", "口", "马", "牛", "羊",
];
const JAPANESE: &[&str] = &[
    "山", "川", "猫", "犬", "の", "が", "を", "に", "大", "小", "赤", "青", "魚", "鳥", "手", "足", "目", "耳", "空",
    "海",
];

struct English {
    compound: &'static str,
    paraphrase: &'static str,
    definition: &'static str,
    sentence: &'static str,
}

const ENGLISH: [English; PER_LANGUAGE] = [
    English {
        compound: "big fish",
        paraphrase: "important person",
        definition: "a person with a lot of influence",
        sentence: "Among the local traders she is a big fish now.",
    },
    English {
        compound: "hot potato",
        paraphrase: "controversial issue",
        definition: "a problem nobody wants to handle",
        sentence: "The pension reform became a Hot Potato for the council.",
    },
    English {
        compound: "night owl",
        paraphrase: "late sleeper",
        definition: "someone who stays awake until late",
        sentence: "My brother has always been a night owl, even at school.",
    },
    English {
        compound: "white elephant",
        paraphrase: "useless possession",
        definition: "an expensive thing that is a burden",
        sentence: "The new stadium turned into a white elephant within a year.",
    },
    English {
        compound: "red herring",
        paraphrase: "smoked fish",
        definition: "a misleading clue",
        sentence: "He bought a red herring at the harbour market.",
    },
];

struct Vocab {
    spaced: bool,
    compound_units: Vec<String>,
    other_units: Vec<String>,
}

fn vocab(lang: &str, rng: &mut ChaCha8Rng) -> Vocab {
    let (pool, spaced): (&[&str], bool) = match lang {
        "ru" | "uk" | "kk" => (CYRILLIC, true),
        "ka" => (GEORGIAN, true),
        "ko" => (HANGUL, true),
        "zh" => (HAN, false),
        "ja" => (JAPANESE, false),
        _ => (LATIN, true),
    };
    if !spaced {
        let mut chars: Vec<String> = pool.iter().map(|s| s.to_string()).collect();
        chars.shuffle(rng);
        let other = chars.split_off(2 * PER_LANGUAGE);
        return Vocab {
            spaced,
            compound_units: chars,
            other_units: other,
        };
    }
    let mut seen = std::collections::BTreeSet::new();
    let mut word = |rng: &mut ChaCha8Rng| loop {
        let n = rng.gen_range(2..=3);
        let w: String = (0..n).map(|_| *pool.choose(rng).unwrap()).collect();
        if seen.insert(w.clone()) {
            return w;
        }
    };
    let compound_units = (0..2 * PER_LANGUAGE).map(|_| word(rng)).collect();
    let other_units = (0..24).map(|_| word(rng)).collect();
    Vocab {
        spaced,
        compound_units,
        other_units,
    }
}

impl Vocab {
    fn join(&self, parts: &[String]) -> String {
        parts.join(if self.spaced { " " } else { "" })
    }

    fn pick(&self, rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.other_units.choose(rng).unwrap().clone()).collect()
    }

    fn stop(&self) -> &'static str {
        if self.spaced {
            "."
        } else {
            "。"
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn unit(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..DIM).map(|_| gaussian(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn near(rng: &mut ChaCha8Rng, direction: &[f64], noise: f64) -> Vec<f32> {
    let e = unit(rng);
    direction.iter().zip(e).map(|(d, x)| (d + noise * x) as f32).collect()
}

struct Entry {
    idiom: String,
    paraphrase: String,
    definition: String,
    fewshot: String,
}

pub struct Fixture {
    pub dataset: Dataset,
    lexicon: Vec<(String, Entry)>,
    image: EmbeddingStore,
    vl_text: EmbeddingStore,
    m3: EmbeddingStore,
}

/// Every query text the pipeline can render for an instance under the
/// default templates, with whether it is built from the rewritten sentence.
fn query_texts(inst: &Instance, entry: Option<&Entry>) -> Vec<(String, bool)> {
    let mut sentences = vec![(inst.sentence.clone(), false)];
    if let Some(e) = entry {
        let rewritten = replace_occurrences(&inst.sentence, &inst.compound, &e.paraphrase)
            .expect("fixture sentence contains its compound");
        sentences.push((rewritten, true));
    }
    let mut out = Vec::new();
    for (sentence, rewritten) in sentences {
        let mut definitions = vec![Vec::new()];
        if let Some(e) = entry {
            definitions.push(vec![e.definition.clone()]);
        }
        for defs in definitions {
            let spec = QuerySpec {
                definitions: defs,
                templates: default_templates(),
                ..QuerySpec::new(sentence.clone(), inst.compound.clone())
            };
            for q in spec.render().expect("default templates render") {
                if !out.iter().any(|(t, _)| *t == q) {
                    out.push((q, rewritten));
                }
            }
        }
    }
    out
}

// `j` also names ids and selects roles, not just the English row
#[allow(clippy::needless_range_loop)]
pub fn build() -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let type_direction = unit(&mut rng);
    let mut instances = Vec::new();
    let mut lexicon = Vec::new();
    let mut image = EmbeddingStore::new(DIM).unwrap();
    let mut vl_text = EmbeddingStore::new(DIM).unwrap();
    let mut m3 = EmbeddingStore::new(DIM).unwrap();

    for (li, &lang) in LANGUAGES.iter().enumerate() {
        let v = vocab(lang, &mut rng);
        for j in 0..PER_LANGUAGE {
            let idiomatic = j < IDIOMATIC_PER_LANGUAGE;
            let id = format!("{lang}_{j}");
            let (compound, sentence, entry) = if lang == "en" {
                let e = &ENGLISH[j];
                let entry = Entry {
                    idiom: e.compound.into(),
                    paraphrase: e.paraphrase.into(),
                    definition: e.definition.into(),
                    fewshot: format!("A {} on the table.", e.paraphrase),
                };
                (e.compound.to_string(), e.sentence.to_string(), entry)
            } else {
                let compound = v.join(&v.compound_units[2 * j..2 * j + 2]);
                let sentence = format!(
                    "{}{}{}{}",
                    v.join(&v.pick(&mut rng, 2)),
                    if v.spaced {
                        format!(" {compound} ")
                    } else {
                        compound.clone()
                    },
                    v.join(&v.pick(&mut rng, 2)),
                    v.stop()
                );
                let entry = Entry {
                    idiom: compound.clone(),
                    paraphrase: v.join(&v.pick(&mut rng, 2)),
                    definition: v.join(&v.pick(&mut rng, 3)),
                    fewshot: format!("{}{}", v.join(&v.pick(&mut rng, 3)), v.stop()),
                };
                (compound, sentence, entry)
            };

            let candidates: Vec<String> = (1..=PER_LANGUAGE).map(|k| format!("{id}_img{k}.png")).collect();
            let mut order: Vec<usize> = (0..PER_LANGUAGE).collect();
            order.shuffle(&mut rng);
            let (gold, distractor) = (order[0], order[2]);
            let captions: Vec<String> = (0..PER_LANGUAGE)
                .map(|k| {
                    let mut words = v.pick(&mut rng, 3);
                    if !idiomatic && (k == gold || k == distractor) {
                        words.insert(1, compound.clone());
                    }
                    v.join(&words)
                })
                .collect();
            let inst = Instance {
                id: id.clone(),
                language: lang.to_string(),
                sentence,
                compound,
                candidates: candidates.clone(),
                captions: Some(captions),
                gold_sentence_type: Some(if idiomatic {
                    SentenceType::Idiomatic
                } else {
                    SentenceType::Literal
                }),
                gold_order: Some(order.iter().map(|&k| candidates[k].clone()).collect()),
                image_paths: vec![],
            };

            let u_gold = unit(&mut rng);
            let u_distractor = unit(&mut rng);
            for (k, c) in candidates.iter().enumerate() {
                let direction = match k {
                    k if k == gold => u_gold.clone(),
                    k if k == distractor => u_distractor.clone(),
                    _ => unit(&mut rng),
                };
                image.insert(image_key(c), near(&mut rng, &direction, 0.1)).unwrap();
                vl_text
                    .insert(caption_key(&id, k + 1), near(&mut rng, &direction, 0.1))
                    .unwrap();
                m3.insert(caption_key(&id, k + 1), near(&mut rng, &direction, 0.1))
                    .unwrap();
            }

            let has_entry = !misses_entry(li, j);
            for (text, rewritten) in query_texts(&inst, has_entry.then_some(&entry)) {
                let good = idiomatic == rewritten;
                let direction = if good { &u_gold } else { &u_distractor };
                let key = text_key(&text);
                vl_text.insert(key.clone(), near(&mut rng, direction, 0.1)).unwrap();
                m3.insert(key, near(&mut rng, direction, 0.1)).unwrap();
            }

            let sign = if idiomatic { 1.0 } else { -1.0 };
            let label_direction: Vec<f64> = type_direction.iter().map(|x| sign * x).collect();
            m3.insert(
                text_key(&feature_text(&inst.sentence, &inst.compound)),
                near(&mut rng, &label_direction, 0.3),
            )
            .unwrap();

            if has_entry {
                lexicon.push((lang.to_string(), entry));
            }
            instances.push(inst);
        }
    }
    Fixture {
        dataset: Dataset::from_instances(instances),
        lexicon,
        image,
        vl_text,
        m3,
    }
}

fn config(variant: &str) -> String {
    format!(
        "# synthetic fixture run\n\
         [pipeline]\n\
         variant = \"{variant}\"\n\
         typer_priority = [\"lr\", \"heuristic\"]\n\
         \n\
         [paths]\n\
         dataset = \"dataset.tsv\"\n\
         lexicon = \"lexicon.tsv\"\n\
         lr_model = \"lr_model.json\"\n\
         image_embeddings = \"image.pfemb\"\n\
         vl_text_embeddings = \"vl_text.pfemb\"\n\
         m3_embeddings = \"m3.pfemb\"\n\
         \n\
         [ablation]\n\
         rewrite = [true, false]\n\
         aggregators = [\"borda\", \"reciprocal_rank\"]\n"
    )
}

/// Writes every file in [`FILES`] to `dir`.
pub fn generate(dir: &Path) -> polyframe::Result<()> {
    let fx = build();
    fs::create_dir_all(dir).map_err(|e| polyframe::Error::Io {
        path: dir.into(),
        source: e,
    })?;
    let write = |name: &str, text: &str| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| polyframe::Error::Io { path, source: e })
    };
    write_tsv(&fx.dataset, &Schema::default(), &dir.join("dataset.tsv"))?;

    let mut lex = String::from("language\tidiom\tparaphrase\tdefinition\tfewshot\n");
    for (lang, e) in &fx.lexicon {
        lex.push_str(&format!(
            "{lang}\t{}\t{}\t{}\t{}\n",
            e.idiom, e.paraphrase, e.definition, e.fewshot
        ));
    }
    write("lexicon.tsv", &lex)?;

    write_embeddings(&fx.image, &dir.join("image.pfemb"))?;
    write_embeddings(&fx.vl_text, &dir.join("vl_text.pfemb"))?;
    write_embeddings(&fx.m3, &dir.join("m3.pfemb"))?;

    let training: Vec<(Vec<f64>, SentenceType)> = fx
        .dataset
        .instances
        .iter()
        .map(|i| {
            let f = fx.m3.get(&text_key(&feature_text(&i.sentence, &i.compound))).unwrap();
            (f.iter().map(|&x| f64::from(x)).collect(), i.gold_sentence_type.unwrap())
        })
        .collect();
    let model = train_lr(&training, &TrainParams::default(), "dataset.tsv")?;
    model.save(&dir.join("lr_model.json"))?;

    for variant in ["improved", "text_only", "baseline"] {
        write(&format!("{variant}.toml"), &config(variant))?;
    }
    Ok(())
}

/// Instances per language as constructed.
pub fn language_counts() -> BTreeMap<String, usize> {
    LANGUAGES.iter().map(|l| (l.to_string(), PER_LANGUAGE)).collect()
}
