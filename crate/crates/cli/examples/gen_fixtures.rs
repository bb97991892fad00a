//! Regenerates the offline fixture corpus under `fixtures/`.
//!
//!     cargo run -p skillvid-cli --example gen_fixtures -- fixtures
//!
//! Output is a pure function of the constants below, so rerunning it
//! reproduces the checked-in files byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use skillvid_core::harvest::{harvest_pair, HarvestOptions};
use skillvid_core::querygen::{generate_queries, SearchQuery};
use skillvid_core::source::{FixtureFile, FixturePage, FixtureSource, SourceConfig};
use skillvid_core::store::{write_jsonl, write_pairs_csv};
use skillvid_core::{Label, LabelRecord, TitleSkillPair};

const PAIRS: &[(&str, &str)] = &[
    ("Executive Assistant", "Time Management"),
    ("Administrative Assistant", "Time Management"),
    ("Office Manager", "Time Management"),
    ("Recruiter", "Interview Scheduling"),
    ("Administrative Specialist", "Spreadsheets"),
    ("Forklift Operator", "Pallet Jack Operation"),
    ("Software Engineer", "Unit Testing"),
    ("Data Analyst", "SQL"),
    ("Nurse", "Patient Care"),
    ("Accountant", "Bookkeeping"),
    ("Sales Representative", "Cold Calling"),
    ("Project Manager", "Risk Management"),
    ("Graphic Designer", "Typography"),
    ("Electrician", "Wiring"),
    ("Customer Service Representative", "Conflict Resolution"),
    ("Marketing Coordinator", "Social Media Marketing"),
    ("Warehouse Associate", "Inventory Control"),
    ("Teacher", "Classroom Management"),
    ("Web Developer", "JavaScript"),
    ("Financial Analyst", "Financial Modeling"),
    ("HR Generalist", "Onboarding"),
    ("Chef", "Knife Skills"),
    ("Paralegal", "Legal Research"),
    ("Mechanic", "Brake Repair"),
    ("Pharmacy Technician", "Medication Dispensing"),
];

const RELEVANT_TITLES: &[&str] = &[
    "{skill} tips for {title}s",
    "How to master {skill}",
    "{skill} tutorial for beginners",
    "{skill} explained in 10 minutes",
    "Improve your {skill} at work",
    "{skill} training course part 1",
    "The complete guide to {skill}",
    "{skill} skills every {title} needs",
];

const RELEVANT_DESCS: &[&str] = &[
    "In this lesson we walk through {skill} step by step with practical examples you can use on the job.",
    "Learn {skill} fundamentals, common mistakes to avoid, and exercises to practice {skill} every day.",
    "A practical {skill} training session for {title}s who want to build confidence quickly.",
    "This {skill} course covers the basics and a few advanced techniques. Subscribe for more training.",
];

const OFF_TOPIC_TITLES: &[&str] = &[
    "Day in the life of a {title}",
    "{title} interview questions and answers",
    "Funny office fails compilation",
    "Top 10 productivity apps this year",
    "My morning routine vlog",
    "{title} salary: how much do they really make",
    "Unboxing my new laptop",
    "Why I quit my job as a {title}",
];

const OFF_TOPIC_DESCS: &[&str] = &[
    "Welcome back to the channel! Today I share a few stories from my week. Like and subscribe.",
    "Everything you want to know about working as a {title}, including pay, hours and culture.",
    "A compilation of funny moments recorded by viewers. Send us your clips for the next video.",
    "Quick review of gadgets and apps I use every day. Links in the description.",
];

fn fill(template: &str, pair: &TitleSkillPair) -> String {
    template.replace("{skill}", &pair.skill).replace("{title}", &pair.job_title)
}

struct Gen {
    rng: ChaCha8Rng,
    fetched_at: DateTime<Utc>,
    videos: BTreeMap<String, Value>,
    /// (pair index, video id) -> latent relevance
    truth: BTreeMap<(usize, String), bool>,
}

impl Gen {
    fn video_id(&mut self) -> String {
        const ALPHABET: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789-_";
        (0..11).map(|_| *ALPHABET.choose(&mut self.rng).unwrap() as char).collect()
    }

    fn published(&mut self) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2008, 1, 1, 0, 0, 0).unwrap() + Duration::days(self.rng.gen_range(0..4100))
    }

    #[allow(clippy::too_many_arguments)]
    fn record(&mut self, id: &str, title: String, desc: String, views: u64, likes: u64, language: &str, category: &str) {
        let published = self.published();
        let rec = json!({
            "title": title,
            "description": desc,
            "published_at": published,
            "duration_s": self.rng.gen_range(45..2400),
            "view_count": views,
            "like_count": likes,
            "dislike_count": likes / self.rng.gen_range(8..40),
            "comment_count": likes / self.rng.gen_range(3..15),
            "category_id": category,
            "language": language,
            "fetched_at": self.fetched_at,
        });
        self.videos.insert(id.to_string(), rec);
    }

    /// Random video for `pair` with latent relevance drawn at 40%.
    fn video_for(&mut self, pi: usize, pair: &TitleSkillPair) -> String {
        let id = self.video_id();
        let relevant = self.rng.gen_bool(0.40);
        let (titles, descs) = if relevant {
            (RELEVANT_TITLES, RELEVANT_DESCS)
        } else {
            (OFF_TOPIC_TITLES, OFF_TOPIC_DESCS)
        };
        let title = fill(titles.choose(&mut self.rng).unwrap(), pair);
        let desc = fill(descs.choose(&mut self.rng).unwrap(), pair);
        // statistics are deliberately unrelated to relevance
        let views = 10f64.powf(self.rng.gen_range(1.5..6.5)) as u64;
        let likes = (views as f64 * self.rng.gen_range(0.001..0.06)) as u64;
        self.record(&id, title, desc, views, likes, "en", "27");
        self.truth.insert((pi, id.clone()), relevant);
        id
    }

    /// A video that the source filters out (wrong language or category).
    fn filtered_video(&mut self, pair: &TitleSkillPair) -> String {
        let id = self.video_id();
        let (lang, cat) = if self.rng.gen_bool(0.5) { ("es", "27") } else { ("en", "22") };
        self.record(&id, fill("{skill} en 5 minutos", pair), String::new(), 900, 12, lang, cat);
        id
    }
}

fn pages(ids: &[String], sizes: &[usize], tag: &str) -> Vec<FixturePage> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &n) in sizes.iter().enumerate() {
        let end = (start + n).min(ids.len());
        let last = i + 1 == sizes.len() || end == ids.len();
        out.push(FixturePage {
            ids: ids[start..end].to_vec(),
            next: (!last).then(|| format!("{tag}p{}", i + 2)),
        });
        start = end;
        if last {
            break;
        }
    }
    out
}

fn slug(text: &str) -> String {
    let s: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    let s = s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-");
    if text.starts_with('"') {
        format!("quoted-{s}")
    } else {
        s
    }
}

fn main() {
    let out: PathBuf = std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()).into();
    let search_dir = out.join("search");
    let _ = fs::remove_dir_all(&search_dir);
    fs::create_dir_all(&search_dir).unwrap();

    let pairs: Vec<TitleSkillPair> = PAIRS.iter().map(|(t, s)| TitleSkillPair::new(t, s).unwrap()).collect();
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(2019),
        fetched_at: Utc.with_ymd_and_hms(2019, 6, 1, 0, 0, 0).unwrap(),
        videos: BTreeMap::new(),
        truth: BTreeMap::new(),
    };
    // query text -> pages; the videos map is attached per file below
    let mut files: BTreeMap<String, Vec<FixturePage>> = BTreeMap::new();

    for (pi, pair) in pairs.iter().enumerate() {
        let [q1, q2, q3] = generate_queries(pair).map(|q: SearchQuery| q.text);
        match (pair.job_title.as_str(), pair.skill.as_str()) {
            ("Executive Assistant", _) => {
                // The worked harvest example: form 1 {v1..v5} over two pages
                // (the second repeating v2 and v5), form 2 {v4..v8}, form 3
                // {v6, v7, v9}; nine unique ids in total.
                let v: Vec<String> = (1..=9).map(|i| format!("v{i}")).collect();
                for (i, id) in v.iter().enumerate() {
                    let relevant = [true, false, true, true, false, true, false, false, true][i];
                    let title = if relevant {
                        fill(RELEVANT_TITLES[i % RELEVANT_TITLES.len()], pair)
                    } else {
                        fill(OFF_TOPIC_TITLES[i % OFF_TOPIC_TITLES.len()], pair)
                    };
                    let desc = fill(if relevant { RELEVANT_DESCS[i % 4] } else { OFF_TOPIC_DESCS[i % 4] }, pair);
                    let (views, likes) = if i == 0 { (126, 1) } else { (1000 * (i as u64 + 3), 20 * i as u64) };
                    g.record(id, title, desc, views, likes, "en", "27");
                    g.truth.insert((pi, id.clone()), relevant);
                }
                files.insert(q1, vec![
                    FixturePage { ids: v[0..5].to_vec(), next: Some("p2".into()) },
                    FixturePage { ids: vec![v[1].clone(), v[4].clone()], next: None },
                ]);
                files.insert(q2, vec![
                    FixturePage { ids: vec![v[3].clone(), v[4].clone(), v[5].clone()], next: Some("p2".into()) },
                    FixturePage { ids: vec![v[6].clone(), v[7].clone()], next: None },
                ]);
                files.insert(q3, vec![FixturePage { ids: vec![v[5].clone(), v[6].clone(), v[8].clone()], next: None }]);
            }
            (_, "Time Management") => {
                // Shares the form-1 file with the pair above; the same
                // videos are judged afresh for this title.
                for i in 1..=5 {
                    let id = format!("v{i}");
                    let rel = g.rng.gen_bool(0.5);
                    g.truth.insert((pi, id), rel);
                }
                let own: Vec<String> = (0..7).map(|_| g.video_for(pi, pair)).collect();
                files.insert(q2, pages(&own[..4], &[2, 2], "b"));
                files.insert(q3, pages(&own[4..], &[3], "c"));
            }
            ("Forklift Operator", _) => {
                // Thin supply: four unique videos across all forms.
                let v: Vec<String> = (0..4).map(|_| g.video_for(pi, pair)).collect();
                files.insert(q1, vec![FixturePage { ids: vec![v[0].clone(), v[1].clone()], next: None }]);
                files.insert(q2, vec![FixturePage { ids: vec![v[1].clone(), v[2].clone()], next: None }]);
                files.insert(q3, vec![FixturePage { ids: vec![v[3].clone(), v[0].clone()], next: None }]);
            }
            _ => {
                let n = g.rng.gen_range(10..=14);
                let mut pool: Vec<String> = (0..n).map(|_| g.video_for(pi, pair)).collect();
                if pair.job_title == "Recruiter" {
                    // Low-statistics but on-topic.
                    let id = g.video_id();
                    g.record(
                        &id,
                        "Scheduling an Interview".into(),
                        "Step-by-step tutorial on how to schedule an interview with candidates and hiring managers.".into(),
                        126,
                        1,
                        "en",
                        "27",
                    );
                    g.truth.insert((pi, id.clone()), true);
                    pool.insert(0, id);
                }
                if pair.job_title == "Administrative Specialist" {
                    // Popular but off-topic for the skill.
                    let id = g.video_id();
                    g.record(
                        &id,
                        "5 Excel Questions Asked in Job Interviews".into(),
                        "Top 5 Excel Interview Questions. These MS Excel interview questions and answers help you prepare.".into(),
                        1_150_000,
                        18_400,
                        "en",
                        "27",
                    );
                    g.truth.insert((pi, id.clone()), false);
                    pool.insert(0, id);
                }
                let filtered = g.filtered_video(pair);
                let missing = format!("gone{pi:02}xxxxx");
                let a = g.rng.gen_range(4..=6);
                let mut f1: Vec<String> = pool[..a].to_vec();
                f1.insert(g.rng.gen_range(0..=f1.len()), filtered);
                let mut f2: Vec<String> = pool[a - 2..a + 3].to_vec();
                f2.insert(1, missing);
                let f3: Vec<String> = pool[a + 1..].to_vec();
                files.insert(q1, pages(&f1, &[3, 4], "a"));
                files.insert(q2, pages(&f2, &[4, 3], "b"));
                files.insert(q3, pages(&f3, &[3, 3, 3, 3], "c"));
            }
        }
    }

    for (query, pages) in &files {
        let ids: std::collections::BTreeSet<&String> = pages.iter().flat_map(|p| &p.ids).collect();
        let videos: BTreeMap<String, Value> = ids
            .into_iter()
            .filter_map(|id| g.videos.get(id).map(|v| (id.clone(), v.clone())))
            .collect();
        let file = FixtureFile { query: query.clone(), pages: pages.clone(), videos };
        let mut text = serde_json::to_string_pretty(&file).unwrap();
        text.push('\n');
        fs::write(search_dir.join(format!("{}.json", slug(query))), text).unwrap();
    }

    write_pairs_csv(&out.join("pairs.csv"), &pairs).unwrap();
    write_labels(&out, &pairs, &search_dir, &mut g);
    println!("wrote {} query files for {} pairs to {}", files.len(), pairs.len(), out.display());
}

/// Labels every harvested candidate except roughly one in ten, with 8%
/// curator disagreement against the latent relevance and a few relabels.
fn write_labels(out: &Path, pairs: &[TitleSkillPair], search_dir: &Path, g: &mut Gen) {
    let source = FixtureSource::load(search_dir, &SourceConfig::default()).unwrap();
    let base = Utc.with_ymd_and_hms(2019, 6, 3, 9, 0, 0).unwrap();
    let curators = ["curator-a", "curator-b", "curator-c"];
    let mut log = Vec::new();
    let mut minute = 0;
    for (pi, pair) in pairs.iter().enumerate() {
        let result = harvest_pair(pair, &source, HarvestOptions::default()).unwrap();
        for c in &result.candidates {
            if pi > 0 && g.rng.gen_bool(0.1) {
                continue;
            }
            let truth = g.truth[&(pi, c.video_id.clone())];
            let positive = if g.rng.gen_bool(0.08) { !truth } else { truth };
            minute += 1;
            log.push(LabelRecord {
                pair_id: pair.pair_id.clone(),
                video_id: c.video_id.clone(),
                label: Label::from_positive(positive),
                curator_id: curators.choose(&mut g.rng).unwrap().to_string(),
                labeled_at: base + Duration::minutes(minute),
            });
            if g.rng.gen_bool(0.04) {
                // a second opinion later in the week settles on the truth
                log.push(LabelRecord {
                    label: Label::from_positive(truth),
                    curator_id: "curator-lead".into(),
                    labeled_at: base + Duration::days(3) + Duration::minutes(minute),
                    ..log.last().unwrap().clone()
                });
            }
        }
    }
    write_jsonl(&out.join("labels.jsonl"), &log).unwrap();
}
