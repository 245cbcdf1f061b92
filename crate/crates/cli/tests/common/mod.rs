#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use unitail_core::dataset::{FeatureFile, FeatureRecord, StoredWord};
use unitail_core::matching::{add_pe, Gallery, GalleryEntry, QueryRecord};

pub fn unitail(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unitail"))
        .args(args)
        .env_remove("UNITAIL_THREADS")
        .output()
        .expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Two images. Image A has gts at [0,10]² and [20,30]×[0,10]; image B has
/// one at [0,10]². Detections: an exact hit on A (0.9), A's second gt
/// shifted right by 2 (0.8, IoU 2/3), B's gt shifted by 1.25 (0.7,
/// IoU 7/9), and a stray box on B (0.6).
pub const MICRO_GT: &str = r#"{
  "images": [{"id": "A", "width": 100, "height": 100}, {"id": "B", "width": 100, "height": 100}],
  "annotations": [
    {"image_id": "A", "quad": [0, 0, 10, 0, 10, 10, 0, 10]},
    {"image_id": "A", "quad": [20, 0, 30, 0, 30, 10, 20, 10]},
    {"image_id": "B", "quad": [0, 0, 10, 0, 10, 10, 0, 10]}
  ]
}"#;

pub const MICRO_DET: &str = r#"[
  {"image_id": "A", "quad": [0, 0, 10, 0, 10, 10, 0, 10], "score": 0.9},
  {"image_id": "A", "quad": [22, 0, 32, 0, 32, 10, 22, 10], "score": 0.8},
  {"image_id": "B", "quad": [1.25, 0, 11.25, 0, 11.25, 10, 1.25, 10], "score": 0.7},
  {"image_id": "B", "quad": [50, 50, 60, 50, 60, 60, 50, 60], "score": 0.6}
]"#;

pub fn write_micro(dir: &Path) -> (PathBuf, PathBuf) {
    let (g, d) = (dir.join("gt.json"), dir.join("det.json"));
    std::fs::write(&g, MICRO_GT).unwrap();
    std::fs::write(&d, MICRO_DET).unwrap();
    (g, d)
}

const WORD_DIM: usize = 16;

fn words(first: usize) -> Vec<StoredWord> {
    [(first, (0.3, 0.4)), (first + 1, (0.7, 0.6))]
        .into_iter()
        .map(|(k, center)| {
            let mut vector = vec![0.0f32; WORD_DIM];
            vector[k] = 4.0;
            StoredWord { center, vector }
        })
        .collect()
}

fn gallery_visual(i: usize) -> Vec<f32> {
    let mut v = vec![0.0f32; 6];
    match i {
        0 => v[0] = 1.0,
        1 => (v[0], v[1]) = (0.98, 0.199),
        2 => v[2] = 1.0,
        3 => (v[2], v[3]) = (0.98, 0.199),
        4 => v[4] = 1.0,
        _ => v[5] = 1.0,
    }
    v
}

/// Six categories forming two visually confusable pairs (c0/c1, c2/c3)
/// plus two distinct ones. Every category owns two words.
///
/// Ten queries: q-hard-1 looks exactly like c0 but carries c1's words,
/// q-hard-3 looks like c2 but carries c3's words; the other eight copy
/// their category's visual vector (two with slight noise) and words.
/// Visual matching alone gets 8/10.
pub fn matching_fixture() -> (FeatureFile, FeatureFile, BTreeMap<String, String>) {
    let gallery = FeatureFile {
        d: WORD_DIM,
        records: (0..6)
            .map(|i| FeatureRecord {
                product_id: format!("c{i}"),
                visual: gallery_visual(i),
                words: words(2 * i),
            })
            .collect(),
    };

    let mut records = Vec::new();
    let mut labels = BTreeMap::new();
    let mut push = |id: String, visual: Vec<f32>, cat: usize| {
        records.push(FeatureRecord {
            product_id: id.clone(),
            visual,
            words: words(2 * cat),
        });
        labels.insert(id, format!("c{cat}"));
    };
    push("q-hard-1".into(), gallery_visual(0), 1);
    push("q-hard-3".into(), gallery_visual(2), 3);
    for i in 0..6 {
        push(format!("q-easy-{i}"), gallery_visual(i), i);
    }
    push("q-noisy-4".into(), vec![0.0, 0.05, 0.0, 0.0, 1.0, 0.0], 4);
    push("q-noisy-5".into(), vec![0.05, 0.0, 0.0, 0.0, 0.0, 1.0], 5);

    (gallery, FeatureFile { d: WORD_DIM, records }, labels)
}

/// In-memory form of [`matching_fixture`], with positional encodings added.
pub fn matching_fixture_core() -> (Gallery, Vec<QueryRecord>) {
    let (g, q, labels) = matching_fixture();
    let gallery = Gallery::new(
        g.records
            .iter()
            .map(|r| GalleryEntry {
                category_id: r.product_id.clone(),
                visual: r.visual_f64(),
                texts: add_pe(&r.sequence().unwrap()).unwrap(),
            })
            .collect(),
    )
    .unwrap();
    let queries = q
        .records
        .iter()
        .map(|r| QueryRecord {
            product_id: r.product_id.clone(),
            visual: r.visual_f64(),
            texts: add_pe(&r.sequence().unwrap()).unwrap(),
            truth: Some(labels[&r.product_id].clone()),
        })
        .collect();
    (gallery, queries)
}

pub const T_GRID: [f64; 4] = [0.0, 0.01, 0.05, 0.1];
pub const W_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];
