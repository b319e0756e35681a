//! Independent oracles and generators shared by the property and acceptance suites.
#![allow(dead_code)]

use rand::Rng;
use slowfast_core::frame::{patch_similarity, FrameClass, FrameKind, FrameRecord, SimilarityConfig};

/// Minimum bin count by exhaustive search with symmetry breaking.
pub fn optimal_bins(lengths: &[usize], capacity: usize) -> usize {
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut best = sorted.len();
    let mut bins = Vec::new();
    fn go(i: usize, items: &[usize], cap: usize, bins: &mut Vec<usize>, best: &mut usize) {
        if bins.len() >= *best {
            return;
        }
        if i == items.len() {
            *best = bins.len();
            return;
        }
        for b in 0..bins.len() {
            if bins[b] + items[i] <= cap {
                bins[b] += items[i];
                go(i + 1, items, cap, bins, best);
                bins[b] -= items[i];
            }
        }
        bins.push(items[i]);
        go(i + 1, items, cap, bins, best);
        bins.pop();
    }
    go(0, &sorted, capacity, &mut bins, &mut best);
    best
}

/// Minimum makespan by enumerating every assignment (new machines opened in order).
pub fn optimal_makespan(costs: &[f64], machines: usize) -> f64 {
    let mut loads = vec![0.0; machines];
    let mut best = f64::INFINITY;
    fn go(i: usize, costs: &[f64], loads: &mut [f64], opened: usize, best: &mut f64) {
        let cur = loads.iter().copied().fold(0.0, f64::max);
        if cur >= *best {
            return;
        }
        if i == costs.len() {
            *best = cur;
            return;
        }
        let limit = (opened + 1).min(loads.len());
        for m in 0..limit {
            loads[m] += costs[i];
            go(i + 1, costs, loads, opened.max(m + 1), best);
            loads[m] -= costs[i];
        }
    }
    go(0, costs, &mut loads, 0, &mut best);
    best
}

/// Replay the Slow/Fast rule frame by frame with direct pairwise comparisons.
pub fn replay_rule(frames: &[FrameRecord], cfg: &SimilarityConfig) -> Vec<FrameClass> {
    let mut out = vec![FrameClass {
        index: 0,
        kind: FrameKind::Slow,
        anchor_index: 0,
    }];
    let mut latest_slow = 0;
    for i in 1..frames.len() {
        let sim = patch_similarity(&frames[latest_slow], &frames[i], cfg).unwrap().unchanged_fraction;
        if sim > cfg.threshold {
            out.push(FrameClass {
                index: i,
                kind: FrameKind::Fast,
                anchor_index: latest_slow,
            });
        } else {
            latest_slow = i;
            out.push(FrameClass {
                index: i,
                kind: FrameKind::Slow,
                anchor_index: i,
            });
        }
    }
    out
}

/// Frame made of `blocks × blocks` flat color tiles.
pub fn tiled_frame(index: usize, ts: f64, side: usize, tiles: &[[u8; 3]]) -> FrameRecord {
    let blocks = (tiles.len() as f64).sqrt() as usize;
    let tile = side / blocks;
    let mut pixels = Vec::with_capacity(side * side * 3);
    for y in 0..side {
        for x in 0..side {
            let t = (y / tile).min(blocks - 1) * blocks + (x / tile).min(blocks - 1);
            pixels.extend_from_slice(&tiles[t]);
        }
    }
    FrameRecord::new(index, ts, side, side, pixels).unwrap()
}

/// A synthetic clip: random scenes with occasional cuts and small local edits.
pub fn random_clip<R: Rng>(rng: &mut R, n_frames: usize, side: usize) -> Vec<FrameRecord> {
    let blocks = 8;
    let random_tiles = |rng: &mut R| -> Vec<[u8; 3]> { (0..blocks * blocks).map(|_| rng.gen()).collect() };
    let mut tiles = random_tiles(rng);
    let mut frames = Vec::with_capacity(n_frames);
    let mut ts = 0.0;
    for i in 0..n_frames {
        if i > 0 {
            match rng.gen_range(0..10) {
                0 | 1 => tiles = random_tiles(rng),
                2..=5 => {
                    for _ in 0..rng.gen_range(1..=6) {
                        let k = rng.gen_range(0..tiles.len());
                        tiles[k] = rng.gen();
                    }
                }
                _ => {
                    // subtle drift: nudge a few tiles by a handful of levels
                    for _ in 0..rng.gen_range(0..4) {
                        let k = rng.gen_range(0..tiles.len());
                        for ch in tiles[k].iter_mut() {
                            *ch = ch.saturating_add(rng.gen_range(0..12));
                        }
                    }
                }
            }
        }
        frames.push(tiled_frame(i, ts, side, &tiles));
        ts += rng.gen_range(0.1..2.0);
    }
    frames
}

pub fn kinds_to_classes(kinds: &[FrameKind]) -> Vec<FrameClass> {
    let mut anchor = 0;
    kinds
        .iter()
        .enumerate()
        .map(|(i, &kind)| {
            if kind == FrameKind::Slow {
                anchor = i;
            }
            FrameClass {
                index: i,
                kind,
                anchor_index: anchor,
            }
        })
        .collect()
}

use slowfast_core::grounding::{shoelace, GroundingItem, Point, Polygon};

const WORD_CHARS: &[char] = &[
    'a', 'b', 'c', 'x', 'y', 'z', 'Q', 'R', '0', '7', '.', ',', '-', '\'', '!', '?', '(', ')', '[', ']', '|', '<', '>', 'é', '中', '文',
];

fn random_word<R: Rng>(rng: &mut R, max: usize) -> String {
    let n = rng.gen_range(1..=max);
    let mut s: String = (0..n).map(|_| WORD_CHARS[rng.gen_range(0..WORD_CHARS.len())]).collect();
    while s.contains("<|") {
        s = s.replace("<|", "<");
    }
    s
}

/// Free label text: no markup opener, may contain spaces and newlines.
fn random_label<R: Rng>(rng: &mut R) -> String {
    let words = rng.gen_range(0..4);
    let mut s = String::new();
    for i in 0..words {
        if i > 0 {
            s.push(if rng.gen_bool(0.1) { '\n' } else { ' ' });
        }
        s.push_str(&random_word(rng, 8));
    }
    s
}

/// Trimmed single-line caption.
fn random_caption<R: Rng>(rng: &mut R) -> String {
    let words = rng.gen_range(0..5);
    (0..words).map(|_| random_word(rng, 8)).collect::<Vec<_>>().join(" ")
}

fn random_point<R: Rng>(rng: &mut R) -> Point {
    [rng.gen_range(0..1000), rng.gen_range(0..1000)]
}

fn random_box<R: Rng>(rng: &mut R) -> [u16; 4] {
    let (a, b) = (rng.gen_range(0..1000u16), rng.gen_range(0..1000u16));
    let (c, d) = (rng.gen_range(0..1000u16), rng.gen_range(0..1000u16));
    [a.min(b), c.min(d), a.max(b), c.max(d)]
}

fn random_polygon<R: Rng>(rng: &mut R) -> Polygon {
    loop {
        let n = rng.gen_range(3..8);
        let mut p: Polygon = (0..n).map(|_| random_point(rng)).collect();
        match shoelace(&p) {
            0 => continue,
            a if a < 0 => p.reverse(),
            _ => {}
        }
        return p;
    }
}

fn some<R: Rng, T>(rng: &mut R, f: impl Fn(&mut R) -> T) -> Vec<T> {
    (0..rng.gen_range(1..4)).map(|_| f(rng)).collect()
}

fn random_time<R: Rng>(rng: &mut R) -> f64 {
    match rng.gen_range(0..3) {
        0 => rng.gen_range(0..3000) as f64 / 10.0,
        1 => rng.gen_range(0.0..10_000.0),
        _ => rng.gen_range(0..100) as f64,
    }
}

/// A valid grounding item of a random variant.
pub fn random_grounding_item<R: Rng>(rng: &mut R) -> GroundingItem {
    let object = |rng: &mut R| rng.gen_bool(0.5).then(|| random_label(rng));
    match rng.gen_range(0..7) {
        0 => GroundingItem::Points {
            object: object(rng),
            points: some(rng, random_point),
        },
        1 => GroundingItem::Boxes {
            object: object(rng),
            boxes: some(rng, random_box),
        },
        2 => GroundingItem::Polygons {
            object: object(rng),
            polygons: some(rng, random_polygon),
        },
        3 => GroundingItem::OcrBoxes {
            text: random_label(rng),
            boxes: some(rng, random_box),
        },
        4 => GroundingItem::OcrPolygons {
            text: random_label(rng),
            polygons: some(rng, random_polygon),
        },
        5 => {
            let (a, b) = (random_time(rng), random_time(rng));
            GroundingItem::ClipTime {
                start_s: a.min(b),
                end_s: a.max(b),
                caption: random_caption(rng),
            }
        }
        _ => GroundingItem::ObjectRef { object: random_label(rng) },
    }
}

use slowfast_core::packing::{Modality, SequenceItem};

/// Random items with lengths in `1..=capacity` and integer costs.
pub fn random_items<R: Rng>(rng: &mut R, n: usize, capacity: usize) -> Vec<SequenceItem> {
    (0..n)
        .map(|i| SequenceItem {
            id: format!("s{i:03}"),
            length_tokens: rng.gen_range(1..=capacity),
            modality: Modality::ALL[rng.gen_range(0..3)],
            est_cost: rng.gen_range(1..=100) as f64,
        })
        .collect()
}
