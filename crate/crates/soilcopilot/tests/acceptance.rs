//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Value};
use soilcopilot::copilot::build_tool_registry;
use soilcopilot::corpus::{load_corpus_dir, load_index};
use soilcopilot::scene::SceneConfig;
use soilcopilot::store::AgroStore;
use soilcopilot_core::coherence::{estimate_coherence, AcquisitionPair, Window};
use soilcopilot_core::knowledge::Topic;
use soilcopilot_core::pipeline::detect_tillage;
use soilcopilot_core::soc::aggregate_soc_rasters;
use soilcopilot_core::synth::{generate_scene, pair_index_for};
use soilcopilot_core::tillage::{bare_soil_mask, compute_bsi, crop_crosstab, DetectionParams};
use soilcopilot_core::{BandRaster, Mask, SlcImage, TillageLabel, TillageMap, Timestamp};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn gaussian_slc(rng: &mut ChaCha8Rng, w: usize, h: usize, day: i64) -> SlcImage {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let samples = (0..w * h)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect();
    SlcImage::new(w, h, 5.0, samples, Timestamp::from_days(day)).unwrap()
}

fn pair(a: SlcImage, b: SlcImage) -> AcquisitionPair {
    AcquisitionPair::new(Arc::new(a), Arc::new(b), 0.0, "p").unwrap()
}

fn coherence_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = gaussian_slc(&mut rng, 256, 256, 0);
    let b = SlcImage::new(256, 256, 5.0, a.samples().to_vec(), Timestamp::from_days(12)).unwrap();
    let p = pair(a, b);
    let start = Instant::now();
    let map = estimate_coherence(&p, Window::new(10, 20)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = map.magnitude.values().iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    ensure(map.magnitude.valid_count() == map.magnitude.len(), || "nodata cells present".into())?;
    ensure(worst <= 1e-6, || format!("max |gamma - 1| = {worst:e}"))?;
    within(elapsed, Duration::from_secs(1))?;
    Ok(format!("{} cells, max |gamma - 1| = {worst:.1e}, {elapsed:?}", map.magnitude.len()))
}

fn coherence_noise_floor() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    // 100 x 100 full windows of 10 x 20 samples
    let (w, h) = (1000, 2000);
    let p = pair(gaussian_slc(&mut rng, w, h, 0), gaussian_slc(&mut rng, w, h, 12));
    let map = estimate_coherence(&p, Window::new(10, 20)).map_err(|e| e.to_string())?;
    let mut v: Vec<f64> = map.magnitude.values().to_vec();
    ensure(v.len() >= 10_000 && v.iter().all(|x| x.is_finite()), || format!("{} cells", v.len()))?;
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.sort_by(f64::total_cmp);
    let p99 = v[(0.99 * (v.len() - 1) as f64).round() as usize];
    let elapsed = start.elapsed();
    ensure((0.04..=0.12).contains(&mean), || format!("mean {mean:.4} outside [0.04, 0.12]"))?;
    ensure(p99 < 0.25, || format!("p99 {p99:.4} >= 0.25"))?;
    within(elapsed, Duration::from_secs(10))?;
    Ok(format!("{} cells, mean {mean:.4}, p99 {p99:.4}, {elapsed:?}", v.len()))
}

fn coherence_scaling() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(10..60), rng.random_range(20..80));
        let a = gaussian_slc(&mut rng, w, h, 0);
        let b = gaussian_slc(&mut rng, w, h, 12);
        let mut scalar = || loop {
            let c = Complex64::from_polar(
                10f64.powf(rng.random_range(-3.0..3.0)),
                rng.random_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            if c.norm() > 0.0 {
                break c;
            }
        };
        let (ca, cb) = (scalar(), scalar());
        let window = Window::new(rng.random_range(1..12), rng.random_range(1..24));
        let base = estimate_coherence(&pair(a.clone(), b.clone()), window).map_err(|e| e.to_string())?;
        let scaled = estimate_coherence(&pair(a.scaled(ca), b.scaled(cb)), window).map_err(|e| e.to_string())?;
        for (x, y) in base.magnitude.values().iter().zip(scaled.magnitude.values()) {
            worst = worst.max((x - y).abs() / x.abs().max(1e-300));
        }
    }
    ensure(worst <= 1e-9, || format!("max relative difference {worst:e}"))?;
    Ok(format!("100 pairs, max relative difference {worst:.1e}"))
}

fn synthetic_field_oracle() -> Check {
    let config = SceneConfig::from_file(&fixtures().join("scenes/four_fields.json")).map_err(|e| e.to_string())?;
    let spec = config.to_spec().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let scene = generate_scene(&spec).map_err(|e| e.to_string())?;
    let out = detect_tillage(&scene.acquisitions, &scene.optical, spec.window, &DetectionParams::default(), 2019)
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let times: Vec<Timestamp> = spec.acquisitions.iter().map(|a| a.0).collect();
    let (gw, gh) = (config.grid.width, config.grid.height);
    let mut expected = Vec::new();
    let mut detected = Vec::new();
    for y in 0..gh {
        for x in 0..gw {
            let i = y * gw + x;
            let owner = config
                .fields
                .iter()
                .rposition(|f| (f.bbox[0]..f.bbox[2]).contains(&x) && (f.bbox[1]..f.bbox[3]).contains(&y))
                .map(|k| &config.fields[k]);
            let injected = owner.is_some_and(|f| {
                f.till_date.is_some()
                    && !f.persistent_change
                    && f.bbox[2] - f.bbox[0] >= 3
                    && f.bbox[3] - f.bbox[1] >= 3
            });
            if injected {
                expected.push((x, y));
            }
            if out.map.labels()[i] == TillageLabel::Till {
                detected.push((x, y));
                if let (Some(f), Some(event)) = (owner, out.map.event_times()[i]) {
                    let till = soilcopilot::formats::parse_time(f.till_date.as_deref().unwrap_or_default())
                        .map_err(|e| e.to_string())?;
                    let k_true = pair_index_for(&times, till).ok_or("till date outside the stack")?;
                    let k_got = times.iter().position(|t| *t == event).ok_or("event time is not an acquisition")? - 1;
                    ensure(k_got.abs_diff(k_true) <= 1, || {
                        format!("cell ({x},{y}) event pair {k_got}, truth {k_true}")
                    })?;
                }
            }
            if owner.is_some_and(|f| f.persistent_change) {
                ensure(out.map.labels()[i] == TillageLabel::NoTill, || {
                    format!("persistent cell ({x},{y}) not no_till")
                })?;
            }
            if owner.is_some_and(|f| f.name == "field_1") {
                ensure(out.map.labels()[i] == TillageLabel::NoTill, || format!("clean cell ({x},{y}) not no_till"))?;
            }
        }
    }
    ensure(expected == detected, || {
        format!("till set mismatch: expected {} cells, got {}", expected.len(), detected.len())
    })?;
    let road = config.fields.iter().find(|f| f.name == "road").ok_or("no road field")?;
    let road_raw = out.raw.label(road.bbox[0], road.bbox[1]);
    ensure(road_raw == TillageLabel::Till, || "road not detected before removal".into())?;
    within(elapsed, Duration::from_secs(5))?;
    Ok(format!("{} till cells match, road removed, {elapsed:?}", detected.len()))
}

fn bsi_exactness() -> Check {
    let dir = fixtures().join("rasters");
    let band = |n: &str| soilcopilot::formats::read_band(&dir.join(format!("bsi_{n}"))).map(|(r, _)| r);
    let bsi = compute_bsi(
        &band("swir1").map_err(|e| e.to_string())?,
        &band("blue").map_err(|e| e.to_string())?,
        &band("red").map_err(|e| e.to_string())?,
        &band("nir").map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let want = [2.0 / 9.0, 0.0, -0.375];
    let got = bsi.raster().values();
    for (g, w) in got.iter().zip(want) {
        ensure((g - w).abs() <= 1e-9, || format!("bsi {g} != {w}"))?;
    }
    ensure((got[0] - 0.222).abs() < 5e-4, || format!("pixel (0,0) = {}", got[0]))?;
    let bare = bare_soil_mask(&bsi, 0.06);
    ensure(bare.bits() == [true, false, false], || format!("bare split {:?}", bare.bits()))?;
    Ok(format!("values {got:?}, bare {:?}", bare.bits()))
}

fn crosstab_conservation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let names: BTreeMap<i64, String> = (1..=6).map(|c| (c, format!("crop{c}"))).collect();
    let (mut worst_sum, mut worst_frac) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (w, h) = (rng.random_range(1..30), rng.random_range(1..30));
        let labels: Vec<TillageLabel> = (0..w * h)
            .map(|_| match rng.random_range(0..10) {
                0 => TillageLabel::Nodata,
                1..=4 => TillageLabel::Till,
                _ => TillageLabel::NoTill,
            })
            .collect();
        let codes: Vec<f64> =
            (0..w * h).map(|_| if rng.random_bool(0.05) { f64::NAN } else { rng.random_range(1..=7) as f64 }).collect();
        let map = TillageMap::new(w, h, 30.0, 2019, labels.clone()).map_err(|e| e.to_string())?;
        let crops = BandRaster::new(w, h, 30.0, codes.clone()).map_err(|e| e.to_string())?;
        let tab = crop_crosstab(&map, &crops, &names).map_err(|e| e.to_string())?;

        let (mut till, mut total) = (0u64, 0u64);
        for (l, c) in labels.iter().zip(&codes) {
            if c.is_nan() || *l == TillageLabel::Nodata {
                continue;
            }
            total += 1;
            till += u64::from(*l == TillageLabel::Till);
        }
        let mut weighted = 0.0;
        let mut pixels = 0u64;
        for r in &tab.rows {
            worst_sum = worst_sum.max((r.till_pct + r.no_till_pct - 100.0).abs());
            weighted += r.till_pct / 100.0 * r.pixels() as f64;
            pixels += r.pixels();
        }
        ensure(pixels == total, || format!("rows hold {pixels} pixels, tile has {total}"))?;
        if total > 0 {
            worst_frac = worst_frac.max((weighted / pixels as f64 - till as f64 / total as f64).abs());
        }
    }
    ensure(worst_sum <= 0.01, || format!("row sum off by {worst_sum:e}"))?;
    ensure(worst_frac <= 1e-6, || format!("aggregate till fraction off by {worst_frac:e}"))?;
    Ok(format!("1000 trials, max row-sum error {worst_sum:.1e}, max fraction error {worst_frac:.1e}"))
}

fn ingested_store() -> Result<(tempfile::TempDir, AgroStore), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut store = AgroStore::open(dir.path()).map_err(|e| e.to_string())?;
    store.ingest_dir(&fixtures().join("county")).map_err(|e| e.to_string())?;
    Ok((dir, store))
}

fn fixture_exactness() -> Check {
    let (_dir, store) = ingested_store()?;
    let index = load_index(&fixtures().join("corpus")).map_err(|e| e.to_string())?;
    let reg = build_tool_registry(Arc::new(store), Some(Arc::new(index)));
    let soc = [
        ("San Joaquin", 3.886, 2.644),
        ("Merced", 2.85, 2.61),
        ("Sonoma", 1.79, 2.06),
        ("Monterey", 2.39, 2.00),
        ("Tulare", 5.58, 5.48),
        ("Riverside", 2.99, 0.94),
        ("Marin", 1.96, 1.92),
    ];
    for (county, a, b) in soc {
        let v = reg.invoke("soc_prediction", &json!({ "county": county })).map_err(|e| e.message)?;
        ensure(v == json!({ "soc_2016_pct": a, "soc_2023_pct": b }), || format!("{county}: {v}"))?;
    }
    for (county, t) in [("Monterey", 0.0), ("Tulare", 1.0)] {
        let v = reg.invoke("tillage_scale", &json!({ "county": county })).map_err(|e| e.message)?;
        ensure(v["tillage_scale"] == json!(t), || format!("{county} tillage {v}"))?;
    }
    let d = reg.invoke("drought_conditions", &json!({ "county": "San Joaquin" })).map_err(|e| e.message)?;
    let has = |s: i64, e: i64, c: &str| {
        d["events"]
            .as_array()
            .into_iter()
            .flatten()
            .any(|x| x["year_start"] == s && x["year_end"] == e && x["category"] == c)
    };
    ensure(has(2013, 2016, "D3") && has(2022, 2022, "D3"), || format!("drought {d}"))?;
    let f = reg.invoke("wildfire_incidents", &json!({ "county": "Sonoma" })).map_err(|e| e.message)?;
    ensure(f.to_string().contains("Kincade Fire"), || format!("wildfire {f}"))?;
    let c = reg.invoke("crop_types_and_years", &json!({ "county": "Tulare" })).map_err(|e| e.message)?;
    ensure(c["years"][0]["year"] == 2019 && c.to_string().contains("Cotton"), || format!("crops {c}"))?;
    let s = reg
        .invoke("support_arguments", &json!({ "query": "no-till carbon", "topic": "practices" }))
        .map_err(|e| e.message)?;
    ensure(s["hits"].as_array().is_some_and(|h| !h.is_empty()), || format!("support {s}"))?;
    Ok("7 counties SOC, Monterey 0.0 / Tulare 1.0 tillage, San Joaquin 2013-2016 D3, all six tools answer".into())
}

fn run_ask(data: &Path, script: &Path, prompt: &str) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_soilcopilot"))
        .arg("--data-dir")
        .arg(data)
        .arg("--corpus-dir")
        .arg(fixtures().join("corpus"))
        .args(["ask", prompt, "--persona", "agronomist", "--mock"])
        .arg(script)
        .env_remove("CHAT_ENDPOINT_URL")
        .env_remove("SOILCOPILOT_CONFIG")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || format!("ask failed: {}", String::from_utf8_lossy(&out.stderr)))?;
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn agent_determinism() -> Check {
    let (dir, store) = ingested_store()?;
    store.save(dir.path()).map_err(|e| e.to_string())?;
    let script = fixtures().join("merced_sonoma.json");
    let runs: Vec<String> =
        (0..5).map(|_| run_ask(dir.path(), &script, "Compare SOC in Merced vs Sonoma")).collect::<Result<_, _>>()?;
    ensure(runs.iter().all(|r| r == &runs[0]), || "transcripts differ between runs".into())?;
    let t: Value = serde_json::from_str(&runs[0]).map_err(|e| e.to_string())?;
    let turns = t["turns"].as_array().ok_or("no turns")?;
    let mut pairs = 0;
    for w in turns.windows(2) {
        if w[0]["kind"] == "tool_call" && w[1]["kind"] == "tool_result" && w[0]["call_id"] == w[1]["call_id"] {
            pairs += 1;
        }
    }
    ensure(pairs >= 2, || format!("{pairs} tool_call/result pairs"))?;
    let answer = t["answer"].as_str().unwrap_or_default();
    for n in ["2.85", "2.61", "1.79", "2.06"] {
        ensure(answer.contains(n), || format!("answer lacks {n}"))?;
    }

    let looped: Value = serde_json::from_str(&run_ask(dir.path(), &fixtures().join("iteration_cap.json"), "loop")?)
        .map_err(|e| e.to_string())?;
    let calls = looped["turns"].as_array().ok_or("no turns")?.iter().filter(|x| x["kind"] == "tool_call").count();
    ensure(calls == 8 && looped["truncated"] == true, || format!("cap run made {calls} calls"))?;
    Ok(format!("5 identical runs ({} bytes), {pairs} call/result pairs, cap stops at {calls}", runs[0].len()))
}

fn retrieval_determinism() -> Check {
    // 2 articles per topic
    let all = load_corpus_dir(&fixtures().join("corpus")).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut per_topic: BTreeMap<&str, usize> = BTreeMap::new();
    for d in &all {
        let n = per_topic.entry(d.topic.as_str()).or_default();
        if *n < 2 {
            *n += 1;
            let body = json!({ "title": d.title, "topic": d.topic.as_str(), "citation": d.citation, "body": d.body });
            std::fs::write(dir.path().join(format!("{}.json", d.doc_id)), body.to_string())
                .map_err(|e| e.to_string())?;
        }
    }
    let docs = load_corpus_dir(dir.path()).map_err(|e| e.to_string())?;
    ensure(docs.len() == 8, || format!("{} docs", docs.len()))?;
    let first = load_index(dir.path()).map_err(|e| e.to_string())?;
    let second = load_index(dir.path()).map_err(|e| e.to_string())?;
    let queries = [
        ("drought microbial", Topic::Drought),
        ("wildfire soil carbon", Topic::Wildfire),
        ("perennial crop carbon", Topic::Crop),
        ("tillage soil organic carbon", Topic::Practices),
    ];
    let mut hits = 0;
    for (q, topic) in queries {
        let a = first.support_arguments(q, Some(topic), 5).map_err(|e| e.to_string())?;
        let b = second.support_arguments(q, Some(topic), 5).map_err(|e| e.to_string())?;
        ensure(!a.is_empty(), || format!("{q:?} found nothing"))?;
        ensure(a == b, || format!("{q:?} ranking differs"))?;
        for h in &a {
            let doc = docs.iter().find(|d| d.doc_id == h.chunk.doc_id).ok_or("hit from unknown doc")?;
            ensure(h.topic == topic && doc.topic == topic, || format!("{q:?} returned {} doc", h.topic.as_str()))?;
            ensure(h.citation == doc.citation && !h.citation.is_empty(), || format!("{q:?} citation mismatch"))?;
            ensure(doc.body.contains(&h.chunk.text), || "chunk is not verbatim".into())?;
        }
        hits += a.len();
    }
    Ok(format!("8 docs, 4 topic-filtered queries, {hits} hits all on-topic with citations"))
}

fn soc_aggregation() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (w, h) = (16, 12);
    let mask = Mask::from_box(w, h, 2, 1, 14, 11);
    let full = Mask::filled(w, h, true);
    let (c1, c2) = (1.37, 2.91);
    let r1 = BandRaster::filled(w, h, 30.0, c1).map_err(|e| e.to_string())?;
    let r2 = BandRaster::filled(w, h, 30.0, c2).map_err(|e| e.to_string())?;
    let two = aggregate_soc_rasters(&[r1, r2], &full).map_err(|e| e.to_string())?;
    ensure((two - (c1 + c2) / 2.0).abs() <= 1e-9, || format!("two-raster mean {two}"))?;

    // left half of the county is nodata
    let values: Vec<f64> =
        (0..w * h).map(|i| if i % w < w / 2 { f64::NAN } else { rng.random_range(0.5..6.0) }).collect();
    let half = BandRaster::new(w, h, 30.0, values.clone()).map_err(|e| e.to_string())?;
    let got = aggregate_soc_rasters(&[half], &mask).map_err(|e| e.to_string())?;
    let kept: Vec<f64> = (0..w * h).filter(|&i| mask.at(i) && !values[i].is_nan()).map(|i| values[i]).collect();
    let want = kept.iter().sum::<f64>() / kept.len() as f64;
    ensure((got - want).abs() <= 1e-9, || format!("half-nodata mean {got} vs {want}"))?;

    let mut rasters: Vec<BandRaster> = (0..7)
        .map(|_| {
            let v =
                (0..w * h).map(|_| if rng.random_bool(0.2) { f64::NAN } else { rng.random_range(0.0..8.0) }).collect();
            BandRaster::new(w, h, 30.0, v).unwrap()
        })
        .collect();
    let base = aggregate_soc_rasters(&rasters, &mask).map_err(|e| e.to_string())?;
    for _ in 0..50 {
        rasters.shuffle(&mut rng);
        let again = aggregate_soc_rasters(&rasters, &mask).map_err(|e| e.to_string())?;
        ensure(again.to_bits() == base.to_bits(), || format!("permutation changed {base} to {again}"))?;
    }
    Ok(format!("two-raster {two}, half-nodata {got:.9}, 50 permutations bit-identical"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 coherence identity", coherence_identity),
        ("2 coherence noise floor", coherence_noise_floor),
        ("3 coherence scaling invariance", coherence_scaling),
        ("4 synthetic four-field oracle", synthetic_field_oracle),
        ("5 BSI exactness", bsi_exactness),
        ("6 crosstab conservation", crosstab_conservation),
        ("7 county fixture exactness", fixture_exactness),
        ("8 agent determinism", agent_determinism),
        ("9 retrieval determinism and citation", retrieval_determinism),
        ("10 SOC aggregation", soc_aggregation),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS [{name}] {detail}"),
            Ok(Err(detail)) => {
                failed += 1;
                println!("FAIL [{name}] {detail}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL [{name}] panicked");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
