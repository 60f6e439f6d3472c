use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use proptest::prelude::*;
use serde_json::{json, Value};
use soilcopilot::copilot::backend::ScriptStep;
use soilcopilot::copilot::{
    build_tool_registry, run_agent, AgentConfig, MockBackend, RequestedCall, Role, ToolRegistry, TurnPayload,
};
use soilcopilot::formats::{read_band, read_slc, write_band, write_slc, Dtype};
use soilcopilot::store::AgroStore;
use soilcopilot_core::{BandRaster, Mask, SlcImage, Timestamp};

fn registry() -> &'static (ToolRegistry, AgroStore) {
    static REG: OnceLock<(ToolRegistry, AgroStore)> = OnceLock::new();
    REG.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut store = AgroStore::open(dir.path()).unwrap();
        store.ingest_dir(Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/county"))).unwrap();
        (build_tool_registry(Arc::new(store.clone()), None), store)
    })
}

fn requested_call() -> impl Strategy<Value = RequestedCall> {
    let county = prop::sample::select(vec!["Merced", "Sonoma", "Tulare", "Atlantis", "marin county"]);
    let tool = prop::sample::select(vec!["soc_prediction", "drought_conditions", "tillage_scale", "bogus_tool"]);
    (tool, county, any::<bool>()).prop_map(|(name, county, good_args)| RequestedCall {
        id: None,
        name: name.to_string(),
        args: if good_args { json!({ "county": county }) } else { json!({ "county": 3, "extra": true }) },
    })
}

fn script_step() -> impl Strategy<Value = ScriptStep> {
    prop_oneof![
        4 => prop::collection::vec(requested_call(), 1..4).prop_map(|tool_calls| ScriptStep::ToolCalls { tool_calls }),
        1 => "[a-z ]{0,12}".prop_map(|text| ScriptStep::Text { text }),
    ]
}

/// Calls made and whether the run is cut short, replaying the script by hand.
fn expected_outcome(steps: &[ScriptStep], cap: usize) -> Option<(usize, bool)> {
    let mut made = 0;
    for step in steps {
        match step {
            ScriptStep::Text { .. } => return Some((made, false)),
            ScriptStep::ToolCalls { .. } if made == cap => return Some((made, true)),
            ScriptStep::ToolCalls { tool_calls } => made += tool_calls.len().min(cap - made),
        }
    }
    None
}

fn soc_numbers(store: &AgroStore) -> Vec<f64> {
    store
        .county_names()
        .filter_map(|c| store.soc_prediction(c).ok())
        .flat_map(|p| [p.soc_2016_pct, p.soc_2023_pct])
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn transcripts_are_well_formed(steps in prop::collection::vec(script_step(), 0..8), cap in 1usize..10) {
        let (reg, store) = registry();
        let backend = MockBackend::new(steps.clone(), false);
        let result = run_agent("q", Role::FarmConsultant, &backend, reg, &AgentConfig::new(cap), "p");
        let Some((calls, truncated)) = expected_outcome(&steps, cap) else {
            prop_assert!(result.is_err());
            return Ok(());
        };
        let t = result.unwrap();
        prop_assert_eq!(t.tool_calls, calls);
        prop_assert_eq!(t.truncated, truncated);
        let opens_with_prompts = matches!(t.turns[0].payload, TurnPayload::System { .. })
            && matches!(t.turns[1].payload, TurnPayload::User { .. });
        prop_assert!(opens_with_prompts);
        let last = t.turns.last().unwrap();
        let is_terminal_text = matches!(last.payload, TurnPayload::AssistantText { .. });
        prop_assert!(is_terminal_text);
        let texts = t.turns.iter().filter(|x| matches!(x.payload, TurnPayload::AssistantText { .. })).count();
        prop_assert_eq!(texts, 1);
        for (i, turn) in t.turns.iter().enumerate() {
            prop_assert_eq!(turn.seq, i);
        }
        let middle = &t.turns[2..t.turns.len() - 1];
        prop_assert_eq!(middle.len(), 2 * calls);
        let known = soc_numbers(store);
        for pair in middle.chunks(2) {
            match (&pair[0].payload, &pair[1].payload) {
                (
                    TurnPayload::ToolCall { call_id, name, .. },
                    TurnPayload::ToolResult { call_id: rid, name: rname, result, is_error },
                ) => {
                    prop_assert_eq!(call_id, rid);
                    prop_assert_eq!(name, rname);
                    if *is_error {
                        prop_assert!(result.get("error").is_some());
                    } else if name == "soc_prediction" {
                        for key in ["soc_2016_pct", "soc_2023_pct"] {
                            let v = result[key].as_f64().unwrap();
                            prop_assert!(known.contains(&v), "{} not from the store", v);
                        }
                    }
                }
                _ => prop_assert!(false, "tool_call/tool_result out of order"),
            }
        }
    }

    #[test]
    fn band_rasters_round_trip(
        (w, h, values) in (1usize..12, 1usize..12).prop_flat_map(|(w, h)| {
            (Just(w), Just(h), prop::collection::vec(prop_oneof![9 => -1e6f64..1e6, 1 => Just(f64::NAN)], w * h))
        }),
        wide in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("band");
        let values: Vec<f64> = if wide { values } else { values.iter().map(|v| *v as f32 as f64).collect() };
        let r = BandRaster::new(w, h, 10.0, values).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("note".to_string(), "x".to_string());
        write_band(&path, &r, if wide { Dtype::F64le } else { Dtype::F32le }, meta.clone()).unwrap();
        let (back, back_meta) = read_band(&path).unwrap();
        prop_assert_eq!(back.dims(), r.dims());
        prop_assert_eq!(back.pixel_size_m(), 10.0);
        for (a, b) in back.values().iter().zip(r.values()) {
            prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
        }
        prop_assert_eq!(back_meta.get("note"), meta.get("note"));
    }

    #[test]
    fn slc_round_trip(
        (w, h, samples, valid) in (1usize..10, 1usize..10).prop_flat_map(|(w, h)| {
            (
                Just(w),
                Just(h),
                prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), w * h),
                prop::collection::vec(prop::bool::weighted(0.9), w * h),
            )
        }),
        baseline in 0.0f64..200.0,
        day in 0i64..20_000,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("slc");
        let samples: Vec<Complex64> = samples.into_iter().map(|(re, im)| Complex64::new(re, im)).collect();
        let img = SlcImage::new(w, h, 5.0, samples, Timestamp::from_days(day))
            .unwrap()
            .with_validity(Mask::new(w, h, valid.clone()).unwrap())
            .unwrap();
        write_slc(&path, &img, Some(baseline), Dtype::C128le).unwrap();
        let (back, b) = read_slc(&path).unwrap();
        prop_assert_eq!(b, baseline);
        prop_assert_eq!(back.acquisition_time(), img.acquisition_time());
        prop_assert_eq!(back.samples(), img.samples());
        let back_valid: Vec<bool> = (0..w * h).map(|i| back.is_valid_index(i)).collect();
        prop_assert_eq!(back_valid, valid);
    }

    #[test]
    fn soc_ingest_is_idempotent_and_exact(
        rows in prop::collection::btree_map("[A-Z][a-z]{2,8}", (0.0f64..10.0, 0.0f64..10.0), 1..6),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("county,soc_2016_pct,soc_2023_pct\n");
        for (c, (a, b)) in &rows {
            csv.push_str(&format!("{c} County,{a},{b}\n"));
        }
        let path = dir.path().join("soc.csv");
        std::fs::write(&path, csv).unwrap();
        let mut store = AgroStore::open(dir.path()).unwrap();
        store.ingest_csv(soilcopilot::store::IngestKind::Soc, &path).unwrap();
        let once: Value = serde_json::to_value(&store).unwrap();
        store.ingest_csv(soilcopilot::store::IngestKind::Soc, &path).unwrap();
        prop_assert_eq!(serde_json::to_value(&store).unwrap(), once);
        for (c, (a, b)) in &rows {
            let p = store.soc_prediction(&c.to_lowercase()).unwrap();
            prop_assert_eq!(p.soc_2016_pct.to_bits(), a.to_bits());
            prop_assert_eq!(p.soc_2023_pct.to_bits(), b.to_bits());
        }
    }
}
