//! Command-line interface.

use std::collections::BTreeMap;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use soilcopilot_core::coherence::{estimate_coherence, AcquisitionPair, Window};
use soilcopilot_core::pipeline::{detect_tillage, DetectionOutput};
use soilcopilot_core::tillage::{bare_soil_mask, compute_bsi, crop_crosstab};
use soilcopilot_core::TillageLabel;

use crate::config::{CliConfig, ConfigLayer, CONFIG_ENV};
use crate::copilot::{
    build_tool_registry, run_agent, AgentConfig, ChatBackend, Clock, HttpBackend, KeywordBackend, MockBackend, Role,
};
use crate::error::AppError;
use crate::formats::{self, Dtype};
use crate::scene::{self, SceneConfig, MANIFEST_FILE};
use crate::service::{self, AppState};
use crate::store::{AgroStore, IngestKind};
use crate::{cdl, corpus};

#[derive(Debug, Parser)]
#[command(
    name = "soilcopilot",
    version,
    about = "Soil-health copilot: tillage detection, county data and a tool-calling assistant"
)]
pub struct Cli {
    /// TOML config file (also read from SOILCOPILOT_CONFIG).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory holding the county store snapshot [default: data].
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Directory of <doc_id>.json articles for support_arguments.
    #[arg(long, global = true)]
    pub corpus_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Default, Clone)]
pub struct ThresholdArgs {
    /// Bare-soil index above which a pixel is bare [default: 0.06].
    #[arg(long, allow_negative_numbers = true)]
    pub bsi_threshold: Option<f64>,
    /// Coherence magnitude below which a pair counts as changed [default: 0.3].
    #[arg(long)]
    pub change_threshold: Option<f64>,
    /// Largest pair baseline kept, in meters [default: 100].
    #[arg(long)]
    pub max_baseline_m: Option<f64>,
    /// Till regions narrower or shorter than this many pixels are dropped as roads [default: 3].
    #[arg(long)]
    pub min_region_dim: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge a county CSV into the store. KIND is soc, drought, wildfire, crops,
    /// tillage or farms; `all` ingests every <kind>.csv in a directory.
    Ingest { kind: String, path: PathBuf },
    /// Coherence magnitude and phase of two SLC rasters.
    Coherence {
        primary: PathBuf,
        repeat: PathBuf,
        /// Estimation window in pixels, WIDTHxHEIGHT [default: 10x20].
        #[arg(long)]
        window: Option<String>,
        /// Output stem; writes <stem>.coh and <stem>.phs rasters [default: coherence].
        #[arg(long, default_value = "coherence")]
        out: PathBuf,
        /// Largest pair baseline accepted, in meters [default: 100].
        #[arg(long)]
        max_baseline_m: Option<f64>,
    },
    /// Bare-soil index from SWIR1, blue, red and NIR rasters.
    Bsi {
        swir1: PathBuf,
        blue: PathBuf,
        red: PathBuf,
        nir: PathBuf,
        /// Output stem for the index raster [default: bsi].
        #[arg(long, default_value = "bsi")]
        out: PathBuf,
        /// Bare-soil index above which a pixel is bare [default: 0.06].
        #[arg(long, allow_negative_numbers = true)]
        bsi_threshold: Option<f64>,
    },
    /// Detect tillage from a scene manifest or a synthetic scene config.
    DetectTill {
        input: PathBuf,
        /// Output directory for tillage rasters [default: tillage_out].
        #[arg(long, default_value = "tillage_out")]
        out: PathBuf,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Label year; defaults to the manifest year.
        #[arg(long)]
        year: Option<i32>,
    },
    /// Till / no-till percentages per crop as CSV.
    Crosstab {
        tillage: PathBuf,
        croplayer: PathBuf,
        /// Extra `code,name` CSV overriding the built-in crop names.
        #[arg(long)]
        codes: Option<PathBuf>,
    },
    /// Render a synthetic scene config into rasters and a manifest.
    SynthScene {
        config: PathBuf,
        #[arg(long, default_value = "scene")]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        /// Port [default: 8080].
        #[arg(long)]
        port: Option<u16>,
        /// Bind address [default: 127.0.0.1].
        #[arg(long)]
        bind: Option<String>,
        /// Replay this mock script for every chat instead of a model.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Tool-call cap per chat turn [default: 8].
        #[arg(long)]
        max_iterations: Option<usize>,
    },
    /// Ask the copilot one question and print the transcript.
    Ask {
        prompt: String,
        /// agronomist, farm_consultant, policymaker or default.
        #[arg(long, default_value = "default")]
        persona: String,
        /// Replay a mock script instead of calling a model; runs offline.
        #[arg(long)]
        mock: Option<PathBuf>,
        /// Tool-call cap [default: 8].
        #[arg(long)]
        max_iterations: Option<usize>,
        /// Warn when a county question ends without soc_prediction.
        #[arg(long)]
        lint: bool,
        /// Print only the final answer instead of the JSON transcript.
        #[arg(long)]
        text: bool,
    },
}

fn config_layers(cli: &Cli, flags: ConfigLayer) -> Result<CliConfig, AppError> {
    let mut layers = Vec::new();
    let file = cli.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
    if let Some(path) = file {
        layers.push(ConfigLayer::from_toml_file(&path)?);
    }
    layers.push(ConfigLayer::from_env(|k| std::env::var(k).ok())?);
    let mut flags = flags;
    flags.data_dir = cli.data_dir.clone();
    flags.corpus_dir = cli.corpus_dir.clone();
    layers.push(flags);
    Ok(CliConfig::resolve(&layers)?)
}

fn threshold_layer(t: &ThresholdArgs) -> ConfigLayer {
    ConfigLayer {
        bsi_threshold: t.bsi_threshold,
        change_threshold: t.change_threshold,
        max_baseline_m: t.max_baseline_m,
        min_region_dim: t.min_region_dim,
        ..ConfigLayer::default()
    }
}

fn print_json(out: &mut dyn Write, v: &Value) -> Result<(), AppError> {
    let mut s = serde_json::to_string_pretty(v).expect("json value");
    s.push('\n');
    out.write_all(s.as_bytes())?;
    Ok(())
}

pub fn parse_window(s: &str) -> Result<Window, AppError> {
    let bad = || AppError::Usage(format!("window {s:?} must look like 10x20"));
    let (w, h) = s
        .to_ascii_lowercase()
        .split_once('x')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(bad)?;
    let w: usize = w.parse().map_err(|_| bad())?;
    let h: usize = h.parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok(Window::new(w, h))
}

/// Runs a parsed command, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), AppError> {
    match &cli.command {
        Command::Ingest { kind, path } => {
            let cfg = config_layers(&cli, ConfigLayer::default())?;
            let mut store = AgroStore::open(&cfg.data_dir)?;
            let counts: Vec<(IngestKind, usize)> = if kind.eq_ignore_ascii_case("all") {
                store.ingest_dir(path)?
            } else {
                let k: IngestKind =
                    kind.parse().map_err(|e: crate::store::StoreError| AppError::Usage(e.to_string()))?;
                vec![(k, store.ingest_csv(k, path)?)]
            };
            store.save(&cfg.data_dir)?;
            let rows: serde_json::Map<String, Value> =
                counts.iter().map(|(k, n)| (k.as_str().to_string(), json!(n))).collect();
            print_json(out, &json!({ "rows": rows, "counties": store.county_names().count() }))
        }
        Command::Coherence { primary, repeat, window, out: stem, max_baseline_m } => {
            let cfg = config_layers(&cli, ConfigLayer { max_baseline_m: *max_baseline_m, ..ConfigLayer::default() })?;
            let window = window.as_deref().map(parse_window).transpose()?.unwrap_or_default();
            let (a, ba) = formats::read_slc(primary)?;
            let (b, bb) = formats::read_slc(repeat)?;
            let (a, b, ba, bb) =
                if a.acquisition_time() <= b.acquisition_time() { (a, b, ba, bb) } else { (b, a, bb, ba) };
            let baseline = (bb - ba).abs();
            if baseline > cfg.detection.max_baseline_m {
                return Err(AppError::Data(format!(
                    "pair baseline {baseline} m exceeds the {} m limit",
                    cfg.detection.max_baseline_m
                )));
            }
            let id = format!("{}_{}", a.acquisition_time().secs(), b.acquisition_time().secs());
            let pair = AcquisitionPair::new(Arc::new(a), Arc::new(b), baseline, id)?;
            let map = estimate_coherence(&pair, window)?;
            let mut meta = BTreeMap::new();
            meta.insert("pair_id".to_string(), map.pair_id.clone());
            meta.insert("primary_time".to_string(), formats::format_time(map.primary_time));
            meta.insert("repeat_time".to_string(), formats::format_time(map.repeat_time));
            let with_ext = |ext: &str| {
                let mut p = stem.clone().into_os_string();
                p.push(ext);
                PathBuf::from(p)
            };
            formats::write_band(&with_ext(".coh"), &map.magnitude, Dtype::F64le, meta.clone())?;
            formats::write_band(&with_ext(".phs"), &map.phase, Dtype::F64le, meta)?;
            let valid: Vec<f64> = map.magnitude.values().iter().copied().filter(|v| !v.is_nan()).collect();
            let mean =
                if valid.is_empty() { Value::Null } else { json!(valid.iter().sum::<f64>() / valid.len() as f64) };
            print_json(
                out,
                &json!({
                    "pair_id": map.pair_id,
                    "baseline_m": baseline,
                    "window": [window.width, window.height],
                    "width": map.magnitude.width(),
                    "height": map.magnitude.height(),
                    "valid_cells": valid.len(),
                    "mean_magnitude": mean,
                }),
            )
        }
        Command::Bsi { swir1, blue, red, nir, out: stem, bsi_threshold } => {
            let cfg = config_layers(&cli, ConfigLayer { bsi_threshold: *bsi_threshold, ..ConfigLayer::default() })?;
            let band = |p: &Path| formats::read_band(p).map(|(r, _)| r);
            let bsi = compute_bsi(&band(swir1)?, &band(blue)?, &band(red)?, &band(nir)?)?;
            formats::write_bsi(stem, &bsi)?;
            let bare = bare_soil_mask(&bsi, cfg.detection.bsi_threshold);
            let r = bsi.raster();
            print_json(
                out,
                &json!({
                    "width": r.width(),
                    "height": r.height(),
                    "threshold": cfg.detection.bsi_threshold,
                    "valid_pixels": r.valid_count(),
                    "bare_pixels": bare.count(),
                    "pixel_0_0": r.value_at(0),
                    "range": r.valid_range().map(|(a, b)| [a, b]),
                }),
            )
        }
        Command::DetectTill { input, out: out_dir, thresholds, year } => {
            let cfg = config_layers(&cli, threshold_layer(thresholds))?;
            let text =
                std::fs::read_to_string(input).map_err(|e| AppError::Data(format!("{}: {e}", input.display())))?;
            let probe: Value =
                serde_json::from_str(&text).map_err(|e| AppError::Data(format!("{}: {e}", input.display())))?;
            let (acqs, optical, window, fields, file_year) = if probe.get("acquisition_dates").is_some() {
                let config = SceneConfig::from_file(input)?;
                let scene = soilcopilot_core::synth::generate_scene(&config.to_spec()?)
                    .map_err(|e| AppError::Data(e.to_string()))?;
                let fields =
                    config.fields.iter().map(|f| scene::ManifestField { name: f.name.clone(), bbox: f.bbox }).collect();
                (scene.acquisitions, scene.optical, config.window(), fields, config.year())
            } else {
                let loaded = scene::load_manifest(input)?;
                let w = Window::new(loaded.manifest.window.width, loaded.manifest.window.height);
                (loaded.acquisitions, loaded.optical, w, loaded.manifest.fields, loaded.manifest.year)
            };
            let year = year.unwrap_or(file_year);
            let result: DetectionOutput = detect_tillage(&acqs, &optical, window, &cfg.detection, year)?;
            formats::write_tillage(&out_dir.join("tillage"), &result.map)?;
            formats::write_tillage(&out_dir.join("tillage_raw"), &result.raw)?;
            let summaries = scene::summarize_fields(&result.map, &fields);
            print_json(
                out,
                &json!({
                    "year": year,
                    "pairs_total": result.pairs_total,
                    "pairs_used": result.coherence.iter().map(|c| c.pair_id.clone()).collect::<Vec<_>>(),
                    "gated_out": result.gated_out,
                    "till_cells": result.map.count(TillageLabel::Till),
                    "no_till_cells": result.map.count(TillageLabel::NoTill),
                    "nodata_cells": result.map.count(TillageLabel::Nodata),
                    "removed_as_roads": result.raw.count(TillageLabel::Till) - result.map.count(TillageLabel::Till),
                    "fields": summaries,
                }),
            )
        }
        Command::Crosstab { tillage, croplayer, codes } => {
            let map = formats::read_tillage(tillage)?;
            let (crops, _) = formats::read_band(croplayer)?;
            let mut names = cdl::builtin_names();
            if let Some(p) = codes {
                names.extend(cdl::read_code_names(p)?);
            }
            let tab = crop_crosstab(&map, &crops, &names)?;
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["crop_name", "till_pct", "no_till_pct"]).map_err(|e| AppError::Data(e.to_string()))?;
            for r in &tab.rows {
                w.write_record([r.crop_name.clone(), format!("{:.2}", r.till_pct), format!("{:.2}", r.no_till_pct)])
                    .map_err(|e| AppError::Data(e.to_string()))?;
            }
            out.write_all(&w.into_inner().map_err(|e| AppError::Data(e.to_string()))?)?;
            Ok(())
        }
        Command::SynthScene { config, out: out_dir } => {
            let cfg = SceneConfig::from_file(config)?;
            let (manifest, _) = scene::write_scene(&cfg, out_dir)?;
            print_json(
                out,
                &json!({
                    "manifest": out_dir.join(MANIFEST_FILE),
                    "grid": [cfg.grid.width, cfg.grid.height],
                    "acquisitions": manifest.acquisitions.len(),
                    "optical": manifest.optical.len(),
                    "fields": manifest.fields.len(),
                }),
            )
        }
        Command::Serve { port, bind, mock, max_iterations } => {
            let cfg = config_layers(
                &cli,
                ConfigLayer {
                    port: *port,
                    bind: bind.clone(),
                    max_tool_calls: *max_iterations,
                    ..ConfigLayer::default()
                },
            )?;
            let state = build_state(&cfg, mock.as_deref(), Clock::System, Vec::new())?;
            let addr: SocketAddr = format!("{}:{}", cfg.bind, cfg.port)
                .parse()
                .map_err(|e| AppError::Usage(format!("bad bind address {}:{}: {e}", cfg.bind, cfg.port)))?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(service::serve(Arc::new(state), addr, service::shutdown_signal()))
                .map_err(|e| AppError::Data(format!("cannot serve on {addr}: {e}")))
        }
        Command::Ask { prompt, persona, mock, max_iterations, lint, text } => {
            let cfg = config_layers(&cli, ConfigLayer { max_tool_calls: *max_iterations, ..ConfigLayer::default() })?;
            let role: Role =
                persona.parse().map_err(|e: crate::copilot::UnknownPersona| AppError::Usage(e.to_string()))?;
            let store = Arc::new(AgroStore::open(&cfg.data_dir)?);
            let lint_counties = if *lint { store.county_names().map(str::to_string).collect() } else { Vec::new() };
            let state = build_state_with_store(&cfg, store, mock.as_deref(), Clock::Logical, lint_counties)?;
            let transcript = run_agent(prompt, role, state.backend.as_ref(), &state.registry, &state.agent, "ask")?;
            for w in &transcript.lint_warnings {
                tracing::warn!("{w}");
            }
            if *text {
                writeln!(out, "{}", transcript.answer)?;
                Ok(())
            } else {
                print_json(out, &serde_json::to_value(&transcript).expect("transcript serializes"))
            }
        }
    }
}

fn build_state(cfg: &CliConfig, mock: Option<&Path>, clock: Clock, lint: Vec<String>) -> Result<AppState, AppError> {
    let store = Arc::new(AgroStore::open(&cfg.data_dir)?);
    build_state_with_store(cfg, store, mock, clock, lint)
}

fn build_state_with_store(
    cfg: &CliConfig,
    store: Arc<AgroStore>,
    mock: Option<&Path>,
    clock: Clock,
    lint_counties: Vec<String>,
) -> Result<AppState, AppError> {
    let index = cfg.corpus_dir.as_deref().map(corpus::load_index).transpose()?.map(Arc::new);
    let registry = Arc::new(build_tool_registry(store.clone(), index));
    let backend: Arc<dyn ChatBackend> = match (mock, cfg.backend.http_config()) {
        (Some(script), _) => Arc::new(MockBackend::from_file(script)?),
        (None, Some(http)) => Arc::new(HttpBackend::new(http)?),
        (None, None) => Arc::new(KeywordBackend::new(store.county_names().map(str::to_string))),
    };
    let agent = AgentConfig { max_tool_calls: cfg.max_tool_calls, clock, lint_counties };
    Ok(AppState::new(store, registry, backend, agent))
}
