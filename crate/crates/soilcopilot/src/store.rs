//! County-keyed agro-environmental store.
//!
//! The whole store lives in one JSON snapshot (`agro_store.json` in the data
//! directory), rewritten atomically after each ingest. Counties are keyed by a
//! canonical name: trimmed, a trailing " County" removed, ASCII-lowercased.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SNAPSHOT_FILE: &str = "agro_store.json";
pub const DEFAULT_TILLAGE_YEAR: i32 = 2019;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("county not found: {0}")]
    CountyNotFound(String),
    #[error("no {kind} data for {county}")]
    NoData { county: String, kind: &'static str },
    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: corrupt snapshot: {source}")]
    Snapshot { path: PathBuf, source: serde_json::Error },
    #[error("unknown ingest kind {0:?}; expected soc, drought, wildfire, crops, tillage or farms")]
    UnknownKind(String),
}

impl StoreError {
    /// Stable code used in tool errors.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::CountyNotFound(_) => "county_not_found",
            StoreError::NoData { .. } => "no_data",
            _ => "store_error",
        }
    }
}

pub fn canonical_county(name: &str) -> String {
    display_county(name).to_ascii_lowercase()
}

/// Trimmed name without a trailing " County" (any case), inner spaces collapsed.
pub fn display_county(name: &str) -> String {
    let collapsed = name.split_whitespace().collect::<Vec<_>>().join(" ");
    let lower = collapsed.to_ascii_lowercase();
    match lower.strip_suffix(" county") {
        Some(_) if collapsed.len() > " county".len() => collapsed[..collapsed.len() - " county".len()].to_string(),
        _ => collapsed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DroughtCategory {
    D0,
    D1,
    D2,
    D3,
    D4,
}

impl fmt::Display for DroughtCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for DroughtCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D0" => Ok(Self::D0),
            "D1" => Ok(Self::D1),
            "D2" => Ok(Self::D2),
            "D3" => Ok(Self::D3),
            "D4" => Ok(Self::D4),
            _ => Err(format!("invalid drought category {s:?}; expected D0 to D4")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroughtEvent {
    pub year_start: i32,
    pub year_end: i32,
    pub category: DroughtCategory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Wildfire {
    pub year: i32,
    pub incident_name: String,
    pub acres: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropEntry {
    pub year: i32,
    pub crop_name: String,
    pub area_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FarmRecord {
    pub farm_name: String,
    pub county: String,
    pub practice: String,
    pub year_implemented: String,
    pub funding_status: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocPrediction {
    pub soc_2016_pct: f64,
    pub soc_2023_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CountyRecord {
    pub county_name: String,
    pub soc: Option<SocPrediction>,
    pub drought_events: Vec<DroughtEvent>,
    pub wildfires: Vec<Wildfire>,
    pub crops: Vec<CropEntry>,
    /// Tillage scale by year, 0 = no-till, 1 = conventional.
    pub tillage: BTreeMap<i32, f64>,
    pub farms: Vec<FarmRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CropYear {
    pub year: i32,
    pub crops: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IngestKind {
    Soc,
    Drought,
    Wildfire,
    Crops,
    Tillage,
    Farms,
}

impl IngestKind {
    pub const ALL: [IngestKind; 6] = [
        IngestKind::Soc,
        IngestKind::Drought,
        IngestKind::Wildfire,
        IngestKind::Crops,
        IngestKind::Tillage,
        IngestKind::Farms,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            IngestKind::Soc => "soc",
            IngestKind::Drought => "drought",
            IngestKind::Wildfire => "wildfire",
            IngestKind::Crops => "crops",
            IngestKind::Tillage => "tillage",
            IngestKind::Farms => "farms",
        }
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            IngestKind::Soc => &["county", "soc_2016_pct", "soc_2023_pct"],
            IngestKind::Drought => &["county", "year_start", "year_end", "category"],
            IngestKind::Wildfire => &["county", "year", "incident_name", "acres"],
            IngestKind::Crops => &["county", "year", "crop_name", "area_fraction"],
            IngestKind::Tillage => &["county", "year", "tillage_scale"],
            IngestKind::Farms => &["farm_name", "county", "practice", "year_implemented", "funding_status"],
        }
    }

    /// Conventional file name inside a fixture directory.
    pub fn file_name(self) -> String {
        format!("{}.csv", self.as_str())
    }
}

impl FromStr for IngestKind {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| StoreError::UnknownKind(s.to_string()))
    }
}

enum Row {
    Soc(String, SocPrediction),
    Drought(String, DroughtEvent),
    Wildfire(String, Wildfire),
    Crop(String, CropEntry),
    Tillage(String, i32, f64),
    Farm(FarmRecord),
}

impl Row {
    fn county(&self) -> &str {
        match self {
            Row::Soc(c, _) | Row::Drought(c, _) | Row::Wildfire(c, _) | Row::Crop(c, _) | Row::Tillage(c, _, _) => c,
            Row::Farm(f) => &f.county,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgroStore {
    counties: BTreeMap<String, CountyRecord>,
}

impl AgroStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot_path(data_dir: &Path) -> PathBuf {
        data_dir.join(SNAPSHOT_FILE)
    }

    /// Loads the snapshot in `data_dir`; a missing snapshot is an empty store.
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        let path = Self::snapshot_path(data_dir);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|source| StoreError::Snapshot { path, source }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::new()),
            Err(source) => Err(StoreError::Io { path, source }),
        }
    }

    pub fn save(&self, data_dir: &Path) -> Result<(), StoreError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |source| StoreError::Io { path, source }
        };
        fs::create_dir_all(data_dir).map_err(io(data_dir))?;
        let path = Self::snapshot_path(data_dir);
        let tmp = data_dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut bytes = serde_json::to_vec_pretty(self).expect("store serializes");
        bytes.push(b'\n');
        fs::write(&tmp, bytes).map_err(io(&tmp))?;
        fs::rename(&tmp, &path).map_err(io(&path))
    }

    pub fn county_names(&self) -> impl Iterator<Item = &str> {
        self.counties.values().map(|c| c.county_name.as_str())
    }

    pub fn county(&self, name: &str) -> Result<&CountyRecord, StoreError> {
        self.counties.get(&canonical_county(name)).ok_or_else(|| StoreError::CountyNotFound(display_county(name)))
    }

    pub fn soc_prediction(&self, county: &str) -> Result<SocPrediction, StoreError> {
        let c = self.county(county)?;
        c.soc.ok_or_else(|| StoreError::NoData { county: c.county_name.clone(), kind: "SOC" })
    }

    /// Drought events ordered by start year, then category, then end year.
    pub fn drought_conditions(&self, county: &str) -> Result<&[DroughtEvent], StoreError> {
        Ok(&self.county(county)?.drought_events)
    }

    pub fn wildfire_incidents(&self, county: &str) -> Result<&[Wildfire], StoreError> {
        Ok(&self.county(county)?.wildfires)
    }

    /// Crop names grouped by year, years ascending, names in ingest order.
    pub fn crop_types(&self, county: &str) -> Result<Vec<CropYear>, StoreError> {
        let mut by_year: BTreeMap<i32, Vec<String>> = BTreeMap::new();
        for e in &self.county(county)?.crops {
            let names = by_year.entry(e.year).or_default();
            if !names.contains(&e.crop_name) {
                names.push(e.crop_name.clone());
            }
        }
        Ok(by_year.into_iter().map(|(year, crops)| CropYear { year, crops }).collect())
    }

    pub fn tillage_scale(&self, county: &str, year: i32) -> Result<f64, StoreError> {
        let c = self.county(county)?;
        c.tillage
            .get(&year)
            .copied()
            .ok_or_else(|| StoreError::NoData { county: c.county_name.clone(), kind: "tillage" })
    }

    pub fn farms(&self, county: &str) -> Result<&[FarmRecord], StoreError> {
        Ok(&self.county(county)?.farms)
    }

    pub fn all_farms(&self) -> impl Iterator<Item = &FarmRecord> {
        self.counties.values().flat_map(|c| c.farms.iter())
    }

    /// Parses and merges one CSV file. Nothing is merged if any row fails.
    pub fn ingest_csv(&mut self, kind: IngestKind, path: &Path) -> Result<usize, StoreError> {
        let file = fs::File::open(path).map_err(|source| StoreError::Io { path: path.to_path_buf(), source })?;
        self.ingest_reader(kind, file, path)
    }

    pub fn ingest_reader(
        &mut self,
        kind: IngestKind,
        reader: impl std::io::Read,
        path: &Path,
    ) -> Result<usize, StoreError> {
        let rows = parse_rows(kind, reader, path)?;
        let n = rows.len();
        for row in rows {
            self.merge(row);
        }
        Ok(n)
    }

    /// Ingests every `<kind>.csv` present in `dir`, in a fixed kind order.
    pub fn ingest_dir(&mut self, dir: &Path) -> Result<Vec<(IngestKind, usize)>, StoreError> {
        let mut staged = self.clone();
        let mut counts = Vec::new();
        for kind in IngestKind::ALL {
            let path = dir.join(kind.file_name());
            if path.is_file() {
                counts.push((kind, staged.ingest_csv(kind, &path)?));
            }
        }
        *self = staged;
        Ok(counts)
    }

    fn record_mut(&mut self, county: &str) -> &mut CountyRecord {
        self.counties
            .entry(canonical_county(county))
            .or_insert_with(|| CountyRecord { county_name: display_county(county), ..CountyRecord::default() })
    }

    fn merge(&mut self, row: Row) {
        let rec = self.record_mut(row.county());
        match row {
            Row::Soc(_, soc) => rec.soc = Some(soc),
            Row::Drought(_, ev) => {
                if !rec.drought_events.contains(&ev) {
                    rec.drought_events.push(ev);
                    rec.drought_events.sort_by_key(|e| (e.year_start, e.category, e.year_end));
                }
            }
            Row::Wildfire(_, w) => {
                if let Some(existing) =
                    rec.wildfires.iter_mut().find(|x| x.year == w.year && x.incident_name == w.incident_name)
                {
                    *existing = w;
                } else {
                    rec.wildfires.push(w);
                    rec.wildfires
                        .sort_by(|a, b| a.year.cmp(&b.year).then_with(|| a.incident_name.cmp(&b.incident_name)));
                }
            }
            Row::Crop(_, c) => {
                if let Some(existing) = rec.crops.iter_mut().find(|x| x.year == c.year && x.crop_name == c.crop_name) {
                    *existing = c;
                } else {
                    let at = rec.crops.partition_point(|x| x.year <= c.year);
                    rec.crops.insert(at, c);
                }
            }
            Row::Tillage(_, year, scale) => {
                rec.tillage.insert(year, scale);
            }
            Row::Farm(mut f) => {
                f.county = rec.county_name.clone();
                if let Some(existing) =
                    rec.farms.iter_mut().find(|x| x.farm_name == f.farm_name && x.practice == f.practice)
                {
                    *existing = f;
                } else {
                    rec.farms.push(f);
                }
            }
        }
    }
}

fn parse_rows(kind: IngestKind, reader: impl std::io::Read, path: &Path) -> Result<Vec<Row>, StoreError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers =
        rdr.headers().map_err(|e| StoreError::Schema { path: path.to_path_buf(), message: e.to_string() })?.clone();
    let mut cols = Vec::new();
    for want in kind.columns() {
        let idx = headers.iter().position(|h| h.trim_start_matches('\u{feff}').eq_ignore_ascii_case(want)).ok_or_else(
            || StoreError::Schema {
                path: path.to_path_buf(),
                message: format!("missing column {want:?}; {} files need {}", kind.as_str(), kind.columns().join(",")),
            },
        )?;
        cols.push(idx);
    }

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row_no = i + 1;
        let err = |message: String| StoreError::Row { path: path.to_path_buf(), row: row_no, message };
        let rec = rec.map_err(|e| err(e.to_string()))?;
        let field = |k: usize| rec.get(cols[k]).unwrap_or("");
        let text = |k: usize| -> Result<String, StoreError> {
            let v = field(k);
            if v.is_empty() {
                Err(err(format!("{} is empty", kind.columns()[k])))
            } else {
                Ok(v.to_string())
            }
        };
        let int = |k: usize| -> Result<i32, StoreError> {
            field(k)
                .parse::<i32>()
                .map_err(|_| err(format!("{} must be an integer year, got {:?}", kind.columns()[k], field(k))))
        };
        let num = |k: usize| -> Result<f64, StoreError> {
            field(k)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("{} must be a number, got {:?}", kind.columns()[k], field(k))))
        };
        let opt_num = |k: usize| -> Result<Option<f64>, StoreError> {
            if field(k).is_empty() {
                Ok(None)
            } else {
                num(k).map(Some)
            }
        };

        let row = match kind {
            IngestKind::Soc => {
                let (a, b) = (num(1)?, num(2)?);
                if a < 0.0 || b < 0.0 {
                    return Err(err("SOC percentages must be non-negative".into()));
                }
                Row::Soc(text(0)?, SocPrediction { soc_2016_pct: a, soc_2023_pct: b })
            }
            IngestKind::Drought => {
                let start = int(1)?;
                let end = if field(2).is_empty() { start } else { int(2)? };
                if end < start {
                    return Err(err(format!("year_end {end} precedes year_start {start}")));
                }
                let category = field(3).parse::<DroughtCategory>().map_err(err)?;
                Row::Drought(text(0)?, DroughtEvent { year_start: start, year_end: end, category })
            }
            IngestKind::Wildfire => {
                let acres = opt_num(3)?;
                if acres.is_some_and(|a| a < 0.0) {
                    return Err(err("acres must be non-negative".into()));
                }
                Row::Wildfire(text(0)?, Wildfire { year: int(1)?, incident_name: text(2)?, acres })
            }
            IngestKind::Crops => {
                let frac = opt_num(3)?;
                if frac.is_some_and(|f| !(0.0..=1.0).contains(&f)) {
                    return Err(err("area_fraction must lie in [0, 1]".into()));
                }
                Row::Crop(text(0)?, CropEntry { year: int(1)?, crop_name: text(2)?, area_fraction: frac })
            }
            IngestKind::Tillage => {
                let scale = num(2)?;
                if !(0.0..=1.0).contains(&scale) {
                    return Err(err(format!("tillage_scale {scale} outside [0, 1]")));
                }
                Row::Tillage(text(0)?, int(1)?, scale)
            }
            IngestKind::Farms => Row::Farm(FarmRecord {
                farm_name: text(0)?,
                county: text(1)?,
                practice: text(2)?,
                year_implemented: text(3)?,
                funding_status: text(4)?,
            }),
        };
        if canonical_county(row.county()).is_empty() {
            return Err(err("county is empty".into()));
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(store: &mut AgroStore, kind: IngestKind, csv: &str) -> Result<usize, StoreError> {
        store.ingest_reader(kind, csv.as_bytes(), Path::new("mem.csv"))
    }

    #[test]
    fn canonical_names() {
        for n in ["Marin", "marin", "Marin County", "  MARIN  county "] {
            assert_eq!(canonical_county(n), "marin");
        }
        assert_eq!(display_county("San  Joaquin County"), "San Joaquin");
        assert_eq!(canonical_county("County"), "county");
    }

    #[test]
    fn soc_round_trip_and_overwrite() {
        let mut s = AgroStore::new();
        assert_eq!(
            ingest(&mut s, IngestKind::Soc, "county,soc_2016_pct,soc_2023_pct\nSan Joaquin,3.886,2.644\n").unwrap(),
            1
        );
        let p = s.soc_prediction("san joaquin county").unwrap();
        assert_eq!((p.soc_2016_pct, p.soc_2023_pct), (3.886, 2.644));
        ingest(&mut s, IngestKind::Soc, "county,soc_2016_pct,soc_2023_pct\nSan Joaquin,3.886,2.644\n").unwrap();
        assert_eq!(s.county_names().count(), 1);
    }

    #[test]
    fn header_only_is_zero_rows() {
        let mut s = AgroStore::new();
        assert_eq!(ingest(&mut s, IngestKind::Drought, "county,year_start,year_end,category\n").unwrap(), 0);
        assert_eq!(s, AgroStore::new());
    }

    #[test]
    fn bad_rows_abort_the_whole_file() {
        let mut s = AgroStore::new();
        let csv = "county,year_start,year_end,category\nKern,2014,2015,D2\nKern,2016,2016,D7\n";
        let e = ingest(&mut s, IngestKind::Drought, csv).unwrap_err();
        assert!(matches!(e, StoreError::Row { row: 2, .. }), "{e}");
        assert!(s.county("Kern").is_err());
        let e = ingest(&mut s, IngestKind::Tillage, "county,year,tillage_scale\nKern,2019,1.5\n").unwrap_err();
        assert!(matches!(e, StoreError::Row { row: 1, .. }));
        let e = ingest(&mut s, IngestKind::Soc, "county,soc_2016\nKern,1\n").unwrap_err();
        assert!(matches!(e, StoreError::Schema { .. }));
    }

    #[test]
    fn drought_order_and_dedup() {
        let mut s = AgroStore::new();
        let csv =
            "county,year_start,year_end,category\nX,2020,2020,D1\nX,2013,2016,D3\nX,2013,2013,D1\nX,2013,2016,D3\n";
        ingest(&mut s, IngestKind::Drought, csv).unwrap();
        let ev = s.drought_conditions("X").unwrap();
        let got: Vec<(i32, i32, DroughtCategory)> = ev.iter().map(|e| (e.year_start, e.year_end, e.category)).collect();
        assert_eq!(
            got,
            [(2013, 2013, DroughtCategory::D1), (2013, 2016, DroughtCategory::D3), (2020, 2020, DroughtCategory::D1)]
        );
    }

    #[test]
    fn unknown_county_differs_from_empty() {
        let mut s = AgroStore::new();
        ingest(&mut s, IngestKind::Soc, "county,soc_2016_pct,soc_2023_pct\nMarin,1.96,1.92\n").unwrap();
        assert!(s.drought_conditions("Marin").unwrap().is_empty());
        assert!(matches!(s.drought_conditions("Atlantis"), Err(StoreError::CountyNotFound(_))));
        assert!(matches!(s.tillage_scale("Marin", 2019), Err(StoreError::NoData { .. })));
    }

    #[test]
    fn crops_grouped_by_year() {
        let mut s = AgroStore::new();
        let csv = "county,year,crop_name,area_fraction\nFresno,2020,Almonds,0.2\nFresno,2019,Cotton,\nFresno,2020,Grapes,0.1\n";
        ingest(&mut s, IngestKind::Crops, csv).unwrap();
        let got = s.crop_types("Fresno").unwrap();
        assert_eq!(got[0], CropYear { year: 2019, crops: vec!["Cotton".into()] });
        assert_eq!(got[1].crops, ["Almonds", "Grapes"]);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = AgroStore::new();
        ingest(&mut s, IngestKind::Wildfire, "county,year,incident_name,acres\nSonoma,2019,Kincade Fire,\n").unwrap();
        s.save(dir.path()).unwrap();
        assert_eq!(AgroStore::open(dir.path()).unwrap(), s);
        assert_eq!(AgroStore::open(&dir.path().join("missing")).unwrap(), AgroStore::new());
    }
}
