//! Crop names for Cropland Data Layer codes common in California.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::AppError;

const CODES: &[(i64, &str)] = &[
    (1, "Corn"),
    (2, "Cotton"),
    (3, "Rice"),
    (4, "Sorghum"),
    (21, "Barley"),
    (23, "Spring Wheat"),
    (24, "Winter Wheat"),
    (36, "Alfalfa"),
    (37, "Other Hay/Non Alfalfa"),
    (42, "Dry Beans"),
    (49, "Onions"),
    (54, "Tomatoes"),
    (59, "Sod/Grass Seed"),
    (61, "Fallow/Idle Cropland"),
    (66, "Cherries"),
    (67, "Peaches"),
    (69, "Grapes"),
    (71, "Other Tree Crops"),
    (72, "Citrus"),
    (74, "Pecans"),
    (75, "Almonds"),
    (76, "Walnuts"),
    (77, "Pears"),
    (111, "Open Water"),
    (121, "Developed/Open Space"),
    (122, "Developed/Low Intensity"),
    (123, "Developed/Med Intensity"),
    (124, "Developed/High Intensity"),
    (131, "Barren"),
    (141, "Deciduous Forest"),
    (142, "Evergreen Forest"),
    (152, "Shrubland"),
    (176, "Grass/Pasture"),
    (190, "Woody Wetlands"),
    (195, "Herbaceous Wetlands"),
    (204, "Pistachios"),
    (205, "Triticale"),
    (208, "Garlic"),
    (211, "Olives"),
    (212, "Oranges"),
    (217, "Pomegranates"),
    (225, "Dbl Crop WinWht/Corn"),
    (226, "Dbl Crop Oats/Corn"),
    (228, "Dbl Crop Triticale/Corn"),
    (236, "Dbl Crop WinWht/Sorghum"),
];

pub fn builtin_names() -> BTreeMap<i64, String> {
    CODES.iter().map(|&(c, n)| (c, n.to_string())).collect()
}

/// Reads a `code,name` CSV with a header row.
pub fn read_code_names(path: &Path) -> Result<BTreeMap<i64, String>, AppError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| AppError::Data(format!("{}: {e}", path.display())))?;
    let mut out = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| AppError::Data(format!("{}: row {}: {e}", path.display(), i + 1)))?;
        let code = rec
            .get(0)
            .and_then(|c| c.parse::<i64>().ok())
            .ok_or_else(|| AppError::Data(format!("{}: row {}: code must be an integer", path.display(), i + 1)))?;
        out.insert(code, rec.get(1).unwrap_or_default().to_string());
    }
    Ok(out)
}
