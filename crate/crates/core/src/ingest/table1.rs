//! Built-in registry of the area-level SDoH and environmental sources
//! (metadata only; values are loaded separately).

use super::IngestError;
use crate::catalog::{CatalogStore, DatasetDescriptor, Domain, SpatialScale};
use crate::geo::GeoLevel;

const AHRQ: &str = "Agency for Healthcare research and Quality (AHRQ)";
const CDC: &str = "Centers for Disease Control (CDC)";
const HHS_HUB: &str = "HHS Protect Public Data Hub";
const HRSA: &str = "Health Resources & Services Administration (HRSA)";
const USDA: &str = "U.S. Department of Agriculture";
const EPA: &str = "United States Environmental Protection Agency (EPA)";
const COI: &str = "diversitydatakids.org";

use GeoLevel::{BlockGroup, Cbsa, County, State, Tract};
use SpatialScale::Point;

/// (id, display name, source organization, variable count, scale, domain)
type SeedRow = (&'static str, &'static str, &'static str, u32, SpatialScale, Domain);

const fn lv(level: GeoLevel) -> SpatialScale {
    SpatialScale::Level(level)
}

pub const SEED: [SeedRow; 41] = [
    ("ahrq_sdoh", "Social Determinants of Health (SDOH) Database", AHRQ, 405, lv(Tract), Domain::SDoH),
    ("svi", "Social Vulnerability Index (SVI)", CDC, 158, lv(Tract), Domain::SDoH),
    ("eji", "Environmental Justice Index (EJI)", CDC, 117, lv(Tract), Domain::SDoH),
    ("adi", "Area Deprivation Index (ADI)", "Neighborhood Atlas Area Deprivation Index (ADI)", 4, lv(Tract), Domain::SDoH),
    ("districts_full_list", "DistrictsFullList New", HHS_HUB, 70, lv(Tract), Domain::SDoH),
    (
        "covid19_hospital_capacity",
        "COVID-19 Reported Patient Impact and Hospital Capacity by Facility",
        "U.S. Department of Health & Human Services",
        128,
        lv(County),
        Domain::SDoH,
    ),
    ("covid19_lab_testing", "COVID-19 Diagnostic Lab Testing", HHS_HUB, 9, lv(State), Domain::SDoH),
    ("hospital_data_coverage", "Hospital Data Coverage Report", HHS_HUB, 147, lv(Tract), Domain::SDoH),
    ("ahrf_diversity", "Area Health Resources Files Diversity Dashboard Data", HRSA, 38, lv(State), Domain::SDoH),
    ("ahrf_county", "Area Health Resources Files (county)", HRSA, 4306, lv(County), Domain::SDoH),
    ("ahrf_state_national", "Area Health Resources Files (State and National)", HRSA, 1432, lv(State), Domain::SDoH),
    ("ucr_crime_state", "Crime in the United States, by State", "Uniform Crime Reporting (UCR)", 84, lv(State), Domain::SDoH),
    ("food_environment_atlas", "Food Environment Atlas", "United States department of agriculture (USDA)", 293, lv(County), Domain::SDoH),
    ("food_access_atlas", "Food Access Research Atlas", "USDA Food Access Research Atlas (FARA)", 147, lv(Tract), Domain::SDoH),
    ("walkability", "National Walkability Index", EPA, 117, lv(BlockGroup), Domain::SDoH),
    ("sdi", "Social Deprivation Index (SDI)", "Robert Graham Center (RGC)", 18, lv(Tract), Domain::SDoH),
    ("coi_child_population", "Child Opportunity Index (COI) Child population data", COI, 8, lv(Tract), Domain::SDoH),
    (
        "coi_overall",
        "Child Opportunity Index (COI) COI 3.0 overall index and three domains",
        COI,
        38,
        lv(Tract),
        Domain::SDoH,
    ),
    ("coi_subdomains", "Child Opportunity Index (COI) subdomains", COI, 128, lv(Tract), Domain::SDoH),
    ("ruca", "Rural-Urban Commuting Area Codes", USDA, 6, lv(Tract), Domain::SDoH),
    ("poverty_area", "Poverty Area Measures", USDA, 24, lv(Tract), Domain::SDoH),
    ("ozone_daily", "Ozone (daily)", EPA, 28, Point, Domain::Environment),
    ("co_daily", "CO (daily)", EPA, 28, Point, Domain::Environment),
    ("no2_daily", "NO2 (daily)", EPA, 28, Point, Domain::Environment),
    ("so2_daily", "SO2 (daily)", EPA, 28, Point, Domain::Environment),
    ("pm25_frm_daily", "PM2.5 FRM/FEM Mass (88101) (daily)", EPA, 28, Point, Domain::Environment),
    ("pm25_non_frm_daily", "PM2.5 non FRM/FEM Mass (88502) (daily)", EPA, 28, Point, Domain::Environment),
    ("pm25_speciation_daily", "PM2.5 Speciation(daily)", EPA, 28, Point, Domain::Environment),
    ("pm10_mass_daily", "PM10 Mass (81102) (daily)", EPA, 28, Point, Domain::Environment),
    ("pm10_speciation_daily", "PM10 Speciation(daily)", EPA, 28, Point, Domain::Environment),
    ("pmc_mass_daily", "PMc Mass (86101) (daily)", EPA, 28, Point, Domain::Environment),
    ("pressure_daily", "Barometric Pressure (64101) (daily)", EPA, 28, Point, Domain::Environment),
    ("rh_dewpoint_daily", "RH and Dewpoint(daily)", EPA, 28, Point, Domain::Environment),
    ("temperature_daily", "Temperature (62101) (daily)", EPA, 28, Point, Domain::Environment),
    ("winds_daily", "Winds (Resultant)(daily)", EPA, 28, Point, Domain::Environment),
    ("haps_daily", "HAPs(daily)", EPA, 28, Point, Domain::Environment),
    ("lead_daily", "Lead(daily)", EPA, 28, Point, Domain::Environment),
    ("nonoxnoy_daily", "NONOxNOy(daily)", EPA, 28, Point, Domain::Environment),
    ("vocs_daily", "VOCs(daily)", EPA, 28, Point, Domain::Environment),
    ("aqi_county", "Daily AQI by County", EPA, 8, lv(County), Domain::Environment),
    ("aqi_cbsa", "Daily AQI by CBSA", EPA, 8, lv(Cbsa), Domain::Environment),
];

pub fn seed_descriptors() -> Vec<DatasetDescriptor> {
    SEED.iter()
        .map(|&(id, name, org, count, scale, domain)| {
            let mut d = DatasetDescriptor::new(id, name, org, count, scale, domain);
            d.access_note = "metadata only; load values with dataset ingest".to_string();
            d
        })
        .collect()
}

/// Registers every built-in descriptor into an empty store.
pub fn seed_table1_registry(store: &CatalogStore) -> Result<usize, IngestError> {
    if !store.is_empty()? {
        return Err(IngestError::NonEmptyRegistry);
    }
    let descriptors = seed_descriptors();
    for d in &descriptors {
        store.register_source(d)?;
    }
    Ok(descriptors.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogFilter;
    use std::collections::HashSet;

    #[test]
    fn seed_is_complete_and_unique() {
        let ids: HashSet<_> = SEED.iter().map(|r| r.0).collect();
        assert_eq!(ids.len(), 41);
        let names: HashSet<_> = SEED.iter().map(|r| r.1).collect();
        assert_eq!(names.len(), 41);
        assert_eq!(SEED.iter().filter(|r| r.4 == Point).count(), 18);
        for d in seed_descriptors() {
            d.validate().unwrap();
        }
    }

    #[test]
    fn seeding_twice_fails() {
        let dir = tempfile::tempdir().unwrap();
        let store = CatalogStore::open(dir.path()).unwrap();
        assert_eq!(seed_table1_registry(&store).unwrap(), 41);
        assert!(matches!(seed_table1_registry(&store), Err(IngestError::NonEmptyRegistry)));
        let food = store.descriptor("food_environment_atlas").unwrap();
        assert_eq!(food.source_org, "United States department of agriculture (USDA)");
        assert_eq!((food.variable_count, food.spatial_scale, food.domain), (293, lv(County), Domain::SDoH));
        let cbsa = store.descriptor("aqi_cbsa").unwrap();
        assert_eq!((cbsa.variable_count, cbsa.spatial_scale, cbsa.domain), (8, lv(Cbsa), Domain::Environment));

        let tract: Vec<String> = store
            .list_catalog(&CatalogFilter { scale: Some(lv(Tract)), ..Default::default() })
            .unwrap()
            .into_iter()
            .map(|d| d.display_name)
            .collect();
        for name in ["Social Vulnerability Index (SVI)", "Environmental Justice Index (EJI)", "Area Deprivation Index (ADI)"] {
            assert!(tract.iter().any(|n| n == name), "{name}");
        }
        assert!(!tract.iter().any(|n| n == "Daily AQI by County"));
    }
}
