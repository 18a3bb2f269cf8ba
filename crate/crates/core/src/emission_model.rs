//! Energy and emission coefficients plus the closed-form formulas that turn
//! resource usage into kWh and gCO2e.
//!
//! Units at every public boundary: energy in kWh, emissions in gCO2e, data in
//! decimal GB (1 TB = 1000 GB), time in hours. Storage coefficients are quoted
//! in Wh per TB-hour and are converted here.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GB_PER_TB: f64 = 1000.0;

/// Validation failure for a formula input or coefficient.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid {field}: {reason}")]
pub struct ModelError {
    pub field: String,
    pub reason: String,
}

impl ModelError {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ModelError>;

fn non_negative(field: &str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(ModelError::new(
            field,
            format!("must be finite, got {value}"),
        ));
    }
    if value < 0.0 {
        return Err(ModelError::new(field, format!("must be >= 0, got {value}")));
    }
    Ok(value)
}

/// Storage hardware class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StorageMedium {
    #[serde(rename = "HDD")]
    Hdd,
    #[serde(rename = "SSD")]
    Ssd,
}

impl fmt::Display for StorageMedium {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StorageMedium::Hdd => f.write_str("HDD"),
            StorageMedium::Ssd => f.write_str("SSD"),
        }
    }
}

/// Cloud provider. Anything that is not one of the three named providers is
/// carried through as a custom key and must have its own PUE entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Provider {
    Aws,
    Gcp,
    Azure,
    Custom(String),
}

impl Provider {
    pub fn key(&self) -> &str {
        match self {
            Provider::Aws => "AWS",
            Provider::Gcp => "GCP",
            Provider::Azure => "Azure",
            Provider::Custom(name) => name,
        }
    }
}

impl From<String> for Provider {
    fn from(s: String) -> Self {
        match s.as_str() {
            "AWS" => Provider::Aws,
            "GCP" => Provider::Gcp,
            "Azure" => Provider::Azure,
            _ => Provider::Custom(s),
        }
    }
}

impl From<Provider> for String {
    fn from(p: Provider) -> Self {
        p.key().to_string()
    }
}

impl fmt::Display for Provider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Every coefficient the accounting needs.
///
/// `network_kwh_per_gb_low` is the inter-datacenter figure and is applied to
/// intra-cloud weight exchange; `network_kwh_per_gb_high` is the average
/// internet transmission intensity and is applied to raw-data movement. The
/// low figure is published as "kWh/Gb"; it is used here as kWh per gigabyte
/// without the factor-8 conversion a gigabit reading would imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmissionFactors {
    pub storage_hdd_wh_per_tb_hour: f64,
    pub storage_ssd_wh_per_tb_hour: f64,
    pub network_kwh_per_gb_low: f64,
    pub network_kwh_per_gb_high: f64,
    pub memory_kwh_per_gb_hour: f64,
    pub redundancy_copies: u32,
    pub pue_by_provider: BTreeMap<String, f64>,
    /// gCO2eq/kWh per region. Empty by default: carbon intensity is
    /// deployment configuration.
    pub ci_by_region: BTreeMap<String, f64>,
}

impl Default for EmissionFactors {
    fn default() -> Self {
        let pue_by_provider = [("AWS", 1.135), ("GCP", 1.1), ("Azure", 1.185)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        Self {
            storage_hdd_wh_per_tb_hour: 0.65,
            storage_ssd_wh_per_tb_hour: 1.2,
            network_kwh_per_gb_low: 0.001,
            network_kwh_per_gb_high: 0.06,
            memory_kwh_per_gb_hour: 0.000392,
            redundancy_copies: 3,
            pue_by_provider,
            ci_by_region: BTreeMap::new(),
        }
    }
}

impl EmissionFactors {
    pub fn validate(&self) -> Result<()> {
        non_negative(
            "storage_hdd_wh_per_tb_hour",
            self.storage_hdd_wh_per_tb_hour,
        )?;
        non_negative(
            "storage_ssd_wh_per_tb_hour",
            self.storage_ssd_wh_per_tb_hour,
        )?;
        non_negative("network_kwh_per_gb_low", self.network_kwh_per_gb_low)?;
        non_negative("network_kwh_per_gb_high", self.network_kwh_per_gb_high)?;
        non_negative("memory_kwh_per_gb_hour", self.memory_kwh_per_gb_hour)?;
        if self.redundancy_copies < 1 {
            return Err(ModelError::new("redundancy_copies", "must be >= 1"));
        }
        for (provider, &pue) in &self.pue_by_provider {
            let field = format!("pue_by_provider.{provider}");
            if !pue.is_finite() || pue < 1.0 {
                return Err(ModelError::new(
                    field,
                    format!("PUE must be >= 1.0, got {pue}"),
                ));
            }
        }
        for (region, &ci) in &self.ci_by_region {
            non_negative(&format!("ci_by_region.{region}"), ci)?;
        }
        Ok(())
    }

    pub fn storage_wh_per_tb_hour(&self, medium: StorageMedium) -> f64 {
        match medium {
            StorageMedium::Hdd => self.storage_hdd_wh_per_tb_hour,
            StorageMedium::Ssd => self.storage_ssd_wh_per_tb_hour,
        }
    }

    pub fn pue(&self, provider: &Provider) -> Result<f64> {
        self.pue_by_provider
            .get(provider.key())
            .copied()
            .ok_or_else(|| {
                ModelError::new(format!("pue_by_provider.{provider}"), "no PUE for provider")
            })
    }

    pub fn ci(&self, region: &str) -> Result<f64> {
        self.ci_by_region.get(region).copied().ok_or_else(|| {
            ModelError::new(
                format!("ci_by_region.{region}"),
                "no carbon intensity for region",
            )
        })
    }

    /// Parses a factors document. Missing coefficients take their defaults,
    /// unknown keys are rejected.
    pub fn from_toml_str(doc: &str) -> std::result::Result<Self, FactorsFileError> {
        let de = toml::Deserializer::new(doc);
        let factors: EmissionFactors =
            serde_path_to_error::deserialize(de).map_err(|e| FactorsFileError::Parse {
                path: e.path().to_string(),
                message: e.inner().message().to_string(),
            })?;
        factors.validate()?;
        Ok(factors)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("factors always serialize")
    }
}

#[derive(Debug, Error)]
pub enum FactorsFileError {
    #[error("factors file: {path}: {message}")]
    Parse { path: String, message: String },
    #[error("factors file: {0}")]
    Invalid(#[from] ModelError),
}

/// Inputs to the software carbon intensity rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SciInputs {
    pub energy_kwh: f64,
    pub carbon_intensity_g_per_kwh: f64,
    pub embodied_g: f64,
    pub functional_units: u64,
}

/// Power draw of `unit_count` identical devices over a period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeSpec {
    pub unit_count: u32,
    pub tdp_watts: f64,
    pub load_fraction: f64,
    pub duration_hours: f64,
}

impl ComputeSpec {
    pub fn validate(&self) -> Result<()> {
        non_negative("tdp_watts", self.tdp_watts)?;
        non_negative("duration_hours", self.duration_hours)?;
        if !(0.0..=1.0).contains(&self.load_fraction) {
            return Err(ModelError::new(
                "load_fraction",
                format!("must be within [0, 1], got {}", self.load_fraction),
            ));
        }
        Ok(())
    }
}

/// Units x TDP x load x hours / 1000.
pub fn compute_energy_kwh(spec: &ComputeSpec) -> Result<f64> {
    spec.validate()?;
    Ok(
        f64::from(spec.unit_count) * spec.tdp_watts * spec.load_fraction * spec.duration_hours
            / 1000.0,
    )
}

/// Energy to keep `size_tb` on `medium` for `duration_hours`, one copy.
/// Callers multiply by `redundancy_copies` for replicated storage.
pub fn storage_energy_kwh(
    size_tb: f64,
    duration_hours: f64,
    medium: StorageMedium,
    factors: &EmissionFactors,
) -> Result<f64> {
    non_negative("size_tb", size_tb)?;
    non_negative("duration_hours", duration_hours)?;
    Ok(size_tb * duration_hours * factors.storage_wh_per_tb_hour(medium) / 1000.0)
}

pub fn network_energy_kwh(size_gb: f64, coefficient_kwh_per_gb: f64) -> Result<f64> {
    non_negative("size_gb", size_gb)?;
    non_negative("coefficient_kwh_per_gb", coefficient_kwh_per_gb)?;
    Ok(size_gb * coefficient_kwh_per_gb)
}

pub fn memory_energy_kwh(
    size_gb: f64,
    duration_hours: f64,
    factors: &EmissionFactors,
) -> Result<f64> {
    non_negative("size_gb", size_gb)?;
    non_negative("duration_hours", duration_hours)?;
    Ok(size_gb * duration_hours * factors.memory_kwh_per_gb_hour)
}

/// kWh x PUE x carbon intensity.
pub fn emissions_gco2e(energy_kwh: f64, pue: f64, ci_g_per_kwh: f64) -> Result<f64> {
    non_negative("energy_kwh", energy_kwh)?;
    if !pue.is_finite() || pue < 1.0 {
        return Err(ModelError::new("pue", format!("must be >= 1.0, got {pue}")));
    }
    non_negative("ci_g_per_kwh", ci_g_per_kwh)?;
    Ok(energy_kwh * pue * ci_g_per_kwh)
}

/// ((E x I) + M) / R.
pub fn sci_rate(inputs: &SciInputs) -> Result<f64> {
    non_negative("energy_kwh", inputs.energy_kwh)?;
    non_negative(
        "carbon_intensity_g_per_kwh",
        inputs.carbon_intensity_g_per_kwh,
    )?;
    non_negative("embodied_g", inputs.embodied_g)?;
    if inputs.functional_units == 0 {
        return Err(ModelError::new("functional_units", "must be > 0"));
    }
    Ok(
        (inputs.energy_kwh * inputs.carbon_intensity_g_per_kwh + inputs.embodied_g)
            / inputs.functional_units as f64,
    )
}
