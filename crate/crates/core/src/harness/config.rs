use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::error::{Error, Result};
use crate::neural::{Architecture, TrainConfig};
use crate::scene::{ArrayGeometry, ScenarioConfig, ScenarioTag};
use crate::stap::CovarianceSettings;
use crate::subspace::{BinPolicy, RankRule};

/// Everything one run of the transfer experiment needs. Loaded from a
/// sectioned `key = value` file; every key can be overridden on the command
/// line as `--section.key=value`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub array: ArrayGeometry,
    pub covariance: CovarianceSettings,
    pub displacement_m: f64,
    pub directions: Vec<ScenarioTag>,
    pub scnr_db: Vec<f64>,
    pub train_count: usize,
    pub test_count: usize,
    pub fsl_count: usize,
    pub calibration_count: usize,
    pub seed: u64,
    pub rank_rule: RankRule,
    pub bin_policy: BinPolicy,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub fsl: TrainConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let array = ArrayGeometry::default();
        Self {
            scenario: ScenarioConfig::original(),
            covariance: CovarianceSettings::for_channels(array.num_channels),
            array,
            displacement_m: 1000.0,
            directions: ScenarioTag::DISPLACED.to_vec(),
            scnr_db: (-4..=4).map(|i| 5.0 * i as f64).collect(),
            train_count: 4096,
            test_count: 512,
            fsl_count: 64,
            calibration_count: 256,
            seed: 2023,
            rank_rule: RankRule::default(),
            bin_policy: BinPolicy::Mean,
            architecture: Architecture::default(),
            train: TrainConfig::default(),
            fsl: TrainConfig::fine_tune(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(field, format!("cannot parse `{value}`")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::config(field, format!("expected a boolean, got `{value}`"))),
    }
}

fn parse_list<T: FromStr>(field: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(field, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

impl ExperimentConfig {
    /// Defaults, then the file (if any), then the overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(p) = path {
            let ini = Ini::load_from_file(p).map_err(|e| match e {
                ini::Error::Io(io) => Error::Io(io),
                ini::Error::Parse(pe) => Error::config(p.display().to_string(), pe.to_string()),
            })?;
            cfg.apply_ini(&ini)?;
        }
        for (key, value) in overrides {
            let (section, k) = key
                .split_once('.')
                .ok_or_else(|| Error::config(key.as_str(), "overrides must look like section.key=value"))?;
            cfg.set(section, k, value)?;
        }
        cfg.finish()
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        let mut cfg = Self::default();
        cfg.apply_ini(&ini)?;
        cfg.finish()
    }

    fn apply_ini(&mut self, ini: &Ini) -> Result<()> {
        for (section, props) in ini.iter() {
            for (k, v) in props.iter() {
                let Some(section) = section else {
                    return Err(Error::config(k, "keys must live inside a [section]"));
                };
                self.set(section, k, v)?;
            }
        }
        Ok(())
    }

    /// Re-anchors the range-bin grid after edits and validates the result.
    fn finish(mut self) -> Result<Self> {
        self.scenario.align_bins();
        self.validate()?;
        Ok(self)
    }

    pub fn set(&mut self, section: &str, key: &str, v: &str) -> Result<()> {
        let field = format!("{section}.{key}");
        let f = field.as_str();
        let s = &mut self.scenario;
        match (section, key) {
            ("scenario", "platform_north_m") => s.platform.north = parse(f, v)?,
            ("scenario", "platform_east_m") => s.platform.east = parse(f, v)?,
            ("scenario", "platform_height_m") => s.platform_height_m = parse(f, v)?,
            ("scenario", "range_min_m") => s.range_bounds_m.0 = parse(f, v)?,
            ("scenario", "range_max_m") => s.range_bounds_m.1 = parse(f, v)?,
            ("scenario", "azimuth_min_deg") => s.azimuth_bounds_deg.0 = parse(f, v)?,
            ("scenario", "azimuth_max_deg") => s.azimuth_bounds_deg.1 = parse(f, v)?,
            ("scenario", "elevation_min_deg") => s.elevation_bounds_deg.0 = parse(f, v)?,
            ("scenario", "elevation_max_deg") => s.elevation_bounds_deg.1 = parse(f, v)?,
            ("scenario", "range_resolution_m") => s.range_resolution_m = parse(f, v)?,
            ("scenario", "azimuth_resolution_deg") => s.azimuth_resolution_deg = parse(f, v)?,
            ("scenario", "elevation_resolution_deg") => s.elevation_resolution_deg = parse(f, v)?,
            ("scenario", "num_bins") => s.num_bins = parse(f, v)?,
            ("scenario", "rcs_mean") => s.rcs_mean = parse(f, v)?,
            ("scenario", "rcs_range") => s.rcs_range = parse(f, v)?,
            ("scenario", "noise_power") => s.noise_power = parse(f, v)?,
            ("scenario", "clutter_seed") => s.clutter_seed = parse(f, v)?,
            ("scenario", "num_realizations") => s.num_realizations = parse(f, v)?,

            ("array", "num_channels") => self.array.num_channels = parse(f, v)?,
            ("array", "element_spacing_m") => self.array.element_spacing_m = parse(f, v)?,
            ("array", "wavelength_m") => self.array.wavelength_m = parse(f, v)?,
            ("array", "subarray_factor") => self.array.subarray_factor = parse(f, v)?,
            ("array", "vertical_elements") => self.array.vertical_elements = parse(f, v)?,

            ("clutter", "region_north_min_m") => s.clutter.region_north_m.0 = parse(f, v)?,
            ("clutter", "region_north_max_m") => s.clutter.region_north_m.1 = parse(f, v)?,
            ("clutter", "region_east_min_m") => s.clutter.region_east_m.0 = parse(f, v)?,
            ("clutter", "region_east_max_m") => s.clutter.region_east_m.1 = parse(f, v)?,
            ("clutter", "ring_spacing_m") => s.clutter.ring_spacing_m = parse(f, v)?,
            ("clutter", "azimuth_step_deg") => s.clutter.azimuth_step_deg = parse(f, v)?,
            ("clutter", "density") => s.clutter.density = parse(f, v)?,
            ("clutter", "margin_m") => s.clutter.margin_m = parse(f, v)?,
            ("clutter", "cnr_db") => s.clutter.cnr_db = parse(f, v)?,
            ("clutter", "texture_std_db") => s.clutter.texture_std_db = parse(f, v)?,
            ("clutter", "correlation_length_m") => s.clutter.correlation_length_m = parse(f, v)?,
            ("clutter", "texture_modes") => s.clutter.texture_modes = parse(f, v)?,

            ("covariance", "columns") => self.covariance.columns = parse(f, v)?,
            ("covariance", "loading_factor") => self.covariance.loading_factor = parse(f, v)?,
            ("covariance", "shared") => self.covariance.shared = parse_bool(f, v)?,

            ("displacements", "distance_m") => self.displacement_m = parse(f, v)?,
            ("displacements", "directions") => self.directions = parse_list(f, v)?,

            ("experiment", "scnr_db") => self.scnr_db = parse_list(f, v)?,
            ("experiment", "train_count") => self.train_count = parse(f, v)?,
            ("experiment", "test_count") => self.test_count = parse(f, v)?,
            ("experiment", "fsl_count") => self.fsl_count = parse(f, v)?,
            ("experiment", "calibration_count") => self.calibration_count = parse(f, v)?,
            ("experiment", "seed") => self.seed = parse(f, v)?,

            ("subspace", "rank_rule") => self.rank_rule = parse(f, v)?,
            ("subspace", "bin_policy") => self.bin_policy = parse(f, v)?,

            ("train", "conv_channels") => {
                let c: Vec<usize> = parse_list(f, v)?;
                self.architecture.conv = c
                    .try_into()
                    .map_err(|_| Error::config(f, "expected three comma-separated widths"))?;
            }
            ("train", "hidden_units") => self.architecture.hidden = parse(f, v)?,
            ("train", "learning_rate") => self.train.learning_rate = parse(f, v)?,
            ("train", "batch_size") => self.train.batch_size = parse(f, v)?,
            ("train", "epochs") => self.train.epochs = parse(f, v)?,
            ("train", "beta1") => self.train.beta1 = parse(f, v)?,
            ("train", "beta2") => self.train.beta2 = parse(f, v)?,
            ("train", "epsilon") => self.train.epsilon = parse(f, v)?,

            ("fsl", "learning_rate") => self.fsl.learning_rate = parse(f, v)?,
            ("fsl", "batch_size") => self.fsl.batch_size = parse(f, v)?,
            ("fsl", "epochs") => self.fsl.epochs = parse(f, v)?,
            ("fsl", "anchor") => self.fsl.anchor = parse(f, v)?,

            ("output", "dir") => self.output_dir = PathBuf::from(v.trim()),
            _ => return Err(Error::config(f, "unknown configuration key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.array.validate()?;
        if self.scnr_db.is_empty() || self.scnr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("experiment.scnr_db", "need at least one finite SCNR"));
        }
        for (name, v) in [
            ("experiment.train_count", self.train_count),
            ("experiment.test_count", self.test_count),
            ("experiment.fsl_count", self.fsl_count),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if self.calibration_count < 32 {
            return Err(Error::config("experiment.calibration_count", "must be at least 32"));
        }
        if !(self.displacement_m >= 0.0) || !self.displacement_m.is_finite() {
            return Err(Error::config("displacements.distance_m", "must be nonnegative"));
        }
        if self.directions.contains(&ScenarioTag::O) {
            return Err(Error::config("displacements.directions", "O is the original, not a direction"));
        }
        if self.covariance.columns != 0 && self.covariance.columns < self.array.num_channels {
            return Err(Error::config("covariance.columns", "need 0 (exact) or at least L columns"));
        }
        if !(self.covariance.loading_factor >= 0.0) {
            return Err(Error::config("covariance.loading_factor", "must be nonnegative"));
        }
        if self.architecture.conv.contains(&0) || self.architecture.hidden == 0 {
            return Err(Error::config("train.conv_channels", "widths must be positive"));
        }
        self.train.validate()?;
        self.fsl
            .validate()
            .map_err(|e| match e {
                Error::Config { field, reason } => Error::config(field.replacen("train.", "fsl.", 1), reason),
                other => other,
            })
    }

    /// The resolved configuration in file form.
    pub fn to_ini_string(&self) -> String {
        let s = &self.scenario;
        let c = &s.clutter;
        let mut ini = Ini::new();
        ini.with_section(Some("scenario"))
            .set("platform_north_m", s.platform.north.to_string())
            .set("platform_east_m", s.platform.east.to_string())
            .set("platform_height_m", s.platform_height_m.to_string())
            .set("range_min_m", s.range_bounds_m.0.to_string())
            .set("range_max_m", s.range_bounds_m.1.to_string())
            .set("azimuth_min_deg", s.azimuth_bounds_deg.0.to_string())
            .set("azimuth_max_deg", s.azimuth_bounds_deg.1.to_string())
            .set("elevation_min_deg", s.elevation_bounds_deg.0.to_string())
            .set("elevation_max_deg", s.elevation_bounds_deg.1.to_string())
            .set("range_resolution_m", s.range_resolution_m.to_string())
            .set("azimuth_resolution_deg", s.azimuth_resolution_deg.to_string())
            .set("elevation_resolution_deg", s.elevation_resolution_deg.to_string())
            .set("num_bins", s.num_bins.to_string())
            .set("rcs_mean", s.rcs_mean.to_string())
            .set("rcs_range", s.rcs_range.to_string())
            .set("noise_power", s.noise_power.to_string())
            .set("clutter_seed", s.clutter_seed.to_string())
            .set("num_realizations", s.num_realizations.to_string());
        ini.with_section(Some("array"))
            .set("num_channels", self.array.num_channels.to_string())
            .set("element_spacing_m", self.array.element_spacing_m.to_string())
            .set("wavelength_m", self.array.wavelength_m.to_string())
            .set("subarray_factor", self.array.subarray_factor.to_string())
            .set("vertical_elements", self.array.vertical_elements.to_string());
        ini.with_section(Some("clutter"))
            .set("region_north_min_m", c.region_north_m.0.to_string())
            .set("region_north_max_m", c.region_north_m.1.to_string())
            .set("region_east_min_m", c.region_east_m.0.to_string())
            .set("region_east_max_m", c.region_east_m.1.to_string())
            .set("ring_spacing_m", c.ring_spacing_m.to_string())
            .set("azimuth_step_deg", c.azimuth_step_deg.to_string())
            .set("density", c.density.to_string())
            .set("margin_m", c.margin_m.to_string())
            .set("cnr_db", c.cnr_db.to_string())
            .set("texture_std_db", c.texture_std_db.to_string())
            .set("correlation_length_m", c.correlation_length_m.to_string())
            .set("texture_modes", c.texture_modes.to_string());
        ini.with_section(Some("covariance"))
            .set("columns", self.covariance.columns.to_string())
            .set("loading_factor", self.covariance.loading_factor.to_string())
            .set("shared", self.covariance.shared.to_string());
        ini.with_section(Some("displacements"))
            .set("distance_m", self.displacement_m.to_string())
            .set("directions", join(&self.directions));
        ini.with_section(Some("experiment"))
            .set("scnr_db", join(&self.scnr_db))
            .set("train_count", self.train_count.to_string())
            .set("test_count", self.test_count.to_string())
            .set("fsl_count", self.fsl_count.to_string())
            .set("calibration_count", self.calibration_count.to_string())
            .set("seed", self.seed.to_string());
        ini.with_section(Some("subspace"))
            .set("rank_rule", self.rank_rule.to_string())
            .set("bin_policy", self.bin_policy.to_string());
        ini.with_section(Some("train"))
            .set("conv_channels", join(&self.architecture.conv))
            .set("hidden_units", self.architecture.hidden.to_string())
            .set("learning_rate", self.train.learning_rate.to_string())
            .set("batch_size", self.train.batch_size.to_string())
            .set("epochs", self.train.epochs.to_string())
            .set("beta1", self.train.beta1.to_string())
            .set("beta2", self.train.beta2.to_string())
            .set("epsilon", self.train.epsilon.to_string());
        ini.with_section(Some("fsl"))
            .set("learning_rate", self.fsl.learning_rate.to_string())
            .set("batch_size", self.fsl.batch_size.to_string())
            .set("epochs", self.fsl.epochs.to_string())
            .set("anchor", self.fsl.anchor.to_string());
        ini.with_section(Some("output")).set("dir", self.output_dir.display().to_string());
        let mut buf = Vec::new();
        ini.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ini output is utf-8")
    }
}
