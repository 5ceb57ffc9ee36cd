//! Ingestion, preprocessing, splitting and synthetic stand-ins for the three
//! use cases.

pub mod airq;
pub mod insurance;
pub mod mno;
pub mod scaler;
pub mod split;
pub mod table;

pub use airq::{
    fit_class_thresholds, interpolate_missing, load_air_quality, make_windows, select_features_airq,
    synth_air_quality, ClassThresholds, FeatureSeries, StationSeries,
};
pub use insurance::{load_insurance, preprocess_insurance, synth_insurance, InsuranceEncoder};
pub use mno::{aggregate_daily, filter_mno, load_mno, synth_mno, synth_mno_records, MnoEncoder, MnoRecord};
pub use scaler::{ScalerParams, Standardizer};
pub use split::{kfold, kfold_blocked, split};
pub use table::{Cell, LabeledTable};
