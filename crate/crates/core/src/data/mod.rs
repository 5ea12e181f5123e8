//! Cohort records, CSV interchange, labelling and preprocessing.

pub mod anonymize;
pub mod cohort_spec;
pub mod csv_io;
pub mod folds;
pub mod impute;
pub mod labels;
pub mod normalize;
pub mod prep;
pub mod record;
pub mod synth;

pub use csv_io::{parse_cohort, read_cohort_dir, write_cohort_dir};
pub use folds::{kfold_split, FoldPlan};
pub use impute::{feature_medians, forward_fill, forward_fill_cohort};
pub use labels::{assign_labels, LabelConfig, VisitLabel};
pub use normalize::{denormalize, zscore_normalize, FeatureStats, NormStats};
pub use record::{
    CauseOfDeath, Cohort, Outcome, OutcomeGroup, PatientRecord, Visit, BASELINE_BINARY,
    BASELINE_DIM, BASELINE_NAMES,
};
pub use cohort_spec::{CohortSpec, FeatureRole, FeatureSpec};
pub use synth::{cohort_stats, generate_synthetic, separable_cohort, CohortStats, GroundTruth, PlantedFeature};
pub use anonymize::{anonymize_cohort, anonymize_dates};
pub use prep::{ModelInput, Preprocessor, Sample};
