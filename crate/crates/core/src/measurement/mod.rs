//! Device placement and noisy measurement synthesis.

mod allocation;
mod propagation;
mod sampling;

pub use allocation::{allocate, AllocationRules, DeviceCounts, MeasurementAllocation, PmuMode};
pub use propagation::{var_product, var_sum, var_sum_all};
pub use sampling::{
    sample, Channel, MeasurementSet, NoiseMode, PmuCurrent, PmuRecord, RtuMode, RtuReadingSample, RtuRecord,
    StdDevConfig, MEASUREMENT_SCHEMA, NEAR_ZERO,
};
