//! Trajectory-induced metric, its Levi-Civita connection, and parallel
//! transport on a uniform grid over reduced cepstral space.

mod connection;
mod fill;
mod grid;
mod metric;
mod transport;

pub use connection::{christoffel, ConnectionField};
pub use fill::{smooth_and_fill, FillPolicy};
pub use grid::GridSpec;
pub use metric::{estimate_metric, estimate_metric_multi, MetricAccumulator, MetricField, MetricOptions};
pub use transport::{
    parallel_transport, parallel_transport_with_step, transport_along_itself, FrameState,
    STEP_FRACTION,
};
