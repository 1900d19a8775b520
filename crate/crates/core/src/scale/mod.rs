//! The scale function s(x): a lattice of s-coordinates laid down by
//! parallel transporting reference vectors away from a reference point.

mod field;
mod plot;
mod reference;

pub use field::{build_scale, extrapolate, Rescaled, ScaleField, ScaleParams};
pub use plot::isocline_svg;
pub use reference::{derive_reference, ReferenceFrame, Segment, SegmentSpec, MAX_REFERENCE_CONDITION};
