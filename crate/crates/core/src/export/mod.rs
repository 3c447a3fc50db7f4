//! Serializers: the JSON analysis bundle, CSV tables and SVG stills.

pub mod bundle;
pub mod number;
pub mod sfd;
pub mod svg;
pub mod tables;

pub use bundle::{AnalysisBundle, BundleOptions, CldVariant, SCHEMA_VERSION};
pub use number::format_number;
pub use svg::{render_svg, Diagram, RenderError, RenderStyle};
pub use tables::{export_csv, parse_csv, trajectory_csv, CsvSelector};
