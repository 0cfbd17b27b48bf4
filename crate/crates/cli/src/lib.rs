//! Manifest-driven front end for the `germlab` library.

pub mod manifest;
pub mod run;

pub use manifest::{digest, parse_manifest, Manifest, Task};
pub use run::{render_text, report_json, run, schema_report, Outcome};
