//! Documents, plan verification and instance generation.

pub mod document;
pub mod generate;
pub mod plan;
pub mod verify;

pub use document::{parse_instance, serialize_instance, DocumentError, InstanceDocument};
pub use generate::{generate_instance, GenerateError, GeneratorParams};
pub use plan::PlanDocument;
pub use verify::{verify_composition, verify_plan, Step, Verdict};
