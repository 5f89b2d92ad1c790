pub mod bits;
pub mod comm;
pub mod infer;
pub mod model;
pub mod plan;
pub mod report;
pub mod secure;
