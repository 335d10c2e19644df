pub mod dataset;
pub mod kv;
pub mod model;
pub mod preprocess;
pub mod service;
pub mod skeletal;
pub mod sweep;
