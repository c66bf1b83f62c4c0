pub mod excitation;
pub mod plant;
pub mod timeseries;
pub mod hwmodel;
pub mod metrics;
pub mod estimation;
pub mod validation;
pub mod search;
pub mod closedloop;
pub mod artifact;
pub mod pipeline;
