pub mod canonical;
pub mod vdp;
pub mod callosum;
pub mod sealed;
pub mod datastore;
pub mod mind;
pub mod gateway;
pub mod node;
pub mod cli;
