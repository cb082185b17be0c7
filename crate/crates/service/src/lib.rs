//! HTTP service and CLI over the queuelens view engine.

pub mod cli;
pub mod service;
