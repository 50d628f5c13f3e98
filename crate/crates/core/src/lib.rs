pub mod cli;
pub mod composer;
pub mod io;
pub mod knowledge;
pub mod matcher;
pub mod ontology;
pub mod service;
