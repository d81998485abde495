pub mod annotation;
pub mod backends;
pub mod cli;
pub mod commands;
pub mod config;
pub mod gateway;
pub mod io;
