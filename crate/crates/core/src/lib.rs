//! Core library for detecting architectural patterns in source repositories.

pub mod config;
pub mod detector;
pub mod evaluation;
pub mod prioritizer;
pub mod profile;
pub mod provider;
pub mod scanner;
pub mod text;
pub mod vector_store;
