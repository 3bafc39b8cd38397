//! Command implementations behind the `kgforget` binary.
//!
//! The binary is a thin argument parser over this library, so experiments
//! can equally be driven in-process: build a [`config::RunConfig`] (usually
//! through [`config::resolve_config`]) and call the matching function in
//! [`commands`].

pub mod commands;
pub mod config;
