//! HTTP service and admin commands for the PerspectivesX tool provider.

pub mod admin;
pub mod api;
pub mod error;
pub mod transport;
