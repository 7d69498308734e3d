// SPDX-License-Identifier: Apache-2.0

pub mod clustering;
pub mod config;
pub mod error;
pub mod feedback;
pub mod gateway;
pub mod mapping;
pub mod parallel;
pub mod pca;
pub mod prompts;
pub mod rundir;
pub mod semantic;
pub mod spec;
pub mod structural;
pub mod sva;
