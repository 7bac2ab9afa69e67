#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod backend;
pub mod canonical;
pub mod contract;
pub mod error;
pub mod memory;
pub mod metrics;
pub mod mockfn;
pub mod prompts;
pub mod rag;
pub mod runtime;
pub mod script;
pub mod subscript;
pub mod trainer;
