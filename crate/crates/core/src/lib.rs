#![no_std]
extern crate alloc;

pub mod element;
pub mod error;
pub mod fem;
pub mod homogenization;
pub mod material;
pub mod mesh;
pub mod mma;
pub mod optimizer;
pub mod sensitivity;
mod par;
pub mod sparse;
pub mod stability;
pub mod system;
pub mod tensor;
pub mod tile;

pub use error::{Error, Result};
