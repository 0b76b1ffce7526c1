#![allow(dead_code)]

pub mod gradcheck;
pub mod parties;
pub mod reference;
pub mod stats;
