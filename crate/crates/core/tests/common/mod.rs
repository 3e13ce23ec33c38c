#![allow(dead_code)]

pub mod hitting;
pub mod lcp;
