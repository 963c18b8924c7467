#![allow(dead_code)]

pub mod fixtures;
pub mod fsm;
pub mod properties;
