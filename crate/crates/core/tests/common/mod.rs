#![allow(dead_code)]

pub mod bleu_ref;
pub mod e2e;
pub mod fixtures;
pub mod oracles;
