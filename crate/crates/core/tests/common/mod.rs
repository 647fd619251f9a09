#![allow(dead_code)]

pub mod kb_oracle;
pub mod mdp_oracle;
