pub mod bootstrap;
pub mod diagnose;
pub mod examples;
pub mod expand;
pub mod ppc;
