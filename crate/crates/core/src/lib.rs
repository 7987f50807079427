//! Automated curricula for transferring crafting policies from a cheap grid world to a continuous arena.

pub mod agents;
pub mod curriculum;
pub mod env;
pub mod mapping;
pub mod metrics;
pub mod params;
pub mod seed;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/tasks.md")]
    pub mod tasks {}
    #[doc = include_str!("../../../book/src/worlds.md")]
    pub mod worlds {}
    #[doc = include_str!("../../../book/src/learners.md")]
    pub mod learners {}
    #[doc = include_str!("../../../book/src/search.md")]
    pub mod search {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    pub mod metrics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
