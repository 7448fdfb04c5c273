//! Runs every code snippet in the guide as a doctest.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
