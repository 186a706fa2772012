//! Acceptance gate for `cvtele`; the criteria live in `tests/acceptance.rs`
//! and run after the library's own tests.
