//! Acceptance criteria live in `tests/acceptance.rs`; run them with
//! `cargo test -p landscape-validation --test acceptance`.
