//! Holds the `acceptance` test target. Run it with
//! `cargo test -p langlie-validation --test acceptance`.
