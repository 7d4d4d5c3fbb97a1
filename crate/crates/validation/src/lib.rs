//! Holds the `acceptance` test target; run it with
//! `cargo test -p matcap-validation --test acceptance`.
