//! Live Langlie test sessions.
//!
//! The service dictates every stimulus: a client asks for the next input,
//! runs the trial, and posts the outcome back together with the stimulus and
//! trial index it used. Each session is persisted as an append-only log of
//! JSON lines in a data directory and recovered by folding that log.

pub mod error;
pub mod http;
pub mod log;
pub mod store;

pub use error::{ErrorBody, Result, ServiceError};
pub use http::{router, serve};
pub use store::{
    Estimate, ExportFormat, NotEstimableReason, RecordRequest, SessionStore, SessionSummary, SessionView, Status,
};
