//! Persistence and HTTP API for checklist evaluation sessions.

pub mod api;
pub mod export;
pub mod store;

pub use api::{router, AppState};
pub use export::export_session_csv;
pub use store::{Record, RecordKind, Store, StoreError};
