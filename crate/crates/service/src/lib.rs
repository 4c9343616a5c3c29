//! HTTP query service for a multi-view object index.
//!
//! Clients open a session, post views one at a time (images or MVDS
//! descriptor files) and finalize to get the fused ranking. Matching of
//! each view starts as soon as it arrives.

pub mod http;
pub mod session;

pub use http::{router, serve, ServeError};
pub use session::{SessionError, SessionManager, SessionRequest};
