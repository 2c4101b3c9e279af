//! Network-facing pieces: the JSON API over a review store, and a
//! chat-completions client for remote text generation.

pub mod api;
pub mod chat;

pub use api::{router, serve, SharedStore};
pub use chat::{ChatClient, ChatConfig};
