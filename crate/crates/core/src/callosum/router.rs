use std::collections::HashMap;
use std::error::Error as StdError;

use thiserror::Error;

use super::packet::{CallosumPacket, MsgType};

pub type HandlerError = Box<dyn StdError + Send + Sync>;
type Handler = Box<dyn Fn(&CallosumPacket) -> Result<(), HandlerError> + Send + Sync>;

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("no handler registered for {0}")]
    NoHandlerRegistered(MsgType),
    #[error("{msg_type} handler failed: {source}")]
    Handler {
        msg_type: MsgType,
        #[source]
        source: HandlerError,
    },
}

/// Dispatch table from message type to the service that consumes it.
#[derive(Default)]
pub struct Router {
    handlers: HashMap<MsgType, Handler>,
}

impl std::fmt::Debug for Router {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut types: Vec<_> = self.handlers.keys().collect();
        types.sort();
        f.debug_struct("Router").field("handlers", &types).finish()
    }
}

impl Router {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replaces any handler already registered for `msg_type`.
    pub fn register<F>(&mut self, msg_type: MsgType, handler: F) -> &mut Self
    where
        F: Fn(&CallosumPacket) -> Result<(), HandlerError> + Send + Sync + 'static,
    {
        self.handlers.insert(msg_type, Box::new(handler));
        self
    }

    pub fn handles(&self, msg_type: MsgType) -> bool {
        self.handlers.contains_key(&msg_type)
    }

    pub fn route(&self, packet: &CallosumPacket) -> Result<(), RouteError> {
        let handler = self
            .handlers
            .get(&packet.msg_type)
            .ok_or(RouteError::NoHandlerRegistered(packet.msg_type))?;
        handler(packet).map_err(|source| RouteError::Handler {
            msg_type: packet.msg_type,
            source,
        })
    }
}
