//! Request dispatcher mapping wire messages onto node operations.

use crate::types::NodeId;

use super::{ErrorCode, WireMessage};

/// Context available to a node while handling one message.
#[derive(Debug, Clone)]
pub struct DispatchCtx {
    /// Sender of the message being handled.
    pub from: NodeId,
    /// Virtual time of delivery.
    pub now: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum OutboundTarget {
    Node(NodeId),
    Broadcast,
}

/// A message a handler wants delivered after it returns.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub target: OutboundTarget,
    pub message: WireMessage,
}

impl Outbound {
    pub fn to(node: NodeId, message: WireMessage) -> Self {
        Outbound { target: OutboundTarget::Node(node), message }
    }

    pub fn broadcast(message: WireMessage) -> Self {
        Outbound { target: OutboundTarget::Broadcast, message }
    }
}

/// Result of handling one wire message: an optional direct response to the
/// sender plus any number of additional outbound messages.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct HandleOutput {
    pub response: Option<WireMessage>,
    pub outbound: Vec<Outbound>,
}

impl HandleOutput {
    pub fn none() -> Self {
        HandleOutput::default()
    }

    pub fn respond(message: WireMessage) -> Self {
        HandleOutput { response: Some(message), outbound: Vec::new() }
    }

    pub fn with(mut self, outbound: Outbound) -> Self {
        self.outbound.push(outbound);
        self
    }
}

/// A node that accepts wire messages. Returning `None` marks the kind as
/// unroutable for this node.
pub trait WireHandler {
    fn wire_id(&self) -> &NodeId;

    fn handle_wire(&mut self, message: &WireMessage, ctx: &DispatchCtx) -> Option<HandleOutput>;
}

/// Route `message` to `node` and produce its direct response, if any.
///
/// Request kinds answer with their response kind (or an `error` body carrying
/// a stable code); notification kinds produce no response. A kind the node
/// does not accept yields an `error` response with code `UNROUTABLE_KIND`.
pub fn dispatch(
    node: &mut dyn WireHandler,
    message: &WireMessage,
    ctx: &DispatchCtx,
) -> Option<WireMessage> {
    match node.handle_wire(message, ctx) {
        Some(output) => output.response,
        None => Some(WireMessage::error(
            message.correlation_id.clone(),
            ErrorCode::UnroutableKind,
            format!("{} does not accept {}", node.wire_id(), message.kind()),
        )),
    }
}
