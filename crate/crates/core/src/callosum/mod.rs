//! The inter-node packet protocol: typed packets, CRC-protected frames with
//! optional Reed-Solomon FEC, a direction-enforcing channel and dispatch.

pub mod channel;
pub mod crc;
pub mod frame;
pub mod gf;
pub mod packet;
pub mod router;
pub mod rs;
pub mod tcp;

pub use channel::{
    simulate_channel, Channel, ChannelEndpoint, ChannelError, ChannelMode, Direction, ErrorModel,
    Impairment, Link, SendReport, Side, WireCounters,
};
pub use crc::crc32;
pub use frame::{decode_stream, encode_frame, EncodeError, FecConfig, FrameError, MAGIC};
pub use gf::GaloisField;
pub use packet::{CallosumPacket, MsgType, MAX_PAYLOAD, PROTOCOL_VERSION};
pub use router::{HandlerError, RouteError, Router};
pub use rs::{rs_decode, rs_encode, ReedSolomon, RsError};
pub use tcp::TcpLink;
