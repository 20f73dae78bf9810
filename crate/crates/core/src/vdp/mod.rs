//! Value distribution documents: parsing, hyperlink resolution and exact
//! integer apportionment into payment instructions.

mod attribution;
mod codec;
mod distribute;
mod error;
mod model;
mod resolve;

pub use attribution::{build_attribution_vdp, Contribution};
pub use codec::{document_from_value, document_to_value, parse_vdp, parse_vdp_str, serialize_vdp};
pub use distribute::{distribute, totals_by_address, MAX_TOTAL};
pub use error::VdpError;
pub use model::{
    CryptoAddress, PaymentInstruction, ResolutionLimits, Scheme, VdpChild, VdpDocument, VdpNode,
    VDP_VERSION,
};
pub use resolve::{resolve, resolve_url, MemoryFetcher, Resolved, Resolver, VdpFetcher};
