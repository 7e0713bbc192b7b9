//! IPv6 access-network reconnaissance toolkit.
//!
//! The crate covers the full desk-scale pipeline for surveying residential
//! IPv6 deployments:
//!
//! - [`addr`] — 128-bit address and prefix arithmetic, parsing, formatting.
//! - [`zorder`] — Z-order-curve mapping of the address space onto a
//!   2^64 x 2^64 grid and heatmap rendering of prefix hitlists.
//! - [`schedule`] — target-range enumeration in reverse IP-sequential order,
//!   multi-range interleaving, and 32-bit probe-token packing.
//! - [`codec`] — bit-exact ICMPv6 echo-request probes carrying an HMAC over
//!   the token, plus validation and parsing of echo replies and ICMPv6
//!   error responses.
//! - [`engine`] — the scan loop: paced transmission over a schedule,
//!   stateless response validation, and the ZIP result archive.
//! - [`simnet`] — a deterministic simulated access-provider network used as
//!   a transport for closed-loop testing: customer prefix pools, CPEs with
//!   configurable interface-identifier generation, silent or looping
//!   infrastructure, and ICMPv6 rate limiting.
//! - [`analysis`] — hitlist aggregation, interface-identifier
//!   classification and vendor attribution, probe-target sampling, and
//!   prefix-of-responsibility inference.
//!
//! Every capability has a runnable demo under `examples/`; the `v6recon`
//! binary exposes the same operations as batch subcommands.

#![forbid(unsafe_code)]

pub mod addr;
pub mod analysis;
pub mod archive;
pub mod codec;
pub mod engine;
pub mod rng;
pub mod schedule;
pub mod simnet;
pub(crate) mod timefmt;
pub mod zorder;

pub use addr::{AddrError, Address128, Prefix};
pub use schedule::{ProbeToken, TargetRange};
