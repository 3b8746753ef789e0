//! Path authentication and forwarding validation for inter-domain routing,
//! built on per-hop forwarding commitments (FCs).
//!
//! Modules, bottom up: `crypto` (keys and signatures), `trust` (AS registry,
//! prefix ownership, deployment status), `fc` (forwarding commitments),
//! `wire` (BGP update codec and fixtures), `speaker` (per-AS BGP engine with
//! path classification), `binding` (forward-binding messages and packet
//! filters), `sync` (version views and the RBC consistency check), `simnet`
//! (deterministic discrete-event simulator and attack harnesses), `analysis`
//! (topology metrics: hijacking and filtering rates, churn), `par`
//! (parallel/sequential map).

pub mod analysis;
pub mod binding;
pub mod crypto;
pub mod fc;
pub mod par;
pub mod simnet;
pub mod speaker;
pub mod sync;
pub mod trust;
pub mod wire;

pub use crypto::{PublicKey, SecretKey};
pub use fc::{canonical_digest, sign_fc, verify_fc, ForwardingCommitment, Pathlet};
pub use speaker::{classify_path, select_route, PathClass, Speaker};
pub use trust::{AsNumber, KeyStore, Prefix, TrustBase};
