//! Two-step deduplication: exact (md5 over normalized text) and near
//! (64-bit simhash with an exact banded Hamming index).

mod exact;
mod near;
mod simhash;

pub use exact::{exact_dedup, exact_key, normalize, ExactKey};
pub use near::{brute_force_removal, near_dedup, BandedIndex, Cluster, NearDedupResult};
pub use simhash::{
    read_signatures, simhash_from_features, simhash_signature, write_signatures, SimHashSignature,
};
