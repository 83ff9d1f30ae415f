pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod mitigation;
pub mod netmodel;
pub mod report;
pub mod scc;
pub mod scenario;
pub mod spectral;
pub mod stockholm;

pub use error::{Error, Result};

/// Serializers that print zero-based virus indices the way users count them.
pub(crate) mod one_based {
    use serde::Serializer;

    pub fn index<S: Serializer>(k: &usize, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(*k as u64 + 1)
    }

    pub fn option<S: Serializer>(k: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match k {
            Some(k) => s.serialize_some(&(*k as u64 + 1)),
            None => s.serialize_none(),
        }
    }

    pub fn list<S: Serializer>(ks: &[usize], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(ks.iter().map(|k| *k as u64 + 1))
    }
}
