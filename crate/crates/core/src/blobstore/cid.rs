use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::digest::{Digest, ParseDigestError};

/// Version/algorithm tag for SHA-256 content IDs (the multihash code for sha2-256).
pub const CID_TAG_SHA256: u8 = 0x12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseCidError {
    #[error("content id must be {expected} hex characters, got {got}")]
    Length { expected: usize, got: usize },
    #[error("unsupported content id tag {0:#04x}")]
    UnknownTag(u8),
    #[error(transparent)]
    Digest(#[from] ParseDigestError),
}

/// Address of a blob: a tag byte followed by the SHA-256 of its bytes.
/// Built from the same digest the ledger records, so a metadata record is
/// enough to locate its blob.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId(Digest);

impl ContentId {
    pub fn of(bytes: &[u8]) -> Self {
        ContentId(Digest::of(bytes))
    }

    pub fn from_digest(digest: Digest) -> Self {
        ContentId(digest)
    }

    pub fn digest(&self) -> Digest {
        self.0
    }

    pub fn tag(&self) -> u8 {
        CID_TAG_SHA256
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        Digest::of(bytes) == self.0
    }

    pub fn to_hex(&self) -> String {
        format!("{:02x}{}", CID_TAG_SHA256, self.0.to_hex())
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", self.to_hex())
    }
}

impl FromStr for ContentId {
    type Err = ParseCidError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 66 {
            return Err(ParseCidError::Length {
                expected: 66,
                got: s.len(),
            });
        }
        let tag = u8::from_str_radix(&s[..2], 16)
            .map_err(|_| ParseCidError::Digest(ParseDigestError::NotLowercaseHex))?;
        if tag != CID_TAG_SHA256 {
            return Err(ParseCidError::UnknownTag(tag));
        }
        Ok(ContentId(Digest::from_hex(&s[2..])?))
    }
}

impl Serialize for ContentId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_bytes_same_id() {
        assert_eq!(ContentId::of(b"x"), ContentId::of(b"x"));
        assert_ne!(ContentId::of(b"x"), ContentId::of(b"y"));
    }

    #[test]
    fn hex_form_is_tag_then_digest() {
        let cid = ContentId::of(b"");
        assert_eq!(
            cid.to_hex(),
            "12e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(cid.to_hex().parse::<ContentId>().unwrap(), cid);
        assert_eq!(ContentId::from_digest(Digest::of(b"")), cid);
    }

    #[test]
    fn parse_rejects_other_tags() {
        let s = format!("13{}", Digest::of(b"").to_hex());
        assert_eq!(s.parse::<ContentId>(), Err(ParseCidError::UnknownTag(0x13)));
        assert!(matches!(
            "12ab".parse::<ContentId>(),
            Err(ParseCidError::Length { .. })
        ));
    }
}
