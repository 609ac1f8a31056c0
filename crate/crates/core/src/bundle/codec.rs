//! Encoding of answer-bearing values. Bundles use padded standard Base64;
//! the [`SecretCodec`] seam exists so a stronger scheme can be slotted in.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{ForgeError, Result};

pub trait SecretCodec: Send + Sync {
    fn encode(&self, plaintext: &str) -> String;
    fn decode(&self, encoded: &str) -> Result<String>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Base64Codec;

impl SecretCodec for Base64Codec {
    fn encode(&self, plaintext: &str) -> String {
        STANDARD.encode(plaintext.as_bytes())
    }

    fn decode(&self, encoded: &str) -> Result<String> {
        let bytes = STANDARD
            .decode(encoded.as_bytes())
            .map_err(|e| ForgeError::Decode(format!("`{encoded}` is not valid Base64: {e}")))?;
        String::from_utf8(bytes).map_err(|_| ForgeError::Decode(format!("`{encoded}` does not decode to UTF-8")))
    }
}

/// RFC 4648 Base64 with padding of the UTF-8 bytes.
pub fn encode_secret(plaintext: &str) -> String {
    Base64Codec.encode(plaintext)
}

pub fn decode_secret(encoded: &str) -> Result<String> {
    Base64Codec.decode(encoded)
}
