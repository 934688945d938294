"""Curve25519-based authenticated encryption and stream framing.

Each device holds a static X25519 keypair; the server holds one too.
Sender and receiver derive a shared key by X25519 agreement + HKDF and
seal the report body with ChaCha20-Poly1305.  Envelope layout on the wire:

    version (1 byte) || sender public key (32) || nonce (12) || ciphertext

Messages travel over a reliable stream framed by a 4-byte big-endian
length prefix.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from ..errors import AuthenticationFailed, BadKey

PROTOCOL_VERSION = 1
NONCE_BYTES = 12
KEY_BYTES = 32
MAX_FRAME_BYTES = 1024 * 1024

_HKDF_INFO = b"avt-telemetry-v1"


def generate_keypair() -> tuple[bytes, bytes]:
    """Fresh X25519 (secret, public) key bytes."""
    sk = X25519PrivateKey.generate()
    return (
        sk.private_bytes(
            serialization.Encoding.Raw,
            serialization.PrivateFormat.Raw,
            serialization.NoEncryption(),
        ),
        sk.public_key().public_bytes(
            serialization.Encoding.Raw, serialization.PublicFormat.Raw
        ),
    )


def public_key_of(secret: bytes) -> bytes:
    return (
        _load_secret(secret)
        .public_key()
        .public_bytes(serialization.Encoding.Raw, serialization.PublicFormat.Raw)
    )


def _load_secret(secret: bytes) -> X25519PrivateKey:
    if not isinstance(secret, (bytes, bytearray)) or len(secret) != KEY_BYTES:
        raise BadKey("secret key must be 32 bytes")
    try:
        return X25519PrivateKey.from_private_bytes(bytes(secret))
    except Exception as e:
        raise BadKey(str(e)) from e


def _load_public(public: bytes) -> X25519PublicKey:
    if not isinstance(public, (bytes, bytearray)) or len(public) != KEY_BYTES:
        raise BadKey("public key must be 32 bytes")
    try:
        return X25519PublicKey.from_public_bytes(bytes(public))
    except Exception as e:
        raise BadKey(str(e)) from e


def _derive_key(secret: bytes, public: bytes) -> bytes:
    shared = _load_secret(secret).exchange(_load_public(public))
    return HKDF(
        algorithm=hashes.SHA256(), length=KEY_BYTES, salt=None, info=_HKDF_INFO
    ).derive(shared)


@dataclass(frozen=True)
class TelemetryEnvelope:
    version: int
    sender_public: bytes
    nonce: bytes
    ciphertext: bytes

    def to_bytes(self) -> bytes:
        return (
            bytes([self.version]) + self.sender_public + self.nonce + self.ciphertext
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> "TelemetryEnvelope":
        if len(data) < 1 + KEY_BYTES + NONCE_BYTES + 16:
            raise ValueError("envelope too short")
        version = data[0]
        if version != PROTOCOL_VERSION:
            raise ValueError(f"unsupported protocol version {version}")
        return cls(
            version=version,
            sender_public=data[1 : 1 + KEY_BYTES],
            nonce=data[1 + KEY_BYTES : 1 + KEY_BYTES + NONCE_BYTES],
            ciphertext=data[1 + KEY_BYTES + NONCE_BYTES :],
        )


def seal(plaintext: bytes, device_secret: bytes, server_public: bytes) -> TelemetryEnvelope:
    """Encrypt and authenticate a message body with a fresh nonce."""
    key = _derive_key(device_secret, server_public)
    nonce = os.urandom(NONCE_BYTES)
    sender_public = public_key_of(device_secret)
    aad = bytes([PROTOCOL_VERSION]) + sender_public
    ciphertext = ChaCha20Poly1305(key).encrypt(nonce, plaintext, aad)
    return TelemetryEnvelope(
        version=PROTOCOL_VERSION,
        sender_public=sender_public,
        nonce=nonce,
        ciphertext=ciphertext,
    )


def open_sealed(env: TelemetryEnvelope, server_secret: bytes) -> bytes:
    """Decrypt an envelope; raises AuthenticationFailed on any modification."""
    key = _derive_key(server_secret, env.sender_public)
    aad = bytes([env.version]) + env.sender_public
    try:
        return ChaCha20Poly1305(key).decrypt(env.nonce, env.ciphertext, aad)
    except InvalidTag as e:
        raise AuthenticationFailed("envelope failed authentication") from e


def seal_report(report, device_secret: bytes, server_public: bytes) -> TelemetryEnvelope:
    """Seal a StatusReport; see reports.StatusReport for the body schema."""
    return seal(report.to_json_bytes(), device_secret, server_public)


def open_envelope(env: TelemetryEnvelope, registry) -> tuple[int, "object"]:
    """Registry-checked decrypt; see reports.DeviceRegistry.open_envelope."""
    return registry.open_envelope(env)


def frame_message(payload: bytes) -> bytes:
    """4-byte big-endian length prefix + payload."""
    if len(payload) > MAX_FRAME_BYTES:
        raise ValueError("frame too large")
    return struct.pack(">I", len(payload)) + payload


def decode_frames(data: bytes) -> tuple[list[bytes], int, bytes]:
    """Split a byte stream into frames.

    Returns (frames, error_count, trailing_incomplete_bytes).  A declared
    length above MAX_FRAME_BYTES is treated as corruption: the rest of the
    buffer is dropped and counted as one error.
    """
    frames: list[bytes] = []
    errors = 0
    pos = 0
    while len(data) - pos >= 4:
        (length,) = struct.unpack_from(">I", data, pos)
        if length > MAX_FRAME_BYTES:
            return frames, errors + 1, b""
        if len(data) - pos - 4 < length:
            break
        frames.append(data[pos + 4 : pos + 4 + length])
        pos += 4 + length
    return frames, errors, data[pos:]
