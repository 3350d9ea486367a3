"""AES-GCM-128 protection for data frames and discovery PDUs.

Data frames: IV is SCI(8) + packet number(4); the AAD covers the outer
Ethernet header plus the serialized SecTAG, so any header bit flip breaks
the 16-byte ICV.  Discovery PDUs: IV is a fresh 12-byte random nonce and
the AAD is the 4-byte sequence number carried in clear.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from .errors import IntegrityFailure
from .wire import (
    ETHERTYPE_MACSEC,
    ICV_LEN,
    NONCE_LEN,
    SCI_LEN,
    TCI_C,
    TCI_E,
    TCI_SC,
    EthernetFrame,
    Lldpdu,
    MacsecFrame,
    SecTag,
    SecureLldpFrame,
    short_length_for,
)

KEY_LEN = 16  # AES-GCM-128


@dataclass(frozen=True)
class Sak:
    """Secure association key."""

    key: bytes

    def __post_init__(self):
        if len(self.key) != KEY_LEN:
            raise ValueError("SAK must be 16 bytes")

    @property
    def fingerprint(self) -> str:
        """8-hex-char identifier safe to print in dumps."""
        return hashlib.sha256(self.key).hexdigest()[:8]


@dataclass(frozen=True)
class LldpKey:
    """Common discovery key plus its rotation generation counter."""

    key: bytes
    key_id: int

    def __post_init__(self):
        if len(self.key) != KEY_LEN:
            raise ValueError("LLDP key must be 16 bytes")

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(self.key).hexdigest()[:8]


def _macsec_iv(sci: bytes, pn: int) -> bytes:
    return sci + struct.pack(">I", pn)


def _macsec_aad(dst: bytes, src: bytes, sec_tag: SecTag) -> bytes:
    return dst + src + struct.pack(">H", ETHERTYPE_MACSEC) + sec_tag.to_bytes()


def macsec_protect(
    sak: Sak,
    sci: bytes,
    pn: int,
    frame: EthernetFrame,
    *,
    an: int = 0,
    confidentiality: bool = True,
) -> MacsecFrame:
    """Transform an Ethernet frame into a MACsec frame under one SA.

    The original EtherType and payload are concatenated and become the
    secure data (encrypted unless confidentiality is off, in which case
    they ride in clear and are only authenticated).
    """
    if len(sci) != SCI_LEN:
        raise ValueError("SCI must be 8 bytes")
    if pn < 1:
        raise ValueError("packet number starts at 1")
    plaintext = struct.pack(">H", frame.ether_type) + frame.payload
    tci = TCI_SC | (TCI_E | TCI_C if confidentiality else 0) | (an & 0x03)
    sec_tag = SecTag(
        tci_an=tci,
        short_length=short_length_for(len(plaintext)),
        packet_number=pn,
        sci=sci,
    )
    aad = _macsec_aad(frame.dst, frame.src, sec_tag)
    gcm = AESGCM(sak.key)
    iv = _macsec_iv(sci, pn)
    if confidentiality:
        sealed = gcm.encrypt(iv, plaintext, aad)
        secure_data, icv = sealed[:-ICV_LEN], sealed[-ICV_LEN:]
    else:
        # GMAC-style: no encryption, the ICV additionally covers the cleartext.
        icv = gcm.encrypt(iv, b"", aad + plaintext)
        secure_data = plaintext
    return MacsecFrame(dst=frame.dst, src=frame.src, sec_tag=sec_tag, secure_data=secure_data, icv=icv)


def macsec_validate(sak: Sak, frame: MacsecFrame, *, confidentiality: bool = True) -> EthernetFrame:
    """Verify the ICV and recover the original Ethernet frame.

    Raises IntegrityFailure when any bit of the header, SecTAG, secure
    data or ICV was altered (or the SAK is wrong).
    """
    aad = _macsec_aad(frame.dst, frame.src, frame.sec_tag)
    iv = _macsec_iv(frame.sec_tag.sci, frame.sec_tag.packet_number)
    gcm = AESGCM(sak.key)
    try:
        if confidentiality:
            plaintext = gcm.decrypt(iv, frame.secure_data + frame.icv, aad)
        else:
            gcm.decrypt(iv, frame.icv, aad + frame.secure_data)
            plaintext = frame.secure_data
    except InvalidTag as exc:
        raise IntegrityFailure("MACsec ICV verification failed") from exc
    if len(plaintext) < 2:
        raise IntegrityFailure("secure data too short for an EtherType")
    ether_type = struct.unpack(">H", plaintext[:2])[0]
    return EthernetFrame(dst=frame.dst, src=frame.src, ether_type=ether_type, payload=plaintext[2:])


def lldp_seal(
    key: LldpKey, nonce: bytes, seq: int, pdu: Lldpdu, src: bytes, dst: bytes
) -> SecureLldpFrame:
    """Seal a discovery PDU: encrypt it, authenticating the sequence number."""
    if len(nonce) != NONCE_LEN:
        raise ValueError("nonce must be 12 bytes")
    sealed = AESGCM(key.key).encrypt(nonce, pdu.encode(), struct.pack(">I", seq))
    return SecureLldpFrame(
        dst=dst,
        src=src,
        nonce=nonce,
        seq=seq,
        ciphertext=sealed[:-ICV_LEN],
        icv=sealed[-ICV_LEN:],
    )


def lldp_open(key: LldpKey, frame: SecureLldpFrame) -> tuple[int, Lldpdu]:
    """Verify and decrypt a sealed discovery frame.

    Raises IntegrityFailure on a bad tag (tampering, replayed nonce games,
    or a rotated-out key) and DecodeFailure when the plaintext is not a
    well-formed LLDPDU.
    """
    try:
        plaintext = AESGCM(key.key).decrypt(
            frame.nonce, frame.ciphertext + frame.icv, struct.pack(">I", frame.seq)
        )
    except InvalidTag as exc:
        raise IntegrityFailure("sealed LLDP ICV verification failed") from exc
    return frame.seq, Lldpdu.decode(plaintext)
