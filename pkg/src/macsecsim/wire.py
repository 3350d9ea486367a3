"""Byte-exact encode/decode for the three frame classes on the wire.

Multi-byte integers are big-endian throughout.  Three frame classes are
dispatched on the EtherType at offset 12:

* plain Ethernet            dst(6) src(6) type(2) payload
* MACsec (type 0x88E5)      dst(6) src(6) type(2) sectag(14) secure_data icv(16)
* sealed LLDP (type 0x88CC) dst(6) src(6) type(2) nonce(12) seq(4) ciphertext icv(16)

The SecTAG is tci_an(1) short_length(1) packet_number(4) sci(8); the SCI is
always present (SC bit set on every frame this code emits).  No FCS is
modeled.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .errors import DecodeFailure, TruncatedFrame

ETHERTYPE_MACSEC = 0x88E5
ETHERTYPE_LLDP = 0x88CC
ETHERTYPE_IPV4 = 0x0800

LLDP_MULTICAST = bytes.fromhex("0180c200000e")

ETH_HEADER_LEN = 14
SECTAG_LEN = 14
ICV_LEN = 16
NONCE_LEN = 12
SCI_LEN = 8
MAX_PN = 2**32 - 1

# TCI bits within tci_an (low two bits carry the AN)
TCI_SC = 0x20  # SCI explicitly present
TCI_E = 0x08   # secure_data is encrypted
TCI_C = 0x04   # ICV covers changed (encrypted) user data

_MIN_MACSEC = ETH_HEADER_LEN + SECTAG_LEN + 2 + ICV_LEN
_MIN_LLDP = ETH_HEADER_LEN + NONCE_LEN + 4 + ICV_LEN


def mac_to_str(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def mac_from_str(text: str) -> bytes:
    parts = text.split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC address {text!r}")
    return bytes(int(p, 16) for p in parts)


def is_group_mac(mac: bytes) -> bool:
    """Broadcast/multicast destination (I/G bit of the first octet)."""
    return bool(mac[0] & 0x01)


def make_sci(switch_mac: bytes, port: int) -> bytes:
    """SCI = sender switch MAC (6) + sender egress port (2)."""
    return switch_mac + struct.pack(">H", port)


@dataclass(frozen=True)
class EthernetFrame:
    dst: bytes
    src: bytes
    ether_type: int
    payload: bytes

    def __post_init__(self):
        if len(self.dst) != 6 or len(self.src) != 6:
            raise ValueError("MAC addresses must be 6 bytes")
        if not 0 <= self.ether_type <= 0xFFFF:
            raise ValueError("ether_type out of range")

    def to_bytes(self) -> bytes:
        return self.dst + self.src + struct.pack(">H", self.ether_type) + self.payload


@dataclass(frozen=True)
class SecTag:
    tci_an: int
    short_length: int
    packet_number: int
    sci: bytes

    def __post_init__(self):
        if len(self.sci) != SCI_LEN:
            raise ValueError("SCI must be 8 bytes")
        if not 0 <= self.packet_number <= MAX_PN:
            raise ValueError("packet number out of range")

    @property
    def an(self) -> int:
        return self.tci_an & 0x03

    def to_bytes(self) -> bytes:
        return struct.pack(">BBI", self.tci_an, self.short_length, self.packet_number) + self.sci

    @classmethod
    def from_bytes(cls, data: bytes) -> "SecTag":
        tci_an, sl, pn = struct.unpack(">BBI", data[:6])
        return cls(tci_an=tci_an, short_length=sl, packet_number=pn, sci=data[6:14])


def short_length_for(secure_data_len: int) -> int:
    """SL field value: the secure-data length when below 48, else 0."""
    return secure_data_len if secure_data_len < 48 else 0


@dataclass(frozen=True)
class MacsecFrame:
    dst: bytes
    src: bytes
    sec_tag: SecTag
    secure_data: bytes
    icv: bytes

    ether_type = ETHERTYPE_MACSEC

    def __post_init__(self):
        if len(self.dst) != 6 or len(self.src) != 6:
            raise ValueError("MAC addresses must be 6 bytes")
        if len(self.icv) != ICV_LEN:
            raise ValueError("ICV must be 16 bytes")
        if len(self.secure_data) < 2:
            raise ValueError("secure data carries at least the original EtherType")

    def to_bytes(self) -> bytes:
        return (
            self.dst
            + self.src
            + struct.pack(">H", ETHERTYPE_MACSEC)
            + self.sec_tag.to_bytes()
            + self.secure_data
            + self.icv
        )


@dataclass(frozen=True)
class SecureLldpFrame:
    dst: bytes
    src: bytes
    nonce: bytes
    seq: int
    ciphertext: bytes
    icv: bytes

    ether_type = ETHERTYPE_LLDP

    def __post_init__(self):
        if len(self.dst) != 6 or len(self.src) != 6:
            raise ValueError("MAC addresses must be 6 bytes")
        if len(self.nonce) != NONCE_LEN:
            raise ValueError("nonce must be 12 bytes")
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise ValueError("seq out of range")
        if len(self.icv) != ICV_LEN:
            raise ValueError("ICV must be 16 bytes")

    def to_bytes(self) -> bytes:
        return (
            self.dst
            + self.src
            + struct.pack(">H", ETHERTYPE_LLDP)
            + self.nonce
            + struct.pack(">I", self.seq)
            + self.ciphertext
            + self.icv
        )


Frame = EthernetFrame | MacsecFrame | SecureLldpFrame

# LLDPDU TLV types
_TLV_END = 0
_TLV_CHASSIS_ID = 1
_TLV_PORT_ID = 2


def _tlv(tlv_type: int, value: bytes) -> bytes:
    return struct.pack(">H", (tlv_type << 9) | len(value)) + value


@dataclass(frozen=True)
class Lldpdu:
    """Discovery payload: Chassis ID, Port ID, End — in that order."""

    chassis_id: bytes
    port_id: int

    def __post_init__(self):
        if not 0 < len(self.chassis_id) <= 64:
            raise ValueError("chassis id must be 1..64 bytes")
        if not 0 <= self.port_id <= 0xFFFF:
            raise ValueError("port id out of range")

    def encode(self) -> bytes:
        return (
            _tlv(_TLV_CHASSIS_ID, self.chassis_id)
            + _tlv(_TLV_PORT_ID, struct.pack(">H", self.port_id))
            + _tlv(_TLV_END, b"")
        )

    @classmethod
    def decode(cls, data: bytes) -> "Lldpdu":
        fields = {}
        offset = 0
        for expected in (_TLV_CHASSIS_ID, _TLV_PORT_ID, _TLV_END):
            if len(data) < offset + 2:
                raise DecodeFailure("LLDPDU ends mid-TLV")
            header = struct.unpack(">H", data[offset : offset + 2])[0]
            tlv_type, length = header >> 9, header & 0x1FF
            offset += 2
            if tlv_type != expected:
                raise DecodeFailure(f"expected TLV {expected}, found {tlv_type}")
            if len(data) < offset + length:
                raise DecodeFailure("TLV value truncated")
            fields[tlv_type] = data[offset : offset + length]
            offset += length
        if offset != len(data):
            raise DecodeFailure("trailing bytes after End TLV")
        if len(fields[_TLV_PORT_ID]) != 2:
            raise DecodeFailure("Port ID TLV must be 2 bytes")
        try:
            return cls(
                chassis_id=fields[_TLV_CHASSIS_ID],
                port_id=struct.unpack(">H", fields[_TLV_PORT_ID])[0],
            )
        except ValueError as exc:
            raise DecodeFailure(str(exc)) from exc


def parse_frame(data: bytes) -> Frame:
    """Classify raw bytes by the EtherType at offset 12 and parse them.

    Ethernet is the fallback class; MACsec and sealed-LLDP frames raise
    TruncatedFrame when shorter than their fixed minimum.
    """
    if len(data) < ETH_HEADER_LEN:
        raise TruncatedFrame(f"{len(data)} bytes is below the 14-byte Ethernet minimum")
    dst, src = data[0:6], data[6:12]
    ether_type = struct.unpack(">H", data[12:14])[0]

    if ether_type == ETHERTYPE_MACSEC:
        if len(data) < _MIN_MACSEC:
            raise TruncatedFrame(f"MACsec frame needs >= {_MIN_MACSEC} bytes, got {len(data)}")
        sec_tag = SecTag.from_bytes(data[14 : 14 + SECTAG_LEN])
        return MacsecFrame(
            dst=dst,
            src=src,
            sec_tag=sec_tag,
            secure_data=data[14 + SECTAG_LEN : -ICV_LEN],
            icv=data[-ICV_LEN:],
        )

    if ether_type == ETHERTYPE_LLDP:
        if len(data) < _MIN_LLDP:
            raise TruncatedFrame(f"sealed LLDP frame needs >= {_MIN_LLDP} bytes, got {len(data)}")
        nonce = data[14 : 14 + NONCE_LEN]
        seq = struct.unpack(">I", data[26:30])[0]
        return SecureLldpFrame(
            dst=dst, src=src, nonce=nonce, seq=seq, ciphertext=data[30:-ICV_LEN], icv=data[-ICV_LEN:]
        )

    return EthernetFrame(dst=dst, src=src, ether_type=ether_type, payload=data[14:])


def serialize_frame(frame: Frame) -> bytes:
    return frame.to_bytes()


def classify(data: bytes) -> str:
    """Trace-level classification: 'ethernet', 'macsec' or 'secure_lldp'."""
    if len(data) >= ETH_HEADER_LEN:
        ether_type = struct.unpack(">H", data[12:14])[0]
        if ether_type == ETHERTYPE_MACSEC:
            return "macsec"
        if ether_type == ETHERTYPE_LLDP:
            return "secure_lldp"
    return "ethernet"
