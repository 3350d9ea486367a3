"""Structured in-process messages exchanged on the control channel.

The control channel is abstract reliable message passing; these carry the
exact semantic fields, no network serialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .crypto import LldpKey, Sak


@dataclass
class Register:
    chassis_id: str
    mac: bytes
    ports: list[int]


@dataclass
class KeyInstall:
    key: LldpKey


@dataclass
class StartDiscovery:
    pass


@dataclass
class LinkDelta:
    chassis_id: str
    adds: dict[int, tuple[str, int]] = field(default_factory=dict)
    removes: list[int] = field(default_factory=list)


@dataclass
class PnExhausted:
    chassis_id: str
    sci: bytes


# SC configuration batch operations, applied atomically by the switch agent.


@dataclass
class WriteSa:
    sai: int
    an: int
    sak: Sak
    sci: bytes
    confidentiality: bool = True


@dataclass
class WriteIgSc:
    sci: bytes
    an: int
    sai: int


@dataclass
class WriteEgSc:
    port: int
    sai: int


@dataclass
class SetPortFlag:
    port: int
    flag: bool


@dataclass
class DeleteIgSc:
    sci: bytes
    an: int


@dataclass
class DeleteEgSc:
    port: int


@dataclass
class DeleteSa:
    sai: int


ScOp = WriteSa | WriteIgSc | WriteEgSc | SetPortFlag | DeleteIgSc | DeleteEgSc | DeleteSa


@dataclass
class ScConfig:
    batch_id: int
    ops: list[ScOp]


@dataclass
class ScAck:
    chassis_id: str
    batch_id: int
    ok: bool
    detail: str = ""
