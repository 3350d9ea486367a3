"""Per-switch match-action pipeline.

Ingress processing dispatches on EtherType: sealed LLDP punts straight to
the CPU port, MACsec frames are validated against the IG-SC/SA tables and
re-enter as cleartext, and everything else goes through MAC-table
forwarding.  A MAC entry whose macsec_flag is set routes the frame through
the protect function keyed by the EG-SC/SA tables of its egress port.

Tables and the pipeline core (`run_pipeline`) are plain data and a plain
function so tests can diff them against an independent interpreter; the
`Switch` wrapper adds ports, counters and the CPU/notification hooks.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

from .crypto import Sak, macsec_protect, macsec_validate
from .errors import IntegrityFailure, InvalidEntry, TruncatedFrame
from .wire import (
    ETHERTYPE_LLDP,
    MAX_PN,
    EthernetFrame,
    MacsecFrame,
    SecureLldpFrame,
    is_group_mac,
    parse_frame,
)

# Pipeline outcomes
FORWARD = "forward"
FLOOD = "flood"
PACKET_IN = "packet_in"
DROP = "drop"

# Packet-in reasons
REASON_MAC_MISS = "mac_miss"
REASON_LLDP_PUNT = "lldp_punt"

# Packet-out modes
MODE_RAW = "raw"
MODE_PROCESS_EGRESS = "process_egress"

# Drop reasons (each backs a per-switch counter "drop.<reason>")
DROP_TRUNCATED = "truncated"
DROP_UNKNOWN_SCI = "unknown_sci"
DROP_INTEGRITY = "integrity_failure"
DROP_REPLAY_PN = "replay_pn"
DROP_PN_EXHAUSTED = "pn_exhausted"
DROP_NO_EGRESS_SC = "no_egress_sc"
DROP_PORT_DOWN = "port_down"


class Counters:
    """Named monotonic counters; first-class observable switch state."""

    def __init__(self):
        self._values: dict[str, int] = {}

    def incr(self, name: str, amount: int = 1) -> None:
        self._values[name] = self._values.get(name, 0) + amount

    def get(self, name: str) -> int:
        return self._values.get(name, 0)

    def total(self, prefix: str) -> int:
        """Sum of the counter `prefix` itself plus every `prefix.*` counter."""
        dotted = prefix + "."
        return sum(v for k, v in self._values.items() if k == prefix or k.startswith(dotted))

    def as_dict(self) -> dict[str, int]:
        return dict(sorted(self._values.items()))


@dataclass
class MacTableEntry:
    mac: bytes
    port: int
    macsec_flag: bool = False


@dataclass
class SaEntry:
    """One secure association; PN counters are its only mutable fields."""

    sai: int
    sak: Sak
    an: int
    sci: bytes
    confidentiality: bool = True
    next_pn: int = 1
    lowest_acceptable_pn: int = 1

    def __post_init__(self):
        if not 0 <= self.an <= 3:
            raise InvalidEntry("AN must be 0..3")
        if len(self.sci) != 8:
            raise InvalidEntry("SCI must be 8 bytes")


@dataclass
class SwitchTables:
    """The four match-action tables that define data-plane behavior."""

    mac: dict[bytes, MacTableEntry] = field(default_factory=dict)
    eg_sc: dict[int, int] = field(default_factory=dict)  # egress port -> SAI
    ig_sc: dict[tuple[bytes, int], int] = field(default_factory=dict)  # (SCI, AN) -> SAI
    sa: dict[int, SaEntry] = field(default_factory=dict)


@dataclass
class PacketIn:
    ingress_port: int
    frame_bytes: bytes
    reason: str


@dataclass
class PacketOut:
    egress_port: int
    frame_bytes: bytes
    mode: str = MODE_PROCESS_EGRESS


@dataclass
class PipelineResult:
    kind: str
    egress_port: Optional[int] = None
    bytes_out: Optional[bytes] = None
    packet_in: Optional[PacketIn] = None
    drop_reason: Optional[str] = None
    validated_sai: Optional[int] = None
    failed_sai: Optional[int] = None
    protected_sai: Optional[int] = None
    rekey_sai: Optional[int] = None


ProtectHook = Callable[[bytes, bytes], None]  # (sak key, 12-byte IV)


def protect_egress(
    tables: SwitchTables,
    port: int,
    frame: EthernetFrame,
    *,
    pn_ceiling: int = MAX_PN,
    on_protect: ProtectHook | None = None,
) -> tuple[Optional[bytes], Optional[str], Optional[int], Optional[int]]:
    """Protect `frame` with the SA behind the port's EG-SC entry.

    Returns (bytes_out, drop_reason, protected_sai, rekey_sai).  Fails
    closed on a missing channel or an exhausted PN space; `rekey_sai`
    reports the SA that just consumed its last allowed PN (or is already
    out) so the control plane can renew it.
    """
    sai = tables.eg_sc.get(port)
    sa = tables.sa.get(sai) if sai is not None else None
    if sa is None:
        return None, DROP_NO_EGRESS_SC, None, None
    if sa.next_pn > pn_ceiling:
        return None, DROP_PN_EXHAUSTED, None, sai
    pn = sa.next_pn
    sa.next_pn = pn + 1
    if on_protect is not None:
        on_protect(sa.sak.key, sa.sci + struct.pack(">I", pn))
    protected = macsec_protect(
        sa.sak, sa.sci, pn, frame, an=sa.an, confidentiality=sa.confidentiality
    )
    rekey_sai = sai if sa.next_pn > pn_ceiling else None
    return protected.to_bytes(), None, sai, rekey_sai


def run_pipeline(
    tables: SwitchTables,
    ingress_port: int,
    data: bytes,
    *,
    pn_ceiling: int = MAX_PN,
    on_protect: ProtectHook | None = None,
) -> PipelineResult:
    """One ingress pass over the tables.  Mutates only PN counters."""
    try:
        frame = parse_frame(data)
    except TruncatedFrame:
        return PipelineResult(kind=DROP, drop_reason=DROP_TRUNCATED)

    # Discovery frames punt before any table is consulted or updated.
    if isinstance(frame, SecureLldpFrame):
        return PipelineResult(
            kind=PACKET_IN,
            packet_in=PacketIn(ingress_port, data, REASON_LLDP_PUNT),
        )

    validated_sai = None
    if isinstance(frame, MacsecFrame):
        sai = tables.ig_sc.get((frame.sec_tag.sci, frame.sec_tag.an))
        sa = tables.sa.get(sai) if sai is not None else None
        if sa is None:
            return PipelineResult(kind=DROP, drop_reason=DROP_UNKNOWN_SCI)
        if frame.sec_tag.packet_number < sa.lowest_acceptable_pn:
            return PipelineResult(kind=DROP, drop_reason=DROP_REPLAY_PN)
        try:
            inner = macsec_validate(sa.sak, frame, confidentiality=sa.confidentiality)
        except IntegrityFailure:
            return PipelineResult(kind=DROP, drop_reason=DROP_INTEGRITY, failed_sai=sai)
        sa.lowest_acceptable_pn = frame.sec_tag.packet_number + 1
        validated_sai = sai
        if inner.ether_type == ETHERTYPE_LLDP:
            # Nested discovery frame: punt, never forward or learn from it.
            return PipelineResult(
                kind=PACKET_IN,
                packet_in=PacketIn(ingress_port, inner.to_bytes(), REASON_LLDP_PUNT),
                validated_sai=validated_sai,
            )
        frame = inner

    if is_group_mac(frame.dst):
        return PipelineResult(kind=FLOOD, bytes_out=frame.to_bytes(), validated_sai=validated_sai)

    dst_entry = tables.mac.get(frame.dst)
    if frame.src not in tables.mac or dst_entry is None:
        return PipelineResult(
            kind=PACKET_IN,
            packet_in=PacketIn(ingress_port, frame.to_bytes(), REASON_MAC_MISS),
            validated_sai=validated_sai,
        )

    if dst_entry.macsec_flag:
        out, reason, protected_sai, rekey_sai = protect_egress(
            tables, dst_entry.port, frame, pn_ceiling=pn_ceiling, on_protect=on_protect
        )
        if out is None:
            return PipelineResult(
                kind=DROP, drop_reason=reason, validated_sai=validated_sai, rekey_sai=rekey_sai
            )
        return PipelineResult(
            kind=FORWARD,
            egress_port=dst_entry.port,
            bytes_out=out,
            validated_sai=validated_sai,
            protected_sai=protected_sai,
            rekey_sai=rekey_sai,
        )
    return PipelineResult(
        kind=FORWARD,
        egress_port=dst_entry.port,
        bytes_out=frame.to_bytes(),
        validated_sai=validated_sai,
    )


class Switch:
    """Data plane of one software switch: tables, ports, counters, CPU port.

    The embedding (simulator or test) wires the hooks:

    * ``on_transmit(port, bytes)``   frame leaves a port
    * ``on_packet_in(PacketIn)``     CPU-port message to the local controller
    * ``on_port_event(port, up)``    edge-triggered port status change
    * ``on_rekey_needed(sai, sci)``  egress SA ran out of packet numbers
    * ``on_protect(sak_key, iv)``    observation point for IV uniqueness
    """

    def __init__(
        self,
        chassis_id: str,
        mac: bytes,
        num_ports: int,
        *,
        counters: Counters | None = None,
        pn_ceiling: int = MAX_PN,
    ):
        self.chassis_id = chassis_id
        self.mac = mac
        self.ports_up: dict[int, bool] = {p: True for p in range(1, num_ports + 1)}
        self.tables = SwitchTables()
        self.counters = counters if counters is not None else Counters()
        self.pn_ceiling = pn_ceiling
        self.on_transmit: Callable[[int, bytes], None] | None = None
        self.on_packet_in: Callable[[PacketIn], None] | None = None
        self.on_port_event: Callable[[int, bool], None] | None = None
        self.on_rekey_needed: Callable[[int, bytes], None] | None = None
        self.on_protect: ProtectHook | None = None
        self._rekey_signalled: set[int] = set()

    # -- frame path ---------------------------------------------------------

    def process_ingress(self, port: int, data: bytes) -> PipelineResult:
        """Run the pipeline and account for it; emission is the caller's job."""
        result = run_pipeline(
            self.tables, port, data, pn_ceiling=self.pn_ceiling, on_protect=self.on_protect
        )
        if result.kind == DROP:
            self.counters.incr(f"drop.{result.drop_reason}")
        if result.validated_sai is not None:
            self.counters.incr("macsec.validated")
            self.counters.incr(f"sa.{result.validated_sai}.validated")
        if result.failed_sai is not None:
            self.counters.incr("macsec.validate_failed")
            self.counters.incr(f"sa.{result.failed_sai}.failed")
        if result.protected_sai is not None:
            self.counters.incr("macsec.protected")
            self.counters.incr(f"sa.{result.protected_sai}.protected")
        if result.rekey_sai is not None:
            self._signal_rekey(result.rekey_sai)
        return result

    def handle_frame(self, port: int, data: bytes) -> PipelineResult:
        """Full ingress treatment of one frame delivered by the wire."""
        self.counters.incr(f"port.{port}.rx")
        result = self.process_ingress(port, data)
        if result.kind == FORWARD:
            self._transmit(result.egress_port, result.bytes_out)
        elif result.kind == FLOOD:
            for egress, out in self.expand_flood(port, result.bytes_out):
                self._transmit(egress, out)
        elif result.kind == PACKET_IN and self.on_packet_in is not None:
            self.on_packet_in(result.packet_in)
        return result

    def expand_flood(self, ingress_port: int, data: bytes) -> list[tuple[int, bytes]]:
        """Per-port egress processing for a flood: protect where an EG-SC exists."""
        frame = parse_frame(data)
        emissions = []
        for port in sorted(self.ports_up):
            if port == ingress_port or not self.ports_up[port]:
                continue
            if isinstance(frame, EthernetFrame) and port in self.tables.eg_sc:
                out, reason, protected_sai, rekey_sai = protect_egress(
                    self.tables, port, frame, pn_ceiling=self.pn_ceiling, on_protect=self.on_protect
                )
                if rekey_sai is not None:
                    self._signal_rekey(rekey_sai)
                if out is None:
                    self.counters.incr(f"drop.{reason}")
                    continue
                self.counters.incr("macsec.protected")
                self.counters.incr(f"sa.{protected_sai}.protected")
                emissions.append((port, out))
            else:
                emissions.append((port, data))
        return emissions

    def packet_out(self, msg: PacketOut) -> None:
        """Controller-injected frame: raw bypasses all tables."""
        if not self.ports_up.get(msg.egress_port, False):
            self.counters.incr(f"drop.{DROP_PORT_DOWN}")
            return
        data = msg.frame_bytes
        if msg.mode == MODE_PROCESS_EGRESS and msg.egress_port in self.tables.eg_sc:
            frame = parse_frame(data)
            if isinstance(frame, EthernetFrame):
                out, reason, protected_sai, rekey_sai = protect_egress(
                    self.tables,
                    msg.egress_port,
                    frame,
                    pn_ceiling=self.pn_ceiling,
                    on_protect=self.on_protect,
                )
                if rekey_sai is not None:
                    self._signal_rekey(rekey_sai)
                if out is None:
                    self.counters.incr(f"drop.{reason}")
                    return
                self.counters.incr("macsec.protected")
                self.counters.incr(f"sa.{protected_sai}.protected")
                data = out
        self._transmit(msg.egress_port, data)

    def _transmit(self, port: int, data: bytes) -> None:
        if not self.ports_up.get(port, False):
            self.counters.incr(f"drop.{DROP_PORT_DOWN}")
            return
        self.counters.incr(f"port.{port}.tx")
        if self.on_transmit is not None:
            self.on_transmit(port, data)

    def _signal_rekey(self, sai: int) -> None:
        if sai in self._rekey_signalled:
            return
        self._rekey_signalled.add(sai)
        sa = self.tables.sa.get(sai)
        if sa is not None and self.on_rekey_needed is not None:
            self.on_rekey_needed(sai, sa.sci)

    # -- table writes (each call is atomic wrt frame processing) -------------

    def write_mac(self, entry: MacTableEntry) -> None:
        if entry.port not in self.ports_up:
            raise InvalidEntry(f"port {entry.port} not on switch {self.chassis_id}")
        if len(entry.mac) != 6:
            raise InvalidEntry("MAC must be 6 bytes")
        self.tables.mac[entry.mac] = entry

    def delete_mac(self, mac: bytes) -> None:
        self.tables.mac.pop(mac, None)

    def write_sa(self, entry: SaEntry) -> None:
        self.tables.sa[entry.sai] = entry

    def delete_sa(self, sai: int) -> None:
        self.tables.sa.pop(sai, None)

    def write_eg_sc(self, port: int, sai: int) -> None:
        if port not in self.ports_up:
            raise InvalidEntry(f"port {port} not on switch {self.chassis_id}")
        if sai not in self.tables.sa:
            raise InvalidEntry(f"EG-SC references missing SAI {sai}")
        self.tables.eg_sc[port] = sai

    def delete_eg_sc(self, port: int) -> None:
        self.tables.eg_sc.pop(port, None)

    def write_ig_sc(self, sci: bytes, an: int, sai: int) -> None:
        if sai not in self.tables.sa:
            raise InvalidEntry(f"IG-SC references missing SAI {sai}")
        if len(sci) != 8:
            raise InvalidEntry("SCI must be 8 bytes")
        self.tables.ig_sc[(sci, an & 0x03)] = sai

    def delete_ig_sc(self, sci: bytes, an: int) -> None:
        self.tables.ig_sc.pop((sci, an & 0x03), None)

    def set_port_macsec_flag(self, port: int, flag: bool) -> None:
        for mac, entry in self.tables.mac.items():
            if entry.port == port and entry.macsec_flag != flag:
                self.tables.mac[mac] = MacTableEntry(mac=mac, port=port, macsec_flag=flag)

    # -- port state -----------------------------------------------------------

    def set_port_state(self, port: int, up: bool) -> None:
        """Edge-triggered: repeated writes of the same state emit no event."""
        if port not in self.ports_up or self.ports_up[port] == up:
            return
        self.ports_up[port] = up
        if self.on_port_event is not None:
            self.on_port_event(port, up)

    def up_ports(self) -> list[int]:
        return sorted(p for p, up in self.ports_up.items() if up)
