"""Per-switch controller: MAC learning, link discovery, MACsec table agent.

One controller instance runs next to each switch.  All its inputs
(packet-ins, port events, timer ticks, central-controller messages) arrive
through the simulator's single event queue, so handlers never interleave.
"""

from __future__ import annotations

import logging
from typing import Callable

from .crypto import LldpKey, lldp_open, lldp_seal
from .dataplane import (
    MODE_PROCESS_EGRESS,
    MODE_RAW,
    REASON_LLDP_PUNT,
    REASON_MAC_MISS,
    MacTableEntry,
    PacketIn,
    PacketOut,
    SaEntry,
    Switch,
)
from .errors import DecodeFailure, IntegrityFailure, InvalidEntry
from .messages import (
    DeleteEgSc,
    DeleteIgSc,
    DeleteSa,
    KeyInstall,
    LinkDelta,
    PnExhausted,
    ScAck,
    ScConfig,
    SetPortFlag,
    StartDiscovery,
    WriteEgSc,
    WriteIgSc,
    WriteSa,
)
from .wire import (
    LLDP_MULTICAST,
    EthernetFrame,
    Lldpdu,
    SecureLldpFrame,
    is_group_mac,
    parse_frame,
)

log = logging.getLogger(__name__)


class LocalController:
    def __init__(
        self,
        switch: Switch,
        *,
        now: Callable[[], int],
        schedule: Callable[..., None],
        send_to_central: Callable[[object], bool],
        rng,
        discovery_interval_s: float = 30.0,
        link_expiry_intervals: int = 3,
    ):
        self.switch = switch
        self.chassis_id = switch.chassis_id
        self.counters = switch.counters
        self._now = now
        self._schedule = schedule
        self._send = send_to_central
        self._rng = rng
        self.discovery_interval_us = int(discovery_interval_s * 1_000_000)
        self.link_expiry_intervals = link_expiry_intervals

        # MAC learning state: mirror of the entries this controller wrote.
        self.mac_mirror: dict[bytes, int] = {}

        # Link discovery state.
        self.lldp_key: LldpKey | None = None
        self.prev_key: LldpKey | None = None
        self.prev_key_expiry_us = 0
        self.discovery_started = False
        self.tx_seq = rng.boot_seq()
        self.rx_seq: dict[int, int] = {}
        self.local_view: dict[int, tuple[str, int]] = {}
        self.last_seen_us: dict[int, int] = {}

        switch.on_packet_in = self.handle_packet_in
        switch.on_port_event = self.handle_port_event
        switch.on_rekey_needed = self.handle_rekey_needed

    # -- message entry points -------------------------------------------------

    def deliver(self, msg) -> None:
        """Central-controller messages, one at a time."""
        if isinstance(msg, KeyInstall):
            self.handle_key_install(msg.key)
        elif isinstance(msg, StartDiscovery):
            self.handle_start_discovery()
        elif isinstance(msg, ScConfig):
            self.handle_sc_config(msg)
        else:
            raise TypeError(f"unexpected control message {type(msg).__name__}")

    def handle_packet_in(self, pi: PacketIn) -> None:
        if pi.reason == REASON_LLDP_PUNT:
            self._handle_lldp(pi)
        elif pi.reason == REASON_MAC_MISS:
            self._handle_mac_miss(pi)

    # -- MAC learning -----------------------------------------------------------

    def _handle_mac_miss(self, pi: PacketIn) -> None:
        frame = parse_frame(pi.frame_bytes)
        if not isinstance(frame, EthernetFrame):
            return
        src = frame.src
        if not is_group_mac(src) and self.mac_mirror.get(src) != pi.ingress_port:
            flag = pi.ingress_port in self.switch.tables.eg_sc
            self.switch.write_mac(MacTableEntry(mac=src, port=pi.ingress_port, macsec_flag=flag))
            self.mac_mirror[src] = pi.ingress_port
            self.counters.incr("learning.learned")
        for port in self.switch.up_ports():
            if port != pi.ingress_port:
                self.switch.packet_out(
                    PacketOut(egress_port=port, frame_bytes=pi.frame_bytes, mode=MODE_PROCESS_EGRESS)
                )

    # -- link discovery --------------------------------------------------------

    def handle_key_install(self, key: LldpKey) -> None:
        if self.lldp_key is not None:
            # Rotation grace: the old key stays valid for opening (not
            # sealing) for one discovery interval.
            self.prev_key = self.lldp_key
            self.prev_key_expiry_us = self._now() + self.discovery_interval_us
        self.lldp_key = key

    def handle_start_discovery(self) -> None:
        if self.discovery_started:
            return
        self.discovery_started = True
        self.discovery_round()

    def discovery_round(self) -> None:
        """Probe every up port, expire stale links, re-arm the timer."""
        self._expire_stale_links()
        if self.lldp_key is None:
            self.counters.incr("discovery.no_key")
        else:
            for port in self.switch.up_ports():
                self._emit_probe(port)
        self._schedule(
            self.discovery_interval_us / 1_000_000, self.discovery_round, housekeeping=True
        )

    def _emit_probe(self, port: int) -> None:
        if self.lldp_key is None:
            self.counters.incr("discovery.no_key")
            return
        self.tx_seq = (self.tx_seq + 1) & 0xFFFFFFFF
        pdu = Lldpdu(chassis_id=self.chassis_id.encode(), port_id=port)
        frame = lldp_seal(
            self.lldp_key,
            self._rng.lldp_nonce(),
            self.tx_seq,
            pdu,
            src=self.switch.mac,
            dst=LLDP_MULTICAST,
        )
        self.counters.incr("discovery.sent")
        self.switch.packet_out(PacketOut(egress_port=port, frame_bytes=frame.to_bytes(), mode=MODE_RAW))

    def _open_with_keys(self, frame: SecureLldpFrame):
        try:
            return lldp_open(self.lldp_key, frame)
        except IntegrityFailure:
            if self.prev_key is not None and self._now() < self.prev_key_expiry_us:
                return lldp_open(self.prev_key, frame)
            raise

    def _handle_lldp(self, pi: PacketIn) -> None:
        frame = parse_frame(pi.frame_bytes)
        if not isinstance(frame, SecureLldpFrame):
            return
        if self.lldp_key is None:
            self.counters.incr("discovery.no_key")
            return
        try:
            seq, pdu = self._open_with_keys(frame)
        except IntegrityFailure:
            self.counters.incr("discovery.integrity_failure")
            return
        except DecodeFailure:
            self.counters.incr("discovery.decode_failure")
            return
        try:
            remote_chassis = pdu.chassis_id.decode("utf-8")
        except UnicodeDecodeError:
            self.counters.incr("discovery.decode_failure")
            return
        if remote_chassis == self.chassis_id:
            # Our own probe bounced back on some path; never a link.
            self.counters.incr("discovery.reflected")
            return
        port = pi.ingress_port
        last = self.rx_seq.get(port)
        if last is not None and seq <= last:
            self.counters.incr("discovery.replayed_seq")
            return
        self.rx_seq[port] = seq
        self.last_seen_us[port] = self._now()
        self.counters.incr("discovery.accepted")
        remote = (remote_chassis, pdu.port_id)
        if self.local_view.get(port) != remote:
            self.local_view[port] = remote
            log.debug("%s: link detected %s -> %s:%s", self.chassis_id, port, *remote)
            self._report_delta(adds={port: remote})

    def handle_port_event(self, port: int, up: bool) -> None:
        if up:
            if self.discovery_started:
                self._emit_probe(port)
        else:
            self.rx_seq.pop(port, None)
            self.last_seen_us.pop(port, None)
            if port in self.local_view:
                del self.local_view[port]
                log.debug("%s: link lost on port %s", self.chassis_id, port)
                self._report_delta(removes=[port])

    def _expire_stale_links(self) -> None:
        horizon = self.link_expiry_intervals * self.discovery_interval_us
        now = self._now()
        for port in list(self.local_view):
            seen = self.last_seen_us.get(port)
            if seen is None or now - seen > horizon:
                del self.local_view[port]
                self.last_seen_us.pop(port, None)
                self.counters.incr("discovery.expired")
                self._report_delta(removes=[port])

    def _report_delta(self, adds=None, removes=None) -> None:
        delta = LinkDelta(chassis_id=self.chassis_id, adds=dict(adds or {}), removes=list(removes or []))
        if not self._send(delta):
            self.counters.incr("ctl.send_failed")

    # -- MACsec table agent ------------------------------------------------------

    def handle_sc_config(self, cfg: ScConfig) -> None:
        try:
            self._validate_batch(cfg.ops)
        except InvalidEntry as exc:
            self.counters.incr("sc_config.nack")
            self._send(ScAck(self.chassis_id, cfg.batch_id, ok=False, detail=str(exc)))
            return
        for op in cfg.ops:
            self._apply_op(op)
        self.counters.incr("sc_config.applied")
        self._send(ScAck(self.chassis_id, cfg.batch_id, ok=True))

    def _validate_batch(self, ops) -> None:
        """Reject the whole batch up front so application can't half-fail."""
        sais = set(self.switch.tables.sa)
        for op in ops:
            if isinstance(op, WriteSa):
                sais.add(op.sai)
            elif isinstance(op, DeleteSa):
                sais.discard(op.sai)
            elif isinstance(op, WriteEgSc):
                if op.port not in self.switch.ports_up:
                    raise InvalidEntry(f"no port {op.port} on {self.chassis_id}")
                if op.sai not in sais:
                    raise InvalidEntry(f"EG-SC references missing SAI {op.sai}")
            elif isinstance(op, WriteIgSc):
                if op.sai not in sais:
                    raise InvalidEntry(f"IG-SC references missing SAI {op.sai}")
            elif isinstance(op, SetPortFlag):
                if op.port not in self.switch.ports_up:
                    raise InvalidEntry(f"no port {op.port} on {self.chassis_id}")

    def _apply_op(self, op) -> None:
        sw = self.switch
        if isinstance(op, WriteSa):
            sw.write_sa(
                SaEntry(sai=op.sai, sak=op.sak, an=op.an, sci=op.sci, confidentiality=op.confidentiality)
            )
        elif isinstance(op, WriteIgSc):
            sw.write_ig_sc(op.sci, op.an, op.sai)
        elif isinstance(op, WriteEgSc):
            sw.write_eg_sc(op.port, op.sai)
        elif isinstance(op, SetPortFlag):
            sw.set_port_macsec_flag(op.port, op.flag)
        elif isinstance(op, DeleteIgSc):
            sw.delete_ig_sc(op.sci, op.an)
        elif isinstance(op, DeleteEgSc):
            sw.delete_eg_sc(op.port)
        elif isinstance(op, DeleteSa):
            sw.delete_sa(op.sai)
        else:
            raise InvalidEntry(f"unknown op {type(op).__name__}")

    def handle_rekey_needed(self, sai: int, sci: bytes) -> None:
        self.counters.incr("sc_config.pn_exhausted")
        if not self._send(PnExhausted(chassis_id=self.chassis_id, sci=sci)):
            self.counters.incr("ctl.send_failed")
