"""Central controller: global link map and secure-channel lifecycle.

Links become Confirmed only once both endpoint switches have reported
them; every transition to or from Confirmed drives secure-channel
reconciliation.  Channel installs are ordered receiver-ingress before
sender-egress (at setup and rekey) so no in-flight frame ever meets a
receiver that cannot validate it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

from .crypto import LldpKey, Sak
from .dataplane import Counters
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
from .wire import make_sci

log = logging.getLogger(__name__)

Endpoint = tuple[str, int]
LinkKey = tuple[Endpoint, Endpoint]


def link_key(a: Endpoint, b: Endpoint) -> LinkKey:
    return tuple(sorted((a, b)))  # type: ignore[return-value]


def link_name(key: LinkKey) -> str:
    (ca, pa), (cb, pb) = key
    return f"{ca}:{pa}-{cb}:{pb}"


@dataclass
class SwitchInfo:
    chassis_id: str
    mac: bytes
    ports: list[int]


@dataclass
class LinkState:
    key: LinkKey
    reporters: set[str] = field(default_factory=set)

    @property
    def confirmed(self) -> bool:
        return len(self.reporters) == 2

    @property
    def status(self) -> str:
        return "confirmed" if self.confirmed else "reported"


@dataclass
class ScDirection:
    """One unidirectional channel of a link's ScRecord."""

    sender: str
    sender_port: int
    receiver: str
    receiver_port: int
    sci: bytes
    sai: int
    an: int
    sak: Sak
    phase: str = "ingress_pending"  # ingress_pending | egress_pending | active
    install_time_us: int = 0
    rekey_deadline_us: int = 0
    rekey_count: int = 0
    # Staged values while a rekey is in flight.
    next_sai: Optional[int] = None
    next_an: Optional[int] = None
    next_sak: Optional[Sak] = None


@dataclass
class ScRecord:
    key: LinkKey
    directions: dict[str, ScDirection]  # "a2b" / "b2a" relative to the sorted key
    state: str = "installing"  # installing | active | quarantined


@dataclass
class _PendingBatch:
    batch_id: int
    chassis: str
    cfg: ScConfig
    kind: str  # "sc_install" | "sc_rekey"
    link: LinkKey
    direction: str
    stage: str  # "ingress" | "egress"
    attempts: int = 1
    cancelled: bool = False


class CentralController:
    def __init__(
        self,
        *,
        now: Callable[[], int],
        schedule: Callable[..., None],
        send_to_local: Callable[[str, object], bool],
        rng,
        discovery_interval_s: float = 30.0,
        rekey_interval_s: float = 60.0,
        lldp_rotation_s: float = 300.0,
        grace_s: float | None = None,
        retry_delay_s: float = 1.0,
        macsec_encrypt: bool = True,
    ):
        self._now = now
        self._schedule = schedule
        self._send = send_to_local
        self._rng = rng
        self.discovery_interval_s = discovery_interval_s
        self.rekey_interval_us = int(rekey_interval_s * 1_000_000)
        self.lldp_rotation_s = lldp_rotation_s
        self.grace_s = grace_s if grace_s is not None else discovery_interval_s
        self.retry_delay_s = retry_delay_s
        self.macsec_encrypt = macsec_encrypt

        self.counters = Counters()
        self.switches: dict[str, SwitchInfo] = {}
        self.link_map: dict[LinkKey, LinkState] = {}
        self.sc_records: dict[LinkKey, ScRecord] = {}
        self.alerts: list[str] = []
        self.sak_log: list[bytes] = []

        self.lldp_key = LldpKey(key=rng.key_material(), key_id=1)
        self._sai_seq = 0
        self._batch_seq = 0
        self._pending: dict[int, _PendingBatch] = {}

    def start(self) -> None:
        """Arm the periodic LLDP key rotation."""
        self._schedule(self.lldp_rotation_s, self._rotation_due, housekeeping=True)

    # -- message entry points ---------------------------------------------------

    def deliver(self, msg) -> None:
        if isinstance(msg, LinkDelta):
            self.handle_link_delta(msg)
        elif isinstance(msg, ScAck):
            self.handle_sc_ack(msg)
        elif isinstance(msg, PnExhausted):
            self.handle_pn_exhausted(msg)
        else:
            raise TypeError(f"unexpected control message {type(msg).__name__}")

    def handle_register(self, chassis_id: str, mac: bytes, ports: list[int]) -> None:
        self.switches[chassis_id] = SwitchInfo(chassis_id, mac, list(ports))
        self._send_or_alert(chassis_id, KeyInstall(key=self.lldp_key))
        self._send_or_alert(chassis_id, StartDiscovery())

    # -- global link map ----------------------------------------------------------

    def handle_link_delta(self, delta: LinkDelta) -> None:
        if delta.chassis_id not in self.switches:
            log.warning("delta from unregistered switch %s ignored", delta.chassis_id)
            self.counters.incr("linkmap.unknown_switch")
            return
        for port in delta.removes:
            self._remove_report(delta.chassis_id, port)
        for port, remote in delta.adds.items():
            self._add_report(delta.chassis_id, port, remote)

    def _link_at(self, endpoint: Endpoint) -> Optional[LinkState]:
        for link in self.link_map.values():
            if endpoint in link.key:
                return link
        return None

    def _remove_report(self, chassis: str, port: int) -> None:
        link = self._link_at((chassis, port))
        if link is None:
            return
        was_confirmed = link.confirmed
        link.reporters.discard(chassis)
        if was_confirmed and not link.confirmed:
            self._teardown_sc(link.key)
        if not link.reporters:
            del self.link_map[link.key]

    def _add_report(self, chassis: str, port: int, remote: tuple[str, int]) -> None:
        endpoint = (chassis, port)
        key = link_key(endpoint, remote)
        # A conflicting earlier link on either endpoint is deleted outright;
        # the replacement starts over as a one-way report.
        for ep in key:
            stale = self._link_at(ep)
            if stale is not None and stale.key != key:
                if stale.confirmed:
                    self._teardown_sc(stale.key)
                del self.link_map[stale.key]
        link = self.link_map.get(key)
        if link is None:
            link = LinkState(key=key)
            self.link_map[key] = link
        was_confirmed = link.confirmed
        link.reporters.add(chassis)
        if link.confirmed and not was_confirmed:
            self._deploy_sc(key)

    def confirmed_links(self) -> set[LinkKey]:
        return {k for k, v in self.link_map.items() if v.confirmed}

    # -- secure-channel lifecycle ---------------------------------------------------

    def _next_sai(self) -> int:
        self._sai_seq += 1
        return self._sai_seq

    def _new_sak(self) -> Sak:
        sak = Sak(self._rng.key_material())
        if sak.key in self.sak_log:
            raise AssertionError("SAK reuse from the key source")
        self.sak_log.append(sak.key)
        return sak

    def _deploy_sc(self, key: LinkKey) -> None:
        if key in self.sc_records:
            return
        (ca, pa), (cb, pb) = key
        directions = {}
        for name, (sender, s_port, receiver, r_port) in (
            ("a2b", (ca, pa, cb, pb)),
            ("b2a", (cb, pb, ca, pa)),
        ):
            directions[name] = ScDirection(
                sender=sender,
                sender_port=s_port,
                receiver=receiver,
                receiver_port=r_port,
                sci=make_sci(self.switches[sender].mac, s_port),
                sai=self._next_sai(),
                an=0,
                sak=self._new_sak(),
            )
        self.sc_records[key] = ScRecord(key=key, directions=directions)
        for name, direction in directions.items():
            self._send_ingress_install(key, name, direction, kind="sc_install")

    def _send_ingress_install(self, key: LinkKey, name: str, d: ScDirection, *, kind: str) -> None:
        sai = d.next_sai if kind == "sc_rekey" else d.sai
        an = d.next_an if kind == "sc_rekey" else d.an
        sak = d.next_sak if kind == "sc_rekey" else d.sak
        cfg = ScConfig(
            batch_id=self._next_batch_id(),
            ops=[
                WriteSa(sai=sai, an=an, sak=sak, sci=d.sci, confidentiality=self.macsec_encrypt),
                WriteIgSc(sci=d.sci, an=an, sai=sai),
            ],
        )
        self._dispatch_batch(d.receiver, cfg, kind, key, name, "ingress")

    def _send_egress_activate(self, key: LinkKey, name: str, d: ScDirection, *, kind: str) -> None:
        sai = d.next_sai if kind == "sc_rekey" else d.sai
        an = d.next_an if kind == "sc_rekey" else d.an
        sak = d.next_sak if kind == "sc_rekey" else d.sak
        ops = [
            WriteSa(sai=sai, an=an, sak=sak, sci=d.sci, confidentiality=self.macsec_encrypt),
            WriteEgSc(port=d.sender_port, sai=sai),
        ]
        if kind == "sc_install":
            ops.append(SetPortFlag(port=d.sender_port, flag=True))
        cfg = ScConfig(batch_id=self._next_batch_id(), ops=ops)
        self._dispatch_batch(d.sender, cfg, kind, key, name, "egress")

    def _next_batch_id(self) -> int:
        self._batch_seq += 1
        return self._batch_seq

    def _dispatch_batch(
        self, chassis: str, cfg: ScConfig, kind: str, key: LinkKey, direction: str, stage: str
    ) -> None:
        batch = _PendingBatch(
            batch_id=cfg.batch_id,
            chassis=chassis,
            cfg=cfg,
            kind=kind,
            link=key,
            direction=direction,
            stage=stage,
        )
        self._pending[cfg.batch_id] = batch
        if not self._send(chassis, cfg):
            self._batch_failed(batch, "unreachable")

    def handle_sc_ack(self, ack: ScAck) -> None:
        batch = self._pending.pop(ack.batch_id, None)
        if batch is None or batch.cancelled:
            return
        if not ack.ok:
            self._pending[batch.batch_id] = batch
            self._batch_failed(batch, ack.detail)
            return
        record = self.sc_records.get(batch.link)
        if record is None:
            return
        d = record.directions[batch.direction]
        if batch.stage == "ingress":
            d.phase = "egress_pending"
            self._send_egress_activate(batch.link, batch.direction, d, kind=batch.kind)
        else:
            self._finish_activation(batch, record, d)

    def _finish_activation(self, batch: _PendingBatch, record: ScRecord, d: ScDirection) -> None:
        now = self._now()
        if batch.kind == "sc_rekey":
            old_sai, old_an = d.sai, d.an
            d.sai, d.an, d.sak = d.next_sai, d.next_an, d.next_sak
            d.next_sai = d.next_an = d.next_sak = None
            d.rekey_count += 1
            self._schedule(
                self.grace_s,
                lambda: self._retire_old_sa(batch.link, batch.direction, d.sci, old_sai, old_an),
            )
        d.phase = "active"
        d.install_time_us = now
        d.rekey_deadline_us = now + self.rekey_interval_us
        generation = d.rekey_count
        self._schedule(
            self.rekey_interval_us / 1_000_000,
            lambda: self._rekey_due(batch.link, batch.direction, generation),
            housekeeping=True,
        )
        if record.state == "installing" and all(
            x.phase == "active" for x in record.directions.values()
        ):
            record.state = "active"

    def _retire_old_sa(self, key: LinkKey, direction: str, sci: bytes, old_sai: int, old_an: int) -> None:
        record = self.sc_records.get(key)
        if record is None:
            return
        d = record.directions[direction]
        receiver_ops: list = [DeleteSa(sai=old_sai)]
        # The AN may have wrapped back onto old_an within the grace window,
        # in which case the (SCI, AN) row now belongs to a live generation.
        if old_an not in (d.an, d.next_an):
            receiver_ops.insert(0, DeleteIgSc(sci=sci, an=old_an))
        self._send_or_alert(
            d.receiver, ScConfig(batch_id=self._next_batch_id(), ops=receiver_ops)
        )
        self._send_or_alert(
            d.sender,
            ScConfig(batch_id=self._next_batch_id(), ops=[DeleteSa(sai=old_sai)]),
        )

    def _batch_failed(self, batch: _PendingBatch, detail: str) -> None:
        if batch.attempts >= 2:
            self._pending.pop(batch.batch_id, None)
            self._quarantine(batch.link, f"{batch.stage} install on {batch.chassis}: {detail}")
            return
        batch.attempts += 1
        self._schedule(self.retry_delay_s, lambda: self._retry_batch(batch))

    def _retry_batch(self, batch: _PendingBatch) -> None:
        if batch.cancelled or batch.batch_id not in self._pending:
            return
        self.counters.incr("channels.retry")
        if not self._send(batch.chassis, batch.cfg):
            self._batch_failed(batch, "unreachable")

    def _quarantine(self, key: LinkKey, detail: str) -> None:
        record = self.sc_records.get(key)
        if record is not None:
            record.state = "quarantined"
        self.alerts.append(f"link {link_name(key)} quarantined: {detail}")
        self.counters.incr("channels.quarantined")
        log.error("link %s quarantined: %s", link_name(key), detail)

    def _teardown_sc(self, key: LinkKey) -> None:
        record = self.sc_records.pop(key, None)
        if record is None:
            return
        for batch in self._pending.values():
            if batch.link == key:
                batch.cancelled = True
        for d in record.directions.values():
            sais = [d.sai] + ([d.next_sai] if d.next_sai is not None else [])
            receiver_ops = [DeleteIgSc(sci=d.sci, an=an) for an in range(4)]
            receiver_ops += [DeleteSa(sai=s) for s in sais]
            self._send_or_alert(
                d.receiver, ScConfig(batch_id=self._next_batch_id(), ops=receiver_ops)
            )
            sender_ops = [
                DeleteEgSc(port=d.sender_port),
                SetPortFlag(port=d.sender_port, flag=False),
            ]
            sender_ops += [DeleteSa(sai=s) for s in sais]
            self._send_or_alert(d.sender, ScConfig(batch_id=self._next_batch_id(), ops=sender_ops))

    # -- rekeying -------------------------------------------------------------------

    def _rekey_due(self, key: LinkKey, direction: str, generation: int) -> None:
        record = self.sc_records.get(key)
        if record is None or record.state == "quarantined":
            return
        d = record.directions[direction]
        if d.rekey_count != generation or d.phase != "active":
            return
        if self._now() >= d.rekey_deadline_us:
            self._start_rekey(key, direction, d)

    def rekey_tick(self, now_us: int | None = None) -> None:
        """Renew every active channel whose deadline has passed."""
        now = self._now() if now_us is None else now_us
        for key, record in self.sc_records.items():
            if record.state == "quarantined":
                continue
            for name, d in record.directions.items():
                if d.phase == "active" and now >= d.rekey_deadline_us:
                    self._start_rekey(key, name, d)

    def _start_rekey(self, key: LinkKey, direction: str, d: ScDirection) -> None:
        d.phase = "ingress_pending"
        d.next_sai = self._next_sai()
        d.next_an = (d.an + 1) % 4
        d.next_sak = self._new_sak()
        self.counters.incr("channels.rekey")
        self._send_ingress_install(key, direction, d, kind="sc_rekey")

    def handle_pn_exhausted(self, msg: PnExhausted) -> None:
        self.counters.incr("channels.pn_exhausted")
        for key, record in self.sc_records.items():
            if record.state == "quarantined":
                continue
            for name, d in record.directions.items():
                if d.sci == msg.sci and d.phase == "active":
                    self._start_rekey(key, name, d)
                    return

    # -- LLDP key rotation ------------------------------------------------------------

    def _rotation_due(self) -> None:
        self.rotate_lldp_key()
        self._schedule(self.lldp_rotation_s, self._rotation_due, housekeeping=True)

    def rotate_lldp_key(self) -> None:
        self.lldp_key = LldpKey(key=self._rng.key_material(), key_id=self.lldp_key.key_id + 1)
        self.counters.incr("discovery_key.rotated")
        for chassis in self.switches:
            self._send_key_with_retry(chassis, attempts=1)

    def _send_key_with_retry(self, chassis: str, attempts: int) -> None:
        if self._send(chassis, KeyInstall(key=self.lldp_key)):
            return
        if attempts >= 2:
            self.alerts.append(f"switch {chassis} unreachable for key install")
            self.counters.incr("control.unreachable")
            return
        self._schedule(self.retry_delay_s, lambda: self._send_key_with_retry(chassis, attempts + 1))

    def _send_or_alert(self, chassis: str, msg) -> None:
        if not self._send(chassis, msg):
            self.alerts.append(f"switch {chassis} unreachable for {type(msg).__name__}")
            self.counters.incr("control.unreachable")

    # -- read-only query surface ---------------------------------------------------------

    def dump_link_map(self) -> list[str]:
        lines = []
        for key in sorted(self.link_map):
            lines.append(f"{self.link_map[key].status.upper():9s} {link_name(key)}")
        return lines

    def dump_sc_records(self, *, unsafe_keys: bool = False) -> list[str]:
        lines = []
        for key in sorted(self.sc_records):
            record = self.sc_records[key]
            lines.append(f"sc {link_name(key)} state={record.state}")
            for name in ("a2b", "b2a"):
                d = record.directions[name]
                shown = d.sak.key.hex() if unsafe_keys else d.sak.fingerprint
                lines.append(
                    f"  {name} {d.sender}:{d.sender_port}->{d.receiver}:{d.receiver_port}"
                    f" sci={d.sci.hex()} an={d.an} sai={d.sai} sak={shown}"
                    f" rekeys={d.rekey_count}"
                )
        return lines
