"""Deterministic discrete-event network simulator.

One world is a pure function of its configuration and seeds: every source
of randomness is a keyed stream (per process, per channel, per plane), the
event queue breaks ties by insertion order, and per-pair channels are FIFO
with probabilistic loss plus automatic retransmission, so delivery
probability approaches one as time passes.  Alerts travel on a separate
out-of-band plane with a hard latency bound and no loss; the recovery ack
delay is validated against that bound, which is the race the ACT protocol
relies on.

The stability mechanism is a trusted oracle: each application-level
delivery schedules a wake-up after a configurable lag, at which point every
other correct process is notified.  Only real deliveries generate
notifications.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from dataclasses import dataclass, replace
from typing import Optional

from .adversary import Adversary, AdversaryContext
from .core import (KeyChain, MessageId, ProtocolKind, _enc, _u64,
                   message_digest)
from .protocols import (ALERT, INFORM, REGULAR, SM_NOTIFY, Broadcast,
                        Deliver, ProcessEngine, RaiseAlert, Send, SetTimer,
                        Timeouts, WireMessage)
from .quorum import QuorumParams

EV_MSG = 0
EV_TIMER = 1
EV_MCAST = 2
EV_ORACLE = 3

_PROTO_TAG = {"e": "E", "3t": "3T", "act": "AV"}
_KIND = {"e": ProtocolKind.E, "3t": ProtocolKind.THREE_T,
         "act": ProtocolKind.ACT}

ATTACK_STRATEGIES = ("equivocate", "collusive", "regime-split", "seq-burner")


class ConfigError(ValueError):
    def __init__(self, fld: str, msg: str):
        self.field = fld
        super().__init__(f"{fld}: {msg}")


@dataclass
class SimConfig:
    protocol: str                     # e | 3t | act
    n: int
    t: int
    kappa: int = 0
    delta: int = 0
    slack_c: int = 0
    messages: int = 1
    adversary: str = "none"
    crash_after: int = 3
    num_faulty: Optional[int] = None  # defaults: t if adversary set, else 0
    faulty_set: Optional[tuple[int, ...]] = None
    senders: str = "auto"             # auto | uniform | faulty | round_robin
    seed: int = 0
    witness_seed: Optional[int] = None
    adversary_seed: Optional[int] = None
    p_drop: float = 0.0
    retransmit_interval: int = 8
    latency_lo: int = 1
    latency_hi: int = 5
    alert_latency_bound: int = 3
    recovery_ack_delay: Optional[int] = None   # default 2*hi + alert bound + 2
    act_active_timeout: Optional[int] = None   # default 6*hi
    t3_expand_timeout: Optional[int] = None    # default 4*hi
    reforward_timeout: Optional[int] = None    # default 8*hi when stability on
    stability_lag: Optional[int] = None        # default 4*hi
    stability: bool = True
    holdback_cap: int = 64
    message_spacing: int = 3
    max_ticks: int = 1_000_000
    record_trace: bool = True
    adversary_knows_r: bool = True
    payload_prefix: bytes = b"m"

    def resolved(self) -> "SimConfig":
        hi = self.latency_hi
        cfg = replace(
            self,
            recovery_ack_delay=(self.recovery_ack_delay
                                if self.recovery_ack_delay is not None
                                else 2 * hi + self.alert_latency_bound + 2),
            act_active_timeout=(self.act_active_timeout
                                if self.act_active_timeout is not None
                                else 6 * hi),
            t3_expand_timeout=(self.t3_expand_timeout
                               if self.t3_expand_timeout is not None
                               else 4 * hi),
            reforward_timeout=(self.reforward_timeout
                               if self.reforward_timeout is not None
                               else (8 * hi if self.stability else None)),
            stability_lag=(self.stability_lag
                           if self.stability_lag is not None else 4 * hi),
        )
        if not cfg.stability:
            cfg = replace(cfg, reforward_timeout=None)
        cfg.validate()
        return cfg

    def validate(self):
        if self.protocol not in ("e", "3t", "act"):
            raise ConfigError("protocol", f"unknown protocol {self.protocol!r}")
        if self.n < 2:
            raise ConfigError("n", f"need at least 2 processes, got {self.n}")
        if self.t < 1:
            raise ConfigError("t", f"need t >= 1, got {self.t}")
        if 3 * self.t + 1 > self.n:
            raise ConfigError("t", f"need 3t+1 <= n, got n={self.n} t={self.t}")
        if self.protocol == "act":
            if self.kappa < 1 or self.delta < 1:
                raise ConfigError("kappa", "act needs kappa >= 1 and delta >= 1")
            if self.n - self.t < self.kappa * self.delta:
                raise ConfigError(
                    "kappa", f"n-t >= kappa*delta violated: "
                    f"{self.n - self.t} < {self.kappa * self.delta}")
            if self.delta > 3 * self.t:
                raise ConfigError("delta", f"delta={self.delta} exceeds 3t={3 * self.t}")
            if self.slack_c > self.kappa:
                raise ConfigError("slack_c", "slack C must not exceed kappa")
        if self.adversary not in ("none", "silent", "crash") + ATTACK_STRATEGIES:
            raise ConfigError("adversary", f"unknown strategy {self.adversary!r}")
        if self.adversary in ("regime-split", "seq-burner") and self.protocol != "act":
            raise ConfigError("adversary",
                              f"{self.adversary} applies to the act protocol only")
        if self.adversary in ATTACK_STRATEGIES and not self.adversary_knows_r \
                and self.protocol != "e":
            raise ConfigError(
                "adversary_knows_r",
                f"{self.adversary} needs the witness function on {self.protocol}")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError("p_drop", "drop probability must be in [0, 1)")
        if self.latency_lo < 1 or self.latency_hi < self.latency_lo:
            raise ConfigError("latency_lo", "need 1 <= latency_lo <= latency_hi")
        if self.alert_latency_bound < 1:
            raise ConfigError("alert_latency_bound", "must be >= 1")
        if self.recovery_ack_delay is not None and \
                self.alert_latency_bound >= self.recovery_ack_delay:
            raise ConfigError(
                "recovery_ack_delay",
                f"alert latency bound {self.alert_latency_bound} must be below "
                f"the recovery ack delay {self.recovery_ack_delay}")
        nf = self.effective_num_faulty()
        if nf > self.t:
            raise ConfigError("num_faulty", f"{nf} faulty exceeds t={self.t}")
        if self.faulty_set is not None:
            if any(not 0 <= p < self.n for p in self.faulty_set):
                raise ConfigError("faulty_set", "process id out of range")
        if self.adversary in ATTACK_STRATEGIES and nf < 1:
            raise ConfigError("num_faulty",
                              f"{self.adversary} needs at least one faulty process")
        if self.messages < 0:
            raise ConfigError("messages", "message count must be >= 0")

    def effective_num_faulty(self) -> int:
        if self.faulty_set is not None:
            return len(set(self.faulty_set))
        if self.num_faulty is not None:
            return self.num_faulty
        return self.t if self.adversary != "none" else 0

    def derived_seed(self, label: bytes) -> int:
        h = hashlib.sha256(_enc(label, _u64(self.seed & (2**64 - 1)))).digest()
        return int.from_bytes(h[:8], "big")


@dataclass
class RunReport:
    protocol: str
    n: int
    t: int
    faulty: frozenset[int]
    deliveries: dict[int, int]
    delivered_digests: dict[MessageId, dict[bytes, set[int]]]
    conflict_ids: list[MessageId]
    alerts_raised: int
    access_counts: dict[int, dict[str, int]]
    messages_multicast: int
    attacked: int
    attacked_conflicts: int
    elapsed: int
    quiescent: bool

    @property
    def conflicts(self) -> int:
        return len(self.conflict_ids)

    def total_deliveries(self) -> int:
        return sum(self.deliveries.values())


def _stream(seed: int, label: bytes, *ints: int) -> random.Random:
    h = hashlib.sha256(_enc(label, _u64(seed & (2**64 - 1)),
                            *[_u64(i & (2**64 - 1)) for i in ints])).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


class SimWorld:
    """One simulated execution. Strictly single threaded."""

    def __init__(self, config: SimConfig):
        cfg = config.resolved()
        self.config = cfg
        self.clock = 0
        self._counter = 0
        self.queue: list = []
        self.trace: Optional[list[str]] = [] if cfg.record_trace else None

        self.witness_seed = (cfg.witness_seed if cfg.witness_seed is not None
                             else cfg.derived_seed(b"witness"))
        self.adversary_seed = (cfg.adversary_seed if cfg.adversary_seed is not None
                               else cfg.derived_seed(b"adversary"))
        self.world_seed = cfg.derived_seed(b"world")
        secret = hashlib.sha256(_enc(b"secret", _u64(self.world_seed))).digest()

        # The faulty set is a function of the adversary seed alone: chosen
        # before the witness seed is ever consulted (non-adaptive).
        if cfg.faulty_set is not None:
            self.faulty = frozenset(cfg.faulty_set)
        else:
            nf = cfg.effective_num_faulty()
            rng = _stream(self.adversary_seed, b"faultyset")
            self.faulty = frozenset(rng.sample(range(cfg.n), nf)) if nf else frozenset()

        self.keychain = KeyChain(cfg.n, secret, faulty=self.faulty,
                                 log_signs=cfg.record_trace)
        self.params = QuorumParams(cfg.n, cfg.t)
        self.kind = _KIND[cfg.protocol]
        self._timeouts = Timeouts(
            act_active=cfg.act_active_timeout,
            t3_expand=cfg.t3_expand_timeout,
            recovery_ack_delay=cfg.recovery_ack_delay,
            reforward=cfg.reforward_timeout,
        )

        self.engines: list[Optional[ProcessEngine]] = [
            None if p in self.faulty else self._make_engine(p)
            for p in range(cfg.n)
        ]
        self.adversary: Optional[Adversary] = None
        if self.faulty and cfg.adversary != "none":
            self.adversary = self._make_adversary(cfg.adversary)

        self._chan_rng: dict[tuple[int, int], random.Random] = {}
        self._chan_last: dict[tuple[int, int], int] = {}
        self._fast_rng = _stream(self.world_seed, b"fastplane")
        self._oracle_rng = _stream(self.world_seed, b"oracleplane")

        # Aggregates, maintained whether or not the trace is kept.
        self.deliveries: dict[int, int] = {}
        self.delivered_digests: dict[MessageId, dict[bytes, set[int]]] = {}
        self.alerts_raised = 0
        self.access_counts: dict[int, dict[str, int]] = {}
        self.messages_multicast = 0
        self._notified: set[tuple[int, int, MessageId]] = set()

        self._schedule_workload()
        self._log(0, "meta", None, None, _PROTO_TAG[cfg.protocol], "meta",
                  None, None, self._meta_note())

    # -- construction -------------------------------------------------------

    def _make_engine(self, pid: int) -> ProcessEngine:
        return ProcessEngine(
            pid, self.kind, self.params, self.keychain, self.witness_seed,
            _stream(self.world_seed, b"proc", pid),
            kappa=self.config.kappa, delta=self.config.delta,
            slack_c=self.config.slack_c, timeouts=self._timeouts,
            holdback_cap=self.config.holdback_cap)

    def _make_adversary(self, strategy: str) -> Adversary:
        ctx = AdversaryContext(
            kind=self.kind, params=self.params, kappa=self.config.kappa,
            delta=self.config.delta, keychain=self.keychain,
            faulty=self.faulty,
            witness_seed=self.witness_seed if self.config.adversary_knows_r else None,
            make_engine=self._make_engine)
        return Adversary(strategy, ctx, crash_after=self.config.crash_after)

    def rebind_adversary(self, strategy: str, faulty: frozenset[int]):
        """Swap in a strategy over an explicit faulty set before running."""
        if self.clock != 0 or self.messages_multicast:
            raise ConfigError("adversary", "rebinding requires a fresh world")
        self.faulty = faulty
        self.keychain.faulty = faulty
        self.engines = [None if p in faulty else
                        (self.engines[p] or self._make_engine(p))
                        for p in range(self.config.n)]
        self.adversary = self._make_adversary(strategy) if faulty else None

    def _schedule_workload(self):
        cfg = self.config
        mode = cfg.senders
        if mode == "auto":
            mode = "faulty" if cfg.adversary in ATTACK_STRATEGIES else "uniform"
        rng = _stream(self.world_seed, b"workload")
        correct = [p for p in range(cfg.n) if p not in self.faulty]
        flist = sorted(self.faulty)
        for i in range(cfg.messages):
            if mode == "faulty" and flist:
                sender = flist[i % len(flist)]
            elif mode == "round_robin":
                sender = correct[i % len(correct)]
            else:
                sender = correct[rng.randrange(len(correct))]
            payload = cfg.payload_prefix + str(i).encode()
            self._push(1 + i * cfg.message_spacing, (EV_MCAST, sender, payload))

    def _meta_note(self) -> str:
        cfg = self.config
        faulty = ":".join(str(p) for p in sorted(self.faulty)) or "none"
        return (f"n={cfg.n};t={cfg.t};kappa={cfg.kappa};delta={cfg.delta};"
                f"slack={cfg.slack_c};seed={cfg.seed};"
                f"witness_seed={self.witness_seed};"
                f"adversary_seed={self.adversary_seed};"
                f"pdrop={cfg.p_drop};adversary={cfg.adversary};faulty={faulty}")

    # -- event machinery -----------------------------------------------------

    def _push(self, time: int, item: tuple):
        self._counter += 1
        heapq.heappush(self.queue, (time, self._counter, item))

    def _log(self, tick, kind, src, dst, proto, role, subject, dig, note):
        if self.trace is None:
            return
        self.trace.append(" ".join((
            str(tick), kind,
            "-" if src is None else str(src),
            "-" if dst is None else str(dst),
            proto or "-", role or "-",
            "-" if subject is None else str(subject),
            dig[:4].hex() if dig else "-",
            note or "-")))

    def _channel_send(self, src: int, dst: int, msg: WireMessage, now: int):
        self._log(now, "send", src, dst, msg.proto, msg.role, msg.subject,
                  msg.digest, None)
        key = (src, dst)
        rng = self._chan_rng.get(key)
        if rng is None:
            rng = _stream(self.world_seed, b"chan", src, dst)
            self._chan_rng[key] = rng
        cfg = self.config
        latency = rng.randint(cfg.latency_lo, cfg.latency_hi)
        arrival = now + latency
        if cfg.p_drop > 0.0:
            while rng.random() < cfg.p_drop:
                self._log(arrival, "drop", src, dst, msg.proto, msg.role,
                          msg.subject, msg.digest, "retransmit")
                arrival += cfg.retransmit_interval
        # FIFO per ordered pair: never overtake an earlier message.
        last = self._chan_last.get(key, 0)
        if arrival < last:
            arrival = last
        self._chan_last[key] = arrival
        self._push(arrival, (EV_MSG, dst, src, msg, "net"))

    def _fast_send(self, src: int, dst: int, msg: WireMessage, now: int):
        self._log(now, "send", src, dst, msg.proto, msg.role, msg.subject,
                  msg.digest, "fast")
        arrival = now + self._fast_rng.randint(1, self.config.alert_latency_bound)
        self._push(arrival, (EV_MSG, dst, src, msg, "fast"))

    def _apply(self, pid: int, actions: list, now: int):
        for act in actions:
            if isinstance(act, Send):
                self._channel_send(pid, act.to, act.msg, now)
            elif isinstance(act, Broadcast):
                for dst in range(self.config.n):
                    self._channel_send(pid, dst, act.msg, now)
            elif isinstance(act, Deliver):
                self._record_delivery(pid, act.message, now)
            elif isinstance(act, SetTimer):
                tid = act.timer_id
                self._log(now, "timer_set", pid, None, None, tid[0],
                          tid[1] if len(tid) > 1 else None, None,
                          f"delay={act.delay}")
                self._push(now + act.delay, (EV_TIMER, pid, tid))
            elif isinstance(act, RaiseAlert):
                ev = act.evidence
                self.alerts_raised += 1
                self._log(now, "alert", pid, None, None, ALERT, ev.subject,
                          ev.digest_a, f"accused={ev.subject.sender}")
                alert = WireMessage(_PROTO_TAG[self.config.protocol], ALERT,
                                    ev.subject, evidence=ev)
                for dst in range(self.config.n):
                    if dst != pid:
                        self._fast_send(pid, dst, alert, now)

    def _record_delivery(self, pid: int, message, now: int):
        mid = message.id
        dig = message_digest(message)
        self.deliveries[pid] = self.deliveries.get(pid, 0) + 1
        if pid not in self.faulty:
            slot = self.delivered_digests.setdefault(mid, {})
            slot.setdefault(dig, set()).add(pid)
        note = None
        if self.trace is not None:
            eng = self.engines[pid]
            rec = eng.delivered_record.get(mid) if eng else None
            if rec is not None and rec.acks:
                note = "signers=" + ":".join(
                    str(s) for s in sorted({a.signer for a in rec.acks}))
        self._log(now, "appdlv", pid, None, None, "deliver", mid, dig, note)
        if self.config.stability and self.config.reforward_timeout is not None \
                and pid not in self.faulty:
            self._push(now + self.config.stability_lag, (EV_ORACLE, pid, mid))

    # -- dispatch -------------------------------------------------------------

    def step(self):
        """Pop and dispatch exactly one event."""
        time, _, item = heapq.heappop(self.queue)
        self.clock = time
        kind = item[0]

        if kind == EV_MSG:
            _, dst, src, msg, plane = item
            self._log(time, "recv", src, dst, msg.proto, msg.role,
                      msg.subject, msg.digest, plane if plane != "net" else None)
            if msg.role in (REGULAR, INFORM):
                counts = self.access_counts.setdefault(dst, {})
                counts[msg.role] = counts.get(msg.role, 0) + 1
            if dst in self.faulty:
                if self.adversary is not None:
                    actions = self.adversary.act(dst, ("message", src, msg), time)
                    self._drain_adv_log(time)
                    self._apply(dst, actions, time)
            else:
                self._apply(dst, self.engines[dst].handle(src, msg, time), time)

        elif kind == EV_TIMER:
            _, pid, tid = item
            self._log(time, "timer_fire", pid, None, None, tid[0],
                      tid[1] if len(tid) > 1 else None, None, None)
            if pid in self.faulty:
                if self.adversary is not None:
                    actions = self.adversary.act(pid, ("timer", tid), time)
                    self._apply(pid, actions, time)
            else:
                self._apply(pid, self.engines[pid].on_timer(tid, time), time)

        elif kind == EV_MCAST:
            _, sender, payload = item
            self.messages_multicast += 1
            if sender in self.faulty:
                if self.adversary is not None:
                    actions = self.adversary.act(
                        sender, ("multicast", payload), time)
                    self._drain_adv_log(time)
                    self._apply(sender, actions, time)
            else:
                eng = self.engines[sender]
                actions = eng.wan_multicast(payload)
                mid = MessageId(sender, eng.own_seq)
                self._log(time, "mcast", sender, None,
                          _PROTO_TAG[self.config.protocol], "mcast", mid,
                          eng.pending[mid].digest, None)
                self._apply(sender, actions, time)

        elif kind == EV_ORACLE:
            self.stability_oracle_tick(item)

    def _drain_adv_log(self, time: int):
        if self.adversary is None or not self.adversary.mcast_log:
            return
        for mid, dig in self.adversary.mcast_log:
            self._log(time, "mcast", mid.sender, None,
                      _PROTO_TAG[self.config.protocol], "mcast", mid, dig, "adv")
        self.adversary.mcast_log.clear()

    def stability_oracle_tick(self, item: tuple):
        """Notify every correct process of one matured delivery.  Driven by
        per-delivery wake-ups, so a quiesced world schedules nothing new."""
        _, deliverer, mid = item
        now = self.clock
        msg = WireMessage(_PROTO_TAG[self.config.protocol], SM_NOTIFY, mid)
        for p in range(self.config.n):
            if p == deliverer or p in self.faulty:
                continue
            if (p, deliverer, mid) in self._notified:
                continue
            self._notified.add((p, deliverer, mid))
            arrival = now + self._oracle_rng.randint(
                self.config.latency_lo, self.config.latency_hi)
            self._log(now, "send", deliverer, p, msg.proto, SM_NOTIFY, mid,
                      None, "oracle")
            self._push(arrival, (EV_MSG, p, deliverer, msg, "oracle"))

    # -- top level -------------------------------------------------------------

    def run_to_quiescence(self, max_ticks: Optional[int] = None) -> RunReport:
        limit = max_ticks if max_ticks is not None else self.config.max_ticks
        while self.queue:
            if self.queue[0][0] > limit:
                break
            self.step()
        quiescent = not self.queue
        report = self._report(quiescent)
        self._log(self.clock, "end", None, None, None, "end", None, None,
                  f"quiescent={str(quiescent).lower()};"
                  f"conflicts={report.conflicts};"
                  f"deliveries={report.total_deliveries()}")
        return report

    def _report(self, quiescent: bool) -> RunReport:
        conflict_ids = sorted(
            mid for mid, slots in self.delivered_digests.items()
            if len(slots) >= 2)
        attacked = (len(self.adversary.attacked_ids)
                    if self.adversary is not None else 0)
        attacked_conflicts = (
            len(set(conflict_ids) & set(self.adversary.attacked_ids))
            if self.adversary is not None else 0)
        return RunReport(
            protocol=self.config.protocol, n=self.config.n, t=self.config.t,
            faulty=self.faulty, deliveries=dict(self.deliveries),
            delivered_digests=self.delivered_digests,
            conflict_ids=conflict_ids, alerts_raised=self.alerts_raised,
            access_counts=self.access_counts,
            messages_multicast=self.messages_multicast,
            attacked=attacked, attacked_conflicts=attacked_conflicts,
            elapsed=self.clock, quiescent=quiescent)

    def trace_text(self) -> str:
        if self.trace is None:
            raise ConfigError("record_trace", "trace recording is disabled")
        return "\n".join(self.trace) + "\n"

    def write_trace(self, path: str):
        with open(path, "w") as fh:
            fh.write(self.trace_text())


def build_world(config: SimConfig) -> SimWorld:
    """Validate the configuration and construct a ready-to-run world."""
    return SimWorld(config)


def run_world(config: SimConfig) -> RunReport:
    return build_world(config).run_to_quiescence()


def _run_one_trial(args: tuple) -> tuple[int, int]:
    config, trial = args
    cfg = replace(config, seed=config.seed + trial)
    report = run_world(cfg)
    return report.attacked, report.attacked_conflicts


def run_trial_batch(config: SimConfig, trials: int, parallel: int = 1
                    ) -> tuple[int, int]:
    """Aggregate (attacked, conflicting) counts over independent worlds.

    Counts are order-independent, so parallel execution cannot change the
    result for a given base seed.
    """
    jobs = [(config, i) for i in range(trials)]
    attacked = conflicts = 0
    if parallel > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            for a, c in pool.map(_run_one_trial, jobs,
                                 chunksize=max(1, trials // (parallel * 8))):
                attacked += a
                conflicts += c
    else:
        for job in jobs:
            a, c = _run_one_trial(job)
            attacked += a
            conflicts += c
    return attacked, conflicts
