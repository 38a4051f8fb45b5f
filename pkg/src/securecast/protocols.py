"""The three multicast protocol engines as event-driven state machines.

A ProcessEngine owns one process's protocol state.  Every handler consumes
a single input (a wire message, a timer, or a local multicast request) and
returns the list of actions it wants performed: sends, application-level
deliveries, timer requests, and alerts.  All nondeterminism comes from the
engine's injected RNG stream, so a run is a pure function of configuration
and seeds.

Protocol summary:

* E: the sender asks every process for a signed ack and delivers once a
  dissemination quorum q = ceil((n+t+1)/2) has answered.
* 3T: a designated 3t+1 witness range per message id; 2t+1 acks from the
  range validate delivery.  The sender contacts a random 2t+1 subset first
  and widens to the whole range on timeout, which is what keeps the
  failure-free load at (2t+1)/n instead of (3t+1)/n.
* ACT: a kappa-process active witness set validates in the no-failure
  regime; each correct active witness probes delta random peers in the
  3t+1 range and only acks after all of them verify.  On timeout the
  sender falls back to the 3T rule over the same range.  Recovery acks are
  delayed so that any pending equivocation alert wins the race.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Union

from .core import (PROTO_3T, PROTO_AV, PROTO_E, Ack, KeyChain, MessageId,
                   MulticastMessage, ProtocolKind, Signature, ack_valid,
                   build_ack, message_digest, sender_sig_data, valid_signers)
from .quorum import (InvalidParamsError, QuorumParams,
                     dissemination_quorum_size, sample_peers,
                     sample_witness_subset, w3t, w_active)

# Wire message roles.
REGULAR = "regular"
ACK = "ack"
DELIVER = "deliver"
INFORM = "inform"
VERIFY = "verify"
ALERT = "alert"
SM_NOTIFY = "sm_notify"


class SequenceGapError(Exception):
    pass


class EvidencePair(NamedTuple):
    """Two conflicting sender signatures over the same message id: an
    unforgeable proof of equivocation."""
    subject: MessageId
    digest_a: bytes
    sig_a: Signature
    digest_b: bytes
    sig_b: Signature


@dataclass(frozen=True, slots=True)
class WireMessage:
    proto: str                  # E / 3T / AV tag
    role: str
    subject: MessageId
    digest: Optional[bytes] = None
    body: Optional[MulticastMessage] = None
    acks: Optional[tuple[Ack, ...]] = None
    ack: Optional[Ack] = None
    sender_sig: Optional[Signature] = None
    evidence: Optional[EvidencePair] = None


@dataclass(frozen=True, slots=True)
class Send:
    to: int
    msg: WireMessage


@dataclass(frozen=True, slots=True)
class Broadcast:
    msg: WireMessage


@dataclass(frozen=True, slots=True)
class Deliver:
    message: MulticastMessage


@dataclass(frozen=True, slots=True)
class SetTimer:
    timer_id: tuple
    delay: int


@dataclass(frozen=True, slots=True)
class RaiseAlert:
    evidence: EvidencePair


Action = Union[Send, Broadcast, Deliver, SetTimer, RaiseAlert]


@dataclass(frozen=True)
class Timeouts:
    act_active: int = 30          # active regime deadline before recovery
    t3_expand: int = 20           # 3T widens its contact set after this
    recovery_ack_delay: int = 15  # must exceed the alert latency bound
    reforward: Optional[int] = 40  # None disables re-forwarding entirely


@dataclass
class _Recorded:
    digest: bytes
    sender_sig: Optional[Signature] = None


@dataclass
class _Pending:
    message: MulticastMessage
    digest: bytes
    regime: str                 # "e" | "3t" | "active" | "recovery"
    required_count: int
    range_members: frozenset[int]
    acks: dict = field(default_factory=dict)   # signer -> Ack
    contacted: frozenset[int] = frozenset()
    sender_sig: Optional[Signature] = None
    completed: bool = False


@dataclass
class _Probe:
    digest: bytes
    sender_sig: Signature
    targets: tuple[int, ...]
    got: set[int] = field(default_factory=set)
    acked: bool = False


class ProcessEngine:
    """One correct process's protocol state machine."""

    def __init__(self, me: int, kind: ProtocolKind, params: QuorumParams,
                 keychain: KeyChain, witness_seed: int, rng: random.Random,
                 kappa: int = 0, delta: int = 0, slack_c: int = 0,
                 timeouts: Timeouts = Timeouts(), holdback_cap: int = 64):
        if kind is ProtocolKind.ACT:
            if kappa < 1 or delta < 1:
                raise InvalidParamsError("ACT needs kappa >= 1 and delta >= 1")
            if params.n - params.t < kappa * delta:
                raise InvalidParamsError(
                    f"ACT needs n-t >= kappa*delta, got "
                    f"{params.n - params.t} < {kappa * delta}")
            if delta > 3 * params.t:
                raise InvalidParamsError(
                    f"delta={delta} exceeds 3t={3 * params.t} probe candidates")
            if slack_c > kappa:
                raise InvalidParamsError("slack C must not exceed kappa")
        self.me = me
        self.kind = kind
        self.params = params
        self.kappa = kappa
        self.delta = delta
        self.slack_c = slack_c
        self.keychain = keychain
        self.witness_seed = witness_seed
        self.rng = rng
        self.timeouts = timeouts
        self.holdback_cap = holdback_cap
        self.q = dissemination_quorum_size(params)

        self.own_seq = 0
        self.delivery: dict[int, int] = {}        # sender -> last delivered seq
        self.recorded: dict[MessageId, _Recorded] = {}
        self.conflicted: set[MessageId] = set()
        self.pending: dict[MessageId, _Pending] = {}
        self.probes: dict[MessageId, _Probe] = {}
        self.holdback: dict[int, dict[int, WireMessage]] = {}
        self.known_faulty: set[int] = set()
        self.stability: set[tuple[int, MessageId]] = set()
        self.delivered_record: dict[MessageId, WireMessage] = {}

    # -- helpers ----------------------------------------------------------

    def _w3t(self, mid: MessageId) -> frozenset[int]:
        return w3t(mid, self.params, self.witness_seed).members

    def _w_active(self, mid: MessageId) -> frozenset[int]:
        return w_active(mid, self.kappa, self.params, self.witness_seed).members

    def _ack_to(self, proto: str, dst: int, mid: MessageId, dig: bytes,
                sender_sig: Optional[Signature] = None) -> Send:
        ack = build_ack(self.keychain, proto, self.me, mid, dig, sender_sig)
        return Send(dst, WireMessage(proto, ACK, mid, digest=dig, ack=ack,
                                     sender_sig=sender_sig))

    def _record_or_conflict(self, mid: MessageId, dig: bytes,
                            sender_sig: Optional[Signature]):
        """Returns (ok, actions). ok=False means a conflicting digest was
        already recorded; with two sender signatures in hand that is
        provable equivocation and an alert goes out."""
        rec = self.recorded.get(mid)
        if rec is None:
            self.recorded[mid] = _Recorded(dig, sender_sig)
            return True, []
        if rec.digest == dig:
            if rec.sender_sig is None and sender_sig is not None:
                rec.sender_sig = sender_sig
            return True, []
        self.conflicted.add(mid)
        if sender_sig is not None and rec.sender_sig is not None:
            ev = EvidencePair(mid, rec.digest, rec.sender_sig, dig, sender_sig)
            self.known_faulty.add(mid.sender)
            return False, [RaiseAlert(ev)]
        return False, []

    # -- sending ----------------------------------------------------------

    def wan_multicast(self, payload: bytes, seq: Optional[int] = None
                      ) -> list[Action]:
        """Initiate a multicast of the next message in sequence."""
        if seq is None:
            seq = self.own_seq + 1
        if seq != self.own_seq + 1:
            raise SequenceGapError(
                f"next sequence is {self.own_seq + 1}, not {seq}")
        self.own_seq = seq
        mid = MessageId(self.me, seq)
        m = MulticastMessage(mid, payload)
        dig = message_digest(m)
        actions: list[Action] = []

        if self.kind is ProtocolKind.E:
            self.recorded.setdefault(mid, _Recorded(dig))
            self.pending[mid] = _Pending(m, dig, "e", self.q, frozenset())
            msg = WireMessage(PROTO_E, REGULAR, mid, digest=dig)
            actions += [Send(p, msg) for p in range(self.params.n)]

        elif self.kind is ProtocolKind.THREE_T:
            self.recorded.setdefault(mid, _Recorded(dig))
            rng_members = self._w3t(mid)
            first = frozenset(sample_witness_subset(
                self.rng, rng_members, 2 * self.params.t + 1))
            self.pending[mid] = _Pending(m, dig, "3t", 2 * self.params.t + 1,
                                         rng_members, contacted=first)
            msg = WireMessage(PROTO_3T, REGULAR, mid, digest=dig)
            actions += [Send(p, msg) for p in sorted(first)]
            actions.append(SetTimer(("expand", mid), self.timeouts.t3_expand))

        else:
            sig = self.keychain.sign(self.me, sender_sig_data(mid, dig))
            self.recorded.setdefault(mid, _Recorded(dig, sig))
            wa = self._w_active(mid)
            self.pending[mid] = _Pending(
                m, dig, "active", max(len(wa) - self.slack_c, 1), wa,
                sender_sig=sig)
            msg = WireMessage(PROTO_AV, REGULAR, mid, digest=dig, sender_sig=sig)
            actions += [Send(p, msg) for p in sorted(wa)]
            actions.append(SetTimer(("recovery", mid), self.timeouts.act_active))

        return actions

    # -- receiving --------------------------------------------------------

    def handle(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        if src in self.known_faulty:
            return []
        role = msg.role
        if role == REGULAR:
            return self.on_regular(src, msg, now)
        if role == ACK:
            return self.on_ack(src, msg, now)
        if role == DELIVER:
            return self.on_deliver(src, msg, now)
        if role == INFORM:
            return self.on_inform(src, msg, now)
        if role == VERIFY:
            return self.on_verify(src, msg, now)
        if role == ALERT:
            return self.on_alert(src, msg, now)
        if role == SM_NOTIFY:
            return self.on_sm_notify(src, msg, now)
        return []

    def _proto_ok(self, proto: str) -> bool:
        if self.kind is ProtocolKind.E:
            return proto == PROTO_E
        if self.kind is ProtocolKind.THREE_T:
            return proto == PROTO_3T
        return proto in (PROTO_AV, PROTO_3T)

    def on_regular(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        mid = msg.subject
        if not self._proto_ok(msg.proto) or msg.digest is None:
            return []
        if src != mid.sender or mid.sender in self.known_faulty:
            return []
        if msg.proto == PROTO_AV:
            if msg.sender_sig is None or not self.keychain.verify(
                    mid.sender, sender_sig_data(mid, msg.digest), msg.sender_sig):
                return []
        ok, actions = self._record_or_conflict(
            mid, msg.digest, msg.sender_sig if msg.proto == PROTO_AV else None)
        if not ok:
            return actions

        if self.kind is ProtocolKind.E:
            return [self._ack_to(PROTO_E, src, mid, msg.digest)]

        if self.kind is ProtocolKind.THREE_T:
            return [self._ack_to(PROTO_3T, src, mid, msg.digest)]

        # ACT
        if msg.proto == PROTO_3T:
            # Recovery-regime request: hold the ack long enough for any
            # pending equivocation alert to land first.
            return [SetTimer(("delayed_ack", mid, msg.digest, src),
                             self.timeouts.recovery_ack_delay)]

        probe = self.probes.get(mid)
        if probe is not None:
            if probe.acked and probe.digest == msg.digest:
                return [self._ack_to(PROTO_AV, src, mid, msg.digest,
                                     probe.sender_sig)]
            return []  # probe already in flight
        targets = sample_peers(self.rng, self._w3t(mid), self.me, self.delta)
        self.probes[mid] = _Probe(msg.digest, msg.sender_sig, targets)
        inform = WireMessage(PROTO_AV, INFORM, mid, digest=msg.digest,
                             sender_sig=msg.sender_sig)
        return [Send(p, inform) for p in sorted(targets)] + actions

    def on_inform(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        if self.kind is not ProtocolKind.ACT or msg.proto != PROTO_AV:
            return []
        mid = msg.subject
        if msg.digest is None or mid.sender in self.known_faulty:
            return []
        if msg.sender_sig is None or not self.keychain.verify(
                mid.sender, sender_sig_data(mid, msg.digest), msg.sender_sig):
            return []
        ok, actions = self._record_or_conflict(mid, msg.digest, msg.sender_sig)
        if not ok:
            return actions
        verify = WireMessage(PROTO_AV, VERIFY, mid, digest=msg.digest)
        return [Send(src, verify)]

    def on_verify(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        if self.kind is not ProtocolKind.ACT:
            return []
        mid = msg.subject
        probe = self.probes.get(mid)
        if probe is None or src not in probe.targets or msg.digest != probe.digest:
            return []
        probe.got.add(src)
        if probe.acked or len(probe.got) < len(probe.targets):
            return []
        if mid.sender in self.known_faulty or mid in self.conflicted:
            return []
        probe.acked = True
        # The ack deliberately carries nothing about which peers were probed.
        return [self._ack_to(PROTO_AV, mid.sender, mid, probe.digest,
                             probe.sender_sig)]

    def on_ack(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        ack = msg.ack
        if ack is None:
            return []
        mid = ack.subject
        if mid.sender != self.me:
            return []
        pend = self.pending.get(mid)
        if pend is None or pend.completed:
            return []
        if ack.signer != src or ack.signer in pend.acks:
            return []
        if ack.digest != pend.digest:
            return []
        if pend.regime == "e":
            if ack.proto != PROTO_E:
                return []
        elif pend.regime in ("3t", "recovery"):
            if ack.proto != PROTO_3T or ack.signer not in pend.range_members:
                return []
        else:  # active
            if ack.proto != PROTO_AV or ack.signer not in pend.range_members:
                return []
            if ack.sender_sig != pend.sender_sig:
                return []
        if not ack_valid(ack, self.keychain):
            return []
        pend.acks[ack.signer] = ack
        if len(pend.acks) < pend.required_count:
            return []
        pend.completed = True
        proto = {ProtocolKind.E: PROTO_E, ProtocolKind.THREE_T: PROTO_3T,
                 ProtocolKind.ACT: PROTO_AV}[self.kind]
        acks = tuple(pend.acks[s] for s in sorted(pend.acks))
        deliver = WireMessage(proto, DELIVER, mid, digest=pend.digest,
                              body=pend.message, acks=acks)
        return [Broadcast(deliver)]

    # -- delivery ---------------------------------------------------------

    def _deliver_valid(self, msg: WireMessage) -> bool:
        m = msg.body
        if m is None or msg.acks is None:
            return False
        mid = m.id
        dig = message_digest(m)
        if self.kind is ProtocolKind.E:
            signers = valid_signers(msg.acks, PROTO_E, mid, dig, self.keychain)
            return len(signers) >= self.q
        if self.kind is ProtocolKind.THREE_T:
            signers = valid_signers(msg.acks, PROTO_3T, mid, dig, self.keychain)
            return len(signers & self._w3t(mid)) >= 2 * self.params.t + 1
        wa = self._w_active(mid)
        av = valid_signers(msg.acks, PROTO_AV, mid, dig, self.keychain)
        if len(av & wa) >= max(len(wa) - self.slack_c, 1):
            return True
        t3 = valid_signers(msg.acks, PROTO_3T, mid, dig, self.keychain)
        return len(t3 & self._w3t(mid)) >= 2 * self.params.t + 1

    def on_deliver(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        if not self._proto_ok(msg.proto) or msg.body is None:
            return []
        if not self._deliver_valid(msg):
            return []
        mid = msg.body.id
        last = self.delivery.get(mid.sender, 0)
        if mid.seq <= last:
            return []  # duplicate, suppressed
        if mid.seq > last + 1:
            slot = self.holdback.setdefault(mid.sender, {})
            if mid.seq not in slot and len(slot) < self.holdback_cap:
                slot[mid.seq] = msg
            return []
        actions: list[Action] = []
        queue = self.holdback.get(mid.sender, {})
        cur: Optional[WireMessage] = msg
        while cur is not None:
            actions += self._do_deliver(cur)
            cur = queue.pop(self.delivery[mid.sender] + 1, None)
            if cur is not None and not self._deliver_valid(cur):
                cur = None
        return actions

    def _do_deliver(self, msg: WireMessage) -> list[Action]:
        m = msg.body
        self.delivery[m.id.sender] = m.id.seq
        self.delivered_record[m.id] = msg
        # A delivered message counts as received for conflict detection:
        # no ack or verification is ever signed against it afterwards.
        self.recorded.setdefault(m.id, _Recorded(message_digest(m)))
        actions: list[Action] = [Deliver(m)]
        if self.timeouts.reforward is not None:
            actions.append(SetTimer(("reforward", m.id), self.timeouts.reforward))
        return actions

    # -- alerts and stability ---------------------------------------------

    def on_alert(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        ev = msg.evidence
        if ev is None or ev.digest_a == ev.digest_b:
            return []
        mid = ev.subject
        if not self.keychain.verify(mid.sender, sender_sig_data(mid, ev.digest_a),
                                    ev.sig_a):
            return []
        if not self.keychain.verify(mid.sender, sender_sig_data(mid, ev.digest_b),
                                    ev.sig_b):
            return []
        self.known_faulty.add(mid.sender)
        self.conflicted.add(mid)
        return []

    def on_sm_notify(self, src: int, msg: WireMessage, now: int) -> list[Action]:
        self.stability.add((src, msg.subject))
        return []

    # -- timers -----------------------------------------------------------

    def on_timer(self, timer_id: tuple, now: int) -> list[Action]:
        kind = timer_id[0]
        if kind == "recovery":
            return self.on_recovery_timeout(timer_id[1], now)
        if kind == "expand":
            return self._on_expand(timer_id[1])
        if kind == "delayed_ack":
            return self._on_delayed_ack(timer_id[1], timer_id[2], timer_id[3])
        if kind == "reforward":
            return self._on_reforward(timer_id[1])
        return []

    def on_recovery_timeout(self, mid: MessageId, now: int) -> list[Action]:
        """Active regime deadline: fall back to the 3T rule over the full
        witness range.  Active-regime acks are discarded; the regimes do
        not mix."""
        pend = self.pending.get(mid)
        if pend is None or pend.completed or pend.regime != "active":
            return []
        pend.regime = "recovery"
        pend.acks.clear()
        pend.range_members = self._w3t(mid)
        pend.required_count = 2 * self.params.t + 1
        pend.contacted = pend.range_members
        msg = WireMessage(PROTO_3T, REGULAR, mid, digest=pend.digest)
        return [Send(p, msg) for p in sorted(pend.range_members)]

    def _on_expand(self, mid: MessageId) -> list[Action]:
        pend = self.pending.get(mid)
        if pend is None or pend.completed or pend.regime != "3t":
            return []
        rest = pend.range_members - pend.contacted
        if not rest:
            return []
        pend.contacted = pend.range_members
        msg = WireMessage(PROTO_3T, REGULAR, mid, digest=pend.digest)
        return [Send(p, msg) for p in sorted(rest)]

    def _on_delayed_ack(self, mid: MessageId, dig: bytes, dst: int) -> list[Action]:
        if mid.sender in self.known_faulty or mid in self.conflicted:
            return []
        rec = self.recorded.get(mid)
        if rec is None or rec.digest != dig:
            return []
        return [self._ack_to(PROTO_3T, dst, mid, dig)]

    def _on_reforward(self, mid: MessageId) -> list[Action]:
        msg = self.delivered_record.get(mid)
        if msg is None:
            return []
        out = []
        for p in range(self.params.n):
            if p == self.me or (p, mid) in self.stability:
                continue
            out.append(Send(p, msg))
        return out


def init_process(me: int, kind: ProtocolKind, params: QuorumParams,
                 keychain: KeyChain, witness_seed: int, rng: random.Random,
                 **kwargs) -> ProcessEngine:
    """Fresh engine with an all-zero delivery vector."""
    return ProcessEngine(me, kind, params, keychain, witness_seed, rng, **kwargs)
