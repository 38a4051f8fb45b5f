"""Byzantine strategies controlling up to t processes, fixed at world
construction time (the adversary is non-adaptive: the faulty set is chosen
before the witness seed is drawn).

A strategy receives every event addressed to a faulty process and answers
with protocol-syntax-valid actions.  It can sign only with faulty
processes' keys; attempting anything else raises ForgeryAttemptError from
the key chain, which is the structural version of "keys of correct
processes cannot be broken".

Strategies:

* silent        - faulty processes never respond.
* crash         - faulty processes behave honestly for a fixed number of
                  events, then go silent.
* equivocate    - a faulty sender multicasts two conflicting messages; the
                  other faulty processes act honestly.
* collusive     - the whole faulty team cooperates: witnesses acknowledge
                  anything (conflicts included) and verify every probe; a
                  faulty ACT sender attacks ids whose active witness set is
                  entirely faulty by fabricating both ack sets.
* regime-split  - the cross-regime attack on ACT: one message runs the
                  active regime, a conflicting one runs recovery against a
                  2t+1 set disjoint from the active witnesses.
* seq-burner    - experimental: multicasts filler traffic to advance its
                  sequence number until it reaches an id with an all-faulty
                  active witness set, then attacks it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import (ADVERSARY, PROTO_3T, PROTO_AV, PROTO_E, Ack, KeyChain,
                   MessageId, MulticastMessage, ProtocolKind, build_ack,
                   message_digest, sender_sig_data, valid_signers)
from .protocols import (ACK, DELIVER, INFORM, REGULAR, VERIFY,
                        ProcessEngine, Send, WireMessage)
from .quorum import QuorumParams, dissemination_quorum_size, w3t, w_active


class TooManyFaultyError(ValueError):
    pass


@dataclass
class AdversaryContext:
    kind: ProtocolKind
    params: QuorumParams
    kappa: int
    delta: int
    keychain: KeyChain
    faulty: frozenset[int]
    witness_seed: Optional[int]       # None when adversary_knows_r is off
    make_engine: Callable[[int], ProcessEngine]

    @property
    def n(self) -> int:
        return self.params.n

    def w3t(self, mid: MessageId) -> frozenset[int]:
        assert self.witness_seed is not None
        return w3t(mid, self.params, self.witness_seed).members

    def w_active(self, mid: MessageId) -> frozenset[int]:
        assert self.witness_seed is not None
        return w_active(mid, self.kappa, self.params, self.witness_seed).members


@dataclass
class _Side:
    message: MulticastMessage
    digest: bytes
    sender_sig: Optional[object]
    acks: list = field(default_factory=list)
    delivered: bool = False
    targets: frozenset[int] = frozenset()


@dataclass
class _Attack:
    a: _Side
    b: Optional[_Side]


class Adversary:
    """Strategy dispatcher for all faulty processes in one world."""

    def __init__(self, strategy: str, ctx: AdversaryContext,
                 crash_after: int = 3):
        if strategy not in ("silent", "crash", "equivocate", "collusive",
                            "regime-split", "seq-burner"):
            raise ValueError(f"unknown adversary strategy {strategy!r}")
        self.strategy = strategy
        self.ctx = ctx
        self.crash_after = crash_after
        self._events_handled: dict[int, int] = {p: 0 for p in ctx.faulty}
        self._shadows: dict[int, ProcessEngine] = {}
        self._seq: dict[int, int] = {p: 0 for p in ctx.faulty}
        self.attacks: dict[MessageId, _Attack] = {}
        self.attacked_ids: list[MessageId] = []
        self.mcast_log: list[tuple[MessageId, bytes]] = []

    # -- plumbing ----------------------------------------------------------

    def _shadow(self, pid: int) -> ProcessEngine:
        eng = self._shadows.get(pid)
        if eng is None:
            eng = self.ctx.make_engine(pid)
            self._shadows[pid] = eng
        return eng

    def _ack(self, proto: str, signer: int, mid: MessageId, dig: bytes,
             sender_sig=None) -> Ack:
        return build_ack(self.ctx.keychain, proto, signer, mid, dig,
                         sender_sig, caller=ADVERSARY)

    def _sign_sender(self, pid: int, mid: MessageId, dig: bytes):
        return self.ctx.keychain.sign(pid, sender_sig_data(mid, dig),
                                      caller=ADVERSARY)

    def act(self, pid: int, event: tuple, now: int) -> list:
        """Entry point: one event addressed to faulty process pid."""
        kind = event[0]
        if self.strategy == "silent":
            return []
        if self.strategy == "crash":
            self._events_handled[pid] += 1
            if self._events_handled[pid] > self.crash_after:
                return []
            return self._honest(pid, event, now)
        if kind == "multicast":
            return self._on_multicast(pid, event[1], now)
        if kind == "message":
            return self._on_message(pid, event[1], event[2], now)
        if kind == "timer":
            return self._honest(pid, event, now) \
                if self.strategy in ("equivocate", "seq-burner") else []
        return []

    def _honest(self, pid: int, event: tuple, now: int) -> list:
        eng = self._shadow(pid)
        kind = event[0]
        if kind == "multicast":
            actions = eng.wan_multicast(event[1])
            mid = MessageId(pid, eng.own_seq)
            self.mcast_log.append((mid, eng.pending[mid].digest))
            return actions
        if kind == "message":
            return eng.handle(event[1], event[2], now)
        if kind == "timer":
            return eng.on_timer(event[1], now)
        return []

    def _honest_multicast(self, pid: int, mid: MessageId, payload: bytes) -> list:
        """Delegate one multicast to the honest shadow, keeping its sequence
        counter aligned with attacks issued outside of it."""
        eng = self._shadow(pid)
        eng.own_seq = mid.seq - 1
        actions = eng.wan_multicast(payload)
        self.mcast_log.append((mid, eng.pending[mid].digest))
        return actions

    # -- multicast-time attacks ---------------------------------------------

    def _on_multicast(self, pid: int, payload: bytes, now: int) -> list:
        self._seq[pid] += 1
        mid = MessageId(pid, self._seq[pid])
        if self.strategy == "equivocate":
            return self._equivocate(pid, mid, payload)
        if self.strategy == "collusive":
            return self._collusive_multicast(pid, mid, payload)
        if self.strategy == "regime-split":
            return self._regime_split(pid, mid, payload)
        if self.strategy == "seq-burner":
            return self._seq_burn(pid, mid, payload)
        return []

    def _two_messages(self, mid: MessageId, payload: bytes) -> tuple[_Side, _Side]:
        ma = MulticastMessage(mid, payload + b"/a")
        mb = MulticastMessage(mid, payload + b"/b")
        return (_Side(ma, message_digest(ma), None),
                _Side(mb, message_digest(mb), None))

    def _equivocate(self, pid: int, mid: MessageId, payload: bytes) -> list:
        """Send two conflicting messages to everyone in the relevant range,
        alternating which one goes first per destination."""
        ctx = self.ctx
        a, b = self._two_messages(mid, payload)
        self.mcast_log += [(mid, a.digest), (mid, b.digest)]
        self.attacked_ids.append(mid)

        if ctx.kind is ProtocolKind.E:
            targets = range(ctx.n)
            ra = WireMessage(PROTO_E, REGULAR, mid, digest=a.digest)
            rb = WireMessage(PROTO_E, REGULAR, mid, digest=b.digest)
            a.acks.append(self._ack(PROTO_E, pid, mid, a.digest))
            b.acks.append(self._ack(PROTO_E, pid, mid, b.digest))
        elif ctx.kind is ProtocolKind.THREE_T:
            targets = sorted(ctx.w3t(mid))
            ra = WireMessage(PROTO_3T, REGULAR, mid, digest=a.digest)
            rb = WireMessage(PROTO_3T, REGULAR, mid, digest=b.digest)
            if pid in ctx.w3t(mid):
                a.acks.append(self._ack(PROTO_3T, pid, mid, a.digest))
                b.acks.append(self._ack(PROTO_3T, pid, mid, b.digest))
        else:
            a.sender_sig = self._sign_sender(pid, mid, a.digest)
            b.sender_sig = self._sign_sender(pid, mid, b.digest)
            wa = sorted(ctx.w_active(mid))
            ra = WireMessage(PROTO_AV, REGULAR, mid, digest=a.digest,
                             sender_sig=a.sender_sig)
            rb = WireMessage(PROTO_AV, REGULAR, mid, digest=b.digest,
                             sender_sig=b.sender_sig)
            ta = WireMessage(PROTO_3T, REGULAR, mid, digest=a.digest)
            tb = WireMessage(PROTO_3T, REGULAR, mid, digest=b.digest)
            out = []
            for i, dst in enumerate(wa):
                first, second = (ra, rb) if i % 2 == 0 else (rb, ra)
                out += [Send(dst, first), Send(dst, second)]
            # Concurrent recovery attempt, one side per half of the range,
            # racing the delayed acknowledgments against the alerts.
            for i, dst in enumerate(sorted(ctx.w3t(mid))):
                out.append(Send(dst, ta if i % 2 == 0 else tb))
            self.attacks[mid] = _Attack(a, b)
            return out

        out = []
        for i, dst in enumerate(targets):
            first, second = (ra, rb) if i % 2 == 0 else (rb, ra)
            out += [Send(dst, first), Send(dst, second)]
        self.attacks[mid] = _Attack(a, b)
        return out

    def _fabricate_case1(self, pid: int, mid: MessageId, a: _Side, b: _Side,
                         wa: frozenset[int]) -> list:
        """Every active witness is faulty: both ack sets can be minted
        outright and conflicting delivers pushed to disjoint halves."""
        for side in (a, b):
            side.sender_sig = self._sign_sender(pid, mid, side.digest)
            side.acks = [self._ack(PROTO_AV, w, mid, side.digest, side.sender_sig)
                         for w in sorted(wa)]
            side.delivered = True
        da = WireMessage(PROTO_AV, DELIVER, mid, digest=a.digest,
                         body=a.message, acks=tuple(a.acks))
        db = WireMessage(PROTO_AV, DELIVER, mid, digest=b.digest,
                         body=b.message, acks=tuple(b.acks))
        out = []
        for dst in range(self.ctx.n):
            out.append(Send(dst, da if dst % 2 == 0 else db))
        return out

    def _collusive_multicast(self, pid: int, mid: MessageId,
                             payload: bytes) -> list:
        ctx = self.ctx
        if ctx.kind is ProtocolKind.ACT and ctx.witness_seed is not None:
            wa = ctx.w_active(mid)
            self.attacked_ids.append(mid)
            a, b = self._two_messages(mid, payload)
            self.mcast_log += [(mid, a.digest), (mid, b.digest)]
            if wa <= ctx.faulty:
                return self._fabricate_case1(pid, mid, a, b, wa)
            # Fall back to an equivocation attempt with collusive helpers.
            self.attacked_ids.pop()
            del self.mcast_log[-2:]
            return self._equivocate(pid, mid, payload)
        return self._equivocate(pid, mid, payload)

    def _regime_split(self, pid: int, mid: MessageId, payload: bytes) -> list:
        """Active regime for one message, recovery regime for a conflicting
        one, against a 2t+1 set disjoint from the active witnesses."""
        ctx = self.ctx
        assert ctx.kind is ProtocolKind.ACT and ctx.witness_seed is not None
        t = ctx.params.t
        wa = ctx.w_active(mid)
        w3 = ctx.w3t(mid)
        a, b = self._two_messages(mid, payload)
        self.mcast_log += [(mid, a.digest), (mid, b.digest)]
        self.attacked_ids.append(mid)

        if wa <= ctx.faulty:
            return self._fabricate_case1(pid, mid, a, b, wa)

        a.sender_sig = self._sign_sender(pid, mid, a.digest)
        a.targets = wa
        a.acks = [self._ack(PROTO_AV, w, mid, a.digest, a.sender_sig)
                  for w in sorted(wa & ctx.faulty)]
        out = [Send(dst, WireMessage(PROTO_AV, REGULAR, mid, digest=a.digest,
                                     sender_sig=a.sender_sig))
               for dst in sorted(wa)]

        pool = w3 - wa
        if len(pool) >= 2 * t + 1:
            s_faulty = sorted(pool & ctx.faulty)
            s_correct = sorted(pool - ctx.faulty)
            s = frozenset((s_faulty + s_correct)[:2 * t + 1])
            b.targets = s
            b.acks = [self._ack(PROTO_3T, w, mid, b.digest)
                      for w in sorted(s & ctx.faulty)]
            rb = WireMessage(PROTO_3T, REGULAR, mid, digest=b.digest)
            out += [Send(dst, rb) for dst in sorted(s - ctx.faulty)]
            self.attacks[mid] = _Attack(a, b)
        else:
            self.attacks[mid] = _Attack(a, None)
        return out

    def _seq_burn(self, pid: int, mid: MessageId, payload: bytes) -> list:
        ctx = self.ctx
        if ctx.kind is ProtocolKind.ACT and ctx.witness_seed is not None \
                and ctx.w_active(mid) <= ctx.faulty:
            self.attacked_ids.append(mid)
            a, b = self._two_messages(mid, payload)
            self.mcast_log += [(mid, a.digest), (mid, b.digest)]
            return self._fabricate_case1(pid, mid, a, b, ctx.w_active(mid))
        # Burn the sequence number with an honestly multicast filler.
        return self._honest_multicast(pid, mid, payload)

    # -- message handling ----------------------------------------------------

    def _on_message(self, pid: int, src: int, msg: WireMessage,
                    now: int) -> list:
        if msg.role == ACK and msg.ack is not None \
                and msg.ack.subject in self.attacks:
            return self._collect(msg.ack)
        if self.strategy in ("equivocate", "seq-burner"):
            return self._honest(pid, ("message", src, msg), now)
        # Collusive team witness behavior: acknowledge and verify anything.
        if msg.role == REGULAR and msg.digest is not None:
            proto = msg.proto
            ack = self._ack(proto, pid, msg.subject, msg.digest,
                            msg.sender_sig if proto == PROTO_AV else None)
            return [Send(src, WireMessage(proto, ACK, msg.subject,
                                          digest=msg.digest, ack=ack))]
        if msg.role == INFORM and msg.digest is not None:
            return [Send(src, WireMessage(PROTO_AV, VERIFY, msg.subject,
                                          digest=msg.digest))]
        return []

    def _collect(self, ack: Ack) -> list:
        atk = self.attacks[ack.subject]
        out = []
        for side, even in ((atk.a, True), (atk.b, False)):
            if side is None or side.delivered or ack.digest != side.digest:
                continue
            side.acks.append(ack)
            if self._deliverable(ack.subject, side):
                side.delivered = True
                out += self._deliver_split(ack.subject, side, even)
        return out

    def _deliverable(self, mid: MessageId, side: _Side) -> bool:
        ctx = self.ctx
        kc = ctx.keychain
        if ctx.kind is ProtocolKind.E:
            need = dissemination_quorum_size(ctx.params)
            return len(valid_signers(side.acks, PROTO_E, mid, side.digest,
                                     kc)) >= need
        if ctx.kind is ProtocolKind.THREE_T:
            good = valid_signers(side.acks, PROTO_3T, mid, side.digest, kc)
            return len(good & ctx.w3t(mid)) >= 2 * ctx.params.t + 1
        wa = ctx.w_active(mid)
        av = valid_signers(side.acks, PROTO_AV, mid, side.digest, kc)
        if wa and av >= wa:
            return True
        t3 = valid_signers(side.acks, PROTO_3T, mid, side.digest, kc)
        return len(t3 & ctx.w3t(mid)) >= 2 * ctx.params.t + 1

    def _deliver_split(self, mid: MessageId, side: _Side, even: bool) -> list:
        proto = {ProtocolKind.E: PROTO_E, ProtocolKind.THREE_T: PROTO_3T,
                 ProtocolKind.ACT: PROTO_AV}[self.ctx.kind]
        msg = WireMessage(proto, DELIVER, mid, digest=side.digest,
                          body=side.message, acks=tuple(side.acks))
        atk = self.attacks[mid]
        both = atk.b is not None
        out = []
        for dst in range(self.ctx.n):
            if both and (dst % 2 == 0) != even:
                continue
            out.append(Send(dst, msg))
        return out


def adversary_act(adversary: Adversary, pid: int, event: tuple,
                  now: int) -> list:
    """Dispatch one event addressed to a faulty process to its strategy.

    Events are ("message", src, msg), ("timer", timer_id) or
    ("multicast", payload).
    """
    return adversary.act(pid, event, now)


def bind_adversary(world, strategy: str, faulty) -> object:
    """Install a strategy over an explicit faulty set on a freshly built
    world.  The set must respect the resilience threshold."""
    faulty = frozenset(faulty)
    if len(faulty) > world.config.t:
        raise TooManyFaultyError(
            f"{len(faulty)} faulty processes exceeds t={world.config.t}")
    if any(not 0 <= p < world.config.n for p in faulty):
        raise TooManyFaultyError("faulty process id out of range")
    world.rebind_adversary(strategy, faulty)
    return world
