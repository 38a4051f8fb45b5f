"""Identities, messages, digests and signatures shared by every protocol.

Cryptography is modeled, not real.  Digests are SHA-256 over a canonical
length-prefixed encoding; signatures are HMAC-SHA256 tokens under
per-process keys derived from a world secret.  Inside a simulation this is
sound: a token verifies for process p only if it was minted with p's key,
and the key of a correct process is only reachable through that process's
own engine.  A real public-key scheme could be slotted in behind KeyChain
without touching the protocols.
"""

from __future__ import annotations

import hashlib
import hmac
from enum import Enum
from functools import lru_cache
from typing import NamedTuple, Optional

DIGEST_WIDTH = 32

# Wire protocol tags. ACT engines emit AV traffic in the no-failure regime
# and 3T traffic in the recovery regime.
PROTO_E = "E"
PROTO_3T = "3T"
PROTO_AV = "AV"

ADVERSARY = "adversary"


class ProtocolKind(Enum):
    E = "e"
    THREE_T = "3t"
    ACT = "act"


class MessageId(NamedTuple):
    sender: int
    seq: int

    def __str__(self) -> str:
        return f"{self.sender}:{self.seq}"


class MulticastMessage(NamedTuple):
    id: MessageId
    payload: bytes


class Signature(NamedTuple):
    signer: int
    over: bytes      # digest of the signed data
    key_tag: bytes   # identifies the signing key
    mac: bytes       # the token itself


class Ack(NamedTuple):
    proto: str                       # PROTO_E / PROTO_3T / PROTO_AV
    signer: int
    subject: MessageId
    digest: bytes
    sender_sig: Optional[Signature]  # present only for AV acks
    sig: Signature


class ForgeryAttemptError(Exception):
    """Raised when a party requests a signature with a key it does not hold."""


def _enc(*parts: bytes) -> bytes:
    return b"".join(len(p).to_bytes(4, "big") + p for p in parts)


def _u64(x: int) -> bytes:
    return x.to_bytes(8, "big")


def digest(data: bytes) -> bytes:
    """Collision-free within a run by the hash assumption; deterministic."""
    return hashlib.sha256(data).digest()


@lru_cache(maxsize=1 << 16)
def message_digest(m: MulticastMessage) -> bytes:
    return digest(_enc(b"msg", _u64(m.id.sender), _u64(m.id.seq), m.payload))


def sender_sig_data(mid: MessageId, dig: bytes) -> bytes:
    """The byte string an ACT sender signs on its regular messages."""
    return _enc(b"avreg", _u64(mid.sender), _u64(mid.seq), dig)


def ack_sig_data(proto: str, subject: MessageId, dig: bytes,
                 sender_sig: Optional[Signature] = None) -> bytes:
    extra = sender_sig.mac if sender_sig is not None else b""
    return _enc(b"ack", proto.encode(), _u64(subject.sender),
                _u64(subject.seq), dig, extra)


class KeyChain:
    """Holds the per-process simulated private keys for one world.

    Honest engines call sign() for themselves.  Adversary code must pass
    caller=ADVERSARY and may only sign for processes in the faulty set;
    anything else raises ForgeryAttemptError, which models the assumption
    that private keys of correct processes cannot be broken.
    """

    def __init__(self, n: int, secret: bytes, faulty: frozenset[int] = frozenset(),
                 log_signs: bool = False):
        self.n = n
        self.faulty = frozenset(faulty)
        self._keys = [hashlib.sha256(_enc(b"key", secret, _u64(i))).digest()
                      for i in range(n)]
        self._tags = [hashlib.sha256(k).digest()[:8] for k in self._keys]
        self.sign_log: list[tuple[int, object]] = []
        self._log_signs = log_signs
        self._verify_memo: dict[tuple[int, bytes], bytes] = {}
        self._ack_memo: dict[Ack, bool] = {}
        self._signers_memo: dict[tuple, frozenset[int]] = {}

    def sign(self, signer: int, data: bytes, caller: object = None) -> Signature:
        if caller is None:
            caller = signer
        if caller != signer and not (caller == ADVERSARY and signer in self.faulty):
            raise ForgeryAttemptError(
                f"caller {caller!r} does not hold the key of process {signer}")
        if self._log_signs:
            self.sign_log.append((signer, caller))
        mac = hmac.new(self._keys[signer], data, hashlib.sha256).digest()
        return Signature(signer, digest(data), self._tags[signer], mac)

    def verify(self, signer: int, data: bytes, sig: Signature) -> bool:
        if sig is None or sig.signer != signer or not 0 <= signer < self.n:
            return False
        key = (signer, data)
        mac = self._verify_memo.get(key)
        if mac is None:
            mac = hmac.new(self._keys[signer], data, hashlib.sha256).digest()
            self._verify_memo[key] = mac
        return hmac.compare_digest(mac, sig.mac)


def conflicts(a: Ack, b: Ack) -> bool:
    """Same subject, different digest. Symmetric and irreflexive."""
    return a.subject == b.subject and a.digest != b.digest


def build_ack(keychain: KeyChain, proto: str, signer: int, subject: MessageId,
              dig: bytes, sender_sig: Optional[Signature] = None,
              caller: object = None) -> Ack:
    sig = keychain.sign(signer, ack_sig_data(proto, subject, dig, sender_sig),
                        caller=caller)
    return Ack(proto, signer, subject, dig, sender_sig, sig)


def ack_valid(ack: Ack, keychain: KeyChain) -> bool:
    """Signature check for a single acknowledgment.

    An AV ack embeds the sender's own signature; it only counts if that
    inner signature verifies too, which is what ties AV ack sets back to an
    actual multicast by the sender.  Validity is a pure function of the ack
    under this world's keys, so results are memoized: an ack set broadcast
    to the whole group is verified once, not once per recipient.
    """
    cached = keychain._ack_memo.get(ack)
    if cached is not None:
        return cached
    ok = _ack_valid_uncached(ack, keychain)
    keychain._ack_memo[ack] = ok
    return ok


def _ack_valid_uncached(ack: Ack, keychain: KeyChain) -> bool:
    if ack.proto == PROTO_AV:
        if ack.sender_sig is None:
            return False
        if not keychain.verify(ack.subject.sender,
                               sender_sig_data(ack.subject, ack.digest),
                               ack.sender_sig):
            return False
    elif ack.sender_sig is not None:
        return False
    return keychain.verify(ack.signer,
                           ack_sig_data(ack.proto, ack.subject, ack.digest,
                                        ack.sender_sig),
                           ack.sig)


def valid_signers(acks, proto: str, subject: MessageId, dig: bytes,
                  keychain: KeyChain) -> set[int]:
    """Distinct signers with a valid ack for exactly (proto, subject, digest).

    Junk entries are ignored rather than poisoning the set, so validity of
    an ack set is monotone: removing an ack can never help.  Tuple inputs
    (the ack sets carried on deliver messages) are memoized, since every
    group member validates the same broadcast set.
    """
    key = None
    if type(acks) is tuple:
        key = (proto, subject, dig, acks)
        hit = keychain._signers_memo.get(key)
        if hit is not None:
            return set(hit)
    out: set[int] = set()
    for a in acks:
        if a.proto != proto or a.subject != subject or a.digest != dig:
            continue
        if a.signer in out:
            continue
        if ack_valid(a, keychain):
            out.add(a.signer)
    if key is not None:
        keychain._signers_memo[key] = frozenset(out)
    return out
