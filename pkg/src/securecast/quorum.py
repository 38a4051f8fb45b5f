"""Dissemination quorum arithmetic and witness-set selection.

Witness selection is a keyed pseudorandom function of (message id, seed):
a SHA-256 of the inputs keys a Mersenne Twister stream, so every party
holding the seed computes the same sets, and without the seed the map is
indistinguishable from uniform for the purposes of the simulation.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from functools import lru_cache

from .core import MessageId, _enc, _u64


class InvalidParamsError(ValueError):
    pass


@dataclass(frozen=True)
class QuorumParams:
    n: int
    t: int

    def __post_init__(self):
        if self.t < 1:
            raise InvalidParamsError(f"t must be >= 1, got {self.t}")
        if 3 * self.t + 1 > self.n:
            raise InvalidParamsError(
                f"need 3t+1 <= n for a witness range to exist, got n={self.n} t={self.t}")


@dataclass(frozen=True)
class WitnessSet:
    members: frozenset[int]
    kind: str  # e-quorum | w3t-range | w3t-quorum | w-active | peer-targets

    def __contains__(self, pid: int) -> bool:
        return pid in self.members

    def __len__(self) -> int:
        return len(self.members)

    def sorted(self) -> list[int]:
        return sorted(self.members)


def dissemination_quorum_size(params: QuorumParams) -> int:
    """Smallest q with 2q - n >= t+1 (Consistency) and q <= n - t (Availability)."""
    return (params.n + params.t + 2) // 2


def check_dissemination_properties(params: QuorumParams, q: int) -> bool:
    """True iff q-subsets pairwise intersect in > t processes and some
    q-subset avoids any t faulty processes."""
    return 2 * q - params.n > params.t and q <= params.n - params.t


def _keyed_rng(seed: int, label: bytes, *ints: int) -> random.Random:
    h = hashlib.sha256(_enc(label, _u64(seed & (2**64 - 1)),
                            *[_u64(i) for i in ints])).digest()
    return random.Random(int.from_bytes(h[:8], "big"))


@lru_cache(maxsize=1 << 16)
def _w3t_members(sender: int, seq: int, n: int, t: int, seed: int) -> frozenset[int]:
    rng = _keyed_rng(seed, b"w3t", sender, seq)
    return frozenset(rng.sample(range(n), 3 * t + 1))


@lru_cache(maxsize=1 << 16)
def _w_active_members(sender: int, seq: int, n: int, kappa: int,
                      seed: int) -> frozenset[int]:
    rng = _keyed_rng(seed, b"wactive", sender, seq)
    return frozenset(rng.randrange(n) for _ in range(kappa))


def w3t(mid: MessageId, params: QuorumParams, seed: int) -> WitnessSet:
    """The 3t+1 distinct potential witnesses designated for a message id."""
    return WitnessSet(_w3t_members(mid.sender, mid.seq, params.n, params.t,
                                   seed), "w3t-range")


def w_active(mid: MessageId, kappa: int, params: QuorumParams, seed: int) -> WitnessSet:
    """The kappa-process active witness set for a message id.

    kappa independent uniform draws, so the chance that every draw lands on
    a faulty process is exactly (t/n)^kappa; repeated draws collapse in the
    set, which only ever shrinks the adversary's target.
    """
    if kappa > params.n:
        raise InvalidParamsError(f"kappa={kappa} exceeds n={params.n}")
    return WitnessSet(_w_active_members(mid.sender, mid.seq, params.n, kappa,
                                        seed), "w-active")


def sample_peers(rng: random.Random, members: frozenset[int], exclude: int,
                 delta: int) -> tuple[int, ...]:
    """delta distinct probe targets within a witness range, never self.

    Drawn from the probing process's own stream, so the choice is invisible
    to other parties until the informs land.
    """
    pool = sorted(m for m in members if m != exclude)
    if delta > len(pool):
        raise InvalidParamsError(
            f"delta={delta} exceeds available peers {len(pool)}")
    return tuple(rng.sample(pool, delta))


def sample_witness_subset(rng: random.Random, members: frozenset[int],
                          k: int) -> tuple[int, ...]:
    """A uniform k-subset of a witness range, from the caller's stream."""
    return tuple(rng.sample(sorted(members), k))
