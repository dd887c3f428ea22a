"""Additive secret sharing over Z_{2^64} and the SecSum protocol.

Reals travel as two's-complement fixed-point numbers with ``f`` fractional
bits.  Every party splits its encoded input into ``M`` uniformly random
shares that add up to the input, keeps one, and sends one to each peer.  Each
party then announces the sum of the shares it holds; the sum of the
announcements is the sum of the inputs and nothing else is revealed.

With :class:`PrfSchedule` the pairwise shares are derived locally from
AES-128 keys exchanged once, which leaves a single announcement per party
per invocation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from .matrix import SeededRng
from .net import Party, ProtocolError
from .topics import Topic

DEFAULT_F = 31
MODES = ("float", "fixed", "prf")


class RangeError(ValueError):
    """An input does not fit the fixed-point capacity declared by the caller."""


def _mask(bits: int) -> np.uint64:
    return np.uint64((1 << bits) - 1) if bits < 64 else np.uint64(0xFFFFFFFFFFFFFFFF)


def check_capacity(bound: float, f: int, n_parties: int) -> None:
    """Reject configurations whose sum could wrap around the ring."""
    if not bound > 0:
        raise RangeError("magnitude bound must be positive")
    if n_parties * bound * 2.0**f >= 2.0**63:
        raise RangeError(
            f"bound {bound} with {n_parties} parties and f={f} overflows the 64-bit ring"
        )


def encode(x, f: int = DEFAULT_F, bound: float | None = None) -> np.ndarray:
    """Fixed-point encode reals into ring elements (round to nearest)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise RangeError("cannot encode NaN or Inf")
    if bound is not None and x.size and np.max(np.abs(x)) > bound:
        raise RangeError(f"input magnitude {np.max(np.abs(x))} exceeds declared bound {bound}")
    scaled = np.rint(x * 2.0**f)
    if scaled.size and np.max(np.abs(scaled)) >= 2.0**63:
        raise RangeError("value does not fit in 64 bits")
    return scaled.astype(np.int64).view(np.uint64)


def decode(raw, f: int = DEFAULT_F) -> np.ndarray:
    return np.asarray(raw, dtype=np.uint64).view(np.int64).astype(np.float64) * 2.0**-f


def share(x, n_parties: int, rng: SeededRng, bits: int = 64) -> list[np.ndarray]:
    """Split ring vector ``x`` into ``n_parties`` additive shares mod ``2**bits``.

    The first ``n_parties - 1`` shares are uniform; the last is chosen so the
    shares sum to ``x``.  Any proper subset is therefore uniform.
    """
    if n_parties < 1:
        raise ValueError("need at least one party")
    mask = _mask(bits)
    x = np.asarray(x, dtype=np.uint64) & mask
    shares = [rng.uint64(x.shape) & mask for _ in range(n_parties - 1)]
    last = x.copy()
    for s in shares:
        last = last - s
    shares.append(last & mask)
    return shares


def reconstruct(shares, bits: int = 64) -> np.ndarray:
    """Componentwise wrapping sum of the shares."""
    shares = [np.asarray(s, dtype=np.uint64) for s in shares]
    if not shares:
        raise ValueError("no shares")
    if any(s.shape != shares[0].shape for s in shares):
        raise ValueError("share dimensions differ")
    total = np.zeros(shares[0].shape, dtype=np.uint64)
    for s in shares:
        total = total + s
    return total & _mask(bits)


def float_sum(values) -> np.ndarray:
    """Sum in party order starting from zero (the float reference path)."""
    acc = np.zeros_like(np.asarray(values[0], dtype=np.float64))
    for v in values:
        acc = acc + np.asarray(v, dtype=np.float64)
    return acc


def _ring_sum(values) -> np.ndarray:
    total = np.zeros(values[0].shape, dtype=np.uint64)
    for v in values:
        total = total + v
    return total


def secsum(party: Party, x, f: int = DEFAULT_F, bound: float = 1.0, label: str | None = None) -> np.ndarray:
    """Plain SecSum: ``M(M-1)`` share messages then ``M`` announcements."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    check_capacity(bound, f, party.n_parties)
    enc = encode(x, f, bound)
    rnd = party.next_round()
    pieces = share(enc, party.n_parties, party.rng)
    for i in party.others:
        party.send(rnd, i, Topic.SHARE, pieces[i])
    held = [pieces[i] if i == party.id else party.recv(rnd, i, Topic.SHARE) for i in range(party.n_parties)]
    party.broadcast(rnd, Topic.SUM_SHARE, _ring_sum(held))
    announced = party.gather(rnd, Topic.SUM_SHARE)
    result = decode(_ring_sum(announced), f)
    if label is not None:
        party.trace.record(label, result)
    return result


def _aes_words(key: bytes, counter: int, n_words: int) -> np.ndarray:
    n_blocks = -(-n_words // 2)
    blocks = np.zeros(2 * n_blocks, dtype="<u8")
    blocks[0::2] = np.uint64(counter)
    blocks[1::2] = np.arange(n_blocks, dtype="<u8")
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    out = enc.update(blocks.tobytes()) + enc.finalize()
    return np.frombuffer(out, dtype="<u8")[:n_words].astype(np.uint64)


@dataclass
class PrfSchedule:
    """Pairwise AES-128 keys and the invocation counter of one party.

    ``outgoing[i]`` is the key of the share this party owes party ``i``;
    ``incoming[i]`` the key of the share party ``i`` owes this party.
    """

    owner: int
    outgoing: dict[int, bytes] = field(default_factory=dict)
    incoming: dict[int, bytes] = field(default_factory=dict)
    counter: int = 0

    @staticmethod
    def derive(key: bytes, j: int, size: int) -> np.ndarray:
        """``F_key(j)``: ``size`` pseudorandom ring elements for invocation ``j``."""
        return _aes_words(key, j, size)


def setup_prf(party: Party) -> PrfSchedule:
    """Exchange one fresh 128-bit key per ordered pair of parties."""
    sched = PrfSchedule(party.id)
    rnd = party.next_round()
    key_rng = party.rng.child("prf-keys")
    for i in party.others:
        words = key_rng.uint64(2)
        sched.outgoing[i] = words.astype("<u8").tobytes()
        party.send(rnd, i, Topic.PRF_KEY, words)
    for i in party.others:
        sched.incoming[i] = party.recv(rnd, i, Topic.PRF_KEY).astype("<u8").tobytes()
    return sched


def secsum_prf(
    party: Party,
    x,
    schedule: PrfSchedule,
    f: int = DEFAULT_F,
    bound: float = 1.0,
    label: str | None = None,
) -> np.ndarray:
    """SecSum with locally derived shares: one announcement per party."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    check_capacity(bound, f, party.n_parties)
    enc = encode(x, f, bound)
    j = schedule.counter
    schedule.counter += 1
    held = enc.copy()
    for i in party.others:
        held = held - schedule.derive(schedule.outgoing[i], j, enc.size)
        held = held + schedule.derive(schedule.incoming[i], j, enc.size)
    rnd = party.next_round()
    party.broadcast(rnd, Topic.PRF_SUM, np.concatenate([[np.uint64(j)], held]))
    announced = party.gather(rnd, Topic.PRF_SUM)
    for sender, msg in enumerate(announced):
        if int(msg[0]) != j:
            raise ProtocolError(f"party {party.id}: counter {int(msg[0])} from party {sender}, expected {j}")
    result = decode(_ring_sum([msg[1:] for msg in announced]), f)
    if label is not None:
        party.trace.record(label, result)
    return result


@dataclass(frozen=True)
class SecSumConfig:
    """How a protocol aggregates: exact float sum, plain or PRF fixed-point SecSum."""

    mode: str = "float"
    f: int = DEFAULT_F
    bound: float = 1.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"secsum mode must be one of {MODES}")
        if not 1 <= self.f <= 62:
            raise ValueError("f must be in [1, 62]")


def aggregate(
    party: Party, x, cfg: SecSumConfig, label: str | None = None, bound: float | None = None
) -> np.ndarray:
    """Sum ``x`` over all parties using the path selected by ``cfg``.

    ``bound`` overrides the configured magnitude bound for this call.
    """
    bound = cfg.bound if bound is None else bound
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape
    if cfg.mode == "float":
        result = party.ideal("secsum", x.copy(), float_sum)
        result = np.array(result, copy=True)
        if label is not None:
            party.trace.record(label, result)
        return result
    if cfg.mode == "fixed":
        out = secsum(party, x.ravel(), cfg.f, bound, label)
    else:
        sched = party.session.get("prf")
        if sched is None:
            sched = party.session["prf"] = setup_prf(party)
        out = secsum_prf(party, x.ravel(), sched, cfg.f, bound, label)
    return out.reshape(shape)
