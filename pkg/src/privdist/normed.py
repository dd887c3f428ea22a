"""NormedSecSum: every party learns ``s / ||s||_2`` for ``s = sum_m x_m``.

The norm is computed inside a fixed-point circuit and never opened.  The
circuit is written once against a small engine interface and executed by

* :class:`PlainEngine`, which evaluates it on exact integers (the ideal
  functionality, run centrally), or
* :class:`SharedEngine`, which evaluates it on additive shares modulo
  ``2**128``.  Multiplications consume Beaver triples and truncations consume
  masked-opening material, both prepared by a trusted dealer
  (:func:`dealer_offline`) that stands in for a cryptographic offline phase.

Truncation is exact in both engines, so their outputs agree bit for bit.

Circuit outline, with ``f`` fractional bits:

1. reshare the encoded inputs and add them locally into shares of ``s``;
2. ``Q = trunc(sum_i s_i * s_i)``;
3. branch-free initial guess: ``Q = a * 10**(2n)`` with ``1 <= a < 100`` gives
   ``2 * 10**n`` when ``a < 10`` and ``6 * 10**n`` otherwise, assembled from
   comparison bits against every decade boundary;
4. Babylonian iterations ``x <- (x + Q * y) / 2`` where ``y`` tracks ``1/x``
   by warm-started Newton steps ``y <- y * (2 - x * y)``;
5. ``s_hat_i = trunc(s_i * y)``, then open ``s_hat``.
"""

from __future__ import annotations

import math
import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .matrix import SeededRng
from .net import Party
from .secsum import float_sum
from .topics import Topic

RING_BITS = 128
MOD = 1 << RING_BITS
KAPPA = 40  # statistical masking parameter
MAX_BITS = RING_BITS - KAPPA - 2  # secret values must satisfy |x| < 2**MAX_BITS
CAPACITY = 100.0  # largest squared norm the initial guess covers
DEFAULT_ITERS = 16
DEFAULT_WIDTH = 4
BACKEND_MODES = ("float", "ideal", "shared-circuit")
# The sqrt circuit overflows the ring on tiny inputs when f > MAX_F and on
# inputs near CAPACITY when f < MIN_F.
MIN_F, MAX_F = 6, 34


class DegenerateInputError(ValueError):
    """The summed vector is zero, so it has no direction."""


class OfflinePhaseError(RuntimeError):
    """The dealer material ran out (or was never generated)."""


class RangeError(ValueError):
    """A circuit value left the range in which truncation is exact."""


def _objs(values) -> np.ndarray:
    out = np.empty(len(values), dtype=object)
    out[:] = [int(v) for v in values]
    return out


def _center(v: int) -> int:
    v %= MOD
    return v - MOD if v >= MOD // 2 else v


def encode_fixed(x, f: int) -> np.ndarray:
    """Round reals to fixed point as exact Python ints."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if not np.all(np.isfinite(x)):
        raise RangeError("cannot encode NaN or Inf")
    return _objs(np.rint(np.ldexp(x, f)).tolist())


def decode_fixed(v, f: int) -> np.ndarray:
    return np.array([math.ldexp(int(a), -f) for a in v], dtype=np.float64)


def newton_schedule(iters: int) -> list[int]:
    """Reciprocal refinement steps after each Babylonian iteration.

    The first update can move ``x`` by a factor close to 2, so the stale
    reciprocal needs several quadratic steps; later updates are tiny.
    """
    head = [8, 4, 3, 2, 2]
    return (head + [1] * max(0, iters - len(head)))[:iters]


FINAL_NEWTON = 2


def trunc_steps(bits: int, width: int) -> list[int]:
    q, r = divmod(bits, width)
    return [width] * q + ([r] if r else [])


def decade_table(f: int):
    """Thresholds (raw ints) and guesses ``(x, 1/x)`` for the initial guess.

    Returns ``thresholds, xs, ys`` where ``xs[0]`` applies to the lowest cell
    and ``xs[j]`` once ``Q >= thresholds[j-1]``.
    """
    n_min = math.floor(math.log10(2.0**-f) / 2)
    thresholds, xs = [], []
    for n in range(n_min, 1):
        for a, guess in ((1, 2.0), (10, 6.0)):
            if not (n == n_min and a == 1):
                thresholds.append(a * 10.0 ** (2 * n))
            xs.append(guess * 10.0**n)
    raw_t = [max(1, math.ceil(math.ldexp(t, f))) for t in thresholds]
    raw_x = [round(math.ldexp(v, f)) for v in xs]
    raw_y = [round(math.ldexp(1.0 / v, f)) for v in xs]
    return raw_t, raw_x, raw_y


def compare_bits_width(f: int) -> int:
    """Bit width that bounds ``|Q - t|`` for every threshold ``t``."""
    return f + 17


@dataclass(frozen=True)
class OfflineBudget:
    """Dealer material: Beaver triples plus truncation masks per chunk width."""

    triples: int = 0
    masks: tuple = ()  # sorted (width, count) pairs

    @staticmethod
    def of(triples: int, masks: dict) -> "OfflineBudget":
        return OfflineBudget(triples, tuple(sorted((w, c) for w, c in masks.items() if c)))

    def mask_dict(self) -> dict:
        return dict(self.masks)

    def __add__(self, other):
        m = Counter(self.mask_dict())
        m.update(other.mask_dict())
        return OfflineBudget.of(self.triples + other.triples, m)

    def __mul__(self, k: int):
        return OfflineBudget.of(self.triples * k, {w: c * k for w, c in self.masks})


def nss_budget(d: int, f: int, iters: int = DEFAULT_ITERS, width: int = DEFAULT_WIDTH) -> OfflineBudget:
    """Exact material consumed by one shared-circuit invocation on length ``d``."""
    n_thr = len(decade_table(f)[0]) + 1
    newton = sum(newton_schedule(iters)) + FINAL_NEWTON
    triples = d + iters + 2 * newton + d
    masks: Counter = Counter()

    def add(bits, count):
        for w in trunc_steps(bits, width):
            masks[w] += count

    add(f, 1)  # Q
    add(compare_bits_width(f), n_thr)
    add(f + 1, iters)
    add(f, 2 * newton)
    add(f, d)  # output
    return OfflineBudget.of(triples, masks)


# -- engines -------------------------------------------------------------------


class PlainEngine:
    """Evaluates the circuit on exact integers and counts dealer material."""

    def __init__(self, f: int, width: int = DEFAULT_WIDTH):
        self.f = f
        self.width = width
        self.triples_used = 0
        self.masks_used: Counter = Counter()

    def const(self, ints):
        return _objs(ints)

    def add(self, a, b):
        return a + b

    def sub(self, a, b):
        return a - b

    def scale(self, a, k: int):
        return a * int(k)

    def add_const(self, a, ints):
        return a + _objs(ints)

    def mul(self, a, b):
        self.triples_used += len(a)
        return a * b

    def _check(self, a):
        bound = 1 << MAX_BITS
        for v in a:
            if not -bound < v < bound:
                raise RangeError("fixed-point value out of range; rescale the inputs")

    def trunc(self, a, bits: int, rounding: bool = True):
        if rounding:
            a = a + (1 << (bits - 1))
        for w in trunc_steps(bits, self.width):
            self._check(a)
            self.masks_used[w] += len(a)
            a = _objs([v >> w for v in a])
        return a

    def total(self, a):
        return _objs([sum(a)])

    def open(self, a) -> list[int]:
        return [int(v) for v in a]

    def usage(self) -> OfflineBudget:
        return OfflineBudget.of(self.triples_used, self.masks_used)


@dataclass
class TripleStore:
    """One party's share of the dealer material.

    ``triples`` holds rows ``(a, b, c)``; ``masks[w]`` holds rows
    ``(r, r >> w, table[0], ..., table[2**w - 1])`` where
    ``table[v] = [v < r mod 2**w]``.
    """

    party: int
    f: int
    triples: np.ndarray
    masks: dict = field(default_factory=dict)
    _t: int = 0
    _m: dict = field(default_factory=dict)

    @property
    def triples_left(self) -> int:
        return len(self.triples) - self._t

    def masks_left(self, width: int) -> int:
        return len(self.masks.get(width, ())) - self._m.get(width, 0)

    def take_triples(self, n: int) -> np.ndarray:
        if self.triples_left < n:
            raise OfflinePhaseError(
                f"party {self.party}: needs {n} Beaver triples, {self.triples_left} left"
            )
        out = self.triples[self._t : self._t + n]
        self._t += n
        return out

    def take_masks(self, width: int, n: int) -> np.ndarray:
        if self.masks_left(width) < n:
            raise OfflinePhaseError(
                f"party {self.party}: needs {n} truncation masks of width {width}, "
                f"{self.masks_left(width)} left"
            )
        start = self._m.get(width, 0)
        self._m[width] = start + n
        return self.masks[width][start : start + n]

    def save(self, fh: BinaryIO) -> None:
        """Write the store: header ``(f, count)`` then raw little-endian u64 words.

        Each ring element is two words (low, high).  After the triples come
        one ``(width, count)`` header and rows per mask width.
        """
        fh.write(struct.pack("<QQ", self.f, len(self.triples)))
        fh.write(_words(self.triples))
        fh.write(struct.pack("<Q", len(self.masks)))
        for w in sorted(self.masks):
            fh.write(struct.pack("<QQ", w, len(self.masks[w])))
            fh.write(_words(self.masks[w]))

    @classmethod
    def load(cls, fh: BinaryIO, party: int = 0) -> "TripleStore":
        f, count = struct.unpack("<QQ", fh.read(16))
        triples = _unwords(fh.read(count * 3 * 16), (count, 3))
        (n_widths,) = struct.unpack("<Q", fh.read(8))
        masks = {}
        for _ in range(n_widths):
            w, n = struct.unpack("<QQ", fh.read(16))
            cols = 2 + (1 << w)
            masks[w] = _unwords(fh.read(n * cols * 16), (n, cols))
        return cls(party, f, triples, masks)


def _words(a: np.ndarray) -> bytes:
    flat = [int(v) for v in np.ravel(a)]
    words = np.empty(2 * len(flat), dtype="<u8")
    words[0::2] = [v & 0xFFFFFFFFFFFFFFFF for v in flat]
    words[1::2] = [v >> 64 for v in flat]
    return words.tobytes()


def _unwords(raw: bytes, shape) -> np.ndarray:
    w = np.frombuffer(raw, dtype="<u8").astype(object)
    vals = w[0::2] | (w[1::2] << 64)
    return vals.reshape(shape) if vals.size else np.empty(shape, dtype=object)


def _split(values: np.ndarray, n_parties: int, rng: SeededRng) -> list[np.ndarray]:
    """Additive shares mod 2**128 of an object array (any shape)."""
    shape = values.shape
    flat = values.ravel()
    parts = [rng.randbits(RING_BITS, flat.size) for _ in range(n_parties - 1)]
    last = flat.copy()
    for p in parts:
        last = last - p
    parts.append(last % MOD)
    return [p.reshape(shape) for p in parts]


def dealer_offline(budget, f: int, n_parties: int, rng: SeededRng) -> list[TripleStore]:
    """Generate per-party dealer material.

    ``budget`` is an :class:`OfflineBudget` or a plain triple count.
    """
    if isinstance(budget, int):
        budget = OfflineBudget(budget)
    n = budget.triples
    a = rng.randbits(RING_BITS, n)
    b = rng.randbits(RING_BITS, n)
    c = (a * b) % MOD
    triples = np.empty((n, 3), dtype=object)
    triples[:, 0], triples[:, 1], triples[:, 2] = a, b, c
    shares = _split(triples, n_parties, rng)
    stores = [TripleStore(m, f, shares[m]) for m in range(n_parties)]
    for w, count in budget.masks:
        r = rng.randbits(MAX_BITS + 1 + KAPPA, count)
        rows = np.zeros((count, 2 + (1 << w)), dtype=object)
        rows[:, 0] = r
        rows[:, 1] = r >> w
        low = (r & ((1 << w) - 1)).astype(np.int64)
        rows[:, 2:] = (np.arange(1 << w)[None, :] < low[:, None]).astype(np.int64).astype(object)
        for m, part in enumerate(_split(rows, n_parties, rng)):
            stores[m].masks[w] = part
    return stores


class SharedEngine:
    """Evaluates the circuit on this party's additive shares mod ``2**128``."""

    def __init__(self, party: Party, store: TripleStore, width: int = DEFAULT_WIDTH):
        self.party = party
        self.store = store
        self.f = store.f
        self.width = width
        self.lead = party.id == 0

    def const(self, ints):
        v = _objs(ints)
        return v % MOD if self.lead else v * 0

    def add(self, a, b):
        return (a + b) % MOD

    def sub(self, a, b):
        return (a - b) % MOD

    def scale(self, a, k: int):
        return (a * int(k)) % MOD

    def add_const(self, a, ints):
        return (a + self.const(ints)) % MOD

    def _open_raw(self, values):
        rnd = self.party.next_round()
        self.party.broadcast(rnd, Topic.NSS_OPEN, values)
        parts = self.party.gather(rnd, Topic.NSS_OPEN)
        total = parts[0]
        for p in parts[1:]:
            total = total + p
        return total % MOD

    def mul(self, a, b):
        n = len(a)
        t = self.store.take_triples(n)
        ta, tb, tc = t[:, 0], t[:, 1], t[:, 2]
        opened = self._open_raw(np.concatenate([(a - ta) % MOD, (b - tb) % MOD]))
        e, d = opened[:n], opened[n:]
        z = tc + e * tb + d * ta
        if self.lead:
            z = z + e * d
        return z % MOD

    def trunc(self, a, bits: int, rounding: bool = True):
        if rounding:
            a = self.add_const(a, [1 << (bits - 1)] * len(a))
        for w in trunc_steps(bits, self.width):
            rows = self.store.take_masks(w, len(a))
            offset = 1 << MAX_BITS
            y = self.add_const(a, [offset] * len(a))
            c = self._open_raw((y + rows[:, 0]) % MOD)
            low = [int(v) & ((1 << w) - 1) for v in c]
            borrow = rows[np.arange(len(a)), 2 + np.array(low, dtype=np.int64)]
            z = -rows[:, 1] - borrow
            if self.lead:
                z = z + _objs([(int(v) >> w) - (offset >> w) for v in c])
            a = z % MOD
        return a

    def total(self, a):
        return _objs([sum(a) % MOD])

    def open(self, a) -> list[int]:
        return [_center(int(v)) for v in self._open_raw(a)]


# -- the circuit ---------------------------------------------------------------


def _decade_guess(eng, q, f: int):
    raw_t, raw_x, raw_y = decade_table(f)
    thresholds = [1] + raw_t  # the first bit is [Q > 0]
    n = len(thresholds)
    z = eng.add_const(_repeat(eng, q, n), [-t for t in thresholds])
    # floor(z / 2**L) is -1 for z < 0 and 0 otherwise
    neg = eng.trunc(z, compare_bits_width(f), rounding=False)
    ge = eng.add_const(neg, [1] * n)
    xs = [raw_x[0]] + [raw_x[j] - raw_x[j - 1] for j in range(1, n)]
    ys = [raw_y[0]] + [raw_y[j] - raw_y[j - 1] for j in range(1, n)]
    x = eng.const([0])
    y = eng.const([0])
    for j in range(n):
        bit = ge[j : j + 1]
        x = eng.add(x, eng.scale(bit, xs[j]))
        y = eng.add(y, eng.scale(bit, ys[j]))
    return x, y


def _repeat(eng, a, n):
    return np.concatenate([a] * n)


def _newton(eng, x, y, f: int, steps: int):
    two = [2 << f]
    for _ in range(steps):
        e = eng.trunc(eng.mul(x, y), f)
        y = eng.trunc(eng.mul(y, eng.add_const(eng.sub(eng.const([0]), e), two)), f)
    return y


def sqrt_circuit(eng, q, f: int, iters: int = DEFAULT_ITERS, refine_root: bool = False):
    """Return ``(root, reciprocal)`` of the 1-element value ``q``.

    The Babylonian update multiplies the reciprocal's rounding error by ``q``.
    ``refine_root`` adds one correction ``x += (q - x^2) y / 2`` whose residual
    is exact, which keeps the root within a couple of ULP for large ``q``.
    """
    x, y = _decade_guess(eng, q, f)
    for steps in newton_schedule(iters):
        num = eng.add(eng.scale(x, 1 << f), eng.mul(q, y))
        x = eng.trunc(num, f + 1)
        y = _newton(eng, x, y, f, steps)
    y = _newton(eng, x, y, f, FINAL_NEWTON)
    if refine_root:
        r = eng.sub(eng.scale(q, 1 << f), eng.mul(x, x))
        x = eng.add(x, eng.trunc(eng.mul(r, y), 2 * f + 1))
    return x, y


def normalize_circuit(eng, s, f: int, iters: int = DEFAULT_ITERS):
    q = eng.trunc(eng.total(eng.mul(s, s)), f)
    _, inv = sqrt_circuit(eng, q, f, iters)
    return eng.trunc(eng.mul(s, _repeat(eng, inv, len(s))), f)


def fixed_sqrt(S: float, f: int = 31, iters: int = DEFAULT_ITERS) -> float:
    """Square root of a fixed-point number by the branch-free Babylonian circuit."""
    if S < 0:
        raise ValueError("fixed_sqrt of a negative number")
    eng = PlainEngine(f)
    q = encode_fixed([S], f)
    root, _ = sqrt_circuit(eng, q, f, iters, refine_root=True)
    return math.ldexp(root[0], -f)


# -- the protocol --------------------------------------------------------------


@dataclass(frozen=True)
class NssBackend:
    """How NormedSecSum is evaluated.

    ``float`` divides the exact float sum by its norm (reference path);
    ``ideal`` runs the fixed-point circuit on the summed encodings;
    ``shared-circuit`` runs it on secret shares with dealer material.
    """

    mode: str = "ideal"
    f: int = 31
    babylonian_iters: int = DEFAULT_ITERS
    width: int = DEFAULT_WIDTH

    def __post_init__(self):
        if self.mode not in BACKEND_MODES:
            raise ValueError(f"backend mode must be one of {BACKEND_MODES}")
        if not MIN_F <= self.f <= MAX_F:
            raise ValueError(f"f must be in [{MIN_F}, {MAX_F}]")
        if self.babylonian_iters < 1:
            raise ValueError("babylonian_iters must be >= 1")

    def budget(self, d: int) -> OfflineBudget:
        return nss_budget(d, self.f, self.babylonian_iters, self.width)


def _ideal_normalize(values, backend: NssBackend):
    s = values[0].copy()
    for v in values[1:]:
        s = s + v
    out = normalize_circuit(PlainEngine(backend.f, backend.width), s, backend.f, backend.babylonian_iters)
    return [int(v) for v in out]


def float_normalize(s: np.ndarray) -> np.ndarray:
    """``s / ||s||_2`` with the norm accumulated left to right."""
    norm = float(np.sqrt(np.cumsum(s * s)[-1])) if s.size else 0.0
    if norm == 0.0:
        raise DegenerateInputError("the summed vector is zero")
    return s / norm


def _float_normalize(values):
    return float_normalize(float_sum(values))


def normed_secsum(
    party: Party,
    x,
    backend: NssBackend = NssBackend(),
    store: TripleStore | None = None,
    label: str | None = None,
) -> np.ndarray:
    """Every party obtains ``s / ||s||_2`` for ``s = sum_m x_m``.

    Inputs must be scaled so that ``||s||_2 <= 1``.  ``store`` (this party's
    dealer material) is required by the shared-circuit backend.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if backend.mode == "float":
        out = np.array(party.ideal("nss-float", x.copy(), _float_normalize), copy=True)
    else:
        enc = encode_fixed(x, backend.f)
        if backend.mode == "ideal":
            raw = party.ideal("nss", enc, lambda vals: _ideal_normalize(vals, backend))
        else:
            if store is None:
                raise OfflinePhaseError("shared-circuit mode needs dealer material")
            eng = SharedEngine(party, store, backend.width)
            s = _reshare(party, enc)
            raw = eng.open(normalize_circuit(eng, s, backend.f, backend.babylonian_iters))
        if not any(raw):
            raise DegenerateInputError("the summed vector is zero")
        out = decode_fixed(raw, backend.f)
    if label is not None:
        party.trace.record(label, out)
    return out


def _reshare(party: Party, enc: np.ndarray) -> np.ndarray:
    """Split the encoded input among all parties and add up the received shares."""
    rnd = party.next_round()
    pieces = _split(enc % MOD, party.n_parties, party.rng)
    for i in party.others:
        party.send(rnd, i, Topic.NSS_INPUT, pieces[i])
    total = pieces[party.id]
    for i in party.others:
        total = total + party.recv(rnd, i, Topic.NSS_INPUT)
    return total % MOD
