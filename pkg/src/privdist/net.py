"""Keyed message passing among simulated parties.

Each party runs in its own thread and talks to the others only through
:class:`Party` handles.  A message is addressed by the key
``(round, sender, receiver, topic)``; ``recv`` blocks until the keyed message
exists, so the order in which threads happen to run never changes what a
protocol computes.

Two transports share one mailbox implementation:

* ``memory`` (default): ``send`` deposits straight into the receiver's mailbox.
* ``tcp``: every party listens on a localhost socket and frames travel as
  ``[u32 length][u64 round][u16 sender][u16 receiver][u16 topic][payload]``,
  little-endian, where ``length`` counts the bytes after the length field.

Protocols that are only specified by their ideal behaviour (the float
reference paths) use :meth:`Party.ideal`, which hands every party the combined
value without generating envelopes.
"""

from __future__ import annotations

import hashlib
import json
import random
import socket
import struct
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .matrix import SeededRng
from .topics import PAYLOAD_KIND, Topic

BROADCAST = 0xFFFF
_HEADER = struct.Struct("<QHHH")
_LEN = struct.Struct("<I")
_MASK64 = (1 << 64) - 1


class ProtocolError(RuntimeError):
    """A party deviated from the message discipline or a peer aborted."""


class TransportError(RuntimeError):
    """A message did not arrive in time or a socket failed."""


@dataclass(frozen=True)
class Envelope:
    round: int
    sender: int
    receiver: int
    topic: int
    payload: bytes

    @property
    def key(self):
        return (self.round, self.sender, self.receiver, self.topic)


def encode_payload(topic: int, values) -> bytes:
    """Serialize ``values`` according to the registered kind of ``topic``."""
    kind = PAYLOAD_KIND.get(Topic(topic), "bytes")
    if kind == "bytes":
        return bytes(values)
    if kind == "f64":
        return np.ascontiguousarray(values, dtype="<f8").tobytes()
    if kind == "u64":
        return np.ascontiguousarray(values, dtype="<u8").tobytes()
    # u128: split each Python int into (low, high) words
    ints = [int(v) for v in np.ravel(np.asarray(values, dtype=object))]
    words = np.empty(2 * len(ints), dtype="<u8")
    words[0::2] = [v & _MASK64 for v in ints]
    words[1::2] = [(v >> 64) & _MASK64 for v in ints]
    return words.tobytes()


def decode_payload(topic: int, payload: bytes):
    kind = PAYLOAD_KIND.get(Topic(topic), "bytes")
    if kind == "bytes":
        return payload
    if kind == "f64":
        return np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if kind == "u64":
        return np.frombuffer(payload, dtype="<u8").astype(np.uint64)
    words = np.frombuffer(payload, dtype="<u8").astype(object)
    return words[0::2] | (words[1::2] << 64)


class ObservableTrace:
    """Ordered record of the values a protocol announces to every party."""

    def __init__(self):
        self.entries: list[tuple[str, np.ndarray]] = []

    def record(self, label: str, values) -> None:
        arr = np.array(values, dtype=np.float64, copy=True).ravel()
        self.entries.append((label, arr))

    def labels(self) -> list[str]:
        return [label for label, _ in self.entries]

    def get(self, label: str) -> np.ndarray:
        """Last value recorded under ``label``."""
        for name, values in reversed(self.entries):
            if name == label:
                return values
        raise KeyError(label)

    def digest(self) -> str:
        h = hashlib.sha256()
        for label, values in self.entries:
            h.update(label.encode())
            h.update(b"\0")
            h.update(struct.pack("<Q", values.size))
            h.update(values.astype("<f8").tobytes())
        return h.hexdigest()

    def to_json(self) -> str:
        return json.dumps([[label, values.tolist()] for label, values in self.entries])

    @classmethod
    def from_json(cls, text: str) -> "ObservableTrace":
        trace = cls()
        for label, values in json.loads(text):
            trace.record(label, values)
        return trace

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, ObservableTrace):
            return NotImplemented
        return self.digest() == other.digest()


class _Mailbox:
    """Messages addressed to one party, keyed by (round, sender, receiver, topic)."""

    def __init__(self, owner: int, abort: threading.Event):
        self.owner = owner
        self.abort = abort
        self.items: dict[tuple, bytes] = {}
        self.cond = threading.Condition()

    def deposit(self, key: tuple, payload: bytes) -> None:
        with self.cond:
            if key in self.items:
                raise ProtocolError(f"party {self.owner}: duplicate message {key}")
            self.items[key] = payload
            self.cond.notify_all()

    def take(self, keys: Sequence[tuple], timeout: float) -> bytes:
        deadline = time.monotonic() + timeout
        with self.cond:
            while True:
                for key in keys:
                    if key in self.items:
                        return self.items.pop(key)
                if self.abort.is_set():
                    raise ProtocolError(f"party {self.owner}: network aborted")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportError(f"party {self.owner}: timed out waiting for {keys[0]}")
                self.cond.wait(min(remaining, 0.5))

    def wake(self) -> None:
        with self.cond:
            self.cond.notify_all()


_UNSET = object()


class _IdealSlot:
    def __init__(self, n: int):
        self.values: list[Any] = [_UNSET] * n
        self.present = 0
        self.result: Any = None
        self.done = False
        self.fetched = 0


class Party:
    """One party's handle: its id, private rng, trace, and the message API."""

    def __init__(self, net: "SimNetwork", pid: int):
        self.net = net
        self.id = pid
        self.n_parties = net.n_parties
        self.rng = SeededRng(net.seed, pid)
        self.trace = ObservableTrace()
        self._round = 0
        self._sent_round = -1
        self._sent_keys: set = set()
        self._jitter = random.Random(f"{net.jitter_seed}:{pid}") if net.jitter_seed is not None else None
        self.sent_count = 0
        self.received_count = 0
        # per-party protocol state that outlives one call (e.g. PRF keys)
        self.session: dict = {}

    @property
    def others(self) -> list[int]:
        return [i for i in range(self.n_parties) if i != self.id]

    def next_round(self) -> int:
        """Allocate a fresh round number (all parties allocate in lockstep)."""
        r = self._round
        self._round += 1
        return r

    def _pause(self):
        if self._jitter is not None:
            time.sleep(self._jitter.random() * 2e-4)

    def _check_send(self, rnd: int, receiver: int, topic: int):
        if rnd < self._sent_round:
            raise ProtocolError(f"party {self.id}: round {rnd} after round {self._sent_round}")
        if rnd > self._sent_round:
            self._sent_round = rnd
            self._sent_keys.clear()
        key = (receiver, int(topic))
        if key in self._sent_keys:
            raise ProtocolError(f"party {self.id}: duplicate message {(rnd, self.id, receiver, int(topic))}")
        self._sent_keys.add(key)

    def send(self, rnd: int, receiver: int, topic: int, values) -> None:
        if not 0 <= receiver < self.n_parties:
            raise ProtocolError(f"no party {receiver}")
        self._pause()
        self._check_send(rnd, receiver, topic)
        env = Envelope(rnd, self.id, receiver, int(topic), encode_payload(topic, values))
        self.sent_count += 1
        self.net._transmit(env)

    def broadcast(self, rnd: int, topic: int, values) -> None:
        self._pause()
        self._check_send(rnd, BROADCAST, topic)
        env = Envelope(rnd, self.id, BROADCAST, int(topic), encode_payload(topic, values))
        self.sent_count += 1
        self.net._transmit(env)

    def recv(self, rnd: int, sender: int, topic: int, timeout: float | None = None):
        """Dequeue the message from ``sender`` at ``(rnd, topic)``.

        Point-to-point and broadcast messages are both matched; a key is
        delivered exactly once.
        """
        self._pause()
        keys = [(rnd, sender, self.id, int(topic)), (rnd, sender, BROADCAST, int(topic))]
        payload = self.net._mailboxes[self.id].take(keys, self.net.timeout if timeout is None else timeout)
        self.received_count += 1
        return decode_payload(topic, payload)

    def gather(self, rnd: int, topic: int, include_self: bool = True) -> list:
        """Receive the broadcasts of round ``rnd`` from every party, in party order."""
        senders = range(self.n_parties) if include_self else self.others
        return [self.recv(rnd, s, topic) for s in senders]

    def ideal(self, tag, value, combine: Callable[[list], Any]):
        """Evaluate an ideal functionality over every party's ``value``.

        ``combine`` receives the values in party order and its result is
        returned to every party.  No envelope is produced.
        """
        self._pause()
        return self.net._ideal(self.id, (self.next_round(), tag), value, combine)


class SimNetwork:
    """A set of ``n_parties`` parties plus the transport connecting them."""

    def __init__(
        self,
        n_parties: int,
        transport: str = "memory",
        seed: int = 0,
        timeout: float = 60.0,
        jitter_seed: int | None = None,
        log_envelopes: bool = True,
    ):
        if n_parties < 1:
            raise ValueError("a network needs at least one party")
        if n_parties >= BROADCAST:
            raise ValueError("too many parties for 16-bit ids")
        if transport not in ("memory", "tcp"):
            raise ValueError(f"unknown transport {transport!r}")
        self.n_parties = n_parties
        self.transport = transport
        self.seed = seed
        self.timeout = timeout
        self.jitter_seed = jitter_seed
        self.log_envelopes = log_envelopes
        self.envelopes: list[Envelope] = []
        self.message_count = 0
        self._count_lock = threading.Lock()
        self._abort = threading.Event()
        self._mailboxes = [_Mailbox(i, self._abort) for i in range(n_parties)]
        self._ideal_cond = threading.Condition()
        self._ideal_slots: dict[tuple, _IdealSlot] = {}
        self.parties = [Party(self, i) for i in range(n_parties)]
        self._tcp = _TcpLayer(self) if transport == "tcp" else None

    # -- transport ---------------------------------------------------------

    def _transmit(self, env: Envelope) -> None:
        with self._count_lock:
            self.message_count += 1
            if self.log_envelopes:
                self.envelopes.append(env)
        if self._tcp is not None:
            self._tcp.transmit(env)
            return
        targets = range(self.n_parties) if env.receiver == BROADCAST else [env.receiver]
        for r in targets:
            self._mailboxes[r].deposit(env.key, env.payload)

    def _ideal(self, pid: int, key: tuple, value, combine):
        with self._ideal_cond:
            slot = self._ideal_slots.setdefault(key, _IdealSlot(self.n_parties))
            if slot.values[pid] is not _UNSET:
                raise ProtocolError(f"party {pid}: duplicate ideal call {key}")
            slot.values[pid] = value
            slot.present += 1
            if slot.present == self.n_parties:
                slot.result = combine(slot.values)
                slot.done = True
                self._ideal_cond.notify_all()
            deadline = time.monotonic() + self.timeout
            while not slot.done:
                if self._abort.is_set():
                    raise ProtocolError(f"party {pid}: network aborted")
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TransportError(f"party {pid}: ideal call {key} timed out")
                self._ideal_cond.wait(min(remaining, 0.5))
            slot.fetched += 1
            if slot.fetched == self.n_parties:
                del self._ideal_slots[key]
            return slot.result

    def abort(self) -> None:
        self._abort.set()
        for box in self._mailboxes:
            box.wake()
        with self._ideal_cond:
            self._ideal_cond.notify_all()

    # -- execution ---------------------------------------------------------

    def run(self, fn: Callable, *per_party_args: Sequence) -> list:
        """Run ``fn(party, *args_m)`` for every party concurrently.

        Each element of ``per_party_args`` is a sequence with one entry per
        party.  Returns the per-party results in party order; if any party
        raises, the others are woken and the first exception is re-raised.
        """
        for seq in per_party_args:
            if len(seq) != self.n_parties:
                raise ValueError("per-party arguments must have one entry per party")
        results: list[Any] = [None] * self.n_parties
        errors: list[tuple[int, BaseException]] = []

        def body(m):
            try:
                results[m] = fn(self.parties[m], *(seq[m] for seq in per_party_args))
            except BaseException as exc:  # noqa: BLE001 - re-raised below
                errors.append((m, exc))
                self.abort()

        if self.n_parties == 1:
            body(0)
        else:
            threads = [threading.Thread(target=body, args=(m,), daemon=True) for m in range(self.n_parties)]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        if errors:
            # prefer the root cause over the aborts it triggered in other parties
            root = [e for e in errors if not (isinstance(e[1], ProtocolError) and "aborted" in str(e[1]))]
            raise (root or errors)[0][1]
        return results

    def transcript(self) -> list[Envelope]:
        """Logged envelopes sorted by key (arrival order is not meaningful)."""
        return sorted(self.envelopes, key=lambda e: e.key)

    def close(self) -> None:
        if self._tcp is not None:
            self._tcp.close()
            self._tcp = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def create_network(n_parties: int, transport: str = "memory", **kwargs) -> SimNetwork:
    return SimNetwork(n_parties, transport=transport, **kwargs)


class _TcpLayer:
    """Localhost sockets, one listener per party and one connection per ordered pair."""

    def __init__(self, net: SimNetwork):
        self.net = net
        self.listeners: list[socket.socket] = []
        self.ports: list[int] = []
        self.out: dict[tuple[int, int], socket.socket] = {}
        self.out_locks = {}
        self.lock = threading.Lock()
        self.closed = False
        try:
            for _ in range(net.n_parties):
                s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
                s.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
                s.bind(("127.0.0.1", 0))
                s.listen(max(8, net.n_parties))
                self.listeners.append(s)
                self.ports.append(s.getsockname()[1])
        except OSError as exc:
            self.close()
            raise TransportError(f"cannot bind localhost port: {exc}") from exc
        for m, s in enumerate(self.listeners):
            threading.Thread(target=self._accept_loop, args=(m, s), daemon=True).start()

    def _accept_loop(self, owner: int, listener: socket.socket):
        while not self.closed:
            try:
                conn, _ = listener.accept()
            except OSError:
                return
            threading.Thread(target=self._read_loop, args=(owner, conn), daemon=True).start()

    def _read_exact(self, conn, n):
        buf = bytearray()
        while len(buf) < n:
            chunk = conn.recv(n - len(buf))
            if not chunk:
                return None
            buf += chunk
        return bytes(buf)

    def _read_loop(self, owner: int, conn: socket.socket):
        with conn:
            while True:
                try:
                    head = self._read_exact(conn, _LEN.size)
                    if head is None:
                        return
                    (length,) = _LEN.unpack(head)
                    body = self._read_exact(conn, length)
                    if body is None:
                        return
                except OSError:
                    return
                rnd, sender, receiver, topic = _HEADER.unpack_from(body)
                try:
                    self.net._mailboxes[owner].deposit((rnd, sender, receiver, topic), body[_HEADER.size :])
                except ProtocolError:
                    self.net.abort()
                    return

    def _conn(self, sender: int, receiver: int) -> tuple[socket.socket, threading.Lock]:
        key = (sender, receiver)
        with self.lock:
            if key not in self.out:
                try:
                    c = socket.create_connection(("127.0.0.1", self.ports[receiver]), timeout=self.net.timeout)
                except OSError as exc:
                    raise TransportError(f"cannot connect {sender}->{receiver}: {exc}") from exc
                c.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                self.out[key] = c
                self.out_locks[key] = threading.Lock()
            return self.out[key], self.out_locks[key]

    def transmit(self, env: Envelope):
        body = _HEADER.pack(env.round, env.sender, env.receiver, env.topic) + env.payload
        frame = _LEN.pack(len(body)) + body
        targets = range(self.net.n_parties) if env.receiver == BROADCAST else [env.receiver]
        for r in targets:
            if r == env.sender:
                self.net._mailboxes[r].deposit(env.key, env.payload)
                continue
            conn, lock = self._conn(env.sender, r)
            try:
                with lock:
                    conn.sendall(frame)
            except OSError as exc:
                raise TransportError(f"send {env.sender}->{r} failed: {exc}") from exc

    def close(self):
        self.closed = True
        for s in list(self.out.values()) + self.listeners:
            try:
                s.close()
            except OSError:
                pass
