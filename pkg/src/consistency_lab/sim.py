"""Deterministic discrete-event kernel.

Virtual time is an integer count of microseconds.  The kernel owns the event
queue, per-node skewed physical clocks, the network model (latency, jitter,
loss, partitions, crashes), and the per-node message-processing capacity gate.

Two delivery disciplines are offered:

* ``send`` -- fire-and-forget: the message may be lost (loss-rate draw) or
  dropped at its would-be delivery time if the endpoints are separated by an
  active partition or the target is crashed.
* ``send_reliable`` -- a FIFO retransmitting channel (TCP-like): messages are
  delayed, never lost, and delivered in send order once the link is up.

Determinism: all randomness flows through seeded ``random.Random`` streams
and ties in the event queue are broken by event id, so identical seeds yield
identical traces.
"""

from __future__ import annotations

import hashlib
import heapq
import random
from collections import Counter, deque
from dataclasses import dataclass, field


@dataclass(frozen=True, order=True)
class NodeId:
    dc: int
    partition: int

    def __str__(self):
        return f"{self.dc}.{self.partition}"


@dataclass(frozen=True, order=True)
class ClientId:
    dc: int
    index: int

    def __str__(self):
        return f"c{self.dc}.{self.index}"


class Message:
    """Base class for protocol payloads.  control=True exempts a message from
    the per-node capacity gate (tiny periodic bookkeeping traffic)."""

    __slots__ = ()
    control = False
    tname = "msg"


@dataclass
class NetworkModel:
    ntt: list  # base one-way inter-datacenter latency matrix, microseconds
    intra_dc_latency: int = 100
    jitter: float = 0.0  # fraction; latency is scaled by 1 +/- U(0, jitter)
    loss_rate: float = 0.0

    def validate(self):
        d = len(self.ntt)
        for i in range(d):
            if len(self.ntt[i]) != d:
                raise ValueError("ntt matrix must be square")
            if self.ntt[i][i] != 0:
                raise ValueError("ntt diagonal must be zero")
            for j in range(d):
                if self.ntt[i][j] != self.ntt[j][i]:
                    raise ValueError("ntt matrix must be symmetric")
                if i != j and self.ntt[i][j] <= 0:
                    raise ValueError("inter-datacenter latency must be positive")
        if self.jitter < 0 or not (0 <= self.loss_rate <= 1):
            raise ValueError("bad jitter/loss_rate")


@dataclass
class ClockModel:
    max_skew: int = 0  # microseconds
    drift_ppm: float = 0.0
    offsets: dict = None  # optional explicit NodeId -> offset override


@dataclass
class PartitionInterval:
    group: frozenset  # one side of the bipartition (NodeIds); rest is the other
    start: int
    end: int


@dataclass
class CrashInterval:
    node: object  # NodeId
    start: int
    end: int


@dataclass
class FaultSchedule:
    partitions: list = field(default_factory=list)
    crashes: list = field(default_factory=list)

    def validate(self):
        for p in self.partitions + self.crashes:
            if p.start >= p.end:
                raise ValueError("fault interval must have start < end")

    def separated(self, a, b, t) -> bool:
        for p in self.partitions:
            if p.start <= t < p.end and ((a in p.group) != (b in p.group)):
                return True
        return False

    def crashed(self, node, t) -> bool:
        for c in self.crashes:
            if c.node == node and c.start <= t < c.end:
                return True
        return False


# event kinds
_DELIVER = 0  # network message, partition/crash checked at delivery
_DIRECT = 1  # pre-checked delivery (reliable channel), capacity still applies
_TIMER = 2  # self-scheduled event, no network semantics
_CHAN = 3  # reliable-channel poll


class _Channel:
    __slots__ = ("src", "dst", "queue", "poll_scheduled")

    def __init__(self, src, dst):
        self.src = src
        self.dst = dst
        self.queue = deque()  # (ready_time, msg)
        self.poll_scheduled = False


class Exhausted(Exception):
    """step() on an empty event queue."""


class Simulation:
    def __init__(
        self,
        network: NetworkModel,
        clock_model: ClockModel = None,
        faults: FaultSchedule = None,
        capacity: int = None,
        net_seed: int = 1,
        clock_seed: int = 2,
        retransmit_interval: int = 2000,
    ):
        network.validate()
        self.network = network
        self.clock_model = clock_model or ClockModel()
        self.faults = faults or FaultSchedule()
        self.faults.validate()
        self.capacity_cost = None if not capacity else max(1, round(1_000_000 / capacity))
        self.retransmit_interval = retransmit_interval

        self.now = 0
        self._queue = []
        self._eid = 0
        self.rng = random.Random(net_seed)
        self._clock_rng = random.Random(clock_seed)
        self.actors = {}

        self._busy_until = {}
        self._channels = {}
        self._clock_state = {}  # node -> [offset, drift, last_pc, last_stamp_us, seq]

        self.msg_counts = Counter()
        self.dropped = []
        self.on_drop = None
        self._digest = hashlib.sha256()
        self.processed = 0

    # -- actors -----------------------------------------------------------

    def add_actor(self, actor_id, handler):
        self.actors[actor_id] = handler

    def is_crashed(self, node) -> bool:
        return self.faults.crashed(node, self.now)

    # -- clocks -----------------------------------------------------------

    def _clock(self, node):
        st = self._clock_state.get(node)
        if st is None:
            cm = self.clock_model
            if cm.offsets is not None and node in cm.offsets:
                offset = cm.offsets[node]
            else:
                offset = (
                    self._clock_rng.randint(-cm.max_skew, cm.max_skew)
                    if cm.max_skew
                    else 0
                )
            drift = (
                self._clock_rng.uniform(-cm.drift_ppm, cm.drift_ppm)
                if cm.drift_ppm
                else 0.0
            )
            st = [offset, drift, 0, -1, 0]
            self._clock_state[node] = st
        return st

    def physical_clock(self, node) -> int:
        """The node's skewed physical clock, non-decreasing and within
        max_skew of virtual time."""
        st = self._clock(node)
        skew = st[0] + st[1] * self.now * 1e-6
        ms = self.clock_model.max_skew
        skew = max(-ms, min(ms, skew))
        pc = max(self.now + int(skew), st[2])
        pc = min(pc, self.now + ms)
        st[2] = pc
        return pc

    def clock_stamp(self, node) -> tuple:
        """A strictly increasing (clock, sub-tick) stamp for this node."""
        st = self._clock(node)
        pc = self.physical_clock(node)
        if pc == st[3]:
            st[4] += 1
        else:
            st[3] = pc
            st[4] = 0
        return (pc, st[4])

    # -- scheduling -------------------------------------------------------

    def _rep(self, actor_id):
        # clients share partition fate with their home datacenter's node 0
        if isinstance(actor_id, ClientId):
            return NodeId(actor_id.dc, 0)
        return actor_id

    def latency(self, src, dst) -> int:
        if src == dst:
            return 0
        a, b = self._rep(src), self._rep(dst)
        base = (
            self.network.intra_dc_latency
            if a.dc == b.dc
            else self.network.ntt[a.dc][b.dc]
        )
        if self.network.jitter:
            base = base * (1.0 + self.rng.uniform(-self.network.jitter, self.network.jitter))
        return max(1, round(base))

    def _push(self, time, kind, target, src, msg):
        self._eid += 1
        heapq.heappush(self._queue, (time, self._eid, kind, target, src, msg))
        return self._eid

    def send(self, src, dst, msg: Message, extra_delay: int = 0):
        """Fire-and-forget send.  Returns the event id, or None if the message
        was lost to the loss-rate draw (partition drops happen at delivery)."""
        assert extra_delay >= 0
        t = self.now + self.latency(src, dst) + extra_delay
        if self.network.loss_rate and self.rng.random() < self.network.loss_rate:
            self._drop(t, src, dst, msg)
            return None
        return self._push(t, _DELIVER, dst, src, msg)

    def send_reliable(self, src, dst, msg: Message):
        """FIFO retransmitting channel: delayed by loss/partitions/crashes,
        never dropped, delivered in send order."""
        ready = self.now + self.latency(src, dst)
        if self.network.loss_rate:
            while self.rng.random() < self.network.loss_rate:
                ready += self.retransmit_interval
        ch = self._channels.get((src, dst))
        if ch is None:
            ch = self._channels[(src, dst)] = _Channel(src, dst)
        ch.queue.append((ready, msg))
        if not ch.poll_scheduled:
            ch.poll_scheduled = True
            self._push(ready, _CHAN, dst, src, ch)

    def schedule_timer(self, actor_id, msg: Message, delay: int):
        assert delay >= 0
        return self._push(self.now + delay, _TIMER, actor_id, actor_id, msg)

    # -- dispatch ---------------------------------------------------------

    def _drop(self, t, src, dst, msg):
        self.dropped.append((t, src, dst, msg.tname))
        if self.on_drop:
            self.on_drop(t, src, dst, msg.tname)

    def step(self):
        """Process the earliest event.  Raises Exhausted on an empty queue."""
        while True:
            if not self._queue:
                raise Exhausted()
            time, eid, kind, target, src, msg = heapq.heappop(self._queue)
            assert time >= self.now
            self.now = time

            if kind == _CHAN:
                self._poll_channel(msg)
                return eid

            if kind == _DELIVER:
                a, b = self._rep(src), self._rep(target)
                if self.faults.separated(a, b, time) or (
                    isinstance(target, NodeId) and self.faults.crashed(target, time)
                ):
                    self._drop(time, src, target, msg)
                    continue

            if kind == _DIRECT and isinstance(target, NodeId) and self.faults.crashed(
                target, time
            ):
                # already past the delivery checks (sitting in the node's
                # input buffer); a crash delays processing, not receipt
                self._push(time + self.retransmit_interval, _DIRECT, target, src, msg)
                continue

            if kind in (_DELIVER, _DIRECT):
                if self.capacity_cost and isinstance(target, NodeId):
                    busy = self._busy_until.get(target, 0)
                    if busy > time:
                        # node saturated: requeue preserving arrival order.
                        # Control messages also wait their turn (so they never
                        # overtake payload traffic on the same link, which
                        # would break FIFO channel ordering) but cost nothing.
                        self._push(busy, _DIRECT, target, src, msg)
                        continue
                    if not msg.control:
                        self._busy_until[target] = time + self.capacity_cost

            handler = self.actors.get(target)
            if handler is None:
                continue
            self.msg_counts[msg.tname] += 1
            self.processed += 1
            self._digest.update(
                f"{time}:{eid}:{msg.tname}:{target}:{src}".encode()
            )
            handler.handle(self, src, msg)
            return eid

    def _poll_channel(self, ch: _Channel):
        ch.poll_scheduled = False
        while ch.queue:
            ready, msg = ch.queue[0]
            if ready > self.now:
                ch.poll_scheduled = True
                self._push(ready, _CHAN, ch.dst, ch.src, ch)
                return
            a, b = self._rep(ch.src), self._rep(ch.dst)
            if self.faults.separated(a, b, self.now) or (
                isinstance(ch.dst, NodeId) and self.faults.crashed(ch.dst, self.now)
            ):
                # link down: retransmit later, keep FIFO order
                ch.poll_scheduled = True
                self._push(self.now + self.retransmit_interval, _CHAN, ch.dst, ch.src, ch)
                return
            ch.queue.popleft()
            self._push(self.now, _DIRECT, ch.dst, ch.src, msg)

    def run(self, until: int = None, max_events: int = None):
        """Process events until the queue empties, `until` is passed, or
        `max_events` have been handled."""
        n = 0
        while self._queue:
            if until is not None and self._queue[0][0] > until:
                break
            try:
                self.step()
            except Exhausted:
                break
            n += 1
            if max_events is not None and n >= max_events:
                return n  # stopped early: virtual time must not jump ahead
        if until is not None and self.now < until:
            self.now = until
        return n

    @property
    def digest(self) -> str:
        return self._digest.hexdigest()
