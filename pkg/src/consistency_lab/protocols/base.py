"""Shared client driver and server plumbing for all protocols.

Clients are closed-loop: each issues one operation, waits for the reply (or
an operation timeout), records the call/response events into the shared
history, and moves on.  Client-side dependency tracking feeds the omniscient
trace: the dependencies of a new version are the versions the client observed
since its previous PUT, plus that previous PUT itself.
"""

from __future__ import annotations

from ..history import GET, PUT
from ..sim import Message
from ..store import ClientSession


class OpTimeout(Message):
    __slots__ = ("token",)
    control = True
    tname = "op_timeout"

    def __init__(self, token):
        self.token = token


class StartClient(Message):
    control = True
    tname = "start"


class BaseClient:
    """Closed-loop workload driver; protocol subclasses implement
    send_request() and the reply handlers."""

    def __init__(self, cid, ops, harness):
        self.cid = cid
        self.ops = ops  # list of (kind, key, value)
        self.harness = harness
        self.session = ClientSession(cid)
        self.idx = 0
        self.done = len(ops) == 0
        self.token = 0
        self.cur_op_id = None
        self.issue_time = 0
        self.dep_vids = set()
        self.last_put_vid = None

    # -- wiring -----------------------------------------------------------

    def start(self, sim, offset=0):
        sim.schedule_timer(self.cid, StartClient(), offset)

    def handle(self, sim, src, msg):
        if isinstance(msg, StartClient):
            self.issue_next(sim)
        elif isinstance(msg, OpTimeout):
            if not self.done and msg.token == self.token:
                if not self.on_timeout(sim):
                    self.fail_op(sim)
        else:
            self.on_reply(sim, src, msg)

    # -- op lifecycle -----------------------------------------------------

    def issue_next(self, sim):
        if self.idx >= len(self.ops):
            self.done = True
            self.harness.client_done(sim, self)
            return
        kind, key, value = self.ops[self.idx]
        self.token += 1
        self.cur_op_id = self.harness.next_op_id()
        self.issue_time = sim.now
        if kind == PUT:
            self.harness.history.record_call(str(self.cid), PUT, key, value, self.cur_op_id)
        else:
            self.harness.history.record_call(str(self.cid), GET, key, None, self.cur_op_id)
        self.send_request(sim, kind, key, value)
        sim.schedule_timer(self.cid, OpTimeout(self.token), self.harness.op_timeout)

    def complete_op(self, sim, kind, key, value=None):
        """Record a successful response and advance."""
        self.harness.history.record_resp(
            str(self.cid), kind, key, value if kind == GET else None, self.cur_op_id
        )
        self.harness.op_finished(sim, self, ok=True)
        self.token += 1  # invalidate the pending timeout
        self.idx += 1
        self.issue_next(sim)

    def fail_op(self, sim):
        """Unanswered or failed operation: no response event is recorded."""
        self.harness.op_finished(sim, self, ok=False)
        self.token += 1
        self.idx += 1
        self.issue_next(sim)

    # -- dependency tracking ----------------------------------------------

    def observe(self, vid):
        if vid is not None:
            self.dep_vids.add(vid)

    def current_deps(self):
        return tuple(sorted(self.dep_vids))

    def wrote(self, vid, compaction=True):
        if compaction:
            self.dep_vids = {vid}
        else:
            self.dep_vids.add(vid)
        self.last_put_vid = vid

    # -- protocol hooks ----------------------------------------------------

    def send_request(self, sim, kind, key, value):
        raise NotImplementedError

    def on_reply(self, sim, src, msg):
        raise NotImplementedError

    def on_timeout(self, sim) -> bool:
        """Return True if the op was re-issued (retry), False to fail it."""
        return False


class ServerNode:
    def __init__(self, node, topo, trace):
        self.node = node
        self.topo = topo
        self.trace = trace

    def start(self, sim, offset=0):
        """Hook for protocols with periodic background work."""

    def handle(self, sim, src, msg):
        raise NotImplementedError

    def final_heads(self):
        """key -> tuple of head vids at end of run (protocol-visible)."""
        raise NotImplementedError
