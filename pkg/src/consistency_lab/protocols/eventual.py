"""Last-writer-wins eventual replication: the weakest baseline.

A PUT is stamped with a Lamport version, installed and acknowledged
immediately, and pushed fire-and-forget to the sibling partition in every
other datacenter, where it becomes visible on arrival if its stamp is newer
than the current head.  No dependency metadata is carried or checked.
"""

from __future__ import annotations

from ..history import GET, PUT
from ..sim import Message, NodeId
from ..store import LamportClock, node_index, partition_for_key
from .base import BaseClient, ServerNode


class EGet(Message):
    __slots__ = ("client", "op_id", "key")
    tname = "get"

    def __init__(self, client, op_id, key):
        self.client, self.op_id, self.key = client, op_id, key


class EPut(Message):
    __slots__ = ("client", "op_id", "key", "value", "dep_vids")
    tname = "put"

    def __init__(self, client, op_id, key, value, dep_vids):
        self.client, self.op_id, self.key = client, op_id, key
        self.value, self.dep_vids = value, dep_vids


class EGetReply(Message):
    __slots__ = ("op_id", "key", "value", "vid")
    tname = "get_reply"

    def __init__(self, op_id, key, value, vid):
        self.op_id, self.key, self.value, self.vid = op_id, key, value, vid


class EPutReply(Message):
    __slots__ = ("op_id", "key", "vid")
    tname = "put_reply"

    def __init__(self, op_id, key, vid):
        self.op_id, self.key, self.vid = op_id, key, vid


class EReplicate(Message):
    __slots__ = ("key", "value", "ver", "vid")
    tname = "replicate"

    def __init__(self, key, value, ver, vid):
        self.key, self.value, self.ver, self.vid = key, value, ver, vid


class EventualServer(ServerNode):
    def __init__(self, node, topo, trace):
        super().__init__(node, topo, trace)
        self.lamport = LamportClock(node_index(node, topo.partitions_per_dc))
        self.head = {}  # key -> (ver, value, vid)

    def _install(self, sim, key, ver, value, vid):
        cur = self.head.get(key)
        if cur is None or ver > cur[0]:
            self.head[key] = (ver, value, vid)
        self.trace.record_visible(vid, self.node, sim.now)

    def handle(self, sim, src, msg):
        if isinstance(msg, EGet):
            cur = self.head.get(msg.key)
            if cur is None:
                reply = EGetReply(msg.op_id, msg.key, None, None)
            else:
                reply = EGetReply(msg.op_id, msg.key, cur[1], cur[2])
            sim.send(self.node, msg.client, reply)
        elif isinstance(msg, EPut):
            ver = self.lamport.issue()
            vid = self.trace.new_version(
                msg.key, msg.value, self.node, sim.now, msg.dep_vids, stamp=ver
            )
            self._install(sim, msg.key, ver, msg.value, vid)
            sim.send(self.node, msg.client, EPutReply(msg.op_id, msg.key, vid))
            for dc in range(self.topo.num_datacenters):
                if dc != self.node.dc:
                    sim.send(
                        self.node,
                        NodeId(dc, self.node.partition),
                        EReplicate(msg.key, msg.value, ver, vid),
                    )
        elif isinstance(msg, EReplicate):
            self.lamport.merge(msg.ver)
            self._install(sim, msg.key, msg.ver, msg.value, msg.vid)

    def final_heads(self):
        return {key: (vid,) for key, (_, _, vid) in self.head.items()}


class EventualClient(BaseClient):
    def send_request(self, sim, kind, key, value):
        primary = NodeId(
            self.cid.dc, partition_for_key(key, self.harness.topo.partitions_per_dc)
        )
        if kind == PUT:
            msg = EPut(self.cid, self.cur_op_id, key, value, self.current_deps())
        else:
            msg = EGet(self.cid, self.cur_op_id, key)
        sim.send(self.cid, primary, msg)

    def on_reply(self, sim, src, msg):
        if msg.op_id != self.cur_op_id:
            return
        if isinstance(msg, EGetReply):
            if msg.vid is not None:
                self.observe(msg.vid)
            self.complete_op(sim, GET, msg.key, msg.value)
        elif isinstance(msg, EPutReply):
            self.wrote(msg.vid)
            self.complete_op(sim, PUT, msg.key)


CLIENT = EventualClient
SERVER = EventualServer
TRACE_MODE = "node"
