"""Omniscient simulation trace: version creation, dependencies, and per-node
visibility times, plus end-of-run replica heads for convergence checking."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class VersionRecord:
    vid: int
    key: str
    value: object
    creator: object  # NodeId
    created: int  # SimTime
    deps: tuple[int, ...]
    stamp: object = None  # protocol version number (Lamport stamp, GR timestamp, vc)
    visibility: dict = field(default_factory=dict)  # NodeId -> SimTime


@dataclass
class VisibilityTrace:
    """Per-version creation and visibility log.

    mode is "node" for protocols with a per-datacenter primary per key
    (COPS, GentleRain, eventual) where visibility is tracked per node, and
    "quorum" for Dynamo, where the meaningful system-wide visibility event is
    write-quorum completion (recorded in `completion`).
    """

    mode: str = "node"
    versions: dict = field(default_factory=dict)  # vid -> VersionRecord
    completion: dict = field(default_factory=dict)  # vid -> SimTime (quorum mode)
    replica_nodes: dict = field(default_factory=dict)  # key -> tuple[NodeId]
    final_heads: dict = field(default_factory=dict)  # (NodeId, key) -> tuple[vid]
    crashed: set = field(default_factory=set)  # nodes down at end of run
    drops: list = field(default_factory=list)  # (time, src, dst, msg type)
    end_time: int = 0
    _next_vid: int = 0

    def new_version(self, key, value, creator, created, deps, stamp=None) -> int:
        vid = self._next_vid
        self._next_vid += 1
        self.versions[vid] = VersionRecord(
            vid, str(key), value, creator, created, tuple(deps), stamp
        )
        return vid

    def record_visible(self, vid, node, t):
        vis = self.versions[vid].visibility
        if node not in vis:  # first time only; visibility never regresses
            vis[node] = t

    def record_completion(self, vid, t):
        if vid not in self.completion:
            self.completion[vid] = t

    def record_drop(self, t, src, dst, tname):
        self.drops.append((t, str(src), str(dst), tname))

    # -- text export ------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"mode {self.mode}", f"end {self.end_time}"]
        for vid in sorted(self.versions):
            v = self.versions[vid]
            deps = ",".join(str(d) for d in v.deps) or "-"
            lines.append(
                f"version {vid} key {v.key} creator {v.creator} t {v.created} deps {deps}"
            )
            for node, t in sorted(v.visibility.items(), key=lambda kv: (kv[1], str(kv[0]))):
                lines.append(f"visible {vid} {node} {t}")
            if vid in self.completion:
                lines.append(f"complete {vid} {self.completion[vid]}")
        for node in sorted(self.crashed, key=str):
            lines.append(f"crashed {node}")
        for key in sorted(self.final_heads, key=lambda nk: (str(nk[0]), nk[1])):
            node, k = key
            heads = ",".join(str(v) for v in self.final_heads[key]) or "-"
            lines.append(f"head {node} {k} {heads}")
        for t, src, dst, tname in self.drops:
            lines.append(f"drop {t} {src} {dst} {tname}")
        return "\n".join(lines) + "\n"
