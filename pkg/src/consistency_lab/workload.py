"""Deterministic client workload generation.

Every PUT value is globally unique (client number and sequence number packed
into an integer) so a read unambiguously identifies the write it observed.
"""

from __future__ import annotations

import bisect
import random
from dataclasses import dataclass

from .history import GET, PUT
from .sim import ClientId
from .store import key_in_partition


@dataclass
class WorkloadSpec:
    clients_per_dc: int = 2
    ops_per_client: int = 100
    pattern: str = "ratio"  # "ratio" or "read_all_write_one"
    reads: int = 9  # per round, for the ratio pattern
    writes: int = 1
    key_dist: str = "uniform"  # or "zipf"
    zipf_theta: float = 0.99
    keys_per_partition: int = 100
    seed: int = 0

    def validate(self):
        if self.pattern not in ("ratio", "read_all_write_one"):
            raise ValueError(f"unknown workload pattern {self.pattern!r}")
        if self.key_dist not in ("uniform", "zipf"):
            raise ValueError(f"unknown key distribution {self.key_dist!r}")
        if self.pattern == "ratio" and (self.reads < 0 or self.writes < 1):
            raise ValueError("ratio pattern needs reads >= 0 and writes >= 1")
        if self.clients_per_dc < 1 or self.ops_per_client < 1:
            raise ValueError("need at least one client and one op")
        if self.keys_per_partition < 1:
            raise ValueError("keys_per_partition must be >= 1")


def _zipf_cdf(n: int, theta: float):
    weights = [1.0 / (i + 1) ** theta for i in range(n)]
    total = sum(weights)
    cdf, acc = [], 0.0
    for w in weights:
        acc += w / total
        cdf.append(acc)
    return cdf


def generate_workload(spec: WorkloadSpec, topo) -> dict:
    """ClientId -> list of (kind, key, value) operations."""
    spec.validate()
    parts = topo.partitions_per_dc
    zipf = _zipf_cdf(spec.keys_per_partition, spec.zipf_theta) if spec.key_dist == "zipf" else None

    def pick_key(rng, partition):
        if zipf is None:
            idx = rng.randrange(spec.keys_per_partition)
        else:
            idx = bisect.bisect_left(zipf, rng.random())
        return key_in_partition(partition, parts, idx)

    out = {}
    client_no = 0
    for dc in range(topo.num_datacenters):
        for i in range(spec.clients_per_dc):
            rng = random.Random(spec.seed * 100_003 + client_no)
            ops = []
            seq = 0
            while len(ops) < spec.ops_per_client:
                if spec.pattern == "read_all_write_one":
                    for p in range(parts):
                        ops.append((GET, pick_key(rng, p), None))
                    seq += 1
                    ops.append(
                        (PUT, pick_key(rng, rng.randrange(parts)), _value(client_no, seq))
                    )
                else:
                    for _ in range(spec.reads):
                        ops.append((GET, pick_key(rng, rng.randrange(parts)), None))
                    for _ in range(spec.writes):
                        seq += 1
                        ops.append(
                            (PUT, pick_key(rng, rng.randrange(parts)), _value(client_no, seq))
                        )
            out[ClientId(dc, i)] = ops[: spec.ops_per_client]
            client_no += 1
    return out


def _value(client_no: int, seq: int) -> int:
    return (client_no << 32) | seq
