"""Experiment configuration: a dataclass bundle with an INI text form.

The text format round-trips: parse(emit(parse(text))) == parse(text).
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace

from .sim import (
    ClockModel,
    CrashInterval,
    FaultSchedule,
    NetworkModel,
    NodeId,
    PartitionInterval,
)
from .store import ConfigError, Topology
from .workload import WorkloadSpec

PROTOCOL_NAMES = ("cops", "gentlerain", "dynamo", "eventual")


@dataclass
class RunParams:
    op_timeout: int = 200_000  # client-side per-operation timeout, us
    quorum_timeout: int = 0  # 0 = derive as 4 x max inter-DC latency
    suspicion_window: int = 50_000
    drain: int = 200_000  # extra time after the last client finishes
    horizon: int = 300_000_000  # hard stop for the whole run


@dataclass
class ExperimentConfig:
    protocol: str = "cops"
    seed: int = 0
    topology: Topology = field(default_factory=Topology)
    ntt: int = 40_000  # uniform one-way inter-DC latency (us) ...
    ntt_matrix: list = None  # ... unless an explicit matrix is given
    intra_dc_latency: int = 100
    jitter: float = 0.0
    loss_rate: float = 0.0
    max_skew: int = 0
    drift_ppm: float = 0.0
    clock_offsets: dict = None  # NodeId -> fixed offset override
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    partitions: list = field(default_factory=list)  # PartitionInterval
    crashes: list = field(default_factory=list)  # CrashInterval
    run: RunParams = field(default_factory=RunParams)

    # -- derived models ----------------------------------------------------

    def network(self) -> NetworkModel:
        d = self.topology.num_datacenters
        if self.ntt_matrix is not None:
            m = [list(row) for row in self.ntt_matrix]
        else:
            m = [[0 if i == j else self.ntt for j in range(d)] for i in range(d)]
        return NetworkModel(m, self.intra_dc_latency, self.jitter, self.loss_rate)

    def clock_model(self) -> ClockModel:
        return ClockModel(self.max_skew, self.drift_ppm, self.clock_offsets)

    def faults(self) -> FaultSchedule:
        return FaultSchedule(list(self.partitions), list(self.crashes))

    def quorum_timeout(self) -> int:
        if self.run.quorum_timeout:
            return self.run.quorum_timeout
        d = self.topology.num_datacenters
        net = self.network()
        worst = max(
            (net.ntt[i][j] for i in range(d) for j in range(d)),
            default=net.intra_dc_latency,
        )
        return 4 * max(worst, net.intra_dc_latency)

    def validate(self):
        if self.protocol not in PROTOCOL_NAMES:
            raise ConfigError(f"protocol: unknown protocol {self.protocol!r}")
        self.topology.validate()
        try:
            self.network().validate()
        except ValueError as e:
            raise ConfigError(f"network: {e}") from None
        try:
            self.workload.validate()
        except ValueError as e:
            raise ConfigError(f"workload: {e}") from None
        try:
            self.faults().validate()
        except ValueError as e:
            raise ConfigError(f"faults: {e}") from None
        for iv in self.partitions:
            for n in iv.group:
                self._check_node(n, "faults.partitions")
        for iv in self.crashes:
            self._check_node(iv.node, "faults.crashes")
        if self.run.op_timeout <= 0 or self.run.drain < 0 or self.run.horizon <= 0:
            raise ConfigError("run: op_timeout/drain/horizon out of range")

    def _check_node(self, n, where):
        t = self.topology
        if not (0 <= n.dc < t.num_datacenters and 0 <= n.partition < t.partitions_per_dc):
            raise ConfigError(f"{where}: node {n} outside the topology")


# ---------------------------------------------------------------------------
# text form


def _node(tok: str) -> NodeId:
    try:
        d, p = tok.split(".")
        return NodeId(int(d), int(p))
    except Exception:
        raise ConfigError(f"bad node id {tok!r} (want dc.partition)") from None


def _interval(tok: str):
    span = tok.rsplit("@", 1)
    if len(span) != 2 or ":" not in span[1]:
        raise ConfigError(f"bad fault interval {tok!r} (want nodes@start:end)")
    start, end = span[1].split(":")
    return span[0], int(start), int(end)


def parse_config(text: str) -> ExperimentConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(str(e)) from None
    cfg = ExperimentConfig()

    def grab(section, name, conv, current):
        if not cp.has_option(section, name):
            return current
        raw = cp.get(section, name)
        try:
            return conv(raw)
        except ConfigError:
            raise
        except Exception:
            raise ConfigError(f"{section}.{name}: cannot parse {raw!r}") from None

    _bool = lambda s: s.strip().lower() in ("1", "true", "yes", "on")

    if cp.has_section("experiment"):
        cfg.protocol = grab("experiment", "protocol", str, cfg.protocol)
        cfg.seed = grab("experiment", "seed", int, cfg.seed)

    t = cfg.topology
    if cp.has_section("topology"):
        for name in (
            "num_datacenters",
            "partitions_per_dc",
            "n",
            "r",
            "w",
            "spares",
            "gst_interval",
            "heartbeat_interval",
            "capacity",
        ):
            setattr(t, name, grab("topology", name, int, getattr(t, name)))
        t.context_compaction = grab(
            "topology", "context_compaction", _bool, t.context_compaction
        )
        t.clock_mode = grab("topology", "clock_mode", str, t.clock_mode)

    if cp.has_section("network"):
        cfg.ntt = grab("network", "ntt", int, cfg.ntt)
        rows = sorted(
            name for name in cp.options("network") if name.startswith("ntt_row_")
        )
        if rows:
            cfg.ntt_matrix = [
                [int(x) for x in cp.get("network", name).split(",")] for name in rows
            ]
        cfg.intra_dc_latency = grab(
            "network", "intra_dc_latency", int, cfg.intra_dc_latency
        )
        cfg.jitter = grab("network", "jitter", float, cfg.jitter)
        cfg.loss_rate = grab("network", "loss_rate", float, cfg.loss_rate)

    if cp.has_section("clocks"):
        cfg.max_skew = grab("clocks", "max_skew", int, cfg.max_skew)
        cfg.drift_ppm = grab("clocks", "drift_ppm", float, cfg.drift_ppm)
        offsets = {}
        for name in cp.options("clocks"):
            if name.startswith("offset_"):
                offsets[_node(name[len("offset_"):])] = int(cp.get("clocks", name))
        if offsets:
            cfg.clock_offsets = offsets

    w = cfg.workload
    if cp.has_section("workload"):
        for name in ("clients_per_dc", "ops_per_client", "reads", "writes", "keys_per_partition"):
            setattr(w, name, grab("workload", name, int, getattr(w, name)))
        w.pattern = grab("workload", "pattern", str, w.pattern)
        w.key_dist = grab("workload", "key_dist", str, w.key_dist)
        w.zipf_theta = grab("workload", "zipf_theta", float, w.zipf_theta)

    if cp.has_section("faults"):
        if cp.has_option("faults", "partitions"):
            for tok in filter(None, (s.strip() for s in cp.get("faults", "partitions").split(";"))):
                group, start, end = _interval(tok)
                nodes = frozenset(_node(x) for x in group.split("+"))
                cfg.partitions.append(PartitionInterval(nodes, start, end))
        if cp.has_option("faults", "crashes"):
            for tok in filter(None, (s.strip() for s in cp.get("faults", "crashes").split(";"))):
                node, start, end = _interval(tok)
                cfg.crashes.append(CrashInterval(_node(node), start, end))

    if cp.has_section("run"):
        for name in ("op_timeout", "quorum_timeout", "suspicion_window", "drain", "horizon"):
            setattr(cfg.run, name, grab("run", name, int, getattr(cfg.run, name)))

    cfg.validate()
    # the workload carries its own derived seed so generation is reproducible
    cfg.workload = replace(cfg.workload, seed=cfg.seed)
    return cfg


def emit_config(cfg: ExperimentConfig) -> str:
    cp = configparser.ConfigParser()
    cp["experiment"] = {"protocol": cfg.protocol, "seed": str(cfg.seed)}
    t = cfg.topology
    cp["topology"] = {
        "num_datacenters": str(t.num_datacenters),
        "partitions_per_dc": str(t.partitions_per_dc),
        "n": str(t.n),
        "r": str(t.r),
        "w": str(t.w),
        "spares": str(t.spares),
        "gst_interval": str(t.gst_interval),
        "heartbeat_interval": str(t.heartbeat_interval),
        "capacity": str(t.capacity),
        "context_compaction": str(t.context_compaction).lower(),
        "clock_mode": t.clock_mode,
    }
    net = {
        "intra_dc_latency": str(cfg.intra_dc_latency),
        "jitter": repr(cfg.jitter),
        "loss_rate": repr(cfg.loss_rate),
    }
    if cfg.ntt_matrix is not None:
        for i, row in enumerate(cfg.ntt_matrix):
            net[f"ntt_row_{i}"] = ",".join(str(x) for x in row)
    else:
        net["ntt"] = str(cfg.ntt)
    cp["network"] = net
    clocks = {"max_skew": str(cfg.max_skew), "drift_ppm": repr(cfg.drift_ppm)}
    if cfg.clock_offsets:
        for node in sorted(cfg.clock_offsets):
            clocks[f"offset_{node}"] = str(cfg.clock_offsets[node])
    cp["clocks"] = clocks
    w = cfg.workload
    cp["workload"] = {
        "clients_per_dc": str(w.clients_per_dc),
        "ops_per_client": str(w.ops_per_client),
        "pattern": w.pattern,
        "reads": str(w.reads),
        "writes": str(w.writes),
        "key_dist": w.key_dist,
        "zipf_theta": repr(w.zipf_theta),
        "keys_per_partition": str(w.keys_per_partition),
    }
    faults = {}
    if cfg.partitions:
        faults["partitions"] = "; ".join(
            "+".join(str(n) for n in sorted(iv.group)) + f"@{iv.start}:{iv.end}"
            for iv in cfg.partitions
        )
    if cfg.crashes:
        faults["crashes"] = "; ".join(
            f"{iv.node}@{iv.start}:{iv.end}" for iv in cfg.crashes
        )
    cp["faults"] = faults
    cp["run"] = {
        "op_timeout": str(cfg.run.op_timeout),
        "quorum_timeout": str(cfg.run.quorum_timeout),
        "suspicion_window": str(cfg.run.suspicion_window),
        "drain": str(cfg.run.drain),
        "horizon": str(cfg.run.horizon),
    }
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path: str) -> ExperimentConfig:
    with open(path) as f:
        return parse_config(f.read())
