import dataclasses

import pytest

from consistency_lab.bench import (
    apply_axis,
    measure_uvl,
    metrics_csv,
    run_experiment,
    sweep,
)
from consistency_lab.config import (
    ExperimentConfig,
    emit_config,
    parse_config,
)
from consistency_lab.sim import NodeId
from consistency_lab.store import ConfigError, Topology
from consistency_lab.trace import VisibilityTrace
from consistency_lab.workload import WorkloadSpec


def small_cfg(proto="cops", **kw):
    return ExperimentConfig(
        protocol=proto,
        seed=4,
        topology=kw.pop("topology", Topology(num_datacenters=3, partitions_per_dc=1)),
        ntt=2500,
        workload=WorkloadSpec(clients_per_dc=1, ops_per_client=20,
                              pattern="ratio", reads=3, writes=1,
                              keys_per_partition=5),
        **kw,
    )


def test_invalid_quorum_rejected():
    cfg = small_cfg("dynamo")
    cfg.topology.r = 5
    with pytest.raises(ConfigError):
        run_experiment(cfg)


def test_measure_uvl_simple_subtraction():
    trace = VisibilityTrace()
    vid = trace.new_version(1, 9, NodeId(0, 0), 100, ())
    trace.record_visible(vid, NodeId(0, 0), 100)
    trace.record_visible(vid, NodeId(1, 0), 2600)
    topo = Topology(num_datacenters=2, partitions_per_dc=1, n=2, r=1, w=1, spares=0)
    lags, unrep = measure_uvl(trace, topo)
    assert lags == [2500] and unrep == 0


def test_measure_uvl_unreplicated_reported_separately():
    trace = VisibilityTrace()
    vid = trace.new_version(1, 9, NodeId(0, 0), 100, ())
    trace.record_visible(vid, NodeId(0, 0), 100)
    topo = Topology(num_datacenters=3, partitions_per_dc=1)
    lags, unrep = measure_uvl(trace, topo)
    assert lags == [] and unrep == 2


def test_single_datacenter_uvl_empty():
    topo = Topology(num_datacenters=1, partitions_per_dc=2, n=1, r=1, w=1, spares=0)
    res = run_experiment(small_cfg(topology=topo))
    assert res.metrics.uvl_mean == 0.0


def test_throughput_bounded_by_capacity():
    res = run_experiment(small_cfg())
    topo = res.config.topology
    cap = topo.capacity * topo.num_datacenters * topo.partitions_per_dc
    assert 0 < res.metrics.throughput <= cap


def test_sweep_shares_seeds_and_shapes():
    rows = sweep(small_cfg(), "partitions", [1, 2], ["cops", "eventual"])
    assert len(rows) == 4
    protos = [p for p, _, _ in rows]
    assert protos == ["cops", "eventual", "cops", "eventual"]
    # identical seed at every point
    assert len({r.config.seed for _, _, r in rows}) == 1
    csv_text = metrics_csv(rows, axis="partitions")
    lines = csv_text.strip().split("\n")
    assert lines[0].startswith("protocol,partitions,throughput")
    assert len(lines) == 5


def test_apply_axis_variants():
    cfg = small_cfg()
    assert apply_axis(cfg, "partitions", "8").topology.partitions_per_dc == 8
    c2 = apply_axis(cfg, "ratio", "3:2")
    assert (c2.workload.reads, c2.workload.writes) == (3, 2)
    c3 = apply_axis(cfg, "rw_quorum", "3:1:3")
    assert (c3.topology.n, c3.topology.r, c3.topology.w) == (3, 1, 3)
    with pytest.raises(ValueError):
        apply_axis(cfg, "nodes", "2")


def test_metrics_csv_deterministic():
    a = metrics_csv([run_experiment(small_cfg()).metrics])
    b = metrics_csv([run_experiment(small_cfg()).metrics])
    assert a == b
    assert a.splitlines()[0] == (
        "protocol,throughput,uvl_mean,uvl_p99,availability,"
        "msgs_put_after,msgs_dep_check,msgs_quorum"
    )


# -- config text form --------------------------------------------------------

SAMPLE = """
[experiment]
protocol = gentlerain
seed = 12

[topology]
num_datacenters = 3
partitions_per_dc = 2
clock_mode = hlc

[network]
ntt_row_0 = 0,2500,40000
ntt_row_1 = 2500,0,40000
ntt_row_2 = 40000,40000,0
jitter = 0.1

[clocks]
max_skew = 500
offset_0.0 = 300

[workload]
clients_per_dc = 2
ops_per_client = 50
pattern = read_all_write_one

[faults]
partitions = 0.0+0.1@1000:5000; 1.0@2000:3000
crashes = 2.1@100:900

[run]
drain = 150000
"""


def test_config_round_trip_identity():
    cfg = parse_config(SAMPLE)
    again = parse_config(emit_config(cfg))
    assert cfg == again


def test_config_fields_parsed():
    cfg = parse_config(SAMPLE)
    assert cfg.protocol == "gentlerain" and cfg.seed == 12
    assert cfg.topology.clock_mode == "hlc"
    assert cfg.ntt_matrix[0][2] == 40_000
    assert cfg.clock_offsets == {NodeId(0, 0): 300}
    assert len(cfg.partitions) == 2 and len(cfg.crashes) == 1
    assert cfg.partitions[0].group == frozenset({NodeId(0, 0), NodeId(0, 1)})
    assert cfg.run.drain == 150_000
    assert cfg.workload.seed == 12


def test_config_error_names_field():
    bad = SAMPLE.replace("partitions_per_dc = 2", "partitions_per_dc = 2\nr = 9")
    with pytest.raises(ConfigError, match="r"):
        parse_config(bad)


def test_config_bad_fault_interval():
    bad = SAMPLE.replace("2.1@100:900", "2.1@900:100")
    with pytest.raises(ConfigError):
        parse_config(bad)
