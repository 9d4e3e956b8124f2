import pytest

from consistency_lab.history import GET, PUT
from consistency_lab.store import Topology, partition_for_key
from consistency_lab.workload import WorkloadSpec, generate_workload


def topo(parts=4):
    return Topology(num_datacenters=3, partitions_per_dc=parts)


def test_same_seed_identical_streams():
    spec = WorkloadSpec(clients_per_dc=2, ops_per_client=50, seed=7)
    assert generate_workload(spec, topo()) == generate_workload(spec, topo())


def test_different_seed_differs():
    a = generate_workload(WorkloadSpec(seed=1, ops_per_client=50), topo())
    b = generate_workload(WorkloadSpec(seed=2, ops_per_client=50), topo())
    assert a != b


def test_put_values_globally_unique():
    spec = WorkloadSpec(clients_per_dc=3, ops_per_client=200, pattern="ratio",
                        reads=1, writes=1, seed=3)
    streams = generate_workload(spec, topo())
    values = [v for ops in streams.values() for k, _, v in [(o[0], o[1], o[2]) for o in ops] if k == PUT]
    assert len(values) == len(set(values))
    assert all(v is not None for v in values)


def test_read_all_write_one_round_shape():
    spec = WorkloadSpec(clients_per_dc=1, ops_per_client=9 * (8 + 1),
                        pattern="read_all_write_one", seed=5)
    streams = generate_workload(spec, topo(parts=8))
    ops = next(iter(streams.values()))
    round1 = ops[:9]
    gets, puts = [o for o in round1 if o[0] == GET], [o for o in round1 if o[0] == PUT]
    assert len(gets) == 8 and len(puts) == 1
    # the 8 reads cover all 8 partitions, one each
    assert sorted(partition_for_key(o[1], 8) for o in gets) == list(range(8))


def test_pure_write_ratio():
    spec = WorkloadSpec(clients_per_dc=1, ops_per_client=40, pattern="ratio",
                        reads=0, writes=1, seed=5)
    streams = generate_workload(spec, topo())
    for ops in streams.values():
        assert all(o[0] == PUT for o in ops)


def test_ratio_mix():
    spec = WorkloadSpec(clients_per_dc=1, ops_per_client=100, pattern="ratio",
                        reads=9, writes=1, seed=5)
    ops = next(iter(generate_workload(spec, topo()).values()))
    assert sum(1 for o in ops if o[0] == GET) == 90


def test_zipf_skews_toward_low_indices():
    spec = WorkloadSpec(clients_per_dc=4, ops_per_client=500, pattern="ratio",
                        reads=1, writes=1, key_dist="zipf", zipf_theta=0.99,
                        keys_per_partition=50, seed=9)
    streams = generate_workload(spec, topo(parts=1))
    from collections import Counter
    counts = Counter(k for ops in streams.values() for _, k, _ in ops)
    ranked = [k for k, _ in counts.most_common()]
    hot = min(ranked[:3])
    # hottest keys are the low-index ones, and far hotter than the tail
    assert counts.most_common(1)[0][1] > 5 * (sum(counts.values()) / len(counts))


def test_invalid_specs_rejected():
    with pytest.raises(ValueError):
        WorkloadSpec(pattern="nope").validate()
    with pytest.raises(ValueError):
        WorkloadSpec(pattern="ratio", writes=0).validate()
    with pytest.raises(ValueError):
        WorkloadSpec(key_dist="exp").validate()
