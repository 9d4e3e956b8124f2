"""Deterministic simulation and consistency checking for geo-replicated KV stores."""

__version__ = "0.1.0"

from .history import History, HistoryEvent, Operation, INITIAL
from .checkers import (
    Verdict,
    causal_order,
    check_linearizable,
    check_sequential,
    check_causal,
    check_pram,
    check_eventual,
    check_dependency_visibility,
)
from .sim import NodeId, ClientId, Simulation, NetworkModel, ClockModel, FaultSchedule
from .store import Topology, partition_for_key, vc_compare

__all__ = [
    "History",
    "HistoryEvent",
    "Operation",
    "INITIAL",
    "Verdict",
    "causal_order",
    "check_linearizable",
    "check_sequential",
    "check_causal",
    "check_pram",
    "check_eventual",
    "check_dependency_visibility",
    "NodeId",
    "ClientId",
    "Simulation",
    "NetworkModel",
    "ClockModel",
    "FaultSchedule",
    "Topology",
    "partition_for_key",
    "vc_compare",
]
