"""Deciders for linearizability, sequential, causal, PRAM and eventual
consistency, plus the scalable dependency-visibility check over simulation
traces.

The history deciders are exhaustive searches and are bounded (default 12
complete operations).  The sequential specification is the usual read/write
register one: a GET returns the value of the most recent PUT to the same key,
or the key's initial value if none precedes it.

Pending calls (a call with no response) are handled per the extension rule:
a pending PUT may either take effect (its response is appended) or be
discarded; a pending GET is always discarded, since a response for it could
be appended with whichever value the chosen witness implies, adding no
constraint.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

from .history import GET, PUT, INITIAL, History, Operation


class CheckerError(Exception):
    pass


class BoundExceeded(CheckerError):
    """History has more complete operations than the decider bound."""


class AmbiguousReadFrom(CheckerError):
    """A GET's value matches more than one PUT on the same key."""


class NotQuiesced(CheckerError):
    """check_eventual was given a trace with writes after the quiescence point."""


DEFAULT_BOUND = 12


@dataclass
class Verdict:
    satisfied: bool
    # For linearizable/sequential: a witness operation sequence.
    # For causal/pram: a mapping process -> witness sequence.
    witness: object = None
    # When not satisfied: a minimal offending subset of operations (op_ids),
    # or a structured description for trace checks.
    violation: object = None

    def __bool__(self):
        return self.satisfied


# ---------------------------------------------------------------------------
# witness search


def _find_witness(ops: list[Operation], pred_masks: list[int]):
    """Search for a legal sequential ordering of `ops` respecting the
    precedence constraints given as bitmasks (pred_masks[i] = set of ops that
    must be placed before op i).

    Returns the witness as a list of Operation, or None.  Memoizes failed
    (placed-set, key-values) states, which keeps the search well below
    factorial in practice.
    """
    n = len(ops)
    if n == 0:
        return []
    keys = sorted({o.key for o in ops})
    kidx = {k: i for i, k in enumerate(keys)}
    op_key = [kidx[o.key] for o in ops]
    is_get = [o.op == GET for o in ops]
    values = [o.value for o in ops]
    full = (1 << n) - 1
    failed = set()
    seq: list[int] = []

    def dfs(mask, vals):
        if mask == full:
            return True
        state = (mask, vals)
        if state in failed:
            return False
        for i in range(n):
            bit = 1 << i
            if mask & bit:
                continue
            if pred_masks[i] & ~mask:
                continue
            j = op_key[i]
            if is_get[i]:
                if vals[j] != values[i]:
                    continue
                nvals = vals
            else:
                nvals = vals[:j] + (values[i],) + vals[j + 1 :]
            seq.append(i)
            if dfs(mask | bit, nvals):
                return True
            seq.pop()
        failed.add(state)
        return False

    if dfs(0, (INITIAL,) * len(keys)):
        return [ops[i] for i in seq]
    return None


def _program_order_masks(ops: list[Operation]) -> list[int]:
    """Precedence masks for per-process program order (chain per process)."""
    masks = [0] * len(ops)
    last: dict[str, int] = {}
    chain: dict[str, int] = {}
    for i, o in enumerate(ops):
        if o.process in last:
            chain[o.process] |= 1 << last[o.process]
            masks[i] = chain[o.process]
        else:
            chain[o.process] = 0
        last[o.process] = i
    return masks


def _split_pending(h: History, bound: int):
    ops = h.operations()
    complete = [o for o in ops if o.complete]
    if len(complete) > bound:
        raise BoundExceeded(f"{len(complete)} complete operations exceeds bound {bound}")
    pending_puts = [o for o in ops if not o.complete and o.op == PUT]
    return complete, pending_puts


def _candidate_sets(complete, pending_puts):
    """All op sets obtainable by appending responses for a subset of the
    pending PUTs (smaller extensions first)."""
    for r in range(len(pending_puts) + 1):
        for extra in combinations(pending_puts, r):
            yield complete + list(extra)


def _minimize(decide, ops_ids, h: History):
    """Greedy minimization: drop operations while the reduced history still
    fails `decide` (a satisfiability predicate).  Good enough at decider
    scale."""
    current = list(ops_ids)
    shrunk = True
    while shrunk and len(current) > 1:
        shrunk = False
        for oid in list(current):
            trial = [x for x in current if x != oid]
            keep = set(trial)
            sub = History([e for e in h.events if e.op_id in keep])
            try:
                if not decide(sub):
                    current = trial
                    shrunk = True
                    break
            except CheckerError:
                continue
    return current


# ---------------------------------------------------------------------------
# causal order


def causal_order(h: History) -> set[tuple[int, int]]:
    """The smallest transitively closed relation containing program order and
    writes-into-reads pairs, over the complete operations of `h`.

    Raises AmbiguousReadFrom if a GET's value matches more than one PUT on
    the same key.
    """
    ops = h.complete_operations()
    return _causal_edges(ops)


def _causal_edges(ops: list[Operation]) -> set[tuple[int, int]]:
    edges: set[tuple[int, int]] = set()
    by_process: dict[str, list[Operation]] = {}
    for o in ops:
        by_process.setdefault(o.process, []).append(o)
    for seq in by_process.values():
        for a, b in zip(seq, seq[1:]):
            edges.add((a.op_id, b.op_id))
    # reads-from
    writes: dict[tuple[str, object], list[Operation]] = {}
    for o in ops:
        if o.op == PUT:
            writes.setdefault((o.key, o.value), []).append(o)
    for o in ops:
        if o.op == GET and o.value is not INITIAL:
            ws = writes.get((o.key, o.value), [])
            if len(ws) > 1:
                raise AmbiguousReadFrom(
                    f"GET {o.op_id} of {o.key}={o.value!r} matches {len(ws)} PUTs"
                )
            if ws:
                edges.add((ws[0].op_id, o.op_id))
    return _transitive_closure(edges)


def _transitive_closure(edges: set[tuple[int, int]]) -> set[tuple[int, int]]:
    succ: dict[int, set[int]] = {}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
    closed = set(edges)
    changed = True
    while changed:
        changed = False
        for a, b in list(closed):
            for c in succ.get(b, ()):
                if (a, c) not in closed:
                    closed.add((a, c))
                    succ.setdefault(a, set()).add(c)
                    changed = True
    return closed


# ---------------------------------------------------------------------------
# history deciders


def _decide_linearizable(h: History, bound: int = DEFAULT_BOUND):
    complete, pending_puts = _split_pending(h, bound)
    for cand in _candidate_sets(complete, pending_puts):
        masks = [0] * len(cand)
        for i, a in enumerate(cand):
            for j, b in enumerate(cand):
                # b really-precedes a: b's response precedes a's call
                if b.complete and b.resp_index < a.call_index:
                    masks[i] |= 1 << j
        w = _find_witness(cand, masks)
        if w is not None:
            return w
    return None


def check_linearizable(h: History, bound: int = DEFAULT_BOUND) -> Verdict:
    """Definition-level linearizability: a legal sequential witness equivalent
    to complete(H') that preserves real-time precedence."""
    w = _decide_linearizable(h, bound)
    if w is not None:
        return Verdict(True, witness=w)
    complete = [o for o in h.operations() if o.complete]
    violation = _minimize(
        lambda s: _decide_linearizable(s, bound) is not None,
        [o.op_id for o in complete],
        h,
    )
    return Verdict(False, violation=violation)


def _decide_sequential(h: History, bound: int = DEFAULT_BOUND):
    complete, pending_puts = _split_pending(h, bound)
    for cand in _candidate_sets(complete, pending_puts):
        w = _find_witness(cand, _program_order_masks(cand))
        if w is not None:
            return w
    return None


def check_sequential(h: History, bound: int = DEFAULT_BOUND) -> Verdict:
    """Linearizability minus the real-time condition: the witness need only
    preserve per-process order (H|p = S|p for every p)."""
    w = _decide_sequential(h, bound)
    if w is not None:
        return Verdict(True, witness=w)
    complete = [o for o in h.operations() if o.complete]
    violation = _minimize(
        lambda s: _decide_sequential(s, bound) is not None,
        [o.op_id for o in complete],
        h,
    )
    return Verdict(False, violation=violation)


def _decide_per_process(h, bound, with_causal):
    """Common core of the causal and PRAM deciders.

    Returns a process -> witness mapping, or None."""
    complete, pending_puts = _split_pending(h, bound)
    processes = sorted({o.process for o in complete + pending_puts})
    for cand in _candidate_sets(complete, pending_puts):
        try:
            edges = _causal_edges(cand) if with_causal else None
        except AmbiguousReadFrom:
            raise
        witnesses = {}
        ok = True
        for p in processes:
            ops_p = [o for o in cand if o.process == p or o.op == PUT]
            masks = _program_order_masks(ops_p)
            if with_causal:
                index = {o.op_id: i for i, o in enumerate(ops_p)}
                for a, b in edges:
                    if a in index and b in index:
                        masks[index[b]] |= 1 << index[a]
            w = _find_witness(ops_p, masks)
            if w is None:
                ok = False
                break
            witnesses[p] = w
        if ok:
            return witnesses
    return None


def check_causal(h: History, bound: int = DEFAULT_BOUND) -> Verdict:
    """Per-process witnesses over the process's own operations plus all PUTs,
    respecting the causal order."""
    w = _decide_per_process(h, bound, with_causal=True)
    if w is not None:
        return Verdict(True, witness=w)
    complete = [o for o in h.operations() if o.complete]
    violation = _minimize(
        lambda s: _decide_per_process(s, bound, True) is not None,
        [o.op_id for o in complete],
        h,
    )
    return Verdict(False, violation=violation)


def check_pram(h: History, bound: int = DEFAULT_BOUND) -> Verdict:
    """Causal consistency with the causal-order condition weakened to the
    writing processes' program orders (which per-process equivalence already
    enforces)."""
    w = _decide_per_process(h, bound, with_causal=False)
    if w is not None:
        return Verdict(True, witness=w)
    complete = [o for o in h.operations() if o.complete]
    violation = _minimize(
        lambda s: _decide_per_process(s, bound, False) is not None,
        [o.op_id for o in complete],
        h,
    )
    return Verdict(False, violation=violation)


# ---------------------------------------------------------------------------
# trace checks


def check_dependency_visibility(trace) -> Verdict:
    """A version may be visible at a node only if all of its dependencies are
    visible there no later.  Runs in O(versions x nodes x deps).

    For quorum-replicated traces (trace.mode == "quorum"), per-node visibility
    of a cross-key dependency is not meaningful (the dependency is stored on a
    different replica set), so the check becomes: a version's write-quorum
    completion never precedes that of any of its dependencies.
    """
    violations = []
    if getattr(trace, "mode", "node") == "quorum":
        for v in trace.versions.values():
            tx = trace.completion.get(v.vid)
            if tx is None:
                continue
            for dep in v.deps:
                ty = trace.completion.get(dep)
                if ty is None or ty > tx:
                    violations.append((v.vid, dep, "quorum-completion"))
        return Verdict(not violations, violation=violations or None)

    # Per-node traces.  Two refinements over the literal reading:
    #   * a dependency may be stored on a different node of the same
    #     datacenter (cross-partition), so compare against visibility within
    #     the observing node's datacenter;
    #   * a dependency on a key's version is satisfied by any visible version
    #     of that key at least as new (version dominance) — a reader can
    #     never observe anything older than the dependency.
    dep_vis_by_dc = {}
    by_key = {}
    for v in trace.versions.values():
        by_dc = {}
        for node, t in v.visibility.items():
            dc = node.dc
            if dc not in by_dc or t < by_dc[dc]:
                by_dc[dc] = t
        dep_vis_by_dc[v.vid] = by_dc
        by_key.setdefault(v.key, []).append(v)

    def order(v):
        return (v.stamp, v.vid) if v.stamp is not None else (v.vid,)

    # earliest per-datacenter visibility of "this version or a newer one of
    # the same key" (suffix minimum over the key's version order)
    dom_vis = {}
    for versions in by_key.values():
        versions.sort(key=order)
        acc = {}
        for v in reversed(versions):
            for dc, t in dep_vis_by_dc[v.vid].items():
                if dc not in acc or t < acc[dc]:
                    acc[dc] = t
            dom_vis[v.vid] = dict(acc)

    for v in trace.versions.values():
        for node, t_vis in v.visibility.items():
            for dep in v.deps:
                dv = dom_vis[dep].get(node.dc)
                if dv is None or dv > t_vis:
                    violations.append((v.vid, dep, node))
    return Verdict(not violations, violation=violations or None)


def check_eventual(trace, quiescence) -> Verdict:
    """After quiescence, every key converges: all non-crashed replica nodes
    end with the same single version-chain head.

    Unreconciled siblings (multiple heads) or cross-node divergence are
    violations.  Raises NotQuiesced if any version was created after the
    quiescence point.
    """
    late = [v.vid for v in trace.versions.values() if v.created > quiescence]
    if late:
        raise NotQuiesced(f"versions created after quiescence: {late}")
    violations = []
    for key, nodes in trace.replica_nodes.items():
        heads = {}
        for node in nodes:
            if node in trace.crashed:
                continue
            heads[node] = trace.final_heads.get((node, key), ())
        if not heads:
            continue
        distinct = set(heads.values())
        if len(distinct) > 1 or any(len(hd) > 1 for hd in distinct):
            violations.append((key, sorted((str(n), h) for n, h in heads.items())))
    return Verdict(not violations, violation=violations or None)
