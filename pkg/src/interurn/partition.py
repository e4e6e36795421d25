"""Decomposition of the interaction matrix into leading and following subsystems.

Urns communicate through the digraph with an edge j -> h whenever w_jh > 0
(exact comparison: weights are user-declared). Strongly connected components
of this digraph are the subsystems; a closed component (no edge leaving it)
evolves autonomously and is a leader, every other component is a follower.
Listing leaders first and followers in topological order of their
dependencies puts W in block lower-triangular form with irreducible diagonal
blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InternalInvariantViolation


def communicating_classes(W) -> list[list[int]]:
    """Strongly connected components of {j -> h : w_jh > 0}.

    Deterministic output: members ascending, classes sorted by smallest member.
    Iterative Tarjan so large systems do not hit the recursion limit.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    adj = [np.nonzero(W[j] > 0.0)[0].tolist() for j in range(n)]

    index = [-1] * n
    lowlink = [0] * n
    on_stack = [False] * n
    stack = []
    counter = 0
    sccs = []

    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = lowlink[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            advanced = False
            while pi < len(adj[v]):
                w = adj[v][pi]
                pi += 1
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if lowlink[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comp.sort()
                sccs.append(comp)
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])

    sccs.sort(key=lambda comp: comp[0])
    return sccs


@dataclass(frozen=True)
class PartitionResult:
    """Leader/follower ordering of the communicating classes of W."""

    classes: tuple[tuple[int, ...], ...]  # ordered: leaders first, then followers
    labels: tuple[str, ...]               # "L1".."Ln_L", "F1".."Fn_F"
    is_leader: tuple[bool, ...]
    permutation: tuple[int, ...]          # position in block order -> original urn
    sizes: tuple[int, ...]
    boundaries: tuple[int, ...]           # cumulative class ends r^l
    dependencies: tuple[tuple[int, ...], ...]  # per class, earlier classes it reads
    n_leaders: int
    n_followers: int

    def joint_urns(self, class_index: int) -> tuple[int, ...]:
        """Urns of the joint system: every class up to and including class_index."""
        out = []
        for c in self.classes[: class_index + 1]:
            out.extend(c)
        return tuple(out)


def classify_and_order(classes, W) -> PartitionResult:
    """Label classes as leaders/followers and order them into block form.

    A class is a leader iff it has no edge leaving it. Followers are ordered
    topologically on the condensation DAG (dependencies before dependents),
    ties broken by smallest member urn.
    """
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    class_of = {}
    for ci, comp in enumerate(classes):
        for j in comp:
            class_of[j] = ci

    out_edges = [set() for _ in classes]
    for j in range(n):
        for h in np.nonzero(W[j] > 0.0)[0]:
            if class_of[j] != class_of[h]:
                out_edges[class_of[j]].add(class_of[h])

    leaders = [ci for ci in range(len(classes)) if not out_edges[ci]]
    followers = [ci for ci in range(len(classes)) if out_edges[ci]]
    if not leaders:
        raise InternalInvariantViolation(
            "no closed communicating class; impossible for row-stochastic W"
        )

    leaders.sort(key=lambda ci: classes[ci][0])

    # Kahn's algorithm over follower -> follower dependencies.
    ordered_followers = []
    placed = set(leaders)
    remaining = set(followers)
    while remaining:
        ready = [ci for ci in remaining if out_edges[ci] <= placed | {ci}]
        if not ready:
            raise InternalInvariantViolation("cycle in the condensation DAG")
        pick = min(ready, key=lambda ci: classes[ci][0])
        ordered_followers.append(pick)
        placed.add(pick)
        remaining.remove(pick)

    order = leaders + ordered_followers
    new_index = {old: new for new, old in enumerate(order)}

    ordered_classes = tuple(tuple(classes[ci]) for ci in order)
    is_leader = tuple(ci in leaders for ci in order)
    labels = []
    nl = nf = 0
    for lead in is_leader:
        if lead:
            nl += 1
            labels.append(f"L{nl}")
        else:
            nf += 1
            labels.append(f"F{nf}")
    sizes = tuple(len(c) for c in ordered_classes)
    boundaries = tuple(np.cumsum(sizes).tolist())
    permutation = tuple(j for comp in ordered_classes for j in comp)
    dependencies = tuple(
        tuple(sorted(new_index[d] for d in out_edges[ci])) for ci in order
    )

    return PartitionResult(
        classes=ordered_classes,
        labels=tuple(labels),
        is_leader=is_leader,
        permutation=permutation,
        sizes=sizes,
        boundaries=boundaries,
        dependencies=dependencies,
        n_leaders=len(leaders),
        n_followers=len(ordered_followers),
    )


def partition_system(W) -> PartitionResult:
    return classify_and_order(communicating_classes(W), W)


def permuted_interaction(W, part: PartitionResult) -> np.ndarray:
    """W reordered by the partition permutation (block lower-triangular)."""
    W = np.asarray(W, dtype=float)
    p = list(part.permutation)
    return W[np.ix_(p, p)]
