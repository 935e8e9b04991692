"""Tree-structured iterative plan selection minimising demand variance.

Agents sit on a balanced binary tree stored in heap order (node ``i`` has
children ``2i+1`` and ``2i+2``). Each iteration runs a bottom-up pass, in
which every agent picks a plan with fresh knowledge of its own subtree and
the previous iteration's global aggregate, followed by a top-down broadcast
of the new global aggregate. Message passing is simulated in-process.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import AgentPlanSet, FlexgridError, HORIZON, check_vectors
from .metrics import RunMetrics

log = logging.getLogger(__name__)

NORMALIZATIONS = ("minmax", "none")


class InvariantViolation(FlexgridError, AssertionError):
    pass


@dataclass(frozen=True)
class TreeTopology:
    """Balanced binary tree; ``placement[node]`` is the index of the agent at that node."""

    placement: tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.placement)

    def parent(self, node: int) -> int | None:
        return (node - 1) // 2 if node > 0 else None

    def children(self, node: int) -> list[int]:
        return [c for c in (2 * node + 1, 2 * node + 2) if c < self.size]

    def level(self, node: int) -> int:
        return int(math.floor(math.log2(node + 1)))

    @property
    def depth(self) -> int:
        return self.level(self.size - 1)

    def levels(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.depth + 1)]
        for node in range(self.size):
            out[self.level(node)].append(node)
        return out

    def descendants(self, node: int) -> list[int]:
        found, stack = [], self.children(node)
        while stack:
            n = stack.pop()
            found.append(n)
            stack.extend(self.children(n))
        return found

    def node_of(self) -> dict[int, int]:
        return {agent: node for node, agent in enumerate(self.placement)}


def build_topology(agent_ids: Sequence, seed: int | np.random.Generator | None = None) -> TreeTopology:
    """Place agents on a balanced binary tree by a seed-determined random permutation."""
    n = len(agent_ids)
    if n < 1:
        raise ValueError("need at least one agent")
    rng = np.random.default_rng(seed)
    return TreeTopology(tuple(int(i) for i in rng.permutation(n)))


@dataclass
class SelectionContext:
    """What an agent knows when choosing: stale global and subtree sums, fresh subtree sum."""

    global_prev: np.ndarray
    subtree_prev: np.ndarray
    subtree_now: np.ndarray
    selected_prev: int


def selection_objective(candidates: np.ndarray, discomforts: np.ndarray, lam: float,
                        ctx: SelectionContext, normalization: str = "minmax") -> np.ndarray:
    """Weighted objective of every candidate; the global term is the predicted demand variance.

    With ``normalization="minmax"`` the variance term is rescaled to [0, 1]
    across the candidates so it is commensurate with discomfort.
    """
    base = ctx.global_prev - ctx.subtree_prev + ctx.subtree_now - candidates[ctx.selected_prev]
    variance = np.var(base[None, :] + candidates, axis=1)
    if normalization == "minmax":
        lo, hi = variance.min(), variance.max()
        variance = (variance - lo) / (hi - lo) if hi > lo else np.zeros_like(variance)
    elif normalization != "none":
        raise ValueError(f"unknown normalization {normalization!r}")
    return (1.0 - lam) * variance + lam * discomforts


def select_plan(candidates: AgentPlanSet, ctx: SelectionContext, normalization: str = "minmax") -> int:
    """Index minimising the weighted objective; ties go to lower discomfort, then lower index."""
    check_vectors(ctx.global_prev, ctx.subtree_prev, ctx.subtree_now)
    matrix = candidates.matrix()
    disc = candidates.discomforts()
    obj = selection_objective(matrix, disc, candidates.lam, ctx, normalization)
    return int(np.lexsort((np.arange(len(obj)), disc, obj))[0])


@dataclass
class RunResult:
    selections: list[int]
    metrics: RunMetrics
    topology: TreeTopology
    history: list[list[int]] = field(default_factory=list)
    messages: int = 0
    final_discomforts: list[float] = field(default_factory=list)

    @property
    def final_variance(self) -> float:
        return self.metrics.global_variance[-1]


def run(agents: Sequence[AgentPlanSet], topo: TreeTopology, iterations: int = 50,
        normalization: str = "minmax", approval: bool = True, audit: bool = False) -> RunResult:
    """Coordinate ``agents`` over ``iterations`` bottom-up/top-down rounds.

    Every agent starts on its lowest-discomfort candidate. With ``approval``,
    a parent first decides which children's subtrees keep this round's changes
    (rejected subtrees revert to their previous selections); the combination
    giving the lowest predicted variance wins. With ``audit`` set,
    the aggregate bookkeeping and per-agent non-regression are asserted after
    every decision.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if topo.size != len(agents):
        raise ValueError(f"topology has {topo.size} nodes for {len(agents)} agents")

    n = len(agents)
    order = topo.placement
    mats = [agents[a].matrix() for a in order]
    discs = [agents[a].discomforts() for a in order]
    lams = [agents[a].lam for a in order]
    for m in mats:
        if m.shape[1] != HORIZON:
            raise ValueError("plan vectors must have 1440 slots")

    selected = [int(np.lexsort((np.arange(len(d)), d))[0]) for d in discs]
    subtree = _subtree_sums(topo, mats, selected)
    global_agg = subtree[0] + mats[0][selected[0]]

    metrics = RunMetrics()
    metrics.record(global_agg, [d[s] for d, s in zip(discs, selected)])
    history = [_to_agent_order(order, selected)]
    messages = 0
    stable = False

    for t in range(1, iterations + 1):
        if stable:
            # Inputs identical to the previous round, so outputs are too.
            metrics.record(global_agg, [d[s] for d, s in zip(discs, selected)])
            history.append(history[-1])
            messages += 2 * (n - 1)
            continue
        new_selected = list(selected)
        new_subtree = [np.zeros(HORIZON) for _ in range(n)]
        for node in reversed(range(n)):
            children = topo.children(node)
            messages += len(children)
            if approval and children:
                _approve_children(topo, node, children, mats, selected, new_selected, subtree,
                                  new_subtree, global_agg)
            for c in children:
                new_subtree[node] += new_subtree[c] + mats[c][new_selected[c]]
            ctx = SelectionContext(global_agg, subtree[node], new_subtree[node], selected[node])
            obj = selection_objective(mats[node], discs[node], lams[node], ctx, normalization)
            choice = int(np.lexsort((np.arange(len(obj)), discs[node], obj))[0])
            if audit and obj[choice] > obj[selected[node]]:
                raise InvariantViolation(
                    f"iteration {t}, node {node}: chosen objective {obj[choice]} exceeds "
                    f"retained {obj[selected[node]]}")
            new_selected[node] = choice
        new_global = new_subtree[0] + mats[0][new_selected[0]]
        messages += n - 1  # top-down broadcast

        if audit:
            _audit(topo, mats, new_selected, new_subtree, new_global, t)

        stable = new_selected == selected
        selected, subtree, global_agg = new_selected, new_subtree, new_global
        metrics.record(global_agg, [d[s] for d, s in zip(discs, selected)])
        history.append(_to_agent_order(order, selected))

    log.debug("run finished: %d agents, %d iterations, variance %.6g",
              n, iterations, metrics.global_variance[-1])
    final = _to_agent_order(order, [float(d[s]) for d, s in zip(discs, selected)])
    return RunResult(history[-1], metrics, topo, history, messages, final)


def _approve_children(topo, node, children, mats, selected, new_selected, subtree, new_subtree,
                      global_prev) -> None:
    """Keep or revert each child's subtree so the predicted global variance is lowest.

    Combinations are tried from all-accepted to all-rejected; the first
    minimum wins, so changes are kept on ties.
    """
    prev = [subtree[c] + mats[c][selected[c]] for c in children]
    new = [new_subtree[c] + mats[c][new_selected[c]] for c in children]
    outside = global_prev - subtree[node]
    best, best_cost = None, np.inf
    for mask in range(2 ** len(children)):
        keep = [not (mask >> i) & 1 for i in range(len(children))]
        below = np.sum([nw if k else pv for k, nw, pv in zip(keep, new, prev)], axis=0)
        cost = np.var(outside + below)
        if cost < best_cost:
            best, best_cost = keep, cost
    for c, k in zip(children, best):
        if not k:
            for d in [c, *topo.descendants(c)]:
                new_selected[d] = selected[d]
                new_subtree[d] = subtree[d]


def _to_agent_order(placement: Sequence[int], by_node: Sequence[int]) -> list[int]:
    out = [0] * len(placement)
    for node, agent in enumerate(placement):
        out[agent] = by_node[node]
    return out


def _subtree_sums(topo: TreeTopology, mats, selected) -> list[np.ndarray]:
    sums = [np.zeros(HORIZON) for _ in range(topo.size)]
    for node in reversed(range(topo.size)):
        for c in topo.children(node):
            sums[node] += sums[c] + mats[c][selected[c]]
    return sums


def _audit(topo, mats, selected, subtree, global_agg, t) -> None:
    total = np.sum([m[s] for m, s in zip(mats, selected)], axis=0)
    if not np.allclose(global_agg, total, rtol=1e-12, atol=1e-6):
        raise InvariantViolation(f"iteration {t}: root aggregate differs from sum of selections")
    for node in range(topo.size):
        below = topo.descendants(node)
        expect = np.sum([mats[d][selected[d]] for d in below], axis=0) if below else np.zeros(HORIZON)
        if not np.allclose(subtree[node], expect, rtol=1e-12, atol=1e-6):
            raise InvariantViolation(f"iteration {t}: subtree aggregate of node {node} is stale")
