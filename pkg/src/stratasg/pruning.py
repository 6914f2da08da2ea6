"""Haircut, pruning, regions and stratification of marked trees."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import wtt
from .easg import LEFT, MIDDLE, NONE, O, RIGHT, X, MarkedTree, TreeError

POLICIES = ("first", "last", "rng")


class NotPrunable(TreeError):
    pass


def haircut(tree: MarkedTree) -> MarkedTree:
    """Drop everything below marked vertices."""
    t = tree.copy()
    for v in list(t.preorder()):
        if t.alive[v] and t.mark[v] != NONE:
            for c in t.children(v):
                t.remove_subtree(c)
    return t


def _is_prunable(t: MarkedTree, v: int) -> bool:
    if t.mark[v] == NONE or not t.is_leaf(v):
        return False
    p = t.parent[v]
    if p == -1:
        return False
    if t.mark[v] == X and t.slot[v] == LEFT and t.is_ternary(p):
        return False
    return True


def prunable_leaves(tree: MarkedTree) -> list[int]:
    """Prunable leaves in depth-first, left-to-right order."""
    return [v for v in tree.leaves() if _is_prunable(tree, v)]


def prune_step(tree: MarkedTree, leaf: int, inplace: bool = False) -> MarkedTree:
    """One-step pruning at a prunable marked leaf."""
    if not (0 <= leaf < len(tree.parent)) or not tree.alive[leaf] \
            or not _is_prunable(tree, leaf):
        raise NotPrunable(f"vertex {leaf} is not a prunable leaf")
    t = tree if inplace else tree.copy()
    v = t.parent[leaf]
    k = t.kids[v]
    pos = t.slot[leaf]
    if t.mark[leaf] == X:
        if t.is_ternary(v):
            t.hang_in_place_of(v, k[LEFT])
        else:
            sib = k[RIGHT] if pos == LEFT else k[LEFT]
            t.hang_in_place_of(v, sib)
    else:
        if not t.is_ternary(v) or pos == LEFT:
            t.hang_in_place_of(v, leaf)
        else:
            t.remove_subtree(leaf)
            if pos == RIGHT:
                m = k[MIDDLE]
                k[MIDDLE] = -1
                k[RIGHT] = m
                t.slot[m] = RIGHT
    return t


def total_pruning(tree: MarkedTree, rng: np.random.Generator | None = None) -> MarkedTree:
    """Haircut, then prune until nothing is prunable.

    Without ``rng`` the first prunable leaf in depth-first order goes first;
    with ``rng`` a uniformly chosen prunable leaf is pruned at each step.
    """
    t = haircut(tree)
    while True:
        cand = prunable_leaves(t)
        if not cand:
            return t
        leaf = cand[0] if rng is None else cand[int(rng.integers(len(cand)))]
        prune_step(t, leaf, inplace=True)


def is_totally_pruned(tree: MarkedTree) -> bool:
    for v in tree.preorder():
        if tree.mark[v] != NONE and not tree.is_leaf(v):
            return False
    return not prunable_leaves(tree)


@dataclass
class Regions:
    """Partition of a totally pruned tree; ``parts[0]`` holds the root."""

    parts: list[list[int]]
    region_of: dict

    def __len__(self):
        return len(self.parts)

    def unmarked_counts(self, tree: MarkedTree) -> list[int]:
        return [sum(1 for v in r if tree.is_leaf(v) and tree.mark[v] == NONE)
                for r in self.parts]


def regions(tree: MarkedTree) -> Regions:
    if not is_totally_pruned(tree):
        raise TreeError("regions are defined on totally pruned trees")
    parts = []
    region_of = {}
    tops = deque([tree.root])
    while tops:
        top = tops.popleft()
        cur = []
        stack = [top]
        while stack:
            v = stack.pop()
            cur.append(v)
            region_of[v] = len(parts)
            k = tree.kids[v]
            if k[MIDDLE] != -1:
                tops.append(k[MIDDLE])
                tops.append(k[RIGHT])
                stack.append(k[LEFT])
            else:
                for c in (k[RIGHT], k[LEFT]):
                    if c != -1:
                        stack.append(c)
        parts.append(sorted(cur))
    return Regions(parts, region_of)


def root_region_ternaries(tree: MarkedTree) -> list[int]:
    """Ternary vertices of the root region, nearest to the root first and
    left to right within a level."""
    out = []
    q = deque([tree.root])
    while q:
        v = q.popleft()
        k = tree.kids[v]
        if k[MIDDLE] != -1:
            out.append(v)
            q.append(k[LEFT])
        else:
            for c in (k[LEFT], k[RIGHT]):
                if c != -1:
                    q.append(c)
    return out


def _subtree(tree: MarkedTree, v: int) -> MarkedTree:
    t = tree.copy()
    p = t.parent[v]
    if p != -1:
        t.kids[p][t.slot[v]] = -1
    t.parent[v] = -1
    t.root = v
    return t


def split_at(tree: MarkedTree, v: int) -> tuple[MarkedTree, MarkedTree, MarkedTree]:
    """(alpha_1, alpha_2, alpha_3) for a ternary vertex v: the tree with v
    replaced by its left child, and the middle and right subtrees."""
    k = tree.kids[v]
    if k[MIDDLE] == -1:
        raise TreeError(f"vertex {v} is not ternary")
    a2 = _subtree(tree, k[MIDDLE])
    a3 = _subtree(tree, k[RIGHT])
    a1 = tree.copy()
    a1.hang_in_place_of(v, k[LEFT])
    return a1, a2, a3


def stratify(tree: MarkedTree, policy: str = "first",
             rng: np.random.Generator | None = None):
    """Weighted ternary tree (nested tuple) or ``wtt.DELTA``.

    ``policy`` chooses the root-region ternary vertex to split at: ``first``
    (nearest the root, leftmost), ``last`` (the reverse) or ``rng``.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    if policy == "rng" and rng is None:
        raise ValueError("policy 'rng' needs a generator")

    def go(t: MarkedTree):
        pi = total_pruning(t)
        r = pi.root
        if pi.is_leaf(r) and pi.mark[r] == O:
            return wtt.DELTA
        tern = root_region_ternaries(pi)
        if not tern:
            return sum(1 for v in pi.leaves() if pi.mark[v] == NONE)
        if policy == "first":
            v = tern[0]
        elif policy == "last":
            v = tern[-1]
        else:
            v = tern[int(rng.integers(len(tern)))]
        parts = tuple(go(a) for a in split_at(pi, v))
        if any(x is wtt.DELTA for x in parts):
            # cannot happen on a totally pruned tree
            raise TreeError("cemetery inside a stratification")
        return parts

    return go(tree)


# ---------------------------------------------------------------------------
# random trees for property checks


def random_xi_star(rng: np.random.Generator, max_leaves: int = 12,
                   max_events: int = 30, p_mark: float = 0.35,
                   p_ternary: float = 0.4, p_benef: float = 0.4) -> MarkedTree:
    """Random tree in the eASG state space with at most ``max_leaves``
    unmarked leaves, built by applying random events to random leaves."""
    t = MarkedTree.single()
    n_events = int(rng.integers(0, max_events + 1))
    for _ in range(n_events):
        open_leaves = [v for v in t.leaves() if t.mark[v] == NONE]
        if not open_leaves:
            break
        v = open_leaves[int(rng.integers(len(open_leaves)))]
        x = rng.random()
        if x < p_mark:
            t.mark[v] = O if rng.random() < p_benef else X
            t.add(v, LEFT)
        else:
            ternary = rng.random() < p_ternary
            grow = 2 if ternary else 1
            if len(open_leaves) + grow > max_leaves:
                continue
            t.add(v, LEFT)
            if ternary:
                t.add(v, MIDDLE)
            t.add(v, RIGHT)
    return t
