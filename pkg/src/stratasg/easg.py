"""Marked trees and the embedded ASG.

A :class:`MarkedTree` is an arena of vertices addressed by dense integer ids.
Each vertex has three child slots (0 left, 1 middle, 2 right); a binary
vertex uses slots 0 and 2, a vertex with a single child uses slot 0.  Marks
are ``"x"`` (deleterious mutation) and ``"o"`` (beneficial mutation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .params import ModelParams, ParameterError
from .rng import MCResult, STREAM_EASG, generator, run_replicates, summarize

NONE, X, O = "", "x", "o"
LEFT, MIDDLE, RIGHT = 0, 1, 2

_POS_LABEL = {LEFT: "L", MIDDLE: "M", RIGHT: "Rt"}
_LABEL_POS = {v: k for k, v in _POS_LABEL.items()}
_MARK_LABEL = {NONE: "-", X: "x", O: "o"}
_LABEL_MARK = {v: k for k, v in _MARK_LABEL.items()}

DEFAULT_BUDGET = 2_000_000


class TreeError(ValueError):
    pass


class GrowthTruncated(RuntimeError):
    """Node budget exhausted; ``tree`` holds the partial state."""

    def __init__(self, tree, time):
        super().__init__(f"node budget exhausted at time {time:.6g} "
                         f"with {len(tree)} vertices")
        self.tree = tree
        self.time = time


class MarkedTree:
    """Rooted tree with ordered child slots and optional mutation marks."""

    __slots__ = ("parent", "slot", "kids", "mark", "alive", "root", "time", "horizon")

    def __init__(self):
        self.parent: list[int] = []
        self.slot: list[int] = []
        self.kids: list[list[int]] = []
        self.mark: list[str] = []
        self.alive: list[bool] = []
        self.time: list[float] = []
        self.root = -1
        self.horizon: float | None = None

    # -- construction -----------------------------------------------------

    def add(self, parent: int = -1, slot: int = 0, mark: str = NONE,
            time: float = 0.0) -> int:
        i = len(self.parent)
        self.parent.append(parent)
        self.slot.append(slot)
        self.kids.append([-1, -1, -1])
        self.mark.append(mark)
        self.alive.append(True)
        self.time.append(time)
        if parent == -1:
            if self.root != -1:
                raise TreeError("tree already has a root")
            self.root = i
        else:
            if self.kids[parent][slot] != -1:
                raise TreeError(f"slot {slot} of vertex {parent} is taken")
            self.kids[parent][slot] = i
        return i

    @classmethod
    def single(cls, mark: str = NONE) -> "MarkedTree":
        t = cls()
        t.add(mark=mark)
        return t

    @classmethod
    def from_nested(cls, spec) -> "MarkedTree":
        """Build from a compact nested form.

        ``"."`` unmarked leaf, ``"x"``/``"o"`` marked leaf, ``{"x": sub}`` or
        ``{"o": sub}`` marked vertex with one child, ``(l, r)`` binary and
        ``(l, m, r)`` ternary vertex.
        """
        t = cls()
        stack = [(spec, -1, 0)]
        while stack:
            sp, par, slot = stack.pop()
            if isinstance(sp, str):
                if sp not in (".", "x", "o"):
                    raise TreeError(f"bad leaf {sp!r}")
                t.add(par, slot, NONE if sp == "." else sp)
            elif isinstance(sp, dict):
                if len(sp) != 1 or next(iter(sp)) not in ("x", "o"):
                    raise TreeError(f"bad marked vertex {sp!r}")
                (mk, sub), = sp.items()
                v = t.add(par, slot, mk)
                stack.append((sub, v, LEFT))
            elif isinstance(sp, tuple) and len(sp) == 2:
                v = t.add(par, slot)
                stack.append((sp[1], v, RIGHT))
                stack.append((sp[0], v, LEFT))
            elif isinstance(sp, tuple) and len(sp) == 3:
                v = t.add(par, slot)
                stack.append((sp[2], v, RIGHT))
                stack.append((sp[1], v, MIDDLE))
                stack.append((sp[0], v, LEFT))
            else:
                raise TreeError(f"bad tree spec {sp!r}")
        return t

    def copy(self) -> "MarkedTree":
        t = MarkedTree()
        t.parent = list(self.parent)
        t.slot = list(self.slot)
        t.kids = [list(k) for k in self.kids]
        t.mark = list(self.mark)
        t.alive = list(self.alive)
        t.time = list(self.time)
        t.root = self.root
        t.horizon = self.horizon
        return t

    # -- queries ----------------------------------------------------------

    def __len__(self):
        return sum(1 for _ in self.preorder())

    def children(self, v: int) -> list[int]:
        return [c for c in self.kids[v] if c != -1]

    def outdegree(self, v: int) -> int:
        return sum(1 for c in self.kids[v] if c != -1)

    def is_leaf(self, v: int) -> bool:
        return self.outdegree(v) == 0

    def is_ternary(self, v: int) -> bool:
        return self.kids[v][MIDDLE] != -1

    def preorder(self, start: int | None = None):
        start = self.root if start is None else start
        if start == -1:
            return
        stack = [start]
        while stack:
            v = stack.pop()
            yield v
            for c in reversed(self.kids[v]):
                if c != -1:
                    stack.append(c)

    def leaves(self, start: int | None = None) -> list[int]:
        return [v for v in self.preorder(start) if self.is_leaf(v)]

    def unmarked_leaves(self) -> list[int]:
        return [v for v in self.leaves() if self.mark[v] == NONE]

    def marked_leaves(self) -> list[int]:
        return [v for v in self.leaves() if self.mark[v] != NONE]

    def depth(self, v: int) -> int:
        d = 0
        while self.parent[v] != -1:
            v = self.parent[v]
            d += 1
        return d

    def to_nested(self, start: int | None = None):
        """Canonical nested form; two trees are equal up to vertex ids iff
        their nested forms are equal."""
        start = self.root if start is None else start
        out = []
        stack = [(start, False)]
        while stack:
            v, done = stack.pop()
            ch = self.children(v)
            if not ch:
                out.append("." if self.mark[v] == NONE else self.mark[v])
            elif done:
                k = len(ch)
                items = tuple(out[-k:])
                del out[-k:]
                if self.mark[v] != NONE:
                    out.append({self.mark[v]: items[0]})
                else:
                    out.append(items)
            else:
                stack.append((v, True))
                for c in reversed(ch):
                    stack.append((c, False))
        return out[0]

    def __eq__(self, other):
        if not isinstance(other, MarkedTree):
            return NotImplemented
        return self.to_nested() == other.to_nested()

    def __repr__(self):
        return f"MarkedTree({self.to_nested()!r})"

    # -- validity ---------------------------------------------------------

    def _check_shape(self):
        seen = set()
        for v in self.preorder():
            if v in seen:
                raise TreeError("cycle or shared vertex")
            seen.add(v)
            if not self.alive[v]:
                raise TreeError(f"vertex {v} was removed but is still linked")
            for k, c in enumerate(self.kids[v]):
                if c != -1 and (self.parent[c] != v or self.slot[c] != k):
                    raise TreeError(f"inconsistent link {v}->{c}")
            occ = tuple(c != -1 for c in self.kids[v])
            if occ not in ((False, False, False), (True, False, False),
                           (True, False, True), (True, True, True)):
                raise TreeError(f"vertex {v} has an invalid child pattern {occ}")

    def check_xi_star(self):
        """Marks exactly on the vertices with a single child."""
        self._check_shape()
        for v in self.preorder():
            if (self.outdegree(v) == 1) != (self.mark[v] != NONE):
                raise TreeError(f"vertex {v}: outdegree-1 vertices carry the marks")

    def check_xi0(self):
        """No single-child vertices; marks only on leaves."""
        self._check_shape()
        for v in self.preorder():
            if self.outdegree(v) == 1:
                raise TreeError(f"vertex {v} has a single child")
            if self.mark[v] != NONE and not self.is_leaf(v):
                raise TreeError(f"internal vertex {v} is marked")

    # -- editing (used by the pruning code) -------------------------------

    def remove_subtree(self, v: int):
        p = self.parent[v]
        if p != -1:
            self.kids[p][self.slot[v]] = -1
        for w in list(self.preorder(v)):
            self.alive[w] = False
        if v == self.root:
            self.root = -1

    def hang_in_place_of(self, v: int, w: int):
        """Put the subtree at w where v hangs; v (and whatever else is left
        under it) is dropped."""
        p, k = self.parent[v], self.slot[v]
        pw, kw = self.parent[w], self.slot[w]
        if pw != -1:
            self.kids[pw][kw] = -1
        for x in list(self.preorder(v)):
            self.alive[x] = False
        self.parent[w] = p
        self.slot[w] = k
        if p == -1:
            self.root = w
        else:
            self.kids[p][k] = w

    # -- text serialization -----------------------------------------------

    def to_text(self) -> str:
        lines = []
        for v in self.preorder():
            p = self.parent[v]
            pos = "R" if p == -1 else _POS_LABEL[self.slot[v]]
            lines.append(f"{v} {p} {pos} {_MARK_LABEL[self.mark[v]]} {self.time[v]!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MarkedTree":
        rows = []
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.split()
            if len(parts) != 5:
                raise TreeError(f"expected 'id parent position mark time', got {ln!r}")
            vid, par, pos, mk, tm = parts
            rows.append((int(vid), int(par), pos, mk, float(tm)))
        if not rows:
            raise TreeError("empty tree text")
        n = max(r[0] for r in rows) + 1
        t = cls()
        t.parent = [-1] * n
        t.slot = [0] * n
        t.kids = [[-1, -1, -1] for _ in range(n)]
        t.mark = [NONE] * n
        t.alive = [False] * n
        t.time = [0.0] * n
        for vid, par, pos, mk, tm in rows:
            if t.alive[vid]:
                raise TreeError(f"duplicate vertex id {vid}")
            t.alive[vid] = True
            t.parent[vid] = par
            t.mark[vid] = _LABEL_MARK[mk]
            t.time[vid] = tm
            if pos == "R":
                if par != -1 or t.root != -1:
                    raise TreeError("exactly one root with parent -1 expected")
                t.root = vid
            else:
                k = _LABEL_POS[pos]
                t.slot[vid] = k
        for vid, par, pos, mk, tm in rows:
            if par != -1:
                if not t.alive[par]:
                    raise TreeError(f"vertex {vid} has unknown parent {par}")
                k = t.slot[vid]
                if t.kids[par][k] != -1:
                    raise TreeError(f"two children in slot {pos} of {par}")
                t.kids[par][k] = vid
        if t.root == -1:
            raise TreeError("no root")
        t._check_shape()
        return t


# ---------------------------------------------------------------------------
# growth


@dataclass
class TimeLabelling:
    """Time at which each vertex stopped being a leaf (leaves: the horizon)."""

    labels: dict
    horizon: float

    def check(self, tree: MarkedTree):
        for v in tree.preorder():
            if tree.is_leaf(v) and self.labels[v] != self.horizon:
                raise TreeError(f"leaf {v} must carry the horizon label")
            p = tree.parent[v]
            if p != -1 and self.labels[p] > self.labels[v]:
                raise TreeError(f"labels decrease along edge {p}->{v}")


def _tree_from_arrays(par, slot, kids, mark, tlab, n, horizon) -> MarkedTree:
    t = MarkedTree()
    t.parent = par[:n].tolist()
    t.slot = slot[:n].tolist()
    t.kids = kids[:n].tolist()
    codes = {K.MARK_NONE: NONE, K.MARK_X: X, K.MARK_O: O}
    t.mark = [codes[m] for m in mark[:n].tolist()]
    t.alive = [True] * n
    t.time = tlab[:n].tolist()
    t.root = 0
    t.horizon = horizon
    return t


def grow_easg(p: ModelParams, t_end: float, seed: int, replicate: int = 0,
              budget: int = DEFAULT_BUDGET) -> tuple[MarkedTree, TimeLabelling]:
    """Embedded ASG on [0, t_end]: every leaf branches binarily at rate s,
    ternarily at rate gamma, and is marked x (o) at rate u nu1 (u nu0)."""
    if t_end < 0:
        raise ParameterError("t_end must be non-negative")
    rng = generator(seed, STREAM_EASG, replicate)
    par, slot, kids, mark, tlab, n, trunc = K.grow_easg(
        p.s, p.gamma, p.u * p.nu1, p.u * p.nu0, float(t_end), int(budget), rng)
    tree = _tree_from_arrays(par, slot, kids, mark, tlab, n, float(t_end))
    lab = TimeLabelling(dict(enumerate(tree.time)), float(t_end))
    if trunc:
        raise GrowthTruncated(tree, float(np.max(tlab[:n])))
    return tree, lab


# ---------------------------------------------------------------------------
# types


def _check_config(tree: MarkedTree, c: dict):
    need = set(tree.unmarked_leaves())
    if set(c) != need:
        missing = need - set(c)
        raise TreeError(f"leaf-type configuration must cover exactly the unmarked "
                        f"leaves (missing {sorted(missing)[:5]})")


def propagate_types(tree: MarkedTree, c: dict) -> dict:
    """Type of every vertex given the types ``c`` of the unmarked leaves."""
    _check_config(tree, c)
    typ = {}
    for v in reversed(list(tree.preorder())):
        k = tree.kids[v]
        if tree.mark[v] == X:
            typ[v] = 1
        elif tree.mark[v] == O:
            typ[v] = 0
        elif k[0] == -1:
            typ[v] = int(c[v])
        elif k[MIDDLE] != -1:
            typ[v] = 1 if typ[k[0]] == 1 and (typ[k[1]] == 1 or typ[k[2]] == 1) else 0
        elif k[RIGHT] != -1:
            typ[v] = 1 if typ[k[0]] == 1 and typ[k[2]] == 1 else 0
        else:
            typ[v] = typ[k[0]]
    return typ


def root_type_all(tree: MarkedTree, leaf_order: list[int]) -> np.ndarray:
    """Root type under every configuration of ``leaf_order`` at once.

    Configuration j gives leaf_order[i] the type of bit i of j; entry j of the
    result is the root type.  Leaves of the tree missing from leaf_order must
    not exist (marked leaves are handled by their mark).
    """
    L = len(leaf_order)
    idx = np.arange(1 << L, dtype=np.int64)
    bit = {v: ((idx >> i) & 1).astype(bool) for i, v in enumerate(leaf_order)}
    ones = np.ones(1 << L, dtype=bool)
    zeros = np.zeros(1 << L, dtype=bool)
    val = {}
    for v in reversed(list(tree.preorder())):
        k = tree.kids[v]
        if tree.mark[v] == X:
            val[v] = ones
        elif tree.mark[v] == O:
            val[v] = zeros
        elif k[0] == -1:
            val[v] = bit[v]
        elif k[MIDDLE] != -1:
            val[v] = val[k[0]] & (val[k[1]] | val[k[2]])
        elif k[RIGHT] != -1:
            val[v] = val[k[0]] & val[k[2]]
        else:
            val[v] = val[k[0]]
    return val[tree.root].astype(np.int8)


def h_exact(tree: MarkedTree, y0: float) -> float:
    """P(root unfit) when unmarked leaves are unfit independently w.p. y0."""
    h = {}
    for v in reversed(list(tree.preorder())):
        k = tree.kids[v]
        if tree.mark[v] == X:
            h[v] = 1.0
        elif tree.mark[v] == O:
            h[v] = 0.0
        elif k[0] == -1:
            h[v] = y0
        elif k[MIDDLE] != -1:
            hm, hr = h[k[1]], h[k[2]]
            h[v] = h[k[0]] * (hm + hr - hm * hr)
        elif k[RIGHT] != -1:
            h[v] = h[k[0]] * h[k[2]]
        else:
            h[v] = h[k[0]]
    return h[tree.root]


def h_bruteforce(tree: MarkedTree, y0: float) -> float:
    """Sum over all leaf configurations; exponential, for checking only."""
    leaves = tree.unmarked_leaves()
    rt = root_type_all(tree, leaves)
    idx = np.arange(1 << len(leaves), dtype=np.int64)
    ones = np.zeros(len(idx), dtype=np.int64)
    for i in range(len(leaves)):
        ones += (idx >> i) & 1
    prob = y0 ** ones * (1 - y0) ** (len(leaves) - ones)
    return float(np.sum(prob * rt))


def ancestral_propagation(tree: MarkedTree, c: dict) -> tuple[int, int]:
    """(ancestral leaf of the root, its type) under the pecking order."""
    typ = propagate_types(tree, c)
    lam = {}
    for v in reversed(list(tree.preorder())):
        k = tree.kids[v]
        if k[0] == -1:
            lam[v] = v
        elif k[MIDDLE] != -1:
            lam[v] = lam[k[2]] if typ[k[1]] == 0 and typ[k[2]] == 0 else lam[k[0]]
        elif k[RIGHT] != -1:
            lam[v] = lam[k[2]] if typ[k[2]] == 0 else lam[k[0]]
        else:
            lam[v] = lam[k[0]]
    anc = lam[tree.root]
    return anc, typ[anc]


def sample_types(tree: MarkedTree, y0: float, rng: np.random.Generator) -> dict:
    return {v: int(rng.random() < y0) for v in tree.unmarked_leaves()}


# ---------------------------------------------------------------------------
# Monte Carlo duality


def mc_duality_easg(p: ModelParams, y0: float, t: float, replicates: int,
                    seed: int, budget: int = DEFAULT_BUDGET,
                    threads: int | None = None) -> MCResult:
    """Mean of H(a_t, y0) over independently grown eASGs."""
    if replicates < 2:
        raise ParameterError("need at least two replicates")
    args = (p.s, p.gamma, p.u * p.nu1, p.u * p.nu0, float(t), int(budget), float(y0))

    def make():
        def work(i):
            h, n, trunc = K.easg_replicate(*args[:6], args[6],
                                           generator(seed, STREAM_EASG, i))
            return h, n, trunc
        return work

    res = run_replicates(make, replicates, threads)
    h = np.array([r[0] for r in res])
    sizes = np.array([r[1] for r in res])
    trunc = int(sum(r[2] for r in res))
    return summarize(h, trunc, 0.01, mean_size=float(sizes.mean()),
                     max_size=int(sizes.max()))
