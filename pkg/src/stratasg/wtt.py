"""Weighted ternary trees.

A tree is a nested tuple: a leaf is a non-negative ``int`` (its weight) and an
internal vertex is a 3-tuple ``(left, middle, right)``.  The cemetery is the
singleton :data:`DELTA`.  Tuples are immutable and hashable, so structural
equality comes for free.

Trees produced by long simulations can be thousands of levels deep, so every
traversal here is iterative.
"""

from __future__ import annotations

import math
import re
from typing import Iterator, Union

import numpy as np


class _Delta:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "DELTA"

    def __reduce__(self):
        return (_Delta, ())


DELTA = _Delta()
PITCHSTAR = (0, 1, 1)

Tree = Union[int, tuple]
State = Union[int, tuple, _Delta]


def root(n: int) -> int:
    """The single-vertex tree with weight n."""
    if n < 0:
        raise ValueError("weights are non-negative")
    return int(n)


def is_leaf(t) -> bool:
    return isinstance(t, (int, np.integer)) and not isinstance(t, bool)


def validate(t: State) -> None:
    if t is DELTA:
        return
    stack = [t]
    while stack:
        x = stack.pop()
        if is_leaf(x):
            if x < 0:
                raise ValueError(f"negative weight {x}")
        elif isinstance(x, tuple) and len(x) == 3:
            stack.extend(x)
        else:
            raise ValueError(f"not a weighted ternary tree node: {x!r}")


def iter_preorder(t: Tree) -> Iterator[tuple[tuple, object]]:
    """Yield (path, subtree) in preorder; a path is a tuple of 0/1/2 steps."""
    stack = [((), t)]
    while stack:
        path, x = stack.pop()
        yield path, x
        if not is_leaf(x):
            for i in (2, 1, 0):
                stack.append((path + (i,), x[i]))


def leaves(t: Tree) -> list[tuple[tuple, int]]:
    """(path, weight) of every leaf, left to right."""
    return [(p, x) for p, x in iter_preorder(t) if is_leaf(x)]


def mass(t: State) -> int:
    if t is DELTA:
        return 0
    return sum(w for _, w in leaves(t))


def n_internal(t: State) -> int:
    if t is DELTA:
        return 0
    return sum(1 for _, x in iter_preorder(t) if not is_leaf(x))


def get_at(t: Tree, path) -> object:
    for i in path:
        t = t[i]
    return t


def replace_at(t: Tree, path, sub) -> object:
    """Copy of t with the subtree at ``path`` replaced by ``sub``."""
    spine = [t]
    for i in path:
        spine.append(spine[-1][i])
    new = sub
    for depth in range(len(path) - 1, -1, -1):
        node = list(spine[depth])
        node[path[depth]] = new
        new = tuple(node)
    return new


def leftmost_path(t: Tree, path=()) -> tuple:
    x = get_at(t, path)
    path = tuple(path)
    while not is_leaf(x):
        x = x[0]
        path += (0,)
    return path


def _postorder_eval(t: Tree, leaf_fn, node_fn):
    out = []
    stack = [(t, False)]
    while stack:
        x, done = stack.pop()
        if is_leaf(x):
            out.append(leaf_fn(x))
        elif done:
            r = out.pop()
            m = out.pop()
            l_ = out.pop()
            out.append(node_fn(l_, m, r))
        else:
            stack.append((x, True))
            stack.append((x[2], False))
            stack.append((x[1], False))
            stack.append((x[0], False))
    return out[0]


def hs_exact(t: State, y0: float, log: bool = False) -> float:
    """Probability that the root is unfit when a leaf of weight m is unfit
    with probability y0**m, independently across leaves.

    ``log=True`` carries the recursion in log space, which keeps trees with
    large weights from underflowing to 0 when y0 is small.
    """
    if t is DELTA:
        return 0.0
    if not log:
        return _postorder_eval(t, lambda m: y0 ** m,
                               lambda a, b, c: a * (b + c - b * c))
    lh = hs_log(t, y0)
    return math.exp(lh)


def hs_log(t: State, y0: float) -> float:
    """log of :func:`hs_exact`, computed without leaving log space."""
    if t is DELTA:
        return -math.inf
    ly = math.log(y0) if y0 > 0 else -math.inf

    def leaf(m):
        return 0.0 if m == 0 else m * ly

    def log_or(a, b):
        # log(1 - (1 - e^a)(1 - e^b))
        if a == 0.0 or b == 0.0:
            return 0.0
        la = math.log1p(-math.exp(a)) if a > -math.inf else 0.0
        lb = math.log1p(-math.exp(b)) if b > -math.inf else 0.0
        s = la + lb
        if s == 0.0:
            return -math.inf
        return math.log(-math.expm1(s))

    return _postorder_eval(t, leaf, lambda a, b, c: a + log_or(b, c))


# ---------------------------------------------------------------------------
# text form "(L M R)", leaves as integers, D for the cemetery

_TOKEN = re.compile(r"\s*(\(|\)|D|\d+)")


def format_wtt(t: State) -> str:
    if t is DELTA:
        return "D"
    parts = []
    stack = [t]
    while stack:
        x = stack.pop()
        if isinstance(x, str):
            parts.append(x)
        elif is_leaf(x):
            parts.append(str(int(x)))
        else:
            stack.extend([")", x[2], " ", x[1], " ", x[0], "("])
    return "".join(parts)


def parse_wtt(text: str) -> State:
    text = text.strip()
    pos = 0
    tokens = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ValueError(f"cannot parse weighted tree at {text[pos:pos + 10]!r}")
        tokens.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    if tokens == ["D"]:
        return DELTA
    stack: list[list] = []
    result = None
    for tok in tokens:
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if not stack or len(stack[-1]) != 3:
                raise ValueError("every internal vertex needs exactly three children")
            node = tuple(stack.pop())
            if stack:
                stack[-1].append(node)
            elif result is None:
                result = node
            else:
                raise ValueError("trailing input")
        elif tok == "D":
            raise ValueError("D may only appear on its own")
        else:
            if stack:
                stack[-1].append(int(tok))
            elif result is None:
                result = int(tok)
            else:
                raise ValueError("trailing input")
    if stack or result is None:
        raise ValueError("unbalanced parentheses")
    return result


# ---------------------------------------------------------------------------
# preorder integer codes shared with the compiled kernels

def to_codes(t: State) -> np.ndarray:
    from ._kernels import CODE_DELTA, CODE_INTERNAL
    if t is DELTA:
        return np.array([CODE_DELTA], dtype=np.int64)
    return np.array([x if is_leaf(x) else CODE_INTERNAL for _, x in iter_preorder(t)],
                    dtype=np.int64)


def from_codes(codes) -> State:
    from ._kernels import CODE_DELTA, CODE_INTERNAL
    codes = [int(c) for c in codes]
    if codes == [CODE_DELTA]:
        return DELTA
    stack: list[list] = []
    result = None
    for c in codes:
        if c == CODE_INTERNAL:
            stack.append([])
            continue
        item = c
        while True:
            if not stack:
                result = item
                break
            stack[-1].append(item)
            if len(stack[-1]) < 3:
                break
            item = tuple(stack.pop())
    if result is None or stack:
        raise ValueError("incomplete preorder code sequence")
    return result
