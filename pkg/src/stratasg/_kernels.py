"""Compiled inner loops.

Everything here works on flat integer arrays so it can run under numba with
the GIL released.  The public modules wrap these kernels.

Weighted ternary tree arena
---------------------------
``node`` is an ``(cap, 8)`` int64 array with columns

    PAR    parent id (-1 for the root)
    POS    child slot in the parent (0 left, 1 middle, 2 right)
    C0..C2 children (C0 == -1 marks a leaf)
    W      leaf weight
    ALV    1 if the row is in use
    GEN    bumped every time the row is released

Leaves are drawn proportionally to their weight through ``sl``, a list of
(leaf, generation) pairs holding one entry per unit of weight.  Entries of
released leaves go stale rather than being hunted down; a stale entry is
discarded when drawn, and the list is rebuilt from the tree once stale
entries outnumber live ones.  ``meta`` holds the scalar state (M_* below).
"""

import numpy as np
from numba import njit

PAR, POS, C0, C1, C2, W, ALV, GEN = 0, 1, 2, 3, 4, 5, 6, 7
NCOL = 8

M_ROOT, M_NFREE, M_NEXT, M_MASS, M_DELTA, M_NINT, M_NS = 0, 1, 2, 3, 4, 5, 6
NMETA = 8

# simulation outcome codes
ALIVE, ROOT0, DELTA, ESCAPED, OVERFLOW = 0, 1, 2, 3, 4

# event kinds
EV_BRANCH, EV_TERNARY, EV_DEL, EV_BEN = 0, 1, 2, 3

# preorder codes for serialised weighted trees
CODE_INTERNAL = -1
CODE_DELTA = -2


def new_workspace(mass_cap):
    """Arrays able to hold any tree of total mass <= mass_cap."""
    mass_cap = int(mass_cap) + 2
    cap = 3 * mass_cap + 16
    node = np.zeros((cap, NCOL), dtype=np.int64)
    sl = np.zeros((2 * mass_cap + 128, 2), dtype=np.int64)
    free = np.zeros(cap, dtype=np.int64)
    meta = np.zeros(NMETA, dtype=np.int64)
    buf = np.zeros(cap + 4, dtype=np.int64)
    hv = np.zeros(cap, dtype=np.float64)
    ws_reset(node, meta)
    return node, sl, free, meta, buf, hv


@njit(cache=True, nogil=True)
def ws_reset(node, meta):
    for i in range(meta[M_NEXT]):
        node[i, ALV] = 0
    meta[M_ROOT] = -1
    meta[M_NFREE] = 0
    meta[M_NEXT] = 0
    meta[M_MASS] = 0
    meta[M_DELTA] = 0
    meta[M_NINT] = 0
    meta[M_NS] = 0


@njit(cache=True, nogil=True)
def _alloc(node, free, meta):
    if meta[M_NFREE] > 0:
        meta[M_NFREE] -= 1
        i = free[meta[M_NFREE]]
    else:
        i = meta[M_NEXT]
        if i >= node.shape[0]:
            return -1
        meta[M_NEXT] = i + 1
    node[i, PAR] = -1
    node[i, POS] = 0
    node[i, C0] = -1
    node[i, C1] = -1
    node[i, C2] = -1
    node[i, W] = 0
    node[i, ALV] = 1
    return i


@njit(cache=True, nogil=True)
def _release(node, free, meta, i):
    node[i, ALV] = 0
    node[i, GEN] += 1
    free[meta[M_NFREE]] = i
    meta[M_NFREE] += 1


@njit(cache=True, nogil=True)
def _set_w(node, meta, i, w):
    meta[M_MASS] += w - node[i, W]
    node[i, W] = w


@njit(cache=True, nogil=True)
def _compact(node, sl, meta, buf):
    ns = 0
    if meta[M_ROOT] >= 0:
        sp = 1
        buf[0] = meta[M_ROOT]
        while sp > 0:
            sp -= 1
            i = buf[sp]
            if node[i, C0] == -1:
                for _ in range(node[i, W]):
                    sl[ns, 0] = i
                    sl[ns, 1] = node[i, GEN]
                    ns += 1
            else:
                buf[sp] = node[i, C0]
                buf[sp + 1] = node[i, C1]
                buf[sp + 2] = node[i, C2]
                sp += 3
    meta[M_NS] = ns


@njit(cache=True, nogil=True)
def _add_weight(node, sl, meta, buf, leaf, cnt):
    # slots first: a compaction reads the weights as they were
    if meta[M_NS] + cnt > sl.shape[0]:
        _compact(node, sl, meta, buf)
        if meta[M_NS] + cnt > sl.shape[0]:
            return False
    ns = meta[M_NS]
    g = node[leaf, GEN]
    for j in range(cnt):
        sl[ns + j, 0] = leaf
        sl[ns + j, 1] = g
    meta[M_NS] = ns + cnt
    _set_w(node, meta, leaf, node[leaf, W] + cnt)
    return True


@njit(cache=True, nogil=True)
def _drop_slot(sl, meta, k):
    last = meta[M_NS] - 1
    sl[k, 0] = sl[last, 0]
    sl[k, 1] = sl[last, 1]
    meta[M_NS] = last


@njit(cache=True, nogil=True)
def _live(node, sl, k):
    i = sl[k, 0]
    return node[i, ALV] == 1 and node[i, GEN] == sl[k, 1]


@njit(cache=True, nogil=True)
def _find_slot(node, sl, meta, leaf):
    for k in range(meta[M_NS]):
        if sl[k, 0] == leaf and _live(node, sl, k):
            return k
    return -1


@njit(cache=True, nogil=True)
def _free_subtree(node, free, meta, buf, top):
    n = 1
    buf[0] = top
    while n > 0:
        n -= 1
        i = buf[n]
        if node[i, C0] == -1:
            _set_w(node, meta, i, 0)
        else:
            meta[M_NINT] -= 1
            buf[n] = node[i, C0]
            buf[n + 1] = node[i, C1]
            buf[n + 2] = node[i, C2]
            n += 3
        _release(node, free, meta, i)


@njit(cache=True, nogil=True)
def _replace(node, meta, a, b):
    # hang node b where node a currently hangs
    g = node[a, PAR]
    if g == -1:
        meta[M_ROOT] = b
        node[b, PAR] = -1
        node[b, POS] = 0
    else:
        node[g, C0 + node[a, POS]] = b
        node[b, PAR] = g
        node[b, POS] = node[a, POS]


@njit(cache=True, nogil=True)
def _leftmost(node, i):
    while node[i, C0] != -1:
        i = node[i, C0]
    return i


@njit(cache=True, nogil=True)
def ev_branch(node, sl, free, meta, buf, leaf):
    if not _add_weight(node, sl, meta, buf, leaf, 1):
        return OVERFLOW
    return ALIVE


@njit(cache=True, nogil=True)
def ev_ternary(node, sl, free, meta, buf, leaf):
    q = _alloc(node, free, meta)
    m = _alloc(node, free, meta)
    r = _alloc(node, free, meta)
    if q < 0 or m < 0 or r < 0:
        return OVERFLOW
    _replace(node, meta, leaf, q)
    node[q, C0] = leaf
    node[q, C1] = m
    node[q, C2] = r
    node[leaf, PAR] = q
    node[leaf, POS] = 0
    node[m, PAR] = q
    node[m, POS] = 1
    node[r, PAR] = q
    node[r, POS] = 2
    meta[M_NINT] += 1
    if not _add_weight(node, sl, meta, buf, m, 1):
        return OVERFLOW
    if not _add_weight(node, sl, meta, buf, r, 1):
        return OVERFLOW
    return ALIVE


@njit(cache=True, nogil=True)
def ev_deleterious(node, sl, free, meta, buf, leaf, slot):
    """Remove one unit of weight from ``leaf`` (slot -1: look one up)."""
    if slot < 0:
        slot = _find_slot(node, sl, meta, leaf)
    _drop_slot(sl, meta, slot)
    _set_w(node, meta, leaf, node[leaf, W] - 1)
    x = leaf
    while (node[x, C0] == -1 and node[x, W] == 0
           and node[x, PAR] != -1 and node[x, POS] != 0):
        a = node[x, PAR]
        left = node[a, C0]
        _free_subtree(node, free, meta, buf, node[a, C1])
        _free_subtree(node, free, meta, buf, node[a, C2])
        _replace(node, meta, a, left)
        _release(node, free, meta, a)
        meta[M_NINT] -= 1
        x = left
    return ALIVE


@njit(cache=True, nogil=True)
def ev_beneficial(node, sl, free, meta, buf, leaf):
    x = leaf
    while node[x, PAR] != -1 and node[x, POS] == 0:
        x = node[x, PAR]
    if node[x, PAR] == -1:
        # the leftmost leaf was hit
        _free_subtree(node, free, meta, buf, x)
        meta[M_ROOT] = -1
        meta[M_DELTA] = 1
        meta[M_NS] = 0
        return DELTA
    a = node[x, PAR]
    v1 = node[a, C0]
    v2 = node[a, C0 + 3 - node[x, POS]]
    _free_subtree(node, free, meta, buf, x)
    l1 = _leftmost(node, v1)
    l2 = _leftmost(node, v2)
    w1 = node[l1, W]
    _set_w(node, meta, l1, 0)
    _replace(node, meta, l1, v2)
    _release(node, free, meta, l1)
    _replace(node, meta, a, node[a, C0])
    _release(node, free, meta, a)
    meta[M_NINT] -= 1
    if not _add_weight(node, sl, meta, buf, l2, w1):
        return OVERFLOW
    return ALIVE


@njit(cache=True, nogil=True)
def apply_event(node, sl, free, meta, buf, kind, leaf):
    """Apply one transformation at a given leaf (used for testing)."""
    if kind == EV_BRANCH:
        return ev_branch(node, sl, free, meta, buf, leaf)
    if kind == EV_TERNARY:
        return ev_ternary(node, sl, free, meta, buf, leaf)
    if kind == EV_DEL:
        return ev_deleterious(node, sl, free, meta, buf, leaf, -1)
    return ev_beneficial(node, sl, free, meta, buf, leaf)


@njit(cache=True, nogil=True)
def load_codes(node, sl, free, meta, buf, codes):
    """Build the arena from preorder codes (-1 internal, >=0 leaf weight)."""
    ws_reset(node, meta)
    if len(codes) == 1 and codes[0] == CODE_DELTA:
        meta[M_DELTA] = 1
        return ALIVE
    # buf is the stack of internal nodes still missing children
    cnt = np.zeros(len(codes) + 1, dtype=np.int64)
    sp = 0
    for c in codes:
        i = _alloc(node, free, meta)
        if i < 0:
            return OVERFLOW
        if sp == 0:
            meta[M_ROOT] = i
        else:
            p = buf[sp - 1]
            k = cnt[sp - 1]
            node[p, C0 + k] = i
            node[i, PAR] = p
            node[i, POS] = k
            cnt[sp - 1] = k + 1
            if k == 2:
                sp -= 1
        if c == CODE_INTERNAL:
            node[i, C0] = i  # placeholder so the row reads as internal
            meta[M_NINT] += 1
            buf[sp] = i
            cnt[sp] = 0
            sp += 1
        else:
            node[i, W] = c
            meta[M_MASS] += c
    if meta[M_MASS] > sl.shape[0]:
        return OVERFLOW
    _compact(node, sl, meta, buf)
    return ALIVE


@njit(cache=True, nogil=True)
def dump_codes(node, meta, buf):
    if meta[M_DELTA] == 1:
        out = np.empty(1, dtype=np.int64)
        out[0] = CODE_DELTA
        return out
    out = np.empty(3 * meta[M_NINT] + 1, dtype=np.int64)
    n = 0
    sp = 1
    buf[0] = meta[M_ROOT]
    while sp > 0:
        sp -= 1
        i = buf[sp]
        if node[i, C0] == -1:
            out[n] = node[i, W]
        else:
            out[n] = CODE_INTERNAL
            buf[sp] = node[i, C2]
            buf[sp + 1] = node[i, C1]
            buf[sp + 2] = node[i, C0]
            sp += 3
        n += 1
    return out[:n]


@njit(cache=True, nogil=True)
def leaf_by_index(node, meta, buf, k):
    """k-th leaf in preorder (weight-0 leaves included)."""
    sp = 1
    buf[0] = meta[M_ROOT]
    seen = 0
    while sp > 0:
        sp -= 1
        i = buf[sp]
        if node[i, C0] == -1:
            if seen == k:
                return i
            seen += 1
        else:
            buf[sp] = node[i, C2]
            buf[sp + 1] = node[i, C1]
            buf[sp + 2] = node[i, C0]
            sp += 3
    return -1


@njit(cache=True, nogil=True)
def hs_arena(node, meta, buf, hv, y0):
    if meta[M_DELTA] == 1:
        return 0.0
    order = np.empty(3 * meta[M_NINT] + 1, dtype=np.int64)
    n = 0
    sp = 1
    buf[0] = meta[M_ROOT]
    while sp > 0:
        sp -= 1
        i = buf[sp]
        order[n] = i
        n += 1
        if node[i, C0] != -1:
            buf[sp] = node[i, C0]
            buf[sp + 1] = node[i, C1]
            buf[sp + 2] = node[i, C2]
            sp += 3
    for j in range(n - 1, -1, -1):
        i = order[j]
        if node[i, C0] == -1:
            hv[i] = y0 ** node[i, W]
        else:
            hm = hv[node[i, C1]]
            hr = hv[node[i, C2]]
            hv[i] = hv[node[i, C0]] * (hm + hr - hm * hr)
    return hv[meta[M_ROOT]]


@njit(cache=True, nogil=True)
def run_sasg(node, sl, free, meta, buf, s, g, u1, u0, r_end, m_max, rng,
             counts):
    """Gillespie run of the loaded state up to time r_end (may be inf).

    Returns (outcome, time).  ``counts`` accumulates events per kind.
    """
    total = s + g + u1 + u0
    t = 0.0
    if meta[M_DELTA] == 1:
        return DELTA, t
    while True:
        mass = meta[M_MASS]
        if mass == 0:
            return ROOT0, t
        if mass >= m_max:
            return ESCAPED, t
        if total <= 0.0:
            return ALIVE, r_end
        t += rng.exponential(1.0 / (total * mass))
        if t >= r_end:
            return ALIVE, r_end
        # uniform live slot; rng stays in this frame (passing it down is slow)
        if meta[M_NS] > 2 * mass + 64:
            _compact(node, sl, meta, buf)
        while True:
            ns = meta[M_NS]
            k = np.int64(rng.random() * ns)
            if k >= ns:
                k = ns - 1
            leaf = sl[k, 0]
            if node[leaf, ALV] == 1 and node[leaf, GEN] == sl[k, 1]:
                break
            _drop_slot(sl, meta, k)
        x = rng.random() * total
        # The two growth events are written out inline; they dominate the
        # event count and numba call overhead is not negligible here.
        if x < s + g:
            ns = meta[M_NS]
            if ns + 2 > sl.shape[0]:
                _compact(node, sl, meta, buf)
                ns = meta[M_NS]
            if x < s:
                counts[EV_BRANCH] += 1
                sl[ns, 0] = leaf
                sl[ns, 1] = node[leaf, GEN]
                meta[M_NS] = ns + 1
                node[leaf, W] += 1
                meta[M_MASS] += 1
                continue
            counts[EV_TERNARY] += 1
            # three fresh rows: free list first, then the unused tail
            nf = meta[M_NFREE]
            if nf >= 3:
                q = free[nf - 1]
                m = free[nf - 2]
                r = free[nf - 3]
                meta[M_NFREE] = nf - 3
            else:
                q = _alloc(node, free, meta)
                m = _alloc(node, free, meta)
                r = _alloc(node, free, meta)
                if r < 0:
                    return OVERFLOW, t
            node[q, ALV] = 1
            node[m, ALV] = 1
            node[r, ALV] = 1
            node[m, C0] = -1
            node[r, C0] = -1
            p = node[leaf, PAR]
            if p == -1:
                meta[M_ROOT] = q
            else:
                node[p, C0 + node[leaf, POS]] = q
            node[q, PAR] = p
            node[q, POS] = node[leaf, POS]
            node[q, C0] = leaf
            node[q, C1] = m
            node[q, C2] = r
            node[leaf, PAR] = q
            node[leaf, POS] = 0
            node[m, PAR] = q
            node[m, POS] = 1
            node[m, W] = 1
            node[r, PAR] = q
            node[r, POS] = 2
            node[r, W] = 1
            sl[ns, 0] = m
            sl[ns, 1] = node[m, GEN]
            sl[ns + 1, 0] = r
            sl[ns + 1, 1] = node[r, GEN]
            meta[M_NS] = ns + 2
            meta[M_MASS] += 2
            meta[M_NINT] += 1
            continue
        elif x < s + g + u1:
            counts[EV_DEL] += 1
            st = ev_deleterious(node, sl, free, meta, buf, leaf, k)
        else:
            counts[EV_BEN] += 1
            st = ev_beneficial(node, sl, free, meta, buf, leaf)
        if st != ALIVE:
            return st, t


@njit(cache=True, nogil=True)
def sasg_replicate(node, sl, free, meta, buf, hv, codes, s, g, u1, u0,
                   r_end, m_max, y0, rng, counts):
    load_codes(node, sl, free, meta, buf, codes)
    out, t = run_sasg(node, sl, free, meta, buf, s, g, u1, u0, r_end,
                      m_max, rng, counts)
    h = hs_arena(node, meta, buf, hv, y0)
    return out, t, meta[M_MASS], h


@njit(cache=True, nogil=True)
def forest_replicate(node, sl, free, meta, buf, hv, s, g, u1, r, m_max,
                     y0, sequential, rng, counts):
    """One draw of y0 * prod hs over the forest hanging off the immune line.

    With ``sequential`` the arrival times come from exponential gaps instead
    of a Poisson count followed by uniform ages.  Returns (value, n_capped).
    """
    one = np.array([1], dtype=np.int64)
    pitch = np.array([CODE_INTERNAL, 0, 1, 1], dtype=np.int64)
    val = y0
    capped = 0
    for stream in range(2):
        rate = s if stream == 0 else g
        codes = one if stream == 0 else pitch
        if rate <= 0.0 or r <= 0.0:
            continue
        if sequential:
            a = rng.exponential(1.0 / rate)
            while a < r:
                load_codes(node, sl, free, meta, buf, codes)
                out, t = run_sasg(node, sl, free, meta, buf, s, g, u1, 0.0,
                                  r - a, m_max, rng, counts)
                if out == ESCAPED or out == OVERFLOW:
                    capped += 1
                val *= hs_arena(node, meta, buf, hv, y0)
                a += rng.exponential(1.0 / rate)
        else:
            n = rng.poisson(rate * r)
            for _ in range(n):
                age = r * rng.random()
                load_codes(node, sl, free, meta, buf, codes)
                out, t = run_sasg(node, sl, free, meta, buf, s, g, u1, 0.0,
                                  age, m_max, rng, counts)
                if out == ESCAPED or out == OVERFLOW:
                    capped += 1
                val *= hs_arena(node, meta, buf, hv, y0)
    return val, capped


# ---------------------------------------------------------------------------
# embedded ASG growth

MARK_NONE, MARK_X, MARK_O = 0, 1, 2


@njit(cache=True, nogil=True)
def _grow_arrays(a, n):
    b = np.empty((2 * a.shape[0],) + a.shape[1:], dtype=a.dtype)
    b[:n] = a[:n]
    return b


@njit(cache=True, nogil=True)
def grow_easg(s, g, u1, u0, t_end, budget, rng):
    """Grow an eASG up to time t_end.

    Returns (par, slot, kids, mark, tlab, n, truncated).  ``kids`` is (n, 3)
    indexed by slot: binary vertices use slots 0 and 2, marked vertices slot 0.
    Children always get larger ids than their parent.
    """
    cap = 64
    par = np.empty(cap, dtype=np.int64)
    slot = np.empty(cap, dtype=np.int64)
    kids = np.empty((cap, 3), dtype=np.int64)
    mark = np.empty(cap, dtype=np.int64)
    tlab = np.empty(cap, dtype=np.float64)
    leaves = np.empty(cap, dtype=np.int64)
    par[0] = -1
    slot[0] = 0
    kids[0, :] = -1
    mark[0] = MARK_NONE
    tlab[0] = t_end
    leaves[0] = 0
    n = 1
    nl = 1
    total = s + g + u1 + u0
    t = 0.0
    truncated = False
    while total > 0.0:
        t += rng.exponential(1.0 / (total * nl))
        if t >= t_end:
            break
        if n + 3 > budget:
            truncated = True
            break
        if n + 3 > par.shape[0]:
            par = _grow_arrays(par, n)
            slot = _grow_arrays(slot, n)
            kids = _grow_arrays(kids, n)
            mark = _grow_arrays(mark, n)
            tlab = _grow_arrays(tlab, n)
            leaves = _grow_arrays(leaves, nl)
        j = np.int64(rng.random() * nl)
        if j >= nl:
            j = nl - 1
        v = leaves[j]
        x = rng.random() * total
        if x < s:
            nk = 2
        elif x < s + g:
            nk = 3
        else:
            nk = 1
            mark[v] = MARK_X if x < s + g + u1 else MARK_O
        tlab[v] = t
        # v stops being a leaf; its first child takes its place in the list
        first = True
        for k in range(3):
            if nk == 2 and k == 1:
                continue
            if nk == 1 and k > 0:
                break
            c = n
            n += 1
            par[c] = v
            slot[c] = k
            kids[c, :] = -1
            mark[c] = MARK_NONE
            tlab[c] = t_end
            kids[v, k] = c
            if first:
                leaves[j] = c
                first = False
            else:
                leaves[nl] = c
                nl += 1
    return (par[:n].copy(), slot[:n].copy(), kids[:n].copy(), mark[:n].copy(),
            tlab[:n].copy(), n, truncated)


@njit(cache=True, nogil=True)
def h_easg(kids, mark, n, y0):
    h = np.empty(n, dtype=np.float64)
    for i in range(n - 1, -1, -1):
        if mark[i] == MARK_X:
            h[i] = 1.0
        elif mark[i] == MARK_O:
            h[i] = 0.0
        elif kids[i, 0] == -1:
            h[i] = y0
        elif kids[i, 1] == -1:
            if kids[i, 2] == -1:
                h[i] = h[kids[i, 0]]
            else:
                h[i] = h[kids[i, 0]] * h[kids[i, 2]]
        else:
            hm = h[kids[i, 1]]
            hr = h[kids[i, 2]]
            h[i] = h[kids[i, 0]] * (hm + hr - hm * hr)
    return h[0]


@njit(cache=True, nogil=True)
def easg_replicate(s, g, u1, u0, t_end, budget, y0, rng):
    par, slot, kids, mark, tlab, n, trunc = grow_easg(s, g, u1, u0, t_end,
                                                      budget, rng)
    return h_easg(kids, mark, n, y0), n, trunc


# ---------------------------------------------------------------------------
# Moran model


@njit(cache=True, nogil=True)
def moran_path(N, k0, t_end, s, g, u1, u0, rng):
    cap = 1024
    ts = np.empty(cap, dtype=np.float64)
    ks = np.empty(cap, dtype=np.int64)
    ts[0] = 0.0
    ks[0] = k0
    n = 1
    k = k0
    t = 0.0
    fN = float(N)
    while True:
        fk = float(k)
        cross = fk * (fN - fk) / fN
        up = cross + (fN - fk) * u1
        down = cross * (1.0 + s + g * (fN - fk) / fN) + fk * u0
        rate = up + down
        if rate <= 0.0:
            break
        t += rng.exponential(1.0 / rate)
        if t >= t_end:
            break
        if rng.random() * rate < up:
            k += 1
        else:
            k -= 1
        if n == ts.shape[0]:
            ts = _grow_arrays(ts, n)
            ks = _grow_arrays(ks, n)
        ts[n] = t
        ks[n] = k
        n += 1
    return ts[:n].copy(), ks[:n].copy()
