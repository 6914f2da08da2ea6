import numpy as np
import pytest

from stratasg import easg, pruning, wtt
from stratasg.easg import LEFT, MIDDLE, MarkedTree
from stratasg.pruning import (NotPrunable, haircut, prune_step, regions, stratify,
                              total_pruning)

N = MarkedTree.from_nested

# x above a leaf on the far left, an o-marked right branch of the upper
# ternary vertex, an x-marked middle branch on the right side
ALPHA = N(((({"x": "."}, ".", "."), ".", {"o": (".", ".")}),
           (".", (".", {"x": "."}, "."))))
ALPHA_CUT = ((("x", ".", "."), ".", "o"), (".", (".", "x", ".")))
ALPHA_PI = ((("x", ".", "."), "."), (".", "."))

# unmarked tree with three ternary vertices in the root region
AMBIG = N((((((".", "."), ".", "."), ".", (".", (".", "."))),
            (".", (".", ".", (".", "."))))))


def leaf_at(t, *slots):
    v = t.root
    for s in slots:
        v = t.kids[v][s]
    return v


def test_haircut():
    plain = N((".", (".", ".", ".")))
    assert haircut(plain) == plain
    assert haircut(N({"x": (".", ".")})).to_nested() == "x"
    assert haircut(ALPHA).to_nested() == ALPHA_CUT
    haircut(ALPHA).check_xi0()


def test_prune_step_cases():
    t = N(("x", "."))
    assert prune_step(t, leaf_at(t, LEFT)).to_nested() == "."
    t = N((".", "o", "."))
    assert prune_step(t, leaf_at(t, MIDDLE)).to_nested() == (".", ".")
    t = N(("o", ".", "."))
    assert prune_step(t, leaf_at(t, LEFT)).to_nested() == "o"
    # x in the middle: the whole interactive branching collapses to its left child
    t = N(((".", "."), "x", "."))
    assert prune_step(t, leaf_at(t, MIDDLE)).to_nested() == (".", ".")
    # o on the right: the middle child takes the right slot
    t = N((".", (".", "."), "o"))
    out = prune_step(t, leaf_at(t, 2))
    assert out.to_nested() == (".", (".", "."))
    out.check_xi0()


def test_not_prunable():
    t = N(("x", ".", "."))
    with pytest.raises(NotPrunable):
        prune_step(t, leaf_at(t, LEFT))
    with pytest.raises(NotPrunable):
        prune_step(t, leaf_at(t, MIDDLE))
    with pytest.raises(NotPrunable):
        prune_step(N("o"), 0)


def test_prune_step_copies_by_default():
    t = N(("x", "."))
    before = t.to_nested()
    prune_step(t, leaf_at(t, LEFT))
    assert t.to_nested() == before


def test_total_pruning_examples():
    assert total_pruning(N(("o", "o", "o"))).to_nested() == "o"
    plain = N((".", (".", ".")))
    assert total_pruning(plain) == plain
    pi = total_pruning(ALPHA)
    assert pi.to_nested() == ALPHA_PI
    assert pruning.is_totally_pruned(pi)


def test_pruning_keeps_leaf_identities():
    pi = total_pruning(ALPHA)
    assert set(pi.unmarked_leaves()) <= set(ALPHA.unmarked_leaves())


def test_regions():
    r = regions(N((".", ".")))
    assert len(r) == 1
    t = N((".", ".", "."))
    r = regions(t)
    k = t.kids[t.root]
    assert r.parts == [sorted([t.root, k[0]]), [k[1]], [k[2]]]
    r = regions(AMBIG)
    assert len(r) == 7
    counts = r.unmarked_counts(AMBIG)
    assert counts[0] == 4
    assert sorted(counts) == [1, 1, 1, 1, 2, 3, 4]
    assert sum(len(p) for p in r.parts) == len(list(AMBIG.preorder()))


def test_regions_need_pruned_tree():
    with pytest.raises(easg.TreeError):
        regions(N(("x", ".")))


def test_stratify_examples():
    assert stratify(N("x")) == 0
    assert stratify(N("o")) is wtt.DELTA
    assert stratify(N(("x", ".", "."))) == wtt.PITCHSTAR
    assert stratify(ALPHA) == (3, 1, 1)


def test_stratification_policies_on_ambiguous_tree():
    first = stratify(AMBIG)
    last = stratify(AMBIG, "last")
    assert first == (((4, 1, 2), 1, 1), 1, 3)
    assert first != last
    rng = np.random.default_rng(3)
    others = {stratify(AMBIG, "rng", rng) for _ in range(40)}
    assert len(others) >= 2
    for y in np.linspace(0, 1, 21):
        h = easg.h_exact(AMBIG, y)
        for s in others | {first, last}:
            assert abs(wtt.hs_exact(s, y) - h) < 1e-12


def test_stratify_policy_errors():
    with pytest.raises(ValueError):
        stratify(AMBIG, "middle")
    with pytest.raises(ValueError):
        stratify(AMBIG, "rng")


def test_split_at():
    t = N((".", ".", "."))
    a1, a2, a3 = pruning.split_at(t, t.root)
    assert a1.to_nested() == "." and a2.to_nested() == "." and a3.to_nested() == "."
    with pytest.raises(easg.TreeError):
        pruning.split_at(N((".", ".")), 0)


def test_random_trees_small_suite():
    rng = np.random.default_rng(5)
    ys = np.linspace(0, 1, 21)
    for _ in range(150):
        a = pruning.random_xi_star(rng)
        a.check_xi_star()
        assert len(a.unmarked_leaves()) <= 12
        pi = total_pruning(a)
        pi.check_xi0()
        assert pruning.is_totally_pruned(pi)
        # root type is preserved leaf configuration by leaf configuration
        L = a.unmarked_leaves()
        keep = set(pi.unmarked_leaves())
        for _ in range(20):
            c = {v: int(rng.random() < 0.5) for v in L}
            full = easg.propagate_types(a, c)[a.root]
            red = easg.propagate_types(pi, {v: c[v] for v in keep})[pi.root]
            assert full == red
        for _ in range(10):
            assert total_pruning(a, rng) == pi
        s = stratify(a)
        for y in ys:
            assert abs(easg.h_exact(a, y) - wtt.hs_exact(s, y)) < 1e-12
