from __future__ import annotations

import pytest

from uncompute.analysis import analyze, restrict
from uncompute.frontend import load

from programs import insert_inner_block, random_program

NESTINGS = 200


def outer_lifetimes_unchanged(seed: int) -> bool:
    """Inserting a self-contained inner block keeps every outer resource's
    conservative live points, read through the point renumbering."""
    base = load(random_program(seed))
    grown = load(insert_inner_block(random_program(seed), seed))
    inner = {r.id for r in grown.resources.values() if r.name.startswith("s")}
    old_of_new = [op.point for op in grown.operations if not set(op.resources) & inner]
    if len(old_of_new) != base.n:
        return False
    new_point = dict(zip(range(1, base.n + 1), old_of_new))
    _, _, live_b, _ = analyze(base)
    _, _, live_g, table_g = analyze(grown)
    for r in base.resources.values():
        g = grown.rid(r.name)
        before = {p for p in range(1, base.n + 1) if live_b.live(r.id, p)}
        after = {p for p in range(1, base.n + 1) if live_g.live(g, new_point[p])}
        if before != after or not live_g.is_contiguous(g):
            return False
    return True


def sub_block_contained(seed: int) -> bool:
    """Lifetimes computed on any scope alone lie inside the whole-program
    lifetimes of the resources that scope declares."""
    p = load(random_program(seed))
    whole = analyze(p)[3]
    for s in p.scopes:
        if s.parent is None or s.entry > s.exit:
            continue
        sub = restrict(p, s.entry, s.exit)
        table = analyze(sub)[3]
        for r in p.resources.values():
            if r.scope_id != s.id:
                continue
            part, full = table[r.name].conservative, whole[r.name].conservative
            if part is None:
                continue
            lo, hi = part[0] + s.entry - 1, part[1] + s.entry - 1
            if full is None or not (full[0] <= lo and hi <= full[1]):
                return False
    return True


@pytest.mark.parametrize("seed", range(NESTINGS))
def test_nested_scope_independence(seed):
    assert outer_lifetimes_unchanged(seed)


@pytest.mark.parametrize("seed", range(NESTINGS))
def test_lifetime_monotonicity(seed):
    assert sub_block_contained(seed)
