"""Suite construction strategies over a test pool.

All sorts are stable, so equal scores resolve by insertion order. Every
selector returns a TestSuite no larger than requested; a pool smaller than
n yields the whole pool and a warning.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from .cases import TestPool, TestSuite
from .metrics import fol, gini

DEFAULT_CC_RANGES = ((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.0))


def _suite(pool, cases, strategy, params, warning=None):
    labels = {sid: pool.seeds[sid].seed_label for sid in {c.seed_id for c in cases}}
    return TestSuite(list(cases), strategy, params, labels, warning)


def _short_pool_warning(total, n):
    message = f"pool holds {total} cases, fewer than the requested {n}"
    warnings.warn(message)
    return message


def context_select(pool, n, order="highest"):
    """Layered best-first selection.

    Seeds keep their pool order. Each seed's cases are ranked by cached
    score; layer i holds every seed's i-th ranked case. Layers are appended
    until the suite is full; a final layer that does not fit whole is
    ranked by score and trimmed.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if order not in ("highest", "lowest"):
        raise ValueError(f"unknown order: {order!r}")
    sign = -1.0 if order == "highest" else 1.0
    ranked = [sorted(cases, key=lambda c: sign * c.cc) for cases in pool.by_seed.values()]
    total = sum(len(r) for r in ranked)
    warning = _short_pool_warning(total, n) if total < n else None
    target = min(n, total)
    out = []
    depth = 0
    while len(out) < target:
        layer = [r[depth] for r in ranked if depth < len(r)]
        room = target - len(out)
        if len(layer) > room:
            layer = sorted(layer, key=lambda c: sign * c.cc)[:room]
        out.extend(layer)
        depth += 1
    return _suite(pool, out, "context", {"n": n, "order": order}, warning)


def random_select(pool, n, rng):
    """Uniform sample without replacement from the flattened pool."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cases = pool.flatten()
    warning = None
    if len(cases) <= n:
        if len(cases) < n:
            warning = _short_pool_warning(len(cases), n)
        chosen = cases
    else:
        picks = rng.choice(len(cases), size=n, replace=False)
        chosen = [cases[i] for i in picks]
    return _suite(pool, chosen, "random", {"n": n}, warning)


def gini_order_select(pool, n, model):
    """Rank the flattened pool by prediction Gini, descending; take the top n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    cases = pool.flatten()
    warning = _short_pool_warning(len(cases), n) if len(cases) < n else None
    if cases:
        probs = model.predict_batch(np.stack([c.data for c in cases]))
        scores = [gini(p) for p in probs]
        order = sorted(range(len(cases)), key=lambda i: -scores[i])
        chosen = [cases[i] for i in order[: min(n, len(cases))]]
    else:
        chosen = []
    return _suite(pool, chosen, "gini", {"n": n}, warning)


def _fol_ranked(pool, model, epsilon):
    cases = pool.flatten()
    scores = [
        fol(model, c.data, pool.seeds[c.seed_id].seed_label, epsilon) for c in cases
    ]
    order = sorted(range(len(cases)), key=lambda i: -scores[i])
    return [cases[i] for i in order]


def be_st(pool, n, model, epsilon):
    """Extremes of the first-order-loss order.

    Sorts the flattened pool by FOL descending and takes ceil(n/2) from the
    head plus floor(n/2) from the tail; odd n favours the head.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    ranked = _fol_ranked(pool, model, epsilon)
    total = len(ranked)
    if total < n:
        warning = _short_pool_warning(total, n)
        return _suite(pool, ranked, "be_st", {"n": n, "epsilon": epsilon}, warning)
    head = math.ceil(n / 2)
    tail = n - head
    chosen = ranked[:head] + (ranked[total - tail :] if tail else [])
    return _suite(pool, chosen, "be_st", {"n": n, "epsilon": epsilon})


def km_st(pool, n, k_sections, model, epsilon, rng):
    """Stratified random picks over contiguous first-order-loss sections.

    The FOL-descending order is cut into k near-equal contiguous sections
    (longer sections first). Quotas of ceil(n/k) or floor(n/k) picks per
    section (larger quotas first) are drawn uniformly without replacement;
    a section too small for its quota passes the shortfall round-robin to
    the following sections with spare room. Picks within a section are
    emitted in FOL order.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if k_sections < 1:
        raise ValueError("k_sections must be at least 1")
    ranked = _fol_ranked(pool, model, epsilon)
    total = len(ranked)
    params = {"n": n, "k_sections": k_sections, "epsilon": epsilon}
    if total < n:
        warning = _short_pool_warning(total, n)
        return _suite(pool, ranked, "km_st", params, warning)
    base, extra = divmod(total, k_sections)
    sizes = [base + (1 if i < extra else 0) for i in range(k_sections)]
    qbase, qextra = divmod(n, k_sections)
    quotas = [qbase + (1 if i < qextra else 0) for i in range(k_sections)]
    takes = [min(q, s) for q, s in zip(quotas, sizes)]
    for i in range(k_sections):
        deficit = quotas[i] - takes[i]
        if deficit <= 0:
            continue
        j = (i + 1) % k_sections
        dry = 0
        while deficit > 0 and dry < k_sections:
            if takes[j] < sizes[j]:
                takes[j] += 1
                deficit -= 1
                dry = 0
            else:
                dry += 1
            j = (j + 1) % k_sections
    chosen = []
    start = 0
    for size, take in zip(sizes, takes):
        section = ranked[start : start + size]
        start += size
        if take <= 0:
            continue
        if take >= size:
            chosen.extend(section)
        else:
            picks = rng.choice(size, size=take, replace=False)
            chosen.extend(section[p] for p in sorted(picks))
    return _suite(pool, chosen, "km_st", params)


def partition_by_cc(pool, ranges=DEFAULT_CC_RANGES):
    """Split a pool into sub-pools by cached score range.

    Ranges must be contiguous and cover [0, 1]. Each range is closed at its
    high end and open at its low end, except the first which is closed at
    0, so a boundary score belongs to the lower section.
    """
    ranges = [(float(lo), float(hi)) for lo, hi in ranges]
    if not ranges:
        raise ValueError("ranges must be non-empty")
    if abs(ranges[0][0]) > 1e-9 or abs(ranges[-1][1] - 1.0) > 1e-9:
        raise ValueError("ranges must cover [0, 1]")
    for (lo, hi), (lo2, _) in zip(ranges, ranges[1:]):
        if hi <= lo:
            raise ValueError("each range must have positive width")
        if abs(hi - lo2) > 1e-9:
            raise ValueError("ranges must be contiguous")
    if ranges[-1][1] <= ranges[-1][0]:
        raise ValueError("each range must have positive width")
    pools = [
        TestPool(pool.seeds.values(), guiding_metric=pool.guiding_metric)
        for _ in ranges
    ]
    last = len(ranges) - 1
    for case in pool.flatten():
        target = last
        for idx, (_, hi) in enumerate(ranges):
            if case.cc <= hi + 1e-12:
                target = idx
                break
        pools[target].add(case)
    return pools
