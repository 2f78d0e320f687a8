"""Slow, direct re-implementations used as test oracles."""
import numpy as np

TOL = 1e-9


def refine_pairs(s, lo, first, last, direction):
    """Exhaustive deepest drop (``direction="right"``: peak before trough)
    or rise (``"left"``: trough before peak) on ``[first, last]``.

    Ties: smallest ``|trough|``, then smaller trough, then the same for the peak.
    """
    best, key_best, out = -np.inf, None, None
    for t1 in range(first, last + 1):
        for t2 in range(t1, last + 1):
            if direction == "right":
                peak, trough = t1, t2
            else:
                trough, peak = t1, t2
            drop = s[peak - lo] - s[trough - lo]
            key = (abs(trough), trough, abs(peak), peak)
            if drop > best + TOL or (abs(drop - best) <= TOL and key < key_best):
                if drop > best + TOL:
                    best = drop
                key_best, out = key, (peak, trough)
    return out, best


def basic_valley_bruteforce(s, lo, gamma, margin):
    """Basic valley by enumerating every valley ``(l, m, r)`` with ``l <= 0 <= r``.

    The bottom is the admissible one of highest level (ties: smallest
    ``|m|``); the outer walls are the nearest sites rising ``gamma`` above
    it, the far-side wall also clearing ``margin``.  Returns ``None`` if no
    admissible valley exists in the window.
    """
    s = np.asarray(s, dtype=float)
    hi = lo + s.size - 1

    def S(k):
        return s[k - lo]

    best = None
    for m in range(lo, hi + 1):
        ok = False
        for left in range(lo, min(m, 0) + 1):
            if ok:
                break
            if S(left) < max(S(k) for k in range(left, m + 1)) - TOL:
                continue
            for right in range(max(m, 0), hi + 1):
                if S(right) < max(S(k) for k in range(m, right + 1)) - TOL:
                    continue
                if S(m) > min(S(k) for k in range(left, right + 1)) + TOL:
                    continue
                if min(S(left), S(right)) - S(m) < gamma:
                    continue
                if m < 0 and S(right) - max(S(k) for k in range(m, 1)) < margin:
                    continue
                if m > 0 and S(left) - max(S(k) for k in range(0, m + 1)) < margin:
                    continue
                ok = True
                break
        if ok:
            key = (-S(m), abs(m), m)
            if best is None or key < best[0]:
                best = (key, m)
    if best is None:
        return None
    m = best[1]
    top = max(S(k) for k in range(min(m, 0), max(m, 0) + 1))
    left = right = None
    for k in range(min(m - 1, 0), lo - 1, -1):
        if S(k) - S(m) >= gamma and (m <= 0 or S(k) - top >= margin):
            left = k
            break
    for k in range(max(m + 1, 0), hi + 1):
        if S(k) - S(m) >= gamma and (m >= 0 or S(k) - top >= margin):
            right = k
            break
    if left is None or right is None:
        return None
    return left, m, right


def radius_bruteforce(counts, lo, beta):
    """Smallest ``k >= 1`` with some ``[x-k, x+k]`` holding ``>= beta * total``,
    scanning centres over (and one radius beyond) the visited range."""
    counts = np.asarray(counts)
    total = counts.sum()
    hi = lo + counts.size - 1
    for k in range(1, counts.size + 2):
        for x in range(lo - k, hi + k + 1):
            a, b = max(x - k, lo), min(x + k, hi)
            if a <= b and counts[a - lo: b - lo + 1].sum() >= beta * total:
                return k
    raise AssertionError("unreachable")


def walk_python(alphas_at, uniforms, n, start=0):
    """Plain step loop: up iff ``u < alpha``; returns the path ``X_1..X_n``."""
    x = start
    path = []
    for k in range(n):
        x = x + 1 if uniforms[k] < alphas_at(x) else x - 1
        path.append(x)
    return path


def refine_pairs_vectorised(s, lo, first, last, direction):
    """Same answer as ``refine_pairs`` from the full pair matrix."""
    seg = np.asarray(s, dtype=float)[first - lo: last - lo + 1]
    sites = np.arange(first, last + 1)
    t1, t2 = np.triu_indices(seg.size)
    if direction == "right":
        peak, trough = sites[t1], sites[t2]
    else:
        trough, peak = sites[t1], sites[t2]
    drop = seg[peak - first] - seg[trough - first]
    best = drop.max()
    cand = np.flatnonzero(drop >= best - TOL)
    order = np.lexsort((peak[cand], np.abs(peak[cand]), trough[cand], np.abs(trough[cand])))
    k = cand[order[0]]
    return (int(peak[k]), int(trough[k])), float(best)


def radius_full_scan(counts, lo, beta):
    """Smallest ``k`` over every centre ``x`` and radius ``k``; no bisection,
    no restriction of centres to the visited range."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    span = counts.size
    prefix = np.concatenate(([0], np.cumsum(counts)))
    for k in range(1, span + 2):
        xs = np.arange(lo - k, lo + span + k)
        a = np.clip(xs - k - lo, 0, span)
        b = np.clip(xs + k - lo + 1, 0, span)
        if (prefix[b] - prefix[a]).max() >= beta * total:
            return k
    raise AssertionError("unreachable")
