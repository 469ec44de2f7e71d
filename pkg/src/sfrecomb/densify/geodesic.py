"""Geodesic k-nearest-seed retrieval on the 4-connected pixel grid.

A step between neighboring pixels p and q costs
``step_cost + (c(p) + c(q)) / 2`` where ``c`` is the edge cost map, so image
boundaries act as barriers. Seeds are identified by their raster index
``y * W + x``; ties in distance are broken by that index, i.e. by ``(y, x)``.

Two retrieval routes are provided:

``knn_all``
    One multi-source pass that labels every pixel with its k nearest seeds.
    Each pixel is settled at most once per seed and at most k times in
    total. If seed s is among the k nearest of p along a shortest path
    through q, every seed closer to q than s is also closer to p, so s is
    among the k nearest of q as well; the pass is therefore exact up to
    floating-point summation order.

``knn_exact``
    A Dijkstra search per target that stops once k seeds are settled.
    Reference route for small images and tests.
"""

from __future__ import annotations

import numba as nb
import numpy as np

_OFFSETS = np.array([[-1, 0], [0, -1], [0, 1], [1, 0]], dtype=np.int64)


@nb.njit(inline="always")
def _before(hd, hs, i, j):
    if hd[i] < hd[j]:
        return True
    if hd[i] > hd[j]:
        return False
    return hs[i] < hs[j]


@nb.njit(inline="always")
def _swap(hd, hs, hp, i, j):
    hd[i], hd[j] = hd[j], hd[i]
    hs[i], hs[j] = hs[j], hs[i]
    hp[i], hp[j] = hp[j], hp[i]


@nb.njit(cache=True)
def _grow(a, n):
    b = np.empty(2 * a.shape[0], a.dtype)
    b[:n] = a[:n]
    return b


@nb.njit(cache=True)
def _sift_down(hd, hs, hp, n):
    i = 0
    while True:
        left = 2 * i + 1
        if left >= n:
            return
        m = left
        if left + 1 < n and _before(hd, hs, left + 1, left):
            m = left + 1
        if not _before(hd, hs, m, i):
            return
        _swap(hd, hs, hp, i, m)
        i = m


@nb.njit(cache=True)
def _sift_up(hd, hs, hp, i):
    while i > 0:
        parent = (i - 1) // 2
        if not _before(hd, hs, i, parent):
            return
        _swap(hd, hs, hp, i, parent)
        i = parent


@nb.njit(cache=True)
def _knn_all(cost, seed_mask, step, k):
    h, w = cost.shape
    n_pix = h * w
    labels = np.full((n_pix, k), -1, np.int64)
    dists = np.full((n_pix, k), np.inf)
    count = np.zeros(n_pix, np.int64)

    cap = max(1024, 4 * int(seed_mask.sum()))
    hd = np.empty(cap, np.float64)
    hs = np.empty(cap, np.int64)  # seed index, secondary key
    hp = np.empty(cap, np.int64)  # pixel index
    n = 0
    # zero-distance entries in increasing seed order already form a heap
    for p in range(n_pix):
        if seed_mask[p // w, p % w]:
            hd[n] = 0.0
            hs[n] = p
            hp[n] = p
            n += 1

    while n > 0:
        d = hd[0]
        s = hs[0]
        p = hp[0]
        n -= 1
        if n > 0:
            hd[0] = hd[n]
            hs[0] = hs[n]
            hp[0] = hp[n]
            _sift_down(hd, hs, hp, n)

        c = count[p]
        if c >= k:
            continue
        seen = False
        for j in range(c):
            if labels[p, j] == s:
                seen = True
                break
        if seen:
            continue
        labels[p, c] = s
        dists[p, c] = d
        count[p] = c + 1

        y = p // w
        x = p - y * w
        for t in range(4):
            yy = y + _OFFSETS[t, 0]
            xx = x + _OFFSETS[t, 1]
            if yy < 0 or yy >= h or xx < 0 or xx >= w:
                continue
            q = yy * w + xx
            cq = count[q]
            if cq >= k:
                continue
            seen = False
            for j in range(cq):
                if labels[q, j] == s:
                    seen = True
                    break
            if seen:
                continue
            if n == cap:
                hd = _grow(hd, n)
                hs = _grow(hs, n)
                hp = _grow(hp, n)
                cap = hd.shape[0]
            hd[n] = d + step + 0.5 * (cost[y, x] + cost[yy, xx])
            hs[n] = s
            hp[n] = q
            n += 1
            _sift_up(hd, hs, hp, n - 1)
    return labels, dists


@nb.njit(cache=True)
def _knn_exact(cost, seed_mask, step, targets, k):
    h, w = cost.shape
    n_pix = h * w
    n_t = targets.shape[0]
    labels = np.full((n_t, k), -1, np.int64)
    dists = np.full((n_t, k), np.inf)

    best = np.full(n_pix, np.inf)
    done = np.zeros(n_pix, np.bool_)
    touched = np.empty(n_pix, np.int64)
    cap = 1024
    hd = np.empty(cap, np.float64)
    hs = np.empty(cap, np.int64)  # pixel index doubles as tie-break key
    hp = np.empty(cap, np.int64)

    for ti in range(n_t):
        src = targets[ti]
        n_touched = 0
        best[src] = 0.0
        touched[n_touched] = src
        n_touched += 1
        hd[0] = 0.0
        hs[0] = src
        hp[0] = src
        n = 1
        found = 0
        while n > 0 and found < k:
            d = hd[0]
            p = hp[0]
            n -= 1
            if n > 0:
                hd[0] = hd[n]
                hs[0] = hs[n]
                hp[0] = hp[n]
                _sift_down(hd, hs, hp, n)
            if done[p]:
                continue
            done[p] = True
            y = p // w
            x = p - y * w
            if seed_mask[y, x]:
                labels[ti, found] = p
                dists[ti, found] = d
                found += 1
            for t in range(4):
                yy = y + _OFFSETS[t, 0]
                xx = x + _OFFSETS[t, 1]
                if yy < 0 or yy >= h or xx < 0 or xx >= w:
                    continue
                q = yy * w + xx
                if done[q]:
                    continue
                nd = d + step + 0.5 * (cost[y, x] + cost[yy, xx])
                if nd < best[q]:
                    if best[q] == np.inf:
                        touched[n_touched] = q
                        n_touched += 1
                    best[q] = nd
                    if n == cap:
                        hd = _grow(hd, n)
                        hs = _grow(hs, n)
                        hp = _grow(hp, n)
                        cap = hd.shape[0]
                    hd[n] = nd
                    hs[n] = q
                    hp[n] = q
                    n += 1
                    _sift_up(hd, hs, hp, n - 1)
        for j in range(n_touched):
            best[touched[j]] = np.inf
            done[touched[j]] = False
    return labels, dists


def _prepare(cost, seed_mask, step_cost):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    seed_mask = np.ascontiguousarray(seed_mask, dtype=np.bool_)
    if cost.shape != seed_mask.shape:
        raise ValueError(f"cost {cost.shape} and seed mask {seed_mask.shape} differ")
    if not step_cost > 0:
        raise ValueError("step_cost must be positive")
    return cost, seed_mask, float(step_cost)


def knn_all(cost: np.ndarray, seed_mask: np.ndarray, k: int, step_cost: float):
    """k nearest seeds of every pixel.

    Returns ``(labels, dists)`` of shape ``(H, W, k)``: seed raster indices
    (``-1`` past the number of seeds) and geodesic distances, each row sorted
    by ``(distance, index)``.
    """
    cost, seed_mask, step_cost = _prepare(cost, seed_mask, step_cost)
    labels, dists = _knn_all(cost, seed_mask, step_cost, int(k))
    h, w = cost.shape
    return labels.reshape(h, w, k), dists.reshape(h, w, k)


def knn_exact(cost: np.ndarray, seed_mask: np.ndarray, targets: np.ndarray, k: int, step_cost: float):
    """k nearest seeds of each target raster index, one Dijkstra search each.

    Returns ``(labels, dists)`` of shape ``(len(targets), k)``.
    """
    cost, seed_mask, step_cost = _prepare(cost, seed_mask, step_cost)
    targets = np.ascontiguousarray(targets, dtype=np.int64).ravel()
    return _knn_exact(cost, seed_mask, step_cost, targets, int(k))


def knn_targets(cost, seed_mask, targets, k, step_cost, exact=False):
    """k nearest seeds for selected targets via either route."""
    if exact:
        return knn_exact(cost, seed_mask, targets, k, step_cost)
    labels, dists = knn_all(cost, seed_mask, k, step_cost)
    flat = np.asarray(targets, dtype=np.int64).ravel()
    return labels.reshape(-1, k)[flat], dists.reshape(-1, k)[flat]
