"""Exact nearest-neighbor queries through a uniform spatial hash.

Both the hashed search and the brute-force scan compute squared distances
with the same expression, so their results agree bit for bit, including
which point wins a tie (lowest key, then lowest index).
"""

from __future__ import annotations

import numpy as np


def _sqdist(q: np.ndarray, p: np.ndarray) -> np.ndarray:
    return ((q[:, None, :] - p[None, :, :]) ** 2).sum(-1)


def _pick(d2: np.ndarray, keys: np.ndarray, index: np.ndarray):
    """Per row: min distance, then min key among ties, then min point index."""
    best = d2.min(axis=1)
    tied = d2 == best[:, None]
    big = np.iinfo(np.int64).max
    k = np.where(tied, keys[None, :], big)
    kbest = k.min(axis=1)
    winner = np.where(k == kbest[:, None], index[None, :], big).min(axis=1)
    return best, winner


def nearest_bruteforce(queries, points, keys=None, chunk: int = 2048):
    """O(|Q||P|) scan. Returns (squared distance, index into points)."""
    q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(p) == 0:
        raise ValueError("no points to search")
    keys = np.arange(len(p), dtype=np.int64) if keys is None else np.asarray(keys, dtype=np.int64)
    d_out = np.empty(len(q))
    i_out = np.empty(len(q), dtype=np.int64)
    for s in range(0, len(q), chunk):
        d, i = _pick(_sqdist(q[s:s + chunk], p), keys, np.arange(len(p)))
        d_out[s:s + chunk] = d
        i_out[s:s + chunk] = i
    return d_out, i_out


class SpatialHash:
    """Points bucketed into cubic cells of side ``cell``."""

    def __init__(self, points, keys=None, cell: float | None = None):
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        if len(p) == 0:
            raise ValueError("no points to index")
        self.points = p
        self.keys = np.arange(len(p), dtype=np.int64) if keys is None else np.asarray(keys, dtype=np.int64)
        self.origin = p.min(axis=0)
        span = p.max(axis=0) - self.origin
        if cell is None:
            # aim for a few points per occupied bucket
            vol = float(np.prod(np.maximum(span, span.max() * 1e-3 + 1e-12)))
            cell = (vol * 4.0 / len(p)) ** (1.0 / 3.0)
            cell = max(cell, float(span.max()) / 256.0, 1e-12)
        self.cell = float(cell)
        self.dims = np.floor(span / self.cell).astype(np.int64) + 1
        b = self._bucket(p)
        flat = self._flat(b)
        order = np.argsort(flat, kind="stable")
        self._order = order
        self._flat_sorted = flat[order]

    def _bucket(self, x: np.ndarray) -> np.ndarray:
        return np.floor((x - self.origin) / self.cell).astype(np.int64)

    def _flat(self, b: np.ndarray) -> np.ndarray:
        d = self.dims
        return b[..., 0] + d[0] * (b[..., 1] + d[1] * b[..., 2])

    def _gather(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Indices of points in buckets lo..hi (inclusive, clipped)."""
        lo = np.maximum(lo, 0)
        hi = np.minimum(hi, self.dims - 1)
        if (hi < lo).any():
            return np.zeros(0, dtype=np.int64)
        ys, zs = np.meshgrid(np.arange(lo[1], hi[1] + 1), np.arange(lo[2], hi[2] + 1), indexing="ij")
        row_start = lo[0] + self.dims[0] * (ys + self.dims[1] * zs)
        starts = np.searchsorted(self._flat_sorted, row_start.ravel(), side="left")
        ends = np.searchsorted(self._flat_sorted, row_start.ravel() + (hi[0] - lo[0]), side="right")
        segs = [self._order[a:b] for a, b in zip(starts, ends) if b > a]
        return np.concatenate(segs) if segs else np.zeros(0, dtype=np.int64)

    def query(self, queries):
        """Exact nearest neighbor for every query: (squared distance, point index)."""
        q = np.asarray(queries, dtype=np.float64).reshape(-1, 3)
        d_out = np.full(len(q), np.inf)
        i_out = np.full(len(q), -1, dtype=np.int64)
        if len(q) == 0:
            return d_out, i_out
        qb = self._bucket(q)
        _, group = np.unique(qb, axis=0, return_inverse=True)
        group = group.reshape(-1)
        order = np.argsort(group, kind="stable")
        first = np.searchsorted(group[order], np.arange(group.max() + 1))
        bounds = np.append(first, len(order))
        max_ring = int(np.max(np.maximum(np.abs(qb).max(0), np.abs(qb - self.dims + 1).max(0)))) + 1
        for g in range(len(first)):
            members = order[bounds[g]:bounds[g + 1]]
            b = qb[members[0]]
            pending = members
            # rings closer than the grid itself are empty; skip straight to it
            r = int(max(0, (-b).max(), (b - self.dims + 1).max()))
            while len(pending):
                cand = self._gather(b - r, b + r)
                qs = q[pending]
                if len(cand):
                    d2 = _sqdist(qs, self.points[cand])
                    best, idx = _pick(d2, self.keys[cand], cand)
                else:
                    best = np.full(len(pending), np.inf)
                    idx = np.full(len(pending), -1, dtype=np.int64)
                # distance from each query to the outside of the searched block
                lo_edge = self.origin + (b - r) * self.cell
                hi_edge = self.origin + (b + r + 1) * self.cell
                margin = np.minimum(qs - lo_edge, hi_edge - qs).min(axis=1)
                covered = r >= max_ring
                # strict: an equally distant point outside could carry a lower key
                done = covered | (np.sqrt(best) < margin * (1.0 - 1e-9))
                d_out[pending[done]] = best[done]
                i_out[pending[done]] = idx[done]
                pending = pending[~done]
                r += 1
        return d_out, i_out


def nearest(queries, points, keys=None):
    """Hashed exact nearest neighbor; same result as :func:`nearest_bruteforce`."""
    return SpatialHash(points, keys).query(queries)
