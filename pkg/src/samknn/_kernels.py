"""Compiled inner loops.

Every distance in the package goes through ``dist_row``/``dist_matrix`` so that
the same pair of vectors always yields the same bits, whichever code path asks.
Neighbour orderings use the key (distance, index) throughout: on equal
distances the older sample wins.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def dist_row(X, q):
    n, d = X.shape
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(d):
            t = X[i, j] - q[j]
            s += t * t
        out[i] = np.sqrt(s)
    return out


@njit(cache=True)
def dist_matrix(A, B):
    na, d = A.shape
    nb = B.shape[0]
    out = np.empty((na, nb))
    for i in range(na):
        for r in range(nb):
            s = 0.0
            for j in range(d):
                t = A[i, j] - B[r, j]
                s += t * t
            out[i, r] = np.sqrt(s)
    return out


@njit(cache=True)
def aggregate(dists, targets, weighted):
    """Mean of neighbour targets; inverse-distance weighted on request."""
    n = dists.shape[0]
    if not weighted:
        s = 0.0
        for i in range(n):
            s += targets[i]
        return s / n
    n_zero = 0
    s_zero = 0.0
    for i in range(n):
        if dists[i] == 0.0:
            n_zero += 1
            s_zero += targets[i]
    if n_zero > 0:
        return s_zero / n_zero
    num = 0.0
    den = 0.0
    for i in range(n):
        w = 1.0 / dists[i]
        num += w * targets[i]
        den += w
    return num / den


@njit(cache=True)
def k_smallest(D, keys, k):
    """Positions of the k smallest (D, keys) pairs, sorted ascending."""
    n = D.shape[0]
    kk = min(k, n)
    pos = np.empty(kk, dtype=np.int64)
    cnt = 0
    for i in range(n):
        d = D[i]
        key = keys[i]
        if cnt == kk:
            last = pos[kk - 1]
            if d > D[last] or (d == D[last] and key >= keys[last]):
                continue
            cnt -= 1
        j = cnt
        while j > 0:
            p = pos[j - 1]
            if D[p] > d or (D[p] == d and keys[p] > key):
                pos[j] = p
                j -= 1
            else:
                break
        pos[j] = i
        cnt += 1
    return pos


@njit(cache=True)
def k_smallest_excluding(D, keys, k, skip):
    """Like ``k_smallest`` but ignoring position ``skip``."""
    n = D.shape[0]
    kk = min(k, n - 1)
    pos = np.empty(kk, dtype=np.int64)
    cnt = 0
    for i in range(n):
        if i == skip:
            continue
        d = D[i]
        key = keys[i]
        if cnt == kk:
            last = pos[kk - 1]
            if d > D[last] or (d == D[last] and key >= keys[last]):
                continue
            cnt -= 1
        j = cnt
        while j > 0:
            p = pos[j - 1]
            if D[p] > d or (D[p] == d and keys[p] > key):
                pos[j] = p
                j -= 1
            else:
                break
        pos[j] = i
        cnt += 1
    return pos


@njit(cache=True)
def staircase(D, y, k, weighted):
    """kNN predictions of one query for every suffix start of a window.

    ``D[p]`` is the distance from the query to window position ``p`` (positions
    in time order, the query lying after all of them).  Scanning the start
    ``s`` from the newest position backwards, the k-neighbour set among
    positions ``[s, len(D))`` only changes when a position enters it.  Returns
    ``(starts, preds, set_pos, set_dist)``: ``starts`` is descending,
    ``preds[t]`` is the prediction for every start in ``(starts[t+1],
    starts[t]]`` (``preds[-1]`` for every start ``<= starts[-1]``), and the set
    arrays hold the final neighbour set for start 0.
    """
    m = D.shape[0]
    kk = min(k, m)
    set_pos = np.empty(kk, dtype=np.int64)
    set_dist = np.empty(kk)
    cnt = 0
    starts = np.empty(m, dtype=np.int64)
    preds = np.empty(m)
    nb = 0
    tgt = np.empty(kk)
    for p in range(m - 1, -1, -1):
        d = D[p]
        if cnt == k:
            # p precedes every member, so it wins distance ties
            if d > set_dist[k - 1]:
                continue
            cnt -= 1
        j = 0
        while j < cnt and set_dist[j] < d:
            j += 1
        for r in range(cnt, j, -1):
            set_dist[r] = set_dist[r - 1]
            set_pos[r] = set_pos[r - 1]
        set_dist[j] = d
        set_pos[j] = p
        cnt += 1
        if cnt == k:
            for r in range(k):
                tgt[r] = y[set_pos[r]]
            starts[nb] = p
            preds[nb] = aggregate(set_dist, tgt, weighted)
            nb += 1
    return starts[:nb].copy(), preds[:nb].copy(), set_pos[:cnt].copy(), set_dist[:cnt].copy()


@njit(cache=True)
def pivot_radii(Xb, yb, k):
    """For each pivot of a reference set: (max kNN distance, max discounted target gap).

    Rows of ``Xb`` are in index order, so row position doubles as tie key.
    """
    nb = Xb.shape[0]
    dx = np.empty(nb)
    dy = np.empty(nb)
    keys = np.arange(nb)
    for i in range(nb):
        row = dist_row(Xb, Xb[i])
        nn = k_smallest_excluding(row, keys, k, i)
        r = 0.0
        for t in range(nn.shape[0]):
            if row[nn[t]] > r:
                r = row[nn[t]]
        dx[i] = r
        g = -np.inf
        if r > 0.0:
            for t in range(nn.shape[0]):
                w = abs(yb[i] - yb[nn[t]]) / np.exp(row[nn[t]] / r)
                if w > g:
                    g = w
        dy[i] = g
    return dx, dy


@njit(cache=True)
def clean_mask(Xa, ya, Xb, yb, dx, dy):
    """Survivor mask of A after cleaning by every pivot of B."""
    na = Xa.shape[0]
    nb = Xb.shape[0]
    keep = np.ones(na, dtype=np.bool_)
    for r in range(nb):
        rad = dx[r]
        if rad <= 0.0:
            continue
        lim = dy[r]
        d = dist_row(Xa, Xb[r])
        for i in range(na):
            if keep[i] and d[i] < rad:
                w = abs(yb[r] - ya[i]) / np.exp(d[i] / rad)
                if w > lim:
                    keep[i] = False
    return keep


@njit(cache=True)
def _rescan_two(X, alive, i, nn_pos, nn_dist, M):
    """Recompute the M nearest alive neighbours of row i (ties by position)."""
    n, d = X.shape
    cnt = 0
    for r in range(n):
        if r == i or not alive[r]:
            continue
        s = 0.0
        for j in range(d):
            t = X[i, j] - X[r, j]
            s += t * t
        dd = np.sqrt(s)
        if cnt == M:
            if dd >= nn_dist[i, M - 1]:
                continue
            cnt -= 1
        j2 = cnt
        while j2 > 0 and nn_dist[i, j2 - 1] > dd:
            nn_dist[i, j2] = nn_dist[i, j2 - 1]
            nn_pos[i, j2] = nn_pos[i, j2 - 1]
            j2 -= 1
        nn_dist[i, j2] = dd
        nn_pos[i, j2] = r
        cnt += 1
    for r in range(cnt, M):
        nn_pos[i, r] = -1
        nn_dist[i, r] = np.inf


_SCREEN_BLOCK = 512
_UNIT_ROUNDOFF = np.finfo(np.float64).eps / 2


def compress_order(X, n_remove, M):
    """Positions removed, in order, by repeatedly dropping the densest sample.

    Density of a sample is the sum of distances to its two nearest remaining
    neighbours; ties go to the smallest position.  Each row keeps a list of
    its M nearest alive neighbours which stays a complete prefix of the true
    neighbour ranking under deletions, so only rows whose list runs short are
    rescanned.

    The initial lists come from a Gram-matrix screen: squared distances from
    one BLAS product, a rounding margin that provably covers the exact values,
    and exact ``dist_row`` arithmetic for the rows that survive the screen.
    The lists therefore equal those of a full exact scan.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n, d = X.shape
    nn_pos = np.full((n, M), -1, dtype=np.int64)
    nn_dist = np.full((n, M), np.inf)
    if n > M + 1:
        Xc = X - X.mean(axis=0)
        sq = np.einsum("ij,ij->i", Xc, Xc)
        # bound on |screened - exact| squared distance, for any summation order
        margin = 8.0 * (d + 4) * _UNIT_ROUNDOFF * (sq + sq.max())
        for start in range(0, n, _SCREEN_BLOCK):
            G = Xc[start:start + _SCREEN_BLOCK] @ Xc.T
            _screened_lists(X, G, sq, margin, start, M, nn_pos, nn_dist)
    else:
        alive = np.ones(n, dtype=np.bool_)
        for i in range(n):
            _rescan_two(X, alive, i, nn_pos, nn_dist, M)
    return _compress_from_lists(X, n_remove, M, nn_pos, nn_dist)


@njit(cache=True)
def _screened_lists(X, G, sq, margin, start, M, nn_pos, nn_dist):
    n, d = X.shape
    top = np.empty(M)
    for b in range(G.shape[0]):
        i = start + b
        # M-th smallest screened squared distance
        cnt = 0
        for r in range(n):
            if r == i:
                continue
            g = sq[i] + sq[r] - 2.0 * G[b, r]
            if cnt == M:
                if g >= top[M - 1]:
                    continue
                cnt -= 1
            j2 = cnt
            while j2 > 0 and top[j2 - 1] > g:
                top[j2] = top[j2 - 1]
                j2 -= 1
            top[j2] = g
            cnt += 1
        limit = top[M - 1] + 2.0 * margin[i]
        cnt = 0
        for r in range(n):
            if r == i or sq[i] + sq[r] - 2.0 * G[b, r] > limit:
                continue
            s = 0.0
            for j in range(d):
                t = X[i, j] - X[r, j]
                s += t * t
            dd = np.sqrt(s)
            if cnt == M:
                if dd >= nn_dist[i, M - 1]:
                    continue
                cnt -= 1
            j2 = cnt
            while j2 > 0 and nn_dist[i, j2 - 1] > dd:
                nn_dist[i, j2] = nn_dist[i, j2 - 1]
                nn_pos[i, j2] = nn_pos[i, j2 - 1]
                j2 -= 1
            nn_dist[i, j2] = dd
            nn_pos[i, j2] = r
            cnt += 1


@njit(cache=True)
def _compress_from_lists(X, n_remove, M, nn_pos, nn_dist):
    n = X.shape[0]
    alive = np.ones(n, dtype=np.bool_)
    score = np.empty(n)
    for i in range(n):
        score[i] = _score_of(nn_pos, nn_dist, i, M)
    removed = np.empty(n_remove, dtype=np.int64)
    for step in range(n_remove):
        best = -1
        bs = np.inf
        for i in range(n):
            if alive[i] and score[i] < bs:
                bs = score[i]
                best = i
        if best < 0:
            return removed[:step].copy()
        removed[step] = best
        alive[best] = False
        for i in range(n):
            if not alive[i]:
                continue
            touched = False
            for t in range(M):
                if nn_pos[i, t] == best:
                    touched = True
                    break
            if not touched:
                continue
            # compact the list, dropping the removed neighbour
            w = 0
            for t in range(M):
                p = nn_pos[i, t]
                if p >= 0 and alive[p]:
                    nn_pos[i, w] = p
                    nn_dist[i, w] = nn_dist[i, t]
                    w += 1
            for t in range(w, M):
                nn_pos[i, t] = -2  # invalid: list is only a prefix now
                nn_dist[i, t] = np.inf
            if w < 2:
                _rescan_two(X, alive, i, nn_pos, nn_dist, M)
            score[i] = _score_of(nn_pos, nn_dist, i, M)
    return removed


@njit(cache=True)
def _score_of(nn_pos, nn_dist, i, M):
    s = 0.0
    c = 0
    for t in range(M):
        if nn_pos[i, t] >= 0:
            s += nn_dist[i, t]
            c += 1
            if c == 2:
                break
    return s


@njit(cache=True)
def window_residuals(X, y, k, weighted):
    """Squared prequential residuals inside a window (from scratch)."""
    m = X.shape[0]
    out = np.empty(max(m - k, 0))
    for j in range(k, m):
        D = dist_row(X[:j], X[j])
        keys = np.arange(j)
        nn = k_smallest(D, keys, k)
        dd = np.empty(k)
        tt = np.empty(k)
        for t in range(k):
            dd[t] = D[nn[t]]
            tt[t] = y[nn[t]]
        r = aggregate(dd, tt, weighted) - y[j]
        out[j - k] = r * r
    return out


@njit(cache=True)
def seq_sum(a):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i]
    return s
