"""Independent reference computations used by the tests.

Nothing here calls the package's own transforms or search routines; each
function is a deliberately slow, direct route to the same quantity.
"""
import math

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


def modes(N):
    m = np.fft.fftfreq(N, 1.0 / N).round().astype(int)
    return m


def leray_truncate(c, N):
    """P = I - xi xi^T / |xi|^2 applied mode by mode, then the 2/3 cutoff."""
    K = (N - 1) // 3
    m = modes(N)
    out = np.zeros_like(c)
    for i in range(N):
        for j in range(N):
            x1, x2 = m[i], m[j]
            if (x1 == 0 and x2 == 0) or abs(x1) > K or abs(x2) > K:
                continue
            v = c[:, i, j]
            s = (x1 * v[0] + x2 * v[1]) / (x1 * x1 + x2 * x2)
            out[0, i, j] = v[0] - s * x1
            out[1, i, j] = v[1] - s * x2
    return out


def convolution_advect(cu, cv, N):
    """``P[(u . grad) v]`` by the explicit triadic sum over retained modes.

    Coefficients carry the sqrt(2)/N^2 normalization, so a product of two
    fields picks up a factor 1/sqrt(2).
    """
    m = modes(N)
    idx = {int(k): i for i, k in enumerate(m)}
    K = (N - 1) // 3
    active = [(i, j) for i in range(N) for j in range(N)
              if abs(m[i]) <= K and abs(m[j]) <= K and (m[i] or m[j])]
    out = np.zeros((2, N, N), dtype=complex)
    for (pi, pj) in active:
        up = cu[:, pi, pj]
        for (qi, qj) in active:
            q1, q2 = m[qi], m[qj]
            s1, s2 = m[pi] + q1, m[pj] + q2
            if abs(s1) > K or abs(s2) > K:
                continue
            g = 1j * (up[0] * q1 + up[1] * q2)      # (u_p . i q)
            out[:, idx[s1], idx[s2]] += g * cv[:, qi, qj]
    return leray_truncate(out / math.sqrt(2.0), N)


def hausdorff_double_loop(B, C):
    best = -1.0
    for b in B:
        inner = min(math.dist(b, c) for c in C)
        best = max(best, inner)
    return best


def cell_attractor_1d(branches, lower, upper, resolution):
    """Cell attractor of an affine IFS on ``[lower, upper]``.

    Edges ``i -> j`` whenever the exact image interval of cell ``i`` under a
    branch meets the interior of cell ``j``.  The attractor is the set of
    cells reachable from a cycle of the transition graph.
    """
    n = int(round((upper - lower) / resolution))
    a = lower + resolution * np.arange(n)
    b = a + resolution
    rows, cols = [], []
    J = np.arange(n)
    for s, t in branches:
        fa, fb = s * a + t, s * b + t
        lo, hi = np.minimum(fa, fb), np.maximum(fa, fb)
        glo, ghi = (lo - lower) / resolution, (hi - lower) / resolution
        hit = (J[None, :] < ghi[:, None]) & (J[None, :] + 1 > glo[:, None])
        r, c = np.nonzero(hit)
        rows.append(r)
        cols.append(c)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    G = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, lab = connected_components(G, directed=True, connection="strong")
    sizes = np.bincount(lab, minlength=ncomp)
    on_cycle = (sizes[lab] > 1) | (np.asarray(G[J, J]).ravel() > 0)
    reach = set(np.nonzero(on_cycle)[0].tolist())
    frontier = list(reach)
    adj = [G.indices[G.indptr[i]:G.indptr[i + 1]] for i in range(n)]
    while frontier:
        i = frontier.pop()
        for j in adj[i]:
            if j not in reach:
                reach.add(int(j))
                frontier.append(int(j))
    return sorted(reach)


def best_split_diameter(x, m):
    """Exact minimum over partitions of sorted 1-D points into ``m`` groups of
    the largest group diameter (optimal groups are contiguous runs)."""
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    if m >= n:
        return 0.0
    from itertools import combinations
    best = math.inf
    for cuts in combinations(range(1, n), m - 1):
        edges = (0,) + cuts + (n,)
        best = min(best, max(x[e - 1] - x[s] for s, e in zip(edges, edges[1:])))
    return best
