"""Brute-force references, written without numpy/scipy so they share no code
path with the package."""
from __future__ import annotations

import itertools
import math
from collections import deque

EPS = 1e-9


def floyd_warshall(n, edges):
    INF = math.inf
    d = [[0.0 if i == j else INF for j in range(n)] for i in range(n)]
    for u, v, w in edges:
        if w < d[u][v]:
            d[u][v] = d[v][u] = float(w)
    for k in range(n):
        dk = d[k]
        for i in range(n):
            dik = d[i][k]
            if dik == INF:
                continue
            di = d[i]
            for j in range(n):
                if dik + dk[j] < di[j]:
                    di[j] = dik + dk[j]
    return d


def table(space):
    """Distances as nested Python lists."""
    return [[float(v) for v in row] for row in space.dist]


def hops(D, c, s):
    """BFS step counts from ``s`` in the threshold graph at scale ``c``."""
    n = len(D)
    dist = [math.inf] * n
    dist[s] = 0
    q = deque([s])
    while q:
        u = q.popleft()
        for v in range(n):
            if v != u and D[u][v] <= c + EPS and dist[v] == math.inf:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def least_upper_control(D, c, r):
    n = len(D)
    best = 0
    for s in range(n):
        h = hops(D, c, s)
        for t in range(n):
            if D[s][t] <= r + EPS:
                best = max(best, h[t] + 1)
    return best


def uniformity(Dsrc, Dtgt, img, k):
    n = len(Dsrc)
    return max((Dtgt[img[a]][img[b]] for a in range(n) for b in range(n) if Dsrc[a][b] <= k + EPS),
               default=0.0)


def injectivity(Dsrc, Dtgt, img, r):
    n = len(Dsrc)
    return max((Dsrc[a][b] for a in range(n) for b in range(n) if Dtgt[img[a]][img[b]] <= r + EPS),
               default=0.0)


def preimage_diameter(Dsrc, Dtgt, img, center, l):
    pre = [a for a in range(len(Dsrc)) if Dtgt[img[a]][center] <= l + EPS]
    return max((Dsrc[a][b] for a in pre for b in pre), default=0.0)


def triangle_ok(D, tol=EPS):
    n = len(D)
    return all(D[x][z] <= D[x][y] + D[y][z] + tol
               for x in range(n) for y in range(n) for z in range(n))


def min_cover_size(D, members, r):
    """Exact minimum number of ``r``-balls centred in ``members`` covering them."""
    members = list(members)
    for k in range(1, len(members) + 1):
        for centers in itertools.combinations(members, k):
            if all(any(D[c][m] <= r + EPS for c in centers) for m in members):
                return k
    return 0


def connectivity_threshold(D):
    """Least ``c`` among pairwise distances with one BFS component."""
    n = len(D)
    if n <= 1:
        return 0.0
    for c in sorted({D[i][j] for i in range(n) for j in range(n) if i != j}):
        if all(h < math.inf for h in hops(D, c, 0)):
            return c
    return math.inf
