"""Coarse rays: the ray criterion and ray extraction from an escaping sequence.

Extraction follows the level-set construction: ``d0`` counts c-path steps
from the base point, ``C_i`` is the i-th level, each level is covered by
``r0``-balls and the ball whose descendants keep most of the sequence tail is
kept.  "Descendant" means lying further along a minimal c-path from the base.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

from .geodesic import DisconnectedError, threshold_graph
from .maps import ControlTable, OutOfRangeError
from .metric import EPS, FiniteMetricSpace, _cover_indices


@dataclass(frozen=True)
class RaySequence:
    points: tuple
    step: float
    radius: float
    basepoint: object


@dataclass(frozen=True)
class RayCriterion:
    passed: bool
    path_ok: bool
    inequality_ok: bool
    uniform_ok: bool
    witness: tuple | None = None  # (i, j) of the first failing pair


def check_ray_criterion(seq, space: FiniteMetricSpace, c: float,
                        phi: ControlTable) -> RayCriterion:
    """Every window is a c-path and ``phi(d(x_i, x_j)) >= |i - j| + 1`` for all ``i < j``.

    Also reports the uniformity consequence ``d(x_i, x_j) <= c |i - j|``.
    Raises :class:`OutOfRangeError` when a distance exceeds the phi grid.
    """
    idx = space.indices(seq)
    m = len(idx)
    if m < 2:
        return RayCriterion(True, True, True, True)
    steps = space.pair_dist(idx[:-1], idx[1:])
    path_ok = bool(np.all(steps <= c + EPS))
    witness = None
    if not path_ok:
        k = int(np.argmax(steps > c + EPS))
        witness = (k, k + 1)
    D = space.block(idx, idx)
    if D.max() > phi.scales[-1] + EPS:
        raise OutOfRangeError(f"distance {D.max():g} exceeds the phi grid ({phi.scales[-1]:g})")
    grid = np.array(phi.scales)
    vals = np.array(phi.bounds)[np.searchsorted(grid, D - EPS, side="left")]
    gap = np.abs(np.arange(m)[:, None] - np.arange(m)[None, :])
    bad = np.argwhere(np.triu(vals < gap + 1 - EPS, 1))
    ineq_ok = len(bad) == 0
    if witness is None and not ineq_ok:
        witness = tuple(int(v) for v in bad[0])
    uniform_ok = bool(np.all(D <= c * gap + EPS))
    return RayCriterion(path_ok and ineq_ok, path_ok, ineq_ok, uniform_ok, witness)


@dataclass(frozen=True)
class LevelSets:
    basepoint: object
    c: float
    depth: np.ndarray  # d0 per point index (steps)
    levels: dict       # i -> labels in canonical order

    def level(self, i: int) -> list:
        return self.levels.get(i, [])


def _depths(space, base_idx, graph):
    from scipy.sparse.csgraph import shortest_path
    return shortest_path(graph, unweighted=True, directed=False, indices=base_idx)


def level_sets(space: FiniteMetricSpace, basepoint, c: float) -> LevelSets:
    """Partition by minimal c-path step count from the base point."""
    g = threshold_graph(space, c)
    d0 = _depths(space, space.index(basepoint), g)
    lost = np.nonzero(~np.isfinite(d0))[0]
    if len(lost):
        names = ", ".join(repr(space.points[i]) for i in lost[:10])
        raise DisconnectedError(f"{len(lost)} points unreachable from {basepoint!r} at "
                                f"c={c:g}: {names}{' ...' if len(lost) > 10 else ''}")
    d0 = d0.astype(np.int64)
    levels: dict[int, list] = {}
    for i, k in enumerate(d0):
        levels.setdefault(int(k), []).append(space.points[i])
    return LevelSets(basepoint, c, d0, levels)


def _successor_graph(graph: csr_matrix, d0: np.ndarray) -> csr_matrix:
    # u -> v when adjacent and one level deeper: edges of the minimal-path order
    coo = graph.tocoo()
    keep = d0[coo.col] == d0[coo.row] + 1
    return csr_matrix((np.ones(int(keep.sum()), dtype=np.int8), (coo.row[keep], coo.col[keep])),
                      shape=graph.shape)


def descendants(succ: csr_matrix, start: np.ndarray, within: np.ndarray) -> np.ndarray:
    """Points ``x`` in ``within`` with some start point ``y <= x`` (mask)."""
    reached = np.zeros(succ.shape[0], dtype=bool)
    frontier = np.zeros_like(reached)
    frontier[start] = True
    frontier &= within
    succ_t = succ.T.tocsr()
    while frontier.any():
        reached |= frontier
        nxt = (succ_t @ frontier.astype(np.int8)) > 0
        frontier = nxt & within & ~reached
    return reached


@dataclass(frozen=True)
class RayExtraction:
    ray: RaySequence
    constant: float
    covered_indices: tuple   # seq positions within r0 of the ray
    depth: int
    retained: tuple          # |V_i intersect tail| per level
    branch_sizes: tuple      # |V_i| per level


def escapes(space: FiniteMetricSpace, seq, basepoint) -> bool:
    """Finite unboundedness proxy: some member leaves ``B(base, ecc(base)/2)``."""
    row = space.distances_from(basepoint)
    return bool(row[space.indices(seq)].max() > row.max() / 2 + EPS)


def extract_ray(space: FiniteMetricSpace, seq, r0: float, c: float, basepoint=None,
                branch_rule: str = "tail_count") -> RayExtraction:
    """Extract a coarse ray following an escaping sequence.

    ``basepoint`` defaults to the first member of ``seq``.  At each level the
    members of ``C_i`` still in the current branch are covered greedily by
    ``r0``-balls; the ball whose descendants contain the most members of the
    sequence tail (its last half) wins, ties going to the earlier centre.
    ``branch_rule="max_depth"`` instead keeps the ball leading to the deepest
    tail member.
    """
    if branch_rule not in ("tail_count", "max_depth"):
        raise ValueError(f"unknown branch rule {branch_rule!r}")
    seq = list(seq)
    if not seq:
        raise ValueError("empty sequence")
    base = seq[0] if basepoint is None else basepoint
    if not escapes(space, seq, base):
        raise ValueError("sequence stays in B(base, ecc/2): bounded at this level")
    lv = level_sets(space, base, c)
    d0 = lv.depth
    g = threshold_graph(space, c)
    succ = _successor_graph(g, d0)

    seq_idx = space.indices(seq)
    tail = seq_idx[len(seq) // 2:]
    inside = np.ones(len(space), dtype=bool)   # V_{i-1}
    ray = [space.index(base)]
    retained, sizes = [], []
    depth = 0
    i = 1
    while True:
        alive = tail[inside[tail]]
        if not (d0[alive] >= i).any():
            break
        members = np.nonzero(inside & (d0 == i))[0]
        if len(members) == 0:
            raise ValueError(f"no branch retains tail members (depth reached {depth})")
        centers = _cover_indices(space, members, r0)
        best, best_key, best_mask = None, None, None
        for k, ctr in enumerate(centers):
            near = members[space.block([ctr], members)[0] <= r0 + EPS]
            mask = descendants(succ, near, inside)
            hits = tail[mask[tail]]
            if branch_rule == "tail_count":
                key = (len(hits), -k)
            else:
                key = (int(d0[hits].max()) if len(hits) else -1, len(hits), -k)
            if best_key is None or key > best_key:
                best, best_key, best_mask = ctr, key, mask
        if not (best_mask[tail]).any():
            raise ValueError(f"no branch retains tail members (depth reached {depth})")
        inside = best_mask
        ray.append(best)
        retained.append(int(inside[tail].sum()))
        sizes.append(int(inside.sum()))
        depth = i
        i += 1

    ray_labels = tuple(space.points[k] for k in ray)
    near_ray = space.block(seq_idx, np.array(ray)).min(axis=1) <= r0 + EPS
    return RayExtraction(RaySequence(ray_labels, c, r0, base), r0,
                         tuple(int(k) for k in np.nonzero(near_ray)[0]),
                         depth, tuple(retained), tuple(sizes))


def neighbourhood_indices(space: FiniteMetricSpace, seq, ray, radius: float) -> np.ndarray:
    """Positions in ``seq`` lying in ``E(X, radius)[ray]``."""
    near = space.block(space.indices(seq), space.indices(ray)).min(axis=1) <= radius + EPS
    return np.nonzero(near)[0]
