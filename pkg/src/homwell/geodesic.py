"""Transition constants from degenerate geodesics between the wells.

The constant is twice the infimum of the line integral of sqrt(W_H) between
the wells.  Discrete paths carry the cost

    sum_j 2 sqrt(W_H(midpoint_j)) |segment_j|,

a midpoint rule that needs no values at the wells themselves, where the
integrand merely vanishes.  The solver is an alternating scheme: gradient
descent on the interior nodes of the polyline, then resampling to equal
chord lengths so nodes cannot pile up in the wells and fake a cheap path.
A lattice Dijkstra bound serves as an independent upper oracle.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from homwell.potential import default_truncation_radius, truncate
from homwell import homogenize as _hz

__all__ = [
    "GeodesicResult",
    "straight_path",
    "path_cost",
    "resample_path",
    "minimize_KH",
    "dijkstra_oracle",
    "kh_1d",
    "verify_truncation_invariance",
    "TruncationInvariance",
]

_SQRT_FLOOR = 1e-18


@dataclass
class GeodesicResult:
    kh: float
    path: np.ndarray
    iterations: int
    converged: bool
    max_norm: float
    cost_history: list = field(default_factory=list, repr=False)


def straight_path(a, b, node_count=128):
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    t = np.linspace(0.0, 1.0, node_count + 1)[:, None]
    return (1.0 - t) * a[None, :] + t * b[None, :]


def path_cost(nodes, hp):
    """Discrete geodesic cost of a polyline under sqrt(W_H) weight.

    Summation is order-independent (math.fsum), so reversing the path
    reproduces the cost bit for bit.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim != 2 or nodes.shape[0] < 2:
        raise ValueError("path needs at least two nodes of shape (count, d)")
    segs = nodes[1:] - nodes[:-1]
    lengths = np.linalg.norm(segs, axis=-1)
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    vals = np.sqrt(np.maximum(hp(mids), 0.0))
    return math.fsum((2.0 * vals * lengths).tolist())


def resample_path(nodes, node_count=None, tol=1e-9, max_passes=80):
    """Redistribute nodes to equal chord lengths along the polyline.

    Arclength resampling is iterated because each pass cuts corners
    slightly; the fixed point has equal consecutive chords, which is the
    gauge the descent step relies on.
    """
    nodes = np.asarray(nodes, dtype=float)
    if node_count is None:
        node_count = nodes.shape[0] - 1
    out = nodes
    for _ in range(max_passes):
        segs = out[1:] - out[:-1]
        lengths = np.linalg.norm(segs, axis=-1)
        total = lengths.sum()
        if total <= 0.0:
            return np.repeat(nodes[:1], node_count + 1, axis=0)
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        targets = np.linspace(0.0, total, node_count + 1)
        fresh = np.stack([np.interp(targets, cum, out[:, k]) for k in range(out.shape[1])], axis=-1)
        fresh[0] = nodes[0]
        fresh[-1] = nodes[-1]
        out = fresh
        seg2 = np.linalg.norm(out[1:] - out[:-1], axis=-1)
        mean = seg2.mean()
        if mean == 0.0 or np.max(np.abs(seg2 - mean)) <= tol * mean:
            break
        node_count = out.shape[0] - 1
    return out


def _cost_gradient(nodes, hp):
    segs = nodes[1:] - nodes[:-1]
    lengths = np.linalg.norm(segs, axis=-1)
    safe = np.maximum(lengths, 1e-300)
    dirs = segs / safe[:, None]
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    w = np.maximum(hp(mids), 0.0)
    s = np.sqrt(w)
    gw = hp.gradient(mids)
    pot = np.where(s[:, None] > _SQRT_FLOOR, gw * (lengths / np.maximum(2.0 * s, _SQRT_FLOOR))[:, None], 0.0)
    # node i collects segment i-1 (forward sign) and segment i (backward sign)
    grad = np.zeros_like(nodes)
    grad[1:] += pot + 2.0 * s[:, None] * dirs
    grad[:-1] += pot - 2.0 * s[:, None] * dirs
    return grad[1:-1]


def minimize_KH(hp, a=None, b=None, node_count=128, tol=1e-8, max_iter=4000,
                seed=0, jitter=0.05, radius=None):
    """String-method estimate of the transition constant between a and b.

    Parameters
    ----------
    hp : HomogenizedPotential (or any callable with .gradient, .wells, .d)
    a, b : endpoints, defaulting to the wells of hp.
    node_count : segments in the polyline.
    tol : relative cost decrease over a 10-iteration window that counts as
        converged.
    jitter : transverse perturbation of the straight initial path, as a
        fraction of |b - a|; breaks symmetry so curved geodesics are found.
    radius : ball that the path must stay inside (default: the truncation
        radius recipe for the wells).  Leaving it raises, loudly, since the
        constant would then be untrusted.

    Returns
    -------
    GeodesicResult
    """
    wa, wb = hp.wells
    a = wa if a is None else np.atleast_1d(np.asarray(a, dtype=float))
    b = wb if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    if radius is None:
        radius = 2.0 * float(np.linalg.norm(a) + np.linalg.norm(b) + np.linalg.norm(b - a))

    if np.array_equal(a, b):
        path = np.repeat(a[None, :], node_count + 1, axis=0)
        return GeodesicResult(kh=0.0, path=path, iterations=0, converged=True,
                              max_norm=float(np.linalg.norm(a)), cost_history=[0.0])

    nodes = straight_path(a, b, node_count)
    rng = np.random.default_rng(seed)
    span = float(np.linalg.norm(b - a))
    if nodes.shape[1] > 1 and jitter > 0.0:
        axis = (b - a) / span
        noise = rng.normal(size=(node_count - 1, nodes.shape[1]))
        noise -= np.outer(noise @ axis, axis)
        nodes[1:-1] += jitter * span * noise
        nodes = resample_path(nodes)

    cost = path_cost(nodes, hp)
    history = [cost]
    converged = False
    window = 10
    iterations = 0

    for iterations in range(1, max_iter + 1):
        grad = _cost_gradient(nodes, hp)
        mean_chord = span / node_count if span > 0 else 1.0
        gmax = float(np.max(np.linalg.norm(grad, axis=-1))) if grad.size else 0.0
        if gmax == 0.0:
            converged = True
            break
        step = 0.1 * mean_chord / gmax
        accepted = False
        for _ in range(40):
            cand = nodes.copy()
            cand[1:-1] -= step * grad
            cand = resample_path(cand)
            c = path_cost(cand, hp)
            if c < cost:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True
            break
        nodes, cost = cand, c
        history.append(cost)
        if len(history) > window:
            drop = history[-window - 1] - history[-1]
            if drop <= tol * max(abs(history[-1]), 1e-300):
                converged = True
                break

    max_norm = float(np.max(np.linalg.norm(nodes, axis=-1)))
    if max_norm > radius:
        raise RuntimeError(
            f"geodesic path reached |p| = {max_norm:.3g} outside the ball of radius {radius:.3g}; "
            "enlarge the truncation radius before trusting this constant")
    return GeodesicResult(kh=cost, path=nodes, iterations=iterations,
                          converged=converged, max_norm=max_norm, cost_history=history)


def dijkstra_oracle(hp, a=None, b=None, box=None, per_axis=201, neighborhood=2):
    """Shortest-path upper bound for the transition constant on a state lattice.

    Edges join nodes within the given Chebyshev neighborhood order; each
    edge weighs 2 sqrt(W_H(edge midpoint)) times its length.  Ties pop in
    lexicographic node order, so the result is bit-reproducible.  Only
    dimensions up to 3 are supported; the lattice is dense by design.
    """
    d = hp.d
    if d > 3:
        raise ValueError("lattice oracle supports d <= 3")
    wa, wb = hp.wells
    a = wa if a is None else np.atleast_1d(np.asarray(a, dtype=float))
    b = wb if b is None else np.atleast_1d(np.asarray(b, dtype=float))
    if box is None:
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        margin = 0.5 * float(np.linalg.norm(b - a))
        box = np.stack([lo - margin, hi + margin], axis=-1)
    box = np.asarray(box, dtype=float)
    axes = [np.linspace(box[i, 0], box[i, 1], per_axis) for i in range(d)]
    spacing = np.array([ax[1] - ax[0] for ax in axes])

    def snap(p):
        return tuple(int(np.argmin(np.abs(axes[i] - p[i]))) for i in range(d))

    start = snap(a)
    goal = snap(b)
    shape = (per_axis,) * d

    offsets = []
    for off in np.ndindex(*([2 * neighborhood + 1] * d)):
        o = tuple(v - neighborhood for v in off)
        if any(o):
            offsets.append(o)
    offsets = np.array(offsets, dtype=np.int64)
    offset_len = np.linalg.norm(offsets * spacing, axis=-1)

    dist = np.full(shape, np.inf)
    done = np.zeros(shape, dtype=bool)
    dist[start] = 0.0
    heap = [(0.0, np.ravel_multi_index(start, shape))]
    while heap:
        du, flat = heapq.heappop(heap)
        u = np.unravel_index(flat, shape)
        if done[u]:
            continue
        done[u] = True
        if u == goal:
            break
        nbrs = np.asarray(u, dtype=np.int64) + offsets
        ok = np.all((nbrs >= 0) & (nbrs < per_axis), axis=-1)
        nbrs_ok = nbrs[ok]
        xu = np.array([axes[i][u[i]] for i in range(d)])
        xv = np.stack([axes[i][nbrs_ok[:, i]] for i in range(d)], axis=-1)
        mids = 0.5 * (xu[None, :] + xv)
        w = 2.0 * np.sqrt(np.maximum(hp(mids), 0.0)) * offset_len[ok]
        nd = du + w
        for row, cand in zip(nbrs_ok, nd):
            v = tuple(row)
            if not done[v] and cand < dist[v]:
                dist[v] = cand
                heapq.heappush(heap, (cand, np.ravel_multi_index(v, shape)))
    return float(dist[goal])


def kh_1d(hp, epsabs=1e-10):
    """Closed-form reduction for scalar states: 2 * integral of sqrt(W_H) between the wells.

    In one dimension any back-and-forth in a path only adds cost, so the
    monotone traversal is optimal and the infimum is this integral.
    """
    if hp.d != 1:
        raise ValueError("kh_1d needs a scalar-state potential")
    a, b = hp.wells
    lo, hi = sorted((float(a[0]), float(b[0])))

    def integrand(s):
        return math.sqrt(max(hp(np.array([s])), 0.0))

    val, _ = quad(integrand, lo, hi, epsabs=epsabs, epsrel=1e-10, limit=200)
    return 2.0 * val


@dataclass
class TruncationInvariance:
    kh: float
    kh_truncated: float
    difference: float
    cap: float
    radius: float
    max_norm: float


def verify_truncation_invariance(spec, radius=None, node_count=128, seed=0, tol=1e-8,
                                 safety=1.05):
    """Run the geodesic solver under W and under min(W, M) with shared seeds.

    When the optimal path stays inside the truncation ball the two constants
    agree; the report carries both values and the observed gap.
    """
    if radius is None:
        radius = default_truncation_radius(spec)
    tp = truncate(spec, radius, safety=safety)
    hp = _hz.homogenized(spec)
    hp_t = _hz.homogenized(tp)
    r1 = minimize_KH(hp, node_count=node_count, seed=seed, tol=tol, radius=radius)
    r2 = minimize_KH(hp_t, node_count=node_count, seed=seed, tol=tol, radius=radius)
    return TruncationInvariance(kh=r1.kh, kh_truncated=r2.kh,
                                difference=abs(r1.kh - r2.kh), cap=tp.cap,
                                radius=radius, max_norm=max(r1.max_norm, r2.max_norm))
