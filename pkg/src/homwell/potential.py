"""Heterogeneous double-well potentials of multiplicative form W(x, p) = m(x) * W0(p).

The family is deliberately narrow.  A periodic scalar modulation m, bounded
between positive constants, multiplies a fixed double-well base W0 that
vanishes exactly at two wells a and b.  Structural requirements (periodicity
in x, two-point zero set, q-growth in p, local Lipschitz bounds in p) are
then inherited from the two factors separately, which keeps validation
honest and cheap.

All evaluators are vectorized: state points p have shape (..., d), sample
locations x have shape (..., dim_x), and results drop the trailing axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

__all__ = [
    "BaseWell",
    "QuarticScalar",
    "QuarticVector",
    "QuadraticProduct",
    "BASE_WELLS",
    "Modulation",
    "ConstantModulation",
    "SineModulation",
    "CheckerboardModulation",
    "RotatedModulation",
    "make_modulation",
    "PotentialSpec",
    "make_potential",
    "eval_W",
    "eval_gradW_p",
    "default_truncation_radius",
    "truncate",
    "TruncatedPotential",
    "validate_hypotheses",
    "HypothesisReport",
]


def _as_points(p, d):
    """Coerce p to an (..., d) float array.  Scalars are allowed when d == 1."""
    arr = np.asarray(p, dtype=float)
    if d == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., None]
    if arr.shape[-1] != d:
        raise ValueError(f"state points must have trailing dimension {d}, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# double-well bases


class BaseWell:
    """Smooth base W0 >= 0 with zero set exactly {a, b}."""

    name = "base"

    def __init__(self, a, b):
        a = np.atleast_1d(np.asarray(a, dtype=float))
        b = np.atleast_1d(np.asarray(b, dtype=float))
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("wells must be two vectors of equal dimension")
        if np.array_equal(a, b):
            raise ValueError("wells must be distinct")
        self.a = a
        self.b = b
        self.d = a.size

    def value(self, p):
        raise NotImplementedError

    def gradient(self, p):
        raise NotImplementedError

    def grad_norm_bound(self, radius):
        """Upper bound for sup of |grad W0| over the ball |p| <= radius."""
        raise NotImplementedError

    def growth_coeff(self):
        """Limit of W0(p) / |p|^4 as |p| grows."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(a={self.a.tolist()}, b={self.b.tolist()})"


class QuarticScalar(BaseWell):
    """W0(p) = (p - a)^2 (p - b)^2 for scalar p.  Equals (1 - p^2)^2 at wells -1, 1."""

    name = "quartic_scalar"

    def __init__(self, a, b):
        super().__init__(a, b)
        if self.d != 1:
            raise ValueError("quartic_scalar takes scalar wells")

    def value(self, p):
        x = _as_points(p, 1)[..., 0]
        return ((x - self.a[0]) * (x - self.b[0])) ** 2

    def gradient(self, p):
        x = _as_points(p, 1)[..., 0]
        g = 2.0 * (x - self.a[0]) * (x - self.b[0]) * (2.0 * x - self.a[0] - self.b[0])
        return g[..., None]

    def grad_norm_bound(self, radius):
        A, B = abs(self.a[0]), abs(self.b[0])
        return 2.0 * (radius + A) * (radius + B) * (2.0 * radius + A + B)

    def growth_coeff(self):
        return 1.0


class QuadraticProduct(BaseWell):
    """W0(p) = |p - a|^2 |p - b|^2, the two-well quadratic product in any dimension."""

    name = "quadratic_product"

    def value(self, p):
        pp = _as_points(p, self.d)
        ra = np.sum((pp - self.a) ** 2, axis=-1)
        rb = np.sum((pp - self.b) ** 2, axis=-1)
        return ra * rb

    def gradient(self, p):
        pp = _as_points(p, self.d)
        da = pp - self.a
        db = pp - self.b
        ra = np.sum(da**2, axis=-1, keepdims=True)
        rb = np.sum(db**2, axis=-1, keepdims=True)
        return 2.0 * da * rb + 2.0 * db * ra

    def grad_norm_bound(self, radius):
        A = float(np.linalg.norm(self.a))
        B = float(np.linalg.norm(self.b))
        return 2.0 * (radius + A) * (radius + B) * (2.0 * radius + A + B)

    def growth_coeff(self):
        return 1.0


class QuarticVector(QuadraticProduct):
    """Quadratic product normalized so the section along the well axis is (1 - t^2)^2.

    With half-separation l = |b - a| / 2 the potential is |p-a|^2 |p-b|^2 / l^4;
    for scalar wells -1, 1 this reduces to the quartic above.
    """

    name = "quartic_vector"

    def __init__(self, a, b):
        super().__init__(a, b)
        self._inv_l4 = (2.0 / float(np.linalg.norm(self.b - self.a))) ** 4

    def value(self, p):
        return super().value(p) * self._inv_l4

    def gradient(self, p):
        return super().gradient(p) * self._inv_l4

    def grad_norm_bound(self, radius):
        return super().grad_norm_bound(radius) * self._inv_l4

    def growth_coeff(self):
        return self._inv_l4


BASE_WELLS = {
    "quartic_scalar": QuarticScalar,
    "quartic_vector": QuarticVector,
    "quadratic_product": QuadraticProduct,
}


# ---------------------------------------------------------------------------
# periodic modulations (unit cell [0,1)^dim, 1-periodic along every axis)


class Modulation:
    """Scalar unit-periodic modulation with known bounds and, when closed-form, mean."""

    name = "modulation"

    m_min: float
    m_max: float

    def value(self, y):
        raise NotImplementedError

    def mean_exact(self) -> Optional[float]:
        return None

    def scaled(self, c):
        raise NotImplementedError

    @staticmethod
    def _wrap(y):
        return np.mod(np.asarray(y, dtype=float), 1.0)


class ConstantModulation(Modulation):
    name = "constant"

    def __init__(self, value=1.0):
        value = float(value)
        self.c = value
        self.m_min = value
        self.m_max = value

    def value(self, y):
        y = np.asarray(y, dtype=float)
        return np.full(y.shape[:-1], self.c)

    def mean_exact(self):
        return self.c

    def scaled(self, c):
        return ConstantModulation(self.c * c)


class SineModulation(Modulation):
    """m(y) = scale * (1 + alpha * sin(2 pi y_1)), |alpha| < 1 so the bound stays positive."""

    name = "sine"

    def __init__(self, alpha, scale=1.0):
        alpha = float(alpha)
        scale = float(scale)
        if not abs(alpha) < 1.0:
            raise ValueError("sine modulation needs |alpha| < 1")
        if scale <= 0.0:
            raise ValueError("scale must be positive")
        self.alpha = alpha
        self.scale = scale
        self.m_min = scale * (1.0 - abs(alpha))
        self.m_max = scale * (1.0 + abs(alpha))

    def value(self, y):
        yy = self._wrap(y)
        return self.scale * (1.0 + self.alpha * np.sin(2.0 * np.pi * yy[..., 0]))

    def mean_exact(self):
        return self.scale

    def scaled(self, c):
        return SineModulation(self.alpha, self.scale * c)


class CheckerboardModulation(Modulation):
    """Piecewise-constant checkerboard on half-cells of side 1/2.

    The value is v1 on cells of even parity and v2 on odd parity; both phases
    occupy exactly half of the unit cell, so the mean is (v1 + v2) / 2.
    Quadrature against this modulation must sample away from the half-integer
    discontinuity set.
    """

    name = "checkerboard"

    def __init__(self, v1, v2):
        self.v1 = float(v1)
        self.v2 = float(v2)
        self.m_min = min(self.v1, self.v2)
        self.m_max = max(self.v1, self.v2)

    def value(self, y):
        yy = self._wrap(y)
        parity = np.sum(np.floor(2.0 * yy).astype(np.int64), axis=-1) % 2
        return np.where(parity == 0, self.v1, self.v2)

    def mean_exact(self):
        return 0.5 * (self.v1 + self.v2)

    def scaled(self, c):
        return CheckerboardModulation(self.v1 * c, self.v2 * c)


class RotatedModulation(Modulation):
    """Another modulation seen through a planar rotation: m'(y) = m(Q y).

    Q maps the vertical direction e2 to (sin theta, cos theta), so solving a
    transition problem with a horizontal interface against m' is the same as
    tilting the interface normal to angle theta against the original pattern.
    That keeps the interface on the midline of an axis-aligned strip, away
    from box corners, for any angle.

    Bounds and the infinite-volume mean are rotation invariant, so they
    delegate to the wrapped modulation.  The wrapped pattern is generally not
    unit-periodic in the grid axes (its period lattice is rotated), so the
    exact mean is the only homogenization route that stays valid; every
    shipped modulation provides one.
    """

    name = "rotated"

    def __init__(self, inner, theta):
        self.inner = inner
        self.theta = float(theta)
        c, s = np.cos(self.theta), np.sin(self.theta)
        self._q = np.array([[c, s], [-s, c]])
        self.m_min = inner.m_min
        self.m_max = inner.m_max

    def value(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != 2:
            raise ValueError("rotated modulation is two dimensional")
        return self.inner.value(y @ self._q.T)

    def mean_exact(self):
        return self.inner.mean_exact()

    def scaled(self, c):
        return RotatedModulation(self.inner.scaled(c), self.theta)


_MODULATION_PARAMS = {
    "constant": {"value"},
    "sine": {"alpha", "scale"},
    "checkerboard": {"values"},
}


def make_modulation(name, **params):
    if name not in _MODULATION_PARAMS:
        raise ValueError(f"unknown modulation {name!r}")
    extra = set(params) - _MODULATION_PARAMS[name]
    if extra:
        raise ValueError(f"modulation {name!r} does not take {sorted(extra)}")
    if name == "constant":
        return ConstantModulation(params.get("value", 1.0))
    if name == "sine":
        return SineModulation(params.get("alpha", 0.5), params.get("scale", 1.0))
    values = params.get("values", (1.0, 2.0))
    return CheckerboardModulation(values[0], values[1])


# ---------------------------------------------------------------------------
# the assembled potential


@dataclass(frozen=True)
class PotentialSpec:
    """W(x, p) = m(x) * W0(p) with unit-periodic m and double-well W0.

    Attributes
    ----------
    base : BaseWell
        The double-well factor; carries the wells a, b.
    modulation : Modulation
        Periodic in every coordinate direction with period 1.
    dim_x : int
        Spatial dimension of the modulation argument.
    growth_exponent : float
        q in the two-sided growth bound (1/C) |p|^q - C <= W <= C (1 + |p|^q).
    growth_constant : float
        A C valid for the bound above; computed at construction.
    """

    base: BaseWell
    modulation: Modulation
    dim_x: int
    growth_exponent: float = 4.0
    growth_constant: float = 0.0

    @property
    def wells(self):
        return self.base.a, self.base.b

    @property
    def d(self):
        return self.base.d

    def modulation_at(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim_x:
            raise ValueError(f"x must have trailing dimension {self.dim_x}")
        return self.modulation.value(x)

    def density(self, x, p):
        """W(x, p) for broadcastable batches of x and p."""
        return self.modulation_at(x) * self.base.value(p)

    def grad_p(self, x, p):
        m = self.modulation_at(x)
        return m[..., None] * self.base.gradient(p)

    def lipschitz_constant(self, radius):
        """Bound for the p-Lipschitz constant of W, uniform in x, on |p| <= radius."""
        return self.modulation.m_max * self.base.grad_norm_bound(radius)

    def lower_bound_witness(self):
        """A homogeneous W_c <= W with the same zero set, when the modulation allows one."""
        if self.modulation.m_min <= 0.0:
            return None
        m_min = self.modulation.m_min
        return lambda p: m_min * self.base.value(p)

    def scaled(self, c):
        """The potential c * W, realized by scaling the modulation."""
        if c <= 0.0:
            raise ValueError("scale must be positive")
        spec = replace(self, modulation=self.modulation.scaled(c))
        return replace(spec, growth_constant=_growth_constant(spec.base, spec.modulation, spec.growth_exponent))


def _growth_constant(base, modulation, q):
    # Numerical sweep for a C making the two-sided q-growth bound hold; the
    # asymptotic ratio W0/|p|^q is known per family, so a radial sample plus
    # margin is enough.
    radii = np.linspace(0.0, 8.0 * (1.0 + np.linalg.norm(base.a) + np.linalg.norm(base.b)), 400)[1:]
    if base.d == 1:
        pts = np.concatenate([radii, -radii])[:, None]
    else:
        rng = np.random.default_rng(0)
        dirs = rng.normal(size=(64, base.d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        pts = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, base.d)
    w0 = base.value(pts)
    norm_q = np.linalg.norm(pts, axis=-1) ** q
    upper = np.max(modulation.m_max * w0 / (1.0 + norm_q))
    upper = max(upper, modulation.m_max * base.growth_coeff())
    # lower bound: smallest C with (1/C)|p|^q - C <= m_min W0 everywhere
    mw = max(modulation.m_min, 0.0) * w0
    root = 0.5 * (-mw + np.sqrt(mw**2 + 4.0 * norm_q))
    lower = np.max(root)
    return 2.0 * float(max(upper, lower, 1.0))


def make_potential(base_well="quartic_scalar", wells=(-1.0, 1.0), modulation="constant",
                   modulation_params=None, dim_x=2):
    """Build a PotentialSpec from registry names.

    Parameters
    ----------
    base_well : str
        One of BASE_WELLS.
    wells : pair
        The two wells a, b (scalars for d = 1, sequences otherwise).
    modulation : str or Modulation
        Registry name or ready-made modulation object.
    modulation_params : dict, optional
        Parameters for the named modulation.
    dim_x : int
        Spatial dimension of the heterogeneity.
    """
    try:
        cls = BASE_WELLS[base_well]
    except KeyError:
        raise ValueError(f"unknown base well {base_well!r}") from None
    base = cls(wells[0], wells[1])
    if isinstance(modulation, Modulation):
        mod = modulation
    else:
        mod = make_modulation(modulation, **(modulation_params or {}))
    spec = PotentialSpec(base=base, modulation=mod, dim_x=int(dim_x))
    return replace(spec, growth_constant=_growth_constant(base, mod, spec.growth_exponent))


def eval_W(spec, x, p):
    """Pointwise W(x, p).  x wraps through the unit cell inside the modulation."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        if spec.dim_x != 1:
            raise ValueError("scalar x only valid for dim_x = 1")
        x = x[None]
    out = spec.density(x, _as_points(p, spec.d))
    return float(out) if out.ndim == 0 else out


def eval_gradW_p(spec, x, p):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        if spec.dim_x != 1:
            raise ValueError("scalar x only valid for dim_x = 1")
        x = x[None]
    return spec.grad_p(x, _as_points(p, spec.d))


# ---------------------------------------------------------------------------
# truncation


def default_truncation_radius(spec):
    """Radius recipe 2 (|a| + |b| + |a - b|); generous for every shipped family."""
    a, b = spec.wells
    return 2.0 * float(np.linalg.norm(a) + np.linalg.norm(b) + np.linalg.norm(a - b))


@dataclass(frozen=True)
class TruncatedPotential:
    """W~ = min(W, M) with M an essential sup of W over the ball |p| <= R.

    The cap keeps W~ globally Lipschitz in p while leaving values on the
    well region untouched, so transition constants computed from W~ agree
    with the untruncated ones whenever optimal paths stay inside the ball.
    """

    inner: PotentialSpec
    radius: float
    cap: float

    @property
    def base(self):
        return self.inner.base

    @property
    def modulation(self):
        return self.inner.modulation

    @property
    def wells(self):
        return self.inner.wells

    @property
    def d(self):
        return self.inner.d

    @property
    def dim_x(self):
        return self.inner.dim_x

    def density(self, x, p):
        return np.minimum(self.inner.density(x, p), self.cap)

    def grad_p(self, x, p):
        raw = self.inner.density(x, p)
        g = self.inner.grad_p(x, p)
        return np.where(raw[..., None] < self.cap, g, 0.0)

    def lipschitz_global(self):
        """Global p-Lipschitz bound for W~: the cap freezes W outside a finite ball."""
        m_max = self.inner.modulation.m_max
        if m_max <= 0.0:
            return 0.0
        level = self.cap / m_max
        r = self._radius_exceeding(level)
        return m_max * self.inner.base.grad_norm_bound(r)

    def _radius_exceeding(self, level):
        base = self.inner.base
        r = max(self.radius, 1.0)
        for _ in range(200):
            if self._min_on_sphere(base, r) >= level:
                return r
            r *= 1.25
        return r

    @staticmethod
    def _min_on_sphere(base, r):
        if base.d == 1:
            pts = np.array([[r], [-r]])
        else:
            rng = np.random.default_rng(1)
            dirs = rng.normal(size=(128, base.d))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
            pts = r * dirs
        return float(np.min(base.value(pts)))


def truncate(spec, radius=None, cell_resolution=32, p_resolution=101, safety=1.05):
    """Cap the potential at its sampled sup over |p| <= radius.

    The cap M is max of W over a deterministic lattice: unit-cell midpoints in
    x crossed with a uniform p-grid restricted to the ball, inflated by the
    safety factor to absorb the lattice gap.  radius must cover both wells.
    """
    if radius is None:
        radius = default_truncation_radius(spec)
    radius = float(radius)
    a, b = spec.wells
    need = max(np.linalg.norm(a), np.linalg.norm(b))
    if radius < need:
        raise ValueError(f"truncation radius {radius} does not contain the wells (need >= {need})")
    if safety < 1.0:
        raise ValueError("safety factor must be >= 1")

    axes = [(np.arange(cell_resolution) + 0.5) / cell_resolution] * spec.dim_x
    xs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, spec.dim_x)
    m_vals = spec.modulation_at(xs)
    m_top = float(np.max(m_vals))

    grid = np.linspace(-radius, radius, p_resolution)
    ps = np.stack(np.meshgrid(*([grid] * spec.d), indexing="ij"), axis=-1).reshape(-1, spec.d)
    ps = ps[np.linalg.norm(ps, axis=-1) <= radius]
    w_top = float(np.max(spec.base.value(ps)))

    cap = safety * m_top * w_top
    return TruncatedPotential(inner=spec, radius=radius, cap=cap)


# ---------------------------------------------------------------------------
# hypothesis validation


@dataclass
class HypothesisCheck:
    passed: bool
    message: str
    witness: Optional[tuple] = None


@dataclass
class HypothesisReport:
    checks: dict

    @property
    def passed(self):
        return all(c.passed for c in self.checks.values())

    def summary(self):
        lines = []
        for key in sorted(self.checks):
            c = self.checks[key]
            tag = "ok" if c.passed else "FAIL"
            lines.append(f"{key}: {tag} {c.message}")
        return "\n".join(lines)


def validate_hypotheses(spec, samples=400, seed=0, zero_tol=1e-10, p_radius=None,
                        zero_grid=121):
    """Sampling-based check of the structural hypotheses.

    Checks: exact unit periodicity of W in x, zero set of inf_x W(x, .) equal
    to the wells on a p-grid, existence of a homogeneous lower barrier with
    the same wells, the two-sided q-growth bound with the stored constant,
    and the p-Lipschitz bound from the radius map.  Returns a report with a
    witness point for every failed check.
    """
    rng = np.random.default_rng(seed)
    a, b = spec.wells
    checks = {}

    # x values on a dyadic lattice so adding a unit stays exact in floating point
    lattice = rng.integers(-3 * 2**20, 3 * 2**20, size=(samples, spec.dim_x))
    xs = lattice.astype(float) / 2.0**20
    ps = rng.normal(scale=1.0 + np.linalg.norm(b - a), size=(samples, spec.d))
    axes = rng.integers(0, spec.dim_x, size=samples)

    w0 = spec.density(xs, ps)
    shifted = xs.copy()
    shifted[np.arange(samples), axes] += 1.0
    w1 = spec.density(shifted, ps)
    bad = np.nonzero(w0 != w1)[0]
    if bad.size:
        i = int(bad[0])
        checks["H0 periodicity"] = HypothesisCheck(False, "period-1 shift changed the value",
                                                   (xs[i].tolist(), ps[i].tolist()))
    else:
        checks["H0 periodicity"] = HypothesisCheck(True, f"{samples} exact shift comparisons")

    # zero set of the x-infimum over a p-grid around the wells
    if p_radius is None:
        p_radius = default_truncation_radius(spec) / 2.0
    grid = np.linspace(-p_radius, p_radius, zero_grid)
    pg = np.stack(np.meshgrid(*([grid] * spec.d), indexing="ij"), axis=-1).reshape(-1, spec.d)
    cell = (np.arange(16) + 0.5) / 16.0
    xg = np.stack(np.meshgrid(*([cell] * spec.dim_x), indexing="ij"), axis=-1).reshape(-1, spec.dim_x)
    vals = spec.modulation_at(xg)[:, None] * spec.base.value(pg)[None, :]
    inf_x = np.min(vals, axis=0)
    spacing = grid[1] - grid[0]
    near_well = np.minimum(np.linalg.norm(pg - a, axis=-1), np.linalg.norm(pg - b, axis=-1))
    offenders = np.nonzero((inf_x <= zero_tol) & (near_well > spacing * math.sqrt(spec.d)))[0]
    at_wells = max(float(np.min(spec.density(xg, a[None, :]))), float(np.min(spec.density(xg, b[None, :]))))
    if offenders.size:
        i = int(offenders[0])
        checks["H2 zero set"] = HypothesisCheck(False, "inf_x W vanishes away from the wells",
                                                (None, pg[i].tolist()))
    elif at_wells > zero_tol:
        checks["H2 zero set"] = HypothesisCheck(False, f"W at a well is {at_wells:.3e} for some x", None)
    else:
        checks["H2 zero set"] = HypothesisCheck(True, f"zero set matches wells on {pg.shape[0]} grid points")

    witness = spec.lower_bound_witness()
    if witness is None:
        checks["H3 lower barrier"] = HypothesisCheck(False,
                                                     "modulation lower bound is not positive, no homogeneous barrier",
                                                     None)
    else:
        wvals = witness(pg)
        dominated = np.all(wvals[None, :] <= vals + 1e-12)
        zero_ok = np.all(wvals[(inf_x <= zero_tol) & (near_well <= spacing * math.sqrt(spec.d))] <= zero_tol)
        checks["H3 lower barrier"] = HypothesisCheck(bool(dominated and zero_ok),
                                                     "m_min * W0 sits below W with the same wells")

    q, C = spec.growth_exponent, spec.growth_constant
    norm_q = np.linalg.norm(ps, axis=-1) ** q
    low = norm_q / C - C
    high = C * (1.0 + norm_q)
    bad = np.nonzero((w0 < low - 1e-9) | (w0 > high + 1e-9))[0]
    if bad.size:
        i = int(bad[0])
        checks["H4 growth"] = HypothesisCheck(False, f"growth bound violated with C={C:.3g}",
                                              (xs[i].tolist(), ps[i].tolist()))
    else:
        checks["H4 growth"] = HypothesisCheck(True, f"two-sided growth holds with C={C:.3g}, q={q}")

    radius = float(np.max(np.linalg.norm(ps, axis=-1)))
    L = spec.lipschitz_constant(radius)
    qs = ps[rng.permutation(samples)]
    diff = np.linalg.norm(ps - qs, axis=-1)
    keep = diff > 1e-12
    ratios = np.abs(spec.density(xs[keep], ps[keep]) - spec.density(xs[keep], qs[keep])) / diff[keep]
    worst = float(np.max(ratios)) if ratios.size else 0.0
    if worst > L * (1.0 + 1e-9):
        checks["H5 lipschitz"] = HypothesisCheck(False, f"sampled ratio {worst:.3g} exceeds L={L:.3g}", None)
    else:
        checks["H5 lipschitz"] = HypothesisCheck(True, f"sampled ratios <= L({radius:.2f}) = {L:.3g}")

    return HypothesisReport(checks=checks)
