"""Normal-velocity laws ``F(Gamma, t)`` and their conservation classes.

Each law is a small immutable object.  Calling it on ``(fan, h, t)`` returns
the N edge velocities as an ndarray; that raw form is what the integrators
use.  The ``eval_*`` functions are the polygon-level entry points.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateEdge, SingularFieldOnEdge, ZeroAngleSum
from .polygon import NormalFan, Polygon, curvature_of, edge_lengths_of, vertices_of

DEFAULT_QUAD_ORDER = 32


@dataclass(frozen=True)
class ConservationClass:
    """Declared conservation behaviour of a law on one fan.

    ``mu_cas`` is the constant area speed (None if the law is not CAS),
    ``mu_cls`` the constant length speed (None if not CLS) and
    ``curve_shortening`` whether ``sum eta_j F_j <= 0`` holds.
    """

    mu_cas: Optional[float] = None
    mu_cls: Optional[float] = None
    curve_shortening: bool = False

    @property
    def is_cas(self) -> bool:
        return self.mu_cas is not None

    @property
    def is_cls(self) -> bool:
        return self.mu_cls is not None


# -- vector fields ------------------------------------------------------------

@dataclass(frozen=True)
class VectorField2D:
    """A pure planar field evaluated on point arrays of shape ``(..., 2)``.

    ``flux`` is the outward flux through any admissible polygon in the
    field's domain (the area speed of the advected flow).  Divergence-free
    behaviour is the caller's claim, it is not checked.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    flux: float = 0.0
    excluded_region: Optional[str] = None

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


def _point_source(x):
    r2 = x[..., 0] ** 2 + x[..., 1] ** 2
    # a sample on the origin yields nan; edge_means turns that into an error
    with np.errstate(divide="ignore", invalid="ignore"):
        return x / (2 * np.pi * r2)[..., None]


def _shear_xy(x):
    x1, x2 = x[..., 0], x[..., 1]
    return np.stack([-x1 * x1 * x2, x1 * x2 * x2], axis=-1)


def _saddle(x):
    return np.stack([-x[..., 0], x[..., 1]], axis=-1)


POINT_SOURCE = VectorField2D(
    "point-source", _point_source, flux=1.0, excluded_region="origin"
)
SHEAR_XY = VectorField2D("shear-xy", _shear_xy)
SADDLE = VectorField2D("saddle", _saddle)


def uniform_field(cx: float, cy: float) -> VectorField2D:
    c = np.array([cx, cy], dtype=float)

    def f(x):
        return np.broadcast_to(c, np.shape(x)).copy()

    return VectorField2D(f"uniform:{cx!r},{cy!r}", f)


def parse_field(spec: str) -> VectorField2D:
    if spec == "point-source":
        return POINT_SOURCE
    if spec == "shear-xy":
        return SHEAR_XY
    if spec == "saddle":
        return SADDLE
    if spec.startswith("uniform:"):
        try:
            cx, cy = (float(v) for v in spec[len("uniform:"):].split(","))
        except ValueError:
            raise ValueError(f"bad uniform field {spec!r}, expected uniform:<cx>,<cy>")
        return uniform_field(cx, cy)
    raise ValueError(f"unknown vector field {spec!r}")


@lru_cache(maxsize=None)
def _gauss_legendre(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def edge_means(fan: NormalFan, h: np.ndarray, u: VectorField2D, quad_order: int) -> np.ndarray:
    """Mean value of ``u`` along each edge, shape ``(N, 2)``."""
    if quad_order < 1:
        raise ValueError("quad_order must be >= 1")
    w = vertices_of(fan, h)
    start = w[fan.prev]
    nodes, weights = _gauss_legendre(quad_order)
    s = 0.5 * (nodes + 1.0)
    pts = start[:, None, :] + s[None, :, None] * (w - start)[:, None, :]
    vals = u(pts)
    if not np.all(np.isfinite(vals)):
        j = int(np.argmax(~np.all(np.isfinite(vals), axis=(1, 2))))
        raise SingularFieldOnEdge(f"field {u.name} is not finite on edge {j + 1}")
    return 0.5 * np.einsum("q,nqk->nk", weights, vals)


# -- laws -----------------------------------------------------------------------

class VelocityLaw:
    """Base class: ``law(fan, h, t)`` returns the N normal velocities."""

    name = "law"

    def __call__(self, fan: NormalFan, h: np.ndarray, t: float = 0.0) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, p: Polygon, t: float = 0.0) -> np.ndarray:
        return self(p.fan, p.heights, t)

    def conservation(self, fan: NormalFan) -> ConservationClass:
        return ConservationClass()

    @property
    def state_independent(self) -> bool:
        return False

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


@dataclass(frozen=True, repr=False)
class CurvatureFlow(VelocityLaw):
    """Polygonal curvature flow ``F_j = -sign * kappa_j``.

    ``sign=+1`` is the forward (shrinking) flow, ``sign=-1`` the backward one.
    """

    sign: int = 1

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def name(self):
        return "pcf" if self.sign == 1 else "pcf-backward"

    def __call__(self, fan, h, t=0.0):
        return -self.sign * curvature_of(fan, h)

    def conservation(self, fan):
        return ConservationClass(
            mu_cas=-2.0 * self.sign * fan.tan_half_sum,
            curve_shortening=self.sign == 1,
        )


def _ap_pcf(fan, h):
    lengths = edge_lengths_of(fan, h)
    kappa = curvature_of(fan, h, lengths)
    mean = 2.0 * fan.tan_half_sum / np.sum(lengths)
    return mean - kappa


@dataclass(frozen=True, repr=False)
class AreaPreservingCurvatureFlow(VelocityLaw):
    """``F_j = <kappa> - kappa_j`` with ``<kappa> = sum eta / |Gamma|``."""

    name = "ap-pcf"

    def __call__(self, fan, h, t=0.0):
        return _ap_pcf(fan, h)

    def conservation(self, fan):
        return ConservationClass(mu_cas=0.0, curve_shortening=True)


@dataclass(frozen=True, repr=False)
class AdvectedFlow(VelocityLaw):
    """``F_j = <u>_j . n_j``, edge means by Gauss-Legendre quadrature."""

    field: VectorField2D
    quad_order: int = DEFAULT_QUAD_ORDER
    mu: Optional[float] = None

    @property
    def name(self):
        return f"advected:{self.field.name}"

    def __call__(self, fan, h, t=0.0):
        lengths = edge_lengths_of(fan, h)
        if not np.all(lengths > 0):
            j = int(np.argmin(lengths))
            raise DegenerateEdge(f"edge {j + 1} has length {lengths[j]:.3e}")
        means = edge_means(fan, h, self.field, self.quad_order)
        return np.sum(means * fan.normals, axis=1)

    def conservation(self, fan):
        mu = self.field.flux if self.mu is None else self.mu
        return ConservationClass(mu_cas=float(mu))


@dataclass(frozen=True, repr=False)
class AdvectedCurvatureFlow(VelocityLaw):
    """Area-preserving curvature flow plus advection by a divergence-free field."""

    field: VectorField2D
    quad_order: int = DEFAULT_QUAD_ORDER
    mu: Optional[float] = None

    @property
    def name(self):
        return f"ap-advected-pcf:{self.field.name}"

    def __call__(self, fan, h, t=0.0):
        means = edge_means(fan, h, self.field, self.quad_order)
        return _ap_pcf(fan, h) + np.sum(means * fan.normals, axis=1)

    def conservation(self, fan):
        mu = self.field.flux if self.mu is None else self.mu
        return ConservationClass(mu_cas=float(mu))


@dataclass(frozen=True, repr=False)
class LengthPreservingCurvatureFlow(VelocityLaw):
    """``F_j = sum_i |Gamma_i| kappa_i^2 / (2 sum_i tan(phi_i/2)) - kappa_j``."""

    name = "lp-pcf"

    def __call__(self, fan, h, t=0.0):
        denom = 2.0 * fan.tan_half_sum
        if denom == 0.0:
            raise ZeroAngleSum("sum of tan(phi/2) vanishes")
        lengths = edge_lengths_of(fan, h)
        kappa = curvature_of(fan, h, lengths)
        return np.dot(lengths, kappa * kappa) / denom - kappa

    def conservation(self, fan):
        return ConservationClass(mu_cls=0.0)


@dataclass(frozen=True, repr=False)
class ConstantSpeed(VelocityLaw):
    """Every edge moves outward with speed ``c``."""

    c: float = 1.0

    @property
    def name(self):
        return f"const:{self.c!r}"

    @property
    def state_independent(self):
        return True

    def __call__(self, fan, h, t=0.0):
        return np.full(fan.n, float(self.c))

    def conservation(self, fan):
        return ConservationClass(mu_cls=2.0 * self.c * fan.tan_half_sum)


def parse_law(spec: str, quad_order: int = DEFAULT_QUAD_ORDER) -> VelocityLaw:
    """Build a law from its identifier, e.g. ``ap-advected-pcf:shear-xy``."""
    spec = spec.strip()
    if spec == "pcf":
        return CurvatureFlow(1)
    if spec == "pcf-backward":
        return CurvatureFlow(-1)
    if spec == "ap-pcf":
        return AreaPreservingCurvatureFlow()
    if spec == "lp-pcf":
        return LengthPreservingCurvatureFlow()
    if spec.startswith("const:"):
        try:
            c = float(spec[len("const:"):])
        except ValueError:
            raise ValueError(f"bad constant speed in {spec!r}")
        return ConstantSpeed(c)
    if spec.startswith("advected:"):
        return AdvectedFlow(parse_field(spec[len("advected:"):]), quad_order)
    if spec.startswith("ap-advected-pcf:"):
        return AdvectedCurvatureFlow(parse_field(spec[len("ap-advected-pcf:"):]), quad_order)
    raise ValueError(f"unknown law {spec!r}")


LAW_IDS = (
    "pcf",
    "pcf-backward",
    "ap-pcf",
    "advected:<field>",
    "ap-advected-pcf:<field>",
    "lp-pcf",
    "const:<c>",
)
FIELD_IDS = ("point-source", "shear-xy", "saddle", "uniform:<cx>,<cy>")


# -- polygon-level entry points ----------------------------------------------------

def eval_pcf(p: Polygon, sign: int = 1) -> np.ndarray:
    """Forward (``sign=1``) or backward (``sign=-1``) polygonal curvature flow."""
    return CurvatureFlow(sign).evaluate(p)


def eval_ap_pcf(p: Polygon) -> np.ndarray:
    return _ap_pcf(p.fan, p.heights)


def eval_advected(p: Polygon, u: VectorField2D, quad_order: int = DEFAULT_QUAD_ORDER) -> np.ndarray:
    return AdvectedFlow(u, quad_order).evaluate(p)


def eval_advected_curvature(
    p: Polygon, u: VectorField2D, quad_order: int = DEFAULT_QUAD_ORDER
) -> np.ndarray:
    return AdvectedCurvatureFlow(u, quad_order).evaluate(p)


def eval_lp_pcf(p: Polygon) -> np.ndarray:
    return LengthPreservingCurvatureFlow().evaluate(p)


def eval_constant_speed(p: Polygon, c: float = 1.0) -> np.ndarray:
    return ConstantSpeed(c).evaluate(p)


@dataclass(frozen=True)
class ConservationResidual:
    cas: Optional[float]
    cls: Optional[float]


def conservation_residual(law: VelocityLaw, p: Polygon, t: float = 0.0) -> ConservationResidual:
    """``sum |Gamma_j| F_j - mu_cas`` and ``sum eta_j F_j - mu_cls``.

    Either entry is None when the law does not declare that class.
    """
    F = law.evaluate(p, t)
    cons = law.conservation(p.fan)
    cas = cls = None
    if cons.is_cas:
        cas = float(np.dot(p.edge_lengths(), F)) - cons.mu_cas
    if cons.is_cls:
        cls = float(np.dot(p.fan.eta, F)) - cons.mu_cls
    return ConservationResidual(cas, cls)
