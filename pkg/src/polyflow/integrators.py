"""Time stepping: explicit Euler and the implicit midpoint scheme.

The implicit scheme solves ``h' = h + tau * F((h + h') / 2, t + tau / 2)``
by iterating on the midpoint heights ``hbar``::

    hbar <- h
    repeat:  hhat <- hbar;  hbar <- h + F(hhat, t + tau/2) * tau/2
    until |hbar - hhat|_inf <= eps / 2
    h' <- 2 hbar - h

For a law with constant area speed the result inherits it exactly (up to
the fixed-point residual), because the midpoint edge lengths are the mean of
the old and new ones.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import (
    DegenerateEdge,
    FpNonConvergence,
    InadmissibleIterate,
    PolyflowError,
    SingularFieldOnEdge,
    ZeroAngleSum,
)
from .laws import VelocityLaw
from .polygon import (
    NormalFan,
    Polygon,
    _check_same_fan,
    area_of,
    default_min_edge,
    edge_lengths_of,
    perimeter_of,
)

logger = logging.getLogger("polyflow")

EULER = "euler"
IMPLICIT = "implicit"
SCHEMES = (EULER, IMPLICIT)


@dataclass(frozen=True)
class StepControl:
    """Step size, fixed-point stopping rule and admissibility floor.

    ``min_edge=None`` means ``1e-9`` times the initial mean edge length.
    With ``relative_eps`` the stopping tolerance becomes
    ``eps_fp / 2 * max(1, |h|_inf)``.
    """

    tau: float = 1e-4
    t_end: float = 1.0
    eps_fp: float = 1e-15
    max_fp_iters: int = 100
    min_edge: Optional[float] = None
    relative_eps: bool = False
    retry_halving: bool = False
    max_halvings: int = 10

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.eps_fp > 0:
            raise ValueError("eps_fp must be positive")
        if self.max_fp_iters < 1:
            raise ValueError("max_fp_iters must be >= 1")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")


class Termination(str, enum.Enum):
    REACHED_T_END = "reached-t-end"
    EDGE_COLLAPSE = "edge-collapse"
    FP_NONCONVERGENCE = "fp-nonconvergence"
    INADMISSIBLE = "inadmissible-state"


@dataclass
class StepRecord:
    m: int
    t: float
    tau: float
    heights_after: np.ndarray
    fp_iters: int
    area_before: float
    area_after: float
    perimeter_before: float
    perimeter_after: float
    discrete_area_speed: float
    discrete_length_speed: float

    @property
    def t_after(self) -> float:
        return self.t + self.tau


@dataclass
class Trajectory:
    fan: NormalFan
    initial_heights: np.ndarray
    records: List[StepRecord] = field(default_factory=list)
    reason: Termination = Termination.REACHED_T_END
    message: str = ""
    scheme: str = IMPLICIT
    t_end: float = 0.0

    @property
    def completed(self) -> bool:
        return self.reason == Termination.REACHED_T_END

    @property
    def n_steps(self) -> int:
        return len(self.records)

    @property
    def initial(self) -> Polygon:
        return Polygon(self.fan, self.initial_heights)

    @property
    def final(self) -> Polygon:
        if not self.records:
            return self.initial
        return Polygon(self.fan, self.records[-1].heights_after)

    @property
    def t_final(self) -> float:
        return self.records[-1].t_after if self.records else 0.0

    def times(self) -> np.ndarray:
        """Times ``t_{m+1}`` at the end of each recorded step."""
        return np.array([r.t_after for r in self.records])

    def heights(self) -> np.ndarray:
        """``(n_steps, N)`` array of heights after each step."""
        if not self.records:
            return np.empty((0, self.fan.n))
        return np.array([r.heights_after for r in self.records])

    def fp_iterations(self) -> np.ndarray:
        return np.array([r.fp_iters for r in self.records], dtype=int)


# -- single steps -------------------------------------------------------------

def _euler_heights(fan, h, law, t, tau):
    return h + tau * law(fan, h, t)


def _implicit_heights(fan, h, law, t, tau, ctl, min_edge, gaps=None):
    half = 0.5 * tau
    t_mid = t + half
    hbar = h
    scale = max(1.0, float(np.max(np.abs(h)))) if ctl.relative_eps else 1.0
    tol = 0.5 * ctl.eps_fp * scale
    gap = math.inf
    for it in range(1, ctl.max_fp_iters + 1):
        hhat = hbar
        lengths = edge_lengths_of(fan, hhat)
        shortest = lengths.min()
        if not shortest > min_edge:
            raise InadmissibleIterate(
                f"midpoint iterate {it} has edge length {shortest:.3e} <= {min_edge:.3e}"
            )
        try:
            velocity = law(fan, hhat, t_mid)
        except DegenerateEdge as exc:
            raise InadmissibleIterate(str(exc)) from exc
        hbar = h + velocity * half
        gap = float(np.max(np.abs(hbar - hhat)))
        if gaps is not None:
            gaps.append(gap)
        if not math.isfinite(gap):
            break
        # a tolerance below the float spacing of hbar can only be met by luck
        if gap <= tol or gap <= 2.0 * np.spacing(np.max(np.abs(hbar))):
            return 2.0 * hbar - h, it
    raise FpNonConvergence(
        f"fixed-point iteration did not converge in {ctl.max_fp_iters} iterations "
        f"(last gap {gap:.3e}, tau={tau:.3e}, t={t:.6g})",
        iterations=ctl.max_fp_iters,
        gap=gap,
    )


def euler_step(p: Polygon, law: VelocityLaw, t: float, tau: float) -> Polygon:
    """Explicit step ``h + tau * F(h, t)``; admissibility is the caller's job."""
    return Polygon(p.fan, _euler_heights(p.fan, p.heights, law, t, tau))


def implicit_step(
    p: Polygon,
    law: VelocityLaw,
    t: float,
    tau: float,
    ctl: Optional[StepControl] = None,
    gaps: Optional[list] = None,
):
    """One implicit midpoint step solved by fixed-point iteration.

    Parameters
    ----------
    p : Polygon
        State at time ``t``.
    law : VelocityLaw
    t, tau : float
        Step start and size.
    ctl : StepControl, optional
        Only ``eps_fp``, ``max_fp_iters``, ``min_edge`` and ``relative_eps``
        are used here.
    gaps : list, optional
        If given, the successive iterate gaps ``|hbar - hhat|_inf`` are
        appended to it.

    Returns
    -------
    (Polygon, int)
        The new state and the number of fixed-point iterations.

    Raises
    ------
    FpNonConvergence
        Iteration cap reached; ``tau`` is too large for a contraction.
    InadmissibleIterate
        A midpoint iterate has an edge not longer than ``min_edge``.
    """
    if ctl is None:
        ctl = StepControl(tau=tau)
    min_edge = ctl.min_edge if ctl.min_edge is not None else default_min_edge(p)
    h_new, iters = _implicit_heights(p.fan, p.heights, law, t, tau, ctl, min_edge, gaps)
    return Polygon(p.fan, h_new), iters


def step_area_identity(before: Polygon, after: Polygon, tau: float) -> float:
    """Residual of the trapezoid identity for the discrete area speed.

    ``(A' - A) / tau - sum_j (L_j + L_j') / 2 * (h_j' - h_j) / tau``; an
    algebraic identity that holds for any pair of polygons in one class.
    """
    _check_same_fan(before, after)
    L0, L1 = before.edge_lengths(), after.edge_lengths()
    lhs = (after.area() - before.area()) / tau
    rhs = float(np.dot(0.5 * (L0 + L1), (after.heights - before.heights) / tau))
    return lhs - rhs


# -- time loop ------------------------------------------------------------------

def time_grid(t_end: float, tau: float) -> int:
    """Number of uniform steps; the last one is shortened to land on ``t_end``."""
    q = t_end / tau
    r = round(q)
    if abs(q - r) <= 1e-9 * max(1.0, q):
        return max(int(r), 1)
    return int(math.ceil(q))


# Non-convergence is reported as edge collapse when, at the current edge
# speeds, some edge would vanish within this many steps.
COLLAPSE_HORIZON = 4.0


def _projected_collapse_time(fan, h, law, t):
    """Shortest time for an edge to reach zero length at the current speeds."""
    try:
        rate = edge_lengths_of(fan, law(fan, h, t))
    except PolyflowError:
        return 0.0
    lengths = edge_lengths_of(fan, h)
    shrinking = rate < 0
    if not np.any(shrinking):
        return math.inf
    return float(np.min(lengths[shrinking] / -rate[shrinking]))


class _StepFailed(Exception):
    def __init__(self, reason, message):
        super().__init__(message)
        self.reason = reason


def run(
    p0: Polygon,
    law: VelocityLaw,
    scheme: str = IMPLICIT,
    ctl: Optional[StepControl] = None,
) -> Trajectory:
    """Advance ``p0`` to ``ctl.t_end`` with uniform steps.

    Failures never raise; they end the trajectory with a
    :class:`Termination` reason and every stored state is admissible.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    if ctl is None:
        ctl = StepControl()
    fan = p0.fan
    min_edge = ctl.min_edge if ctl.min_edge is not None else default_min_edge(p0)
    traj = Trajectory(fan, p0.heights.copy(), scheme=scheme, t_end=ctl.t_end)
    debug = logger.isEnabledFor(logging.DEBUG)

    def single(h, t, dt):
        try:
            if scheme == IMPLICIT:
                return _implicit_heights(fan, h, law, t, dt, ctl, min_edge)
            return _euler_heights(fan, h, law, t, dt), 0
        except FpNonConvergence as exc:
            collapse = _projected_collapse_time(fan, h, law, t)
            if collapse <= COLLAPSE_HORIZON * dt:
                raise _StepFailed(
                    Termination.EDGE_COLLAPSE,
                    f"edge projected to vanish within {collapse:.3e} at t={t:.6g} ({exc})",
                )
            raise _StepFailed(Termination.FP_NONCONVERGENCE, str(exc))
        except InadmissibleIterate as exc:
            raise _StepFailed(Termination.EDGE_COLLAPSE, str(exc))
        except (DegenerateEdge, SingularFieldOnEdge, ZeroAngleSum) as exc:
            raise _StepFailed(Termination.INADMISSIBLE, str(exc))

    def advance(h, t, dt, depth=0):
        """Return a list of ``(t, dt, h_new, iters)`` sub-steps."""
        try:
            h_new, iters = single(h, t, dt)
        except _StepFailed:
            if not ctl.retry_halving or depth >= ctl.max_halvings:
                raise
            first = advance(h, t, dt / 2, depth + 1)
            second = advance(first[-1][2], t + dt / 2, dt / 2, depth + 1)
            return first + second
        return [(t, dt, h_new, iters)]

    h = traj.initial_heights
    area = area_of(fan, h)
    per = perimeter_of(fan, h)
    m = 0
    mbar = time_grid(ctl.t_end, ctl.tau)
    for k in range(mbar):
        t = k * ctl.tau
        dt = ctl.tau if k < mbar - 1 else ctl.t_end - t
        try:
            substeps = advance(h, t, dt)
        except _StepFailed as exc:
            traj.reason, traj.message = exc.reason, str(exc)
            break
        failed = False
        for ts, dts, h_new, iters in substeps:
            if not np.all(np.isfinite(h_new)):
                traj.reason = Termination.INADMISSIBLE
                traj.message = f"non-finite heights at t={ts + dts:.6g}"
                failed = True
                break
            shortest = float(np.min(edge_lengths_of(fan, h_new)))
            if not shortest > min_edge:
                traj.reason = Termination.EDGE_COLLAPSE
                traj.message = (
                    f"edge length {shortest:.3e} <= {min_edge:.3e} at t={ts + dts:.6g}"
                )
                failed = True
                break
            area_new = area_of(fan, h_new)
            per_new = perimeter_of(fan, h_new)
            traj.records.append(
                StepRecord(
                    m=m,
                    t=ts,
                    tau=dts,
                    heights_after=h_new,
                    fp_iters=iters,
                    area_before=area,
                    area_after=area_new,
                    perimeter_before=per,
                    perimeter_after=per_new,
                    discrete_area_speed=(area_new - area) / dts,
                    discrete_length_speed=(per_new - per) / dts,
                )
            )
            if debug:
                logger.debug("step %d t=%.6g fp_iters=%d", m, ts + dts, iters)
            m += 1
            h, area, per = h_new, area_new, per_new
        if failed:
            break
    if not traj.completed:
        logger.info("run stopped at t=%.6g: %s", traj.t_final, traj.message)
    return traj

