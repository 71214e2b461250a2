"""Conservation errors, reference solutions and empirical convergence orders."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .errors import BadParameter, NoConservationDeclared, RunFailed, TimeGridMismatch
from .integrators import StepControl, Trajectory, run
from .laws import CurvatureFlow, VelocityLaw
from .polygon import Polygon

# errors below this (times the height scale) are rounding noise
EXACT_TOL = 1e-12


@dataclass(frozen=True)
class ConservationReport:
    n_steps: int
    mu_cas: Optional[float]
    mu_cls: Optional[float]
    area_speeds: np.ndarray
    length_speeds: np.ndarray
    delta_cas: Optional[float]
    delta_cls: Optional[float]

    def summary(self) -> str:
        parts = [f"steps={self.n_steps}"]
        if self.delta_cas is not None:
            parts.append(f"mu_cas={self.mu_cas:.17g} delta_cas={self.delta_cas:.3e}")
        if self.delta_cls is not None:
            parts.append(f"mu_cls={self.mu_cls:.17g} delta_cls={self.delta_cls:.3e}")
        return " ".join(parts)


def conservation_report(traj: Trajectory, law: VelocityLaw) -> ConservationReport:
    """Max deviation of the per-step area/length speed from the declared constant.

    Uses the speeds stored in the step records; geometry is not recomputed.
    """
    cons = law.conservation(traj.fan)
    if not (cons.is_cas or cons.is_cls):
        raise NoConservationDeclared(f"law {law.name} declares neither CAS nor CLS")
    area_speeds = np.array([r.discrete_area_speed for r in traj.records])
    length_speeds = np.array([r.discrete_length_speed for r in traj.records])
    delta_cas = delta_cls = None
    if cons.is_cas:
        delta_cas = float(np.max(np.abs(area_speeds - cons.mu_cas))) if len(area_speeds) else 0.0
    if cons.is_cls:
        delta_cls = (
            float(np.max(np.abs(length_speeds - cons.mu_cls))) if len(length_speeds) else 0.0
        )
    return ConservationReport(
        n_steps=traj.n_steps,
        mu_cas=cons.mu_cas,
        mu_cls=cons.mu_cls,
        area_speeds=area_speeds,
        length_speeds=length_speeds,
        delta_cas=delta_cas,
        delta_cls=delta_cls,
    )


# -- closed-form references ------------------------------------------------------

def _is_right_angle_fan(fan) -> bool:
    return fan.n == 4 and bool(np.all(np.abs(fan.outer_angles - np.pi / 2) < 1e-12))


@dataclass(frozen=True)
class RectanglePCF:
    """Exact curvature flow of a rectangle.

    With widths ``w1 = h1 + h3`` and ``w2 = h2 + h4`` the flow gives
    ``w1' = -4 / w2`` and ``w2' = -4 / w1``, so ``w1 / w2`` stays fixed and
    ``w1 w2`` decreases at rate 8.  Opposite heights move together by half
    the width change.  The square is the case ``w1 = w2``.
    """

    h0: np.ndarray

    @property
    def extinction_time(self) -> float:
        w1, w2 = self.h0[0] + self.h0[2], self.h0[1] + self.h0[3]
        return w1 * w2 / 8.0

    def __call__(self, t: float) -> np.ndarray:
        h0 = self.h0
        w1, w2 = h0[0] + h0[2], h0[1] + h0[3]
        prod = w1 * w2 - 8.0 * t
        if prod <= 0:
            raise ValueError(f"rectangle has vanished before t={t}")
        ratio = w1 / w2
        W1, W2 = np.sqrt(ratio * prod), np.sqrt(prod / ratio)
        dw = np.array([W1 - w1, W2 - w2, W1 - w1, W2 - w2]) / 2
        return h0 + dw


@dataclass(frozen=True)
class RegularPCF:
    """Curvature flow of a regular polygon: ``h(t) = sqrt(h0^2 - 2 t)``.

    ``sign=-1`` gives the backward flow ``sqrt(h0^2 + 2 t)``.
    """

    h0: np.ndarray
    sign: int = 1

    def __call__(self, t: float) -> np.ndarray:
        return np.sqrt(self.h0 ** 2 - 2.0 * self.sign * t)


def closed_form_reference(p0: Polygon, law: VelocityLaw) -> Callable[[float], np.ndarray]:
    """Exact solution for curvature flow of rectangles and regular polygons."""
    if not isinstance(law, CurvatureFlow):
        raise BadParameter(f"no closed form known for law {law.name}")
    fan, h = p0.fan, p0.heights
    if law.sign == 1 and _is_right_angle_fan(fan):
        return RectanglePCF(h.copy())
    phi = fan.outer_angles
    if np.allclose(phi, 2 * np.pi / fan.n, rtol=0, atol=1e-12) and np.allclose(
        h, h[0], rtol=1e-14, atol=0
    ):
        return RegularPCF(h.copy(), law.sign)
    raise BadParameter("closed form needs a rectangle or a regular polygon")


def error_vs_reference(
    traj: Trajectory, ref: Union[Callable[[float], np.ndarray], Trajectory]
) -> float:
    """``max_m |h(t_m) - h^m|_inf`` over every recorded step.

    ``ref`` is a callable ``t -> heights`` or a (finer) trajectory whose
    time grid contains every time of ``traj``.
    """
    if not traj.records:
        return 0.0
    hs = traj.heights()
    if isinstance(ref, Trajectory):
        ref_h = _match_times(traj, ref)
    else:
        ref_h = np.array([ref(t) for t in traj.times()])
    return float(np.max(np.abs(ref_h - hs)))


def _match_times(traj: Trajectory, ref: Trajectory) -> np.ndarray:
    ref_t = ref.times()
    if len(ref_t) == 0:
        raise TimeGridMismatch("reference trajectory is empty")
    out = []
    for t in traj.times():
        k = int(np.searchsorted(ref_t, t))
        best = None
        for c in (k - 1, k):
            if 0 <= c < len(ref_t) and abs(ref_t[c] - t) <= 1e-9 * max(1.0, abs(t)):
                best = c
        if best is None:
            raise TimeGridMismatch(f"reference has no step ending at t={t!r}")
        out.append(ref.records[best].heights_after)
    return np.array(out)


# -- convergence order -------------------------------------------------------------

@dataclass
class OrderEstimate:
    taus: List[float]
    errors: List[float]
    orders: List[Optional[float]]
    order: Optional[float]
    exact: bool
    reference: str
    failures: List[RunFailed] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def table(self) -> List[tuple]:
        rows = []
        for i, (tau, err) in enumerate(zip(self.taus, self.errors)):
            p = self.orders[i - 1] if i > 0 else None
            rows.append((tau, err, p))
        return rows


def convergence_order(
    p0: Polygon,
    law: VelocityLaw,
    scheme: str,
    taus: Sequence[float],
    t_end: float,
    ref: Union[str, Callable[[float], np.ndarray]] = "closed",
    ctl: Optional[StepControl] = None,
    workers: Optional[int] = None,
) -> OrderEstimate:
    """Run a tau-halving sweep and fit ``p_k = log2(e(tau_k) / e(tau_{k+1}))``.

    ``ref`` is ``"closed"`` (closed-form solution, see
    :func:`closed_form_reference`), ``"fine"`` (an implicit run with
    ``min(taus) / 16``) or a callable ``t -> heights``.  The summary order is
    the mean of the last two pairwise orders.  When every error is at
    rounding level the estimate is flagged ``exact`` and no order is fitted.
    """
    taus = [float(t) for t in taus]
    if len(taus) < 2:
        raise BadParameter("need at least two step sizes")
    for a, b in zip(taus, taus[1:]):
        if not np.isclose(a, 2 * b, rtol=1e-12, atol=0):
            raise BadParameter("step sizes must halve successively")
    base = ctl or StepControl(tau=taus[0], t_end=t_end)

    def control(tau):
        return StepControl(
            tau=tau,
            t_end=t_end,
            eps_fp=base.eps_fp,
            max_fp_iters=base.max_fp_iters,
            min_edge=base.min_edge,
            relative_eps=base.relative_eps,
            retry_halving=base.retry_halving,
            max_halvings=base.max_halvings,
        )

    if ref == "closed":
        reference = closed_form_reference(p0, law)
        label = f"closed-form {type(reference).__name__}"
    elif ref == "fine":
        tau_ref = min(taus) / 16
        reference = run(p0, law, "implicit", control(tau_ref))
        if not reference.completed:
            raise RunFailed(
                f"fine reference run stopped at t={reference.t_final}: {reference.message}",
                tau=tau_ref,
                reason=reference.reason,
            )
        label = f"fine implicit tau={tau_ref:.3g}"
    elif callable(ref):
        reference, label = ref, "user callable"
    else:
        raise BadParameter(f"unknown reference {ref!r}")

    with ThreadPoolExecutor(max_workers=workers) as pool:
        trajs = list(pool.map(lambda tau: run(p0, law, scheme, control(tau)), taus))

    errors, failures = [], []
    for tau, traj in zip(taus, trajs):
        if not traj.completed:
            failures.append(
                RunFailed(
                    f"tau={tau:g}: {traj.reason.value} at t={traj.t_final:.6g}",
                    tau=tau,
                    reason=traj.reason,
                )
            )
            errors.append(float("nan"))
        else:
            errors.append(error_vs_reference(traj, reference))

    scale = max(1.0, float(np.max(np.abs(p0.heights))))
    finite = [e for e in errors if np.isfinite(e)]
    exact = bool(finite) and max(finite) <= EXACT_TOL * scale
    orders: List[Optional[float]] = []
    for e0, e1 in zip(errors, errors[1:]):
        if exact or not (e0 > 0 and e1 > 0) or not (np.isfinite(e0) and np.isfinite(e1)):
            orders.append(None)
        else:
            orders.append(float(np.log2(e0 / e1)))
    fitted = [p for p in orders[-2:] if p is not None]
    summary = float(np.mean(fitted)) if fitted and not exact else None
    return OrderEstimate(taus, errors, orders, summary, exact, label, failures)
