"""Initial-polygon presets, scenario files and trajectory output.

Scenario files are line oriented::

    # unit square shrinking by curvature
    N 4
    normal 1 0 0.5
    normal 0 1 0.5
    normal -1 0 0.5
    normal 0 -1 0.5
    law pcf
    scheme implicit
    tau 1e-4
    t_end 0.12

``preset <id> <params...>`` may replace the ``N``/``normal`` block.  Optional
keys: ``eps``, ``every``, ``min_edge``, ``quad_order``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq

from .errors import BadParameter, FanError, Inadmissible, ParseError, ScenarioIOError
from .integrators import SCHEMES, StepControl, Trajectory
from .laws import DEFAULT_QUAD_ORDER, VelocityLaw, parse_law
from .polygon import Polygon, build_fan, check_admissible, polygon_from_vertices

FLOAT_FMT = ".17g"


def _fmt(x: float) -> str:
    return format(float(x), FLOAT_FMT)


# -- presets ---------------------------------------------------------------------

def _checked(p: Polygon, what: str) -> Polygon:
    rep = check_admissible(p, check_simple=True)
    if not rep.admissible:
        raise Inadmissible(f"{what}: not an admissible simple polygon (min edge {rep.min_edge_length:.3e})")
    return p


def _from_vertices(vertices, what: str) -> Polygon:
    try:
        p = polygon_from_vertices(vertices)
    except FanError as exc:
        raise Inadmissible(f"{what}: {exc}") from exc
    return _checked(p, what)


def preset_regular(n: int, apothem: float) -> Polygon:
    """Regular ``n``-gon with normals at angles ``2 pi j / n``."""
    n = int(n)
    if n < 3:
        raise BadParameter(f"regular polygon needs n >= 3, got {n}")
    if not apothem > 0:
        raise BadParameter("apothem must be positive")
    ang = 2 * np.pi * np.arange(n) / n
    normals = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # exact zeros for the axis directions keep the square bit-exact
    normals[np.abs(normals) < 1e-15] = 0.0
    return Polygon(build_fan(normals), np.full(n, float(apothem)))


def preset_rectangle(a: float, b: float) -> Polygon:
    """Axis-aligned rectangle of half-widths ``a`` (x) and ``b`` (y)."""
    if not (a > 0 and b > 0):
        raise BadParameter("rectangle half-widths must be positive")
    fan = build_fan([(1, 0), (0, 1), (-1, 0), (0, -1)])
    return Polygon(fan, [a, b, a, b])


def preset_half_gon_triangle(n: int, scale: float = 1.0) -> Polygon:
    """Upper half of a regular ``2(n-2)``-gon closed below by a triangle.

    The half-polygon has circumradius ``scale`` with vertices at angles
    ``pi i / (n-2)``, ``i = 0..n-2``; the two lower edges meet at
    ``(0, -scale)``, a right angle.  The origin lies inside.
    """
    n = int(n)
    if n < 5:
        raise BadParameter(f"half-gon/triangle preset needs n >= 5, got {n}")
    if not scale > 0:
        raise BadParameter("scale must be positive")
    k = n - 2
    ang = np.pi * np.arange(k + 1) / k
    upper = scale * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    upper[np.abs(upper) < 1e-15 * scale] = 0.0
    verts = np.vstack([upper, [[0.0, -scale]]])
    return _from_vertices(verts, f"half-gon:{n}")


def _sharp_star_vertices(n: int, r_inner: float, r_outer: float) -> np.ndarray:
    th = np.pi * np.arange(2 * n) / n
    r = np.where(np.arange(2 * n) % 2 == 0, r_outer, r_inner)
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=1)


def _blunt_star_vertices(n: int, tip_angle: float) -> np.ndarray:
    """Constant-curvature ``3n``-gon with tip corner turning ``tip_angle``.

    Per arm: flank ``d1``, tip corner, tip edge ``d2 = 1``, tip corner, flank,
    reflex valley turning ``2 pi/n - 2 tip_angle``.  Equal curvature on flank
    and tip edge fixes ``d1 / d2 = (tan(phi0/2) + tan(phi1/2)) / (2 tan(phi1/2))``.
    The chain closes by the n-fold symmetry.  Centred, circumradius 1.
    """
    phi1 = tip_angle
    phi0 = 2 * np.pi / n - 2 * phi1
    t0, t1 = np.tan(phi0 / 2), np.tan(phi1 / 2)
    d1 = (t0 + t1) / (2 * t1)
    lengths = np.tile([d1, 1.0, d1], n)
    turns = np.tile([phi1, phi1, phi0], n)
    # direction of edge j is the sum of the turns at vertices before it
    theta = np.concatenate([[0.0], np.cumsum(turns)[:-1]])
    w = np.cumsum(lengths[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1), axis=0)
    w -= w.mean(axis=0)
    return w / np.max(np.hypot(w[:, 0], w[:, 1]))


def _valley_ratio(n: int, tip_angle: float) -> float:
    w = _blunt_star_vertices(n, tip_angle)
    return float(np.hypot(*w[2]))


def preset_star(
    n_fold: int,
    sharp: bool,
    r_inner: float,
    r_outer: float,
    tip_angle: Optional[float] = None,
) -> Polygon:
    """``n_fold``-fold star centred at the origin.

    The sharp star is a ``2n``-gon alternating between outer vertices at radius
    ``r_outer`` and valleys at ``r_inner``; its edges are congruent, so its
    polygonal curvature is constant.

    The non-sharp star is a ``3n``-gon whose arms end in a flat tip edge.  Its
    outer angles alternate between ``phi1 > 0`` (tip corners) and ``phi0 < 0``
    (valleys), and the flank/tip length ratio is chosen so that every edge has
    the same polygonal curvature.  That leaves a one-parameter family: the tip
    corner angle ``phi1`` is solved for so that the valleys sit at radius
    ``r_inner`` when the circumradius is ``r_outer``.  Only moderately deep
    valleys are reachable; ``tip_angle`` bypasses the solve.

    Both stars are stationary under area-preserving curvature flow.
    """
    n = int(n_fold)
    if n < 3:
        raise BadParameter(f"star needs n_fold >= 3, got {n}")
    if not (r_inner > 0 and r_outer > 0):
        raise BadParameter("star radii must be positive")
    if not r_inner < r_outer:
        raise BadParameter("star needs r_inner < r_outer")
    what = f"star:{n}:{'sharp' if sharp else 'blunt'}"
    if sharp:
        return _from_vertices(_sharp_star_vertices(n, r_inner, r_outer), what)

    lo, hi = np.pi / n, 2 * np.pi / n
    if tip_angle is None:
        # the valley ratio dips to a minimum and rises again as phi1 goes from
        # pi/n to 2 pi/n; take the first crossing
        grid = np.linspace(lo, hi, 2001)[1:-1]
        ratios = np.array([_valley_ratio(n, x) for x in grid]) - r_inner / r_outer
        cross = np.nonzero(np.sign(ratios[:-1]) != np.sign(ratios[1:]))[0]
        if len(cross) == 0:
            raise BadParameter(
                f"{what}: r_inner/r_outer must lie in "
                f"[{ratios.min() + r_inner / r_outer:.4f}, {ratios.max() + r_inner / r_outer:.4f}]"
            )
        j = int(cross[0])
        tip_angle = brentq(
            lambda x: _valley_ratio(n, x) - r_inner / r_outer, grid[j], grid[j + 1], xtol=1e-15
        )
    elif not lo < tip_angle < hi:
        raise BadParameter(f"tip_angle must lie in (pi/{n}, 2 pi/{n})")
    return _from_vertices(r_outer * _blunt_star_vertices(n, tip_angle), what)


def preset_ellipse_polygon(n: int, a: float, b: float) -> Polygon:
    """Vertices ``(a cos 2 pi j/n, b sin 2 pi j/n)``; fan and heights follow."""
    n = int(n)
    if n < 3:
        raise BadParameter(f"ellipse polygon needs n >= 3, got {n}")
    if not (a > 0 and b > 0):
        raise BadParameter("ellipse semi-axes must be positive")
    ang = 2 * np.pi * np.arange(n) / n
    c, s = np.cos(ang), np.sin(ang)
    c[np.abs(c) < 1e-15] = 0.0
    s[np.abs(s) < 1e-15] = 0.0
    return _from_vertices(np.stack([a * c, b * s], axis=1), f"ellipse:{n}")


def preset_wavy(n: int, k: int, amp: float) -> Polygon:
    """Vertices on the curve ``r = 1 + amp cos(k theta)`` at ``theta = 2 pi j/n``.

    A cheap non-convex test shape; ``k`` lobes, reflex vertices in the troughs
    once ``amp`` is large enough.
    """
    n, k = int(n), int(k)
    if n < 3:
        raise BadParameter(f"wavy polygon needs n >= 3, got {n}")
    if not 0 <= amp < 1:
        raise BadParameter(f"wavy amplitude must lie in [0, 1), got {amp}")
    th = 2 * np.pi * np.arange(n) / n
    r = 1 + amp * np.cos(k * th)
    return _from_vertices(np.stack([r * np.cos(th), r * np.sin(th)], axis=1), f"wavy:{n}")


def _flag(v: str) -> bool:
    if v in ("sharp", "1", "true"):
        return True
    if v in ("blunt", "non-sharp", "0", "false"):
        return False
    raise BadParameter(f"star flag must be sharp or blunt, got {v!r}")


@dataclass(frozen=True)
class PresetInfo:
    builder: Callable[..., Polygon]
    params: Tuple[Tuple[str, Callable], ...]
    n_optional: int = 0

    @property
    def usage(self) -> str:
        names = [p[0] for p in self.params]
        req = len(names) - self.n_optional
        return ":".join(names[:req] + [f"[{x}]" for x in names[req:]])


PRESETS: Dict[str, PresetInfo] = {
    "regular": PresetInfo(preset_regular, (("n", int), ("apothem", float))),
    "rectangle": PresetInfo(preset_rectangle, (("a", float), ("b", float))),
    "half-gon": PresetInfo(preset_half_gon_triangle, (("n", int), ("scale", float)), 1),
    "star": PresetInfo(
        preset_star,
        (("n_fold", int), ("sharp|blunt", _flag), ("r_inner", float), ("r_outer", float), ("tip_angle", float)),
        1,
    ),
    "ellipse": PresetInfo(preset_ellipse_polygon, (("n", int), ("a", float), ("b", float))),
    "wavy": PresetInfo(preset_wavy, (("n", int), ("k", int), ("amp", float))),
}


def build_preset(preset_id: str, params: Sequence[str]) -> Polygon:
    """Build a preset from its id and string parameters."""
    info = PRESETS.get(preset_id)
    if info is None:
        raise BadParameter(f"unknown preset {preset_id!r}; known: {', '.join(PRESETS)}")
    n_req = len(info.params) - info.n_optional
    if not n_req <= len(params) <= len(info.params):
        raise BadParameter(f"preset {preset_id} expects {preset_id}:{info.usage}")
    args = []
    for (name, conv), raw in zip(info.params, params):
        try:
            args.append(conv(raw))
        except ValueError as exc:
            raise BadParameter(f"preset {preset_id}: bad {name} {raw!r}") from exc
    return info.builder(*args)


def parse_preset(text: str) -> Tuple[str, Tuple[str, ...]]:
    """Split ``'regular:4:0.5'`` into ``('regular', ('4', '0.5'))``."""
    parts = text.strip().split(":")
    return parts[0], tuple(parts[1:])


# -- scenario spec -----------------------------------------------------------------

@dataclass(frozen=True)
class ScenarioSpec:
    law: str
    scheme: str
    tau: float
    t_end: float
    normals: Optional[Tuple[Tuple[float, float], ...]] = None
    heights: Optional[Tuple[float, ...]] = None
    preset: Optional[Tuple[str, ...]] = None
    eps: Optional[float] = None
    every: Optional[int] = None
    min_edge: Optional[float] = None
    quad_order: Optional[int] = None

    def polygon(self) -> Polygon:
        if self.preset is not None:
            return build_preset(self.preset[0], self.preset[1:])
        p = Polygon(build_fan(self.normals), self.heights)
        rep = check_admissible(p, self.min_edge)
        if not rep.admissible:
            raise Inadmissible(f"initial polygon is inadmissible (min edge {rep.min_edge_length:.3e})")
        return p

    def velocity_law(self) -> VelocityLaw:
        return parse_law(self.law, self.quad_order or DEFAULT_QUAD_ORDER)

    def control(self, **overrides) -> StepControl:
        kw = dict(tau=self.tau, t_end=self.t_end, min_edge=self.min_edge)
        if self.eps is not None:
            kw["eps_fp"] = self.eps
        kw.update(overrides)
        return StepControl(**kw)

    def with_overrides(self, **kw) -> "ScenarioSpec":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def format_scenario(spec: ScenarioSpec) -> str:
    """Canonical text form; ``parse_scenario(format_scenario(s)) == s``."""
    lines = []
    if spec.preset is not None:
        lines.append(" ".join(("preset",) + tuple(spec.preset)))
    else:
        lines.append(f"N {len(spec.normals)}")
        for (nx, ny), h in zip(spec.normals, spec.heights):
            lines.append(f"normal {_fmt(nx)} {_fmt(ny)} {_fmt(h)}")
    lines.append(f"law {spec.law}")
    lines.append(f"scheme {spec.scheme}")
    lines.append(f"tau {_fmt(spec.tau)}")
    lines.append(f"t_end {_fmt(spec.t_end)}")
    if spec.eps is not None:
        lines.append(f"eps {_fmt(spec.eps)}")
    if spec.every is not None:
        lines.append(f"every {spec.every}")
    if spec.min_edge is not None:
        lines.append(f"min_edge {_fmt(spec.min_edge)}")
    if spec.quad_order is not None:
        lines.append(f"quad_order {spec.quad_order}")
    return "\n".join(lines) + "\n"


_SCALAR_KEYS = {
    "law": str,
    "scheme": str,
    "tau": float,
    "t_end": float,
    "eps": float,
    "every": int,
    "min_edge": float,
    "quad_order": int,
}


def _number(conv, raw, key, lineno):
    try:
        v = conv(raw)
    except ValueError:
        raise ParseError(f"{key}: cannot parse {raw!r}", lineno)
    if isinstance(v, float) and not math.isfinite(v):
        raise ParseError(f"{key}: value must be finite", lineno)
    return v


def parse_scenario(text: str) -> ScenarioSpec:
    n_expected = None
    normals: List[Tuple[float, float]] = []
    heights: List[float] = []
    preset = None
    values: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        if key == "N":
            if n_expected is not None:
                raise ParseError("duplicate N", lineno)
            if len(args) != 1:
                raise ParseError("expected 'N <int>'", lineno)
            n_expected = _number(int, args[0], "N", lineno)
            if n_expected < 3:
                raise ParseError("N must be at least 3", lineno)
        elif key == "normal":
            if n_expected is None:
                raise ParseError("'normal' before 'N'", lineno)
            if len(args) != 3:
                raise ParseError("expected 'normal <nx> <ny> <h>'", lineno)
            nx, ny, h = (_number(float, a, "normal", lineno) for a in args)
            if nx == 0 and ny == 0:
                raise ParseError("zero normal vector", lineno)
            normals.append((nx, ny))
            heights.append(h)
        elif key == "preset":
            if preset is not None:
                raise ParseError("duplicate preset", lineno)
            if not args:
                raise ParseError("expected 'preset <id> <params...>'", lineno)
            if args[0] not in PRESETS:
                raise ParseError(f"unknown preset {args[0]!r}", lineno)
            preset = tuple(args)
        elif key in _SCALAR_KEYS:
            if key in values:
                raise ParseError(f"duplicate {key}", lineno)
            if len(args) != 1:
                raise ParseError(f"expected '{key} <value>'", lineno)
            v = _number(_SCALAR_KEYS[key], args[0], key, lineno)
            if key == "law":
                try:
                    parse_law(v)
                except ValueError as exc:
                    raise ParseError(str(exc), lineno)
            if key == "scheme" and v not in SCHEMES:
                raise ParseError(f"scheme must be one of {', '.join(SCHEMES)}", lineno)
            if key in ("tau", "t_end", "eps", "min_edge") and not v > 0:
                raise ParseError(f"{key} must be positive", lineno)
            if key in ("every", "quad_order") and v < 1:
                raise ParseError(f"{key} must be >= 1", lineno)
            values[key] = v
        else:
            raise ParseError(f"unknown key {key!r}", lineno)

    if preset is not None and (n_expected is not None or normals):
        raise ParseError("give either a preset or N/normal lines, not both")
    if preset is None:
        if n_expected is None:
            raise ParseError("missing 'N' (or 'preset')")
        if len(normals) != n_expected:
            raise ParseError(f"N is {n_expected} but {len(normals)} normal lines were given")
    for key in ("law", "scheme", "tau", "t_end"):
        if key not in values:
            raise ParseError(f"missing '{key}'")
    return ScenarioSpec(
        normals=tuple(normals) if preset is None else None,
        heights=tuple(heights) if preset is None else None,
        preset=preset,
        **values,
    )


def read_scenario(path) -> ScenarioSpec:
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as exc:
        raise ScenarioIOError(f"cannot read scenario {path}: {exc.strerror or exc}") from exc
    return parse_scenario(text)


def write_scenario(spec: ScenarioSpec, path) -> None:
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(format_scenario(spec))
    except OSError as exc:
        raise ScenarioIOError(f"cannot write scenario {path}: {exc}") from exc


def scenario_from_polygon(p: Polygon, law: str, scheme: str, tau: float, t_end: float, **kw) -> ScenarioSpec:
    return ScenarioSpec(
        law=law,
        scheme=scheme,
        tau=tau,
        t_end=t_end,
        normals=tuple((float(x), float(y)) for x, y in p.fan.normals),
        heights=tuple(float(h) for h in p.heights),
        **kw,
    )


# -- trajectory output ---------------------------------------------------------------

def write_trajectory_csv(traj: Trajectory, path, law: Optional[VelocityLaw] = None) -> None:
    """One row per step: ``t,h_1..h_N,perimeter,area,mu_step``.

    ``mu_step`` is the discrete area speed, or the discrete length speed for
    laws that only declare a constant length speed.
    """
    use_length = False
    if law is not None:
        cons = law.conservation(traj.fan)
        use_length = cons.is_cls and not cons.is_cas
    n = traj.fan.n
    header = ["t"] + [f"h_{j}" for j in range(1, n + 1)] + ["perimeter", "area", "mu_step"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for r in traj.records:
            mu = r.discrete_length_speed if use_length else r.discrete_area_speed
            w.writerow(
                [_fmt(r.t_after)]
                + [_fmt(h) for h in r.heights_after]
                + [_fmt(r.perimeter_after), _fmt(r.area_after), _fmt(mu)]
            )


def write_conservation_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["m", "t", "tau", "fp_iters", "area_speed", "length_speed"])
        for r in traj.records:
            w.writerow(
                [r.m, _fmt(r.t), _fmt(r.tau), r.fp_iters,
                 _fmt(r.discrete_area_speed), _fmt(r.discrete_length_speed)]
            )


def _viewbox(p: Polygon, margin: float = 1.2):
    w = p.vertices()
    lo, hi = w.min(axis=0), w.max(axis=0)
    centre = (lo + hi) / 2
    half = max(hi - lo) / 2 * margin
    if not half > 0:
        half = 1.0
    return centre[0] - half, centre[1] - half, 2 * half


def _points(p: Polygon) -> str:
    # SVG y points down
    return " ".join(f"{x:.9g},{-y:.9g}" for x, y in p.vertices())


def write_snapshot_svg(p: Polygon, path, viewbox=None, overlay: Optional[Polygon] = None) -> None:
    """Draw the vertex chain of ``p``; ``overlay`` is drawn dotted underneath."""
    x0, y0, size = viewbox if viewbox is not None else _viewbox(p)
    stroke = size / 300
    top = -(y0 + size)
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="480" height="480" '
        f'viewBox="{x0:.9g} {top:.9g} {size:.9g} {size:.9g}">',
    ]
    if overlay is not None:
        parts.append(
            f'  <polygon points="{_points(overlay)}" fill="none" stroke="gray" '
            f'stroke-width="{stroke:.6g}" stroke-dasharray="{2 * stroke:.6g} {2 * stroke:.6g}"/>'
        )
    parts.append(
        f'  <polygon points="{_points(p)}" fill="none" stroke="black" stroke-width="{stroke:.6g}"/>'
    )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")


def write_snapshots(traj: Trajectory, outdir, every: int) -> List[str]:
    """``frame_<m>.svg`` every ``every`` steps (m = 0 is the initial polygon)
    and ``final_overlay.svg``; the viewport is fixed by the initial polygon."""
    if every < 1:
        raise BadParameter("every must be >= 1")
    os.makedirs(outdir, exist_ok=True)
    initial = traj.initial
    vb = _viewbox(initial)
    written = []
    frames = [(0, initial)] + [
        (r.m + 1, Polygon(traj.fan, r.heights_after))
        for r in traj.records
        if (r.m + 1) % every == 0
    ]
    for m, p in frames:
        path = os.path.join(outdir, f"frame_{m}.svg")
        write_snapshot_svg(p, path, vb)
        written.append(path)
    path = os.path.join(outdir, "final_overlay.svg")
    write_snapshot_svg(traj.final, path, vb, overlay=initial)
    written.append(path)
    return written
