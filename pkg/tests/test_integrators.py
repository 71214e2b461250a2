import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polyflow.errors import FanMismatch, FpNonConvergence, InadmissibleIterate
from polyflow.integrators import (
    StepControl,
    Termination,
    euler_step,
    implicit_step,
    run,
    step_area_identity,
    time_grid,
)
from polyflow.laws import (
    AreaPreservingCurvatureFlow,
    ConstantSpeed,
    CurvatureFlow,
    LengthPreservingCurvatureFlow,
    VelocityLaw,
)
from polyflow.polygon import Polygon, build_fan
from polyflow.scenarios import preset_half_gon_triangle, preset_rectangle, preset_regular

from conftest import SQUARE_NORMALS, random_star_polygon, same_fan_pairs, star_polygons


class ZeroLaw(VelocityLaw):
    name = "zero"

    def __call__(self, fan, h, t=0.0):
        return np.zeros(fan.n)


def square(h=0.5):
    return Polygon(build_fan(SQUARE_NORMALS), np.full(4, h))


def midpoint_oracle(h, tau):
    # symmetric square of height hbar has kappa = 1/hbar, so the midpoint
    # equation hbar = h - (tau/2) / hbar is the quadratic hbar^2 - h hbar + tau/2 = 0
    hbar = (h + np.sqrt(h * h - 2 * tau)) / 2
    return 2 * hbar - h


# -- single steps -------------------------------------------------------------------


def test_euler_square_pcf():
    np.testing.assert_allclose(euler_step(square(), CurvatureFlow(), 0.0, 0.01).heights, 0.48, atol=1e-15)


def test_euler_zero_law_is_identity():
    p = random_star_polygon(np.random.default_rng(0), 7)
    np.testing.assert_array_equal(euler_step(p, ZeroLaw(), 0.0, 0.3).heights, p.heights)


def test_euler_constant_speed_perimeter_is_exact():
    p = square()
    q = euler_step(p, ConstantSpeed(1.0), 0.0, 0.1)
    np.testing.assert_allclose(q.heights, 0.6, atol=1e-15)
    assert q.perimeter() - p.perimeter() == pytest.approx(0.8, abs=1e-14)


def test_implicit_square_pcf():
    q, iters = implicit_step(square(), CurvatureFlow(), 0.0, 0.01)
    np.testing.assert_allclose(q.heights, np.sqrt(0.25 - 0.02), atol=1e-15)
    np.testing.assert_allclose(q.heights, midpoint_oracle(0.5, 0.01), atol=1e-15)
    assert q.heights[0] == pytest.approx(0.47958315, abs=1e-8)
    assert 1 < iters <= 20


def test_implicit_zero_law_single_iteration():
    p = random_star_polygon(np.random.default_rng(1), 6)
    q, iters = implicit_step(p, ZeroLaw(), 0.0, 0.1)
    assert iters == 1
    np.testing.assert_array_equal(q.heights, p.heights)


@given(star_polygons(max_n=20), st.floats(1e-4, 0.1))
def test_implicit_constant_speed_equals_euler(p, tau):
    q, iters = implicit_step(p, ConstantSpeed(0.7), 0.0, tau)
    np.testing.assert_allclose(q.heights, euler_step(p, ConstantSpeed(0.7), 0.0, tau).heights, atol=1e-15)
    assert iters <= 2


@given(star_polygons(max_n=16))
@settings(max_examples=25)
def test_implicit_step_solves_midpoint_equation(p):
    law = CurvatureFlow()
    tau = 1e-3 * p.edge_lengths().min() ** 2
    q, _ = implicit_step(p, law, 0.0, tau)
    mid = (p.heights + q.heights) / 2
    resid = q.heights - p.heights - tau * law(p.fan, mid, tau / 2)
    assert np.max(np.abs(resid)) <= 4e-15 * max(1.0, np.abs(p.heights).max())


def test_implicit_nonconvergence():
    p = preset_half_gon_triangle(7)
    with pytest.raises(FpNonConvergence) as info:
        implicit_step(p, CurvatureFlow(), 0.0, 0.05, StepControl(tau=0.05, max_fp_iters=5))
    assert info.value.iterations == 5


def test_implicit_inadmissible_midpoint():
    # near extinction the first midpoint iterate already loses its edges
    p = square(0.01)
    with pytest.raises(InadmissibleIterate):
        implicit_step(p, CurvatureFlow(), 0.0, 0.01, StepControl(tau=0.01))


def test_gaps_are_reported():
    gaps = []
    _, iters = implicit_step(preset_half_gon_triangle(5), CurvatureFlow(), 0.0, 1e-3, gaps=gaps)
    assert len(gaps) == iters
    assert gaps[-1] <= gaps[0]


def test_fixed_point_contraction_ratio_scales_with_tau():
    p = preset_half_gon_triangle(7)
    first_ratios = []
    for tau in (4e-3, 2e-3, 1e-3, 5e-4):
        gaps = []
        implicit_step(p, CurvatureFlow(), 0.0, tau, gaps=gaps)
        r = np.array(gaps[1:]) / np.array(gaps[:-1])
        real = r[np.array(gaps[1:]) > 1e-13]
        assert np.all(real < 1)
        first_ratios.append(real[0])
    steps = np.array(first_ratios[:-1]) / np.array(first_ratios[1:])
    np.testing.assert_allclose(steps, 2.0, rtol=0.1)


# -- trapezoid identity -------------------------------------------------------------


def test_trapezoid_identity_squares():
    assert step_area_identity(square(0.5), square(0.6), 1.0) == pytest.approx(0.0, abs=1e-15)
    assert step_area_identity(square(0.5), square(0.5), 0.1) == 0.0


@given(same_fan_pairs(amp=3.0), st.floats(1e-3, 1.0))
def test_trapezoid_identity_random(pair, tau):
    p, q = pair
    scale = max(abs(p.area()), abs(q.area())) / tau
    assert abs(step_area_identity(p, q, tau)) <= 1e-12 * scale


def test_trapezoid_identity_fan_mismatch():
    with pytest.raises(FanMismatch):
        step_area_identity(square(), preset_regular(5, 1.0), 0.1)


# -- time loop ----------------------------------------------------------------------


def test_time_grid():
    assert time_grid(0.12, 1e-4) == 1200
    assert time_grid(1.0, 0.3) == 4
    assert time_grid(0.05, 0.1) == 1


def test_last_step_is_shortened():
    traj = run(square(), CurvatureFlow(), "implicit", StepControl(tau=0.03, t_end=0.1))
    assert traj.n_steps == 4
    assert traj.records[-1].tau == pytest.approx(0.01)
    assert traj.t_final == pytest.approx(0.1, abs=1e-15)


def test_square_run_final_area():
    traj = run(square(), CurvatureFlow(), "implicit", StepControl(tau=1e-4, t_end=0.12))
    assert traj.completed and traj.n_steps == 1200
    assert traj.final.area() == pytest.approx(1 - 8 * 0.12, abs=1e-8)


def test_square_run_past_extinction_collapses():
    traj = run(square(), CurvatureFlow(), "implicit", StepControl(tau=1e-4, t_end=0.2))
    assert traj.reason == Termination.EDGE_COLLAPSE
    assert traj.t_final == pytest.approx(0.125, abs=2e-3)
    assert np.all(traj.final.edge_lengths() > 0)


def test_euler_run_past_extinction_collapses():
    traj = run(square(), CurvatureFlow(), "euler", StepControl(tau=1e-4, t_end=0.2))
    assert traj.reason == Termination.EDGE_COLLAPSE
    assert traj.t_final == pytest.approx(0.125, abs=2e-3)


def test_backward_flow_euler_loses_cas_implicit_keeps_it():
    p = preset_regular(7, 0.1)
    law = CurvatureFlow(-1)
    mu = law.conservation(p.fan).mu_cas
    ctl = StepControl(tau=1e-4, t_end=1.0)
    e = run(p, law, "euler", ctl)
    i = run(p, law, "implicit", ctl)
    e_delta = max(abs(r.discrete_area_speed - mu) for r in e.records)
    i_delta = max(abs(r.discrete_area_speed - mu) for r in i.records)
    assert (not e.completed) or e_delta > 1e-3
    assert i.completed and i_delta <= 1e-7


def test_retry_halving_rescues_large_step():
    p = preset_half_gon_triangle(7)
    base = dict(tau=0.02, t_end=0.04, max_fp_iters=8)
    plain = run(p, CurvatureFlow(), "implicit", StepControl(**base))
    assert plain.reason == Termination.FP_NONCONVERGENCE
    rescued = run(p, CurvatureFlow(), "implicit", StepControl(retry_halving=True, **base))
    assert rescued.completed
    assert rescued.n_steps > 2
    assert rescued.t_final == pytest.approx(0.04)
    assert np.all(np.diff(rescued.times()) > 0)


def test_run_rejects_unknown_scheme():
    with pytest.raises(ValueError):
        run(square(), CurvatureFlow(), "rk4")


def test_step_control_validation():
    for bad in (dict(tau=0), dict(eps_fp=-1), dict(max_fp_iters=0), dict(t_end=0)):
        with pytest.raises(ValueError):
            StepControl(**bad)


def test_iteration_counts_are_logged(caplog):
    with caplog.at_level(logging.DEBUG, logger="polyflow"):
        run(square(), CurvatureFlow(), "implicit", StepControl(tau=1e-2, t_end=0.03))
    assert sum("fp_iters=" in m for m in caplog.messages) == 3


# -- discrete conservation along runs -----------------------------------------------


@given(star_polygons(min_n=4, max_n=14, wobble=0.3))
@settings(max_examples=15)
def test_implicit_inherits_cas(p):
    law = CurvatureFlow()
    mu = law.conservation(p.fan).mu_cas
    tau = 1e-3 * p.edge_lengths().min() ** 2
    traj = run(p, law, "implicit", StepControl(tau=tau, t_end=20 * tau))
    fan = p.fan
    for r in traj.records:
        slack = 1e-12 * max(1.0, r.area_before) + fan.n * fan.c_star * 1e-15
        assert abs(r.area_after - r.area_before - mu * r.tau) <= slack


@pytest.mark.parametrize("scheme", ["euler", "implicit"])
def test_both_schemes_inherit_cls(scheme):
    p = random_star_polygon(np.random.default_rng(5), 11, 0.3)
    for law in (ConstantSpeed(0.3), LengthPreservingCurvatureFlow()):
        mu = law.conservation(p.fan).mu_cls
        traj = run(p, law, scheme, StepControl(tau=1e-4, t_end=5e-3))
        for r in traj.records:
            assert abs(r.perimeter_after - r.perimeter_before - mu * r.tau) <= 1e-12 * max(1.0, r.perimeter_before)


@pytest.mark.parametrize("scheme", ["euler", "implicit"])
def test_both_schemes_curve_shortening(scheme):
    p = random_star_polygon(np.random.default_rng(6), 9, 0.3)
    for law in (CurvatureFlow(), AreaPreservingCurvatureFlow()):
        traj = run(p, law, scheme, StepControl(tau=1e-4, t_end=5e-3))
        for r in traj.records:
            assert r.perimeter_after <= r.perimeter_before + 1e-12 * r.perimeter_before


@pytest.mark.parametrize("scheme", ["euler", "implicit"])
@pytest.mark.parametrize("n", [3, 7, 12])
def test_regular_polygon_keeps_symmetry(scheme, n):
    traj = run(preset_regular(n, 1.0), CurvatureFlow(), scheme, StepControl(tau=1e-3, t_end=0.3))
    H = traj.heights()
    assert np.max(H.max(axis=1) - H.min(axis=1)) <= 1e-13


def test_rectangle_run_stays_a_rectangle():
    traj = run(preset_rectangle(0.6, 0.4), CurvatureFlow(), "implicit", StepControl(tau=1e-3, t_end=0.05))
    H = traj.heights()
    np.testing.assert_allclose(H[:, 0], H[:, 2], atol=1e-15)
    np.testing.assert_allclose(H[:, 1], H[:, 3], atol=1e-15)


def test_every_stored_state_is_admissible():
    traj = run(preset_half_gon_triangle(22), CurvatureFlow(), "implicit", StepControl(tau=1e-3, t_end=1.0))
    assert not traj.completed
    assert all(np.all(Polygon(traj.fan, r.heights_after).edge_lengths() > 0) for r in traj.records)
