import numpy as np
import pytest
from hypothesis import settings
from hypothesis import strategies as st

from polyflow.errors import FanError
from polyflow.polygon import Polygon, polygon_from_vertices

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

SQUARE_NORMALS = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)]


def random_star_polygon(rng: np.random.Generator, n: int, wobble: float = 0.5) -> Polygon:
    """Vertices at sorted random angles and random radii around the origin.

    Angular gaps are kept below pi so the chain is star-shaped about the origin
    and therefore simple.  Retries on (rare) collinear triples.
    """
    for _ in range(100):
        gaps = rng.uniform(0.2, 1.0, n)
        gaps *= 2 * np.pi / gaps.sum()
        if gaps.max() >= np.pi * 0.95:
            continue
        theta = np.cumsum(gaps) + rng.uniform(0, 2 * np.pi)
        r = 1.0 + wobble * rng.uniform(-1, 1, n)
        w = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
        w += rng.uniform(-0.2, 0.2, 2)
        try:
            return polygon_from_vertices(w)
        except FanError:
            continue
    raise RuntimeError("could not draw a random polygon")


@st.composite
def star_polygons(draw, min_n=3, max_n=24, wobble=0.5):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_star_polygon(np.random.default_rng(seed), n, wobble)


@st.composite
def same_fan_pairs(draw, min_n=3, max_n=24, amp=0.05):
    """A random polygon and a small height perturbation of it (same fan)."""
    p = draw(star_polygons(min_n, max_n))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    rng = np.random.default_rng(seed)
    scale = amp * p.edge_lengths().min()
    q = p.with_heights(p.heights + scale * rng.uniform(-1, 1, p.n))
    return p, q


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def square_normals():
    return list(SQUARE_NORMALS)


# (number, line) per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
