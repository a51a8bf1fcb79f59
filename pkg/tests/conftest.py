"""Shared small meshes for the unit tests."""
from __future__ import annotations

import functools

import numpy as np
import pytest

from ferrovolt.meshgen import Shape, triangulated_box, unit_square


@functools.lru_cache(maxsize=None)
def square_mesh(n: int = 4, kind: str = "quad", shear: float = 0.0, warp: float = 0.0):
    return unit_square(n, kind, shear=shear, warp=warp).to_mesh()


@functools.lru_cache(maxsize=None)
def disc_in_box(h_near: float = 0.02, name: str = "disc", radius: float = 0.0375):
    shapes = [Shape(name, "circle", (0.0, 0.0), (radius, radius))]
    return triangulated_box(shapes, h_near=h_near, h_far=0.15).to_mesh()


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion, repeated after the run
# ---------------------------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
