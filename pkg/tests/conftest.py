import time
from dataclasses import dataclass

import numpy as np
import pytest

from hvl.imaging import Image
from hvl.pipeline import render
from hvl.scene import load_scene
from hvl.shading import GatherConfig

PATH_SPP = 4096
_ACCEPTANCE = {}


@dataclass
class Reference:
    image: Image
    seconds: float


@pytest.fixture(scope="session")
def cornell_scene():
    return load_scene("cornell")


@pytest.fixture(scope="session")
def cornell_path_reference(cornell_scene):
    """Indirect-only one-bounce path oracle at 64x64, no x-to-y visibility."""
    cfg = GatherConfig(mode="path", path_samples=PATH_SPP, seed=7)
    t0 = time.perf_counter()
    res = render(cornell_scene, cfg, indirect_only=True, threads=1)
    assert np.isfinite(res.indirect.pixels).all()
    return Reference(res.indirect, time.perf_counter() - t0)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE[number] = line
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[number])
