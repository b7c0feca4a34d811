import numpy as np
import pytest

from stcutfem.cutgeom import cut_geometry
from stcutfem.levelset import init_circle
from stcutfem.mesh import build_uniform_mesh, refine_uniform


def circle_geometry(n, center=(0.5, 0.22), radius=0.17, box=(0.0, 1.0, 0.0, 1.0), t=0.0):
    coarse = build_uniform_mesh(box, n, n)
    fine = refine_uniform(coarse)
    return cut_geometry(init_circle(fine, center, radius, time=t), coarse)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: dict = {}


def record_acceptance(criterion: int, ok: bool, detail: str) -> None:
    _ACCEPTANCE[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(_ACCEPTANCE[criterion])


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[key])
