import numpy as np
import pytest

from handfit.template import N_SHAPE, HandTemplate, make_toy_template


@pytest.fixture(scope="session")
def tpl():
    return make_toy_template()


def tiny_template(weights, regressor=None, vertices=None):
    """A two-joint template (root plus one articulation) over a handful of
    vertices, for hand-checkable skinning and regression."""
    weights = np.asarray(weights, dtype=float)
    n = weights.shape[0]
    if vertices is None:
        vertices = np.column_stack([np.arange(n, dtype=float), np.zeros(n), np.zeros(n)])
    if regressor is None:
        regressor = np.full((2, n), 1.0 / n)
    return HandTemplate(
        mean_vertices=vertices,
        faces=np.array([[0, 1, 2]]),
        shape_basis=np.zeros((N_SHAPE, n, 3)),
        pose_basis=np.zeros((9, n, 3)),
        skinning_weights=weights,
        joint_regressor=regressor,
        parents=np.array([-1, 0]),
        fingertips=np.array([n - 1]),
    )


def rot_z(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# acceptance results, echoed in the terminal summary even when output is captured
ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, name: str, ok: bool, detail: str) -> str:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {name} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
