import json
from importlib.resources import files

import numpy as np
import pytest

from willems import LtiSystem


def mixed_plant() -> LtiSystem:
    """Four-state benchmark: a controllable double integrator chained with an
    uncontrollable (but observable) stable pair. Both outputs are direct
    state reads."""
    A = np.array(
        [
            [1.0, 0.5, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 0.9, 0.5],
            [0.0, 0.0, 0.0, 0.9],
        ]
    )
    B = np.array([[0.125], [0.5], [0.0], [0.0]])
    C = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])
    D = np.zeros((2, 1))
    return LtiSystem(A, B, C, D)


@pytest.fixture
def bench() -> LtiSystem:
    return mixed_plant()


def load_config(name: str) -> dict:
    return json.loads(files("willems").joinpath(f"configs/{name}").read_text())


def agent_pair() -> tuple[np.ndarray, np.ndarray]:
    """The bundled four-state, two-input agent matrices (marginally
    unstable, controllable)."""
    cfg = load_config("fig2_multiagent.json")
    return np.array(cfg["Abar"]), np.array(cfg["Bbar"])
