"""Structural subspaces of an LTI plant and the image/initial-state checks.

Provides the controllable subspace (image of the controllability matrix),
the unobservable subspace (kernel of the stacked observability matrix), the
smallest A-invariant subspace containing given initial states, the degree of
the minimal polynomial of A, and the two data-based checks built on them:
image equality of the stacked state/input data matrix against
``(controllable + invariant-span) x R^{mL}``, and membership of a candidate
initial state in ``controllable + unobservable + invariant-span``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .hankel import is_collectively_pe, mosaic_hankel
from .lti import LtiSystem, TrajectorySet
from .numerics import (
    DEFAULT_RESIDUAL_RTOL,
    DEFAULT_TOL,
    RankTolerance,
    SubspaceBasis,
    as_matrix,
    as_vector,
    numerical_rank,
    right_kernel,
    subspace_contains,
    subspace_from_columns,
    subspace_gap,
    subspace_sum,
)

__all__ = [
    "Verdict",
    "HypothesisViolated",
    "ImageCheck",
    "controllable_subspace",
    "unobservable_subspace",
    "krylov_subspace",
    "min_poly_degree",
    "initial_state_matrix",
    "theorem1_image_check",
    "theorem1_state_condition",
]


class Verdict(Enum):
    """Tri-state outcome of a hypothesis-gated check."""

    HOLDS = "holds"
    FAILS = "fails"
    HYPOTHESIS_VIOLATED = "hypothesis_violated"


class HypothesisViolated(RuntimeError):
    """An operation's persistency-of-excitation hypothesis does not hold.

    Raised by operations that cannot produce a result under a violated
    hypothesis (as opposed to checks, which report the tri-state verdict).
    Carries the excitation order that was required.
    """

    def __init__(self, message: str, order_required: int):
        super().__init__(message)
        self.order_required = order_required
        self.verdict = Verdict.HYPOTHESIS_VIOLATED


def controllability_matrix(sys: LtiSystem) -> np.ndarray:
    """``[B, AB, ..., A^{n-1}B]`` of shape ``(n, n*m)``."""
    blocks = []
    block = sys.B
    for _ in range(sys.n):
        blocks.append(block)
        block = sys.A @ block
    return np.hstack(blocks)


def observability_matrix(sys: LtiSystem) -> np.ndarray:
    """``[C; CA; ...; CA^{n-1}]`` of shape ``(n*p, n)``."""
    blocks = []
    block = sys.C
    for _ in range(sys.n):
        blocks.append(block)
        block = block @ sys.A
    return np.vstack(blocks)


def controllable_subspace(
    sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL
) -> SubspaceBasis:
    """Image of the controllability matrix."""
    return subspace_from_columns(controllability_matrix(sys), tol)


def unobservable_subspace(
    sys: LtiSystem, tol: RankTolerance = DEFAULT_TOL
) -> SubspaceBasis:
    """Kernel of the stacked observability matrix."""
    return SubspaceBasis(sys.n, right_kernel(observability_matrix(sys), tol), tol)


def krylov_subspace(A, X0, tol: RankTolerance = DEFAULT_TOL) -> SubspaceBasis:
    """Smallest A-invariant subspace containing the columns of X0.

    Computed as the image of ``[X0, A X0, ..., A^{n-1} X0]``.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    X0 = as_matrix(X0, "X0")
    if X0.shape[0] != n:
        raise ValueError(f"X0 has {X0.shape[0]} rows, expected {n}")
    blocks = []
    block = X0
    for _ in range(n):
        blocks.append(block)
        block = A @ block
    return subspace_from_columns(np.hstack(blocks), tol)


def min_poly_degree(A, tol: RankTolerance = DEFAULT_TOL) -> int:
    """Degree of the minimal polynomial of A.

    Smallest d >= 1 with vec(A^d) in span{vec(I), ..., vec(A^{d-1})},
    decided by rank tests on the vectorized powers. Columns are normalized
    before the rank test; this does not change their span but keeps the
    test meaningful when powers of A grow or decay.
    """
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape[1] != n:
        raise ValueError(f"A must be square, got {A.shape}")
    powers = [np.eye(n)]
    for _ in range(n):
        powers.append(A @ powers[-1])
    cols = []
    for P in powers:
        v = P.reshape(-1)
        norm = np.linalg.norm(v)
        cols.append(v / norm if norm > 0 else v)
    stacked = np.column_stack(cols)
    for d in range(1, n + 1):
        if numerical_rank(stacked[:, : d + 1], tol) == numerical_rank(
            stacked[:, :d], tol
        ):
            return d
    return n


def initial_state_matrix(data: TrajectorySet) -> np.ndarray:
    """``[x0^1, ..., x0^tau]`` collected from state-carrying trajectories."""
    cols = []
    for i, traj in enumerate(data):
        if traj.states is None:
            raise ValueError(f"trajectory {i} carries no states")
        cols.append(traj.states[0])
    return np.column_stack(cols)


def _state_input_data_matrix(data: TrajectorySet, L: int) -> np.ndarray:
    """Stack of width-1 state windows over depth-L input windows.

    Rows: the state ``x_j`` starting each length-L window (one block row),
    then the depth-L input mosaic; columns align across both blocks.
    """
    state_blocks = []
    for i, traj in enumerate(data):
        if traj.states is None:
            raise ValueError(f"trajectory {i} carries no states")
        if traj.length < L:
            raise ValueError(f"trajectory {i} shorter than L={L}")
        state_blocks.append(traj.states[: traj.length - L + 1].T)
    x_row = np.hstack(state_blocks)
    u_rows = mosaic_hankel(data, L, "inputs")
    return np.vstack([x_row, u_rows])


@dataclass(frozen=True)
class ImageCheck:
    """Outcome of the data-image equality check.

    `gap` is the largest mutual projection residual between the two
    subspaces being compared (NaN when the PE hypothesis failed and the
    comparison was not performed).
    """

    verdict: Verdict
    gap: float
    pe_order_required: int
    data_dim: int
    target_dim: int


def theorem1_image_check(
    sys: LtiSystem,
    data: TrajectorySet,
    L: int,
    delta: int | None = None,
    tol: RankTolerance = DEFAULT_TOL,
    rtol: float = DEFAULT_RESIDUAL_RTOL,
) -> ImageCheck:
    """Check that the stacked state/input data matrix has the predicted image.

    The predicted image is ``(R + K[x0^1..x0^tau]) x R^{mL}`` where R is the
    controllable subspace and K the smallest A-invariant subspace containing
    the initial states. The inputs must be collectively PE of order
    ``delta + L`` with ``delta >= min_poly_degree(A)``; when they are not,
    the check reports HYPOTHESIS_VIOLATED instead of a verdict.
    """
    if delta is None:
        delta = min_poly_degree(sys.A, tol)
    else:
        dmin = min_poly_degree(sys.A, tol)
        if delta < dmin:
            raise ValueError(f"delta={delta} below minimal-polynomial degree {dmin}")
    order = delta + L
    if not is_collectively_pe(data, order, tol):
        return ImageCheck(Verdict.HYPOTHESIS_VIOLATED, float("nan"), order, -1, -1)

    stacked = _state_input_data_matrix(data, L)
    data_space = subspace_from_columns(stacked, tol)

    X0 = initial_state_matrix(data)
    rk = subspace_sum(
        controllable_subspace(sys, tol), krylov_subspace(sys.A, X0, tol), tol=tol
    )
    mL = sys.m * L
    n = sys.n
    target = np.zeros((n + mL, rk.dim + mL))
    target[:n, : rk.dim] = rk.basis
    target[n:, rk.dim :] = np.eye(mL)
    target_space = SubspaceBasis(n + mL, target, tol)

    gap = subspace_gap(data_space, target_space)
    ok = data_space.dim == target_space.dim and gap <= rtol
    return ImageCheck(
        Verdict.HOLDS if ok else Verdict.FAILS,
        gap,
        order,
        data_space.dim,
        target_space.dim,
    )


def theorem1_state_condition(
    sys: LtiSystem,
    data: TrajectorySet,
    xbar0,
    tol: RankTolerance = DEFAULT_TOL,
    rtol: float = DEFAULT_RESIDUAL_RTOL,
) -> bool:
    """Membership of `xbar0` in controllable + unobservable + invariant-span."""
    xbar0 = as_vector(xbar0, "xbar0")
    X0 = initial_state_matrix(data)
    total = subspace_sum(
        controllable_subspace(sys, tol),
        unobservable_subspace(sys, tol),
        krylov_subspace(sys.A, X0, tol),
        tol=tol,
    )
    return subspace_contains(total, xbar0, rtol)
