"""Receding-horizon control: model-based MPC, its data-driven counterpart,
and the closed-loop harness.

Both controllers minimize the same finite-horizon tracking cost

    sum_k (ybar_k - r_k)' Q (ybar_k - r_k) + ubar_k' R ubar_k

over a window that pins the last N measured input/output samples and leaves
the next L free. The model-based step enforces the state recursion
explicitly; the data-driven step replaces it with the requirement that the
whole window be a column combination of the depth-(N+L) block-Hankel matrix
of a recorded data trajectory. With online data (the prefix of the very
trajectory being controlled) the two feasible sets coincide, which the
closed-loop harness can verify side by side.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .hankel import is_collectively_pe
from .lti import LtiSystem, Trajectory, TrajectorySet, _atomic_write, random_input
from .numerics import as_matrix, as_vector
from .parameterize import build_trajectory_matrix
from .qp import QpSolution, QuadraticProgram, solve_qp
from .subspace import HypothesisViolated

__all__ = [
    "PredictiveConfig",
    "ClosedLoopLog",
    "InfeasibleStep",
    "mpc_step",
    "deepc_step",
    "run_closed_loop",
]

_EXCITE_RETRIES = 100


class InfeasibleStep(RuntimeError):
    """A controller sub-problem came back infeasible at some step."""

    def __init__(self, t: int, status: str):
        super().__init__(f"controller infeasible at t={t} (status {status})")
        self.t = t
        self.status = status


def _weight(w, name) -> np.ndarray:
    w = as_matrix(w, name)
    if w.shape[0] != w.shape[1]:
        raise ValueError(f"{name} must be square, got {w.shape}")
    if np.abs(w - w.T).max(initial=0.0) > 1e-10:
        raise ValueError(f"{name} is not symmetric")
    if w.size and np.linalg.eigvalsh(w).min() < -1e-10:
        raise ValueError(f"{name} is not positive semidefinite")
    return w


def _bound(value, dim: int, fill: float) -> np.ndarray:
    if value is None:
        return np.full(dim, fill)
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.shape == (1,):
        arr = np.full(dim, arr[0])
    if arr.shape != (dim,):
        raise ValueError(f"bound has shape {arr.shape}, expected ({dim},)")
    return arr


@dataclass(frozen=True)
class PredictiveConfig:
    """Shared controller/experiment parameters.

    N is the pinned past-window length, L the prediction horizon. The
    reference `r` is a single output sample (held constant over the horizon)
    or an (L, p) array. `u_min`/`u_max` bound the inputs; `y_min`/`y_max`
    are optional output bounds (None means unbounded). `excitation_low/high`
    set the uniform input range of the excitation phase, `pe_order` the
    excitation order the data-driven step demands of its data (defaults to
    N + L, the bare minimum for the window depth; the closed-loop harness
    draws excitation at the stronger model-aware order regardless), and `x0`
    the plant's initial state (defaults to zero).
    """

    N: int
    L: int
    Q: np.ndarray
    R: np.ndarray
    r: np.ndarray
    T: int
    K: int
    u_min: object = None
    u_max: object = None
    y_min: object = None
    y_max: object = None
    excitation_low: float = -1.0
    excitation_high: float = 1.0
    pe_order: int | None = None
    x0: object = None

    def __post_init__(self):
        if not (1 <= self.N <= self.T <= self.K):
            raise ValueError(
                f"need 1 <= N <= T <= K, got N={self.N} T={self.T} K={self.K}"
            )
        if self.L < 1:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "Q", _weight(self.Q, "Q"))
        object.__setattr__(self, "R", _weight(self.R, "R"))
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        if self.excitation_low > self.excitation_high:
            raise ValueError("excitation bounds out of order")
        self.reference()

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def m(self) -> int:
        return self.R.shape[0]

    def reference(self) -> np.ndarray:
        """Horizon reference, stacked to a length p*L vector."""
        r = self.r
        if r.ndim == 1:
            if r.shape != (self.p,):
                raise ValueError(f"r has shape {r.shape}, expected ({self.p},)")
            return np.tile(r, self.L)
        if r.shape != (self.L, self.p):
            raise ValueError(
                f"r has shape {r.shape}, expected ({self.L}, {self.p})"
            )
        return r.reshape(-1)

    def input_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            _bound(self.u_min, self.m, -np.inf),
            _bound(self.u_max, self.m, np.inf),
        )

    def output_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            _bound(self.y_min, self.p, -np.inf),
            _bound(self.y_max, self.p, np.inf),
        )


def _cost_blocks(cfg: PredictiveConfig):
    """Quadratic cost on the stacked (ubar, ybar) block, plus the constant
    term so reported objectives equal the tracking cost itself."""
    L = cfg.L
    Qbar = np.kron(np.eye(L), cfg.Q)
    Rbar = np.kron(np.eye(L), cfg.R)
    rvec = cfg.reference()
    return Qbar, Rbar, rvec, float(rvec @ Qbar @ rvec)


def _check_history(history: Trajectory, cfg: PredictiveConfig, t: int):
    if history.outputs is None:
        raise ValueError("history carries no outputs")
    if history.length < t:
        raise ValueError(f"history has {history.length} samples, need {t}")
    if t < cfg.N:
        raise ValueError(f"t={t} is below the past-window length N={cfg.N}")


def _solve_or_raise(prob: QuadraticProgram, t: int) -> QpSolution:
    sol = solve_qp(prob)
    if sol.status in ("infeasible", "unbounded"):
        raise InfeasibleStep(t, sol.status)
    return sol


def mpc_step(
    sys: LtiSystem, history: Trajectory, cfg: PredictiveConfig, t: int
) -> tuple[np.ndarray, float]:
    """One model-based receding-horizon step at time t.

    Decision variables are the window states x_{t-N..t+L-1}, future inputs
    and future outputs; the past-window dynamics and output equations are
    pinned to the measured history. Returns the input to apply and the
    optimal tracking cost.
    """
    _check_history(history, cfg, t)
    n, m, p = sys.n, sys.m, sys.p
    N, L = cfg.N, cfg.L
    W = N + L
    nv = W * n + L * m + L * p
    def xof(k):
        return slice(k * n, (k + 1) * n)

    def uof(j):
        return slice(W * n + j * m, W * n + (j + 1) * m)

    def yof(j):
        return slice(W * n + L * m + j * p, W * n + L * m + (j + 1) * p)

    rows = (W - 1) * n + N * p + L * p
    Aeq = np.zeros((rows, nv))
    beq = np.zeros(rows)
    past_u = history.inputs[t - N : t]
    past_y = history.outputs[t - N : t]
    row = 0
    for k in range(W - 1):
        Aeq[row : row + n, xof(k + 1)] = np.eye(n)
        Aeq[row : row + n, xof(k)] = -sys.A
        if k < N:
            beq[row : row + n] = sys.B @ past_u[k]
        else:
            Aeq[row : row + n, uof(k - N)] = -sys.B
        row += n
    for k in range(N):
        Aeq[row : row + p, xof(k)] = sys.C
        beq[row : row + p] = past_y[k] - sys.D @ past_u[k]
        row += p
    for j in range(L):
        Aeq[row : row + p, yof(j)] = np.eye(p)
        Aeq[row : row + p, xof(N + j)] = -sys.C
        Aeq[row : row + p, uof(j)] = -sys.D
        row += p

    Qbar, Rbar, rvec, const = _cost_blocks(cfg)
    P = np.zeros((nv, nv))
    P[W * n : W * n + L * m, W * n : W * n + L * m] = 2.0 * Rbar
    P[W * n + L * m :, W * n + L * m :] = 2.0 * Qbar
    q = np.zeros(nv)
    q[W * n + L * m :] = -2.0 * Qbar @ rvec

    lb = np.full(nv, -np.inf)
    ub = np.full(nv, np.inf)
    u_lo, u_hi = cfg.input_bounds()
    y_lo, y_hi = cfg.output_bounds()
    for j in range(L):
        lb[uof(j)], ub[uof(j)] = u_lo, u_hi
        lb[yof(j)], ub[yof(j)] = y_lo, y_hi

    sol = _solve_or_raise(QuadraticProgram(P, q, Aeq, beq, lb, ub), t)
    return sol.x[uof(0)].copy(), sol.objective + const


def deepc_step(
    data: Trajectory, history: Trajectory, cfg: PredictiveConfig, t: int
) -> tuple[np.ndarray, float, np.ndarray]:
    """One data-driven receding-horizon step at time t.

    `data` is the recorded trajectory whose depth-(N+L) block-Hankel matrix
    replaces the model; its inputs must be persistently exciting of the
    configured order. Returns the input to apply, the optimal tracking cost
    and the column-combination certificate g.
    """
    _check_history(history, cfg, t)
    if data.outputs is None:
        raise ValueError("data carries no outputs")
    if t < data.length:
        raise ValueError(f"t={t} precedes the end of the length-{data.length} data")
    N, L = cfg.N, cfg.L
    m, p = data.m, data.outputs.shape[1]
    depth = N + L
    order = cfg.pe_order if cfg.pe_order is not None else depth
    dataset = TrajectorySet((data,))
    if not is_collectively_pe(dataset, order):
        raise HypothesisViolated(
            f"data inputs are not persistently exciting of order {order}", order
        )

    H = build_trajectory_matrix(dataset, depth)
    ng = H.shape[1]
    Hu, Hy = H[: m * depth], H[m * depth :]
    nv = ng + L * m + L * p
    uof = slice(ng, ng + L * m)
    yof = slice(ng + L * m, nv)

    rows = depth * (m + p)
    Aeq = np.zeros((rows, nv))
    beq = np.zeros(rows)
    Aeq[: N * m, :ng] = Hu[: N * m]
    beq[: N * m] = history.inputs[t - N : t].reshape(-1)
    Aeq[N * m : depth * m, :ng] = Hu[N * m :]
    Aeq[N * m : depth * m, uof] = -np.eye(L * m)
    Aeq[depth * m : depth * m + N * p, :ng] = Hy[: N * p]
    beq[depth * m : depth * m + N * p] = history.outputs[t - N : t].reshape(-1)
    Aeq[depth * m + N * p :, :ng] = Hy[N * p :]
    Aeq[depth * m + N * p :, yof] = -np.eye(L * p)

    Qbar, Rbar, rvec, const = _cost_blocks(cfg)
    P = np.zeros((nv, nv))
    P[uof, uof] = 2.0 * Rbar
    P[yof, yof] = 2.0 * Qbar
    q = np.zeros(nv)
    q[yof] = -2.0 * Qbar @ rvec

    lb = np.full(nv, -np.inf)
    ub = np.full(nv, np.inf)
    u_lo, u_hi = cfg.input_bounds()
    y_lo, y_hi = cfg.output_bounds()
    lb[uof], ub[uof] = np.tile(u_lo, L), np.tile(u_hi, L)
    lb[yof], ub[yof] = np.tile(y_lo, L), np.tile(y_hi, L)

    sol = _solve_or_raise(QuadraticProgram(P, q, Aeq, beq, lb, ub), t)
    u0 = sol.x[ng : ng + m].copy()
    return u0, sol.objective + const, sol.x[:ng].copy()


@dataclass(frozen=True)
class ClosedLoopLog:
    """Per-step record of a closed-loop run over t = 0..K.

    The excitation phase fills `objectives` with NaN and `statuses` with
    "excite". When the run compared both controllers, `alt_inputs` and
    `alt_objectives` hold the non-applied controller's step results.
    `completed` is False when a step was infeasible and the run aborted.
    """

    inputs: np.ndarray
    outputs: np.ndarray
    phases: tuple
    objectives: np.ndarray
    statuses: tuple
    solve_ms: np.ndarray
    reference: np.ndarray
    completed: bool = True
    alt_inputs: np.ndarray | None = None
    alt_objectives: np.ndarray | None = None

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    def to_csv(self, path):
        m = self.inputs.shape[1]
        p = self.outputs.shape[1]
        header = (
            ["t", "phase"]
            + [f"u_{i}" for i in range(m)]
            + [f"y_{i}" for i in range(p)]
            + ["objective", "status", "solve_ms"]
        )
        lines = [",".join(header)]
        for t in range(self.length):
            cells = [str(t), self.phases[t]]
            cells += [f"{v:.17g}" for v in self.inputs[t]]
            cells += [f"{v:.17g}" for v in self.outputs[t]]
            cells.append(f"{self.objectives[t]:.17g}")
            cells.append(self.statuses[t])
            cells.append(f"{self.solve_ms[t]:.17g}")
            lines.append(",".join(cells))
        _atomic_write(path, "\n".join(lines) + "\n")

    def to_plot_csv(self, path):
        """Outputs next to the constant reference lines, for plotting."""
        p = self.outputs.shape[1]
        header = (
            ["t"]
            + [f"y_{i}" for i in range(p)]
            + [f"r_{i}" for i in range(p)]
        )
        lines = [",".join(header)]
        ref = np.asarray(self.reference, dtype=float).reshape(-1)[:p]
        for t in range(self.length):
            cells = [str(t)]
            cells += [f"{v:.17g}" for v in self.outputs[t]]
            cells += [f"{v:.17g}" for v in ref]
            lines.append(",".join(cells))
        _atomic_write(path, "\n".join(lines) + "\n")


def _draw_excitation(sys, cfg, seed):
    """Uniform input draws, retried until the model-aware excitation order
    holds (uniform draws pass with probability 1; the cap guards degenerate
    seeds)."""
    order = sys.n + cfg.L + cfg.N
    rng = np.random.default_rng(seed)
    for _ in range(_EXCITE_RETRIES):
        u = rng.uniform(
            cfg.excitation_low, cfg.excitation_high, size=(cfg.T, sys.m)
        )
        probe = TrajectorySet((Trajectory(u),))
        if is_collectively_pe(probe, order):
            return u
    raise RuntimeError(
        f"no excitation of order {order} found in {_EXCITE_RETRIES} draws"
    )


def run_closed_loop(
    sys: LtiSystem,
    cfg: PredictiveConfig,
    controller: str = "deepc",
    seed: int = 0,
) -> ClosedLoopLog:
    """Simulate the full experiment: seeded excitation on [0, T-1], then the
    chosen controller from t = T through K inclusive.

    `controller` is "mpc", "deepc", or "both"; with "both" the data-driven
    input is applied and the model-based step is solved alongside for
    comparison, filling the `alt_*` log fields.
    """
    if controller not in ("mpc", "deepc", "both"):
        raise ValueError(f"unknown controller {controller!r}")
    if sys.m != cfg.m or sys.p != cfg.p:
        raise ValueError("config weight dimensions do not match the system")
    u_exc = _draw_excitation(sys, cfg, seed)
    if cfg.x0 is None:
        x = np.zeros(sys.n)
    else:
        x = as_vector(cfg.x0, "x0").copy()
        if x.shape != (sys.n,):
            raise ValueError(f"x0 has shape {x.shape}, expected ({sys.n},)")
    K, T = cfg.K, cfg.T
    inputs = np.zeros((K + 1, sys.m))
    outputs = np.zeros((K + 1, sys.p))
    objectives = np.full(K + 1, np.nan)
    solve_ms = np.zeros(K + 1)
    phases = []
    statuses = []
    alt_inputs = np.full((K + 1, sys.m), np.nan) if controller == "both" else None
    alt_objectives = np.full(K + 1, np.nan) if controller == "both" else None
    data = None
    completed = True

    for t in range(K + 1):
        if t < T:
            u_t = u_exc[t]
            phases.append("excite")
            statuses.append("excite")
        else:
            if data is None:
                data = Trajectory(
                    inputs[:T].copy(), outputs=outputs[:T].copy()
                )
            history = Trajectory(
                inputs[:t].copy(), outputs=outputs[:t].copy()
            )
            start = time.perf_counter()
            try:
                if controller == "mpc":
                    u_t, obj = mpc_step(sys, history, cfg, t)
                else:
                    u_t, obj, _ = deepc_step(data, history, cfg, t)
                    if controller == "both":
                        alt_u, alt_obj = mpc_step(sys, history, cfg, t)
                        alt_inputs[t] = alt_u
                        alt_objectives[t] = alt_obj
            except InfeasibleStep as exc:
                solve_ms[t] = 1e3 * (time.perf_counter() - start)
                phases.append("control")
                statuses.append(exc.status)
                completed = False
                cut = t + 1
                inputs[t] = np.nan
                outputs[t] = np.nan
                inputs, outputs = inputs[:cut], outputs[:cut]
                objectives, solve_ms = objectives[:cut], solve_ms[:cut]
                if alt_inputs is not None:
                    alt_inputs = alt_inputs[:cut]
                    alt_objectives = alt_objectives[:cut]
                break
            solve_ms[t] = 1e3 * (time.perf_counter() - start)
            objectives[t] = obj
            phases.append("control")
            statuses.append("optimal")
        inputs[t] = u_t
        outputs[t] = sys.C @ x + sys.D @ u_t
        x = sys.A @ x + sys.B @ u_t

    return ClosedLoopLog(
        inputs,
        outputs,
        tuple(phases),
        objectives,
        tuple(statuses),
        solve_ms,
        np.asarray(cfg.r, dtype=float),
        completed,
        alt_inputs,
        alt_objectives,
    )
