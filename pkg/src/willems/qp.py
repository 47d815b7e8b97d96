"""Convex quadratic programs with equality and box constraints.

Solves

    minimize    0.5 x'Px + q'x
    subject to  Aeq x = beq,  lb <= x <= ub

for symmetric positive-semidefinite P. The cost may be singular and the
equality rows rank-deficient, which rules out textbook KKT factorizations;
instead an ADMM sweep (splitting on the stacked constraint matrix, so the
iteration matrix is positive definite regardless of P and Aeq) localizes the
active set, and a polish step re-solves the resulting equality-constrained
program by minimum-norm least squares and verifies the full KKT system.
Solutions carry the measured KKT residual. Everything is deterministic for
fixed inputs: fixed starting point, fixed iteration schedule, no
randomization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_matrix, as_vector, least_squares

__all__ = ["QuadraticProgram", "QpSolution", "solve_qp"]

_SYM_TOL = 1e-10

# ADMM constants (fixed; tuning knobs are not exposed on purpose, the
# contract is the KKT residual, not the path to it).
_SIGMA = 1e-6
_RHO_BOX = 0.1
_RHO_EQ = 1e3 * _RHO_BOX
_RHO_MIN = 1e-6
_RHO_MAX = 1e7
_BALANCE = 5.0
_ALPHA = 1.6
_CHECK_EVERY = 25
_EPS_INFEAS = 1e-6


@dataclass(frozen=True)
class QuadraticProgram:
    """Problem data. Bounds are per-coordinate, +-inf for absent ones."""

    P: np.ndarray
    q: np.ndarray
    Aeq: np.ndarray | None = None
    beq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None

    def __post_init__(self):
        P = as_matrix(self.P, "P")
        q = as_vector(self.q, "q")
        n = q.shape[0]
        if P.shape != (n, n):
            raise ValueError(f"P is {P.shape}, expected ({n}, {n})")
        if np.abs(P - P.T).max(initial=0.0) > _SYM_TOL:
            raise ValueError("P is not symmetric within 1e-10")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "q", q)
        if (self.Aeq is None) != (self.beq is None):
            raise ValueError("Aeq and beq must be given together")
        if self.Aeq is not None:
            Aeq = as_matrix(self.Aeq, "Aeq")
            beq = as_vector(self.beq, "beq")
            if Aeq.shape != (beq.shape[0], n):
                raise ValueError(
                    f"Aeq is {Aeq.shape}, expected ({beq.shape[0]}, {n})"
                )
            object.__setattr__(self, "Aeq", Aeq)
            object.__setattr__(self, "beq", beq)
        lb = self._bound(self.lb, n, -np.inf, "lb")
        ub = self._bound(self.ub, n, np.inf, "ub")
        if (lb > ub).any():
            raise ValueError("lb exceeds ub on some coordinate")
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @staticmethod
    def _bound(value, n, fill, name):
        if value is None:
            return np.full(n, fill)
        arr = np.asarray(value, dtype=float).reshape(-1)
        if arr.shape != (n,):
            raise ValueError(f"{name} has shape {arr.shape}, expected ({n},)")
        if np.isnan(arr).any():
            raise ValueError(f"{name} contains NaN")
        return arr

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.P @ x + self.q @ x)


@dataclass(frozen=True)
class QpSolution:
    """Solver outcome; `status` is optimal, infeasible, unbounded or
    max_iter. When optimal, kkt_residual is at most the solve tolerance."""

    x: np.ndarray
    objective: float
    status: str
    kkt_residual: float
    iterations: int


def _kkt_residual(prob: QuadraticProgram, x, y_eq, y_box) -> float:
    """Worst violation over stationarity, primal feasibility, dual signs and
    complementarity."""
    station = prob.P @ x + prob.q + y_box
    if prob.Aeq is not None:
        station = station + prob.Aeq.T @ y_eq
    worst = float(np.abs(station).max(initial=0.0))
    if prob.Aeq is not None:
        worst = max(worst, float(np.abs(prob.Aeq @ x - prob.beq).max(initial=0.0)))
    lo = prob.lb - x
    hi = x - prob.ub
    lo[~np.isfinite(lo)] = -np.inf
    hi[~np.isfinite(hi)] = -np.inf
    worst = max(worst, float(np.maximum(lo, hi).max(initial=0.0)))
    for i in range(prob.n):
        yi = y_box[i]
        if yi > 0:
            bound = prob.ub[i]
            comp = yi * (bound - x[i]) if np.isfinite(bound) else yi
        elif yi < 0:
            bound = prob.lb[i]
            comp = -yi * (x[i] - bound) if np.isfinite(bound) else -yi
        else:
            continue
        worst = max(worst, abs(comp))
    return worst


def _pinned_solve(prob: QuadraticProgram, lower, upper):
    """Minimum-norm KKT solve with the listed coordinates pinned to their
    bounds. Returns (x, y_eq, y_box, kkt_residual, consistent); `consistent`
    is False when the stacked system has no exact solution, meaning the face
    is wrong or the objective is unbounded along it.
    """
    n = prob.n
    me = 0 if prob.Aeq is None else prob.Aeq.shape[0]
    rows = []
    rhs = []
    if me:
        rows.append(prob.Aeq)
        rhs.append(prob.beq)
    for idx, bounds in ((lower, prob.lb), (upper, prob.ub)):
        for i in idx:
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e[None, :])
            rhs.append(np.array([bounds[i]]))
    if rows:
        Aact = np.vstack(rows)
        bact = np.concatenate(rhs)
    else:
        Aact = np.zeros((0, n))
        bact = np.zeros(0)
    ma = Aact.shape[0]
    kkt = np.zeros((n + ma, n + ma))
    kkt[:n, :n] = prob.P
    kkt[:n, n:] = Aact.T
    kkt[n:, :n] = Aact
    rhs_full = np.concatenate([-prob.q, bact])
    sol, res = least_squares(kkt, rhs_full)
    consistent = res <= 1e-6 * max(1.0, float(np.linalg.norm(rhs_full)))
    x = sol[:n]
    nu = sol[n:]
    y_eq = nu[:me]
    y_new = np.zeros(n)
    for k, i in enumerate(list(lower) + list(upper)):
        y_new[i] = nu[me + k]
    return x, y_eq, y_new, _kkt_residual(prob, x, y_eq, y_new), consistent


def _refine(prob: QuadraticProgram, lower, upper, always, tol):
    """Active-set refinement from a starting guess of pinned coordinates.

    Each pass re-solves the pinned KKT system by minimum-norm least squares,
    releases pins whose multipliers came back wrong-signed, and pins bounds
    the candidate violates, until the measured KKT residual meets `tol` or
    the set stops changing. Returns the best (x, y_eq, y_box, kkt_residual)
    seen, or None when every visited face was inconsistent.
    """
    n = prob.n
    lower = set(lower) | always
    upper = set(upper) - always
    best = None
    for _ in range(3 * n + 3):
        lo, up = sorted(lower), sorted(upper)
        x, y_eq, y_new, res, consistent = _pinned_solve(prob, lo, up)
        changed = False
        if consistent:
            if best is None or res < best[3]:
                best = (x, y_eq, y_new, res)
            if res <= tol:
                return best
            rel = 1e-10 * max(1.0, float(np.abs(y_new).max(initial=0.0)))
            for i in lo:
                if i not in always and y_new[i] > rel:
                    lower.discard(i)
                    changed = True
            for i in up:
                if y_new[i] < -rel:
                    upper.discard(i)
                    changed = True
        # pin only the single worst violation; adding every violated bound
        # at once can overshoot into an infeasible face
        feas = 1e-11 * max(1.0, float(np.abs(x).max(initial=0.0)))
        worst_i, worst_side, worst_gap = -1, 0, feas
        for i in range(n):
            if i in lower or i in upper:
                continue
            if np.isfinite(prob.lb[i]) and prob.lb[i] - x[i] > worst_gap:
                worst_i, worst_side, worst_gap = i, -1, prob.lb[i] - x[i]
            if np.isfinite(prob.ub[i]) and x[i] - prob.ub[i] > worst_gap:
                worst_i, worst_side, worst_gap = i, 1, x[i] - prob.ub[i]
        if worst_i >= 0:
            (lower if worst_side < 0 else upper).add(worst_i)
            changed = True
        if not changed:
            break
    return best


def _polish(prob: QuadraticProgram, y_box, tol):
    """Best certified solution from multiplier-seeded and blank refinements.

    The ADMM box multipliers (thresholded against their overall scale, so
    near-zero noise on inactive coordinates is ignored) propose the first
    active set. When that refinement cannot certify `tol`, a second one
    grows the set from scratch out of primal violations alone, which
    recovers the cases where a stalled ADMM proposed an infeasible face.
    """
    n = prob.n
    seed_thr = 1e-9 * max(1.0, float(np.abs(y_box).max(initial=0.0)))
    always = {
        i
        for i in range(n)
        if np.isfinite(prob.lb[i]) and prob.lb[i] == prob.ub[i]
    }
    lower = {
        i for i in range(n) if y_box[i] < -seed_thr and np.isfinite(prob.lb[i])
    }
    upper = {
        i for i in range(n) if y_box[i] > seed_thr and np.isfinite(prob.ub[i])
    }
    best = _refine(prob, lower, upper, always, tol)
    if best is not None and best[3] <= tol:
        return best
    retry = _refine(prob, set(), set(), always, tol)
    if retry is not None and (best is None or retry[3] < best[3]):
        best = retry
    return best


def solve_qp(
    prob: QuadraticProgram,
    tol: float = 1e-8,
    max_iter: int = 100000,
    ridge: float = 0.0,
    ridge_index=None,
) -> QpSolution:
    """Solve the program; see the module docstring for the method.

    `ridge` adds a Tikhonov term on the coordinates in `ridge_index` (all of
    them when None). It changes the problem and is off by default; singular
    P is otherwise resolved by the minimum-norm behavior of the polish step.
    """
    P = prob.P
    if ridge > 0.0:
        P = P.copy()
        idx = np.arange(prob.n) if ridge_index is None else np.asarray(ridge_index)
        P[idx, idx] += ridge
        prob = QuadraticProgram(P, prob.q, prob.Aeq, prob.beq, prob.lb, prob.ub)
    n = prob.n
    me = 0 if prob.Aeq is None else prob.Aeq.shape[0]

    if me:
        x_ls, res = least_squares(prob.Aeq, prob.beq)
        if res > 1e-9 * max(1.0, float(np.linalg.norm(prob.beq))):
            return QpSolution(
                x_ls, prob.objective(x_ls), "infeasible", float("inf"), 0
            )

    M = np.vstack([prob.Aeq, np.eye(n)]) if me else np.eye(n)
    low = np.concatenate([prob.beq, prob.lb]) if me else prob.lb
    high = np.concatenate([prob.beq, prob.ub]) if me else prob.ub
    rho = np.concatenate([np.full(me, _RHO_EQ), np.full(n, _RHO_BOX)])
    K = prob.P + _SIGMA * np.eye(n) + (M.T * rho) @ M

    x = np.zeros(n)
    z = np.clip(M @ x, low, high)
    y = np.zeros(me + n)
    x_mark, y_mark = x.copy(), y.copy()

    def admm_phase(eps, start, limit):
        nonlocal x, z, y, x_mark, y_mark, rho, K
        it = start
        while it < limit:
            steps = min(_CHECK_EVERY, limit - it)
            for _ in range(steps):
                rhs = _SIGMA * x - prob.q + M.T @ (rho * z - y)
                xt = np.linalg.solve(K, rhs)
                zt = M @ xt
                x = _ALPHA * xt + (1.0 - _ALPHA) * x
                zbar = _ALPHA * zt + (1.0 - _ALPHA) * z
                z_new = np.clip(zbar + y / rho, low, high)
                y = y + rho * (zbar - z_new)
                z = z_new
            it += steps
            Mx = M @ x
            r_prim = float(np.abs(Mx - z).max(initial=0.0))
            Px = prob.P @ x
            MTy = M.T @ y
            r_dual = float(np.abs(Px + prob.q + MTy).max(initial=0.0))
            e_prim = eps + eps * max(
                np.abs(Mx).max(initial=0.0), np.abs(z).max(initial=0.0)
            )
            e_dual = eps + eps * max(
                np.abs(Px).max(initial=0.0),
                np.abs(prob.q).max(initial=0.0),
                np.abs(MTy).max(initial=0.0),
            )
            if r_prim <= e_prim and r_dual <= e_dual:
                return "converged", it
            status = _certificates(prob, M, low, high, x - x_mark, y - y_mark)
            if status:
                return status, it
            x_mark, y_mark = x.copy(), y.copy()
            # rebalance the penalty when one residual has raced ahead of
            # the other, which otherwise stalls the sweep
            prim_rel = r_prim / max(
                np.abs(Mx).max(initial=0.0), np.abs(z).max(initial=0.0), 1e-12
            )
            dual_rel = r_dual / max(
                np.abs(Px).max(initial=0.0),
                np.abs(prob.q).max(initial=0.0),
                np.abs(MTy).max(initial=0.0),
                1e-12,
            )
            ratio = np.sqrt(prim_rel / max(dual_rel, 1e-16))
            if ratio > _BALANCE or ratio < 1.0 / _BALANCE:
                scale = float(np.clip(ratio, 1e-3, 1e3))
                rho = np.clip(rho * scale, _RHO_MIN, _RHO_MAX)
                K = prob.P + _SIGMA * np.eye(n) + (M.T * rho) @ M
        return "max_iter", it

    iterations = 0
    best = None
    # the first phase is capped so a stalled sweep still reaches the polish
    schedule = (
        (max(100.0 * tol, 1e-6), min(5000, max_iter)),
        (max(tol, 1e-10), max_iter),
    )
    for eps, limit in schedule:
        outcome, iterations = admm_phase(eps, iterations, limit)
        if outcome in ("infeasible", "unbounded"):
            return QpSolution(
                x, prob.objective(x), outcome, float("inf"), iterations
            )
        polished = _polish(prob, y[me:], tol)
        if polished is not None:
            px, _, _, pres = polished
            if best is None or pres < best[1]:
                best = (px, pres)
            if pres <= tol:
                return QpSolution(
                    px, prob.objective(px), "optimal", pres, iterations
                )

    admm_res = _kkt_residual(prob, x, y[:me], y[me:])
    if best is None or admm_res < best[1]:
        best = (x, admm_res)
    bx, bres = best
    status = "optimal" if bres <= tol else "max_iter"
    return QpSolution(bx, prob.objective(bx), status, bres, iterations)


def _certificates(prob, M, low, high, dx, dy):
    """OSQP-style infeasibility certificates from iterate differences."""
    ndy = float(np.abs(dy).max(initial=0.0))
    if ndy > 1e-14:
        if np.abs(M.T @ dy).max(initial=0.0) <= _EPS_INFEAS * ndy:
            support = 0.0
            valid = True
            for i in range(dy.shape[0]):
                d = dy[i]
                if d > _EPS_INFEAS * ndy:
                    if not np.isfinite(high[i]):
                        valid = False
                        break
                    support += high[i] * d
                elif d < -_EPS_INFEAS * ndy:
                    if not np.isfinite(low[i]):
                        valid = False
                        break
                    support += low[i] * d
            if valid and support <= -_EPS_INFEAS * ndy:
                return "infeasible"
    ndx = float(np.abs(dx).max(initial=0.0))
    if ndx > 1e-14:
        if (
            np.abs(prob.P @ dx).max(initial=0.0) <= _EPS_INFEAS * ndx
            and prob.q @ dx <= -_EPS_INFEAS * ndx
        ):
            Mdx = M @ dx
            valid = True
            for i in range(Mdx.shape[0]):
                if low[i] == high[i]:
                    if abs(Mdx[i]) > _EPS_INFEAS * ndx:
                        valid = False
                        break
                elif Mdx[i] > _EPS_INFEAS * ndx and np.isfinite(high[i]):
                    valid = False
                    break
                elif Mdx[i] < -_EPS_INFEAS * ndx and np.isfinite(low[i]):
                    valid = False
                    break
            if valid:
                return "unbounded"
    return None
