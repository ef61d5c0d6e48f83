"""Dense two-phase primal simplex for small bounded LPs.

Solves ``max c @ x  s.t.  A_ub @ x <= b_ub,  lower <= x <= upper``.

The simplex works on vertices: a basis is a set of n linearly independent
constraints held tight, the vertex is the solution of that square system and
the multipliers of the basis rows decide optimality. The first basis row
with a negative multiplier leaves; among the blocking constraints tied at
the minimum ratio the one with the largest pivot enters. After a long run
of degenerate pivots the entering choice switches to the lowest index
(Bland's rule), so degenerate problems terminate. Every result is
deterministic. The basis matrix is inverted from the
original rows at each pivot, so no round-off accumulates across pivots; with
n much smaller than the number of rows this is also the cheap direction.

Rows are scaled to unit infinity-norm and parallel duplicates collapsed to
the tightest copy. A solver keeps its final basis, so re-optimizing the same
polytope for a new objective starts from the previous vertex and skips
phase 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass
class LpResult:
    status: str
    x: np.ndarray = None
    objective: float = float("nan")
    active: list = field(default_factory=list)
    iterations: int = 0


def _pivot_loop(A, b, c, basis, tol, max_iter, bland_after: int = 50):
    """Primal simplex over vertex bases. ``basis`` indexes n rows of A whose
    solution is feasible; returns (status, x, basis, iterations)."""
    basis = np.array(basis, dtype=int)
    in_basis = np.zeros(len(A), dtype=bool)
    in_basis[basis] = True
    scale = max(1.0, np.abs(c).max())
    stalled = 0
    for it in range(max_iter):
        Binv = np.linalg.inv(A[basis])
        x = Binv @ b[basis]
        lam = Binv.T @ c
        neg = np.flatnonzero(lam < -tol * scale)
        if len(neg) == 0:
            return OPTIMAL, x, basis, it
        k = neg[np.argmin(basis[neg])]
        d = -Binv[:, k]
        d /= np.abs(d).max()
        Ad = A @ d
        Ad[in_basis] = 0.0
        blocking = np.flatnonzero(Ad > tol)
        if len(blocking) == 0:
            return UNBOUNDED, x, basis, it
        slack = np.maximum(b[blocking] - A[blocking] @ x, 0.0)
        ratios = slack / Ad[blocking]
        best = ratios.min()
        tied = blocking[ratios <= best + tol * max(1.0, best)]
        # largest pivot among ties keeps the basis well conditioned; after a
        # long degenerate run fall back to smallest index, which cannot cycle
        stalled = stalled + 1 if best <= tol else 0
        if stalled > bland_after:
            tied = tied[Ad[tied] >= 1e-3 * Ad[tied].max()]
            r = tied.min()
        else:
            r = tied[np.argmax(Ad[tied])]
        in_basis[basis[k]] = False
        in_basis[r] = True
        basis[k] = r
    raise RuntimeError("simplex iteration limit reached")


class SimplexSolver:
    def __init__(self, A_ub, b_ub, lower, upper=None, tol: float = 1e-9,
                 max_iter: int = 50_000):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        A_ub = np.asarray(A_ub, dtype=float)
        if A_ub.size == 0:
            A_ub = A_ub.reshape(0, max(len(lower), A_ub.shape[-1] if A_ub.ndim == 2 else 0))
        A_ub = np.atleast_2d(A_ub)
        b_ub = np.asarray(b_ub, dtype=float).ravel()
        n = A_ub.shape[1]
        lower = np.broadcast_to(lower, (n,)).copy()
        upper = (np.full(n, np.inf) if upper is None
                 else np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy())
        if not np.all(np.isfinite(lower)):
            raise ValueError("lower bounds must be finite")
        if A_ub.shape[0] != len(b_ub):
            raise ValueError("A_ub and b_ub disagree on the number of rows")
        self.n, self.tol, self.max_iter = n, tol, max_iter
        self.A_ub, self.b_ub, self.lower, self.upper = A_ub, b_ub, lower, upper
        self.status = None
        self._build()

    # ------------------------------------------------------------ setup

    def _build(self):
        n, tol = self.n, self.tol
        rows, rhs, labels = [], [], []
        seen = {}
        for i, (row, r) in enumerate(zip(self.A_ub, self.b_ub)):
            scale = np.max(np.abs(row))
            if scale <= tol * max(1.0, abs(r)):
                if r < -tol * max(1.0, scale):
                    self.status = INFEASIBLE
                continue
            row, r = row / scale, r / scale
            # parallel duplicates: only the tightest copy matters
            key = np.round(row, 10).tobytes()
            if key in seen:
                k = seen[key]
                if r < rhs[k]:
                    rhs[k], labels[k] = r, ("row", i)
                continue
            seen[key] = len(rows)
            rows.append(row)
            rhs.append(r)
            labels.append(("row", i))
        if np.any(self.upper - self.lower < -tol):
            self.status = INFEASIBLE
        eye = np.eye(n)
        self.n_main = len(rows)
        for j in range(n):
            rows.append(-eye[j])
            rhs.append(-self.lower[j])
            labels.append(("lower", j))
        for j in np.flatnonzero(np.isfinite(self.upper)):
            rows.append(eye[j])
            rhs.append(self.upper[j])
            labels.append(("upper", int(j)))
        self.A = np.array(rows).reshape(-1, n)
        self.b = np.array(rhs)
        self.labels = labels
        if self.status == INFEASIBLE:
            return
        self._phase1()

    def _phase1(self):
        """max -t  s.t.  a_i x - t <= b_i on constraint rows, bound rows as
        they are, t >= 0; started from the vertex x = lower."""
        n, m, n_main = self.n, len(self.A), self.n_main
        tcol = np.zeros((m, 1))
        tcol[:n_main] = -1.0
        A1 = np.vstack([np.hstack([self.A, tcol]), np.append(np.zeros(n), -1.0)])
        b1 = np.append(self.b, 0.0)
        t_row = m
        start = list(range(n_main, n_main + n))  # lower-bound rows
        viol = self.A[:n_main] @ self.lower - self.b[:n_main]
        start.append(int(np.argmax(viol)) if n_main and viol.max() > 0 else t_row)
        c1 = np.append(np.zeros(n), -1.0)
        status, z, basis, it = _pivot_loop(A1, b1, c1, start, self.tol, self.max_iter)
        self.phase1_iterations = it
        if status != OPTIMAL or z[-1] > 1e3 * self.tol:
            self.status = INFEASIBLE
            return
        basis = list(basis)
        if t_row not in basis:
            # degenerate: t = 0 already holds, so swapping the t-row in keeps the vertex
            y = np.linalg.solve(A1[basis].T, A1[t_row])
            basis[int(np.argmax(np.abs(y)))] = t_row
        basis.remove(t_row)
        self.basis = np.array(basis, dtype=int)
        self.status = "feasible"

    # ------------------------------------------------------------ public

    def maximize(self, c) -> LpResult:
        if self.status == INFEASIBLE:
            return LpResult(INFEASIBLE)
        c = np.asarray(c, dtype=float)
        if c.shape != (self.n,):
            raise ValueError(f"objective has shape {c.shape}, expected ({self.n},)")
        if self.n == 0:
            return LpResult(OPTIMAL, np.zeros(0), 0.0, [], 0)
        status, x, basis, it = _pivot_loop(self.A, self.b, c, self.basis, self.tol, self.max_iter)
        if status == UNBOUNDED:
            return LpResult(UNBOUNDED, iterations=it)
        self.basis = basis
        return LpResult(OPTIMAL, x, float(c @ x), self._active(x), it)

    def _active(self, x):
        tol = 1e3 * self.tol
        active = []
        slack = self.b_ub - self.A_ub @ x
        scale = np.maximum(np.max(np.abs(self.A_ub), axis=1, initial=0.0), 1.0)
        active += [("row", int(i)) for i in np.flatnonzero(np.abs(slack) <= tol * scale)]
        active += [("lower", int(j)) for j in np.flatnonzero(np.abs(x - self.lower) <= tol)]
        active += [("upper", int(j)) for j in np.flatnonzero(np.abs(x - self.upper) <= tol)]
        return active


def linprog_max(c, A_ub, b_ub, lower, upper=None, tol: float = 1e-9) -> LpResult:
    """One-shot solve with a fresh solver (bit-reproducible for a given problem)."""
    return SimplexSolver(A_ub, b_ub, lower, upper, tol=tol).maximize(c)
