"""Dense two-phase revised simplex for LPs with bounded variables.

Sized for restricted master problems of a few hundred rows and some tens of
thousands of columns: the basis inverse is kept explicitly and refactorized
periodically. Duals follow the convention reduced_cost_j = c_j - y . a_j, so
at optimality y <= 0 on binding <= rows and y >= 0 on binding >= rows of a
minimization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LE, EQ, GE = "<", "=", ">"

_FEAS_TOL = 1e-7
_DUAL_TOL = 1e-7
_PIVOT_TOL = 1e-9
_REFACTOR_EVERY = 128
_DEGENERATE_RUN = 60


@dataclass
class LPResult:
    status: str                 # optimal | infeasible | unbounded | iteration_limit
    objective: float
    x: np.ndarray               # structural variable values
    duals: np.ndarray           # one per row
    reduced_costs: np.ndarray   # structural reduced costs
    dual_objective: float
    warm_basis: tuple | None    # opaque token for a later warm start
    iterations: int


class _Tableau:
    def __init__(self, A, senses, b, c, lb, ub):
        m, n = A.shape
        self.m, self.n_struct = m, n
        ineq_rows = [i for i, s in enumerate(senses) if s != EQ]
        self.slack_of_row = {r: n + k for k, r in enumerate(ineq_rows)}
        n_slack = len(ineq_rows)
        total = n + n_slack
        self.A = np.zeros((m, total))
        self.A[:, :n] = A
        for r, j in self.slack_of_row.items():
            self.A[r, j] = 1.0 if senses[r] == LE else -1.0
        self.b = b.astype(float)
        self.c = np.concatenate([c.astype(float), np.zeros(n_slack)])
        self.lb = np.concatenate([lb.astype(float), np.zeros(n_slack)])
        self.ub = np.concatenate([ub.astype(float), np.full(n_slack, np.inf)])
        self.senses = senses

    def add_artificials(self, residual: np.ndarray, rows: list[int]) -> np.ndarray:
        """Append one artificial column per row in `rows`, signed to make its
        value nonnegative; returns the new column indices."""
        k = len(rows)
        total = self.A.shape[1]
        block = np.zeros((self.m, k))
        for j, r in enumerate(rows):
            block[r, j] = 1.0 if residual[r] >= 0 else -1.0
        self.A = np.hstack([self.A, block])
        self.c = np.concatenate([self.c, np.zeros(k)])
        self.lb = np.concatenate([self.lb, np.zeros(k)])
        self.ub = np.concatenate([self.ub, np.full(k, np.inf)])
        return np.arange(total, total + k)


def solve_lp(A, senses, b, c, lb, ub, *, warm_basis=None,
             max_iter: int = 200_000) -> LPResult:
    """Minimize c.x subject to row senses and lb <= x <= ub."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub + 1e-12):
        return LPResult("infeasible", np.inf, np.zeros(A.shape[1]),
                        np.zeros(A.shape[0]), np.zeros(A.shape[1]), np.inf, None, 0)
    tab = _Tableau(A, senses, b, c, lb, ub)
    state = _State(tab)
    iters = 0

    if warm_basis is not None and state.try_warm(warm_basis):
        pass
    else:
        art = state.cold_start()
        if len(art):
            status, it1 = state.run_phase(phase1=True, max_iter=max_iter)
            iters += it1
            if status != "optimal":
                return state.result(status, iters)
            if state.phase1_objective() > 1e-6:
                return state.result("infeasible", iters)
            state.pin_artificials(art)

    status, it2 = state.run_phase(phase1=False, max_iter=max_iter - iters)
    iters += it2
    return state.result(status, iters)


class _State:
    def __init__(self, tab: _Tableau):
        self.tab = tab
        total = tab.A.shape[1]
        self.vstat = np.zeros(total, dtype=np.int8)  # 0 lower, 1 upper, 2 basic
        self.x = np.where(np.isfinite(tab.lb), tab.lb, 0.0)
        self.basis = np.full(tab.m, -1, dtype=np.int64)
        self.Binv = np.eye(tab.m)
        self.art_cols = np.array([], dtype=np.int64)
        self._pivots_since_refactor = 0

    # -- construction ---------------------------------------------------

    def residual(self) -> np.ndarray:
        return self.tab.b - self.tab.A @ self.x

    def cold_start(self) -> np.ndarray:
        tab = self.tab
        self.x = np.where(np.isfinite(tab.lb), tab.lb, 0.0)
        self.vstat[:] = 0
        res = self.residual()
        art_rows = []
        basis = np.full(tab.m, -1, dtype=np.int64)
        for r in range(tab.m):
            s = tab.senses[r]
            j = tab.slack_of_row.get(r)
            if s == LE and res[r] >= 0:
                basis[r] = j
                self.x[j] = res[r]
            elif s == GE and res[r] <= 0:
                basis[r] = j
                self.x[j] = -res[r]
            else:
                art_rows.append(r)
        art = tab.add_artificials(res, art_rows)
        self.vstat = np.concatenate([self.vstat, np.zeros(len(art), np.int8)])
        self.x = np.concatenate([self.x, np.zeros(len(art))])
        for j, r in zip(art, art_rows):
            basis[r] = j
            self.x[j] = abs(res[r])
        self.basis = basis
        self.vstat[basis] = 2
        self.art_cols = art
        self._refactor()
        return art

    def try_warm(self, warm) -> bool:
        prev_n, basis, vstat_struct, vstat_slack = warm
        tab = self.tab
        if len(basis) != tab.m or len(vstat_slack) != tab.A.shape[1] - tab.n_struct:
            return False
        mapped = np.array([j if j < prev_n else j - prev_n + tab.n_struct
                           for j in basis], dtype=np.int64)
        if len(mapped) == 0 or int(mapped.max()) >= tab.A.shape[1]:
            return False
        vstat = np.zeros(tab.A.shape[1], dtype=np.int8)
        vstat[:len(vstat_struct)] = vstat_struct
        vstat[tab.n_struct:] = vstat_slack
        vstat[mapped] = 2
        B = tab.A[:, mapped]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        x = np.where(vstat == 1, tab.ub, np.where(np.isfinite(tab.lb), tab.lb, 0.0))
        x[mapped] = 0.0
        xb = Binv @ (tab.b - tab.A @ x)
        if np.any(xb < tab.lb[mapped] - _FEAS_TOL) or np.any(xb > tab.ub[mapped] + _FEAS_TOL):
            return False
        self.basis = mapped
        self.vstat = vstat
        self.Binv = Binv
        self.x = x
        self.x[mapped] = xb
        self.art_cols = np.array([], dtype=np.int64)
        return True

    def pin_artificials(self, art: np.ndarray) -> None:
        self.tab.ub[art] = 0.0
        self.x[art] = np.where(self.vstat[art] == 2, self.x[art], 0.0)

    # -- simplex iterations ----------------------------------------------

    def phase_costs(self, phase1: bool) -> np.ndarray:
        if not phase1:
            return self.tab.c
        c = np.zeros_like(self.tab.c)
        c[self.art_cols] = 1.0
        return c

    def phase1_objective(self) -> float:
        return float(self.x[self.art_cols].sum())

    def _refactor(self) -> None:
        tab = self.tab
        self.Binv = np.linalg.inv(tab.A[:, self.basis])
        nonbasic_x = self.x.copy()
        nonbasic_x[self.basis] = 0.0
        self.x[self.basis] = self.Binv @ (tab.b - tab.A @ nonbasic_x)
        self._pivots_since_refactor = 0

    def run_phase(self, phase1: bool, max_iter: int) -> tuple[str, int]:
        tab = self.tab
        c = self.phase_costs(phase1)
        degenerate_run = 0
        bland = False
        banned: set[int] = set()
        for it in range(max(max_iter, 1)):
            y = c[self.basis] @ self.Binv
            d = c - y @ tab.A
            d[self.basis] = 0.0
            viol = np.where(self.vstat == 0, -d, np.where(self.vstat == 1, d, 0.0))
            viol[tab.ub <= tab.lb] = 0.0  # pinned variables never enter
            if banned:
                viol[list(banned)] = 0.0
            if bland:
                cand = np.flatnonzero(viol > _DUAL_TOL)
                if len(cand) == 0:
                    return "optimal", it
                q = int(cand[0])
            else:
                q = int(np.argmax(viol))
                if viol[q] <= _DUAL_TOL:
                    return "optimal", it
            s = 1.0 if self.vstat[q] == 0 else -1.0
            w = self.Binv @ tab.A[:, q]
            step = s * w
            xb = self.x[self.basis]
            lo = tab.lb[self.basis]
            hi = tab.ub[self.basis]
            with np.errstate(divide="ignore", invalid="ignore"):
                lim_dn = np.where(step > _PIVOT_TOL, (xb - lo) / step, np.inf)
                lim_up = np.where(step < -_PIVOT_TOL, (xb - hi) / step, np.inf)
            limits = np.minimum(lim_dn, lim_up)
            limits[limits < 0] = 0.0
            t_flip = tab.ub[q] - tab.lb[q]
            r = int(np.argmin(limits))
            t_basic = limits[r]
            t = min(t_basic, t_flip)
            if not np.isfinite(t):
                return "unbounded", it
            if bland and t_basic <= t_flip:
                ties = np.flatnonzero(np.abs(limits - t_basic) < 1e-12)
                r = int(ties[np.argmin(self.basis[ties])])
            degenerate_run = degenerate_run + 1 if t < 1e-10 else 0
            if degenerate_run > _DEGENERATE_RUN:
                bland = True

            if t_flip <= t_basic:
                self.x[self.basis] = xb - t * step
                self.x[q] = tab.ub[q] if self.vstat[q] == 0 else tab.lb[q]
                self.vstat[q] = 1 - self.vstat[q]
                banned.clear()
                continue
            if abs(w[r]) < _PIVOT_TOL:
                # numerically unusable pivot: rebuild the inverse, retry, and
                # skip this column if the rebuild does not help
                if self._pivots_since_refactor:
                    self._refactor()
                else:
                    banned.add(q)
                continue
            self.x[self.basis] = xb - t * step
            leaving = int(self.basis[r])
            self.x[q] = (tab.lb[q] if self.vstat[q] == 0 else tab.ub[q]) + s * t
            self.x[leaving] = tab.lb[leaving] if abs(self.x[leaving] - tab.lb[leaving]) \
                <= abs(self.x[leaving] - tab.ub[leaving]) else tab.ub[leaving]
            self.vstat[leaving] = 0 if self.x[leaving] == tab.lb[leaving] else 1
            self.basis[r] = q
            self.vstat[q] = 2
            banned.clear()
            row = self.Binv[r] / w[r]
            w_adj = w.copy()
            w_adj[r] = 0.0
            self.Binv -= np.outer(w_adj, row)
            self.Binv[r] = row
            self._pivots_since_refactor += 1
            if self._pivots_since_refactor >= _REFACTOR_EVERY:
                self._refactor()
        return "iteration_limit", max_iter

    # -- reporting --------------------------------------------------------

    def result(self, status: str, iterations: int) -> LPResult:
        tab = self.tab
        n = tab.n_struct
        y = tab.c[self.basis] @ self.Binv if status == "optimal" else np.zeros(tab.m)
        d_full = tab.c - y @ tab.A
        d_full[self.basis] = 0.0
        obj = float(tab.c @ self.x)
        at_lower = (self.vstat == 0) & np.isfinite(tab.lb)
        at_upper = (self.vstat == 1) & np.isfinite(tab.ub)
        dual_obj = float(y @ tab.b
                         + d_full[at_lower] @ tab.lb[at_lower]
                         + d_full[at_upper] @ tab.ub[at_upper])
        n_slack = tab.A.shape[1] - n - len(self.art_cols)
        warm = (n, self.basis.copy(), self.vstat[:n].copy(),
                self.vstat[n:n + n_slack].copy()) if status == "optimal" \
            and not np.isin(self.basis, self.art_cols).any() else None
        return LPResult(status, obj, self.x[:n].copy(), y, d_full[:n].copy(),
                        dual_obj, warm, iterations)
