"""Deterministic bounded-variable revised simplex solver.

This is the environment the reformulation policy is trained against: it
reports the pivot count of a two-phase primal simplex run. Entering-variable
selection under Dantzig pricing is "most negative reduced cost, ties broken
by lowest column index", which makes the pivot sequence (and hence the
iteration count) depend on column order. Bland's rule is available both as a
pricing choice and as an automatic fallback after a run of degenerate pivots.

The basis inverse is kept as a dense matrix updated per pivot and rebuilt
from scratch every REFACTOR_INTERVAL pivots or on accuracy loss.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from .exceptions import NonOptimalStatusError
from .lp import StandardFormLp, apply_permutation, to_standard_form

#: Instances with at most this many matrix cells keep a dense copy of A for
#: fast column extraction inside the pivot loop.
DENSE_CACHE_CELLS = 4_000_000

log = logging.getLogger(__name__)

REFACTOR_INTERVAL = 50
ACCURACY_TOL = 1e-7

# nonbasic status codes
BASIC = 0
AT_LOWER = 1
AT_UPPER = 2
NB_FREE = 3


class SolveStatus(enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


class Pricing(enum.Enum):
    DANTZIG = "dantzig"
    BLAND = "bland"


class Metric(enum.Enum):
    ITERATIONS = "iterations"
    SOLVE_TIME = "solve_time"


@dataclass(frozen=True)
class SolverConfig:
    primal_tolerance: float = 1e-6
    pivot_tolerance: float = 1e-9
    iteration_limit: int = 20000
    pricing: Pricing = Pricing.DANTZIG
    bland_stall_threshold: int = 40

    def __post_init__(self):
        if self.primal_tolerance <= 0 or self.pivot_tolerance <= 0:
            raise ValueError("tolerances must be positive")
        if self.iteration_limit <= 0:
            raise ValueError("iteration_limit must be positive")


@dataclass(frozen=True)
class Basis:
    """Ordered basic column list plus nonbasic indices with bound status.

    Indices refer to standard-form columns; values >= the standard form's
    column count denote phase-1 artificials that remained basic at zero.
    """

    basic: np.ndarray
    nonbasic: np.ndarray
    nonbasic_status: np.ndarray  # AT_LOWER / AT_UPPER / NB_FREE per entry


@dataclass(frozen=True)
class BasicSolution:
    x: np.ndarray  # over standard-form columns
    objective: float
    basis: Basis


@dataclass(frozen=True)
class SolveMetrics:
    iterations: int
    phase1_iterations: int
    phase2_iterations: int
    solve_time: float
    max_inf: float
    status: SolveStatus


class SolverEnvironment:
    """Interface the trainer talks to; adapters for external solvers
    implement the same `solve` signature."""

    def solve(self, lp, cfg):
        raise NotImplementedError


def initial_slack_basis(std):
    """Slack column per row where one exists, an artificial for the rest.

    The returned Basis uses indices >= std.num_cols for artificials (one per
    slack-less row, in row order), making the basis matrix triangular.
    """
    slack_of = std.slack_for_row()
    n = std.num_cols
    basic = np.empty(std.num_rows, dtype=np.int64)
    next_art = n
    for i in range(std.num_rows):
        if slack_of[i] >= 0:
            basic[i] = slack_of[i]
        else:
            basic[i] = next_art
            next_art += 1
    mask = np.ones(n, dtype=bool)
    mask[basic[basic < n]] = False
    nonbasic = np.flatnonzero(mask)
    status = np.empty(nonbasic.shape[0], dtype=np.int8)
    for pos, j in enumerate(nonbasic):
        if math.isfinite(std.col_lower[j]):
            status[pos] = AT_LOWER
        elif math.isfinite(std.col_upper[j]):
            status[pos] = AT_UPPER
        else:
            status[pos] = NB_FREE
    return Basis(basic=basic, nonbasic=nonbasic, nonbasic_status=status)


class _Workspace:
    """Mutable solver state over standard columns plus appended artificials."""

    def __init__(self, std: StandardFormLp, cfg: SolverConfig):
        self.cfg = cfg
        self.m = std.num_rows
        self.n_std = std.num_cols
        self.A = std.matrix
        self.AT = std.matrix.T.tocsc()  # CSR-equivalent for fast A'y
        self.A_dense = (
            std.matrix.toarray() if self.m * self.n_std <= DENSE_CACHE_CELLS else None
        )
        self.b = std.rhs

        base = initial_slack_basis(std)
        slack_of = std.slack_for_row()
        self.art_rows = [int(i) for i in range(self.m) if slack_of[i] < 0]
        n_art = len(self.art_rows)
        self.n = self.n_std + n_art
        self.art_row_of = np.full(self.n, -1, dtype=np.int64)
        for k, i in enumerate(self.art_rows):
            self.art_row_of[self.n_std + k] = i
        self.art_sign = np.ones(n_art)

        self.lower = np.concatenate([std.col_lower, np.zeros(n_art)])
        self.upper = np.concatenate([std.col_upper, np.full(n_art, math.inf)])
        self.cost = np.zeros(self.n)
        self.status = np.full(self.n, AT_LOWER, dtype=np.int8)
        self.x = np.zeros(self.n)
        for pos, j in enumerate(base.nonbasic):
            st = base.nonbasic_status[pos]
            self.status[j] = st
            self.x[j] = (
                self.lower[j] if st == AT_LOWER else self.upper[j] if st == AT_UPPER else 0.0
            )
        self.basic = np.array(base.basic, dtype=np.int64)
        self.status[self.basic] = BASIC

        # Extra artificials for rows whose slack start value is infeasible.
        self._patch_infeasible_slacks()
        self.enterable = np.ones(self.n, dtype=bool)
        self.enterable[self.n_std :] = False  # artificials never re-enter

        # incremental pricing state: +1 at lower, -1 at upper, 0 basic/blocked
        self.price_sign = np.zeros(self.n_std)
        self.free_nonbasic = []
        for j in range(self.n_std):
            self._update_price_sign(j)

        self.Binv = None
        self.pivots_since_refactor = 0
        self.iterations = 0
        self.phase_iterations = [0, 0]
        self.degenerate_run = 0
        self.refactorize()

    def _update_price_sign(self, j):
        if j >= self.n_std:
            return
        st = self.status[j]
        if st == AT_LOWER and self.enterable[j]:
            self.price_sign[j] = 1.0
        elif st == AT_UPPER and self.enterable[j]:
            self.price_sign[j] = -1.0
        else:
            self.price_sign[j] = 0.0
        if st == NB_FREE and self.enterable[j]:
            if j not in self.free_nonbasic:
                self.free_nonbasic.append(j)
        elif j in self.free_nonbasic:
            self.free_nonbasic.remove(j)

    # -- basis matrix handling ------------------------------------------------

    def col(self, j):
        if j < self.n_std:
            if self.A_dense is not None:
                return self.A_dense[:, j]
            return self.A[:, [j]].toarray().ravel()
        e = np.zeros(self.m)
        e[self.art_row_of[j]] = self.art_sign[j - self.n_std]
        return e

    def _basis_matrix(self):
        B = np.zeros((self.m, self.m))
        for r, j in enumerate(self.basic):
            B[:, r] = self.col(int(j))
        return B

    def refactorize(self):
        B = self._basis_matrix()
        try:
            self.Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            raise RuntimeError("basis matrix numerically singular at refactorization")
        self.pivots_since_refactor = 0
        self._recompute_basic_values()

    def _recompute_basic_values(self):
        xn = np.array(self.x[: self.n_std])
        xn[self.basic[self.basic < self.n_std]] = 0.0
        r = self.b - self.A @ xn
        for k, j in enumerate(range(self.n_std, self.n)):
            if self.status[j] != BASIC and self.x[j] != 0.0:
                r[self.art_row_of[j]] -= self.art_sign[k] * self.x[j]
        self.x[self.basic] = self.Binv @ r

    def basic_residual(self):
        """Inf-norm of A x - b including artificial contributions."""
        r = self.A @ self.x[: self.n_std] - self.b
        for k in range(self.n_std, self.n):
            if self.x[k] != 0.0:
                r[self.art_row_of[k]] += self.art_sign[k - self.n_std] * self.x[k]
        return float(np.max(np.abs(r))) if self.m else 0.0

    def _patch_infeasible_slacks(self):
        """Replace basic slacks whose start value violates their bounds.

        The slack moves to its nearest bound (nonbasic) and an artificial
        with matching sign takes its basis slot, keeping the start point
        feasible for phase 1.
        """
        xn = np.array(self.x[: self.n_std])
        xn[self.basic[self.basic < self.n_std]] = 0.0
        resid = self.b - self.A @ xn
        tol = self.cfg.primal_tolerance
        new_art = []
        for r, j in enumerate(self.basic):
            j = int(j)
            if j >= self.n_std:
                row = self.art_row_of[j]
                if resid[row] < 0:
                    self.art_sign[j - self.n_std] = -1.0
                self.x[j] = abs(resid[row])
                continue
            coeff = self.col(j)
            row = int(np.flatnonzero(coeff)[0])
            val = resid[row] / coeff[row]
            if self.lower[j] - tol <= val <= self.upper[j] + tol:
                self.x[j] = min(max(val, self.lower[j]), self.upper[j])
                continue
            bound = self.lower[j] if val < self.lower[j] else self.upper[j]
            self.x[j] = bound
            self.status[j] = AT_LOWER if bound == self.lower[j] else AT_UPPER
            leftover = resid[row] - coeff[row] * bound
            art = self.n
            self.n += 1
            new_art.append((art, row, 1.0 if leftover >= 0 else -1.0, abs(leftover)))
            self.basic[r] = art
        if new_art:
            extra = len(new_art)
            self.art_row_of = np.concatenate(
                [self.art_row_of, np.array([a[1] for a in new_art], dtype=np.int64)]
            )
            self.art_sign = np.concatenate([self.art_sign, np.array([a[2] for a in new_art])])
            self.lower = np.concatenate([self.lower, np.zeros(extra)])
            self.upper = np.concatenate([self.upper, np.full(extra, math.inf)])
            self.cost = np.zeros(self.n)
            self.status = np.concatenate(
                [self.status, np.full(extra, BASIC, dtype=np.int8)]
            )
            self.x = np.concatenate([self.x, np.array([a[3] for a in new_art])])
            self.art_rows.extend(int(a[1]) for a in new_art)

    @property
    def n_art(self):
        return self.n - self.n_std

    # -- pricing ---------------------------------------------------------------

    def reduced_costs(self):
        y = self.Binv.T @ self.cost[self.basic]
        if self.A_dense is not None:
            d = self.cost[: self.n_std] - y @ self.A_dense
        else:
            d = self.cost[: self.n_std] - self.AT @ y
        return d, y

    def pricing_scores(self, d):
        """Dual-infeasibility score per structural column; negative = candidate."""
        scores = self.price_sign * d
        for j in self.free_nonbasic:
            scores[j] = -abs(d[j])
        return scores

    def choose_entering(self, pricing, d):
        scores = self.pricing_scores(d)
        dual_tol = self.cfg.primal_tolerance
        if pricing == Pricing.BLAND:
            candidates = np.flatnonzero(scores < -dual_tol)
            return int(candidates[0]) if candidates.size else -1
        # np.argmin returns the first (lowest-index) minimizer on exact ties.
        q = int(np.argmin(scores))
        return q if scores[q] < -dual_tol else -1

    # -- pivoting ----------------------------------------------------------------

    def ratio_test(self, q, s):
        """Step limits for entering column q moving in direction s.

        Returns (t_rows, w) where t_rows[i] is the blocking step of basis
        position i (inf where unblocked) and w = Binv @ A_q.
        """
        w = self.Binv @ self.col(q)
        delta = -s * w  # d x_B / dt
        basic = self.basic
        xB = self.x[basic]
        t = np.full(self.m, math.inf)
        ptol = self.cfg.pivot_tolerance
        dec = np.flatnonzero(delta < -ptol)
        if dec.size:
            lo = self.lower[basic[dec]]
            fin = np.isfinite(lo)
            sel = dec[fin]
            t[sel] = np.maximum((xB[sel] - lo[fin]) / (-delta[sel]), 0.0)
        inc = np.flatnonzero(delta > ptol)
        if inc.size:
            hi = self.upper[basic[inc]]
            fin = np.isfinite(hi)
            sel = inc[fin]
            t[sel] = np.maximum((hi[fin] - xB[sel]) / delta[sel], 0.0)
        return t, w, delta

    def pivot(self, q, s, r, t, w, delta):
        """Exchange basis position r for column q after a step of size t."""
        if t != 0.0:
            self.x[q] += s * t
            self.x[self.basic] += delta * t
        leaving = int(self.basic[r])
        if delta[r] < 0:
            self.x[leaving] = self.lower[leaving]
            self.status[leaving] = AT_LOWER
        else:
            self.x[leaving] = self.upper[leaving]
            self.status[leaving] = AT_UPPER
        if leaving >= self.n_std:
            # artificial leaves: pin it at zero and never let it back
            self.lower[leaving] = 0.0
            self.upper[leaving] = 0.0
            self.x[leaving] = 0.0
            self.status[leaving] = AT_LOWER
        self.basic[r] = q
        self.status[q] = BASIC
        self._update_price_sign(leaving)
        self._update_price_sign(q)
        # eta update of the dense inverse
        pivot_val = w[r]
        row_r = self.Binv[r, :] / pivot_val
        self.Binv -= np.outer(w, row_r)
        self.Binv[r, :] = row_r
        self.pivots_since_refactor += 1
        if self.pivots_since_refactor >= REFACTOR_INTERVAL:
            self.refactorize()

    def bound_flip(self, q, s, t, delta):
        other = AT_UPPER if self.status[q] == AT_LOWER else AT_LOWER
        self.x[q] = self.upper[q] if other == AT_UPPER else self.lower[q]
        self.status[q] = other
        self.x[self.basic] += delta * t
        self._update_price_sign(q)


def _run_phase(work, phase, cfg, budget):
    """Pivot until optimal for the active cost vector. Returns a status string."""
    pricing_default = cfg.pricing
    bland_until_progress = False
    while True:
        if work.iterations >= budget:
            return "limit"
        d, _ = work.reduced_costs()
        pricing = Pricing.BLAND if bland_until_progress else pricing_default
        q = work.choose_entering(pricing, d)
        if q < 0:
            return "optimal"
        if work.status[q] == AT_UPPER or (work.status[q] == NB_FREE and d[q] > 0):
            s = -1.0
        else:
            s = 1.0
        t_rows, w, delta = work.ratio_test(q, s)
        span = work.upper[q] - work.lower[q]
        t_bound = span if math.isfinite(span) else math.inf
        r_candidates = np.flatnonzero(t_rows == t_rows.min()) if work.m else np.array([], int)
        t_row_min = float(t_rows.min()) if work.m else math.inf
        t_star = min(t_row_min, t_bound)
        if math.isinf(t_star):
            return "unbounded" if phase == 2 else "phase1-unbounded"
        work.iterations += 1
        work.phase_iterations[phase - 1] += 1
        if t_bound <= t_row_min:
            work.bound_flip(q, s, t_bound, delta)
            degenerate = t_bound <= 1e-12
        else:
            # leaving row: largest |w| among minimal ratios, then lowest
            # basic variable index (Bland mode: lowest index only)
            cand = r_candidates
            if bland_until_progress or pricing_default == Pricing.BLAND:
                r = int(cand[np.argmin(work.basic[cand])])
            else:
                wa = np.abs(w[cand])
                best = cand[wa == wa.max()]
                r = int(best[np.argmin(work.basic[best])])
            if abs(w[r]) < cfg.pivot_tolerance:
                # Unsafe pivot: refactorize once and retry this iteration.
                work.iterations -= 1
                work.phase_iterations[phase - 1] -= 1
                if work.pivots_since_refactor > 0:
                    work.refactorize()
                    continue
                # fresh factorization and still tiny: treat column as blocked
                work.enterable[q] = False
                work._update_price_sign(q)
                continue
            degenerate = t_star <= 1e-12
            work.pivot(q, s, r, t_star, w, delta)
        if degenerate:
            work.degenerate_run += 1
            if work.degenerate_run >= cfg.bland_stall_threshold:
                bland_until_progress = True
        else:
            work.degenerate_run = 0
            bland_until_progress = False


def _drive_out_artificials(work, cfg):
    """Pivot basic artificials out where a structural replacement exists.

    Rows whose artificial cannot be replaced are linearly dependent; the
    artificial stays basic, pinned at zero, and never blocks a pivot there.
    """
    for r in range(work.m):
        j = int(work.basic[r])
        if j < work.n_std:
            continue
        row_of_inv = work.Binv[r, :]
        replacement = -1
        for q in range(work.n_std):
            if work.status[q] != BASIC and work.enterable[q]:
                alpha = row_of_inv @ work.col(q)
                if abs(alpha) > 1e-7:
                    replacement = q
                    break
        if replacement < 0:
            log.debug("row %d appears linearly dependent; artificial kept at zero", r)
            continue
        w = work.Binv @ work.col(replacement)
        work.status[replacement] = BASIC
        saved = work.x[replacement]
        work.basic[r] = replacement
        work.lower[j] = work.upper[j] = 0.0
        work.x[j] = 0.0
        work.status[j] = AT_LOWER
        work._update_price_sign(replacement)
        pivot_val = w[r]
        row_r = work.Binv[r, :] / pivot_val
        work.Binv -= np.outer(w, row_r)
        work.Binv[r, :] = row_r
        work.pivots_since_refactor += 1
        work.x[replacement] = saved  # degenerate exchange: x unchanged
        work.iterations += 1
        work.phase_iterations[0] += 1
        if work.pivots_since_refactor >= REFACTOR_INTERVAL:
            work.refactorize()


def _max_infeasibility(work):
    primal = work.basic_residual()
    xs = work.x[: work.n_std]
    lo_viol = np.maximum(work.lower[: work.n_std] - xs, 0.0)
    hi_viol = np.maximum(xs - work.upper[: work.n_std], 0.0)
    lo_viol[~np.isfinite(lo_viol)] = 0.0
    hi_viol[~np.isfinite(hi_viol)] = 0.0
    bound = float(max(lo_viol.max(initial=0.0), hi_viol.max(initial=0.0)))
    d, _ = work.reduced_costs()
    dual = 0.0
    st = work.status[: work.n_std]
    nb_lo = st == AT_LOWER
    nb_up = st == AT_UPPER
    nb_free = st == NB_FREE
    if nb_lo.any():
        dual = max(dual, float(np.maximum(-d[nb_lo], 0.0).max(initial=0.0)))
    if nb_up.any():
        dual = max(dual, float(np.maximum(d[nb_up], 0.0).max(initial=0.0)))
    if nb_free.any():
        dual = max(dual, float(np.abs(d[nb_free]).max(initial=0.0)))
    art = float(np.abs(work.x[work.n_std :]).max(initial=0.0))
    return max(primal, bound, dual, art)


def solve_standard(std, cfg=None):
    """Two-phase simplex on a standard-form LP. Never raises for solver
    outcomes; failures are reported through SolveMetrics.status."""
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    work = _Workspace(std, cfg)

    status = SolveStatus.OPTIMAL
    # phase 1: minimize the artificial sum when any artificial is nonzero
    need_phase1 = work.n_art > 0 and float(np.abs(work.x[work.n_std :]).sum()) > 0.0
    if need_phase1:
        work.cost[:] = 0.0
        work.cost[work.n_std :] = 1.0
        out = _run_phase(work, 1, cfg, cfg.iteration_limit)
        if out == "limit":
            status = SolveStatus.ITERATION_LIMIT
        elif out == "phase1-unbounded":
            raise RuntimeError("phase 1 objective unbounded; this should be impossible")
        else:
            art_sum = float(work.x[work.n_std :].sum())
            scale = 1.0 + float(np.abs(work.b).max(initial=0.0))
            if art_sum > cfg.primal_tolerance * scale:
                status = SolveStatus.INFEASIBLE
    if status == SolveStatus.OPTIMAL and work.n_art:
        work.lower[work.n_std :] = 0.0
        work.upper[work.n_std :] = 0.0
        nb_art = work.status[work.n_std :] != BASIC
        work.x[work.n_std :][nb_art] = 0.0
        _drive_out_artificials(work, cfg)

    if status == SolveStatus.OPTIMAL:
        work.cost[:] = 0.0
        work.cost[: work.n_std] = std.objective
        out = _run_phase(work, 2, cfg, cfg.iteration_limit)
        if out == "limit":
            status = SolveStatus.ITERATION_LIMIT
        elif out == "unbounded":
            status = SolveStatus.UNBOUNDED

    max_inf = math.inf
    if status == SolveStatus.OPTIMAL:
        work.refactorize()
        max_inf = _max_infeasibility(work)
        if max_inf > cfg.primal_tolerance:
            # one more corrective sweep after the fresh factorization
            out = _run_phase(work, 2, cfg, cfg.iteration_limit)
            if out == "optimal":
                max_inf = _max_infeasibility(work)
            if max_inf > cfg.primal_tolerance:
                status = SolveStatus.ITERATION_LIMIT
    solve_time = time.perf_counter() - t0

    n_std = work.n_std
    nonbasic = np.flatnonzero(work.status[:n_std] != BASIC)
    nb_status = work.status[nonbasic]
    basis = Basis(
        basic=np.array(work.basic),
        nonbasic=nonbasic,
        nonbasic_status=np.array(nb_status, dtype=np.int8),
    )
    x = np.array(work.x[:n_std])
    objective = float(std.objective @ x)
    solution = BasicSolution(x=x, objective=objective, basis=basis)
    metrics = SolveMetrics(
        iterations=work.iterations,
        phase1_iterations=work.phase_iterations[0],
        phase2_iterations=work.phase_iterations[1],
        solve_time=solve_time,
        max_inf=max_inf if status == SolveStatus.OPTIMAL else math.inf,
        status=status,
    )
    return solution, metrics


def solve(lp, cfg=None):
    """Convert to standard form and run the two-phase simplex.

    Deterministic: identical (instance, config) inputs give identical pivot
    sequences and iteration counts.
    """
    return solve_standard(to_standard_form(lp), cfg)


class SimplexSolver(SolverEnvironment):
    """Built-in environment: the reference implementation of the interface."""

    def solve(self, lp, cfg):
        return solve(lp, cfg)


def evaluate_metric(lp, perm, metric=Metric.ITERATIONS, cfg=None, env=None):
    """Solver metric of ``lp`` reformulated by ``perm`` (Optimal required).

    The reward of a permutation is evaluate_metric(lp, identity) minus
    evaluate_metric(lp, perm).
    """
    env = env or SimplexSolver()
    cfg = cfg or SolverConfig()
    permuted = lp if perm.is_identity else apply_permutation(lp, perm)
    _, metrics = env.solve(permuted, cfg)
    if metrics.status != SolveStatus.OPTIMAL:
        raise NonOptimalStatusError(metrics.status.value)
    if metric == Metric.SOLVE_TIME:
        return float(metrics.solve_time)
    return float(metrics.iterations)
