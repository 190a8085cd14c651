"""Cost matrices and makespan-optimal task allocation.

Platforms are rows, tasks are columns. ``A[p, t]`` is the fraction of task
``t``'s paths run on platform ``p``; columns sum to one. A platform runs its
shards one after another, paying ``setup_s(p, t)`` once for each task it
touches, so its finishing time is::

    load_p = sum_t [A[p,t] > 0] * setup[p,t] + A[p,t] * N[t] / rate[p,t]

and the objective is the makespan ``max_p load_p``.

:func:`optimize` is exact for ``P * T <= 9``. It enumerates the support
pattern of ``A`` and solves each pattern's divisible-load problem as a linear
program. :func:`brute_force` is an independent grid oracle implemented as a
branch and bound over simplex-grid columns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.optimize import linprog

from .errors import InstanceTooLargeError, MissingModelError
from .metrics import ConfidenceModel, LatencyModel

__all__ = [
    "MetricModels",
    "FrontierPoint",
    "build_cost_matrix",
    "objective",
    "platform_loads",
    "optimize",
    "brute_force",
    "frontier",
    "proportional_allocation",
    "single_platform_allocation",
    "EXACT_LIMIT",
    "SNAP",
]

EXACT_LIMIT = 9
SNAP = 1e-6


@dataclass
class MetricModels:
    """Fitted models for a (platforms x tasks) problem."""

    platforms: tuple
    tasks: tuple
    latency: dict = field(default_factory=dict)  # (platform, task) -> LatencyModel
    confidence: dict = field(default_factory=dict)  # task -> ConfidenceModel

    def __post_init__(self):
        self.platforms = tuple(self.platforms)
        self.tasks = tuple(self.tasks)

    @classmethod
    def from_arrays(cls, setup, rate, platforms=None, tasks=None, k=None):
        """Build from ``(P, T)`` setup and rate arrays; handy for synthetic instances."""
        setup = np.asarray(setup, dtype=float)
        rate = np.asarray(rate, dtype=float)
        P, T = rate.shape
        platforms = platforms or [f"p{i}" for i in range(P)]
        tasks = tasks or [f"t{j}" for j in range(T)]
        latency = {
            (platforms[i], tasks[j]): LatencyModel.from_params(setup[i, j], rate[i, j])
            for i in range(P)
            for j in range(T)
        }
        confidence = {}
        if k is not None:
            confidence = {tasks[j]: ConfidenceModel.from_k(k[j]) for j in range(T)}
        return cls(platforms, tasks, latency, confidence)

    @property
    def shape(self):
        return len(self.platforms), len(self.tasks)

    def model(self, platform, task) -> LatencyModel:
        try:
            return self.latency[(platform, task)]
        except KeyError:
            raise MissingModelError(f"no latency model for platform {platform!r}, task {task!r}") from None

    def arrays(self):
        """``(setup, rate)`` as ``(P, T)`` float arrays."""
        P, T = self.shape
        setup = np.empty((P, T))
        rate = np.empty((P, T))
        for i, p in enumerate(self.platforms):
            for j, t in enumerate(self.tasks):
                m = self.model(p, t)
                setup[i, j] = m.setup_s_
                rate[i, j] = m.rate_
        return setup, rate


@dataclass(frozen=True)
class FrontierPoint:
    targets: tuple
    makespan_s: float
    allocation: np.ndarray
    demands: tuple


# --- cost matrix and objective ---------------------------------------------


def build_cost_matrix(models: MetricModels, targets):
    """``(C, N)``: per-task path demands and each platform's solo latency at them."""
    targets = [float(t) for t in targets]
    if len(targets) != len(models.tasks):
        raise ValueError(f"expected {len(models.tasks)} targets, got {len(targets)}")
    demands = []
    for task, target in zip(models.tasks, targets):
        if task not in models.confidence:
            raise MissingModelError(f"no confidence model for task {task!r}")
        demands.append(models.confidence[task].required_paths(target))
    setup, rate = models.arrays()
    N = np.array(demands, dtype=np.int64)
    C = setup + N[None, :].astype(float) / rate
    return C, N


def platform_loads(A, models: MetricModels, N) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    setup, rate = models.arrays()
    return _loads(A, setup, rate, np.asarray(N, dtype=float))


def _loads(A, setup, rate, N):
    return ((A > 0) * setup + A * N[None, :] / rate).sum(axis=1)


def objective(A, models: MetricModels, N) -> float:
    """Makespan of allocation ``A``."""
    A = np.asarray(A, dtype=float)
    if A.shape != models.shape:
        raise ValueError(f"allocation shape {A.shape} != {models.shape}")
    return float(platform_loads(A, models, N).max())


# --- helpers ----------------------------------------------------------------


def _snap(A):
    A = np.where(A < SNAP, 0.0, A)
    return A / A.sum(axis=0, keepdims=True)


def proportional_allocation(models: MetricModels, N=None) -> np.ndarray:
    """Each task split across all platforms in proportion to their rates for it."""
    _, rate = models.arrays()
    return _snap(rate / rate.sum(axis=0, keepdims=True))


def single_platform_allocation(models: MetricModels, platform: int) -> np.ndarray:
    A = np.zeros(models.shape)
    A[platform, :] = 1.0
    return A


# --- exact solver -----------------------------------------------------------


def _pattern_lp(support, setup, cost):
    """Minimum makespan with nonzero entries restricted to ``support``.

    ``cost[p, t] = N_t / rate[p, t]``. Variables are the support fractions
    followed by the makespan. Returns ``(value, A)`` or ``None``.
    """
    P, T = support.shape
    cells = np.argwhere(support)
    nv = len(cells) + 1
    c = np.zeros(nv)
    c[-1] = 1.0
    A_ub = np.zeros((P, nv))
    b_ub = np.zeros(P)
    A_eq = np.zeros((T, nv))
    b_eq = np.ones(T)
    for v, (p, t) in enumerate(cells):
        A_ub[p, v] = cost[p, t]
        b_ub[p] -= setup[p, t]
        A_eq[t, v] = 1.0
    A_ub[:, -1] = -1.0
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
        bounds=[(0, None)] * nv, method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        return None
    A = np.zeros((P, T))
    for v, (p, t) in enumerate(cells):
        A[p, t] = max(res.x[v], 0.0)
    return float(res.x[-1]), A


def _polish(A, setup, cost):
    """Re-solve the equal-finish system on the active set of an LP vertex.

    Unknowns are the nonzero fractions and the makespan; equations are the
    column sums plus ``load_p = M`` for every platform within tolerance of
    the bottleneck. Removes the LP solver's feasibility slack.
    """
    P, T = A.shape
    support = A > 0
    loads = (support * setup + A * cost).sum(axis=1)
    M = loads.max()
    tight = np.flatnonzero(loads >= M * (1 - 1e-7))
    cells = np.argwhere(support)
    nv = len(cells) + 1
    rows = []
    rhs = []
    for t in range(T):
        row = np.zeros(nv)
        for v, (_, tt) in enumerate(cells):
            if tt == t:
                row[v] = 1.0
        rows.append(row)
        rhs.append(1.0)
    for p in tight:
        row = np.zeros(nv)
        for v, (pp, tt) in enumerate(cells):
            if pp == p:
                row[v] = cost[pp, tt]
        row[-1] = -1.0
        rows.append(row)
        rhs.append(-float(setup[p][support[p]].sum()))
    M_rows = np.array(rows)
    if np.linalg.matrix_rank(M_rows) < nv:
        return A
    sol, *_ = np.linalg.lstsq(M_rows, np.array(rhs), rcond=None)
    if (sol[:-1] <= 0).any():
        return A
    B = np.zeros_like(A)
    for v, (p, t) in enumerate(cells):
        B[p, t] = sol[v]
    B = B / B.sum(axis=0, keepdims=True)
    return B


def _evaluate(A, setup, rate, N):
    return float(_loads(A, setup, rate, N).max())


def _optimize_exact(setup, rate, N):
    P, T = rate.shape
    cost = N[None, :] / rate
    scale = float(cost.max())
    s_setup, s_cost = setup / scale, cost / scale
    column_choices = [
        [np.array(bits, dtype=bool) for bits in itertools.product((False, True), repeat=P) if any(bits)]
        for _ in range(T)
    ]
    best_val, best_A = math.inf, None
    for cols in itertools.product(*column_choices):
        support = np.column_stack(cols)
        if (support * s_setup).sum(axis=1).max() >= best_val:
            continue
        solved = _pattern_lp(support, s_setup, s_cost)
        if solved is None:
            continue
        _, A = solved
        for cand in (_snap(A), _snap(_polish(_snap(A), s_setup, s_cost))):
            val = float(((cand > 0) * s_setup + cand * s_cost).sum(axis=1).max())
            if val < best_val:
                best_val, best_A = val, cand
    return best_A


def _local_search(A, setup, rate, N, rng):
    P, T = A.shape
    cost = N[None, :] / rate
    best = _evaluate(A, setup, rate, N)
    stale = 0
    limit = P * T * 100
    while stale < limit:
        loads = _loads(A, setup, rate, N)
        p = int(np.argmax(loads))
        tasks_on_p = np.flatnonzero(A[p] > 0)
        others = [q for q in range(P) if q != p]
        if not others or not len(tasks_on_p):
            break
        t = int(rng.choice(tasks_on_p))
        q = int(rng.choice(others))
        extra_setup = setup[q, t] if A[q, t] == 0 else 0.0
        balance = (loads[p] - loads[q] - extra_setup) / (cost[p, t] + cost[q, t])
        improved = False
        for delta in (balance, A[p, t], 0.5 * A[p, t]):
            delta = min(max(delta, 0.0), A[p, t])
            if delta <= 0:
                continue
            B = A.copy()
            B[p, t] -= delta
            B[q, t] += delta
            B = _snap(B)
            val = _evaluate(B, setup, rate, N)
            if val < best * (1 - 1e-12):
                A, best, improved = B, val, True
                break
        stale = 0 if improved else stale + 1
    return A


def _optimize_heuristic(setup, rate, N, models):
    P, T = rate.shape
    baselines = [single_platform_allocation(models, p) for p in range(P)]
    baselines.append(_snap(rate / rate.sum(axis=0, keepdims=True)))
    full = _pattern_lp(np.ones((P, T), dtype=bool), setup, N[None, :] / rate)
    if full is not None:
        baselines.append(_snap(full[1]))
    start = min(baselines, key=lambda B: _evaluate(B, setup, rate, N))
    refined = _local_search(start, setup, rate, N, np.random.default_rng(0))
    return min([refined] + baselines, key=lambda B: _evaluate(B, setup, rate, N))


def optimize(models: MetricModels, N) -> np.ndarray:
    """Allocation minimising the makespan.

    Exact (to ``1e-6`` relative) when ``P * T <= 9``; otherwise a local
    search that never returns worse than any single-platform or
    proportional-to-rate allocation.
    """
    N = np.asarray(N, dtype=float)
    setup, rate = models.arrays()
    P, T = rate.shape
    if P == 1:
        return np.ones((1, T))
    if P * T <= EXACT_LIMIT:
        return _optimize_exact(setup, rate, N)
    return _optimize_heuristic(setup, rate, N, models)


# --- grid oracle --------------------------------------------------------------


def _compositions(total, parts):
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    out = []
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            out.append([first, *rest])
    return np.array(out, dtype=np.int64)


@numba.njit(cache=True)
def _fluid_bound(loads, setup_min, rate_hat, work):
    # smallest M with sum_p max(0, M - L_p - s_p) * rate_hat_p >= work; a
    # platform that takes any remaining work pays at least s_p first
    P = loads.size
    top = loads[0]
    for p in range(1, P):
        if loads[p] > top:
            top = loads[p]
    if work <= 0:
        return top
    # any subset S gives M_S = (work + sum_S a_p r_p) / sum_S r_p >= M; the
    # prefix of platforms sorted by a_p attains it, so scan prefixes in order
    best = np.inf
    num = work
    den = 0.0
    used = 0
    last = -np.inf
    last_i = -1
    while used < P:
        nxt = -1
        for i in range(P):
            a = loads[i] + setup_min[i]
            if (a > last or (a == last and i > last_i)) and (nxt < 0 or a < loads[nxt] + setup_min[nxt]):
                nxt = i
        a = loads[nxt] + setup_min[nxt]
        num += a * rate_hat[nxt]
        den += rate_hat[nxt]
        m = num / den
        if m < best:
            best = m
        last = a
        last_i = nxt
        used += 1
    return max(best, top)


@numba.njit(cache=True)
def _count_within(level, load, setup, step, G):
    # largest x in [0, G] with load + [x>0]*setup + x*step <= level, or -1
    if load > level:
        return -1
    if load + setup + step > level:
        return 0
    x = int(math.floor((level - load - setup) / step))
    if x > G:
        x = G
    while x > 0 and load + setup + x * step > level:
        x -= 1
    while x < G and load + setup + (x + 1) * step <= level:
        x += 1
    return x


@numba.njit(cache=True)
def _feasible(level, loads, setup, step, G):
    total = 0
    for p in range(loads.size):
        c = _count_within(level, loads[p], setup[p], step[p], G)
        if c < 0:
            return False
        total += c
    return total >= G


@numba.njit(cache=True)
def _last_column(loads, setup, step, G, cutoff):
    # exact grid minimum of max_p f_p(x_p) subject to sum x_p = G, where
    # f_p(x) = L_p + [x>0] s_p + x d_p; returns inf when it cannot beat cutoff
    P = loads.size
    x = np.zeros(P, dtype=np.int64)
    lb = max(_fluid_bound(loads, setup, 1.0 / step, float(G)), loads.max())
    if lb >= cutoff:
        return np.inf, x
    best = cutoff
    found = False
    for p in range(P):
        # the optimum is some f_p(x); scan p's levels upward from the bound
        if loads[p] >= lb:
            k = 0
        else:
            # rounding in the bound can overshoot the last grid point
            k = min(G, max(1, int(math.ceil((lb - loads[p] - setup[p]) / step[p]))))
            while k > 1 and loads[p] + setup[p] + (k - 1) * step[p] >= lb:
                k -= 1
        while k <= G:
            level = loads[p] + setup[p] + k * step[p] if k > 0 else loads[p]
            if level >= best:
                break
            if _feasible(level, loads, setup, step, G):
                best = level
                found = True
                break
            k += 1
    if not found:
        return np.inf, x
    remaining = G
    for p in range(P):
        c = _count_within(best, loads[p], setup[p], step[p], G)
        if c > remaining:
            c = remaining
        x[p] = c
        remaining -= c
    return best, x


@numba.njit(cache=True)
def _branch_and_bound(comp, setup, step, rate_hat, setup_min, work_left, G, best, best_choice):
    P, T = setup.shape
    K = comp.shape[0]
    best_choice = best_choice.copy()
    loads = np.zeros((T + 1, P))
    idx = np.full(T, -1, dtype=np.int64)
    depth = 0
    while depth >= 0:
        if depth == T - 1:
            val, x = _last_column(loads[depth], setup[:, depth], step[:, depth], G, best)
            if val < best:
                best = val
                for t in range(T - 1):
                    best_choice[t] = comp[idx[t]]
                best_choice[T - 1] = x
            depth -= 1
            continue
        idx[depth] += 1
        if idx[depth] >= K:
            idx[depth] = -1
            depth -= 1
            continue
        c = comp[idx[depth]]
        new = loads[depth + 1]
        over = False
        for p in range(P):
            new[p] = loads[depth, p] + c[p] * step[p, depth]
            if c[p] > 0:
                new[p] += setup[p, depth]
            if new[p] >= best:
                over = True
        if over:
            continue
        if _fluid_bound(new, setup_min[depth + 1], rate_hat[depth + 1], work_left[depth + 1]) >= best:
            continue
        depth += 1
    return best, best_choice


def brute_force(models: MetricModels, N, grid_step: float = 0.01) -> np.ndarray:
    """Exact minimiser of the makespan over allocations on a simplex grid.

    Columns are restricted to multiples of ``grid_step``. The search is
    exhaustive in effect: partial allocations are discarded only when a
    valid lower bound already matches the incumbent. The bound is a fluid
    relaxation in which each platform pays its cheapest remaining setup.
    The last column is solved exactly by a threshold search instead of
    enumeration.
    """
    P, T = models.shape
    if P * T > EXACT_LIMIT:
        raise InstanceTooLargeError(f"brute force needs P*T <= {EXACT_LIMIT}, got {P * T}")
    if not any(math.isclose(grid_step, g) for g in (0.01, 0.05)):
        raise ValueError("grid_step must be 0.01 or 0.05")
    G = int(round(1 / grid_step))
    N = np.asarray(N, dtype=float)
    setup, rate = models.arrays()
    step = N[None, :] / rate / G
    # suffix bounds over the tasks still to be placed at each depth
    rate_hat = np.zeros((T + 1, P))
    setup_min = np.zeros((T + 1, P))
    work_left = np.zeros(T + 1)
    for t in range(T - 1, -1, -1):
        rate_hat[t] = np.maximum(rate_hat[t + 1], rate[:, t])
        setup_min[t] = setup[:, t] if t == T - 1 else np.minimum(setup_min[t + 1], setup[:, t])
        work_left[t] = work_left[t + 1] + N[t]
    best, choice = np.inf, np.zeros((T, P), dtype=np.int64)
    # a coarser grid that divides G gives a feasible incumbent cheaply
    for coarse in (g for g in (10, 20) if g < G and G % g == 0):
        found, c = _branch_and_bound(_compositions(coarse, P), setup, N[None, :] / rate / coarse,
                                     rate_hat, setup_min, work_left, coarse, np.inf, choice)
        if not np.isfinite(found):
            continue
        c = c * (G // coarse)
        val = _loads(c.T.astype(float) / G, setup, rate, N).max()
        if val < best:
            best, choice = val, c
    # nudge so the incumbent itself can be re-found if nothing beats it
    found, choice = _branch_and_bound(_compositions(G, P), setup, step, rate_hat, setup_min,
                                      work_left, G, best * (1 + 1e-12), choice)
    if not np.isfinite(found):
        raise RuntimeError("grid search found no allocation")
    return choice.T.astype(float) / G


# --- design space -------------------------------------------------------------


def frontier(portfolio, models: MetricModels, targets_list) -> list:
    """One optimised allocation per target vector, tightest targets first."""
    targets_list = [tuple(float(x) for x in tv) for tv in targets_list]
    if not targets_list:
        raise ValueError("need at least one target vector")
    if portfolio is not None and list(models.tasks) != [t.id for t in portfolio]:
        raise ValueError("model task order does not match the portfolio")
    points = []
    for targets in sorted(targets_list, key=lambda tv: (sum(tv), tv)):
        _, N = build_cost_matrix(models, targets)
        A = optimize(models, N)
        points.append(FrontierPoint(targets, objective(A, models, N), A, tuple(int(n) for n in N)))
    return points
