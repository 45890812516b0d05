"""Frame-wise alternating optimization of the configuration matrix.

Each outer iteration picks one frame ``t_k`` with the other K-1 frames held
fixed, polls a coordinate pattern search for a good start, then minimizes
``||u||_1`` subject to ``u = coherences(t_k)`` and the per-group simplex
constraints with an augmented Lagrangian: closed-form soft-threshold updates
of ``u``, projected-gradient updates of ``t_k`` and dual ascent on ``beta``.
A new frame is kept only if it strictly lowers the average mutual coherence,
so the recorded coherence history never increases.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from .channel import SensingDictionary
from .coherence import average_mutual_coherence, pair_indices
from .ris import SIMPLEX_TOL, ConfigurationMatrix, validate_configuration

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FcaoParams:
    max_outer_iterations: int = 200
    n_al: int = 4                 # augmented-Lagrangian (dual) loops
    n_am: int = 2                 # alternating u / t_k sweeps per dual loop
    prox_steps: int = 20
    prox_step0: float = 0.1
    pattern_budget: int = 200     # objective evaluations per frame
    pattern_step0: float = 0.25
    pattern_min_step: float = 1e-3
    rho0: float = 1.0
    rho_max: float = 1e6
    rho_growth: float = 2.0
    residual_shrink: float = 0.25
    mu_tol: float = 1e-6          # improvements below this count as stagnation
    beta_init: str = "random"     # "random" (uniform(0,1)) or "zero"

    def __post_init__(self):
        for name in ("max_outer_iterations", "n_al", "n_am", "prox_steps", "pattern_budget"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.rho0 <= 0 or self.rho_max < self.rho0 or self.rho_growth < 1:
            raise ValueError("need 0 < rho0 <= rho_max and rho_growth >= 1")
        if self.prox_step0 <= 0 or self.pattern_step0 <= 0 or self.pattern_min_step <= 0:
            raise ValueError("step sizes must be positive")
        if self.beta_init not in ("random", "zero"):
            raise ValueError("beta_init must be 'random' or 'zero'")


@dataclass
class DualState:
    beta: np.ndarray
    rho: float = 1.0
    last_residual: float | None = field(default=None)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=complex)
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not np.all(np.isfinite(self.beta)):
            raise ValueError("beta must be finite")


# -- simplex machinery ------------------------------------------------------

def project_group_simplex(v, total: float = 1.0) -> np.ndarray:
    """Euclidean projection of ``v`` onto {w >= 0, sum(w) = total}."""
    return project_rows(np.asarray(v, dtype=float)[None, :], total)[0]


def project_rows(V: np.ndarray, total: float = 1.0) -> np.ndarray:
    """Row-wise simplex projection by sorting and thresholding."""
    if total <= 0:
        raise ValueError("simplex total must be positive")
    V = np.asarray(V, dtype=float)
    n = V.shape[1]
    s = -np.sort(-V, axis=1)
    css = np.cumsum(s, axis=1) - total
    idx = np.arange(1, n + 1)
    cond = s - css / idx > 0
    r = n - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(V.shape[0]), r] / (r + 1)
    return np.maximum(V - theta[:, None], 0.0)


def project_frame(t: np.ndarray, n_groups: int, n_states: int) -> np.ndarray:
    return project_rows(np.reshape(t, (n_groups, n_states))).ravel()


def frame_feasible(t: np.ndarray, n_groups: int, n_states: int, tol: float = SIMPLEX_TOL) -> bool:
    g = np.reshape(t, (n_groups, n_states))
    return bool(np.all(np.isfinite(g)) and np.all(g >= -tol)
                and np.all(np.abs(g.sum(axis=1) - 1.0) <= tol))


# -- single-frame subproblem -------------------------------------------------

class FrameProblem:
    """Coherence of Gamma = T A as a function of one free frame ``t_k``.

    The Gram matrix contribution of the fixed frames is cached, so each
    evaluation costs one rank-one update of an M x M matrix.
    """

    def __init__(self, T_minus_k: np.ndarray, A: SensingDictionary):
        self.A = np.asarray(A.A)
        self.n_groups, self.n_states = A.n_groups, A.n_states
        rest = np.asarray(T_minus_k, dtype=float).reshape(-1, self.A.shape[0])
        G_rest = rest @ self.A
        self.gram_rest = G_rest.conj().T @ G_rest
        self.M = self.A.shape[1]
        self.pairs = pair_indices(self.M)
        self.n_evals = 0

    def _parts(self, t):
        g = np.asarray(t, dtype=float) @ self.A
        gram = self.gram_rest + np.outer(g.conj(), g)
        diag = np.real(np.diagonal(gram)).copy()
        if np.any(diag <= 0):
            raise FloatingPointError("measurement matrix has a zero column")
        norms = np.sqrt(diag)
        self.n_evals += 1
        return g, gram / np.outer(norms, norms), norms, diag

    def coherence_matrix(self, t) -> np.ndarray:
        return self._parts(t)[1]

    def coherences(self, t) -> np.ndarray:
        return self._parts(t)[1][self.pairs]

    def mu(self, t) -> float:
        C = self._parts(t)[1]
        return float(2.0 * np.sum(np.abs(C[self.pairs])) / (self.M * (self.M - 1)))

    def _hermitian_full(self, v: np.ndarray) -> np.ndarray:
        F = np.zeros((self.M, self.M), dtype=complex)
        F[self.pairs] = v
        return F + F.conj().T

    def smooth_value(self, t, kappa: np.ndarray, rho: float) -> float:
        """(rho/2) * sum over pairs of |u_{m,m'}(t) - kappa_{m,m'}|^2."""
        C = self._parts(t)[1]
        return float(rho / 2 * np.sum(np.abs(C[self.pairs] - kappa) ** 2))

    def smooth_value_and_grad(self, t, kappa: np.ndarray, rho: float):
        g, C, norms, diag = self._parts(t)
        D = C - self._hermitian_full(kappa)
        np.fill_diagonal(D, 0.0)
        value = rho / 4 * np.sum(np.abs(D) ** 2)
        H = (rho / 2) * D / np.outer(norms, norms)
        e = np.sum(np.real(D.conj() * C), axis=1)
        H[np.diag_indices(self.M)] = -(rho / 2) * e / diag
        grad = 2.0 * np.real(self.A @ (H @ g.conj()))
        return float(value), grad


def lagrangian_value(t_k, u, dual: DualState, T_minus_k, A: SensingDictionary) -> float:
    """Augmented Lagrangian; +inf when ``t_k`` leaves the per-group simplexes."""
    prob = FrameProblem(T_minus_k, A)
    t_k = np.asarray(t_k, dtype=float)
    if not frame_feasible(t_k, prob.n_groups, prob.n_states):
        return float("inf")
    r = np.asarray(u) - prob.coherences(t_k)
    return float(np.sum(np.abs(u)) + np.sum(np.real(np.conj(dual.beta) * r))
                 + dual.rho / 2 * np.sum(np.abs(r) ** 2))


def soft_threshold_update_u(coh: np.ndarray, dual: DualState) -> np.ndarray:
    """Minimizer of ||u||_1 + (rho/2)||u - z||^2 with z = coh - beta/rho."""
    z = np.asarray(coh) - dual.beta / dual.rho
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(mag > 0, np.maximum(1.0 - 1.0 / (dual.rho * mag), 0.0), 0.0)
    return z * shrink


def prox_grad_update_t(t_k: np.ndarray, u: np.ndarray, dual: DualState,
                       problem: FrameProblem, steps: int = 20, step0: float = 0.1,
                       max_halvings: int = 60) -> np.ndarray:
    """Projected-gradient steps on the smooth part of the Lagrangian in ``t_k``.

    Each step backtracks (halving from ``step0``) until the smooth part
    strictly decreases; a step that cannot decrease it ends the update.
    """
    kappa = np.asarray(u) + dual.beta / dual.rho
    t = np.asarray(t_k, dtype=float).copy()
    f, grad = problem.smooth_value_and_grad(t, kappa, dual.rho)
    for _ in range(steps):
        step = step0
        for _ in range(max_halvings):
            cand = project_frame(t - step * grad, problem.n_groups, problem.n_states)
            if np.array_equal(cand, t):
                return t
            f_new = problem.smooth_value(cand, kappa, dual.rho)
            if f_new < f:
                break
            step /= 2
        else:
            return t
        t = cand
        f, grad = problem.smooth_value_and_grad(t, kappa, dual.rho)
    return t


def update_duals(u: np.ndarray, coh: np.ndarray, state: DualState,
                 params: FcaoParams = FcaoParams()) -> DualState:
    """beta += rho (u - coh); rho grows when the residual stagnates."""
    r = np.asarray(u) - np.asarray(coh)
    beta = state.beta + state.rho * r
    res = float(np.linalg.norm(r))
    rho = state.rho
    if state.last_residual is not None and res > params.residual_shrink * state.last_residual:
        rho = min(params.rho_max, params.rho_growth * rho)
    return DualState(beta, rho, res)


@dataclass
class SolveResult:
    t: np.ndarray
    u: np.ndarray
    mu: float
    value: float
    residuals: list = field(default_factory=list)  # ||u - coh|| after each dual loop


def augmented_lagrangian_solve(t_k_init, T_minus_k, A: SensingDictionary,
                               params: FcaoParams = FcaoParams(), rng=None,
                               problem: FrameProblem | None = None) -> SolveResult:
    """Alternating minimization of the augmented Lagrangian for one frame.

    Returns the iterate with the lowest average mutual coherence seen (the
    start point included), the last ``u`` and the Lagrangian at that iterate.
    """
    prob = problem if problem is not None else FrameProblem(T_minus_k, A)
    t = np.asarray(t_k_init, dtype=float).copy()
    if not frame_feasible(t, prob.n_groups, prob.n_states):
        raise ValueError("initial frame is not on the group simplexes")
    n_pairs = prob.pairs[0].size
    if params.beta_init == "random":
        rng = np.random.default_rng(rng)
        beta = rng.uniform(0.0, 1.0, n_pairs).astype(complex)
    else:
        beta = np.zeros(n_pairs, dtype=complex)
    dual = DualState(beta, params.rho0)
    u = prob.coherences(t)
    best_t, best_mu = t.copy(), prob.mu(t)
    residuals = []
    for _ in range(params.n_al):
        for _ in range(params.n_am):
            u = soft_threshold_update_u(prob.coherences(t), dual)
            t = prox_grad_update_t(t, u, dual, prob, params.prox_steps, params.prox_step0)
            mu = prob.mu(t)
            if mu < best_mu:
                best_t, best_mu = t.copy(), mu
        coh = prob.coherences(t)
        dual = update_duals(u, coh, dual, params)
        residuals.append(dual.last_residual)
    value = float(np.sum(np.abs(u))
                  + np.sum(np.real(np.conj(dual.beta) * (u - prob.coherences(best_t))))
                  + dual.rho / 2 * np.sum(np.abs(u - prob.coherences(best_t)) ** 2))
    return SolveResult(best_t, u, best_mu, value, residuals)


def pattern_search_init(t_k, problem: FrameProblem, params: FcaoParams = FcaoParams(),
                        rng=None, trace: list | None = None) -> np.ndarray:
    """Coordinate pattern search on the flattened frame.

    Polls +/- step along every coordinate (in a seeded random order), projects
    each poll point back onto the group simplexes and moves to the first
    strictly better point. The step halves after a poll with no improvement.
    """
    rng = np.random.default_rng(rng)
    t = np.asarray(t_k, dtype=float).copy()
    best = problem.mu(t)
    if trace is not None:
        trace.append(best)
    n = t.size
    step, evals = params.pattern_step0, 1
    while step >= params.pattern_min_step and evals < params.pattern_budget:
        improved = False
        for j in rng.permutation(n):
            for sign in (1.0, -1.0):
                if evals >= params.pattern_budget:
                    break
                cand = t.copy()
                cand[j] += sign * step
                cand = project_frame(cand, problem.n_groups, problem.n_states)
                if np.array_equal(cand, t):
                    continue
                val = problem.mu(cand)
                evals += 1
                if val < best:
                    t, best, improved = cand, val, True
                    if trace is not None:
                        trace.append(best)
                    break
            if improved or evals >= params.pattern_budget:
                break
        if not improved:
            step /= 2
    return t


@dataclass
class FcaoResult:
    T: ConfigurationMatrix
    mu: float
    history: list  # (iteration, frame_index, mu)


def fcao_optimize(T0: ConfigurationMatrix, A: SensingDictionary,
                  params: FcaoParams = FcaoParams(), seed=None) -> FcaoResult:
    report = validate_configuration(T0)
    if not report.ok:
        raise ValueError(f"initial configuration is infeasible: {report}")
    if T0.durations.shape[1] != A.A.shape[0]:
        raise ValueError("configuration and dictionary sizes disagree")
    rng = np.random.default_rng(seed)
    T = np.array(T0.durations)
    K = T.shape[0]
    mu = average_mutual_coherence(T @ A.A)
    history = [(0, -1, mu)]
    k, n_non = 0, 0
    for i in range(1, params.max_outer_iterations + 1):
        prob = FrameProblem(np.delete(T, k, axis=0), A)
        start = pattern_search_init(T[k], prob, params, rng)
        res = augmented_lagrangian_solve(start, None, A, params, rng, problem=prob)
        # recompute from the assembled matrix so the accepted value is exact
        cand = T.copy()
        cand[k] = project_frame(res.t, A.n_groups, A.n_states)
        mu_new = average_mutual_coherence(cand @ A.A)
        if mu_new < mu:
            n_non = 0 if mu - mu_new > params.mu_tol else n_non + 1
            T, mu = cand, mu_new
        else:
            n_non += 1
        history.append((i, k, mu))
        log.debug("iteration %d frame %d mu %.6f", i, k, mu)
        if n_non >= K:
            break
        k = (k + 1) % K
    return FcaoResult(ConfigurationMatrix(T, A.n_groups, A.n_states, T0.frame_length), mu, history)


def history_csv(history) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["iteration", "frame_index", "mu"])
    for it, k, mu in history:
        w.writerow([it, k, f"{mu:.17g}"])
    return out.getvalue()
