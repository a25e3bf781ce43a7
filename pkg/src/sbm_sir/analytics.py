"""Infinite-time analytics: R0, R_eff(t), herd immunity, the implicit
final-size equation, and forward/backward branching-process survival.

Index conventions. With c = eta/(eta+gamma) and W symmetric:

    C = c * W * diag(s0),           C[k,l] = c W[k,l] s0[l]
    a_k = c * sum_l W[l,k] x0[l]

Final size (q_k = s_k(inf)/s_k(0)):   q = exp(-a) * exp(-C (1-q))
Backward extinction:                  q = exp(C (q-1)),       theta = 1-q
Forward extinction (mixed Poisson):   q_k = E_T exp(-(1-e^{-eta T}) (M(1-q))_k),
                                      T ~ Exp(gamma), M = W diag(s0), pi = 1-q

All fixed points are found by monotone iteration from q = 0, which
converges to the smallest solution; Aitken acceleration kicks in after
10^3 plain sweeps for near-critical parameters.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NoConvergence, QuadratureUnstable
from .model import ModelParams
from .ode import OdeTrajectory, unpack

POWER_MAX_ITER = 10 ** 5
FP_MAX_ITER = 10 ** 6
AITKEN_AFTER = 10 ** 3
CRITICAL_SLACK = 1e-10


# --- spectral machinery -----------------------------------------------------

@dataclass(frozen=True)
class SpectralReport:
    value: float
    eigvec: np.ndarray        # L2-normalized Perron right eigenvector
    iterations: int


def spectral_radius(C, tol: float = 1e-12) -> SpectralReport:
    """Largest eigenvalue of a non-negative matrix by power iteration.

    Iterates on C + shift*I (shift = 1 + max row sum) so that eigenvalue
    pairs of equal modulus and opposite sign cannot stall the iteration.
    """
    C = np.asarray(C, dtype=float)
    K = C.shape[0]
    if np.any(C < 0):
        raise ValueError("spectral_radius expects a non-negative matrix")
    shift = 1.0 + float(C.sum(axis=1).max())
    v = np.ones(K) / np.sqrt(K)
    lam = np.inf
    for it in range(1, POWER_MAX_ITER + 1):
        w = C @ v + shift * v
        v_new = w / np.linalg.norm(w)
        Cv = C @ v_new
        lam_new = float(v_new @ Cv)
        if (
            abs(lam_new - lam) < tol * max(1.0, abs(lam_new))
            and np.linalg.norm(Cv - lam_new * v_new) < 1e-10
        ):
            if v_new.sum() < 0:
                v_new = -v_new
            return SpectralReport(value=lam_new, eigvec=v_new, iterations=it)
        lam, v = lam_new, v_new
    raise NoConvergence(f"power iteration stalled after {POWER_MAX_ITER} iterations")


def _c(params: ModelParams) -> float:
    return params.eta / (params.eta + params.gamma)


def next_gen_matrix(params: ModelParams, s0) -> np.ndarray:
    s0 = np.asarray(s0, dtype=float)
    return _c(params) * params.W * s0[None, :]


def r0(params: ModelParams, s0) -> SpectralReport:
    """Spectral radius of C = (eta/(eta+gamma)) W diag(s0).

    When all s0 > 0 the radius is computed on the symmetric similar matrix
    diag(sqrt(s0)) cW diag(sqrt(s0)) and the eigenvector mapped back.
    """
    s0 = np.asarray(s0, dtype=float)
    if np.any(s0 < 0):
        raise ValueError("s0 must be non-negative")
    if np.all(s0 > 0):
        rt = np.sqrt(s0)
        B = rt[:, None] * (_c(params) * params.W) * rt[None, :]
        rep = spectral_radius(B)
        u = rep.eigvec / rt
        u /= np.linalg.norm(u)
        return SpectralReport(value=rep.value, eigvec=u, iterations=rep.iterations)
    return spectral_radius(next_gen_matrix(params, s0))


def reff_along(traj: OdeTrajectory, params: ModelParams):
    """R_eff at each grid time of an integrated trajectory."""
    K = params.K
    return [r0(params, unpack(y, K)[0]) for y in traj.states]


def reff_values(traj: OdeTrajectory, params: ModelParams) -> np.ndarray:
    return np.array([rep.value for rep in reff_along(traj, params)])


def herd_immunity_time(traj: OdeTrajectory, params: ModelParams):
    """First t with R_eff(t) = 1 (linear interpolation on the monotone
    series); None if R_eff(0) <= 1 or the threshold is never crossed."""
    vals = reff_values(traj, params)
    if vals[0] <= 1.0:
        return None
    below = np.flatnonzero(vals < 1.0)
    if below.size == 0:
        return None
    j = below[0]
    t0, t1 = traj.grid[j - 1], traj.grid[j]
    v0, v1 = vals[j - 1], vals[j]
    return float(t0 + (v0 - 1.0) / (v0 - v1) * (t1 - t0))


# --- fixed-point solvers ----------------------------------------------------

def _monotone_fixed_point(F, K: int, tol: float):
    """Iterate q <- F(q) from q=0; monotone, bounded by 1, Aitken-assisted.

    Returns (q, iterations, residual).
    """
    q = np.zeros(K)
    prev = [q]
    for it in range(1, FP_MAX_ITER + 1):
        q_new = F(q)
        assert np.all(q_new >= q - 1e-14), "iteration lost monotonicity"
        assert np.all(q_new <= 1.0 + 1e-14)
        q_new = np.minimum(q_new, 1.0)
        if np.max(np.abs(q_new - q)) < tol:
            resid = float(np.max(np.abs(q_new - F(q_new))))
            return q_new, it, resid
        prev.append(q_new)
        if it > AITKEN_AFTER and len(prev) >= 3:
            q0, q1, q2 = prev[-3], prev[-2], prev[-1]
            den = q2 - 2 * q1 + q0
            safe = np.abs(den) > 1e-300
            qa = q2.copy()
            qa[safe] = q2[safe] - (q2[safe] - q1[safe]) ** 2 / den[safe]
            qa = np.clip(qa, 0.0, 1.0)
            # accept the extrapolation only if it stays below the fixed point
            if np.all(qa >= q2) and np.all(F(qa) >= qa - 1e-14):
                q_new = qa
                prev = [qa]
        q = q_new
    raise NoConvergence(f"fixed point not reached in {FP_MAX_ITER} iterations")


@dataclass
class FinalSizeReport:
    s_inf: np.ndarray
    attack: np.ndarray               # s0 - s_inf
    q: np.ndarray                    # s_k(inf)/s_k(0)
    fixed_point_iterations: int
    residual: float
    degenerate: bool = False


def solve_final_size(params: ModelParams, s0, x0, tol: float = 1e-12) -> FinalSizeReport:
    """Smallest solution of q = exp(-a) exp(-C(1-q)); s_inf = q * s0.

    x0 = 0 with R0 > 1 is ambiguous (constant solution vs outbreak branch):
    the constant branch q = 1 is returned and a DegenerateInput warning is
    issued; callers wanting the outbreak branch should pass x0 -> 0+ or use
    survival_backward.
    """
    s0 = np.asarray(s0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if np.any(s0 <= 0):
        raise ValueError("solve_final_size requires s0 > 0 componentwise")
    if np.any(x0 < 0):
        raise ValueError("x0 must be non-negative")
    K = params.K
    if not np.any(x0 > 0):
        degenerate = r0(params, s0).value > 1.0
        if degenerate:
            warnings.warn(
                "x(0)=0 with R0>1: returning the constant (no-outbreak) branch",
                DegenerateInput,
            )
        q = np.ones(K)
        return FinalSizeReport(
            s_inf=s0.copy(), attack=np.zeros(K), q=q,
            fixed_point_iterations=0, residual=0.0, degenerate=degenerate,
        )
    a = _c(params) * (params.W.T @ x0)
    C = next_gen_matrix(params, s0)
    ea = np.exp(-a)

    def F(q):
        return ea * np.exp(-(C @ (1.0 - q)))

    q, its, resid = _monotone_fixed_point(F, K, tol)
    s_inf = q * s0
    return FinalSizeReport(
        s_inf=s_inf, attack=s0 - s_inf, q=q,
        fixed_point_iterations=its, residual=resid,
    )


def survival_backward(params: ModelParams, s0, tol: float = 1e-12) -> np.ndarray:
    """theta_k = 1 - q_k with q the smallest root of q = exp(C(q-1))."""
    s0 = np.asarray(s0, dtype=float)
    if r0(params, s0).value <= 1.0 + CRITICAL_SLACK:
        return np.zeros(params.K)
    C = next_gen_matrix(params, s0)

    def F(q):
        return np.exp(C @ (q - 1.0))

    q, _, _ = _monotone_fixed_point(F, params.K, tol)
    return 1.0 - q


def survival_forward(
    params: ModelParams, s0, quadrature_nodes: int = 64, tol: float = 1e-12
) -> np.ndarray:
    """pi_k: survival of the forward infection tree rooted in community k.

    The extinction equation q_k = E_T[exp(-(1-e^{-eta T})(M(1-q))_k)] with
    T ~ Exp(gamma) is evaluated by Gauss-Laguerre quadrature in u = gamma*T.
    """
    s0 = np.asarray(s0, dtype=float)
    ratio = params.eta / params.gamma
    if ratio > 1e6:
        raise QuadratureUnstable(f"eta/gamma = {ratio:.3g} too large for Laguerre nodes")
    if r0(params, s0).value <= 1.0 + CRITICAL_SLACK:
        return np.zeros(params.K)
    u, w = np.polynomial.laguerre.laggauss(quadrature_nodes)
    if not (np.all(np.isfinite(w)) and np.all(w > 0)):
        raise QuadratureUnstable("Laguerre weights degenerate")
    p = 1.0 - np.exp(-ratio * u)          # transmission prob at lifetime u/gamma
    M = params.W * s0[None, :]

    def F(q):
        m = M @ (1.0 - q)
        return w @ np.exp(-np.outer(p, m))

    q, _, _ = _monotone_fixed_point(F, params.K, tol)
    return 1.0 - q


@dataclass(frozen=True)
class SurvivalReport:
    pi: np.ndarray
    theta: np.ndarray
    method: str = "fixed-point iteration from 0; forward via Gauss-Laguerre"


def survival_report(params: ModelParams, s0, quadrature_nodes: int = 64) -> SurvivalReport:
    return SurvivalReport(
        pi=survival_forward(params, s0, quadrature_nodes),
        theta=survival_backward(params, s0),
    )


def outbreak_probability(pi, I0) -> float:
    """1 - prod_k (1-pi_k)^{I0_k}: any of the seeds' trees survives."""
    pi = np.asarray(pi, dtype=float)
    I0 = np.asarray(I0, dtype=np.int64)
    if np.any(pi < 0) or np.any(pi >= 1):
        raise ValueError("pi must lie in [0, 1)")
    return float(1.0 - np.prod((1.0 - pi) ** I0))


# --- forward branching-process Monte Carlo ----------------------------------

@dataclass
class TreeSummary:
    label_counts: np.ndarray
    survived: bool

    @property
    def size(self) -> int:
        return int(self.label_counts.sum())


def simulate_bp_tree(
    params: ModelParams, s0, root_label: int, max_nodes: int = 10 ** 4, seed: int = 0
) -> TreeSummary:
    """One forward infection tree, generation by generation.

    A node in community k lives T ~ Exp(gamma) and bears Pois((1-e^{-eta T})
    M[k,l]) children of label l, M = W diag(s0). survived = the tree reached
    max_nodes total nodes before dying out.
    """
    s0 = np.asarray(s0, dtype=float)
    if max_nodes < 1:
        raise ValueError("max_nodes must be >= 1")
    rng = np.random.default_rng(seed)
    K = params.K
    M = params.W * s0[None, :]
    counts = np.zeros(K, dtype=np.int64)
    active = np.zeros(K, dtype=np.int64)
    active[root_label] = 1
    counts[root_label] = 1
    while active.sum() > 0 and counts.sum() < max_nodes:
        nxt = np.zeros(K, dtype=np.int64)
        for k in range(K):
            m = int(active[k])
            if m == 0:
                continue
            T = rng.exponential(1.0 / params.gamma, size=m)
            lam = (1.0 - np.exp(-params.eta * T))[:, None] * M[k]
            nxt += rng.poisson(lam).sum(axis=0).astype(np.int64)
        counts += nxt
        active = nxt
    return TreeSummary(label_counts=counts, survived=bool(counts.sum() >= max_nodes))


def bp_ensemble(
    params: ModelParams,
    s0,
    root_label: int,
    n_trees: int,
    max_nodes: int = 10 ** 4,
    base_seed: int = 0,
):
    """Vectorized forest of independent trees.

    Returns (sizes, survived): total node counts (capped at the generation
    that crossed max_nodes) and the survival flags. All trees advance one
    generation per numpy pass, so the per-tree overhead is tiny.
    """
    s0 = np.asarray(s0, dtype=float)
    rng = np.random.default_rng(base_seed)
    K = params.K
    M = params.W * s0[None, :]
    sizes = np.ones(n_trees, dtype=np.int64)
    survived = np.zeros(n_trees, dtype=bool)
    # active[j, k]: live nodes of label k in tree j
    active = np.zeros((n_trees, K), dtype=np.int64)
    active[:, root_label] = 1
    live = np.arange(n_trees)
    while live.size:
        children = np.zeros((live.size, K), dtype=np.int64)
        for k in range(K):
            a = active[live, k]
            tot = int(a.sum())
            if tot == 0:
                continue
            owner = np.repeat(np.arange(live.size), a)
            T = rng.exponential(1.0 / params.gamma, size=tot)
            lam = (1.0 - np.exp(-params.eta * T))[:, None] * M[k]
            kids = rng.poisson(lam)
            for l in range(K):
                children[:, l] += np.bincount(owner, weights=kids[:, l], minlength=live.size).astype(np.int64)
        active[live] = children
        sizes[live] += children.sum(axis=1)
        crossed = sizes[live] >= max_nodes
        survived[live[crossed]] = True
        dead = children.sum(axis=1) == 0
        live = live[~(crossed | dead)]
    return sizes, survived


# --- serialization ----------------------------------------------------------

def report_json(
    final: FinalSizeReport,
    theta: np.ndarray,
    pi: np.ndarray,
    r0_value: float,
) -> str:
    return json.dumps(
        {
            "s_inf": final.s_inf.tolist(),
            "q": final.q.tolist(),
            "theta": np.asarray(theta, float).tolist(),
            "pi": np.asarray(pi, float).tolist(),
            "r0": float(r0_value),
            "residual": final.residual,
            "iterations": final.fixed_point_iterations,
        }
    )
