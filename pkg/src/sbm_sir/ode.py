"""Deterministic mean-field limit of the epidemic.

State vector y of length 3K is ordered (s_1..s_K, i_1..i_K, x_1..x_K) and
lives in the invariant domain

    U0 = {y >= 0, sum_k (s_k + i_k) <= 1, sum_k (s_k + x_k) <= 2}.

The vector field is

    ds_k = -eta * s_k * sum_l x_l W[l,k]
    di_k = -gamma * i_k - ds_k
    dx_k = -(eta + gamma) * x_k - ds_k

Integration uses an embedded Dormand-Prince 5(4) pair with FSAL and a
standard error controller; output is produced by clamping steps to the
requested grid times, so every reported state is a genuine 5th-order
solution point.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HorizonExceeded, OutOfDomain, SingularS, StepSizeUnderflow
from .model import ModelParams

DOMAIN_NEG_TOL = 1e-10
DOMAIN_SUM_TOL = 1e-9

DEFAULT_REL_TOL = 1e-9
DEFAULT_ABS_TOL = 1e-12


# --- state helpers ----------------------------------------------------------

def pack(s, i, x) -> np.ndarray:
    return np.concatenate([np.asarray(s, float), np.asarray(i, float), np.asarray(x, float)])


def unpack(y: np.ndarray, K: int):
    y = np.asarray(y, float)
    return y[:K], y[K:2 * K], y[2 * K:3 * K]


def check_domain(y: np.ndarray, K: int) -> np.ndarray:
    """Clamp tiny negative undershoot; raise OutOfDomain on real violations."""
    y = np.asarray(y, float).copy()
    if np.any(y < -DOMAIN_NEG_TOL):
        raise OutOfDomain(f"negative component {y.min():.3e}")
    y[y < 0] = 0.0
    s, i, x = unpack(y, K)
    if (s + i).sum() > 1 + DOMAIN_SUM_TOL or (s + x).sum() > 2 + DOMAIN_SUM_TOL:
        raise OutOfDomain("mass constraints of the invariant domain violated")
    return y


# --- vector fields ----------------------------------------------------------

def force_of_infection(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """F_k = eta * sum_l x_l W[l,k], so that ds_k/dt = -F_k s_k."""
    _, _, x = unpack(y, params.K)
    return params.eta * (x @ params.W)


def vector_field(y: np.ndarray, params: ModelParams) -> np.ndarray:
    """Right-hand side b(y); validates membership in the domain."""
    y = check_domain(y, params.K)
    return _rhs(y, params)


def _rhs(y: np.ndarray, params: ModelParams) -> np.ndarray:
    s, i, x = unpack(y, params.K)
    infall = params.eta * (x @ params.W) * s       # -ds_k
    return pack(
        -infall,
        -params.gamma * i + infall,
        -(params.eta + params.gamma) * x + infall,
    )


def pair_approx_field(state, params: ModelParams):
    """Pair-approximation closure on IS-edge densities.

    state is (s, i, y) where y_k is the density of infected-susceptible
    edges into community k (divided by n). Returns (ds, di, dy).
    """
    s, i, y = (np.asarray(a, float) for a in state)
    if np.any(s <= 1e-12):
        raise SingularS("pair approximation needs s_k > 1e-12")
    eta, gamma = params.eta, params.gamma
    ds = -eta * y
    di = -ds - gamma * i
    dy = -(eta + gamma) * y + eta * (y @ params.W) * s - (eta / s) * y * y
    return ds, di, dy


@dataclass(frozen=True)
class HeteroParams:
    """Community-dependent rates: eta_matrix[k,l] for k->l edges, gamma_vec[k]."""

    eta_matrix: np.ndarray
    gamma_vec: np.ndarray

    def __post_init__(self):
        em = np.asarray(self.eta_matrix, float)
        gv = np.asarray(self.gamma_vec, float)
        if np.any(em <= 0) or np.any(gv <= 0):
            raise ValueError("heterogeneous rates must be positive")
        object.__setattr__(self, "eta_matrix", em)
        object.__setattr__(self, "gamma_vec", gv)


def hetero_vector_field(state, params: ModelParams, hetero: HeteroParams):
    """Heterogeneous-rate extension; state is (s, x_matrix, i).

    x_matrix[k,l] is the normalized count of active half-edges out of
    community k with (unrealized) endpoint in community l. Convention for
    initial conditions: x_matrix[k,l](0) = i_k(0).
    """
    s, xm, i = state
    s = np.asarray(s, float)
    xm = np.asarray(xm, float)
    i = np.asarray(i, float)
    em, gv = hetero.eta_matrix, hetero.gamma_vec
    # infall_k = s_k * sum_j eta[j,k] W[j,k] x[j,k]
    infall = s * np.sum(em * params.W * xm, axis=0)
    ds = -infall
    dxm = -(em + gv[:, None]) * xm + infall[:, None]
    di = -gv * i + infall
    return ds, dxm, di


# --- Dormand-Prince 5(4) ----------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# b - b_hat: weights of the embedded 4th-order error estimate
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])

_SAFETY, _MIN_FAC, _MAX_FAC = 0.9, 0.2, 5.0


class _Stepper:
    """Adaptive DP54 stepper with FSAL; f maps (y) -> dy."""

    def __init__(self, f, y0, rel_tol, abs_tol, h0=1e-4):
        self.f = f
        self.y = np.asarray(y0, float)
        self.t = 0.0
        self.rel_tol = rel_tol
        self.abs_tol = abs_tol
        self.h = h0
        self.k1 = f(self.y)
        self.steps = 0
        self.rejected = 0

    def _attempt(self, h):
        k = [self.k1]
        for s in range(1, 7):
            ys = self.y + h * sum(a * ki for a, ki in zip(_A[s], k))
            k.append(self.f(ys))
        y_new = self.y + h * sum(b * ki for b, ki in zip(_B, k) if b != 0.0)
        err = h * sum(e * ki for e, ki in zip(_E, k) if e != 0.0)
        return y_new, k[6], err

    def step(self, h_max=np.inf):
        """One accepted step of size at most h_max; returns (t, y)."""
        while True:
            h = min(self.h, h_max)
            if h < 1e-13 * max(1.0, abs(self.t)):
                raise StepSizeUnderflow(f"step size {h:.2e} at t={self.t:.6g}")
            y_new, k_last, err = self._attempt(h)
            scale = self.abs_tol + self.rel_tol * np.maximum(np.abs(self.y), np.abs(y_new))
            err_norm = np.sqrt(np.mean((err / scale) ** 2))
            if err_norm <= 1.0:
                fac = _MAX_FAC if err_norm == 0 else min(
                    _MAX_FAC, max(_MIN_FAC, _SAFETY * err_norm ** -0.2)
                )
                self.h = h * fac
                self.t += h
                self.y = y_new
                self.k1 = k_last
                self.steps += 1
                return self.t, self.y
            self.rejected += 1
            self.h = h * max(_MIN_FAC, _SAFETY * err_norm ** -0.2)


HORIZON_REACHED = "HorizonReached"
STEADY_STATE = "SteadyState"


@dataclass
class OdeTrajectory:
    grid: np.ndarray              # requested output times
    states: np.ndarray            # (len(grid), dim)
    steps: int
    rejected_steps: int
    terminal: str                 # HORIZON_REACHED or STEADY_STATE

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


def _integrate_raw(f, y0, grid, rel_tol, abs_tol):
    grid = np.asarray(grid, float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid must be non-empty and strictly increasing, starting >= 0")
    y0 = np.asarray(y0, float)
    states = np.empty((grid.size, y0.size))
    gi = 0
    if grid[0] == 0.0:
        states[0] = y0
        gi = 1
    stepper = _Stepper(f, y0, rel_tol, abs_tol)
    while gi < grid.size:
        target = grid[gi]
        while stepper.t < target:
            stepper.step(h_max=target - stepper.t)
        states[gi] = stepper.y
        gi += 1
    return states, stepper


def integrate(
    y0: np.ndarray,
    params: ModelParams,
    grid,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> OdeTrajectory:
    """Integrate the mean-field system, reporting states at grid times."""
    K = params.K
    y0 = check_domain(np.asarray(y0, float), K)
    states, stepper = _integrate_raw(lambda y: _rhs(y, params), y0, grid, rel_tol, abs_tol)
    states = np.vstack([check_domain(s, K) for s in states])
    return OdeTrajectory(
        grid=np.asarray(grid, float),
        states=states,
        steps=stepper.steps,
        rejected_steps=stepper.rejected,
        terminal=HORIZON_REACHED,
    )


def default_initial_state(params: ModelParams, s0, i0, x0=None) -> np.ndarray:
    """Standard initial condition with x(0) = i(0) unless x0 given."""
    i0 = np.asarray(i0, float)
    x0 = i0 if x0 is None else np.asarray(x0, float)
    return check_domain(pack(s0, i0, x0), params.K)


def steady_state(
    y0: np.ndarray,
    params: ModelParams,
    x_tol: float = 1e-10,
    t_max: float = 1e4,
    rel_tol: float = DEFAULT_REL_TOL,
    abs_tol: float = DEFAULT_ABS_TOL,
) -> np.ndarray:
    """Integrate until ||x||_1 and ||i||_1 fall below x_tol.

    Returns the limiting state with x and i zeroed and s frozen. Raises
    HorizonExceeded if the tolerance is not reached by t_max.
    """
    K = params.K
    y = check_domain(np.asarray(y0, float), K)
    s, i, x = unpack(y, K)
    if np.abs(x).sum() < x_tol and np.abs(i).sum() < x_tol:
        return pack(s, np.zeros(K), np.zeros(K))
    stepper = _Stepper(lambda yy: _rhs(yy, params), y, rel_tol, abs_tol)
    while stepper.t < t_max:
        t, y = stepper.step(h_max=t_max - stepper.t)
        s, i, x = unpack(y, K)
        if np.abs(x).sum() < x_tol and np.abs(i).sum() < x_tol:
            s = np.maximum(s, 0.0)
            return pack(s, np.zeros(K), np.zeros(K))
    raise HorizonExceeded(f"steady state not reached by t_max={t_max}")


def integrate_field(f, y0, grid, rel_tol=DEFAULT_REL_TOL, abs_tol=DEFAULT_ABS_TOL):
    """Generic driver for the auxiliary fields (pair approximation, hetero).

    f maps a flat state vector to its derivative; states at grid times are
    returned as an array.
    """
    states, _ = _integrate_raw(f, y0, grid, rel_tol, abs_tol)
    return states


def integrate_pair_approx(s0, i0, y0, params, grid, **tol):
    """Grid states (s, i, y) of the pair-approximation system."""
    K = params.K

    def f(v):
        ds, di, dy = pair_approx_field((v[:K], v[K:2 * K], v[2 * K:]), params)
        return np.concatenate([ds, di, dy])

    flat0 = np.concatenate([np.asarray(s0, float), np.asarray(i0, float), np.asarray(y0, float)])
    states = integrate_field(f, flat0, grid, **tol)
    return states[:, :K], states[:, K:2 * K], states[:, 2 * K:]


def integrate_hetero(s0, i0, params, hetero: HeteroParams, grid, x0_matrix=None, **tol):
    """Grid states (s, x_matrix, i) of the heterogeneous-rate system."""
    K = params.K
    if x0_matrix is None:
        x0_matrix = np.tile(np.asarray(i0, float)[:, None], (1, K))

    def f(v):
        s = v[:K]
        xm = v[K:K + K * K].reshape(K, K)
        i = v[K + K * K:]
        ds, dxm, di = hetero_vector_field((s, xm, i), params, hetero)
        return np.concatenate([ds, dxm.ravel(), di])

    flat0 = np.concatenate(
        [np.asarray(s0, float), np.asarray(x0_matrix, float).ravel(), np.asarray(i0, float)]
    )
    states = integrate_field(f, flat0, grid, **tol)
    return (
        states[:, :K],
        states[:, K:K + K * K].reshape(len(states), K, K),
        states[:, K + K * K:],
    )


def first_x_peaks(traj: OdeTrajectory, params: ModelParams) -> np.ndarray:
    """Time of the first local maximum of each x_k along the trajectory.

    Uses the sign change of the analytic derivative at grid points with a
    cubic Hermite refinement between them; nan where no peak occurs.
    """
    K = params.K
    grid = traj.grid
    derivs = np.vstack([_rhs(y, params) for y in traj.states])[:, 2 * K:]
    xs = traj.states[:, 2 * K:]
    peaks = np.full(K, np.nan)
    for k in range(K):
        d = derivs[:, k]
        for j in range(len(grid) - 1):
            if d[j] > 0 and d[j + 1] <= 0:
                peaks[k] = _hermite_argmax(
                    grid[j], grid[j + 1], xs[j, k], xs[j + 1, k], d[j], d[j + 1]
                )
                break
    return peaks


def ode_trajectory_to_csv(traj: OdeTrajectory, params: ModelParams, reff=None) -> str:
    """CSV mirroring the simulation schema in normalized units.

    Columns are s_k, i_k, r_k = rho_k - s_k - i_k and x_k under the
    S/I/R/X headers, so the compare tooling can diff files directly;
    an extra reff column is appended when a series is supplied.
    """
    K = params.K
    header = "t," + ",".join(
        f"{name}_{k+1}" for name in ("S", "I", "R", "X") for k in range(K)
    )
    if reff is not None:
        header += ",reff"
    rho = params.rho
    lines = [header]
    for j, t in enumerate(traj.grid):
        s, i, x = unpack(traj.states[j], K)
        r = rho - s - i
        row = [f"{t:.17g}"]
        for block in (s, i, r, x):
            row.extend(f"{v:.17g}" for v in block)
        if reff is not None:
            row.append(f"{reff[j]:.17g}")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _hermite_argmax(t0, t1, y0, y1, m0, m1):
    """Location of the interior maximum of the cubic Hermite interpolant."""
    h = t1 - t0
    # p'(u) on [0,1] is quadratic: a u^2 + b u + c with
    c = m0 * h
    b = 6 * (y1 - y0) - h * (4 * m0 + 2 * m1)
    a = 6 * (y0 - y1) + 3 * h * (m0 + m1)
    if abs(a) < 1e-300:
        u = -c / b if b != 0 else 0.0
    else:
        disc = max(b * b - 4 * a * c, 0.0)
        r1 = (-b + np.sqrt(disc)) / (2 * a)
        r2 = (-b - np.sqrt(disc)) / (2 * a)
        candidates = [r for r in (r1, r2) if -1e-9 <= r <= 1 + 1e-9]
        u = min(candidates, key=lambda r: abs(r - 0.5)) if candidates else 0.0
    return t0 + min(max(u, 0.0), 1.0) * h
