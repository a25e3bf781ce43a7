"""Exact stochastic SIR simulation in two modes.

run_graph_sir is the reference Gillespie dynamic on an explicit (multi)graph:
the total event rate is gamma*I_total + eta*(IS-cut counted with edge
multiplicity), and the infected-susceptible cut is maintained incrementally.

run_exploration simulates the graph-free exploration process: an infected
vertex in community k carries Poisson(D_k) active half-edges, each half-edge
fires at rate eta (target community ~ P[k,:], uniform vertex there, infection
only if susceptible, the half-edge is consumed either way) and recovery at
rate gamma deletes all half-edges of the vertex. The event loop is a numba
kernel; the vertex-and-type draw uses a rejection step against the running
maximum active degree, which is equivalent in law to aggregated-rate
Gillespie selection.

Grid sampling uses the left-limit-carried-forward (cadlag) value at each
grid time. horizon=inf means run to extinction (I = 0, hence X = 0).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import EventCapExceeded, IncompleteTrajectory, InfeasibleInit
from .graphs import LabeledGraph, community_layout
from .model import ModelParams, community_transition, mean_degrees, validate
from .seeds import derive_stream, fold32

DEFAULT_EVENT_CAP = 10 ** 9


@dataclass
class EpidemicState:
    """Live state of a run: per-vertex flags plus per-community counters."""

    status: np.ndarray          # 0 susceptible, 1 infected, 2 recovered
    active_degree: np.ndarray   # d_v; zero unless infected
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    X: np.ndarray
    t: float

    def check_invariants(self, params: ModelParams):
        assert np.array_equal(self.S + self.I + self.R, params.community_sizes)
        assert np.all(self.S >= 0) and np.all(self.I >= 0) and np.all(self.R >= 0)
        assert np.all(self.X >= 0)
        assert np.all(self.active_degree[self.status != 1] == 0)


@dataclass(frozen=True)
class InitialCondition:
    """Per-community initially infected / recovered counts.

    active_degrees=None draws X_k(0) as independent Poisson(D_k) per
    initially infected vertex; otherwise it lists explicit per-vertex active
    degrees for the infected, flattened in community order (exploration
    mode only; graph runs derive the cut from the sampled graph).
    """

    infected: np.ndarray
    recovered: np.ndarray | None = None
    active_degrees: np.ndarray | None = None

    def counts(self, params: ModelParams):
        inf = np.asarray(self.infected, dtype=np.int64).reshape(params.K)
        rec = (
            np.zeros(params.K, dtype=np.int64)
            if self.recovered is None
            else np.asarray(self.recovered, dtype=np.int64).reshape(params.K)
        )
        if np.any(inf < 0) or np.any(rec < 0):
            raise InfeasibleInit("negative initial counts")
        if np.any(inf + rec > params.community_sizes):
            raise InfeasibleInit("initial infected+recovered exceed community size")
        if self.active_degrees is not None:
            ad = np.asarray(self.active_degrees, dtype=np.int64)
            if ad.size != inf.sum() or np.any(ad < 0):
                raise InfeasibleInit("explicit active degrees malformed")
        return inf, rec


def single_seed(params: ModelParams, community: int) -> InitialCondition:
    inf = np.zeros(params.K, dtype=np.int64)
    inf[community] = 1
    return InitialCondition(infected=inf)


@dataclass
class Trajectory:
    """Grid-sampled counts of one run, with event metadata.

    S, I, R, X have shape (len(grid), K) and hold raw counts (X is the
    half-edge count for exploration runs, the IS-cut for graph runs).
    """

    sampling_grid: np.ndarray
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    X: np.ndarray
    events: int
    final_state: EpidemicState
    extinct: bool
    max_active_degree: int
    initial_S: np.ndarray = None


def _check_grid(grid, horizon):
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("grid must be non-empty")
    if np.any(np.diff(grid) <= 0) or grid[0] < 0:
        raise ValueError("grid times must be strictly increasing and >= 0")
    if np.isfinite(horizon) and grid[-1] > horizon:
        raise ValueError("grid extends beyond the horizon")
    return grid


# --- graph Gillespie --------------------------------------------------------

def run_graph_sir(
    graph: LabeledGraph,
    params: ModelParams,
    init: InitialCondition,
    seed: int,
    horizon: float = np.inf,
    grid=(0.0,),
    event_cap: int = DEFAULT_EVENT_CAP,
) -> Trajectory:
    """Exact SIR on a fixed labeled (multi)graph; self-loops are inert."""
    validate(params)
    grid = _check_grid(grid, horizon)
    K = params.K
    labels = np.asarray(graph.labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=K)
    if graph.n != params.n or not np.array_equal(counts, params.community_sizes):
        raise InfeasibleInit("graph labels do not match the model's community sizes")
    inf0, rec0 = init.counts(params)

    rng = np.random.default_rng(seed)
    n = graph.n
    status = np.zeros(n, dtype=np.int8)
    for k in range(K):
        members = np.flatnonzero(labels == k)
        chosen = rng.choice(members, size=int(inf0[k] + rec0[k]), replace=False)
        status[chosen[: inf0[k]]] = 1
        status[chosen[inf0[k]:]] = 2

    # flat neighbor arrays per vertex for vectorized cut updates
    nbrs = graph.neighbor_lists(skip_self_loops=True)
    nbr_idx = [np.array([u for u, _ in lst], dtype=np.int64) for lst in nbrs]
    nbr_mult = [np.array([m for _, m in lst], dtype=np.int64) for lst in nbrs]

    cut = np.zeros(n, dtype=np.int64)
    infected = [int(v) for v in np.flatnonzero(status == 1)]
    for v in infected:
        if nbr_idx[v].size:
            cut[v] = int(nbr_mult[v][status[nbr_idx[v]] == 0].sum())

    S = counts - inf0 - rec0
    S0 = S.copy()
    I = inf0.copy()
    R = rec0.copy()
    X = np.zeros(K, dtype=np.int64)
    np.add.at(X, labels[infected] if infected else [], cut[infected] if infected else [])

    G = grid.size
    Sout = np.zeros((G, K), np.int64)
    Iout = np.zeros((G, K), np.int64)
    Rout = np.zeros((G, K), np.int64)
    Xout = np.zeros((G, K), np.int64)

    t, gi, events = 0.0, 0, 0
    eta, gamma = params.eta, params.gamma

    def flush(upto):
        nonlocal gi
        while gi < G and grid[gi] < upto:
            Sout[gi], Iout[gi], Rout[gi], Xout[gi] = S, I, R, X
            gi += 1

    while infected:
        cut_tot = int(X.sum())
        Gamma = gamma * len(infected) + eta * cut_tot
        t_new = t + rng.exponential(1.0 / Gamma)
        flush(t_new)
        if t_new > horizon:
            t = horizon
            break
        t = t_new
        if events >= event_cap:
            raise EventCapExceeded(f"event cap {event_cap} hit at t={t:.4g}")
        events += 1
        r = rng.random() * Gamma
        if r < gamma * len(infected):
            j = int(rng.integers(len(infected)))
            v = infected[j]
            infected[j] = infected[-1]
            infected.pop()
            status[v] = 2
            k = labels[v]
            I[k] -= 1
            R[k] += 1
            X[k] -= cut[v]
            cut[v] = 0
        else:
            # source v proportional to cut[v], then susceptible neighbor by mult
            target = rng.random() * cut_tot
            csum = np.cumsum(cut[infected])
            v = infected[int(np.searchsorted(csum, target, side="right"))]
            idx, mult = nbr_idx[v], nbr_mult[v]
            sus = status[idx] == 0
            w = mult * sus
            u = int(idx[np.searchsorted(np.cumsum(w), rng.random() * w.sum(), side="right")])
            status[u] = 1
            lu = labels[u]
            S[lu] -= 1
            I[lu] += 1
            iu, mu = nbr_idx[u], nbr_mult[u]
            inf_mask = status[iu] == 1
            iv, mv = iu[inf_mask], mu[inf_mask]
            # u no longer susceptible: drop it from its infected neighbors' cuts
            np.subtract.at(cut, iv, mv)
            np.subtract.at(X, labels[iv], mv)
            cut[u] = int(mu[status[iu] == 0].sum())
            X[lu] += cut[u]
            infected.append(u)

    flush(np.inf)
    final = EpidemicState(
        status=status, active_degree=cut, S=S, I=I, R=R, X=X, t=t
    )
    return Trajectory(
        sampling_grid=grid,
        S=Sout, I=Iout, R=Rout, X=Xout,
        events=events,
        final_state=final,
        extinct=not infected,
        max_active_degree=int(graph.degrees().max()) if graph.adjacency else 0,
        initial_S=S0,
    )


# --- exploration process ----------------------------------------------------

@njit(cache=True)
def _explore_kernel(
    seed32, status, d, labels, starts, sizes, Pcum, D,
    eta, gamma, grid, horizon, event_cap, check_every,
):
    n = status.shape[0]
    K = D.shape[0]
    G = grid.shape[0]
    np.random.seed(seed32)

    inf_list = np.empty(n, np.int64)
    pos = np.full(n, -1, np.int64)
    n_inf = 0
    Scnt = np.zeros(K, np.int64)
    Icnt = np.zeros(K, np.int64)
    Rcnt = np.zeros(K, np.int64)
    Xcnt = np.zeros(K, np.int64)
    d_cap = np.int64(1)
    for v in range(n):
        k = labels[v]
        if status[v] == 0:
            Scnt[k] += 1
        elif status[v] == 1:
            inf_list[n_inf] = v
            pos[v] = n_inf
            n_inf += 1
            Icnt[k] += 1
            Xcnt[k] += d[v]
            if d[v] > d_cap:
                d_cap = d[v]
        else:
            Rcnt[k] += 1
    max_deg = d_cap

    Sout = np.zeros((G, K), np.int64)
    Iout = np.zeros((G, K), np.int64)
    Rout = np.zeros((G, K), np.int64)
    Xout = np.zeros((G, K), np.int64)

    t = 0.0
    gi = 0
    events = np.int64(0)
    code = np.int64(0)   # 0 extinct, 1 horizon cut, -1 event cap, -2 bookkeeping

    while n_inf > 0:
        Xtot = np.int64(0)
        for k in range(K):
            Xtot += Xcnt[k]
        Gamma = gamma * n_inf + eta * Xtot
        dt = -np.log(1.0 - np.random.random()) / Gamma
        t_new = t + dt
        while gi < G and grid[gi] < t_new:
            for k in range(K):
                Sout[gi, k] = Scnt[k]
                Iout[gi, k] = Icnt[k]
                Rout[gi, k] = Rcnt[k]
                Xout[gi, k] = Xcnt[k]
            gi += 1
        if t_new > horizon:
            t = horizon
            code = 1
            break
        t = t_new
        if events >= event_cap:
            code = -1
            break
        events += 1

        # joint (vertex, type) draw; accept with rate/(gamma + eta*d_cap)
        while True:
            u = inf_list[np.random.randint(n_inf)]
            if np.random.random() * (gamma + eta * d_cap) < gamma + eta * d[u]:
                break
        ku = labels[u]
        if np.random.random() * (gamma + eta * d[u]) < gamma:
            Icnt[ku] -= 1
            Rcnt[ku] += 1
            Xcnt[ku] -= d[u]
            d[u] = 0
            status[u] = 2
            j = pos[u]
            last = inf_list[n_inf - 1]
            inf_list[j] = last
            pos[last] = j
            n_inf -= 1
            pos[u] = -1
        else:
            d[u] -= 1
            Xcnt[ku] -= 1
            r = np.random.random()
            l = 0
            while Pcum[ku, l] < r and l < K - 1:
                l += 1
            w = starts[l] + np.random.randint(sizes[l])
            if status[w] == 0:
                status[w] = 1
                Scnt[l] -= 1
                Icnt[l] += 1
                dw = np.int64(np.random.poisson(D[l]))
                d[w] = dw
                Xcnt[l] += dw
                if dw > d_cap:
                    d_cap = dw
                if dw > max_deg:
                    max_deg = dw
                inf_list[n_inf] = w
                pos[w] = n_inf
                n_inf += 1

        if check_every > 0 and events % check_every == 0:
            for k in range(K):
                chk = np.int64(0)
                for j in range(n_inf):
                    v2 = inf_list[j]
                    if labels[v2] == k:
                        chk += d[v2]
                if chk != Xcnt[k]:
                    code = -2
                    n_inf = 0
                    break
            if code == -2:
                break

    while gi < G:
        for k in range(K):
            Sout[gi, k] = Scnt[k]
            Iout[gi, k] = Icnt[k]
            Rout[gi, k] = Rcnt[k]
            Xout[gi, k] = Xcnt[k]
        gi += 1
    return Sout, Iout, Rout, Xout, Scnt, Icnt, Rcnt, Xcnt, events, max_deg, code, t


def run_exploration(
    params: ModelParams,
    init: InitialCondition,
    seed: int,
    horizon: float = np.inf,
    grid=(0.0,),
    event_cap: int = DEFAULT_EVENT_CAP,
    check_every: int = 0,
) -> Trajectory:
    """Graph-free coupled exploration process (equal in law to PSBM SIR)."""
    validate(params)
    grid = _check_grid(grid, horizon)
    K = params.K
    inf0, rec0 = init.counts(params)
    starts, labels = community_layout(params)
    sizes = params.community_sizes
    D = mean_degrees(params)
    Pcum = np.cumsum(community_transition(params), axis=1)

    n = params.n
    status = np.zeros(n, dtype=np.int8)
    d = np.zeros(n, dtype=np.int64)
    infected_vs = []
    for k in range(K):
        a = int(starts[k])
        status[a: a + int(inf0[k])] = 1
        status[a + int(inf0[k]): a + int(inf0[k] + rec0[k])] = 2
        infected_vs.extend(range(a, a + int(inf0[k])))

    deg_rng = np.random.default_rng(derive_stream(seed, 1))
    if init.active_degrees is not None:
        d[infected_vs] = np.asarray(init.active_degrees, dtype=np.int64)
    else:
        for v in infected_vs:
            d[v] = deg_rng.poisson(D[labels[v]])

    if horizon == 0:
        S0 = sizes - inf0 - rec0
        X0 = np.zeros(K, dtype=np.int64)
        np.add.at(X0, labels[infected_vs] if infected_vs else [], d[infected_vs] if infected_vs else [])
        G = grid.size
        final = EpidemicState(status=status, active_degree=d,
                              S=S0, I=inf0.copy(), R=rec0.copy(), X=X0, t=0.0)
        return Trajectory(
            sampling_grid=grid,
            S=np.tile(S0, (G, 1)), I=np.tile(inf0, (G, 1)),
            R=np.tile(rec0, (G, 1)), X=np.tile(X0, (G, 1)),
            events=0, final_state=final, extinct=bool(inf0.sum() == 0),
            max_active_degree=int(d.max(initial=0)),
            initial_S=S0.copy(),
        )

    out = _explore_kernel(
        fold32(derive_stream(seed, 2)),
        status, d,
        labels, starts.astype(np.int64), sizes.astype(np.int64),
        Pcum, D,
        float(params.eta), float(params.gamma),
        grid, float(horizon), int(event_cap), int(check_every),
    )
    Sout, Iout, Rout, Xout, Sf, If, Rf, Xf, events, max_deg, code, t_end = out
    if code == -1:
        raise EventCapExceeded(f"event cap {event_cap} hit")
    if code == -2:
        raise AssertionError("X bookkeeping check failed")
    final = EpidemicState(status=status, active_degree=d,
                          S=Sf, I=If, R=Rf, X=Xf, t=float(t_end))
    return Trajectory(
        sampling_grid=grid,
        S=Sout, I=Iout, R=Rout, X=Xout,
        events=int(events),
        final_state=final,
        extinct=(code == 0),
        max_active_degree=int(max_deg),
        initial_S=(sizes - inf0 - rec0),
    )


# --- outbreak detection and ensembles ---------------------------------------

def detect_major_outbreak(traj: Trajectory, threshold: int) -> bool:
    """True iff S(0) - S(infinity) > threshold; needs a run that finished."""
    if not traj.extinct:
        raise IncompleteTrajectory("run was cut by the horizon before extinction")
    drop = int(traj.initial_S.sum() - traj.final_state.S.sum())
    return drop > threshold


@dataclass
class EnsembleStats:
    """Grid-wise mean/std of normalized columns plus per-run final states.

    Columns are S_k/n, I_k/n and X_k/(n D_k), named S_1..S_K, I_1..I_K,
    X_1..X_K; the normalization makes them directly comparable to the
    mean-field (s, i, x) components.
    """

    grid: np.ndarray
    n_runs: int
    columns: list
    mean: np.ndarray            # (G, 3K)
    std: np.ndarray             # (G, 3K)
    final_S: np.ndarray         # (n_runs, K) counts
    final_R: np.ndarray

    def to_json(self) -> str:
        payload = {
            "grid": [float(f"{t:.17g}") for t in self.grid],
            "n_runs": self.n_runs,
            "mean": {c: self.mean[:, j].tolist() for j, c in enumerate(self.columns)},
            "std": {c: self.std[:, j].tolist() for j, c in enumerate(self.columns)},
            "final_S": self.final_S.tolist(),
            "final_R": self.final_R.tolist(),
        }
        return json.dumps(payload)

    @classmethod
    def from_json(cls, text: str) -> "EnsembleStats":
        d = json.loads(text)
        columns = list(d["mean"].keys())
        mean = np.column_stack([np.asarray(d["mean"][c], float) for c in columns])
        std = np.column_stack([np.asarray(d["std"][c], float) for c in columns])
        return cls(
            grid=np.asarray(d["grid"], float),
            n_runs=int(d["n_runs"]),
            columns=columns,
            mean=mean,
            std=std,
            final_S=np.asarray(d["final_S"], np.int64),
            final_R=np.asarray(d["final_R"], np.int64),
        )


def _kahan_add(acc, comp, value):
    y = value - comp
    t = acc + y
    comp[...] = (t - acc) - y
    acc[...] = t


def ensemble(
    params: ModelParams,
    init: InitialCondition,
    n_runs: int,
    base_seed: int,
    mode: str = "exploration",
    grid=(0.0,),
    horizon: float = np.inf,
    graph_sampler=None,
    run_callback=None,
) -> EnsembleStats:
    """Independent runs on derived seed streams, Kahan-summed statistics.

    mode 'exploration' uses run_exploration; mode 'graph' samples a fresh
    PSBM multigraph per run (or uses graph_sampler(params, seed)) and runs
    the reference Gillespie on it. run_callback(r, traj) is invoked per run.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    if mode not in ("exploration", "graph"):
        raise ValueError(f"unknown mode {mode!r}")
    validate(params)
    grid = _check_grid(grid, horizon)
    K = params.K
    n = params.n
    D = mean_degrees(params)
    norm = np.concatenate([np.full(2 * K, float(n)), n * D])
    columns = (
        [f"S_{k+1}" for k in range(K)]
        + [f"I_{k+1}" for k in range(K)]
        + [f"X_{k+1}" for k in range(K)]
    )

    G = grid.size
    acc = np.zeros((G, 3 * K))
    acc_c = np.zeros((G, 3 * K))
    acc2 = np.zeros((G, 3 * K))
    acc2_c = np.zeros((G, 3 * K))
    final_S = np.zeros((n_runs, K), np.int64)
    final_R = np.zeros((n_runs, K), np.int64)

    for r in range(n_runs):
        run_seed = derive_stream(base_seed, r)
        try:
            if mode == "exploration":
                traj = run_exploration(params, init, run_seed, horizon, grid)
            else:
                gseed = derive_stream(run_seed, 101)
                sseed = derive_stream(run_seed, 102)
                if graph_sampler is None:
                    from .graphs import sample_psbm
                    g = sample_psbm(params, gseed)
                else:
                    g = graph_sampler(params, gseed)
                traj = run_graph_sir(g, params, init, sseed, horizon, grid)
        except Exception as e:
            if hasattr(e, "add_note"):
                e.add_note(f"ensemble run index {r}")
            raise
        vals = np.hstack([traj.S, traj.I, traj.X]) / norm
        _kahan_add(acc, acc_c, vals)
        _kahan_add(acc2, acc2_c, vals * vals)
        final_S[r] = traj.final_state.S
        final_R[r] = traj.final_state.R
        if run_callback is not None:
            run_callback(r, traj)

    mean = acc / n_runs
    var = np.maximum(acc2 / n_runs - mean * mean, 0.0)
    return EnsembleStats(
        grid=grid,
        n_runs=n_runs,
        columns=columns,
        mean=mean,
        std=np.sqrt(var),
        final_S=final_S,
        final_R=final_R,
    )


# --- serialization ----------------------------------------------------------

def trajectory_to_csv(traj: Trajectory) -> str:
    """CSV with header t,S_1..S_K,I_1..I_K,R_1..R_K,X_1..X_K (raw counts)."""
    K = traj.S.shape[1]
    header = "t," + ",".join(
        f"{name}_{k+1}" for name in ("S", "I", "R", "X") for k in range(K)
    )
    lines = [header]
    for j, t in enumerate(traj.sampling_grid):
        row = [f"{t:.17g}"]
        for arr in (traj.S, traj.I, traj.R, traj.X):
            row.extend(str(int(v)) for v in arr[j])
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"
