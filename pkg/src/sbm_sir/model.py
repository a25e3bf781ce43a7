"""Model parameters for SIR on a stochastic block model, plus the
closed-form derived quantities every other module consumes.

Conventions: the affinity matrix W is the *unscaled* one (edge probability
between communities k and l is W[k,l]/n); community sizes are fixed
integers, so rho_k = n_k/n is exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AsymmetricWError,
    NonPositiveRateError,
    NTooSmallError,
    ZeroRowError,
)

SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Full parameterization of the SBM + SIR model.

    K: number of communities.
    W: K x K symmetric non-negative affinity matrix (unscaled).
    community_sizes: n_k, positive integers.
    eta: infection rate per active edge.
    gamma: recovery rate per infected vertex.
    """

    K: int
    W: np.ndarray
    community_sizes: np.ndarray
    eta: float
    gamma: float

    def __post_init__(self):
        W = np.asarray(self.W, dtype=float).reshape(self.K, self.K)
        sizes = np.asarray(self.community_sizes, dtype=np.int64).reshape(self.K)
        W.setflags(write=False)
        sizes.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "community_sizes", sizes)

    @property
    def n(self) -> int:
        return int(self.community_sizes.sum())

    @property
    def rho(self) -> np.ndarray:
        return self.community_sizes / self.n

    def to_json(self) -> str:
        return json.dumps(
            {
                "K": self.K,
                "W": self.W.tolist(),
                "sizes": self.community_sizes.tolist(),
                "eta": self.eta,
                "gamma": self.gamma,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        d = json.loads(text)
        return cls(
            K=d["K"],
            W=np.array(d["W"], dtype=float),
            community_sizes=np.array(d["sizes"], dtype=np.int64),
            eta=float(d["eta"]),
            gamma=float(d["gamma"]),
        )


def validate(params: ModelParams) -> None:
    """Raise a ModelValidationError subclass unless all invariants hold."""
    W = params.W
    if not np.all(np.abs(W - W.T) <= SYMMETRY_TOL):
        raise AsymmetricWError()
    if np.any(W < 0):
        raise NonPositiveRateError("W", float(W.min()))
    for k in range(params.K):
        if not np.any(W[k] > 0):
            raise ZeroRowError(k)
    if np.any(params.community_sizes <= 0):
        raise NonPositiveRateError("community_sizes", int(params.community_sizes.min()))
    wmax = float(W.max())
    if params.n <= wmax:
        raise NTooSmallError(params.n, wmax)
    if params.eta <= 0:
        raise NonPositiveRateError("eta", params.eta)
    if params.gamma <= 0:
        raise NonPositiveRateError("gamma", params.gamma)


def mean_degrees(params: ModelParams) -> np.ndarray:
    """D_k = sum_l W[k,l] * n_l / n."""
    return params.W @ params.rho


def community_transition(params: ModelParams) -> np.ndarray:
    """Row-stochastic P with P[k,l] = W[k,l] n_l / (n D_k)."""
    D = mean_degrees(params)
    return params.W * params.rho[None, :] / D[:, None]


def coupling_affinity(params: ModelParams) -> np.ndarray:
    """W'[k,l] = W[k,l] / (1 - W[k,l]/n); PSBM(W') conditioned simple is SBM(W)."""
    n = params.n
    if n <= params.W.max():
        raise NTooSmallError(n, float(params.W.max()))
    return params.W / (1.0 - params.W / n)


@dataclass(frozen=True)
class DerivedQuantities:
    """Read-only cache of the quantities derived from ModelParams."""

    D: np.ndarray
    P: np.ndarray
    Wprime: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        for name in ("D", "P", "Wprime", "rho"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def derive(params: ModelParams) -> DerivedQuantities:
    """Validate and compute all derived quantities eagerly."""
    validate(params)
    return DerivedQuantities(
        D=mean_degrees(params),
        P=community_transition(params),
        Wprime=coupling_affinity(params),
        rho=params.rho,
    )
