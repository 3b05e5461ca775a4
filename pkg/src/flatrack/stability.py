"""Stability certification for flat-predictor Newton-Raphson control.

Three checks:

* ``snrc_hurwitz_check``: is ``A - B (CS)^-1 CR`` Hurwitz (statical controller)?
* ``alpha_threshold_search``: smallest speedup factor making the stacked
  flat system + Newton flow stable, for integrator chains.
* ``roa_estimate``: Lyapunov-based ball radius ``K_S`` around the origin and
  its ceiling ``alpha * K_L``, using sampled Lipschitz constants.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import densela
from .densela import StabilityVerdict
from .errors import NonMonotoneVerdict, SamplingDegenerate
from .flatcore import (
    FlatPredictor,
    FlatSystem,
    build_predictor,
    chain_flat_system,
    closed_loop_matrix,
    combined_dnrc_matrix,
)
from .plants import PlantModel

SWEEP_POINTS = 16
BRACKET_RTOL = 1e-4
MIN_SAMPLES = 10


def snrc_hurwitz_check(fs: FlatSystem, T: float) -> StabilityVerdict:
    fp = build_predictor(fs, T)
    return densela.routh_hurwitz(densela.char_poly(closed_loop_matrix(fs, fp)))


def combined_verdict(fs: FlatSystem, fp: FlatPredictor, alpha: float) -> StabilityVerdict:
    return densela.routh_hurwitz(densela.char_poly(combined_dnrc_matrix(fs, fp, alpha)))


@dataclass
class AlphaThreshold:
    """Result of a speedup-factor threshold search.

    ``alpha_p`` is None when no stabilizing alpha exists up to
    ``search_ceiling``, and 0.0 when every probed alpha (down to
    ``search_floor``) is already stable.
    """

    order: int | None
    T: float
    alpha_p: float | None
    search_ceiling: float
    search_floor: float
    bracket: tuple[float, float] | None = None
    sweep: tuple[tuple[float, str], ...] = ()

    @property
    def found(self) -> bool:
        return self.alpha_p is not None

    @property
    def label(self) -> str:
        return "none-found" if self.alpha_p is None else f"{self.alpha_p:.6g}"

    def verify_bracket(self, fs: FlatSystem | None = None, rel: float = 1e-3) -> bool:
        """Stable just above the threshold and not stable just below it."""
        if self.alpha_p is None:
            return False
        fs = fs or chain_flat_system(self.order)
        fp = build_predictor(fs, self.T)
        if self.alpha_p == 0.0:
            return combined_verdict(fs, fp, self.search_floor) is StabilityVerdict.STABLE
        above = combined_verdict(fs, fp, self.alpha_p * (1 + rel))
        below = combined_verdict(fs, fp, self.alpha_p * (1 - rel))
        return above is StabilityVerdict.STABLE and below is not StabilityVerdict.STABLE


def alpha_threshold_for(fs: FlatSystem, T: float, alpha_max: float = 1e6,
                        order: int | None = None) -> AlphaThreshold:
    """Locate the stability transition in alpha for an arbitrary flat system.

    A coarse log sweep over ``[alpha_max * 1e-12, alpha_max]`` must show a
    single unstable -> stable transition; bisection in log-space then narrows
    the bracket to ``1e-4`` relative width.
    """
    fp = build_predictor(fs, T)
    floor = alpha_max * 1e-12
    grid = np.logspace(np.log10(floor), np.log10(alpha_max), SWEEP_POINTS)
    stable = [combined_verdict(fs, fp, a) is StabilityVerdict.STABLE for a in grid]
    sweep = tuple((float(a), "stable" if s else "not-stable") for a, s in zip(grid, stable))
    result = AlphaThreshold(order, float(T), None, float(alpha_max), float(floor), sweep=sweep)

    if not any(stable):
        return result
    first = stable.index(True)
    if not all(stable[first:]):
        raise NonMonotoneVerdict(
            "stability verdict is not monotone in alpha: "
            + ", ".join(f"{a:.3g}:{s}" for a, s in sweep))
    if first == 0:
        result.alpha_p = 0.0
        return result

    lo, hi = float(grid[first - 1]), float(grid[first])
    while (hi - lo) / hi > BRACKET_RTOL:
        mid = float(np.sqrt(lo * hi))
        if combined_verdict(fs, fp, mid) is StabilityVerdict.STABLE:
            hi = mid
        else:
            lo = mid
    result.alpha_p = 0.5 * (lo + hi)
    result.bracket = (lo, hi)
    return result


def alpha_threshold_search(p: int, T: float, alpha_max: float = 1e6) -> AlphaThreshold:
    """Threshold search for the order-``p`` integrator chain."""
    if not 1 <= p <= 6:
        raise ValueError("chain order must be in 1..6")
    return alpha_threshold_for(chain_flat_system(p), T, alpha_max, order=p)


@dataclass
class RoaEstimate:
    K_S: float
    K_L: float
    delta: float
    L1: float
    L2: float
    lambda_min_Q: float
    lambda_max_P: float
    P0: float
    alpha: float
    B_bar_norm: float
    samples: int
    seed: int
    P: np.ndarray
    Q: np.ndarray

    @property
    def ceiling_holds(self) -> bool:
        return self.K_S <= self.alpha * self.K_L + 1e-9

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("P")
        d.pop("Q")
        return d


def _jacobian_x(fn, x: np.ndarray, u: np.ndarray, h: float = 1e-6) -> np.ndarray:
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h * max(1.0, abs(x[j]))
        cols.append((fn(x + e, u) - fn(x - e, u)) / (2 * e[j]))
    return np.column_stack(cols)


def roa_estimate(plant: PlantModel, fp: FlatPredictor, alpha: float,
                 Q=None, sample_budget: int = 2000, seed: int = 0,
                 delta_fraction: float = 0.9) -> RoaEstimate:
    """Region-of-attraction radius bound for flat-predictor DNRC regulation.

    ``K_S = lambda_min(Q) / (2 L1 L2 lambda_max(P) ||B_bar||)`` and
    ``K_L = 1 / (L1 L2 ||B_bar||)`` where ``P`` solves the Lyapunov equation of
    the stacked flat closed loop, ``L1`` bounds ``||dGamma/dx|| / ||(x, u)||``
    and ``L2`` bounds ``||f(x, u)|| / ||(z, v)||``, both by uniform sampling of
    the plant's valid region. ``||B_bar||`` is the spectral norm (= 1).
    """
    fs = plant.flat
    n, m = fs.state_dim, fs.input_dim
    Abar = combined_dnrc_matrix(fs, fp, alpha)
    Q = np.eye(n + m) if Q is None else densela.as_matrix(Q, "Q")
    P = densela.lyapunov_solve(Abar, Q)
    lam_min_Q = densela.spd_extreme_eig(Q, "min")
    lam_max_P = densela.spd_extreme_eig(P, "max")

    rng = np.random.default_rng(seed)
    xs, us = plant.sample_valid(rng, sample_budget)
    L1 = L2 = 0.0
    used = 0
    for x, u in zip(xs, us):
        radius = np.linalg.norm(np.concatenate([x, u]))
        zhat = np.concatenate([fs.phi(x), fs.gamma_fwd(x, u)])
        zn = np.linalg.norm(zhat)
        if radius < 1e-9 or zn < 1e-9:
            continue
        dgdx = _jacobian_x(fs.gamma_fwd, x, u)
        L1 = max(L1, np.linalg.norm(dgdx, 2) / radius)
        L2 = max(L2, np.linalg.norm(plant.dynamics(x, u)) / zn)
        used += 1
    if used < MIN_SAMPLES:
        raise SamplingDegenerate(f"only {used} usable samples from the valid region")

    B_bar = np.vstack([np.zeros((n, m)), np.eye(m)])
    b_norm = float(np.linalg.norm(B_bar, 2))
    K_S = lam_min_Q / (2 * L1 * L2 * lam_max_P * b_norm)
    K_L = 1.0 / (L1 * L2 * b_norm)
    return RoaEstimate(
        K_S=K_S, K_L=K_L, delta=delta_fraction * K_S, L1=L1, L2=L2,
        lambda_min_Q=lam_min_Q, lambda_max_P=lam_max_P, P0=float(P[-1, -1]),
        alpha=float(alpha), B_bar_norm=b_norm, samples=used, seed=seed, P=P, Q=Q,
    )
