"""
Convergence-bound constants for FedQS-SGD and FedQS-Avg.

Each closed form is evaluated exactly as stated by the two convergence theorems.
Nothing here raises on a pathological configuration: empty beta ranges, zero
denominators and contraction rates outside (0, 1) come back as flags.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from .errors import ContractViolation
from .models import Aggregation, BoundParams, LabeledDataset, ModelSpec, ParamVec
from .numcore import gradient

logger = logging.getLogger(__name__)

# flag names
EMPTY_RANGE = "empty_range"
RANGE_INCONSISTENT = "range_inconsistent"
ZERO_DENOMINATOR = "zero_denominator"
NEGATIVE_DENOMINATOR = "negative_denominator"
V_OUTSIDE_UNIT = "v_outside_unit_interval"


@dataclass(frozen=True)
class BetaRange:
    lo: float
    hi: float
    empty: bool
    consistent: bool   # V at the midpoint lies in (0, 1)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class BoundTerms:
    V: float
    U: float
    W: float
    lead: float
    flags: Tuple[str, ...] = ()

    @property
    def floor(self) -> float:
        return self.U + self.W

    @property
    def contracts(self) -> bool:
        return 0.0 < self.V < 1.0


@dataclass(frozen=True, eq=False)
class BoundCurve:
    values: np.ndarray
    floor: float
    converges: bool
    flags: Tuple[str, ...] = field(default=())


def momentum_factor_R(theta: float, E: int) -> float:
    """R = (E t - E t^2 - t^2 + t^(E+2)) / (1 - t)^2 for momentum cap t."""
    if not 0 <= theta < 1:
        raise ContractViolation(f"theta must lie in [0, 1), got {theta}")
    if E < 1:
        raise ContractViolation(f"E must be >= 1, got {E}")
    numerator = E * theta - E * theta ** 2 - theta ** 2 + theta ** (E + 2)
    return max(numerator / (1.0 - theta) ** 2, 0.0)


def V_sgd(beta: float, K: int, R: float) -> float:
    b2 = beta * beta
    return 3.0 - 2.0 * b2 * K * R / (b2 + 1.0)


def V_avg(beta: float, R: float, E: int) -> float:
    b2 = beta * beta
    return 3.0 - 2.0 * b2 * (R + E * E) / (b2 + 1.0)


def beta_range(K: int, R: float, E: int, theorem: Aggregation) -> BetaRange:
    """
    The admissible max-learning-rate interval printed by each theorem, plus a
    direct check of V at its midpoint.
    """
    if theorem == Aggregation.SGD:
        lo_den, hi_den = R * K - 1.0, 2.0 * R * K - 3.0
    else:
        lo_den, hi_den = K * R + E * E - 1.0, 2.0 * R * K + 2.0 * E * E - 3.0
    if lo_den <= 0 or hi_den <= 0:
        return BetaRange(math.nan, math.nan, empty=True, consistent=False)
    lo, hi = math.sqrt(1.0 / lo_den), math.sqrt(3.0 / hi_den)
    if lo >= hi:
        return BetaRange(lo, hi, empty=True, consistent=False)
    mid = 0.5 * (lo + hi)
    v = V_sgd(mid, K, R) if theorem == Aggregation.SGD else V_avg(mid, R, E)
    return BetaRange(lo, hi, empty=False, consistent=0.0 < v < 1.0)


def _ratio(numerator: float, denominator: float, flags: List[str]) -> float:
    if denominator == 0.0:
        flags.append(ZERO_DENOMINATOR)
        return math.inf if numerator >= 0 else -math.inf
    if denominator < 0.0 and NEGATIVE_DENOMINATOR not in flags:
        flags.append(NEGATIVE_DENOMINATOR)
    return numerator / denominator


def V_U_W_sgd(bp: BoundParams) -> BoundTerms:
    """Contraction rate, heterogeneity floor and gradient-variation bound for FedQS-SGD."""
    R = momentum_factor_R(bp.theta, bp.E)
    b2, L, E2 = bp.beta ** 2, bp.L, bp.E ** 2
    flags: List[str] = []
    den = 2.0 * b2 * R - 2.0 * b2 - 2.0
    V = V_sgd(bp.beta, bp.K, R)
    U = (2.0 * L * b2 + _ratio(6.0 * b2 * (b2 * L + L), den, flags)) * E2 * bp.delta ** 2
    W = (
        4.0 * L * E2 + 4.0 * L * R * bp.Q_t
        + _ratio((b2 * L + L) * (2.0 * R * bp.Q_t + 3.0 * E2), den, flags)
    ) * b2 * bp.G_c ** 2
    if not 0.0 < V < 1.0:
        flags.append(V_OUTSIDE_UNIT)
    return BoundTerms(V=V, U=U, W=W, lead=L, flags=tuple(flags))


def V_U_W_avg(bp: BoundParams) -> BoundTerms:
    """Same constants for FedQS-Avg; the lead coefficient is 3 L p K^2 + L."""
    R = momentum_factor_R(bp.theta, bp.E)
    b2, L, E2, p, K = bp.beta ** 2, bp.L, bp.E ** 2, bp.p, bp.K
    flags: List[str] = []
    den = 2.0 * b2 * (R + E2) - 2.0 * b2 - 2.0
    V = V_avg(bp.beta, R, bp.E)
    lead = 3.0 * L * p * K ** 2 + L
    U = (
        3.0 * p ** 2 * K * L
        + _ratio(8.0 * (3.0 * p * K ** 2 + 1.0) * (b2 * L + L), den, flags)
    ) * b2 * E2 * bp.delta ** 2
    W = (
        p ** 2 * K * L * (2.0 * E2 + 3.0 * R * bp.Q_t)
        + _ratio((3.0 * p ** 2 * K + 1.0) * (b2 * L + L) * (E2 + R * bp.Q_t), den, flags)
    ) * b2 * bp.G_c ** 2
    if not 0.0 < V < 1.0:
        flags.append(V_OUTSIDE_UNIT)
    return BoundTerms(V=V, U=U, W=W, lead=lead, flags=tuple(flags))


def bound_terms(bp: BoundParams, strategy: Aggregation) -> BoundTerms:
    return V_U_W_sgd(bp) if strategy == Aggregation.SGD else V_U_W_avg(bp)


def bound_curve(bp: BoundParams, t_max: int, strategy: Aggregation) -> BoundCurve:
    """b(t) = lead * V^t * init_gap + U + W for t = 0..t_max."""
    if t_max < 0:
        raise ContractViolation(f"t_max must be nonnegative, got {t_max}")
    terms = bound_terms(bp, strategy)
    t = np.arange(t_max + 1, dtype=np.float64)
    values = terms.lead * bp.init_gap * np.power(terms.V, t) + terms.floor
    return BoundCurve(values=values, floor=terms.floor, converges=terms.contracts, flags=terms.flags)


def bounds_table(
    thetas: Iterable[float],
    epochs: Iterable[int],
    Ks: Iterable[int],
    base: BoundParams,
    strategies: Sequence[Aggregation] = (Aggregation.SGD, Aggregation.AVG),
    betas: Sequence[float] = (),
    t_max: int = 100,
) -> List[Dict[str, object]]:
    """
    One row per (strategy, theta, E, K, beta). When betas is empty each row uses
    the midpoint of its theorem's printed range. Rows also carry the bound at
    t = 0 and t = t_max.
    """
    rows = []
    for strategy in strategies:
        for theta in thetas:
            for E in epochs:
                for K in Ks:
                    R = momentum_factor_R(theta, E)
                    rng = beta_range(K, R, E, strategy)
                    candidates = list(betas) or ([rng.midpoint] if not rng.empty else [])
                    range_flags = [EMPTY_RANGE] if rng.empty else ([] if rng.consistent else [RANGE_INCONSISTENT])
                    if not candidates:
                        rows.append(_row(strategy, theta, E, K, R, rng, None, None, None, range_flags))
                        continue
                    for beta in candidates:
                        bp = dataclasses.replace(base, theta=theta, E=E, K=K, beta=beta)
                        terms = bound_terms(bp, strategy)
                        curve = bound_curve(bp, t_max, strategy)
                        rows.append(_row(
                            strategy, theta, E, K, R, rng, beta, terms, curve, range_flags + list(terms.flags),
                        ))
    logger.debug("bounds table: %d rows", len(rows))
    return rows


def _row(strategy, theta, E, K, R, rng, beta, terms, curve, flags) -> Dict[str, object]:
    return {
        "strategy": strategy.value,
        "theta": theta,
        "E": E,
        "K": K,
        "R": R,
        "beta_lo": rng.lo,
        "beta_hi": rng.hi,
        "beta": beta,
        "V": terms.V if terms else None,
        "U": terms.U if terms else None,
        "W_bound": terms.W if terms else None,
        "bound_start": float(curve.values[0]) if curve else None,
        "bound_end": float(curve.values[-1]) if curve else None,
        "converges": curve.converges if curve else None,
        "flags": "|".join(flags),
    }


def estimate_heterogeneity(
    spec: ModelSpec,
    params: ParamVec,
    client_sets: Sequence[LabeledDataset],
    full: LabeledDataset,
) -> float:
    """Empirical delta: max over clients of ||grad F(w) - grad F_i(w)|| at a probe point."""
    if not client_sets:
        raise ContractViolation("no client datasets to probe")
    g_full = gradient(spec, params, full)
    return max(float(np.linalg.norm(g_full - gradient(spec, params, part))) for part in client_sets)
