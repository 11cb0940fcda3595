"""Closed-form reliability, complexity and scalability models.

Binomial tails are evaluated in log space so ``Z`` in the tens of thousands
neither overflows nor underflows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, asdict
from typing import Iterable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlog1py, xlogy

from .grouping import analytic_complexity, optimal_group_sizes
from .kernels import mc_b2uh_successes

COMPLEXITY_CONSTANT = 1.89
CSV_COLUMNS = ("model", "Z", "x", "y", "P_f", "value")


class UndefinedChange(ZeroDivisionError):
    pass


def _check_pf(pf: float) -> None:
    if not 0.0 <= pf <= 1.0:
        raise ValueError(f"failure probability {pf} outside [0, 1]")


def _log_binom_pmf(n: int, i: np.ndarray, p: float) -> np.ndarray:
    i = np.asarray(i, dtype=float)
    logc = gammaln(n + 1) - gammaln(i + 1) - gammaln(n - i + 1)
    return logc + xlogy(i, p) + xlog1py(n - i, -p)


def log_binom_cdf(n: int, k: int, p: float) -> float:
    """``log P[Binomial(n, p) <= k]``."""
    if k < 0:
        return -math.inf
    if k >= n:
        return 0.0
    logs = _log_binom_pmf(n, np.arange(n + 1), p)
    lower = float(logsumexp(logs[: k + 1]))
    upper = float(logsumexp(logs[k + 1:]))
    # take whichever tail is smaller so a cdf near 1 keeps full precision
    if upper < math.log(0.5):
        return math.log1p(-math.exp(upper))
    return lower


def log_single_layer_success(Z: int, pf: float) -> float:
    if Z < 4:
        raise ValueError("a PBFT committee needs at least 4 members")
    _check_pf(pf)
    return min(0.0, log_binom_cdf(Z, Z // 3, pf))


def single_layer_success(Z: int, pf: float) -> float:
    """Probability that at most ``Z // 3`` of ``Z`` vehicles fail."""
    return math.exp(log_single_layer_success(Z, pf))


def fog_success(y: int, pf: float) -> float:
    """Per-fog success rate; the same tail as the single layer, over ``y``."""
    return single_layer_success(y, pf)


def _log_fog_terms(x: int, y: int, pf: float) -> tuple[float, float]:
    lp1 = min(0.0, log_binom_cdf(y, y // 3, pf))
    lq1 = math.log(-math.expm1(lp1)) if lp1 < 0 else -math.inf
    return lp1, lq1


def _times(k: float, logv: float) -> float:
    # k * log(v) with 0 * log(0) = 0
    return 0.0 if k == 0 else k * logv


def event_a_probability(x: int, y: int, pf: float) -> float:
    """Probability that at most ``x // 3`` fogs fail."""
    _check_pf(pf)
    lp1, lq1 = _log_fog_terms(x, y, pf)
    budget = x // 3
    terms = [
        gammaln(x + 1) - gammaln(j + 1) - gammaln(x - j + 1) + _times(j, lq1) + _times(x - j, lp1)
        for j in range(budget + 1)
    ]
    return min(1.0, float(np.exp(logsumexp(terms))))


def log_b2uh_success(x: int, y: int, pf: float) -> float:
    """Log of the two-layer success rate.

    Sums over ``j`` failed fogs and ``k`` faulty heads among the ``x - j``
    surviving fogs, keeping ``j + k <= x // 3``.
    """
    if x < 4 or y < 4:
        raise ValueError("two-layer model needs x >= 4 and y >= 4")
    _check_pf(pf)
    lp1, lq1 = _log_fog_terms(x, y, pf)
    budget = x // 3
    terms = []
    for j in range(budget + 1):
        la = gammaln(x + 1) - gammaln(j + 1) - gammaln(x - j + 1) + _times(j, lq1) + _times(x - j, lp1)
        terms.append(la + log_binom_cdf(x - j, budget - j, pf))
    return min(0.0, float(logsumexp(terms)))


def b2uh_success(x: int, y: int, pf: float) -> float:
    return math.exp(log_b2uh_success(x, y, pf))


def success_change(pA: float, pB: float) -> float:
    """Relative change ``(pA - pB) / pB``."""
    if pB == 0:
        raise UndefinedChange("reference success rate is zero")
    return (pA - pB) / pB


def _log_change(la: float, lb: float) -> float:
    # success_change from log-probabilities; stays finite where pB underflows
    if lb == -math.inf:
        raise UndefinedChange("reference success rate is zero")
    return math.expm1(la - lb)


def improvement(Z: int, pf: float) -> float:
    """``I``: optimal two-layer grouping of ``Z`` against one flat committee."""
    x, y, _ = optimal_group_sizes(Z)
    return _log_change(log_b2uh_success(x, y, pf), log_single_layer_success(Z, pf))


def min_complexity(Z: float) -> float:
    """Continuous approximation ``1.89 * Z**(4/3)`` of the optimal cost."""
    if Z <= 0:
        raise ValueError("Z must be positive")
    return COMPLEXITY_CONSTANT * Z ** (4.0 / 3.0)


@dataclass(frozen=True)
class ScalabilityResult:
    Z: int
    w: float
    z_expanded: float
    x: int
    y: int
    z_used: int


def scalability_exponent(Z: float, log: str = "e") -> float:
    """``w = 1.5 - 0.48 / log(Z)``; ``log`` is ``"e"`` (default) or ``"10"``."""
    if log == "e":
        lz = math.log(Z)
    elif log == "10":
        lz = math.log10(Z)
    else:
        raise ValueError("log must be 'e' or '10'")
    return 1.5 - 0.48 / lz


def expanded_capacity(Z: float) -> float:
    """Vehicle count whose optimal two-layer cost equals a flat ``Z``-committee."""
    return (Z * Z / COMPLEXITY_CONSTANT) ** 0.75


def suggested_pair(z_cap: float) -> tuple[int, int]:
    """Largest ``x(1+y) <= z_cap`` with ``x`` a rounding of ``y(y+2)/2``."""
    best = None
    y = 4
    while True:
        x_exact = y * (y + 2) / 2
        if math.floor(x_exact) * (1 + y) > z_cap:
            break
        for x in sorted({math.floor(x_exact), math.ceil(x_exact)}):
            z = x * (1 + y)
            if z <= z_cap and (best is None or z > best[0] * (1 + best[1])):
                best = (x, y)
        y += 1
    if best is None:
        raise ValueError(f"no two-layer grouping fits within {z_cap}")
    return best


def scalability(Z: int, log: str = "e") -> ScalabilityResult:
    if Z < 60:
        raise ValueError("scalability is defined for Z >= 60")
    cap = expanded_capacity(Z)
    x, y = suggested_pair(cap)
    return ScalabilityResult(Z, scalability_exponent(Z, log), cap, x, y, x * (1 + y))


@dataclass(frozen=True)
class ExpansionComparison:
    Z: int
    pf: float
    z_used: int
    i_prime: float   # expanded two-layer vs the original two-layer
    i_double: float  # expanded two-layer vs the original single layer


def expansion_change(Z: int, pf: float) -> ExpansionComparison:
    s = scalability(Z)
    x0, y0, _ = optimal_group_sizes(Z)
    l_exp = log_b2uh_success(s.x, s.y, pf)
    return ExpansionComparison(
        Z, pf, s.z_used,
        _log_change(l_exp, log_b2uh_success(x0, y0, pf)),
        _log_change(l_exp, log_single_layer_success(Z, pf)),
    )


def crossover(Z: int, lo: float = 0.0, hi: float = 1.0, tol: float = 1e-6) -> float | None:
    """First ``P_f`` (to ``tol``) where ``I`` goes from negative to positive.

    Scans a 0.005 grid and bisects the first bracketing cell; ``None`` when
    no such sign change exists in ``[lo, hi]``.
    """
    grid = np.arange(lo, hi + 1e-12, 0.005)
    prev = None
    for a in grid:
        try:
            v = improvement(Z, float(a))
        except UndefinedChange:
            return None
        if prev is not None and v > 0 > prev[1]:
            left, right = prev[0], float(a)
            while right - left > tol:
                mid = 0.5 * (left + right)
                if improvement(Z, mid) > 0:
                    right = mid
                else:
                    left = mid
            return right
        prev = (float(a), v)
    return None


@dataclass(frozen=True)
class MonteCarloEstimate:
    successes: int
    trials: int

    @property
    def value(self) -> float:
        return self.successes / self.trials

    def stderr(self, p: float | None = None) -> float:
        """Binomial standard error at ``p`` (the estimate itself by default)."""
        q = self.value if p is None else p
        return math.sqrt(max(q * (1 - q), 0.0) / self.trials)

    def agrees(self, p: float, k: float = 3.0) -> bool:
        """``|estimate - p| <= k`` standard errors taken at the closed form ``p``."""
        se = self.stderr(p)
        if se == 0:
            return self.value == p
        return abs(self.value - p) <= k * se


def monte_carlo_b2uh(x: int, y: int, pf: float, trials: int, seed: int) -> MonteCarloEstimate:
    _check_pf(pf)
    return MonteCarloEstimate(mc_b2uh_successes(x, y, pf, trials, seed), trials)


@dataclass(frozen=True)
class ModelRow:
    model: str
    Z: int
    x: int | str
    y: int | str
    P_f: float | str
    value: float


def _or_nan(fn, *args) -> float:
    try:
        return fn(*args)
    except UndefinedChange:
        return math.nan


def success_rows(Zs: Iterable[int], pfs: Sequence[float]) -> list[ModelRow]:
    """``P_S1``, ``P_S2`` and ``I`` per ``(Z, P_f)``, plus the expansion changes."""
    rows = []
    for Z in Zs:
        x, y, _ = optimal_group_sizes(Z)
        for pf in pfs:
            rows.append(ModelRow("P_S1", Z, "", "", pf, single_layer_success(Z, pf)))
            rows.append(ModelRow("P_S2", Z, x, y, pf, b2uh_success(x, y, pf)))
            rows.append(ModelRow("I", Z, x, y, pf, _or_nan(improvement, Z, pf)))
            if Z >= 60:
                s = scalability(Z)
                rows.append(ModelRow("I_prime", s.z_used, s.x, s.y, pf,
                                     _or_nan(lambda *a: expansion_change(*a).i_prime, Z, pf)))
                rows.append(ModelRow("I_double", s.z_used, s.x, s.y, pf,
                                     _or_nan(lambda *a: expansion_change(*a).i_double, Z, pf)))
    return rows


def complexity_rows(Zs: Iterable[int]) -> list[ModelRow]:
    rows = []
    for Z in Zs:
        x, y, c = optimal_group_sizes(Z)
        rows.append(ModelRow("C_opt", Z, x, y, "", float(c)))
        rows.append(ModelRow("C_approx", Z, "", "", "", min_complexity(Z)))
        rows.append(ModelRow("C_single", Z, "", "", "", float(Z * Z)))
    return rows


def write_csv(rows: Iterable[ModelRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


__all__ = [
    "CSV_COLUMNS", "ExpansionComparison", "ModelRow", "MonteCarloEstimate", "ScalabilityResult",
    "UndefinedChange", "analytic_complexity", "b2uh_success", "complexity_rows", "crossover",
    "event_a_probability", "expanded_capacity", "expansion_change", "fog_success", "improvement",
    "log_binom_cdf", "min_complexity", "monte_carlo_b2uh", "scalability", "scalability_exponent",
    "single_layer_success", "success_change", "success_rows", "suggested_pair", "write_csv",
]
