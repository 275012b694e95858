"""Closed-form rate and bound formulas for the centered forest.

Conventions: ``log`` is the natural logarithm and ``log2`` the base-2
logarithm, exactly as the formulas are usually stated; no silent base
changes.  Bounds take the continuous ``log2 k_n`` while the simulators
realise trees at depth ``ceil(log2 k_n)`` (a factor <= 2 in k_n, noted in
run manifests).  Universal constants appearing in lower bounds are always
caller-supplied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class BoundInputs:
    """Parameters shared by the risk/variance/bias bound formulas."""

    n: int
    k_n: float
    s: int
    d: int
    sigma: float
    lipschitz: float
    sup_norm: float
    xi: float = 0.0

    def __post_init__(self):
        if self.k_n < 2:
            raise ValueError("k_n must be at least 2")
        if not 1 <= self.s <= self.d:
            raise ValueError("need 1 <= S <= d")
        if self.n < 1:
            raise ValueError("n must be positive")
        if min(self.sigma, self.lipschitz, self.sup_norm) < 0:
            raise ValueError("sigma, L and B must be non-negative")
        if not 0.0 < self.p_n <= 1.0:
            raise ValueError(f"p_n = {self.p_n} outside (0, 1]")

    @property
    def p_n(self) -> float:
        """Strong-coordinate selection probability (1 + xi) / S."""
        return (1.0 + self.xi) / self.s


def alpha_exponent(p_n: float) -> float:
    """Risk-rate exponent 2*log(1 - p_n/2) / (2*log(1 - p_n/2) - log 2)."""
    if not 0.0 < p_n <= 1.0:
        raise ValueError(f"p_n = {p_n} outside (0, 1]")
    t = 2.0 * math.log(1.0 - p_n / 2.0)
    return t / (t - math.log(2.0))


def variance_upper_bound(b: BoundInputs) -> float:
    """12 sigma^2 (k/n) * (8S)^(S-1) / ((1+xi)^(S-1) * sqrt(log2^(S-1) k))."""
    log2k = math.log2(b.k_n)
    if log2k <= 0:
        raise ValueError("k_n must exceed 1 so that log2 k_n is positive")
    lead = 12.0 * b.sigma**2 * b.k_n / b.n
    return lead * (8.0 * b.s) ** (b.s - 1) / ((1.0 + b.xi) ** (b.s - 1) * math.sqrt(log2k ** (b.s - 1)))


def bias_upper_bound(b: BoundInputs, sup_norm_squared: bool = False) -> float:
    """S L^2 k^(2 log2(1-p/2)+1) / (n+1) + S^2 L^2 k^(2 log2(1-p/2)) + B e^(-n/(2k)).

    ``sup_norm_squared`` switches the residual term to B^2 e^(-n/(2k)) for
    callers who prefer the squared-sup-norm form of the empty-leaf term.
    """
    expo = 2.0 * math.log2(1.0 - b.p_n / 2.0)
    l2 = b.lipschitz**2
    term1 = b.s * l2 * b.k_n ** (expo + 1.0) / (b.n + 1.0)
    term2 = b.s**2 * l2 * b.k_n**expo
    residual = (b.sup_norm**2 if sup_norm_squared else b.sup_norm) * math.exp(-b.n / (2.0 * b.k_n))
    return term1 + term2 + residual


def risk_upper_bound(b: BoundInputs, sup_norm_squared: bool = False) -> float:
    """Mean-squared prediction error bound: bias bound plus variance bound."""
    return bias_upper_bound(b, sup_norm_squared=sup_norm_squared) + variance_upper_bound(b)


def optimal_leaf_count(n: int, s: int, lipschitz: float, sigma: float) -> float:
    """Risk-optimal leaf parameter (S^(-S+3) (L/sigma)^2 n sqrt(log2^(S-1) n))^(1-alpha)."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if s < 1:
        raise ValueError("S must be positive")
    alpha = alpha_exponent(1.0 / s)
    base = s ** (-s + 3) * (lipschitz / sigma) ** 2 * n * math.sqrt(math.log2(n) ** (s - 1))
    return base ** (1.0 - alpha)


@dataclass(frozen=True)
class ReferenceRates:
    """Rate exponents entering the comparison table and rate-curve figure."""

    new: float
    biau: float
    minimax_d: float
    minimax_s: float
    approx_new: float


def reference_rates(s: int, d: int) -> ReferenceRates:
    """Exponent family at sparsity S, ambient dimension d."""
    if not 1 <= s <= d:
        raise ValueError("need 1 <= S <= d")
    ln2 = math.log(2.0)
    return ReferenceRates(
        new=alpha_exponent(1.0 / s),
        biau=1.0 / (s * (4.0 / 3.0) * ln2 + 1.0),
        minimax_d=2.0 / (d + 2.0),
        minimax_s=2.0 / (s + 2.0),
        approx_new=1.0 / (s * ln2 + 1.0),
    )


@dataclass(frozen=True)
class LowerBoundForms:
    """Variance and squared-bias floors, parameterised by a supplied constant."""

    variance_floor: float
    bias_floor: float


def lower_bound_forms(b: BoundInputs, beta_norm: float, constant: float) -> LowerBoundForms:
    """Shape of the matching lower bounds.

    Variance floor C^(S-1) S^(S/2) sigma^2 k/(n sqrt(log2^(S-1) k)); bias
    floor C ||beta||^2 k^(2 log2(1 - 1/(2S))).  The universal constant is
    unknown, so these are scaling templates, not certified floors.
    """
    if constant <= 0:
        raise ValueError("constant must be positive")
    log2k = math.log2(b.k_n)
    variance_floor = (
        constant ** (b.s - 1)
        * b.s ** (b.s / 2.0)
        * b.sigma**2
        * b.k_n
        / (b.n * math.sqrt(log2k ** (b.s - 1)))
    )
    bias_expo = 2.0 * math.log2(1.0 - 1.0 / (2.0 * b.s))
    bias_floor = constant * beta_norm**2 * b.k_n**bias_expo
    return LowerBoundForms(variance_floor, bias_floor)
