"""Participation feedback under a share-of-purse incentive rule.

Two classes split a total purse; the tracked class, with participation share
``r``, receives ``g(r) / (g(r) + g(1 - r))`` of it. Next period's share moves
toward that payout share::

    r' = (1 - lam) * r + lam * payout_share(g, r)

so ``lam = 1`` means participation fully follows the money.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

from .errors import Divergence, InvalidRule, InvalidSpecification, NotAFixedPoint

STABILITY_MARGIN = 1e-3


def _int_root(n: int, k: int) -> int | None:
    if n < 0:
        return None
    guess = round(n ** (1.0 / k))
    for cand in (guess - 1, guess, guess + 1):
        if cand >= 0 and cand**k == n:
            return cand
    return None


def _exact_power(base: Fraction, exponent: Fraction) -> Fraction | None:
    """``base ** exponent`` as a Fraction when it is rational, else None."""
    p, q = exponent.numerator, exponent.denominator
    num, den = _int_root(base.numerator, q), _int_root(base.denominator, q)
    if num is None or den is None:
        return None
    return Fraction(num, den) ** p


class PowerRule:
    """Incentive rule ``g(r) = r ** beta``."""

    def __init__(self, beta, name: str | None = None):
        self.beta = Fraction(beta) if isinstance(beta, (int, Fraction)) else Fraction(repr(beta))
        self.name = name or f"pow:{beta}"

    def __call__(self, r):
        r = float(r)
        # dedicated paths keep the common rules correctly rounded
        if self.beta == Fraction(1, 2):
            return math.sqrt(r)
        if self.beta == -1:
            return 1 / r
        if self.beta == 1:
            return r
        try:
            return r ** float(self.beta)
        except OverflowError:
            return math.inf

    def share(self, r: float) -> float:
        """``g(r) / (g(r) + g(1 - r))`` via the odds, safe for steep exponents."""
        r = float(r)
        try:
            odds = math.exp(float(self.beta) * math.log((1 - r) / r))
        except OverflowError:
            return 0.0
        return 1 / (1 + odds)

    def odds(self, r: Fraction) -> Fraction | None:
        """Exact ``g(1 - r) / g(r)`` for rational ``r`` when it is rational."""
        return _exact_power((1 - r) / r, self.beta)

    def __repr__(self):
        return f"PowerRule({self.beta}, name={self.name!r})"


def rule_by_name(name: str) -> PowerRule:
    """``sqrt``, ``inverse``, ``linear`` or ``pow:<beta>``."""
    named = {"sqrt": Fraction(1, 2), "inverse": Fraction(-1), "linear": Fraction(1)}
    if name in named:
        return PowerRule(named[name], name)
    if name.startswith("pow:"):
        text = name[4:]
        try:
            beta = Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise InvalidRule(f"cannot parse exponent in rule {name!r}") from None
        return PowerRule(beta, name)
    raise InvalidRule(f"unknown incentive rule {name!r}; expected sqrt, inverse, linear or pow:<beta>")


def _check_share(r):
    if not 0 < r < 1:
        raise InvalidSpecification(f"participation share must lie in (0, 1), got {r!r}")


def payout_share(g: Callable, r):
    """Fraction of the total purse that goes to the class with share ``r``."""
    _check_share(r)
    if isinstance(r, Fraction) and hasattr(g, "odds"):
        odds = g.odds(r)
        if odds is not None:
            return 1 / (1 + odds)
    gr, gc = g(r), g(1 - r)
    if hasattr(g, "share") and (math.isinf(gr) or math.isinf(gc) or gr == 0 or gc == 0):
        return g.share(r)
    if not (gr > 0 and gc > 0) or math.isinf(gr) or math.isinf(gc):
        raise InvalidRule(f"incentive rule must be positive and finite: g({r})={gr}, g({1 - r})={gc}")
    return gr / (gr + gc)


def per_capita_payout(g: Callable, r):
    """Purse share per unit of participation; not used by the update law."""
    return payout_share(g, r) / r


@dataclass(frozen=True)
class FeedbackSystem:
    g: Callable
    lam: float = 1.0
    r0: float = 0.1

    def __post_init__(self):
        if not 0 <= self.lam <= 1:
            raise InvalidSpecification(f"response strength must lie in [0, 1], got {self.lam}")
        _check_share(self.r0)


def step(system: FeedbackSystem, r):
    share = payout_share(system.g, r)
    if system.lam == 1:
        return share
    return (1 - system.lam) * r + system.lam * share


@dataclass(frozen=True)
class Trajectory:
    shares: tuple
    converged: bool
    limit: float | None = None
    cycle: tuple | None = None

    @property
    def steps(self) -> int:
        return len(self.shares) - 1


def iterate(system: FeedbackSystem, max_steps: int = 1000, tolerance: float = 1e-12) -> Trajectory:
    """Iterate until ``|r' - r| < tolerance``, a period-2 cycle, or ``max_steps``."""
    if max_steps < 1:
        raise InvalidSpecification("max_steps must be >= 1")
    shares = [system.r0]
    r = system.r0
    for _ in range(max_steps):
        nxt = step(system, r)
        if not 0 < nxt < 1:
            raise Divergence("trajectory left (0, 1)", r)
        shares.append(nxt)
        if abs(nxt - r) < tolerance:
            return Trajectory(tuple(shares), True, nxt)
        if len(shares) >= 3 and abs(nxt - shares[-3]) < tolerance:
            return Trajectory(tuple(shares), False, cycle=tuple(sorted((r, nxt))))
        r = nxt
    return Trajectory(tuple(shares), False)


class Stability(enum.Enum):
    ATTRACTIVE = "ATTRACTIVE"
    REPULSIVE = "REPULSIVE"
    NEUTRAL = "NEUTRAL"


def map_derivative(system: FeedbackSystem, r: float, h: float = 1e-5) -> float:
    """Central finite difference of the update map at ``r``."""
    r = float(r)
    return (step(system, r + h) - step(system, r - h)) / (2 * h)


def stability_of(derivative: float, margin: float = STABILITY_MARGIN) -> Stability:
    if abs(derivative) < 1 - margin:
        return Stability.ATTRACTIVE
    if abs(derivative) > 1 + margin:
        return Stability.REPULSIVE
    return Stability.NEUTRAL


def classify_fixed_point(system: FeedbackSystem, r_star: float, h: float = 1e-5,
                         tolerance: float = 1e-9) -> Stability:
    _check_share(r_star)
    moved = step(system, r_star)
    if abs(moved - r_star) > tolerance:
        raise NotAFixedPoint(f"r={r_star} maps to {moved}, not a fixed point")
    return stability_of(map_derivative(system, r_star, h))


@dataclass(frozen=True)
class ScanRow:
    beta: Fraction
    lam: float
    derivative: float
    stability: Stability


@dataclass(frozen=True)
class StabilityScan:
    rows: tuple
    boundaries: tuple  # (beta_left, beta_right, class_left, class_right)

    def attractive_range(self) -> tuple | None:
        betas = [row.beta for row in self.rows if row.stability is Stability.ATTRACTIVE]
        return (min(betas), max(betas)) if betas else None


def exponent_stability_scan(lam: float = 1.0, betas=None, beta_range=(-2, 2), grid: int = 17,
                            h: float = 1e-5) -> StabilityScan:
    """Classify the parity fixed point for ``g(r) = r ** beta`` across exponents.

    Pass explicit ``betas`` or an evenly spaced ``grid`` over ``beta_range``.
    At ``lam = 1`` the map's slope at 1/2 equals beta.
    """
    if betas is None:
        if grid < 2:
            raise InvalidSpecification("grid needs at least 2 points")
        lo, hi = (Fraction(repr(b)) if isinstance(b, float) else Fraction(b) for b in beta_range)
        betas = [lo + (hi - lo) * i / (grid - 1) for i in range(grid)]
    rows = []
    for beta in betas:
        system = FeedbackSystem(PowerRule(beta), lam, 0.5)
        d = map_derivative(system, 0.5, h)
        rows.append(ScanRow(PowerRule(beta).beta, lam, d, stability_of(d)))
    boundaries = tuple(
        (a.beta, b.beta, a.stability, b.stability)
        for a, b in zip(rows, rows[1:]) if a.stability is not b.stability
    )
    return StabilityScan(tuple(rows), boundaries)
