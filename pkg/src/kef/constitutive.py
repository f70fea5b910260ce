"""Viscosity and diffusion laws, induced potentials, and admissibility checks.

A viscosity law mu(rho) on a density band [r, R] induces a potential phi with
phi'(s) = mu'(s)/s; the checks here decide whether a law (or a pair of laws)
admits the sign-definite dissipation structure the solver relies on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize_scalar

GRID_POINTS = 10_000


class DegeneratePointError(ValueError):
    """Raised when a closed-form interval formula divides by zero."""


class LawValidationError(ValueError):
    pass


class ViscosityLaw:
    """C1 law mu(s) with derivative, valid on [r, R] with r > 0."""

    def __init__(self, mu: Callable, mu_prime: Callable, r: float, R: float,
                 label: str = "custom", phi_closed: Optional[Callable] = None):
        if not 0.0 < r < R:
            raise LawValidationError(f"need 0 < r < R, got [{r}, {R}]")
        self.mu = np.vectorize(mu) if not _vectorized(mu) else mu
        self.mu_prime = np.vectorize(mu_prime) if not _vectorized(mu_prime) else mu_prime
        self.r = float(r)
        self.R = float(R)
        self.label = label
        # phi_closed(s, s0) = int_{s0}^{s} mu'(sigma)/sigma dsigma in closed form
        self._phi_closed = phi_closed

    def validate(self, positive: bool = True, increasing: bool = True, n: int = 2001) -> None:
        s = np.linspace(self.r, self.R, n)
        mu = np.asarray(self.mu(s), dtype=float)
        if positive and mu.min() <= 0.0:
            raise LawValidationError(
                f"{self.label}: mu must be positive on [r, R], min {mu.min():.3g}")
        if increasing and np.asarray(self.mu_prime(s), dtype=float).min() < 0.0:
            raise LawValidationError(f"{self.label}: mu must be nondecreasing on [r, R]")

    def __repr__(self):
        return f"ViscosityLaw({self.label}, [{self.r}, {self.R}])"


def _vectorized(fn) -> bool:
    try:
        out = fn(np.array([1.0, 2.0]))
    except Exception:
        return False
    return np.shape(out) == (2,)


class PotentialLaw:
    """phi with phi'(s) = mu'(s)/s, normalized so phi(s0) = 0."""

    def __init__(self, phi: Callable, phi_prime: Callable, s0: float):
        self.phi = phi
        self.phi_prime = phi_prime
        self.s0 = float(s0)


def power_law(alpha: float, r: float, R: float) -> ViscosityLaw:
    """mu(s) = s**alpha."""
    def phi_closed(s, s0):
        s = np.asarray(s, dtype=float)
        if alpha == 1.0:
            return np.log(s / s0)
        if alpha == 0.0:
            return np.zeros_like(s)
        return alpha / (alpha - 1.0) * (s ** (alpha - 1.0) - s0 ** (alpha - 1.0))
    return ViscosityLaw(lambda s: np.asarray(s, float) ** alpha,
                        lambda s: alpha * np.asarray(s, float) ** (alpha - 1.0),
                        r, R, label=f"power({alpha})", phi_closed=phi_closed)


def linear_law(a: float, b: float, r: float, R: float) -> ViscosityLaw:
    """mu(s) = a + b s."""
    def phi_closed(s, s0):
        return b * np.log(np.asarray(s, float) / s0)
    return ViscosityLaw(lambda s: a + b * np.asarray(s, float),
                        lambda s: np.full_like(np.asarray(s, float), b),
                        r, R, label=f"linear({a},{b})", phi_closed=phi_closed)


def log_law(r: float, R: float, scale: float = 1.0, offset: float = 0.0) -> ViscosityLaw:
    """mu(s) = offset + scale * log s (may be nonpositive; used as a companion law)."""
    def phi_closed(s, s0):
        return scale * (1.0 / s0 - 1.0 / np.asarray(s, float))
    return ViscosityLaw(lambda s: offset + scale * np.log(np.asarray(s, float)),
                        lambda s: scale / np.asarray(s, float),
                        r, R, label=f"log({scale},{offset})", phi_closed=phi_closed)


def table_law(s_nodes, mu_nodes, r: float, R: float) -> ViscosityLaw:
    """Tabulated law with monotone cubic (PCHIP) interpolation."""
    s_nodes = np.asarray(s_nodes, dtype=float)
    mu_nodes = np.asarray(mu_nodes, dtype=float)
    interp = PchipInterpolator(s_nodes, mu_nodes, extrapolate=True)
    dinterp = interp.derivative()
    return ViscosityLaw(interp, dinterp, r, R, label="table")


def bump_law(r: float, R: float, base: float = 1.0, contrast: float = 10.0,
             center: float = 1.5, sigma: float = 0.05) -> ViscosityLaw:
    """Law whose derivative carries a Gaussian diffusivity bump.

    mu'(s) = base (1 + (contrast - 1) exp(-(s - center)^2 / (2 sigma^2))),
    so density diffusion is strongly enhanced in a narrow band around the
    reference density; useful for endpoint-limit studies where the
    dissipation observable must collapse with the mixing parameter.
    """
    from scipy.special import erf

    amp = base * (contrast - 1.0)
    scale = sigma * np.sqrt(np.pi / 2.0)

    def mu_prime(s):
        s = np.asarray(s, dtype=float)
        return base * (1.0 + (contrast - 1.0)
                       * np.exp(-((s - center) ** 2) / (2.0 * sigma ** 2)))

    def mu(s):
        s = np.asarray(s, dtype=float)
        core = erf((s - center) / (np.sqrt(2.0) * sigma))
        core0 = erf((r - center) / (np.sqrt(2.0) * sigma))
        return base * r + base * (s - r) + amp * scale * (core - core0)

    return ViscosityLaw(mu, mu_prime, r, R,
                        label=f"bump({base},{contrast},{center},{sigma})")


def scaled_law(base: ViscosityLaw, factor: float, label: Optional[str] = None) -> ViscosityLaw:
    closed = None
    if base._phi_closed is not None:
        closed = lambda s, s0: factor * base._phi_closed(s, s0)  # noqa: E731
    return ViscosityLaw(lambda s: factor * base.mu(s),
                        lambda s: factor * base.mu_prime(s),
                        base.r, base.R,
                        label=label or f"{factor}*{base.label}", phi_closed=closed)


def phi_from_mu(law: ViscosityLaw, s0: float) -> PotentialLaw:
    """Potential phi(s) = int_{s0}^{s} mu'(sigma)/sigma dsigma.

    Uses the law's closed-form antiderivative when available; otherwise
    adaptive quadrature on a dense node set with monotone interpolation in
    between (table laws).
    """
    if not law.r <= s0 <= law.R:
        raise ValueError(f"s0={s0} outside the law's validity interval [{law.r}, {law.R}]")
    phi_prime = lambda s: law.mu_prime(s) / np.asarray(s, dtype=float)  # noqa: E731
    if law._phi_closed is not None:
        closed = law._phi_closed
        return PotentialLaw(lambda s: closed(s, s0), phi_prime, s0)

    # pad the band a little so the solver may evaluate slightly outside [r, R]
    pad = 0.05 * (law.R - law.r)
    lo = max(1e-8, law.r - pad)
    hi = law.R + pad
    nodes = np.linspace(lo, hi, 4097)
    integrand = lambda s: law.mu_prime(s) / s  # noqa: E731
    vals = np.empty_like(nodes)
    vals[0] = 0.0
    for i in range(1, nodes.size):
        seg, _ = quad(integrand, nodes[i - 1], nodes[i], limit=200)
        vals[i] = vals[i - 1] + seg
    offset, _ = quad(integrand, lo, s0, limit=200)
    interp = PchipInterpolator(nodes, vals - offset, extrapolate=True)
    return PotentialLaw(interp, phi_prime, s0)


@dataclass
class ConditionReport:
    satisfied: bool
    infimum: float
    argmin: float
    xi_interval: Optional[Tuple[float, float]] = None
    witness: Optional[float] = None
    details: dict = field(default_factory=dict)


def _minimize_on_band(fn: Callable, r: float, R: float) -> Tuple[float, float]:
    """Dense sampling plus bounded golden-section refinement around the best cell."""
    s = np.linspace(r, R, GRID_POINTS)
    vals = np.asarray(fn(s), dtype=float)
    i = int(np.argmin(vals))
    lo = s[max(i - 1, 0)]
    hi = s[min(i + 1, s.size - 1)]
    res = minimize_scalar(lambda x: float(fn(x)), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    if res.fun < vals[i]:
        return float(res.fun), float(res.x)
    return float(vals[i]), float(s[i])


def _maximize_on_band(fn: Callable, r: float, R: float) -> Tuple[float, float]:
    val, arg = _minimize_on_band(lambda s: -np.asarray(fn(s), dtype=float), r, R)
    return -val, arg


def check_important(law: ViscosityLaw, d: int) -> ConditionReport:
    """Admissibility of a single law: inf over [r, R] of ((1-d)/d) mu + mu' rho > 0."""
    coeff = (1.0 - d) / d

    def J(s):
        s = np.asarray(s, dtype=float)
        return coeff * law.mu(s) + law.mu_prime(s) * s

    inf, arg = _minimize_on_band(J, law.r, law.R)
    return ConditionReport(satisfied=inf > 0.0, infimum=inf, argmin=arg,
                           witness=None if inf > 0.0 else arg,
                           details={"best_c1": inf})


class GeneralLawPair:
    """A viscosity law mu with a companion law mutilde (need not be positive)."""

    def __init__(self, mu: ViscosityLaw, mu_tilde: ViscosityLaw, s0: Optional[float] = None):
        if (mu.r, mu.R) != (mu_tilde.r, mu_tilde.R):
            raise LawValidationError("paired laws must share one validity interval")
        self.mu = mu
        self.mu_tilde = mu_tilde
        self.phi_tilde = phi_from_mu(mu_tilde, s0 if s0 is not None else mu.r)
        # the induced potential must be increasing
        s = np.linspace(mu.r, mu.R, 2001)
        if np.min(self.phi_tilde.phi_prime(s)) < 0.0:
            raise LawValidationError("companion potential must be increasing")

    def J1(self, s):
        s = np.asarray(s, dtype=float)
        d = self._d
        return self.mu_tilde.mu_prime(s) * s + (1.0 - d) / d * self.mu_tilde.mu(s)

    def J2(self, s):
        s = np.asarray(s, dtype=float)
        return self.mu.mu(s) - self.mu_tilde.mu(s)

    _d = 3  # default dimension for J1; check_cgen sets it explicitly


def check_cgen(pair: GeneralLawPair, d: int,
               xi_max: float = 1e3, n_xi: int = 400) -> ConditionReport:
    """Pair admissibility: positive c <= min J2, c' <= min J1, and existence of
    xi > 0 with max (J2 - xi mutilde)^2 / (2 J2) <= xi min J1.

    Scans xi over a log grid in (0, xi_max] and refines the admissible interval
    endpoints by bisection.
    """
    pair._d = d
    r, R = pair.mu.r, pair.mu.R
    min_j2, arg_j2 = _minimize_on_band(pair.J2, r, R)
    if min_j2 <= 0.0:
        return ConditionReport(False, min_j2, arg_j2, witness=arg_j2,
                               details={"reason": "J2 not positive"})
    min_j1, arg_j1 = _minimize_on_band(pair.J1, r, R)
    if min_j1 <= 0.0:
        return ConditionReport(False, min_j1, arg_j1, witness=arg_j1,
                               details={"reason": "J1 not positive"})

    def excess(xi: float) -> float:
        def q(s):
            s = np.asarray(s, dtype=float)
            j2 = pair.J2(s)
            return (j2 - xi * pair.mu_tilde.mu(s)) ** 2 / (2.0 * j2)
        mx, _ = _maximize_on_band(q, r, R)
        return mx - xi * min_j1

    xis = np.logspace(-6, np.log10(xi_max), n_xi)
    vals = np.array([excess(x) for x in xis])
    ok = vals <= 0.0
    if not ok.any():
        return ConditionReport(False, min_j1, arg_j1,
                               details={"reason": "no admissible xi",
                                        "min_excess": float(vals.min())})

    def bisect(lo, hi, want_ok_high):
        # lo fails, hi passes (or the reverse); return the crossing
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if (excess(mid) <= 0.0) == want_ok_high:
                hi = mid
            else:
                lo = mid
        return 0.5 * (lo + hi)

    first = int(np.argmax(ok))
    last = len(ok) - 1 - int(np.argmax(ok[::-1]))
    xi_lo = xis[first] if first == 0 else bisect(xis[first - 1], xis[first], True)
    xi_hi = xis[last] if last == len(ok) - 1 else bisect(xis[last + 1], xis[last], True)
    return ConditionReport(True, min_j1, arg_j1, xi_interval=(float(xi_lo), float(xi_hi)),
                           details={"min_J1": min_j1, "min_J2": min_j2,
                                    "c": min_j2, "c_prime": min_j1})


def xi_interval(s: float, c1: float, pair: GeneralLawPair) -> Tuple[float, float, float]:
    """Closed-form admissible interval at a single density s.

    Returns (xi_minus, xi_plus, xi0) where the quadratic admissibility
    condition holds with equality at xi_minus and xi_plus, and
    xi0 = J2(s) (mutilde(s) + c1) is an interior witness.
    """
    if c1 <= 0.0:
        raise ValueError("c1 must be positive")
    mt = float(pair.mu_tilde.mu(s))
    if mt == 0.0:
        raise DegeneratePointError(f"companion law vanishes at s={s}")
    if mt <= -0.5 * c1:
        return (np.nan, np.nan, np.nan)  # empty interval
    j2 = float(pair.J2(s))
    root = np.sqrt(c1 * (2.0 * mt + c1))
    xi_minus = j2 * (mt + c1 - root) / mt ** 2
    xi_plus = j2 * (mt + c1 + root) / mt ** 2
    xi0 = j2 * (mt + c1)
    return (float(xi_minus), float(xi_plus), float(xi0))
