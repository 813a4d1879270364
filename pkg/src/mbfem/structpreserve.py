"""Bound- and mass-preserving postprocessing of predictor solutions.

A pointwise cutoff clamps the predictor into the admissible interval; an
additional global multiplier xi shifts the field before clamping so that the
mass-lumped integral matches a prescribed target. The scalar equation
F(xi) = <cutoff[u + tau xi], 1>^h - target is monotone and piecewise linear;
it is solved by a secant iteration with a bisection fallback.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleMass, NoConvergence, SecantStall

SECANT_TOL_DEFAULT = 1e-12
MAX_ITER_DEFAULT = 50


@dataclass(frozen=True)
class BoundSpec:
    """Admissible interval [lower, upper] with an optional open-interval margin.

    Effective clamping bounds are [lower + margin, upper - margin]; a nonzero
    margin keeps values strictly inside an open interval (needed by
    singular potentials).
    """

    lower: float
    upper: float
    margin: float = 0.0

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("BoundSpec needs lower < upper")
        if self.margin < 0 or 2 * self.margin >= self.upper - self.lower:
            raise ValueError("margin must satisfy 0 <= margin < (upper-lower)/2")

    @property
    def effective(self):
        return (self.lower + self.margin, self.upper - self.margin)


@dataclass
class CorrectorResult:
    values: np.ndarray
    xi: float
    secant_iterations: int
    mass_residual: float


def _values(u):
    vals = getattr(u, "values", u)
    return np.asarray(vals, dtype=np.float64)


def cutoff(field, bounds: BoundSpec) -> np.ndarray:
    """Clamp every nodal value into the effective interval of ``bounds``."""
    lo, hi = bounds.effective
    return np.clip(_values(field), lo, hi)


def mass_only_correct(predictor, target_mass, lumped_weights,
                      exclude=None) -> np.ndarray:
    """Constant shift restoring the lumped mass exactly (no bounds)."""
    u = _values(predictor).copy()
    w = np.asarray(lumped_weights, dtype=np.float64)
    free = np.ones(len(u), dtype=bool) if exclude is None else ~np.asarray(exclude)
    current = float(w[free] @ u[free])
    fixed = float(w[~free] @ u[~free])
    u[free] += (target_mass - fixed - current) / w[free].sum()
    return u


def mass_preserving_correct(predictor, target_mass, bounds: BoundSpec, tau,
                            lumped_weights, secant_tol=SECANT_TOL_DEFAULT,
                            max_iter=MAX_ITER_DEFAULT,
                            exclude=None) -> CorrectorResult:
    """Clamped constant-shift corrector matching the lumped mass target.

    Finds xi such that u = cutoff[predictor + tau*xi] satisfies
    <u, 1>^h = target_mass, excluding essentially-constrained vertices from
    both the shift and the mass sum (their values pass through untouched).
    """
    u_tilde = _values(predictor)
    w = np.asarray(lumped_weights, dtype=np.float64)
    n = len(u_tilde)
    free = np.ones(n, dtype=bool) if exclude is None else ~np.asarray(exclude)
    lo, hi = bounds.effective
    w_free = w[free]
    uf = u_tilde[free]
    fixed_mass = float(w[~free] @ u_tilde[~free])
    target_free = float(target_mass) - fixed_mass
    lo_mass, hi_mass = float(w_free.sum() * lo), float(w_free.sum() * hi)
    if not (lo_mass < target_free < hi_mass):
        raise InfeasibleMass(
            f"target mass {target_free:.6e} outside reachable range "
            f"({lo_mass:.6e}, {hi_mass:.6e})")
    tau = float(tau) if tau and tau > 0 else 1e-3
    tol = secant_tol * (1.0 + abs(target_mass))

    def F(xi):
        return float(w_free @ np.clip(uf + tau * xi, lo, hi)) - target_free

    xi0, xi1 = 0.0, 1.0 * tau
    f0 = F(xi0)
    iterations = 0
    if abs(f0) <= tol:
        xi_star, iterations = xi0, 0
    else:
        f1 = F(xi1)
        xi_star = None
        for iterations in range(1, max_iter + 1):
            if abs(f1) <= tol:
                xi_star = xi1
                break
            if f1 == f0:
                xi_star = _bisect(F, xi1, tau, tol)
                break
            xi2 = xi1 - f1 * (xi1 - xi0) / (f1 - f0)
            xi0, f0, xi1 = xi1, f1, xi2
            f1 = F(xi1)
        if xi_star is None:
            if abs(f1) <= tol:
                xi_star = xi1
            else:
                raise NoConvergence(
                    f"mass corrector did not converge in {max_iter} iterations")

    out = u_tilde.copy()
    out[free] = np.clip(uf + tau * xi_star, lo, hi)
    residual = float(w_free @ out[free]) - target_free
    return CorrectorResult(out, float(xi_star), iterations, abs(residual))


def _bisect(F, xi_hint, tau, tol, max_expand=200, max_bisect=400):
    """Bracket the monotone root geometrically, then bisect. Returns xi."""
    span = max(abs(xi_hint), 1.0 / tau, 1.0)
    lo_x, hi_x = -span, span
    for _ in range(max_expand):
        if F(lo_x) <= 0.0 <= F(hi_x):
            break
        span *= 2.0
        lo_x, hi_x = -span, span
    else:
        raise SecantStall("could not bracket the mass equation root")
    for _ in range(max_bisect):
        mid = 0.5 * (lo_x + hi_x)
        fm = F(mid)
        if abs(fm) <= tol:
            return mid
        if fm < 0.0:
            lo_x = mid
        else:
            hi_x = mid
    # piecewise-linear F can have a flat optimum exactly at the root cluster;
    # the midpoint of the final bracket is the best available answer
    mid = 0.5 * (lo_x + hi_x)
    if abs(F(mid)) <= 100 * tol:
        return mid
    raise SecantStall("bisection fallback failed to reach tolerance")
