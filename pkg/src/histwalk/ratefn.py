"""Large-deviation rate functions via the Legendre-Fenchel transform.

For an increment law with cumulant generating function K, the rate function is
I(r) = sup_t [t r - K(t)]. Empirical means then satisfy Cramer's theorem:
(1/n) log P(S_n/n >= r) -> -I(r) for r above the mean, and symmetrically
below. ``verify_cramer_slope`` measures that decay directly by Monte Carlo
and fits the exponent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import (
    Gaussian,
    IncrementDistribution,
    cgf,
    cgf_derivatives,
    mean,
    sample_mean_sums,
    support_bounds,
    tail_prob,
)
from .errors import InvalidInputError, NonConvergenceError
from .fitting import SlopeFit, fit_log_decay

__all__ = ["RateFunction", "verify_cramer_slope"]

# residual tolerance scale for the stationarity condition K'(t) = r
_TOL_SCALE = 1e-10


@dataclass(frozen=True)
class RateFunction:
    """Legendre-Fenchel transform of one increment law's CGF.

    Gaussian laws use the exact closed form (r - mu)^2 / (2 sigma2). Discrete
    laws solve the stationarity condition K'(t*) = r with a bracketed Newton
    iteration (bisection fallback), to residual 1e-10 * max(1, |r|) within
    ``max_iter`` steps. Values at the support endpoints are the exact
    -log(atom weight); outside the support the transform is +inf.
    """

    dist: IncrementDistribution
    max_iter: int = 200

    def domain_endpoints(self) -> tuple[float, float]:
        return support_bounds(self.dist)

    def evaluate(self, r: float) -> float:
        return self.solve(r)[0]

    def solve(self, r: float) -> tuple[float, float]:
        """Return (I(r), t*): the value and the maximising tilt.

        The tilt is +-inf at a support endpoint and nan outside the support.
        """
        r = float(r)
        if not math.isfinite(r):
            raise InvalidInputError(f"r must be finite, got {r}")
        d = self.dist
        if isinstance(d, Gaussian):
            tilt = (r - d.mu) / d.sigma2
            return (0.5 * (r - d.mu) ** 2 / d.sigma2, tilt)
        lo, hi = support_bounds(d)
        if r < lo or r > hi:
            return (math.inf, math.nan)
        if r == lo and r == hi:  # point mass
            return (0.0, 0.0)
        if r == hi:
            return (-math.log(_atom_weight_at(d, hi)), math.inf)
        if r == lo:
            return (-math.log(_atom_weight_at(d, lo)), -math.inf)
        tilt = self._newton(r)
        return (tilt * r - cgf(d, tilt), tilt)

    def _newton(self, r: float) -> float:
        d = self.dist
        tol = _TOL_SCALE * max(1.0, abs(r))
        budget = self.max_iter
        lam = 0.0
        d1, _ = cgf_derivatives(d, lam)
        if abs(d1 - r) <= tol:
            return lam
        # expand a bracket [blo, bhi] with K'(blo) < r < K'(bhi);
        # K' approaches the support edge exponentially, so doubling is enough
        if d1 < r:
            blo, bhi = lam, 1.0
            while cgf_derivatives(d, bhi)[0] < r:
                blo, bhi = bhi, bhi * 2.0
                budget -= 1
                if budget <= 0:
                    raise NonConvergenceError(f"bracket expansion exhausted at r={r}")
        else:
            blo, bhi = -1.0, lam
            while cgf_derivatives(d, blo)[0] > r:
                blo, bhi = blo * 2.0, blo
                budget -= 1
                if budget <= 0:
                    raise NonConvergenceError(f"bracket expansion exhausted at r={r}")
        lam = 0.5 * (blo + bhi)
        for _ in range(budget):
            d1, d2 = cgf_derivatives(d, lam)
            if abs(d1 - r) <= tol:
                return lam
            if d1 < r:
                blo = lam
            else:
                bhi = lam
            step = (d1 - r) / d2 if d2 > 0.0 else math.inf
            cand = lam - step
            lam = cand if blo < cand < bhi else 0.5 * (blo + bhi)
        raise NonConvergenceError(
            f"Newton solve for K'(t)={r} did not reach |residual|<={tol} in {self.max_iter} iterations"
        )


def _atom_weight_at(d, x: float) -> float:
    return tail_prob(d, x, "ge") - tail_prob(d, math.nextafter(x, math.inf), "ge")


def verify_cramer_slope(
    d: IncrementDistribution,
    r: float,
    side: str,
    n_grid,
    rng,
    samples_per_n: int,
) -> SlopeFit:
    """Fit the Monte Carlo decay exponent of P(S_n/n >= r) (or <= r) over n_grid.

    Each grid point gets an independent child stream of ``rng`` and
    ``samples_per_n`` draws of S_n from its exact law; aggregation is in grid
    order, so results do not depend on execution schedule. The fitted slope is
    comparable to RateFunction(d).evaluate(r), returned as ``target``.

    Grid points whose estimate is zero are dropped; fewer than 3 surviving
    points raises DegenerateEstimateError.
    """
    if side not in ("ge", "le"):
        raise InvalidInputError(f"side must be 'ge' or 'le', got {side!r}")
    n_grid = tuple(int(n) for n in n_grid)
    if len(n_grid) < 3 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InvalidInputError(f"n_grid must be >= 3 strictly increasing values, got {n_grid}")
    if samples_per_n < 1:
        raise InvalidInputError("samples_per_n must be positive")
    mu = mean(d)
    slo, shi = support_bounds(d)
    if side == "ge" and not (mu < r < shi):
        raise InvalidInputError(f"for side='ge', r must lie strictly between the mean {mu} and the upper support edge {shi}")
    if side == "le" and not (slo < r < mu):
        raise InvalidInputError(f"for side='le', r must lie strictly between the lower support edge {slo} and the mean {mu}")

    streams = rng.spawn(len(n_grid))
    probs, ses = [], []
    for n, stream in zip(n_grid, streams):
        sums = sample_mean_sums(d, n, samples_per_n, stream)
        hits = int(np.count_nonzero(sums >= n * r if side == "ge" else sums <= n * r))
        p_hat = hits / samples_per_n
        probs.append(p_hat)
        ses.append(math.sqrt(p_hat * (1.0 - p_hat) / samples_per_n))
    target = RateFunction(d).evaluate(r)
    return fit_log_decay(n_grid, probs, ses, target=target)
