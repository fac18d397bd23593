"""Model descriptions and closed-form speed predictions.

A model is a ladder of l+1 increment laws with strictly increasing means and
l thresholds interlacing those means. The walk's long-run speed is decided by
per-regime exponents built from the laws' rate functions evaluated at the
neighbouring thresholds:

* ``transition_exponents``: decay rates of the regime chain's up/down moves;
* ``sojourn_exponents``: growth rates of the expected time spent per visit;
* ``invariant_exponents``: growth rates of the chain's stationary weights,
  obtained by telescoping detailed balance;
* ``dominance_exponents``: the combined weight of each regime in the speed
  formula. The regime with the strictly largest dominance exponent wins and
  its mean is the predicted limiting speed; ties are reported, never guessed.

All exponents are exact functions of the model (no Monte Carlo here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import IncrementDistribution, mean, tail_prob
from .errors import AssumptionError, InvalidChainError, InvalidInputError
from .ratefn import RateFunction

__all__ = [
    "ModelSpec",
    "ValidationReport",
    "TheoryReport",
    "validate",
    "threshold_bounds",
    "dominance_exponents",
    "transition_exponents",
    "sojourn_exponents",
    "invariant_exponents",
    "invariant_distribution",
    "speed_formula",
    "predict_limiting_speed",
]


@dataclass(frozen=True)
class ModelSpec:
    """Immutable model description.

    ``dists`` has l+1 entries, ``thresholds`` has l (strictly increasing).
    ``window`` is the history length N; ``initial_regime`` picks the law used
    for the first N steps. Structural shape is enforced here; the standing
    assumptions (mean interlacing, reachable thresholds) are checked by
    ``validate`` so that failures can be reported rather than thrown.
    """

    dists: tuple[IncrementDistribution, ...]
    thresholds: tuple[float, ...]
    window: int
    initial_regime: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "dists", tuple(self.dists))
        object.__setattr__(self, "thresholds", tuple(float(r) for r in self.thresholds))
        if len(self.thresholds) < 1:
            raise InvalidInputError("need at least one threshold")
        if len(self.dists) != len(self.thresholds) + 1:
            raise InvalidInputError(
                f"{len(self.thresholds)} thresholds require {len(self.thresholds) + 1} laws, got {len(self.dists)}"
            )
        if any(not math.isfinite(r) for r in self.thresholds):
            raise InvalidInputError("thresholds must be finite")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise InvalidInputError(f"thresholds must be strictly increasing, got {self.thresholds}")
        if int(self.window) != self.window or self.window < 1:
            raise InvalidInputError(f"window must be an integer >= 1, got {self.window}")
        object.__setattr__(self, "window", int(self.window))
        if not (0 <= self.initial_regime <= len(self.thresholds)):
            raise InvalidInputError(
                f"initial_regime must be in [0, {len(self.thresholds)}], got {self.initial_regime}"
            )

    @property
    def l(self) -> int:
        return len(self.thresholds)

    @property
    def regime_means(self) -> tuple[float, ...]:
        return tuple(mean(d) for d in self.dists)


def threshold_bounds(spec: ModelSpec, i: int) -> tuple[float, float]:
    """Regime i keeps its law while the window average stays in [lo, hi).

    The outermost bounds are the infinite sentinels: regime 0 cannot move
    down, regime l cannot move up.
    """
    if not (0 <= i <= spec.l):
        raise InvalidInputError(f"regime index {i} out of range for l={spec.l}")
    lo = -math.inf if i == 0 else spec.thresholds[i - 1]
    hi = math.inf if i == spec.l else spec.thresholds[i]
    return (lo, hi)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the standing-assumption checks, with human-readable details."""

    mean_ordering: bool
    tail_support: bool
    light_tails: bool
    details: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return self.mean_ordering and self.tail_support and self.light_tails

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "mean_ordering": self.mean_ordering,
            "tail_support": self.tail_support,
            "light_tails": self.light_tails,
            "details": list(self.details),
        }


def validate(spec: ModelSpec) -> ValidationReport:
    """Check the assumptions under which the speed prediction is proved.

    * mean ordering: mu_0 < r_1 < mu_1 < ... < r_l < mu_l;
    * tail support: each regime has positive probability of producing window
      averages beyond the thresholds it must be able to cross (regime i can
      fall below its lower threshold and climb above its upper one);
    * light tails: every law has finite exponential moments of all orders
      (automatic for the supported families, recorded for completeness).
    """
    details: list[str] = []
    means = spec.regime_means
    ordering = True
    for i in range(spec.l):
        if not (means[i] < spec.thresholds[i] < means[i + 1]):
            ordering = False
            details.append(
                f"threshold {spec.thresholds[i]} must lie strictly between mean({i})={means[i]} and mean({i + 1})={means[i + 1]}"
            )
    support = True
    for i in range(spec.l + 1):
        lo, hi = threshold_bounds(spec, i)
        if i > 0 and tail_prob(spec.dists[i], lo, "lt") <= 0.0:
            support = False
            details.append(f"regime {i} has zero mass below its lower threshold {lo}; it could never move down")
        if i < spec.l and tail_prob(spec.dists[i], hi, "ge") <= 0.0:
            support = False
            details.append(f"regime {i} has zero mass at or above its upper threshold {hi}; it could never move up")
    return ValidationReport(mean_ordering=ordering, tail_support=support, light_tails=True,
                            details=tuple(details))


def _rate_values(spec: ModelSpec):
    """I_i evaluated at the lower/upper thresholds of each regime (None at sentinels)."""
    rates = [RateFunction(d) for d in spec.dists]
    at_lower = [None] + [rates[i].evaluate(spec.thresholds[i - 1]) for i in range(1, spec.l + 1)]
    at_upper = [rates[i].evaluate(spec.thresholds[i]) for i in range(spec.l)] + [None]
    return at_lower, at_upper


def dominance_exponents(spec: ModelSpec) -> tuple[float, ...]:
    """Per-regime exponents whose argmax decides the limiting speed.

    Regime 0 carries the cost of climbing out through its upper threshold;
    each further regime adds the net cost imbalance of the rungs below it.
    """
    at_lower, at_upper = _rate_values(spec)
    lam = [at_upper[0]]
    prefix = 0.0
    for i in range(1, spec.l):
        prefix += at_lower[i] - at_upper[i]
        lam.append(at_upper[i] + prefix)
    lam.append(at_lower[spec.l] + prefix)
    return tuple(lam)


def transition_exponents(spec: ModelSpec) -> tuple[tuple, tuple]:
    """Decay exponents of the regime chain's one-step moves.

    Returns (ups, downs), indexed by regime. ups[l] and downs[0] are None:
    those directions do not exist. Boundary regimes exit with probability one
    in their single direction, exponent 0.
    """
    at_lower, at_upper = _rate_values(spec)
    ups: list = [0.0] + [None] * spec.l
    downs: list = [None] * spec.l + [0.0]
    for i in range(1, spec.l):
        ups[i] = max(at_upper[i] - at_lower[i], 0.0)
        downs[i] = max(at_lower[i] - at_upper[i], 0.0)
    return tuple(ups), tuple(downs)


def sojourn_exponents(spec: ModelSpec) -> tuple[float, ...]:
    """Growth exponents of the expected time per visit to each regime.

    Interior regimes leave through whichever threshold is cheaper; boundary
    regimes only have one way out.
    """
    at_lower, at_upper = _rate_values(spec)
    out = [at_upper[0]]
    for i in range(1, spec.l):
        out.append(min(at_lower[i], at_upper[i]))
    out.append(at_lower[spec.l])
    return tuple(out)


def invariant_exponents(spec: ModelSpec) -> tuple[float, ...]:
    """Growth exponents of the regime chain's stationary weights.

    Telescoped detailed balance: each rung upward multiplies the weight by
    (up probability of the regime below) / (down probability of the regime
    above), whose exponents are already known.
    """
    ups, downs = transition_exponents(spec)
    out = [0.0]
    for i in range(1, spec.l + 1):
        out.append(out[-1] + downs[i] - ups[i - 1])
    return tuple(out)


def invariant_distribution(up_probs, down_probs) -> tuple[float, ...]:
    """Stationary law of a birth-death regime chain from its move probabilities.

    ``up_probs[i]`` is the chance regime i hands off upward (i = 0..l-1) and
    ``down_probs[i-1]`` the chance regime i hands off downward (i = 1..l).
    Accepts exact values or Monte Carlo estimates. Computed by telescoping
    detailed balance in log space, then normalising.
    """
    up = tuple(float(p) for p in up_probs)
    down = tuple(float(p) for p in down_probs)
    if len(up) == 0 or len(up) != len(down):
        raise InvalidChainError(f"need equal, non-empty up/down lists, got {len(up)} and {len(down)}")
    for p in up + down:
        if not (0.0 < p <= 1.0):
            raise InvalidChainError(f"move probabilities must lie in (0, 1], got {p}")
    logw = np.concatenate(([0.0], np.cumsum(np.log(up) - np.log(down))))
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()
    return tuple(float(x) for x in w)


def speed_formula(nu, mean_sojourn_steps, mean_displacements) -> float:
    """Long-run speed of a regime-switching walk from per-regime statistics.

    nu weights each regime by visit frequency; the speed is total expected
    displacement per cycle over total expected duration. Scale of nu cancels.
    """
    nu = np.asarray(nu, dtype=float)
    steps = np.asarray(mean_sojourn_steps, dtype=float)
    disp = np.asarray(mean_displacements, dtype=float)
    if not (nu.shape == steps.shape == disp.shape) or nu.ndim != 1 or nu.size == 0:
        raise InvalidInputError("nu, sojourn steps and displacements must be equal-length 1-D sequences")
    if np.any(nu < 0) or np.any(steps <= 0):
        raise InvalidInputError("nu must be nonnegative and sojourn steps positive")
    denom = float(np.dot(nu, steps))
    if denom <= 0.0:
        raise InvalidInputError("total expected duration must be positive")
    return float(np.dot(nu, disp)) / denom


@dataclass(frozen=True)
class TheoryReport:
    """Everything the exponent calculus says about one model."""

    lambdas: tuple[float, ...]
    argmax_set: tuple[int, ...]
    predicted_speed: float | None
    regime_means: tuple[float, ...]
    up_exponents: tuple
    down_exponents: tuple
    sojourn_exps: tuple[float, ...]
    invariant_exps: tuple[float, ...]
    tie_tol: float
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        per_regime = []
        for i in range(len(self.lambdas)):
            per_regime.append({
                "up_exp": self.up_exponents[i],
                "down_exp": self.down_exponents[i],
                "sojourn_exp": self.sojourn_exps[i],
                "nu_exp": self.invariant_exps[i],
            })
        return {
            "lambdas": list(self.lambdas),
            "argmax": list(self.argmax_set),
            "predicted_speed": self.predicted_speed,
            "regime_means": list(self.regime_means),
            "per_regime": per_regime,
            "tie_tol": self.tie_tol,
            "warnings": list(self.warnings),
        }


def predict_limiting_speed(spec: ModelSpec, tie_tol: float = 1e-9) -> TheoryReport:
    """Predict the walk's long-run speed from the model alone.

    Raises AssumptionError if the model fails validation. When two or more
    dominance exponents agree within ``tie_tol`` the prediction is withheld
    (``predicted_speed`` is None) and the tie is reported in ``warnings``.
    """
    report = validate(spec)
    if not report.passed:
        raise AssumptionError("; ".join(report.details) or "model failed validation")
    lam = dominance_exponents(spec)
    ups, downs = transition_exponents(spec)
    warnings: list[str] = []
    finite_max = max(lam)
    if math.isinf(finite_max):
        warnings.append("a dominance exponent is infinite; the argmax is driven by an unreachable threshold")
    argmax = tuple(i for i, v in enumerate(lam) if finite_max - v <= tie_tol)
    means = spec.regime_means
    if len(argmax) == 1:
        speed = means[argmax[0]]
    else:
        speed = None
        warnings.append(
            f"dominance exponents tie within {tie_tol} between regimes {list(argmax)}; no speed predicted"
        )
    return TheoryReport(
        lambdas=lam,
        argmax_set=argmax,
        predicted_speed=speed,
        regime_means=means,
        up_exponents=ups,
        down_exponents=downs,
        sojourn_exps=sojourn_exponents(spec),
        invariant_exps=invariant_exponents(spec),
        tie_tol=tie_tol,
        warnings=tuple(warnings),
    )
