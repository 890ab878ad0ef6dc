"""Scalar diagnostics computed over closed-loop or replay traces.

Everything here is pure post-processing: regret sums and averages, tracking
error against the reference, the theoretical rate curve for overlays, the
realized gradient-noise sequence, the relative-error score used for
streaming prediction, a minimum-phase monitor, and a summability diagnostic
for the step-size schedule.  Cumulative series use compensated summation so
reruns are bit-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import kahan_add
from .errors import ConfigurationError, DataError
from .models import SquaredError

__all__ = [
    "MetricSeries",
    "GradientNoiseReport",
    "RSReport",
    "kahan_cumsum",
    "regret_sum",
    "average_regret",
    "tracking_error",
    "bound_curve",
    "gradient_noise",
    "relative_error_metric",
    "robbins_siegmund_diag",
    "minimum_phase_ratio",
    "windowed_means",
]


@dataclass(frozen=True)
class MetricSeries:
    """Named per-step values alongside their running compensated sums."""

    name: str
    values: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        if len(self.values) != len(self.cumulative):
            raise ConfigurationError(
                f"series '{self.name}': values ({len(self.values)}) and cumulative "
                f"({len(self.cumulative)}) lengths differ"
            )

    def __len__(self):
        return len(self.values)

    @property
    def average(self):
        """cumulative[k] / (k+1), the per-step running mean."""
        return self.cumulative / np.arange(1, len(self.cumulative) + 1)

    @property
    def final(self):
        return float(self.cumulative[-1]) if len(self.cumulative) else 0.0


def kahan_cumsum(values):
    """Running sums with Kahan compensation, matching the in-loop accumulator."""
    values = np.asarray(values, dtype=float)
    out = np.empty_like(values)
    total, carry = 0.0, 0.0
    for i, v in enumerate(values):
        total, carry = kahan_add(total, carry, float(v))
        out[i] = total
    return out


def _series(name, values):
    values = np.asarray(values, dtype=float)
    return MetricSeries(name=name, values=values, cumulative=kahan_cumsum(values))


def _column(trace, attr):
    out = []
    for rec in trace:
        v = getattr(rec, attr)
        if v is None:
            raise ConfigurationError(
                f"trace is missing '{attr}' at step {rec.k}; this metric needs the "
                f"{attr} column recorded"
            )
        out.append(float(v))
    return np.asarray(out)


def regret_sum(trace, loss=None):
    """Cumulative loss of the adaptive predictor against the optimal one.

    Per-step value is L(f_true, f_est) minus the loss floor L(f_true, f_true),
    so a perfect estimate scores zero for every loss (the floor is identically
    zero for squared error, which is the default).
    """
    if loss is None:
        loss = SquaredError()
    f_true = _column(trace, "f_true")
    f_est = _column(trace, "f_est")
    vals = [float(loss.eval(t, e)) - float(loss.eval(t, t)) for t, e in zip(f_true, f_est)]
    return _series("regret", vals)


def average_regret(trace, loss=None):
    """Running mean of the regret: cumulative regret over k+1 at each step."""
    base = regret_sum(trace, loss=loss)
    return _series("average_regret", base.average)


def tracking_error(trace):
    """Squared gap to the reference, conditional-mean and noisy-proxy versions.

    Returns (conditional, proxy): the first uses f(phi_k, theta*) - y*, which
    is the quantity the rate theory bounds and is observable in simulation;
    the second uses the measured y_{k+1} - y*, the only version available on
    a real plant.  Running averages come from each series' ``average``.
    """
    y_star = _column(trace, "y_star")
    f_true = _column(trace, "f_true")
    y = _column(trace, "y")
    cond = _series("tracking_error_conditional", (f_true - y_star) ** 2)
    proxy = _series("tracking_error_proxy", (y - y_star) ** 2)
    return cond, proxy


def bound_curve(hyper, alpha_eps, n):
    """Reference decay curve log^b2(k)/k^(1-b1) + k^(eps-1) for k = 1..n.

    Scale-free: the theory's bound carries no constant, so this is for slope
    comparison and normalized overlays only.
    """
    if not (0.0 < alpha_eps < 1.0):
        raise ConfigurationError(f"alpha_eps must lie in (0,1), got {alpha_eps}")
    if n < 1:
        raise ConfigurationError(f"n must be >= 1, got {n}")
    k = np.arange(1, n + 1, dtype=float)
    logs = np.log(k)
    if hyper.beta2 == 0.0:
        log_factor = np.ones_like(k)
    else:
        log_factor = logs ** hyper.beta2
    vals = log_factor / k ** (1.0 - hyper.beta1) + k ** (alpha_eps - 1.0)
    return _series("bound_curve", vals)


@dataclass(frozen=True)
class GradientNoiseReport:
    """Realized gradient-noise sequence with its first two sample moments."""

    series: MetricSeries
    mean: float
    second_moment: float


def gradient_noise(trace, pair):
    """Realized noise w_{k+1} = grad_x L(y, f_est) - grad_x L(f_true, f_est).

    Under squared error this collapses to -2 x (plant noise), which the bench
    layer checks per step as an end-to-end ledger identity.
    """
    y = _column(trace, "y")
    f_true = _column(trace, "f_true")
    f_est = _column(trace, "f_est")
    loss = pair.loss
    vals = np.array(
        [float(loss.grad_x(yv, fe)) - float(loss.grad_x(ft, fe)) for yv, ft, fe in zip(y, f_true, f_est)]
    )
    series = MetricSeries(name="gradient_noise", values=vals, cumulative=kahan_cumsum(vals))
    return GradientNoiseReport(
        series=series,
        mean=float(np.mean(vals)) if len(vals) else 0.0,
        second_moment=float(np.mean(vals**2)) if len(vals) else 0.0,
    )


def relative_error_metric(predictions, targets):
    """(1/T) sum |y - yhat| / y over strictly positive targets."""
    predictions = np.asarray(predictions, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if predictions.shape != targets.shape:
        raise ConfigurationError(
            f"predictions shape {predictions.shape} != targets shape {targets.shape}"
        )
    if predictions.size == 0:
        raise ConfigurationError("relative_error_metric needs at least one sample")
    bad = np.flatnonzero(~(targets > 0.0))
    if bad.size:
        raise DataError(
            f"target must be strictly positive, got {float(targets[bad[0]])!r}", line=int(bad[0])
        )
    return float(np.mean(np.abs(targets - predictions) / targets))


@dataclass(frozen=True)
class RSReport:
    """Summability diagnostic for sum of mu_k^2 ||grad f||^2."""

    total: float
    tail_fraction: float
    passed: bool

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"sum mu_k^2 |grad|^2 = {self.total:.6g}, last-half share "
            f"{self.tail_fraction:.4f} -> {verdict}"
        )


RS_TAIL_LIMIT = 0.05


def robbins_siegmund_diag(trace, grad_norm_sq=None):
    """Partial-sum tail check on mu_k^2 ||grad f_k||^2.

    Accepts either a trace of step records or two parallel arrays
    (mu values, squared gradient norms).  A convergent series has almost all
    of its mass early, so the last-half share of the total must fall below
    RS_TAIL_LIMIT; a divergent schedule keeps accruing and fails.
    """
    if grad_norm_sq is None:
        mu = _column(trace, "mu_k")
        gns = _column(trace, "grad_norm_sq")
    else:
        mu = np.asarray(trace, dtype=float)
        gns = np.asarray(grad_norm_sq, dtype=float)
        if mu.shape != gns.shape:
            raise ConfigurationError("mu and grad_norm_sq arrays must have equal shape")
    terms = mu**2 * gns
    cum = kahan_cumsum(terms)
    total = float(cum[-1]) if len(cum) else 0.0
    if total <= 0.0:
        return RSReport(total=total, tail_fraction=0.0, passed=True)
    half = len(terms) // 2
    tail = total - float(cum[half - 1]) if half >= 1 else total
    frac = tail / total
    return RSReport(total=total, tail_fraction=frac, passed=frac < RS_TAIL_LIMIT)


def minimum_phase_ratio(trace, lam=0.9):
    """Monitor u_{k-1}^2 / sum_t lam^(k-t) (y_t^2 + w_t^2), reported not gated.

    The plant-class assumption bounds inputs by exponentially weighted past
    outputs and noises; the ratio staying bounded over a run is evidence the
    trajectory respects it.  First step has no previous input and reports 0.
    """
    if not (0.0 < lam < 1.0):
        raise ConfigurationError(f"lam must lie in (0,1), got {lam}")
    y = _column(trace, "y")
    u = _column(trace, "u")
    w = _column(trace, "w")
    vals = np.zeros(len(y))
    weighted = 0.0
    for k in range(len(y)):
        weighted = lam * weighted + y[k] ** 2 + w[k] ** 2
        if k + 1 < len(y):
            vals[k + 1] = u[k] ** 2 / weighted if weighted > 0.0 else math.inf
    return _series("minimum_phase_ratio", vals)


def windowed_means(values, window=50):
    """Non-overlapping block means; the tail block is dropped if short."""
    values = np.asarray(values, dtype=float)
    if window < 1:
        raise ConfigurationError(f"window must be >= 1, got {window}")
    nblocks = len(values) // window
    if nblocks == 0:
        return np.empty(0)
    return values[: nblocks * window].reshape(nblocks, window).mean(axis=1)
