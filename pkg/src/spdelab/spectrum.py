"""Spectrum of the linear operator and the Gaussian quantities it generates.

The linear part is a negative-definite diagonal operator with eigenvalues
``-lambda_k`` on the coordinate basis of the active Galerkin truncation.
Everything Gaussian in the model is closed-form in the ``lambda_k``:

* heat factors          ``exp(-lambda_k t)``
* transition variances  ``(1 - exp(-2 lambda_k t)) / (2 lambda_k)``
* invariant variances   ``1 / (2 lambda_k)``
* gradient-kernel scale ``sqrt(2 lambda_k) exp(-lambda_k t) (1 - exp(-2 lambda_k t))^{-1/2}``

The gradient-kernel scale, multiplied by ``sqrt(t)``, equals
``g(s) = sqrt(2 s / (exp(2 s) - 1))`` at ``s = lambda_k t``; ``g`` is
strictly decreasing with supremum 1 at ``s -> 0+``, so the operator norm
of the kernel is at most ``t^{-1/2}``. That supremum is the constant
``GRADIENT_NORM_CONSTANT`` used for the semigroup smoothing bound and the
Picard contraction threshold (re-established numerically in the tests by
brute-force maximization of ``g``).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

#: sup of sqrt(t) * (gradient-kernel operator norm) for diagonal spectra
GRADIENT_NORM_CONSTANT = 1.0


@dataclass(frozen=True)
class ModeSpectrum:
    """Eigenvalues ``lambda_k > 0`` of the (negated) linear operator.

    ``lambdas[k-1]`` is the eigenvalue of mode ``k``; the length of the
    list is the active Galerkin mode count.
    """

    lambdas: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ParameterError("spectrum needs at least one eigenvalue")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ParameterError("eigenvalues must be positive and finite")
        object.__setattr__(self, "lambdas", lam)

    @classmethod
    def k_squared(cls, modes):
        """The default polynomial spectrum ``lambda_k = k^2``."""
        if modes < 1:
            raise ParameterError("modes must be >= 1")
        return cls(np.arange(1, modes + 1, dtype=float) ** 2)

    @property
    def modes(self):
        return self.lambdas.size

    def invariant_variances(self):
        return 1.0 / (2.0 * self.lambdas)

    def invariant_std(self):
        return np.sqrt(self.invariant_variances())

    def as_state(self, x):
        """Validate and return a point of the Galerkin space as an array."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.modes:
            raise ParameterError(
                f"state has {x.shape[-1]} coordinates, spectrum has {self.modes} modes"
            )
        if not np.all(np.isfinite(x)):
            raise ParameterError("state coordinates must be finite")
        return x


@dataclass(frozen=True)
class GaussianSpec:
    """Per-mode variances of a centered product Gaussian on the mode space."""

    variances: np.ndarray
    label: str = "transition"

    def __post_init__(self):
        v = np.asarray(self.variances, dtype=float)
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ParameterError("variances must be finite and nonnegative")
        object.__setattr__(self, "variances", v)

    def std(self):
        return np.sqrt(self.variances)


@dataclass(frozen=True)
class TraceClassReport:
    """Summability diagnostic for ``sum_k lambda_k^{-(1-delta)}``.

    ``margin`` is the integral-test exponent margin: the summand decays
    like ``k^{-s}`` with ``s = margin + 1``, so positive margin means the
    tail converges and ``tail_bound`` bounds the neglected modes.
    ``converges`` is ``None`` when the spectrum is too short to fit a
    decay exponent.
    """

    partial_sum: float
    tail_bound: float
    decay_exponent: float
    margin: float
    converges: bool | None = field(default=None)


def heat_factor(spectrum, t):
    """Per-mode semigroup factors ``exp(-lambda_k t)`` for ``t >= 0``."""
    if not np.isfinite(t) or t < 0:
        raise ParameterError(f"time must be >= 0, got {t}")
    return np.exp(-spectrum.lambdas * t)


def transition_covariance(spectrum, t):
    """Covariance of the noise convolution over a window of length ``t``.

    Per-mode variance ``(1 - exp(-2 lambda_k t)) / (2 lambda_k)``,
    evaluated through ``expm1`` so small ``lambda_k t`` does not cancel.
    """
    if not np.isfinite(t) or t < 0:
        raise ParameterError(f"time must be >= 0, got {t}")
    var = -np.expm1(-2.0 * spectrum.lambdas * t) / (2.0 * spectrum.lambdas)
    return GaussianSpec(var, label="transition")


def invariant_measure(spectrum):
    """The stationary Gaussian: per-mode variance ``1 / (2 lambda_k)``."""
    return GaussianSpec(spectrum.invariant_variances(), label="invariant")


def smoothing_covariance(spectrum, n):
    """Covariance used by drift mollification: the transition at ``t = 1/n``."""
    if n < 1:
        raise ParameterError(f"smoothing index must be >= 1, got {n}")
    spec = transition_covariance(spectrum, 1.0 / n)
    return GaussianSpec(spec.variances, label="smoothing")


def mehler_gradient_factor(spectrum, t):
    """Per-mode scale of the semigroup-gradient score representation.

    Returns ``(factors, operator_norm)`` with
    ``factor_k = sqrt(2 lambda_k / (exp(2 lambda_k t) - 1))``
    and the operator norm equal to the max over modes. Singular at
    ``t = 0``; the scaled norm satisfies
    ``sqrt(t) * operator_norm <= GRADIENT_NORM_CONSTANT``.
    """
    if not np.isfinite(t) or t <= 0:
        raise ParameterError(f"time must be > 0, got {t}")
    factors = np.sqrt(2.0 * spectrum.lambdas / np.expm1(2.0 * spectrum.lambdas * t))
    return factors, float(factors.max())


def trace_class_margin(spectrum, delta):
    """Partial sum and integral-test tail for ``sum_k lambda_k^{-(1-delta)}``.

    The decay exponent of the summand is fitted on the upper half of the
    modes; the tail bound is ``m^{1-s} / (s-1)`` when the fitted exponent
    ``s`` exceeds 1 and infinite otherwise. The caller decides how to act
    on a non-summable spectrum; this only reports.
    """
    if not 0.0 < delta < 1.0:
        raise ParameterError(f"delta must be in (0, 1), got {delta}")
    lam = spectrum.lambdas
    m = lam.size
    summand = lam ** (-(1.0 - delta))
    partial = float(summand.sum())
    if m < 2:
        return TraceClassReport(partial, float("nan"), float("nan"), float("nan"), None)
    k = np.arange(1, m + 1, dtype=float)
    half = max(m // 2, 1)
    slope = np.polyfit(np.log(k[half - 1 :]), np.log(summand[half - 1 :]), 1)[0]
    s = -float(slope)
    margin = s - 1.0
    if margin > 0:
        tail = m ** (1.0 - s) / (s - 1.0)
        return TraceClassReport(partial, float(tail), s, margin, True)
    return TraceClassReport(partial, float("inf"), s, margin, False)
