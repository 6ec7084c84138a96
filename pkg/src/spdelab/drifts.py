"""Drift fields on the Galerkin space: construction, truncation,
mollification, projection, and structural checks.

A drift is a measurable map of the mode space into itself, represented
by a vectorized callable together with bound metadata. Fields are meant
to be pure and reentrant; the mollification cloud is immutable shared
state, so every field here is safe to evaluate concurrently.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.special import erf

from . import rng
from .errors import ParameterError, PreconditionError
from .spectrum import ModeSpectrum, heat_factor, smoothing_covariance

#: largest exponent fed to exp() inside the one-sided exponential field;
#: keeps desk-scale arithmetic finite on extreme inputs
EXP_CAP_LOG = 50.0


@dataclass
class DriftField:
    """A measurable vector field with declared bound metadata.

    ``fn`` maps arrays of shape ``(..., modes)`` to the same shape.
    ``global_bound`` is the sup norm when finite; ``local_bounds`` caches
    sup bounds over centered balls, filled from ``local_bound_rule`` on
    demand. ``certificate`` stores ``(C, p)`` for the one-sided growth
    inequality ``<B(y+z), y> <= C(|y|^2 + exp(p|z|) + 1)`` when one is
    known. Bounds are declared (spot-checked by tests), not proven here.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    tag: str
    global_bound: float | None = None
    local_bounds: dict = dc_field(default_factory=dict)
    local_bound_rule: Callable[[float], float] | None = None
    continuous: bool = True
    certificate: tuple[float, float] | None = None
    smoothing_index: int | None = None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.asarray(self.fn(x), dtype=float)
        if out.shape != x.shape:
            raise ParameterError(
                f"drift '{self.tag}' returned shape {out.shape} for input {x.shape}"
            )
        return out

    def local_bound(self, radius):
        """A sup bound for the field on the open ball of this radius, or None."""
        if radius in self.local_bounds:
            return self.local_bounds[radius]
        value = None
        if self.local_bound_rule is not None:
            value = float(self.local_bound_rule(radius))
        elif self.global_bound is not None:
            value = float(self.global_bound)
        if value is not None:
            self.local_bounds[radius] = value
        return value


def state_norms(x):
    return np.linalg.norm(np.asarray(x, dtype=float), axis=-1)


def truncate(B, radius):
    """Kill the field outside the open ball of the given radius.

    The result equals ``B`` where ``|x| < radius`` and vanishes where
    ``|x| >= radius`` (strict open-ball convention), so two truncations
    of fields that agree inside the smaller ball are pointwise equal
    there.
    """
    if radius <= 0:
        raise ParameterError("truncation radius must be > 0")
    bound = B.local_bound(radius)
    if bound is None:
        bound = _sampled_ball_bound(B, radius)
        B.local_bounds[radius] = bound

    def fn(x):
        inside = state_norms(x) < radius
        return np.where(inside[..., None], B(x), 0.0)

    return DriftField(
        fn,
        tag=f"trunc({B.tag},{radius:g})",
        global_bound=bound,
        local_bounds={radius: bound},
        continuous=False,
        certificate=B.certificate,
        smoothing_index=B.smoothing_index,
    )


def _sampled_ball_bound(B, radius, points=4096):
    # declared-bound fallback: measured sup over a deterministic ball cloud
    gen = rng.stream(0, rng.CHECK, block=1)
    modes = _probe_modes(B)
    u = gen.standard_normal((points, modes))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * gen.random(points) ** (1.0 / modes)
    return float(state_norms(B(u * r[:, None])).max())


def _probe_modes(B):
    for m in range(1, 65):
        try:
            B(np.zeros(m))
            return m
        except Exception:
            continue
    raise ParameterError(f"cannot determine mode count of drift '{B.tag}'")


def smooth(spectrum, B, n, samples=512, seed=0):
    """Mollify a bounded field by averaging over a frozen Gaussian cloud.

    Evaluates the Gaussian convolution
    ``x -> mean_j B(contraction * x + y_j)`` with the heat contraction at
    time ``1/n`` and ``y_j`` drawn once from the matching smoothing
    covariance. Reusing one cloud at every ``x`` makes the result a
    deterministic continuous field whose sup norm cannot exceed the sup
    norm of the input. Larger ``n`` smooths less and converges to ``B``
    at continuity points.
    """
    if n < 1:
        raise ParameterError("smoothing index must be >= 1")
    if samples < 1:
        raise ParameterError("cloud size must be >= 1")
    if B.global_bound is None:
        raise PreconditionError(f"drift '{B.tag}' must be globally bounded before smoothing")
    contraction = heat_factor(spectrum, 1.0 / n)
    std = smoothing_covariance(spectrum, n).std()
    xi = rng.stream(seed, rng.CLOUD).standard_normal((samples, spectrum.modes))
    cloud = std * xi
    chunk = max(1, 2**21 // samples)

    def fn(x):
        lead = x.shape[:-1]
        flat = x.reshape(-1, x.shape[-1])
        out = np.empty_like(flat)
        for lo in range(0, flat.shape[0], chunk):
            batch = flat[lo : lo + chunk]
            shifted = contraction * batch[:, None, :] + cloud[None, :, :]
            out[lo : lo + batch.shape[0]] = B(shifted).mean(axis=1)
        return out.reshape(lead + (x.shape[-1],))

    return DriftField(
        fn,
        tag=f"smooth({B.tag},{n})",
        global_bound=B.global_bound,
        continuous=True,
        certificate=B.certificate,
        smoothing_index=n,
    )


def galerkin_project(B, keep_modes, modes):
    """Compress the field through the projection onto the first modes:
    ``x -> P B(P x)`` with ``P`` keeping ``keep_modes`` coordinates."""
    if not 1 <= keep_modes <= modes:
        raise ParameterError(
            f"projection onto {keep_modes} modes invalid for {modes} active modes"
        )
    mask = np.zeros(modes)
    mask[:keep_modes] = 1.0

    def fn(x):
        return mask * B(mask * x)

    return DriftField(
        fn,
        tag=f"proj({B.tag},{keep_modes})",
        global_bound=B.global_bound,
        continuous=B.continuous,
        certificate=None,
        smoothing_index=B.smoothing_index,
    )


def with_outside_bump(B, radius, bump):
    """Add a constant shift in mode 1 outside the closed ball.

    The result agrees with ``B`` exactly on the open ball of the given
    radius and differs outside; used by same-noise uniqueness runs.
    """
    if radius <= 0:
        raise ParameterError("bump radius must be > 0")

    def fn(x):
        out = B(x).copy()
        outside = state_norms(x) >= radius
        out[..., 0] = np.where(outside, out[..., 0] + bump, out[..., 0])
        return out

    bound = None if B.global_bound is None else B.global_bound + abs(bump)
    return DriftField(
        fn,
        tag=f"{B.tag}+bump({bump:g}@{radius:g})",
        global_bound=bound,
        continuous=False,
        certificate=None,
        smoothing_index=B.smoothing_index,
    )


@dataclass(frozen=True)
class DissipativityReport:
    """Outcome of a sampled check of the one-sided growth condition."""

    trials: int
    violations: int
    max_margin: float
    worst_y: np.ndarray | None
    worst_z: np.ndarray | None

    @property
    def passed(self):
        return self.violations == 0


def dissipativity_check(spectrum, B, C, p, trials, seed, scales=(1.0, 2.0, 4.0, 8.0)):
    """Sample ``(y, z)`` pairs and report the worst margin of
    ``<B(y+z), y> - C (|y|^2 + exp(p|z|) + 1)``.

    Pairs are drawn from the stationary Gaussian rescaled through the
    given scales so large-norm regions are probed. A positive margin is
    a reported violation, not an error.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    gen = rng.stream(seed, rng.CHECK)
    std = spectrum.invariant_std()
    scale_cycle = np.asarray(scales, dtype=float)[np.arange(trials) % len(scales)]
    y = gen.standard_normal((trials, spectrum.modes)) * std * scale_cycle[:, None]
    z = gen.standard_normal((trials, spectrum.modes)) * std * scale_cycle[:, None]
    inner = np.einsum("ij,ij->i", B(y + z), y)
    margins = inner - C * (
        np.einsum("ij,ij->i", y, y) + np.exp(p * state_norms(z)) + 1.0
    )
    worst = int(np.argmax(margins))
    violations = int(np.count_nonzero(margins > 0))
    return DissipativityReport(
        trials=trials,
        violations=violations,
        max_margin=float(margins[worst]),
        worst_y=y[worst] if violations else None,
        worst_z=z[worst] if violations else None,
    )


# ---------------------------------------------------------------------------
# builtin catalog


def zero_drift(modes):
    return DriftField(lambda x: np.zeros_like(x), tag="zero", global_bound=0.0,
                      certificate=(1.0, 1.0))


def constant_drift(modes, magnitude=1.0):
    """Constant push of the given magnitude along mode 1."""

    def fn(x):
        out = np.zeros_like(x)
        out[..., 0] = magnitude
        return out

    return DriftField(fn, tag="constant", global_bound=abs(magnitude),
                      certificate=(max(abs(magnitude), 1e-12), 1.0))


def sign_drift(modes, bound=1.0, decay=2.0):
    """Bounded discontinuous field: per-mode sign times a decaying weight.

    Weights are normalized so the sup norm equals ``bound`` (attained
    wherever all coordinates are nonzero).
    """
    k = np.arange(1, modes + 1, dtype=float)
    weights = k**-decay
    weights *= bound / math.sqrt(float((weights**2).sum()))

    def fn(x):
        return np.sign(x) * weights

    return DriftField(fn, tag="sign", global_bound=bound, continuous=False,
                      certificate=(max(bound, 1e-12), 1.0))


def mollified_sign_drift(modes, smoothing_index=8, bound=1.0, decay=2.0, lambdas=None):
    """The exact Gaussian mollification of the sign field.

    Coordinatewise the smoothing integral of a sign profile is an error
    function, so this is the infinite-cloud limit of applying the
    frozen-cloud smoother to :func:`sign_drift` at the same index; unlike
    the sampled smoother it carries no staircase artifacts, which matters
    when a chaos solve needs the mollified field to machine accuracy.
    ``lambdas`` defaults to the polynomial spectrum ``k^2``.
    """
    if smoothing_index < 1:
        raise ParameterError("smoothing index must be >= 1")
    spectrum = ModeSpectrum(
        np.arange(1, modes + 1, dtype=float) ** 2 if lambdas is None else lambdas
    )
    if spectrum.modes != modes:
        raise ParameterError("lambdas and modes disagree")
    k = np.arange(1, modes + 1, dtype=float)
    weights = k**-decay
    weights *= bound / math.sqrt(float((weights**2).sum()))
    contraction = heat_factor(spectrum, 1.0 / smoothing_index)
    scale = contraction / (math.sqrt(2.0) * smoothing_covariance(spectrum, smoothing_index).std())

    def fn(x):
        return weights * erf(scale * x)

    return DriftField(
        fn,
        tag=f"mollified_sign({smoothing_index})",
        global_bound=bound,
        certificate=(max(bound, 1e-12), 1.0),
        smoothing_index=smoothing_index,
    )


def radial_drift(modes, bound=1.0):
    """Smooth bounded inward pull ``-bound * x / sqrt(1 + |x|^2)``."""

    def fn(x):
        return -bound * x / np.sqrt(1.0 + state_norms(x)[..., None] ** 2)

    return DriftField(fn, tag="radial", global_bound=bound,
                      certificate=(max(bound, 1e-12), 1.0))


def onesided_exp_drift(modes, q=1.0, cap_log=EXP_CAP_LOG):
    """Unbounded coordinatewise field: exponential restoring push on
    negative coordinates, decaying mode weights.

    Mode ``k`` receives ``g(x_k) / k^2`` with ``g(s) = exp(q |s|)`` for
    ``s < 0`` (capped at ``exp(cap_log)``) and ``g(s) = 0`` otherwise.
    Satisfies the one-sided growth condition with the closed-form
    certificate ``C = zeta(2) / (q e)``, ``p = 2 q``: per coordinate
    ``g(s + r) r <= (1/(q e)) exp(2 q |s|)`` because the push only acts
    when ``r < |s|``.
    """
    if q <= 0:
        raise ParameterError("growth rate q must be > 0")
    k = np.arange(1, modes + 1, dtype=float)
    inv_k2 = k**-2.0
    zeta2 = math.pi**2 / 6.0
    tail4 = math.sqrt(float((inv_k2**2).sum()))

    def fn(x):
        g = np.exp(np.minimum(q * np.abs(x), cap_log))
        return np.where(x < 0, g, 0.0) * inv_k2

    def ball_bound(radius):
        return math.exp(min(q * radius, cap_log)) * tail4

    return DriftField(
        fn,
        tag="onesided_exp",
        local_bound_rule=ball_bound,
        continuous=False,  # jump of g at 0 from the left
        certificate=(zeta2 / (q * math.e), 2.0 * q),
    )


def affine_drift(modes, push=1.0, pull=1.0):
    """At-most-linear field ``push * e_1 - pull * x``."""

    def fn(x):
        out = -pull * x
        out[..., 0] = out[..., 0] + push
        return out

    return DriftField(
        fn,
        tag="affine",
        local_bound_rule=lambda radius: abs(push) + abs(pull) * radius,
        certificate=(abs(push) + abs(pull), 1.0),
    )


_FACTORIES = {
    "zero": zero_drift,
    "constant": constant_drift,
    "sign": sign_drift,
    "mollified_sign": mollified_sign_drift,
    "radial": radial_drift,
    "onesided_exp": onesided_exp_drift,
    "affine": affine_drift,
}

_REGISTRY = {}


def register_drift(name, factory):
    """Register a custom drift factory ``factory(modes, **params)``."""
    _REGISTRY[name] = factory


def drift_names():
    return sorted(set(_FACTORIES) | set(_REGISTRY))


def make_drift(name, modes, **params):
    """Build a catalog drift by name.

    The wrapper parameters ``outside_bump`` and ``bump_radius`` apply
    :func:`with_outside_bump` to any base field.
    """
    bump = params.pop("outside_bump", None)
    bump_radius = params.pop("bump_radius", None)
    factory = _REGISTRY.get(name) or _FACTORIES.get(name)
    if factory is None:
        raise ParameterError(
            f"unknown drift '{name}'; available: {', '.join(drift_names())}"
        )
    field = factory(modes, **params)
    if bump is not None:
        if bump_radius is None:
            raise ParameterError("outside_bump requires bump_radius")
        field = with_outside_bump(field, bump_radius, bump)
    return field


def builtin_drifts(modes, bound=1.0):
    """The named catalog at a common sup-norm for the bounded members."""
    return {
        "zero": zero_drift(modes),
        "constant": constant_drift(modes, magnitude=bound),
        "sign": sign_drift(modes, bound=bound),
        "mollified_sign": mollified_sign_drift(modes, bound=bound),
        "radial": radial_drift(modes, bound=bound),
        "onesided_exp": onesided_exp_drift(modes),
        "affine": affine_drift(modes),
    }
