"""Exact simulation of the linear (Ornstein-Uhlenbeck) dynamics and
Monte Carlo evaluation of its transition semigroup and gradient.

Per mode the dynamics contract by ``exp(-lambda_k h)`` over a step of
length ``h`` and pick up an independent Gaussian noise-convolution
increment of variance ``(1 - exp(-2 lambda_k h)) / (2 lambda_k)``; the
step is the exact transition, not an Euler approximation.

A :class:`NoiseBundle` carries two standard-normal arrays per step and
mode. ``increments`` generates the raw Brownian increments
``dW = sqrt(h) * xi`` (used by Ito sums and Girsanov weights);
``ortho`` supplies the component of the exact noise-convolution draw
orthogonal to ``dW``, so each step exposes the jointly correct pair
(Brownian increment, convolution increment). Joint moments per mode:

    Var(dW) = h,  Var(conv) = sigma(h)^2,  Cov(dW, conv) = gamma(h),

with ``gamma(h) = (1 - exp(-lambda h)) / lambda``. Sampling the pair
jointly makes discrete Girsanov reweighting an exact change of measure
for the simulation scheme.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import EvaluationError, ParameterError
from .spectrum import heat_factor, mehler_gradient_factor, transition_covariance


def _validate_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise ParameterError("time grid needs at least two points")
    if grid[0] != 0.0:
        raise ParameterError("time grid must start at 0")
    if np.any(np.diff(grid) <= 0):
        raise ParameterError("time grid must be strictly increasing")
    return grid


def time_grid(horizon, steps):
    """Uniform grid 0 = t_0 < ... < t_steps = horizon."""
    if horizon <= 0 or steps < 1:
        raise ParameterError("horizon must be > 0 and steps >= 1")
    return np.linspace(0.0, horizon, steps + 1)


@dataclass(frozen=True)
class NoiseBundle:
    """Per-path noise: time grid plus standard-normal draws.

    Regenerating with the same ``(seed, path_index)`` (and level) is
    bit-exact, and equals the corresponding row of a batched draw.
    """

    grid: np.ndarray
    increments: np.ndarray  # (steps, modes), Brownian: dW = sqrt(h) * increments
    ortho: np.ndarray  # (steps, modes), convolution residual draws
    seed: int
    path_index: int
    level: int = 0

    def __post_init__(self):
        grid = _validate_grid(self.grid)
        steps = grid.size - 1
        if self.increments.shape != self.ortho.shape or self.increments.shape[0] != steps:
            raise ParameterError("draw arrays must have shape (steps, modes)")
        object.__setattr__(self, "grid", grid)

    @classmethod
    def generate(cls, grid, modes, seed, path_index, level=0):
        grid = _validate_grid(grid)
        xi, ortho = _block_draws(grid.size - 1, modes, seed, path_index, level)
        return cls(grid, xi, ortho, int(seed), int(path_index), int(level))

    @property
    def steps(self):
        return self.grid.size - 1

    @property
    def modes(self):
        return self.increments.shape[1]

    def step_sizes(self):
        return np.diff(self.grid)

    def brownian_increments(self):
        return np.sqrt(self.step_sizes())[:, None] * self.increments

    def refine(self):
        """Halve every step, splitting each Brownian increment at the midpoint.

        The coarse increments are preserved exactly (left + right half-step
        increments sum to the parent increment); midpoint randomness and the
        fine-level convolution residuals come from a fresh stream keyed by
        the refinement level, so repeated refinement is reproducible.
        """
        steps, modes = self.increments.shape
        block, row = divmod(self.path_index, rng.BLOCK)
        gen = rng.stream(self.seed, rng.REFINE, block, self.level + 1)
        draws = gen.standard_normal((rng.BLOCK, steps, 3, modes))[row]
        eta, ortho_l, ortho_r = draws[:, 0], draws[:, 1], draws[:, 2]
        root2 = np.sqrt(2.0)
        xi_fine = np.empty((2 * steps, modes))
        xi_fine[0::2] = (self.increments + eta) / root2
        xi_fine[1::2] = (self.increments - eta) / root2
        ortho_fine = np.empty((2 * steps, modes))
        ortho_fine[0::2] = ortho_l
        ortho_fine[1::2] = ortho_r
        grid_fine = np.empty(2 * steps + 1)
        grid_fine[0::2] = self.grid
        grid_fine[1::2] = 0.5 * (self.grid[:-1] + self.grid[1:])
        return NoiseBundle(
            grid_fine, xi_fine, ortho_fine, self.seed, self.path_index, self.level + 1
        )


def _block_draws(steps, modes, seed, path_index, level=0):
    block, row = divmod(int(path_index), rng.BLOCK)
    gen = rng.stream(seed, rng.NOISE, block, level)
    draws = gen.standard_normal((rng.BLOCK, steps, 2, modes))[row]
    return draws[:, 0], draws[:, 1]


def noise_batch(grid, modes, seed, n_paths, start_index=0, level=0):
    """Standard-normal draws for paths start_index..start_index+n_paths-1.

    Returns ``(xi, ortho)`` of shape ``(n_paths, steps, modes)``; row ``i``
    is bit-identical to ``NoiseBundle.generate(..., start_index + i)``.
    """
    grid = _validate_grid(grid)
    steps = grid.size - 1
    first_block, offset = divmod(int(start_index), rng.BLOCK)
    n_blocks = (offset + n_paths + rng.BLOCK - 1) // rng.BLOCK
    chunks = []
    for b in range(n_blocks):
        gen = rng.stream(seed, rng.NOISE, first_block + b, level)
        chunks.append(gen.standard_normal((rng.BLOCK, steps, 2, modes)))
    draws = np.concatenate(chunks, axis=0)[offset : offset + n_paths]
    return draws[:, :, 0, :], draws[:, :, 1, :]


def transition_coefficients(spectrum, h):
    """Exact one-step coefficients ``(contraction, sigma)`` for step ``h``."""
    if not np.isfinite(h) or h <= 0:
        raise ParameterError(f"step size must be > 0, got {h}")
    return heat_factor(spectrum, h), transition_covariance(spectrum, h).std()


def convolution_normals(spectrum, grid, increments, ortho):
    """Standardized draws of the exact per-step noise convolution.

    Combines the Brownian draws with their orthogonal residuals so that
    ``sigma_k(h) * z`` has the exact convolution law jointly with
    ``dW = sqrt(h) * xi``. Accepts leading batch axes on the draw arrays.
    """
    grid = _validate_grid(grid)
    h = np.diff(grid)
    a = spectrum.lambdas[None, :] * h[:, None]  # (steps, modes)
    mean_factor = -np.expm1(-a) / a  # gamma / h
    var_factor = -np.expm1(-2.0 * a) / (2.0 * a)  # sigma^2 / h
    # 1 - rho^2 = a^2/12 + O(a^4); series below a=1e-3 avoids cancellation
    resid = 1.0 - mean_factor**2 / var_factor
    resid = np.where(a < 1e-3, a * a / 12.0, np.maximum(resid, 0.0))
    rho = mean_factor / np.sqrt(var_factor)
    return rho * increments + np.sqrt(resid) * ortho


@dataclass(frozen=True)
class OUPath:
    """A simulated trajectory of the linear dynamics on its grid."""

    grid: np.ndarray
    states: np.ndarray  # (steps + 1, modes)
    start: np.ndarray

    def __post_init__(self):
        if self.states.shape[0] != self.grid.size:
            raise ParameterError("trajectory length must equal grid length")
        if not np.all(np.isfinite(self.states)):
            raise ParameterError("trajectory contains non-finite coordinates")


def ou_step(spectrum, state, h, draws):
    """One exact transition of length ``h`` driven by standard normals.

    ``state`` and ``draws`` may carry leading batch axes of equal shape.
    """
    contraction, sigma = transition_coefficients(spectrum, h)
    state = spectrum.as_state(state)
    draws = np.asarray(draws, dtype=float)
    if draws.shape != state.shape:
        raise ParameterError("draws must match the state shape")
    return contraction * state + sigma * draws


def simulate_ou(spectrum, x, noise):
    """Run the exact scheme along a noise bundle from start ``x``."""
    x = spectrum.as_state(x)
    conv = convolution_normals(spectrum, noise.grid, noise.increments, noise.ortho)
    h = noise.step_sizes()
    states = np.empty((noise.steps + 1, spectrum.modes))
    states[0] = x
    for j in range(noise.steps):
        contraction, sigma = transition_coefficients(spectrum, h[j])
        states[j + 1] = contraction * states[j] + sigma * conv[j]
    return OUPath(noise.grid, states, x)


def sample_invariant(spectrum, count, seed):
    """I.i.d. draws from the stationary Gaussian, shape ``(count, modes)``."""
    if count < 1:
        raise ParameterError("count must be >= 1")
    gen = rng.stream(seed, rng.INVARIANT)
    return gen.standard_normal((count, spectrum.modes)) * spectrum.invariant_std()


def _mehler_cloud(spectrum, t, n, seed):
    if not np.isfinite(t) or t <= 0:
        raise ParameterError(f"time must be > 0, got {t}")
    if n < 2:
        raise ParameterError("need at least 2 samples for a standard error")
    xi = rng.stream(seed, rng.MEHLER).standard_normal((n, spectrum.modes))
    return heat_factor(spectrum, t), xi, transition_covariance(spectrum, t).std()


def _checked_values(f, points):
    vals = np.asarray(f(points), dtype=float)
    if vals.shape != (points.shape[0],):
        raise EvaluationError(
            f"test function must map (n, modes) to (n,), got shape {vals.shape}"
        )
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = int(np.argmax(bad))
        raise EvaluationError("test function returned a non-finite value", point=points[idx])
    return vals


def mehler_apply(spectrum, f, t, x, n, seed):
    """Monte Carlo value of the transition semigroup at ``x``.

    Averages ``f`` over the exact time-``t`` transition law; ``f`` must be
    vectorized over states. Returns ``(estimate, std_error)``.
    """
    contraction, xi, sigma = _mehler_cloud(spectrum, t, n, seed)
    x = spectrum.as_state(x)
    vals = _checked_values(f, contraction * x + sigma * xi)
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n))


def mehler_gradient(spectrum, f, t, x, n, seed, control_variate=True):
    """Monte Carlo gradient of the transition semigroup at ``x``.

    Uses the score representation: per mode the estimator averages
    ``factor_k * xi_k * f(value)`` where ``factor_k`` is the per-mode
    gradient-kernel scale and ``xi_k`` is the standardized noise
    coordinate of the sampled transition point. By default the sample
    mean of ``f`` is subtracted (the score is centered, so this is a
    pure variance reduction; the estimate is rescaled by ``n/(n-1)`` to
    undo the coupling bias). Returns per-mode ``(estimates, std_errors)``.
    """
    contraction, xi, sigma = _mehler_cloud(spectrum, t, n, seed)
    factors, _ = mehler_gradient_factor(spectrum, t)
    x = spectrum.as_state(x)
    vals = _checked_values(f, contraction * x + sigma * xi)
    if control_variate:
        vals = vals - vals.mean()
    per_sample = factors * xi * vals[:, None]
    scale = n / (n - 1.0) if control_variate else 1.0
    est = scale * per_sample.mean(axis=0)
    se = per_sample.std(axis=0, ddof=1) / np.sqrt(n)
    return est, se
