"""Driving noise: Wiener coordinates plus independent compensated compound
Poisson jump coordinates with compactly supported jump measures.

Only finite-activity jump parts are supported; they can be simulated
exactly (Poisson count, i.i.d. sizes, continuous compensator drift), so the
invariance tests downstream carry no jump-discretization bias.

Random streams: every consumer derives its generator from
``SeedSequence(entropy=[*seed, key])`` where ``seed`` is the run seed (an
int, or a tuple for nested splitting) and ``key`` is the jump coordinate
index ``0..q-1`` or ``q`` for the Wiener block.  Parallel path generation
splits by appending the path index to the seed tuple.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigError, NumericalError

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(96)


def seed_tuple(seed) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(s) for s in seed)


def stream(seed, key: int) -> np.random.Generator:
    """Deterministic substream for (seed, key); independent across keys."""
    return np.random.default_rng(np.random.SeedSequence(list(seed_tuple(seed)) + [key]))


@dataclass(frozen=True, eq=False)
class JumpMeasureSpec:
    """Jump measure F(dx) = intensity * density(x) dx on a compact support,
    or a finite list of atoms (location, mass) with intensity = total mass."""

    intensity: float
    support: tuple[tuple[float, float], ...] = ()
    density: object = None  # callable x -> pdf value, normalized over support
    atoms: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if (self.density is None) == (not self.atoms):
            raise ConfigError("specify exactly one of density or atoms")
        if self.intensity <= 0.0 or not np.isfinite(self.intensity):
            raise ConfigError("jump intensity must be positive and finite")
        if self.density is not None:
            if not self.support:
                raise ConfigError("a density spec needs a declared support")
            for a, b in self.support:
                if not (np.isfinite(a) and np.isfinite(b) and a < b):
                    raise ConfigError("support intervals must be bounded and nondegenerate")
            xs = np.concatenate([np.linspace(a, b, 100) for a, b in self.support])
            vals = np.asarray([self.density(x) for x in xs], dtype=float)
            if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
                raise ConfigError("density must be nonnegative and finite on its support")
            total = sum(integrate.quad(self.density, a, b)[0] for a, b in self.support)
            if abs(total - 1.0) > 1e-6:
                raise ConfigError(f"density integrates to {total:.6f}, expected 1")
        else:
            masses = [m for _, m in self.atoms]
            if any(m <= 0.0 for m in masses):
                raise ConfigError("atom masses must be positive")
            if abs(sum(masses) - self.intensity) > 1e-12 * max(1.0, self.intensity):
                raise ConfigError("intensity must equal the total atom mass")

    def measure_integral(self, f) -> float:
        """Integral of f against F(dx) (adaptive quadrature plus atom sums)."""
        total = 0.0
        if self.density is not None:
            for a, b in self.support:
                val, err = integrate.quad(lambda x: f(x) * self.density(x), a, b,
                                          limit=200)
                if not np.isfinite(val) or err > 1e-8 * (1.0 + abs(val)):
                    raise NumericalError("jump-measure quadrature did not converge")
                total += self.intensity * val
        for x, m in self.atoms:
            total += m * f(x)
        return total

    def mean_jump(self) -> float:
        return self.measure_integral(lambda x: x)

    def second_moment(self) -> float:
        return self.measure_integral(lambda x: x * x)

    def sample_sizes(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Inverse-CDF (density) or categorical (atoms) jump sizes."""
        if n == 0:
            return np.zeros(0)
        if self.atoms:
            locs = np.array([x for x, _ in self.atoms])
            probs = np.array([m for _, m in self.atoms]) / self.intensity
            return rng.choice(locs, size=n, p=probs)
        xs_list, pdf_list = [], []
        for a, b in self.support:
            x = np.linspace(a, b, 2049)
            xs_list.append(x)
            pdf_list.append(np.array([self.density(v) for v in x]))
        xs = np.concatenate(xs_list)
        pdf = np.concatenate(pdf_list)
        order = np.argsort(xs, kind="stable")
        xs, pdf = xs[order], pdf[order]
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(xs))])
        cdf /= cdf[-1]
        return np.interp(rng.uniform(size=n), cdf, xs)


def uniform_jumps(a: float, b: float, intensity: float) -> JumpMeasureSpec:
    width = b - a
    return JumpMeasureSpec(intensity=intensity, support=((a, b),),
                           density=lambda x, _w=width: 1.0 / _w)


def atom_jumps(atoms: list[tuple[float, float]]) -> JumpMeasureSpec:
    total = sum(m for _, m in atoms)
    return JumpMeasureSpec(intensity=total, atoms=tuple(atoms))


@dataclass(frozen=True, eq=False)
class LevyDriver:
    """p Wiener coordinates plus q independent jump coordinates."""

    p: int
    jump_specs: tuple[JumpMeasureSpec, ...]
    include_wiener_in_X: bool = False

    def __post_init__(self):
        object.__setattr__(self, "jump_specs", tuple(self.jump_specs))
        if self.p < 0:
            raise ConfigError("Wiener dimension must be >= 0")
        if len(self.jump_specs) < 1:
            raise ConfigError("need at least one jump coordinate")

    @property
    def q(self) -> int:
        return len(self.jump_specs)

    def compensator_drift(self) -> np.ndarray:
        return np.array([-spec.mean_jump() for spec in self.jump_specs])


@dataclass(frozen=True, eq=False)
class DriverPath:
    """One realization on a regular grid: Wiener increments plus exact jump events."""

    time_grid: np.ndarray
    wiener_increments: np.ndarray  # (M, p)
    jump_events: tuple[tuple[np.ndarray, np.ndarray], ...]  # (times, sizes) per coord
    compensator_drift: np.ndarray  # per coordinate, per unit time

    def terminal_values(self) -> np.ndarray:
        """X^k_T for each jump coordinate (jumps plus compensator)."""
        T = self.time_grid[-1]
        return np.array([sizes.sum() + c * T for (times, sizes), c
                         in zip(self.jump_events, self.compensator_drift)])


def small_jump_indices(driver: LevyDriver, eps_min: float) -> set[int]:
    """1-based indices whose declared support contains [0, eps] or [-eps, 0]
    for some eps >= eps_min.  Atom supports never qualify."""
    if eps_min <= 0.0:
        raise ConfigError("eps_min must be positive")
    indices = set()
    for k, spec in enumerate(driver.jump_specs, start=1):
        for a, b in spec.support:
            if (a <= 0.0 and b >= eps_min) or (b >= 0.0 and a <= -eps_min):
                indices.add(k)
                break
    return indices


def moment_check(spec: JumpMeasureSpec) -> float:
    """Integral of |x|^2 v |x|^4 against F(dx); finite for compact support."""
    return spec.measure_integral(lambda x: max(x * x, x ** 4))


def _jump_cumulant_terms(spec: JumpMeasureSpec, z: np.ndarray,
                         prime: bool) -> np.ndarray:
    """Vectorized Gauss-Legendre quadrature of the jump part of Psi or Psi'."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    total = np.zeros_like(z)
    if spec.density is not None:
        for a, b in spec.support:
            x = 0.5 * (b - a) * _GL_NODES + 0.5 * (a + b)
            w = 0.5 * (b - a) * _GL_WEIGHTS * np.array([spec.density(v) for v in x])
            ezx = np.exp(np.outer(z, x))
            if prime:
                vals = x[None, :] * (ezx - 1.0)
            else:
                vals = ezx - 1.0 - np.outer(z, x)
            total += spec.intensity * vals @ w
    for x, m in spec.atoms:
        if prime:
            total += m * x * (np.exp(z * x) - 1.0)
        else:
            total += m * (np.exp(z * x) - 1.0 - z * x)
    return total


def cumulant(driver: LevyDriver, z):
    """Psi(z) for the one-dimensional driver: z^2/2 (if the Wiener part is
    included in X) plus the compensated-jump exponential term."""
    if driver.q != 1:
        raise ConfigError("cumulant is only defined for one-dimensional drivers")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = _jump_cumulant_terms(driver.jump_specs[0], z_arr, prime=False)
    if driver.include_wiener_in_X:
        out = out + 0.5 * z_arr ** 2
    return out if np.ndim(z) else float(out[0])


def cumulant_prime(driver: LevyDriver, z):
    """Psi'(z); always 0 at z = 0 (martingale normalization)."""
    if driver.q != 1:
        raise ConfigError("cumulant_prime is only defined for one-dimensional drivers")
    z_arr = np.atleast_1d(np.asarray(z, dtype=float))
    out = _jump_cumulant_terms(driver.jump_specs[0], z_arr, prime=True)
    if driver.include_wiener_in_X:
        out = out + z_arr
    return out if np.ndim(z) else float(out[0])


def sample_jump_events(spec: JumpMeasureSpec, T: float,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Exact compound Poisson events on (0, T]: sorted times and i.i.d. sizes."""
    n = rng.poisson(spec.intensity * T)
    times = np.sort(T * (1.0 - rng.uniform(size=n)))  # uniform on (0, T]
    sizes = spec.sample_sizes(rng, n)
    return times, sizes


def sample_path(driver: LevyDriver, T: float, dt: float, seed) -> DriverPath:
    """One driver realization, fully deterministic per seed.

    Jump coordinate k draws from substream key k, the Wiener block from
    key q, so coordinate streams are independent.
    """
    if T <= 0.0 or not 0.0 < dt <= T:
        raise ConfigError("need T > 0 and 0 < dt <= T")
    n_steps = int(np.ceil(T / dt - 1e-9))
    grid = np.minimum(dt * np.arange(n_steps + 1), T)
    grid[-1] = T
    events = tuple(sample_jump_events(spec, T, stream(seed, k))
                   for k, spec in enumerate(driver.jump_specs))
    rng_w = stream(seed, driver.q)
    incr = rng_w.standard_normal((n_steps, driver.p)) * np.sqrt(np.diff(grid))[:, None] \
        if driver.p > 0 else np.zeros((n_steps, 0))
    return DriverPath(time_grid=grid, wiener_increments=incr, jump_events=events,
                      compensator_drift=driver.compensator_drift())


def terminal_samples(spec: JumpMeasureSpec, T: float, n_paths: int,
                     seed) -> np.ndarray:
    """Vectorized X_T samples of one compensated jump coordinate (for
    martingale and variance checks over large ensembles)."""
    rng = np.random.default_rng(np.random.SeedSequence(list(seed_tuple(seed))))
    counts = rng.poisson(spec.intensity * T, size=n_paths)
    sizes = spec.sample_sizes(rng, int(counts.sum()))
    bounds = np.concatenate([[0], np.cumsum(counts)])
    sums = np.add.reduceat(np.concatenate([sizes, [0.0]]), bounds[:-1])
    sums[counts == 0] = 0.0
    return sums - spec.mean_jump() * T
