"""Built-in model instances: the jump-driven Hull-White/Vasicek forward
curve model with its invariant two-dimensional foliation, the sine-graph
counterexample driven by a unit-jump Poisson process, and small affine /
cylinder / non-invariant fixtures used as positive and negative tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hilbert, levy, spde
from .errors import ConfigError
from .hilbert import GridSpace, HVector, Subspace
from .manifold import Manifold, ManifoldChart
from .levy import JumpMeasureSpec, LevyDriver
from .spde import Coefficients, IdentitySemigroup, SPDEProblem, ShiftSemigroup


@dataclass(frozen=True, eq=False)
class VasicekParams:
    """Parameters of the jump-driven Hull-White extension of the Vasicek model.

    Defaults are implementation choices for desk-scale runs, not values
    from any reference; the jump support [0, 0.02] puts the single jump
    coordinate in the small-jump class.
    """

    rho: float = 0.05
    c: float = 0.3
    lam: float = 5.0
    support: tuple[float, float] = (0.0, 0.02)
    xi_max: float = 10.0
    n: int = 64

    def __post_init__(self):
        if self.rho == 0.0:
            raise ConfigError("volatility scale rho must be nonzero")
        if self.lam <= 0.0 or self.n < 2 or self.xi_max <= 0.0:
            raise ConfigError("invalid Vasicek parameters")
        a, b = self.support
        if not a <= 0.0 < b:
            raise ConfigError("jump support must contain [0, eps] for some eps > 0")


def nelson_siegel(b0: float = 0.05, b1: float = -0.02, b2: float = 0.01,
                  tau: float = 2.0):
    """Smooth default initial forward curve, with its derivative."""

    def h0(xi):
        xi = np.asarray(xi, dtype=float)
        return b0 + b1 * np.exp(-xi / tau) + b2 * (xi / tau) * np.exp(-xi / tau)

    def h0_prime(xi):
        xi = np.asarray(xi, dtype=float)
        return (-b1 / tau) * np.exp(-xi / tau) + (b2 / tau) * (1.0 - xi / tau) \
            * np.exp(-xi / tau)

    return h0, h0_prime


def _gamma_integral(params: VasicekParams, xi):
    """Antiderivative of the volatility curve: int_0^xi rho e^{-c s} ds."""
    xi = np.asarray(xi, dtype=float)
    if params.c != 0.0:
        return params.rho * (1.0 - np.exp(-params.c * xi)) / params.c
    return params.rho * xi


def vasicek_driver(params: VasicekParams) -> LevyDriver:
    spec = levy.uniform_jumps(params.support[0], params.support[1], params.lam)
    return LevyDriver(p=1, jump_specs=(spec,), include_wiener_in_X=True)


def hjm_drift(params: VasicekParams, driver: LevyDriver,
              space: GridSpace | None = None) -> HVector:
    """No-arbitrage drift -gamma(xi) Psi'(-Gamma(xi)) on the grid, with the
    volatility antiderivative Gamma in closed form."""
    if space is None:
        space = uniform_forward_grid(params)
    xi = space.grid
    gamma = params.rho * np.exp(-params.c * xi)
    psi_prime = levy.cumulant_prime(driver, -_gamma_integral(params, xi))
    return space.vector(-gamma * psi_prime)


def uniform_forward_grid(params: VasicekParams) -> GridSpace:
    # uniform nodes keep whole-spacing shifts exact for the shift semigroup
    return hilbert.trapezoid_grid(np.linspace(0.0, params.xi_max, params.n),
                                  label="forward-curve grid")


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """A fully assembled instance plus the sampling plans the verdict layer uses."""

    name: str
    problem: SPDEProblem
    manifold: Manifold
    decompose_subspace: Subspace
    analytic_common: Subspace | None
    flatness_plan: tuple[tuple[int, np.ndarray], ...]
    tangency_plan: tuple[tuple[int, np.ndarray], ...]
    starts: tuple[tuple[int, np.ndarray], ...]
    decompose_extent: float
    expected: dict = field(default_factory=dict)


def build_hjmm_vasicek(params: VasicekParams | None = None,
                       h0_pair=None) -> ModelBundle:
    """Forward-curve model with its constructed invariant foliation.

    The chart phi(t, z) = Phi(t) + z e_c traces the deterministic mild flow
    Phi in the leaf direction and the span of e_c(xi) = exp(-c xi) in the
    stochastic direction; the shift semigroup scales e_c (S_s e_c =
    e^{-c s} e_c), so the jump- and Wiener-driven parts never leave that
    span.  Phi is evaluated in closed form: the exact shift of the initial
    curve plus the increment of Psi(-Gamma(.)), whose xi-derivative is the
    no-arbitrage drift.
    """
    params = params or VasicekParams()
    h0_fn, h0_prime = h0_pair or nelson_siegel()
    space = uniform_forward_grid(params)
    driver = vasicek_driver(params)
    xi = space.grid
    gamma_vec = params.rho * np.exp(-params.c * xi)
    e_c = np.exp(-params.c * xi)

    def psi_bar(u):
        return levy.cumulant(driver, -_gamma_integral(params, u))

    def alpha_curve(u):
        u = np.asarray(u, dtype=float)
        return -(params.rho * np.exp(-params.c * u)) \
            * levy.cumulant_prime(driver, -_gamma_integral(params, u))

    psi_bar_0 = psi_bar(xi)

    def phi(y):
        t, z = y
        return h0_fn(xi + t) + psi_bar(xi + t) - psi_bar_0 + z * e_c

    def jacobian(y):
        t, _z = y
        dt_col = h0_prime(xi + t) + alpha_curve(xi + t)
        return np.column_stack([dt_col, e_c])

    chart = ManifoldChart(lower=(0.0, -5.0), upper=(3.0, 5.0),
                          phi=phi, jacobian=jacobian, fd_step=1e-6)
    manifold = Manifold(charts=(chart,), space=space, dim=2, name="hjmm-vasicek")

    alpha_vec = hjm_drift(params, driver, space).values
    coeffs = Coefficients(
        alpha=spde.constant_coefficient(alpha_vec),
        sigma=(spde.constant_coefficient(gamma_vec),),
        gamma=(spde.constant_coefficient(gamma_vec),),
    )
    problem = SPDEProblem(space=space, semigroup=ShiftSemigroup(space),
                          coefficients=coeffs, driver=driver)
    common = hilbert.orthonormalize([space.vector(e_c)])

    flatness_plan = tuple((0, np.array(y)) for y in
                          [(0.2, 0.0), (0.5, 0.1), (0.9, -0.1), (1.3, 0.2),
                           (1.7, -0.2), (2.4, 0.05)])
    t_grid = np.linspace(0.15, 2.6, 10)
    z_grid = np.linspace(-0.3, 0.3, 6)
    tangency_plan = tuple((0, np.array([t, z])) for t in t_grid for z in z_grid)
    starts = ((0, np.array([0.0, 0.0])), (0, np.array([0.0, 0.2])))
    return ModelBundle(
        name="hjmm-vasicek", problem=problem, manifold=manifold,
        decompose_subspace=common, analytic_common=common,
        flatness_plan=flatness_plan, tangency_plan=tangency_plan, starts=starts,
        decompose_extent=0.5,
        expected={"flatness": 1, "classification": "Foliation",
                  "small_jump_indices": [1]},
    )


def _sine_bundle(name: str, jump_spec: JumpMeasureSpec, expected: dict,
                 decompose_line: bool = True) -> ModelBundle:
    space = hilbert.unit_grid(2, label="plane")
    driver = LevyDriver(p=0, jump_specs=(jump_spec,))
    gamma = np.array([1.0, 0.0])
    # the jump coordinate is compensated to a martingale, so reproducing the
    # uncompensated Poisson dynamics requires the cancelling drift lam*E[x]*gamma
    drift = -driver.compensator_drift()[0] * gamma
    coeffs = Coefficients(alpha=spde.constant_coefficient(drift), sigma=(),
                          gamma=(spde.constant_coefficient(gamma),))
    problem = SPDEProblem(space=space, semigroup=IdentitySemigroup(),
                          coefficients=coeffs, driver=driver)

    def phi(y):
        return np.array([y[0], np.sin(2.0 * np.pi * y[0])])

    def jacobian(y):
        return np.array([[1.0], [2.0 * np.pi * np.cos(2.0 * np.pi * y[0])]])

    chart = ManifoldChart(lower=(-6.5,), upper=(6.5,), phi=phi, jacobian=jacobian)
    manifold = Manifold(charts=(chart,), space=space, dim=1, name=name)
    # the flat direction candidate: the jump line for the negative fixture,
    # the trivial subspace for the invariant (but nowhere flat) graph
    line = hilbert.orthonormalize([space.vector(gamma)]) if decompose_line \
        else hilbert.zero_subspace(space)
    plan = tuple((0, np.array([x])) for x in np.linspace(-1.4, 1.4, 8))
    starts = ((0, np.array([0.0])), (0, np.array([0.3])))
    return ModelBundle(
        name=name, problem=problem, manifold=manifold,
        decompose_subspace=line, analytic_common=None,
        flatness_plan=plan, tangency_plan=plan, starts=starts,
        decompose_extent=0.5, expected=expected,
    )


def build_sine_counterexample(lam: float = 1.0) -> ModelBundle:
    """Sine graph in the plane, driven by unit Poisson jumps: invariant, but
    flat nowhere, and outside the small-jump class."""
    return _sine_bundle(
        "sine-counterexample", levy.atom_jumps([(1.0, lam)]),
        expected={"flatness": 0, "small_jump_indices": [],
                  "jump_closure": "pass"},
        decompose_line=False,
    )


def _affine_fixture() -> ModelBundle:
    space = hilbert.unit_grid(5, label="R5")
    g0 = np.array([1.0, 0.0, 2.0, -1.0, 0.5])
    l1 = np.array([1.0, 1.0, 0.0, 0.0, 0.0]) / np.sqrt(2.0)
    l2 = np.array([0.0, 0.0, 1.0, -1.0, 1.0]) / np.sqrt(3.0)

    def phi(y):
        return g0 + y[0] * l1 + y[1] * l2

    def jacobian(_y):
        return np.column_stack([l1, l2])

    chart = ManifoldChart(lower=(-3.0, -3.0), upper=(3.0, 3.0),
                          phi=phi, jacobian=jacobian)
    manifold = Manifold(charts=(chart,), space=space, dim=2, name="affine")
    driver = LevyDriver(p=0, jump_specs=(levy.uniform_jumps(0.0, 0.3, 2.0),
                                         levy.uniform_jumps(0.0, 0.3, 2.0)))
    coeffs = Coefficients(
        alpha=spde.constant_coefficient(np.zeros(5)),
        sigma=(),
        gamma=(spde.constant_coefficient(l1), spde.constant_coefficient(l2)),
    )
    problem = SPDEProblem(space=space, semigroup=IdentitySemigroup(),
                          coefficients=coeffs, driver=driver)
    common = hilbert.orthonormalize([space.vector(l1), space.vector(l2)])
    plan = tuple((0, np.array(y)) for y in
                 [(0.0, 0.0), (1.0, -1.0), (-1.5, 0.5), (0.5, 1.5)])
    return ModelBundle(
        name="fixture:affine", problem=problem, manifold=manifold,
        decompose_subspace=common, analytic_common=common,
        flatness_plan=plan, tangency_plan=plan,
        starts=((0, np.array([0.0, 0.0])),), decompose_extent=1.0,
        expected={"flatness": 2, "classification": "AffineSpace",
                  "small_jump_indices": [1, 2]},
    )


def _cylinder_fixture() -> ModelBundle:
    space = hilbert.unit_grid(3, label="R3")

    def phi(y):
        return np.array([np.cos(y[0]), np.sin(y[0]), y[1]])

    def jacobian(y):
        return np.array([[-np.sin(y[0]), 0.0], [np.cos(y[0]), 0.0], [0.0, 1.0]])

    chart = ManifoldChart(lower=(-3.0, -2.5), upper=(3.0, 2.5),
                          phi=phi, jacobian=jacobian)
    manifold = Manifold(charts=(chart,), space=space, dim=2, name="cylinder")
    axis = np.array([0.0, 0.0, 1.0])
    driver = LevyDriver(p=0, jump_specs=(levy.uniform_jumps(0.0, 0.4, 3.0),))
    coeffs = Coefficients(alpha=spde.constant_coefficient(np.zeros(3)), sigma=(),
                          gamma=(spde.constant_coefficient(axis),))
    problem = SPDEProblem(space=space, semigroup=IdentitySemigroup(),
                          coefficients=coeffs, driver=driver)
    common = hilbert.orthonormalize([space.vector(axis)])
    plan = tuple((0, np.array(y)) for y in
                 [(0.0, 0.0), (1.2, 0.5), (-1.2, -0.5), (2.4, 1.0),
                  (-2.4, 1.5), (0.6, -1.0), (1.8, -1.5), (-0.6, 0.8)])
    return ModelBundle(
        name="fixture:cylinder", problem=problem, manifold=manifold,
        decompose_subspace=common, analytic_common=common,
        flatness_plan=plan, tangency_plan=plan,
        starts=((0, np.array([0.0, 0.0])),), decompose_extent=1.0,
        expected={"flatness": 1, "classification": "Foliation",
                  "small_jump_indices": [1]},
    )


def _sine_noninvariant_fixture() -> ModelBundle:
    # sub-period uniform jumps shift the curve off its own graph
    bundle = _sine_bundle(
        "fixture:sine-noninvariant", levy.uniform_jumps(0.0, 0.5, 5.0),
        expected={"jump_closure": "fail", "path_invariance": "fail",
                  "small_jump_indices": [1]},
    )
    return bundle


def build_fixtures() -> list[ModelBundle]:
    return [_affine_fixture(), _cylinder_fixture(), _sine_noninvariant_fixture()]


MODEL_NAMES = ("hjmm-vasicek", "sine-counterexample", "fixture:affine",
               "fixture:cylinder", "fixture:sine-noninvariant")


def get_model(name: str, params: dict | None = None) -> ModelBundle:
    params = dict(params or {})
    if name == "hjmm-vasicek":
        allowed = {"rho", "c", "lam", "support", "xi_max", "n"}
        unknown = set(params) - allowed
        if unknown:
            raise ConfigError(f"unknown model parameter: {sorted(unknown)[0]}")
        if "support" in params:
            params["support"] = tuple(params["support"])
        return build_hjmm_vasicek(VasicekParams(**params))
    if name == "sine-counterexample":
        unknown = set(params) - {"lam"}
        if unknown:
            raise ConfigError(f"unknown model parameter: {sorted(unknown)[0]}")
        return build_sine_counterexample(**params)
    if name.startswith("fixture:"):
        if params:
            raise ConfigError("fixtures take no parameters")
        for bundle in build_fixtures():
            if bundle.name == name:
                return bundle
        raise ConfigError(f"unknown fixture: {name}")
    raise ConfigError(f"unknown model: {name}")
