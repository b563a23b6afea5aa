from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp

from app.discretization.fields import (
    DGSpace,
    l2_error,
    l2_project,
    rotating_velocity,
    velocity_from_name,
    zero_velocity,
)
from app.discretization.quadrature import edge_rule, rules_for_degree, triangle_rule
from app.discretization.sipg import (
    DGConfig,
    assemble_mass,
    assemble_penalty,
    assemble_sipg,
    assemble_sipg_epsilon_derivative,
    default_sigma,
)
from app.errors import ConfigurationError
from app.models.mesh import build_uniform_mesh, classify_edges
from app.solver.ocp import OCPSetup


@pytest.mark.parametrize("degree", [1, 2, 4, 5])
def test_triangle_rule_weights(degree):
    points, weights = triangle_rule(degree)
    assert np.isclose(weights.sum(), 1.0)
    assert np.allclose(points.sum(axis=1), 1.0)


@pytest.mark.parametrize("degree", [4, 5])
def test_triangle_rule_exactness(degree):
    points, weights = triangle_rule(degree)
    x, y = points[:, 1], points[:, 2]
    # Averages over the reference triangle
    assert np.isclose(weights @ x ** 2, 1.0 / 6.0, atol=1e-12)
    assert np.isclose(weights @ (x ** 2 * y ** 2), 1.0 / 90.0, atol=1e-12)


def test_edge_rule_exactness():
    nodes, weights = edge_rule(3)
    assert np.isclose(weights.sum(), 1.0)
    assert np.isclose(weights @ nodes ** 5, 1.0 / 6.0)


def test_rules_for_degree():
    (vol_points, _), (edge_nodes, _) = rules_for_degree(1)
    assert len(vol_points) == 6 and len(edge_nodes) == 3
    (vol_points, _), (edge_nodes, _) = rules_for_degree(2)
    assert len(vol_points) == 7 and len(edge_nodes) == 4


def test_default_sigma():
    assert default_sigma(0) == 1.0
    assert default_sigma(1) == 6.0
    assert default_sigma(2) == 18.0


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_mass_matrix(degree):
    space = DGSpace(build_uniform_mesh(3), degree)
    mass = assemble_mass(space)
    ones = space.interpolate_constant(1.0)
    assert np.isclose(ones @ (mass @ ones), 1.0)
    assert abs(mass - mass.T).max() < 1e-15


def test_constant_form_value():
    # r |Omega| + inflow flux 1/2 + boundary penalty sigma eps per boundary edge
    n = 4
    space = DGSpace(build_uniform_mesh(n), degree=1)
    cfg = DGConfig(epsilon=1e-2, beta=rotating_velocity, reaction=1.0)
    ones = space.interpolate_constant(1.0)
    value = ones @ (assemble_sipg(space, cfg) @ ones)
    assert value == pytest.approx(1.0 + 0.5 + 6.0 * 1e-2 * 4 * n, rel=1e-12)


def test_symmetric_without_convection():
    space = DGSpace(build_uniform_mesh(3), degree=1)
    A = assemble_sipg(space, DGConfig(epsilon=0.3, reaction=2.0))
    assert abs(A - A.T).max() < 1e-12


def test_transpose_reverses_flow():
    space = DGSpace(build_uniform_mesh(4), degree=1)
    forward = DGConfig(epsilon=1e-2, beta=rotating_velocity, reaction=1.0)
    backward = DGConfig(epsilon=1e-2, beta=lambda x, y: tuple(-c for c in rotating_velocity(x, y)),
                        reaction=1.0)
    difference = assemble_sipg(space, forward).T - assemble_sipg(space, backward)
    assert abs(difference).max() < 1e-12


def test_diffusion_operator_is_positive_definite():
    space = DGSpace(build_uniform_mesh(2), degree=1)
    A = assemble_sipg(space, DGConfig(epsilon=1.0)).toarray()
    assert np.linalg.eigvalsh(0.5 * (A + A.T)).min() > 0.0


def test_epsilon_derivative_matches_difference_quotient():
    space = DGSpace(build_uniform_mesh(3), degree=1)
    cfg = DGConfig(epsilon=1e-2, beta=rotating_velocity, reaction=1.0)
    h = 1e-3
    quotient = (assemble_sipg(space, cfg.with_epsilon(1e-2 + h))
                - assemble_sipg(space, cfg.with_epsilon(1e-2 - h))) / (2.0 * h)
    D = assemble_sipg_epsilon_derivative(space, cfg)
    assert abs(quotient - D).max() < 1e-9


def test_volume_only_derivative():
    space = DGSpace(build_uniform_mesh(2), degree=1)
    cfg = DGConfig(epsilon=1e-2, beta=rotating_velocity, reaction=1.0)
    D = assemble_sipg_epsilon_derivative(space, cfg, volume_only=True)
    ones = space.interpolate_constant(1.0)
    assert np.allclose(D @ ones, 0.0)
    full = assemble_sipg_epsilon_derivative(space, cfg)
    assert abs(full - D).max() > 0.0


def test_penalty_on_constants():
    n = 3
    space = DGSpace(build_uniform_mesh(n), degree=1)
    cfg = DGConfig(epsilon=0.5)
    P = assemble_penalty(space, cfg)
    ones = space.interpolate_constant(1.0)
    assert ones @ (P @ ones) == pytest.approx(6.0 * 0.5 * 4 * n)
    assert sp.issparse(P)


@pytest.mark.parametrize("kwargs", [
    {"epsilon": 0.0},
    {"epsilon": -1.0},
    {"epsilon": 1.0, "reaction": -1.0},
    {"epsilon": 1.0, "sigma": 0.0},
])
def test_invalid_coefficients(kwargs):
    space = DGSpace(build_uniform_mesh(1), degree=1)
    with pytest.raises(ConfigurationError):
        assemble_sipg(space, DGConfig(**kwargs))


def test_velocity_from_name():
    assert velocity_from_name("rotating") is rotating_velocity
    assert velocity_from_name("zero") is zero_velocity
    bx, by = velocity_from_name("constant:2,-1")(np.zeros(3), np.zeros(3))
    assert np.all(bx == 2.0) and np.all(by == -1.0)
    with pytest.raises(ValueError):
        velocity_from_name("spiral")


@pytest.mark.parametrize("degree", [1, 2])
def test_projection_reproduces_polynomials(degree):
    space = DGSpace(build_uniform_mesh(2), degree)

    def g(x, y, t):
        return 1.0 + 2.0 * x - y if degree == 1 else x * y + y ** 2

    assert l2_error(space, l2_project(space, g), g) < 1e-12



def test_rotating_velocity_is_divergence_free(rng):
    x, y = rng.uniform(0.0, 1.0, (2, 20))
    h = 1e-4
    dbx = (rotating_velocity(x + h, y)[0] - rotating_velocity(x - h, y)[0]) / (2.0 * h)
    dby = (rotating_velocity(x, y + h)[1] - rotating_velocity(x, y - h)[1]) / (2.0 * h)
    np.testing.assert_allclose(dbx + dby, 0.0, atol=1e-10)


def test_penalty_enters_linearly():
    space = DGSpace(build_uniform_mesh(3), degree=1)
    cfg = DGConfig(epsilon=1e-2, beta=rotating_velocity, reaction=1.0, sigma=6.0)
    difference = assemble_sipg(space, replace(cfg, sigma=12.0)) - assemble_sipg(space, cfg)
    assert abs(difference - assemble_penalty(space, cfg)).max() < 1e-12


def test_epsilon_derivative_ignores_flow_and_reaction():
    space = DGSpace(build_uniform_mesh(3), degree=1)
    D = assemble_sipg_epsilon_derivative(space, DGConfig(epsilon=1e-2, beta=rotating_velocity, reaction=1.0))
    plain = assemble_sipg_epsilon_derivative(space, DGConfig(epsilon=0.5))
    assert abs(D - D.T).max() < 1e-13
    assert abs(D - plain).max() < 1e-13


def test_assembly_uses_the_given_classification():
    space = DGSpace(build_uniform_mesh(3), degree=1)
    cfg = DGConfig(epsilon=1e-2, beta=rotating_velocity, reaction=1.0)
    classes = classify_edges(space.mesh, rotating_velocity)
    given = assemble_sipg(space, cfg, classes)
    assert abs(given - assemble_sipg(space, cfg)).max() == 0.0
    setup = OCPSetup(space, cfg, n_steps=2)
    assert abs(setup.system.operator - given).max() == 0.0


def test_projection_error_is_second_order():
    def g(x, y, t):
        return np.sin(np.pi * x) * np.sin(np.pi * y)

    errors = []
    for n in (8, 16, 32):
        space = DGSpace(build_uniform_mesh(n), degree=1)
        errors.append(l2_error(space, l2_project(space, g), g))
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((orders > 1.8) & (orders < 2.2)), orders

@pytest.mark.slow
def test_spatial_convergence_order():
    eps, r = 1.0, 1.0

    def q(x, y):
        return x * (1.0 - x) * y * (1.0 - y)

    def exact(x, y, t):
        return t * q(x, y)

    def source(x, y, t):
        bx, by = rotating_velocity(x, y)
        qx = (1.0 - 2.0 * x) * y * (1.0 - y)
        qy = x * (1.0 - x) * (1.0 - 2.0 * y)
        laplacian = -2.0 * y * (1.0 - y) - 2.0 * x * (1.0 - x)
        return q(x, y) + t * (-eps * laplacian + bx * qx + by * qy + r * q(x, y))

    errors = []
    for n in (8, 16, 32):
        space = DGSpace(build_uniform_mesh(n), degree=1)
        setup = OCPSetup(space, DGConfig(epsilon=eps, beta=rotating_velocity, reaction=r),
                         n_steps=n, source=source, initial=0.0)
        system = setup.system
        levels = system.solve_state(np.zeros(system.shape))
        errors.append(l2_error(space, levels[-1], exact, 1.0))

    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((orders > 1.8) & (orders < 2.2)), orders
