"""
Quadrature rules on the reference triangle and on edges.
Weights are normalized to sum to one; callers scale by area or length.
"""

import numpy as np


def _symmetric_orbit(a, weight):
    """Three barycentric points (a, a, 1-2a) with equal weight"""
    b = 1.0 - 2.0 * a
    points = [(b, a, a), (a, b, a), (a, a, b)]
    return points, [weight] * 3


def triangle_rule(degree):
    """
    Symmetric quadrature on a triangle exact for polynomials up to degree.
    Returns barycentric points (q, 3) and weights (q,) summing to one.
    """
    if degree <= 1:
        return np.array([[1.0 / 3.0] * 3]), np.array([1.0])

    if degree == 2:
        points, weights = _symmetric_orbit(1.0 / 6.0, 1.0 / 3.0)
        return np.array(points), np.array(weights)

    if degree <= 4:
        p1, w1 = _symmetric_orbit(0.445948490915965, 0.223381589678011)
        p2, w2 = _symmetric_orbit(0.091576213509771, 0.109951743655322)
        return np.array(p1 + p2), np.array(w1 + w2)

    if degree == 5:
        p1, w1 = _symmetric_orbit(0.470142064105115, 0.132394152788506)
        p2, w2 = _symmetric_orbit(0.101286507323456, 0.125939180544827)
        points = [(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)] + p1 + p2
        weights = [0.225] + w1 + w2
        return np.array(points), np.array(weights)

    raise ValueError(f"No triangle rule of degree {degree} available (maximum 5)")


def edge_rule(points=3):
    """
    Gauss-Legendre rule on the unit interval.
    Returns nodes (q,) in [0, 1] and weights (q,) summing to one.
    """
    nodes, weights = np.polynomial.legendre.leggauss(points)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def rules_for_degree(degree):
    """Volume and edge rules for a DG space of polynomial degree p"""
    volume_degree = 4 if degree <= 1 else 5
    edge_points = max(3, degree + 2)
    return triangle_rule(volume_degree), edge_rule(edge_points)
