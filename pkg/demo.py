#!/usr/bin/env python3
"""
sensipod Demo - A walkthrough of the reduction pipeline on the desk profile.
Solves the nominal problem, builds POD bases and their sensitivities, and
compares every reduced variant with the full solution at one target value.
"""

import logging

import numpy as np

from app.bench.harness import l2_time_space_error
from app.config import Config
from app.reduction.enrichment import baseline, expand, extrapolate, principal_angles, saim
from app.reduction.pod import (
    MassFactor,
    SnapshotKind,
    build_snapshots,
    compute_pod,
    project_model,
    solve_reduced_ocp,
)
from app.reduction.sensitivity import snapshot_sensitivity, solve_fd, svd_sensitivities
from app.solver.ocp import OCPSetup, optimize
from app.utils.helpers import format_seconds
from app.utils.logger import setup_logger


def main():
    """Main entry point for the demo application"""
    # Set up logging
    logger = setup_logger()
    logger.info("Starting sensipod Demo")

    # Initialize config
    config = Config(profile="desk")
    options = config.optimizer_options()
    setup = OCPSetup.from_config(config)
    mu0 = setup.epsilon
    target = 1.0 / 110.0
    mu1, mu2 = config.get("sweep", "saim_anchors")
    logger.info(f"Mesh: {setup.space.mesh.to_dict()}, N={setup.n_steps}, eps={mu0:.4g}")

    # Full solves at the nominal value, the target and the anchors
    solutions = {mu: optimize(setup.with_epsilon(mu), **options) for mu in (mu0, target, mu1, mu2)}
    nominal = solutions[mu0]
    reference = solutions[target]
    logger.info(
        f"Nominal solve: {nominal.stats.iterations} Newton iterations in "
        f"{format_seconds(nominal.stats.wall_time)}"
    )

    # Bases and sensitivities
    kind = SnapshotKind.YP
    factor = MassFactor.from_space(setup.space)
    basis = compute_pod(build_snapshots(nominal.y, nominal.p, kind, mu0), factor, gamma=1e-2)
    logger.info(f"{kind.label} basis: rank {basis.rank}, energy {basis.energy:.6f}")

    triple = solve_fd(setup.with_epsilon, mu0, **options)
    derivative = svd_sensitivities(basis, snapshot_sensitivity(triple, kind))
    logger.info(f"lambda_mu: {np.array2string(derivative.lambda_mu, precision=3)}")

    anchors = [
        compute_pod(build_snapshots(solutions[mu].y, solutions[mu].p, kind, mu), factor, rank=basis.rank)
        for mu in (mu1, mu2)
    ]
    angles = principal_angles(anchors[0], anchors[1], factor)
    logger.info(f"Largest principal angle between anchors: {np.degrees(angles.max()):.3f} deg")

    # Reduced solves at the target
    mass = setup.system.mass
    candidates = {
        "BPOD": baseline(basis, mu0),
        "ExtPOD": extrapolate(basis, derivative, target - mu0, mass=mass),
        "ExpPOD": expand(basis, derivative, mass=mass),
        "SAIM": saim(anchors[0], anchors[1], mu1, mu2, target, mass=mass),
    }
    logger.info(f"\nReduced solves at 1/eps = {1.0 / target:.0f}:")
    for name, enriched in candidates.items():
        reduced = solve_reduced_ocp(project_model(setup.with_epsilon(target), enriched), **options)
        state_err = l2_time_space_error(reduced.y, reference.y, mass)
        control_err = l2_time_space_error(reduced.u, reference.u, mass)
        logger.info(
            f"- {name:>6} (l={enriched.size:2d}): state {state_err:.4e}, "
            f"control {control_err:.4e}, {format_seconds(reduced.stats.wall_time)}"
        )

    logging.getLogger("sensipod").info("sensipod Demo completed")


if __name__ == "__main__":
    main()
