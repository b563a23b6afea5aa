"""
Parameter sweep harness.

Builds baseline POD bases and their sensitivities at the nominal diffusion
coefficient, then for every grid value solves the full problem as the
benchmark and each requested reduced variant, recording errors, times and
convergence. A list of fixed ranks turns the sweep into an error-vs-rank study.
"""

import math
import logging
import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from app.discretization.fields import DGSpace, rotating_velocity
from app.discretization.sipg import DGConfig
from app.models.mesh import build_uniform_mesh
from app.models.sweep import SweepRecord
from app.models.trajectory import Trajectory
from app.reduction.enrichment import EnrichmentMethod, baseline, expand, extrapolate, saim
from app.reduction.pod import (
    MassFactor,
    SnapshotKind,
    build_snapshots,
    compute_pod,
    project_model,
    solve_reduced_ocp,
)
from app.reduction.sensitivity import snapshot_sensitivity, solve_cse, solve_fd, svd_sensitivities
from app.solver.ocp import OCPSetup, gradient_check, optimize
from app.utils.helpers import Stopwatch, format_seconds

logger = logging.getLogger("sensipod.bench.harness")


def l2_time_space_error(a, b, mass, k=None):
    """Trapezoidal-in-time, M-weighted-in-space L2(0,T;L2) norm of a - b"""
    a_levels = a.values if isinstance(a, Trajectory) else np.asarray(a)
    b_levels = b.values if isinstance(b, Trajectory) else np.asarray(b)
    if a_levels.shape != b_levels.shape:
        raise ValueError(f"Trajectory shapes differ: {a_levels.shape} vs {b_levels.shape}")
    if k is None:
        if not isinstance(a, Trajectory):
            raise ValueError("Time step required for plain arrays")
        k = a.k

    diff = a_levels - b_levels
    energies = np.sum(diff * np.asarray((mass @ diff.T).T), axis=1)
    weights = np.full(len(energies), k)
    weights[0] = weights[-1] = 0.5 * k
    return float(np.sqrt(max(np.sum(weights * energies), 0.0)))


def default_setup(subdivisions=40, time_steps=60, epsilon=1.0e-2):
    """Rotating-flow test problem: f = y_d = 1, y_0 = 0, r = 1, alpha = 1, T = 1"""
    space = DGSpace(build_uniform_mesh(subdivisions), degree=1)
    dg = DGConfig(epsilon=epsilon, beta=rotating_velocity, reaction=1.0)
    return OCPSetup(space, dg, alpha=1.0, final_time=1.0, n_steps=time_steps,
                    source=1.0, target=1.0, initial=0.0)


class SweepHarness:
    """Runs one sweep; full solutions are cached per epsilon"""

    def __init__(self, config, base_setup=None, optimizer_options=None):
        """Initialize from a SweepConfig and an optional setup at the nominal epsilon"""
        self.config = config.validate()
        self.options = dict(optimizer_options or {})
        if base_setup is None:
            base_setup = default_setup(config.subdivisions, config.time_steps, config.epsilon)
        elif base_setup.epsilon != config.epsilon:
            base_setup = base_setup.with_epsilon(config.epsilon)
        self.base_setup = base_setup

        self.methods = [EnrichmentMethod.parse(m) for m in config.methods]
        self.kinds = [SnapshotKind.parse(k) for k in config.kinds]
        self.rules = config.rank_rules()
        self.mass_factor = None
        # Keyed by (kind, index into the rank axis)
        self.bases = {}
        self.sensitivities = {}
        self.sensitivity_seconds = {}
        self.anchor_bases = {}
        self.preparation_errors = {}
        self.gradient_errors = None

        self._lock = threading.Lock()
        self._setups = {self._key(config.epsilon): base_setup}
        self._solutions = {}

    @staticmethod
    def _key(epsilon):
        return round(float(epsilon), 14)

    def setup(self, epsilon):
        """Setup at a diffusion coefficient, shared across cells"""
        key = self._key(epsilon)
        with self._lock:
            if key not in self._setups:
                self._setups[key] = self.base_setup.with_epsilon(epsilon)
            return self._setups[key]

    def full_solution(self, epsilon):
        """Full-order optimum at epsilon, computed once"""
        key = self._key(epsilon)
        with self._lock:
            entry = self._solutions.setdefault(key, {"lock": threading.Lock(), "solution": None})
        with entry["lock"]:
            if entry["solution"] is None:
                logger.info(f"Full solve at eps={epsilon:.6g}")
                entry["solution"] = optimize(self.setup(epsilon), **self.options)
                if not entry["solution"].converged:
                    logger.warning(f"Full solve at eps={epsilon:.6g} did not converge")
            return entry["solution"]

    @property
    def mass(self):
        return self.base_setup.system.mass

    @property
    def cells(self):
        """(method, kind, rank-axis index) of every cell at one grid value"""
        return [
            (method, kind, index)
            for method in self.methods for kind in self.kinds for index in range(len(self.rules))
        ]

    def rank_of(self, kind, index):
        """Baseline rank of a cell, or the requested rank if its basis is missing"""
        basis = self.bases.get((kind, index))
        if basis is not None:
            return basis.rank
        return self.rules[index][0] or 0

    def _fail(self, stage, keys, error):
        for key in keys:
            self.preparation_errors[(stage,) + key] = error

    def prepare(self):
        """Baseline bases, their sensitivities and the SAIM anchor bases"""
        cfg = self.config
        mu0 = cfg.epsilon
        nominal = self.full_solution(mu0)
        self.mass_factor = MassFactor.from_space(self.base_setup.space)

        if cfg.gradient_checks:
            self.gradient_errors = gradient_check(
                self.base_setup, directions=cfg.gradient_checks, seed=cfg.seed
            )
            logger.info(
                f"Gradient check at eps={mu0:.6g}: max relative error "
                f"{self.gradient_errors.max():.3e} over {cfg.gradient_checks} directions"
            )

        for kind in self.kinds:
            snapshots = build_snapshots(nominal.y, nominal.p, kind, mu0)
            for index, (rank, gamma) in enumerate(self.rules):
                try:
                    self.bases[kind, index] = compute_pod(snapshots, self.mass_factor, rank=rank, gamma=gamma)
                except Exception as e:
                    logger.error(f"POD basis failed for {kind.label} (rule {rank or gamma})", exc_info=True)
                    self._fail("basis", [(kind, index)], e)

        needs_sensitivity = {EnrichmentMethod.EXTPOD, EnrichmentMethod.EXPPOD} & set(self.methods)
        if needs_sensitivity:
            try:
                with Stopwatch() as watch:
                    triple = self.trajectory_sensitivity()
            except Exception as e:
                logger.error("Trajectory sensitivities failed", exc_info=True)
                self._fail("sensitivity", list(self.bases), e)
            else:
                logger.info(
                    f"{cfg.sensitivity_method} trajectory sensitivities in {format_seconds(watch.elapsed)}"
                )
                for key, basis in self.bases.items():
                    try:
                        with Stopwatch() as svd_watch:
                            W_mu = snapshot_sensitivity(triple, key[0])
                            self.sensitivities[key] = svd_sensitivities(basis, W_mu)
                    except Exception as e:
                        logger.error(f"SVD sensitivities failed for {key[0].label}", exc_info=True)
                        self._fail("sensitivity", [key], e)
                    else:
                        self.sensitivity_seconds[key] = watch.elapsed + svd_watch.elapsed

        if EnrichmentMethod.SAIM in self.methods:
            mu1, mu2 = cfg.saim_anchors
            try:
                anchors = [self.full_solution(mu) for mu in (mu1, mu2)]
            except Exception as e:
                logger.error("Full solves at the SAIM anchors failed", exc_info=True)
                self._fail("saim", list(self.bases), e)
            else:
                for key, basis in self.bases.items():
                    try:
                        self.anchor_bases[key] = tuple(
                            compute_pod(build_snapshots(sol.y, sol.p, key[0], mu), self.mass_factor,
                                        rank=basis.rank)
                            for sol, mu in zip(anchors, (mu1, mu2))
                        )
                    except Exception as e:
                        logger.error(f"SAIM anchor bases failed for {key[0].label}", exc_info=True)
                        self._fail("saim", [key], e)

    def trajectory_sensitivity(self):
        """Sensitivity triple at the nominal epsilon by the configured route"""
        cfg = self.config
        if cfg.sensitivity_method == "CSE":
            return solve_cse(self.base_setup, self.full_solution(cfg.epsilon), **self.options)
        return solve_fd(self.setup, cfg.epsilon, cfg.delta_mu, solver=self.full_solution)

    def _raise_preparation_error(self, stage, key):
        if (stage,) + key in self.preparation_errors:
            raise self.preparation_errors[(stage,) + key]

    def build_basis(self, method, kind, epsilon, index=0):
        """Enriched basis of one cell"""
        key = (kind, index)
        self._raise_preparation_error("basis", key)
        basis = self.bases[key]
        mu0 = self.config.epsilon
        if method is EnrichmentMethod.BPOD:
            return baseline(basis, mu0)
        if method in (EnrichmentMethod.EXTPOD, EnrichmentMethod.EXPPOD):
            self._raise_preparation_error("sensitivity", key)
            psi_mu = self.sensitivities[key]
            if method is EnrichmentMethod.EXTPOD:
                return extrapolate(basis, psi_mu, epsilon - mu0, mass=self.mass)
            return expand(basis, psi_mu, mass=self.mass)
        self._raise_preparation_error("saim", key)
        first, second = self.anchor_bases[key]
        mu1, mu2 = self.config.saim_anchors
        return saim(first, second, mu1, mu2, epsilon, mass=self.mass)

    def run_cell(self, method, kind, index, epsilon, full):
        """Reduced solve of one (method, kind, rank) cell against the benchmark"""
        rank = self.rank_of(kind, index)
        record = SweepRecord(epsilon=epsilon, method=method.value, kind=kind.value, l=rank,
                             rank=rank, t_full=full.stats.wall_time, converged=full.converged)
        if method in (EnrichmentMethod.EXTPOD, EnrichmentMethod.EXPPOD):
            record.sensitivity_seconds = self.sensitivity_seconds.get((kind, index), math.nan)
        name = f"{method.value}/{kind.label}/l={rank} at eps={epsilon:.6g}"
        try:
            enriched = self.build_basis(method, kind, epsilon, index)
            record.l = enriched.size
            model = project_model(self.setup(epsilon), enriched)
            reduced = solve_reduced_ocp(model, **self.options)
            record.state_err = l2_time_space_error(reduced.y, full.y, self.mass)
            record.control_err = l2_time_space_error(reduced.u, full.u, self.mass)
            record.t_reduced = reduced.stats.wall_time
            record.converged = full.converged and reduced.stats.converged
        except Exception as e:
            logger.error(f"Cell {name} failed", exc_info=True)
            record.error = f"{type(e).__name__}: {e}"
            record.converged = False
        else:
            if not record.converged:
                which = "full" if not full.converged else "reduced"
                logger.warning(f"Cell {name}: {which} solve did not converge")
        return record

    def run_point(self, epsilon):
        """All cells at one grid value"""
        try:
            full = self.full_solution(epsilon)
        except Exception as e:
            logger.error(f"Full solve at eps={epsilon:.6g} failed", exc_info=True)
            records = []
            for method, kind, index in self.cells:
                rank = self.rank_of(kind, index)
                records.append(SweepRecord(epsilon=epsilon, method=method.value, kind=kind.value,
                                           l=rank, rank=rank, converged=False,
                                           error=f"{type(e).__name__}: {e}"))
            return records
        return [self.run_cell(method, kind, index, epsilon, full) for method, kind, index in self.cells]

    def run(self):
        """Run the whole sweep; records are sorted by (epsilon, method, kind, rank)"""
        with Stopwatch() as watch:
            self.prepare()
            with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
                batches = list(pool.map(self.run_point, self.config.grid))
        records = sorted((r for batch in batches for r in batch), key=SweepRecord.sort_key)
        failed = sum(r.failed for r in records)
        unconverged = sum(not r.converged and not r.failed for r in records)
        logger.info(
            f"Sweep finished in {format_seconds(watch.elapsed)}: {len(records)} cells, "
            f"{failed} failed, {unconverged} not converged"
        )
        return records

    def spectrum(self):
        """Per snapshot kind: rows (index, sigma^2, lambda_mu) of the largest baseline basis"""
        tables = {}
        for kind in self.kinds:
            keys = [key for key in self.bases if key[0] is kind]
            if not keys:
                continue
            key = max(keys, key=lambda k: self.bases[k].rank)
            s2 = np.square(self.bases[key].singular_values)
            lam = np.full(len(s2), np.nan)
            if key in self.sensitivities:
                values = self.sensitivities[key].lambda_mu
                lam[:len(values)] = values
            tables[kind.value] = np.column_stack([np.arange(1, len(s2) + 1), s2, lam])
        return tables


def run_sweep(config, base_setup=None, optimizer_options=None):
    """Run a parameter sweep and return its sorted records"""
    return SweepHarness(config, base_setup, optimizer_options).run()
