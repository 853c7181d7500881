"""Monte Carlo ensemble averages over Hamiltonians and random initial states."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dynamics import (
    DEFAULT_MAX_DIM,
    InitialState,
    Realization,
    SystemConfig,
    Topology,
    assemble_hamiltonian,
    build_initial_state,
    reduce_many,
)
from .linres import sigma_p_goe
from .measures import CPCurve, bloch_distance, concurrences, purities
from .rmt_core import HEISENBERG_TIME, orthonormal_pair

PURITY_SYMMETRY_TOL = 1e-9


class RealizationError(RuntimeError):
    """A failure inside one (hamiltonian, state) realization, with its provenance."""


def default_time_grid(n: int = 64, t_max: float = 3.0, n_geometric: int | None = None, t_first: float = 1e-2) -> np.ndarray:
    """``0``, then geometric steps up to ``0.5``, then linear up to ``t_max`` (units of tau_H)."""
    if n < 3:
        raise ValueError("need at least 3 grid points")
    n_geo = n // 2 if n_geometric is None else n_geometric
    t_knee = min(0.5, t_max / 2)
    geo = np.geomspace(t_first, t_knee, n_geo)
    lin = np.linspace(t_knee, t_max, n - n_geo)[1:]
    return np.concatenate([[0.0], geo, lin])


@dataclass(frozen=True)
class ExperimentPlan:
    config: SystemConfig
    state: InitialState
    times: tuple[float, ...]
    n_hamiltonians: int = 15
    n_states: int = 15
    seed: int = 0
    workers: int = 1
    max_dim: int = DEFAULT_MAX_DIM

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if not times or times[0] != 0.0:
            raise ValueError("time grid must start at 0")
        if any(b <= a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("time grid must be strictly increasing")
        if self.n_hamiltonians < 1 or self.n_states < 1:
            raise ValueError("n_hamiltonians and n_states must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.config.topology is Topology.ONE_QUBIT and self.state.theta != 0.0:
            raise ValueError("theta must be 0 for a single qubit")

    @property
    def n_samples(self) -> int:
        return self.n_hamiltonians * self.n_states

    def with_config(self, **changes) -> "ExperimentPlan":
        return replace(self, config=replace(self.config, **changes))


@dataclass
class TimeSeries:
    times: np.ndarray
    purity_mean: np.ndarray
    purity_stderr: np.ndarray
    concurrence_mean: np.ndarray | None
    concurrence_stderr: np.ndarray | None
    n_samples: int
    purity_samples: np.ndarray | None = field(default=None, repr=False)


def hamiltonian_rng(seed: int, h: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(h,)))


def state_rng(seed: int, h: int, s: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(h, s)))


def _central_factors(config: SystemConfig) -> list[str]:
    return ["q1"] if config.topology is Topology.ONE_QUBIT else ["q1", "q2"]


def _env_purities(states: np.ndarray, realization: Realization, central: list[str]) -> np.ndarray:
    layout = realization.layout
    ax = sorted(layout.axes(central))
    kdim = math.prod(layout.dims[a] for a in ax)
    psi = states.reshape((-1,) + layout.dims)
    m = np.moveaxis(psi, [a + 1 for a in ax], list(range(1, len(ax) + 1))).reshape(psi.shape[0], kdim, -1)
    rho_env = np.einsum("sai,saj->sij", m, m.conj())
    return np.einsum("sij,sij->s", rho_env.conj(), rho_env).real


def _stats(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = samples.mean(axis=0)
    if samples.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, samples.std(axis=0, ddof=1) / np.sqrt(samples.shape[0])


def _simulate_states(realization: Realization, states: np.ndarray, times_abs: Sequence[float], central, check_symmetry: bool, want_concurrence: bool):
    """Purity (and concurrence) of the central system for ``states`` at each time."""
    coeffs = realization.to_eigenbasis(states)
    n_s = states.shape[0]
    pur = np.empty((n_s, len(times_abs)))
    con = np.empty((n_s, len(times_abs))) if want_concurrence else None
    for k, t in enumerate(times_abs):
        if t == 0.0:
            psi = states
        else:
            psi = realization.from_eigenbasis(coeffs, t)
        rho = reduce_many(psi, realization.layout, central)
        pur[:, k] = purities(rho)
        if check_symmetry:
            env = _env_purities(psi, realization, central)
            bad = np.abs(env - pur[:, k]) > PURITY_SYMMETRY_TOL
            if np.any(bad):
                raise RealizationError(f"system and environment purities differ at t={t}: {pur[bad, k]} vs {env[bad]}")
        if con is not None:
            con[:, k] = concurrences(rho)
    # the initial state is a product with the environment
    if times_abs[0] == 0.0:
        pur[:, 0] = 1.0
    return pur, con


def _run_hamiltonian(plan: ExperimentPlan, h: int, check_symmetry: bool):
    config = plan.config
    try:
        real = assemble_hamiltonian(config, hamiltonian_rng(plan.seed, h), max_dim=plan.max_dim, seed=(plan.seed, h))
        states = np.stack([build_initial_state(plan.state, config, state_rng(plan.seed, h, s)) for s in range(plan.n_states)])
        times_abs = [t * HEISENBERG_TIME for t in plan.times]
        return _simulate_states(real, states, times_abs, _central_factors(config), check_symmetry, config.two_qubits)
    except RealizationError as exc:
        raise RealizationError(f"hamiltonian {h} (seed {plan.seed}): {exc}") from exc
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise RealizationError(f"hamiltonian {h} (seed {plan.seed}): {exc}") from exc


def _map_ordered(func, items, workers: int):
    if workers == 1:
        return [func(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))


def _uncoupled(config: SystemConfig) -> bool:
    lams = [config.lambda1] + ([config.lambda2] if config.topology in (Topology.SEPARATE, Topology.JOINT) else [])
    return all(lam == 0 for lam in lams)


def _uncoupled_series(plan: ExperimentPlan) -> TimeSeries:
    from .dynamics import two_qubit_state

    n_t = len(plan.times)
    con = None
    if plan.config.two_qubits:
        psi = two_qubit_state(plan.state)
        c0 = concurrences(np.outer(psi, psi.conj())[None])[0]
        con = np.full(n_t, c0)
    zeros = np.zeros(n_t)
    return TimeSeries(
        np.array(plan.times),
        np.ones(n_t),
        zeros.copy(),
        con,
        None if con is None else zeros.copy(),
        plan.n_samples,
        np.ones((plan.n_samples, n_t)),
    )


def run_average(plan: ExperimentPlan, check_symmetry: bool = True) -> TimeSeries:
    """Average central-system purity (and concurrence) over the plan's ensemble.

    Hamiltonians are processed on ``plan.workers`` threads; the reduction
    runs in a fixed (hamiltonian, state) order, so results do not depend on
    the number of workers.
    """
    if plan.config.layout().flat_dim > plan.max_dim:
        raise ValueError(f"flat dimension {plan.config.layout().flat_dim} exceeds the cap {plan.max_dim}")
    if _uncoupled(plan.config):
        # central system evolves by a local unitary: purity and concurrence are constant
        return _uncoupled_series(plan)
    results = _map_ordered(lambda h: _run_hamiltonian(plan, h, check_symmetry), range(plan.n_hamiltonians), plan.workers)
    pur = np.concatenate([r[0] for r in results], axis=0)
    pm, ps = _stats(pur)
    cm = cs = None
    if plan.config.two_qubits:
        cm, cs = _stats(np.concatenate([r[1] for r in results], axis=0))
    return TimeSeries(np.array(plan.times), pm, ps, cm, cs, pur.shape[0], pur)


def run_cp_curve(plan: ExperimentPlan, check_symmetry: bool = True) -> CPCurve:
    """Averaged concurrence against averaged purity for a Bell initial state."""
    if not plan.config.two_qubits:
        raise ValueError("CP curves need two qubits")
    if abs(plan.state.theta - np.pi / 4) > 1e-9:
        raise ValueError("CP curves are defined for a Bell initial state (theta = pi/4)")
    series = run_average(plan, check_symmetry)
    return CPCurve(series.times, series.purity_mean, series.concurrence_mean, series.purity_stderr, series.concurrence_stderr)


@dataclass
class UnitalityTable:
    ne: np.ndarray
    times: np.ndarray
    distance_mean: np.ndarray
    distance_stderr: np.ndarray
    n_realizations: int

    def slope(self) -> float:
        """Log-log slope of the time-averaged distance against ``N_e``."""
        y = self.distance_mean.mean(axis=1)
        return float(np.polyfit(np.log(self.ne), np.log(y), 1)[0])


def run_unitality(
    config: SystemConfig,
    ne_values: Sequence[int],
    t_targets: Sequence[float],
    n_realizations: int = 10,
    seed: int = 0,
    max_dim: int = DEFAULT_MAX_DIM,
) -> UnitalityTable:
    """Distance of qubit 1 from the maximally mixed state under a maximally mixed start.

    The joint state is ``(|0>|e0> + |1>|e1>)/sqrt 2`` with orthonormal random
    ``|e0>, |e1>``. Only qubit 1 and its environment are simulated: in the
    spectator topology qubit 2 is decoupled and does not influence qubit 1.
    """
    if config.topology is not Topology.SPECTATOR:
        raise ValueError("unitality runs use the spectator topology")
    t_targets = np.asarray(t_targets, dtype=float)
    means = np.empty((len(ne_values), len(t_targets)))
    errs = np.empty_like(means)
    for i, ne in enumerate(ne_values):
        sub = SystemConfig(Topology.ONE_QUBIT, beta=config.beta, ne=int(ne), delta1=config.delta1, lambda1=config.lambda1)
        dist = np.empty((n_realizations, len(t_targets)))
        for r in range(n_realizations):
            ss = np.random.SeedSequence(seed, spawn_key=(int(ne), r))
            rng_h, rng_s = (np.random.default_rng(s) for s in ss.spawn(2))
            real = assemble_hamiltonian(sub, rng_h, max_dim=max_dim, seed=(seed, int(ne), r))
            e0, e1 = orthonormal_pair(int(ne), rng_s)
            psi = (np.kron([1.0, 0.0], e0) + np.kron([0.0, 1.0], e1)) / np.sqrt(2.0)
            coeffs = real.to_eigenbasis(psi[None])
            for k, t in enumerate(t_targets):
                phi = real.from_eigenbasis(coeffs, t * HEISENBERG_TIME)
                rho = reduce_many(phi, real.layout, ["q1"])[0]
                dist[r, k] = bloch_distance(rho)
        means[i], errs[i] = _stats(dist)
    return UnitalityTable(np.asarray(ne_values), t_targets, means, errs, n_realizations)


@dataclass
class SelfAveragingReport:
    times: np.ndarray
    ne: np.ndarray
    dispersion: np.ndarray  # (n_ne, n_t): std of per-realization purity
    sigma_p: np.ndarray | None = None  # (n_t,): spread over initial states, GOE spectator
    sigma_p_prediction: np.ndarray | None = None
    sigma_p_stderr: np.ndarray | None = None

    def sigma_p_exponent(self, mask=None) -> float:
        """Fitted exponent of ``sigma_p`` against time."""
        if self.sigma_p is None:
            raise ValueError("no initial-state spread in this report")
        sel = self.times > 0 if mask is None else mask & (self.times > 0)
        return float(np.polyfit(np.log(self.times[sel]), np.log(self.sigma_p[sel]), 1)[0])


def gamma_grid(n: int) -> np.ndarray:
    """Stratified ``gamma`` values with ``sin(gamma)`` uniform on ``[-1, 1]``."""
    y = -1.0 + (2.0 * np.arange(n) + 1.0) / n
    return np.arcsin(y)


def _gamma_spread(plan: ExperimentPlan, n_gamma: int):
    """Std over the invariant gamma measure of the realization-averaged purity.

    Every gamma value is run with the same Hamiltonians and environment
    states, so realization noise common to all gammas cancels in the spread.
    The error estimate is a jackknife over Hamiltonians.
    """
    gammas = gamma_grid(n_gamma)
    config = plan.config
    times_abs = [t * HEISENBERG_TIME for t in plan.times]
    per_h = np.empty((plan.n_hamiltonians, n_gamma, len(plan.times)))
    for h in range(plan.n_hamiltonians):
        real = assemble_hamiltonian(config, hamiltonian_rng(plan.seed, h), max_dim=plan.max_dim, seed=(plan.seed, h))
        for g, gam in enumerate(gammas):
            st = replace(plan.state, gamma=float(gam))
            states = np.stack([build_initial_state(st, config, state_rng(plan.seed, h, s)) for s in range(plan.n_states)])
            pur, _ = _simulate_states(real, states, times_abs, _central_factors(config), False, False)
            per_h[h, g] = pur.mean(axis=0)
    spread = per_h.mean(axis=0).std(axis=0)
    n_h = plan.n_hamiltonians
    if n_h > 1:
        jk = np.array([np.delete(per_h, h, axis=0).mean(axis=0).std(axis=0) for h in range(n_h)])
        err = np.sqrt((n_h - 1) / n_h * ((jk - jk.mean(axis=0)) ** 2).sum(axis=0))
    else:
        err = np.zeros_like(spread)
    return spread, err


def run_self_averaging(plan: ExperimentPlan, ne_values: Sequence[int] | None = None, n_gamma: int = 16) -> SelfAveragingReport:
    """Dispersion of per-realization purity across the ensemble, per ``N_e``.

    For a GOE spectator with degenerate qubit the report also carries the
    spread of the averaged purity over initial states drawn from the
    invariant measure of ``gamma`` (``plan.state.theta`` fixed), together with
    the linear-response prediction for it.
    """
    ne_values = [plan.config.ne] if ne_values is None else list(ne_values)
    disp = []
    for ne in ne_values:
        series = run_average(plan.with_config(ne=int(ne)), check_symmetry=False)
        samples = series.purity_samples
        disp.append(samples.std(axis=0, ddof=1) if samples.shape[0] > 1 else np.zeros(len(plan.times)))
    report = SelfAveragingReport(np.array(plan.times), np.asarray(ne_values), np.array(disp))
    cfg = plan.config
    if cfg.beta == 1 and cfg.topology is Topology.SPECTATOR and cfg.delta1 == 0:
        spread, err = _gamma_spread(plan, n_gamma)
        report.sigma_p = spread
        report.sigma_p_stderr = err
        report.sigma_p_prediction = sigma_p_goe(report.times * HEISENBERG_TIME, cfg.lambda1, plan.state.theta)
    return report
