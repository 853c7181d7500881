"""Exact dynamics of qubits coupled to random-matrix environments.

The full Hilbert space is ordered ``q1, q2, e, e'`` (absent factors dropped).
Terms of the Hamiltonian that act on disjoint sets of factors commute, so a
:class:`Realization` stores one dense eigendecomposition per such block and
evolves states block by block. This is exactly ``exp(-i H t)`` for the full
Hamiltonian, at the cost of the largest block instead of the full space.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rmt_core import (
    EnsembleSpec,
    UnfoldedSpectrum,
    sample_gaussian_ensemble,
    sample_random_state,
    unfold_spectrum,
)

DEFAULT_MAX_DIM = 8192
_RANGE_SLACK = 1e-9


class Topology(str, enum.Enum):
    ONE_QUBIT = "one_qubit"
    SPECTATOR = "spectator"
    SEPARATE = "separate"
    JOINT = "joint"


@dataclass(frozen=True)
class SystemConfig:
    """Coupling topology, level splittings, couplings and environment sizes.

    ``delta2``/``lambda2`` are ignored for the one-qubit topology, ``lambda2``
    is ignored for the spectator and ``ne_prime`` is only used by the
    separate-environment topology (it defaults to ``ne``).
    """

    topology: Topology
    beta: int = 2
    ne: int = 64
    ne_prime: int | None = None
    delta1: float = 0.0
    delta2: float = 0.0
    lambda1: float = 0.0
    lambda2: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "topology", Topology(self.topology))
        if self.beta not in (1, 2):
            raise ValueError(f"beta must be 1 or 2, got {self.beta}")
        if self.ne < 2:
            raise ValueError(f"ne must be >= 2, got {self.ne}")
        if self.ne_prime is not None and self.ne_prime < 2:
            raise ValueError(f"ne_prime must be >= 2, got {self.ne_prime}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("coupling strengths must be non-negative")

    @property
    def two_qubits(self) -> bool:
        return self.topology is not Topology.ONE_QUBIT

    @property
    def env_prime_dim(self) -> int:
        return self.ne if self.ne_prime is None else self.ne_prime

    @property
    def coupled_qubits(self) -> tuple[int, ...]:
        if self.topology in (Topology.ONE_QUBIT, Topology.SPECTATOR):
            return (1,)
        return (1, 2)

    def layout(self) -> "FactorLayout":
        if self.topology is Topology.ONE_QUBIT:
            return FactorLayout((("q1", 2), ("e", self.ne)))
        if self.topology is Topology.SEPARATE:
            return FactorLayout((("q1", 2), ("q2", 2), ("e", self.ne), ("e'", self.env_prime_dim)))
        return FactorLayout((("q1", 2), ("q2", 2), ("e", self.ne)))


@dataclass(frozen=True)
class FactorLayout:
    """Ordered tensor factors ``(name, dim)`` and flat/multi-index maps."""

    factors: tuple[tuple[str, int], ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(d for _, d in self.factors)

    @property
    def flat_dim(self) -> int:
        return math.prod(self.dims)

    def axes(self, names: Sequence[str]) -> list[int]:
        try:
            return [self.names.index(n) for n in names]
        except ValueError:
            raise ValueError(f"unknown factor in {list(names)}; layout has {self.names}") from None

    def sub(self, names: Sequence[str]) -> "FactorLayout":
        ax = sorted(self.axes(names))
        return FactorLayout(tuple(self.factors[i] for i in ax))

    def flat_index(self, multi) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.asarray(multi).T), self.dims)

    def multi_index(self, flat) -> np.ndarray:
        return np.stack(np.unravel_index(flat, self.dims), axis=-1)


def embed(op: np.ndarray, targets: Sequence[str], layout: FactorLayout) -> np.ndarray:
    """Extend ``op`` acting on ``targets`` (in the given order) to the full layout.

    The operator is tensored with the identity on the remaining factors and the
    axes are permuted into canonical order, so non-adjacent targets (e.g. qubit 2
    and the environment with qubit 1 in between) are handled by index mapping.
    """
    targets = list(targets)
    tax = layout.axes(targets)
    if len(set(tax)) != len(tax):
        raise ValueError("repeated target factor")
    dims = layout.dims
    tdim = math.prod(dims[i] for i in tax)
    if op.shape != (tdim, tdim):
        raise ValueError(f"operator shape {op.shape} does not match targets {targets} (dim {tdim})")
    rest = [i for i in range(len(dims)) if i not in tax]
    order = tax + rest
    full = np.kron(op, np.eye(math.prod(dims[i] for i in rest), dtype=op.dtype))
    n = len(dims)
    full = full.reshape([dims[i] for i in order] * 2)
    inv = [order.index(k) for k in range(n)]
    full = full.transpose(inv + [p + n for p in inv])
    return full.reshape(layout.flat_dim, layout.flat_dim)


def qubit_hamiltonian(delta: float) -> np.ndarray:
    """``(delta/2)|0><0| - (delta/2)|1><1|``."""
    return np.diag([delta / 2.0, -delta / 2.0])


@dataclass(frozen=True)
class Block:
    """A group of factors evolving under its own Hamiltonian."""

    factors: tuple[str, ...]
    hamiltonian: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray


@dataclass(frozen=True)
class Realization:
    """One member of the Hamiltonian ensemble, diagonalized once."""

    config: SystemConfig
    layout: FactorLayout
    blocks: tuple[Block, ...]
    spectra: dict[str, UnfoldedSpectrum] = field(default_factory=dict)
    seed: object = None

    def hamiltonian(self) -> np.ndarray:
        """Full-space ``H_lambda`` (dense; built on demand)."""
        return sum(embed(b.hamiltonian, b.factors, self.layout) for b in self.blocks)

    def reconstruct(self) -> np.ndarray:
        """``H_lambda`` rebuilt from the cached eigendecompositions."""
        parts = []
        for b in self.blocks:
            h = (b.vectors * b.energies) @ b.vectors.conj().T
            parts.append(embed(h, b.factors, self.layout))
        return sum(parts)

    def eigenvalues(self) -> np.ndarray:
        """All eigenvalues of ``H_lambda`` (sums over blocks), sorted."""
        return np.sort(self.energy_tensor().ravel())

    def energy_tensor(self) -> np.ndarray:
        total = np.zeros(self.layout.dims)
        n = len(self.layout.dims)
        for b in self.blocks:
            ax = self.layout.axes(b.factors)
            shape = [1] * n
            for a in ax:
                shape[a] = self.layout.dims[a]
            total = total + b.energies.reshape([self.layout.dims[a] for a in ax]).reshape(shape)
        return total

    def _apply(self, psi: np.ndarray, which: str) -> np.ndarray:
        # psi has shape (S, *dims)
        for b in self.blocks:
            ax = [a + 1 for a in self.layout.axes(b.factors)]
            front = list(range(len(ax)))
            moved = np.moveaxis(psi, ax, front)
            shape = moved.shape
            mat = b.vectors.conj().T if which == "to" else b.vectors
            out = mat @ moved.reshape(mat.shape[0], -1)
            psi = np.moveaxis(out.reshape(shape), front, ax)
        return psi

    def to_eigenbasis(self, states: np.ndarray) -> np.ndarray:
        """Coefficients of flat states ``(S, D)`` in the eigenbasis, shape ``(S, *dims)``."""
        states = np.atleast_2d(states)
        self._check_dim(states.shape[-1])
        return self._apply(states.reshape((-1,) + self.layout.dims).astype(complex), "to")

    def from_eigenbasis(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        """States at time ``t`` given eigenbasis coefficients, as flat ``(S, D)``."""
        phased = coeffs * np.exp(-1j * t * self.energy_tensor())
        return self._apply(phased, "from").reshape(coeffs.shape[0], -1)

    def _check_dim(self, d: int):
        if d != self.layout.flat_dim:
            raise ValueError(f"state dimension {d} does not match realization ({self.layout.flat_dim})")


def _eigh(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return np.linalg.eigh(h)


def _env_spectrum(dim: int, beta: int, rng: np.random.Generator) -> UnfoldedSpectrum:
    spec = EnsembleSpec(beta, dim)
    raw = np.linalg.eigvalsh(sample_gaussian_ensemble(spec, rng))
    return unfold_spectrum(raw, spec)


def _make_block(factors, h) -> Block:
    h = (h + h.conj().T) / 2.0
    e, v = _eigh(h)
    return Block(tuple(factors), h, e, v)


def assemble_hamiltonian(
    config: SystemConfig,
    rng: np.random.Generator,
    max_dim: int = DEFAULT_MAX_DIM,
    seed=None,
) -> Realization:
    """Sample environment spectra and couplings and diagonalize the result.

    Environment Hamiltonians enter through their unfolded eigenvalues (unit
    mean spacing); couplings are drawn from the same ensemble on the
    qubit-environment pair they connect, with unit off-diagonal variance.
    """
    layout = config.layout()
    if layout.flat_dim > max_dim:
        raise ValueError(f"flat dimension {layout.flat_dim} exceeds the cap {max_dim}")
    beta = config.beta
    ne = config.ne
    dtype = float if beta == 1 else complex

    spectra = {"e": _env_spectrum(ne, beta, rng)}
    if config.topology is Topology.SEPARATE:
        spectra["e'"] = _env_spectrum(config.env_prime_dim, beta, rng)
    v1 = sample_gaussian_ensemble(EnsembleSpec(beta, 2 * ne), rng)
    h1 = qubit_hamiltonian(config.delta1)
    h2 = qubit_hamiltonian(config.delta2)
    he = np.diag(spectra["e"].eigenvalues)

    def qubit_env(hq, henv, v, lam):
        nq, nenv = hq.shape[0], henv.shape[0]
        return (np.kron(hq, np.eye(nenv)) + np.kron(np.eye(nq), henv) + lam * v).astype(dtype)

    topo = config.topology
    if topo is Topology.ONE_QUBIT:
        blocks = [_make_block(("q1", "e"), qubit_env(h1, he, v1, config.lambda1))]
    elif topo is Topology.SPECTATOR:
        blocks = [
            _make_block(("q1", "e"), qubit_env(h1, he, v1, config.lambda1)),
            _make_block(("q2",), h2.astype(dtype)),
        ]
    elif topo is Topology.SEPARATE:
        nep = config.env_prime_dim
        v2 = sample_gaussian_ensemble(EnsembleSpec(beta, 2 * nep), rng)
        hep = np.diag(spectra["e'"].eigenvalues)
        blocks = [
            _make_block(("q1", "e"), qubit_env(h1, he, v1, config.lambda1)),
            _make_block(("q2", "e'"), qubit_env(h2, hep, v2, config.lambda2)),
        ]
    else:
        v2 = sample_gaussian_ensemble(EnsembleSpec(beta, 2 * ne), rng)
        sub = layout.sub(("q1", "q2", "e"))
        h = (
            embed(h1.astype(dtype), ["q1"], sub)
            + embed(h2.astype(dtype), ["q2"], sub)
            + embed(he.astype(dtype), ["e"], sub)
            + config.lambda1 * embed(v1, ["q1", "e"], sub)
            + config.lambda2 * embed(v2, ["q2", "e"], sub)
        )
        blocks = [_make_block(("q1", "q2", "e"), h)]
    return Realization(config, layout, tuple(blocks), spectra, seed)


def evolve(state: np.ndarray, realization: Realization, t: float) -> np.ndarray:
    """``exp(-i H_lambda t) |state>`` for a flat state vector."""
    state = np.asarray(state)
    if state.ndim != 1:
        raise ValueError("evolve expects a single flat state vector")
    coeffs = realization.to_eigenbasis(state[None, :])
    return realization.from_eigenbasis(coeffs, t)[0]


def reduce(state: np.ndarray, layout: FactorLayout, keep: Sequence[str]) -> np.ndarray:
    """Reduced density matrix on ``keep`` (factors taken in canonical order)."""
    keep = list(keep)
    if not keep or len(set(keep)) != len(keep):
        raise ValueError(f"invalid factor subset {keep}")
    ax = sorted(layout.axes(keep))
    psi = np.asarray(state).reshape(layout.dims)
    kdim = math.prod(layout.dims[a] for a in ax)
    m = np.moveaxis(psi, ax, list(range(len(ax)))).reshape(kdim, -1)
    rho = m @ m.conj().T
    return (rho + rho.conj().T) / 2.0


def reduce_many(states: np.ndarray, layout: FactorLayout, keep: Sequence[str]) -> np.ndarray:
    """Vectorized :func:`reduce` for flat states of shape ``(S, D)``."""
    ax = sorted(layout.axes(keep))
    kdim = math.prod(layout.dims[a] for a in ax)
    psi = states.reshape((-1,) + layout.dims)
    m = np.moveaxis(psi, [a + 1 for a in ax], list(range(1, len(ax) + 1))).reshape(psi.shape[0], kdim, -1)
    rho = m @ m.conj().transpose(0, 2, 1)
    return (rho + rho.conj().transpose(0, 2, 1)) / 2.0


@dataclass(frozen=True)
class InitialState:
    """Central-system state parameters.

    ``theta`` is the Schmidt angle of the qubit pair, ``phi``/``eta`` place the
    Schmidt basis of qubit 1 relative to the eigenbasis of its Hamiltonian
    (``|a> = cos(phi)|0> + exp(-i eta) sin(phi)|1>``) and ``phi2``/``eta2`` do the
    same for qubit 2. Setting ``gamma`` selects the time-reversal adapted form
    ``(|0> + exp(i gamma)|1>)/sqrt(2)`` for qubit 1 (``phi = pi/4``, ``eta = -gamma``).
    """

    theta: float = 0.0
    phi: float = 0.0
    gamma: float | None = None
    eta: float = 0.0
    phi2: float = 0.0
    eta2: float = 0.0

    def __post_init__(self):
        _check_range("theta", self.theta, 0.0, np.pi / 4)
        _check_range("phi", self.phi, 0.0, np.pi / 2)
        _check_range("phi2", self.phi2, 0.0, np.pi / 2)
        if self.gamma is not None:
            _check_range("gamma", self.gamma, -np.pi / 2, np.pi / 2)

    @property
    def qubit1_angles(self) -> tuple[float, float]:
        """Effective ``(phi, eta)`` of qubit 1."""
        if self.gamma is not None:
            return np.pi / 4, -self.gamma
        return self.phi, self.eta


def _check_range(name, value, lo, hi):
    if not (lo - _RANGE_SLACK <= value <= hi + _RANGE_SLACK):
        raise ValueError(f"{name}={value} outside [{lo}, {hi}]")


def _schmidt_vectors(phi: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    ph = np.exp(-1j * eta)
    a = np.array([np.cos(phi), ph * np.sin(phi)])
    b = np.array([np.sin(phi), -ph * np.cos(phi)])
    return a, b


def two_qubit_state(params: InitialState) -> np.ndarray:
    """``cos(theta)|a1 a2> + sin(theta)|b1 b2>`` in the computational basis."""
    a1, b1 = _schmidt_vectors(*params.qubit1_angles)
    a2, b2 = _schmidt_vectors(params.phi2, params.eta2)
    b2 = -b2
    th = params.theta
    return np.cos(th) * np.kron(a1, a2) + np.sin(th) * np.kron(b1, b2)


def one_qubit_state(params: InitialState) -> np.ndarray:
    a, _ = _schmidt_vectors(*params.qubit1_angles)
    return a


def build_initial_state(params: InitialState, config: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Separable initial state ``|psi_c> |psi_e> (|psi_e'>)`` with random environment states."""
    if config.topology is Topology.ONE_QUBIT:
        if params.theta != 0.0:
            raise ValueError("theta must be 0 for a single qubit")
        central = one_qubit_state(params)
    else:
        central = two_qubit_state(params)
    state = np.kron(central, sample_random_state(config.ne, rng))
    if config.topology is Topology.SEPARATE:
        state = np.kron(state, sample_random_state(config.env_prime_dim, rng))
    return state


def schmidt_angle(state: np.ndarray) -> tuple[float, tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Schmidt angle ``theta`` in ``[0, pi/4]`` and the local bases.

    Returns ``(theta, (u0, u1), (v0, v1))`` with
    ``state = cos(theta)|u0 v0> + sin(theta)|u1 v1>``.
    """
    state = np.asarray(state, dtype=complex)
    if state.shape != (4,):
        raise ValueError("expected a 4-component two-qubit state")
    if abs(np.linalg.norm(state) - 1.0) > 1e-10:
        raise ValueError("state is not normalized")
    u, s, vh = np.linalg.svd(state.reshape(2, 2))
    theta = float(np.arctan2(s[1], s[0]))
    return theta, (u[:, 0], u[:, 1]), (vh[0], vh[1])
