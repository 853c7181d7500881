"""Gaussian ensembles, random states, spectral unfolding and form factors.

Conventions used throughout the package:

* Couplings are sampled with unit off-diagonal variance,
  ``<V_ij V_kl> = delta_il delta_jk + chi_GOE delta_ik delta_jl``.
* Environment spectra are unfolded to unit mean level spacing, so the
  Heisenberg time is ``2*pi`` in internal units.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HEISENBERG_TIME = 2.0 * np.pi


@dataclass(frozen=True)
class EnsembleSpec:
    """Which Gaussian ensemble to sample and at what dimension.

    ``beta=1`` is the GOE (time-reversal invariant), ``beta=2`` the GUE.
    """

    beta: int
    dim: int

    def __post_init__(self):
        if self.beta not in (1, 2):
            raise ValueError(f"beta must be 1 (GOE) or 2 (GUE), got {self.beta}")
        if int(self.dim) != self.dim or self.dim < 2:
            raise ValueError(f"dim must be an integer >= 2, got {self.dim}")

    @property
    def chi_goe(self) -> int:
        return 1 if self.beta == 1 else 0


@dataclass(frozen=True)
class UnfoldedSpectrum:
    eigenvalues: np.ndarray
    mean_spacing: float = 1.0
    heisenberg_time: float = HEISENBERG_TIME

    def bulk_spacing(self) -> float:
        """Mean nearest-neighbour spacing over the central half of the spectrum."""
        n = len(self.eigenvalues)
        lo, hi = n // 4, n - n // 4
        return float(np.mean(np.diff(self.eigenvalues[lo:hi])))


def sample_gaussian_ensemble(spec: EnsembleSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one matrix from the GOE or GUE.

    Off-diagonal elements have unit variance. The GOE diagonal has variance 2,
    the GUE diagonal variance 1. GOE samples are returned as real arrays.
    """
    n = spec.dim
    if spec.beta == 1:
        a = rng.standard_normal((n, n))
        return (a + a.T) / np.sqrt(2.0)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (a + a.conj().T) / 2.0


def sample_random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Unitarily invariant random pure state (normalized complex Gaussian vector)."""
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def orthonormal_pair(dim: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Two random states with <a|b> = 0 (Gram-Schmidt on two Gaussian vectors)."""
    if dim < 2:
        raise ValueError(f"dim must be >= 2, got {dim}")
    a = sample_random_state(dim, rng)
    b = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    b -= a * np.vdot(a, b)
    b /= np.linalg.norm(b)
    # second pass removes the residual overlap left by roundoff
    b -= a * np.vdot(a, b)
    b /= np.linalg.norm(b)
    return a, b


def _semicircle_cdf(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, -1.0, 1.0)
    return 0.5 + (x * np.sqrt(1.0 - x * x) + np.arcsin(x)) / np.pi


def unfold_spectrum(eigenvalues, spec: EnsembleSpec | None = None) -> UnfoldedSpectrum:
    """Map a Gaussian-ensemble spectrum to unit mean spacing.

    The semicircle centre and radius are estimated from the first two moments
    of the spectrum (``R^2 = 4 <(E - c)^2>``), so the result does not depend on
    the overall energy scale. Levels are mapped through ``N * F((E - c) / R)``
    with ``F`` the semicircle cumulative distribution.

    An :class:`UnfoldedSpectrum` passed in is returned unchanged.
    """
    if isinstance(eigenvalues, UnfoldedSpectrum):
        return eigenvalues
    e = np.sort(np.asarray(eigenvalues, dtype=float))
    if spec is not None and len(e) != spec.dim:
        raise ValueError(f"expected {spec.dim} eigenvalues, got {len(e)}")
    if e.size < 2 or e[-1] == e[0]:
        raise ValueError("cannot unfold a degenerate spectrum")
    centre = np.mean(e)
    radius = 2.0 * np.sqrt(np.mean((e - centre) ** 2))
    unfolded = len(e) * _semicircle_cdf((e - centre) / radius)
    return UnfoldedSpectrum(eigenvalues=unfolded)


def form_factor_b2(beta: int, t) -> np.ndarray | float:
    """Two-point form factor b2(t) with t in units of the Heisenberg time.

    GUE: ``1 - t`` up to t = 1, zero beyond.
    GOE: ``1 - 2t + t ln(1 + 2t)`` up to t = 1, ``-1 + t ln((2t+1)/(2t-1))`` beyond.
    """
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("form factor defined for t >= 0")
    if beta == 2:
        out = np.where(t_arr < 1.0, 1.0 - t_arr, 0.0)
    elif beta == 1:
        lo = np.minimum(t_arr, 1.0)
        hi = np.maximum(t_arr, 1.0)
        out = np.where(
            t_arr <= 1.0,
            1.0 - 2.0 * lo + lo * np.log1p(2.0 * lo),
            -1.0 + hi * np.log((2.0 * hi + 1.0) / (2.0 * hi - 1.0)),
        )
    else:
        raise ValueError(f"beta must be 1 or 2, got {beta}")
    return float(out) if out.ndim == 0 else out


def spectral_form_factor(levels: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Empirical ``(1/N) |sum_j exp(-i E_j t)|^2`` for one spectrum."""
    levels = np.asarray(levels, dtype=float)
    phases = np.exp(-1j * np.outer(np.asarray(t, dtype=float), levels))
    return np.abs(phases.sum(axis=1)) ** 2 / len(levels)
