"""Purity, concurrence and related functionals of density matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]])
_YY = np.kron(SIGMA_Y, SIGMA_Y)


def purity(rho: np.ndarray) -> float:
    """``tr rho^2``."""
    rho = np.asarray(rho)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"density matrix trace is {tr}, expected 1")
    return float(np.real(np.vdot(rho, rho)))


def purities(rhos: np.ndarray) -> np.ndarray:
    """Purity of a stack of density matrices ``(S, d, d)``."""
    return np.einsum("sij,sij->s", rhos.conj(), rhos).real


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    The ``Lambda_i`` (square roots of the eigenvalues of
    ``rho (sy x sy) rho* (sy x sy)``, conjugation in the computational basis)
    are obtained as the singular values of ``W^T (sy x sy) W`` with
    ``rho = W W^dag``. This gives them directly instead of through a square
    root, so roundoff-level eigenvalues of rank-deficient states stay at
    roundoff level.
    """
    rho = np.asarray(rho)
    if rho.shape != (4, 4):
        raise ValueError(f"concurrence needs a 4x4 matrix, got {rho.shape}")
    return float(concurrences(rho[None])[0])


def concurrences(rhos: np.ndarray) -> np.ndarray:
    rhos = np.asarray(rhos)
    herm = (rhos + rhos.conj().swapaxes(-1, -2)) / 2
    p, v = np.linalg.eigh(herm)
    # roundoff can leave slightly negative eigenvalues
    w = v * np.sqrt(np.maximum(p, 0.0))[:, None, :]
    tau = w.swapaxes(-1, -2) @ _YY @ w
    lam = np.linalg.svd(tau, compute_uv=False)
    c = lam[:, 0] - lam[:, 1] - lam[:, 2] - lam[:, 3]
    return np.clip(c, 0.0, 1.0)


def _h(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, -x * np.log2(np.where(x > 0, x, 1.0)), 0.0)


def entropy_from_purity(p):
    """Von Neumann entropy (bits) of a qubit with purity ``p``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0.5 - 1e-12) or np.any(p_arr > 1.0 + 1e-12):
        raise ValueError("single-qubit purity must lie in [1/2, 1]")
    r = np.sqrt(np.clip(2.0 * p_arr - 1.0, 0.0, 1.0))
    s = _h((1 + r) / 2) + _h((1 - r) / 2)
    return float(s) if s.ndim == 0 else s


def werner_curve(p):
    """Concurrence of the Werner state with purity ``p``: ``max(0, (sqrt(12p-3)-1)/2)``."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < 0.25 - 1e-12):
        raise ValueError("purity of a two-qubit state is at least 1/4")
    c = np.maximum(0.0, (np.sqrt(np.maximum(12.0 * p_arr - 3.0, 0.0)) - 1.0) / 2.0)
    return float(c) if c.ndim == 0 else c


def werner_state(alpha: float) -> np.ndarray:
    """``alpha * 1/4 + (1 - alpha) |Bell><Bell|`` with ``|Bell> = (|00> + |11>)/sqrt 2``."""
    bell = np.array([1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0)
    return alpha * np.eye(4) / 4 + (1 - alpha) * np.outer(bell, bell)


def bloch_distance(rho: np.ndarray) -> float:
    """Euclidean length of the Bloch vector of a qubit state."""
    rho = np.asarray(rho)
    x = 2.0 * rho[0, 1].real
    y = -2.0 * rho[0, 1].imag
    z = (rho[0, 0] - rho[1, 1]).real
    return float(np.sqrt(x * x + y * y + z * z))


@dataclass
class CPCurve:
    """Concurrence against purity, parametrized by time."""

    times: np.ndarray
    purity: np.ndarray
    concurrence: np.ndarray
    purity_stderr: np.ndarray | None = None
    concurrence_stderr: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.purity = np.asarray(self.purity, dtype=float)
        self.concurrence = np.asarray(self.concurrence, dtype=float)
        if not (len(self.times) == len(self.purity) == len(self.concurrence)):
            raise ValueError("times, purity and concurrence must have equal length")
        self._resampled = None

    def monotone(self) -> tuple[np.ndarray, np.ndarray]:
        """Curve sorted by purity, with concurrence averaged over repeated purities."""
        if self._resampled is None:
            p, inv = np.unique(self.purity, return_inverse=True)
            c = np.bincount(inv, weights=self.concurrence) / np.bincount(inv)
            self._resampled = (p, c)
        return self._resampled


def cp_distance(curve: CPCurve) -> float:
    """Trapezoidal ``int_{P_min}^{1} |C(P) - C_W(P)| dP`` over the sampled curve.

    ``P_min`` is the smallest purity the curve reaches. If the curve does not
    reach ``P = 1`` the integral stops at its largest purity.
    """
    p, c = curve.monotone()
    if len(p) < 2:
        raise ValueError("curve needs at least two distinct purities")
    return float(np.trapezoid(np.abs(c - werner_curve(p)), p))
