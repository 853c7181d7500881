"""Independent reference implementations used only by the tests.

Each one takes a different numerical route from the package code so that
agreement between the two is meaningful.
"""

import numpy as np
from scipy import linalg

TAU_H = 2 * np.pi


def b2_goe(u):
    u = np.asarray(u, dtype=float)
    lo = np.minimum(u, 1.0)
    hi = np.maximum(u, 1.0)
    return np.where(u <= 1, 1 - 2 * lo + lo * np.log1p(2 * lo), -1 + hi * np.log((2 * hi + 1) / (2 * hi - 1)))


def b2_gue(u):
    u = np.asarray(u, dtype=float)
    return np.where(u < 1, 1 - u, 0.0)


def simpson_triangle(func, t, n=2000):
    """``int_0^t dtau int_0^tau func(s) ds`` with composite Simpson in both directions."""
    if n % 2:
        n += 1
    taus = np.linspace(0.0, t, n + 1)
    inner = np.empty_like(taus)
    for i, tau in enumerate(taus):
        m = max(2, 2 * ((i + 1) // 2))
        s = np.linspace(0.0, tau, m + 1)
        inner[i] = _simpson(func(s), s)
    return _simpson(inner, taus)


def _simpson(y, x):
    h = (x[-1] - x[0]) / (len(x) - 1)
    if h == 0:
        return 0.0
    return h / 3 * (y[0] + y[-1] + 4 * y[1:-1:2].sum() + 2 * y[2:-1:2].sum())


def B2_simpson(t, beta=1, tau_h=TAU_H, n=2000):
    b2 = b2_goe if beta == 1 else b2_gue
    return 2 * simpson_triangle(lambda s: b2(s / tau_h), t, n)


def concurrence_rho_rtilde(rho):
    """Concurrence from the eigenvalues of ``rho (sy x sy) rho* (sy x sy)``."""
    yy = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
    ev = np.linalg.eigvals(rho @ yy @ rho.conj() @ yy).real
    lam = np.sort(np.sqrt(np.clip(ev, 0, None)))[::-1]
    return max(0.0, lam[0] - lam[1] - lam[2] - lam[3])


def partial_trace_loops(psi, dims, keep):
    """Reduced density matrix by explicit index summation."""
    dims = list(dims)
    psi = np.asarray(psi).reshape(dims)
    keep = sorted(keep)
    kd = [dims[i] for i in keep]
    out = np.zeros((int(np.prod(kd)), int(np.prod(kd))), dtype=complex)
    for idx in np.ndindex(*dims):
        for jdx in np.ndindex(*dims):
            if any(idx[a] != jdx[a] for a in range(len(dims)) if a not in keep):
                continue
            r = np.ravel_multi_index([idx[a] for a in keep], kd)
            c = np.ravel_multi_index([jdx[a] for a in keep], kd)
            out[r, c] += psi[idx] * np.conj(psi[jdx])
    return out


def evolve_expm(h, psi, t):
    return linalg.expm(-1j * t * h) @ psi


def werner_purity(alpha):
    return 1 - 1.5 * alpha + 0.75 * alpha**2


def f_tau_oracle(t, tau_h=TAU_H):
    """``4 int_0^t int_0^tau [tau_H delta + 1 - b2_GUE]`` with the delta term integrated by hand."""
    return 4 * (t * tau_h / 2 + simpson_triangle(lambda s: 1 - b2_gue(s / tau_h), t, 800))
