"""Linear-response (LR) and exponentiated (ELR) purity and concurrence predictions.

All times passed to the public prediction functions are in units of the
Heisenberg time; the helpers working with absolute times say so explicitly.

The averaged environment correlation is ``Cbar(s) = 1 + tau_H delta(s) - b2(s/tau_H)``.
Its delta part is always integrated analytically (half weight at the lower
endpoint of ``int_0``), the constant part in closed form, and only the form
factor part by adaptive quadrature.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from .dynamics import InitialState, SystemConfig, Topology
from .measures import werner_curve
from .rmt_core import HEISENBERG_TIME, form_factor_b2

FAST_THRESHOLD = 1e3
VALIDITY_GATE = 0.2
QUAD_EPSABS = 1e-8
QUAD_EPSREL = 1e-11


class Branch(str, enum.Enum):
    GENERAL = "general"
    DEGENERATE = "degenerate"
    FAST = "fast"


@dataclass(frozen=True)
class GeometricFactors:
    g_phi: float
    g_theta: float
    g1: float
    g2: float

    @classmethod
    def from_angles(cls, theta: float, phi: float) -> "GeometricFactors":
        g_theta = np.cos(theta) ** 4 + np.sin(theta) ** 4
        g_phi = (3.0 + np.cos(4.0 * phi)) / 4.0
        g1 = g_theta * (1 - g_phi) + g_phi * (1 - g_theta)
        g2 = 2 * (1 - g_theta) - g_phi * (1 - 2 * g_theta)
        return cls(float(g_phi), float(g_theta), float(g1), float(g2))


@dataclass
class LRPrediction:
    times: np.ndarray
    purity: np.ndarray
    branch: Branch
    config: dict = field(default_factory=dict)

    @property
    def valid(self) -> np.ndarray:
        """Mask of times where the decay is small enough for linear response."""
        return (1.0 - self.purity) <= VALIDITY_GATE


# ---------------------------------------------------------------- building blocks


def f_tau(t, tau_h: float = HEISENBERG_TIME):
    """``2 t tau_H + 2 t^3/(3 tau_H)`` below the Heisenberg time, ``2 t^2 + 2 tau_H^2/3`` above."""
    t_arr = np.asarray(t, dtype=float)
    out = np.where(
        t_arr < tau_h,
        2 * t_arr * tau_h + 2 * t_arr**3 / (3 * tau_h),
        2 * t_arr**2 + 2 * tau_h**2 / 3,
    )
    return float(out) if out.ndim == 0 else out


def correlation_C1(tau, delta: float):
    """Real part of the qubit correlation ``C_1``; identical for pure and mixed states."""
    return 1.0 + np.cos(delta * np.asarray(tau, dtype=float))


def correlation_S1(tau, delta: float, theta: float, phi: float):
    g = GeometricFactors.from_angles(theta, phi)
    gt, gp = g.g_theta, g.g_phi
    return 1 - gt - gp + 2 * gt * gp + (2 * gt - 1) * (1 - gp) * np.cos(delta * np.asarray(tau, dtype=float))


def correlation_S1prime(tau, delta: float, theta: float, phi: float = np.pi / 4, eta: float = 0.0, gamma: float | None = None):
    """``S'_1`` for the state with Schmidt angle ``theta`` and qubit-1 angles ``(phi, eta)``.

    Passing ``gamma`` uses the time-reversal adapted parametrization
    (``phi = pi/4``, ``eta = -gamma``).
    """
    if gamma is not None:
        phi, eta = np.pi / 4, -gamma
    g = GeometricFactors.from_angles(theta, phi)
    gt, gp = g.g_theta, g.g_phi
    arg = delta * np.asarray(tau, dtype=float) + 2 * eta
    return 1 - gt - gp + 2 * gt * gp + (2 * gt - 1) * (1 - gp) * np.cos(arg)


def cbar(t, beta: int, tau_h: float = HEISENBERG_TIME):
    """Regular part ``1 - b2(t/tau_H)`` of the averaged environment correlation."""
    return 1.0 - form_factor_b2(beta, np.asarray(t, dtype=float) / tau_h)


def _kernel_quad(func, t: float, upper: float, tau_h: float, delta: float = 0.0) -> float:
    """``int_0^upper (t - s) func(s) [cos(delta s)] ds``, split at the Heisenberg time.

    With ``delta > 0`` the cosine is handled as a quadrature weight.
    """
    pts = [0.0] + ([tau_h] if upper > tau_h else []) + [upper]
    kw = dict(weight="cos", wvar=delta) if delta > 0 else {}
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        val, _ = integrate.quad(lambda s: (t - s) * func(s), a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=500, **kw)
        total += val
    return total


def B2_integral(t, beta: int = 1, tau_h: float = HEISENBERG_TIME):
    """``2 int_0^t int_0^tau b2(tau'/tau_H) dtau' dtau`` by adaptive quadrature."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty_like(t_arr)
    b2 = lambda s: form_factor_b2(beta, s / tau_h)
    for i, ti in enumerate(t_arr):
        if ti < 0:
            raise ValueError("t must be non-negative")
        # GUE b2 vanishes beyond the Heisenberg time
        upper = min(ti, tau_h) if beta == 2 else ti
        out[i] = 2.0 * _kernel_quad(b2, ti, upper, tau_h)
    return float(out[0]) if np.ndim(t) == 0 else out


def _goe_g(x: float) -> float:
    """``int_0^x (x - u) b2_GOE(u) du`` in closed form."""
    if x <= 0:
        return 0.0
    if x < 0.05:
        # series of 1 - 2u + u ln(1 + 2u), integrated twice
        s = x**2 / 2 - x**3 / 3
        for k in range(1, 40):
            s += (-1) ** (k + 1) * 2.0**k / k * x ** (k + 3) / ((k + 2) * (k + 3))
        return s
    if x <= 1:
        lg = np.log1p(2 * x)
        return x**3 * lg / 6 - 17 * x**3 / 36 + 2 * x**2 / 3 - x * lg / 8 + x / 12 - lg / 24
    return (
        x**3 / 6 * np.log((2 * x + 1) / (2 * x - 1))
        - x**2 / 6
        + x / 2
        - 1.0 / 18
        + ((3 * x - 1) * np.log(2 * x - 1) - (3 * x + 1) * np.log(2 * x + 1)) / 24
    )


def B2_closed_form(t, beta: int = 1, tau_h: float = HEISENBERG_TIME):
    """Closed-form counterpart of :func:`B2_integral`."""
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if beta == 2:
        out = np.where(t_arr < tau_h, t_arr**2 - t_arr**3 / (3 * tau_h), t_arr * tau_h - tau_h**2 / 3)
    else:
        out = np.array([2 * tau_h**2 * _goe_g(ti / tau_h) for ti in t_arr])
    return float(out[0]) if np.ndim(t) == 0 else out


def _cos_square_integral(t: float, delta: float, eta: float) -> float:
    """``int_0^t int_0^t cos(delta (tau + tau') - 2 eta)`` by nested quadrature."""
    if t == 0:
        return 0.0
    if delta == 0:
        return t * t * np.cos(2 * eta)

    def inner(tau):
        v, _ = integrate.quad(lambda tp: np.cos(delta * (tau + tp) - 2 * eta), 0.0, t, epsabs=1e-12, epsrel=1e-12, limit=500)
        return v

    val, _ = integrate.quad(inner, 0.0, t, epsabs=1e-10, epsrel=1e-12, limit=500)
    return val


# ---------------------------------------------------------------- dispatch


@dataclass(frozen=True)
class _QubitTerm:
    lam: float
    delta: float
    phi: float
    eta: float
    tau_h: float


def _qubit_terms(config: SystemConfig, state: InitialState, tau_h: float, tau_h_prime: float | None) -> list[_QubitTerm]:
    phi1, eta1 = state.qubit1_angles
    terms = [_QubitTerm(config.lambda1, config.delta1, phi1, eta1, tau_h)]
    if config.topology in (Topology.SEPARATE, Topology.JOINT):
        tau2 = tau_h if config.topology is Topology.JOINT or tau_h_prime is None else tau_h_prime
        terms.append(_QubitTerm(config.lambda2, config.delta2, state.phi2, state.eta2, tau2))
    return terms


def _theta(config: SystemConfig, state: InitialState) -> float:
    return 0.0 if config.topology is Topology.ONE_QUBIT else state.theta


def _decay_general(times_abs, term: _QubitTerm, theta: float, beta: int, fast: bool) -> np.ndarray:
    """``1 - P`` contributed by one coupled qubit, quadrature path."""
    g = GeometricFactors.from_angles(theta, term.phi)
    lam2, d, th = term.lam**2, term.delta, term.tau_h
    out = np.zeros(len(times_abs))
    if lam2 == 0:
        return out
    b2 = lambda s: form_factor_b2(beta, s / th)
    for i, t in enumerate(times_abs):
        if t == 0:
            continue
        # delta part: int_0^tau tau_H delta(s) h(s) ds = tau_H h(0)/2, with h(0) = g1 + g2
        delta_part = 2.0 * th * t * (g.g1 + g.g2)
        # constant part of Cbar, exactly
        const = g.g1 * t * t / 2
        if not fast:
            const += g.g2 * (t * t / 2 if d == 0 else 2.0 * (np.sin(d * t / 2) / d) ** 2)
        upper = min(t, th) if beta == 2 else t
        b2_part = g.g1 * _kernel_quad(b2, t, upper, th)
        if not fast and g.g2 != 0:
            b2_part += g.g2 * _kernel_quad(b2, t, upper, th, delta=d)
        val = delta_part + 4.0 * (const - b2_part)
        if beta == 1:
            if fast:
                val += 2.0 * g.g1 * t * t
            else:
                val += 2.0 * (g.g1 * t * t - (1.0 - g.g2) * _cos_square_integral(t, d, term.eta))
        out[i] = lam2 * val
    return out


def lr_purity(
    config: SystemConfig,
    state: InitialState,
    times: Sequence[float],
    tau_h: float = HEISENBERG_TIME,
    tau_h_prime: float | None = None,
) -> LRPrediction:
    """Linear-response average purity on ``times`` (units of the Heisenberg time).

    Each coupled qubit contributes independently. A qubit whose splitting
    satisfies ``delta * tau_H >= FAST_THRESHOLD`` is treated with the fast-limit
    replacement (cosine set to one under the delta function, zero elsewhere).
    """
    times = np.asarray(times, dtype=float)
    theta = _theta(config, state)
    terms = _qubit_terms(config, state, tau_h, tau_h_prime)
    decay = np.zeros(len(times))
    kinds = set()
    for term in terms:
        fast = term.delta * term.tau_h >= FAST_THRESHOLD
        kinds.add(Branch.FAST if fast else Branch.DEGENERATE if term.delta == 0 else Branch.GENERAL)
        decay += _decay_general(times * term.tau_h, term, theta, config.beta, fast)
    branch = kinds.pop() if len(kinds) == 1 else Branch.GENERAL
    pred = LRPrediction(times, 1.0 - decay, branch, _echo(config, state, tau_h, tau_h_prime))
    if np.any(~pred.valid):
        warnings.warn("linear response evaluated beyond 1 - P = 0.2", stacklevel=2)
    return pred


def lr_purity_limit(
    config: SystemConfig,
    state: InitialState,
    times: Sequence[float],
    limit,
    tau_h: float = HEISENBERG_TIME,
    tau_h_prime: float | None = None,
) -> LRPrediction:
    """Closed-form degenerate or fast limit.

    ``limit`` is ``"degenerate"``/``"fast"`` (applied to every coupled qubit)
    or a sequence with one entry per coupled qubit, e.g. ``("degenerate",
    "fast")`` for a joint environment with one degenerate and one fast qubit.
    """
    times = np.asarray(times, dtype=float)
    theta = _theta(config, state)
    terms = _qubit_terms(config, state, tau_h, tau_h_prime)
    limits = [Branch(limit)] * len(terms) if isinstance(limit, (str, Branch)) else [Branch(x) for x in limit]
    if len(limits) != len(terms) or Branch.GENERAL in limits:
        raise ValueError(f"need one of degenerate/fast per coupled qubit, got {limit}")
    decay = np.zeros(len(times))
    for term, lim in zip(terms, limits):
        g = GeometricFactors.from_angles(theta, term.phi)
        t = times * term.tau_h
        f = f_tau(t, term.tau_h)
        if lim is Branch.DEGENERATE:
            if config.beta == 2:
                val = (2 - g.g_theta) * f
            else:
                b2 = B2_closed_form(t, 1, term.tau_h)
                chi = g.g1 - (1 - g.g2) * np.cos(2 * term.eta)
                val = 2 * (2 - g.g_theta) * (t * t + t * term.tau_h - b2) + 2 * chi * t * t
        else:
            if config.beta == 1:
                # same shape as f, with the GOE form factor in place of the GUE one
                f = 2 * t * term.tau_h + 2 * t * t - 2 * B2_closed_form(t, 1, term.tau_h)
            val = g.g1 * f + 2 * term.tau_h * g.g2 * t
            if config.beta == 1:
                val = val + 2 * g.g1 * t * t
        decay += term.lam**2 * np.asarray(val)
    branch = limits[0] if len(set(limits)) == 1 else Branch.GENERAL
    return LRPrediction(times, 1.0 - decay, branch, _echo(config, state, tau_h, tau_h_prime))


def _echo(config, state, tau_h, tau_h_prime) -> dict:
    return {
        "beta": config.beta,
        "topology": config.topology.value,
        "delta1": config.delta1,
        "delta2": config.delta2,
        "lambda1": config.lambda1,
        "lambda2": config.lambda2,
        "theta": state.theta,
        "phi": state.phi,
        "gamma": state.gamma,
        "eta": state.eta,
        "phi2": state.phi2,
        "eta2": state.eta2,
        "tau_h": tau_h,
        "tau_h_prime": tau_h_prime,
    }


# ---------------------------------------------------------------- derived predictions


def sigma_p_goe(t, lam: float, theta: float):
    """Spread of the GOE spectator purity over initial states at fixed concurrence.

    ``t`` is in the same time units as the coupling, i.e. absolute time.
    """
    return 4 * lam**2 * np.asarray(t, dtype=float) ** 2 * np.cos(2 * theta) ** 2 / (3 * np.sqrt(5.0))


def p_infinity(config: SystemConfig, state: InitialState) -> float:
    """Asymptotic purity assuming a totally depolarizing channel on each coupled qubit."""
    if config.topology is Topology.ONE_QUBIT:
        return 0.5
    if config.topology is Topology.SPECTATOR:
        return GeometricFactors.from_angles(state.theta, 0.0).g_theta / 2
    return 0.25


def exponentiate(p_lr, p_inf: float):
    """``P_inf + (1 - P_inf) exp(-(1 - P_LR)/(1 - P_inf))``."""
    if not 0.0 <= p_inf < 1.0:
        raise ValueError("p_inf must lie in [0, 1)")
    p_lr = np.asarray(p_lr, dtype=float)
    return p_inf + (1 - p_inf) * np.exp(-(1 - p_lr) / (1 - p_inf))


def concurrence_prediction(purity, mode: str = "LR"):
    """Concurrence of an initially maximally entangled pair.

    ``LR``: the linear-response purity itself. ``ELR``: the Werner curve
    evaluated on the (exponentiated) purity passed in.
    """
    purity = np.asarray(purity, dtype=float)
    mode = mode.upper()
    if mode == "LR":
        return purity.copy()
    if mode == "ELR":
        return werner_curve(np.maximum(purity, 0.25))
    raise ValueError(f"mode must be LR or ELR, got {mode}")
