import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import evolve_expm, partial_trace_loops
from rmtdeco.dynamics import (
    FactorLayout,
    InitialState,
    SystemConfig,
    Topology,
    assemble_hamiltonian,
    build_initial_state,
    embed,
    evolve,
    qubit_hamiltonian,
    reduce,
    reduce_many,
    schmidt_angle,
    two_qubit_state,
)
from rmtdeco.measures import concurrence, purity
from rmtdeco.rmt_core import HEISENBERG_TIME, sample_random_state

BELL = np.array([1, 0, 0, 1]) / np.sqrt(2)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_qubit_hamiltonian():
    assert np.array_equal(qubit_hamiltonian(0.0), np.zeros((2, 2)))
    assert sorted(np.linalg.eigvalsh(qubit_hamiltonian(8.0))) == [-4.0, 4.0]
    for d in (-3.0, 0.5, 17.0):
        h = qubit_hamiltonian(d)
        assert np.trace(h) == 0
        ev = np.linalg.eigvalsh(h)
        assert abs(ev[1] - ev[0] - abs(d)) < 1e-15


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig("one_qubit", beta=3)
    with pytest.raises(ValueError):
        SystemConfig("one_qubit", ne=1)
    with pytest.raises(ValueError):
        SystemConfig("spectator", lambda1=-0.1)
    with pytest.raises(ValueError):
        SystemConfig("triangle")
    assert SystemConfig("separate", ne=4).env_prime_dim == 4


def test_layout_index_maps_roundtrip():
    lay = FactorLayout((("q1", 2), ("q2", 2), ("e", 5), ("e'", 3)))
    assert lay.flat_dim == 60
    flat = np.arange(60)
    assert np.array_equal(lay.flat_index(lay.multi_index(flat)), flat)
    with pytest.raises(ValueError):
        lay.axes(["x"])


def test_embed_matches_kron_for_adjacent_and_handles_gaps():
    lay = FactorLayout((("q1", 2), ("q2", 2), ("e", 3)))
    r = rng(1)
    a = r.normal(size=(6, 6))
    # q1,e with q2 in between: compare with explicit index construction
    full = embed(a, ["q1", "e"], lay)
    ref = np.zeros((12, 12))
    for i in np.ndindex(2, 2, 3):
        for j in np.ndindex(2, 2, 3):
            if i[1] == j[1]:
                ref[np.ravel_multi_index(i, (2, 2, 3)), np.ravel_multi_index(j, (2, 2, 3))] = a[i[0] * 3 + i[2], j[0] * 3 + j[2]]
    assert np.array_equal(full, ref)
    b = r.normal(size=(4, 4))
    assert np.allclose(embed(b, ["q1", "q2"], lay), np.kron(b, np.eye(3)))
    # order of targets is respected
    swap = embed(np.kron(np.diag([1.0, 2.0]), np.eye(2)), ["q2", "q1"], lay)
    assert np.allclose(swap, np.kron(np.kron(np.eye(2), np.diag([1.0, 2.0])), np.eye(3)))


@pytest.mark.parametrize("topology", list(Topology))
@pytest.mark.parametrize("beta", [1, 2])
def test_realization_invariants(topology, beta):
    cfg = SystemConfig(topology, beta=beta, ne=6, ne_prime=4, delta1=0.7, delta2=1.3, lambda1=0.3, lambda2=0.2)
    real = assemble_hamiltonian(cfg, rng(3))
    h = real.hamiltonian()
    norm = np.linalg.norm(h)
    assert np.linalg.norm(h - h.conj().T) <= 1e-12 * norm
    assert np.linalg.norm(real.reconstruct() - h) <= 1e-9 * norm
    assert np.allclose(real.eigenvalues(), np.linalg.eigvalsh(h), atol=1e-9)


@pytest.mark.parametrize("topology", list(Topology))
def test_block_evolution_matches_full_exponential(topology):
    cfg = SystemConfig(topology, beta=2, ne=5, ne_prime=3, delta1=0.9, delta2=2.1, lambda1=0.4, lambda2=0.3)
    real = assemble_hamiltonian(cfg, rng(4))
    psi = sample_random_state(real.layout.flat_dim, rng(5))
    for t in (0.3, 4.0):
        assert np.allclose(evolve(psi, real, t), evolve_expm(real.hamiltonian(), psi, t), atol=1e-10)


def test_one_qubit_uncoupled_spectrum_is_direct_sum():
    cfg = SystemConfig("one_qubit", beta=2, ne=2, delta1=3.0)
    real = assemble_hamiltonian(cfg, rng(6))
    e = real.spectra["e"].eigenvalues
    expect = np.sort([q + x for q in (1.5, -1.5) for x in e])
    assert np.allclose(real.eigenvalues(), expect, atol=1e-12)


def test_spectator_uncoupled_keeps_purity():
    cfg = SystemConfig("spectator", beta=2, ne=8, delta1=1.0, delta2=2.0)
    real = assemble_hamiltonian(cfg, rng(7))
    psi = build_initial_state(InitialState(theta=0.3, phi=0.4), cfg, rng(8))
    for t in (0.0, 1.0, 10.0):
        rho = reduce(evolve(psi, real, t), real.layout, ["q1", "q2"])
        assert abs(purity(rho) - 1) < 1e-10


def test_max_dim_guard():
    with pytest.raises(ValueError, match="cap"):
        assemble_hamiltonian(SystemConfig("separate", ne=64, ne_prime=64), rng(), max_dim=1000)


def test_evolve_properties():
    cfg = SystemConfig("joint", beta=1, ne=6, delta1=1.0, delta2=0.5, lambda1=0.2, lambda2=0.3)
    real = assemble_hamiltonian(cfg, rng(9))
    psi = sample_random_state(real.layout.flat_dim, rng(10))
    assert np.allclose(evolve(psi, real, 0.0), psi, atol=1e-13)
    t1, t2 = 0.7, 2.3
    assert np.allclose(evolve(psi, real, t1 + t2), evolve(evolve(psi, real, t1), real, t2), atol=1e-9)
    out = evolve(psi, real, 10 * HEISENBERG_TIME)
    assert abs(np.linalg.norm(out) - 1) < 1e-10
    w, v = np.linalg.eigh(real.hamiltonian())
    eig = v[:, 3]
    moved = evolve(eig, real, 5.0)
    assert abs(abs(np.vdot(eig, moved)) - 1) < 1e-10
    with pytest.raises(ValueError):
        evolve(psi[:-1], real, 1.0)


def test_reduce_examples():
    lay = FactorLayout((("q1", 2), ("q2", 2), ("e", 4)))
    env = sample_random_state(4, rng(11))
    rho = reduce(np.kron(BELL, env), lay, ["q1"])
    assert np.allclose(rho, np.eye(2) / 2, atol=1e-14)
    prod = np.kron(np.kron([1, 0], [1, 0]), env)
    rho2 = reduce(prod, lay, ["q1", "q2"])
    assert abs(purity(rho2) - 1) < 1e-14 and np.linalg.matrix_rank(rho2, tol=1e-10) == 1
    psi = sample_random_state(16, rng(12))
    assert np.allclose(reduce(psi, lay, ["q1", "q2", "e"]), np.outer(psi, psi.conj()))
    with pytest.raises(ValueError):
        reduce(psi, lay, [])
    with pytest.raises(ValueError):
        reduce(psi, lay, ["q1", "q1"])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([["q1"], ["q2"], ["e"], ["q1", "e"], ["q2", "e"], ["q1", "q2"]]))
def test_reduce_against_loop_oracle(seed, keep):
    dims = (2, 2, 3)
    lay = FactorLayout((("q1", 2), ("q2", 2), ("e", 3)))
    psi = sample_random_state(12, np.random.default_rng(seed))
    rho = reduce(psi, lay, keep)
    ref = partial_trace_loops(psi, dims, lay.axes(keep))
    assert np.allclose(rho, ref, atol=1e-13)
    assert np.allclose(rho, rho.conj().T)
    assert np.min(np.linalg.eigvalsh(rho)) >= -1e-12
    assert abs(np.trace(rho) - 1) < 1e-12
    many = reduce_many(np.stack([psi, psi]), lay, keep)
    assert np.allclose(many[1], rho, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(list(Topology)), st.floats(0, 30))
def test_purity_symmetry_between_system_and_environment(seed, topology, t):
    cfg = SystemConfig(topology, beta=2, ne=4, ne_prime=3, delta1=0.5, lambda1=0.5, lambda2=0.5)
    r = np.random.default_rng(seed)
    real = assemble_hamiltonian(cfg, r)
    params = InitialState() if topology is Topology.ONE_QUBIT else InitialState(theta=0.5, phi=0.2)
    psi = evolve(build_initial_state(params, cfg, r), real, t)
    central = ["q1"] if topology is Topology.ONE_QUBIT else ["q1", "q2"]
    envs = [n for n in real.layout.names if n not in central]
    p_c = purity(reduce(psi, real.layout, central))
    p_e = purity(reduce(psi, real.layout, envs))
    assert abs(p_c - p_e) < 1e-10


def test_lambda_zero_conserves_purity_and_concurrence():
    cfg = SystemConfig("joint", beta=2, ne=8, delta1=1.3, delta2=0.4)
    real = assemble_hamiltonian(cfg, rng(13))
    psi0 = build_initial_state(InitialState(theta=0.4, phi=0.9, eta=0.3), cfg, rng(14))
    c0 = concurrence(reduce(psi0, real.layout, ["q1", "q2"]))
    for t in (0.5, 3.0, 40.0):
        rho = reduce(evolve(psi0, real, t), real.layout, ["q1", "q2"])
        assert abs(purity(rho) - 1) < 1e-10
        assert abs(concurrence(rho) - c0) < 1e-10


def test_local_unitary_invariance_of_reduced_measures():
    cfg = SystemConfig("joint", beta=2, ne=6, delta1=1.3, delta2=0.4, lambda1=0.3, lambda2=0.3)
    real = assemble_hamiltonian(cfg, rng(15))
    psi = evolve(build_initial_state(InitialState(theta=np.pi / 4), cfg, rng(16)), real, 2.0)
    rho = reduce(psi, real.layout, ["q1", "q2"])
    for t in (0.3, 5.0):
        u = np.kron(np.diag(np.exp(-1j * t * np.array([0.65, -0.65]))), np.diag(np.exp(-1j * t * np.array([0.2, -0.2]))))
        rot = u @ rho @ u.conj().T
        assert abs(purity(rot) - purity(rho)) < 1e-10
        assert abs(concurrence(rot) - concurrence(rho)) < 1e-10


def test_initial_state_examples():
    cfg = SystemConfig("spectator", ne=4)
    lay = cfg.layout()
    psi = build_initial_state(InitialState(theta=np.pi / 4), cfg, rng(17))
    assert abs(np.linalg.norm(psi) - 1) < 1e-14
    rho = reduce(psi, lay, ["q1", "q2"])
    assert abs(concurrence(rho) - 1) < 1e-12
    assert abs(purity(rho) - 1) < 1e-14
    psi0 = build_initial_state(InitialState(theta=0.0, phi=0.3), cfg, rng(18))
    assert concurrence(reduce(psi0, lay, ["q1", "q2"])) < 1e-12
    with pytest.raises(ValueError):
        InitialState(theta=1.0)
    with pytest.raises(ValueError):
        InitialState(gamma=2.0)
    with pytest.raises(ValueError):
        InitialState(phi=-0.1)
    with pytest.raises(ValueError):
        build_initial_state(InitialState(theta=0.2), SystemConfig("one_qubit", ne=4), rng())


def test_initial_state_forms():
    # GUE witness form at phi2 = 0: cos(th)(cos f|0>+sin f|1>)|0> + sin(th)(sin f|0>-cos f|1>)|1>
    th, f = 0.3, 0.6
    expect = np.cos(th) * np.kron([np.cos(f), np.sin(f)], [1, 0]) + np.sin(th) * np.kron([np.sin(f), -np.cos(f)], [0, 1])
    assert np.allclose(two_qubit_state(InitialState(theta=th, phi=f)), expect)
    g = 0.8
    one = build_initial_state(InitialState(gamma=g), SystemConfig("one_qubit", ne=2), rng())
    assert np.allclose(one.reshape(2, 2)[:, 0] / one.reshape(2, 2)[0, 0], [1, np.exp(1j * g)])


def test_schmidt_angle_examples():
    th, (u0, u1), (v0, v1) = schmidt_angle(BELL)
    assert abs(th - np.pi / 4) < 1e-12
    th, *_ = schmidt_angle(np.array([0, 1, 0, 0.0]))
    assert abs(th) < 1e-12
    with pytest.raises(ValueError):
        schmidt_angle(np.array([1, 1, 0, 0.0]))


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, np.pi / 4),
    st.floats(0, np.pi / 2),
    st.floats(-np.pi, np.pi),
    st.floats(0, np.pi / 2),
    st.floats(-np.pi, np.pi),
)
def test_schmidt_angle_roundtrip(theta, phi, eta, phi2, eta2):
    psi = two_qubit_state(InitialState(theta=theta, phi=phi, eta=eta, phi2=phi2, eta2=eta2))
    th, (u0, u1), (v0, v1) = schmidt_angle(psi)
    assert abs(th - theta) < 1e-7 or abs(theta - np.pi / 4) < 1e-6
    rebuilt = np.cos(th) * np.kron(u0, v0) + np.sin(th) * np.kron(u1, v1)
    assert abs(abs(np.vdot(rebuilt, psi)) - 1) < 1e-10


def test_spectator_qubit_swap_statistically_identical():
    """Swapping which qubit is coupled (with the splittings swapped) gives the same mean purity."""
    n = 40
    p_a, p_b = [], []
    for s in range(n):
        r = np.random.default_rng(100 + s)
        cfg = SystemConfig("spectator", beta=2, ne=16, delta1=0.5, delta2=1.5, lambda1=0.15)
        real = assemble_hamiltonian(cfg, r)
        psi = build_initial_state(InitialState(theta=0.5, phi=0.3), cfg, r)
        p_a.append(purity(reduce(evolve(psi, real, 4.0), real.layout, ["q1", "q2"])))
        # swapped: qubit 2 coupled with splitting 0.5 and qubit 1 free with 1.5, built in the joint layout
        r = np.random.default_rng(500 + s)
        cfg_j = SystemConfig("joint", beta=2, ne=16, delta1=1.5, delta2=0.5, lambda1=0.0, lambda2=0.15)
        real_j = assemble_hamiltonian(cfg_j, r)
        # symmetric state: swapping qubits maps theta,phi on qubit 1 to qubit 2
        st_ = InitialState(theta=0.5, phi2=0.3)
        psi_j = build_initial_state(st_, cfg_j, r)
        p_b.append(purity(reduce(evolve(psi_j, real_j, 4.0), real_j.layout, ["q1", "q2"])))
    a, b = np.array(p_a), np.array(p_b)
    se = np.sqrt(a.var(ddof=1) / n + b.var(ddof=1) / n)
    assert abs(a.mean() - b.mean()) < 4 * se
