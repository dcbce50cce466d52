import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qcsense.noise import NoiseSpec
from qcsense.qcore import Hamiltonian, PauliTerm, StateVector, expectation, fidelity, pauli_matrix
from qcsense.qite import (
    QiteConfig,
    _fit_exact_pure,
    _fit_from_tomography,
    _pool,
    fit_generator,
    qite_run,
    qite_run_noisy,
    qite_step,
    term_domain,
    tomography,
    with_domain,
)

PLUS = StateVector.from_amplitudes(np.array([1.0, 1.0]))


def random_state(n, rng):
    return StateVector.from_amplitudes(rng.normal(size=2**n) + 1j * rng.normal(size=2**n))


def imaginary_time_oracle(psi, term, d_beta):
    """Normalized exp(-d_beta h)|psi> through the dense matrix exponential."""
    h = term.coefficient * pauli_matrix(term.axes)
    w, v = np.linalg.eigh(h)
    out = (v * np.exp(-d_beta * w)) @ v.conj().T @ psi.amplitudes
    return StateVector.from_amplitudes(out)


def test_config_validation_and_steps():
    assert QiteConfig().n_steps == 60
    assert QiteConfig(d_beta=0.005, total_beta=3.0).n_steps == 600
    assert QiteConfig().exact and not QiteConfig(shots=100).exact
    for bad in [dict(d_beta=0), dict(total_beta=-1), dict(d_beta=1, total_beta=0.5),
                dict(shots=0), dict(max_discards=-1), dict(domain_size=0),
                dict(energy_readout="guess")]:
        with pytest.raises(ValueError):
            QiteConfig(**bad)
    assert with_domain(QiteConfig(), 3).domain_size == 3


def test_term_domain_growth():
    term = PauliTerm(1.0, "IIZII")
    assert term_domain(term, None) == (2,)
    assert term_domain(term, 1) == (2,)
    assert term_domain(term, 3) == (1, 2, 3)
    assert term_domain(term, 9) == (0, 1, 2, 3, 4)
    assert term_domain(PauliTerm(1.0, "ZIIIZ"), 3) == (0, 1, 4)


def test_single_step_on_plus_state():
    # <-Z> after one exact normalized step from |+> is -tanh(2 dtau)
    d = 0.005
    new, ok = qite_step(PLUS, PauliTerm(-1.0, "Z"), QiteConfig(d_beta=d, total_beta=d))
    assert ok
    assert expectation(new, PauliTerm(-1.0, "Z")) == pytest.approx(-np.tanh(2 * d), abs=1e-6)


def test_single_step_generator_is_y_rotation():
    _, a = fit_generator(PLUS, PauliTerm(-1.0, "Z"), QiteConfig(d_beta=0.01, total_beta=0.01))
    # pool order is X, Y, Z
    assert a[0] == pytest.approx(0.0, abs=1e-9)
    assert a[1] == pytest.approx(-1.0, rel=1e-3)
    assert a[2] == pytest.approx(0.0, abs=1e-9)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.data())
@settings(max_examples=40, deadline=None)
def test_full_domain_step_tracks_imaginary_time(seed, n, data):
    rng = np.random.default_rng(seed)
    axes = data.draw(st.text(alphabet="IXYZ", min_size=n, max_size=n).filter(lambda s: set(s) != {"I"}))
    term = PauliTerm(float(rng.choice([-1.0, 1.0])), axes)
    psi = random_state(n, rng)
    d = 0.01
    new, _ = qite_step(psi, term, QiteConfig(d_beta=d, total_beta=d, domain_size=n))
    assert fidelity(new, imaginary_time_oracle(psi, term, d)) >= 1 - 10 * d**2


@pytest.mark.parametrize("n", [2, 3])
def test_pure_fit_matches_tomography_fit(n):
    # n=3 with the full domain exercises the dual solve
    rng = np.random.default_rng(n)
    psi = random_state(n, rng)
    term = PauliTerm(-1.0, "Z" + "I" * (n - 1))
    pool, _ = _pool(n, tuple(range(n)))
    a = _fit_exact_pure(psi.amplitudes, term, pool, 0.05, 1e-8)
    b = _fit_from_tomography(psi.projector(), term, pool, 0.05, 1e-8, None, None)
    assert np.allclose(a, b, atol=1e-5)


def test_step_too_large_raises():
    with pytest.raises(ValueError, match="d_beta"):
        qite_step(StateVector.zero(1), PauliTerm(20.0, "Z"), QiteConfig(d_beta=0.05))


def test_tomography_exact_and_shots():
    psi = StateVector.from_amplitudes(np.array([1.0, 1j]))
    obs = [PauliTerm(1.0, "X"), PauliTerm(2.0, "Y"), PauliTerm(1.0, "Z")]
    assert np.allclose(tomography(psi, obs), [0.0, 2.0, 0.0], atol=1e-12)
    est = tomography(psi, obs, shots=20000, rng=np.random.default_rng(0))
    assert est[1] == pytest.approx(2.0)
    assert abs(est[0]) < 0.03 and abs(est[2]) < 0.03
    with pytest.raises(ValueError):
        tomography(psi, obs, shots=10)


def test_tomography_density_matches_pure():
    rng = np.random.default_rng(9)
    psi = random_state(2, rng)
    obs = [PauliTerm(1.0, w) for w in ("XY", "ZZ", "YI")]
    assert np.allclose(tomography(psi, obs), tomography(psi.projector(), obs))


def test_three_qubit_run_reaches_ground_energy():
    H = Hamiltonian.from_string("-ZII -IIZ")
    psi0 = StateVector.from_amplitudes(np.ones(8))
    traj = qite_run(H, psi0, QiteConfig())
    assert traj.final_energy == pytest.approx(-2.0, abs=0.05)
    assert np.all(np.diff(traj.energies) <= 1e-9)
    assert len(traj.points) == 61 and traj.betas[-1] == pytest.approx(3.0)
    assert traj.discards_used == [0] * 60


def test_density_run_matches_pure_run():
    H = Hamiltonian.from_string("-ZI +0.5*XX")
    psi0 = StateVector.from_amplitudes(np.array([1.0, 0.3, -0.2, 0.5]))
    cfg = QiteConfig(d_beta=0.05, total_beta=1.0)
    a = qite_run(H, psi0, cfg)
    b = qite_run(H, psi0.projector(), cfg)
    assert np.allclose(a.energies, b.energies, atol=1e-6)


def test_shot_run_needs_rng_and_is_reproducible():
    H = Hamiltonian.from_string("-Z")
    cfg = QiteConfig(d_beta=0.1, total_beta=0.5, shots=1000, max_discards=2)
    with pytest.raises(ValueError):
        qite_run(H, PLUS, cfg)
    a = qite_run(H, PLUS, cfg, np.random.default_rng(1))
    b = qite_run(H, PLUS, cfg, np.random.default_rng(1))
    assert np.array_equal(a.energies, b.energies)
    assert all(0 <= d <= 2 for d in a.discards_used)


def test_size_mismatch_rejected():
    with pytest.raises(ValueError):
        qite_run(Hamiltonian.from_string("-ZZ"), PLUS, QiteConfig())


def test_noisy_run_trivial_spec_equals_noiseless():
    H = Hamiltonian.from_string("-ZI -IZ")
    psi0 = StateVector.from_amplitudes(np.ones(4))
    cfg = QiteConfig(d_beta=0.1, total_beta=1.0)
    a = qite_run(H, psi0, cfg)
    b = qite_run_noisy(H, psi0, cfg, NoiseSpec("bitflip", 0.0), np.random.default_rng(0))
    assert np.allclose(a.energies, b.energies)


def test_noisy_trajectory_run_averages_members():
    H = Hamiltonian.from_string("-ZI -IZ")
    psi0 = StateVector.from_amplitudes(np.ones(4))
    cfg = QiteConfig(d_beta=0.1, total_beta=1.0)
    traj = qite_run_noisy(H, psi0, cfg, NoiseSpec("bitflip", 0.05), np.random.default_rng(3), n_traj=20)
    assert len(traj.members) == 20
    assert np.allclose(traj.energies, np.mean([m.energies for m in traj.members], axis=0))
    assert traj.final_energy > -2.0
    again = qite_run_noisy(H, psi0, cfg, NoiseSpec("bitflip", 0.05), np.random.default_rng(3), n_traj=20)
    assert np.array_equal(traj.energies, again.energies)


def test_noise_raises_final_energy():
    H = Hamiltonian.from_string("-ZI -IZ")
    psi0 = StateVector.from_amplitudes(np.ones(4))
    cfg = QiteConfig(d_beta=0.1, total_beta=2.0)
    clean = qite_run(H, psi0, cfg).final_energy
    for kind in ("ampdamp", "depolarizing"):
        noisy = qite_run_noisy(H, psi0, cfg, NoiseSpec(kind, 0.05), np.random.default_rng(0),
                               mode="density").final_energy
        assert noisy > clean


def test_trajectory_mode_rejects_density_start():
    with pytest.raises(ValueError):
        qite_run_noisy(Hamiltonian.from_string("-Z"), PLUS.projector(), QiteConfig(),
                       NoiseSpec("bitflip", 0.1), np.random.default_rng(), mode="trajectory")
