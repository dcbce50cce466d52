"""Acceptance suite: one PASS/FAIL line per criterion, printed in the run summary."""

import itertools
import time

import numpy as np
import pytest
from scipy import stats

from qcsense.bornmachine import (
    TrainingSet,
    analytic_success_probability,
    fidelity_vs_size_experiment,
    noise_fidelity_experiment,
    quantum_average_circuit,
    quantum_average_direct,
    summarize_size_sweep,
    train_noisy_mixture,
)
from qcsense.noise import (
    KINDS,
    NoiseSpec,
    apply_noise_density,
    channel_kraus,
    inject_stochastic,
)
from qcsense.pipeline import (
    SensingOutcome,
    brute_force_conditional,
    build_projection_hamiltonian,
    mean_srmse,
    project,
    run_reconstruction_sweep,
    sampled_conditional,
)
from qcsense.qcore import DensityMatrix, Hamiltonian, PauliTerm, StateVector, fidelity, pauli_matrix, trace_distance
from qcsense.qite import QiteConfig, qite_run, qite_step

CHANNELS = ("bitflip", "dephasing", "depolarizing", "ampdamp")
PROBS = (1e-6, 1e-5, 1e-4)
PROJECTION_H = Hamiltonian.from_string("-ZIIII -IIZII")

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def machine256(train256):
    return quantum_average_direct(TrainingSet.from_samples(train256))


def random_density(n, rng):
    a = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
    rho = a @ a.conj().T
    return DensityMatrix(rho / np.trace(rho))


def test_criterion_01_three_qubit_ground_state(report):
    t = time.perf_counter()
    traj = qite_run(Hamiltonian.from_string("-ZII -IIZ"), StateVector.from_amplitudes(np.ones(8)),
                    QiteConfig(d_beta=0.005, total_beta=3.0))
    elapsed = time.perf_counter() - t
    ok = abs(traj.final_energy + 2) <= 0.05 and elapsed < 10
    assert report(1, ok, f"final energy {traj.final_energy:.6f} (target -2 +- 0.05), {elapsed:.2f} s (< 10 s)")


def test_criterion_02_five_qubit_projection(report, machine256):
    t = time.perf_counter()
    _, traj = project(machine256, PROJECTION_H, QiteConfig(d_beta=0.05, total_beta=3.0),
                      return_trajectory=True)
    elapsed = time.perf_counter() - t
    rise = float(np.max(np.diff(traj.energies)))
    ok = abs(traj.final_energy + 2) <= 0.05 and rise <= 1e-9 and elapsed < 60
    assert report(2, ok, f"final energy {traj.final_energy:.6f}, largest per-sweep change {rise:.2e} "
                         f"(<= 1e-9), {elapsed:.2f} s (< 60 s)")


def test_criterion_03_noise_monotonicity(report, lidar, machine256):
    t = time.perf_counter()
    rows = noise_fidelity_experiment(lidar.train, CHANNELS, PROBS, seed=7, subset_size=256, n_traj=5000)
    fid = {}
    for r in rows:
        fid.setdefault(r["noise_kind"], []).append(r["fidelity_global"])
    fid_ok = all(np.all(np.diff(v) <= 0) for v in fid.values())
    energies = {}
    for kind in CHANNELS:
        energies[kind] = [
            project(machine256, PROJECTION_H, QiteConfig(d_beta=0.05, total_beta=3.0), NoiseSpec(kind, p),
                    np.random.default_rng(42), n_traj=50, return_trajectory=True)[1].final_energy
            for p in PROBS
        ]
    energy_ok = all(np.all(np.diff(v) >= 0) for v in energies.values())
    elapsed = time.perf_counter() - t
    fmt = "; ".join(f"{k} {np.round(v, 4).tolist()}" for k, v in fid.items())
    efmt = "; ".join(f"{k} {np.round(v, 5).tolist()}" for k, v in energies.items())
    ok = fid_ok and energy_ok and elapsed < 600
    assert report(3, ok, f"(a) fidelity non-increasing in p={list(PROBS)}: {fid_ok} [{fmt}]; "
                         f"(b) final energy non-decreasing: {energy_ok} [{efmt}]; {elapsed:.0f} s (< 600 s)")


def test_criterion_04_training_size(report, lidar):
    sizes = [2**k for k in range(3, 11)]
    rows, meta = fidelity_vs_size_experiment(lidar.train, sizes, 5, seed=7)
    rho, p_two_sided = stats.spearmanr([r["subset_size"] for r in rows], [r["fidelity_global"] for r in rows])
    summary = summarize_size_sweep(rows)
    last = summary[-1]
    p_one_sided = p_two_sided / 2 if rho > 0 else 1.0
    ok = rho > 0 and p_one_sided < 0.05 and last["fidelity_even"] < last["fidelity_global"]
    means = ", ".join(f"{s['subset_size']}:{s['fidelity_global']:.3f}" for s in summary)
    crossing = next((s["subset_size"] for s in summary if s["fidelity_global"] >= 0.98), None)
    assert report(4, ok, f"Spearman rho {rho:.3f} (one-sided p {p_one_sided:.1e}); at 1024 even "
                         f"{last['fidelity_even']:.3f} < global {last['fidelity_global']:.3f}; "
                         f"means {means}; first size with mean >= 0.98: {crossing} "
                         f"(psi_global from {meta['global_size']} samples)")


def test_criterion_05_channel_oracle(report, train256):
    rng = np.random.default_rng(5)
    kinds = [k for k in KINDS if k != "none"]
    worst_complete = worst_trace = 0.0
    for kind in kinds:
        for _ in range(1000):
            n = int(rng.integers(1, 4))
            rho = random_density(n, rng)
            p = float(rng.random())
            worst_complete = max(worst_complete, channel_kraus(kind, p).completeness_error())
            out = apply_noise_density(rho, NoiseSpec(kind, p), touched=[int(rng.integers(n))])
            worst_trace = max(worst_trace, abs(np.trace(out.entries).real - 1.0))
    worst_td = 0.0
    for kind in kinds:
        if kind == "ampdamp":
            continue  # no Pauli unraveling; simulated on density matrices only
        for _ in range(10):
            psi = StateVector.from_amplitudes(rng.normal(size=4) + 1j * rng.normal(size=4))
            spec = NoiseSpec(kind, float(rng.random()))
            acc = np.zeros((4, 4), dtype=complex)
            for _ in range(5000):
                acc += inject_stochastic(psi, spec, rng, touched=[0, 1]).projector().entries
            exact = apply_noise_density(psi.projector(), spec, touched=[0, 1])
            worst_td = max(worst_td, trace_distance(DensityMatrix(acc / 5000), exact))
    D = TrainingSet.from_samples(train256)
    circuit_td = max(
        trace_distance(train_noisy_mixture(D, NoiseSpec(kind, p), 5000, np.random.default_rng(1),
                                           mode="trajectory").state,
                       train_noisy_mixture(D, NoiseSpec(kind, p), 1, None, mode="density").state)
        for kind in ("bitflip", "dephasing", "depolarizing") for p in PROBS
    )
    ok = worst_complete < 1e-10 and worst_trace < 1e-10 and worst_td < 0.02 and circuit_td < 0.02
    assert report(5, ok, f"max completeness error {worst_complete:.1e}, max trace error {worst_trace:.1e} "
                         f"(1000 pairs x {len(kinds)} channels); trajectory vs channel TD {worst_td:.4f}, "
                         f"256-sample training circuit TD {circuit_td:.4f} at 5000 trajectories (< 0.02)")


def test_criterion_06_circuit_equivalence(report):
    rng = np.random.default_rng(6)
    worst_fid, worst_margin = 1.0, np.inf
    for _ in range(200):
        n = int(rng.integers(1, 5))
        size = int(rng.choice([1, 2, 4, 8]))
        D = TrainingSet.from_samples(rng.random((size, n)), v=float(rng.uniform(0.1, 0.9)))
        m, prob, _ = quantum_average_circuit(D, rng)
        worst_fid = min(worst_fid, fidelity(m.state, quantum_average_direct(D).state))
        assert prob == pytest.approx(analytic_success_probability(D), abs=1e-12)
        worst_margin = min(worst_margin, prob - 1 / size)
    ok = worst_fid >= 1 - 1e-9 and worst_margin >= -1e-12
    assert report(6, ok, f"min fidelity {worst_fid:.12f} (>= 1 - 1e-9); min (success - 1/|D|) "
                         f"{worst_margin:.3e} (>= 0) over 200 sets")


def test_criterion_07_step_oracle(report):
    rng = np.random.default_rng(7)
    d = 0.005
    worst = 1.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        q = int(rng.integers(n))
        term = PauliTerm(float(rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 2.0)),
                         "".join("Z" if i == q else "I" for i in range(n)))
        psi = StateVector.from_amplitudes(rng.normal(size=2**n) + 1j * rng.normal(size=2**n))
        new, _ = qite_step(psi, term, QiteConfig(d_beta=d, total_beta=d))
        h = term.coefficient * np.diag(pauli_matrix(term.axes)).real
        target = StateVector.from_amplitudes(np.exp(-d * h) * psi.amplitudes)
        worst = min(worst, fidelity(new, target))
    ok = worst >= 1 - 10 * d**2
    assert report(7, ok, f"min fidelity {worst:.10f} (>= {1 - 10 * d**2:.6f}) over 100 single-Z cases")


def _discard_ensemble(**extra):
    H = Hamiltonian.from_string("-ZII -IIZ")
    psi0 = StateVector.from_amplitudes(np.ones(8))
    gaps = {}
    for discards in (0, 30):
        cfg = QiteConfig(d_beta=0.005, total_beta=3.0, shots=100_000, max_discards=discards, **extra)
        finals = [qite_run(H, psi0, cfg, np.random.default_rng(child)).final_energy
                  for child in np.random.SeedSequence(8).spawn(5)]
        gaps[discards] = abs(np.mean(finals) + 2)
    return gaps


def test_criterion_08_shot_noise_discards(report):
    gaps = _discard_ensemble()
    # Not asserted: with two-qubit generator domains the Gram matrix is itself
    # shot-noisy and the discard policy has a visible effect.
    wide = _discard_ensemble(domain_size=2)
    ok = gaps[30] < gaps[0]
    assert report(8, ok, f"mean |E + 2| over 5 runs (1e5 shots, d_beta 0.005, default 1-qubit domains): "
                         f"30 discards {gaps[30]:.3e} vs 0 discards {gaps[0]:.3e}; "
                         f"context, 2-qubit domains: {wide[30]:.3e} vs {wide[0]:.3e}")


def conditional_corpus(train256):
    corpus = []
    for seed in range(12):
        r = np.random.default_rng(seed)
        corpus.append(r.random(([1, 2, 4, 8, 16, 3][seed % 6], 2 + seed % 2)))
    corpus += [train256[:, :3], train256[:16, 1:4], train256[:, 3:]]
    return corpus


def test_criterion_09_conditionals(report, train256):
    worst, cases = 0.0, 0
    for samples in conditional_corpus(train256):
        D = TrainingSet.from_samples(samples)
        m = quantum_average_direct(D)
        n = D.n_pixels
        probs = m.state.probabilities().reshape((2,) * n)
        for r in range(1, n):
            for idx in itertools.combinations(range(n), r):
                for bits in itertools.product((0, 1), repeat=r):
                    sel = [slice(None)] * n
                    for i, b in zip(idx, bits):
                        sel[i] = b
                    if probs[tuple(sel)].sum() < 1e-9:
                        continue
                    out = SensingOutcome(idx, np.zeros(r), bits, n)
                    projected = project(m, build_projection_hamiltonian(out, n), QiteConfig())
                    sampled = sampled_conditional(projected, out, 100_000, np.random.default_rng(cases))
                    worst = max(worst, 0.5 * np.abs(sampled - brute_force_conditional(m, out)).sum())
                    cases += 1
    ok = worst < 0.05
    assert report(9, ok, f"max TV distance {worst:.4f} (< 0.05) over {cases} outcomes, 1e5 samples each")


def test_criterion_10_srmse(report, lidar, train256):
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(10_000):
        k = int(rng.integers(1, 6))
        p, r, s = rng.random(k), rng.random(k), rng.uniform(0.01, 1.0, k)
        direct = (sum(((a - b) / c) ** 2 for a, b, c in zip(p, r, s)) / k) ** 0.5
        worst = max(worst, abs(mean_srmse(p, r, s) - direct))
    test = lidar.test[np.sort(np.random.default_rng([7, 1]).choice(len(lidar.test), 64, replace=False))]
    _, means = run_reconstruction_sweep(test, train256, (2, 3, 4), seed=7, n_samples=10_000)
    curve = [m["mean_srmse"] for m in means]
    ok = worst <= 1e-12 and bool(np.all(np.diff(curve) <= 0))
    assert report(10, ok, f"max |mean_srmse - direct| {worst:.1e} (<= 1e-12) on 1e4 inputs; "
                          f"mean sRMSE for N_c=2,3,4: {np.round(curve, 4).tolist()} (non-increasing)")
