"""Quantum imaginary time evolution with per-term unitary fits.

Each Trotter substep replaces exp(-dtau * h) on the current state by a
unitary exp(-i dtau A), A = sum_I a_I sigma_I over Pauli words on the term's
domain.  The real coefficients a solve the regularized normal equations

    (S + lam) a = rhs,   S_IJ = Re<sigma_I sigma_J>,
                         rhs_I = c^(-1/2) Im<sigma_I h>,   c = 1 - 2 dtau <h>,

whose entries are Pauli expectations supplied by tomography.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from itertools import product
from typing import Optional, Sequence, Union

import numpy as np

from .noise import NoiseSpec, apply_noise_density, inject_stochastic
from .qcore import (
    H as HADAMARD,
    S_DAG,
    DensityMatrix,
    Hamiltonian,
    PauliTerm,
    StateVector,
    apply_pauli,
    apply_unitary_density,
    apply_unitary_raw,
    expectation,
    pauli_actions,
    pauli_expectations,
    pauli_matrix,
    pauli_product,
)

log = logging.getLogger(__name__)

State = Union[StateVector, DensityMatrix]


class DegenerateTomography(ArithmeticError):
    """The regularized linear system for the generator could not be solved."""


@dataclass(frozen=True)
class QiteConfig:
    d_beta: float = 0.05
    total_beta: float = 3.0
    shots: Optional[int] = None
    max_discards: int = 0
    domain_size: Optional[int] = None
    regularization: float = 1e-8
    energy_readout: str = "auto"

    def __post_init__(self):
        if not self.d_beta > 0:
            raise ValueError("d_beta must be positive")
        if not self.total_beta > 0:
            raise ValueError("total_beta must be positive")
        if self.total_beta < self.d_beta:
            raise ValueError("total_beta must be >= d_beta")
        if self.shots is not None and int(self.shots) < 1:
            raise ValueError("shots must be >= 1")
        if self.max_discards < 0:
            raise ValueError("max_discards must be >= 0")
        if self.domain_size is not None and self.domain_size < 1:
            raise ValueError("domain_size must be >= 1")
        if self.regularization < 0:
            raise ValueError("regularization must be >= 0")
        if self.energy_readout not in ("auto", "exact", "tomography"):
            raise ValueError("energy_readout must be 'auto', 'exact' or 'tomography'")

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.total_beta / self.d_beta)))

    @property
    def exact(self) -> bool:
        return self.shots is None


@dataclass
class QiteTrajectory:
    points: list[tuple[float, float]]
    discards_used: list[int]
    final_state: State
    members: list["QiteTrajectory"] = field(default_factory=list)

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for b, _ in self.points])

    @property
    def energies(self) -> np.ndarray:
        return np.array([e for _, e in self.points])

    @property
    def final_energy(self) -> float:
        return self.points[-1][1]


# --------------------------------------------------------------------------
# Tomography

def _measure_word(state: State, axes: str, shots: int, rng: np.random.Generator) -> float:
    """Empirical <P> from ``shots`` computational-basis samples after rotation."""
    support = [q for q, a in enumerate(axes) if a != "I"]
    if not support:
        return 1.0
    rotations = []
    for q in support:
        if axes[q] == "X":
            rotations.append((HADAMARD, q))
        elif axes[q] == "Y":
            rotations.append((HADAMARD @ S_DAG, q))
    n = len(axes)
    if isinstance(state, StateVector):
        amps = state.amplitudes
        for u, q in rotations:
            amps = apply_unitary_raw(amps, u, [q])
        probs = np.abs(amps) ** 2
    else:
        rho = state.entries
        for u, q in rotations:
            rho = apply_unitary_density(rho, u, [q])
        probs = np.clip(np.diag(rho).real, 0.0, None)
    probs = probs / probs.sum()
    counts = rng.multinomial(shots, probs)
    mask = 0
    for q in support:
        mask |= 1 << (n - 1 - q)
    parity = np.bitwise_count(np.arange(probs.size, dtype=np.int64) & mask).astype(np.int64) & 1
    return float(np.dot(counts, 1 - 2 * parity)) / shots


def tomography(
    state: State,
    observables: Sequence[PauliTerm],
    shots: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """Expectation estimates of each observable (coefficient included).

    ``shots=None`` returns exact values; otherwise each observable is measured
    in its own rotated basis with ``shots`` samples.
    """
    observables = list(observables)
    if shots is None:
        vals = pauli_expectations(state, [o.axes for o in observables])
    else:
        if int(shots) < 1:
            raise ValueError("shots must be >= 1")
        if rng is None:
            raise ValueError("shot tomography needs an rng")
        vals = np.array([_measure_word(state, o.axes, int(shots), rng) for o in observables])
    return np.array([o.coefficient for o in observables]) * vals


# --------------------------------------------------------------------------
# Domains and operator pools

def term_domain(term: PauliTerm, domain_size: Optional[int]) -> tuple[int, ...]:
    """The term's support, grown by nearest qubits up to ``domain_size``."""
    n = term.n_qubits
    support = list(term.support)
    if domain_size is None or domain_size <= len(support):
        return tuple(support)
    target = min(domain_size, n)
    chosen = set(support)
    others = sorted(
        (q for q in range(n) if q not in chosen),
        key=lambda q: (min(abs(q - s) for s in support) if support else q, q),
    )
    for q in others[: target - len(chosen)]:
        chosen.add(q)
    return tuple(sorted(chosen))


@lru_cache(maxsize=256)
def _pool(n: int, domain: tuple[int, ...]) -> tuple[tuple[str, ...], np.ndarray]:
    """Non-identity Pauli words on ``domain`` (full-length) and their local matrices."""
    words, mats = [], []
    for letters in product("IXYZ", repeat=len(domain)):
        if set(letters) == {"I"}:
            continue
        full = ["I"] * n
        for q, a in zip(domain, letters):
            full[q] = a
        words.append("".join(full))
        mats.append(pauli_matrix("".join(letters)))
    return tuple(words), np.array(mats)


@lru_cache(maxsize=256)
def _product_tables(pool: tuple[str, ...], term_axes: str):
    """Unique words needed by tomography, plus index/phase tables for S and rhs."""
    index: dict[str, int] = {}

    def idx(w):
        return index.setdefault(w, len(index))

    k = len(pool)
    s_idx = np.empty((k, k), dtype=np.int64)
    s_ph = np.empty((k, k), dtype=complex)
    b_idx = np.empty(k, dtype=np.int64)
    b_ph = np.empty(k, dtype=complex)
    for i, a in enumerate(pool):
        for j in range(i, k):
            ph, w = pauli_product(a, pool[j])
            s_idx[i, j] = s_idx[j, i] = idx(w)
            s_ph[i, j] = ph
            s_ph[j, i] = np.conj(ph)
        ph, w = pauli_product(a, term_axes)
        b_idx[i] = idx(w)
        b_ph[i] = ph
    h_idx = idx(term_axes)
    words = tuple(sorted(index, key=index.get))
    return words, s_idx, s_ph, b_idx, b_ph, h_idx


# --------------------------------------------------------------------------
# Step

def _norm_factor(d_beta: float, h_mean: float) -> float:
    c = 1.0 - 2.0 * d_beta * h_mean
    if c <= 0:
        raise ValueError(
            f"d_beta={d_beta} too large for this term (1 - 2 dtau <h> = {c:.3g} <= 0)"
        )
    return c


def _solve(S: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    try:
        a = np.linalg.solve(S + lam * np.eye(S.shape[0]), rhs)
    except np.linalg.LinAlgError as exc:
        raise DegenerateTomography(str(exc)) from exc
    if not np.all(np.isfinite(a)):
        raise DegenerateTomography("non-finite generator coefficients")
    return a


def _fit_exact_pure(psi: np.ndarray, term: PauliTerm, pool, d_beta: float, lam: float) -> np.ndarray:
    M = pauli_actions(psi, pool)  # rows sigma_I |psi>
    h_psi = term.coefficient * apply_pauli(psi, term.axes)
    h_mean = float(np.vdot(psi, h_psi).real)
    cinv = _norm_factor(d_beta, h_mean) ** -0.5
    dim = psi.size
    if len(pool) <= 2 * dim:
        S = (M.conj() @ M.T).real
        rhs = cinv * (M.conj() @ h_psi).imag
        return _solve(S, rhs, lam)
    # Same Tikhonov solution via the (smaller) dual system: a = G^T (G G^T + lam)^-1 y,
    # where G's columns are the realified vectors -i sigma_I |psi>.
    G = np.concatenate([M.imag, -M.real], axis=1).T
    target = ((cinv - 1.0) / d_beta) * psi - cinv * h_psi
    y = np.concatenate([target.real, target.imag])
    z = _solve(G @ G.T, y, lam)
    return G.T @ z


def _fit_from_tomography(
    state: State, term: PauliTerm, pool, d_beta: float, lam: float,
    shots: Optional[int], rng: Optional[np.random.Generator],
) -> np.ndarray:
    words, s_idx, s_ph, b_idx, b_ph, h_idx = _product_tables(pool, term.axes)
    obs = [PauliTerm(1.0, w) for w in words]
    ev = tomography(state, obs, shots, rng)
    S = (s_ph * ev[s_idx]).real
    rhs_raw = (b_ph * ev[b_idx]).imag * term.coefficient
    h_mean = term.coefficient * ev[h_idx]
    cinv = _norm_factor(d_beta, h_mean) ** -0.5
    return _solve(S, cinv * rhs_raw, lam)


def _generator_unitary(a: np.ndarray, local_mats: np.ndarray, d_beta: float) -> np.ndarray:
    A = np.tensordot(a, local_mats, axes=1)
    w, v = np.linalg.eigh(0.5 * (A + A.conj().T))
    return (v * np.exp(-1j * d_beta * w)) @ v.conj().T


def fit_generator(state: State, term: PauliTerm, config: QiteConfig,
                  rng: Optional[np.random.Generator] = None) -> tuple[tuple[int, ...], np.ndarray]:
    """Domain and real generator coefficients for one substep (no state update)."""
    if term.n_qubits != state.n_qubits:
        raise ValueError("term and state sizes differ")
    domain = term_domain(term, config.domain_size)
    if not domain:
        return domain, np.zeros(0)
    pool, _ = _pool(state.n_qubits, domain)
    if config.exact and isinstance(state, StateVector):
        a = _fit_exact_pure(state.amplitudes, term, pool, config.d_beta, config.regularization)
    else:
        a = _fit_from_tomography(state, term, pool, config.d_beta, config.regularization,
                                 config.shots, rng)
    return domain, a


def qite_step(
    state: State,
    term: PauliTerm,
    config: QiteConfig,
    rng: Optional[np.random.Generator] = None,
    noise: Optional[NoiseSpec] = None,
    noise_rng: Optional[np.random.Generator] = None,
) -> tuple[State, bool]:
    """One imaginary-time substep for ``term``.

    Returns the new state and whether the term's exact energy did not rise.
    Noise, when given, is injected on the unitary's qubits right after it.
    """
    domain, a = fit_generator(state, term, config, rng)
    if not domain:
        return state, True
    _, local = _pool(state.n_qubits, domain)
    U = _generator_unitary(a, local, config.d_beta)
    if isinstance(state, StateVector):
        new = StateVector.from_amplitudes(apply_unitary_raw(state.amplitudes, U, domain))
        if noise is not None and not noise.is_trivial:
            new = inject_stochastic(new, noise, noise_rng if noise_rng is not None else rng, domain)
    else:
        new = DensityMatrix(apply_unitary_density(state.entries, U, domain))
        if noise is not None and not noise.is_trivial:
            new = apply_noise_density(new, noise, domain)
    accepted = expectation(new, term) <= expectation(state, term) + 1e-9
    return new, accepted


# --------------------------------------------------------------------------
# Runs

def _readout(state: State, H: Hamiltonian, config: QiteConfig, rng) -> float:
    """Energy used by the discard check: shot-estimated in shot mode unless forced exact."""
    if config.energy_readout == "exact" or config.exact:
        return expectation(state, H)
    return float(tomography(state, H.terms, config.shots, rng).sum())


def _run(
    H: Hamiltonian, state0: State, config: QiteConfig, rng: Optional[np.random.Generator],
    noise: Optional[NoiseSpec] = None, noise_rng: Optional[np.random.Generator] = None,
) -> QiteTrajectory:
    if state0.n_qubits != H.n_qubits:
        raise ValueError(f"Hamiltonian has {H.n_qubits} qubits, state has {state0.n_qubits}")
    noisy = noise is not None and not noise.is_trivial
    stochastic = not config.exact or (noisy and isinstance(state0, StateVector))
    tol = 1e-9 if config.exact else 0.0
    state = state0
    points = [(0.0, expectation(state, H))]
    prev_read = _readout(state, H, config, rng)
    discards = []
    for k in range(1, config.n_steps + 1):
        used = 0
        while True:
            trial = state
            for term in H.terms:
                trial, _ = qite_step(trial, term, config, rng, noise, noise_rng)
            read = _readout(trial, H, config, rng)
            if read <= prev_read + tol or not stochastic or used >= config.max_discards:
                break
            used += 1
        state, prev_read = trial, read
        discards.append(used)
        points.append((k * config.d_beta, expectation(state, H)))
    return QiteTrajectory(points, discards, state)


def qite_run(
    H: Hamiltonian, state0: State, config: QiteConfig,
    rng: Optional[np.random.Generator] = None,
) -> QiteTrajectory:
    """Noiseless QITE: ``config.n_steps`` Trotter sweeps with the discard heuristic."""
    if not config.exact and rng is None:
        raise ValueError("shot-based QITE needs an rng")
    return _run(H, state0, config, rng)


def qite_run_noisy(
    H: Hamiltonian,
    state0: State,
    config: QiteConfig,
    spec: NoiseSpec,
    rng: np.random.Generator,
    n_traj: int = 50,
    mode: str = "auto",
) -> QiteTrajectory:
    """QITE with noise after every applied unitary.

    Pauli channels run as ``n_traj`` statevector trajectories (energies are
    ensemble means, members kept in ``.members``); amplitude damping, or any
    channel with ``mode="density"``, runs once on the density matrix.
    """
    if spec.is_trivial:
        return qite_run(H, state0, config, rng)
    if mode == "auto":
        mode = "density" if spec.kind == "ampdamp" else "trajectory"
    if mode == "density":
        rho0 = state0.projector() if isinstance(state0, StateVector) else state0
        return _run(H, rho0, config, rng, spec)
    if mode != "trajectory":
        raise ValueError(f"unknown mode {mode!r}")
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if not isinstance(state0, StateVector):
        raise ValueError("trajectory mode needs a pure initial state")
    members = []
    for child in rng.spawn(n_traj):
        tomo_rng, noise_rng = child.spawn(2)
        members.append(_run(H, state0, config, tomo_rng, spec, noise_rng))
    energies = np.mean([m.energies for m in members], axis=0)
    betas = members[0].betas
    discards = np.max([m.discards_used for m in members], axis=0).tolist()
    rho = np.mean([m.final_state.projector().entries for m in members], axis=0)
    return QiteTrajectory(list(zip(betas.tolist(), energies.tolist())), discards,
                          DensityMatrix(rho), members)


def with_domain(config: QiteConfig, domain_size: Optional[int]) -> QiteConfig:
    return replace(config, domain_size=domain_size)
