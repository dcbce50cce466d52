"""Quantum-average Born machines: direct sum, postselected circuit, noisy mixtures.

Circuit model used for noisy training (c = log2|D| control qubits):

    layer 0        H on every control qubit
    layer 1+z      controlled-U_z on the state register, for z = 0..|D|-1
    layer |D|+1    H on every control qubit, then postselect controls on 0

Noise acts only on the state register, once per layer.  Because every
controlled-U_z is block diagonal in the control basis, the postselected
state register is (1/|D|) * sum_z of each branch's state, and two exact
shortcuts follow:

* Pauli trajectories: Paulis commute past the control structure, so branch z
  is P_final * (p_z Ry(theta) p_z)|0>, where p_z is the accumulated Pauli
  frame before layer 1+z.  Conjugating Ry by X or Z flips the angle sign.
* Density mode: only the sum of the |D|^2 (a, b) blocks is needed, and it
  obeys a three-matrix recursion (see ``_density_recursion``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .encoding import PixelMap, encode_batch, pixel_angles, product_amplitudes
from .noise import NoiseSpec, apply_kraus_raw, channel_kraus, draw_pauli_codes
from .qcore import (
    H,
    DensityMatrix,
    GateOp,
    StateVector,
    apply_controlled,
    apply_gate,
    apply_pauli,
    fidelity,
    postselect,
    ry,
)

log = logging.getLogger(__name__)

CIRCUIT_MAX_SAMPLES = 256


@dataclass(frozen=True)
class TrainingSet:
    samples: np.ndarray
    pixel_map: PixelMap

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if s.shape[0] == 0:
            raise ValueError("training set is empty")
        if s.shape[1] != len(self.pixel_map):
            raise ValueError("sample length does not match the pixel map")
        if np.any(s < 0) or np.any(s > 1):
            raise ValueError("training pixels must lie in [0, 1]")
        object.__setattr__(self, "samples", s)

    @classmethod
    def from_samples(cls, samples, v: Union[float, Sequence[float]] = 0.5) -> "TrainingSet":
        s = np.atleast_2d(np.asarray(samples, dtype=float))
        pm = PixelMap(np.broadcast_to(np.asarray(v, dtype=float), (s.shape[1],)))
        return cls(s, pm)

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class BornMachine:
    state: Union[StateVector, DensityMatrix]
    n_pixels: int
    provenance: str
    training_size: int

    @property
    def is_pure(self) -> bool:
        return isinstance(self.state, StateVector)


def quantum_average_direct(D: TrainingSet) -> BornMachine:
    """Normalized sum of the encoded training samples."""
    total = encode_batch(D.samples, D.pixel_map).sum(axis=0)
    norm = np.linalg.norm(total)
    if norm < 1e-300:
        raise ValueError("quantum average has zero norm")
    return BornMachine(StateVector(total / norm), D.n_pixels, "direct", D.size)


def analytic_success_probability(D: TrainingSet) -> float:
    total = encode_batch(D.samples, D.pixel_map).sum(axis=0)
    return float(total @ total) / D.size ** 2


def _is_power_of_two(k: int) -> bool:
    return k >= 1 and k & (k - 1) == 0


def pad_to_power_of_two(D: TrainingSet) -> TrainingSet:
    """Repeat the last sample until |D| is a power of two.

    The repeated sample gains weight in the average, so the padded machine
    differs from the direct sum over the original set.
    """
    m = 1 << (D.size - 1).bit_length()
    if m == D.size:
        return D
    extra = np.repeat(D.samples[-1:], m - D.size, axis=0)
    return TrainingSet(np.vstack([D.samples, extra]), D.pixel_map)


def sample_unitary(y: np.ndarray, pixel_map: PixelMap) -> np.ndarray:
    u = np.ones((1, 1), dtype=complex)
    for theta in pixel_angles(y, pixel_map.midpoints):
        u = np.kron(u, ry(theta))
    return u


def quantum_average_circuit(
    D: TrainingSet, rng: np.random.Generator, pad: bool = False
) -> tuple[BornMachine, float, int]:
    """Simulate the control-register circuit and postselect the controls on 0.

    Returns the machine, the postselection probability, and a simulated
    repeat-until-success attempt count.
    """
    if pad:
        D = pad_to_power_of_two(D)
    if not _is_power_of_two(D.size):
        raise ValueError(f"|D|={D.size} is not a power of two (pass pad=True to pad)")
    if D.size > CIRCUIT_MAX_SAMPLES:
        raise ValueError(f"circuit path supports |D| <= {CIRCUIT_MAX_SAMPLES}")
    c = D.size.bit_length() - 1
    n = D.n_pixels
    controls = list(range(c))
    register = list(range(c, c + n))
    state = StateVector.zero(c + n)
    for q in controls:
        state = apply_gate(state, GateOp(H, (q,), "h"))
    for z in range(D.size):
        bits = [(z >> (c - 1 - i)) & 1 for i in range(c)]
        u = sample_unitary(D.samples[z], D.pixel_map)
        if c:
            state = apply_controlled(state, u, controls, bits, register)
        else:
            state = apply_gate(state, GateOp(u, tuple(register), "prep"))
    for q in controls:
        state = apply_gate(state, GateOp(H, (q,), "h"))
    if c:
        out, prob = postselect(state, controls, [0] * c)
    else:
        out, prob = state, 1.0
    attempts = int(rng.geometric(min(1.0, prob)))
    return BornMachine(out, n, "circuit", D.size), prob, attempts


def psi_even(n_pixels: int) -> BornMachine:
    if n_pixels < 1:
        raise ValueError("n_pixels must be >= 1")
    d = 1 << n_pixels
    return BornMachine(StateVector(np.full(d, d ** -0.5)), n_pixels, "even", 0)


# --------------------------------------------------------------------------
# Noisy training

_X_BIT = np.array([0, 1, 1, 0], dtype=np.int8)  # I X Y Z
_Z_BIT = np.array([0, 0, 1, 1], dtype=np.int8)


def _frame_word(xb: np.ndarray, zb: np.ndarray) -> str:
    return "".join("IXZY"[x + 2 * z] for x, z in zip(xb, zb))


def _trajectory_states(
    D: TrainingSet, spec: NoiseSpec, n_traj: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct noisy postselected states, their counts, and success weights."""
    n, N = D.n_pixels, D.size
    targets = np.asarray(spec.qubits_for(range(n)), dtype=int)
    if np.any(targets < 0) or np.any(targets >= n):
        raise IndexError("noise target outside the state register")
    half = pixel_angles(D.samples, D.pixel_map.midpoints) / 2
    cos, sin = np.cos(half), np.sin(half)
    clean = product_amplitudes(cos, sin).sum(axis=0)
    n_layers = N + 2

    states = [clean]
    counts = [0]
    for _ in range(n_traj):
        u = rng.random((n_layers, targets.size))
        codes = np.zeros((n_layers, n), dtype=np.int8)
        codes[:, targets] = draw_pauli_codes(spec.kind, spec.probability, u)
        if not codes.any():
            counts[0] += 1
            continue
        xb = np.bitwise_xor.accumulate(_X_BIT[codes], axis=0)
        zb = np.bitwise_xor.accumulate(_Z_BIT[codes], axis=0)
        flip = (xb[:N] ^ zb[:N]).astype(bool)  # frame X or Z before U_z
        total = product_amplitudes(cos, np.where(flip, -sin, sin)).sum(axis=0)
        word = _frame_word(xb[-1], zb[-1])
        if word.strip("I"):
            total = apply_pauli(total.astype(complex), word)
        states.append(total)
        counts.append(1)
    vecs = np.array(states, dtype=complex)
    weights = np.einsum("ij,ij->i", vecs.conj(), vecs).real / N ** 2
    return vecs, np.array(counts, dtype=float), weights


def _density_recursion(D: TrainingSet, spec: NoiseSpec) -> tuple[np.ndarray, float]:
    """Exact postselected state-register density matrix under per-layer channels.

    With A = sum of fully applied (a, b) blocks, L = sum over applied a of the
    block (a, b) for any not-yet-applied b, and Nb the untouched block, each
    controlled-U_k layer updates

        A <- A + U L^dagger + L U^dagger + U Nb U^dagger,   L <- L + U Nb

    and then every matrix passes through the channel.
    """
    n = D.n_pixels
    d = 1 << n
    targets = spec.qubits_for(range(n))
    ops = channel_kraus(spec.kind, spec.probability).operators if not spec.is_trivial else None

    def chan(m):
        if ops is None:
            return m
        for q in targets:
            m = apply_kraus_raw(m, ops, q)
        return m

    Nb = np.zeros((d, d), dtype=complex)
    Nb[0, 0] = 1.0
    L = np.zeros_like(Nb)
    A = np.zeros_like(Nb)
    Nb = chan(Nb)
    for y in D.samples:
        U = sample_unitary(y, D.pixel_map)
        UN = U @ Nb
        A = A + U @ L.conj().T + L @ U.conj().T + UN @ U.conj().T
        L = L + UN
        A, L, Nb = chan(A), chan(L), chan(Nb)
    A = chan(A)
    tr = np.trace(A).real
    return A / tr, tr / D.size ** 2


def train_noisy_mixture(
    D: TrainingSet,
    spec: NoiseSpec,
    n_traj: int,
    rng: np.random.Generator,
    mode: str = "auto",
) -> BornMachine:
    """Noisy quantum average as a density matrix.

    ``mode="trajectory"`` averages ``n_traj`` Pauli trajectories, each
    weighted by its postselection probability so the ensemble converges to
    the exact conditional state; ``mode="density"`` evaluates that state
    exactly (the only option for amplitude damping).  ``"auto"`` picks
    density mode for amplitude damping and trajectories otherwise.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    if mode == "auto":
        mode = "density" if spec.kind == "ampdamp" else "trajectory"
    if mode == "density":
        rho, _ = _density_recursion(D, spec)
        return BornMachine(DensityMatrix(rho), D.n_pixels, "noisy-density", D.size)
    if mode != "trajectory":
        raise ValueError(f"unknown mode {mode!r}")
    if spec.is_trivial:
        pure = quantum_average_direct(D).state
        return BornMachine(pure.projector(), D.n_pixels, "noisy-mixture", D.size)
    vecs, counts, weights = _trajectory_states(D, spec, n_traj, rng)
    w = counts * weights
    normed = vecs / np.sqrt(weights[:, None] * D.size ** 2)
    rho = np.einsum("t,ti,tj->ij", w, normed, normed.conj()) / w.sum()
    return BornMachine(DensityMatrix(rho), D.n_pixels, "noisy-mixture", D.size)


# --------------------------------------------------------------------------
# Experiments

def fidelity_vs_size_experiment(
    train_samples: np.ndarray,
    sizes: Sequence[int],
    repeats: int,
    seed: int,
    pixel_map: Optional[PixelMap] = None,
    global_cap: int = 1 << 15,
) -> tuple[list[dict], dict]:
    """Per-repeat fidelities of subset quantum averages against psi_global and psi_even.

    psi_global is the quantum average of a random subset of
    ``min(global_cap, len(train_samples))`` samples.
    """
    from .dataio import sample_subsets

    train_samples = np.asarray(train_samples, dtype=float)
    n = train_samples.shape[1]
    pixel_map = pixel_map or PixelMap.uniform(n)
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    if max(sizes) > len(train_samples):
        raise ValueError(f"subset size {max(sizes)} exceeds training split {len(train_samples)}")
    rng = np.random.default_rng([seed, 0])
    g_size = min(global_cap, len(train_samples))
    g_idx = rng.permutation(len(train_samples))[:g_size]
    psi_global = quantum_average_direct(TrainingSet(train_samples[g_idx], pixel_map)).state
    even = psi_even(n).state
    rows = []
    for k, size in enumerate(sizes):
        subsets, used = sample_subsets(train_samples, size, repeats, seed=seed + 1 + k)
        for r, sub in enumerate(subsets):
            psi = quantum_average_direct(TrainingSet(sub, pixel_map)).state
            rows.append({
                "subset_size": int(size),
                "repeat": r,
                "fidelity_global": fidelity(psi, psi_global),
                "fidelity_even": fidelity(psi, even),
            })
    meta = {"global_size": g_size, "n_pixels": n}
    return rows, meta


def summarize_size_sweep(rows: Sequence[dict]) -> list[dict]:
    out = []
    for size in sorted({r["subset_size"] for r in rows}):
        sel = [r for r in rows if r["subset_size"] == size]
        out.append({
            "subset_size": size,
            "repeats": len(sel),
            "fidelity_global": float(np.mean([r["fidelity_global"] for r in sel])),
            "fidelity_even": float(np.mean([r["fidelity_even"] for r in sel])),
        })
    return out


def noise_fidelity_experiment(
    train_samples: np.ndarray,
    kinds: Sequence[str],
    probabilities: Sequence[float],
    seed: int,
    subset_size: int = 256,
    n_traj: int = 5000,
    pixel_map: Optional[PixelMap] = None,
    global_cap: int = 1 << 15,
    mode: str = "auto",
) -> list[dict]:
    """Fidelity of a noisy subset quantum average with psi_global per (kind, p).

    Each kind reuses one random stream across probabilities so that runs at
    different p see the same uniform draws.
    """
    train_samples = np.asarray(train_samples, dtype=float)
    n = train_samples.shape[1]
    pixel_map = pixel_map or PixelMap.uniform(n)
    rng = np.random.default_rng([seed, 0])
    g_size = min(global_cap, len(train_samples))
    g_idx = rng.permutation(len(train_samples))[:g_size]
    psi_global = quantum_average_direct(TrainingSet(train_samples[g_idx], pixel_map)).state
    sub_idx = np.random.default_rng([seed, 1]).choice(len(train_samples), subset_size, replace=False)
    D = TrainingSet(train_samples[sub_idx], pixel_map)
    rows = []
    for k, kind in enumerate(kinds):
        for p in probabilities:
            spec = NoiseSpec(kind, p)
            mix = train_noisy_mixture(D, spec, n_traj, np.random.default_rng([seed, 2, k]), mode=mode)
            rows.append({"noise_kind": spec.kind, "p": float(p),
                         "fidelity_global": fidelity(mix.state, psi_global)})
    return rows
