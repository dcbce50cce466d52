"""Single-qubit noise channels: exact Kraus maps and Pauli-trajectory unravelings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .qcore import I2, X, Y, Z, DensityMatrix, StateVector, _check_targets, apply_pauli

KINDS = ("none", "bitflip", "phaseflip", "bitphaseflip", "depolarizing", "ampdamp")
ALIASES = {"dephasing": "phaseflip", "bit-flip": "bitflip", "phase-flip": "phaseflip",
           "amplitude_damping": "ampdamp", "depolarising": "depolarizing"}
# Pauli codes used by trajectories: 0=I, 1=X, 2=Y, 3=Z
PAULI_CODES = "IXYZ"


def canonical_kind(kind: str) -> str:
    k = str(kind).lower()
    k = ALIASES.get(k, k)
    if k not in KINDS:
        raise ValueError(f"unknown noise kind {kind!r}; expected one of {KINDS}")
    return k


class DensityOnlyChannel(ValueError):
    """Amplitude damping has no Pauli unraveling here."""


@dataclass(frozen=True)
class KrausChannel:
    operators: tuple[np.ndarray, ...]
    label: str = ""

    def __post_init__(self):
        ops = tuple(np.asarray(k, dtype=complex) for k in self.operators)
        if not ops or any(k.shape != (2, 2) for k in ops):
            raise ValueError("expected a non-empty list of 2x2 Kraus operators")
        total = sum(k.conj().T @ k for k in ops)
        if not np.allclose(total, I2, atol=1e-10):
            raise ValueError(f"Kraus operators for {self.label!r} are not complete")
        object.__setattr__(self, "operators", ops)

    def completeness_error(self) -> float:
        total = sum(k.conj().T @ k for k in self.operators)
        return float(np.abs(total - I2).max())


@dataclass(frozen=True)
class NoiseSpec:
    """Which channel to inject, how strongly, and on which qubits.

    ``targets=None`` means "the qubits touched by the gate layer just applied";
    an explicit tuple pins injection to those qubits.
    """

    kind: str = "none"
    probability: float = 0.0
    targets: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        kind = canonical_kind(self.kind)
        p = float(self.probability)
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"noise probability {p} outside [0, 1]")
        targets = self.targets
        if targets is not None:
            targets = tuple(int(t) for t in targets)
            if kind != "none" and not targets:
                raise ValueError("noise targets must be non-empty")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "probability", p)
        object.__setattr__(self, "targets", targets)

    @property
    def is_trivial(self) -> bool:
        return self.kind == "none" or self.probability == 0.0

    @property
    def stochastic(self) -> bool:
        return self.kind not in ("none", "ampdamp")

    def qubits_for(self, touched: Sequence[int]) -> tuple[int, ...]:
        return tuple(touched) if self.targets is None else self.targets


NOISELESS = NoiseSpec()


def channel_kraus(kind: str, param: float) -> KrausChannel:
    """Kraus operators for one of the supported single-qubit channels.

    Operators with an exactly zero weight are dropped, so every channel at
    ``param=0`` reduces to the single operator ``I``.
    """
    kind = canonical_kind(kind)
    p = float(param)
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"channel parameter {p} outside [0, 1]")
    if kind == "none":
        ops = [I2]
    elif kind in ("bitflip", "phaseflip", "bitphaseflip"):
        pauli = {"bitflip": X, "phaseflip": Z, "bitphaseflip": Y}[kind]
        ops = [np.sqrt(1 - p) * I2, np.sqrt(p) * pauli]
    elif kind == "depolarizing":
        w = np.sqrt(p / 4)
        ops = [np.sqrt(1 - 3 * p / 4) * I2, w * X, w * Y, w * Z]
    else:
        ops = [
            np.array([[1, 0], [0, np.sqrt(1 - p)]], dtype=complex),
            np.array([[0, np.sqrt(p)], [0, 0]], dtype=complex),
        ]
    ops = [k for k in ops if np.any(k != 0)]
    return KrausChannel(tuple(ops), label=f"{kind}({p:g})")


def apply_kraus_raw(rho: np.ndarray, ops: Sequence[np.ndarray], qubit: int) -> np.ndarray:
    """Sum_k K rho K^dagger with K embedded on ``qubit``; works on any square array."""
    n = rho.shape[0].bit_length() - 1
    t = rho.reshape((2,) * (2 * n))
    out = np.zeros_like(t)
    for k in ops:
        a = np.moveaxis(np.tensordot(k, t, axes=([1], [qubit])), 0, qubit)
        out += np.moveaxis(np.tensordot(k.conj(), a, axes=([1], [qubit + n])), 0, qubit + n)
    return out.reshape(rho.shape)


def apply_channel(rho: DensityMatrix, channel: KrausChannel, qubit: int) -> DensityMatrix:
    (qubit,) = _check_targets([qubit], rho.n_qubits)
    if len(channel.operators) == 1 and np.allclose(channel.operators[0], I2, atol=0):
        return rho
    return DensityMatrix(apply_kraus_raw(rho.entries, channel.operators, qubit))


def apply_noise_density(rho: DensityMatrix, spec: NoiseSpec, touched: Sequence[int]) -> DensityMatrix:
    if spec.is_trivial:
        return rho
    channel = channel_kraus(spec.kind, spec.probability)
    out = rho.entries
    for q in _check_targets(spec.qubits_for(touched), rho.n_qubits):
        out = apply_kraus_raw(out, channel.operators, q)
    return DensityMatrix(out)


def pauli_thresholds(kind: str, p: float) -> np.ndarray:
    """Cumulative thresholds on a uniform draw u: X if u<t[0], Y if u<t[1], Z if u<t[2]."""
    kind = canonical_kind(kind)
    if kind == "ampdamp":
        raise DensityOnlyChannel(
            "amplitude damping is a density-matrix-only channel; use density mode"
        )
    if kind == "none":
        return np.zeros(3)
    if kind == "bitflip":
        return np.array([p, p, p])
    if kind == "bitphaseflip":
        return np.array([0.0, p, p])
    if kind == "phaseflip":
        return np.array([0.0, 0.0, p])
    return np.array([p / 4, p / 2, 3 * p / 4])


def draw_pauli_codes(kind: str, p: float, u: np.ndarray) -> np.ndarray:
    """Map uniform draws to Pauli codes (0=I, 1=X, 2=Y, 3=Z) for the unraveling."""
    t = pauli_thresholds(kind, p)
    codes = np.zeros(np.shape(u), dtype=np.int8)
    codes[u < t[2]] = 3
    codes[u < t[1]] = 2
    codes[u < t[0]] = 1
    return codes


def inject_stochastic(
    state: StateVector, spec: NoiseSpec, rng: np.random.Generator,
    touched: Optional[Sequence[int]] = None,
) -> StateVector:
    """Apply one sampled Pauli per target qubit.

    Exactly one uniform draw is consumed per target whenever the spec is
    non-trivial, so runs at different probabilities share random numbers.
    """
    if spec.kind == "ampdamp":
        raise DensityOnlyChannel(
            "amplitude damping is a density-matrix-only channel; use density mode"
        )
    if spec.is_trivial:
        return state
    n = state.n_qubits
    touched = range(n) if touched is None else touched
    qubits = _check_targets(spec.qubits_for(touched), n)
    codes = draw_pauli_codes(spec.kind, spec.probability, rng.random(len(qubits)))
    if not codes.any():
        return state
    word = ["I"] * n
    for q, c in zip(qubits, codes):
        word[q] = PAULI_CODES[c]
    return StateVector.from_amplitudes(apply_pauli(state.amplitudes, "".join(word)))


def sample_counts(state, n_shots: int, rng: np.random.Generator) -> dict[str, int]:
    """Multinomial histogram over bitstrings (qubit 0 leftmost); zero counts omitted."""
    n_shots = int(n_shots)
    if n_shots < 1:
        raise ValueError("n_shots must be >= 1")
    probs = state.probabilities()
    probs = probs / probs.sum()
    counts = rng.multinomial(n_shots, probs)
    n = state.n_qubits
    return {format(k, f"0{n}b"): int(c) for k, c in enumerate(counts) if c}
