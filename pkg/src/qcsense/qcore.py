"""Dense statevector and density-matrix primitives.

Basis convention: qubit 0 is the most significant bit of a basis index and
the leftmost letter of a Pauli string, so ``"ZII"`` acts on qubit 0 and
``|100>`` has index 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence, Union

import numpy as np

ATOL = 1e-10
MAX_STATE_QUBITS = 20
MAX_DENSITY_QUBITS = 12

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S_DAG = np.array([[1, 0], [0, -1j]], dtype=complex)
PAULI_MATRICES = {"I": I2, "X": X, "Y": Y, "Z": Z}


class ImpossiblePostselection(ValueError):
    """Raised when the requested outcome has (numerically) zero probability."""


def ry(theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def _n_from_dim(dim: int) -> int:
    n = int(dim).bit_length() - 1
    if dim < 1 or 1 << n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


@dataclass(frozen=True, eq=False)
class StateVector:
    """Unit-norm pure state over ``n_qubits`` qubits."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        n = _n_from_dim(amps.size)
        if n > MAX_STATE_QUBITS:
            raise ValueError(f"{n} qubits exceeds statevector cap {MAX_STATE_QUBITS}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > 1e-8:
            raise ValueError(f"state is not normalized (norm={norm:.12g})")
        amps = amps / norm
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def from_amplitudes(cls, amps, normalize: bool = True) -> "StateVector":
        amps = np.asarray(amps, dtype=complex).reshape(-1)
        if normalize:
            norm = np.linalg.norm(amps)
            if norm < 1e-300:
                raise ValueError("cannot normalize a zero vector")
            amps = amps / norm
        return cls(amps)

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=complex)
        amps[0] = 1.0
        return cls(amps)

    @classmethod
    def basis(cls, bits: str) -> "StateVector":
        amps = np.zeros(1 << len(bits), dtype=complex)
        amps[int(bits, 2)] = 1.0
        return cls(amps)

    @property
    def n_qubits(self) -> int:
        return _n_from_dim(self.amplitudes.size)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def projector(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __len__(self) -> int:
        return self.dim


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator."""

    entries: np.ndarray
    check_psd: bool = field(default=False, repr=False, compare=False)

    def __post_init__(self):
        rho = np.array(self.entries, dtype=complex)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError("density matrix must be square")
        n = _n_from_dim(rho.shape[0])
        if n > MAX_DENSITY_QUBITS:
            raise ValueError(f"{n} qubits exceeds density-matrix cap {MAX_DENSITY_QUBITS}")
        if not np.allclose(rho, rho.conj().T, atol=1e-8):
            raise ValueError("density matrix is not Hermitian")
        tr = np.trace(rho).real
        if abs(tr - 1.0) > 1e-8:
            raise ValueError(f"density matrix trace is {tr:.12g}, expected 1")
        rho = 0.5 * (rho + rho.conj().T) / tr
        if self.check_psd and np.linalg.eigvalsh(rho).min() < -1e-9:
            raise ValueError("density matrix is not positive semidefinite")
        rho.setflags(write=False)
        object.__setattr__(self, "entries", rho)

    @classmethod
    def maximally_mixed(cls, n_qubits: int) -> "DensityMatrix":
        d = 1 << n_qubits
        return cls(np.eye(d, dtype=complex) / d)

    @property
    def n_qubits(self) -> int:
        return _n_from_dim(self.entries.shape[0])

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def probabilities(self) -> np.ndarray:
        return np.clip(np.diag(self.entries).real, 0.0, None)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.entries, self.entries)))

    def trace(self) -> float:
        return float(np.trace(self.entries).real)


State = Union[StateVector, DensityMatrix]


def as_density(state: State) -> DensityMatrix:
    return state.projector() if isinstance(state, StateVector) else state


# --------------------------------------------------------------------------
# Pauli algebra

_PAULI_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("X", "X"): (1, "I"), ("X", "Y"): (1j, "Z"), ("X", "Z"): (-1j, "Y"),
    ("Y", "I"): (1, "Y"), ("Y", "X"): (-1j, "Z"), ("Y", "Y"): (1, "I"), ("Y", "Z"): (1j, "X"),
    ("Z", "I"): (1, "Z"), ("Z", "X"): (1j, "Y"), ("Z", "Y"): (-1j, "X"), ("Z", "Z"): (1, "I"),
}


def pauli_product(a: str, b: str) -> tuple[complex, str]:
    """Return ``(phase, word)`` with ``a @ b == phase * word``."""
    if len(a) != len(b):
        raise ValueError("Pauli words differ in length")
    phase: complex = 1
    out = []
    for p, q in zip(a, b):
        f, r = _PAULI_PRODUCT[(p, q)]
        phase *= f
        out.append(r)
    return phase, "".join(out)


@dataclass(frozen=True)
class PauliTerm:
    coefficient: float
    axes: str

    def __post_init__(self):
        axes = str(self.axes).upper()
        if not axes or set(axes) - set("IXYZ"):
            raise ValueError(f"invalid Pauli word {self.axes!r}")
        if not np.isfinite(self.coefficient):
            raise ValueError("coefficient must be finite")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "coefficient", float(self.coefficient))

    @property
    def n_qubits(self) -> int:
        return len(self.axes)

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(i for i, a in enumerate(self.axes) if a != "I")

    def matrix(self) -> np.ndarray:
        return self.coefficient * pauli_matrix(self.axes)

    def __str__(self):
        return f"{self.coefficient:+g}*{self.axes}"


@dataclass(frozen=True)
class Hamiltonian:
    terms: tuple[PauliTerm, ...]

    def __post_init__(self):
        terms = tuple(self.terms)
        if not terms:
            raise ValueError("Hamiltonian needs at least one term")
        n = terms[0].n_qubits
        if any(t.n_qubits != n for t in terms):
            raise ValueError("all terms must act on the same number of qubits")
        object.__setattr__(self, "terms", terms)

    @property
    def n_qubits(self) -> int:
        return self.terms[0].n_qubits

    @classmethod
    def from_string(cls, text: str) -> "Hamiltonian":
        """Parse whitespace-separated signed Pauli words, e.g. ``"-ZII -IIZ"``.

        A word may carry a numeric prefix (``"-0.5*XX"`` or ``"+2ZZ"``).
        """
        import re

        pattern = re.compile(r"^([+-]?)(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)?\*?([IXYZ]+)$")
        terms = []
        for tok in text.split():
            m = pattern.match(tok)
            if not m:
                raise ValueError(f"cannot parse Hamiltonian token {tok!r}")
            sign = -1.0 if m.group(1) == "-" else 1.0
            mag = float(m.group(2)) if m.group(2) else 1.0
            terms.append(PauliTerm(sign * mag, m.group(3)))
        if not terms:
            raise ValueError("empty Hamiltonian string")
        return cls(tuple(terms))

    def matrix(self) -> np.ndarray:
        return sum(t.matrix() for t in self.terms)

    def __str__(self):
        return " ".join(str(t) for t in self.terms)


@lru_cache(maxsize=4096)
def pauli_masks(axes: str) -> tuple[int, int, int]:
    """``(x_mask, z_mask, n_y)`` so that P|k> = i^n_y (-1)^|k&z| |k^x>."""
    n = len(axes)
    xm = zm = 0
    for q, a in enumerate(axes):
        bit = 1 << (n - 1 - q)
        if a in "XY":
            xm |= bit
        if a in "ZY":
            zm |= bit
    return xm, zm, axes.count("Y")


@lru_cache(maxsize=64)
def _phase_table(axes_list: tuple[str, ...], n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flip masks, per-basis-index phases and gather indices for a batch of Pauli words.

    Row r satisfies (P_r psi)[j] = phases[r, j] * psi[src[r, j]].
    """
    masks = np.array([pauli_masks(a) for a in axes_list], dtype=np.int64).reshape(-1, 3)
    idx = np.arange(1 << n, dtype=np.int64)
    src = idx[None, :] ^ masks[:, :1]
    parity = np.bitwise_count(src & masks[:, 1:2]).astype(np.int64) & 1
    phases = (1j ** masks[:, 2])[:, None] * (1 - 2 * parity)
    for arr in (masks, phases, src):
        arr.setflags(write=False)
    return masks[:, 0], phases, src


def apply_pauli(amps: np.ndarray, axes: str) -> np.ndarray:
    """Return P|psi> for a raw amplitude vector."""
    n = len(axes)
    xm, zm, ny = pauli_masks(axes)
    idx = np.arange(1 << n, dtype=np.int64)
    src = idx ^ xm
    sign = 1 - 2 * (np.bitwise_count(src & zm).astype(np.int64) & 1)
    return (1j ** ny) * sign * amps[src]


def pauli_actions(amps: np.ndarray, axes_list: Sequence[str]) -> np.ndarray:
    """Stack of P|psi> for every word, shape ``(len(axes_list), dim)``."""
    n = _n_from_dim(amps.size)
    _, phases, src = _phase_table(tuple(axes_list), n)
    return phases * amps[src]


def pauli_expectations(state: State, axes_list: Sequence[str]) -> np.ndarray:
    """Exact real expectations of unit-coefficient Pauli words."""
    axes_list = tuple(axes_list)
    if not axes_list:
        return np.zeros(0)
    n = state.n_qubits
    if any(len(a) != n for a in axes_list):
        raise ValueError("Pauli word length does not match the state")
    if isinstance(state, StateVector):
        acts = pauli_actions(state.amplitudes, axes_list)
        vals = acts @ state.amplitudes.conj()
    else:
        # Tr(rho P) = sum_j (P rho)[j, j] = sum_j phases[j] rho[src[j], j]
        _, phases, src = _phase_table(axes_list, n)
        idx = np.arange(1 << n, dtype=np.int64)
        vals = np.sum(phases * state.entries[src, idx[None, :]], axis=1)
    return vals.real


def pauli_matrix(axes: str) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for a in axes:
        out = np.kron(out, PAULI_MATRICES[a])
    return out


# --------------------------------------------------------------------------
# Gates

@dataclass(frozen=True)
class GateOp:
    unitary: np.ndarray
    targets: tuple[int, ...]
    label: str = ""

    def __post_init__(self):
        u = np.asarray(self.unitary, dtype=complex)
        targets = tuple(int(t) for t in np.atleast_1d(self.targets))
        if len(set(targets)) != len(targets):
            raise ValueError("gate targets must be distinct")
        k = len(targets)
        if u.shape != (1 << k, 1 << k):
            raise ValueError(f"unitary shape {u.shape} does not match {k} target(s)")
        if not np.allclose(u.conj().T @ u, np.eye(1 << k), atol=ATOL):
            raise ValueError(f"gate {self.label!r} is not unitary")
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "targets", targets)


def _check_targets(targets: Iterable[int], n: int) -> tuple[int, ...]:
    targets = tuple(int(t) for t in targets)
    for t in targets:
        if not 0 <= t < n:
            raise IndexError(f"qubit index {t} out of range for {n} qubits")
    if len(set(targets)) != len(targets):
        raise ValueError("qubit indices must be distinct")
    return targets


def _apply_to_axes(tensor: np.ndarray, u: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract a k-qubit matrix into the given tensor axes."""
    k = len(axes)
    ut = u.reshape((2,) * (2 * k))
    out = np.tensordot(ut, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply_unitary_raw(amps: np.ndarray, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    n = _n_from_dim(amps.size)
    out = _apply_to_axes(amps.reshape((2,) * n), u, targets)
    return out.reshape(-1)


def apply_unitary_density(rho: np.ndarray, u: np.ndarray, targets: Sequence[int]) -> np.ndarray:
    n = _n_from_dim(rho.shape[0])
    t = rho.reshape((2,) * (2 * n))
    t = _apply_to_axes(t, u, list(targets))
    t = _apply_to_axes(t, u.conj(), [q + n for q in targets])
    return t.reshape(rho.shape)


def apply_gate(state: State, gate: GateOp) -> State:
    """Apply ``gate`` to a statevector (or conjugate a density matrix by it)."""
    targets = _check_targets(gate.targets, state.n_qubits)
    if isinstance(state, StateVector):
        return StateVector.from_amplitudes(apply_unitary_raw(state.amplitudes, gate.unitary, targets))
    return DensityMatrix(apply_unitary_density(state.entries, gate.unitary, targets))


def apply_controlled(
    state: StateVector,
    unitary: np.ndarray,
    controls: Sequence[int],
    control_bits: Sequence[int],
    targets: Sequence[int],
) -> StateVector:
    """Apply ``unitary`` on ``targets`` only where ``controls`` read ``control_bits``."""
    n = state.n_qubits
    controls = _check_targets(controls, n)
    targets = _check_targets(targets, n)
    if set(controls) & set(targets):
        raise ValueError("control and target qubits overlap")
    tensor = state.amplitudes.reshape((2,) * n).copy()
    sel = [slice(None)] * n
    for c, b in zip(controls, control_bits, strict=True):
        sel[c] = int(b)
    sub = tensor[tuple(sel)]
    # axes of `sub` are the remaining qubits in order
    remaining = [q for q in range(n) if q not in controls]
    sub_axes = [remaining.index(t) for t in targets]
    tensor[tuple(sel)] = _apply_to_axes(sub, unitary, sub_axes)
    return StateVector.from_amplitudes(tensor.reshape(-1))


# --------------------------------------------------------------------------
# Observables and reduced states

def expectation(state: State, obs: Union[PauliTerm, Hamiltonian]) -> float:
    terms = obs.terms if isinstance(obs, Hamiltonian) else (obs,)
    if terms[0].n_qubits != state.n_qubits:
        raise ValueError(
            f"observable acts on {terms[0].n_qubits} qubits, state has {state.n_qubits}"
        )
    vals = pauli_expectations(state, [t.axes for t in terms])
    return float(sum(t.coefficient * v for t, v in zip(terms, vals)))


def partial_trace(state: State, keep: Iterable[int]) -> DensityMatrix:
    """Reduced density matrix on ``keep`` (returned in ascending qubit order)."""
    n = state.n_qubits
    keep = sorted(set(_check_targets(keep, n)))
    if not keep:
        raise ValueError("keep set must be non-empty")
    drop = [q for q in range(n) if q not in keep]
    dk, dd = 1 << len(keep), 1 << len(drop)
    if isinstance(state, StateVector):
        m = np.transpose(state.amplitudes.reshape((2,) * n), keep + drop).reshape(dk, dd)
        return DensityMatrix(m @ m.conj().T)
    t = state.entries.reshape((2,) * (2 * n))
    perm = keep + drop + [q + n for q in keep] + [q + n for q in drop]
    t = np.transpose(t, perm).reshape(dk, dd, dk, dd)
    return DensityMatrix(np.einsum("ajbj->ab", t))


def _psd_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(rho)
    if w.min() < -1e-9:
        raise ValueError("input is not positive semidefinite")
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


def fidelity(a: State, b: State) -> float:
    """State fidelity: |<a|b>|^2, <a|rho|a>, or (Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2."""
    if a.dim != b.dim:
        raise ValueError("fidelity arguments have different dimensions")
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        f = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    elif isinstance(a, StateVector) or isinstance(b, StateVector):
        psi, rho = (a, b) if isinstance(a, StateVector) else (b, a)
        if np.linalg.eigvalsh(rho.entries).min() < -1e-9:
            raise ValueError("input is not positive semidefinite")
        f = np.vdot(psi.amplitudes, rho.entries @ psi.amplitudes).real
    else:
        sa = _psd_sqrt(a.entries)
        _psd_sqrt(b.entries)
        m = sa @ b.entries @ sa
        w = np.clip(np.linalg.eigvalsh(0.5 * (m + m.conj().T)), 0.0, None)
        f = np.sum(np.sqrt(w)) ** 2
    return float(np.clip(f, 0.0, 1.0))


def trace_distance(a: State, b: State) -> float:
    d = as_density(a).entries - as_density(b).entries
    return float(0.5 * np.abs(np.linalg.eigvalsh(d)).sum())


# --------------------------------------------------------------------------
# Measurement

def marginal_probabilities(state: State, indices: Sequence[int]) -> np.ndarray:
    """Born distribution over the bit patterns of ``indices`` (first index = MSB)."""
    n = state.n_qubits
    indices = list(_check_targets(indices, n))
    p = state.probabilities().reshape((2,) * n)
    rest = tuple(q for q in range(n) if q not in indices)
    p = p.sum(axis=rest) if rest else p
    # after summing, remaining axes are in ascending order; reorder to `indices`
    order = sorted(indices)
    p = np.transpose(p, [order.index(q) for q in indices])
    return p.reshape(-1)


def _int_to_bits(k: int, width: int) -> tuple[int, ...]:
    return tuple((k >> (width - 1 - i)) & 1 for i in range(width))


def measure_qubits(
    state: StateVector, indices: Sequence[int], rng: np.random.Generator
) -> tuple[tuple[int, ...], StateVector, float]:
    """Sample ``indices`` in the computational basis and collapse the full register."""
    indices = list(_check_targets(indices, state.n_qubits))
    probs = marginal_probabilities(state, indices)
    probs = probs / probs.sum()
    k = int(rng.choice(probs.size, p=probs))
    bits = _int_to_bits(k, len(indices))
    n = state.n_qubits
    tensor = state.amplitudes.reshape((2,) * n)
    mask = np.zeros((2,) * n, dtype=bool)
    sel = [slice(None)] * n
    for q, b in zip(indices, bits):
        sel[q] = b
    mask[tuple(sel)] = True
    collapsed = np.where(mask, tensor, 0).reshape(-1)
    return bits, StateVector.from_amplitudes(collapsed), float(probs[k])


def postselect(
    state: StateVector, indices: Sequence[int], bits: Sequence[int]
) -> tuple[StateVector, float]:
    """Project ``indices`` onto ``bits`` and return the remaining qubits' state."""
    n = state.n_qubits
    indices = list(_check_targets(indices, n))
    bits = [int(b) for b in bits]
    if len(bits) != len(indices):
        raise ValueError("bit pattern length does not match indices")
    if any(b not in (0, 1) for b in bits):
        raise ValueError("bits must be 0 or 1")
    if len(indices) == n:
        raise ValueError("cannot postselect every qubit; nothing would remain")
    tensor = state.amplitudes.reshape((2,) * n)
    sel = [slice(None)] * n
    for q, b in zip(indices, bits):
        sel[q] = b
    sub = tensor[tuple(sel)].reshape(-1)
    prob = float(np.vdot(sub, sub).real)
    if prob < 1e-12:
        raise ImpossiblePostselection(
            f"outcome {bits} on qubits {indices} has probability {prob:.3g}"
        )
    return StateVector.from_amplitudes(sub), prob


def bitstrings(n: int) -> list[str]:
    return [format(k, f"0{n}b") for k in range(1 << n)]
