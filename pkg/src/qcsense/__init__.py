"""Simulated quantum compressive sensing: Born-machine training, imaginary-time
projection and reconstruction of unmeasured pixels, with noise models."""

__version__ = "0.1.0"

from .bornmachine import BornMachine, TrainingSet, quantum_average_circuit, quantum_average_direct
from .encoding import PixelMap, decode_frequency, encode_signal, f_v, f_v_inverse
from .noise import KrausChannel, NoiseSpec, channel_kraus
from .qcore import DensityMatrix, Hamiltonian, PauliTerm, StateVector, expectation, fidelity
from .qite import QiteConfig, QiteTrajectory, qite_run, qite_run_noisy, qite_step, tomography

__all__ = [
    "BornMachine", "TrainingSet", "quantum_average_circuit", "quantum_average_direct",
    "PixelMap", "decode_frequency", "encode_signal", "f_v", "f_v_inverse",
    "KrausChannel", "NoiseSpec", "channel_kraus",
    "DensityMatrix", "Hamiltonian", "PauliTerm", "StateVector", "expectation", "fidelity",
    "QiteConfig", "QiteTrajectory", "qite_run", "qite_run_noisy", "qite_step", "tomography",
]
