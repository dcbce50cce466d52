"""Command-line entry point: ``qcsense {gen-data,train,qite,reconstruct}``.

Every command is deterministic under ``--seed``.  Outputs are CSV files
(plus a JSON sidecar for datasets) written atomically, so a failed run never
leaves a partial file behind.

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .bornmachine import fidelity_vs_size_experiment, noise_fidelity_experiment
from .dataio import (
    CsvSchemaError,
    LidarConfig,
    Dataset,
    generate_synthetic_lidar,
    load_any,
    preprocess,
    sample_subsets,
)
from .noise import NoiseSpec, canonical_kind
from .pipeline import run_reconstruction_sweep
from .qcore import Hamiltonian, StateVector
from .qite import QiteConfig, qite_run_noisy

log = logging.getLogger("qcsense")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3
MAX_SEED = 2**64 - 1


class InvalidInput(ValueError):
    """Bad flags or inputs detected before any computation starts."""


# --------------------------------------------------------------------------
# Parsing helpers

def _int_list(text: str) -> list[int]:
    try:
        return [int(float(t)) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kinds(text: str) -> list[str]:
    try:
        return [canonical_kind(t.strip()) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _shots(text: str) -> Optional[int]:
    if text.lower() == "exact":
        return None
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"shots must be 'exact' or a number, got {text!r}") from None
    if not value >= 1 or value != int(value):
        raise argparse.ArgumentTypeError(f"shots must be a positive integer, got {text!r}")
    return int(value)


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--seed", type=_seed, default=default(0), help="master seed (u64)")
    parser.add_argument("--jobs", type=int, default=default(1), help="worker processes")
    parser.add_argument("--out", type=Path, default=default(Path(".")),
                        help="output directory, or a .csv file path")
    parser.add_argument("--no-banner", action="store_true", default=default(False),
                        help="omit the timestamped comment line in outputs")


def _noise_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--noise-kind", default="none",
                        help="none, bitflip, dephasing, bitphaseflip, depolarizing or ampdamp")
    parser.add_argument("--noise-prob", type=float, default=0.0)
    parser.add_argument("--n-traj", type=int, default=50, help="noise trajectories per run")


def _qite_flags(parser: argparse.ArgumentParser, dbeta: float) -> None:
    parser.add_argument("--dbeta", type=float, default=dbeta, help="imaginary-time step")
    parser.add_argument("--beta", type=float, default=3.0, help="total imaginary time")
    parser.add_argument("--shots", type=_shots, default=None,
                        help="'exact' or shots per observable, e.g. 1e5")
    parser.add_argument("--max-discards", type=int, default=0,
                        help="redo a step up to this many times if the energy rose")
    parser.add_argument("--domain-size", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qcsense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="generate and preprocess synthetic LIDAR data")
    p.add_argument("--n", type=int, default=10_000, help="raw samples to generate")
    p.add_argument("--zero-fraction", type=float, default=LidarConfig.zero_fraction)
    p.add_argument("--per-pixel-norm", action="store_true", help="normalize each pixel separately")
    p.add_argument("--name", default="dataset", help="base name of the CSV/JSON pair")

    p = sub.add_parser("train", parents=[common], help="Born-machine fidelity experiments")
    p.add_argument("--data", type=Path, required=True, help="dataset CSV (sidecar optional)")
    p.add_argument("--sizes", type=_int_list, default=[2**k for k in range(3, 11)])
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--noise", type=_kinds, default=None,
                   help="comma-separated channels; switches to the noise sweep")
    p.add_argument("--probs", type=_float_list, default=[1e-6, 1e-5, 1e-4, 1e-3, 1e-2])
    p.add_argument("--subset-size", type=int, default=256)
    p.add_argument("--n-traj", type=int, default=5000)
    p.add_argument("--mode", choices=("auto", "trajectory", "density"), default="auto")

    p = sub.add_parser("qite", parents=[common], help="imaginary-time trajectories")
    p.add_argument("--hamiltonian", required=True, help='e.g. "-ZII -IIZ" (qubit 0 leftmost)')
    p.add_argument("--initial", default="plus", help="'plus' or a bitstring such as 010")
    p.add_argument("--runs", type=int, default=1, help="independent seeded runs")
    _qite_flags(p, dbeta=0.05)
    _noise_flags(p)

    p = sub.add_parser("reconstruct", parents=[common], help="compressive-sensing sRMSE sweep")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--train-size", type=int, default=256)
    p.add_argument("--test-size", type=int, default=64)
    p.add_argument("--nc", type=_int_list, default=[2, 3, 4], help="classically measured pixels")
    p.add_argument("--samples", type=int, default=10_000, help="samples per reconstruction")
    p.add_argument("--hardware-faithful", action="store_true",
                   help="re-train and re-project before every sample (slow)")
    _qite_flags(p, dbeta=0.05)
    _noise_flags(p)
    return parser


# --------------------------------------------------------------------------
# Output

def _banner(args) -> Optional[str]:
    if args.no_banner:
        return None
    stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return f"qcsense {__version__} {args.command} seed={args.seed} generated {stamp}"


def _output_path(args, default_name: str) -> Path:
    out = Path(args.out)
    return out if out.suffix.lower() == ".csv" else out / default_name


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise RuntimeError(f"non-finite value {value} in output")
        return repr(float(value))
    return str(value)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(columns: Sequence[str], rows: Sequence[dict], banner: Optional[str]) -> str:
    lines = [f"# {banner}\n"] if banner else []
    lines.append(",".join(columns) + "\n")
    for row in rows:
        lines.append(",".join(_cell(row[c]) for c in columns) + "\n")
    return "".join(lines)


def _dataset_text(dataset: Dataset, banner: Optional[str]) -> str:
    columns = [f"pixel_{i}" for i in range(dataset.n_pixels)]
    rows = [dict(zip(columns, (float(v) for v in r))) for r in dataset.samples]
    return render_csv(columns, rows, banner)


# --------------------------------------------------------------------------
# Validation

def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvalidInput(message)


def _load_dataset(args) -> Dataset:
    if not args.data.exists():
        raise InvalidInput(f"dataset not found: {args.data}")
    try:
        return load_any(args.data, args.seed)
    except (CsvSchemaError, ValueError) as exc:
        raise InvalidInput(str(exc)) from exc


def _qite_config(args) -> QiteConfig:
    _require(args.dbeta > 0, "--dbeta must be positive")
    _require(args.beta >= args.dbeta, "--beta must be >= --dbeta")
    _require(args.max_discards >= 0, "--max-discards must be >= 0")
    _require(args.domain_size is None or args.domain_size >= 1, "--domain-size must be >= 1")
    return QiteConfig(d_beta=args.dbeta, total_beta=args.beta, shots=args.shots,
                      max_discards=args.max_discards, domain_size=args.domain_size)


def _noise_spec(args) -> NoiseSpec:
    try:
        spec = NoiseSpec(args.noise_kind, args.noise_prob)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    _require(args.n_traj >= 1, "--n-traj must be >= 1")
    return spec


# --------------------------------------------------------------------------
# Commands

def cmd_gen_data(args) -> list[Path]:
    _require(args.n >= 1, "--n must be >= 1")
    _require(0.0 <= args.zero_fraction < 1.0, "--zero-fraction must lie in [0, 1)")
    out_dir = Path(args.out)
    _require(out_dir.suffix.lower() != ".csv", "gen-data --out must be a directory")
    cfg = LidarConfig(zero_fraction=args.zero_fraction)
    raw = generate_synthetic_lidar(args.n, args.seed, cfg)
    try:
        dataset = preprocess(raw, args.seed, per_pixel=args.per_pixel_norm)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    csv_path = out_dir / f"{args.name}.csv"
    json_path = out_dir / f"{args.name}.json"
    csv_text = _dataset_text(dataset, _banner(args))
    json_text = json.dumps(dataset.metadata(), indent=1) + "\n"
    _atomic_write(csv_path, csv_text)
    _atomic_write(json_path, json_text)
    return [csv_path, json_path]


def cmd_train(args) -> list[Path]:
    dataset = _load_dataset(args)
    train = dataset.train
    if args.noise:
        _require(all(0.0 <= p <= 1.0 for p in args.probs), "--probs must lie in [0, 1]")
        _require(args.n_traj >= 1, "--n-traj must be >= 1")
        _require(1 <= args.subset_size <= len(train), "--subset-size exceeds the training split")
        if args.mode == "trajectory" and "ampdamp" in args.noise:
            raise InvalidInput("ampdamp needs --mode density or auto")
        rows = noise_fidelity_experiment(train, args.noise, args.probs, args.seed,
                                         subset_size=args.subset_size, n_traj=args.n_traj,
                                         mode=args.mode)
        columns = ["noise_kind", "p", "fidelity_global"]
    else:
        _require(args.repeats >= 1, "--repeats must be >= 1")
        _require(bool(args.sizes) and min(args.sizes) >= 1, "--sizes must be positive")
        feasible = [s for s in args.sizes if s <= len(train)]
        for s in sorted(set(args.sizes) - set(feasible)):
            log.warning("subset size %d exceeds the training split (%d); skipped", s, len(train))
        _require(bool(feasible), "no subset size fits in the training split")
        rows, meta = fidelity_vs_size_experiment(train, feasible, args.repeats, args.seed)
        log.info("psi_global built from %d samples", meta["global_size"])
        columns = ["subset_size", "repeat", "fidelity_global", "fidelity_even"]
    path = _output_path(args, "train.csv")
    _atomic_write(path, render_csv(columns, rows, _banner(args)))
    return [path]


def _initial_state(text: str, n: int) -> StateVector:
    if text == "plus":
        return StateVector.from_amplitudes(np.ones(2**n, dtype=complex))
    _require(len(text) == n and set(text) <= {"0", "1"},
             f"--initial must be 'plus' or a {n}-bit string")
    return StateVector.basis(text)


def cmd_qite(args) -> list[Path]:
    try:
        H = Hamiltonian.from_string(args.hamiltonian)
    except ValueError as exc:
        raise InvalidInput(f"bad Hamiltonian {args.hamiltonian!r}: {exc}") from exc
    qcfg = _qite_config(args)
    spec = _noise_spec(args)
    _require(args.runs >= 1, "--runs must be >= 1")
    state0 = _initial_state(args.initial, H.n_qubits)
    rows = []
    for r, child in enumerate(np.random.SeedSequence(args.seed).spawn(args.runs)):
        traj = qite_run_noisy(H, state0, qcfg, spec, np.random.default_rng(child), n_traj=args.n_traj)
        discards = [0] + list(traj.discards_used)
        for (beta, energy), d in zip(traj.points, discards):
            rows.append({"beta": beta, "energy": energy, "discards": d, "trajectory_id": r})
    path = _output_path(args, "qite.csv")
    _atomic_write(path, render_csv(["beta", "energy", "discards", "trajectory_id"], rows, _banner(args)))
    return [path]


def cmd_reconstruct(args) -> list[Path]:
    dataset = _load_dataset(args)
    qcfg = _qite_config(args)
    spec = _noise_spec(args)
    n = dataset.n_pixels
    _require(bool(args.nc) and all(0 < k < n for k in args.nc), f"--nc values must lie in 1..{n - 1}")
    _require(args.samples >= 1, "--samples must be >= 1")
    _require(args.test_size >= 1, "--test-size must be >= 1")
    _require(args.test_size <= len(dataset.test_indices),
             f"--test-size exceeds the test split ({len(dataset.test_indices)})")
    _require(args.jobs >= 1, "--jobs must be >= 1")
    try:
        (train,), _ = sample_subsets(dataset, args.train_size, 1, args.seed)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc
    pick = np.random.default_rng([args.seed, 1]).choice(len(dataset.test_indices), args.test_size,
                                                        replace=False)
    test = dataset.test[np.sort(pick)]
    per_test, means = run_reconstruction_sweep(
        test, train, args.nc, qcfg, spec, seed=args.seed, n_samples=args.samples,
        n_traj=args.n_traj, jobs=args.jobs, hardware_faithful=args.hardware_faithful,
    )
    rows = per_test + [dict(m, test_index="", srmse="") for m in means]
    columns = ["N_c", "noise_kind", "p", "test_index", "srmse", "mean_srmse"]
    path = _output_path(args, "reconstruct.csv")
    _atomic_write(path, render_csv(columns, rows, _banner(args)))
    return [path]


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "qite": cmd_qite,
    "reconstruct": cmd_reconstruct,
}


def _attach_hamiltonian(argv: Sequence[str]) -> list[str]:
    """Glue the value onto ``--hamiltonian`` so signed words like ``-Z`` are not read as flags."""
    out: list[str] = []
    it = iter(argv)
    for tok in it:
        if tok == "--hamiltonian":
            value = next(it, None)
            out.append(tok if value is None else f"{tok}={value}")
        else:
            out.append(tok)
    return out


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = _attach_hamiltonian(sys.argv[1:] if argv is None else list(argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    warnings.simplefilter("default")
    try:
        _require(args.jobs >= 1, "--jobs must be >= 1")
        paths = COMMANDS[args.command](args)
    except InvalidInput as exc:
        print(f"qcsense: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"qcsense: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
