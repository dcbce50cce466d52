import csv
import json
import subprocess
import sys

import pytest

from qcsense.cli import main


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--n", "600", "--seed", "7", "--out", str(out), "--no-banner"]) == 0
    return out / "dataset.csv"


def test_gen_data_writes_csv_and_sidecar(dataset):
    header = dataset.read_text().splitlines()[0]
    assert header == "pixel_0,pixel_1,pixel_2,pixel_3,pixel_4"
    meta = json.loads(dataset.with_suffix(".json").read_text())
    assert set(meta) == {"seed", "min", "max", "train_indices", "test_indices"}
    assert meta["seed"] == 7


def test_gen_data_is_deterministic(tmp_path, dataset):
    assert main(["gen-data", "--n", "600", "--seed", "7", "--out", str(tmp_path), "--no-banner"]) == 0
    assert (tmp_path / "dataset.csv").read_bytes() == dataset.read_bytes()
    assert (tmp_path / "dataset.json").read_bytes() == dataset.with_suffix(".json").read_bytes()


def test_banner_line_is_a_comment(tmp_path):
    assert main(["--seed", "1", "gen-data", "--n", "50", "--out", str(tmp_path)]) == 0
    first = (tmp_path / "dataset.csv").read_text().splitlines()[0]
    assert first.startswith("# qcsense") and "seed=1" in first


@pytest.mark.parametrize("argv", [
    ["gen-data", "--n", "0"],
    ["gen-data", "--zero-fraction", "1.5"],
    ["gen-data", "--seed", "-1"],
    ["qite", "--hamiltonian", "-ZIX+"],
    ["qite", "--hamiltonian=-ZIX+"],
    ["qite", "--hamiltonian", "-ZZ", "--initial", "0"],
    ["qite", "--hamiltonian", "-Z", "--dbeta", "0"],
    ["qite", "--hamiltonian", "-Z", "--noise-kind", "thermal"],
    ["qite", "--hamiltonian", "-Z", "--shots", "many"],
    ["train", "--data", "missing.csv"],
    ["reconstruct", "--data", "missing.csv"],
    ["frobnicate"],
])
def test_invalid_input_exits_2_without_output(tmp_path, argv):
    assert main(argv + ["--out", str(tmp_path)]) == 2
    assert list(tmp_path.iterdir()) == []


def test_reconstruct_rejects_bad_nc(tmp_path, dataset):
    assert main(["reconstruct", "--data", str(dataset), "--nc", "5", "--out", str(tmp_path)]) == 2


def test_train_size_sweep_rows(tmp_path, dataset):
    out = tmp_path / "sizes.csv"
    assert main(["train", "--data", str(dataset), "--sizes", "8,16,32", "--repeats", "2",
                 "--out", str(out), "--no-banner"]) == 0
    rows = read_rows(out)
    assert list(rows[0]) == ["subset_size", "repeat", "fidelity_global", "fidelity_even"]
    assert len(rows) == 6
    assert all(0.0 <= float(r["fidelity_global"]) <= 1.0 for r in rows)


def test_train_noise_sweep_rows(tmp_path, dataset):
    out = tmp_path / "noise.csv"
    assert main(["train", "--data", str(dataset), "--noise", "bitflip,dephasing,depolarizing",
                 "--probs", "1e-6,1e-5,1e-4,1e-3,1e-2", "--subset-size", "16", "--n-traj", "20",
                 "--out", str(out), "--no-banner"]) == 0
    rows = read_rows(out)
    assert list(rows[0]) == ["noise_kind", "p", "fidelity_global"]
    assert len(rows) == 15
    assert {r["noise_kind"] for r in rows} == {"bitflip", "phaseflip", "depolarizing"}


def test_qite_exact_reaches_ground_energy(tmp_path):
    out = tmp_path / "q.csv"
    assert main(["qite", "--hamiltonian", "-ZII -IIZ", "--dbeta", "0.005", "--shots", "exact",
                 "--out", str(out), "--no-banner"]) == 0
    rows = read_rows(out)
    assert list(rows[0]) == ["beta", "energy", "discards", "trajectory_id"]
    assert len(rows) == 601
    assert float(rows[-1]["energy"]) == pytest.approx(-2.0, abs=0.05)


def test_qite_runs_and_flags_after_subcommand(tmp_path):
    argv = ["qite", "--hamiltonian", "-Z", "--dbeta", "0.1", "--beta", "0.5", "--shots", "1e3",
            "--max-discards", "3", "--runs", "2", "--seed", "5", "--no-banner", "--out"]
    assert main(argv + [str(tmp_path / "a.csv")]) == 0
    assert main(argv + [str(tmp_path / "b.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    rows = read_rows(tmp_path / "a.csv")
    assert {r["trajectory_id"] for r in rows} == {"0", "1"}
    assert all(0 <= int(r["discards"]) <= 3 for r in rows)


def test_reconstruct_row_accounting_and_zero_noise(tmp_path, dataset):
    base = ["reconstruct", "--data", str(dataset), "--train-size", "32", "--test-size", "4",
            "--samples", "500", "--dbeta", "0.1", "--beta", "1.0", "--no-banner"]
    assert main(base + ["--out", str(tmp_path / "clean.csv")]) == 0
    assert main(base + ["--noise-kind", "bitflip", "--noise-prob", "0",
                        "--out", str(tmp_path / "zero.csv")]) == 0
    clean, zero = read_rows(tmp_path / "clean.csv"), read_rows(tmp_path / "zero.csv")
    assert list(clean[0]) == ["N_c", "noise_kind", "p", "test_index", "srmse", "mean_srmse"]
    per_test = [r for r in clean if r["test_index"] != ""]
    means = [r for r in clean if r["test_index"] == ""]
    assert len(per_test) == 12 and len(means) == 3
    assert all(r["srmse"] == "" for r in means)
    assert [r["srmse"] for r in clean] == [r["srmse"] for r in zero]


def test_reconstruct_default_output_name(tmp_path, dataset):
    assert main(["reconstruct", "--data", str(dataset), "--train-size", "16", "--test-size", "2",
                 "--nc", "4", "--samples", "100", "--dbeta", "0.1", "--beta", "0.5",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "reconstruct.csv").exists()


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "qcsense.cli", "qite", "--hamiltonian", "-Z", "--beta", "0.1",
         "--out", str(tmp_path), "--no-banner"],
        capture_output=True, text=True, check=False,
    )
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.strip().endswith("qite.csv")


def test_runtime_failure_exits_3_without_output(tmp_path):
    # a step this large makes the normalization 1 - 2 dtau <h> negative mid-run
    assert main(["qite", "--hamiltonian", "+20*Z", "--initial", "0", "--dbeta", "0.05",
                 "--out", str(tmp_path)]) == 3
    assert list(tmp_path.iterdir()) == []
