import json

import numpy as np
import pytest

from transmon_lattice.cli import main


def run_cli(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_zz_command(capsys):
    code, out, _ = run_cli(["zz", "--pair", "Q2,Q3"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert payload["zeta_perturbative_khz"] == pytest.approx(8.12, abs=0.05)
    assert abs(payload["zeta_exact_khz"]) == pytest.approx(8.1, rel=0.1)


def test_stats_command(capsys):
    code, out, _ = run_cli(["stats", "--column", "alpha"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert abs(payload["mean"]) == pytest.approx(196.4, abs=0.05)
    assert "published" in payload


def test_spectrum_command(capsys):
    code, out, _ = run_cli(
        ["spectrum", "--qubits", "Q2,Q3", "--levels", "3"], capsys
    )
    assert code == 0
    payload = json.loads(out)
    assert len(payload["energies_mhz"]) == 9


def test_report_command(capsys):
    code, out, _ = run_cli(["report"], capsys)
    assert code == 0
    payload = json.loads(out)
    assert any(note.startswith("t1.") for note in payload["discrepancies"])
    assert sorted(map(tuple, payload["straddling_failures"])) == [
        ("Q10", "Q15"), ("Q15", "Q16"),
    ]


def test_replay_determinism(tmp_path, capsys):
    args = [
        "dynamics", "--protocol", "ramsey", "--qubit", "Q2",
        "--delays", "0:10:81", "--seed", "11", "--shots", "300",
    ]
    code1, _, _ = run_cli(args + ["--out", str(tmp_path / "a.json")], capsys)
    code2, _, _ = run_cli(args + ["--out", str(tmp_path / "b.json")], capsys)
    assert code1 == 0 and code2 == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_dynamics_emits_plot(tmp_path, capsys):
    code, _, _ = run_cli(
        [
            "dynamics", "--protocol", "t1", "--qubit", "Q1",
            "--delays", "0:200:21", "--seed", "1",
            "--out", str(tmp_path / "t1.json"),
            "--plot", str(tmp_path / "t1.svg"),
        ],
        capsys,
    )
    assert code == 0
    assert (tmp_path / "t1.svg").read_text().startswith("<svg")
    payload = json.loads((tmp_path / "t1.json").read_text())
    assert payload["fit"]["params"]["T"] == pytest.approx(126.0, rel=0.05)


def test_config_error_category(tmp_path, capsys):
    code, _, err = run_cli(["zz", "--pair", "Q2,Q99"], capsys)
    assert code == 2
    assert json.loads(err)["error"]["category"] == "config"

    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run_cli(["stats", "--column", "alpha", "--device", str(bad)], capsys)
    assert code == 2
    assert json.loads(err)["error"]["category"] == "config"


def test_physics_error_category(capsys):
    # drive parked on the Q2 carrier violates the pole guard
    code, _, err = run_cli(
        [
            "sizzle", "--mode", "tomography", "--pair", "Q2,Q7",
            "--freq", "4795.6", "--seed", "1",
        ],
        capsys,
    )
    assert code == 3
    assert json.loads(err)["error"]["category"] == "physics"


def test_resource_error_category(capsys):
    code, _, err = run_cli(
        ["spectrum", "--qubits", "Q1,Q2,Q3,Q4", "--levels", "9"], capsys
    )
    assert code == 4
    assert json.loads(err)["error"]["category"] == "resource"


def test_fit_command(tmp_path, capsys):
    t = np.linspace(0.5, 200.0, 40)
    y = 0.1 + 0.9 * np.exp(-t / 71.0)
    csv = tmp_path / "data.csv"
    csv.write_text(
        "delay[us],signal\n"
        + "\n".join(f"{float(a)!r},{float(b)!r}" for a, b in zip(t, y))
        + "\n"
    )
    code, out, _ = run_cli(
        ["fit", "--model", "exp_decay", "--input", str(csv)], capsys
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["result"]["params"]["T"] == pytest.approx(71.0, rel=1e-4)


def test_table_format_output(tmp_path, capsys):
    code, _, _ = run_cli(
        [
            "dynamics", "--protocol", "t1", "--qubit", "Q1",
            "--delays", "0:100:11", "--seed", "2",
            "--format", "table", "--out", str(tmp_path / "t1.csv"),
        ],
        capsys,
    )
    assert code == 0
    lines = (tmp_path / "t1.csv").read_text().strip().splitlines()
    assert lines[0].startswith("delay[us]")
    assert len(lines) == 12


def test_rb_command_with_injected_epc(capsys):
    code, out, _ = run_cli(
        [
            "rb", "--qubits", "Q1", "--epc", "1e-3", "--seed", "3",
            "--sequences", "8", "--lengths", "2,100,400,1000",
        ],
        capsys,
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["outcomes"]["Q1"]["epc"] == pytest.approx(1e-3, rel=0.05)


def test_tomography_command(capsys):
    code, out, _ = run_cli(
        ["tomography", "--state", "bell", "--seed", "4"], capsys
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["fidelity"] == pytest.approx(1.0, abs=1e-6)


def test_sweep_swap_command(tmp_path, capsys):
    code, _, _ = run_cli(
        [
            "sweep", "--kind", "swap", "--pair", "Q2,Q3",
            "--amplitudes", "30:36:4", "--durations", "0:2:81",
            "--seed", "5", "--levels", "3",
            "--out", str(tmp_path / "chevron.json"),
        ],
        capsys,
    )
    assert code == 0
    payload = json.loads((tmp_path / "chevron.json").read_text())
    assert "resonance" in payload
    assert payload["resonance"]["swap_period"] > 0


def test_sweep_acstark_command(tmp_path, capsys):
    code, _, _ = run_cli(
        [
            "sweep", "--kind", "acstark", "--pair", "Q6,Q10",
            "--amplitudes", "5:25:6", "--seed", "6", "--levels", "3",
            "--jitter-khz", "10",
            "--out", str(tmp_path / "acstark.json"),
        ],
        capsys,
    )
    assert code == 0
    payload = json.loads((tmp_path / "acstark.json").read_text())
    assert "extraction" in payload


def test_sizzle_landscape_command(tmp_path, capsys):
    code, _, _ = run_cli(
        [
            "sizzle", "--mode", "landscape", "--pair", "Q2,Q7",
            "--freqs", "5020:5040:2", "--amplitudes", "0:6:3",
            "--seed", "8", "--levels", "3",
            "--out", str(tmp_path / "landscape.json"),
        ],
        capsys,
    )
    assert code == 0
    payload = json.loads((tmp_path / "landscape.json").read_text())
    assert "differential_phase" in payload["data"]


def test_calibrate_cz_command(capsys):
    code, out, _ = run_cli(
        [
            "calibrate-cz", "--pair", "Q2,Q7", "--freq", "5028.5",
            "--nu-tilde-khz", "100", "--seed", "9",
        ],
        capsys,
    )
    assert code == 0
    payload = json.loads(out)
    assert payload["calibration"]["tau_g"] == pytest.approx(5.0, rel=0.01)
