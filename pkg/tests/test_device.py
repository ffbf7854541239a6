import math

import numpy as np
import pytest

from transmon_lattice.device import (
    CouplingGraph,
    DeviceSpec,
    TransmonParams,
    detuning,
    ej_from_omega,
    j_from_circuit,
    omega_from_ej_ec,
    straddling_check,
)
from transmon_lattice.errors import SingularCouplingError, UnknownQubitError


def test_omega_from_ej_ec_unit_case():
    assert omega_from_ej_ec(2.0, 0.0625) == pytest.approx(1.0, rel=1e-12)


def test_omega_from_ej_ec_typical_values():
    # sqrt(8 * 12000 * 250) evaluated directly
    assert omega_from_ej_ec(12000.0, 250.0) == pytest.approx(4898.979485566356, rel=1e-12)


def test_omega_scaling_square_root_homogeneity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        ej, ec = rng.uniform(0.1, 1e4, 2)
        assert omega_from_ej_ec(4 * ej, ec) == pytest.approx(
            2 * omega_from_ej_ec(ej, ec), rel=1e-12
        )


@pytest.mark.parametrize("ej,ec", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -2.0)])
def test_omega_from_ej_ec_domain(ej, ec):
    with pytest.raises(ValueError):
        omega_from_ej_ec(ej, ec)


def test_ej_from_omega_inverts():
    assert ej_from_omega(4898.979485566356, 250.0) == pytest.approx(12000.0, rel=1e-9)
    assert ej_from_omega(1.0, 0.0625) == pytest.approx(2.0, rel=1e-12)


def test_ej_omega_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(50):
        ej, ec = rng.uniform(0.01, 2e4, 2)
        omega = omega_from_ej_ec(ej, ec)
        assert omega_from_ej_ec(ej_from_omega(omega, ec), ec) == pytest.approx(
            omega, rel=1e-9
        )


def test_j_from_circuit_printed_form():
    # 2*200*200/40000 * (30*30)^(1/4) = 2*sqrt(30)
    assert j_from_circuit(200.0, 200.0, 40000.0, 12000.0, 12000.0) == pytest.approx(
        2.0 * math.sqrt(30.0), rel=1e-12
    )


def test_j_from_circuit_inverse_in_ecc():
    base = j_from_circuit(210.0, 195.0, 30000.0, 11000.0, 12500.0)
    assert j_from_circuit(210.0, 195.0, 60000.0, 11000.0, 12500.0) == pytest.approx(
        base / 2.0, rel=1e-12
    )


def test_j_from_circuit_monotone_in_eji():
    values = [
        j_from_circuit(200.0, 200.0, 40000.0, eji, 12000.0)
        for eji in (8000.0, 10000.0, 12000.0, 15000.0)
    ]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_j_from_circuit_singular_and_domain():
    with pytest.raises(SingularCouplingError):
        j_from_circuit(200.0, 200.0, 0.0, 12000.0, 12000.0)
    with pytest.raises(ValueError):
        j_from_circuit(-200.0, 200.0, 40000.0, 12000.0, 12000.0)


def test_j_from_circuit_printed_form_is_asymmetric():
    # regression guard on the as-printed expression: swapping the qubit
    # roles changes the value unless the symmetric variant is enabled
    forward = j_from_circuit(100.0, 250.0, 40000.0, 9000.0, 16000.0)
    swapped = j_from_circuit(250.0, 100.0, 40000.0, 16000.0, 9000.0)
    assert forward != pytest.approx(swapped, rel=1e-6)

    sym_forward = j_from_circuit(100.0, 250.0, 40000.0, 9000.0, 16000.0, symmetric=True)
    sym_swapped = j_from_circuit(250.0, 100.0, 40000.0, 16000.0, 9000.0, symmetric=True)
    assert sym_forward == pytest.approx(sym_swapped, rel=1e-12)


def test_detuning_table_pair(device):
    assert detuning(device, "Q2", "Q3") == pytest.approx(-11.9, abs=1e-9)
    assert abs(detuning(device, "Q2", "Q3")) == pytest.approx(11.9, abs=1e-9)


def test_detuning_errors(device):
    with pytest.raises(ValueError):
        detuning(device, "Q2", "Q2")
    with pytest.raises(UnknownQubitError):
        detuning(device, "Q2", "Q99")


def test_detuning_antisymmetric(device):
    for a, b in device.nn_pairs():
        assert detuning(device, a, b) == -detuning(device, b, a)


def test_straddling_examples(device):
    assert straddling_check(device, "Q2", "Q3")
    assert not straddling_check(device, "Q15", "Q10")
    assert not straddling_check(device, "Q15", "Q16")


def test_straddling_exhaustive_matches_named_failures(device):
    failing = {
        pair
        for pair in device.nn_pairs()
        if not straddling_check(device, pair[0], pair[1])
    }
    assert failing == {("Q10", "Q15"), ("Q15", "Q16")}


def test_straddling_zero_detuning_true():
    qubits = (
        TransmonParams.from_frequency("A", 4800.0, -200.0, 50.0, 40.0, 60.0),
        TransmonParams.from_frequency("B", 4800.0, -200.0, 50.0, 40.0, 60.0),
    )
    dev = DeviceSpec(1, 2, qubits, couplings=CouplingGraph({("A", "B"): 0.5}))
    assert straddling_check(dev, "A", "B")


def test_transmon_params_invariants():
    with pytest.raises(ValueError):
        TransmonParams("X", 4800.0, 196.0, 100.0, 196.0, 50.0, 40.0, 60.0)
    with pytest.raises(ValueError):
        TransmonParams("X", 4800.0, -196.0, 100.0, 196.0, 50.0, 120.0, 60.0)
    with pytest.raises(ValueError):
        TransmonParams("X", -4800.0, -196.0, 100.0, 196.0, 50.0, 40.0, 60.0)


def test_device_rejects_duplicate_labels():
    q = TransmonParams.from_frequency("A", 4800.0, -200.0, 50.0, 40.0, 60.0)
    with pytest.raises(ValueError):
        DeviceSpec(1, 2, (q, q), couplings=CouplingGraph({}))


def test_device_rejects_non_grid_edge():
    qubits = tuple(
        TransmonParams.from_frequency(f"Q{i}", 4800.0 + i, -200.0, 50.0, 40.0, 60.0)
        for i in range(4)
    )
    with pytest.raises(ValueError):
        DeviceSpec(2, 2, qubits, couplings=CouplingGraph({("Q0", "Q3"): 0.5}))


def test_circuit_energy_seed_round_trip(device):
    # EC was seeded as -alpha; the frequency relation must round-trip
    for q in device.qubits:
        assert omega_from_ej_ec(ej_from_omega(q.omega, q.ec), q.ec) == pytest.approx(
            q.omega, rel=1e-9
        )
        assert q.ec == pytest.approx(-q.alpha)
