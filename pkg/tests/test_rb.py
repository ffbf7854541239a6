import math

import numpy as np
import pytest

from transmon_lattice.errors import ContractViolation
from transmon_lattice.rb import (
    DEFAULT_LENGTHS,
    NoiseChannel,
    clg,
    epc_to_epg,
    run_interleaved_rb_cz,
    run_rb,
)
from transmon_lattice.tomography import _noisy_cz


def test_clg_zero_and_monotone():
    assert clg(0.0, 126.0, 124.0) == 0.0
    values = [clg(t, 126.0, 124.0) for t in (20.0, 60.0, 120.0, 300.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_clg_printed_formula_value():
    # direct evaluation; the published table's 1.111e-4 does not follow
    # from the formula with these inputs (documented discrepancy)
    assert clg(60.0, 126.0, 124.0) == pytest.approx(2.406e-4, rel=2e-3)


def test_clg_first_order_doubling():
    assert clg(10.0, 126.0, 124.0) * 2 == pytest.approx(
        clg(20.0, 126.0, 124.0), rel=1e-3
    )


def test_epc_to_epg_table_rows():
    assert epc_to_epg(1.212e-4) == pytest.approx(6.641e-5, abs=5e-9)
    assert epc_to_epg(2.531e-3) == pytest.approx(1.387e-3, abs=5e-7)
    assert epc_to_epg(0.0) == 0.0


def test_noise_channel_validation():
    with pytest.raises(ContractViolation):
        NoiseChannel(depolarizing=1.5)
    with pytest.raises(ValueError):
        NoiseChannel(depolarizing=0.1, granularity="pulse")


def test_noiseless_rb_epc_floor():
    out = run_rb(NoiseChannel(), ["Q1"], n_sequences=4,
                 lengths=(2, 100, 500, 1000), shots=0, seed=1)
    assert abs(out["Q1"].epc) < 1e-12


def test_noiseless_rb_with_shots_floor():
    out = run_rb(NoiseChannel(), ["Q1"], n_sequences=4,
                 lengths=(2, 100, 500, 1000), shots=10000, seed=1)
    assert abs(out["Q1"].epc) <= 1e-4


def test_injected_epc_recovered():
    out = run_rb(NoiseChannel.from_epc(1e-3), ["Q1"], n_sequences=16,
                 lengths=DEFAULT_LENGTHS, shots=1000, seed=2)
    assert out["Q1"].epc == pytest.approx(1e-3, rel=0.05)
    assert out["Q1"].epg == pytest.approx(1e-3 / 1.825, rel=0.05)


def test_rb_estimator_unbiased_over_seeds():
    recovered = []
    for seed in range(50):
        out = run_rb(NoiseChannel.from_epc(1e-3), ["Q1"], n_sequences=4,
                     lengths=(2, 50, 200, 500, 1000), shots=400, seed=seed)
        recovered.append(out["Q1"].epc)
    assert np.mean(recovered) == pytest.approx(1e-3, rel=0.02)


def test_rb_deterministic():
    kwargs = dict(n_sequences=4, lengths=(2, 100, 500), shots=500, seed=9)
    first = run_rb(NoiseChannel.from_epc(2e-3), ["Q1"], **kwargs)
    second = run_rb(NoiseChannel.from_epc(2e-3), ["Q1"], **kwargs)
    assert np.array_equal(first["Q1"].per_sequence, second["Q1"].per_sequence)


def test_rb_gate_granularity_scales_with_pulse_count():
    # per-gate injection: EPC ~ (mean pulses per Clifford) * EPG; the
    # per-sequence pulse-count variance leaves a few-percent wobble
    q = 2e-4
    multipliers = []
    for seed in (3, 13, 23):
        out = run_rb(NoiseChannel(depolarizing=q, granularity="gate"), ["Q1"],
                     n_sequences=16, lengths=(2, 100, 250, 500, 750, 1000),
                     shots=0, seed=seed)
        multipliers.append(out["Q1"].epc / (q / 2.0))
    assert np.mean(multipliers) == pytest.approx(45.0 / 24.0, rel=0.03)


def test_simultaneous_rb_matches_individual_without_zz():
    chan = NoiseChannel.from_epc(1e-3)
    lengths = (2, 50, 200, 500)
    sim = run_rb(chan, ["A", "B", "C", "D"], n_sequences=4, lengths=lengths,
                 shots=0, seed=4, simultaneous=True)
    ind = run_rb(chan, ["A"], n_sequences=4, lengths=lengths, shots=0, seed=4)
    for q in "ABCD":
        assert sim[q].epg == pytest.approx(ind["A"].epg, rel=0.05)


def test_simultaneous_rb_zz_gap_grows_with_coupling():
    lengths = (2, 25, 75, 150)
    base = NoiseChannel.from_epc(1e-3)
    ind = run_rb(base, ["A"], n_sequences=4, lengths=lengths, shots=0, seed=5)
    epgs = []
    for phi in (0.0, 0.02, 0.04):
        channels = {
            q: NoiseChannel(
                depolarizing=2e-3,
                zz_phase_per_clifford={("A", "B"): phi, ("C", "D"): phi},
            )
            for q in "ABCD"
        }
        sim = run_rb(channels, ["A", "B", "C", "D"], n_sequences=4,
                     lengths=lengths, shots=0, seed=5, simultaneous=True)
        epgs.append(np.mean([sim[q].epg for q in "ABCD"]))
    assert epgs[0] == pytest.approx(ind["A"].epg, rel=0.05)
    assert epgs[1] > epgs[0]
    assert epgs[2] > epgs[1]


def test_interleaved_ideal_cz_unit_fidelity():
    result = run_interleaved_rb_cz(math.pi, n_sequences=6,
                                   lengths=(2, 4, 8, 16, 32), shots=0, seed=6)
    assert result["fidelity"] == pytest.approx(1.0, abs=1e-6)


def test_interleaved_injected_error_recovered():
    result = run_interleaved_rb_cz(
        math.pi, n_sequences=8, lengths=(2, 4, 8, 16, 32, 64), shots=0, seed=7,
        background=NoiseChannel(depolarizing=0.01), gate_error=0.05,
    )
    assert result["fidelity"] == pytest.approx(0.95, abs=0.02)


def test_interleaved_fidelity_decreases_with_gate_duration():
    fidelities = []
    for tau in (0.5, 1.5, 3.0):
        def channel(rho, tau=tau):
            return _noisy_cz(rho, 0, 1, 2, tau,
                             {"relaxation": {"a": 1 / 71.0, "b": 1 / 71.0},
                              "dephasing": {"a": 1 / 80.0, "b": 1 / 80.0}},
                             ("a", "b"))
        result = run_interleaved_rb_cz(
            math.pi, n_sequences=6, lengths=(2, 4, 8, 16), shots=0, seed=8,
            gate_channel=channel,
        )
        fidelities.append(result["fidelity"])
    assert fidelities[0] > fidelities[1] > fidelities[2]


def test_device_derived_channel(device):
    chan = NoiseChannel.from_device(device, "Q1")
    assert chan.granularity == "gate"
    assert chan.depolarizing == pytest.approx(2 * clg(60.0, 126.0, 124.0))
    assert any("Q1" in pair for pair in chan.zz_phase_per_clifford)


def test_sequence_gate_list_replays_to_identity():
    from transmon_lattice.cliffords import compose_gates
    from transmon_lattice.rb import sequence_gate_list

    gates = sequence_gate_list(seed=2, qubit_position=0, sequence=3,
                               length_position=2, length=50)
    u = compose_gates(gates)
    assert abs(abs(np.trace(u)) - 2.0) < 1e-9
    kinds = {kind for kind, _ in gates}
    assert kinds <= {"i", "x", "vz"}


def test_rb_on_device_noise_is_coherence_limited(device):
    out = run_rb(device, ["Q1"], n_sequences=6, lengths=(2, 100, 400, 1000),
                 shots=0, seed=12)
    # per-gate depolarizing at the coherence-limited rate, ~1.875
    # pulses per Clifford, plus a small always-on ZZ contribution
    floor = clg(60.0, 126.0, 124.0) * 45.0 / 24.0
    assert out["Q1"].epc >= 0.9 * floor
    assert out["Q1"].epc <= 3.0 * floor
