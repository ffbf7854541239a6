"""Randomized benchmarking: individual, simultaneous, and two-qubit
interleaved, with EPC/EPG extraction and the coherence-limited bound.

The benchmarking simulator is gate-level: Cliffords act as unitaries on
density matrices with injected noise channels (depolarizing, coherent
over-rotation, always-on ZZ phases between neighbors).  Survival decays
fit A p^m + B; EPC = (1 - p)(d - 1)/d.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .cliffords import (
    MEAN_GATES_PER_CLIFFORD,
    CliffordElement,
    clifford_table,
    inverse_index,
    two_qubit_clifford_matrices,
    two_qubit_inverse_index,
)
from .device import DeviceSpec, pair_key
from .errors import ContractViolation
from .fitting import FitResult, fit_rb_decay
from .sizzle import CzCalibration, cz_unitary
from .spectrum import zz_perturbative

DEFAULT_LENGTHS = (2, 25, 50, 100, 250, 500, 750, 1000)
DEFAULT_LENGTHS_2Q = (2, 4, 8, 16, 32, 64)
DEFAULT_GATE_TIME_NS = 60.0


def clg(t_g: float, t1: float, t2e: float) -> float:
    """Coherence-limited error per gate: t_g in ns, T1/T2E in us.

    (3 - exp(-t_g/T1) - 2 exp(-t_g/T2E)) / 6; zero at t_g = 0 and
    monotone in t_g.
    """
    if t_g < 0 or t1 <= 0 or t2e <= 0:
        raise ValueError("gate time must be >= 0 and coherence times positive")
    t_us = t_g * 1e-3
    return (3.0 - math.exp(-t_us / t1) - 2.0 * math.exp(-t_us / t2e)) / 6.0


def epc_to_epg(epc: float) -> float:
    """Error per physical gate from error per Clifford, using the
    published conversion factor 1.825."""
    if epc < 0:
        raise ValueError("EPC must be non-negative")
    return epc / MEAN_GATES_PER_CLIFFORD


@dataclass(frozen=True)
class NoiseChannel:
    """Error injection for benchmarking oracles.

    ``depolarizing`` is the depolarizing probability applied at
    ``granularity`` ("clifford" or "gate"); ``over_rotation`` scales
    every physical X rotation by (1 + value); ``zz_phase_per_clifford``
    holds always-on conditional phases (radians per Clifford slot)
    between qubit pairs during simultaneous runs.
    """

    depolarizing: float = 0.0
    granularity: str = "clifford"
    over_rotation: float = 0.0
    zz_phase_per_clifford: Mapping[tuple[str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.depolarizing <= 1.0:
            raise ContractViolation(
                f"depolarizing probability {self.depolarizing} outside [0, 1]"
            )
        if self.granularity not in ("clifford", "gate"):
            raise ValueError("granularity must be 'clifford' or 'gate'")

    @classmethod
    def from_epc(cls, epc: float) -> "NoiseChannel":
        """Depolarizing channel whose single-qubit RB EPC equals ``epc``
        exactly (probability 2*epc per Clifford)."""
        return cls(depolarizing=2.0 * epc, granularity="clifford")

    @classmethod
    def from_device(
        cls, device: DeviceSpec, qubit: str, gate_time_ns: float = DEFAULT_GATE_TIME_NS
    ) -> "NoiseChannel":
        """Coherence-limited depolarizing per physical gate, with the
        neighbor ZZ phases implied by the device couplings."""
        q = device.qubit(qubit)
        error = clg(gate_time_ns, q.t1, q.t2e)
        zz = {}
        slot_us = gate_time_ns * 1e-3 * MEAN_GATES_PER_CLIFFORD
        for a, b in device.nn_pairs():
            if qubit not in (a, b):
                continue
            other = b if qubit == a else a
            zeta_khz = zz_perturbative(
                device.couplings.j(a, b),
                device.qubit(a).omega - device.qubit(b).omega,
                device.qubit(a).alpha,
                device.qubit(b).alpha,
            )
            zz[pair_key(a, b)] = 2.0 * math.pi * zeta_khz * 1e-3 * slot_us
        return cls(depolarizing=2.0 * error, granularity="gate", zz_phase_per_clifford=zz)


@dataclass
class RbOutcome:
    """Survival data and extracted error rates for one qubit."""

    qubit: str
    lengths: tuple[int, ...]
    survivals: np.ndarray  # mean over sequences, per length
    per_sequence: np.ndarray  # (n_sequences, n_lengths)
    fit: FitResult
    epc: float
    epg: float
    epc_uncertainty: float
    epg_uncertainty: float

    def to_dict(self) -> dict:
        return {
            "qubit": self.qubit,
            "lengths": list(self.lengths),
            "survivals": self.survivals.tolist(),
            "per_sequence": self.per_sequence.tolist(),
            "fit": self.fit.to_dict(),
            "epc": self.epc,
            "epg": self.epg,
            "epc_uncertainty": self.epc_uncertainty,
            "epg_uncertainty": self.epg_uncertainty,
        }


def _depolarize_single(rho: np.ndarray, p: float) -> np.ndarray:
    return (1.0 - p) * rho + p * 0.5 * np.trace(rho) * np.eye(2)


def _apply_clifford_1q(
    rho: np.ndarray, element: CliffordElement, noise: NoiseChannel
) -> np.ndarray:
    if noise.over_rotation:
        u = np.eye(2, dtype=complex)
        from .cliffords import gate_unitary

        for kind, angle in element.gates:
            if kind == "x":
                u = gate_unitary((kind, angle * (1.0 + noise.over_rotation))) @ u
            else:
                u = gate_unitary((kind, angle)) @ u
    else:
        u = element.unitary
    rho = u @ rho @ u.conj().T
    if noise.depolarizing:
        if noise.granularity == "clifford":
            rho = _depolarize_single(rho, noise.depolarizing)
        else:
            for _ in range(element.physical_gate_count):
                rho = _depolarize_single(rho, noise.depolarizing)
    return rho


def _rb_single_survival(
    element_ids: np.ndarray, noise: NoiseChannel
) -> float:
    table = clifford_table()
    rho = np.zeros((2, 2), dtype=complex)
    rho[0, 0] = 1.0
    u_total = np.eye(2, dtype=complex)
    for idx in element_ids:
        element = table[idx]
        rho = _apply_clifford_1q(rho, element, noise)
        u_total = element.unitary @ u_total
    inverse = table[inverse_index(u_total)]
    rho = _apply_clifford_1q(rho, inverse, noise)
    return float(np.real(rho[0, 0]))


def _sample_survival(
    probability: float, shots: int, rng: np.random.Generator
) -> float:
    if shots <= 0:
        return probability
    return rng.binomial(shots, min(max(probability, 0.0), 1.0)) / shots


def _fit_outcome(
    qubit: str,
    lengths: Sequence[int],
    per_sequence: np.ndarray,
    n_qubits: int = 1,
) -> RbOutcome:
    survivals = per_sequence.mean(axis=0)
    dim = 2**n_qubits
    scale = (dim - 1) / dim
    fit = fit_rb_decay(np.asarray(lengths, float), survivals, asymptote=1.0 / dim)
    p = fit.params["p"]
    epc = scale * (1.0 - p)
    sigma_p = fit.uncertainties.get("p", float("nan"))
    return RbOutcome(
        qubit=qubit,
        lengths=tuple(int(m) for m in lengths),
        survivals=survivals,
        per_sequence=per_sequence,
        fit=fit,
        epc=epc,
        epg=epc_to_epg(epc),
        epc_uncertainty=scale * sigma_p,
        epg_uncertainty=epc_to_epg(scale * sigma_p) if np.isfinite(sigma_p) else float("nan"),
    )


def sequence_gate_list(
    seed: int,
    qubit_position: int,
    sequence: int,
    length_position: int,
    length: int,
) -> list[tuple[str, float]]:
    """The physical gate list (including virtual Z and the inverting
    Clifford) of one individual-RB sequence, for external replay.

    Arguments mirror the RNG derivation of :func:`run_rb`: the qubit's
    position in the ``qubits`` argument, the sequence index, and the
    position of ``length`` in the lengths grid.
    """
    table = clifford_table()
    rng = np.random.default_rng(
        np.random.SeedSequence([seed, 101, qubit_position, sequence, length_position])
    )
    ids = rng.integers(0, 24, length)
    gates: list[tuple[str, float]] = []
    u_total = np.eye(2, dtype=complex)
    for idx in ids:
        gates.extend(table[idx].gates)
        u_total = table[idx].unitary @ u_total
    gates.extend(table[inverse_index(u_total)].gates)
    return gates


def run_rb(
    model: Union[DeviceSpec, NoiseChannel, Mapping[str, NoiseChannel]],
    qubits: Sequence[str],
    n_sequences: int = 16,
    lengths: Sequence[int] = DEFAULT_LENGTHS,
    shots: int = 0,
    seed: int = 0,
    simultaneous: bool = False,
    gate_time_ns: float = DEFAULT_GATE_TIME_NS,
) -> dict[str, RbOutcome]:
    """Single-qubit randomized benchmarking.

    ``model`` is a NoiseChannel applied to every qubit, a per-qubit
    mapping, or a DeviceSpec (coherence-limited depolarizing plus the
    device's neighbor ZZ phases).  ``simultaneous`` runs all qubits at
    once, one Clifford per slot per qubit, with the ZZ phases active
    between slot gates; otherwise qubits run individually.
    Deterministic for a fixed seed.
    """
    lengths = tuple(int(m) for m in lengths)
    if any(b <= a for a, b in zip(lengths, lengths[1:])):
        raise ValueError("lengths must be strictly ascending")
    qubits = tuple(qubits)
    channels = _resolve_channels(model, qubits, gate_time_ns)
    if simultaneous and len(qubits) > 1:
        return _run_rb_simultaneous(
            channels, qubits, n_sequences, lengths, shots, seed
        )
    outcomes = {}
    for qi, qubit in enumerate(qubits):
        per_sequence = np.empty((n_sequences, len(lengths)))
        for s in range(n_sequences):
            for li, m in enumerate(lengths):
                rng = np.random.default_rng(
                    np.random.SeedSequence([seed, 101, qi, s, li])
                )
                ids = rng.integers(0, 24, m)
                survival = _rb_single_survival(ids, channels[qubit])
                per_sequence[s, li] = _sample_survival(survival, shots, rng)
        outcomes[qubit] = _fit_outcome(qubit, lengths, per_sequence)
    return outcomes


def _resolve_channels(model, qubits, gate_time_ns) -> dict[str, NoiseChannel]:
    if isinstance(model, DeviceSpec):
        return {q: NoiseChannel.from_device(model, q, gate_time_ns) for q in qubits}
    if isinstance(model, NoiseChannel):
        return {q: model for q in qubits}
    missing = [q for q in qubits if q not in model]
    if missing:
        raise KeyError(f"no noise channel for {missing[0]}")
    return dict(model)


def _zz_pairs_for(
    channels: Mapping[str, NoiseChannel], qubits: Sequence[str]
) -> dict[tuple[int, int], float]:
    """Slot ZZ phases between positions in the simultaneous register."""
    position = {q: i for i, q in enumerate(qubits)}
    phases: dict[tuple[int, int], float] = {}
    for channel in channels.values():
        for (a, b), phi in channel.zz_phase_per_clifford.items():
            if a in position and b in position and phi != 0.0:
                key = tuple(sorted((position[a], position[b])))
                phases[key] = phi
    return phases


def _run_rb_simultaneous(
    channels: Mapping[str, NoiseChannel],
    qubits: Sequence[str],
    n_sequences: int,
    lengths: Sequence[int],
    shots: int,
    seed: int,
) -> dict[str, RbOutcome]:
    n_q = len(qubits)
    dim = 2**n_q
    table = clifford_table()
    zz_phases = _zz_pairs_for(channels, qubits)
    zz_diag = np.ones(dim, dtype=complex)
    for (i, j), phi in zz_phases.items():
        for basis in range(dim):
            if (basis >> (n_q - 1 - i)) & 1 and (basis >> (n_q - 1 - j)) & 1:
                zz_diag[basis] *= np.exp(-1j * phi)

    per_sequence = {q: np.empty((n_sequences, len(lengths))) for q in qubits}
    for s in range(n_sequences):
        for li, m in enumerate(lengths):
            rng = np.random.default_rng(np.random.SeedSequence([seed, 202, s, li]))
            ids = rng.integers(0, 24, (n_q, m))
            rho = np.zeros((dim, dim), dtype=complex)
            rho[0, 0] = 1.0
            u_totals = [np.eye(2, dtype=complex) for _ in range(n_q)]
            for step in range(m):
                slot = np.array([1.0 + 0j])
                for k in range(n_q):
                    element = table[ids[k, step]]
                    u_totals[k] = element.unitary @ u_totals[k]
                    slot = np.kron(slot, element.unitary)
                slot_mat = slot.reshape(dim, dim)
                rho = slot_mat @ rho @ slot_mat.conj().T
                if zz_phases:
                    rho = (zz_diag[:, None] * rho) * zz_diag.conj()[None, :]
                for k, q in enumerate(qubits):
                    rho = _depolarize_site(rho, k, n_q, channels[q].depolarizing,
                                           channels[q].granularity,
                                           table[ids[k, step]].physical_gate_count)
            # per-qubit inverses in one final slot
            slot = np.array([1.0 + 0j])
            inv_counts = []
            for k in range(n_q):
                inverse = table[inverse_index(u_totals[k])]
                inv_counts.append(inverse.physical_gate_count)
                slot = np.kron(slot, inverse.unitary)
            slot_mat = slot.reshape(dim, dim)
            rho = slot_mat @ rho @ slot_mat.conj().T
            if zz_phases:
                rho = (zz_diag[:, None] * rho) * zz_diag.conj()[None, :]
            for k, q in enumerate(qubits):
                rho = _depolarize_site(rho, k, n_q, channels[q].depolarizing,
                                       channels[q].granularity, inv_counts[k])
            probs = np.real(np.diag(rho))
            for k, q in enumerate(qubits):
                p_ground = 0.0
                for basis in range(dim):
                    if not (basis >> (n_q - 1 - k)) & 1:
                        p_ground += probs[basis]
                per_sequence[q][s, li] = _sample_survival(p_ground, shots, rng)
    return {q: _fit_outcome(q, lengths, per_sequence[q]) for q in qubits}


def _depolarize_site(
    rho: np.ndarray, site: int, n_q: int, p: float, granularity: str, gate_count: int
) -> np.ndarray:
    if p == 0.0:
        return rho
    applications = 1 if granularity == "clifford" else gate_count
    dims = (2,) * n_q
    for _ in range(applications):
        shaped = rho.reshape(dims + dims)
        traced = np.trace(shaped, axis1=site, axis2=n_q + site)
        expanded = np.zeros_like(shaped)
        idx_id = [slice(None)] * (2 * n_q)
        # rebuild I/2 (x) tr_site(rho) in place
        for a in range(2):
            idx = list(idx_id)
            idx[site] = a
            idx[n_q + site] = a
            expanded[tuple(idx)] = 0.5 * traced
        rho = (1.0 - p) * rho + p * expanded.reshape(rho.shape)
    return rho


# ------------------------------------------------------- two-qubit RB / CZ

def _depolarize_two(rho: np.ndarray, p: float) -> np.ndarray:
    return (1.0 - p) * rho + p * 0.25 * np.trace(rho) * np.eye(4)


def run_interleaved_rb_cz(
    calibration_or_phase: Union[CzCalibration, float],
    n_sequences: int = 12,
    lengths: Sequence[int] = DEFAULT_LENGTHS_2Q,
    shots: int = 0,
    seed: int = 0,
    background: Optional[NoiseChannel] = None,
    gate_error: float = 0.0,
    gate_channel=None,
) -> dict:
    """Interleaved two-qubit RB of a calibrated conditional-phase gate.

    The reference run uses random two-qubit Cliffords with the
    ``background`` channel per Clifford; the interleaved run inserts
    the calibrated gate (its conditional phase, plus a two-qubit
    depolarizing channel of average infidelity ``gate_error``) after
    every Clifford.  ``gate_channel``, when given, replaces the
    unitary-plus-depolarizing model with an arbitrary channel rho ->
    rho whose intended action is the same conditional phase (e.g. a
    Lindblad-noised gate of some duration).  Gate fidelity comes from
    the decay ratio: F = 1 - (3/4)(1 - p_int / p_ref).
    """
    phase = (
        calibration_or_phase.conditional_phase()
        if isinstance(calibration_or_phase, CzCalibration)
        else float(calibration_or_phase)
    )
    gate = cz_unitary(phase)
    q_gate = gate_error / 0.75  # depolarizing probability for that infidelity
    if not 0.0 <= q_gate <= 1.0:
        raise ContractViolation("gate_error implies a probability outside [0, 1]")
    background = background or NoiseChannel()
    mats = two_qubit_clifford_matrices()

    def apply_gate(rho: np.ndarray) -> np.ndarray:
        if gate_channel is not None:
            return gate_channel(rho)
        rho = gate @ rho @ gate.conj().T
        if q_gate:
            rho = _depolarize_two(rho, q_gate)
        return rho

    def run(interleave: bool) -> np.ndarray:
        per_sequence = np.empty((n_sequences, len(lengths)))
        for s in range(n_sequences):
            for li, m in enumerate(lengths):
                rng = np.random.default_rng(
                    np.random.SeedSequence([seed, 303, s, li])
                )
                ids = rng.integers(0, len(mats), m)
                rho = np.zeros((4, 4), dtype=complex)
                rho[0, 0] = 1.0
                u_total = np.eye(4, dtype=complex)
                for idx in ids:
                    u = mats[idx]
                    rho = u @ rho @ u.conj().T
                    u_total = u @ u_total
                    if background.depolarizing:
                        rho = _depolarize_two(rho, background.depolarizing)
                    if interleave:
                        rho = apply_gate(rho)
                        u_total = gate @ u_total
                inv = mats[two_qubit_inverse_index(u_total)]
                rho = inv @ rho @ inv.conj().T
                if background.depolarizing:
                    rho = _depolarize_two(rho, background.depolarizing)
                survival = float(np.real(rho[0, 0]))
                per_sequence[s, li] = _sample_survival(survival, shots, rng)
        return per_sequence

    reference = _fit_outcome("pair:ref", lengths, run(False), n_qubits=2)
    interleaved = _fit_outcome("pair:int", lengths, run(True), n_qubits=2)
    p_ref = reference.fit.params["p"]
    p_int = interleaved.fit.params["p"]
    fidelity = 1.0 - 0.75 * (1.0 - p_int / p_ref)
    s_ref = reference.fit.uncertainties.get("p", 0.0)
    s_int = interleaved.fit.uncertainties.get("p", 0.0)
    ratio = p_int / p_ref
    sigma = 0.75 * abs(ratio) * math.sqrt(
        (s_int / p_int) ** 2 + (s_ref / p_ref) ** 2
    ) if p_int > 0 and p_ref > 0 else float("nan")
    return {
        "fidelity": fidelity,
        "uncertainty": sigma,
        "reference": reference,
        "interleaved": interleaved,
    }
