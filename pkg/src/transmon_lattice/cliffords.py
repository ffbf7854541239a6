"""Clifford groups for randomized benchmarking.

Single-qubit Cliffords are decomposed over the hardware gate set
{I, X(+-pi/2), X(pi)} plus virtual Z rotations (zero duration, zero
error); Y rotations appear as virtual-Z-sandwiched X pulses.  The
decomposition follows the standard XY table, which averages 45/24 =
1.875 physical pulses per Clifford.  The published error tables convert
EPC to EPG with the empirical factor 1.825 (their compiled average),
which is kept as a separate constant: no 24-element table with integer
pulse counts can average exactly 1.825.

The 11520-element two-qubit group is generated as (C1 x C1) followed by
one of 20 mixers built from CZ and fixed single-qubit corrections
(identity, 9 CNOT-like, 9 iSWAP-like, 1 SWAP-like).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

#: EPC -> EPG conversion factor from the published error tables.
MEAN_GATES_PER_CLIFFORD = 1.825

GateSpec = tuple[str, float]  # ("i", 0) | ("x", angle) | ("vz", angle)


def _rx(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _rz(theta: float) -> np.ndarray:
    return np.diag([np.exp(-1j * theta / 2.0), np.exp(1j * theta / 2.0)])


def gate_unitary(spec: GateSpec) -> np.ndarray:
    kind, angle = spec
    if kind == "i":
        return np.eye(2, dtype=complex)
    if kind == "x":
        return _rx(angle)
    if kind == "vz":
        return _rz(angle)
    raise ValueError(f"unknown gate kind {kind!r}")


def compose_gates(gates: Sequence[GateSpec]) -> np.ndarray:
    """Unitary of a time-ordered gate list (first gate acts first)."""
    u = np.eye(2, dtype=complex)
    for spec in gates:
        u = gate_unitary(spec) @ u
    return u


def _x_gates(exponent: float) -> list[GateSpec]:
    if exponent == 0.0:
        return []
    return [("x", exponent * math.pi)]


def _y_gates(exponent: float) -> list[GateSpec]:
    # R_y(theta) = R_z(pi/2) R_x(theta) R_z(-pi/2), virtual Z free
    if exponent == 0.0:
        return []
    return [("vz", -math.pi / 2.0), ("x", exponent * math.pi), ("vz", math.pi / 2.0)]


@dataclass(frozen=True)
class CliffordElement:
    index: int
    gates: tuple[GateSpec, ...]
    unitary: np.ndarray

    @property
    def physical_gate_count(self) -> int:
        """Pulses occupying a gate slot; virtual Z excluded."""
        return sum(1 for kind, _ in self.gates if kind in ("i", "x"))


def _xy_decompositions() -> list[list[GateSpec]]:
    table: list[list[GateSpec]] = []
    for phi0 in (1.0, 0.5, -0.5):
        for phi1 in (0.0, 0.5, -0.5):
            table.append(_x_gates(phi0) + _y_gates(phi1))
            table.append(_y_gates(phi0) + _x_gates(phi1))
    table.append([("i", 0.0)])
    table.append(_y_gates(1.0) + _x_gates(1.0))
    for y0, x, y1 in ((-0.5, 0.5, 0.5), (-0.5, -0.5, 0.5), (0.5, 0.5, 0.5), (-0.5, 0.5, -0.5)):
        table.append(_y_gates(y0) + _x_gates(x) + _y_gates(y1))
    return table


@lru_cache(maxsize=1)
def clifford_table() -> tuple[CliffordElement, ...]:
    """The 24 single-qubit Cliffords with hardware decompositions."""
    elements = []
    for index, gates in enumerate(_xy_decompositions()):
        elements.append(
            CliffordElement(index, tuple(gates), compose_gates(gates))
        )
    keys = {canonical_key(e.unitary) for e in elements}
    if len(keys) != 24:
        raise AssertionError("single-qubit Clifford table is degenerate")
    return tuple(elements)


def mean_physical_gates() -> float:
    table = clifford_table()
    return sum(e.physical_gate_count for e in table) / len(table)


def canonical_key(u: np.ndarray, decimals: int = 8) -> bytes:
    """Phase-fixed, rounded byte representation of a unitary (global
    phase removed by making the largest-magnitude entry real positive)."""
    flat = u.reshape(-1)
    pivot = int(np.argmax(np.abs(flat)))
    phase = flat[pivot] / abs(flat[pivot])
    fixed = u / phase
    return np.round(fixed, decimals).tobytes()


@lru_cache(maxsize=1)
def _clifford_stack() -> np.ndarray:
    return np.array([e.unitary for e in clifford_table()])


def clifford_index(u: np.ndarray) -> int:
    """Index of the single-qubit Clifford equal to ``u`` up to phase,
    found by maximizing |tr(u^dagger C_k)|."""
    mats = _clifford_stack()
    traces = np.abs(np.einsum("ji,kji->k", u.conj(), mats))
    best = int(np.argmax(traces))
    if traces[best] < 2.0 - 1e-6:
        raise KeyError("matrix is not a single-qubit Clifford")
    return best


def inverse_index(u: np.ndarray) -> int:
    """Index of the Clifford inverting ``u`` (a product of Cliffords)."""
    mats = _clifford_stack()
    traces = np.abs(np.einsum("ij,kji->k", u, mats))
    best = int(np.argmax(traces))
    if traces[best] < 2.0 - 1e-6:
        raise KeyError("matrix does not invert to a single-qubit Clifford")
    return best


# ------------------------------------------------------------ two-qubit group

TWO_QUBIT_GROUP_SIZE = 11520

_S1 = ([], [(0.5, "y"), (0.5, "x")], [(-0.5, "x"), (-0.5, "y")])
_S1_X = ([(0.5, "x")], [(0.5, "x"), (0.5, "y"), (0.5, "x")], [(-0.5, "y")])
_S1_Y = ([(0.5, "y")], [(-0.5, "x"), (-0.5, "y"), (0.5, "x")], [(1.0, "y"), (0.5, "x")])


def _axis_unitary(exponent: float, axis: str) -> np.ndarray:
    theta = exponent * math.pi
    if axis == "x":
        return _rx(theta)
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]])  # R_y(theta)


def _seq_unitary(seq) -> np.ndarray:
    u = np.eye(2, dtype=complex)
    for exponent, axis in seq:
        u = _axis_unitary(exponent, axis) @ u
    return u


_CZ = np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)


def _kron2(u0: np.ndarray, u1: np.ndarray) -> np.ndarray:
    return np.kron(u0, u1)


@lru_cache(maxsize=1)
def _mixers() -> np.ndarray:
    """The 20 mixer unitaries: index 0 none, 1 SWAP-like, 2-10
    CNOT-like, 11-19 iSWAP-like."""
    y90 = _axis_unitary(0.5, "y")
    y90m = _axis_unitary(-0.5, "y")
    x90m = _axis_unitary(-0.5, "x")
    eye = np.eye(2, dtype=complex)

    mixers = [np.eye(4, dtype=complex)]
    swap_like = (
        _kron2(eye, y90)
        @ _CZ
        @ _kron2(y90, y90m)
        @ _CZ
        @ _kron2(y90m, y90)
        @ _CZ
    )
    mixers.append(swap_like)
    for s1 in _S1:
        for s1y in _S1_Y:
            mixers.append(_kron2(_seq_unitary(s1), _seq_unitary(s1y)) @ _CZ)
    for s1y in _S1_Y:
        for s1x in _S1_X:
            mixers.append(
                _kron2(_seq_unitary(s1y), _seq_unitary(s1x))
                @ _CZ
                @ _kron2(y90, x90m)
                @ _CZ
            )
    return np.array(mixers)


#: CZ count per mixer index, for gate accounting
MIXER_CZ_COUNTS = (0, 3) + (1,) * 9 + (2,) * 9


def split_two_qubit_index(idx: int) -> tuple[int, int, int]:
    if not 0 <= idx < TWO_QUBIT_GROUP_SIZE:
        raise IndexError(idx)
    return idx // 480, (idx // 20) % 24, idx % 20


@lru_cache(maxsize=1)
def two_qubit_clifford_matrices() -> np.ndarray:
    """All 11520 two-qubit Clifford unitaries, indexed by
    (c0 * 480 + c1 * 20 + mixer)."""
    singles = np.array([e.unitary for e in clifford_table()])
    mixers = _mixers()
    starters = np.empty((24, 24, 4, 4), dtype=complex)
    for i in range(24):
        for j in range(24):
            starters[i, j] = _kron2(singles[i], singles[j])
    mats = np.empty((TWO_QUBIT_GROUP_SIZE, 4, 4), dtype=complex)
    for idx in range(TWO_QUBIT_GROUP_SIZE):
        i0, i1, i2 = split_two_qubit_index(idx)
        mats[idx] = mixers[i2] @ starters[i0, i1]
    return mats


def two_qubit_inverse_index(u: np.ndarray) -> int:
    """Index of the group element equal to u^dagger up to phase, found
    by maximizing |tr(u @ C_k)|."""
    mats = two_qubit_clifford_matrices()
    traces = np.abs(np.einsum("ij,kji->k", u, mats))
    best = int(np.argmax(traces))
    if traces[best] < 4.0 - 1e-6:
        raise KeyError("matrix does not invert to a two-qubit Clifford")
    return best
