"""Desk-scale simulator and calibration toolkit for a 4x4 lattice of
fixed-frequency transmon qubits.

Subpackages by role: ``device`` (parameters and circuit relations),
``operators`` (subset Hamiltonians), ``spectrum`` (dressed spectra and
ZZ), ``dynamics`` (driven evolution and measurement protocols),
``sizzle`` (Stark-boosted ZZ and CZ calibration), ``cliffords``/``rb``
(randomized benchmarking), ``tomography`` (state reconstruction),
``fitting`` (least-squares models), ``fileio``/``cli`` (formats and the
command line).
"""

__version__ = "0.1.0"

from .device import (
    CouplingGraph,
    DeviceSpec,
    ResonatorParams,
    TransmonParams,
    detuning,
    ej_from_omega,
    j_from_circuit,
    omega_from_ej_ec,
    straddling_check,
)
from .dynamics import DriveTone, ExperimentRecord, NoiseSpec
from .fitting import FitResult
from .fileio import load_bundled_device, load_device, save_device, stats
from .operators import LatticeOperator, SubsetSelection, assemble_hamiltonian
from .spectrum import ZZReport, j_from_zz, zz_exact, zz_perturbative
