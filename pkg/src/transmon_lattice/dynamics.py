"""Time-domain evolution of driven subsets and the measurement protocols.

Evolution happens in a rotating frame chosen per call: ``"qubit"`` (each
site rotates at its own qubit frequency, the default), ``"lab"`` (no
rotation, no RWA: drives enter as physical cosines), a single number
(one common frame frequency for every site, e.g. the Stark-drive
frequency), or an explicit per-site mapping.  Hamiltonians are given to
the engine at absolute frequencies; the frame transform is applied
internally using the occupation-number structure of the basis.

Conventions: matrices carry cyclic frequencies in MHz, times are us, so
a propagator is exp(-2*pi*i*H*t).  A resonant tone of amplitude Omega
drives ground-state population as cos^2(pi*Omega*t) on a two-level
site.  Decay rates are plain inverse times in 1/us.
"""
from __future__ import annotations

import math
import string
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.integrate import solve_ivp

from .device import DeviceSpec, TransmonParams
from .errors import (
    AliasingError,
    ContractViolation,
    StiffnessError,
    UnknownQubitError,
)
from .fitting import fit_damped_cos
from .operators import (
    LatticeOperator,
    SubsetSelection,
    assemble_hamiltonian,
    destroy,
    number,
    _embed,
)

ENVELOPES = ("rectangular", "blackman")
DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-11
SUPEROP_EIG_MAX_DIM = 16  # density-matrix side length for the eig fast path


# --------------------------------------------------------------------- tones

@dataclass(frozen=True)
class DriveTone:
    """One off-resonant microwave tone applied to a single qubit.

    ``detuning`` is the drive frequency minus the target qubit's 0-1
    frequency, in MHz (positive = drive above the qubit).  ``rise`` is
    the Blackman ramp length in ns and is ignored for rectangular
    envelopes.  ``start``/``duration`` are in us.
    """

    target: str
    amplitude: float
    detuning: float
    phase: float = 0.0
    envelope: str = "rectangular"
    rise: float = 0.0
    start: float = 0.0
    duration: float = 1.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("drive duration must be positive")
        if self.amplitude < 0:
            raise ValueError("drive amplitude must be non-negative")
        if self.envelope not in ENVELOPES:
            raise ValueError(f"unknown envelope {self.envelope!r}")
        if self.envelope == "blackman":
            if self.rise <= 0:
                raise ValueError("blackman envelope needs a positive rise (ns)")
            if 2 * self.rise * 1e-3 > self.duration:
                raise ValueError("rise and fall do not fit inside the duration")

    @property
    def stop(self) -> float:
        return self.start + self.duration

    def envelope_value(self, t: float) -> float:
        if not (self.start <= t <= self.stop):
            return 0.0
        if self.envelope == "rectangular":
            return 1.0
        rise_us = self.rise * 1e-3
        if t < self.start + rise_us:
            x = (t - self.start) / rise_us
        elif t > self.stop - rise_us:
            x = (self.stop - t) / rise_us
        else:
            return 1.0
        # rising half of a Blackman window, normalized to 1 at the top
        return 0.42 - 0.5 * math.cos(math.pi * x) + 0.08 * math.cos(2 * math.pi * x)


# --------------------------------------------------------------------- noise

@dataclass(frozen=True)
class NoiseSpec:
    """Per-qubit Lindblad rates plus quasi-static frequency jitter.

    ``relaxation`` and ``dephasing`` are 1/T1 and 1/Tphi in 1/us;
    ``jitter_khz`` is the standard deviation of a Gaussian quasi-static
    frequency offset in kHz, redrawn per shot by default (protocols
    expose a per-run mode for slow-drift studies).
    """

    relaxation: Mapping[str, float] = field(default_factory=dict)
    dephasing: Mapping[str, float] = field(default_factory=dict)
    jitter_khz: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for name, table in (
            ("relaxation", self.relaxation),
            ("dephasing", self.dephasing),
            ("jitter_khz", self.jitter_khz),
        ):
            for label, rate in table.items():
                if rate < 0:
                    raise ContractViolation(f"{name}[{label}] = {rate} is negative")

    @classmethod
    def none(cls) -> "NoiseSpec":
        return cls()

    @classmethod
    def from_device(
        cls,
        device: DeviceSpec,
        qubits: Optional[Iterable[str]] = None,
        dephasing_reference: str = "echo",
    ) -> "NoiseSpec":
        """Rates reproducing a device's coherence table.

        ``dephasing_reference="echo"`` takes the Markovian pure
        dephasing from T2E (which echo cannot remove) and adds the
        quasi-static jitter needed for a Ramsey fit to decay at T2R;
        this reproduces both published times and their ordering.
        ``"ramsey"`` instead derives Tphi from T2R and injects no
        jitter, making echo and Ramsey decay identically.
        """
        if dephasing_reference not in ("echo", "ramsey"):
            raise ValueError("dephasing_reference must be 'echo' or 'ramsey'")
        labels = tuple(qubits) if qubits is not None else device.labels()
        relaxation: dict[str, float] = {}
        dephasing: dict[str, float] = {}
        jitter: dict[str, float] = {}
        for label in labels:
            q = device.qubit(label)
            relaxation[label] = 1.0 / q.t1
            if dephasing_reference == "ramsey":
                dephasing[label] = max(1.0 / q.t2r - 0.5 / q.t1, 0.0)
                jitter[label] = 0.0
            else:
                dephasing[label] = max(1.0 / q.t2e - 0.5 / q.t1, 0.0)
                # choose sigma so the Gaussian-enveloped Ramsey signal
                # reaches 1/e at T2R: T2R/T2E + (2 pi s T2R)^2 / 2 = 1
                gap = max(1.0 - q.t2r / q.t2e, 0.0)
                sigma_mhz = math.sqrt(2.0 * gap) / (2.0 * math.pi * q.t2r)
                jitter[label] = sigma_mhz * 1e3
        return cls(relaxation, dephasing, jitter)

    def rate(self, table: str, label: str) -> float:
        return getattr(self, table).get(label, 0.0)

    def has_lindblad(self, labels: Iterable[str]) -> bool:
        return any(
            self.rate("relaxation", q) > 0 or self.rate("dephasing", q) > 0
            for q in labels
        )


def pure_dephasing_rate(t1: float, t2: float) -> float:
    """1/Tphi from a total coherence time: 1/T2 - 1/(2 T1), clipped at 0."""
    return max(1.0 / t2 - 0.5 / t1, 0.0)


# ------------------------------------------------------------------- records

@dataclass(frozen=True)
class AxisSpec:
    name: str
    values: tuple[float, ...]
    units: str


@dataclass
class ExperimentRecord:
    """One named protocol run: swept axes, per-point data, and replay
    metadata (config, seed, device reference)."""

    protocol: str
    axes: tuple[AxisSpec, ...]
    data: dict[str, np.ndarray]
    shots: int
    seed: Optional[int]
    device_ref: str
    config: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)
    schema_version: int = 1

    def __post_init__(self):
        shape = tuple(len(axis.values) for axis in self.axes)
        for key, values in self.data.items():
            arr = np.asarray(values)
            if arr.shape != shape:
                raise ValueError(
                    f"data[{key!r}] has shape {arr.shape}, axes imply {shape}"
                )
            self.data[key] = arr
            if key.startswith("p_"):
                if arr.size and (arr.min() < -1e-9 or arr.max() > 1 + 1e-9):
                    raise ContractViolation(
                        f"population data[{key!r}] outside [0, 1] beyond tolerance"
                    )
                self.data[key] = np.clip(arr, 0.0, 1.0)

    def axis(self, name: str) -> np.ndarray:
        for ax in self.axes:
            if ax.name == name:
                return np.asarray(ax.values)
        raise KeyError(name)


# -------------------------------------------------------- frame + term setup

FrameLike = Union[str, float, Mapping[str, float]]


def resolve_frame(
    sites: Sequence[str], frame: FrameLike, device: Optional[DeviceSpec]
) -> dict[str, float]:
    """Per-site frame frequencies in MHz.  ``"lab"`` means 0 everywhere
    (and implies no RWA in drive terms)."""
    if isinstance(frame, str):
        if frame == "lab":
            return {s: 0.0 for s in sites}
        if frame == "qubit":
            if device is None:
                raise ValueError("frame='qubit' needs the device")
            return {s: device.qubit(s).omega for s in sites}
        raise ValueError(f"unknown frame {frame!r}")
    if isinstance(frame, Mapping):
        missing = [s for s in sites if s not in frame]
        if missing:
            raise UnknownQubitError(missing[0])
        return {s: float(frame[s]) for s in sites}
    return {s: float(frame) for s in sites}


@dataclass
class _RotatingTerm:
    """env(t) * (M exp(-i(2 pi nu t + phase)) + h.c.), windowed in time."""

    matrix: np.ndarray
    nu: float
    phase: float
    tone: Optional[DriveTone]  # None = always-on (frame-split coupling)

    def window(self) -> tuple[float, float]:
        if self.tone is None:
            return (-math.inf, math.inf)
        return (self.tone.start, self.tone.stop)

    def breakpoints(self) -> tuple[float, ...]:
        """Times where the term's time dependence changes character."""
        if self.tone is None:
            return ()
        if self.tone.envelope == "rectangular":
            return (self.tone.start, self.tone.stop)
        rise_us = self.tone.rise * 1e-3
        return (
            self.tone.start,
            self.tone.start + rise_us,
            self.tone.stop - rise_us,
            self.tone.stop,
        )

    def envelope(self, t: float) -> float:
        return 1.0 if self.tone is None else self.tone.envelope_value(t)

    def is_static_on(self, left: float, right: float) -> bool:
        """Constant contribution over (left, right)?"""
        if self.nu != 0.0:
            return False
        if self.tone is None or self.tone.envelope == "rectangular":
            return True
        rise_us = self.tone.rise * 1e-3
        flat_left = self.tone.start + rise_us
        flat_right = self.tone.stop - rise_us
        return left >= flat_left - 1e-15 and right <= flat_right + 1e-15

    def add_to(self, h: np.ndarray, t: float) -> None:
        env = self.envelope(t)
        if env == 0.0:
            return
        rot = env * np.exp(-1j * (2 * np.pi * self.nu * t + self.phase))
        block = rot * self.matrix
        h += block
        h += block.conj().T


def _split_by_frame(
    h_abs: np.ndarray,
    labels: np.ndarray,
    frame_freqs: np.ndarray,
    tol: float = 1e-9,
) -> tuple[np.ndarray, list[_RotatingTerm]]:
    """Frame-transform an absolute-frequency Hamiltonian.

    Every matrix element (r, c) acquires the phase
    exp(+2 pi i t f.(n_r - n_c)); elements are bucketed by that
    frequency.  The zero bucket, minus the frame term f.n on the
    diagonal, is the static part.
    """
    dim = h_abs.shape[0]
    static = np.zeros_like(h_abs)
    buckets: dict[float, np.ndarray] = {}
    rows, cols = np.nonzero(h_abs)
    for r, c in zip(rows, cols):
        nu = float(frame_freqs @ (labels[r] - labels[c]))
        if abs(nu) < tol:
            static[r, c] = h_abs[r, c]
        elif nu > 0:
            key = round(nu, 9)
            if key not in buckets:
                buckets[key] = np.zeros_like(h_abs)
            buckets[key][r, c] = h_abs[r, c]
        # nu < 0 entries are the Hermitian partners of the nu > 0 bucket
    static -= np.diag(labels @ frame_freqs)
    terms = [
        # element phase is exp(+2 pi i nu t); in the M exp(-i(...)) convention
        # that is nu_term = -nu with M holding the +nu bucket
        _RotatingTerm(matrix=mat, nu=-nu, phase=0.0, tone=None)
        for nu, mat in sorted(buckets.items())
    ]
    return static, terms


def _drive_matrix(tone: DriveTone, sites: Sequence[str], levels: int) -> np.ndarray:
    if tone.target not in sites:
        raise UnknownQubitError(tone.target)
    site = list(sites).index(tone.target)
    a = _embed(destroy(levels), site, len(sites), levels).toarray()
    return a.conj().T  # raising operator


def _drive_terms(
    drives: Sequence[DriveTone],
    sites: Sequence[str],
    levels: int,
    frames: Mapping[str, float],
    device: Optional[DeviceSpec],
    rwa: bool,
) -> list[_RotatingTerm]:
    terms = []
    for tone in drives:
        if device is None:
            raise ValueError("drives need the device to resolve absolute frequencies")
        omega_d = device.qubit(tone.target).omega + tone.detuning
        adag = _drive_matrix(tone, sites, levels)
        if rwa:
            # (Omega/2)(a^dag e^{-i(2 pi (w_d - f) t + phi)} + h.c.)
            terms.append(
                _RotatingTerm(
                    matrix=0.5 * tone.amplitude * adag,
                    nu=omega_d - frames[tone.target],
                    phase=tone.phase,
                    tone=tone,
                )
            )
        else:
            if any(abs(f) > 1e-12 for f in frames.values()):
                raise ValueError("rwa=False is only supported in the lab frame")
            # full cosine drive: Omega cos(2 pi w_d t + phi)(a + a^dag);
            # with Hermitian M, the term M e^{-i theta} + h.c. equals
            # 2 M cos(theta), so M = (Omega/2)(a + a^dag).
            x = 0.5 * tone.amplitude * (adag + adag.conj().T)
            terms.append(
                _RotatingTerm(matrix=x, nu=omega_d, phase=tone.phase, tone=tone)
            )
    return terms


def _segment_edges(
    t0: float, t1: float, terms: Sequence[_RotatingTerm]
) -> np.ndarray:
    edges = {t0, t1}
    for term in terms:
        for edge in term.breakpoints():
            if t0 < edge < t1:
                edges.add(edge)
    return np.array(sorted(edges))


def _static_states(h: np.ndarray, psi: np.ndarray, times: np.ndarray) -> np.ndarray:
    """exp(-2 pi i H t) psi for Hermitian H over many times at once."""
    energies, basis = np.linalg.eigh(h)
    coeffs = basis.conj().T @ psi
    phases = np.exp(-2j * np.pi * np.outer(times, energies)) * coeffs
    return phases @ basis.T


ENVELOPE_SLICES = 24  # piecewise-constant resolution for ramp segments


def _envelope_only(terms: Sequence[_RotatingTerm]) -> bool:
    """True when the only time dependence is envelope shaping (all
    rotation frequencies vanish)."""
    return all(term.nu == 0.0 for term in terms)


def _propagate_sliced(
    static: np.ndarray,
    terms: Sequence[_RotatingTerm],
    psi: np.ndarray,
    left: float,
    right: float,
    t_eval: np.ndarray,
    n_slices: int = ENVELOPE_SLICES,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact stepping through an envelope ramp approximated as
    piecewise-constant over fine slices (midpoint amplitude).

    Returns (state at ``right``, states at the ``t_eval`` points, which
    must lie within [left, right])."""
    states_out = np.empty((len(t_eval), len(psi)), dtype=complex)
    at_left = np.abs(t_eval - left) <= 1e-15
    if at_left.any():
        states_out[at_left] = psi
    edges = np.linspace(left, right, n_slices + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        h = static.copy()
        for term in terms:
            term.add_to(h, 0.5 * (a + b))
        inside = (t_eval > a + 1e-15) & (t_eval <= b + 1e-15)
        if inside.any():
            states_out[inside] = _static_states(h, psi, t_eval[inside] - a)
        psi = _static_states(h, psi, np.array([b - a]))[0]
    return psi, states_out


def evolve(
    h0: LatticeOperator,
    drives: Sequence[DriveTone],
    psi0: np.ndarray,
    t_grid: Sequence[float],
    device: Optional[DeviceSpec] = None,
    frame: FrameLike = "qubit",
    rwa: bool = True,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    extra_static: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Closed-system trajectory; returns states of shape (len(t), dim).

    ``h0`` is the absolute-frequency subset Hamiltonian; the frame
    transform and drive terms are applied internally.  ``extra_static``
    (a matrix in the frame, e.g. a jitter term) is added verbatim.
    Piecewise-static configurations propagate by exact diagonalization;
    anything time-dependent integrates with an adaptive Dormand-Prince
    scheme and raises :class:`StiffnessError` on failure.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0 or np.any(np.diff(t_grid) < 0):
        raise ValueError("t_grid must be a non-empty ascending sequence")
    if t_grid[0] < 0:
        raise ValueError("t_grid times are measured from 0 and must be >= 0")
    psi0 = np.asarray(psi0, dtype=complex)
    if psi0.shape != (h0.dim,):
        raise ValueError(f"psi0 must have shape ({h0.dim},)")

    frames = resolve_frame(h0.sites, frame, device)
    labels = np.array(h0.basis_labels(), dtype=float)
    freqs = np.array([frames[s] for s in h0.sites])
    static, coupling_terms = _split_by_frame(h0.to_dense(), labels, freqs)
    if extra_static is not None:
        static = static + extra_static
    terms = coupling_terms + _drive_terms(
        drives, h0.sites, h0.levels, frames, device, rwa
    )
    return _run_closed(static, terms, psi0, t_grid, rtol, atol)


def _run_closed(static, terms, psi0, t_grid, rtol, atol) -> np.ndarray:
    """Propagate from the state at time 0 through ascending grid times."""
    out = np.empty((len(t_grid), len(psi0)), dtype=complex)
    edges = _segment_edges(0.0, float(t_grid[-1]), terms)
    psi = psi0.copy()
    for left, right in zip(edges[:-1], edges[1:]):
        sel = (t_grid >= left - 1e-15) & (t_grid <= right + 1e-15)
        inside = t_grid[sel]
        mid = 0.5 * (left + right)
        active = [
            term
            for term in terms
            if term.window()[0] < right and term.window()[1] > left
        ]
        if all(term.is_static_on(left, right) for term in active):
            h_seg = static.copy()
            for term in active:
                term.add_to(h_seg, mid)
            if inside.size:
                out[sel] = _static_states(h_seg, psi, inside - left)
            psi = _static_states(h_seg, psi, np.array([right - left]))[0]
        elif _envelope_only(active):
            psi, states = _propagate_sliced(static, active, psi, left, right, inside)
            if inside.size:
                out[sel] = states
        else:
            psi, states = _integrate_closed(
                static, active, psi, left, right, inside, rtol, atol
            )
            if inside.size:
                out[sel] = states
    if len(edges) == 1:  # grid entirely at t = 0
        out[:] = psi0
    return out


def _integrate_closed(static, terms, psi, left, right, t_eval, rtol, atol):
    fastest = max([abs(t.nu) for t in terms] + [1e-9])

    def rhs(t, y):
        h = static.copy()
        for term in terms:
            term.add_to(h, t)
        return -2j * np.pi * (h @ y)

    max_step = min(0.125 / fastest, right - left) if fastest > 1e-6 else right - left
    rises = [t.tone.rise * 1e-3 for t in terms if t.tone and t.tone.envelope == "blackman"]
    if rises:
        max_step = min(max_step, min(rises) / 8.0)
    t_points = np.unique(np.concatenate([t_eval, [right]]))
    sol = solve_ivp(
        rhs,
        (left, right),
        psi,
        method="DOP853",
        t_eval=t_points,
        rtol=rtol,
        atol=atol,
        max_step=max_step,
    )
    if not sol.success:
        raise StiffnessError(f"integrator failed on [{left}, {right}]: {sol.message}")
    states = sol.y.T
    final = states[-1]
    keep = states[np.isin(t_points, t_eval)] if t_eval.size else states[:0]
    return final, keep


# ----------------------------------------------------------- open evolution

def _collapse_operators(
    sites: Sequence[str], levels: int, noise: NoiseSpec
) -> list[tuple[float, np.ndarray]]:
    ops = []
    n_sites = len(sites)
    for k, label in enumerate(sites):
        g1 = noise.rate("relaxation", label)
        if g1 > 0:
            ops.append((g1, _embed(destroy(levels), k, n_sites, levels).toarray()))
        gphi = noise.rate("dephasing", label)
        if gphi > 0:
            ops.append((2.0 * gphi, _embed(number(levels), k, n_sites, levels).toarray()))
    return ops


def _liouvillian(h: np.ndarray, collapse: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    dim = h.shape[0]
    eye = np.eye(dim)
    lv = -2j * np.pi * (np.kron(h, eye) - np.kron(eye, h.T))
    for rate, op in collapse:
        opd = op.conj().T
        lv += rate * (
            np.kron(op, op.conj())
            - 0.5 * np.kron(opd @ op, eye)
            - 0.5 * np.kron(eye, (opd @ op).T)
        )
    return lv


class LindbladPropagator:
    """Reusable propagator for a static Lindblad generator.

    Diagonalizes the Liouvillian once; propagation to any time is then
    a pair of matrix products.  Only used for small systems (density
    matrix side <= 16); larger problems integrate directly.
    """

    def __init__(self, h: np.ndarray, collapse: Sequence[tuple[float, np.ndarray]]):
        self.dim = h.shape[0]
        lv = _liouvillian(h, collapse)
        self.evals, self.right = np.linalg.eig(lv)
        self.left = np.linalg.inv(self.right)

    def propagate(self, rho: np.ndarray, times: np.ndarray) -> np.ndarray:
        vec = self.left @ rho.reshape(-1)
        out = np.empty((len(times), self.dim, self.dim), dtype=complex)
        for i, t in enumerate(times):
            out[i] = (self.right @ (np.exp(self.evals * t) * vec)).reshape(
                self.dim, self.dim
            )
        return out


def evolve_open(
    h0: LatticeOperator,
    drives: Sequence[DriveTone],
    rho0: np.ndarray,
    noise: NoiseSpec,
    t_grid: Sequence[float],
    device: Optional[DeviceSpec] = None,
    frame: FrameLike = "qubit",
    rwa: bool = True,
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    extra_static: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Lindblad trajectory; returns density matrices (len(t), dim, dim).

    Relaxation enters through lowering operators, pure dephasing through
    number operators at twice the dephasing rate.  Quasi-static jitter
    is not sampled here; protocols add it as ``extra_static`` terms.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    rho0 = np.asarray(rho0, dtype=complex)
    if rho0.shape != (h0.dim, h0.dim):
        raise ValueError(f"rho0 must have shape ({h0.dim}, {h0.dim})")
    if abs(np.trace(rho0) - 1.0) > 1e-9:
        raise ContractViolation("rho0 must have unit trace")
    eigmin = float(np.linalg.eigvalsh(0.5 * (rho0 + rho0.conj().T)).min())
    if eigmin < -1e-9:
        raise ContractViolation(f"rho0 is not positive semidefinite ({eigmin:.2e})")

    frames = resolve_frame(h0.sites, frame, device)
    labels = np.array(h0.basis_labels(), dtype=float)
    freqs = np.array([frames[s] for s in h0.sites])
    static, coupling_terms = _split_by_frame(h0.to_dense(), labels, freqs)
    if extra_static is not None:
        static = static + extra_static
    terms = coupling_terms + _drive_terms(
        drives, h0.sites, h0.levels, frames, device, rwa
    )
    collapse = _collapse_operators(h0.sites, h0.levels, noise)

    if t_grid[0] < 0:
        raise ValueError("t_grid times are measured from 0 and must be >= 0")
    out = np.empty((len(t_grid), h0.dim, h0.dim), dtype=complex)
    edges = _segment_edges(0.0, float(t_grid[-1]), terms)
    rho = rho0.copy()
    for left, right in zip(edges[:-1], edges[1:]):
        sel = (t_grid >= left - 1e-15) & (t_grid <= right + 1e-15)
        inside = t_grid[sel]
        active = [
            t for t in terms if t.window()[0] < right and t.window()[1] > left
        ]
        if (
            all(t.is_static_on(left, right) for t in active)
            and h0.dim <= SUPEROP_EIG_MAX_DIM
        ):
            h_seg = static.copy()
            for term in active:
                term.add_to(h_seg, 0.5 * (left + right))
            prop = LindbladPropagator(h_seg, collapse)
            if inside.size:
                out[sel] = prop.propagate(rho, inside - left)
            rho = prop.propagate(rho, np.array([right - left]))[0]
        else:
            rho, rhos = _integrate_open(
                static, active, collapse, rho, left, right, inside, rtol, atol
            )
            if inside.size:
                out[sel] = rhos
    if len(edges) == 1:
        out[:] = rho0
    return out


def _integrate_open(static, terms, collapse, rho, left, right, t_eval, rtol, atol):
    dim = rho.shape[0]
    fastest = max([abs(t.nu) for t in terms] + [1e-9])
    csum = sum(rate * (op.conj().T @ op) for rate, op in collapse) if collapse else None

    def rhs(t, y):
        r = y.reshape(dim, dim)
        h = static.copy()
        for term in terms:
            term.add_to(h, t)
        drho = -2j * np.pi * (h @ r - r @ h)
        if collapse:
            for rate, op in collapse:
                drho += rate * (op @ r @ op.conj().T)
            drho -= 0.5 * (csum @ r + r @ csum)
        return drho.reshape(-1)

    max_step = min(0.125 / fastest, right - left) if fastest > 1e-6 else right - left
    rises = [t.tone.rise * 1e-3 for t in terms if t.tone and t.tone.envelope == "blackman"]
    if rises:
        max_step = min(max_step, min(rises) / 8.0)
    t_points = np.unique(np.concatenate([t_eval, [right]]))
    sol = solve_ivp(
        rhs,
        (left, right),
        rho.reshape(-1),
        method="DOP853",
        t_eval=t_points,
        rtol=rtol,
        atol=atol,
        max_step=max_step,
    )
    if not sol.success:
        raise StiffnessError(f"integrator failed on [{left}, {right}]: {sol.message}")
    rhos = sol.y.T.reshape(-1, dim, dim)
    keep = rhos[np.isin(t_points, t_eval)] if t_eval.size else rhos[:0]
    return rhos[-1], keep


# --------------------------------------------------- Stark-shift calibration

def stark_shift(
    params: TransmonParams, drive_freq: float, amplitude: float, levels: int = 4
) -> float:
    """AC-Stark shift (MHz) of the 0-1 transition under one off-resonant
    tone, from exact diagonalization of the driven transmon in the frame
    rotating at the drive."""
    delta = params.omega - drive_freq
    occ = np.arange(levels, dtype=float)
    h = np.diag((delta + 0.5 * params.alpha * (occ - 1.0)) * occ).astype(complex)
    a = destroy(levels).toarray()
    h += 0.5 * amplitude * (a + a.conj().T)
    energies, basis = np.linalg.eigh(h)
    weights = np.abs(basis) ** 2
    idx0 = int(np.argmax(weights[0]))
    idx1 = int(np.argmax(weights[1]))
    if idx0 == idx1:
        raise ContractViolation(
            "drive hybridizes the lowest transmon levels; shift undefined"
        )
    return float(energies[idx1] - energies[idx0]) - delta


def stark_shift_curve(
    params: TransmonParams,
    drive_freq: float,
    amplitudes: Sequence[float],
    levels: int = 4,
) -> np.ndarray:
    return np.array(
        [stark_shift(params, drive_freq, amp, levels) for amp in amplitudes]
    )


def stark_amplitude_for_shift(
    params: TransmonParams,
    drive_freq: float,
    target_shift: float,
    levels: int = 4,
    max_amplitude: float = 80.0,
) -> float:
    """Amplitude whose calibrated Stark shift equals ``target_shift``,
    by bisection on the numerically computed curve."""
    lo, hi = 0.0, max_amplitude
    s_lo = 0.0
    s_hi = stark_shift(params, drive_freq, hi, levels)
    if (target_shift - s_lo) * (target_shift - s_hi) > 0:
        raise ValueError(
            f"target shift {target_shift} MHz not reachable below "
            f"{max_amplitude} MHz amplitude (range {s_lo}..{s_hi})"
        )
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        s_mid = stark_shift(params, drive_freq, mid, levels)
        if (target_shift - s_lo) * (target_shift - s_mid) <= 0:
            hi, s_hi = mid, s_mid
        else:
            lo, s_lo = mid, s_mid
    return 0.5 * (lo + hi)


# -------------------------------------------------------------- ideal pulses

def rotation_gate(theta: float, axis_phase: float, levels: int) -> np.ndarray:
    """Ideal instantaneous rotation on the 0-1 subspace of a d-level
    site: exp(-i theta/2 (cos(phi) X + sin(phi) Y)); higher levels are
    untouched (no leakage in the measurement model)."""
    u = np.eye(levels, dtype=complex)
    c, s = math.cos(theta / 2.0), math.sin(theta / 2.0)
    u[0, 0] = c
    u[1, 1] = c
    u[0, 1] = -1j * s * np.exp(-1j * axis_phase)
    u[1, 0] = -1j * s * np.exp(1j * axis_phase)
    return u


def apply_site_gate(
    state: np.ndarray, gate: np.ndarray, site: int, n_sites: int, levels: int
) -> np.ndarray:
    """Apply a single-site gate to a state vector or density matrix."""
    full = _embed_dense(gate, site, n_sites, levels)
    if state.ndim == 1:
        return full @ state
    return full @ state @ full.conj().T


def _embed_dense(op: np.ndarray, site: int, n_sites: int, levels: int) -> np.ndarray:
    left = np.eye(levels**site)
    right = np.eye(levels ** (n_sites - site - 1))
    return np.kron(np.kron(left, op), right).astype(complex)


def site_populations(
    state: np.ndarray, site: int, n_sites: int, levels: int
) -> np.ndarray:
    """Occupation-level populations of one site (bare basis)."""
    if state.ndim == 1:
        probs = np.abs(state) ** 2
    else:
        probs = np.real(np.diag(state))
    shaped = probs.reshape((levels,) * n_sites)
    axes = tuple(k for k in range(n_sites) if k != site)
    return shaped.sum(axis=axes)


def reduced_site_state(
    state: np.ndarray, site: int, n_sites: int, levels: int
) -> np.ndarray:
    """Reduced density matrix of one site from a state vector or
    density matrix on the subset space."""
    if state.ndim == 1:
        psi = np.moveaxis(state.reshape((levels,) * n_sites), site, 0)
        psi = psi.reshape(levels, -1)
        return psi @ psi.conj().T
    ket = list(string.ascii_lowercase[:n_sites])
    bra = list(string.ascii_lowercase[:n_sites])
    ket[site] = "y"
    bra[site] = "z"
    sub = "".join(ket) + "".join(bra) + "->yz"
    return np.einsum(sub, state.reshape((levels,) * (2 * n_sites)))


def site_coherence(
    state: np.ndarray, site: int, n_sites: int, levels: int
) -> complex:
    """<0|rho_site|1>, which rotates as exp(+2 pi i (E1 - E0) t)."""
    return complex(reduced_site_state(state, site, n_sites, levels)[0, 1])


# ----------------------------------------------------------------- sampling

def sample_binary(
    p_one: np.ndarray, shots: int, rng: np.random.Generator, assignment_error: float = 0.0
) -> np.ndarray:
    """Projective sampling of a binary observable with optional
    symmetric assignment error."""
    p = np.clip(np.asarray(p_one, dtype=float), 0.0, 1.0)
    if assignment_error:
        p = p * (1 - assignment_error) + (1 - p) * assignment_error
    return rng.binomial(shots, p) / shots


def _rng_for(seed: Optional[int], *counters: int) -> np.random.Generator:
    """Deterministic per-task generator derived from a master seed."""
    if seed is None:
        seed = 0
    return np.random.default_rng(np.random.SeedSequence([seed, *counters]))


# ---------------------------------------------------------------- protocols

def _single_qubit_h0(device: DeviceSpec, qubit: str, levels: int) -> LatticeOperator:
    subset = SubsetSelection((qubit,), levels)
    return assemble_hamiltonian(device, subset)


def _jitter_term(
    sites: Sequence[str],
    levels: int,
    offsets_mhz: Mapping[str, float],
) -> np.ndarray:
    dim = levels ** len(sites)
    term = np.zeros((dim, dim), dtype=complex)
    for k, label in enumerate(sites):
        df = offsets_mhz.get(label, 0.0)
        if df:
            term += df * _embed(number(levels), k, len(sites), levels).toarray()
    return term


def protocol_t1(
    device: DeviceSpec,
    qubit: str,
    delays: Sequence[float],
    noise: Optional[NoiseSpec] = None,
    shots: int = 0,
    seed: Optional[int] = None,
    levels: int = 2,
    assignment_error: float = 0.0,
) -> ExperimentRecord:
    """Excite, wait, measure: records excited-state population vs delay."""
    noise = noise if noise is not None else NoiseSpec.from_device(device, (qubit,))
    delays = np.asarray(delays, dtype=float)
    h0 = _single_qubit_h0(device, qubit, levels)
    rho0 = np.zeros((levels, levels), dtype=complex)
    rho0[1, 1] = 1.0
    rhos = evolve_open(h0, [], rho0, noise, delays, device=device, frame="qubit")
    p1 = np.real(rhos[:, 1, 1])
    if shots > 0:
        p1 = sample_binary(p1, shots, _rng_for(seed, 0), assignment_error)
    return ExperimentRecord(
        protocol="t1",
        axes=(AxisSpec("delay", tuple(delays), "us"),),
        data={"p_excited": p1},
        shots=shots,
        seed=seed,
        device_ref=qubit,
        config={"qubit": qubit, "levels": levels},
    )


def _ramsey_coherence(
    device: DeviceSpec,
    qubit: str,
    delays: np.ndarray,
    noise: NoiseSpec,
    jitter_offset: float,
    levels: int,
    echo: bool,
) -> np.ndarray:
    """<0|rho|1> after (pi/2 - wait - [pi] - wait) with an extra static
    frequency offset on the qubit, in the qubit frame."""
    h0 = _single_qubit_h0(device, qubit, levels)
    extra = _jitter_term((qubit,), levels, {qubit: jitter_offset})
    psi = rotation_gate(math.pi / 2.0, math.pi / 2.0, levels)[:, 0]
    rho0 = np.outer(psi, psi.conj())
    if not echo:
        rhos = evolve_open(
            h0, [], rho0, noise, delays, device=device, frame="qubit", extra_static=extra
        )
        return rhos[:, 0, 1]
    out = np.empty(len(delays), dtype=complex)
    pi_gate = rotation_gate(math.pi, 0.0, levels)
    for i, tau in enumerate(delays):
        if tau == 0:
            out[i] = rho0[0, 1]
            continue
        half = np.array([tau / 2.0])
        mid = evolve_open(
            h0, [], rho0, noise, half, device=device, frame="qubit", extra_static=extra
        )[0]
        mid = pi_gate @ mid @ pi_gate.conj().T
        fin = evolve_open(
            h0, [], mid, noise, half, device=device, frame="qubit", extra_static=extra
        )[0]
        out[i] = fin[0, 1]
    return out


def protocol_ramsey(
    device: DeviceSpec,
    qubit: str,
    delays: Sequence[float],
    detuning: float = 1.0,
    noise: Optional[NoiseSpec] = None,
    shots: int = 0,
    seed: Optional[int] = None,
    levels: int = 2,
    jitter_mode: str = "per_shot",
    assignment_error: float = 0.0,
) -> ExperimentRecord:
    """Ramsey fringe at a programmed software detuning (MHz).

    Quasi-static jitter: ``per_shot`` redraws the frequency offset every
    shot (the analytic shots=0 limit applies the exact Gaussian
    envelope); ``per_run`` freezes one offset for the whole record,
    which is the regime of slow drift between repeated experiments.
    """
    noise = noise if noise is not None else NoiseSpec.from_device(device, (qubit,))
    if jitter_mode not in ("per_shot", "per_run"):
        raise ValueError("jitter_mode must be 'per_shot' or 'per_run'")
    delays = np.asarray(delays, dtype=float)
    sigma_mhz = noise.rate("jitter_khz", qubit) * 1e-3
    rng = _rng_for(seed, 1)

    def signal_for(offset: float) -> np.ndarray:
        coh = _ramsey_coherence(device, qubit, delays, noise, offset, levels, echo=False)
        return 0.5 + np.real(coh * np.exp(2j * np.pi * detuning * delays))

    if jitter_mode == "per_run":
        offset = float(rng.normal(0.0, sigma_mhz)) if sigma_mhz > 0 else 0.0
        p1 = signal_for(offset)
        if shots > 0:
            p1 = sample_binary(p1, shots, rng, assignment_error)
    elif shots == 0:
        # infinite-shot limit of per-shot sampling: exact Gaussian envelope
        coh = _ramsey_coherence(device, qubit, delays, noise, 0.0, levels, echo=False)
        gauss = np.exp(-0.5 * (2 * np.pi * sigma_mhz * delays) ** 2)
        p1 = 0.5 + np.real(coh * np.exp(2j * np.pi * detuning * delays)) * gauss
    else:
        coh0 = _ramsey_coherence(device, qubit, delays, noise, 0.0, levels, echo=False)
        p1 = np.empty(len(delays))
        for i, t in enumerate(delays):
            offsets = rng.normal(0.0, sigma_mhz, shots) if sigma_mhz > 0 else np.zeros(shots)
            phase = np.exp(2j * np.pi * (detuning + offsets) * t)
            probs = 0.5 + np.real(coh0[i] * phase)
            flips = rng.random(shots) < np.clip(
                probs * (1 - 2 * assignment_error) + assignment_error, 0, 1
            )
            p1[i] = flips.mean()
    return ExperimentRecord(
        protocol="ramsey",
        axes=(AxisSpec("delay", tuple(delays), "us"),),
        data={"p_excited": np.clip(p1, 0, 1)},
        shots=shots,
        seed=seed,
        device_ref=qubit,
        config={
            "qubit": qubit,
            "detuning": detuning,
            "levels": levels,
            "jitter_mode": jitter_mode,
        },
    )


def protocol_echo(
    device: DeviceSpec,
    qubit: str,
    delays: Sequence[float],
    noise: Optional[NoiseSpec] = None,
    shots: int = 0,
    seed: Optional[int] = None,
    levels: int = 2,
    assignment_error: float = 0.0,
) -> ExperimentRecord:
    """Hahn echo: the mid-sequence pi pulse cancels quasi-static jitter,
    so the decay is set by T1 and the Markovian dephasing alone."""
    noise = noise if noise is not None else NoiseSpec.from_device(device, (qubit,))
    delays = np.asarray(delays, dtype=float)
    # quasi-static offsets cancel exactly; evolve once without them
    coh = _ramsey_coherence(device, qubit, delays, noise, 0.0, levels, echo=True)
    p1 = 0.5 + np.abs(coh)
    if shots > 0:
        p1 = sample_binary(p1, shots, _rng_for(seed, 2), assignment_error)
    return ExperimentRecord(
        protocol="echo",
        axes=(AxisSpec("delay", tuple(delays), "us"),),
        data={"p_excited": np.clip(p1, 0, 1)},
        shots=shots,
        seed=seed,
        device_ref=qubit,
        config={"qubit": qubit, "levels": levels},
    )


DEFAULT_STARK_DETUNING = -60.0  # MHz below the shifted qubit


def protocol_swap(
    device: DeviceSpec,
    pair: tuple[str, str],
    amplitudes: Sequence[float],
    durations: Sequence[float],
    drive_detuning: float = DEFAULT_STARK_DETUNING,
    noise: Optional[NoiseSpec] = None,
    seed: Optional[int] = None,
    levels: int = 3,
    j_override: Optional[float] = None,
) -> ExperimentRecord:
    """Swap chevron: pair[0] starts excited and is Stark-shifted through
    resonance with pair[1]; populations are recorded on a 2D
    (amplitude, duration) grid.

    The Stark tone enters the evolved Hamiltonian; the recorded
    ``stark_shift`` metadata comes from the single-qubit calibration
    curve.  Lindblad rates in ``noise`` damp the chevron; quasi-static
    jitter is not sampled here (it is far below the J scale).
    """
    shifted, partner = pair
    amplitudes = np.asarray(amplitudes, dtype=float)
    durations = np.asarray(durations, dtype=float)
    subset = SubsetSelection((shifted, partner), levels)
    overrides = None
    if j_override is not None:
        from .device import pair_key

        overrides = {pair_key(shifted, partner): j_override}
    h0 = assemble_hamiltonian(device, subset, j_overrides=overrides)
    drive_freq = device.qubit(shifted).omega + drive_detuning
    shifts = stark_shift_curve(device.qubit(shifted), drive_freq, amplitudes, levels)
    open_system = noise is not None and noise.has_lindblad(pair)

    psi0 = np.zeros(levels**2, dtype=complex)
    psi0[levels] = 1.0  # |1, 0> in little-endian subset order
    p_shift = np.empty((len(amplitudes), len(durations)))
    p_partner = np.empty_like(p_shift)
    max_dur = float(durations[-1])
    for i, amp in enumerate(amplitudes):
        tone = DriveTone(
            target=shifted,
            amplitude=float(amp),
            detuning=drive_detuning,
            duration=max_dur if max_dur > 0 else 1.0,
        )
        tones = [tone] if amp > 0 else []
        if open_system:
            states = evolve_open(
                h0, tones, np.outer(psi0, psi0.conj()), noise, durations,
                device=device, frame=drive_freq,
            )
        else:
            states = evolve(
                h0, tones, psi0, durations, device=device, frame=drive_freq
            )
        for k, state in enumerate(states):
            p_shift[i, k] = site_populations(state, 0, 2, levels)[1]
            p_partner[i, k] = site_populations(state, 1, 2, levels)[1]
    return ExperimentRecord(
        protocol="swap_chevron",
        axes=(
            AxisSpec("amplitude", tuple(amplitudes), "MHz"),
            AxisSpec("duration", tuple(durations), "us"),
        ),
        data={"p_shifted": p_shift, "p_partner": p_partner},
        shots=0,
        seed=seed,
        device_ref=f"{shifted},{partner}",
        config={
            "pair": list(pair),
            "drive_detuning": drive_detuning,
            "levels": levels,
            "j_override": j_override,
        },
        metadata={"stark_shift": shifts.tolist(), "drive_freq": drive_freq},
    )


def swap_resonance(record: ExperimentRecord) -> dict:
    """Locate the chevron's resonance slice and fit its oscillation.

    Returns the best amplitude index, the fitted population-oscillation
    frequency (MHz), and the full swap period 1/f (us).
    """
    p_partner = record.data["p_partner"]
    durations = record.axis("duration")
    best = int(np.argmax(p_partner.max(axis=1)))
    fit = fit_damped_cos(durations, record.data["p_shifted"][best])
    freq = abs(fit.params["f"])
    return {
        "amplitude_index": best,
        "oscillation_freq": freq,
        "swap_period": 1.0 / freq,
        "max_transfer": float(p_partner[best].max()),
        "fit": fit,
    }


def protocol_acstark_ramsey(
    device: DeviceSpec,
    pair: tuple[str, str],
    amplitudes: Sequence[float],
    drive_detuning: float = DEFAULT_STARK_DETUNING,
    delays: Optional[Sequence[float]] = None,
    software_detuning: float = 2.0,
    noise: Optional[NoiseSpec] = None,
    seed: Optional[int] = None,
    levels: int = 3,
    jitter_mode: str = "per_run",
) -> ExperimentRecord:
    """Track pair[0]'s Ramsey frequency while pair[1] is Stark-shifted
    toward it.

    Per amplitude point, the measured qubit runs a Ramsey experiment
    with the Stark tone on during the free evolution; the fitted
    frequency minus the zero-amplitude reference is the level-repulsion
    shift.  ``delta_model`` in the record is the instantaneous detuning
    (measured minus shifted-partner frequency) from the Stark
    calibration curve, ready for the anticrossing fit.  Quasi-static
    jitter on the measured qubit is redrawn per amplitude point
    (``per_run``), matching slow drift between repeated experiments.
    """
    measured, shifted = pair
    noise = noise if noise is not None else NoiseSpec.none()
    amplitudes = np.asarray(amplitudes, dtype=float)
    if delays is None:
        delays = np.linspace(0.0, 3.0, 61)
    delays = np.asarray(delays, dtype=float)
    if jitter_mode not in ("per_run", "per_shot"):
        raise ValueError("jitter_mode must be 'per_run' or 'per_shot'")

    subset = SubsetSelection((measured, shifted), levels)
    h0 = assemble_hamiltonian(device, subset)
    drive_freq = device.qubit(shifted).omega + drive_detuning
    frame = drive_freq
    omega_meas = device.qubit(measured).omega
    partner_shift = stark_shift_curve(device.qubit(shifted), drive_freq, amplitudes, levels)
    sigma_mhz = noise.rate("jitter_khz", measured) * 1e-3
    rng = _rng_for(seed, 3)
    use_lindblad = noise.has_lindblad((measured, shifted))

    psi_meas = rotation_gate(math.pi / 2.0, math.pi / 2.0, levels)[:, 0]
    ground = np.zeros(levels, dtype=complex)
    ground[0] = 1.0
    psi0 = np.kron(psi_meas, ground)
    rho0 = np.outer(psi0, psi0.conj())

    max_dur = float(delays[-1]) if delays[-1] > 0 else 1.0

    def fitted_frequency(amp: float, offset: float) -> float:
        extra = _jitter_term((measured, shifted), levels, {measured: offset})
        tones = (
            [
                DriveTone(
                    target=shifted,
                    amplitude=float(amp),
                    detuning=drive_detuning,
                    duration=max_dur,
                )
            ]
            if amp > 0
            else []
        )
        if use_lindblad:
            states = evolve_open(
                h0, tones, rho0, noise, delays, device=device, frame=frame,
                extra_static=extra,
            )
        else:
            states = evolve(
                h0, tones, psi0, delays, device=device, frame=frame,
                extra_static=extra,
            )
        coh = np.array(
            [site_coherence(s, 0, 2, levels) for s in states]
        )
        # demodulate from the drive frame to the measured qubit's own
        # frame, so the fit sees only the repulsion shift plus jitter
        demod = np.exp(-2j * np.pi * (omega_meas - drive_freq) * delays)
        signal = 0.5 + np.real(
            coh * demod * np.exp(2j * np.pi * software_detuning * delays)
        )
        fit = fit_damped_cos(delays, signal)
        return float(fit.params["f"]) - software_detuning

    reference = fitted_frequency(0.0, 0.0)
    freq_shift = np.empty(len(amplitudes))
    for i, amp in enumerate(amplitudes):
        offset = float(rng.normal(0.0, sigma_mhz)) if sigma_mhz > 0 else 0.0
        try:
            freq_shift[i] = fitted_frequency(float(amp), offset) - reference
        except AliasingError:
            # deep hybridization can defeat the single-tone fit; the
            # point is recorded as unresolved and excluded downstream
            freq_shift[i] = np.nan

    omega_shift = device.qubit(shifted).omega
    delta_model = omega_meas - (omega_shift + partner_shift)
    return ExperimentRecord(
        protocol="acstark_ramsey",
        axes=(AxisSpec("amplitude", tuple(amplitudes), "MHz"),),
        data={
            "freq_shift": freq_shift,
            "partner_shift": partner_shift,
            "delta_model": delta_model,
        },
        shots=0,
        seed=seed,
        device_ref=f"{measured},{shifted}",
        config={
            "pair": list(pair),
            "drive_detuning": drive_detuning,
            "software_detuning": software_detuning,
            "levels": levels,
            "jitter_khz": sigma_mhz * 1e3,
            "jitter_mode": jitter_mode,
        },
        metadata={"drive_freq": drive_freq, "reference_freq": reference},
    )


def extract_anticrossing(record: ExperimentRecord, guard: float = 2.0) -> dict:
    """Exchange coupling and scatter metrics from an AC-Stark Ramsey
    record.

    Returns both quantities separately: ``j`` is the anticrossing-model
    fit, ``freq_scatter_std`` is the standard deviation of the measured
    frequency shifts (the quantity reported for uncoupled pairs, which
    bounds any residual coupling by the measurement's jitter floor).
    They measure different things and are not interchangeable.
    """
    from .fitting import fit_anticrossing

    delta = record.data["delta_model"]
    shift = record.data["freq_shift"]
    mask = (np.abs(delta) >= guard) & np.isfinite(shift)
    fit = fit_anticrossing(delta[mask], shift[mask], guard=guard)
    return {
        "j": abs(fit.params["J"]),
        "fit": fit,
        "freq_scatter_std": float(np.std(shift, ddof=1)) if len(shift) > 1 else 0.0,
        "points_used": int(mask.sum()),
    }

