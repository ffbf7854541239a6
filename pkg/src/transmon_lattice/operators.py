"""Truncated-oscillator Hamiltonians on subsets of the lattice.

Operators live on a tensor product of d-level sites.  Basis ordering is
little-endian in the subset list order: the occupation of the *last*
listed qubit varies fastest, i.e. basis index = sum_k n_k d^(m-1-k).
This ordering is frozen; file outputs rely on it.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Mapping, Optional

import numpy as np
from scipy import sparse

from .device import DeviceSpec, TransmonParams, Pair, pair_key
from .errors import (
    DimensionError,
    ResourceLimitError,
    UnknownQubitError,
)

DEFAULT_DIMENSION_CAP = 4096


@dataclass(frozen=True)
class SubsetSelection:
    """An ordered subset of qubits with a common truncation d >= 2."""

    qubits: tuple[str, ...]
    levels: int = 4
    dimension_cap: int = DEFAULT_DIMENSION_CAP

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(self.qubits))
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"subset has repeated qubits: {self.qubits}")
        if self.levels < 2:
            raise DimensionError(f"need at least 2 levels per site, got {self.levels}")
        if self.dim > self.dimension_cap:
            raise ResourceLimitError(
                f"dimension {self.levels}^{len(self.qubits)} = {self.dim} exceeds "
                f"cap {self.dimension_cap}"
            )

    @property
    def dim(self) -> int:
        return self.levels ** len(self.qubits)

    def index_of(self, label: str) -> int:
        try:
            return self.qubits.index(label)
        except ValueError:
            raise UnknownQubitError(label) from None

    def validate_against(self, device: DeviceSpec) -> None:
        for label in self.qubits:
            device.qubit(label)


@dataclass(frozen=True)
class LatticeOperator:
    """A sparse complex operator on a subset's tensor-product space."""

    matrix: sparse.csr_matrix
    sites: tuple[str, ...]
    levels: int

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def to_dense(self) -> np.ndarray:
        return np.asarray(self.matrix.todense(), dtype=complex)

    def basis_labels(self) -> list[tuple[int, ...]]:
        """Occupation tuple for every basis index, in index order."""
        return list(product(range(self.levels), repeat=len(self.sites)))

    def hermiticity_defect(self) -> float:
        """Max-norm of H - H^dagger; exactly 0.0 for the builders here."""
        defect = self.matrix - self.matrix.getH()
        return 0.0 if defect.nnz == 0 else float(np.abs(defect.data).max())

    def __add__(self, other: "LatticeOperator") -> "LatticeOperator":
        if self.sites != other.sites or self.levels != other.levels:
            raise ValueError("operators act on different spaces")
        return LatticeOperator(
            (self.matrix + other.matrix).tocsr(), self.sites, self.levels
        )

    def scaled(self, factor: complex) -> "LatticeOperator":
        return LatticeOperator((factor * self.matrix).tocsr(), self.sites, self.levels)


def destroy(d: int) -> sparse.csr_matrix:
    """Lowering operator with the standard sqrt(k) ladder factors."""
    if d < 2:
        raise DimensionError(f"need at least 2 levels, got {d}")
    return sparse.diags(np.sqrt(np.arange(1, d)), offsets=1, format="csr").astype(
        complex
    )


def number(d: int) -> sparse.csr_matrix:
    if d < 2:
        raise DimensionError(f"need at least 2 levels, got {d}")
    return sparse.diags(np.arange(d, dtype=float), format="csr").astype(complex)


def _embed(op: sparse.spmatrix, site: int, n_sites: int, d: int) -> sparse.csr_matrix:
    """kron-embed a single-site operator at position ``site``."""
    left = sparse.identity(d**site, format="csr", dtype=complex)
    right = sparse.identity(d ** (n_sites - site - 1), format="csr", dtype=complex)
    return sparse.kron(sparse.kron(left, op), right, format="csr")


def site_hamiltonian(params: TransmonParams, d: int) -> LatticeOperator:
    """Duffing on-site term: diagonal (omega + alpha/2 (k-1)) k at
    occupation k, in MHz."""
    if d < 2:
        raise DimensionError(f"need at least 2 levels, got {d}")
    k = np.arange(d, dtype=float)
    diag = (params.omega + 0.5 * params.alpha * (k - 1.0)) * k
    return LatticeOperator(
        sparse.diags(diag, format="csr").astype(complex), (params.label,), d
    )


def lowering_operator(label: str, subset: SubsetSelection) -> LatticeOperator:
    """a_label embedded in the subset space."""
    site = subset.index_of(label)
    mat = _embed(destroy(subset.levels), site, len(subset.qubits), subset.levels)
    return LatticeOperator(mat, subset.qubits, subset.levels)


def number_operator(label: str, subset: SubsetSelection) -> LatticeOperator:
    site = subset.index_of(label)
    mat = _embed(number(subset.levels), site, len(subset.qubits), subset.levels)
    return LatticeOperator(mat, subset.qubits, subset.levels)


def total_excitation(subset: SubsetSelection) -> LatticeOperator:
    total = sparse.csr_matrix((subset.dim, subset.dim), dtype=complex)
    for k in range(len(subset.qubits)):
        total = total + _embed(number(subset.levels), k, len(subset.qubits), subset.levels)
    return LatticeOperator(total.tocsr(), subset.qubits, subset.levels)


def exchange_operator(i: str, j: str, subset: SubsetSelection) -> LatticeOperator:
    """Hermitian hopping term a_i^dag a_j + a_i a_j^dag on the subset."""
    if i == j:
        raise ValueError("exchange needs two distinct qubits")
    d, n = subset.levels, len(subset.qubits)
    a_i = _embed(destroy(d), subset.index_of(i), n, d)
    a_j = _embed(destroy(d), subset.index_of(j), n, d)
    hop = a_i.getH() @ a_j
    return LatticeOperator((hop + hop.getH()).tocsr(), subset.qubits, subset.levels)


def _site_term_matrix(device: DeviceSpec, subset: SubsetSelection) -> sparse.csr_matrix:
    d, n = subset.levels, len(subset.qubits)
    total = sparse.csr_matrix((subset.dim, subset.dim), dtype=complex)
    for k, label in enumerate(subset.qubits):
        params = device.qubit(label)
        occ = np.arange(d, dtype=float)
        diag = (params.omega + 0.5 * params.alpha * (occ - 1.0)) * occ
        total = total + _embed(sparse.diags(diag).astype(complex), k, n, d)
    return total.tocsr()


def assemble_hamiltonian(
    device: DeviceSpec,
    subset: SubsetSelection,
    include_long_range: bool = False,
    j_overrides: Optional[Mapping[Pair, float]] = None,
) -> LatticeOperator:
    """Subset Hamiltonian: on-site Duffing terms plus J exchange for
    every coupled nearest-neighbor pair inside the subset, plus the
    long-range residuals when requested.  ``j_overrides`` replaces the
    device J for specific pairs (canonical-order keys).

    The result is Hermitian by construction and carries frequencies in
    MHz.
    """
    subset.validate_against(device)
    overrides = {pair_key(*p): v for p, v in (j_overrides or {}).items()}

    total = _site_term_matrix(device, subset)
    inside = set(subset.qubits)
    pairs: dict[Pair, float] = {}
    for (a, b), j in device.couplings.nn.items():
        if a in inside and b in inside:
            pairs[(a, b)] = j
    if include_long_range:
        for (a, b), j in device.couplings.lr.items():
            if a in inside and b in inside:
                pairs[(a, b)] = pairs.get((a, b), 0.0) + j
    for pair, j in overrides.items():
        a, b = pair
        if a in inside and b in inside:
            pairs[pair] = j

    for (a, b), j in sorted(pairs.items()):
        if j != 0.0:
            total = total + j * exchange_operator(a, b, subset).matrix
    return LatticeOperator(total.tocsr(), subset.qubits, subset.levels)
