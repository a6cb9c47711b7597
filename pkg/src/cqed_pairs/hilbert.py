"""Truncated atom x field Hilbert space.

Four atomic levels times four cavity modes (two longitudinal modes, two
circular polarizations each), every mode truncated at one photon. The flat
index of a basis state is ``atom * 16 + n1p * 8 + n1m * 4 + n2p * 2 + n2m``.
"""
from __future__ import annotations

import enum
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

DIM = 64
N_MODES = 4


class AtomLevel(enum.IntEnum):
    G2 = 0  # |0_0>, top of the cascade
    M_MINUS = 1  # |1'_{-1}>
    M_PLUS = 2  # |1'_{1}>
    GROUND = 3  # |0''_0>


class ModeLabel(NamedTuple):
    longitudinal: int  # 1 or 2
    polarization: str  # "+" or "-"

    @property
    def bit(self) -> int:
        return MODES.index(self)

    def __str__(self) -> str:
        return f"{self.longitudinal}{self.polarization}"


# Order matches the occupation tuple (n1+, n1-, n2+, n2-).
MODES = (ModeLabel(1, "+"), ModeLabel(1, "-"), ModeLabel(2, "+"), ModeLabel(2, "-"))


def _mode(mode) -> ModeLabel:
    if isinstance(mode, ModeLabel):
        return mode
    if isinstance(mode, str):
        return ModeLabel(int(mode[0]), mode[1])
    return ModeLabel(*mode)


def basis_index(atom: AtomLevel | int, occupations: Sequence[int]) -> int:
    """Flat index of ``|atom> x |n1+, n1-, n2+, n2->``."""
    atom = AtomLevel(atom)
    if len(occupations) != N_MODES:
        raise ValueError(f"expected {N_MODES} occupation numbers, got {len(occupations)}")
    idx = int(atom) * 16
    for k, n in enumerate(occupations):
        if n not in (0, 1):
            raise ValueError(f"occupation numbers must be 0 or 1, got {n!r}")
        idx += int(n) << (N_MODES - 1 - k)
    return idx


def basis_state(index: int) -> tuple[AtomLevel, tuple[int, int, int, int]]:
    """Inverse of :func:`basis_index`."""
    if not 0 <= index < DIM:
        raise ValueError(f"basis index out of range: {index}")
    atom = AtomLevel(index // 16)
    occ = tuple((index >> (N_MODES - 1 - k)) & 1 for k in range(N_MODES))
    return atom, occ  # type: ignore[return-value]


def ket(atom: AtomLevel | int, occupations: Sequence[int] = (0, 0, 0, 0)) -> np.ndarray:
    psi = np.zeros(DIM, dtype=complex)
    psi[basis_index(atom, occupations)] = 1.0
    return psi


def _occupation_table() -> np.ndarray:
    table = np.zeros((DIM, N_MODES), dtype=np.int8)
    for i in range(DIM):
        table[i] = basis_state(i)[1]
    return table


OCCUPATIONS = _occupation_table()
ATOM_OF_INDEX = np.arange(DIM) // 16


def annihilation(mode) -> sp.csr_matrix:
    """Photon annihilation operator for one polarization mode."""
    shift = N_MODES - 1 - _mode(mode).bit
    cols = np.array([i for i in range(DIM) if (i >> shift) & 1])
    rows = cols - (1 << shift)
    data = np.ones(len(cols), dtype=complex)
    return sp.csr_matrix((data, (rows, cols)), shape=(DIM, DIM))


def creation(mode) -> sp.csr_matrix:
    return annihilation(mode).conj().T.tocsr()


def number(mode) -> sp.csr_matrix:
    bit = OCCUPATIONS[:, _mode(mode).bit].astype(complex)
    return sp.diags(bit).tocsr()


def atom_operator(to: AtomLevel | int, frm: AtomLevel | int) -> sp.csr_matrix:
    """``|to><frm|`` on the atom, identity on the field."""
    rows = int(to) * 16 + np.arange(16)
    cols = int(frm) * 16 + np.arange(16)
    return sp.csr_matrix((np.ones(16, dtype=complex), (rows, cols)), shape=(DIM, DIM))


def atom_projector(level: AtomLevel | int) -> sp.csr_matrix:
    return atom_operator(level, level)


def identity() -> sp.csr_matrix:
    return sp.identity(DIM, dtype=complex, format="csr")


def as_dense(op) -> np.ndarray:
    return op.toarray() if sp.issparse(op) else np.asarray(op)


def expectation(op, psi: np.ndarray) -> complex:
    """``<psi|op|psi>``; dimensions must match."""
    psi = np.asarray(psi)
    if op.shape != (psi.shape[0], psi.shape[0]):
        raise ValueError(f"dimension mismatch: operator {op.shape} vs state {psi.shape}")
    return complex(np.vdot(psi, op @ psi))


def normalize(psi: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(psi)
    if norm == 0.0:
        raise ValueError("cannot normalize the zero vector")
    return psi / norm


def is_hermitian(op, atol: float = 1e-14) -> bool:
    a = as_dense(op)
    return bool(np.max(np.abs(a - a.conj().T), initial=0.0) < atol)


def random_state(rng: np.random.Generator, dim: int = DIM) -> np.ndarray:
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return psi / np.linalg.norm(psi)


def atom_populations(psi: np.ndarray) -> np.ndarray:
    """Reduced populations of the four atomic levels."""
    return np.sum(np.abs(np.asarray(psi).reshape(4, 16)) ** 2, axis=1)
