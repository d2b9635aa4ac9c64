"""Sensing-matrix families and measurement application.

Three analysis families (dense Gaussian, dense Bernoulli, and random row
subsampling composed with an orthonormal DCT) plus a pixel-domain random
subsampler used by the overlapped image pipeline (one nonzero entry per row,
so tile measurements double as partial pixels of any overlapping patch).

Entry variance for the dense families is 1/M so that E||Phi x||^2 = ||x||^2;
the linear MAP decoder is invariant to this scaling, which only matters for
isometry-style diagnostics.

Generation is a pure function of (family, M, N, seed): matrices never need to
be stored, only their 24-byte descriptors.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

import numpy as np
import scipy.fft


class Family(enum.Enum):
    GAUSSIAN_IID = 0
    BERNOULLI_IID = 1
    SUBSAMPLING_DCT = 2
    PIXEL_SUBSAMPLING = 3


# CLI spelling of each family.
FAMILY_NAMES = {
    Family.GAUSSIAN_IID: "gaussian",
    Family.BERNOULLI_IID: "bernoulli",
    Family.SUBSAMPLING_DCT: "subsample",
    Family.PIXEL_SUBSAMPLING: "pixel",
}
FAMILIES_BY_NAME = {name: fam for fam, name in FAMILY_NAMES.items()}

_DESCRIPTOR_FORMAT = "<IIIIQ"  # family, M, N, reserved, seed -> 24 bytes
DESCRIPTOR_SIZE = struct.calcsize(_DESCRIPTOR_FORMAT)


@dataclass(frozen=True)
class SensingMatrix:
    """Dense M x N measurement operator with its generation descriptor."""

    matrix: np.ndarray
    family: Family
    seed: int
    m: int
    n: int

    def to_bytes(self) -> bytes:
        """24-byte descriptor (family, M, N, seed); the matrix is regenerated on load."""
        return struct.pack(_DESCRIPTOR_FORMAT, self.family.value, self.m, self.n, 0, self.seed)


def _check_dims(m: int, n: int) -> None:
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= M <= N, got M={m}, N={n}")


def gaussian_matrix(m: int, n: int, seed: int) -> SensingMatrix:
    """Entries i.i.d. N(0, 1/M)."""
    _check_dims(m, n)
    rng = np.random.default_rng(seed)
    matrix = rng.normal(0.0, 1.0 / np.sqrt(m), size=(m, n))
    return SensingMatrix(matrix, Family.GAUSSIAN_IID, seed, m, n)


def bernoulli_matrix(m: int, n: int, seed: int) -> SensingMatrix:
    """Entries i.i.d. +-1/sqrt(M) with equal probability."""
    _check_dims(m, n)
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(m, n)) * 2 - 1
    return SensingMatrix(signs / np.sqrt(m), Family.BERNOULLI_IID, seed, m, n)


def dct_matrix(n: int) -> np.ndarray:
    """N-point orthonormal DCT-II transform matrix with row 0 = 1/sqrt(N)."""
    return scipy.fft.dct(np.eye(n), axis=0, norm="ortho")


def _zigzag_pairs(edge: int) -> list[tuple[int, int]]:
    """2-D frequency pairs ordered along anti-diagonals (low to high)."""
    pairs = []
    for total in range(2 * edge - 1):
        diag = [(u, total - u) for u in range(max(0, total - edge + 1), min(edge, total + 1))]
        if total % 2 == 1:
            diag.reverse()
        pairs.extend(diag)
    return pairs


def dct_basis(n: int) -> np.ndarray:
    """Orthonormal DCT synthesis operator: rows are sample positions, columns
    are frequency-ordered atoms.

    For square n the atoms are the 2-D DCT-II atoms of a sqrt(n) x sqrt(n)
    patch in zigzag frequency order (the ordering under which power-decay
    coefficient spectra model image patches); otherwise the 1-D DCT-II atoms
    in frequency order.
    """
    edge = int(round(np.sqrt(n)))
    if edge * edge != n:
        return dct_matrix(n).T
    d = dct_matrix(edge)
    atoms = [np.outer(d[u], d[v]).reshape(-1) for u, v in _zigzag_pairs(edge)]
    return np.stack(atoms, axis=1)


def subsampling_dct_matrix(m: int, n: int, seed: int) -> SensingMatrix:
    """M distinct rows, drawn uniformly without replacement, of the DCT basis.

    Equivalent to keeping M random samples of the signal synthesized from its
    frequency-ordered DCT coefficients; rows of the result are orthonormal.
    """
    _check_dims(m, n)
    rng = np.random.default_rng(seed)
    rows = rng.choice(n, size=m, replace=False)
    return SensingMatrix(dct_basis(n)[rows], Family.SUBSAMPLING_DCT, seed, m, n)


def pixel_subsampling_matrix(m: int, n: int, seed: int) -> SensingMatrix:
    """M distinct rows of the identity: keeps M of N coordinates directly.

    Maximally coherent with the canonical basis, so unsuitable for the
    patch-domain analyses, but exactly what the overlapped image
    reconstruction needs (measurements are literal pixels).
    """
    _check_dims(m, n)
    matrix = np.zeros((m, n))
    matrix[np.arange(m), subsampling_positions(m, n, seed)] = 1.0
    return SensingMatrix(matrix, Family.PIXEL_SUBSAMPLING, seed, m, n)


def subsampling_positions(m: int, n: int, seed: int) -> np.ndarray:
    """The kept-coordinate indices behind pixel_subsampling_matrix(m, n, seed)."""
    _check_dims(m, n)
    rng = np.random.default_rng(seed)
    return rng.choice(n, size=m, replace=False)


_GENERATORS = {
    Family.GAUSSIAN_IID: gaussian_matrix,
    Family.BERNOULLI_IID: bernoulli_matrix,
    Family.SUBSAMPLING_DCT: subsampling_dct_matrix,
    Family.PIXEL_SUBSAMPLING: pixel_subsampling_matrix,
}


def make_matrix(family: Family, m: int, n: int, seed: int) -> SensingMatrix:
    """Generate a matrix of the given family; pure in (family, M, N, seed)."""
    return _GENERATORS[family](m, n, seed)


def from_bytes(blob: bytes) -> SensingMatrix:
    """Regenerate a SensingMatrix from its 24-byte descriptor."""
    if len(blob) != DESCRIPTOR_SIZE:
        raise ValueError(f"descriptor must be {DESCRIPTOR_SIZE} bytes, got {len(blob)}")
    family_value, m, n, _reserved, seed = struct.unpack(_DESCRIPTOR_FORMAT, blob)
    return make_matrix(Family(family_value), m, n, seed)


def as_matrix(phi: SensingMatrix | np.ndarray) -> np.ndarray:
    """Dense ndarray view of a sensing operator (accepts plain matrices too)."""
    if isinstance(phi, SensingMatrix):
        return phi.matrix
    matrix = np.asarray(phi, dtype=np.float64)
    if matrix.ndim != 2:
        raise ValueError(f"sensing operator must be 2-D, got shape {matrix.shape}")
    return matrix


def sense(phi: SensingMatrix | np.ndarray, x: np.ndarray) -> np.ndarray:
    """Measure y = Phi x."""
    matrix = as_matrix(phi)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != matrix.shape[1]:
        raise ValueError(f"signal dimension {x.shape[-1]} does not match N={matrix.shape[1]}")
    return x @ matrix.T
