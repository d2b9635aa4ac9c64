"""Gaussian signal priors: spectra, PCA-rotated covariances, and mixtures.

A prior is N(mu, Sigma) with Sigma = B diag(lambda) B^T, eigenvalues sorted
non-increasing.  Models cache the eigendecomposition and log-determinant so
decoders and model-selection scores never re-factorize.

All types are immutable after construction and safe to share across threads.
Sampling takes an explicit numpy Generator; parallel callers should derive
independent generators (e.g. seed + trial index).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ContainerFormatError, InvalidCovarianceError

# Eigenvalues below reg_epsilon * Tr(Sigma)/N are lifted to that floor before
# log-determinants and inverses; reg_epsilon = 0 keeps degenerate spectra exact.
DEFAULT_REG_EPSILON = 1e-6

_SYMMETRY_RTOL = 1e-12
_NEGATIVE_EIG_RTOL = 1e-8
_GMM_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Spectrum:
    """Sorted eigenvalues lambda_1 >= ... >= lambda_N >= 0 of a signal covariance."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=np.float64).reshape(-1)
        if lam.size < 1:
            raise ValueError("spectrum must have at least one eigenvalue")
        if np.any(lam < 0):
            raise ValueError("spectrum eigenvalues must be nonnegative")
        if np.any(np.diff(lam) > 0):
            raise ValueError("spectrum eigenvalues must be sorted non-increasing")
        object.__setattr__(self, "eigenvalues", lam)

    def __len__(self) -> int:
        return self.eigenvalues.size

    @property
    def total_energy(self) -> float:
        """Expected squared norm of a zero-mean signal with this spectrum."""
        return float(np.sum(self.eigenvalues))

    def tail_energy(self, k: int) -> float:
        """Sum of eigenvalues beyond the first k (best k-term linear MSE)."""
        if not 0 <= k <= len(self):
            raise ValueError(f"k={k} out of range [0, {len(self)}]")
        return float(np.sum(self.eigenvalues[k:]))


@dataclass(frozen=True)
class GaussianModel:
    """One Gaussian prior with cached PCA factorization.

    covariance == pca_basis @ diag(spectrum) @ pca_basis.T (symmetrized),
    log_det is log|Sigma| after the eigenvalue floor (-inf when a zero
    eigenvalue survives with reg_epsilon = 0).
    """

    mean: np.ndarray
    covariance: np.ndarray
    pca_basis: np.ndarray
    spectrum: Spectrum
    log_det: float

    @property
    def dim(self) -> int:
        return self.mean.size

    def is_invertible(self) -> bool:
        return bool(np.all(self.spectrum.eigenvalues > 0))


@dataclass(frozen=True)
class Gmm:
    """Ordered collection of Gaussian priors; the index is the model label."""

    models: tuple[GaussianModel, ...] = field(default_factory=tuple)

    def __post_init__(self):
        models = tuple(self.models)
        if not models:
            raise ValueError("a mixture needs at least one model")
        dims = {m.dim for m in models}
        if len(dims) != 1:
            raise ValueError(f"all models must share one dimension, got {sorted(dims)}")
        object.__setattr__(self, "models", models)

    def __len__(self) -> int:
        return len(self.models)

    def __getitem__(self, j: int) -> GaussianModel:
        return self.models[j]

    @property
    def dim(self) -> int:
        return self.models[0].dim


def power_decay_spectrum(n: int, alpha: float) -> Spectrum:
    """Spectrum with lambda_m = m**(-alpha), m = 1..n (strictly decreasing)."""
    if n < 1:
        raise ValueError(f"dimension must be >= 1, got {n}")
    if alpha <= 0:
        raise ValueError(f"decay parameter must be > 0, got {alpha}")
    m = np.arange(1, n + 1, dtype=np.float64)
    return Spectrum(m ** (-alpha))


def rotation_2d(theta: float) -> np.ndarray:
    """2x2 rotation matrix [[cos, -sin], [sin, cos]] for angle theta in radians."""
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def _check_orthonormal(basis: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    basis = np.asarray(basis, dtype=np.float64)
    if basis.ndim != 2 or basis.shape[0] != basis.shape[1]:
        raise ValueError(f"basis must be square, got shape {basis.shape}")
    gram = basis.T @ basis
    if not np.allclose(gram, np.eye(basis.shape[0]), atol=rtol):
        raise ValueError("basis is not orthonormal within 1e-9")
    return basis


def rotate_spectrum(spectrum: Spectrum | np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Covariance B diag(lambda) B^T for an orthonormal basis B, symmetrized."""
    lam = spectrum.eigenvalues if isinstance(spectrum, Spectrum) else np.asarray(spectrum, dtype=np.float64)
    basis = _check_orthonormal(basis)
    if basis.shape[0] != lam.size:
        raise ValueError(f"basis dimension {basis.shape[0]} does not match spectrum length {lam.size}")
    cov = (basis * lam) @ basis.T
    return (cov + cov.T) / 2.0


def _canonical_signs(basis: np.ndarray) -> np.ndarray:
    """Flip eigenvector columns so the largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def make_gaussian(
    mean: np.ndarray,
    covariance: np.ndarray,
    reg_epsilon: float = DEFAULT_REG_EPSILON,
) -> GaussianModel:
    """Validate and factorize a covariance into a GaussianModel.

    Eigenvalues below reg_epsilon * Tr(Sigma)/N are lifted to that floor
    (rank-deficient empirical covariances stay usable in selection scores);
    reg_epsilon = 0 preserves degenerate spectra exactly.  The stored
    covariance is rebuilt from the floored spectrum so the factorization
    invariant holds to machine precision.
    """
    mean = np.asarray(mean, dtype=np.float64).reshape(-1)
    cov = np.asarray(covariance, dtype=np.float64)
    if reg_epsilon < 0:
        raise ValueError(f"reg_epsilon must be >= 0, got {reg_epsilon}")
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidCovarianceError(f"covariance must be square, got shape {cov.shape}")
    n = cov.shape[0]
    if mean.size != n:
        raise InvalidCovarianceError(f"mean length {mean.size} does not match covariance dimension {n}")
    scale = np.max(np.abs(cov))
    if scale > 0 and np.max(np.abs(cov - cov.T)) > _SYMMETRY_RTOL * scale:
        raise InvalidCovarianceError("covariance is asymmetric beyond tolerance")
    cov = (cov + cov.T) / 2.0

    eigvals, eigvecs = np.linalg.eigh(cov)
    trace_scale = float(np.trace(cov)) / n
    if eigvals.min(initial=0.0) < -_NEGATIVE_EIG_RTOL * trace_scale:
        raise InvalidCovarianceError(
            f"covariance has negative eigenvalue {eigvals.min():.3e} below tolerance"
        )
    eigvals = np.clip(eigvals, 0.0, None)
    floor = reg_epsilon * trace_scale
    eigvals = np.maximum(eigvals, floor)

    # eigh returns ascending order; store non-increasing (ties keep eigh order)
    # with canonical signs.
    order = np.argsort(-eigvals, kind="stable")
    lam = eigvals[order]
    basis = _canonical_signs(eigvecs[:, order])

    rebuilt = (basis * lam) @ basis.T
    rebuilt = (rebuilt + rebuilt.T) / 2.0
    with np.errstate(divide="ignore"):
        log_det = float(np.sum(np.log(lam)))
    return GaussianModel(
        mean=mean,
        covariance=rebuilt,
        pca_basis=basis,
        spectrum=Spectrum(lam),
        log_det=log_det,
    )


def anti_diagonal_pair(n: int, spectrum: Spectrum | np.ndarray) -> tuple[GaussianModel, GaussianModel]:
    """Two zero-mean models sharing a spectrum with 'orthogonal' orientations.

    Model 1 is diag(lambda); model 2 carries the anti-diagonal basis change,
    so its covariance is diag(lambda) reversed.  This is the pair whose
    divergence is locally maximal among common-spectrum orientations.
    """
    if n < 2:
        raise ValueError(f"dimension must be >= 2, got {n}")
    lam = spectrum.eigenvalues if isinstance(spectrum, Spectrum) else np.asarray(spectrum, dtype=np.float64)
    if lam.size != n:
        raise ValueError(f"spectrum length {lam.size} does not match dimension {n}")
    zero = np.zeros(n)
    first = make_gaussian(zero, np.diag(lam), reg_epsilon=0.0)
    second = make_gaussian(zero, np.diag(lam[::-1]), reg_epsilon=0.0)
    return first, second


def sample(model: GaussianModel, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` signals x = mu + B diag(sqrt(lambda)) z, z ~ N(0, I).

    Returns shape (count, N); deterministic given the generator state.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    z = rng.standard_normal((count, model.dim))
    scaled = z * np.sqrt(model.spectrum.eigenvalues)
    return model.mean + scaled @ model.pca_basis.T


def save_gmm(gmm: Gmm, path) -> None:
    """Write a mixture to the versioned binary container.

    Layout: header {version:u32, N:u32, J:u32} little-endian, then per model
    the mean (N float64) and covariance (N*N float64, row-major).
    """
    n, j = gmm.dim, len(gmm)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<III", _GMM_FORMAT_VERSION, n, j))
        for model in gmm.models:
            fh.write(model.mean.astype("<f8").tobytes())
            fh.write(np.ascontiguousarray(model.covariance, dtype="<f8").tobytes())


def load_gmm(path, reg_epsilon: float = 0.0) -> Gmm:
    """Read a mixture written by save_gmm.

    Stored covariances were already floored at save time, so the default
    reload does not re-floor them.
    """
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) != 12:
            raise ContainerFormatError("truncated mixture container header")
        version, n, j = struct.unpack("<III", header)
        if version != _GMM_FORMAT_VERSION:
            raise ContainerFormatError(f"unsupported mixture container version {version}")
        models = []
        for index in range(j):
            payload = fh.read(8 * n + 8 * n * n)
            if len(payload) != 8 * n + 8 * n * n:
                raise ContainerFormatError(f"truncated mixture container at model {index}")
            mean = np.frombuffer(payload[: 8 * n], dtype="<f8")
            cov = np.frombuffer(payload[8 * n :], dtype="<f8").reshape(n, n)
            models.append(make_gaussian(mean, cov, reg_epsilon=reg_epsilon))
    return Gmm(tuple(models))
