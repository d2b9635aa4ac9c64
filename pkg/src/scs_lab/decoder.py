"""Closed-form linear MAP decoding for Gaussian priors and mixtures.

For x ~ N(mu, Sigma) and y = Phi x, the minimum-MSE (and minimum-MAE) decoder
is linear:

    x_hat = mu + Sigma Phi^T (Phi Sigma Phi^T)^-1 (y - Phi mu)

and its exact MSE is Tr(Sigma - Sigma Phi^T (Phi Sigma Phi^T)^-1 Phi Sigma).
The mixture decoder runs every component's filter and keeps the component
maximizing the log a-posteriori score -1/2 (log|Sigma_j| + r^T Sigma_j^-1 r)
with r the decoded signal centered on the component mean.

The M x M system is factorized by Cholesky (M^3/3 flops).  A relative ridge
eps * Tr(Phi Sigma Phi^T)/M keeps degenerate spectra decodable; eps = 0
demands an invertible system and raises SingularSystemError otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularSystemError
from .gaussian_models import GaussianModel, Gmm
from .sensing import SensingMatrix, as_matrix

# Ridge defaults: analysis paths want the un-regularized operator, the EM loop
# must survive rank-deficient empirical covariances.
ANALYSIS_REG_EPSILON = 1e-10
MAP_EM_REG_EPSILON = 1e-6


@dataclass(frozen=True)
class LinearDecoder:
    """Affine decoder x_hat = mean + gain @ (y - Phi @ mean)."""

    gain: np.ndarray
    model_mean: np.ndarray
    phi: SensingMatrix | np.ndarray

    @property
    def phi_matrix(self) -> np.ndarray:
        return as_matrix(self.phi)


@dataclass(frozen=True)
class DecodeResult:
    """Mixture decode: winning estimate, its model index, and all scores."""

    estimate: np.ndarray
    selected_model: int
    scores: np.ndarray


def _solve_gram(gram: np.ndarray, rhs: np.ndarray, reg_epsilon: float, context: str) -> np.ndarray:
    """Solve (gram + ridge I) X = rhs by Cholesky; gram is symmetric PSD."""
    m = gram.shape[0]
    ridge = reg_epsilon * float(np.trace(gram)) / m
    system = gram + ridge * np.eye(m) if ridge > 0 else gram
    try:
        factor = scipy.linalg.cho_factor(system, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError(f"{context}: measurement Gram matrix is singular") from exc
    return scipy.linalg.cho_solve(factor, rhs, check_finite=False)


def linear_map_decoder(
    model: GaussianModel,
    phi: SensingMatrix | np.ndarray,
    reg_epsilon: float = 0.0,
    use_pinv: bool = False,
) -> LinearDecoder:
    """Build the linear MAP filter Sigma Phi^T (Phi Sigma Phi^T + ridge)^-1.

    use_pinv switches the Gram inversion to a pseudo-inverse, the route for
    degenerate spectra where Phi Sigma Phi^T is rank-deficient by design.
    """
    if reg_epsilon < 0:
        raise ValueError(f"reg_epsilon must be >= 0, got {reg_epsilon}")
    phi_matrix = as_matrix(phi)
    if phi_matrix.shape[1] != model.dim:
        raise ValueError(f"matrix N={phi_matrix.shape[1]} does not match model dimension {model.dim}")
    cross = model.covariance @ phi_matrix.T          # Sigma Phi^T, N x M
    gram = phi_matrix @ cross                        # Phi Sigma Phi^T, M x M
    gram = (gram + gram.T) / 2.0
    if use_pinv:
        gain = cross @ np.linalg.pinv(gram, hermitian=True)
    else:
        gain = _solve_gram(gram, cross.T, reg_epsilon, "linear_map_decoder").T
    return LinearDecoder(gain=gain, model_mean=model.mean, phi=phi)


def decode(dec: LinearDecoder, y: np.ndarray) -> np.ndarray:
    """Apply the decoder to one measurement vector (or a (count, M) batch)."""
    y = np.asarray(y, dtype=np.float64)
    expected_m = dec.gain.shape[1]
    if y.shape[-1] != expected_m:
        raise ValueError(f"measurement dimension {y.shape[-1]} does not match M={expected_m}")
    centered = y - dec.phi_matrix @ dec.model_mean
    return dec.model_mean + centered @ dec.gain.T


def theoretical_mse(model: GaussianModel, phi: SensingMatrix | np.ndarray) -> float:
    """Exact decoder MSE: Tr(Sigma - Sigma Phi^T (Phi Sigma Phi^T)^-1 Phi Sigma)."""
    phi_matrix = as_matrix(phi)
    cross = model.covariance @ phi_matrix.T
    gram = phi_matrix @ cross
    gram = (gram + gram.T) / 2.0
    solved = _solve_gram(gram, cross.T, 0.0, "theoretical_mse")
    value = float(np.trace(model.covariance)) - float(np.sum(cross.T * solved))
    return max(value, 0.0)


def _quad_form(model: GaussianModel, x: np.ndarray) -> float:
    """(x - mu)^T Sigma^-1 (x - mu) through the cached factorization."""
    lam = model.spectrum.eigenvalues
    if not model.is_invertible():
        raise SingularSystemError("model covariance is singular; score undefined")
    coeffs = model.pca_basis.T @ (np.asarray(x, dtype=np.float64) - model.mean)
    return float(np.sum(coeffs * coeffs / lam))


def model_score(model: GaussianModel, x: np.ndarray) -> float:
    """Log a-posteriori score -1/2 (log|Sigma| + (x-mu)^T Sigma^-1 (x-mu)).

    Terms shared by every model (the dimension constant) are dropped; only
    differences between models are meaningful.
    """
    return -0.5 * (model.log_det + _quad_form(model, x))


def gmm_decode(
    gmm: Gmm,
    phi: SensingMatrix | np.ndarray,
    y: np.ndarray,
    reg_epsilon: float = 0.0,
) -> DecodeResult:
    """Piecewise linear decode: filter with every component, keep the best score.

    Ties break to the lowest model index.
    """
    estimates = []
    scores = np.empty(len(gmm))
    for j, model in enumerate(gmm.models):
        try:
            dec = linear_map_decoder(model, phi, reg_epsilon=reg_epsilon)
            x_hat = decode(dec, y)
            scores[j] = model_score(model, x_hat)
        except SingularSystemError as exc:
            raise SingularSystemError(f"model {j}: {exc}") from exc
        estimates.append(x_hat)
    selected = int(np.argmax(scores))
    return DecodeResult(estimate=estimates[selected], selected_model=selected, scores=scores)
