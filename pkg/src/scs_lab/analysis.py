"""Monte Carlo estimators for decoder bounds and model-selection behaviour.

Covers four experiment groups:

* decoder MSE against the best k-term baseline (their ratio is the headline
  figure of merit for compressible spectra);
* the isometry-in-expectation constants a_K, b_K measured on decode
  residuals, the bound constant 1 + b_K/a_K they imply, and its closed form
  for a fixed operator;
* the trace form of the divergence between two equal-determinant Gaussians;
* correct-model selection probability, from ideal signals (oracle) and from
  compressed decodes, with the reconstruction error of the piecewise decode.

Every estimator is pure given (inputs, seed) and reports a standard error
next to each estimate.  Trial loops are chunked and batched internally; the
per-trial measurement operators are drawn fresh from the requested family.
Exact score ties are resolved by a seeded fair coin so that identical models
report the symmetric 1/2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SingularSystemError, UndefinedConstantError
from .gaussian_models import GaussianModel, Spectrum, make_gaussian, sample
from .sensing import Family, SensingMatrix, as_matrix, dct_basis

_CHUNK = 2048
_SE_BLOCKS = 25


class SelectionMode(enum.Enum):
    ORACLE = "oracle"
    COMPRESSED = "compressed"


@dataclass(frozen=True)
class ScsRatioReport:
    """Decoder MSE vs best k-term linear MSE, both normalized by total energy."""

    scs_mse: float
    bestk_mse: float
    ratio: float
    scs_mse_se: float
    k: int
    m: int
    trials: int
    seed: int


@dataclass(frozen=True)
class RipExpectationReport:
    """Isometry-in-expectation constants of decode residuals on K = {1..k}.

    identity_lhs is the measured E||eta||^2 / E||eta_KC||^2, which the bound
    construction says equals c0 exactly; eta_mse is the raw E||eta||^2.
    """

    a_k: float
    b_k: float
    c0: float
    c0_se: float
    identity_lhs: float
    identity_lhs_se: float
    eta_mse: float
    k: int
    m: int
    family: Family
    trials: int
    seed: int


@dataclass(frozen=True)
class SelectionReport:
    """Correct-selection frequency (and decode MSE in compressed mode)."""

    p_correct: float
    p_se: float
    mse: float
    mse_se: float
    m: int
    trials: int
    mode: SelectionMode
    seed: int


def _matrix_stack(family: Family, count: int, m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """(count, m, n) stack of fresh matrices of one family from one stream."""
    if family is Family.GAUSSIAN_IID:
        return rng.normal(0.0, 1.0 / np.sqrt(m), size=(count, m, n))
    if family is Family.BERNOULLI_IID:
        return (rng.integers(0, 2, size=(count, m, n)) * 2 - 1) / np.sqrt(m)
    if family is Family.SUBSAMPLING_DCT:
        rows = np.argsort(rng.random((count, n)), axis=1)[:, :m]
        return dct_basis(n)[rows]
    if family is Family.PIXEL_SUBSAMPLING:
        rows = np.argsort(rng.random((count, n)), axis=1)[:, :m]
        stack = np.zeros((count, m, n))
        idx = np.arange(count)[:, None], np.arange(m)[None, :]
        stack[idx[0], idx[1], rows] = 1.0
        return stack
    raise ValueError(f"unknown family {family}")


def _batched_map_estimates(
    model: GaussianModel,
    phis: np.ndarray,
    signals: np.ndarray,
    reg_epsilon: float,
) -> np.ndarray:
    """Linear MAP decode of signals[i] sensed by phis[i], batched over i."""
    m = phis.shape[1]
    ps = phis @ model.covariance                                # Phi Sigma, (c, m, n)
    gram = ps @ phis.transpose(0, 2, 1)
    gram = (gram + gram.transpose(0, 2, 1)) / 2.0
    if reg_epsilon > 0:
        ridge = reg_epsilon * np.einsum("cii->c", gram) / m
        gram = gram + ridge[:, None, None] * np.eye(m)
    y = np.einsum("cmn,cn->cm", phis, signals - model.mean)
    try:
        z = np.linalg.solve(gram, y[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("measurement Gram matrix singular in batched decode") from exc
    return model.mean + np.einsum("cmn,cm->cn", ps, z)


def _quad_forms(model: GaussianModel, x: np.ndarray) -> np.ndarray:
    """(x - mu)^T Sigma^-1 (x - mu) per row, via the cached factorization."""
    lam = model.spectrum.eigenvalues
    if np.any(lam <= 0):
        raise SingularSystemError("model covariance is singular; quadratic form undefined")
    coeffs = (x - model.mean) @ model.pca_basis
    return np.sum(coeffs * coeffs / lam, axis=-1)


def _block_se(per_trial: np.ndarray, statistic, blocks: int = _SE_BLOCKS) -> float:
    """Batch-means standard error of a statistic of per-trial rows."""
    trials = per_trial.shape[0]
    blocks = min(blocks, trials)
    if blocks < 2:
        return 0.0
    edges = np.linspace(0, trials, blocks + 1, dtype=int)
    values = np.array([statistic(per_trial[a:b]) for a, b in zip(edges[:-1], edges[1:])])
    return float(np.std(values, ddof=1) / np.sqrt(blocks))


def scs_vs_bestk_ratio(
    spectrum: Spectrum,
    k: int,
    m: int | None,
    family: Family | SensingMatrix | np.ndarray,
    trials: int,
    seed: int,
    reg_epsilon: float = 0.0,
) -> ScsRatioReport:
    """Decoder MSE with fresh per-signal operators, against sum_{m>k} lambda_m.

    `family` may also be a fixed operator, which is then reused every trial.
    Both MSEs are normalized by the total signal energy sum_m lambda_m.
    The default un-ridged decode is exact for full-rank spectra; pass a
    positive reg_epsilon for degenerate ones with M above the rank.
    """
    lam = spectrum.eigenvalues
    n = lam.size
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range [1, {n}]")
    if m is None:
        m = k
    model = make_gaussian(np.zeros(n), np.diag(lam), reg_epsilon=0.0)
    rng = np.random.default_rng(seed)
    fixed_phi = None if isinstance(family, Family) else as_matrix(family)

    errs = np.empty(trials)
    done = 0
    while done < trials:
        count = min(_CHUNK, trials - done)
        x = sample(model, count, rng)
        if fixed_phi is None:
            phis = _matrix_stack(family, count, m, n, rng)
        else:
            phis = np.broadcast_to(fixed_phi, (count,) + fixed_phi.shape)
        x_hat = _batched_map_estimates(model, phis, x, reg_epsilon)
        errs[done : done + count] = np.sum((x - x_hat) ** 2, axis=1)
        done += count

    energy = spectrum.total_energy
    scs = float(np.mean(errs)) / energy
    bestk = spectrum.tail_energy(k) / energy
    if bestk > 0:
        ratio = scs / bestk
    else:
        # exact-recovery regime: round-off noise is not a nonzero numerator
        ratio = 0.0 if scs <= 1e-12 else float("inf")
    return ScsRatioReport(
        scs_mse=scs,
        bestk_mse=bestk,
        ratio=ratio,
        scs_mse_se=float(np.std(errs, ddof=1) / np.sqrt(trials)) / energy if trials > 1 else 0.0,
        k=k,
        m=m,
        trials=trials,
        seed=seed,
    )


def rip_expectation(
    model: GaussianModel,
    family: Family,
    k: int,
    m: int,
    trials: int,
    seed: int,
) -> RipExpectationReport:
    """Measure a_K, b_K and 1 + b_K/a_K on decode residuals, K = {1..k}.

    Fresh operator per trial; the un-regularized decoder keeps the residual
    exactly in the operator's null space, which is what makes the identity
    E||eta||^2 = (1 + b_K/a_K) E||eta_KC||^2 hold sample-wise.
    """
    n = model.dim
    if not 1 <= k < n:
        raise ValueError(f"k={k} out of range [1, {n})")
    rng = np.random.default_rng(seed)

    cols = np.empty((trials, 5))  # ||Phi eta_K||^2, ||eta_K||^2, ||Phi eta_KC||^2, ||eta_KC||^2, ||eta||^2
    done = 0
    while done < trials:
        count = min(_CHUNK, trials - done)
        x = sample(model, count, rng)
        phis = _matrix_stack(family, count, m, n, rng)
        eta = x - _batched_map_estimates(model, phis, x, reg_epsilon=0.0)
        eta_k, eta_kc = eta[:, :k], eta[:, k:]
        phi_eta_k = np.einsum("cmn,cn->cm", phis[:, :, :k], eta_k)
        phi_eta_kc = np.einsum("cmn,cn->cm", phis[:, :, k:], eta_kc)
        block = cols[done : done + count]
        block[:, 0] = np.sum(phi_eta_k**2, axis=1)
        block[:, 1] = np.sum(eta_k**2, axis=1)
        block[:, 2] = np.sum(phi_eta_kc**2, axis=1)
        block[:, 3] = np.sum(eta_kc**2, axis=1)
        block[:, 4] = np.sum(eta**2, axis=1)
        done += count

    sums = cols.sum(axis=0)
    if sums[1] == 0.0:
        raise UndefinedConstantError("E||eta_K||^2 = 0: isometry constant on K undefined")
    if sums[3] == 0.0:
        raise UndefinedConstantError("E||eta_KC||^2 = 0: isometry constant on K^C undefined")
    a_k = sums[0] / sums[1]
    b_k = sums[2] / sums[3]

    def c0_of(rows: np.ndarray) -> float:
        s = rows.sum(axis=0)
        return 1.0 + (s[2] / s[3]) / (s[0] / s[1])

    def lhs_of(rows: np.ndarray) -> float:
        s = rows.sum(axis=0)
        return s[4] / s[3]

    return RipExpectationReport(
        a_k=float(a_k),
        b_k=float(b_k),
        c0=float(1.0 + b_k / a_k),
        c0_se=_block_se(cols, c0_of),
        identity_lhs=float(sums[4] / sums[3]),
        identity_lhs_se=_block_se(cols, lhs_of),
        eta_mse=float(np.mean(cols[:, 4])),
        k=k,
        m=m,
        family=family,
        trials=trials,
        seed=seed,
    )


def rip_constant_closed_form(
    spectrum: Spectrum,
    phi: SensingMatrix | np.ndarray,
    index_set: np.ndarray,
) -> float:
    """Closed-form E||Phi eta_K||^2 / E||eta_K||^2 for a fixed operator.

    Evaluates the two trace expressions built from the residual covariance
    S - S Phi^T (Phi S Phi^T)^-1 Phi S restricted to the index set.
    """
    lam = spectrum.eigenvalues
    phi_matrix = as_matrix(phi)
    n = lam.size
    if phi_matrix.shape[1] != n:
        raise ValueError("operator width does not match spectrum length")
    mask = np.zeros(n)
    mask[np.asarray(index_set, dtype=int)] = 1.0
    d_k = lam * mask  # diagonal of R_K S R_K^T

    cross = phi_matrix * lam  # Phi S
    gram = cross @ phi_matrix.T
    gram = (gram + gram.T) / 2.0
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularSystemError("Phi S Phi^T singular in closed-form constant") from exc

    phi_dk_phit = (phi_matrix * d_k) @ phi_matrix.T
    solved = scipy.linalg.cho_solve(factor, phi_dk_phit, check_finite=False)
    numerator = float(np.trace(phi_dk_phit)) - float(np.sum(phi_dk_phit * solved.T))

    # Tr(D_K Phi^T G^-1 Phi D_K) needs only the diagonal of Phi^T G^-1 Phi
    half = scipy.linalg.cho_solve(factor, phi_matrix, check_finite=False)
    proj_diag = np.sum(phi_matrix * half, axis=0)
    denominator = float(np.sum(d_k)) - float(np.sum(d_k * d_k * proj_diag))

    if abs(denominator) < 1e-12 * spectrum.total_energy:
        raise UndefinedConstantError("restricted residual energy vanishes; constant undefined")
    return numerator / denominator


def kl_gaussians(sigma1: np.ndarray, sigma2: np.ndarray) -> float:
    """Divergence between zero-mean Gaussians sharing a determinant:
    (Tr(Sigma2^-1 Sigma1) - N) / 2.

    This is the trace form valid when |Sigma1| = |Sigma2| (the log-det ratio
    vanishes); for unequal determinants it is only the trace part.
    """
    sigma1 = np.asarray(sigma1, dtype=np.float64)
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    if sigma1.shape != sigma2.shape or sigma1.ndim != 2 or sigma1.shape[0] != sigma1.shape[1]:
        raise ValueError(f"need equal square matrices, got {sigma1.shape} and {sigma2.shape}")
    try:
        solved = np.linalg.solve(sigma2, sigma1)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("second covariance is singular") from exc
    n = sigma1.shape[0]
    return 0.5 * (float(np.trace(solved)) - n)


def oracle_selection_prob(
    model1: GaussianModel,
    model2: GaussianModel,
    trials: int,
    seed: int,
) -> SelectionReport:
    """Fraction of draws from model1 whose ideal-signal score prefers model1.

    Compares x^T Sigma_j^-1 x + log|Sigma_j| on the true signals; exact ties
    (identical models) fall to a fair coin.
    """
    rng = np.random.default_rng(seed)
    x = sample(model1, trials, rng)
    lhs = _quad_forms(model1, x) + model1.log_det
    rhs = _quad_forms(model2, x) + model2.log_det
    correct = lhs < rhs
    ties = lhs == rhs
    if np.any(ties):
        correct = correct | (ties & (rng.random(trials) < 0.5))
    p = float(np.mean(correct))
    return SelectionReport(
        p_correct=p,
        p_se=float(np.sqrt(p * (1.0 - p) / trials)),
        mse=0.0,
        mse_se=0.0,
        m=model1.dim,
        trials=trials,
        mode=SelectionMode.ORACLE,
        seed=seed,
    )


def compressed_selection_prob(
    model1: GaussianModel,
    model2: GaussianModel,
    m: int,
    family: Family,
    trials: int,
    seed: int,
    reg_epsilon: float = 0.0,
) -> SelectionReport:
    """Selection accuracy and decode MSE from M compressed measurements.

    Draws x from model1, senses with a fresh operator per trial, decodes with
    both models, applies the score rule to the decoded signals, and averages
    the squared error of the winning estimate (normalized by signal energy).
    """
    n = model1.dim
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= M <= N, got M={m}, N={n}")
    rng = np.random.default_rng(seed)

    correct = np.empty(trials, dtype=bool)
    errs = np.empty(trials)
    done = 0
    while done < trials:
        count = min(_CHUNK, trials - done)
        x = sample(model1, count, rng)
        phis = _matrix_stack(family, count, m, n, rng)
        x1 = _batched_map_estimates(model1, phis, x, reg_epsilon)
        x2 = _batched_map_estimates(model2, phis, x, reg_epsilon)
        s1 = -0.5 * (model1.log_det + _quad_forms(model1, x1))
        s2 = -0.5 * (model2.log_det + _quad_forms(model2, x2))
        pick_first = s1 > s2
        ties = s1 == s2
        if np.any(ties):
            pick_first = pick_first | (ties & (rng.random(count) < 0.5))
        chosen = np.where(pick_first[:, None], x1, x2)
        correct[done : done + count] = pick_first
        errs[done : done + count] = np.sum((x - chosen) ** 2, axis=1)
        done += count

    energy = model1.spectrum.total_energy + float(np.sum(model1.mean**2))
    p = float(np.mean(correct))
    return SelectionReport(
        p_correct=p,
        p_se=float(np.sqrt(p * (1.0 - p) / trials)),
        mse=float(np.mean(errs)) / energy,
        mse_se=float(np.std(errs, ddof=1) / np.sqrt(trials)) / energy if trials > 1 else 0.0,
        m=m,
        trials=trials,
        mode=SelectionMode.COMPRESSED,
        seed=seed,
    )
