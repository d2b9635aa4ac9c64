"""Best k-term approximation baselines.

Linear approximation keeps the first k coefficients (fixed support, optimal
on average for sorted spectra); nonlinear approximation keeps the k largest
magnitudes per signal.  For a zero-mean prior with spectrum lambda the linear
MSE has the closed form sum_{m>k} lambda_m, which the Monte Carlo estimate is
checked against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian_models import Spectrum


@dataclass(frozen=True)
class ApproxErrorReport:
    """Monte Carlo k-term approximation errors (unnormalized signal units).

    Standard errors are of the Monte Carlo means; divide by
    spectrum.total_energy for energy-normalized figures.
    """

    k: int
    linear_mse: float
    nonlinear_mse: float
    linear_mse_closed_form: float
    trials: int
    linear_se: float
    nonlinear_se: float


def _check_k(x: np.ndarray, k: int) -> None:
    if not 0 <= k <= x.shape[-1]:
        raise ValueError(f"k={k} out of range [0, {x.shape[-1]}]")


def best_k_linear(x: np.ndarray, k: int) -> np.ndarray:
    """Keep entries 1..k, zero the rest."""
    x = np.asarray(x, dtype=np.float64)
    _check_k(x, k)
    out = np.zeros_like(x)
    out[..., :k] = x[..., :k]
    return out


def best_k_nonlinear(x: np.ndarray, k: int) -> np.ndarray:
    """Keep the k largest-magnitude entries (ties: lowest index), zero the rest."""
    x = np.asarray(x, dtype=np.float64)
    _check_k(x, k)
    out = np.zeros_like(x)
    if k == 0:
        return out
    # stable sort on -|x| keeps the earliest index among equal magnitudes
    order = np.argsort(-np.abs(x), axis=-1, kind="stable")
    keep = order[..., :k]
    np.put_along_axis(out, keep, np.take_along_axis(x, keep, axis=-1), axis=-1)
    return out


def approx_error_report(
    spectrum: Spectrum,
    k: int,
    trials: int,
    seed: int,
) -> ApproxErrorReport:
    """Monte Carlo linear vs nonlinear k-term MSE for x ~ N(0, diag(spectrum))."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    lam = spectrum.eigenvalues
    _check_k(lam, k)
    rng = np.random.default_rng(seed)

    lin_errs = np.empty(trials)
    non_errs = np.empty(trials)
    done = 0
    chunk = max(1, min(trials, 2**22 // max(lam.size, 1)))
    while done < trials:
        count = min(chunk, trials - done)
        x = rng.standard_normal((count, lam.size)) * np.sqrt(lam)
        lin_errs[done : done + count] = np.sum(x[:, k:] ** 2, axis=1)
        non_errs[done : done + count] = np.sum((x - best_k_nonlinear(x, k)) ** 2, axis=1)
        done += count

    return ApproxErrorReport(
        k=k,
        linear_mse=float(np.mean(lin_errs)),
        nonlinear_mse=float(np.mean(non_errs)),
        linear_mse_closed_form=spectrum.tail_energy(k),
        trials=trials,
        linear_se=float(np.std(lin_errs, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
        nonlinear_se=float(np.std(non_errs, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0,
    )
