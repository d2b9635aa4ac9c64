"""Hard-assignment alternation of piecewise-linear decoding and refitting.

E-step: decode every signal with every mixture component and keep the
best-scoring one.  M-step: refit each component's mean and covariance as the
empirical estimates over its assigned signals (normalization by the cluster
size).  Both steps are coordinate ascent on the same objective, so the
summed selected-model score never decreases across iterations, up to the
perturbation introduced when the refit eigenvalue floor binds.

Components are refit with the standard eigenvalue floor so that clusters
smaller than the dimension stay usable; clusters below min_cluster keep their
previous component unchanged.

The E-step is batched across signals.  Two measurement layouts are
supported: dense per-signal operators, and coordinate masks (one kept-pixel
index list per signal), the layout the overlapped image pipeline produces.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .decoder import MAP_EM_REG_EPSILON
from .errors import SingularSystemError
from .gaussian_models import GaussianModel, Gmm, make_gaussian
from .sensing import SensingMatrix, as_matrix

_BATCH_VALUES = 1 << 22  # cap on floats held by one batched decode


@dataclass(frozen=True)
class EmState:
    """Final mixture, per-signal selections and estimates, objective history."""

    gmm: Gmm
    assignments: np.ndarray
    estimates: np.ndarray
    objective_trace: tuple[float, ...]


def init_directional_gmm(
    patch_edge: int,
    n_models: int,
    patches_per_model: int = 1024,
    seed: int = 0,
    reg_epsilon: float = 3e-2,
) -> Gmm:
    """Geometry-motivated mixture for square image patches.

    n_models - 1 components are built from synthetic step-edge patches (unit
    contrast, slightly smoothed, random offsets) at evenly spaced angles
    j * 180 / (n_models - 1); the last component is isotropic with variance
    matched to the mean directional energy.  All means are zero.

    Offsets range beyond the patch so flat patches occur: the covariances get
    a dominant mean-level mode, which is what lets the first decode pass
    recover patch brightness.  The default eigenvalue floor is much heavier
    than the refit floor: edge-patch covariances are inherently low rank,
    and an unfloored tail prices any off-subspace measurement energy so
    steeply that no directional component would ever win a selection.
    """
    if patch_edge < 2:
        raise ValueError(f"patch_edge must be >= 2, got {patch_edge}")
    if n_models < 2:
        raise ValueError(f"need at least 2 models, got {n_models}")
    if patches_per_model < 2:
        raise ValueError(f"patches_per_model must be >= 2, got {patches_per_model}")
    rng = np.random.default_rng(seed)
    n = patch_edge * patch_edge
    zero = np.zeros(n)

    models = []
    traces = []
    for j in range(n_models - 1):
        theta = np.pi * j / (n_models - 1)
        patches = synthetic_edge_patches(patch_edge, theta, patches_per_model, rng)
        centered = patches - patches.mean(axis=0)
        cov = centered.T @ centered / patches_per_model
        model = make_gaussian(zero, cov, reg_epsilon=reg_epsilon)
        models.append(model)
        traces.append(np.trace(model.covariance))

    delta = float(np.mean(traces)) / n
    models.append(make_gaussian(zero, delta * np.eye(n)))
    return Gmm(tuple(models))


def synthetic_edge_patches(
    patch_edge: int,
    theta: float,
    count: int,
    rng: np.random.Generator,
    smoothing: float = 0.7,
) -> np.ndarray:
    """(count, edge*edge) step-edge patches at angle theta, column-stacked.

    Each patch is a logistic step across a line through a random offset
    point; theta is the edge direction measured from the column axis.  The
    offset range extends a full patch beyond each side, so a share of the
    patches is flat (the edge misses them) and the ensemble carries strong
    mean-level variance next to the edge-profile modes.
    """
    rows, cols = np.meshgrid(np.arange(patch_edge), np.arange(patch_edge), indexing="ij")
    r0 = rng.uniform(-1.0 * patch_edge, 2.0 * patch_edge, size=count)
    c0 = rng.uniform(-1.0 * patch_edge, 2.0 * patch_edge, size=count)
    # signed distance to the edge line, along its normal (-sin, cos)
    s = (rows[None] - r0[:, None, None]) * np.cos(theta) - (cols[None] - c0[:, None, None]) * np.sin(theta)
    patches = 1.0 / (1.0 + np.exp(-s / smoothing))
    return patches.transpose(0, 2, 1).reshape(count, -1)  # column-stacked raster order


def _scores_batch(model: GaussianModel, j: int, estimates: np.ndarray) -> np.ndarray:
    lam = model.spectrum.eigenvalues
    if np.any(lam <= 0):
        raise SingularSystemError(f"model {j}: covariance singular, scores undefined")
    coeffs = (estimates - model.mean) @ model.pca_basis
    quad = np.sum(coeffs * coeffs / lam, axis=-1)
    return -0.5 * (model.log_det + quad)


def _dense_estimates(
    model: GaussianModel,
    phis: np.ndarray,
    ys: np.ndarray,
    reg_epsilon: float,
    j: int,
) -> np.ndarray:
    m = phis.shape[1]
    ps = phis @ model.covariance
    gram = ps @ phis.transpose(0, 2, 1)
    gram = (gram + gram.transpose(0, 2, 1)) / 2.0
    if reg_epsilon > 0:
        ridge = reg_epsilon * np.einsum("cii->c", gram) / m
        gram = gram + ridge[:, None, None] * np.eye(m)
    rhs = ys - np.einsum("cmn,n->cm", phis, model.mean)
    try:
        z = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"model {j}: measurement Gram matrix singular") from exc
    return model.mean + np.einsum("cmn,cm->cn", ps, z)


def e_step(
    gmm: Gmm,
    measurements: Sequence[tuple[np.ndarray, SensingMatrix | np.ndarray]],
    reg_epsilon: float = MAP_EM_REG_EPSILON,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Decode + select for every (y, phi) pair.

    Returns (assignments, estimates, objective) with objective the sum of the
    winning scores; ties go to the lowest model index.
    """
    count = len(measurements)
    if count == 0:
        raise ValueError("no measurements")
    n = gmm.dim
    matrices = [as_matrix(phi) for _, phi in measurements]
    ys = [np.asarray(y, dtype=np.float64) for y, _ in measurements]
    for i, (y, phi) in enumerate(zip(ys, matrices)):
        if phi.shape != (y.size, n):
            raise SingularSystemError(
                f"signal {i}: operator shape {phi.shape} does not match (M={y.size}, N={n})"
            )

    best_scores = np.full(count, -np.inf)
    assignments = np.zeros(count, dtype=np.int64)
    estimates = np.zeros((count, n))

    # group by measurement count so each group stacks into one batch
    by_m: dict[int, list[int]] = {}
    for i, y in enumerate(ys):
        by_m.setdefault(y.size, []).append(i)

    for m, idx in by_m.items():
        idx = np.asarray(idx)
        phis = np.stack([matrices[i] for i in idx])
        ygrp = np.stack([ys[i] for i in idx])
        chunk = max(1, _BATCH_VALUES // (n * max(m, 1)))
        for start in range(0, idx.size, chunk):
            sel = idx[start : start + chunk]
            phi_c = phis[start : start + chunk]
            y_c = ygrp[start : start + chunk]
            for j, model in enumerate(gmm.models):
                est = _dense_estimates(model, phi_c, y_c, reg_epsilon, j)
                scores = _scores_batch(model, j, est)
                better = scores > best_scores[sel]
                if np.any(better):
                    upd = sel[better]
                    best_scores[upd] = scores[better]
                    assignments[upd] = j
                    estimates[upd] = est[better]

    return assignments, estimates, float(np.sum(best_scores))


def e_step_masked(
    gmm: Gmm,
    values: Sequence[np.ndarray],
    masks: Sequence[np.ndarray],
    reg_epsilon: float = MAP_EM_REG_EPSILON,
) -> tuple[np.ndarray, np.ndarray, float]:
    """E-step where signal i is observed at coordinates masks[i] with values[i].

    Equivalent to dense operators made of identity rows, but uses covariance
    slices instead of products.  Signals with empty masks decode to the
    winning model mean.
    """
    count = len(values)
    if count == 0:
        raise ValueError("no measurements")
    if len(masks) != count:
        raise ValueError("values and masks must have equal length")
    n = gmm.dim

    best_scores = np.full(count, -np.inf)
    assignments = np.zeros(count, dtype=np.int64)
    estimates = np.zeros((count, n))

    by_size: dict[int, list[int]] = {}
    for i, mask in enumerate(masks):
        by_size.setdefault(len(mask), []).append(i)

    for m, idx in by_size.items():
        idx = np.asarray(idx)
        if m == 0:
            for j, model in enumerate(gmm.models):
                est = np.broadcast_to(model.mean, (idx.size, n))
                scores = _scores_batch(model, j, est)
                better = scores > best_scores[idx]
                if np.any(better):
                    upd = idx[better]
                    best_scores[upd] = scores[better]
                    assignments[upd] = j
                    estimates[upd] = model.mean
            continue
        mask_grp = np.stack([np.asarray(masks[i], dtype=np.intp) for i in idx])
        val_grp = np.stack([np.asarray(values[i], dtype=np.float64) for i in idx])
        chunk = max(1, _BATCH_VALUES // (n * m))
        for start in range(0, idx.size, chunk):
            sel = idx[start : start + chunk]
            mk = mask_grp[start : start + chunk]
            yv = val_grp[start : start + chunk]
            for j, model in enumerate(gmm.models):
                gram = model.covariance[mk[:, :, None], mk[:, None, :]]
                if reg_epsilon > 0:
                    ridge = reg_epsilon * np.einsum("cii->c", gram) / m
                    gram = gram + ridge[:, None, None] * np.eye(m)
                rhs = yv - model.mean[mk]
                try:
                    z = np.linalg.solve(gram, rhs[..., None])[..., 0]
                except np.linalg.LinAlgError as exc:
                    raise SingularSystemError(f"model {j}: masked Gram matrix singular") from exc
                cols = model.covariance[:, mk]  # (n, c, m)
                est = model.mean + np.einsum("ncm,cm->cn", cols, z)
                scores = _scores_batch(model, j, est)
                better = scores > best_scores[sel]
                if np.any(better):
                    upd = sel[better]
                    best_scores[upd] = scores[better]
                    assignments[upd] = j
                    estimates[upd] = est[better]

    return assignments, estimates, float(np.sum(best_scores))


def m_step(
    estimates: np.ndarray,
    assignments: np.ndarray,
    prev_gmm: Gmm,
    reg_epsilon: float = MAP_EM_REG_EPSILON,
    min_cluster: int = 2,
) -> Gmm:
    """Refit each component from its assigned estimates.

    Mean and covariance are the empirical estimates normalized by the cluster
    size; clusters smaller than min_cluster carry the previous component over
    unchanged.
    """
    estimates = np.asarray(estimates, dtype=np.float64)
    assignments = np.asarray(assignments)
    if np.any((assignments < 0) | (assignments >= len(prev_gmm))):
        raise ValueError("assignment index out of range")
    models = []
    for j, prev in enumerate(prev_gmm.models):
        members = estimates[assignments == j]
        if members.shape[0] < min_cluster:
            models.append(prev)
            continue
        mu = members.mean(axis=0)
        centered = members - mu
        cov = centered.T @ centered / members.shape[0]
        models.append(make_gaussian(mu, cov, reg_epsilon=reg_epsilon))
    return Gmm(tuple(models))


def _run_em(
    run_e_step: Callable[[Gmm], tuple[np.ndarray, np.ndarray, float]],
    init_gmm: Gmm,
    iterations: int,
    cov_floor: float,
    min_cluster: int,
) -> EmState:
    if iterations < 1:
        raise ValueError(f"iterations must be >= 1, got {iterations}")
    gmm = init_gmm
    trace = []
    assignments = estimates = None
    for _ in range(iterations):
        assignments, estimates, objective = run_e_step(gmm)
        trace.append(objective)
        gmm = m_step(estimates, assignments, gmm, reg_epsilon=cov_floor, min_cluster=min_cluster)
    assignments, estimates, objective = run_e_step(gmm)
    trace.append(objective)
    return EmState(
        gmm=gmm,
        assignments=assignments,
        estimates=estimates,
        objective_trace=tuple(trace),
    )


def map_em_decode(
    measurements: Sequence[tuple[np.ndarray, SensingMatrix | np.ndarray]],
    init_gmm: Gmm,
    iterations: int = 3,
    reg_epsilon: float = MAP_EM_REG_EPSILON,
    min_cluster: int = 2,
    cov_floor: float | None = None,
) -> EmState:
    """Alternate e_step/m_step `iterations` times, then a closing e_step.

    reg_epsilon is the decoder ridge; cov_floor the refit eigenvalue floor
    (defaults to reg_epsilon).  Deterministic in (measurements, init_gmm);
    the objective trace has iterations + 1 entries and is non-decreasing.
    """
    return _run_em(
        lambda gmm: e_step(gmm, measurements, reg_epsilon=reg_epsilon),
        init_gmm,
        iterations,
        reg_epsilon if cov_floor is None else cov_floor,
        min_cluster,
    )


def map_em_decode_masked(
    values: Sequence[np.ndarray],
    masks: Sequence[np.ndarray],
    init_gmm: Gmm,
    iterations: int = 3,
    reg_epsilon: float = MAP_EM_REG_EPSILON,
    min_cluster: int = 2,
    cov_floor: float | None = None,
) -> EmState:
    """map_em_decode for coordinate-mask measurements (see e_step_masked)."""
    return _run_em(
        lambda gmm: e_step_masked(gmm, values, masks, reg_epsilon=reg_epsilon),
        init_gmm,
        iterations,
        reg_epsilon if cov_floor is None else cov_floor,
        min_cluster,
    )
