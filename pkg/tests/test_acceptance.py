"""Acceptance suite: one test per release criterion, printed as PASS/FAIL lines.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report.  Tolerances are fixed here, not tuned at runtime.
"""

import numpy as np
import pytest

from scs_lab import analysis as an
from scs_lab import approximation as ap
from scs_lab import cli
from scs_lab import decoder as dec
from scs_lab import gaussian_models as gm
from scs_lab import imaging as im
from scs_lab import map_em as em
from scs_lab import sensing as sn

from conftest import SCENE_PGM, random_orthonormal


def _report(number: int, name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {number} ({name}): {detail}")
    assert ok, f"criterion {number} ({name}): {detail}"


# -----------------------------------------------------------------------------
# 1. exact recovery of rank-k signals from k aligned measurements

def test_criterion_01_degenerate_exact_recovery():
    n, k, samples = 64, 8, 1000
    lam = np.zeros(n)
    lam[:k] = gm.power_decay_spectrum(k, 1.0).eigenvalues
    model = gm.make_gaussian(np.zeros(n), np.diag(lam), reg_epsilon=0.0)
    phi = np.hstack([np.eye(k), np.zeros((k, n - k))])
    x = gm.sample(model, samples, np.random.default_rng(101))
    rec = dec.decode(dec.linear_map_decoder(model, phi), x @ phi.T)
    rel = np.linalg.norm(rec - x, axis=1) / np.maximum(np.linalg.norm(x, axis=1), 1e-300)
    worst = float(np.max(rel))
    _report(1, "degenerate exact recovery", worst < 1e-9,
            f"max relative reconstruction error {worst:.3e} over {samples} samples (tol 1e-9)")


# -----------------------------------------------------------------------------
# 2. Monte Carlo MSE against the closed-form trace expression

def test_criterion_02_mse_formula_agreement():
    n, m, draws, pairs = 16, 8, 100000, 20
    rng = np.random.default_rng(202)
    worst = 0.0
    for p in range(pairs):
        basis = random_orthonormal(n, rng)
        alpha = rng.uniform(0.5, 3.0)
        cov = gm.rotate_spectrum(gm.power_decay_spectrum(n, alpha), basis)
        model = gm.make_gaussian(np.zeros(n), cov, reg_epsilon=0.0)
        phi = sn.gaussian_matrix(m, n, seed=3000 + p)
        x = gm.sample(model, draws, rng)
        est = dec.decode(dec.linear_map_decoder(model, phi), x @ phi.matrix.T)
        mc = float(np.mean(np.sum((x - est) ** 2, axis=1)))
        theory = dec.theoretical_mse(model, phi)
        worst = max(worst, abs(mc - theory) / theory)
    _report(2, "MSE trace formula", worst < 0.02,
            f"worst relative gap {worst:.4f} over {pairs} (covariance, operator) pairs (tol 0.02)")


# -----------------------------------------------------------------------------
# 3. linear and nonlinear k-term approximations are comparable

def test_criterion_03_approximation_comparability():
    spec = gm.power_decay_spectrum(64, 3.0)
    energy = spec.total_energy
    details = []
    ok = True
    for k in (8, 16):
        rep = ap.approx_error_report(spec, k, trials=100000, seed=303)
        diff = (rep.linear_mse - rep.nonlinear_mse) / energy
        ratio = rep.linear_mse / rep.nonlinear_mse
        details.append(f"k={k}: diff={100 * diff:.3f}% ratio={ratio:.2f}")
        ok = ok and 0.0 <= diff <= 0.003 and 1.5 <= ratio <= 3.0
    _report(3, "k-term comparability", ok,
            "; ".join(details) + " (diff in [0%, 0.3%], ratio in [1.5, 3])")


# -----------------------------------------------------------------------------
# 4. decoder error versus best k-term error stays near the reported constant

def test_criterion_04_ratio_band():
    spec = gm.power_decay_spectrum(64, 3.0)
    ratios = {}
    for k in (8, 16, 24, 32):
        rep = an.scs_vs_bestk_ratio(spec, k, k, sn.Family.GAUSSIAN_IID, trials=10000, seed=404)
        ratios[k] = rep.ratio
    ok = all(3.0 <= r <= 4.4 for r in ratios.values())
    _report(4, "decoder/best-k ratio", ok,
            ", ".join(f"k=M={k}: {r:.2f}" for k, r in ratios.items()) + " (band [3.0, 4.4])")


# -----------------------------------------------------------------------------
# 5 & 6. bound constants per family, and the defining energy identity

@pytest.fixture(scope="module")
def rip_reports(power_model_64):
    return {
        family: an.rip_expectation(power_model_64, family, k=10, m=10, trials=10000, seed=505)
        for family in (sn.Family.GAUSSIAN_IID, sn.Family.BERNOULLI_IID, sn.Family.SUBSAMPLING_DCT)
    }


def test_criterion_05_bound_constants(rip_reports):
    c0 = {family: rep.c0 for family, rep in rip_reports.items()}
    gauss, bern = c0[sn.Family.GAUSSIAN_IID], c0[sn.Family.BERNOULLI_IID]
    dct = c0[sn.Family.SUBSAMPLING_DCT]
    ok = (
        3.8 <= gauss <= 5.2
        and 3.8 <= bern <= 5.2
        and abs(gauss - bern) <= 0.4
        and 4.7 <= dct <= 6.3
    )
    _report(5, "bound constants", ok,
            f"gaussian={gauss:.2f}, bernoulli={bern:.2f} (|diff|={abs(gauss - bern):.2f} <= 0.4), "
            f"subsampling={dct:.2f} (bands [3.8, 5.2] / [4.7, 6.3])")


def test_criterion_06_null_space_equality(rip_reports):
    details = []
    ok = True
    for family, rep in rip_reports.items():
        gap = abs(rep.identity_lhs - rep.c0)
        tol = 3 * np.hypot(rep.identity_lhs_se, rep.c0_se)
        details.append(f"{family.name}: gap={gap:.2e} (3se={tol:.2e})")
        ok = ok and gap <= tol
    _report(6, "residual energy identity", ok, "; ".join(details))


# -----------------------------------------------------------------------------
# 7. divergence sweep: monotone in angle, maximized at 90 degrees

def test_criterion_07_divergence_maximizer():
    angles = np.deg2rad(np.arange(5.0, 90.5, 5.0))
    ok = True
    details = []
    for r in (5.0, 10.0, 40.0, 100.0):
        sigma1 = np.diag([1.0, 1.0 / r])
        values = np.array([
            an.kl_gaussians(sigma1, gm.rotation_2d(t).T @ sigma1 @ gm.rotation_2d(t)) for t in angles
        ])
        increasing = bool(np.all(np.diff(values) > 0))
        peak_at_end = values.argmax() == values.size - 1
        expected = 0.5 * (r + 1.0 / r - 2.0)
        exact = abs(values[-1] - expected) <= 1e-12
        ok = ok and increasing and peak_at_end and exact
        details.append(f"r={r:g}: max={values[-1]:.6g} (expect {expected:.6g})")
    _report(7, "divergence maximizer", ok, "; ".join(details) + "; strictly increasing, peak at 90 deg")


# -----------------------------------------------------------------------------
# 8. oracle model selection: level and dimension trend

def test_criterion_08_oracle_selection():
    pair = gm.anti_diagonal_pair(2, gm.Spectrum(np.array([1.0, 0.01])))
    level = an.oracle_selection_prob(pair[0], pair[1], trials=100000, seed=808)
    level_ok = 0.85 <= level.p_correct <= 0.95

    probs = []
    for n in (2, 5, 10, 20):
        p = gm.anti_diagonal_pair(n, gm.power_decay_spectrum(n, 3.0))
        probs.append(an.oracle_selection_prob(p[0], p[1], trials=100000, seed=809))
    trend_ok = all(
        nxt.p_correct - cur.p_correct > 3 * np.hypot(cur.p_se, nxt.p_se)
        for cur, nxt in zip(probs, probs[1:])
    )
    _report(8, "oracle selection", level_ok and trend_ok,
            f"2D ratio-100 p={level.p_correct:.3f} (band [0.85, 0.95]); "
            "N-trend " + " -> ".join(f"{r.p_correct:.3f}" for r in probs) + " strictly increasing at 3 s.e.")


# -----------------------------------------------------------------------------
# 9. compressed model selection and reconstruction error versus M

def test_criterion_09_compressed_selection():
    pair = gm.anti_diagonal_pair(10, gm.power_decay_spectrum(10, 3.0))
    sweep = {
        m: an.compressed_selection_prob(pair[0], pair[1], m, sn.Family.GAUSSIAN_IID, trials=10000, seed=909)
        for m in (1, 2, 4, 6, 8, 10)
    }
    p1, p8, mse_full = sweep[1].p_correct, sweep[8].p_correct, sweep[10].mse
    ms = sorted(sweep)
    mono_ok = all(
        sweep[b].mse <= sweep[a].mse + 3 * np.hypot(sweep[a].mse_se, sweep[b].mse_se)
        for a, b in zip(ms, ms[1:])
    )
    ok = 0.45 <= p1 <= 0.55 and p8 >= 0.9 and mse_full < 1e-6 and mono_ok
    _report(9, "compressed selection", ok,
            f"p(M=1)={p1:.3f} (band [0.45, 0.55]); p(M=8)={p8:.3f} (>= 0.9); "
            f"MSE(M=N)={mse_full:.2e} (< 1e-6); MSE non-increasing at 3 s.e.: {mono_ok}")


# -----------------------------------------------------------------------------
# 10. EM objective never decreases

def test_criterion_10_em_monotonicity():
    n, m, per = 10, 8, 1000
    rng_global = np.random.default_rng(1010)
    base = gm.power_decay_spectrum(n, 3.0)
    third_basis = random_orthonormal(n, rng_global)
    truth = gm.Gmm(
        gm.anti_diagonal_pair(n, base)
        + (gm.make_gaussian(np.zeros(n), gm.rotate_spectrum(base, third_basis), reg_epsilon=0.0),)
    )
    worst = 0.0
    for run in range(20):
        rng = np.random.default_rng(2000 + run)
        signals = np.vstack([gm.sample(truth[j], per, rng) for j in range(3)])
        measurements = []
        for i, x in enumerate(signals):
            phi = sn.gaussian_matrix(m, n, seed=(3000 + run) * 100003 + i)
            measurements.append((phi.matrix @ x, phi))
        init_models = []
        for j in range(3):
            a = rng.standard_normal((n, n)) * 0.1
            a = a - a.T
            q = np.linalg.solve(np.eye(n) + a / 2, np.eye(n) - a / 2)
            init_models.append(
                gm.make_gaussian(np.zeros(n), q @ truth[j].covariance @ q.T, reg_epsilon=1e-6)
            )
        state = em.map_em_decode(measurements, gm.Gmm(tuple(init_models)), iterations=3)
        trace = np.array(state.objective_trace)
        slack = 1e-9 * np.maximum(np.abs(trace[:-1]), np.abs(trace[1:]))
        worst = max(worst, float(np.max(-(np.diff(trace) + slack))))
    _report(10, "EM monotonicity", worst <= 0.0,
            f"max slack-adjusted objective decrease {worst:.3e} over 20 seeded runs (must be <= 0)")


# -----------------------------------------------------------------------------
# 11. whole-image pipeline: overlapped beats tiled, both usable

def test_criterion_11_image_pipeline_trend():
    reference = im.load_pgm(SCENE_PGM)
    tiled_container = im.sense_image(reference, 8, 0.25, sn.Family.GAUSSIAN_IID, seed=1111)
    tiled_image, _ = im.decode_image(tiled_container, im.DecodeMode.NON_OVERLAPPED)
    tiled_psnr = im.psnr(reference.rounded(), tiled_image.rounded())

    pixel_container = im.sense_image(reference, 8, 0.25, sn.Family.PIXEL_SUBSAMPLING, seed=1111)
    overlapped_image, _ = im.decode_image(pixel_container, im.DecodeMode.OVERLAPPED_SUBSAMPLING)
    overlapped_psnr = im.psnr(reference.rounded(), overlapped_image.rounded())

    ok = overlapped_psnr >= tiled_psnr + 1.0 and tiled_psnr > 24.0 and overlapped_psnr > 24.0
    _report(11, "image pipeline trend", ok,
            f"tiled={tiled_psnr:.2f} dB, overlapped={overlapped_psnr:.2f} dB "
            f"(gain {overlapped_psnr - tiled_psnr:.2f} >= 1 dB, both > 24 dB)")


# -----------------------------------------------------------------------------
# 12. every subcommand is byte-deterministic under --deterministic

def test_criterion_12_cli_determinism(tmp_path):
    scene_small = tmp_path / "small.pgm"
    full = im.load_pgm(SCENE_PGM)
    im.save_pgm(im.GrayImage(full.pixels[:32, :32]), scene_small)

    container = tmp_path / "c.scs"
    container_px = tmp_path / "cpx.scs"

    def rerun_identical(name, args, outputs):
        """Run twice with byte-identical flags; snapshot outputs in between."""
        blobs = []
        for _ in range(2):
            code = cli.main(args)
            assert code == 0, name
            blobs.append(b"".join(pathlib.Path(p).read_bytes() for p in outputs))
        return blobs[0] == blobs[1]

    import pathlib

    csv_out = tmp_path / "run.csv"
    runs = {
        "approx": ["approx", "--alpha", "3", "--k", "8", "--trials", "2000"],
        "scs-ratio": ["scs-ratio", "--sweep", "none", "--trials", "1000"],
        "rip": ["rip", "--sweep", "none", "--family", "gaussian", "--trials", "1000"],
        "kl": ["kl"],
        "select-oracle": ["select", "--variant", "oracle", "--n", "4", "--alpha", "3", "--trials", "2000"],
        "select-compressed": ["select", "--variant", "compressed", "--n", "6", "--trials", "1000"],
    }
    ok = True
    details = []
    for name, args in runs.items():
        same = rerun_identical(
            name, args + ["--deterministic", "--seed", "12", "--out", str(csv_out)], [csv_out]
        )
        ok = ok and same
        details.append(f"{name}:{'=' if same else '!'}")

    for tag, (cont, fam) in {"g": (container, "gaussian"), "p": (container_px, "pixel")}.items():
        same = rerun_identical(
            f"sense-{tag}",
            ["sense", "--input", str(scene_small), "--rate", "0.25",
             "--family", fam, "--seed", "12", "--deterministic", "--out", str(cont)],
            [cont],
        )
        ok = ok and same
        details.append(f"sense-{tag}:{'=' if same else '!'}")

    img_out = tmp_path / "decoded.pgm"
    decode_runs = {
        "decode-tiled": ["decode", "--input", str(container), "--mode", "tiled", "--iters", "1"],
        "decode-overlapped": ["decode", "--input", str(container_px), "--mode", "overlapped", "--iters", "1"],
    }
    for name, args in decode_runs.items():
        same = rerun_identical(
            name,
            args + ["--ref", str(scene_small), "--seed", "12", "--deterministic",
                    "--out", str(img_out), "--csv", str(csv_out)],
            [img_out, csv_out],
        )
        ok = ok and same
        details.append(f"{name}:{'=' if same else '!'}")

    _report(12, "CLI determinism", ok, " ".join(details))
