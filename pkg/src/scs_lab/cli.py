"""Command-line harness mapping each experiment to a seeded, reproducible run.

Every subcommand emits CSV whose first line is `# scs-lab v1 <subcommand>
seed=<s>`, followed by a `# config ...` line fixing all flags, an optional
timestamp comment (suppressed by --deterministic), a header row, and one row
per sweep point.  Floats are printed with 9 significant digits so re-runs
with identical flags are byte-identical.

Exit codes: 0 success, 1 usage/validation, 2 I/O, 3 numerical failure.

Heavy imports happen inside the handlers so that --threads can cap the BLAS
pools before numpy is loaded.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

from .errors import ContainerFormatError, PgmError, SingularSystemError, UndefinedConstantError

_SCHEMA = "scs-lab v1"

_FAMILY_CHOICES = ("gaussian", "bernoulli", "subsample", "pixel")
_ANALYSIS_FAMILIES = ("gaussian", "bernoulli", "subsample")


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run; serialized into the CSV comments."""

    subcommand: str
    seed: int
    out: str | None
    deterministic: bool
    params: dict = field(default_factory=dict)

    def describe(self) -> str:
        items = sorted(self.params.items())
        return " ".join(f"{key}={value}" for key, value in items)


def _config(args: argparse.Namespace) -> RunConfig:
    skip = {"func", "subcommand", "seed", "out", "deterministic", "threads"}
    params = {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}
    return RunConfig(
        subcommand=args.subcommand,
        seed=args.seed,
        out=getattr(args, "out", None),
        deterministic=args.deterministic,
        params=params,
    )


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return "%.9g" % value
    return str(value)


def _write_csv(config: RunConfig, header: list[str], rows: list[list], path: str | None) -> None:
    lines = [f"# {_SCHEMA} {config.subcommand} seed={config.seed}"]
    lines.append(f"# config {config.describe()}")
    if not config.deterministic:
        import datetime

        lines.append(f"# generated {datetime.datetime.now().isoformat()}")
    lines.append(",".join(header))
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="") as fh:
            fh.write(text)


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _alpha_grid():
    import numpy as np

    return np.arange(1.0, 5.0 + 1e-9, 0.25)


def _resolve_family(name: str):
    from .sensing import FAMILIES_BY_NAME

    return FAMILIES_BY_NAME[name]


# ----------------------------------------------------------------------------
# subcommands


def cmd_approx(args: argparse.Namespace) -> int:
    """Best k-term linear vs nonlinear approximation MSE over a decay sweep."""
    from . import approximation, gaussian_models

    config = _config(args)
    alphas = [args.alpha] if args.alpha is not None else list(_alpha_grid())
    rows = []
    for alpha in alphas:
        spectrum = gaussian_models.power_decay_spectrum(args.n, float(alpha))
        energy = spectrum.total_energy
        rep = approximation.approx_error_report(spectrum, args.k, args.trials, args.seed)
        linear = rep.linear_mse / energy
        nonlinear = rep.nonlinear_mse / energy
        rows.append(
            [
                float(alpha), linear, rep.linear_se / energy, args.trials, args.seed,
                args.k, nonlinear, rep.nonlinear_se / energy,
                rep.linear_mse_closed_form / energy, linear - nonlinear,
                linear / nonlinear if nonlinear > 0 else float("inf"),
            ]
        )
        _log(f"[approx] alpha={alpha:g} k={args.k} linear={linear:.6g} nonlinear={nonlinear:.6g}")
    _write_csv(
        config,
        ["parameter", "estimate", "std_error", "trials", "seed",
         "k", "nonlinear_mse", "nonlinear_se", "closed_form", "difference", "ratio"],
        rows,
        args.out,
    )
    return 0


def cmd_scs_ratio(args: argparse.Namespace) -> int:
    """Decoder MSE over best k-term MSE, swept over alpha or k."""
    from . import analysis, gaussian_models

    config = _config(args)
    family = _resolve_family(args.family)
    if args.sweep == "alpha":
        points = [(float(a), args.k) for a in _alpha_grid()]
    elif args.sweep == "k":
        points = [(args.alpha, k) for k in range(5, 33, 3)]
    else:
        points = [(args.alpha, args.k)]
    rows = []
    for alpha, k in points:
        spectrum = gaussian_models.power_decay_spectrum(args.n, alpha)
        m = args.m if args.m is not None else k
        rep = analysis.scs_vs_bestk_ratio(spectrum, k, m, family, args.trials, args.seed)
        param = alpha if args.sweep == "alpha" else k
        ratio_se = rep.scs_mse_se / rep.bestk_mse if rep.bestk_mse > 0 else 0.0
        rows.append([param, rep.ratio, ratio_se, args.trials, args.seed,
                     alpha, k, m, rep.scs_mse, rep.bestk_mse])
        _log(f"[scs-ratio] alpha={alpha:g} k={k} m={m} ratio={rep.ratio:.4g}")
    _write_csv(
        config,
        ["parameter", "estimate", "std_error", "trials", "seed",
         "alpha", "k", "m", "scs_mse", "bestk_mse"],
        rows,
        args.out,
    )
    return 0


def cmd_rip(args: argparse.Namespace) -> int:
    """Residual isometry constants and the bound constant 1 + b_K/a_K."""
    import numpy as np

    from . import analysis, gaussian_models

    config = _config(args)
    spectrum = gaussian_models.power_decay_spectrum(args.n, args.alpha)
    model = gaussian_models.make_gaussian(np.zeros(args.n), np.diag(spectrum.eigenvalues), reg_epsilon=0.0)
    families = [args.family] if args.family is not None else list(_ANALYSIS_FAMILIES)
    if args.sweep == "m":
        points = [(args.k, m) for m in range(2, 2 * args.k + 1, 2)]
    elif args.sweep == "k":
        points = [(k, k) for k in range(4, 17, 2)]
    else:
        points = [(args.k, args.m if args.m is not None else args.k)]
    rows = []
    for name in families:
        family = _resolve_family(name)
        for k, m in points:
            rep = analysis.rip_expectation(model, family, k, m, args.trials, args.seed)
            param = m if args.sweep == "m" else k
            rows.append([param, rep.c0, rep.c0_se, args.trials, args.seed,
                         name, k, m, rep.a_k, rep.b_k,
                         rep.identity_lhs, rep.identity_lhs_se, rep.eta_mse])
            _log(f"[rip] family={name} k={k} m={m} c0={rep.c0:.4g}")
    _write_csv(
        config,
        ["parameter", "estimate", "std_error", "trials", "seed",
         "family", "k", "m", "a_k", "b_k", "identity_lhs", "identity_lhs_se", "eta_mse"],
        rows,
        args.out,
    )
    return 0


def cmd_kl(args: argparse.Namespace) -> int:
    """Divergence between equal-spectrum 2D Gaussians vs rotation angle."""
    import numpy as np

    from . import analysis, gaussian_models

    config = _config(args)
    thetas = [args.theta] if args.theta is not None else list(np.arange(5.0, 90.0 + 1e-9, 5.0))
    rows = []
    for ratio in args.ratios:
        lam = np.array([1.0, 1.0 / ratio])
        sigma1 = np.diag(lam)
        for theta_deg in thetas:
            c = gaussian_models.rotation_2d(np.deg2rad(theta_deg))
            sigma2 = c.T @ sigma1 @ c
            value = analysis.kl_gaussians(sigma1, sigma2)
            rows.append([float(theta_deg), value, 0.0, 1, args.seed, float(ratio)])
        _log(f"[kl] ratio={ratio:g} computed {len(thetas)} angles")
    _write_csv(
        config,
        ["parameter", "estimate", "std_error", "trials", "seed", "ratio"],
        rows,
        args.out,
    )
    return 0


def cmd_select(args: argparse.Namespace) -> int:
    """Correct model selection probability, oracle or from compressed decodes."""
    from . import analysis, gaussian_models

    config = _config(args)
    rows = []
    if args.variant == "oracle":
        alphas = [args.alpha] if args.alpha is not None else list(_alpha_grid())
        for n in args.n:
            for alpha in alphas:
                spectrum = gaussian_models.power_decay_spectrum(n, float(alpha))
                pair = gaussian_models.anti_diagonal_pair(n, spectrum)
                rep = analysis.oracle_selection_prob(pair[0], pair[1], args.trials, args.seed)
                rows.append([float(alpha), rep.p_correct, rep.p_se, args.trials, args.seed,
                             "oracle", n, 0, 0.0, 0.0])
                _log(f"[select] oracle n={n} alpha={alpha:g} p={rep.p_correct:.4f}")
    else:
        family = _resolve_family(args.family)
        n = args.n[0]
        alpha = args.alpha if args.alpha is not None else 3.0
        spectrum = gaussian_models.power_decay_spectrum(n, alpha)
        pair = gaussian_models.anti_diagonal_pair(n, spectrum)
        ms = [args.m] if args.m is not None else list(range(1, n + 1))
        for m in ms:
            rep = analysis.compressed_selection_prob(pair[0], pair[1], m, family, args.trials, args.seed)
            rows.append([m, rep.p_correct, rep.p_se, args.trials, args.seed,
                         "compressed", n, m, rep.mse, rep.mse_se])
            _log(f"[select] compressed n={n} m={m} p={rep.p_correct:.4f} mse={rep.mse:.4g}")
    _write_csv(
        config,
        ["parameter", "estimate", "std_error", "trials", "seed",
         "variant", "n", "m", "mse", "mse_se"],
        rows,
        args.out,
    )
    return 0


def cmd_sense(args: argparse.Namespace) -> int:
    """Compressively sense a PGM image tile by tile into an SCS1 container."""
    from . import imaging

    family = _resolve_family(args.family)
    image = imaging.load_pgm(args.input)
    container = imaging.sense_image(image, args.patch_edge, args.rate, family, args.seed)
    if (container.height, container.width) != (image.height, image.width):
        _log(f"[sense] cropped {image.width}x{image.height} -> {container.width}x{container.height}")
    imaging.save_sensed(container, args.out)
    _log(
        f"[sense] wrote {args.out}: {container.patch_count} tiles, "
        f"M={container.m}/{container.patch_edge**2}, family={args.family}"
    )
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    """Reconstruct an image from an SCS1 container; emit objective-trace CSV."""
    from . import gaussian_models, imaging

    config = _config(args)
    container = imaging.load_sensed(args.input)
    mode = imaging.DecodeMode.NON_OVERLAPPED if args.mode == "tiled" else imaging.DecodeMode.OVERLAPPED_SUBSAMPLING
    image, state = imaging.decode_image(
        container,
        mode,
        em_iterations=args.iters,
        n_models=args.models,
        stride=args.stride,
    )
    rounded = image.rounded()
    imaging.save_pgm(rounded, args.out)
    rows = [
        [f"objective_{i}", value, 0.0, len(state.assignments), args.seed]
        for i, value in enumerate(state.objective_trace)
    ]
    if args.ref is not None:
        reference = imaging.crop_to_patch_multiple(imaging.load_pgm(args.ref), container.patch_edge)
        value = imaging.psnr(reference.rounded(), rounded)
        rows.append(["psnr_db", value, 0.0, len(state.assignments), args.seed])
        _log(f"[decode] psnr={value:.2f} dB")
    if args.gmm_out is not None:
        gaussian_models.save_gmm(state.gmm, args.gmm_out)
    _write_csv(config, ["parameter", "estimate", "std_error", "trials", "seed"], rows, args.csv)
    _log(f"[decode] wrote {args.out} ({args.mode}, {args.iters} iterations)")
    return 0


# ----------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--seed", type=int, default=0, help="base seed; every output is a pure function of it")
    sub.add_argument("--out", type=str, default=None, help="output path (CSV commands default to stdout)")
    sub.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    sub.add_argument("--deterministic", action="store_true", help="suppress the timestamp comment line")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scs-lab", description=__doc__.split("\n")[0])
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("approx", help="best k-term linear vs nonlinear approximation sweep")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--alpha", type=float, default=None, help="fixed decay (default: sweep 1..5)")
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--trials", type=int, default=100000)
    _add_common(p)
    p.set_defaults(func=cmd_approx)

    p = subs.add_parser("scs-ratio", help="decoder MSE over best k-term MSE")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--m", type=int, default=None, help="measurements (default: k)")
    p.add_argument("--family", choices=_FAMILY_CHOICES, default="gaussian")
    p.add_argument("--sweep", choices=("alpha", "k", "none"), default="alpha")
    p.add_argument("--trials", type=int, default=10000)
    _add_common(p)
    p.set_defaults(func=cmd_scs_ratio)

    p = subs.add_parser("rip", help="residual isometry constants per family")
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--alpha", type=float, default=3.0)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--family", choices=_ANALYSIS_FAMILIES, default=None, help="default: all three")
    p.add_argument("--sweep", choices=("m", "k", "none"), default="m")
    p.add_argument("--trials", type=int, default=10000)
    _add_common(p)
    p.set_defaults(func=cmd_rip)

    p = subs.add_parser("kl", help="2D divergence vs rotation angle")
    p.add_argument("--theta", type=float, default=None, help="fixed angle in degrees (default: sweep 5..90)")
    p.add_argument("--ratios", type=float, nargs="+", default=[5.0, 10.0, 40.0, 100.0])
    _add_common(p)
    p.set_defaults(func=cmd_kl)

    p = subs.add_parser("select", help="correct model selection probability")
    p.add_argument("--variant", choices=("oracle", "compressed"), default="oracle")
    p.add_argument("--n", type=int, nargs="+", default=[2, 5, 10, 15, 20])
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--m", type=int, default=None, help="compressed: fixed M (default: sweep 1..N)")
    p.add_argument("--family", choices=_FAMILY_CHOICES, default="gaussian")
    p.add_argument("--trials", type=int, default=10000)
    _add_common(p)
    p.set_defaults(func=cmd_select)

    p = subs.add_parser("sense", help="compressively sense a PGM image")
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--rate", type=float, required=True, help="sampling rate M/N in (0, 1]")
    p.add_argument("--family", choices=_FAMILY_CHOICES, default="gaussian")
    p.add_argument("--patch-edge", type=int, default=8)
    _add_common(p)
    p.set_defaults(func=cmd_sense)

    p = subs.add_parser("decode", help="reconstruct an image from a container")
    p.add_argument("--input", type=str, required=True)
    p.add_argument("--mode", choices=("tiled", "overlapped"), default="tiled")
    p.add_argument("--iters", type=int, default=3)
    p.add_argument("--models", type=int, default=19)
    p.add_argument("--stride", type=int, default=1, help="sliding stride in overlapped mode")
    p.add_argument("--ref", type=str, default=None, help="reference PGM for PSNR reporting")
    p.add_argument("--csv", type=str, default=None, help="objective/PSNR CSV path (default stdout)")
    p.add_argument("--gmm-out", type=str, default=None, help="save the adapted mixture container")
    _add_common(p)
    p.set_defaults(func=cmd_decode)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    if getattr(args, "out", None) is None and args.subcommand == "sense":
        build_parser().error("sense requires --out")
    try:
        return args.func(args)
    except (PgmError, ContainerFormatError) as exc:
        _log(f"scs-lab: file format error: {exc}")
        return 2
    except OSError as exc:
        _log(f"scs-lab: I/O error: {exc}")
        return 2
    except (SingularSystemError, UndefinedConstantError, FloatingPointError) as exc:
        _log(f"scs-lab: numerical error: {exc}")
        return 3
    except ValueError as exc:
        _log(f"scs-lab: invalid arguments: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
