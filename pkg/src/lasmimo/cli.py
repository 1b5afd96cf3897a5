"""Command-line front end.

Subcommands: ``simulate`` (BER sweep from a config file, ``--seed``
required), ``capacity`` (perfect-CSIR capacity or the training-based
bound over an SNR grid), ``plot`` (combine series CSVs into one SVG),
``selftest`` (fast algebraic smoke checks).

Exit status is 0 on success.  On failure a machine-readable JSON line
``{"error": <category>, "detail": ...}`` goes to stderr and the exit
code reflects the category: 2 config-error, 3 io-error, 4
internal-error.

SNR grids are average received SNR per receive antenna in dB (the
simulator's receive-side convention).  Comparisons against external
Eb/N0-referenced curves require an explicit conversion by
``Eb/N0 = SNR - 10 log10(spectral efficiency)``.
"""

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

__all__ = ["main"]

_EXIT = {"config-error": 2, "io-error": 3, "internal-error": 4}


class CliError(Exception):
    def __init__(self, category: str, detail: str):
        super().__init__(detail)
        self.category = category
        self.detail = detail


def _fail(category: str, detail: str) -> int:
    sys.stderr.write(json.dumps({"error": category, "detail": detail}) + "\n")
    return _EXIT[category]


_CONFIG_KEYS = {
    "variant": str, "n_t": int, "n_r": int, "qam_order": int,
    "filter_kind": str, "m_max": int, "csir": str, "est_iters": int,
    "n_d": int, "beta_p": float, "beta_d": float,
    "min_errors": int, "max_bits": int, "workers": int, "batch_trials": int,
}


def load_config(path: Path, overrides: dict):
    """Read a flat INI config (any sections, unique keys) into an
    ExperimentConfig; explicit CLI flags win over file keys."""
    from .harness import ConfigError, ExperimentConfig

    parser = configparser.ConfigParser()
    try:
        read = parser.read(path)
    except configparser.Error as exc:
        raise CliError("config-error", str(exc)) from exc
    if not read:
        raise CliError("io-error", f"cannot read config file {path}")
    merged = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key in merged:
                raise CliError("config-error", f"duplicate config key {key}")
            merged[key] = value
    kwargs = {}
    for key, value in merged.items():
        if key == "snr_db":
            kwargs["snr_db"] = tuple(float(v) for v in value.replace(",", " ").split())
        elif key in _CONFIG_KEYS:
            try:
                kwargs[key] = _CONFIG_KEYS[key](value)
            except ValueError as exc:
                raise CliError("config-error", f"{key}: {exc}") from exc
        else:
            raise CliError("config-error", f"unknown config key {key}")
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = ExperimentConfig(**kwargs)
        cfg.validate()
    except (ConfigError, TypeError) as exc:
        raise CliError("config-error", str(exc)) from exc
    return cfg


def _cmd_simulate(args) -> int:
    from .harness import emit_results, run_ber_sweep

    overrides = {"seed": args.seed}
    if args.snr_db:
        overrides["snr_db"] = tuple(args.snr_db)
    if args.workers is not None:
        overrides["workers"] = args.workers
    cfg = load_config(Path(args.config), overrides)
    records = run_ber_sweep(cfg, record_timing=not args.no_timing)
    try:
        written = emit_results(records, args.format, args.out)
    except OSError as exc:
        raise CliError("io-error", f"{args.out}: {exc}") from exc
    for path in written:
        print(path)
    return 0


def _cmd_capacity(args) -> int:
    from .estimation import capacity_bound, ergodic_capacity_csir

    rng = np.random.default_rng(args.seed)
    rows = []
    for snr_db in args.snr_db:
        gamma = 10.0 ** (snr_db / 10.0)
        if args.kind == "csir":
            value = ergodic_capacity_csir(args.nt, args.nr, gamma, args.trials, rng)
        else:
            value = capacity_bound(args.nt, args.nr, args.coherence_time, args.tau,
                                   gamma, args.beta_p, args.beta_d, args.trials, rng)
        rows.append({"snr_db": snr_db, "bps_hz": value})
        print(f"{snr_db:g} dB: {value:.4f} bps/Hz")
    if args.out:
        try:
            with open(args.out, "w") as fh:
                json.dump(rows, fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise CliError("io-error", f"{args.out}: {exc}") from exc
    return 0


def _cmd_plot(args) -> int:
    from .harness import _plot_curves, parse_csv

    curves = {}
    for spec in args.series:
        path = Path(spec)
        if not path.exists():
            raise CliError("io-error", f"no such series file: {path}")
        curves[path.stem] = parse_csv(path)
    if not curves:
        raise CliError("config-error", "no series files given")
    try:
        _plot_curves(curves, Path(args.out))
    except OSError as exc:
        raise CliError("io-error", f"{args.out}: {exc}") from exc
    print(args.out)
    return 0


def _cmd_selftest(args) -> int:
    from .detector import ml_oracle, mlas_detect
    from .harness import ExperimentConfig, run_ber_sweep
    from .modulation import pam_alphabet
    from .stbc import CdaCode, va_adjoint_multiply, weight_matrices
    from .system import build_real_system
    from .channel import SnrModel, draw_channel, transmit
    from .stbc import encode

    failures = 0

    def report(name, ok):
        nonlocal failures
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
        failures += 0 if ok else 1

    rng = np.random.default_rng(20240901)
    for n in (2, 4):
        for code in (CdaCode.ill_only(n), CdaCode.fd_ill(n)):
            va = weight_matrices(code).va
            ok = np.max(np.abs(va.conj().T @ va - n * np.eye(n * n))) < 1e-10
            report(f"scaled-unitary column matrix n={n} {code.variant}", ok)
    for n in (2, 4, 8):
        code = CdaCode.ill_only(n)
        v = rng.standard_normal(n * n) + 1j * rng.standard_normal(n * n)
        fast = va_adjoint_multiply(v, code, fast=True)
        naive = va_adjoint_multiply(v, code, fast=False)
        report(f"fft path n={n}", np.max(np.abs(fast - naive)) < 1e-10)
    # small end-to-end detection against the exhaustive ML oracle
    code = CdaCode.ill_only(2)
    sset = pam_alphabet(2)
    snr = SnrModel(gamma=10 ** 1.5, es=2 * 2.0, n_t=2)
    ok = True
    for _ in range(20):
        h_c = draw_channel(2, 2, rng)
        x = sset.levels[rng.integers(0, 2, 8)]
        y_c = transmit(encode(x[:4] + 1j * x[4:], code), h_c, snr, "data", rng)
        system = build_real_system(h_c, code).bind(y_c)
        d, _ = mlas_detect(system, sset, gamma=snr.gamma)
        dml = ml_oracle(system.y, system.h, sset)
        ok = ok and system.cost(d) >= system.cost(dml) - 1e-9
    report("detector cost >= ML oracle cost", ok)
    cfg = ExperimentConfig(n_t=2, n_r=2, snr_db=(10.0,), min_errors=20,
                           max_bits=20000, seed=7)
    rec1 = run_ber_sweep(cfg, record_timing=False)
    rec2 = run_ber_sweep(cfg, record_timing=False)
    report("sweep determinism", rec1 == rec2)
    if failures:
        raise CliError("internal-error", f"{failures} selftest check(s) failed")
    print("selftest: all checks passed")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lasmimo", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a BER sweep from a config file")
    sim.add_argument("--config", required=True, help="INI config file")
    sim.add_argument("--seed", type=int, required=True, help="simulation seed (mandatory)")
    sim.add_argument("--snr-db", dest="snr_db", type=float, nargs="+",
                     help="override the config SNR grid")
    sim.add_argument("--workers", type=int, help="override worker count")
    sim.add_argument("--format", choices=("csv", "json", "plot-data"), default="csv")
    sim.add_argument("--out", default="results.csv", help="output file or directory")
    sim.add_argument("--no-timing", action="store_true",
                     help="zero the wall_ms column for byte-identical reruns")
    sim.set_defaults(func=_cmd_simulate)

    cap = sub.add_parser("capacity", help="evaluate capacity curves")
    cap.add_argument("--kind", choices=("csir", "bound"), default="csir")
    cap.add_argument("--nt", type=int, required=True)
    cap.add_argument("--nr", type=int, required=True)
    cap.add_argument("--snr-db", dest="snr_db", type=float, nargs="+", required=True)
    cap.add_argument("--trials", type=int, default=10000)
    cap.add_argument("--seed", type=int, default=0)
    cap.add_argument("--coherence-time", type=int, default=48,
                     help="frame length T in channel uses (bound only)")
    cap.add_argument("--tau", type=int, default=None,
                     help="pilot duration in channel uses (bound only; default nt)")
    cap.add_argument("--beta-p", type=float, default=1.0)
    cap.add_argument("--beta-d", type=float, default=1.0)
    cap.add_argument("--out", help="optional JSON output path")
    cap.set_defaults(func=_cmd_capacity)

    plo = sub.add_parser("plot", help="combine series CSVs into an SVG plot")
    plo.add_argument("series", nargs="+", help="series CSV files")
    plo.add_argument("--out", default="ber_plot.svg")
    plo.set_defaults(func=_cmd_plot)

    st = sub.add_parser("selftest", help="run fast invariant checks")
    st.set_defaults(func=_cmd_selftest)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if getattr(args, "tau", "absent") is None:
        args.tau = args.nt
    try:
        return args.func(args)
    except CliError as exc:
        return _fail(exc.category, exc.detail)
    except OSError as exc:
        return _fail("io-error", str(exc))
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        return _fail("internal-error", f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
