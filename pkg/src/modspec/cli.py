"""Command-line interface.

Precedence: built-in defaults < configuration file < command-line flags. Every
flag maps to one configuration key; ``--set key.path=value`` reaches any other
key (the value is read as a TOML literal, falling back to a plain string).

Exit status: 0 success, 2 invalid input, 3 numerical failure, 4 a checked
acceptance assertion failed.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__
from .config import load_config, parse_config, tomllib
from .errors import ContractError, NumericalError, ResolutionError, ValidationError
from .io import Emitter

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_ASSERTION = 0, 2, 3, 4

# flag dest -> (config path, converter)
FLAG_PATHS = {
    "preset": ("preset", str),
    "ratio": ("preset_params.ratio", float),
    "methods": ("methods", lambda s: [m.strip() for m in s.split(",") if m.strip()]),
    "projection": ("projection", str),
    "K": ("truncation.K", lambda s: s if s == "auto" else int(s)),
    "tolerance": ("truncation.tolerance", float),
    "max_K": ("truncation.max_K", int),
    "start": ("grid.start", float),
    "stop": ("grid.stop", float),
    "points": ("grid.points", int),
    "order": ("iterative.order", int),
    "detection_kind": ("detection.kind", str),
    "mode": ("detection.mode", str),
    "phase": ("detection.phase", float),
    "beat": ("detection.beat", float),
    "phases": ("homodyne.phases", int),
    "equivalence_tol": ("compare.equivalence_tol", float),
    "sweep_parameter": ("sweep.parameter", str),
    "sweep_values": ("sweep.values", lambda s: [float(v) for v in s.split(",") if v.strip()]),
    "seed": ("simulator.seed", int),
    "trajectories": ("simulator.n_trajectories", int),
    "t_sim": ("simulator.t_sim", float),
    "output_dir": ("output.directory", str),
    "prefix": ("output.prefix", str),
}


def _literal(text):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _overrides(args) -> dict:
    out = {}
    for dest, (path, conv) in FLAG_PATHS.items():
        val = getattr(args, dest, None)
        if val is not None:
            try:
                out[path] = conv(val)
            except ValueError:
                raise ValidationError(f"cannot parse {val!r}", path=path) from None
    for item in args.set or ():
        key, sep, val = item.partition("=")
        if not sep:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = _literal(val.strip())
    return out


def _config(args):
    overrides = _overrides(args)
    if args.config:
        return load_config(args.config, overrides)
    return parse_config("", overrides)


def _model_summary(config, series):
    if config.preset:
        return {"preset": config.preset, **config.build_preset().to_dict()}
    return {"modes": [{"name": m.name, "kind": m.kind, "frequency": m.frequency, "damping": m.damping,
                       "occupation": m.occupation} for m in series.modes],
            "drive_frequency": series.drive_frequency}


def _K(config):
    from .transfer import DEFAULT_K

    return DEFAULT_K if config.auto_K else config.K


# -- subcommands --------------------------------------------------------------------

def cmd_spectrum(args, config, em, series, noise):
    from .experiments import config_spectrum

    res = config_spectrum(config, args.method, (series, noise))
    em.spectrum(res)
    peak = int(np.argmax(res.values))
    summary = {"method": res.method, "projection": res.projection, "K_used": res.metadata.get("K"),
               "K_auto": res.metadata.get("K_auto"), "peak_omega": res.omega[peak],
               "peak_value": res.values[peak]}
    print(f"{res.method} {res.projection}: peak {res.values[peak]:.6g} at omega={res.omega[peak]:.6g}")
    return EXIT_OK, summary


def cmd_compare(args, config, em, series, noise):
    from .experiments import compare_methods

    cmp = compare_methods(config, (series, noise), workers=args.workers)
    for m, res in cmp.spectra.items():
        em.spectrum(res, f".{m}.csv")
    rows = [{"a": a, "b": b, "max_rel": mx, "l2_rel": l2} for a, b, mx, l2 in cmp.deviations]
    print(f"{'method A':>10} {'method B':>10} {'max rel':>12} {'L2 rel':>12}")
    for r in rows:
        print(f"{r['a']:>10} {r['b']:>10} {r['max_rel']:12.3e} {r['l2_rel']:12.3e}")
    for m in cmp.spectra:
        extra = f"  R={cmp.ratios[m]:.6g}" if m in cmp.ratios else ""
        print(f"{m:>10} peak at omega={cmp.peaks[m]:.6g}{extra}")
    failures = cmp.equivalence_failures()
    summary = {"deviations": rows, "peaks": cmp.peaks, "ratios": cmp.ratios,
               "equivalence_tol": cmp.tolerance,
               "equivalence_failures": [[a, b, mx] for a, b, mx, _ in failures]}
    if failures:
        for a, b, mx, _ in failures:
            print(f"FAIL equivalence {a} vs {b}: {mx:.3e} >= {cmp.tolerance:.1e}", file=sys.stderr)
        return EXIT_ASSERTION, summary
    return EXIT_OK, summary


def cmd_sweep(args, config, em, series, noise):
    from .experiments import suppression_search, sweep

    summary = {}
    if config.data["sweep"]["values"]:
        points = sweep(config, workers=args.workers)
        index = []
        for i, (v, spec, R) in enumerate(points):
            path = em.spectrum(spec, f".sweep{i:03d}.csv")
            index.append({"value": v, "file": path.rsplit("/", 1)[-1], "R": R})
            print(f"{config.data['sweep']['parameter']}={v:.6g}" + (f"  R={R:.6g}" if R is not None else ""))
        summary["parameter"] = config.data["sweep"]["parameter"]
        summary["points"] = index
    if args.suppression:
        if config.preset not in ("fig2a", "fig2c"):
            raise ValidationError("the suppression search needs the fig2a or fig2c preset", path="preset")
        s = config.data["suppression"]
        K = 16 if config.auto_K else max(config.K, 16)
        res = suppression_search(lambda r: config.build_preset({"ratio": r}).build(), s["lo"], s["hi"],
                                 s["tol"], K=K, projection=config.projection)
        summary["suppression"] = {"ratio": res.ratio, "R": res.R, "sqrt2_offset": res.offset_from_sqrt2,
                                  "K": K, "evaluations": res.evaluations}
        print(f"suppression minimum at omega_2/omega_d = {res.ratio:.4f} (sqrt 2 {res.offset_from_sqrt2:+.4f}), "
              f"R = {res.R:.3g}")
    if not summary:
        raise ValidationError("nothing to sweep: give sweep values or --suppression", path="sweep")
    return EXIT_OK, summary


def cmd_homodyne_map(args, config, em, series, noise):
    from .experiments import run_homodyne_map

    hm = run_homodyne_map(config, series_noise=(series, noise))
    em.matrix(hm.phases, hm.omega, hm.values)
    s = hm.summary()
    print(f"min S_hom = {s['min_S_hom']:.6g} ({s['squeezing_db']:.3f} dB) at phase={s['argmin_phase']:.4f}, "
          f"omega={s['argmin_omega']:.6g}")
    return EXIT_OK, s


def cmd_heterodyne(args, config, em, series, noise):
    from .spectra import DetectionSpec, HETERODYNE, heterodyne_cross, heterodyne_spectrum

    det = config.detection(series)
    det = DetectionSpec(det.mode, HETERODYNE, det.phase, det.beat)
    omegas, K = config.grid(), _K(config)
    res = heterodyne_spectrum(series, noise, det, omegas, K)
    em.spectrum(res)
    summary = {"beat": det.beat, "n": res.metadata.get("n")}
    if args.cross:
        cross = heterodyne_cross(series, noise, det.beat, omegas, K)
        i, _ = series.pair(det.mode)
        vals = cross.values[:, i, i]
        em.table({"omega": omegas, "value": vals.real, "imag": vals.imag}, ".cross.csv")
        summary["cross_max_abs"] = float(np.max(np.abs(vals)))
    print(f"heterodyne beat={det.beat:.6g} resonance n={summary['n']}")
    return EXIT_OK, summary


def cmd_simulate(args, config, em, series, noise):
    from .stochastic import SdeConfig, check_against_analytic, estimate_psd, integrate, write_trajectory

    sim = config.data["simulator"]
    sde = SdeConfig(dt=sim["dt"], t_sim=sim["t_sim"], burn_in=sim["burn_in"], n_trajectories=sim["n_trajectories"],
                    seed=sim["seed"], record_every=sim["record_every"], segment_time=sim["segment_time"],
                    observables=tuple(sim["observables"]), backend=args.backend)
    traj = integrate(series, noise, sde)
    if args.dump_trajectory:
        em.binary(write_trajectory, traj, ".traj.bin")
    ens = estimate_psd(traj, sde.segment_time)
    chk = check_against_analytic(series, noise, ens, band=sim["band"], K=max(_K(config), 16),
                                 observable=sde.observables[0])
    em.table({"omega": ens.omega, "value": ens.psd, "stderr": ens.stderr}, ".csv")
    em.table({"omega": chk.omega, "value": chk.expected}, ".analytic.csv")
    frac = chk.fraction_within(3.0)
    summary = {"n_segments": ens.n_segments, "fraction_within_3se": frac, "ratio_sim": chk.ratio_sim,
               "ratio_stderr": chk.ratio_stderr, "ratio_expected": chk.ratio_expected,
               "backend": traj.metadata["backend"]}
    print(f"{ens.n_segments} segments; {100 * frac:.1f}% of bins within 3 standard errors")
    if chk.ratio_sim is not None:
        print(f"R simulated {chk.ratio_sim:.4g} +/- {chk.ratio_stderr:.2g}, analytic {chk.ratio_expected:.4g}")
    if args.check and (frac < 0.95 or (chk.ratio_sim is not None and not chk.ratio_agrees(3.0))):
        print("FAIL stochastic agreement", file=sys.stderr)
        return EXIT_ASSERTION, summary
    return EXIT_OK, summary


def cmd_converge(args, config, em, series, noise):
    from .experiments import convergence_table

    table = convergence_table(config, series_noise=(series, noise))
    em.table({"K": [k for k, _ in table], "value": [c for _, c in table]}, ".csv")
    for K, c in table:
        print(f"K={K:3d}  max relative change to next K: {c:.3e}")
    return EXIT_OK, {"table": table}


COMMANDS = {
    "spectrum": (cmd_spectrum, "stationary spectrum for one method"),
    "compare": (cmd_compare, "compare methods and check shifted/Floquet equivalence"),
    "sweep": (cmd_sweep, "parameter sweep and sideband-suppression search"),
    "homodyne-map": (cmd_homodyne_map, "homodyne spectrum over phase and frequency"),
    "heterodyne": (cmd_heterodyne, "heterodyne spectrum and resonant cross-correlation"),
    "simulate": (cmd_simulate, "stochastic Langevin ensemble against the analytic spectrum"),
    "converge": (cmd_converge, "spectrum change versus truncation K"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modspec", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="TOML configuration file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any configuration key")
    common.add_argument("--workers", type=int, default=None, help="thread pool size for independent points")
    g = common.add_argument_group("configuration keys")
    for dest, (path, _) in FLAG_PATHS.items():
        flag = "--" + dest.replace("_", "-")
        g.add_argument(flag, dest=dest, default=None, metavar="V", help=f"sets {path}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "spectrum":
            p.add_argument("--method", default=None, help="method to use (default: first configured)")
        if name == "sweep":
            p.add_argument("--suppression", action="store_true", help="golden-section search of the R minimum")
        if name == "heterodyne":
            p.add_argument("--cross", action="store_true", help="also write the resonant cross-correlation")
        if name == "simulate":
            p.add_argument("--backend", choices=("compiled", "python"), default=None)
            p.add_argument("--dump-trajectory", action="store_true", help="write the binary trajectory dump")
            p.add_argument("--check", action="store_true", help="exit 4 unless the analytic comparison passes")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _config(args)
    except (ValidationError, ContractError, ResolutionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    handler = COMMANDS[args.command][0]
    em = None
    try:
        em = Emitter(config, args.command)
        series, noise = config.build()
        code, summary = handler(args, config, em, series, noise)
        em.finish(summary, _model_summary(config, series))
        return code
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        if em is not None:
            em.finish({"error": str(exc), "omega": exc.omega, "condition": exc.condition})
        return EXIT_NUMERICAL
    except (ValidationError, ContractError, ResolutionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
