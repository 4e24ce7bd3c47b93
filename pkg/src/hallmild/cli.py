"""Command line driver: run, sweep, norms, verify, reference, compare.

Exit codes: 0 success / converged, 1 verification failed, 2 diverged,
3 iteration cap reached, 64 bad configuration or arguments, 74 I/O or
field-format error.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, _kernels, battery, besov, picard, reference
from .config import ConfigError, defaults, load_config
from .fieldio import FieldFormatError, atomic_write_text, read_field, sha256_file, write_field
from .heat import LORENTZ_IDENTITY
from .spectral import SpaceTimeField, SpectralVectorField, set_fft_workers

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_DIVERGED = 2
EXIT_MAX_ITER = 3
EXIT_CONFIG = 64
EXIT_IO = 74
VERDICT_EXIT = {"converged": EXIT_OK, "diverged": EXIT_DIVERGED, "max-iter": EXIT_MAX_ITER}

TRACE_FIELDS = [k for k in picard.TRACE_COLUMNS if k != "seconds"]

OUTPUTS = {
    "trace.csv": {k: picard.TRACE_COLUMNS[k] for k in TRACE_FIELDS},
    "sweep.csv": {
        "amplitude": "initial-data amplitude (max |u0| = max |b0|)",
        "verdict": "converged, diverged or max-iter",
        "iterations": "trace length",
        "mean_ratio": "geometric mean of the contraction ratios rho_m; empty when undefined",
    },
    "box_study.csv": {
        "box_length": "box side L (grid points per axis fixed)",
        "verdict": "converged, diverged or max-iter",
        "iterations": "trace length",
        "u_rms_final": "l2 norm of the Fourier coefficients of u at the final time",
        "b_rms_final": "same for b",
    },
    "blocks.csv": {
        "j": "dyadic block index",
        "weighted_norm": "2^(s j) ||f * phi_j||_{L^p}",
    },
    "battery.csv": {
        "name": "inequality identifier",
        "fitted_c": "largest LHS/RHS ratio on the calibration half",
        "heldout_max": "largest ratio on the held-out half",
        "margin": "allowed factor over fitted_c",
        "violations": "held-out samples above margin * fitted_c plus degenerate samples",
        "verdict": "PASS or FAIL",
    },
    "smallness.csv": {
        "norm": "controlled norm (see trace.csv)",
        "first": "value at m = 1",
        "sup": "sup over m",
        "argmax_m": "iteration attaining the sup",
        "sup_over_first": "sup / first",
        "flagged": "sup exceeds twice the m = 1 value",
    },
}


# ---------------------------------------------------------------------------
# helpers


class Emitter:
    """Collects output files for the manifest; the manifest itself is written last."""

    def __init__(self, out_dir, command, cfg_snapshot, seed, threads):
        self.out_dir = out_dir
        self.files = []
        self.manifest = {
            "tool": "hallmild",
            "version": __version__,
            "command": command,
            "config": cfg_snapshot,
            "seed": seed,
            "threads": threads,
            "kernel_backend": _kernels.BACKEND,
            "timings": {},
            "complete": False,
        }
        os.makedirs(out_dir, exist_ok=True)
        stale = os.path.join(out_dir, "manifest.json")
        if os.path.exists(stale):
            os.unlink(stale)

    def path(self, name):
        return os.path.join(self.out_dir, name)

    def text(self, name, text):
        atomic_write_text(self.path(name), text)
        self.files.append(name)

    def json(self, name, obj):
        self.text(name, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")

    def csv(self, name, columns, rows):
        buf = io.StringIO()
        w = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\r\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(row.get(c)) for c in columns])
        self.text(name, buf.getvalue())

    def field(self, name, f, meta=None):
        write_field(self.path(name), f, meta)
        self.files.extend([name, name + ".json"])

    def finish(self, **extra):
        self.manifest.update(extra)
        self.manifest["files"] = [
            {"path": n, "sha256": sha256_file(self.path(n)), "bytes": os.path.getsize(self.path(n))} for n in self.files
        ]
        self.manifest["complete"] = True
        body = json.dumps(self.manifest, indent=2, sort_keys=True, default=_json_default) + "\n"
        atomic_write_text(self.path("manifest.json"), body)


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        return repr(v)
    return v


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(obj):
    """Replace nan/inf by strings so JSON stays standard."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def _threads(args):
    n = args.threads
    if n is None:
        env = os.environ.get("HALLMILD_THREADS")
        if env:
            try:
                n = int(env)
            except ValueError:
                raise ConfigError(f"HALLMILD_THREADS must be an integer, got {env!r}")
    n = n or 1
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    set_fft_workers(n)
    _kernels.set_threads(n)
    return n


def _load(args):
    cfg = load_config(args.config) if args.config else defaults()
    if args.seed is not None:
        cfg.values["data"]["seed"] = args.seed
    if args.out is not None:
        cfg.values["output"]["dir"] = args.out
    return cfg


def _data(cfg, amplitude=None):
    d = cfg["data"]
    return picard.make_initial_data(
        cfg.solver_config().grid,
        d["family"],
        d["amplitude"] if amplitude is None else amplitude,
        seed=d["seed"],
        band=(d["band_lo"], d["band_hi"]),
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_run(args):
    cfg = _load(args)
    threads = _threads(args)
    sc = cfg.solver_config()
    em = Emitter(cfg.out_dir, "run", cfg.snapshot(), cfg.seed, threads)
    t0 = time.perf_counter()
    data = _data(cfg)
    result = picard.run(sc, data)
    small = picard.smallness_report(result.trace)
    em.csv("trace.csv", TRACE_FIELDS, result.trace.to_records())
    em.csv("smallness.csv", list(OUTPUTS["smallness.csv"]), [dict(norm=k, **v) for k, v in small.items()])
    summary = {
        "verdict": result.verdict,
        "iterations": result.iterations,
        "mean_ratio": result.trace.mean_ratio(),
        "final_triple": result.trace.rows[-1].triple,
        "band": list(result.trace.band),
        "max_divergence": float(result.trace.column("divergence").max()),
        "smallness": small,
    }
    em.json("run.json", _clean(summary))
    if result.verdict == "converged":
        meta = {"family": data.family, "amplitude": data.amplitude, "seed": cfg.seed}
        em.field("u.hmf", result.u, dict(meta, name="u"))
        em.field("b.hmf", result.b, dict(meta, name="b"))
    em.manifest["timings"] = {"total_seconds": time.perf_counter() - t0, "per_iteration": [r.seconds for r in result.trace.rows]}
    em.finish(verdict=result.verdict, lorentz_identity=LORENTZ_IDENTITY)
    print(f"verdict={result.verdict} iterations={result.iterations} mean_ratio={_cell(result.trace.mean_ratio())}")
    return VERDICT_EXIT[result.verdict]


def cmd_sweep(args):
    cfg = _load(args)
    threads = _threads(args)
    amps = args.amplitudes if args.amplitudes is not None else cfg["sweep"]["amplitudes"]
    rounds = args.refine if args.refine is not None else cfg["sweep"]["refine_rounds"]
    if len(set(amps)) < 3:
        raise ConfigError("a sweep needs at least three distinct amplitudes")
    em = Emitter(cfg.out_dir, "sweep", cfg.snapshot(), cfg.seed, threads)
    t0 = time.perf_counter()
    rep = picard.amplitude_sweep(cfg.solver_config(), amps, cfg["data"]["family"], cfg.seed, refine_rounds=rounds)
    em.csv("sweep.csv", list(OUTPUTS["sweep.csv"]), rep["rows"])
    em.json("sweep.json", _clean(rep))
    if args.box_lengths:
        rows = picard.box_size_study(
            cfg.solver_config(), args.box_lengths, cfg["data"]["family"], cfg["data"]["amplitude"], cfg.seed
        )
        em.csv("box_study.csv", list(OUTPUTS["box_study.csv"]), rows)
    em.manifest["timings"] = {"total_seconds": time.perf_counter() - t0}
    em.finish(verdict="complete")
    print(f"a_star={rep['a_star']} monotone={rep['monotone']}")
    return EXIT_OK


def cmd_norms(args):
    cfg = _load(args)
    threads = _threads(args)
    nc = dict(cfg["norms"])
    for key in ("s", "p", "q", "flavor"):
        v = getattr(args, key, None)
        if v is not None:
            nc[key] = v
    f = read_field(args.field)
    spec = besov.BesovSpec(nc["s"], nc["p"], nc["q"], nc["flavor"])
    if isinstance(f, SpaceTimeField):
        if spec.flavor != besov.ANISOTROPIC:
            raise ConfigError("space-time field files need flavor anisotropic-spacetime")
        rep = besov.besov_norm_anisotropic(f, spec, nc["ext_order"])
    else:
        if spec.flavor != besov.ISOTROPIC:
            raise ConfigError("spatial field files need flavor isotropic-spatial")
        rep = besov.besov_norm_spatial(f, spec)
    em = Emitter(cfg.out_dir, "norms", cfg.snapshot(), cfg.seed, threads)
    em.json("norms.json", _clean(dict(rep.to_dict(), field=os.path.basename(args.field))))
    em.csv("blocks.csv", ["j", "weighted_norm"], [{"j": j, "weighted_norm": v} for j, v in rep.per_block.items()])
    em.finish(verdict="complete")
    print(f"total={rep.total!r} label={rep.label} band={rep.truncation_range}")
    return EXIT_OK


def cmd_verify(args):
    cfg = _load(args)
    threads = _threads(args)
    b = cfg["battery"]
    em = Emitter(cfg.out_dir, "verify", cfg.snapshot(), cfg.seed, threads)
    t0 = time.perf_counter()
    corpus = battery.make_corpus(b["samples"], seed=cfg.seed, n=b["n"], n_t=b["n_t"], t_final=b["t_final"])
    rep = battery.estimate_battery(corpus, margin=b["margin"])
    d = rep.to_dict()
    em.json("battery.json", _clean(d))
    em.csv("battery.csv", list(OUTPUTS["battery.csv"]), list(d["inequalities"].values()))
    em.manifest["timings"] = {"total_seconds": time.perf_counter() - t0}
    em.finish(verdict="PASS" if rep.passed else "FAIL")
    for w in rep.warnings:
        print(f"warning: {w}")
    for name, r in d["inequalities"].items():
        print(f"{r['verdict']} {name} c={r['fitted_c']:.4g} heldout={r['heldout_max']:.4g}")
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_reference(args):
    cfg = _load(args)
    threads = _threads(args)
    ic = cfg.imex_config()
    if args.field_u or args.field_b:
        if not (args.field_u and args.field_b):
            raise ConfigError("--field-u and --field-b must be given together")
        fu, fb = read_field(args.field_u), read_field(args.field_b)
        u0 = fu.slice(0) if isinstance(fu, SpaceTimeField) else fu
        b0 = fb.slice(0) if isinstance(fb, SpaceTimeField) else fb
        data = picard.InitialData(u0, b0)
    else:
        data = _data(cfg)
    em = Emitter(cfg.out_dir, "reference", cfg.snapshot(), cfg.seed, threads)
    t0 = time.perf_counter()
    t_final = cfg["time"]["t_final"]
    u, b = reference.imex_solve(data, t_final, ic.dt, ic.scheme, ic.hall)
    uh, bh = reference.imex_solve(data, t_final, ic.dt / 2, ic.scheme, ic.hall)
    order = 2 if ic.scheme == "IMEX-CNAB2" else 1
    envelope = reference._rel_l2(data.grid, (uh, bh), (u, b)) * 2**order / (2**order - 1)
    em.field("u_final.hmf", SpectralVectorField(data.grid, u), {"t": t_final, "name": "u"})
    em.field("b_final.hmf", SpectralVectorField(data.grid, b), {"t": t_final, "name": "b"})
    em.json("reference.json", _clean({"t": t_final, "dt": ic.dt, "scheme": ic.scheme, "dt_envelope": envelope}))
    em.manifest["timings"] = {"total_seconds": time.perf_counter() - t0}
    em.finish(verdict="complete")
    print(f"t={t_final} dt={ic.dt} dt_envelope={envelope:.3e}")
    return EXIT_OK


def cmd_compare(args):
    cfg = _load(args)
    threads = _threads(args)
    mu, mb = read_field(os.path.join(args.mild, "u.hmf")), read_field(os.path.join(args.mild, "b.hmf"))
    ru, rb = read_field(os.path.join(args.ref, "u_final.hmf")), read_field(os.path.join(args.ref, "b_final.hmf"))
    with open(os.path.join(args.ref, "reference.json"), encoding="utf-8") as fh:
        ref = json.load(fh)
    with open(os.path.join(args.mild, "run.json"), encoding="utf-8") as fh:
        run = json.load(fh)
    if not isinstance(mu, SpaceTimeField) or mu.grid != ru.grid:
        raise ConfigError("mismatched configuration: mild and reference grids differ")
    scale = run["smallness"]["u_crit"]["first"] + run["smallness"]["b_crit"]["first"]
    quad_tol = run["final_triple"] / scale if scale > 0 else 0.0
    rep = reference.cross_validate((mu, mb), (ru.coeffs, rb.coeffs), ref["t"], ref["dt_envelope"], quad_tol)
    em = Emitter(cfg.out_dir, "compare", cfg.snapshot(), cfg.seed, threads)
    em.json("compare.json", _clean(rep))
    em.finish(verdict="PASS" if rep["passed"] else "FAIL")
    print(f"rel_l2_gap={rep['rel_l2_gap']:.3e} tol_model={rep['tol_model']:.3e} {'PASS' if rep['passed'] else 'FAIL'}")
    return EXIT_OK if rep["passed"] else EXIT_FAILED


def describe_output():
    lines = []
    for name, cols in OUTPUTS.items():
        lines.append(name)
        for col, desc in cols.items():
            lines.append(f"  {col}: {desc}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------


def _numbers(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="seed for random data families and corpora")
    common.add_argument("--threads", type=int, help="worker threads (falls back to HALLMILD_THREADS)")
    common.add_argument("--out", help="output directory")

    p = _Parser(prog="hallmild", description=__doc__.splitlines()[0])
    p.add_argument("--describe-output", action="store_true", help="document every CSV column and exit")
    p.add_argument("--version", action="version", version=f"hallmild {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("run", parents=[common], help="Picard iteration to a verdict")
    s.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep", parents=[common], help="amplitude sweep for the convergence threshold")
    s.add_argument("--amplitudes", type=_numbers)
    s.add_argument("--refine", type=int, help="extra bisection rounds on the threshold bracket")
    s.add_argument("--box-lengths", type=_numbers, help="also rerun the configured amplitude on these box sides")
    s.set_defaults(func=cmd_sweep)
    s = sub.add_parser("norms", parents=[common], help="Besov report for a field file")
    s.add_argument("field")
    s.add_argument("--s", type=float)
    s.add_argument("--p", type=float)
    s.add_argument("--q", type=float)
    s.add_argument("--flavor", choices=(besov.ISOTROPIC, besov.ANISOTROPIC))
    s.set_defaults(func=cmd_norms)
    s = sub.add_parser("verify", parents=[common], help="inequality battery")
    s.set_defaults(func=cmd_verify)
    s = sub.add_parser("reference", parents=[common], help="IMEX reference run")
    s.add_argument("--field-u")
    s.add_argument("--field-b")
    s.set_defaults(func=cmd_reference)
    s = sub.add_parser("compare", parents=[common], help="mild vs reference comparison")
    s.add_argument("mild", help="output directory of a converged run")
    s.add_argument("ref", help="output directory of a reference run")
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.describe_output:
        print(describe_output())
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FieldFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
