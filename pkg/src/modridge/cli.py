"""Ridge, lattice and diagnostics analysis of modular-multiplication shot data.

Option precedence is flag > ``--config`` JSON file > built-in default. The
default seed can be overridden with the ``MODRIDGE_SEED`` environment
variable. Exit codes: 0 success, 2 input error, 3 internal numeric error.
"""
import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .core import DEFAULT_KEYS, DatasetFormatError, ExperimentSpec, load_dataset, save_dataset
from .diagnostics import ablation, uniformity
from .report import (
    SCHEMA_VERSION,
    ReportNumericError,
    SuiteConfig,
    SuiteStageError,
    dumps,
    end_to_end_demo,
    keyrec_payload,
    lattice_payload,
    ridge_payload,
    run_suite,
    write_text_atomic,
)
from .ridge_metrics import write_heatmaps
from .simulate import InfeasibleTargetError, NoiseModel, calibrate_lambda, sample_dataset
from .stats import DEFAULT_BUDGETS, DEFAULT_N_PERM, permutation_test, reliability_sweep

log = logging.getLogger("modridge")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3
SEED_ENV = "MODRIDGE_SEED"

DEFAULTS = {
    "n": 4,
    "keys": list(DEFAULT_KEYS),
    "shots_per_key": 1024,
    "q": 0.0,
    "kmax": 3,
    "bootstrap": 2000,
    "replicates": 100,
    "budgets": list(DEFAULT_BUDGETS),
    "bins": 10,
    "threads": 1,
    "n_perm_accuracy": DEFAULT_N_PERM["accuracy"],
    "n_perm_cps": DEFAULT_N_PERM["cps"],
}


class InputError(ValueError):
    pass


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


class Options:
    """Resolve an option across flags, config file and defaults."""

    def __init__(self, args):
        self.args = args
        self.config = {}
        if getattr(args, "config", None):
            try:
                self.config = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise InputError(f"cannot read config {args.config}: {exc}") from None
            if not isinstance(self.config, dict):
                raise InputError("config file must hold a JSON object")

    def __getitem__(self, name):
        value = getattr(self.args, name, None)
        if value is not None:
            return value
        if name in self.config:
            return self.config[name]
        if name == "seed":
            return int(os.environ.get(SEED_ENV, "0"))
        return DEFAULTS.get(name)

    def spec(self, shots_per_key=None):
        return ExperimentSpec(
            n=int(self["n"]),
            keys=tuple(self["keys"]),
            shots_per_key=int(shots_per_key or self["shots_per_key"]),
        )


def _emit(payload, path):
    text = dumps(payload)
    if path:
        write_text_atomic(path, text)
    else:
        sys.stdout.write(text)


def _header(command, opts, dataset=None):
    out = {"schema_version": SCHEMA_VERSION, "command": command, "tool_version": __version__}
    if dataset is not None:
        out["spec"] = {**dataset.spec.as_dict(), "group_sizes": dataset.group_sizes.tolist()}
    return out


def _load(opts):
    path = opts["in"]
    if not path:
        raise InputError("--in is required")
    return load_dataset(path, opts.spec())


# --- verbs ---------------------------------------------------------------------------

def cmd_simulate(opts):
    spec = opts.spec()
    bias = opts["bias"]
    q = float(opts["q"])
    if opts["calibrate_p_hit"] is not None:
        lam = calibrate_lambda(float(opts["calibrate_p_hit"]), q, spec, bias)
    elif opts["lam"] is not None:
        lam = float(opts["lam"])
    else:
        raise InputError("one of --lambda or --calibrate-p-hit is required")
    noise = NoiseModel(lam, q, tuple(bias) if bias else None)
    dataset = sample_dataset(spec, noise, int(opts["seed"]))
    if not opts["out"]:
        raise InputError("--out is required")
    save_dataset(dataset, opts["out"])
    log.info("wrote %d shots to %s (lambda=%.6g)", len(dataset), opts["out"], lam)
    return EXIT_OK


def cmd_metrics(opts):
    dataset = _load(opts)
    seed = int(opts["seed"])
    payload = _header("metrics", opts, dataset)
    payload["ridge"] = ridge_payload(dataset, int(opts["bootstrap"]), seed, int(opts["threads"]))
    payload.update(keyrec_payload(dataset, seed))
    if opts["heatmaps"]:
        write_heatmaps(dataset, opts["heatmaps"])
    _emit(payload, opts["report"])
    return EXIT_OK


def cmd_mobius(opts):
    dataset = _load(opts)
    slices = {"slice": opts["keys_slice"]} if opts["keys_slice"] else {}
    payload = _header("mobius", opts, dataset)
    payload["lattice"] = lattice_payload(dataset, int(opts["kmax"]), slices)
    _emit(payload, opts["report"])
    return EXIT_OK


def cmd_permtest(opts):
    dataset = _load(opts)
    stat = opts["statistic"]
    n_perm = opts["n_perm"] or DEFAULT_N_PERM[stat]
    result = permutation_test(dataset, stat, int(n_perm), int(opts["seed"]), int(opts["kmax"]), int(opts["threads"]))
    payload = _header("permtest", opts, dataset)
    payload["permutation"] = result.as_dict()
    _emit(payload, opts["report"])
    return EXIT_OK


def cmd_reliability(opts):
    dataset = _load(opts)
    points = reliability_sweep(
        dataset, opts["budgets"], int(opts["replicates"]), int(opts["kmax"]), int(opts["seed"]), int(opts["threads"])
    )
    payload = _header("reliability", opts, dataset)
    payload["reliability"] = [p.as_dict() for p in points]
    _emit(payload, opts["report"])
    return EXIT_OK


def cmd_uniformity(opts):
    dataset = _load(opts)
    payload = _header("uniformity", opts, dataset)
    payload["uniformity"] = uniformity(dataset).as_dict()
    _emit(payload, opts["report"])
    return EXIT_OK


def cmd_ablation(opts):
    dataset = _load(opts)
    payload = _header("ablation", opts, dataset)
    payload["ablation"] = ablation(dataset, int(opts["seed"]), int(opts["bins"])).as_dict()
    _emit(payload, opts["report"])
    return EXIT_OK


def _suite_config(opts):
    return SuiteConfig(
        seed=int(opts["seed"]),
        k_max=int(opts["kmax"]),
        bootstrap_replicates=int(opts["bootstrap"]),
        n_perm_accuracy=int(opts["n_perm_accuracy"]),
        n_perm_cps=int(opts["n_perm_cps"]),
        budgets=tuple(opts["budgets"]) if opts["budgets"] != DEFAULTS["budgets"] else None,
        reliability_replicates=int(opts["replicates"]),
        bins=int(opts["bins"]),
        threads=int(opts["threads"]),
    )


def cmd_suite(opts):
    if not opts["in"]:
        raise InputError("--in is required")
    report = run_suite(opts["in"], _suite_config(opts), opts.spec(), opts["report"])
    if not opts["report"]:
        sys.stdout.write(report.to_json())
    return EXIT_OK


def cmd_demo(opts):
    report = end_to_end_demo(
        int(opts["seed"]), _suite_config(opts), report_path=opts["report"], shots_path=opts["shots_out"]
    )
    if not opts["report"]:
        sys.stdout.write(report.to_json())
    return EXIT_OK


# --- parser --------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="modridge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with option defaults")
    common.add_argument("--n", type=int, help="register width in bits (default 4)")
    common.add_argument("--keys", type=_int_list, help="comma-separated key list")
    common.add_argument("--seed", type=int, help=f"seed (default ${SEED_ENV} or 0)")
    common.add_argument("--threads", type=int, help="worker threads; output does not depend on it")

    def add(name, fn, help_text, needs_input=True, report=True):
        p = sub.add_parser(name, parents=[common], help=help_text)
        if needs_input:
            p.add_argument("--in", dest="in", metavar="SHOTS", help="shot file")
        if report:
            p.add_argument("--report", help="report path (default: stdout)")
        p.set_defaults(func=fn)
        return p

    p = add("simulate", cmd_simulate, "generate a synthetic shot file", needs_input=False, report=False)
    p.add_argument("--shots-per-key", type=int)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--lambda", dest="lam", type=float, help="ridge mixture weight")
    grp.add_argument("--calibrate-p-hit", type=float, help="solve lambda for this pooled hit probability")
    p.add_argument("--q", type=float, help="per-bit flip probability")
    p.add_argument("--bias", type=_float_list, help="comma-separated per-bit one-probability offsets")
    p.add_argument("--out", help="output shot file")

    p = add("metrics", cmd_metrics, "ridge statistics and key recovery")
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates for the contrast CI")
    p.add_argument("--heatmaps", help="directory for per-key count grids")

    p = add("mobius", cmd_mobius, "information lattice and Möbius decomposition")
    p.add_argument("--kmax", type=int)
    p.add_argument("--keys-slice", type=_int_list, help="restrict to these keys")

    p = add("permtest", cmd_permtest, "label-shuffle permutation test")
    p.add_argument("--statistic", choices=sorted(DEFAULT_N_PERM), default="accuracy")
    p.add_argument("--n-perm", type=int)
    p.add_argument("--kmax", type=int)

    p = add("reliability", cmd_reliability, "bootstrap reliability frontier")
    p.add_argument("--budgets", type=_int_list)
    p.add_argument("--replicates", type=int)
    p.add_argument("--kmax", type=int)

    p = add("uniformity", cmd_uniformity, "marginal and covariance diagnostics")
    p.add_argument("--bins", type=int, help="accepted for symmetry with ablation; unused")

    p = add("ablation", cmd_ablation, "representation ablation with calibration")
    p.add_argument("--bins", type=int)

    for name, fn, help_text, needs_input in (
        ("suite", cmd_suite, "run every stage and write the consolidated report", True),
        ("demo", cmd_demo, "calibrate, simulate and run the suite end to end", False),
    ):
        p = add(name, fn, help_text, needs_input=needs_input)
        p.add_argument("--kmax", type=int)
        p.add_argument("--bootstrap", type=int)
        p.add_argument("--replicates", type=int)
        p.add_argument("--budgets", type=_int_list)
        p.add_argument("--bins", type=int)
        p.add_argument("--n-perm-accuracy", type=int)
        p.add_argument("--n-perm-cps", type=int)
        if name == "demo":
            p.add_argument("--shots-out", help="also write the simulated shot file")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(Options(args))
    except SuiteStageError as exc:
        log.error("%s", exc)
        return EXIT_INPUT if isinstance(exc.cause, (ValueError, OSError)) else EXIT_NUMERIC
    except (InputError, DatasetFormatError, InfeasibleTargetError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    except (ReportNumericError, ArithmeticError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
