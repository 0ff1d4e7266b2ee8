"""Suite orchestration and the consolidated JSON evaluation report.

Seed discipline: the suite takes one master seed and hands each stochastic
stage ``derive_seed(master, stage)``. The derived seeds are written to the
report, and calling the stage function alone with its seed reproduces the
suite's value for that stage.
"""
import hashlib
import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import derive_seed
from .core import ExperimentSpec, load_dataset, save_dataset
from .diagnostics import ablation, uniformity
from .infolattice import compute_g, key_slice, mobius_invert, positive_mass, register_tag
from .keyrec import dictionary_recovery, per_shot_accuracy
from .ridge_metrics import ridge_stats
from .simulate import NoiseModel, calibrate_lambda, sample_dataset
from .stats import DEFAULT_BUDGETS, permutation_test, reliability_sweep

__all__ = [
    "SCHEMA_VERSION",
    "STAGES",
    "SuiteConfig",
    "SuiteReport",
    "SuiteStageError",
    "ReportNumericError",
    "stage_seeds",
    "run_suite",
    "run_suite_dataset",
    "end_to_end_demo",
    "write_text_atomic",
    "dumps",
]

SCHEMA_VERSION = 1
STAGES = ("metrics", "keyrec", "infolattice", "stats", "diagnostics")
SEEDED = ("ridge_bootstrap", "keyrec", "permutation_accuracy", "permutation_cps", "reliability", "ablation")
DEMO_TARGET_P_HIT = 0.1830


class ReportNumericError(ArithmeticError):
    """A report field came out non-finite."""


class SuiteStageError(RuntimeError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage {stage!r} failed: {cause}")


@dataclass
class SuiteConfig:
    seed: int = 0
    k_max: int = 3
    bootstrap_replicates: int = 2000
    n_perm_accuracy: int = 500
    n_perm_cps: int = 200
    budgets: tuple = None  # None: defaults that fit the smallest key group
    reliability_replicates: int = 100
    bins: int = 10
    threads: int = 1
    key_slices: dict = None  # name -> keys; None: an "odd" slice when useful

    @classmethod
    def from_mapping(cls, mapping):
        names = {f.name for f in fields(cls)}
        unknown = set(mapping) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**mapping)


def stage_seeds(master):
    return {name: derive_seed(master, name) for name in SEEDED}


def _finite(obj, path="report"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _finite(v, f"{path}[{i}]")
    elif isinstance(obj, float) and not np.isfinite(obj):
        raise ReportNumericError(f"non-finite value at {path}")


def _plain(obj):
    """Convert numpy scalars/arrays and tuples into JSON-native values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(payload):
    return json.dumps(_plain(payload), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_text_atomic(path, text):
    """Write via a temp file + rename so a failed run never leaves a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class SuiteReport:
    schema_version: int
    spec: dict
    ridge: dict
    key_recovery: dict
    lattice: dict
    permutation: dict
    reliability: list
    uniformity: dict
    ablation: dict
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in fields(self):
            setattr(self, f.name, _plain(getattr(self, f.name)))

    def to_json(self):
        payload = _plain(asdict(self))
        _finite(payload)
        return dumps(payload)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        missing = {f.name for f in fields(cls)} - set(data)
        if missing:
            raise ValueError(f"report is missing fields {sorted(missing)}")
        if data["schema_version"] != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {data['schema_version']}")
        return cls(**{f.name: data[f.name] for f in fields(cls)})


# --- stage payloads (also used by the single-purpose CLI verbs) --------------------

def ridge_payload(dataset, B, seed, threads=1):
    return ridge_stats(dataset, B=B, seed=seed, n_jobs=threads).as_dict()


def keyrec_payload(dataset, seed):
    acc = per_shot_accuracy(dataset, seed)
    rec = dictionary_recovery(dataset)
    return {
        "key_accuracy": acc.accuracy,
        "key_accuracy_ci": list(acc.ci),
        "key_accuracy_correct": acc.correct,
        "chance": acc.chance,
        "dictionary_predictions": {str(k): v for k, v in rec.predictions.items()},
        "dictionary_accuracy": rec.accuracy,
    }


def _mass_payload(f, n):
    return {str(k): m.as_dict() for k, m in positive_mass(f, n).items()}


def lattice_payload(dataset, k_max=3, key_slices=None):
    n = dataset.spec.n
    g = compute_g(dataset, k_max)
    f = mobius_invert(g)
    mass = positive_mass(f, n)
    order = min(3, k_max)
    table = [
        {"mask": m, "order": bin(m).count("1"), "g": g[m], "f": f[m], "tag": register_tag(m, n)}
        for m in f.masks()
    ]
    slices = {}
    for name, keys in (key_slices or {}).items():
        sub = key_slice(dataset, keys)
        sub_f = mobius_invert(compute_g(sub, k_max))
        slices[name] = {
            "keys": list(sub.spec.keys),
            "cps": positive_mass(sub_f, n)[order].M_plus,
            "mass": _mass_payload(sub_f, n),
        }
    return {
        "unit": "bits",
        "k_max": k_max,
        "cps_order": order,
        "cps": mass[order].M_plus,
        "mass": {str(k): m.as_dict() for k, m in mass.items()},
        "f_table": table,
        "key_slices": slices,
    }


def default_key_slices(spec):
    odd = [k for k in spec.keys if k % 2 == 1]
    if 2 <= len(odd) < len(spec.keys):
        return {"odd": odd}
    return {}


def default_budgets(dataset):
    smallest = int(dataset.group_sizes.min())
    budgets = [b for b in DEFAULT_BUDGETS if b <= smallest]
    return budgets or [smallest]


def run_suite_dataset(dataset, config=None, input_bytes=None, input_name=None, extra_provenance=None):
    """Run every stage on an in-memory dataset and assemble the report."""
    config = config or SuiteConfig()
    seeds = stage_seeds(config.seed)
    threads = config.threads
    slices = default_key_slices(dataset.spec) if config.key_slices is None else config.key_slices
    budgets = list(config.budgets) if config.budgets else default_budgets(dataset)

    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise SuiteStageError(name, exc) from exc

    ridge = stage("metrics", lambda: ridge_payload(dataset, config.bootstrap_replicates, seeds["ridge_bootstrap"], threads))
    keyrec = stage("keyrec", lambda: keyrec_payload(dataset, seeds["keyrec"]))
    lattice = stage("infolattice", lambda: lattice_payload(dataset, config.k_max, slices))

    def run_stats():
        perm = {
            "accuracy": permutation_test(
                dataset, "accuracy", config.n_perm_accuracy, seeds["permutation_accuracy"], config.k_max, threads
            ).as_dict(),
            "cps": permutation_test(
                dataset, "cps", config.n_perm_cps, seeds["permutation_cps"], config.k_max, threads
            ).as_dict(),
        }
        rel = reliability_sweep(
            dataset, budgets, config.reliability_replicates, config.k_max, seeds["reliability"], threads
        )
        return perm, [p.as_dict() for p in rel]

    perm, rel = stage("stats", run_stats)
    uni, abl = stage(
        "diagnostics",
        lambda: (uniformity(dataset).as_dict(), ablation(dataset, seeds["ablation"], config.bins).as_dict()),
    )

    if input_bytes is None:
        input_bytes = _shot_bytes(dataset)
    provenance = {
        "tool": "modridge",
        "tool_version": __version__,
        "master_seed": config.seed,
        "stage_seeds": seeds,
        "input_sha256": hashlib.sha256(input_bytes).hexdigest(),
        "input_name": input_name,
        "config": {k: v for k, v in asdict(config).items() if k != "threads"},
    }
    provenance["config"]["budgets"] = budgets
    provenance["config"]["key_slices"] = slices
    if extra_provenance:
        provenance.update(extra_provenance)
    return SuiteReport(
        schema_version=SCHEMA_VERSION,
        spec={**dataset.spec.as_dict(), "group_sizes": dataset.group_sizes.tolist(), "total_shots": len(dataset)},
        ridge=ridge,
        key_recovery=keyrec,
        lattice=lattice,
        permutation=perm,
        reliability=rel,
        uniformity=uni,
        ablation=abl,
        provenance=provenance,
    )


def _shot_bytes(dataset):
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "shots.csv"
        save_dataset(dataset, path)
        return path.read_bytes()


def run_suite(shot_path, config=None, spec=None, report_path=None):
    """Load a shot file, run the suite, and write the report if asked.

    The report is serialised before anything touches disk, so a failure in
    any stage leaves no report file behind.
    """
    shot_path = Path(shot_path)
    raw = shot_path.read_bytes()
    dataset = load_dataset(shot_path, spec or ExperimentSpec())
    report = run_suite_dataset(dataset, config, input_bytes=raw, input_name=shot_path.name)
    text = report.to_json()
    if report_path is not None:
        write_text_atomic(report_path, text)
    return report


def end_to_end_demo(seed=0, config=None, report_path=None, shots_path=None, target_p_hit=DEMO_TARGET_P_HIT):
    """Calibrate the mixture weight to ``target_p_hit``, simulate, run the suite."""
    spec = ExperimentSpec()
    lam = calibrate_lambda(target_p_hit, 0.0, spec)
    noise = NoiseModel(lam, 0.0)
    sim_seed = derive_seed(seed, "simulate")
    dataset = sample_dataset(spec, noise, sim_seed)
    config = config or SuiteConfig(seed=seed)
    raw = _shot_bytes(dataset)
    report = run_suite_dataset(
        dataset,
        config,
        input_bytes=raw,
        input_name="demo",
        extra_provenance={
            "simulation": {"target_p_hit": target_p_hit, "noise": noise.as_dict(), "seed": sim_seed}
        },
    )
    text = report.to_json()
    if shots_path is not None:
        write_text_atomic(shots_path, raw.decode())
    if report_path is not None:
        write_text_atomic(report_path, text)
    return report
