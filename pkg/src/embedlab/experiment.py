"""Configuration-driven experiment runner.

A run is described by a single JSON record (model, matrix shape, test set,
check names, trials, seeds, budgets, constants, output).  Each named check
maps to exactly one module operation; trial i of a check draws all of its
randomness from a substream derived from (master_seed, check_name, i), so
changing one check's trial count never perturbs another check's draws and
reruns are byte-identical.

Report rows are written in (check, trial) order with the schema
``check,trial,seed,pass,values`` where values is a JSON object; the header
is preceded by a schema-version comment line.  Wall-clock timings live in
the run manifest, not in the data output.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import decoupling as dc
from . import distortion as dist
from . import set_geometry as sg
from . import sparse_overlap as so
from .embedding_core import build_embedding, column_norm_deviation, gram, random_signs, randomize_columns
from .errors import ConfigurationError
from .rng import derive_seed, fork, substream
from .vector_models import (
    RandomVectorModel,
    estimate_suitability,
    estimate_thin_shell,
)

SCHEMA_VERSION = "embedlab.report.v1"
ARTIFACT_VERSION = "0.1.0"

CHECK_NAMES = (
    "thin_shell",
    "suitability",
    "distortion_finite",
    "distortion_sphere",
    "singular_values",
    "overlap_fit",
    "decoupling_identity",
    "bilinearity",
    "bernoulli_moments",
    "chain_diagnostics",
    "dimension_reduction",
    "self_bounding",
    "order_statistic_tail",
)

DEFAULT_CONSTANTS = {
    "gamma": 0.01,
    "alpha": 2.0,
    "beta": 1.0,
    "u": 3.0,
    "c": 1.0,
    "c1": 1.0,
    "c_beta": 1.0,
    "c_bern": 10.0,
    "c3": 1.0,
    "L": 2.0,
    "slack": 3.0,
    "p": 8,
    "s0": 1,
    "s1": 3,
    "recursion_depth": 2,
    "thin_shell_trials": 200,
    "tail_trials": 1000,
    "tail_collection": 8,
    "primary_bound": "",
}


@dataclass(frozen=True)
class Budgets:
    mc_samples: int = 4000
    exhaustive_limit: int = 10**6
    restarts: int = 50
    selector_samples: int = 256
    swap_passes: int = 30


@dataclass(frozen=True)
class OutputSpec:
    format: str = "csv"
    path: str | None = None

    def __post_init__(self) -> None:
        if self.format not in ("csv", "json"):
            raise ConfigurationError(f"output.format must be csv or json, got {self.format!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    model: RandomVectorModel
    n: int
    m: int
    set_spec: dict | None
    checks: tuple[str, ...]
    trials: int
    master_seed: int
    budgets: Budgets
    constants: dict
    output: OutputSpec
    raw: dict = field(repr=False, default_factory=dict)

    def config_hash(self) -> str:
        canonical = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _require(record: dict, key: str, path: str):
    if key not in record:
        raise ConfigurationError(f"{path}.{key}: required field missing")
    return record[key]


def parse_config(record: dict) -> ExperimentConfig:
    """Validate and resolve a configuration record (see README for the schema)."""
    if not isinstance(record, dict):
        raise ConfigurationError("config: expected a JSON object")
    matrix = _require(record, "matrix", "config")
    n = int(_require(matrix, "n", "config.matrix"))
    m = int(_require(matrix, "m", "config.matrix"))
    model_spec = dict(_require(record, "model", "config"))
    model_spec.setdefault("dim", m)
    if int(model_spec["dim"]) != m:
        raise ConfigurationError(
            f"config.model.dim: {model_spec['dim']} conflicts with config.matrix.m = {m}"
        )
    try:
        model = RandomVectorModel(
            kind=str(model_spec.get("kind", "gaussian")),
            dim=int(model_spec["dim"]),
            dof=model_spec.get("dof"),
            seed=int(model_spec.get("seed", 0)),
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"config.model: {exc}") from exc

    checks_raw = record.get("checks", [])
    checks = []
    for i, name in enumerate(checks_raw):
        if name not in CHECK_NAMES:
            raise ConfigurationError(
                f"config.checks[{i}]: unknown check {name!r}; expected one of {CHECK_NAMES}"
            )
        checks.append(name)

    budgets_spec = record.get("budgets", {})
    unknown = set(budgets_spec) - {f.name for f in Budgets.__dataclass_fields__.values()}
    if unknown:
        raise ConfigurationError(f"config.budgets: unknown fields {sorted(unknown)}")
    budgets = Budgets(**{k: int(v) for k, v in budgets_spec.items()})

    constants = dict(DEFAULT_CONSTANTS)
    constants.update(record.get("constants", {}))

    output_spec = record.get("output", {})
    output = OutputSpec(
        format=output_spec.get("format", "csv"), path=output_spec.get("path")
    )

    trials = int(record.get("trials", 1))
    if trials < 0:
        raise ConfigurationError("config.trials: must be nonnegative")

    return ExperimentConfig(
        model=model,
        n=n,
        m=m,
        set_spec=record.get("set"),
        checks=tuple(checks),
        trials=trials,
        master_seed=int(record.get("master_seed", 0)),
        budgets=budgets,
        constants=constants,
        output=output,
        raw=record,
    )


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(json.load(fh))


def resolve_set(cfg: ExperimentConfig, stream: np.random.Generator) -> sg.SetDescriptor:
    """Materialize the configured test set; random clouds are drawn per trial."""
    spec = cfg.set_spec
    if spec is None:
        raise ConfigurationError("config.set: required by the selected checks")
    variant = spec.get("variant")
    if variant == "unit_sphere":
        return sg.UnitSphere(cfg.n)
    if variant == "sparse_sphere":
        return sg.SparseSphere(
            indices=np.asarray(_require(spec, "indices", "config.set")),
            ell=int(_require(spec, "ell", "config.set")),
            n=cfg.n,
        )
    if variant == "ellipsoid":
        return sg.Ellipsoid(semi_axes=np.asarray(_require(spec, "semi_axes", "config.set")))
    if variant in ("finite_cloud", "difference_set"):
        if "points" in spec:
            pts = np.asarray(spec["points"], dtype=np.float64)
        elif "csv" in spec:
            pts = sg.load_cloud_csv(spec["csv"]).points
        elif "random_points" in spec:
            rp = spec["random_points"]
            count = int(_require(rp, "count", "config.set.random_points"))
            scale = float(rp.get("scale", 1.0))
            pts = stream.standard_normal((count, cfg.n)) * (scale / math.sqrt(cfg.n))
        else:
            raise ConfigurationError(
                "config.set: finite clouds need 'points', 'csv', or 'random_points'"
            )
        cloud = sg.FiniteCloud(points=pts)
        return sg.DifferenceSet(base=cloud) if variant == "difference_set" else cloud
    raise ConfigurationError(f"config.set.variant: unknown variant {variant!r}")


def _finite_cloud(cfg: ExperimentConfig, stream: np.random.Generator) -> sg.FiniteCloud:
    T = resolve_set(cfg, stream)
    if isinstance(T, sg.DifferenceSet):
        return sg.FiniteCloud(points=T.points)
    if not isinstance(T, sg.FiniteCloud):
        raise ConfigurationError(
            f"this check needs a finite cloud, got set variant {T.variant!r}"
        )
    return T


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.ravel()]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# check implementations (one per name)
# ---------------------------------------------------------------------------

def _check_thin_shell(cfg, stream):
    c = cfg.constants
    est = estimate_thin_shell(
        cfg.model,
        n_draws=cfg.n,
        trials=int(c["thin_shell_trials"]),
        gamma=float(c["gamma"]),
        stream=stream,
    )
    return {"delta_hat": est.delta_hat, "trials": est.trials}, 0.0 <= est.delta_hat <= 1.0


def _check_suitability(cfg, stream):
    c = cfg.constants
    rep = estimate_suitability(
        cfg.model,
        n_context=cfg.n,
        alpha=float(c["alpha"]),
        beta=float(c["beta"]),
        gamma=float(c["gamma"]),
        mc_samples=cfg.budgets.mc_samples,
        stream=stream,
    )
    return rep.to_json_dict(), 0.0 <= rep.delta_hat <= 1.0


def _bounds_for(cfg, T, width, stream):
    c = cfg.constants
    d = sg.diameter(T)
    k_star = sg.critical_dimension(T, width)
    evals = [
        dist.evaluate_main_bound(
            d, width.value, k_star, cfg.m, cfg.n,
            delta=float(c.get("delta", 0.0)), alpha=float(c["alpha"]), c=float(c["c"]),
        ),
        dist.evaluate_gaussian_bound(
            d, width.value, k_star, cfg.m, u=float(c["u"]), c1=float(c["c1"])
        ),
    ]
    if cfg.m >= 3:
        evals.append(
            dist.evaluate_logconcave_bound(
                d, width.value, k_star, cfg.m, cfg.n,
                gamma=float(c["gamma"]), beta=float(c["beta"]),
                c=float(c["c"]), c_beta=float(c["c_beta"]),
            )
        )
    return d, k_star, evals


def _check_distortion_finite(cfg, stream):
    T = _finite_cloud(cfg, fork(stream))
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    report = dist.distortion_finite(A, T)
    width = sg.estimate_mean_width(T, cfg.budgets.mc_samples, fork(stream))
    d, k_star, evals = _bounds_for(cfg, T, width, stream)
    report = report.with_bounds(*evals)
    values = {
        "empirical": report.empirical,
        "d_T": d,
        "ell_star": width.value,
        "k_star": k_star,
    }
    for name, ev in sorted(report.bounds.items()):
        values[f"bound_{name}"] = ev.value
    primary = cfg.constants.get("primary_bound", "")
    passed = None
    if primary:
        passed = report.empirical <= report.bounds[primary].value
    return values, passed


def _check_distortion_sphere(cfg, stream):
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    report, pair = dist.distortion_sphere(A)
    values = {
        "empirical": report.empirical,
        "lambda_min": pair.lambda_min,
        "lambda_max": pair.lambda_max,
    }
    return values, None


def _check_singular_values(cfg, stream):
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    _, pair = dist.distortion_sphere(A)
    slack = float(cfg.constants["slack"])
    margin = slack * math.sqrt(cfg.n / cfg.m)
    ok = pair.lambda_min >= 1.0 - margin and pair.lambda_max <= 1.0 + margin
    values = {
        "lambda_min": pair.lambda_min,
        "lambda_max": pair.lambda_max,
        "margin": margin,
    }
    return values, ok


def _check_overlap_fit(cfg, stream):
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    G = gram(A)
    mode = "exact_enumeration" if cfg.n <= 12 else "monte_carlo"
    fit = so.fit_assumption_constant(
        G,
        alpha=float(cfg.constants["alpha"]),
        m=cfg.m,
        n=cfg.n,
        selector_mode=mode,
        stream=fork(stream),
        samples=cfg.budgets.selector_samples,
        restarts=cfg.budgets.restarts,
    )
    values = {"C_A": fit.C_A, "mode": mode}
    for s, rec in sorted(fit.per_scale.items()):
        values[f"scale_{rec.two_s}"] = rec.value
        values[f"ratio_{rec.two_s}"] = rec.ratio
    return values, None


def _check_decoupling_identity(cfg, stream):
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    G = gram(A)
    eps = random_signs(cfg.n, derive_seed(stream))
    u = fork(stream).standard_normal(cfg.n)
    mode = "exact" if cfg.n <= 16 else "monte_carlo"
    rep = dc.verify_decoupling_identity(
        G, eps, u, mode=mode, samples=cfg.budgets.selector_samples, stream=fork(stream)
    )
    ok = rep.relative_residual <= 1e-10 if mode == "exact" else None
    values = {
        "z_value": rep.z_value,
        "four_mean_v": rep.four_mean_v,
        "residual": rep.residual,
        "mode": rep.mode,
        "std_error": rep.std_error,
    }
    return values, ok


def _check_bilinearity(cfg, stream):
    T = _finite_cloud(cfg, fork(stream))
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    G = gram(A)
    eps = random_signs(cfg.n, derive_seed(stream))
    seq = sg.build_admissible_sequence(T)
    t_index = int(fork(stream).integers(T.size))
    s0 = int(cfg.constants["s0"])
    s1 = int(cfg.constants["s1"])
    rep = dc.verify_bilinearity_telescope(G, eps, seq, t_index, s0, s1)
    ok = rep.identity_residual <= 1e-12 and rep.lemma_holds
    values = {
        "identity_residual": rep.identity_residual,
        "telescope_residual": rep.telescope_residual,
        "lemma_lhs": rep.lemma_lhs,
        "lemma_rhs": rep.lemma_rhs,
    }
    return values, ok


def _check_bernoulli_moments(cfg, stream):
    rng = fork(stream)
    a = rng.standard_normal(cfg.n)
    b = rng.standard_normal(cfg.n)
    idx = np.flatnonzero(rng.integers(0, 2, size=cfg.n))
    if idx.size == 0:
        idx = np.array([0])
    p = int(cfg.constants["p"])
    mc = max(10**4, cfg.budgets.mc_samples)
    rep = dc.bernoulli_moment_check(a, b, idx, p, mc, fork(stream))
    ok = rep.ratio <= float(cfg.constants["c_bern"])
    values = {
        "lhs": rep.lhs,
        "rhs_shape": rep.rhs_shape,
        "ratio": rep.ratio,
        "p": rep.p,
    }
    return values, ok


def _check_chain_diagnostics(cfg, stream):
    T = _finite_cloud(cfg, fork(stream))
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    eps = random_signs(cfg.n, derive_seed(stream))
    A_eps = randomize_columns(A, eps)
    seq = sg.build_admissible_sequence(T)
    width = sg.estimate_mean_width(T, cfg.budgets.mc_samples, fork(stream))
    lam = sg.lambda_star(T, width, cfg.n)
    s0, s1 = sg.scales_s0_s1(lam, cfg.n, cfg.m)
    diag = dc.chain_diagnostics(A_eps, T, seq, s0, s1)
    values = {
        "phi": diag.phi,
        "psi_sq": diag.psi_sq,
        "tail_term": diag.tail_term,
        "sup_distortion": diag.sup_distortion,
        "decomposition_rhs": diag.decomposition_rhs,
        "s0": diag.s0,
        "s1": diag.s1,
    }
    return values, diag.holds


def _check_dimension_reduction(cfg, stream):
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    G = gram(A)
    rng = fork(stream)
    idx = np.flatnonzero(rng.integers(0, 2, size=cfg.n))
    if idx.size == 0 or idx.size == cfg.n:
        idx = np.arange(cfg.n // 2)
    depth = int(cfg.constants["recursion_depth"])
    rep = so.dimension_reduction_check(
        G, idx, depth, exhaustive_limit=cfg.budgets.exhaustive_limit
    )
    values = {"truncated_at": rep.truncated_at}
    for rec in rep.records:
        values[f"lhs_{rec.two_r}"] = rec.lhs
        values[f"rhs_{rec.two_r}"] = rec.rhs
    return values, rep.all_hold


def _check_self_bounding(cfg, stream):
    A = build_embedding(cfg.model, cfg.n, fork(stream))
    delta_obs = column_norm_deviation(A)
    mode = "exact_enumeration" if cfg.n <= 16 else "monte_carlo"
    rep = so.self_bounding_check(
        A,
        delta_obs,
        selector_mode=mode,
        stream=fork(stream),
        samples=cfg.budgets.selector_samples,
    )
    values = {"delta_observed": delta_obs, "mode": mode}
    for rec in rep.records:
        values[f"gap_{rec.two_s}"] = rec.rhs - rec.norm_sq
    return values, rep.all_hold


def _check_order_statistic_tail(cfg, stream):
    c = cfg.constants
    rep = so.order_statistic_tail_check(
        cfg.model,
        collection_size=int(c["tail_collection"]),
        s=int(c["s0"]),
        u=max(math.e, float(c["u"])),
        alpha=float(c["alpha"]),
        L=float(c["L"]),
        mc_trials=int(c["tail_trials"]),
        n_copies=cfg.n,
        c3=float(c["c3"]),
        stream=stream,
    )
    values = {
        "u_grid": list(rep.u_grid),
        "exceed_rates": list(rep.exceed_rates),
        "thresholds": list(rep.thresholds),
    }
    return values, rep.rates_nonincreasing


CHECKS = {
    "thin_shell": _check_thin_shell,
    "suitability": _check_suitability,
    "distortion_finite": _check_distortion_finite,
    "distortion_sphere": _check_distortion_sphere,
    "singular_values": _check_singular_values,
    "overlap_fit": _check_overlap_fit,
    "decoupling_identity": _check_decoupling_identity,
    "bilinearity": _check_bilinearity,
    "bernoulli_moments": _check_bernoulli_moments,
    "chain_diagnostics": _check_chain_diagnostics,
    "dimension_reduction": _check_dimension_reduction,
    "self_bounding": _check_self_bounding,
    "order_statistic_tail": _check_order_statistic_tail,
}

assert set(CHECKS) == set(CHECK_NAMES)


# ---------------------------------------------------------------------------
# runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReportRow:
    check: str
    trial: int
    seed: int
    passed: bool | None
    values: dict

    def values_json(self) -> str:
        return json.dumps(_jsonable(self.values), separators=(",", ":"))


@dataclass
class RunManifest:
    config_hash: str
    artifact_version: str
    checks: dict  # name -> {"trials": int, "seeds": [...], "wall_clock_s": float}

    def to_json_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "artifact_version": self.artifact_version,
            "checks": self.checks,
        }


def _trial_seed(cfg: ExperimentConfig, check: str, trial: int) -> int:
    return derive_seed(substream(cfg.master_seed, check, trial, "seed"))


def _run_trial(cfg: ExperimentConfig, check: str, trial: int) -> ReportRow:
    stream = substream(cfg.master_seed, check, trial, "work")
    values, passed = CHECKS[check](cfg, stream)
    return ReportRow(
        check=check,
        trial=trial,
        seed=_trial_seed(cfg, check, trial),
        passed=passed,
        values=values,
    )


def run(cfg: ExperimentConfig, jobs: int = 1) -> tuple[RunManifest, list[ReportRow]]:
    """Execute every configured check; returns the manifest and report rows.

    A budget or configuration failure inside one trial becomes an error row
    (pass=False, values["error"]) and the run continues.
    """
    rows: list[ReportRow] = []
    manifest_checks: dict = {}
    for check in cfg.checks:
        start = time.perf_counter()
        seeds = [_trial_seed(cfg, check, t) for t in range(cfg.trials)]

        def job(t: int) -> ReportRow:
            try:
                return _run_trial(cfg, check, t)
            except Exception as exc:  # error rows keep the run going
                return ReportRow(
                    check=check,
                    trial=t,
                    seed=seeds[t],
                    passed=False,
                    values={"error": f"{type(exc).__name__}: {exc}"},
                )

        if jobs > 1 and cfg.trials > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                check_rows = list(pool.map(job, range(cfg.trials)))
        else:
            check_rows = [job(t) for t in range(cfg.trials)]
        rows.extend(check_rows)  # buffered per trial, emitted in trial order
        manifest_checks[check] = {
            "trials": cfg.trials,
            "seeds": seeds,
            "wall_clock_s": time.perf_counter() - start,
        }
    manifest = RunManifest(
        config_hash=cfg.config_hash(),
        artifact_version=ARTIFACT_VERSION,
        checks=manifest_checks,
    )
    if cfg.output.path is not None:
        write_report(cfg.output.path, cfg.output.format, rows)
        manifest_path = Path(cfg.output.path).with_suffix(".manifest.json")
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump(manifest.to_json_dict(), fh, indent=2)
            fh.write("\n")
    return manifest, rows


def rows_to_csv(rows: list[ReportRow]) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["check", "trial", "seed", "pass", "values"])
    for row in rows:
        passed = "" if row.passed is None else str(bool(row.passed))
        writer.writerow([row.check, row.trial, row.seed, passed, row.values_json()])
    return buf.getvalue()


def rows_to_json(rows: list[ReportRow]) -> str:
    payload = [
        {
            "check": r.check,
            "trial": r.trial,
            "seed": r.seed,
            "pass": r.passed,
            "values": _jsonable(r.values),
        }
        for r in rows
    ]
    return json.dumps({"schema": SCHEMA_VERSION, "rows": payload}, indent=2) + "\n"


def write_report(path: str | Path, fmt: str, rows: list[ReportRow]) -> None:
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    text = rows_to_csv(rows) if fmt == "csv" else rows_to_json(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_report(path: str | Path) -> list[ReportRow]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        payload = json.loads(text)
        return [
            ReportRow(r["check"], r["trial"], r["seed"], r["pass"], r["values"])
            for r in payload["rows"]
        ]
    rows = []
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    for rec in reader:
        passed = None if rec["pass"] == "" else rec["pass"] == "True"
        rows.append(
            ReportRow(
                check=rec["check"],
                trial=int(rec["trial"]),
                seed=int(rec["seed"]),
                passed=passed,
                values=json.loads(rec["values"]),
            )
        )
    return rows


def aggregate(paths: list[str | Path]) -> list[dict]:
    """Per-check pass rates and empirical/bound ratio quantiles across reports."""
    rows: list[ReportRow] = []
    for p in paths:
        rows.extend(read_report(p))
    by_check: dict[str, list[ReportRow]] = {}
    for row in rows:
        by_check.setdefault(row.check, []).append(row)
    summary = []
    for check in sorted(by_check):
        group = by_check[check]
        judged = [r for r in group if r.passed is not None]
        n_pass = sum(1 for r in judged if r.passed)
        entry = {
            "check": check,
            "trials": len(group),
            "judged": len(judged),
            "passed": n_pass,
            "pass_rate": (n_pass / len(judged)) if judged else None,
        }
        ratios = []
        for r in group:
            emp = r.values.get("empirical")
            bounds = [v for k, v in r.values.items() if k.startswith("bound_")]
            if emp is not None and bounds:
                smallest = min(bounds)
                if smallest > 0:
                    ratios.append(emp / smallest)
        if ratios:
            arr = np.array(ratios)
            entry["ratio_median"] = float(np.median(arr))
            entry["ratio_q90"] = float(np.quantile(arr, 0.9))
            entry["ratio_max"] = float(arr.max())
        summary.append(entry)
    return summary
