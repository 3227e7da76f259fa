"""Experiment orchestration, run manifests, verification and run comparison."""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .arithmetic_groups import (
    Family, GroupSpec, ball_count, dump_ball, linear_bound, set_workers, sl2_count,
)
from .gauge import frobenius
from .config import ConfigError, ExperimentConfig, base_points
from .sampling import (
    Normalization, normalizer, orbit_sums, report_from_sums, report_rows,
    restricted_sums, write_report_csv, write_report_json,
)
from .spaces import ModelKind, SpaceModel
from .volumes import (
    Method, StabilizerKind, StabilizerModel, de_sitter_section, fit_exponents, fit_growth,
    haar_ball_volume, skew_ball_volume, theta_estimate, write_volume_csv,
)

MANIFEST = "manifest.json"
RESOLVED = "config.resolved.json"


class BudgetError(RuntimeError):
    pass


@dataclass
class RunManifest:
    experiment: str
    config_hash: str
    config: dict
    seeds: dict
    started: str
    wall_clock: float = 0.0
    timings: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    tool: str = "orbitstat"
    version: str = __version__
    summary: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in
                ("tool", "version", "experiment", "config_hash", "config", "seeds", "started",
                 "wall_clock", "timings", "outputs", "summary")}

    @classmethod
    def load(cls, path) -> "RunManifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST
        d = json.loads(path.read_text())
        return cls(d["experiment"], d["config_hash"], d["config"], d["seeds"], d["started"],
                   d["wall_clock"], d["timings"], d["outputs"], d["tool"], d["version"], d.get("summary", {}))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def derived_seed(seed: int, *path: int) -> int:
    """Independent 63-bit seed for a sub-stream, stable across runs."""
    return int(np.random.SeedSequence([seed, *path]).generate_state(1, np.uint64)[0] >> np.uint64(1))


class Run:
    """Context for one experiment: output directory, timings and budgets."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.manifest = RunManifest(cfg.experiment, cfg.hash(), cfg.resolved(), {"base": cfg["seed"]},
                                    _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
        self.files: list[str] = []

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        yield
        dt = time.perf_counter() - t0
        self.manifest.timings[name] = round(dt, 3)
        limit = self.cfg["budget"]["max_stage_seconds"]
        if dt > limit:
            raise BudgetError(f"stage '{name}' took {dt:.0f}s, over the {limit:.0f}s budget")

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def check_elements(self, n: int, what: str):
        limit = self.cfg["budget"]["max_elements"]
        if n > limit:
            raise BudgetError(f"{what} has {n} elements, over budget.max_elements={limit}")


# ---------------------------------------------------------------- experiments

def _exp_enum_ball(run: Run) -> dict:
    cfg = run.cfg
    spec = GroupSpec(cfg["family"])
    with run.stage("count"):
        n = ball_count(spec, cfg["t"])
    run.check_elements(n, "the ball")
    if not cfg["count_only"]:
        with run.stage("dump"), open(run.path("ball.txt"), "w") as fh:
            dump_ball(spec, cfg["t"], fh)
    return {"count": n}


def _exp_growth(run: Run) -> dict:
    cfg = run.cfg
    spec = GroupSpec(cfg["family"])
    ts = cfg.t_grid
    with run.stage("count"):
        counts = [ball_count(spec, t) for t in ts]
    with open(run.path("growth.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "t", "ball_count"])
        for t, c in zip(ts, counts):
            w.writerow([spec.family.value, repr(t), c])
    pos = [(t, c) for t, c in zip(ts, counts) if c > 0]
    summary = {"counts": counts}
    if len(pos) >= 2:
        tt, cc = np.array(pos, dtype=float).T
        summary["slope"] = float(np.polyfit(tt, np.log(cc), 1)[0])
        if tt[-1] - tt[0] >= 3:
            fit = fit_exponents(tt, cc)
            summary.update(a_hat=fit.a_hat, b_hat=fit.b_hat, residual=fit.residual)
    return summary


def _sections(cfg, stab: StabilizerModel):
    """(g1, g2, ids) pairs requested through r1 / r2."""
    if stab.kind not in (StabilizerKind.SO11, StabilizerKind.SO12):
        return []
    r1 = cfg.get("r1")
    r2 = cfg.get("r2")
    if r1 is None and r2 is None:
        return []
    r1 = r1 if isinstance(r1, list) else [r1 or 0.0]
    r2 = r2 if isinstance(r2, list) else [r2 or 0.0]
    d = 2 if stab.kind is StabilizerKind.SO11 else 3
    return [(de_sitter_section(d, a), de_sitter_section(d, b), f"s(r={a})", f"s(r={b})")
            for a in r1 for b in r2]


def _gauge_for(stab: StabilizerModel, sections: bool):
    """Default gauge; de Sitter sections live in the ambient 3x3 for SO11."""
    if sections and stab.kind is StabilizerKind.SO11:
        return frobenius(3)
    return stab.default_gauge()


def _exp_volumes(run: Run) -> dict:
    cfg = run.cfg
    stab = StabilizerModel(cfg["stabilizer"])
    gauge = _gauge_for(stab, bool(_sections(cfg, stab)))
    samples = []
    kw = dict(k_nodes=cfg["k_nodes"], samples=cfg["samples"])
    with run.stage("volumes"):
        for k, t in enumerate(cfg.t_grid):
            seed = derived_seed(cfg["seed"], 1, k)
            samples.append(haar_ball_volume(stab, gauge, t, seed=seed, **kw))
            for j, (g1, g2, i1, i2) in enumerate(_sections(cfg, stab)):
                samples.append(skew_ball_volume(stab, g1, g2, gauge, t, seed=derived_seed(cfg["seed"], 2, k, j),
                                                g1_id=i1, g2_id=i2, **kw))
    run.manifest.seeds["monte_carlo"] = sorted({s.seed for s in samples if s.seed is not None})
    write_volume_csv(run.path("volumes.csv"), samples)
    plain = [s for s in samples if s.g1_id == "I"]
    summary = {"values": [s.value for s in plain]}
    try:
        fit = fit_growth(plain)
        summary.update(a_hat=fit.a_hat, b_hat=fit.b_hat, logc_hat=fit.logc_hat, residual=fit.residual)
    except ValueError as e:
        summary["fit"] = f"not fitted: {e}"
    return summary


def _exp_theta(run: Run) -> dict:
    cfg = run.cfg
    stab = StabilizerModel(cfg["stabilizer"])
    gauge = _gauge_for(stab, bool(_sections(cfg, stab)))
    pairs = _sections(cfg, stab) or [(None, None, "I", "I")]
    rows = []
    with run.stage("theta"):
        for j, (g1, g2, i1, i2) in enumerate(pairs):
            th = theta_estimate(stab, g1, g2, gauge, cfg["t"], k_nodes=cfg["k_nodes"], samples=cfg["samples"],
                                seed=derived_seed(cfg["seed"], 3, j))
            rows.append({"g1_id": i1, "g2_id": i2, "theta": th.value, "previous": th.previous,
                         "stabilized": th.stabilized, "stderr": th.stderr})
    with open(run.path("theta.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    unstable = [r for r in rows if not r["stabilized"]]
    if unstable:
        run.manifest.summary["warnings"] = [f"theta not stabilized for {r['g1_id']}, {r['g2_id']}" for r in unstable]
    return {"theta": rows}


def _model_sums(run: Run, model: SpaceModel, xs, phis, t_grid):
    fast = model.kind in (ModelKind.AFFINE_LATTICE, ModelKind.AFFINE_SOLVABLE)
    spec = model.spec
    if spec.family is Family.AFFINE or not fast:
        lin_spec = GroupSpec(Family.SL2Z) if spec.family is Family.AFFINE else spec
        t_lin = t_grid[-1]
        n = sl2_count(linear_bound(spec, t_lin)) if spec.family is Family.AFFINE else ball_count(lin_spec, t_lin)
        run.check_elements(n, "the enumerated ball")
    with run.stage("orbit_sums"):
        if fast:
            return restricted_sums(model, xs, phis, t_grid, with_ball_counts=spec.family is not Family.SOLVABLE)
        return orbit_sums(model, xs, phis, t_grid)


def _space(cfg) -> SpaceModel:
    return SpaceModel(cfg["model"], affine_exponent=float(cfg.get("affine_exponent", 0.5)))


def _exp_orbit(run: Run) -> dict:
    cfg = run.cfg
    model = _space(cfg)
    xs = base_points(model, cfg)
    phi = cfg.phi("phi")
    sums = _model_sums(run, model, xs, [phi], [cfg["t"]])
    ids = [f"x{i}" for i in range(len(xs))]
    norm = Normalization(cfg["normalization"])
    write_report_csv(run.path("reports.csv"), report_rows(model, sums, ids, [phi], norm))
    est = sums.raw[:, 0, 0] / normalizer(model, cfg["t"], norm)
    summary = {"median": float(np.median(est)), "base_points": xs.tolist()}
    write_report_json(run.path("report.json"), summary)
    return summary


def _exp_ratio(run: Run) -> dict:
    cfg = run.cfg
    model = _space(cfg)
    xs = base_points(model, cfg)
    phi, psi = cfg.phi("phi"), cfg.phi("psi")
    sums = _model_sums(run, model, xs, [phi, psi], [cfg["t"]])
    ids = [f"x{i}" for i in range(len(xs))]
    write_report_csv(run.path("reports.csv"), report_rows(model, sums, ids, [phi, psi], Normalization.RAW))
    num, den = sums.raw[:, 0, 0], sums.raw[:, 1, 0]
    ratios = [float(a / b) if b > 0 else None for a, b in zip(num, den)]
    valid = [r for r in ratios if r is not None]
    # the model constant cancels in the predicted ratio
    preds = [_limit_integral(model, x, phi) / _limit_integral(model, x, psi) for x in xs]
    summary = {"ratios": ratios, "median": float(np.median(valid)) if valid else None,
               "predicted": preds, "predicted_median": float(np.median(preds))}
    write_report_json(run.path("report.json"), summary)
    return summary


def _limit_integral(model, x, phi):
    return phi.integrate(model, weight=lambda u: model.limit_density_chart(x, u))


def _exp_report(run: Run) -> dict:
    cfg = run.cfg
    model = _space(cfg)
    xs = base_points(model, cfg)
    phi = cfg.phi("phi")
    norm = Normalization(cfg["normalization"])
    sums = _model_sums(run, model, xs, [phi], cfg.t_grid)
    ids = [f"x{i}" for i in range(len(xs))]
    write_report_csv(run.path("reports.csv"), report_rows(model, sums, ids, [phi], norm))
    with run.stage("fits"):
        reports = []
        for i, x in enumerate(xs):
            try:
                reports.append(report_from_sums(model, x, phi, sums, i, 0, norm).to_json())
            except Exception as e:  # non-finite estimates are reported, not fatal
                reports.append({"x": x.tolist(), "error": str(e)})
    norms = np.array([normalizer(model, t, norm) for t in cfg.t_grid])
    med = np.median(sums.raw[:, 0, :] / norms, axis=0)
    payload = {"model": model.kind.value, "phi": phi.name, "t_grid": cfg.t_grid,
               "median_estimates": med.tolist(), "reports": reports, "seeds": run.manifest.seeds}
    try:
        from .sampling import fit_rates
        best, alt = fit_rates(cfg.t_grid, med)
        payload["median_fit"] = {"model": best.model.value, "limit": best.limit, "parameter": best.parameter,
                                 "residual": best.residual, "alternative_residual": alt.residual}
    except Exception as e:
        payload["median_fit"] = {"error": str(e)}
    write_report_json(run.path("report.json"), payload)
    return {"median_estimates": med.tolist()}


def _exp_accept(run: Run) -> dict:
    from .acceptance import run_acceptance
    results = run_acceptance(run.out, seed=run.cfg["seed"], workers=run.cfg["workers"], files=run.files)
    passed = all(r.passed for r in results)
    return {"passed": passed, "criteria": [r.to_json() for r in results]}


EXPERIMENTS = {
    "enum-ball": _exp_enum_ball,
    "growth": _exp_growth,
    "volumes": _exp_volumes,
    "theta": _exp_theta,
    "orbit": _exp_orbit,
    "ratio": _exp_ratio,
    "report": _exp_report,
    "accept": _exp_accept,
}


def run(cfg: ExperimentConfig, out: str | Path | None = None) -> RunManifest:
    """Execute one experiment and write results plus a manifest to ``out``."""
    out = Path(out or cfg["out"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as e:
        raise ConfigError("out", f"output directory not writable: {e}") from None
    set_workers(cfg["workers"])
    r = Run(cfg, out)
    t0 = time.perf_counter()
    (out / RESOLVED).write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True))
    summary = EXPERIMENTS[cfg.experiment](r)
    r.manifest.wall_clock = round(time.perf_counter() - t0, 3)
    r.manifest.summary.update(_jsonable(summary))
    r.manifest.outputs = {name: sha256_file(out / name) for name in sorted(set(r.files + [RESOLVED]))}
    (out / MANIFEST).write_text(json.dumps(r.manifest.to_json(), indent=2, sort_keys=True))
    return r.manifest


def _jsonable(o):
    return json.loads(json.dumps(o, default=lambda v: v.tolist() if hasattr(v, "tolist") else str(v)))


# ---------------------------------------------------------------- verify and compare

def verify(run_dir) -> list[str]:
    """Recompute output digests; returns the list of mismatching files."""
    run_dir = Path(run_dir)
    m = RunManifest.load(run_dir)
    bad = []
    for name, digest in m.outputs.items():
        p = run_dir / name
        if not p.exists() or sha256_file(p) != digest:
            bad.append(name)
    return bad


@dataclass
class DiffEntry:
    file: str
    row: int
    column: str
    a: str
    b: str
    rel_diff: float
    within_tolerance: bool


@dataclass
class DiffReport:
    entries: list[DiffEntry] = field(default_factory=list)

    @property
    def flagged(self) -> list[DiffEntry]:
        return [e for e in self.entries if not e.within_tolerance]

    @property
    def empty(self) -> bool:
        return not self.entries


def _rel(a: float, b: float) -> float:
    if a == b:
        return 0.0
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def compare_runs(run_a, run_b) -> DiffReport:
    """Per-cell differences between the CSV outputs of two runs.

    Cells must match exactly, except Monte Carlo volumes whose values may
    differ by up to 3 combined standard errors (stderr and seed columns of
    such rows are then informational). JSON summaries are derived from the
    CSVs and are not compared separately.
    """
    a_dir, b_dir = Path(run_a), Path(run_b)
    ma, mb = RunManifest.load(a_dir), RunManifest.load(b_dir)
    if ma.experiment != mb.experiment:
        raise ValueError(f"cannot compare a {ma.experiment} run with a {mb.experiment} run")
    report = DiffReport()
    names = sorted(n for n in set(ma.outputs) & set(mb.outputs) if n.endswith(".csv"))
    for name in names:
        ra, rb = _read_csv(a_dir / name), _read_csv(b_dir / name)
        if len(ra) != len(rb):
            report.entries.append(DiffEntry(name, -1, "<rows>", str(len(ra)), str(len(rb)), math.inf, False))
            continue
        for i, (x, y) in enumerate(zip(ra, rb)):
            mc = x.get("method") == Method.MONTE_CARLO.value and y.get("method") == Method.MONTE_CARLO.value
            for col in x:
                if x[col] == y.get(col):
                    continue
                try:
                    fa, fb = float(x[col]), float(y[col])
                    rel = _rel(fa, fb)
                except (TypeError, ValueError):
                    fa = fb = None
                    rel = math.inf
                ok = False
                if mc and col in ("stderr", "seed"):
                    ok = True
                elif mc and col == "value" and fa is not None:
                    tol = 3 * math.hypot(float(x["stderr"]), float(y["stderr"]))
                    ok = abs(fa - fb) <= tol
                report.entries.append(DiffEntry(name, i, col, x[col], y.get(col), rel, ok))
    return report
