"""Stage-by-stage experiment runner with checksummed, resumable outputs.

Output layout under ``config.out``::

    config.json
    stage_<S>/lattice.json  stage_<S>/series.csv  stage_<S>/analysis.json
    classical/return.csv    classical/spectral.json      (optional)
    scaling.json            beta_vs_ds.csv
    manifest.json
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import estimate_period, estimate_pmax
from .classical import (averaged_return_probability, fit_spectral_dimension,
                        random_starts)
from .errors import EmptyInput, FQSearchError
from .io import (read_json, sha256_file, sha256_json, write_csv, write_json)
from .lattice import Boundary, Family, FractalSpec, generate, metrics
from .quantum import FlipFlopSearch, resolve_target
from .scaling import evaluate_hypotheses, fit_log_correction, fit_power_law

log = logging.getLogger(__name__)

TIMESTAMP_KEYS = ("createdAt", "updatedAt", "manifestHash")


@dataclass
class ClassicalConfig:
    stage: int | None = None
    boundary: str | None = None
    trials: int = 1_000_000
    horizon: int = 4000
    starts: int | str = 32
    window: list | None = None
    seed: int | None = None


@dataclass
class ExperimentConfig:
    family: str
    s: int
    s_prime: int
    stages: list
    boundary: str = "periodic"
    target: object = "auto"
    steps: dict | None = None
    min_steps: int = 64
    min_periods: int = 8
    max_steps: int = 2_000_000
    beta_stages: list | None = None
    alpha_stages: list | None = None
    allow_two_point: bool = False
    classical: ClassicalConfig | None = None
    d_s: float | None = None
    d_s_err: float = 0.0
    seed: int = 0
    threads: int = 1
    out: str = "run"

    def __post_init__(self):
        self.family = Family(self.family).value
        self.boundary = Boundary(self.boundary).value
        self.stages = [int(self.stages[0]), int(self.stages[-1])]
        if self.stages[0] > self.stages[1]:
            raise ValueError(f"stage range {self.stages} is empty")
        if self.min_periods < 4:
            raise ValueError("min_periods must be >= 4")
        if isinstance(self.classical, dict):
            self.classical = ClassicalConfig(**self.classical)
        if self.steps is not None:
            self.steps = {str(k): int(v) for k, v in self.steps.items()}
        # validates s, s' up front
        self.spec(self.stages[0])

    def spec(self, stage: int) -> FractalSpec:
        return FractalSpec(Family(self.family), self.s, self.s_prime, stage, Boundary(self.boundary))

    @property
    def stage_list(self) -> list:
        return list(range(self.stages[0], self.stages[1] + 1))

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def content_hash(self) -> str:
        d = self.to_dict()
        for key in ("out", "threads"):
            d.pop(key)
        return sha256_json(d)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "sPrime" in d:
            d["s_prime"] = d.pop("sPrime")
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(read_json(path))


def _file_entry(root: Path, path: Path) -> dict:
    return {"path": path.relative_to(root).as_posix(), "sha256": sha256_file(path)}


def _files_ok(root: Path, files: dict) -> bool:
    for entry in files.values():
        p = root / entry["path"]
        if not p.is_file() or sha256_file(p) != entry["sha256"]:
            return False
    return True


def search_until_periodic(lat, target, min_steps: int = 64, min_periods: int = 8,
                          max_steps: int = 2_000_000, fixed_steps: int | None = None):
    """Evolve, doubling the record length until it holds ``min_periods`` periods.

    Starts from max(min_steps, 8 ceil(sqrt N)) steps.  Returns the walk and the
    final period estimate (or raises the last analysis error once
    ``max_steps`` is reached).
    """
    walk = FlipFlopSearch(lat, target)
    if fixed_steps is not None:
        walk.advance(fixed_steps)
        return walk, estimate_period(walk.history)
    steps = min(max_steps, max(min_steps, 8 * math.ceil(math.sqrt(lat.N))))
    walk.advance(steps)
    while True:
        err = None
        try:
            q = estimate_period(walk.history)
            if walk.t >= min_periods * q.Q:
                return walk, q
        except FQSearchError as exc:
            err = exc
        if walk.t >= max_steps:
            if err is not None:
                raise err
            return walk, q
        walk.advance(min(walk.t, max_steps - walk.t))


def run_stage(cfg: ExperimentConfig, stage: int, root: Path) -> dict:
    spec = cfg.spec(stage)
    lat = generate(spec)
    target = resolve_target(lat, cfg.target)
    fixed = None if cfg.steps is None else cfg.steps.get(str(stage))
    t0 = time.perf_counter()
    walk, q = search_until_periodic(lat, target, cfg.min_steps, cfg.min_periods,
                                    cfg.max_steps, fixed)
    run = walk.result()
    pm = estimate_pmax(run.probability, q.Q)
    elapsed = time.perf_counter() - t0
    d = root / f"stage_{stage}"
    lat_path = write_json(d / "lattice.json", lat.metadata())
    series_path = write_csv(d / "series.csv", ["t", "P"], [run.t, run.probability])
    analysis = {
        "stage": stage, "N": lat.N, "target": target,
        "targetCoord": [int(c) for c in lat.coords[target]],
        "steps": run.steps, "maxNormError": run.max_norm_error,
        **q.to_dict(), **pm.to_dict(),
    }
    an_path = write_json(d / "analysis.json", analysis)
    log.info("%s S=%d N=%d steps=%d Q=%.2f Pmax=%.4f (%.1fs)", spec.label, stage, lat.N,
             run.steps, q.Q, pm.Pmax, elapsed)
    return {
        "status": "ok", "N": lat.N, "target": target, "steps": run.steps,
        "Q": q.Q, "Pmax": pm.Pmax,
        "files": {name: _file_entry(root, p) for name, p in
                  (("lattice", lat_path), ("series", series_path), ("analysis", an_path))},
    }


def run_classical(cfg: ExperimentConfig, root: Path) -> dict:
    cc = cfg.classical
    stage = cc.stage or cfg.stages[1]
    boundary = cc.boundary or ("fixed" if cfg.family == "carpet" else "periodic")
    spec = FractalSpec(Family(cfg.family), cfg.s, cfg.s_prime, stage, Boundary(boundary))
    lat = generate(spec)
    seed = cfg.seed if cc.seed is None else cc.seed
    starts = resolve_starts(lat, cc.starts, seed)
    curve = averaged_return_probability(lat, starts, cc.trials, cc.horizon, seed=seed,
                                        threads=cfg.threads)
    est = fit_spectral_dimension(curve, cc.window)
    d = root / "classical"
    csv_path = write_csv(d / "return.csv", ["t", "count", "probability"],
                         [np.arange(len(curve.counts)), curve.counts, curve.probability])
    js = {"stage": stage, "boundary": boundary, "trials": curve.trials,
          "horizon": curve.horizon, "starts": [int(x) for x in starts], **est.to_dict()}
    js_path = write_json(d / "spectral.json", js)
    return {"status": "ok", "dS": est.d_s, "stderr": est.stderr,
            "files": {"curve": _file_entry(root, csv_path), "spectral": _file_entry(root, js_path)}}


def resolve_starts(lat, starts, seed: int) -> np.ndarray:
    """``"center"``, an integer site id given as ``"site:<id>"``, or a count R of random starts."""
    if starts == "center":
        return np.array([lat.center_site()])
    if isinstance(starts, str) and starts.startswith("site:"):
        return np.array([int(starts[5:])])
    return random_starts(lat, int(starts), seed)


def _stage_points(stages: dict, lo_hi, key: str) -> list:
    lo, hi = (lo_hi or (-math.inf, math.inf))
    return [(rec["N"], rec[key]) for s, rec in sorted(stages.items(), key=lambda kv: int(kv[0]))
            if rec.get("status") == "ok" and lo <= int(s) <= hi]


def default_alpha_range(cfg: ExperimentConfig) -> list:
    """All stages but the first when that still leaves three, else all."""
    lo, hi = cfg.stages
    return [lo + 1, hi] if hi - lo >= 3 else [lo, hi]


def build_scaling(cfg: ExperimentConfig, stages: dict, d_s, d_s_err) -> dict:
    beta_pts = _stage_points(stages, cfg.beta_stages, "Q")
    alpha_pts = _stage_points(stages, cfg.alpha_stages or default_alpha_range(cfg), "Pmax")
    beta = fit_power_law(beta_pts, allow_two_point=cfg.allow_two_point)
    alpha = fit_power_law(alpha_pts, allow_two_point=cfg.allow_two_point)
    out = {"label": cfg.spec(1).label, "betaFit": beta.to_dict(), "alphaFit": alpha.to_dict()}
    try:
        out["logCorrection"] = fit_log_correction(beta_pts).to_dict()
    except FQSearchError as exc:
        out["logCorrection"] = exc.to_dict()
    if d_s is not None:
        spec = cfg.spec(1)
        rep = evaluate_hypotheses(beta, alpha, metrics(spec), d_s, d_s_err,
                                  s=cfg.s, s_prime=cfg.s_prime, label=spec.label)
        out["report"] = rep.to_dict()
    return out


def manifest_hash(manifest: dict) -> str:
    return sha256_json({k: v for k, v in manifest.items() if k not in TIMESTAMP_KEYS})


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def run_pipeline(cfg: ExperimentConfig) -> dict:
    """Run every stage, the optional classical walk and the scaling fit.

    Completed stages whose files still match their checksums are reused, so
    rerunning an unchanged config recomputes nothing.  A failing stage is
    recorded and skipped.
    """
    root = Path(cfg.out)
    root.mkdir(parents=True, exist_ok=True)
    chash = cfg.content_hash()
    old = {}
    mpath = root / "manifest.json"
    if mpath.is_file():
        prev = read_json(mpath)
        if prev.get("configHash") == chash:
            old = prev
    write_json(root / "config.json", cfg.to_dict())

    stages = {}
    for S in cfg.stage_list:
        rec = old.get("stages", {}).get(str(S))
        if rec and rec.get("status") == "ok" and _files_ok(root, rec["files"]):
            log.info("stage %d up to date, skipping", S)
            stages[str(S)] = rec
            continue
        try:
            stages[str(S)] = run_stage(cfg, S, root)
        except (FQSearchError, MemoryError) as exc:
            err = exc.to_dict() if isinstance(exc, FQSearchError) else {"error": type(exc).__name__, "message": str(exc)}
            log.warning("stage %d failed: %s", S, err)
            stages[str(S)] = {"status": "failed", "error": {**err, "stage": S}}

    classical = None
    d_s, d_s_err = cfg.d_s, cfg.d_s_err
    if cfg.classical is not None:
        rec = old.get("classical")
        if rec and rec.get("status") == "ok" and _files_ok(root, rec["files"]):
            classical = rec
        else:
            try:
                classical = run_classical(cfg, root)
            except (FQSearchError, MemoryError) as exc:
                classical = {"status": "failed", "error": {"error": type(exc).__name__, "message": str(exc)}}
        if classical["status"] == "ok" and d_s is None:
            d_s, d_s_err = classical["dS"], classical["stderr"]

    try:
        report = build_scaling(cfg, stages, d_s, d_s_err)
        path = write_json(root / "scaling.json", report)
        files = {"report": _file_entry(root, path)}
        rep = report.get("report")
        if rep is not None:
            p2 = write_csv(root / "beta_vs_ds.csv", ["label", "d_s", "beta", "beta_err"],
                           [[rep["label"]], [rep["d_s"]], [rep["beta"]],
                            [rep["beta_err"] if rep["beta_err"] is not None else math.nan]])
            files["plot"] = _file_entry(root, p2)
        scaling = {"status": "ok", "files": files}
    except FQSearchError as exc:
        scaling = {"status": "failed", "error": exc.to_dict()}

    manifest = {
        "tool": "fqsearch", "version": __version__, "configHash": chash,
        "config": cfg.to_dict(), "stages": stages, "classical": classical,
        "scaling": scaling,
        "createdAt": old.get("createdAt", _now()), "updatedAt": _now(),
    }
    # out/threads do not affect results; keep them out of the hashed content
    manifest["config"] = {k: v for k, v in manifest["config"].items() if k not in ("out", "threads")}
    manifest["manifestHash"] = manifest_hash(manifest)
    write_json(mpath, manifest)
    return manifest


def verify_manifest(path) -> list:
    """Return a list of problems; empty when every referenced file matches."""
    path = Path(path)
    root = path.parent
    m = read_json(path)
    problems = []
    if manifest_hash(m) != m.get("manifestHash"):
        problems.append("manifest hash mismatch")
    sections = [("stage " + s, rec) for s, rec in m.get("stages", {}).items()]
    sections += [("classical", m.get("classical")), ("scaling", m.get("scaling"))]
    for name, rec in sections:
        if not rec or rec.get("status") != "ok":
            continue
        for key, entry in rec["files"].items():
            p = root / entry["path"]
            if not p.is_file():
                problems.append(f"{name}: missing {entry['path']}")
            elif sha256_file(p) != entry["sha256"]:
                problems.append(f"{name}: checksum mismatch for {entry['path']}")
    return problems


def reference_curves(d_s) -> tuple:
    d_s = np.asarray(d_s, dtype=float)
    return 1.0 / d_s, np.full_like(d_s, 0.5)


def export_plot_data(manifests, out, literature=None, grid=None) -> Path:
    """Write beta-versus-d_s points and the two reference curves to one CSV.

    Every row carries ``ref_inv_ds`` = 1/d_s and ``ref_half`` = 1/2 at its
    own d_s; rows of kind ``reference`` sample the curves on ``grid``.
    Literature rows come from a CSV with columns label, d_s, beta[, beta_err].
    """
    rows = []
    for mpath in manifests:
        mpath = Path(mpath)
        m = read_json(mpath)
        sc = m.get("scaling") or {}
        if sc.get("status") != "ok":
            continue
        rep = read_json(mpath.parent / sc["files"]["report"]["path"]).get("report")
        if rep is None:
            continue
        err = rep["beta_err"] if rep["beta_err"] is not None else math.nan
        rows.append(("data", rep["label"], "this-work", rep["d_s"], rep["beta"], err))
    if literature is not None:
        import csv
        with open(literature, newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                err = float(r["beta_err"]) if r.get("beta_err") else math.nan
                rows.append(("data", r["label"], "literature", float(r["d_s"]), float(r["beta"]), err))
    if not rows:
        raise EmptyInput("no completed scaling reports or literature points")
    if grid is None:
        grid = np.round(np.arange(1.0, 3.5001, 0.05), 10)
    for g in grid:
        rows.append(("reference", "", "", float(g), math.nan, math.nan))
    cols = list(zip(*rows))
    inv, half = reference_curves(cols[3])
    return write_csv(out, ["kind", "label", "source", "d_s", "beta", "beta_err",
                           "ref_inv_ds", "ref_half"], [*cols, inv, half])

