"""Experiment orchestration: configs, disorder ensembles, outputs and the CLI.

A run is one task kind swept over a list of ``theta`` values (in units of pi)
and ``disorders`` realizations per value. Realization ``i`` uses the seed
``split_seed(master_seed, i)``, shared across ``theta`` so curves at
different couplings see the same disorder. Every (theta, realization) pair is
an independent task; results are merged sorted by ``(theta, index)`` so the
CSV output does not depend on worker count or completion order.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import build_cycle, sample_disorder
from .diagnostics import (bootstrap, discontinuity, fit_exponential, gap_contrast, imbalance,
                          opdm_basis_set, opdm_exact, opdm_from_counts)
from .errors import ConfigError, DependencyError, DomainError
from .heisenberg import TruncationPolicy
from .lattice import CHAIN, HEAVY_HEX, Lattice, build_chain, build_heavy_hex, cdw_pattern
from .lioms import (MeasurementScheme, extract_exact, extract_sampled, guess_simple, noise_sweep,
                    weight_profile)
from .rng import make_rng, split_seed
from .spectral import (adjacent_gap_ratios, diagonalize_cycle, eigenstate_entropies, goe_r_density,
                       page_value, poisson_r_density)
from .statevec import (NoiseSpec, apply_cycle, apply_noise_trajectory, init_state, sample_counts,
                       z_expectations)

TASKS = ("level_stats", "entropy", "imbalance", "opdm", "liom", "noise_sweep")
SEED_RULE = "seed_i = splitmix64(master + i * 0x9E3779B97F4A7C15 mod 2^64)"
R_BINS = 20

_TOP_KEYS = {"task", "lattice", "n", "theta_over_pi", "disorders", "seed", "depth", "params", "out"}
_PARAM_KEYS = {
    "level_stats": {"zero_tol"},
    "entropy": {"n_left"},
    "imbalance": {"noise_p", "trajectories", "renormalize"},
    "opdm": {"shots", "bins", "resamples"},
    "liom": {"mode", "scheme", "shots", "noise_p", "trajectories", "sites", "max_support", "floor"},
    "noise_sweep": {"scheme", "p_grid", "d_grid", "trajectories", "shots", "site"},
}
_DEFAULT_DEPTH = {"level_stats": 1, "entropy": 1, "imbalance": 20, "opdm": 9, "liom": 10,
                  "noise_sweep": 20}


def fmt(x) -> str:
    """CSV cell with 12 significant digits for floats."""
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return str(x)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one ensemble run.

    Attributes
    ----------
    task : str
        One of ``TASKS``.
    lattice : dict
        ``{"kind": "chain", "n": ...}`` or ``{"kind": "heavy_hex", "rings": ...}``.
    theta_over_pi : tuple of float
        Couplings in units of pi, each in ``[0, 0.5]``.
    disorders : int
    seed : int
        Master seed.
    depth : int
        Cycles to simulate (imbalance, opdm), or depth instances (liom).
    params : dict
        Task-specific options.
    out : str or None
    """

    task: str
    lattice: dict
    theta_over_pi: tuple
    disorders: int
    seed: int
    depth: int
    params: dict = field(default_factory=dict)
    out: str | None = None

    def build_lattice(self) -> Lattice:
        if self.lattice["kind"] == CHAIN:
            return build_chain(self.lattice["n"])
        return build_heavy_hex(self.lattice["rings"])

    @property
    def n_sites(self) -> int:
        return self.build_lattice().n_sites

    def to_dict(self) -> dict:
        d = asdict(self)
        d["theta_over_pi"] = list(self.theta_over_pi)
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def realization_seed(self, index: int) -> int:
        return split_seed(self.seed, index)


def _reject_duplicates(pairs):
    out = {}
    for key, value in pairs:
        if key in out:
            raise ConfigError([f"duplicate key {key!r}"])
        out[key] = value
    return out


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def parse_config(document, task: str | None = None) -> ExperimentConfig:
    """Validate a JSON config document (text, bytes or already-decoded dict).

    Every violation is collected before raising. An out-of-range ``theta``
    raises ``DomainError``; any other problem raises ``ConfigError``. Both carry
    the complete list in ``violations``.
    """
    if isinstance(document, (str, bytes)):
        try:
            doc = json.loads(document, object_pairs_hook=_reject_duplicates)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"invalid JSON: {exc}"]) from None
    else:
        doc = dict(document)
    if not isinstance(doc, dict):
        raise ConfigError(["config must be a JSON object"])
    bad, domain = [], []
    for key in sorted(set(doc) - _TOP_KEYS):
        bad.append(f"unknown key {key!r}")

    kind = task or doc.get("task")
    if task is not None and doc.get("task") not in (None, task):
        bad.append(f"config task {doc.get('task')!r} conflicts with subcommand {task!r}")
    if kind not in TASKS:
        bad.append(f"task must be one of {', '.join(TASKS)}")

    lat = doc.get("lattice")
    if lat is None and "n" in doc:
        lat = {"kind": CHAIN, "n": doc["n"]}
    elif lat is not None and "n" in doc:
        bad.append("give either 'n' or 'lattice', not both")
    if not isinstance(lat, dict):
        bad.append("lattice missing: use 'n' or {'kind': ..., ...}")
        lat = {"kind": CHAIN, "n": 2}
    else:
        lat = dict(lat)
        lk = lat.get("kind", CHAIN)
        lat["kind"] = lk
        if lk == CHAIN:
            extra = set(lat) - {"kind", "n"}
            if not _is_int(lat.get("n")) or lat.get("n") < 2:
                bad.append("chain needs integer n >= 2")
        elif lk == HEAVY_HEX:
            extra = set(lat) - {"kind", "rings"}
            if lat.get("rings") not in (1, 3, 6, 10):
                bad.append("heavy_hex needs rings in {1, 3, 6, 10}")
        else:
            extra = set()
            bad.append(f"unknown lattice kind {lk!r}")
        for key in sorted(extra):
            bad.append(f"unknown lattice key {key!r}")

    thetas = doc.get("theta_over_pi")
    if _is_num(thetas):
        thetas = [thetas]
    if not isinstance(thetas, list) or not thetas or not all(_is_num(t) for t in thetas):
        bad.append("theta_over_pi must be a number or a nonempty list of numbers")
        thetas = []
    for t in thetas:
        if not 0.0 <= t <= 0.5:
            domain.append(f"theta_over_pi={t} outside [0, 0.5]")

    disorders = doc.get("disorders", 1)
    if not _is_int(disorders) or disorders < 1:
        bad.append("disorders must be a positive integer")
    seed = doc.get("seed", 0)
    if not _is_int(seed) or not 0 <= seed < 2 ** 64:
        bad.append("seed must be an unsigned 64-bit integer")
    depth = doc.get("depth", _DEFAULT_DEPTH.get(kind, 1))
    if not _is_int(depth) or depth < 1:
        bad.append("depth must be a positive integer")

    params = doc.get("params", {})
    if not isinstance(params, dict):
        bad.append("params must be an object")
        params = {}
    elif kind in _PARAM_KEYS:
        for key in sorted(set(params) - _PARAM_KEYS[kind]):
            bad.append(f"unknown {kind} param {key!r}")
        bad.extend(_check_params(kind, params))
    out = doc.get("out")
    if out is not None and not isinstance(out, str):
        bad.append("out must be a string path")

    if domain:
        err = DomainError("; ".join(domain + bad))
        err.violations = domain + bad
        raise err
    if bad:
        raise ConfigError(bad)
    return ExperimentConfig(kind, lat, tuple(float(t) for t in thetas), disorders, seed, depth,
                            params, out)


def _check_params(kind: str, params: dict) -> list[str]:
    bad = []
    p = params.get("noise_p", 0.0)
    if not _is_num(p) or not 0.0 <= p <= 1.0:
        bad.append("noise_p must lie in [0, 1]")
    for key in ("trajectories", "shots", "resamples", "bins"):
        if key in params and (not _is_int(params[key]) or params[key] < 1):
            bad.append(f"{key} must be a positive integer")
    if "scheme" in params:
        s = params["scheme"]
        if (not isinstance(s, list) or len(s) != 3 or not all(_is_int(v) for v in s)
                or not 1 <= s[0] <= s[1] or s[2] < 1):
            bad.append("scheme must be [p, k, l] with 1 <= p <= k and l >= 1")
    if params.get("mode", "exact") not in ("exact", "sampled"):
        bad.append("liom mode must be 'exact' or 'sampled'")
    for key in ("p_grid", "d_grid"):
        if key in params:
            g = params[key]
            if not isinstance(g, list) or not g or not all(_is_num(v) for v in g):
                bad.append(f"{key} must be a nonempty list of numbers")
    return bad


# ---------------------------------------------------------------------------
# task workers


def _cycle_for(cfg: ExperimentConfig, theta_over_pi: float, seed: int):
    lat = cfg.build_lattice()
    return build_cycle(lat, theta_over_pi * math.pi, sample_disorder(lat, seed))


def _task_level_stats(cfg, t, seed):
    spec = diagonalize_cycle(_cycle_for(cfg, t, seed))
    gr = adjacent_gap_ratios(spec, cfg.params.get("zero_tol", 0.0))
    hist, _ = np.histogram(gr.valid, bins=R_BINS, range=(0.0, 1.0))
    return {"r_sum": float(gr.valid.sum()), "r_count": int(len(gr.valid)),
            "flagged": int(gr.flagged.sum()), "r_hist": hist.tolist()}


def _task_entropy(cfg, t, seed):
    spec = diagonalize_cycle(_cycle_for(cfg, t, seed), eigenstates=True)
    gr = adjacent_gap_ratios(spec)
    ent = eigenstate_entropies(spec, cfg.params.get("n_left"))
    return {"r_sum": float(gr.valid.sum()), "r_count": int(len(gr.valid)),
            "flagged": int(gr.flagged.sum()), "entropy_mean": ent.mean_per_qubit,
            "entropy_var": ent.variance}


def _imbalance_curve(cycle, pattern, depth, p, trajectories, seed):
    n = cycle.n
    if p == 0:
        trajectories = 1
    acc = np.zeros((depth + 1, n))
    for k in range(trajectories):
        state = init_state(pattern)
        noise = NoiseSpec(p)
        gen = make_rng(split_seed(seed, k))
        acc[0] += z_expectations(state.amplitudes, n)
        for d in range(1, depth + 1):
            state = apply_cycle(state, cycle)
            if p > 0:
                state = apply_noise_trajectory(state, noise, gen)
            acc[d] += z_expectations(state.amplitudes, n)
    return imbalance(acc / trajectories, pattern).values


def _task_imbalance(cfg, t, seed):
    cycle = _cycle_for(cfg, t, seed)
    pattern = cdw_pattern(cycle.lattice)
    p = cfg.params.get("noise_p", 0.0)
    traj = cfg.params.get("trajectories", 20)
    out = {"values": _imbalance_curve(cycle, pattern, cfg.depth, p, traj, seed).tolist()}
    if p > 0 and cfg.params.get("renormalize", False):
        ref = _cycle_for(cfg, 0.0, seed)
        out["reference"] = _imbalance_curve(ref, pattern, cfg.depth, p, traj, seed).tolist()
    return out


def _task_opdm(cfg, t, seed):
    cycle = _cycle_for(cfg, t, seed)
    pattern = cdw_pattern(cycle.lattice)
    state = init_state(pattern)
    for _ in range(cfg.depth):
        state = apply_cycle(state, cycle)
    shots = cfg.params.get("shots")
    if shots is None:
        op = opdm_exact(state)
    else:
        bases = opdm_basis_set(cycle.n, seed)
        measured = {b: sample_counts(state, b, shots, split_seed(seed, i))
                    for i, b in enumerate(bases)}
        op = opdm_from_counts(measured, cycle.n, cfg.params.get("resamples", 0), seed)
    n0 = len(pattern.sets()[0])
    return {"occupations": np.asarray(op.occupations).tolist(), "delta": discontinuity(op, n0)}


def _scheme(cfg) -> MeasurementScheme:
    p, k, l = cfg.params.get("scheme", [2, 4, 6])
    return MeasurementScheme(p, k, l)


def _task_liom(cfg, t, seed):
    cycle = _cycle_for(cfg, t, seed)
    n = cycle.n
    sites = cfg.params.get("sites") or list(range(n))
    mode = cfg.params.get("mode", "exact")
    # ``depth`` counts depth instances d = 0..depth-1
    dmax = cfg.depth - 1
    policy = TruncationPolicy(cfg.params.get("max_support", min(8, n)), cfg.params.get("floor", 1e-6))
    lioms, profiles = [], []
    for site in sites:
        l0 = guess_simple(site, n)
        if mode == "exact":
            liom = extract_exact(cycle, l0, max(dmax, 1), policy, center=site)
        else:
            liom = extract_sampled(cycle, l0, _scheme(cfg), dmax, cfg.params.get("shots"),
                                   cfg.params.get("noise_p", 0.0),
                                   cfg.params.get("trajectories", 1), split_seed(seed, site),
                                   center=site)
        lioms.append(liom.to_dict(_scheme(cfg) if mode == "sampled" else None))
        profiles.append(weight_profile(liom, site, cycle.lattice).rows())
    return {"lioms": lioms, "profiles": profiles}


def _task_noise_sweep(cfg, t, seed):
    cycle = _cycle_for(cfg, t, seed)
    site = cfg.params.get("site", cycle.n // 2)
    p_grid = cfg.params.get("p_grid", [0.0, 0.005])
    d_grid = cfg.params.get("d_grid", list(range(1, cfg.depth + 1)))
    sw = noise_sweep(cycle, guess_simple(site, cycle.n), _scheme(cfg), p_grid, d_grid,
                     cfg.params.get("trajectories", 10), cfg.params.get("shots"), seed)
    return {"p_grid": sw.p_grid.tolist(), "d_grid": sw.d_grid.tolist(), "eps": sw.eps.tolist()}


_WORKERS = {
    "level_stats": _task_level_stats,
    "entropy": _task_entropy,
    "imbalance": _task_imbalance,
    "opdm": _task_opdm,
    "liom": _task_liom,
    "noise_sweep": _task_noise_sweep,
}


def run_task(cfg_dict: dict, theta_over_pi: float, index: int) -> dict:
    """Run one (theta, realization) task; failures are captured, not raised."""
    cfg = ExperimentConfig(**{**cfg_dict, "theta_over_pi": tuple(cfg_dict["theta_over_pi"])})
    seed = cfg.realization_seed(index)
    start = time.perf_counter()
    record = {"theta_over_pi": theta_over_pi, "index": index, "seed": seed}
    try:
        record["result"] = _WORKERS[cfg.task](cfg, theta_over_pi, seed)
        record["ok"] = True
    except Exception as exc:  # isolated per task by design
        record["ok"] = False
        record["error"] = f"{type(exc).__name__}: {exc}"
        record["traceback"] = traceback.format_exc(limit=5)
    record["seconds"] = time.perf_counter() - start
    return record


# ---------------------------------------------------------------------------
# ensembles and bundles


@dataclass
class ResultBundle:
    """Merged task records plus aggregated tables.

    ``tables`` maps a file stem to ``(columns, rows)``.
    """

    config: ExperimentConfig
    records: list
    tables: dict
    manifest: dict

    @property
    def task(self) -> str:
        return self.config.task

    def write(self, out: str | os.PathLike) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        for stem, (cols, rows) in self.tables.items():
            (out / f"{stem}.csv").write_text(table_csv(cols, rows))
        (out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True))
        bundle = {"config": self.config.to_dict(),
                  "records": [{k: v for k, v in r.items() if k not in ("seconds", "traceback")}
                              for r in self.records]}
        (out / "bundle.json").write_text(json.dumps(bundle, sort_keys=True))
        return out

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ResultBundle":
        path = Path(path)
        doc = json.loads((path / "bundle.json").read_text())
        cfg = parse_config(doc["config"])
        manifest_path = path / "manifest.json"
        manifest = json.loads(manifest_path.read_text()) if manifest_path.exists() else {}
        return cls(cfg, doc["records"], aggregate(cfg, doc["records"]), manifest)


def table_csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def run_ensemble(config: ExperimentConfig, jobs: int | None = None,
                 out: str | os.PathLike | None = None) -> ResultBundle:
    """Execute every (theta, realization) task and aggregate the results.

    Parameters
    ----------
    jobs : int, optional
        Worker processes; defaults to the machine's core count. ``1`` runs in
        the calling process.
    out : path, optional
        Output directory (overrides ``config.out``).
    """
    jobs = jobs or os.cpu_count() or 1
    start = time.time()
    cfg_dict = config.to_dict()
    keys = [(t, i) for t in config.theta_over_pi for i in range(config.disorders)]
    if jobs == 1 or len(keys) == 1:
        records = [run_task(cfg_dict, t, i) for t, i in keys]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_task, cfg_dict, t, i) for t, i in keys]
            records = [f.result() for f in futures]
    records.sort(key=lambda r: (r["theta_over_pi"], r["index"]))
    tables = aggregate(config, records)
    manifest = {
        "config": cfg_dict,
        "config_hash": config.digest(),
        "master_seed": config.seed,
        "seed_rule": SEED_RULE,
        "versions": {"floqmbl": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": _scipy_version()},
        "jobs": jobs,
        "wall_time_s": time.time() - start,
        "tasks": [{"theta_over_pi": r["theta_over_pi"], "index": r["index"], "seed": r["seed"],
                   "ok": r["ok"], "seconds": r["seconds"], "error": r.get("error")}
                  for r in records],
        "n_failed": sum(not r["ok"] for r in records),
    }
    if config.task == "liom" and config.params.get("mode", "exact") == "sampled":
        per = _scheme(config).circuit_count(config.depth)
        manifest["circuits_per_liom"] = per
        manifest["circuit_count"] = per
    bundle = ResultBundle(config, records, tables, manifest)
    target = out or config.out
    if target is not None:
        bundle.write(target)
    return bundle


def _scipy_version() -> str:
    import scipy
    return scipy.__version__


def _ok(records, theta=None):
    return [r for r in records if r.get("ok") and (theta is None or r["theta_over_pi"] == theta)]


def _thetas(records):
    return sorted({r["theta_over_pi"] for r in records})


def _stderr(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")


def aggregate(cfg: ExperimentConfig, records) -> dict:
    """Reduce task records to CSV tables (deterministic in record order)."""
    n = cfg.n_sites
    tables = {}
    if cfg.task in ("level_stats", "entropy"):
        rows, hist_rows = [], []
        for t in _thetas(records):
            rs = _ok(records, t)
            if not rs:
                continue
            per = [r["result"]["r_sum"] / r["result"]["r_count"] for r in rs]
            pooled = sum(r["result"]["r_sum"] for r in rs) / sum(r["result"]["r_count"] for r in rs)
            if cfg.task == "entropy":
                em = float(np.mean([r["result"]["entropy_mean"] for r in rs]))
                ev = float(np.mean([r["result"]["entropy_var"] for r in rs]))
            else:
                em = ev = float("nan")
            rows.append((t, n, len(rs), pooled, _stderr(per), em, ev))
            if cfg.task == "level_stats":
                counts = np.sum([r["result"]["r_hist"] for r in rs], axis=0)
                dens = counts / (counts.sum() / R_BINS)
                for b, c in enumerate(dens):
                    hist_rows.append((t, (b + 0.5) / R_BINS, float(c)))
        tables["spectral"] = (("theta_over_pi", "n", "n_disorders", "r_mean", "r_stderr",
                               "entropy_mean", "entropy_var"), rows)
        if hist_rows:
            tables["r_histogram"] = (("theta_over_pi", "r", "density"), hist_rows)
    elif cfg.task == "imbalance":
        rows = []
        for t in _thetas(records):
            rs = _ok(records, t)
            if not rs:
                continue
            curves = np.array([r["result"]["values"] for r in rs])
            if "reference" in rs[0]["result"]:
                ref = np.array([r["result"]["reference"] for r in rs]).mean(axis=0)
                a, g = fit_exponential(ref, pin_first=True)
                curves = curves / (a * np.exp(-g * np.arange(curves.shape[1])))
            mean = curves.mean(axis=0)
            err = (bootstrap(curves, 200, seed=cfg.seed)[1] if len(curves) > 1
                   else np.full(len(mean), float("nan")))
            for d, (v, e) in enumerate(zip(mean, err)):
                rows.append((t, d, float(v), float(e)))
        tables["imbalance"] = (("theta_over_pi", "d", "I", "I_err"), rows)
    elif cfg.task == "opdm":
        spec_rows, c_rows, d_rows = [], [], []
        bins = cfg.params.get("bins", 21)
        for t in _thetas(records):
            rs = _ok(records, t)
            if not rs:
                continue
            occ = np.array([r["result"]["occupations"] for r in rs])
            for r in rs:
                for k, nu in enumerate(r["result"]["occupations"]):
                    spec_rows.append((t, r["seed"], k, float(nu)))
            deltas = [r["result"]["delta"] for r in rs]
            d_rows.append((t, n, float(np.mean(deltas)), _stderr(deltas)))
            if occ.size >= 100:
                c = gap_contrast(occ, bins)
                if len(occ) > 1:
                    _, c_err = bootstrap(occ, 200, statistic=lambda a: gap_contrast(a, bins, 1),
                                         seed=cfg.seed)
                else:
                    c_err = float("nan")
            else:
                c, c_err = float("nan"), float("nan")
            c_rows.append((t, n, c, float(c_err)))
        tables["opdm_spectrum"] = (("theta_over_pi", "disorder_seed", "k", "nu_k"), spec_rows)
        tables["contrast"] = (("theta_over_pi", "n", "C", "C_err"), c_rows)
        tables["discontinuity"] = (("theta_over_pi", "n", "delta", "delta_err"), d_rows)
    elif cfg.task == "liom":
        eps_rows, w_rows = [], []
        for r in _ok(records):
            t = r["theta_over_pi"]
            for liom, prof in zip(r["result"]["lioms"], r["result"]["profiles"]):
                eps_rows.append((t, r["seed"], liom["center"], liom["epsilon"], liom["lambda"],
                                 liom["discarded_weight"]))
                for off, k, w in prof:
                    w_rows.append((t, r["seed"], liom["center"], off, k, w))
        tables["liom_epsilon"] = (("theta_over_pi", "seed", "center", "epsilon", "lambda",
                                   "discarded_weight"), eps_rows)
        tables["liom_weights"] = (("theta_over_pi", "seed", "center", "offset", "locality_k",
                                   "weight"), w_rows)
    elif cfg.task == "noise_sweep":
        rows = []
        for r in _ok(records):
            res = r["result"]
            for i, p in enumerate(res["p_grid"]):
                for j, d in enumerate(res["d_grid"]):
                    rows.append((r["theta_over_pi"], r["seed"], float(p), int(d), res["eps"][i][j]))
        tables["noise_sweep"] = (("theta_over_pi", "seed", "p", "D", "epsilon"), rows)
    return tables


# ---------------------------------------------------------------------------
# figure data

FIGURES = {
    "fig2c": ("imbalance", ("cycle", "theta_over_pi", "imbalance", "err")),
    "fig2d": ("opdm", ("theta_over_pi", "k", "nu_mean", "nu_err")),
    "fig2e": ("opdm", ("theta_over_pi", "n", "delta", "delta_err", "C", "C_err")),
    "fig3b": ("liom", ("offset", "locality_k", "weight")),
    "fig3e": ("liom", ("center", "lambda", "lambda_err", "epsilon", "epsilon_err")),
    "figS2a": ("level_stats", ("theta_over_pi", "r", "density", "poisson", "goe")),
    "figS2b": ("level_stats", ("theta_over_pi", "n", "r_mean", "r_err")),
    "figS3": ("entropy", ("theta_over_pi", "n", "entropy_mean", "entropy_var", "page")),
    "figS6": ("noise_sweep", ("p", "D", "epsilon", "epsilon_err")),
}


def _grouped(rows, key):
    out = {}
    for row in rows:
        out.setdefault(key(row), []).append(row)
    return sorted(out.items())


def emit_figure_data(bundles, figure_id: str, out: str | os.PathLike | None = None):
    """Plot-ready table for ``figure_id`` from one or more bundles.

    Returns ``(columns, rows)``; with ``out`` also writes ``<figure_id>.csv``
    there and returns its path as a third element.

    Raises
    ------
    DependencyError
        When no bundle holds the task the figure needs.
    """
    if figure_id not in FIGURES:
        raise DomainError(f"unknown figure {figure_id!r}; choose from {', '.join(FIGURES)}")
    if isinstance(bundles, ResultBundle):
        bundles = [bundles]
    need, cols = FIGURES[figure_id]
    accepted = {need, "entropy"} if need == "level_stats" and figure_id == "figS2b" else {need}
    use = [b for b in bundles if b.task in accepted]
    if not use:
        raise DependencyError(f"figure {figure_id} needs a {need!r} task result")
    rows = []
    for b in use:
        n = b.config.n_sites
        if figure_id == "fig2c":
            rows += [(d, t, i, e) for t, d, i, e in b.tables["imbalance"][1]]
        elif figure_id == "fig2d":
            for t, grp in _grouped(b.tables["opdm_spectrum"][1], lambda r: r[0]):
                occ = {}
                for _, _, k, nu in grp:
                    occ.setdefault(k, []).append(nu)
                rows += [(t, k, float(np.mean(v)), _stderr(v)) for k, v in sorted(occ.items())]
        elif figure_id == "fig2e":
            cmap = {r[0]: r for r in b.tables["contrast"][1]}
            for t, _, dl, de in b.tables["discontinuity"][1]:
                rows.append((t, n, dl, de, cmap[t][2], cmap[t][3]))
        elif figure_id == "fig3b":
            w = {}
            for _, _, _, off, k, val in b.tables["liom_weights"][1]:
                w.setdefault((off, k), []).append(val)
            rows += [(off, k, float(np.mean(v))) for (off, k), v in sorted(w.items())]
        elif figure_id == "fig3e":
            for c, grp in _grouped(b.tables["liom_epsilon"][1], lambda r: r[2]):
                lam = [g[4] for g in grp]
                eps = [g[3] for g in grp]
                rows.append((c, float(np.mean(lam)), _stderr(lam), float(np.mean(eps)), _stderr(eps)))
        elif figure_id == "figS2a":
            for t, r, dens in b.tables["r_histogram"][1]:
                rows.append((t, r, dens, float(poisson_r_density(r)), float(goe_r_density(r))))
        elif figure_id == "figS2b":
            rows += [(t, nn, rm, re) for t, nn, _, rm, re, _, _ in b.tables["spectral"][1]]
        elif figure_id == "figS3":
            rows += [(t, nn, em, ev, page_value(nn)) for t, nn, _, _, _, em, ev in b.tables["spectral"][1]]
        elif figure_id == "figS6":
            for (p, d), grp in _grouped(b.tables["noise_sweep"][1], lambda r: (r[2], r[3])):
                e = [g[4] for g in grp]
                rows.append((p, d, float(np.mean(e)), _stderr(e)))
    rows.sort(key=lambda r: tuple(r))
    if out is None:
        return cols, rows
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    path = path / f"{figure_id}.csv"
    path.write_text(table_csv(cols, rows))
    return cols, rows, path


# ---------------------------------------------------------------------------
# CLI


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="floqmbl", description="Disordered Floquet circuit experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for task in TASKS:
        sp = sub.add_parser(task.replace("_", "-"), help=f"run a {task} ensemble")
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--seed", type=int, help="override the master seed")
        sp.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
        sp.add_argument("--out", help="output directory")
    ef = sub.add_parser("emit-figure", help="write plot-ready CSV from run outputs")
    ef.add_argument("--figure", required=True, choices=sorted(FIGURES))
    ef.add_argument("--bundle", action="append", required=True, help="run output directory")
    ef.add_argument("--out", required=True, help="directory for the figure CSV")
    ef.add_argument("--config", help=argparse.SUPPRESS)
    ef.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    ef.add_argument("--jobs", type=int, help=argparse.SUPPRESS)
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "emit-figure":
            bundles = [ResultBundle.load(p) for p in args.bundle]
            _, rows, path = emit_figure_data(bundles, args.figure, args.out)
            print(f"wrote {len(rows)} rows to {path}")
            return 0
        task = args.command.replace("-", "_")
        doc = json.loads(Path(args.config).read_text(), object_pairs_hook=_reject_duplicates)
        if args.seed is not None:
            doc["seed"] = args.seed
        cfg = parse_config(doc, task=task)
        out = args.out or cfg.out
        if out is None:
            raise ConfigError(["no output directory: pass --out or set 'out'"])
        bundle = run_ensemble(cfg, args.jobs, out)
        failed = bundle.manifest["n_failed"]
        print(f"{len(bundle.records) - failed}/{len(bundle.records)} tasks ok; wrote {out}")
        return 0 if failed == 0 else 3
    except (ConfigError, DomainError, DependencyError) as exc:
        for line in getattr(exc, "violations", None) or [str(exc)]:
            print(f"error: {line}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
