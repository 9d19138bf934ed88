"""Experiment orchestration: metrics, hyperparameter search, scenario runs
and result files.

A run first tunes every method on a held-out realization, freezes the
chosen hyperparameters and then scores all methods on the same
``realizations`` streams.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import yaml

from .baselines import RandomFeatureMap, ridge_solve, wknn_predict, pretrain_it1, EmptyAttachmentError
from .filtering import DEFAULT_GRID_SIZE, write_frequency_csv
from .movielens import It2Setting, ad_at_10, load_ratings, prepare_realization, top10_lists
from .online import (DivergenceError, OnlineLearnerConfig, Replay, compute_replay,
                     replay_grid_sse, run_replay, static_regret)
from .synthgen import SyntheticConfig, generate_stream, stream_digest

log = logging.getLogger(__name__)

METHODS = ("prop", "bs", "okl", "it1", "it2", "wknn")
SCENARIOS = ("kernel", "filter", "wmean", "movielens")
SYNTHETIC_DEFAULT_METHODS = ("prop", "bs", "okl", "it1", "wknn")
MOVIELENS_DEFAULT_METHODS = ("prop", "bs", "okl", "it2", "wknn")
GRID_POINTS_PER_DECADE = 7


class ExperimentError(RuntimeError):
    pass


def rnmse(predictions, truths) -> float:
    """``sqrt(sum (p - x)^2 / sum x^2)``."""
    p = np.asarray(predictions, dtype=float)
    x = np.asarray(truths, dtype=float)
    if p.shape != x.shape or p.size == 0:
        raise ValueError("predictions and truths must be nonempty and of equal length")
    energy = float(x @ x)
    if energy == 0:
        raise ValueError("truth sequence has zero energy")
    d = p - x
    return math.sqrt(float(d @ d) / energy)


def log_grid(lo: float, hi: float, per_decade: int = 1) -> list:
    """Log-spaced values from ``lo`` to ``hi`` inclusive."""
    n = int(round((math.log10(hi) - math.log10(lo)) * per_decade)) + 1
    return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), n)]


@dataclass
class ExperimentConfig:
    scenario: str = "filter"
    methods: tuple = ()
    realizations: int = 20
    seed: int = 0
    K: int = 5
    # synthetic
    N: int = 100
    p: float = 0.2
    P: int = 5
    T: int = 1000
    generator_mu: float = 1.0
    it1_sets: int = 50
    # hyperparameter search
    eta_grid: list = field(default_factory=lambda: log_grid(1e-6, 10, GRID_POINTS_PER_DECADE))
    mu_grid: list = field(default_factory=lambda: log_grid(1e-6, 10, GRID_POINTS_PER_DECADE))
    ridge_grid: list = field(default_factory=lambda: log_grid(1e-4, 10, GRID_POINTS_PER_DECADE))
    it2_lam_grid: list = field(default_factory=lambda: log_grid(1e-4, 10))
    okl_sigma2: list = field(default_factory=lambda: [1.0, 10.0])
    okl_features: int | None = None
    it2_kernels: list = field(default_factory=lambda: ["linear", "gaussian:1", "gaussian:5",
                                                       "gaussian:10"])
    tuning_seed: int | None = None
    tuning_realizations: int | None = None
    params: dict | None = None
    # movielens
    data_path: str = "data/ml-100k/u.data"
    n_start: int = 500
    knn: int = 15
    # output
    snapshot_interval: int | None = None
    grid_size: int = DEFAULT_GRID_SIZE
    max_failure_fraction: float = 0.1

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if isinstance(self.methods, str):
            self.methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        if not self.methods:
            self.methods = (MOVIELENS_DEFAULT_METHODS if self.scenario == "movielens"
                            else SYNTHETIC_DEFAULT_METHODS)
        self.methods = tuple(self.methods)
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.realizations < 1:
            raise ValueError("realizations must be >= 1")
        for name in ("eta_grid", "mu_grid", "ridge_grid", "it2_lam_grid", "okl_sigma2"):
            if not getattr(self, name):
                raise ValueError(f"{name} is empty")
        if self.snapshot_interval is None:
            self.snapshot_interval = 2000 if self.scenario == "movielens" else 100
        if self.okl_features is None:
            self.okl_features = self.K + 1
        if self.tuning_seed is None:
            self.tuning_seed = self.seed + 1_000_003
        if self.tuning_realizations is None:
            self.tuning_realizations = 1 if self.scenario == "movielens" else 5

    @property
    def synthetic(self) -> bool:
        return self.scenario != "movielens"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["methods"] = list(self.methods)
        return d

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)

    @staticmethod
    def read_mapping(path) -> dict:
        """Raw key-value pairs of a flat YAML (or JSON) config file."""
        data = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{path}: expected a key-value mapping")
        unknown = set(data) - {f.name for f in fields(ExperimentConfig)}
        if unknown:
            raise ValueError(f"{path}: unknown config keys {sorted(unknown)}")
        return data

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_mapping(cls.read_mapping(path))


def parse_it2_kernel(spec: str) -> tuple[str, float]:
    if spec == "linear":
        return "linear", 1.0
    name, _, s2 = spec.partition(":")
    if name != "gaussian" or not s2:
        raise ValueError(f"bad IT2 kernel spec {spec!r}")
    return "gaussian", float(s2)


# -- per-realization data ---------------------------------------------------------

@dataclass
class Instance:
    """One realization prepared for scoring; shared read-only by every method."""

    seed: int
    replay: Replay
    attachments: list
    okl_dim: int
    wknn: np.ndarray
    digest: str
    pretrain: Callable
    it2_rows: dict = field(default_factory=dict)
    event_of: np.ndarray | None = None
    items: np.ndarray | None = None
    users: np.ndarray | None = None
    item_labels: np.ndarray | None = None
    n_items: int = 0
    it1_sets: int = 1

    @property
    def T(self) -> int:
        return len(self.replay)


def _synthetic_instance(cfg: ExperimentConfig, seed: int) -> Instance:
    sc = SyntheticConfig(N=cfg.N, p=cfg.p, P=cfg.P, T=cfg.T, K=cfg.K, mode=cfg.scenario,
                         seed=seed, generator_mu=cfg.generator_mu)
    stream = generate_stream(sc)
    replay, xfull = compute_replay(stream.g0, stream.x0, stream.events, cfg.K)
    wk = np.zeros(len(stream.events))
    for t, ev in enumerate(stream.events):
        try:
            wk[t] = wknn_predict(ev.attachment, xfull[: ev.attachment.dim])
        except EmptyAttachmentError:
            wk[t] = 0.0
    mrng = np.random.default_rng([seed, 7])
    n_obs = int(round(0.8 * cfg.N))
    masks = []
    for _ in range(cfg.it1_sets):
        m = np.zeros(cfg.N, dtype=bool)
        m[mrng.choice(cfg.N, size=n_obs, replace=False)] = True
        masks.append(m)

    @lru_cache(maxsize=None)
    def pretrain(mu: float) -> tuple:
        return tuple(pretrain_it1(stream.g0, stream.x0, m, mu, cfg.K) for m in masks)

    return Instance(seed=seed, replay=replay, attachments=[ev.attachment for ev in stream.events],
                    okl_dim=cfg.N + cfg.T, wknn=wk, digest=stream_digest(stream.events),
                    pretrain=pretrain, it1_sets=cfg.it1_sets)


_CORPUS_CACHE: dict = {}


def _corpus(path: str):
    key = str(Path(path).resolve())
    if key not in _CORPUS_CACHE:
        _CORPUS_CACHE[key] = load_ratings(path)
    return _CORPUS_CACHE[key]


def _movielens_instance(cfg: ExperimentConfig, seed: int, it2_settings: Sequence[It2Setting]) -> Instance:
    corpus = _corpus(cfg.data_path)
    R = prepare_realization(corpus, seed=seed, n_start=cfg.n_start, k=cfg.knn, K=cfg.K,
                            it2_settings=it2_settings)
    h = __import__("hashlib").sha256()
    for ev in R.events:
        h.update(np.asarray(ev.attachment.indices).tobytes())
        h.update(np.asarray(ev.attachment.weights).tobytes())
        h.update(np.asarray(ev.target_items).tobytes())
    h.update(R.truths.tobytes())

    @lru_cache(maxsize=None)
    def pretrain(mu: float) -> tuple:
        return (R.pretrain(mu, cfg.K, seed=[seed, 11]),)

    return Instance(seed=seed, replay=Replay(R.rows, R.truths),
                    attachments=R.attachment_per_target(),
                    okl_dim=corpus.n_users, wknn=R.wknn, digest=h.hexdigest(), pretrain=pretrain,
                    it2_rows=R.it2_rows, event_of=R.event_of, items=R.items,
                    users=corpus.user_ids[R.node_users[cfg.n_start:][R.event_of]],
                    item_labels=corpus.item_ids[R.items], n_items=R.n_items)


def _it2_settings(cfg: ExperimentConfig, lams: Iterable[float]) -> list:
    out = []
    for spec in cfg.it2_kernels:
        kernel, s2 = parse_it2_kernel(spec)
        for lam in lams:
            out.append(It2Setting(kernel, s2, float(lam)))
    return out


def build_instance(cfg: ExperimentConfig, seed: int, params: dict | None = None) -> Instance:
    if cfg.synthetic:
        return _synthetic_instance(cfg, seed)
    settings = []
    if "it2" in cfg.methods:
        if params and "it2" in params:
            p = params["it2"]
            settings = [It2Setting(p["kernel"], p["sigma2"], p["lam"])]
        else:
            settings = _it2_settings(cfg, cfg.it2_lam_grid)
    return _movielens_instance(cfg, seed, settings)


# -- methods -----------------------------------------------------------------------

@dataclass
class MethodRun:
    predictions: np.ndarray
    score: float
    losses: np.ndarray | None = None
    h_norms: np.ndarray | None = None
    state: object = None
    taps: np.ndarray | None = None


def _safe_rnmse(p, x) -> float:
    if not np.all(np.isfinite(p)):
        return math.inf
    return rnmse(p, x)


def _okl_rows(inst: Instance, sigma2: float, D: int) -> np.ndarray:
    fmap = RandomFeatureMap(inst.okl_dim, D, sigma2, seed=[inst.seed, 3])
    cache = {}
    Z = np.empty((inst.T, D))
    for t, a in enumerate(inst.attachments):
        key = id(a)
        if key not in cache:
            cache[key] = fmap(a)
        Z[t] = cache[key]
    return Z


def run_method(method: str, inst: Instance, params: dict, cfg: ExperimentConfig,
               snapshot_interval: int | None = None) -> MethodRun:
    """Score one method with fixed hyperparameters on one instance."""
    y = inst.replay.targets
    if method == "prop":
        lc = OnlineLearnerConfig(params["eta"], params["mu"], cfg.K)
        st = run_replay(inst.replay, lc, snapshot_interval)
        p = st.predictions
        return MethodRun(p, _safe_rnmse(p, y), np.array(st.loss_history), np.array(st.h_norms), st,
                         st.h.copy())
    if method == "bs":
        u = ridge_solve(inst.replay.rows, y, params["mu_b"])
        p = inst.replay.rows @ u
        return MethodRun(p, _safe_rnmse(p, y), 0.5 * (p - y) ** 2,
                         np.full(y.size, np.linalg.norm(u)), None, u)
    if method == "okl":
        D = cfg.okl_features
        Z = _okl_rows(inst, params["sigma2"], D)
        st = run_replay(Replay(Z, y), OnlineLearnerConfig(params["eta"], params["mu"], D - 1))
        p = st.predictions
        return MethodRun(p, _safe_rnmse(p, y), np.array(st.loss_history), np.array(st.h_norms), st)
    if method == "it1":
        hs = inst.pretrain(params["mu"])
        scores = [_safe_rnmse(inst.replay.rows @ h, y) for h in hs]
        p = inst.replay.rows @ hs[0]
        return MethodRun(p, float(np.mean(scores)), 0.5 * (p - y) ** 2,
                         np.full(y.size, np.linalg.norm(hs[0])), None, hs[0])
    if method == "it2":
        if not inst.it2_rows:
            raise ExperimentError("it2 needs node features; only available for movielens")
        key = It2Setting(params["kernel"], params["sigma2"], params["lam"]).key
        h = inst.pretrain(params["mu"])[0]
        p = inst.it2_rows[key] @ h
        return MethodRun(p, _safe_rnmse(p, y), 0.5 * (p - y) ** 2,
                         np.full(y.size, np.linalg.norm(h)), None, h)
    if method == "wknn":
        p = inst.wknn
        return MethodRun(p, _safe_rnmse(p, y), 0.5 * (p - y) ** 2, None)
    raise ValueError(f"unknown method {method!r}")


def candidates(method: str, cfg: ExperimentConfig) -> list:
    """Hyperparameter grid of a method, in tie-break order."""
    if method == "prop":
        return [{"eta": e, "mu": m} for e in sorted(cfg.eta_grid) for m in sorted(cfg.mu_grid)]
    if method == "okl":
        return [{"sigma2": s, "eta": e, "mu": m} for e in sorted(cfg.eta_grid)
                for m in sorted(cfg.mu_grid) for s in sorted(cfg.okl_sigma2)]
    if method == "bs":
        return [{"mu_b": m} for m in sorted(cfg.ridge_grid)]
    if method == "it1":
        return [{"mu": m} for m in sorted(cfg.ridge_grid)]
    if method == "it2":
        out = []
        for spec in cfg.it2_kernels:
            kernel, s2 = parse_it2_kernel(spec)
            for lam in sorted(cfg.it2_lam_grid):
                for m in sorted(cfg.ridge_grid):
                    out.append({"kernel": kernel, "sigma2": s2, "lam": lam, "mu": m})
        return out
    if method == "wknn":
        return [{}]
    raise ValueError(f"unknown method {method!r}")


def grid_search(cands: Sequence[dict], evaluate: Callable[[dict], float]):
    """Exhaustive search; returns ``(best, scores)``.

    Failed or non-finite evaluations rank last; ties keep the earlier
    candidate, so ``cands`` order decides (smaller eta, then smaller mu).
    """
    if not cands:
        raise ValueError("empty grid")
    scores = []
    best, best_score = None, math.inf
    for c in cands:
        try:
            s = float(evaluate(c))
        except (DivergenceError, FloatingPointError, np.linalg.LinAlgError) as exc:
            log.debug("candidate %s failed: %s", c, exc)
            s = math.nan
        scores.append(s)
        if math.isfinite(s) and s < best_score:
            best, best_score = c, s
    if best is None:
        raise ExperimentError("every grid candidate diverged or failed")
    return best, scores


def _ogd_grid_scores(replays: Sequence[Replay], cands: Sequence[dict]) -> np.ndarray:
    """Mean rNMSE over ``replays`` of OGD at every candidate's ``(eta, mu)``."""
    etas = [c["eta"] for c in cands]
    mus = [c["mu"] for c in cands]
    scores = np.zeros(len(cands))
    for rep in replays:
        sse, _ = replay_grid_sse(rep, etas, mus)
        scores += np.sqrt(sse / float(rep.targets @ rep.targets))
    return scores / len(replays)


def _fast_scores(method: str, cfg: ExperimentConfig, instances: Sequence[Instance],
                 cands: Sequence[dict]) -> dict | None:
    """Vectorized scores for the OGD-based methods; ``None`` for the rest."""
    if method == "prop":
        scores = _ogd_grid_scores([inst.replay for inst in instances], cands)
    elif method == "okl":
        scores = np.full(len(cands), np.nan)
        for s2 in sorted(set(c["sigma2"] for c in cands)):
            idx = [i for i, c in enumerate(cands) if c["sigma2"] == s2]
            reps = [Replay(_okl_rows(inst, s2, cfg.okl_features), inst.replay.targets)
                    for inst in instances]
            scores[idx] = _ogd_grid_scores(reps, [cands[i] for i in idx])
    else:
        return None
    return {_key(c): float(v) for c, v in zip(cands, scores)}


def _key(c: dict) -> tuple:
    return tuple(sorted(c.items()))


def tune(cfg: ExperimentConfig, instances: Sequence[Instance] | None = None) -> dict:
    """Select each method's hyperparameters on the tuning realizations.

    A candidate's score is its mean rNMSE over the tuning instances; one
    divergence disqualifies it.
    """
    if instances is None:
        instances = [build_instance(cfg, cfg.tuning_seed + i) for i in range(cfg.tuning_realizations)]
    chosen = {}
    for method in cfg.methods:
        if method == "it2" and not all(inst.it2_rows for inst in instances):
            raise ExperimentError("it2 needs node features; only available for movielens")
        cands = candidates(method, cfg)
        fast = _fast_scores(method, cfg, instances, cands)
        if fast is not None:
            evaluate = lambda c: fast[_key(c)]
        else:
            evaluate = lambda c: np.mean([run_method(method, inst, c, cfg).score for inst in instances])
        with np.errstate(all="ignore"):
            best, _ = grid_search(cands, evaluate)
        chosen[method] = best
        log.info("tuned %s: %s", method, best)
    return chosen


# -- runs ----------------------------------------------------------------------------

@dataclass
class MethodSummary:
    rnmse: float
    sdev: float
    per_realization: list
    params: dict
    ad_at_10: float | None = None
    ad_per_realization: list | None = None


@dataclass
class RunResult:
    scenario: str
    methods: dict
    normalized_regret: float | None
    regret_per_realization: list
    snapshots: list
    batch_taps: list | None
    digests: list
    excluded: int
    timing: dict
    config: dict
    n_steps: int = 0
    traces: dict = field(default_factory=dict, compare=False, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("traces")
        d["methods"] = {k: asdict(v) for k, v in self.methods.items()}
        d["snapshots"] = [[int(s), list(map(float, h))] for s, h in self.snapshots]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunResult":
        d = dict(d)
        d["methods"] = {k: MethodSummary(**v) for k, v in d["methods"].items()}
        d["snapshots"] = [[int(s), list(h)] for s, h in d["snapshots"]]
        return cls(**d)


def _sample_sdev(values: Sequence[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def run_realization(cfg: ExperimentConfig, params: dict, seed: int, keep_traces: bool = False,
                    inst: Instance | None = None) -> dict:
    inst = inst or build_instance(cfg, seed, params)
    digest_before = inst.digest
    out = {"seed": seed, "digest": inst.digest, "T": inst.T, "scores": {}, "ad": {}, "traces": {}}
    for method in cfg.methods:
        t0 = time.perf_counter()
        run = run_method(method, inst, params[method], cfg,
                         cfg.snapshot_interval if method == "prop" else None)
        out.setdefault("timing", {})[method] = (time.perf_counter() - t0) / max(inst.T, 1)
        out["scores"][method] = run.score
        if inst.event_of is not None:
            lists = top10_lists(inst.event_of, inst.items, run.predictions)
            out["ad"][method] = ad_at_10(lists, inst.n_items)
        if method == "prop":
            mu = params["prop"]["mu"]
            st = run.state
            u = ridge_solve(inst.replay.rows, inst.replay.targets, 2.0 * inst.T * mu)
            rep = static_regret(st.loss_history, u, inst.replay, mu)
            out["regret"] = rep.normalized_regret
            out["snapshots"] = [[int(s), h.tolist()] for s, h in st.snapshots]
        if method == "bs":
            out["batch_taps"] = run.taps.tolist()
        if keep_traces:
            out["traces"][method] = {
                "prediction": run.predictions, "truth": inst.replay.targets,
                "loss": run.losses, "h_norm": run.h_norms,
                "user": inst.users, "item": inst.item_labels,
            }
    if inst.digest != digest_before:
        raise ExperimentError("instance was modified while scoring")
    return out


def run_scenario(cfg: ExperimentConfig, progress: Callable[[str], None] | None = None) -> RunResult:
    t_start = time.perf_counter()
    note = progress or (lambda msg: log.info(msg))
    if cfg.synthetic and "it2" in cfg.methods:
        raise ExperimentError("it2 needs node features; synthetic nodes have none")
    params = cfg.params
    if params is None or set(cfg.methods) - set(params):
        note(f"tuning on seed {cfg.tuning_seed}")
        params = {**(params or {}), **tune(cfg)}
    t_tuned = time.perf_counter()
    results, excluded = [], 0
    for r in range(cfg.realizations):
        seed = cfg.seed + r
        try:
            results.append(run_realization(cfg, params, seed, keep_traces=not results))
        except (DivergenceError, np.linalg.LinAlgError, ExperimentError, ValueError) as exc:
            log.warning("realization %d (seed %d) excluded: %s", r, seed, exc)
            excluded += 1
        note(f"realization {r + 1}/{cfg.realizations} done")
    if excluded > cfg.max_failure_fraction * cfg.realizations:
        raise ExperimentError(f"{excluded}/{cfg.realizations} realizations failed")
    methods = {}
    for m in cfg.methods:
        vals = [res["scores"][m] for res in results]
        ads = [res["ad"][m] for res in results if m in res["ad"]]
        methods[m] = MethodSummary(
            rnmse=float(np.mean(vals)), sdev=_sample_sdev(vals), per_realization=vals,
            params=params[m], ad_at_10=float(np.mean(ads)) if ads else None,
            ad_per_realization=ads or None)
    regrets = [res["regret"] for res in results if "regret" in res]
    first = results[0] if results else {}
    timing = {"tuning_s": t_tuned - t_start, "total_s": time.perf_counter() - t_start}
    if results:
        for m in cfg.methods:
            timing[f"{m}_s_per_step"] = float(np.mean([res["timing"][m] for res in results]))
    return RunResult(
        scenario=cfg.scenario, methods=methods,
        normalized_regret=float(np.mean(regrets)) if regrets else None,
        regret_per_realization=regrets, snapshots=first.get("snapshots", []),
        batch_taps=first.get("batch_taps"), digests=[res["digest"] for res in results],
        excluded=excluded, timing=timing, config=cfg.to_dict(), n_steps=first.get("T", 0),
        traces=first.get("traces", {}))


# -- output --------------------------------------------------------------------------

SUMMARY_COLUMNS = ["method", "rnmse", "sdev", "ad_at_10", "normalized_regret"]


def summary_rows(result: RunResult) -> list:
    rows = []
    for m, s in result.methods.items():
        rows.append({"method": m, "rnmse": s.rnmse, "sdev": s.sdev, "ad_at_10": s.ad_at_10,
                     "normalized_regret": result.normalized_regret if m == "prop" else None})
    return rows


def format_table(rows: list) -> str:
    def fmt(v):
        if v is None:
            return "-"
        return f"{v:.4g}" if isinstance(v, float) else str(v)

    cells = [SUMMARY_COLUMNS] + [[fmt(r[c]) for c in SUMMARY_COLUMNS] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(SUMMARY_COLUMNS))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells) + "\n"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def emit_results(result: RunResult, out_dir) -> list:
    """Write metrics JSON, summary table, trace and frequency CSVs; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    metrics = {
        m: {"rnmse": s.rnmse, "sdev": s.sdev, "ad_at_10": s.ad_at_10,
            "normalized_regret": result.normalized_regret if m == "prop" else None}
        for m, s in result.methods.items()
    }
    p = out / "metrics.json"
    p.write_text(json.dumps(metrics, indent=2))
    written.append(p)
    p = out / "result.json"
    p.write_text(json.dumps(result.to_dict(), indent=2))
    written.append(p)

    rows = summary_rows(result)
    p = out / "summary.csv"
    with p.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(v) for k, v in r.items()})
    written.append(p)
    p = out / "summary.txt"
    p.write_text(format_table(rows))
    written.append(p)

    for method, tr in result.traces.items():
        p = out / f"trace_{method}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "prediction", "truth", "loss", "h_norm", "method"])
            n = len(tr["prediction"])
            loss = tr.get("loss")
            hn = tr.get("h_norm")
            for t in range(n):
                w.writerow([t + 1, _fmt(tr["prediction"][t]), _fmt(tr["truth"][t]),
                            _fmt(loss[t]) if loss is not None else "",
                            _fmt(hn[t]) if hn is not None else "", method])
        written.append(p)
        if tr.get("user") is not None:
            p = out / f"predictions_{method}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["user", "item", "predicted", "true"])
                for u, i, pr, x in zip(tr["user"], tr["item"], tr["prediction"], tr["truth"]):
                    w.writerow([int(u), int(i), _fmt(pr), _fmt(x)])
            written.append(p)

    if result.snapshots:
        p = out / "frequency_online.csv"
        write_frequency_csv(p, [(s, np.asarray(h)) for s, h in result.snapshots],
                            result.config.get("grid_size", DEFAULT_GRID_SIZE))
        written.append(p)
    if result.batch_taps is not None:
        p = out / "frequency_batch.csv"
        write_frequency_csv(p, [(result.n_steps, np.asarray(result.batch_taps))],
                            result.config.get("grid_size", DEFAULT_GRID_SIZE))
        written.append(p)
    return written


# -- threshold checks ----------------------------------------------------------------

def acceptance_checks(result: RunResult) -> list:
    """``(name, passed, detail)`` for the thresholds that apply to the scenario."""
    m = {k: v.rnmse for k, v in result.methods.items()}
    checks = []

    def add(name, cond, detail):
        checks.append((name, bool(cond), detail))

    sc = result.scenario
    if sc == "filter":
        if {"bs", "prop"} <= m.keys():
            add("bs < prop", m["bs"] < m["prop"], f"{m['bs']:.4g} < {m['prop']:.4g}")
            add("bs < 0.01", m["bs"] < 0.01, f"{m['bs']:.4g}")
        if {"prop", "it1"} <= m.keys():
            add("prop < it1", m["prop"] < m["it1"], f"{m['prop']:.4g} < {m['it1']:.4g}")
        if {"prop", "okl"} <= m.keys():
            add("prop < okl", m["prop"] < m["okl"], f"{m['prop']:.4g} < {m['okl']:.4g}")
        if "prop" in m:
            add("prop in [0.03, 0.20]", 0.03 <= m["prop"] <= 0.20, f"{m['prop']:.4g}")
        if result.normalized_regret is not None:
            add("normalized regret <= 0.01", result.normalized_regret <= 0.01,
                f"{result.normalized_regret:.4g}")
    elif sc == "wmean":
        if "wknn" in m:
            add("wknn == 0", m["wknn"] == 0.0, f"{m['wknn']:.4g}")
        if {"prop", "okl"} <= m.keys():
            add("prop < okl", m["prop"] < m["okl"], f"{m['prop']:.4g} < {m['okl']:.4g}")
        if result.normalized_regret is not None:
            add("normalized regret <= 0.02", result.normalized_regret <= 0.02,
                f"{result.normalized_regret:.4g}")
    elif sc == "kernel":
        if {"prop", "okl"} <= m.keys():
            add("okl <= prop + 0.15", m["okl"] <= m["prop"] + 0.15,
                f"{m['okl']:.4g} <= {m['prop'] + 0.15:.4g}")
    else:
        if "prop" in m:
            add("prop in [0.52, 0.62]", 0.52 <= m["prop"] <= 0.62, f"{m['prop']:.4g}")
        if {"bs", "prop"} <= m.keys():
            add("bs <= prop + 0.02", m["bs"] <= m["prop"] + 0.02,
                f"{m['bs']:.4g} <= {m['prop'] + 0.02:.4g}")
        for other in ("okl", "wknn"):
            if {"prop", other} <= m.keys():
                add(f"prop < {other}", m["prop"] < m[other], f"{m['prop']:.4g} < {m[other]:.4g}")
        ad = {k: v.ad_at_10 for k, v in result.methods.items()}
        if ad.get("prop") is not None and ad.get("bs") is not None:
            add("AD@10(prop) - AD@10(bs) >= 0.02", ad["prop"] - ad["bs"] >= 0.02,
                f"{ad['prop']:.4g} - {ad['bs']:.4g}")
    return checks
