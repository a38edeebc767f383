"""End-to-end workflow: partition, factor model with order search, DAG candidates, comparison."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import datagen
from .comparison import ComparisonReport, chain_test_loglik, compare_models
from .dag import edge_list, run_dag_chain, select_best_candidate
from .distributions import RngStream
from .factor import run_factor_chain
from .gp import SNIM_MAX_ENUMERATION, run_gp_chain
from .model import Dataset, Hyperparameters, Permutation, partition, standardize, validate_hyperparameters
from .ordering import PermutationCandidateSet, top_candidates

MODELS = ("fm", "dag", "dag-latent", "cslim", "snim")
STEPS = ("partition", "factor_inference", "factor_summary", "candidate_selection", "dag_inference", "dag_summary")
WORKERS_ENV = "SLIM_WORKERS"

# stream ids so every chain has its own reproducible generator
_FM_STREAM = 100
_DAG_STREAM = 1000
_EVAL_STREAM = 5000


@dataclass
class RunConfig:
    """Everything needed to reproduce one workflow run."""

    model: str = "dag"
    data: Optional[str] = None
    generator: Optional[str] = None
    seed: int = 0
    out: str = "slim-run"
    test_fraction: float = 0.2
    fm_chains: int = 1
    samples: Optional[int] = None
    burnin: Optional[int] = None
    m_top: int = 10
    beta_m: Optional[float] = None
    latents: int = 0
    dense: bool = False
    policy: str = "bound"
    n_eval: int = 200
    max_enumeration: int = SNIM_MAX_ENUMERATION
    overrides: dict = field(default_factory=dict)

    def validate(self, need_source: bool = True) -> "RunConfig":
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if need_source and (self.data is None) == (self.generator is None):
            raise ValueError("give exactly one data source: a CSV path or a generator spec")
        if self.latents < 0:
            raise ValueError("latent count must be non-negative")
        if self.model == "dag-latent" and self.latents == 0:
            self.latents = 1
        if self.model != "dag-latent" and self.latents > 0:
            raise ValueError("latent variables need --model dag-latent")
        if self.fm_chains < 1 or self.m_top < 1 or self.n_eval < 1:
            raise ValueError("chain, candidate and evaluation counts must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ValueError(f"test fraction must lie in (0, 1), got {self.test_fraction}")
        unknown = set(self.overrides) - {f.name for f in dataclasses.fields(Hyperparameters)}
        if unknown:
            raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
        return self

    def hyperparameters(self, mode: str) -> Hyperparameters:
        raw = Hyperparameters(**self.overrides).replace(m_top=self.m_top)
        if self.samples is not None:
            raw = raw.replace(n_samples=self.samples)
        if self.burnin is not None:
            raw = raw.replace(n_burnin=self.burnin)
        if mode == "dag" and self.beta_m is not None:
            raw = raw.replace(beta_m=self.beta_m)
        return validate_hyperparameters(raw, mode, dense=self.dense, latents=self.latents if mode == "dag" else 0)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize_samples(samples):
    """Elementwise (0.025, 0.5, 0.975) quantiles over the first axis."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0 or x.shape[0] == 0:
        raise ValueError("cannot summarize an empty sample")
    q = np.quantile(x, [0.025, 0.5, 0.975], axis=0)
    return q[0], q[1], q[2]


def _quantile_record(samples) -> dict:
    lo, med, hi = summarize_samples(samples)
    return {"q025": lo, "median": med, "q975": hi}


# I/O


def read_csv(path) -> Dataset:
    """Observations as rows under a header of variable names; empty or NaN cells are missing."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: need a header and at least one observation")
    names = [h.strip() for h in rows[0]]
    if len(set(names)) != len(names) or any(not h for h in names):
        raise ValueError(f"{path}: header names must be unique and non-empty")
    values = np.empty((len(rows) - 1, len(names)))
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(names):
            raise ValueError(f"{path}:{r}: expected {len(names)} fields, got {len(row)}")
        for c, cell in enumerate(row):
            cell = cell.strip()
            try:
                values[r - 2, c] = float(cell) if cell else np.nan
            except ValueError:
                raise ValueError(f"{path}:{r}: non-numeric value {cell!r} for {names[c]!r}") from None
    X = values.T
    mask = np.isfinite(X)
    return Dataset(X, names, None if mask.all() else mask)


def write_csv(data: Dataset, path) -> None:
    X = data.values.copy()
    if data.mask is not None:
        X[~data.mask] = np.nan
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(data.names)
        for row in X.T:
            w.writerow(["" if not np.isfinite(v) else repr(float(v)) for v in row])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, Permutation):
        return list(obj.order)
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=1, sort_keys=True) + "\n"


def parse_generator(spec: str, seed: int):
    """``"lingam-suite d=5 N=500"`` style spec -> (Dataset, GroundTruthModel)."""
    parts = spec.split()
    if not parts:
        raise ValueError("empty generator spec")
    name, kw = parts[0], {}
    for item in parts[1:]:
        if "=" not in item:
            raise ValueError(f"generator argument {item!r} is not key=value")
        k, v = item.split("=", 1)
        kw[k] = v
    ints = lambda *keys: {k: int(kw.pop(k)) for k in keys if k in kw}
    if name == "lingam-suite":
        args = ints("d", "N")
        if "dense" in kw:
            args["dense"] = kw.pop("dense").lower() in ("1", "true", "yes")
        out = datagen.generate_lingam_suite(args.pop("d", 5), args.pop("N", 500), seed, **args)
    elif name == "factor-model":
        args = ints("d", "N")
        out = datagen.generate_factor_model(args.get("d", 5), args.get("N", 500), seed)
    elif name == "latent-dag":
        args = ints("d", "m", "N")
        out = datagen.generate_latent_dag(args.get("d", 5), args.get("m", 1), args.get("N", 500), seed)
    elif name == "toy-latent":
        variant = kw.pop("variant", "i")
        out = datagen.generate_toy_latent_pair(variant, ints("N").get("N", 500), seed)
    elif name == "nonlinear-toy":
        out = datagen.generate_nonlinear_toy(ints("N").get("N", 100), seed)
    elif name == "comparison-case":
        args = ints("d", "N")
        out = datagen.generate_model_comparison_case(args.get("d", 5), args.get("N", 500), seed)
    else:
        raise ValueError(f"unknown generator {name!r}")
    if kw:
        raise ValueError(f"unused generator arguments: {sorted(kw)}")
    return out


# workers


def worker_count() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn: Callable, tasks: list) -> list:
    """Run independent tasks; results come back in task order whatever the pool size."""
    n = min(worker_count(), len(tasks))
    if n <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks))


def _fm_task(args):
    data, hp, seed, stream, n_factors = args
    return run_factor_chain(data, hp, "order_search", RngStream(seed, stream), n_factors=n_factors)


def _dag_task(args):
    data, test, p, m, hp, seed, stream, n_eval = args
    chain = run_dag_chain(data, p, m, hp, RngStream(seed, stream))
    tl = chain_test_loglik(chain, test, hp, RngStream(seed, _EVAL_STREAM + stream), n_eval)
    return chain, tl


def _snim_task(args):
    data, test, p, hp, seed, stream, n_eval = args
    chain = run_gp_chain(data, "snim", hp=hp, rng=RngStream(seed, stream), p=p)
    tl = chain_test_loglik(chain, test, hp, RngStream(seed, _EVAL_STREAM + stream), n_eval)
    return chain, tl


# workflow


@dataclass
class WorkflowResult:
    out: Path
    manifest: dict
    report: Optional[ComparisonReport]
    fm_chains: list = field(default_factory=list)
    dag_chains: list = field(default_factory=list)
    candidates: list = field(default_factory=list)
    selected: Optional[int] = None


class _Writer:
    """Single funnel for every output file; records content hashes for the manifest."""

    def __init__(self, out: Path):
        self.out = out
        self.files: dict[str, str] = {}
        self.steps: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def text(self, name: str, content: str):
        data = content.encode()
        (self.out / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()

    def json(self, name: str, obj):
        self.text(name, dumps(obj))

    def step(self, name: str):
        self.steps.append(name)


def _loglik_csv(columns: dict) -> str:
    labels = list(columns)
    n = max(len(v) for v in columns.values())
    lines = ["sweep," + ",".join(labels)]
    for s in range(n):
        cells = [repr(float(columns[k][s])) if s < len(columns[k]) else "" for k in labels]
        lines.append(f"{s}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def _factor_summary(chains, data: Dataset, cset: PermutationCandidateSet, test_ll) -> dict:
    C = np.concatenate([c.C for c in chains])
    return {
        "names": data.names,
        "C": _quantile_record(C),
        "eta_median": np.median(np.concatenate([c.eta for c in chains]), axis=0),
        "psi": _quantile_record(np.concatenate([c.psi for c in chains])),
        "nu_median": np.median(np.concatenate([c.nu for c in chains]), axis=0),
        "loglik": _quantile_record(np.concatenate([c.loglik for c in chains])),
        "test_loglik": _quantile_record(test_ll),
        "candidates": [{"order": list(k), "count": v} for k, v in cset.items()],
        "mh_acceptance": [c.mh_acceptance for c in chains],
    }


def _dag_summary(chain, names, hp, test_ll) -> dict:
    s = chain.summary()
    s["names"] = names
    s["test_loglik"] = _quantile_record(test_ll)
    s["edges"] = edge_list(chain, names, alpha_m=hp.alpha_m)
    return s


def run_workflow(config: RunConfig, data: Optional[Dataset] = None, truth=None) -> WorkflowResult:
    """Run the six workflow steps and write JSON/CSV reports plus a hash manifest.

    ``data`` may be passed directly instead of through the config's source.
    """
    config.validate(need_source=data is None)
    out = Path(config.out)
    w = _Writer(out)
    seed = config.seed

    # 1. partition
    if data is None:
        if config.data is not None:
            data = read_csv(config.data)
        else:
            data, truth = parse_generator(config.generator, seed)
    if truth is not None:
        w.json("truth.json", truth.to_dict())
    if config.model == "cslim":
        return _run_cslim(config, data, w)
    train, test = partition(data, config.test_fraction, seed)
    if test.mask is not None and not test.mask.all():
        raise ValueError("test columns must be fully observed")
    train = standardize(train)
    test = Dataset(test.values, test.names).standardize_with(train.center, train.scale)
    w.json("partition.json", {"n_train": train.n, "n_test": test.n, "center": train.center, "scale": train.scale})
    w.step("partition")
    if config.model == "snim":
        return _run_snim(config, train, test, w)

    # 2. factor model with order search
    hp_fm = config.hyperparameters("factor")
    # one factor per driving signal plus one per latent
    K = train.d + config.latents
    fm = _map(_fm_task, [(train, hp_fm, seed, _FM_STREAM + c, K) for c in range(config.fm_chains)])
    w.step("factor_inference")

    # 3. factor summary
    cset = PermutationCandidateSet()
    for c in fm:
        cset = cset.merge(c.candidates)
    fm_tl = chain_test_loglik(fm[0], test, hp_fm, RngStream(seed, _EVAL_STREAM), config.n_eval)
    w.json("fm.json", _factor_summary(fm, train, cset, fm_tl))
    w.step("factor_summary")
    if config.model == "fm":
        w.text("testloglik.csv", _loglik_csv({"fm": fm_tl}))
        return _finish(config, w, None, fm_chains=fm)

    # 4. candidates
    cands = top_candidates(cset, config.m_top)
    w.json("candidates.json", [{"order": p.order, "count": cset.count(p)} for p in cands])
    w.step("candidate_selection")

    # 5. DAG inference per candidate
    hp_dag = config.hyperparameters("dag")
    m = config.latents
    res = _map(_dag_task, [(train, test, p, m, hp_dag, seed, _DAG_STREAM + k, config.n_eval) for k, p in enumerate(cands)])
    dags = [r[0] for r in res]
    w.step("dag_inference")

    # 6. DAG summaries, selection and comparison
    # structure from the best training likelihood; the comparison takes the
    # candidate with the best test likelihood, so FM competes with every DAG
    best, info = select_best_candidate(dags)
    test_medians = [float(np.median(tl)) for _, tl in res]
    best_test = int(np.argmax(test_medians))
    for k, (chain, tl) in enumerate(res):
        w.json(f"dag_{k}.json", _dag_summary(chain, train.names, hp_dag, tl))
    label = config.model
    report = compare_models([("fm", fm_tl), (label, res[best_test][1])])
    report.extra = {"candidate": best, "order": info["order"], "train_loglik_medians": info["medians"],
                    "compared_candidate": best_test, "test_loglik_medians": test_medians}
    w.json("edges.json", edge_list(dags[best], train.names, config.policy, hp_dag.alpha_m))
    w.text("testloglik.csv", _loglik_csv({"fm": fm_tl, label: res[best_test][1]}))
    w.json("comparison.json", report.to_dict())
    w.step("dag_summary")
    return _finish(config, w, report, fm_chains=fm, dag_chains=dags, candidates=cands, selected=best)


def _finish(config, w: _Writer, report, **kw) -> WorkflowResult:
    manifest = {"config": config.to_dict(), "steps": w.steps, "files": dict(sorted(w.files.items()))}
    (w.out / "manifest.json").write_text(dumps(manifest))
    return WorkflowResult(w.out, manifest, report, **kw)


def _run_snim(config: RunConfig, train: Dataset, test: Dataset, w: _Writer) -> WorkflowResult:
    import itertools

    if train.d > config.max_enumeration:
        raise ValueError(f"ordering enumeration limited to d <= {config.max_enumeration}")
    hp = config.hyperparameters("dag")
    orders = [Permutation(o) for o in itertools.permutations(range(train.d))]
    w.json("candidates.json", [{"order": p.order} for p in orders])
    w.step("candidate_selection")
    res = _map(_snim_task, [(train, test, p, hp, config.seed, _DAG_STREAM + k, config.n_eval) for k, p in enumerate(orders)])
    w.step("dag_inference")
    chains = [r[0] for r in res]
    best, info = select_best_candidate(chains)
    for k, (chain, tl) in enumerate(res):
        w.json(f"snim_{k}.json", {
            "order": chain.P.order,
            "loglik": _quantile_record(chain.loglik),
            "test_loglik": _quantile_record(tl),
            "eta_median": chain.median_eta(),
            "B_median": np.median(chain.B, axis=0),
        })
    report = compare_models([(f"order_{k}", r[1]) for k, r in enumerate(res)])
    w.json("comparison.json", report.to_dict())
    w.text("testloglik.csv", _loglik_csv({f"order_{k}": r[1] for k, r in enumerate(res)}))
    w.step("dag_summary")
    return _finish(config, w, report, dag_chains=chains, candidates=orders, selected=best)


def random_entry_mask(shape, fraction: float, seed: int) -> np.ndarray:
    """Boolean observed mask with round(fraction * size) entries removed at random."""
    n = int(np.prod(shape))
    k = int(np.floor(fraction * n + 0.5))
    mask = np.ones(n, dtype=bool)
    mask[np.random.default_rng(seed).permutation(n)[:k]] = False
    return mask.reshape(shape)


def _run_cslim(config: RunConfig, data: Dataset, w: _Writer) -> WorkflowResult:
    """Correlated-factor model against the i.i.d. factor model on randomly removed entries."""
    mask = random_entry_mask(data.values.shape, config.test_fraction, config.seed)
    if data.mask is not None:
        mask &= data.mask
    masked = standardize(Dataset(data.values, data.names, mask))
    w.json("partition.json", {"n_missing": int((~mask).sum()), "center": masked.center, "scale": masked.scale})
    w.step("partition")
    hp = config.hyperparameters("factor")
    fm = run_factor_chain(masked, hp, "missing_values", RngStream(config.seed, _FM_STREAM))
    cs = run_gp_chain(masked, "cslim", hp=hp, rng=RngStream(config.seed, _FM_STREAM + 1))
    w.step("factor_inference")
    w.json("fm.json", {"C": _quantile_record(fm.C), "psi": _quantile_record(fm.psi), "heldout": _quantile_record(fm.heldout_loglik)})
    w.json("cslim.json", {
        "C": _quantile_record(cs.factor.C),
        "psi": _quantile_record(cs.factor.psi),
        "upsilon": _quantile_record(cs.upsilon_trace),
        "heldout": _quantile_record(cs.factor.heldout_loglik),
    })
    report = compare_models([("fm", fm.heldout_loglik), ("cslim", cs.factor.heldout_loglik)])
    w.json("comparison.json", report.to_dict())
    w.text("testloglik.csv", _loglik_csv({"fm": fm.heldout_loglik, "cslim": cs.factor.heldout_loglik}))
    w.step("factor_summary")
    return _finish(config, w, report, fm_chains=[fm, cs.factor])
