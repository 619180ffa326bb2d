"""Config-driven experiment grids: variants x epsilons x seeds, with
aggregate tables, ROC exports, and provenance hashes.

A manifest (JSON) declares one dataset source, a split, model settings, an
optional privacy block (epsilon list plus DP-SGD hyperparameters), an
optional audit block, and the seed list.  Each grid cell builds its own
graph (the cell seed drives both the synthetic generator and the split
shuffle), trains, evaluates, and optionally audits; failures are isolated
per cell.  Output files are written atomically and embed the manifest hash.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .accounting import PrivacySpec, recommend_delta
from .attacks import audit as run_audit
from .graphs import SplitSpec, assign_splits, build_knn_graph, edge_homophily, load_csv
from .synthetic import SyntheticSpec, generate_synthetic
from .training import TrainConfig, evaluate, train

SCHEMA_VERSION = 1

VARIANTS = ("non_dp", "clipping", "subgraphing", "subgraph_clip", "dp")

# DP cells default to plain momentum SGD: adaptive per-coordinate scaling
# (adam) renormalizes the calibrated Gaussian noise away, which erases the
# epsilon/utility trade-off the grid is meant to expose.
DEFAULT_DP_OPTIMIZER = {"optimizer": "sgd", "learning_rate": 1e-4}


class ManifestError(Exception):
    """Raised when an experiment manifest fails validation."""


def synthetic_benchmark_manifest(variants=("non_dp", "dp"), epsilons=(5.0,),
                                 seeds=(0, 1, 2, 3, 4), homophily: float = 0.8,
                                 output_dir: str = "results",
                                 audit: dict | None = None) -> "ExperimentManifest":
    """Canonical synthetic-benchmark settings: 1000 nodes, k=5 wiring,
    0.56/0.14/0.30 split, 2-layer/32-hidden GCN, and the DP-SGD recipe
    (T=6, m=64, 1000 steps, clip 1.0, momentum SGD at 1e-4)."""
    return ExperimentManifest.from_dict({
        "dataset": {"synthetic": {"num_nodes": 1000, "target_homophily": homophily,
                                  "neighbors_per_node": 5, "feat_dim": 10}},
        "split": {"train": 0.56, "val": 0.14, "test": 0.30, "seed": 0},
        "model": {"num_layers": 2, "hidden_dim": 32, "learning_rate": 1e-2,
                  "optimizer": "adam", "epochs": 200, "steps": 1000,
                  "batch_size": 64, "max_degree": 5},
        "privacy": {"epsilons": list(epsilons), "clip_norm": 1.0, "max_degree": 5,
                    "hops": 2, "occurrence_bound": 6, "batch_size": 64,
                    "steps": 1000, "optimizer": "sgd", "learning_rate": 1e-4},
        "audit": audit,
        "variants": list(variants),
        "seeds": list(seeds),
        "output_dir": output_dir,
    })


@dataclass(frozen=True)
class ExperimentManifest:
    dataset: dict
    split: dict = field(default_factory=lambda: {"train": 0.56, "val": 0.14, "test": 0.30, "seed": 0})
    graph: dict = field(default_factory=lambda: {"k": 5, "metric": "euclidean"})
    model: dict = field(default_factory=dict)
    privacy: dict | None = None
    audit: dict | None = None
    variants: tuple = ("non_dp",)
    seeds: tuple = (0,)
    output_dir: str = "results"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ManifestError(f"unsupported schema_version {self.schema_version}")
        sources = [k for k in ("synthetic", "csv") if k in self.dataset]
        if len(sources) != 1:
            raise ManifestError("dataset must name exactly one source: 'synthetic' or 'csv'")
        if not self.seeds:
            raise ManifestError("seeds list must be nonempty")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ManifestError(f"unknown variants {sorted(unknown)}; expected from {VARIANTS}")
        if "dp" in self.variants:
            if not self.privacy or not self.privacy.get("epsilons"):
                raise ManifestError("'dp' variant requires a privacy block with a nonempty epsilon list")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentManifest":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ManifestError(f"unknown manifest keys {sorted(unknown)}")
        raw = dict(raw)
        for key in ("variants", "seeds"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    @classmethod
    def from_file(cls, path) -> "ExperimentManifest":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "dataset": self.dataset,
            "split": self.split,
            "graph": self.graph,
            "model": self.model,
            "privacy": self.privacy,
            "audit": self.audit,
            "variants": list(self.variants),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
        }

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()[:16]


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def build_graph_for_cell(manifest: ExperimentManifest, seed: int):
    """Cell seed drives the generator (synthetic) and offsets the split shuffle."""
    if "synthetic" in manifest.dataset:
        spec_args = dict(manifest.dataset["synthetic"])
        spec_args["seed"] = seed
        graph = generate_synthetic(SyntheticSpec(**spec_args))
    else:
        csv = manifest.dataset["csv"]
        graph = load_csv(csv["features"], csv["labels"],
                         standardize=csv.get("standardize", True),
                         skip_header=csv.get("skip_header", False))
        graph = build_knn_graph(graph, manifest.graph.get("k", 5),
                                manifest.graph.get("metric", "euclidean"))
    sp = manifest.split
    split = SplitSpec(sp.get("train", 0.56), sp.get("val", 0.14), sp.get("test", 0.30),
                      seed=sp.get("seed", 0) + seed)
    return assign_splits(graph, split)


def config_for_variant(manifest: ExperimentManifest, variant: str, seed: int) -> TrainConfig:
    base = dict(manifest.model)
    base["seed"] = seed
    if variant == "non_dp":
        base.update(mode="full_graph", clipping=False, noise=False)
    elif variant == "clipping":
        base.update(mode="full_graph", clipping=True, noise=False)
    elif variant == "subgraphing":
        base.update(mode="subgraph_batch", clipping=False, noise=False)
    elif variant == "subgraph_clip":
        base.update(mode="subgraph_batch", clipping=True, noise=False)
    elif variant == "dp":
        privacy = manifest.privacy or {}
        base.update(mode="subgraph_batch", clipping=True, noise=True)
        base["optimizer"] = privacy.get("optimizer", DEFAULT_DP_OPTIMIZER["optimizer"])
        base["learning_rate"] = privacy.get("learning_rate",
                                            DEFAULT_DP_OPTIMIZER["learning_rate"])
        base["clip_norm"] = privacy.get("clip_norm", base.get("clip_norm", 1.0))
    else:
        raise ManifestError(f"unknown variant {variant!r}")
    if variant in ("clipping", "subgraph_clip") and manifest.privacy:
        base["clip_norm"] = manifest.privacy.get("clip_norm", base.get("clip_norm", 1.0))
    return TrainConfig(**base)


def privacy_spec_for_cell(manifest: ExperimentManifest, epsilon: float,
                          n_train: int, num_layers: int) -> PrivacySpec:
    privacy = dict(manifest.privacy or {})
    delta = privacy.get("delta") or recommend_delta(n_train)
    return PrivacySpec(
        epsilon_target=epsilon,
        delta=delta,
        clip_norm=privacy.get("clip_norm", 1.0),
        noise_multiplier=privacy.get("noise_multiplier"),
        max_degree=privacy.get("max_degree", 5),
        hops=privacy.get("hops", num_layers),
        occurrence_bound=privacy.get("occurrence_bound"),
        batch_size=privacy.get("batch_size", 64),
        total_steps=privacy.get("steps", 1000),
    )


def _cell_name(variant: str, epsilon, seed: int) -> str:
    eps_part = f"_eps{epsilon:g}" if epsilon is not None else ""
    return f"{variant}{eps_part}_seed{seed}"


def run_cell(manifest: ExperimentManifest, variant: str, epsilon, seed: int,
             do_audit: bool = False) -> dict:
    """Build graph, train, evaluate, and optionally audit one grid cell."""
    t0 = time.time()
    graph = build_graph_for_cell(manifest, seed)
    config = config_for_variant(manifest, variant, seed)
    dp = None
    if variant == "dp":
        dp = privacy_spec_for_cell(manifest, epsilon, int(graph.train_mask.sum()),
                                   config.num_layers)
    params, log = train(graph, config, dp)
    cell = {
        "schema_version": SCHEMA_VERSION,
        "manifest_hash": manifest.hash(),
        "cell": _cell_name(variant, epsilon, seed),
        "variant": variant,
        "epsilon": epsilon,
        "seed": seed,
        "test_acc": evaluate(graph, params, graph.test_mask),
        "train_acc": evaluate(graph, params, graph.train_mask),
        "val_acc": evaluate(graph, params, graph.val_mask) if graph.val_mask.any() else None,
        "final_log": log[-1] if log else None,
        "graph": {
            "num_nodes": graph.num_nodes,
            "edge_homophily": edge_homophily(graph) if graph.num_undirected_edges else None,
            "n_train": int(graph.train_mask.sum()),
        },
        "runtime_sec": None,
    }
    if do_audit and manifest.audit is not None:
        audit_cfg = manifest.audit
        report = run_audit(
            params, graph, config,
            n_shadows=audit_cfg.get("n_shadows", 128),
            seed=seed + audit_cfg.get("seed_offset", 10_000),
            dp=dp,
            fpr_grid=tuple(audit_cfg.get("fpr_grid", (0.001, 0.005, 0.01))),
            model_variant=_cell_name(variant, epsilon, seed),
        )
        cell["audit"] = report.to_json()
        cell["_roc_points"] = report.roc_points.tolist()
    cell["runtime_sec"] = round(time.time() - t0, 3)
    return cell


def _run_cell_packed(args):
    manifest_dict, variant, epsilon, seed, do_audit = args
    manifest = ExperimentManifest.from_dict(manifest_dict)
    try:
        return run_cell(manifest, variant, epsilon, seed, do_audit)
    except Exception as exc:  # cell failures must not kill the grid
        return {
            "schema_version": SCHEMA_VERSION,
            "manifest_hash": manifest.hash(),
            "cell": _cell_name(variant, epsilon, seed),
            "variant": variant,
            "epsilon": epsilon,
            "seed": seed,
            "error": f"{type(exc).__name__}: {exc}",
            "traceback": traceback.format_exc(),
        }


def grid_cells(manifest: ExperimentManifest) -> list[tuple]:
    cells = []
    for variant in manifest.variants:
        epsilons = manifest.privacy["epsilons"] if variant == "dp" else [None]
        for eps in epsilons:
            for seed in manifest.seeds:
                cells.append((variant, eps, seed))
    return cells


def aggregate(cells: list[dict]) -> list[dict]:
    """Mean +/- population std of test accuracy per (variant, epsilon) group."""
    groups: dict[tuple, list[float]] = {}
    for cell in cells:
        if "error" in cell:
            continue
        groups.setdefault((cell["variant"], cell["epsilon"]), []).append(cell["test_acc"])
    rows = []
    for (variant, eps), accs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0)):
        arr = np.asarray(accs)
        rows.append({
            "variant": variant,
            "epsilon": eps,
            "mean_acc": float(arr.mean()),
            "std_acc": float(arr.std()),  # population std over seeds
            "n_seeds": int(arr.size),
        })
    return rows


def _aggregate_csv(rows: list[dict]) -> str:
    lines = ["variant,epsilon,mean_acc,std_acc,n_seeds"]
    for r in rows:
        eps = "" if r["epsilon"] is None else f"{r['epsilon']:g}"
        lines.append(f"{r['variant']},{eps},{r['mean_acc']:.6f},{r['std_acc']:.6f},{r['n_seeds']}")
    return "\n".join(lines) + "\n"


def run(manifest: ExperimentManifest, out_dir=None, threads: int = 1,
        do_audit: bool = False) -> dict:
    """Execute the whole grid; write per-cell JSON, aggregate CSV, and ROC CSVs.

    Returns a summary with cell results and failure list; failed cells do not
    stop the rest of the grid.
    """
    out = Path(out_dir if out_dir is not None else manifest.output_dir)
    (out / "cells").mkdir(parents=True, exist_ok=True)
    cells = grid_cells(manifest)
    packed = [(manifest.to_dict(), v, e, s, do_audit) for v, e, s in cells]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_cell_packed, packed))
    else:
        results = [_run_cell_packed(p) for p in packed]

    for cell in results:
        roc_points = cell.pop("_roc_points", None)
        _atomic_write(out / "cells" / f"{cell['cell']}.json",
                      json.dumps(cell, indent=2, sort_keys=True) + "\n")
        if roc_points is not None:
            lines = ["fpr,tpr"] + [f"{f:.10g},{t:.10g}" for f, t in roc_points]
            _atomic_write(out / f"roc_{cell['cell']}.csv", "\n".join(lines) + "\n")

    rows = aggregate(results)
    _atomic_write(out / "aggregate.csv", _aggregate_csv(rows))
    failures = [c for c in results if "error" in c]
    unsound = [c["cell"] for c in results
               if c.get("audit") and c["audit"].get("sound") is False]
    summary = {
        "schema_version": SCHEMA_VERSION,
        "manifest_hash": manifest.hash(),
        "n_cells": len(results),
        "n_failures": len(failures),
        "failed_cells": [c["cell"] for c in failures],
        "unsound_audits": unsound,
        "aggregate": rows,
    }
    _atomic_write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    summary["cells"] = results
    return summary


def sweep_homophily(manifest: ExperimentManifest, homophilies, out_dir=None,
                    threads: int = 1) -> dict:
    """Expand a synthetic manifest over homophily levels; emit a long-form table.

    Output CSV rows: homophily, variant, epsilon, mean_acc, std_acc.  A trend
    summary reports the per-seed Spearman correlation between homophily and
    DP accuracy for each epsilon.
    """
    if "synthetic" not in manifest.dataset:
        raise ManifestError("sweep_homophily requires a synthetic dataset source")
    out = Path(out_dir if out_dir is not None else manifest.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    long_rows = []
    per_seed_acc: dict[tuple, dict[float, float]] = {}
    all_results = {}
    for h in homophilies:
        synth = dict(manifest.dataset["synthetic"])
        synth["target_homophily"] = h
        sub = ExperimentManifest.from_dict({
            **manifest.to_dict(),
            "dataset": {"synthetic": synth},
            "output_dir": str(out / f"h{h:g}"),
        })
        summary = run(sub, threads=threads)
        all_results[h] = summary
        for row in summary["aggregate"]:
            long_rows.append({"homophily": h, **row})
        for cell in summary["cells"]:
            if "error" in cell:
                continue
            key = (cell["variant"], cell["epsilon"], cell["seed"])
            per_seed_acc.setdefault(key, {})[h] = cell["test_acc"]

    lines = ["homophily,variant,epsilon,mean_acc,std_acc"]
    for r in long_rows:
        eps = "" if r["epsilon"] is None else f"{r['epsilon']:g}"
        lines.append(f"{r['homophily']:g},{r['variant']},{eps},"
                     f"{r['mean_acc']:.6f},{r['std_acc']:.6f}")
    _atomic_write(out / "sweep.csv", "\n".join(lines) + "\n")

    trends = []
    for (variant, eps, seed), by_h in sorted(per_seed_acc.items(),
                                             key=lambda kv: (kv[0][0], kv[0][1] or 0, kv[0][2])):
        if len(by_h) < 2:
            continue
        hs = sorted(by_h)
        accs = [by_h[h] for h in hs]
        trends.append({
            "variant": variant,
            "epsilon": eps,
            "seed": seed,
            "spearman": spearman(hs, accs),
        })
    trend_summary = {
        "schema_version": SCHEMA_VERSION,
        "manifest_hash": manifest.hash(),
        "homophilies": list(homophilies),
        "per_seed_spearman": trends,
    }
    _atomic_write(out / "trend.json", json.dumps(trend_summary, indent=2, sort_keys=True) + "\n")
    n_failures = sum(s["n_failures"] for s in all_results.values())
    return {"long_rows": long_rows, "trends": trends, "n_failures": n_failures,
            "results": all_results}


def spearman(x, y) -> float:
    """Spearman rank correlation (average ranks on ties)."""
    def ranks(v):
        v = np.asarray(v, dtype=np.float64)
        order = np.argsort(v, kind="stable")
        r = np.empty(v.size)
        r[order] = np.arange(1, v.size + 1, dtype=np.float64)
        # average tied ranks
        for val in np.unique(v):
            tied = v == val
            if tied.sum() > 1:
                r[tied] = r[tied].mean()
        return r

    rx, ry = ranks(x), ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = np.sqrt((rx * rx).sum() * (ry * ry).sum())
    if denom == 0:
        return 0.0
    return float((rx * ry).sum() / denom)


def report(results_dir) -> dict:
    """Merge cell JSONs under a results directory into tables.

    Produces a plain-text rendering plus aggregate rows, and a
    bound-vs-empirical TPR comparison for audited DP cells.  Corrupt or
    unreadable cell files are listed; the report is still produced.
    """
    results_dir = Path(results_dir)
    cell_files = sorted(results_dir.glob("**/cells/*.json"))
    cells, corrupt = [], []
    for path in cell_files:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                cells.append(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            corrupt.append({"file": str(path), "error": str(exc)})
    rows = aggregate(cells)

    lines = []
    if not cells and not corrupt:
        lines.append("no result cells found")
    if rows:
        lines.append(f"{'variant':<14}{'epsilon':>8}  {'test acc (mean +/- std)':<26}{'seeds':>5}")
        for r in rows:
            eps = "-" if r["epsilon"] is None else f"{r['epsilon']:g}"
            lines.append(f"{r['variant']:<14}{eps:>8}  "
                         f"{100 * r['mean_acc']:.2f} +/- {100 * r['std_acc']:.2f}"
                         f"{'':<8}{r['n_seeds']:>5}")

    bound_rows = []
    for cell in cells:
        audit_block = cell.get("audit")
        if not audit_block or "supremum_power" not in audit_block:
            continue
        for fpr, power in sorted(audit_block["supremum_power"].items(), key=lambda kv: float(kv[0])):
            bound_rows.append({
                "cell": cell["cell"],
                "epsilon": cell["epsilon"],
                "fpr": float(fpr),
                "tpr": audit_block["tpr"][fpr],
                "supremum_power": power,
            })
    if bound_rows:
        lines.append("")
        lines.append(f"{'cell':<24}{'fpr':>8}{'tpr':>10}{'power bound':>13}")
        for r in bound_rows:
            lines.append(f"{r['cell']:<24}{r['fpr']:>8g}{r['tpr']:>10.4f}{r['supremum_power']:>13.4f}")
    if corrupt:
        lines.append("")
        lines.append(f"unreadable cell files: {len(corrupt)}")
        for c in corrupt:
            lines.append(f"  {c['file']}: {c['error']}")

    text = "\n".join(lines) + "\n"
    _atomic_write(results_dir / "report.txt", text)
    _atomic_write(results_dir / "report.csv", _aggregate_csv(rows))
    if bound_rows:
        blines = ["cell,epsilon,fpr,tpr,supremum_power"]
        for r in bound_rows:
            blines.append(f"{r['cell']},{r['epsilon']:g},{r['fpr']:g},"
                          f"{r['tpr']:.6f},{r['supremum_power']:.6f}")
        _atomic_write(results_dir / "bound_vs_empirical.csv", "\n".join(blines) + "\n")
    return {"text": text, "aggregate": rows, "bound_rows": bound_rows, "corrupt": corrupt}
