"""Likelihood-ratio membership inference (shadow-model LiRA) and ROC analysis.

The audit pool is the union of the target's train and test nodes.  Each
shadow model retrains the target's exact pipeline on a random half of the
pool; per-node Gaussians fitted to the shadows' scaled confidences give a
likelihood-ratio score for the target's confidence, evaluated at low false
positive rates and compared against the analytic supremum-power bound when
the target was trained with DP.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .accounting import PrivacySpec, supremum_power
from .graphs import PopulationGraph
from .nn import ModelParams
from .training import TrainConfig, _full_logits, train

logger = logging.getLogger(__name__)

CONFIDENCE_CLAMP = 1e-7
VARIANCE_FLOOR = 1e-3
MIN_SHADOWS_EACH_SIDE = 8
FPR_GRID = (0.001, 0.005, 0.01)


class AuditSetupError(Exception):
    """Raised when shadow membership splits cannot satisfy the coverage invariant."""


def scaled_confidence(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Logit-scaled true-class confidence: ln(p / (1 - p)), p clamped away from {0, 1}."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    p = exp[np.arange(labels.size), labels] / exp.sum(axis=1)
    p = np.clip(p, CONFIDENCE_CLAMP, 1.0 - CONFIDENCE_CLAMP)
    return np.log(p / (1.0 - p))


@dataclass(frozen=True)
class ShadowEnsemble:
    pool: np.ndarray  # audited node ids (target train + test)
    membership: np.ndarray  # (n_shadows, n_pool) bool, True = IN that shadow's train set
    phi: np.ndarray  # (n_shadows, n_pool) scaled confidences

    @property
    def n_shadows(self) -> int:
        return self.membership.shape[0]


def _draw_membership(n_shadows: int, n_pool: int, rng: np.random.Generator,
                     redraw_budget: int = 200) -> np.ndarray:
    if n_shadows < 2 * MIN_SHADOWS_EACH_SIDE:
        raise AuditSetupError(
            f"need at least {2 * MIN_SHADOWS_EACH_SIDE} shadows for IN/OUT coverage, "
            f"got {n_shadows}"
        )
    membership = rng.random((n_shadows, n_pool)) < 0.5
    for _ in range(redraw_budget):
        in_counts = membership.sum(axis=0)
        bad = (in_counts < MIN_SHADOWS_EACH_SIDE) | (
            n_shadows - in_counts < MIN_SHADOWS_EACH_SIDE
        )
        if not bad.any():
            return membership
        membership[:, bad] = rng.random((n_shadows, int(bad.sum()))) < 0.5
    raise AuditSetupError("IN/OUT coverage not reached within the resampling budget")


def train_shadows(graph: PopulationGraph, config: TrainConfig,
                  dp: PrivacySpec | None, n_shadows: int, seed: int) -> ShadowEnsemble:
    """Train shadow models on fresh random halves of the audit pool.

    Each shadow re-masks the graph (IN nodes become the train set, the
    original validation mask is kept for checkpointing) and runs the same
    training pipeline as the target, including DP noise when auditing a DP
    model.
    """
    pool = np.flatnonzero(graph.train_mask | graph.test_mask)
    if pool.size == 0:
        raise AuditSetupError("graph has no train/test nodes to audit")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    membership = _draw_membership(n_shadows, pool.size, rng)
    seeds = np.random.SeedSequence(seed, spawn_key=(1,)).generate_state(n_shadows)

    phi = np.empty((n_shadows, pool.size))
    n = graph.num_nodes
    for s in range(n_shadows):
        train_mask = np.zeros(n, dtype=bool)
        train_mask[pool[membership[s]]] = True
        shadow_graph = graph.with_masks(train_mask, graph.val_mask, np.zeros(n, dtype=bool))
        shadow_config = replace(config, seed=int(seeds[s]))
        params, _ = train(shadow_graph, shadow_config, dp)
        logits = _full_logits(shadow_graph, params)
        phi[s] = scaled_confidence(logits[pool], graph.labels[pool])
    return ShadowEnsemble(pool=pool, membership=membership, phi=phi)


def lira_score(ensemble: ShadowEnsemble, target_phi: np.ndarray) -> np.ndarray:
    """Per-node log-likelihood ratio of the target confidence under IN vs OUT Gaussians.

    Nodes with fewer than two IN or OUT shadow observations are excluded
    (NaN score) with a warning; the coverage invariant normally prevents this.
    """
    n_pool = ensemble.pool.size
    if target_phi.shape != (n_pool,):
        raise ValueError("target_phi must align with the ensemble pool")
    scores = np.full(n_pool, np.nan)
    excluded = 0
    for j in range(n_pool):
        mask = ensemble.membership[:, j]
        in_vals = ensemble.phi[mask, j]
        out_vals = ensemble.phi[~mask, j]
        if in_vals.size < 2 or out_vals.size < 2:
            excluded += 1
            continue
        mu_in, var_in = in_vals.mean(), max(in_vals.var(), VARIANCE_FLOOR)
        mu_out, var_out = out_vals.mean(), max(out_vals.var(), VARIANCE_FLOOR)
        x = target_phi[j]
        log_in = -0.5 * np.log(2.0 * np.pi * var_in) - (x - mu_in) ** 2 / (2.0 * var_in)
        log_out = -0.5 * np.log(2.0 * np.pi * var_out) - (x - mu_out) ** 2 / (2.0 * var_out)
        scores[j] = log_in - log_out
    if excluded:
        logger.warning("lira_score: excluded %d nodes with insufficient IN/OUT coverage",
                       excluded)
    return scores


@dataclass(frozen=True)
class RocResult:
    points: np.ndarray  # (k, 2) of (fpr, tpr), nondecreasing
    auc: float
    tpr_at: dict  # fpr budget -> best TPR with FPR <= budget


def roc(scores: np.ndarray, member: np.ndarray,
        fpr_grid=FPR_GRID) -> RocResult:
    """Threshold sweep (descending scores, ties grouped) with trapezoid AUC.

    TPR at budget f is the best TPR among sweep points with FPR <= f.
    """
    scores = np.asarray(scores, dtype=np.float64)
    member = np.asarray(member, dtype=bool)
    if scores.shape != member.shape:
        raise ValueError("scores and membership labels must align")
    n_pos = int(member.sum())
    n_neg = int((~member).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both members and non-members")
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    m_sorted = member[order]
    # group equal scores: keep only the last index of each tie block
    boundary = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.concatenate([boundary, [scores.size - 1]])
    cum_tp = np.cumsum(m_sorted)[ends]
    cum_fp = np.cumsum(~m_sorted)[ends]
    tpr = np.concatenate([[0.0], cum_tp / n_pos])
    fpr = np.concatenate([[0.0], cum_fp / n_neg])
    auc = float(np.trapezoid(tpr, fpr))
    tpr_at = {}
    for f in fpr_grid:
        ok = fpr <= f + 1e-12
        tpr_at[f] = float(tpr[ok].max()) if ok.any() else 0.0
    return RocResult(points=np.column_stack([fpr, tpr]), auc=auc, tpr_at=tpr_at)


@dataclass(frozen=True)
class AttackReport:
    scores: np.ndarray
    member: np.ndarray
    roc_points: np.ndarray
    auc: float
    tpr_at: dict
    supremum: dict | None  # fpr -> analytic power bound (DP targets only)
    bound_ok: dict | None  # fpr -> empirical TPR within bound + binomial half-width
    n_members: int
    n_nonmembers: int
    n_shadows: int
    seed: int
    epsilon: float | None = None
    delta: float | None = None
    model_variant: str = ""

    @property
    def sound(self) -> bool:
        return self.bound_ok is None or all(self.bound_ok.values())

    def to_json(self) -> dict:
        out = {
            "model_variant": self.model_variant,
            "n_shadows": self.n_shadows,
            "auc": self.auc,
            "tpr": {str(k): v for k, v in self.tpr_at.items()},
            "n_members": self.n_members,
            "n_nonmembers": self.n_nonmembers,
            "seed": self.seed,
        }
        if self.epsilon is not None:
            out["epsilon"] = self.epsilon
            out["delta"] = self.delta
            out["supremum_power"] = {str(k): v for k, v in self.supremum.items()}
            out["bound_ok"] = {str(k): bool(v) for k, v in self.bound_ok.items()}
            out["sound"] = self.sound
        return out


def binomial_half_width(p: float, n: int) -> float:
    """95% normal-approximation half-width for a proportion estimated from n trials."""
    p = min(max(p, 0.0), 1.0)
    return 1.96 * np.sqrt(p * (1.0 - p) / max(n, 1))


def audit(target_params: ModelParams, graph: PopulationGraph, config: TrainConfig,
          n_shadows: int = 128, seed: int = 0, dp: PrivacySpec | None = None,
          fpr_grid=FPR_GRID, model_variant: str = "",
          ensemble: ShadowEnsemble | None = None) -> AttackReport:
    """Full LiRA audit of a trained model: shadows, scores, ROC, and bound check.

    Members are the target's training nodes, non-members its test nodes.  For
    DP targets the report carries the supremum power at each FPR budget and a
    soundness flag (empirical TPR must not exceed the bound by more than the
    95% binomial half-width for the member count).
    """
    if ensemble is None:
        ensemble = train_shadows(graph, config, dp, n_shadows, seed)
    logits = _full_logits(graph, target_params)
    target_phi = scaled_confidence(logits[ensemble.pool], graph.labels[ensemble.pool])
    scores = lira_score(ensemble, target_phi)
    member = graph.train_mask[ensemble.pool]
    valid = ~np.isnan(scores)
    result = roc(scores[valid], member[valid], fpr_grid)
    n_members = int(member[valid].sum())
    supremum = bound_ok = None
    if dp is not None:
        supremum = {f: supremum_power(dp.epsilon_target, dp.delta, f) for f in fpr_grid}
        bound_ok = {
            f: result.tpr_at[f] <= supremum[f] + binomial_half_width(supremum[f], n_members)
            for f in fpr_grid
        }
    return AttackReport(
        scores=scores,
        member=member,
        roc_points=result.points,
        auc=result.auc,
        tpr_at=result.tpr_at,
        supremum=supremum,
        bound_ok=bound_ok,
        n_members=n_members,
        n_nonmembers=int((~member[valid]).sum()),
        n_shadows=ensemble.n_shadows,
        seed=seed,
        epsilon=dp.epsilon_target if dp is not None else None,
        delta=dp.delta if dp is not None else None,
        model_variant=model_variant,
    )


def write_roc_csv(report: AttackReport, path) -> None:
    """Full-sweep "fpr,tpr" rows for external (log-log) plotting."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("fpr,tpr\n")
        for f, t in report.roc_points:
            fh.write(f"{f:.10g},{t:.10g}\n")
