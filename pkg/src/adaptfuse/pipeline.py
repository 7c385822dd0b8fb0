"""Adaptive sequential de-duplication and its baselines.

Identifiers are fused one at a time in a trained order. After each fusion
step the top-k fused scores go to that stage's veto ensemble; fusion stops
early only when every member is confident the rank-1 candidate is the mate.
The baselines swap the stopping rule: the single-upper-outlier test, a
probe-quality gate, or no stopping at all (full fusion).
"""

import enum
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import normalize
from .datagen import substream
from .predictor import (
    DEFAULT_ETA, DEFAULT_K, DEFAULT_M, Decision, TrainConfig, TrainingSet,
    read_ensemble, terminates, train_ensemble, write_ensemble,
)

log = logging.getLogger(__name__)


class Baseline(enum.Enum):
    ADAPTIVE = "adaptive"
    OUTLIER = "outlier"
    QUALITY = "quality"
    FULL = "full"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    k: int = DEFAULT_K
    m: int = DEFAULT_M
    eta: float = DEFAULT_ETA
    alpha: float = 0.05
    outlier_n: int | None = None  # None: every gallery score
    quality_threshold: int = 3
    quality_identifier: str | None = None  # None: first biometric in stage order
    stage_order: tuple | None = None
    train: TrainConfig = field(default_factory=TrainConfig)


# ---- fusion -----------------------------------------------------------------

def fuse_prefix(vectors, j):
    """Running mean of the first j z-normalized score vectors.

    NaN cells are skipped, so each gallery cell is divided by the number of
    identifiers actually scored there; cells with none stay NaN.
    """
    if j < 1 or j > len(vectors):
        raise ValueError(f"cannot fuse {j} of {len(vectors)} identifiers")
    total = np.zeros_like(np.asarray(vectors[0], dtype=float))
    count = np.zeros(total.shape)
    for v in vectors[:j]:
        ok = ~np.isnan(v)
        total = total + np.where(ok, v, 0.0)
        count = count + ok
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(count > 0, total / np.where(count > 0, count, 1), np.nan)


def full_fusion(vectors):
    """Equal-weight sum-rule fusion of every available z-normalized vector."""
    return fuse_prefix(vectors, len(vectors))


def rank1_index(fused):
    """Index of the highest fused score; lowest index wins ties; NaN never wins."""
    return int(np.argmax(np.where(np.isnan(fused), -np.inf, fused)))


def top_k(fused, k):
    """The k highest fused scores in descending order (NaN cells excluded)."""
    f = np.asarray(fused, dtype=float)
    finite = f[~np.isnan(f)]
    if finite.size < k:
        raise ConfigurationError(f"gallery has {finite.size} scored entries, fewer than k={k}")
    part = np.partition(finite, finite.size - k)[finite.size - k:]
    return np.sort(part)[::-1]


# ---- stopping rules ---------------------------------------------------------

def outlier_threshold(alpha, n):
    """Critical value 1 - alpha**(1/(n-1)) of the single-upper-outlier test."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    return 1.0 - alpha ** (1.0 / (n - 1))


def outlier_statistic(scores, n=None):
    """(top - runner-up) / sum of the top n scores.

    Scores with a negative minimum are shifted up by it first. A zero
    denominator gives 0 (never an outlier).
    """
    s = np.asarray(scores, dtype=float)
    s = s[~np.isnan(s)]
    n = s.size if n is None else n
    if s.size < max(n, 2):
        raise ValueError(f"need at least {max(n, 2)} scores")
    lo = s.min()
    if lo < 0:
        s = s - lo
    top = np.sort(s)[::-1][:n]
    denom = top.sum()
    if denom <= 0:
        return 0.0
    return float((top[0] - top[1]) / denom)


def outlier_stop(scores, alpha, n=None):
    n_eff = np.count_nonzero(~np.isnan(np.asarray(scores, dtype=float))) if n is None else n
    z = outlier_statistic(scores, n)
    return Decision.TERMINATE if z > outlier_threshold(alpha, n_eff) else Decision.CONTINUE


def quality_gate(probe_quality, threshold):
    """Keep fusing when the probe's quality level is at or worse than the threshold level."""
    for q in (probe_quality, threshold):
        if not 1 <= q <= 5:
            raise ValueError("quality levels run from 1 (excellent) to 5 (poor)")
    return Decision.CONTINUE if probe_quality >= threshold else Decision.TERMINATE


# ---- model ------------------------------------------------------------------

@dataclass
class FusionModel:
    stage_order: list
    stats: dict  # identifier -> NormStats
    ensembles: list  # ensembles[j - 1] decides after stage j
    k: int = DEFAULT_K
    m: int = DEFAULT_M
    eta: float = DEFAULT_ETA

    def with_eta(self, eta):
        return FusionModel(list(self.stage_order), dict(self.stats),
                           [e.with_eta(eta) for e in self.ensembles], self.k, self.m, eta)

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("fusion-model\n")
            fh.write("stages " + ",".join(self.stage_order) + "\n")
            fh.write(f"k {self.k}\nm {self.m}\neta {format(self.eta, '.17g')}\n")
            for ident in self.stage_order:
                st = self.stats[ident]
                vals = (st.min, st.max, st.mean, st.std, st.median, st.mad,
                        st.hampel_mean, st.hampel_std)
                fh.write(f"stats {ident} " + " ".join(format(v, ".17g") for v in vals) + "\n")
            fh.write(f"ensembles {len(self.ensembles)}\n")
            for ens in self.ensembles:
                write_ensemble(ens, fh)

    @classmethod
    def read(cls, path):
        with open(path) as fh:
            lines = iter(fh.read().splitlines())
        if next(lines) != "fusion-model":
            raise ValueError(f"{path} is not a fusion model file")

        def field_(name):
            key, _, rest = next(lines).partition(" ")
            if key != name:
                raise ValueError(f"expected {name!r}, found {key!r}")
            return rest

        order = field_("stages").split(",")
        k, m, eta = int(field_("k")), int(field_("m")), float(field_("eta"))
        stats = {}
        for _ in order:
            ident, *vals = field_("stats").split()
            v = [float(x) for x in vals]
            stats[ident] = normalize.NormStats(*v)
        ensembles = [read_ensemble(lines) for _ in range(int(field_("ensembles")))]
        return cls(order, stats, ensembles, k, m, eta)


@dataclass
class DedupDecision:
    probe_id: str
    rank1_id: str
    stages_used: int
    early_terminated: bool
    fused_scores: np.ndarray = field(repr=False)
    verdicts: list = field(default_factory=list)


# ---- training ---------------------------------------------------------------

def identifier_stats(scores, probe_rows):
    """z-score statistics per identifier from the training probes' score pool."""
    return {ident: normalize.estimate_stats(mat[probe_rows]) for ident, mat in scores.items()}


def _available(zrows):
    """Per probe: identifiers (in the given order) with at least one score."""
    return [~np.all(np.isnan(z), axis=1) for z in zrows]


class _PrefixFusion:
    """Fused prefix matrices for a batch of probes, honoring per-probe availability."""

    def __init__(self, zmats):
        self.zmats = zmats  # list of (n_probes, n_gallery) in stage order
        self.avail = np.stack(_available(zmats), axis=1) if zmats else None

    def n_available(self):
        return self.avail.sum(axis=1)

    def fused(self, j):
        n_probes = self.zmats[0].shape[0]
        out = np.full(self.zmats[0].shape, np.nan)
        for p in range(n_probes):
            idx = np.flatnonzero(self.avail[p])
            if len(idx) >= j:
                out[p] = fuse_prefix([self.zmats[i][p] for i in idx], j)
            elif len(idx):
                out[p] = fuse_prefix([self.zmats[i][p] for i in idx], len(idx))
        return out


def stage_training_set(fused, truth, k, rows=None):
    """Top-k features and 'mate not at rank-1' labels for the given probe rows."""
    rows = np.arange(fused.shape[0]) if rows is None else rows
    feats = np.array([top_k(fused[p], k) for p in rows]).reshape(len(rows), k)
    labels = np.array([rank1_index(fused[p]) != truth[p] for p in rows], dtype=float)
    return TrainingSet(feats, labels)


def _stage_ensemble(prefix, truth, j, config, seed):
    fused = prefix.fused(j)
    rows = np.flatnonzero(prefix.n_available() > j)
    if len(rows) == 0:
        return None, None, None
    data = stage_training_set(fused, truth, config.k, rows)
    ens = train_ensemble(data, config.m, config.eta, substream(seed, f"stage/{j}"), config.train)
    term = terminates(ens.max_probability(data.features), config.eta)
    return ens, data, term


def order_stages(zscores, truth, identifiers, config, seed):
    """Greedy stage order with the stage ensembles trained along the way.

    At each position, every remaining identifier is appended to the current
    prefix and an ensemble is trained on the fused training features; the
    candidate terminating the most training probes with no wrong termination
    wins, ties going to the earlier declared identifier. If no candidate
    manages zero wrong terminations, the rest are ordered by unimodal rank-1
    accuracy and their ensembles trained afterwards.

    Returns:
      (order, ensembles) where ensembles may be shorter than len(order) - 1.
    """
    order, ensembles = [], []
    remaining = list(identifiers)
    while len(remaining) > 1:
        j = len(order) + 1
        best = None
        for cand in remaining:
            rest = [r for r in remaining if r != cand]
            prefix = _PrefixFusion([zscores[i] for i in order + [cand] + rest])
            ens, data, term = _stage_ensemble(prefix, truth, j, config, seed)
            if ens is None:
                continue
            wrong = int(np.sum(term & (data.labels == 1)))
            count = int(np.sum(term))
            log.info("stage %d candidate %s: %d terminations, %d wrong", j, cand, count, wrong)
            if wrong == 0 and (best is None or count > best[1]):
                best = (cand, count, ens)
        if best is None:
            warnings.warn("no identifier terminates without error; ordering the rest by rank-1 accuracy")
            acc = {c: _rank1_rate(zscores[c], truth) for c in remaining}
            remaining.sort(key=lambda c: -acc[c])
            break
        order.append(best[0])
        ensembles.append(best[2])
        remaining.remove(best[0])
    order.extend(remaining)
    return order, ensembles


def _rank1_rate(z, truth):
    return float(np.mean([rank1_index(z[p]) == truth[p] for p in range(z.shape[0])]))


def train_pipeline(scores, truth, train_rows, config=PipelineConfig(), seed=0, identifiers=None):
    """Fit normalization statistics, the stage order, and one ensemble per stage but the last.

    Args:
      scores: identifier -> (n_probes, n_gallery) raw score matrix.
      truth: mate gallery index per probe row.
      train_rows: probe rows used for training.
      config: PipelineConfig; ``stage_order`` overrides the learned order.
      seed: master seed; stage ensembles draw from named sub-streams.
      identifiers: declared identifier order (tie-break); defaults to ``scores`` order.
    """
    identifiers = list(scores) if identifiers is None else list(identifiers)
    train_rows = np.asarray(train_rows)
    truth = np.asarray(truth)
    stats = identifier_stats({i: scores[i] for i in identifiers}, train_rows)
    z = {i: normalize.zscore(scores[i][train_rows], stats[i]) for i in identifiers}
    t = truth[train_rows]
    if config.stage_order:
        unknown = set(config.stage_order) ^ set(identifiers)
        if unknown:
            raise ConfigurationError(f"stage order does not cover identifiers: {sorted(unknown)}")
        order, ensembles = list(config.stage_order), []
    else:
        order, ensembles = order_stages(z, t, identifiers, config, seed)
    prefix = _PrefixFusion([z[i] for i in order])
    for j in range(len(ensembles) + 1, len(order)):
        ens, _, _ = _stage_ensemble(prefix, t, j, config, seed)
        if ens is None:
            break
        ensembles.append(ens)
    if len(order) == 1:
        warnings.warn("single identifier: no stages to predict, ranking is unimodal")
    return FusionModel(order, stats, ensembles, config.k, config.m, config.eta)


# ---- de-duplication ---------------------------------------------------------

@dataclass(frozen=True)
class StopRule:
    """Which stopping test runs between stages, with its parameters."""

    baseline: Baseline = Baseline.ADAPTIVE
    alpha: float = 0.05
    outlier_n: int | None = None
    quality_threshold: int = 3


def normalized_vectors(model, probe_scores):
    """z-normalized score vectors of the probe's available identifiers, in stage order."""
    vecs, names = [], []
    for ident in model.stage_order:
        v = probe_scores.get(ident)
        if v is None:
            continue
        v = np.asarray(v, dtype=float)
        if np.all(np.isnan(v)):
            continue
        vecs.append(normalize.zscore(v, model.stats[ident]))
        names.append(ident)
    if not vecs:
        raise ConfigurationError("probe has no scores for any modeled identifier")
    return vecs, names


def dedup_probe(model, probe_scores, probe_id="", gallery_ids=None, rule=StopRule(),
                probe_quality=None):
    """Fuse identifiers stage by stage until the stopping rule terminates.

    Args:
      model: trained FusionModel.
      probe_scores: identifier -> raw score vector over the gallery.
      probe_id: label carried into the decision.
      gallery_ids: gallery labels; defaults to string indices.
      rule: StopRule choosing adaptive, outlier, quality or full fusion.
      probe_quality: quality level of the gated identifier (quality rule only).
    """
    vecs, names = normalized_vectors(model, probe_scores)
    n = len(vecs)
    size = len(vecs[0])
    if size < model.k:
        raise ConfigurationError(f"gallery of {size} is smaller than k={model.k}")
    gallery_ids = [str(i) for i in range(size)] if gallery_ids is None else gallery_ids
    verdicts = []
    early = False
    j = 0
    while True:
        j += 1
        fused = fuse_prefix(vecs, j)
        if j >= n:
            break
        verdict = _stop(model, rule, j, fused, probe_quality, names)
        verdicts.append(verdict)
        if verdict is Decision.TERMINATE:
            early = True
            break
    return DedupDecision(probe_id, gallery_ids[rank1_index(fused)], j, early, fused, verdicts)


def _stop(model, rule, j, fused, probe_quality, names):
    if rule.baseline is Baseline.FULL:
        return Decision.CONTINUE
    if rule.baseline is Baseline.OUTLIER:
        return outlier_stop(fused, rule.alpha, rule.outlier_n)
    if rule.baseline is Baseline.QUALITY:
        if j > 1:
            return Decision.CONTINUE
        if probe_quality is None:
            raise ConfigurationError("quality rule needs the probe's quality level")
        return quality_gate(probe_quality, rule.quality_threshold)
    if j > len(model.ensembles):
        return Decision.CONTINUE
    ens = model.ensembles[j - 1]
    p = ens.max_probability(top_k(fused, model.k))[0]
    return Decision.TERMINATE if terminates(p, model.eta) else Decision.CONTINUE


def quality_identifier(model, kinds, override=None):
    """Identifier whose quality gates fusion: the override, else the first biometric stage."""
    if override:
        return override
    for ident in model.stage_order:
        if kinds.get(ident) == "biometric":
            return ident
    raise ConfigurationError("no biometric identifier to gate on quality")


def dedup(model, scores, probe_rows, probe_ids, gallery_ids, rule=StopRule(), qualities=None):
    """Run ``dedup_probe`` over probe rows; ``qualities`` maps row -> level for the quality rule."""
    out = []
    for p in probe_rows:
        probe = {ident: scores[ident][p] for ident in model.stage_order if ident in scores}
        q = None if qualities is None else qualities[p]
        out.append(dedup_probe(model, probe, probe_ids[p], gallery_ids, rule, q))
    return out


# ---- per-stage analysis (PEET) ----------------------------------------------

def stage_view(model, scores, probe_rows, truth, j):
    """Fused prefix j for each probe with more than j identifiers available.

    Returns:
      (rows, fused matrix, rank-1-correct flags).
    """
    z = [normalize.zscore(scores[i][probe_rows], model.stats[i]) for i in model.stage_order]
    prefix = _PrefixFusion(z)
    keep = np.flatnonzero(prefix.n_available() > j)
    fused = prefix.fused(j)[keep]
    rows = np.asarray(probe_rows)[keep]
    correct = np.array([rank1_index(fused[i]) == truth[r] for i, r in enumerate(rows)], dtype=bool)
    return rows, fused, correct


def ensemble_statistic(model, fused, j):
    """Largest member probability per probe for the stage-j ensemble."""
    feats = np.array([top_k(f, model.k) for f in fused]).reshape(len(fused), model.k)
    return model.ensembles[j - 1].max_probability(feats)


def outlier_statistics(fused, n=None):
    return np.array([outlier_statistic(f, n) for f in fused])
