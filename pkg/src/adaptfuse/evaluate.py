"""Identification and verification metrics: CMC, rank-1, FAR/FRR/EER,
effort accounting, and predicted effort-to-error (PEET) curves."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Curve:
    """Ordered (x, y) points with axis names, written as ``x,y`` CSV."""

    x_label: str
    y_label: str
    points: tuple

    def write(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write(f"{self.x_label},{self.y_label}\n")
            for x, y in self.points:
                fh.write(f"{_num(x)},{_num(y)}\n")


def _num(v):
    return str(int(v)) if float(v).is_integer() and abs(v) < 1e15 else format(float(v), ".17g")


def mate_ranks(scores, truth=None):
    """1-based rank of each probe's mate; equal-scored non-mates rank ahead (pessimistic).

    Args:
      scores: (n_probes, n_gallery) fused similarities. NaN counts as lowest.
      truth: gallery index of each probe's mate; defaults to the diagonal.

    Raises:
      ValueError: if a probe has no mate in the gallery.
    """
    s = np.asarray(scores, dtype=float)
    n = s.shape[0]
    truth = np.arange(n) if truth is None else np.asarray(truth)
    if np.any(truth < 0) or np.any(truth >= s.shape[1]):
        raise ValueError("probe without a gallery mate (closed-set identification required)")
    s = np.where(np.isnan(s), -np.inf, s)
    genuine = s[np.arange(n), truth]
    others = s >= genuine[:, None]
    return others.sum(axis=1)


def cmc(scores, truth=None, max_rank=None):
    """Cumulative identification rate at ranks 1..max_rank (default: gallery size)."""
    ranks = mate_ranks(scores, truth)
    r = np.asarray(scores).shape[1] if max_rank is None else max_rank
    rates = [(float(np.mean(ranks <= k))) for k in range(1, r + 1)]
    return Curve("rank", "identification_rate", tuple(zip(range(1, r + 1), rates)))


def rank1_accuracy(scores, truth=None):
    return float(np.mean(mate_ranks(scores, truth) == 1))


@dataclass(frozen=True)
class VerificationRates:
    thresholds: np.ndarray
    far: np.ndarray
    frr: np.ndarray
    eer: float
    eer_threshold: float

    def det(self):
        return Curve("far", "frr", tuple(zip(self.far.tolist(), self.frr.tolist())))

    def table(self):
        """Threshold-indexed rows (threshold, FAR, FRR)."""
        return list(zip(self.thresholds.tolist(), self.far.tolist(), self.frr.tolist()))

    def write_table(self, path):
        with open(path, "w", newline="\n") as fh:
            fh.write("threshold,far,frr\n")
            for t, a, r in self.table():
                fh.write(f"{_num(t)},{_num(a)},{_num(r)}\n")


def verification_rates(genuine, impostor):
    """FAR(t) = P(impostor >= t) and FRR(t) = P(genuine < t) over every observed score.

    Thresholds are the distinct observed scores plus +inf. The EER is read
    off the convex hull of the (FAR, FRR) operating points where it crosses
    FAR = FRR; ``eer_threshold`` is the observed threshold nearest that
    crossing (smallest |FAR - FRR|).
    """
    g = np.sort(np.asarray(genuine, dtype=float))
    im = np.sort(np.asarray(impostor, dtype=float))
    if g.size == 0 or im.size == 0:
        raise ValueError("need genuine and impostor scores")
    t = np.unique(np.concatenate([g, im, [np.inf]]))
    far = 1.0 - np.searchsorted(im, t, side="left") / im.size
    frr = np.searchsorted(g, t, side="left") / g.size
    i = int(np.argmin(np.abs(far - frr)))
    return VerificationRates(t, far, frr, _hull_eer(far, frr), float(t[i]))


def _hull_eer(far, frr):
    # lower convex hull of the operating points, walked by increasing FAR
    pts = sorted(set(zip(far.tolist(), frr.tolist())))
    hull = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        d1, d2 = y1 - x1, y2 - x2
        if d1 >= 0 >= d2:
            if d1 == d2:
                return float(x1)
            lam = d1 / (d1 - d2)
            return float(x1 + lam * (x2 - x1))
    return float(min(max(x, y) for x, y in hull))


def genuine_impostor(scores, truth=None):
    """Split a score matrix into genuine (mate) and impostor cells, dropping NaN."""
    s = np.asarray(scores, dtype=float)
    n = s.shape[0]
    truth = np.arange(n) if truth is None else np.asarray(truth)
    mask = np.zeros_like(s, dtype=bool)
    mask[np.arange(n), truth] = True
    ok = ~np.isnan(s)
    return s[mask & ok], s[~mask & ok]


def effort_report(decisions, stage_names, truth=None):
    """Percent of probes reaching each stage >= 2, plus rank-1 accuracy.

    Args:
      decisions: DedupDecision sequence.
      stage_names: names of stages 1..n in order.
      truth: mapping probe id -> mate gallery id; if given, rank-1 is reported.

    Returns:
      list of (label, percent) rows: one per stage from the second on, then
      ``("rank1", pct)`` when truth is available.
    """
    if not decisions:
        raise ValueError("no decisions")
    used = np.array([d.stages_used for d in decisions])
    rows = [(name, 100.0 * float(np.mean(used >= s)))
            for s, name in enumerate(stage_names, start=1) if s >= 2]
    if truth is not None:
        hits = [d.rank1_id == truth[d.probe_id] for d in decisions]
        rows.append(("rank1", 100.0 * float(np.mean(hits))))
    return rows


def write_effort_report(rows, path):
    with open(path, "w", newline="\n") as fh:
        fh.write("stage,percent\n")
        for label, pct in rows:
            fh.write(f"{label},{_num(pct)}\n")


def peet_points(stop_statistic, rank1_correct, thresholds, terminate_rule):
    """Effort/error pairs over a threshold sweep.

    Args:
      stop_statistic: per-probe statistic the stopping rule thresholds.
      rank1_correct: per-probe bool, rank-1 is the mate at this stage.
      thresholds: swept values, in the order the points are reported.
      terminate_rule: ``f(statistic, threshold) -> bool array``.

    Returns:
      list of (threshold, effort %, error %).
    """
    correct = np.asarray(rank1_correct, dtype=bool)
    out = []
    for th in thresholds:
        term = np.asarray(terminate_rule(stop_statistic, th), dtype=bool)
        effort = 100.0 * float(np.mean(~term))
        error = 100.0 * float(np.mean(term & ~correct))
        out.append((float(th), effort, error))
    return out


def peet_curve(points):
    return Curve("effort_percent", "error_percent", tuple((e, r) for _, e, r in points))


def min_effort_at_zero_error(points):
    """Smallest effort among sweep points with zero error (100 if none)."""
    efforts = [e for _, e, r in points if r == 0]
    return min(efforts) if efforts else 100.0


def decade_grid(hi_exp=0, lo_exp=-12):
    """10**hi_exp, 10**(hi_exp-1), ..., 10**lo_exp."""
    return [10.0 ** e for e in range(hi_exp, lo_exp - 1, -1)]
