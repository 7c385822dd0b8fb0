"""Edit distances and average-impact biographical similarity."""

from enum import Enum

import numpy as np

from . import kernels


class DistanceKind(Enum):
    LEVENSHTEIN = "levenshtein"
    DAMERAU_LEVENSHTEIN = "damerau_levenshtein"
    EDITOR = "editor"


def canonicalize(raw):
    """Case-fold, trim, and collapse internal whitespace runs to one space."""
    return " ".join(raw.casefold().split())


def levenshtein(a, b):
    """Minimum number of single-character insertions, deletions and substitutions."""
    return kernels.levenshtein(a, b)


def damerau_levenshtein(a, b):
    """Levenshtein plus adjacent transposition, restricted (optimal string alignment) variant.

    A substring is never edited after it has been transposed, so
    ``damerau_levenshtein("ca", "abc") == 3``.
    """
    return kernels.damerau_levenshtein(a, b)


def editor_distance(a, b):
    """Insert/delete-only distance; a substitution costs two operations."""
    return kernels.editor_distance(a, b)


_DISTANCES = {
    DistanceKind.LEVENSHTEIN: levenshtein,
    DistanceKind.DAMERAU_LEVENSHTEIN: damerau_levenshtein,
    DistanceKind.EDITOR: editor_distance,
}


def distance(a, b, kind):
    return _DISTANCES[kind](a, b)


def max_possible(len_a, len_b, kind):
    if kind is DistanceKind.EDITOR:
        return len_a + len_b
    return max(len_a, len_b)


def impact(d, len_a, len_b, kind):
    """Edit distance divided by the largest distance attainable at these lengths.

    Raises:
      ValueError: if ``d`` exceeds that maximum or is negative.
    """
    top = max_possible(len_a, len_b, kind)
    if d < 0 or d > top:
        raise ValueError(f"distance {d} outside [0, {top}] for lengths ({len_a}, {len_b})")
    if top == 0:
        return 0.0
    return d / top


def similarity(a, b, kind):
    return 1.0 - impact(distance(a, b, kind), len(a), len(b), kind)


def biographical_similarity(a, b):
    """Mean of (1 - impact) over Levenshtein, Damerau-Levenshtein and editor distances.

    Both arguments are canonicalized first, so ``"ab"`` and ``"AB "`` score 1.
    """
    a, b = canonicalize(a), canonicalize(b)
    return sum(similarity(a, b, kind) for kind in DistanceKind) / 3.0


def levenshtein_similarity(a, b):
    a, b = canonicalize(a), canonicalize(b)
    return similarity(a, b, DistanceKind.LEVENSHTEIN)


def nominal_match(a, b):
    return 1.0 if a == b else 0.0


def similarity_matrix(probes, gallery, method="average"):
    """All-pairs similarity between probe strings (rows) and gallery strings (columns).

    Args:
      probes: iterable of strings.
      gallery: iterable of strings.
      method: ``"average"`` for average-impact similarity or ``"levenshtein"``
        for the Levenshtein-only baseline.

    Returns:
      float64 array of shape (len(probes), len(gallery)).
    """
    avg, lev = similarity_matrices(probes, gallery)
    if method == "average":
        return avg
    if method == "levenshtein":
        return lev
    raise ValueError(f"unknown similarity method {method!r}")


def similarity_matrices(probes, gallery):
    """Both the average-impact and Levenshtein-only matrices from one pass."""
    probes = [canonicalize(s) for s in probes]
    gallery = [canonicalize(s) for s in gallery]
    avg, lev = kernels.similarity_matrices(probes, gallery)
    return np.asarray(avg), np.asarray(lev)
