"""Virtual multi-modal datasets: biographical records with typo-corrupted
duplicates and parametric biometric score matrices.

Every generator is a pure function of its inputs and seed. Named
sub-streams (:func:`substream`) keep components independently re-runnable.
"""

import csv
import zlib
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .textsim import canonicalize, similarity_matrices

CATEGORIES = ("first_male", "first_female", "last")
BIOGRAPHICAL_FIELDS = ("name", "fathersname")
DEFAULT_QUALITY_MASSES = (0.35, 0.30, 0.20, 0.10, 0.05)


def substream(seed, name):
    """Independent seed for a named component of a run (``seed`` may itself be a sub-stream)."""
    key = zlib.crc32(name.encode())
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (key,))
    return np.random.SeedSequence(seed, spawn_key=(key,))


@dataclass(frozen=True)
class NameFrequencyTable:
    category: str
    names: tuple
    frequencies: tuple

    def __post_init__(self):
        if not self.names:
            raise ValueError(f"empty {self.category} name table")
        if len(self.names) != len(self.frequencies):
            raise ValueError("names and frequencies differ in length")
        if any(f <= 0 for f in self.frequencies):
            raise ValueError("frequencies must be positive")

    @classmethod
    def from_entries(cls, category, entries):
        names, freqs = zip(*entries) if entries else ((), ())
        return cls(category, tuple(canonicalize(n) for n in names), tuple(float(f) for f in freqs))

    @classmethod
    def read_csv(cls, category, path):
        """Read ``name,frequency`` lines."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        return cls.from_entries(category, [(r[0], r[1]) for r in rows])

    def probabilities(self):
        f = np.asarray(self.frequencies)
        return f / f.sum()


def default_tables():
    """The bundled illustrative tables (Zipf-weighted common US names)."""
    tables = {}
    for cat in CATEGORIES:
        with resources.as_file(resources.files(__package__) / "data" / f"{cat}.csv") as path:
            tables[cat] = NameFrequencyTable.read_csv(cat, path)
    return tables


@dataclass(frozen=True)
class ErrorModel:
    """Per-character typo probabilities applied in one left-to-right pass."""

    substitution: float = 0.02
    deletion: float = 0.01
    insertion: float = 0.01
    transposition: float = 0.01

    def __post_init__(self):
        for name in ("substitution", "deletion", "insertion", "transposition"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} rate must lie in [0, 1]")

    @classmethod
    def none(cls):
        return cls(0.0, 0.0, 0.0, 0.0)


ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def corrupt(s, em, seed):
    """Apply transposition, deletion, substitution and insertion events left to right.

    At each position the events are tried in that order; a transposition swaps
    the character with its right neighbour and consumes both. Spaces are left
    alone so multi-word fields keep their word count.
    """
    rng = np.random.default_rng(seed)
    return _corrupt(s, em, rng)


def _corrupt(s, em, rng):
    out = []
    i = 0
    n = len(s)
    while i < n:
        ch = s[i]
        if ch == " ":
            out.append(ch)
            i += 1
            continue
        u = rng.random(4)
        if u[0] < em.transposition and i + 1 < n and s[i + 1] != " ":
            out.append(s[i + 1])
            out.append(ch)
            i += 2
            continue
        if u[1] < em.deletion:
            i += 1
            continue
        if u[2] < em.substitution:
            ch = _other_letter(ch, rng)
        out.append(ch)
        if u[3] < em.insertion:
            out.append(ALPHABET[rng.integers(len(ALPHABET))])
        i += 1
    return "".join(out)


def _other_letter(ch, rng):
    pool = ALPHABET.replace(ch, "") if ch in ALPHABET else ALPHABET
    return pool[rng.integers(len(pool))]


@dataclass(frozen=True)
class ModalityModel:
    """Score model for one biometric identifier.

    Impostor scores are exponential with rate ``impostor_rate``, or Weibull
    with that scale rate when ``impostor_shape`` differs from 1 (below 1 gives
    a heavier upper tail than the exponential); genuine scores
    are normal with a mean that depends on the probe's quality level (index 0
    is level 1, excellent). For ``hard_case_fraction`` of subjects the genuine
    score is redrawn from the impostor distribution.
    """

    name: str
    impostor_rate: float = 1.0
    impostor_shape: float = 1.0
    genuine_means: tuple = (60.0, 35.0, 18.0, 12.0, 9.5)
    genuine_std: float = 4.0
    hard_case_fraction: float = 0.0
    quality_masses: tuple = DEFAULT_QUALITY_MASSES
    missing_fraction: float = 0.0

    def __post_init__(self):
        if self.impostor_rate <= 0:
            raise ValueError("impostor rate must be positive")
        if self.impostor_shape <= 0:
            raise ValueError("impostor shape must be positive")
        if len(self.genuine_means) != 5 or any(
            a <= b for a, b in zip(self.genuine_means, self.genuine_means[1:])
        ):
            raise ValueError("need 5 genuine means, strictly decreasing with quality level")
        if not 0.0 <= self.hard_case_fraction <= 1.0:
            raise ValueError("hard_case_fraction must lie in [0, 1]")
        if not 0.0 <= self.missing_fraction < 1.0:
            raise ValueError("missing_fraction must lie in [0, 1)")
        if len(self.quality_masses) != 5 or abs(sum(self.quality_masses) - 1.0) > 1e-9:
            raise ValueError("quality masses must be 5 probabilities summing to 1")


def default_modalities():
    return (
        ModalityModel("fingerprint", hard_case_fraction=0.02),
        ModalityModel("face", genuine_means=(30.0, 20.0, 15.0, 12.0, 10.0), hard_case_fraction=0.02),
    )


@dataclass(frozen=True)
class SubjectRecord:
    id: str
    gender: str
    first_name: str
    last_name: str
    father_first_name: str
    gallery_bio: dict = field(hash=False)
    probe_bio: dict = field(hash=False)
    quality: dict = field(default_factory=dict, hash=False)


def _draw(table, rng, size):
    return [table.names[i] for i in rng.choice(len(table.names), size=size, p=table.probabilities())]


def sample_subjects(n, tables, seed, error_model=ErrorModel(), modalities=()):
    """Draw n identities and a corrupted probe instance of each.

    Gender is a fair coin; first names come from the gender's table, the
    father's first name from the male table, and the surname is shared by
    both name fields. Probe fields are corrupted word by word.

    Args:
      n: number of subjects (>= 1).
      tables: mapping with keys ``first_male``, ``first_female``, ``last``.
      seed: integer seed or SeedSequence.
      error_model: typo model for probe instances.
      modalities: ModalityModels whose quality levels are drawn per subject.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    for cat in CATEGORIES:
        if cat not in tables:
            raise ValueError(f"missing {cat} table")
    root = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    names_ss, typo_ss, quality_ss = root.spawn(3)
    rng = np.random.default_rng(names_ss)
    genders = np.where(rng.random(n) < 0.5, "M", "F")
    male = _draw(tables["first_male"], rng, n)
    female = _draw(tables["first_female"], rng, n)
    fathers = _draw(tables["first_male"], rng, n)
    lasts = _draw(tables["last"], rng, n)

    typo_rng = np.random.default_rng(typo_ss)
    qrng = np.random.default_rng(quality_ss)
    qualities = {m.name: qrng.choice(5, size=n, p=np.asarray(m.quality_masses)) + 1
                 for m in modalities}
    width = len(str(n - 1))
    out = []
    for i in range(n):
        first = male[i] if genders[i] == "M" else female[i]
        gallery = {"name": f"{first} {lasts[i]}", "fathersname": f"{fathers[i]} {lasts[i]}"}
        probe = {k: _corrupt(v, error_model, typo_rng) for k, v in gallery.items()}
        out.append(SubjectRecord(
            id=f"S{i:0{width}d}", gender=str(genders[i]), first_name=first, last_name=lasts[i],
            father_first_name=fathers[i], gallery_bio=gallery, probe_bio=probe,
            quality={name: int(q[i]) for name, q in qualities.items()},
        ))
    return out


def _impostors(rng, mm, size):
    if mm.impostor_shape == 1.0:
        return rng.exponential(1.0 / mm.impostor_rate, size=size)
    return rng.weibull(mm.impostor_shape, size=size) / mm.impostor_rate


def gen_scores(subjects, mm, seed):
    """Probe-by-gallery score matrix; subject i's mate is gallery column i.

    Rows of probes with a missing sample are all NaN.
    """
    n = len(subjects)
    if n == 0:
        raise ValueError("no subjects")
    rng = np.random.default_rng(seed)
    scores = _impostors(rng, mm, (n, n))
    levels = np.array([s.quality.get(mm.name, 1) for s in subjects]) - 1
    means = np.asarray(mm.genuine_means)[levels]
    genuine = rng.normal(means, mm.genuine_std)
    hard = rng.random(n) < mm.hard_case_fraction
    genuine = np.where(hard, _impostors(rng, mm, n), genuine)
    scores[np.arange(n), np.arange(n)] = genuine
    missing = rng.random(n) < mm.missing_fraction
    scores[missing] = np.nan
    return scores


def bio_scores(subjects, fields=BIOGRAPHICAL_FIELDS, method="average"):
    """Biographical similarity matrices (probe instance vs gallery instance) per field."""
    out = {}
    for f in fields:
        avg, lev = similarity_matrices([s.probe_bio[f] for s in subjects],
                                       [s.gallery_bio[f] for s in subjects])
        out[f] = avg if method == "average" else lev
    return out


def make_folds(n, folds, seed):
    """Random partition of range(n) into ``folds`` sets whose sizes differ by at most one."""
    if folds < 2 or n < folds:
        raise ValueError("need folds >= 2 and n >= folds")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


@dataclass
class Dataset:
    """Closed-set dataset: probe i's mate is gallery entry i."""

    subjects: list
    scores: dict  # identifier -> (n_probes, n_gallery) array
    kinds: dict  # identifier -> "biometric" | "biographical"

    @property
    def identifiers(self):
        return list(self.scores)

    @property
    def ids(self):
        return [s.id for s in self.subjects]

    @property
    def truth(self):
        return np.arange(len(self.subjects))

    def merged_biographical(self, fields=BIOGRAPHICAL_FIELDS, name="biographical"):
        """Copy with the biographical fields averaged into one identifier."""
        scores = {k: v for k, v in self.scores.items() if k not in fields}
        kinds = {k: v for k, v in self.kinds.items() if k not in fields}
        scores[name] = np.mean([self.scores[f] for f in fields], axis=0)
        kinds[name] = "biographical"
        return Dataset(self.subjects, scores, kinds)

    def subset(self, identifiers):
        return Dataset(self.subjects, {k: self.scores[k] for k in identifiers},
                       {k: self.kinds[k] for k in identifiers})


def generate(n, seed, tables=None, error_model=ErrorModel(), modalities=None,
             bio_method="average"):
    """Subjects plus score matrices for every modality and biographical field."""
    tables = default_tables() if tables is None else tables
    modalities = default_modalities() if modalities is None else modalities
    subjects = sample_subjects(n, tables, substream(seed, "subjects"), error_model, modalities)
    scores, kinds = {}, {}
    for mm in modalities:
        scores[mm.name] = gen_scores(subjects, mm, substream(seed, "scores/" + mm.name))
        kinds[mm.name] = "biometric"
    for f, mat in bio_scores(subjects, method=bio_method).items():
        scores[f] = mat
        kinds[f] = "biographical"
    return Dataset(subjects, scores, kinds)


# ---- files -----------------------------------------------------------------

MANIFEST_HEADER = ("id", "gender", "gallery_name", "gallery_fathersname",
                   "probe_name", "probe_fathersname", "quality")


def write_manifest(subjects, path):
    """Tab-separated, one subject per line, after a ``#``-prefixed header."""
    with open(path, "w", newline="\n") as fh:
        fh.write("#" + "\t".join(MANIFEST_HEADER) + "\n")
        for s in subjects:
            quality = ";".join(f"{k}={v}" for k, v in sorted(s.quality.items()))
            fh.write("\t".join([s.id, s.gender, s.gallery_bio["name"], s.gallery_bio["fathersname"],
                                s.probe_bio["name"], s.probe_bio["fathersname"], quality]) + "\n")


def read_manifest(path):
    subjects = []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            sid, gender, gname, gfather, pname, pfather, quality = line.rstrip("\n").split("\t")
            first, _, last = gname.partition(" ")
            father = gfather.partition(" ")[0]
            q = dict(kv.split("=") for kv in quality.split(";") if kv)
            subjects.append(SubjectRecord(
                id=sid, gender=gender, first_name=first, last_name=last, father_first_name=father,
                gallery_bio={"name": gname, "fathersname": gfather},
                probe_bio={"name": pname, "fathersname": pfather},
                quality={k: int(v) for k, v in q.items()},
            ))
    return subjects


SCORE_HEADER = "probe_id,gallery_id,identifier,score"


def write_scores(matrix, identifier, probe_ids, gallery_ids, path):
    """``probe_id,gallery_id,identifier,score`` rows; NaN cells are omitted."""
    with open(path, "w", newline="\n") as fh:
        fh.write(SCORE_HEADER + "\n")
        for i, pid in enumerate(probe_ids):
            row = matrix[i]
            prefix = f"{pid},"
            suffix = f",{identifier},"
            fh.write("".join(
                prefix + gid + suffix + format(v, ".17g") + "\n"
                for gid, v in zip(gallery_ids, row.tolist()) if v == v
            ))


def read_scores(path, probe_ids, gallery_ids):
    """Read a score file into {identifier: matrix}; absent cells become NaN."""
    pidx = {p: i for i, p in enumerate(probe_ids)}
    gidx = {g: j for j, g in enumerate(gallery_ids)}
    out = {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != SCORE_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        for line in fh:
            pid, gid, ident, value = line.rstrip("\n").split(",")
            mat = out.get(ident)
            if mat is None:
                mat = out[ident] = np.full((len(probe_ids), len(gallery_ids)), np.nan)
            mat[pidx[pid], gidx[gid]] = float(value)
    return out
