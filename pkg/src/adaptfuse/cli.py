"""Command-line entry point: ``adaptfuse generate | train | dedup | eval``.

All commands share one working directory (``--out``). ``generate`` writes the
dataset there, ``train`` adds one model per cross-validation fold, ``dedup``
writes per-probe decisions and an effort report, and ``eval`` emits CMC,
DET and PEET curves. The resolved configuration is echoed as ``config.txt``.

Exit status is 0 on success, 2 for invalid configuration or inputs and 1
for runtime failures.
"""

import argparse
import logging
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import datagen, evaluate, pipeline
from .config import ConfigError, RunConfig, load_config
from .predictor import TrainConfig, terminates

log = logging.getLogger("adaptfuse")

EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


# ---- dataset directory ------------------------------------------------------

def _kind_file(d):
    return os.path.join(d, "identifiers.tsv")


def _score_file(d, ident):
    return os.path.join(d, f"scores_{ident}.csv")


def _model_file(d, fold):
    return os.path.join(d, f"model_fold{fold}.txt")


def _write_text(path, text):
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _echo_config(cfg, out):
    _write_text(os.path.join(out, "config.txt"), cfg.dump())


def _require(path):
    if not os.path.exists(path):
        raise ConfigError(f"missing input {path}")
    return path


def load_dataset(d):
    """Read manifest, identifier kinds and score files written by ``generate``."""
    subjects = datagen.read_manifest(_require(os.path.join(d, "manifest.tsv")))
    kinds = {}
    with open(_require(_kind_file(d))) as fh:
        for line in fh:
            name, kind = line.rstrip("\n").split("\t")
            kinds[name] = kind
    ids = [s.id for s in subjects]
    scores = {}
    for ident in kinds:
        scores.update(datagen.read_scores(_require(_score_file(d, ident)), ids, ids))
        scores.setdefault(ident, np.full((len(ids), len(ids)), np.nan))
    return datagen.Dataset(subjects, scores, kinds)


def _folds(cfg, n):
    return datagen.make_folds(n, cfg.folds, datagen.substream(cfg.seed, "folds"))


def _fold_models(cfg, out):
    return [pipeline.FusionModel.read(_require(_model_file(out, i))) for i in range(cfg.folds)]


# ---- commands ---------------------------------------------------------------

def cmd_generate(cfg, out):
    em = datagen.ErrorModel(cfg.typo_substitution, cfg.typo_deletion,
                            cfg.typo_insertion, cfg.typo_transposition)
    mods = tuple(
        datagen.ModalityModel(**{**m.__dict__, "impostor_shape": cfg.impostor_shape,
                                 "missing_fraction": cfg.missing_fraction})
        for m in datagen.default_modalities()
    )
    ds = datagen.generate(cfg.n, cfg.seed, error_model=em, modalities=mods,
                          bio_method=cfg.bio_method)
    if cfg.biographical == "merged":
        ds = ds.merged_biographical()
    if cfg.identifiers:
        unknown = set(cfg.identifiers) - set(ds.scores)
        if unknown:
            raise ConfigError(f"unknown identifiers: {sorted(unknown)}")
        ds = ds.subset(cfg.identifiers)
    datagen.write_manifest(ds.subjects, os.path.join(out, "manifest.tsv"))
    _write_text(_kind_file(out), "".join(f"{k}\t{v}\n" for k, v in ds.kinds.items()))
    for ident, mat in ds.scores.items():
        datagen.write_scores(mat, ident, ds.ids, ds.ids, _score_file(out, ident))
    print(f"generated {len(ds.subjects)} subjects, {len(ds.scores)} identifiers")
    for ident, mat in ds.scores.items():
        print(f"  {ident} ({ds.kinds[ident]}): rank-1 {evaluate.rank1_accuracy(mat):.4f}")
    return 0


def _pipeline_config(cfg):
    return pipeline.PipelineConfig(
        k=cfg.k, m=cfg.m, eta=cfg.eta, alpha=cfg.alpha,
        outlier_n=cfg.outlier_n or None, quality_threshold=cfg.quality_threshold,
        quality_identifier=cfg.quality_identifier or None,
        stage_order=cfg.stage_order or None,
        train=TrainConfig(step=cfg.step, max_iter=cfg.max_iter, tol=cfg.tol, l2=cfg.l2),
    )


def cmd_train(cfg, out):
    ds = load_dataset(cfg.data or out)
    folds = _folds(cfg, len(ds.subjects))
    lines = ["fold\tprobe_id"]
    for i, test in enumerate(folds):
        lines += [f"{i}\t{ds.ids[p]}" for p in test]
        train_rows = np.sort(np.concatenate([f for j, f in enumerate(folds) if j != i]))
        model = pipeline.train_pipeline(ds.scores, ds.truth, train_rows, _pipeline_config(cfg),
                                        datagen.substream(cfg.seed, f"train/fold{i}"))
        model.write(_model_file(out, i))
        print(f"fold {i}: stage order {','.join(model.stage_order)}")
        for j in range(1, len(model.ensembles) + 1):
            _, fused, correct = pipeline.stage_view(model, ds.scores, train_rows, ds.truth, j)
            term = terminates(pipeline.ensemble_statistic(model, fused, j), model.eta)
            print(f"  stage {j}: training terminations {100 * term.mean():.2f}%"
                  f" ({int(np.sum(term & ~correct))} wrong)")
    _write_text(os.path.join(out, "folds.tsv"), "\n".join(lines) + "\n")
    return 0


def _stage_labels(models):
    orders = {tuple(m.stage_order) for m in models}
    if len(orders) == 1:
        return list(models[0].stage_order)
    return [f"stage{s}" for s in range(1, len(models[0].stage_order) + 1)]


def cmd_dedup(cfg, out):
    ds = load_dataset(cfg.data or out)
    models = _fold_models(cfg, out)
    folds = _folds(cfg, len(ds.subjects))
    rule = pipeline.StopRule(pipeline.Baseline(cfg.baseline), cfg.alpha, cfg.outlier_n or None,
                             cfg.quality_threshold)
    jobs = []
    for model, test in zip(models, folds):
        missing = set(model.stage_order) - set(ds.scores)
        if missing:
            raise ConfigError(f"model identifiers missing from scores: {sorted(missing)}")
        model = model.with_eta(cfg.eta) if cfg.eta != model.eta else model
        qual_id = None
        if rule.baseline is pipeline.Baseline.QUALITY:
            qual_id = pipeline.quality_identifier(model, ds.kinds, cfg.quality_identifier or None)
        for p in test:
            jobs.append((model, p, qual_id))

    def run(job):
        model, p, qual_id = job
        probe = {i: ds.scores[i][p] for i in model.stage_order}
        q = ds.subjects[p].quality.get(qual_id) if qual_id else None
        return p, pipeline.dedup_probe(model, probe, ds.ids[p], ds.ids, rule, q)

    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        results = sorted(pool.map(run, jobs), key=lambda r: r[0])
    decisions = [d for _, d in results]
    rows = ["probe_id,rank1_id,stages_used,early_terminated"]
    rows += [f"{d.probe_id},{d.rank1_id},{d.stages_used},{int(d.early_terminated)}" for d in decisions]
    _write_text(os.path.join(out, f"decisions_{cfg.baseline}.csv"), "\n".join(rows) + "\n")
    truth = {pid: pid for pid in ds.ids}
    report = evaluate.effort_report(decisions, _stage_labels(models), truth)
    evaluate.write_effort_report(report, os.path.join(out, f"effort_{cfg.baseline}.csv"))
    for label, pct in report:
        print(f"{label}: {pct:.2f}%")
    return 0


def cmd_eval(cfg, out):
    ds = load_dataset(cfg.data or out)
    models = _fold_models(cfg, out)
    folds = _folds(cfg, len(ds.subjects))
    n = len(ds.subjects)
    ranks = min(cfg.cmc_ranks, n)
    for ident, mat in ds.scores.items():
        evaluate.cmc(mat, max_rank=ranks).write(os.path.join(out, f"cmc_{ident}.csv"))

    fused = np.full((n, n), np.nan)
    for model, test in zip(models, folds):
        for p in test:
            vecs, _ = pipeline.normalized_vectors(model, {i: ds.scores[i][p] for i in model.stage_order})
            fused[p] = pipeline.full_fusion(vecs)
    evaluate.cmc(fused, max_rank=ranks).write(os.path.join(out, "cmc_fused.csv"))
    rates = evaluate.verification_rates(*evaluate.genuine_impostor(fused))
    rates.write_table(os.path.join(out, "det_fused.csv"))

    grid = evaluate.decade_grid(cfg.sweep_hi, cfg.sweep_lo)
    alphas = [a for a in grid if 0 < a < 1]
    summary = [f"rank1_fused,{evaluate.rank1_accuracy(fused)!r}", f"eer_fused,{rates.eer!r}"]
    n_stages = min(len(m.stage_order) for m in models)
    for j in range(1, n_stages):
        p_max, z, correct, n_scores = [], [], [], []
        for model, test in zip(models, folds):
            eta_model = model.with_eta(cfg.eta)
            _, f, c = pipeline.stage_view(eta_model, ds.scores, test, ds.truth, j)
            if j <= len(model.ensembles):
                p_max.append(pipeline.ensemble_statistic(eta_model, f, j))
            z.append(pipeline.outlier_statistics(f, cfg.outlier_n or None))
            n_scores.append(np.full(len(f), cfg.outlier_n or f.shape[1]))
            correct.append(c)
        correct = np.concatenate(correct)
        n_scores = np.concatenate(n_scores)
        if len(p_max) == len(models):
            ens = evaluate.peet_points(np.concatenate(p_max), correct, grid, terminates)
            evaluate.peet_curve(ens).write(os.path.join(out, f"peet_stage{j}_adaptive.csv"))
            summary.append(f"peet_stage{j}_adaptive_min_effort_zero_error,"
                           f"{evaluate.min_effort_at_zero_error(ens)!r}")
        out_pts = evaluate.peet_points(
            np.concatenate(z), correct, alphas,
            lambda s, a: s > np.array([pipeline.outlier_threshold(a, int(k)) for k in n_scores]))
        evaluate.peet_curve(out_pts).write(os.path.join(out, f"peet_stage{j}_outlier.csv"))
        summary.append(f"peet_stage{j}_outlier_min_effort_zero_error,"
                       f"{evaluate.min_effort_at_zero_error(out_pts)!r}")
    _write_text(os.path.join(out, "summary.csv"), "metric,value\n" + "\n".join(summary) + "\n")
    for line in summary:
        print(line.replace(",", ": "))
    return 0


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "dedup": cmd_dedup, "eval": cmd_eval}


# ---- argument handling --------------------------------------------------------

def _stage_list(text):
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    if not names:
        raise argparse.ArgumentTypeError("empty stage order")
    return names


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--baseline", choices=[b.value for b in pipeline.Baseline])
    common.add_argument("--stage-order", type=_stage_list, metavar="LIST",
                        help="comma-separated identifier order overriding the learned one")
    common.add_argument("--eta", type=float)
    common.add_argument("--alpha", type=float)
    common.add_argument("--k", type=int)
    common.add_argument("--m", type=int)
    common.add_argument("--out", metavar="DIR", default=".", help="working directory (default: .)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="adaptfuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "write a synthetic dataset (manifest and score files)",
        "train": "train one fusion model per cross-validation fold",
        "dedup": "de-duplicate every probe with its fold's model",
        "eval": "emit CMC, DET and PEET curves",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(seed=args.seed, workers=args.workers, baseline=args.baseline,
                              stage_order=args.stage_order, eta=args.eta, alpha=args.alpha,
                              k=args.k, m=args.m)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        os.makedirs(args.out, exist_ok=True)
        _echo_config(cfg, args.out)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("default")
            try:
                return COMMANDS[args.command](cfg, args.out)
            finally:
                for w in caught:
                    print(f"adaptfuse: warning: {w.message}", file=sys.stderr)
    except (ConfigError, pipeline.ConfigurationError) as exc:
        print(f"adaptfuse: error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        log.debug("runtime failure", exc_info=True)
        print(f"adaptfuse: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
