"""Command-line interface.

    penabc simulate  --preset fig3 --output-dir out
    penabc train     --config exp.toml
    penabc abc       --config exp.toml
    penabc evaluate  --config exp.toml
    penabc reproduce fig3 --scale desk --seed 1

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

import argparse
import logging
import sys
import zlib
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import abc, io, pipeline
from .config import FIGURES, ConfigError, Method, MethodSpec, load_config, preset, with_overrides
from .models import ModelId, get_model

log = logging.getLogger("penabc")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class StageError(RuntimeError):
    """A pipeline stage could not run (missing inputs, divergence, ...)."""


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _stamp_ok(path, digest):
    return path.exists() and path.read_text(encoding="utf-8").strip() == digest


def _write_stamp(path, digest):
    path.write_text(digest + "\n", encoding="utf-8")


def _digest(*parts):
    return f"{zlib.crc32(repr(parts).encode()) & 0xFFFFFFFF:08x}"


def _need(path):
    if not Path(path).exists():
        raise StageError(f"missing input {path}; run the earlier stage first")
    return Path(path)


def _theta_header(p):
    return [f"theta_{j + 1}" for j in range(p)]


def _simulate_digest(cfg):
    return _digest(cfg.model.value, cfg.seed, cfg.n_tilde, cfg.n_eval, max(cfg.grid), cfg.repetitions)


def _learned(cfg):
    return cfg.method.method is not Method.HANDPICKED


def _tag(cfg):
    return f"{cfg.method.label}-n{cfg.n_train if _learned(cfg) else 0}"


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------


def cmd_simulate(cfg):
    """Observed data sets, training/evaluation pairs and the reference table."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = out / "simulate.stamp"
    digest = _simulate_digest(cfg)
    if _stamp_ok(stamp, digest):
        log.info("simulate: up to date")
        return out
    bm = get_model(cfg.model)
    p = bm.n_params
    obs = np.stack([pipeline.observed_series(cfg, r) for r in range(cfg.repetitions)])
    io.write_series_binary(out / "observed.bin", obs)
    io.write_series_csv(out / "observed.csv", obs[0])
    th, ys = pipeline.training_pairs(cfg, max(cfg.grid))
    io.write_matrix_csv(out / "train_theta.csv", th, _theta_header(p))
    io.write_series_binary(out / "train_series.bin", ys)
    th, ys = pipeline.eval_pairs(cfg)
    io.write_matrix_csv(out / "eval_theta.csv", th, _theta_header(p))
    io.write_series_binary(out / "eval_series.bin", ys)
    table = pipeline.reference_table(cfg)
    io.write_matrix_csv(out / "table_theta.csv", table.theta, _theta_header(p))
    io.write_series_binary(out / "table_series.bin", table.series)
    _write_stamp(stamp, digest)
    log.info("simulate: wrote data sets to %s", out)
    return out


def cmd_train(cfg):
    if not _learned(cfg):
        raise ConfigError("train needs a learned method (mlp-small, mlp-large, mlp-pre or pen)")
    out = Path(cfg.output_dir)
    wpath = out / f"weights-{_tag(cfg)}.bin"
    lpath = out / f"trainlog-{_tag(cfg)}.csv"
    stamp = out / f"weights-{_tag(cfg)}.stamp"
    digest = _digest(
        _simulate_digest(cfg), cfg.method.label, cfg.n_train, cfg.epochs, cfg.batch_size,
        repr(cfg.learning_rate), repr(cfg.clip_norm), cfg.pooling, (out / "simulate.stamp").read_text() if (out / "simulate.stamp").exists() else "",
    )
    if wpath.exists() and _stamp_ok(stamp, digest):
        log.info("train: up to date")
        return wpath
    _, th_tr = io.read_matrix_csv(_need(out / "train_theta.csv"))
    y_tr = io.read_series_binary(_need(out / "train_series.bin"))
    _, th_ev = io.read_matrix_csv(_need(out / "eval_theta.csv"))
    y_ev = io.read_series_binary(_need(out / "eval_series.bin"))
    if cfg.n_train > th_tr.shape[0]:
        raise StageError(f"only {th_tr.shape[0]} training pairs on disk, config asks for {cfg.n_train}")
    spec, result = pipeline.train_summary(cfg, cfg.method, cfg.n_train, (th_tr, y_tr), (th_ev, y_ev))
    io.save_weights(wpath, spec, result.weights)
    pipeline.write_training_log(lpath, result)
    _write_stamp(stamp, digest)
    return wpath


def _summarizer(cfg):
    out = Path(cfg.output_dir)
    if not _learned(cfg):
        return pipeline.Summarizer(cfg.model, cfg.method)
    spec = pipeline.network_spec(cfg.model, cfg.method, cfg.pooling)
    _, w = io.load_weights(_need(out / f"weights-{_tag(cfg)}.bin"), expect=spec)
    return pipeline.Summarizer(cfg.model, cfg.method, spec, w, cfg.canonical_pooling)


def cmd_abc(cfg):
    """Rejection ABC for every observed data set; one posterior CSV per repetition."""
    out = Path(cfg.output_dir)
    summ = _summarizer(cfg)
    _, theta = io.read_matrix_csv(_need(out / "table_theta.csv"))
    series = io.read_series_binary(_need(out / "table_series.bin"))
    table = abc.summarize_table(abc.ReferenceTable(cfg.model, theta, series), summ)
    obs = io.read_series_binary(_need(out / "observed.bin"))
    s_obs = summ(obs)
    paths = []
    for r in range(min(cfg.repetitions, obs.shape[0])):
        post = abc.rejection_sample(table, s_obs[r], cfg.percentile_x, summ.diag_weights)
        path = out / f"posterior-{_tag(cfg)}-rep{r}.csv"
        abc.write_posterior_csv(path, post)
        paths.append(path)
    log.info("abc: %d posteriors of %d draws", len(paths), post.n)
    return paths


def cmd_evaluate(cfg):
    """Per-repetition metrics against the reference posterior (or the truth)."""
    out = Path(cfg.output_dir)
    obs = io.read_series_binary(_need(out / "observed.bin"))
    n = cfg.n_train if _learned(cfg) else 0
    results = []
    for r in range(min(cfg.repetitions, obs.shape[0])):
        post = abc.read_posterior_csv(_need(out / f"posterior-{_tag(cfg)}-rep{r}.csv"))
        ref = None
        if cfg.model is not ModelId.ALPHA_STABLE:
            ref = pipeline.cached_reference(cfg, obs[r], r, out / "cache")
        results.append(pipeline.evaluate_rep(cfg, cfg.method, n, r, post, ref))
    path = out / f"metrics-{_tag(cfg)}.csv"
    pipeline.write_results(path, cfg.model, results)
    pipeline.write_summary(out / f"metrics-{_tag(cfg)}_summary.csv", cfg.model,
                           pipeline.summarize_results(cfg.model, results))
    return path


def cmd_reproduce(figure, cfg=None, scale="desk", seed=0, output_dir="out", threads=1):
    return pipeline.reproduce(figure, cfg, scale=scale, seed=seed, output_dir=output_dir,
                              threads=threads)


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="experiment TOML file")
    p.add_argument("--preset", choices=sorted(FIGURES), help="start from a shipped figure preset")
    p.add_argument("--seed", type=int, help="top-level seed (overrides the config)")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk",
                   help="preset scale (default desk)")
    p.add_argument("--threads", type=int, default=1, help="workers for repetitions")
    p.add_argument("--output-dir", help="output directory (overrides the config)")
    p.add_argument("--method", help="summary method, e.g. handpicked, mlp-large, pen-2")
    p.add_argument("--n-train", type=int, help="training-set size")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="penabc", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("simulate", "simulate observed data, training pairs and the reference table"),
        ("train", "train a summary network"),
        ("abc", "run rejection ABC for every observed data set"),
        ("evaluate", "score ABC posteriors against reference posteriors"),
    ):
        _common(sub.add_parser(name, help=helptext))
    rp = sub.add_parser("reproduce", help="run a whole figure/table and write tidy CSVs")
    rp.add_argument("figure", choices=sorted(FIGURES))
    _common(rp)
    return parser


def resolve_config(args):
    figure = getattr(args, "figure", None) or args.preset
    if args.config:
        cfg = load_config(args.config)
    elif figure:
        cfg = preset(figure, args.scale)
    else:
        raise ConfigError("give --config or --preset")
    cfg = with_overrides(cfg, seed=args.seed, output_dir=args.output_dir, n_train=args.n_train)
    if args.method:
        cfg = replace(cfg, method=MethodSpec.parse(args.method))
    if args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return cfg


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(message)s",
    )
    try:
        cfg = resolve_config(args)
        if args.command == "simulate":
            result = cmd_simulate(cfg)
        elif args.command == "train":
            result = cmd_train(cfg)
        elif args.command == "abc":
            result = cmd_abc(cfg)
        elif args.command == "evaluate":
            result = cmd_evaluate(cfg)
        else:
            result = cmd_reproduce(args.figure, cfg, threads=args.threads)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            print(f"config error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (StageError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if isinstance(result, (list, tuple)):
        for r in result:
            print(r)
    else:
        print(result)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
