"""Seeded end-to-end pipeline: simulate, train summaries, run ABC, evaluate.

Every random quantity comes from a stream derived from the top-level seed and
a fixed tuple of keys, so stages can run in any order, in parallel over
repetitions, or be resumed, and still produce identical numbers.
"""

import csv
import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import abc, io, nn, pen, reference
from .config import ExperimentConfig, FIGURES, Method, MethodSpec, check_pairing, preset
from .models import ModelId, ecdf_features, get_model, robust_scale

log = logging.getLogger(__name__)

# stream tags; never reorder, they define the random numbers
TAG_TRAIN = 1
TAG_EVAL = 2
TAG_TABLE = 3
TAG_OBSERVED = 4
TAG_NET = 5
TAG_REFERENCE = 6
TAG_SUBSAMPLE = 7

_PREFIX = {
    ModelId.GANDK: "gk",
    ModelId.ALPHA_STABLE: "alpha",
    ModelId.AR2: "ar2",
    ModelId.MA2: "ma2",
}


def derive_seed(seed, *keys):
    """A 32-bit seed derived from ``(seed, *keys)``."""
    return int(np.random.SeedSequence([int(seed), *(int(k) for k in keys)]).generate_state(1)[0])


def method_key(ms):
    return zlib.crc32(ms.label.encode("ascii"))


# --------------------------------------------------------------------------
# networks and input features
# --------------------------------------------------------------------------


def network_spec(model, ms, pooling="sum"):
    """Architecture used for a (model, learned method) pair.

    ``pooling`` applies to PEN architectures only.
    """
    model = ModelId.parse(model)
    check_pairing(model, ms)
    if ms.method is Method.HANDPICKED:
        raise ValueError("handpicked summaries have no network")
    name = f"{_PREFIX[model]}-{ms.method.value if ms.method is not Method.PEN else f'pen{ms.d}'}"
    if name in pen.PRESETS:
        spec = pen.PRESETS[name]
    else:
        # PEN orders without a published architecture reuse the time-series layout
        spec = pen.pen_spec_for(ms.d, p=get_model(model).n_params)
    if isinstance(spec, pen.PenSpec) and spec.pooling != pooling:
        spec = replace(spec, pooling=pooling)
    return spec


def make_network(spec):
    return pen.PenNetwork(spec) if isinstance(spec, pen.PenSpec) else nn.MlpNetwork(spec)


def featurize(model, ms, ys):
    """Network inputs for a batch of (preprocessed) series."""
    model = ModelId.parse(model)
    bm = get_model(model)
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if ms.method is Method.MLP_PRE:
        return ecdf_features(ys, bm.preprocess.grid)
    if model is ModelId.ALPHA_STABLE:
        scaled, q1, q3 = robust_scale(ys)
        if ms.method is Method.PEN:
            return scaled, np.column_stack([q1, q3])
        return np.column_stack([scaled, q1, q3])
    if ms.method is Method.PEN:
        return ys, None
    return ys


@dataclass
class Summarizer:
    """Maps a batch of series to summary vectors, with the metric to compare them."""

    model: ModelId
    ms: MethodSpec
    spec: object = None
    weights: object = None
    canonical: bool = False

    @property
    def diag_weights(self):
        if self.ms.method is Method.HANDPICKED:
            return get_model(self.model).handpicked_weights
        return None

    def __call__(self, ys):
        ys = np.atleast_2d(ys)
        if self.ms.method is Method.HANDPICKED:
            return np.atleast_2d(get_model(self.model).handpicked(ys))
        x = featurize(self.model, self.ms, ys)
        if isinstance(self.spec, pen.PenSpec):
            y, ex = x
            return pen.pen_predict(self.spec, self.weights, y, ex, canonical=self.canonical)
        return nn.predict(self.spec, self.weights, x, chunk=4096)


# --------------------------------------------------------------------------
# data
# --------------------------------------------------------------------------


def training_pairs(cfg, n):
    """The first ``n`` training pairs; smaller training sets are prefixes of larger ones."""
    return abc.simulate_pairs(cfg.model, n, cfg.seed, tag=TAG_TRAIN)


def eval_pairs(cfg):
    return abc.simulate_pairs(cfg.model, cfg.n_eval, cfg.seed, tag=TAG_EVAL)


def reference_table(cfg):
    return abc.build_reference_table(cfg.model, cfg.n_tilde, cfg.seed, tag=TAG_TABLE)


def observed_series(cfg, rep):
    """Observed data set of repetition ``rep`` simulated at the ground truth."""
    bm = get_model(cfg.model)
    rng = abc.stream(cfg.seed, TAG_OBSERVED, rep)
    return bm.simulate(np.asarray(bm.truth), rng)


# --------------------------------------------------------------------------
# training
# --------------------------------------------------------------------------


def train_summary(cfg, ms, n_train, train=None, evalset=None):
    """Train the summary network of ``ms`` on ``n_train`` pairs; returns (spec, TrainResult)."""
    spec = network_spec(cfg.model, ms, cfg.pooling)
    if train is None:
        train = training_pairs(cfg, n_train)
    if evalset is None:
        evalset = eval_pairs(cfg)
    th_tr, y_tr = train[0][:n_train], train[1][:n_train]
    th_ev, y_ev = evalset
    tc = nn.TrainConfig(
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        clip_norm=cfg.clip_norm or None,
        seed=derive_seed(cfg.seed, TAG_NET, method_key(ms), n_train),
    )
    network = make_network(spec)
    result = nn.train(
        network,
        featurize(cfg.model, ms, y_tr),
        th_tr,
        featurize(cfg.model, ms, y_ev),
        th_ev,
        tc,
    )
    log.info(
        "%s %s n=%d: best epoch %d, eval mse %.4g",
        cfg.model.value, ms.label, n_train, result.best_epoch, result.best_eval,
    )
    return spec, result


def weights_digest(cfg, ms, n_train):
    fields_ = (cfg.model.value, ms.label, n_train, cfg.seed, cfg.n_eval, cfg.epochs,
               cfg.batch_size, repr(cfg.learning_rate), repr(cfg.clip_norm), cfg.pooling)
    return zlib.crc32(repr(fields_).encode()) & 0xFFFFFFFF


def trained_summarizer(cfg, ms, n_train, cache_dir=None, train=None, evalset=None):
    """Summarizer for a learned method, reusing cached weights when available."""
    spec = network_spec(cfg.model, ms, cfg.pooling)
    path = None
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        tag = f"{weights_digest(cfg, ms, n_train):08x}"
        path = cache_dir / f"weights-{ms.label}-n{n_train}-{tag}.bin"
        if path.exists():
            _, w = io.load_weights(path, expect=spec)
            return Summarizer(cfg.model, ms, spec, w, cfg.canonical_pooling), None
    spec, result = train_summary(cfg, ms, n_train, train, evalset)
    if path is not None:
        tmp = path.with_suffix(".tmp")
        io.save_weights(tmp, spec, result.weights)
        tmp.replace(path)
    return Summarizer(cfg.model, ms, spec, result.weights, cfg.canonical_pooling), result


def write_training_log(path, result):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_mse,eval_mse,best\n")
        for epoch, tr, ev in result.history:
            fh.write(f"{epoch},{tr!r},{ev!r},{int(epoch == result.best_epoch)}\n")


# --------------------------------------------------------------------------
# reference posteriors and metrics
# --------------------------------------------------------------------------


def reference_sample(cfg, y, rep):
    """Reference posterior draws for the observed data of repetition ``rep``."""
    rng = abc.stream(cfg.seed, TAG_REFERENCE, rep)
    n = cfg.posterior_draws
    if cfg.model is ModelId.GANDK:
        chain = reference.gandk_reference_posterior(
            y, n, rng, burn=cfg.mcmc_burn, thin=cfg.mcmc_thin
        )
        return chain.sample()
    if cfg.model is ModelId.ALPHA_STABLE:
        raise ValueError("the alpha-stable model has no reference posterior")
    if cfg.reference == "mcmc":
        bm = get_model(cfg.model)
        loglik = reference.ar2_loglik if cfg.model is ModelId.AR2 else reference.ma2_loglik
        chain = reference.rw_metropolis(
            lambda t: loglik(t, y), np.zeros(2), n * cfg.mcmc_thin, 0.1, rng,
            burn=cfg.mcmc_burn, thin=cfg.mcmc_thin, adapt=True,
        )
        return chain.sample()
    return reference.reference_posterior(cfg.model, y, n, rng, step=cfg.grid_step)


def cached_reference(cfg, y, rep, cache_dir=None):
    if cache_dir is None:
        return reference_sample(cfg, y, rep)
    key = (cfg.model.value, cfg.seed, rep, cfg.posterior_draws, cfg.reference,
           repr(cfg.grid_step), cfg.mcmc_thin, cfg.mcmc_burn)
    tag = f"{zlib.crc32(repr(key).encode()) & 0xFFFFFFFF:08x}"
    path = Path(cache_dir) / f"reference-rep{rep}-{tag}.csv"
    if path.exists():
        return abc.read_posterior_csv(path, source="reference")
    s = reference_sample(cfg, y, rep)
    Path(cache_dir).mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    abc.write_posterior_csv(tmp, s)
    tmp.replace(path)
    return s


@dataclass(frozen=True)
class RepResult:
    method: str
    n_train: int
    rep: int
    metric: str
    value: float
    estimate: tuple


def evaluate_rep(cfg, ms, n_train, rep, posterior, ref=None):
    """Wasserstein distance to the reference posterior, or squared error of the mean."""
    est = tuple(float(v) for v in posterior.mean())
    if cfg.model is ModelId.ALPHA_STABLE:
        truth = np.asarray(get_model(cfg.model).truth)
        value = float(((np.asarray(est) - truth) ** 2).sum())
        return RepResult(ms.label, n_train, rep, "squared_error", value, est)
    rng = abc.stream(cfg.seed, TAG_SUBSAMPLE, rep, method_key(ms), n_train)
    value = reference.wasserstein(posterior, ref, rng)
    return RepResult(ms.label, n_train, rep, "wasserstein", value, est)


# --------------------------------------------------------------------------
# figure reproduction
# --------------------------------------------------------------------------


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def run_experiment(cfg, threads=1, cache_dir=None):
    """All methods x training sizes x repetitions of ``cfg``; returns RepResults.

    Handpicked summaries do not depend on the training size and are reported
    with ``n_train = 0``.  Networks are trained once per (method, n_train) and
    the repetitions differ in their observed data sets.
    """
    bm = get_model(cfg.model)
    reps = list(range(cfg.repetitions))
    observed = [observed_series(cfg, r) for r in reps]
    refs = None
    if cfg.model is not ModelId.ALPHA_STABLE:
        refs = _map(lambda r: cached_reference(cfg, observed[r], r, cache_dir), reps, threads)
        log.info("reference posteriors ready (%d repetitions)", len(reps))
    table = reference_table(cfg)
    learned = [ms for ms in cfg.all_methods if ms.learned]
    grid = sorted(set(int(n) for n in cfg.grid))
    train = training_pairs(cfg, max(grid)) if learned else None
    evalset = eval_pairs(cfg) if learned else None
    cells = []
    for ms in cfg.all_methods:
        for n in (grid if ms.learned else [0]):
            cells.append((ms, n))
    results = []
    for ms, n in cells:
        if ms.learned:
            summ, _ = trained_summarizer(cfg, ms, n, cache_dir, train, evalset)
        else:
            summ = Summarizer(cfg.model, ms)
        tab = abc.summarize_table(table, summ)
        s_obs = summ(np.stack(observed))

        def one(r, ms=ms, n=n, tab=tab, s_obs=s_obs, summ=summ):
            post = abc.rejection_sample(tab, s_obs[r], cfg.percentile_x, summ.diag_weights)
            return evaluate_rep(cfg, ms, n, r, post, None if refs is None else refs[r])

        results.extend(_map(one, reps, threads))
        log.info("%s %s n=%d done", bm.id.value, ms.label, n)
    return results


def summarize_results(model, results):
    """Per-cell aggregate: mean Wasserstein, or RMSE for the alpha-stable model."""
    cells = {}
    for r in results:
        cells.setdefault((r.method, r.n_train), []).append(r.value)
    rows = []
    for (method, n), vals in cells.items():
        if ModelId.parse(model) is ModelId.ALPHA_STABLE:
            rows.append((method, n, "rmse", math.sqrt(math.fsum(vals) / len(vals)), len(vals)))
        else:
            rows.append((method, n, "mean_wasserstein", math.fsum(vals) / len(vals), len(vals)))
    return rows


def write_results(path, model, results):
    results = sorted(results, key=lambda r: (r.method, r.n_train, r.rep))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        p = len(results[0].estimate) if results else 0
        w.writerow(["model", "method", "n_train", "rep", "metric", "value",
                    *[f"estimate_{j + 1}" for j in range(p)]])
        for r in results:
            w.writerow([ModelId.parse(model).value, r.method, r.n_train, r.rep, r.metric,
                        repr(r.value), *[repr(v) for v in r.estimate]])


def write_summary(path, model, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "method", "n_train", "metric", "value", "repetitions"])
        for method, n, metric, value, count in sorted(rows):
            w.writerow([ModelId.parse(model).value, method, n, metric, repr(value), count])


def reproduce(figure, cfg=None, scale="desk", seed=0, output_dir="out", threads=1):
    """Run one figure/table preset and write ``<figure>.csv`` and ``<figure>_summary.csv``."""
    if cfg is None:
        cfg = preset(figure, scale, seed=seed, output_dir=output_dir)
    if figure in FIGURES and cfg.model is not FIGURES[figure]:
        raise ValueError(f"{figure} is a {FIGURES[figure].value} experiment, config says {cfg.model.value}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_rep = out / f"{figure}.csv"
    summary = out / f"{figure}_summary.csv"
    stamp = out / f"{figure}.stamp"
    digest = cfg.digest(figure)
    if per_rep.exists() and summary.exists() and stamp.exists():
        if stamp.read_text(encoding="utf-8").strip() == digest:
            log.info("%s is up to date", figure)
            return per_rep, summary
    results = run_experiment(cfg, threads=threads, cache_dir=out / "cache")
    write_results(per_rep, cfg.model, results)
    write_summary(summary, cfg.model, summarize_results(cfg.model, results))
    stamp.write_text(digest + "\n", encoding="utf-8")
    return per_rep, summary
