"""Experiment configuration: flat TOML files, built-in presets and validation."""

import hashlib
import sys
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path

from .models import ModelId, get_model

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class Method(str, Enum):
    HANDPICKED = "handpicked"
    MLP_SMALL = "mlp-small"
    MLP_LARGE = "mlp-large"
    MLP_PRE = "mlp-pre"
    PEN = "pen"


@dataclass(frozen=True)
class MethodSpec:
    """A summary method; ``d`` is the PEN order and ignored otherwise."""

    method: Method
    d: int = 0

    @classmethod
    def parse(cls, text):
        """Accept ``handpicked``, ``mlp-large``, ``mlp_pre``, ``pen-2``, ``PEN``..."""
        t = str(text).strip().lower().replace("_", "-")
        if t.startswith("pen"):
            rest = t[3:]
            rest = rest[1:] if rest.startswith("-") else rest
            try:
                d = int(rest) if rest else 0
            except ValueError:
                raise ConfigError(f"bad PEN order in method {text!r}") from None
            if d < 0:
                raise ConfigError("PEN order d must be non-negative")
            return cls(Method.PEN, d)
        try:
            return cls(Method(t))
        except ValueError:
            names = ", ".join(m.value for m in Method)
            raise ConfigError(f"unknown method {text!r}; expected one of {names} (pen-d)") from None

    @property
    def label(self):
        return f"pen-{self.d}" if self.method is Method.PEN else self.method.value

    @property
    def learned(self):
        return self.method is not Method.HANDPICKED


FIGURES = {
    "fig1": ModelId.GANDK,
    "table1": ModelId.ALPHA_STABLE,
    "fig3": ModelId.AR2,
    "fig4": ModelId.MA2,
}

FIGURE_METHODS = {
    "fig1": ("handpicked", "mlp-small", "mlp-large", "mlp-pre", "pen-0"),
    "table1": ("handpicked", "mlp-small", "mlp-large", "mlp-pre", "pen-0"),
    "fig3": ("handpicked", "mlp-small", "mlp-large", "pen-0", "pen-2"),
    "fig4": ("handpicked", "mlp-small", "mlp-large", "pen-0", "pen-10"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelId
    method: MethodSpec = field(default_factory=lambda: MethodSpec(Method.HANDPICKED))
    n_train: int = 10_000
    n_eval: int = 1_000
    n_tilde: int = 100_000
    percentile_x: float = 0.1
    repetitions: int = 10
    seed: int = 0
    output_dir: str = "out"
    epochs: int = 100
    batch_size: int = 200
    learning_rate: float = 1e-3
    # global gradient-norm clipping; 0 disables it
    clip_norm: float = 1.0
    # used by reproduce: the method list and training-size grid of a figure
    methods: tuple = ()
    n_train_grid: tuple = ()
    # "grid" or "mcmc" for the 2-D models; g-and-k always uses MCMC
    reference: str = "grid"
    grid_step: float = 0.005
    mcmc_thin: int = 10
    mcmc_burn: int = 3000
    posterior_draws: int = 100
    canonical_pooling: bool = False
    # PEN pooling: "mean" (sum divided by the window count) or "sum"
    pooling: str = "mean"

    def __post_init__(self):
        validate(self)

    @property
    def all_methods(self):
        return self.methods or (self.method,)

    @property
    def grid(self):
        return self.n_train_grid or (self.n_train,)

    def digest(self, *extra):
        """Stable content hash of the config plus optional extra keys."""
        text = to_toml(self) + "".join(f"\n#{e}" for e in extra)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def validate(cfg):
    if not isinstance(cfg.model, ModelId):
        raise ConfigError("model must be a ModelId")
    for name in ("n_train", "n_eval", "n_tilde", "repetitions", "epochs", "batch_size",
                 "posterior_draws", "mcmc_thin"):
        if int(getattr(cfg, name)) < 1:
            raise ConfigError(f"{name} must be positive")
    if cfg.mcmc_burn < 0:
        raise ConfigError("mcmc_burn must be non-negative")
    if not 0.0 < cfg.percentile_x < 100.0:
        raise ConfigError("percentile_x must lie in (0, 100)")
    if not cfg.learning_rate > 0:
        raise ConfigError("learning_rate must be positive")
    if not cfg.clip_norm >= 0:
        raise ConfigError("clip_norm must be non-negative (0 disables clipping)")
    if cfg.pooling not in ("sum", "mean"):
        raise ConfigError("pooling must be 'sum' or 'mean'")
    if cfg.reference not in ("grid", "mcmc"):
        raise ConfigError("reference must be 'grid' or 'mcmc'")
    if not 0.0 < cfg.grid_step < 0.5:
        raise ConfigError("grid_step must lie in (0, 0.5)")
    if any(int(n) < 1 for n in cfg.n_train_grid):
        raise ConfigError("n_train_grid entries must be positive")
    bm = get_model(cfg.model)
    for ms in cfg.all_methods:
        check_pairing(cfg.model, ms, bm.M)


def check_pairing(model, ms, M=None):
    model = ModelId.parse(model)
    if ms.method is Method.MLP_PRE and model not in (ModelId.GANDK, ModelId.ALPHA_STABLE):
        raise ConfigError(
            f"mlp-pre is only defined for g-and-k and alpha-stable (got {model.value}): "
            "an empirical distribution function of a time series is not a meaningful input"
        )
    if ms.method is Method.PEN:
        if model in (ModelId.GANDK, ModelId.ALPHA_STABLE) and ms.d != 0:
            raise ConfigError(
                f"{model.value} data are i.i.d., so only PEN-0 applies (got pen-{ms.d})"
            )
        if M is not None and ms.d >= M:
            raise ConfigError(f"PEN order d={ms.d} must be smaller than the series length {M}")


# --------------------------------------------------------------------------
# presets
# --------------------------------------------------------------------------

_DESK = {
    # model: (n_train_grid, n_eval, n_tilde, x, reps, epochs)
    ModelId.GANDK: ((1_000, 10_000), 1_000, 100_000, 0.1, 10, 20),
    ModelId.ALPHA_STABLE: ((1_000, 10_000), 1_000, 100_000, 0.1, 10, 30),
    ModelId.AR2: ((1_000, 10_000), 2_000, 100_000, 0.1, 20, 60),
    ModelId.MA2: ((1_000, 10_000), 2_000, 100_000, 0.1, 20, 60),
}

_PAPER = {
    ModelId.GANDK: ((1_000, 10_000, 100_000, 500_000), 5_000, 100_000, 0.1, 100, 100),
    ModelId.ALPHA_STABLE: ((1_000, 10_000, 100_000, 500_000), 5_000, 100_000, 0.1, 25, 100),
    ModelId.AR2: ((1_000, 10_000, 100_000, 1_000_000), 10_000, 500_000, 0.02, 100, 100),
    ModelId.MA2: ((1_000, 10_000, 100_000, 1_000_000), 500_000, 500_000, 0.02, 100, 100),
}


def preset(figure, scale="desk", seed=0, output_dir="out"):
    """Shipped settings for a figure id at ``desk`` or ``paper`` scale."""
    if figure not in FIGURES:
        raise ConfigError(f"unknown figure {figure!r}; expected one of {', '.join(FIGURES)}")
    if scale not in ("desk", "paper"):
        raise ConfigError("scale must be 'desk' or 'paper'")
    model = FIGURES[figure]
    grid, n_eval, n_tilde, x, reps, epochs = (_DESK if scale == "desk" else _PAPER)[model]
    methods = tuple(MethodSpec.parse(m) for m in FIGURE_METHODS[figure])
    return ExperimentConfig(
        model=model,
        method=methods[-1],
        n_train=grid[-1],
        n_eval=n_eval,
        n_tilde=n_tilde,
        percentile_x=x,
        repetitions=reps,
        seed=seed,
        output_dir=output_dir,
        epochs=epochs,
        methods=methods,
        n_train_grid=grid,
    )


# --------------------------------------------------------------------------
# TOML round trip
# --------------------------------------------------------------------------


def _value_text(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, ModelId):
        return f'"{v.value}"'
    if isinstance(v, MethodSpec):
        return f'"{v.label}"'
    if isinstance(v, (tuple, list)):
        return "[" + ", ".join(_value_text(x) for x in v) + "]"
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_toml(cfg):
    lines = []
    for f in fields(cfg):
        lines.append(f"{f.name} = {_value_text(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}


def from_mapping(doc, base=None):
    """Build a config from a flat mapping, optionally on top of ``base``."""
    unknown = set(doc) - _FIELD_NAMES - {"d", "figure"}
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values = {} if base is None else asdict_shallow(base)
    if "figure" in doc:
        values = asdict_shallow(preset(doc["figure"], doc.get("scale", "desk")))
    for k, v in doc.items():
        if k in ("d", "figure"):
            continue
        values[k] = v
    if "model" not in values:
        raise ConfigError("config must name a model")
    try:
        values["model"] = ModelId.parse(values["model"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    method = values.get("method", "handpicked")
    if not isinstance(method, MethodSpec):
        method = MethodSpec.parse(method)
    if "d" in doc:
        if method.method is not Method.PEN:
            raise ConfigError("d is only meaningful for method = pen")
        method = MethodSpec(Method.PEN, int(doc["d"]))
    values["method"] = method
    values["methods"] = tuple(
        m if isinstance(m, MethodSpec) else MethodSpec.parse(m) for m in values.get("methods", ())
    )
    values["n_train_grid"] = tuple(int(n) for n in values.get("n_train_grid", ()))
    for k in ("n_train", "n_eval", "n_tilde", "repetitions", "seed", "epochs", "batch_size",
              "posterior_draws", "mcmc_thin", "mcmc_burn"):
        if k in values:
            values[k] = _as_int(k, values[k])
    return ExperimentConfig(**values)


def _as_int(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or int(v) != v:
        raise ConfigError(f"{name} must be an integer, got {v!r}")
    return int(v)


def asdict_shallow(cfg):
    return {f.name: getattr(cfg, f.name) for f in fields(cfg)}


def load_config(path):
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    try:
        return from_mapping(doc)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def with_overrides(cfg, **kw):
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw) if kw else cfg


__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "FIGURES",
    "FIGURE_METHODS",
    "Method",
    "MethodSpec",
    "check_pairing",
    "from_mapping",
    "load_config",
    "preset",
    "to_toml",
    "with_overrides",
]
