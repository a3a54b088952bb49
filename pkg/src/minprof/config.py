"""Pipeline configuration: YAML loading, validation, seed derivation."""

from __future__ import annotations

import copy
import hashlib
import json
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from .bma import G_KINDS, MODEL_PRIOR_KINDS, GPriorSpec, ModelPriorSpec
from .exceptions import ConfigError
from .lgcm import GrowthPriors, LoadingSpec, McmcConfig
from .panel import DOMAINS, GROUPS, IndicatorMeta, load_indicator_meta

MODEL_LABELS = ("M0", "M1", "M2")

EXAMPLE_CONFIG = """\
# minprof pipeline configuration.  Relative paths resolve against this file.
seed: 20240917                  # master seed; every stage seed derives from it
paths:
  outcomes: outcomes.csv        # country,year,group,domain,pct_min_prof
  indicators: indicators.csv    # country,indicator,year,value (long format)
  metadata: indicator_meta.yaml # per-indicator end_year/substitute_year/start_year
  out: out
cycles: [2009, 2012, 2015, 2018, 2022]
future_years: [2029, 2033]
future_loadings: {2029: 5, 2033: 6}
countries: null                 # optional explicit list; order is preserved
groups: [boys, girls]
domains: [reading, mathematics]
panel:
  substitute: true              # use substitute_year when end_year is missing
  collinearity_threshold: 0.95
impute:
  k_neighbors: 5
  max_missing_fraction: 0.5
  seed: null                    # null derives from the master seed
lgcm:
  model: M1                     # model used for projection
  compare: [M0, M1, M2]         # models fitted and scored by LOO-IC
  m2_free: [3, 4]               # zero-based cycles freed under M2
  priors: {gamma_cov: 100.0, resid_scale: 2.5, eta_df: null, loading_sd: 10.0}
  mcmc: {n_chains: 4, n_iter: 10000, burn_in: 5000, thin: 1}
  seed: null
  export_draws: false           # flat chain,iter,parameter,value CSV (large)
bma:
  g_prior: UIP                  # UIP, RIC, BRIC, HQ, hyper_g or fixed
  alpha: 3.0                    # hyper_g only
  g: null                       # fixed only
  model_prior: uniform          # uniform, binomial or beta_binomial
  theta: 0.5
  a: 1.0
  b: 1.0
  method: auto                  # auto, enumeration or bd_mcmc
  n_iter: 200000
  burn_in: 20000
  seed: null
score:
  loo: true
  kld: true
  loo_max_draws: null           # thin the LOO log-likelihood matrix to this many draws
plots: true                     # SVG trajectories and predictive densities
sensitivity:
  g_priors: [UIP, RIC, BRIC, HQ, hyper_g]
  model_priors: [uniform, binomial, beta_binomial]
"""


def derive_seed(master: int, stage: str) -> int:
    """Stage seed from the master seed and a stage name (stable across runs)."""
    ss = np.random.SeedSequence([int(master), zlib.crc32(stage.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _section(cls, doc, name):
    if doc is None:
        return cls()
    if not isinstance(doc, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {name!r}: {unknown}")
    try:
        return cls(**doc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section {name!r}: {exc}") from exc


@dataclass
class Paths:
    outcomes: str | None = None
    indicators: str | None = None
    metadata: str | None = None
    out: str = "out"


@dataclass
class PanelSettings:
    substitute: bool = True
    collinearity_threshold: float = 0.95

    def __post_init__(self):
        if not 0.0 < float(self.collinearity_threshold) <= 1.0:
            raise ValueError("collinearity_threshold must be in (0, 1]")


@dataclass
class ImputeSettings:
    k_neighbors: int = 5
    max_missing_fraction: float = 0.5
    seed: int | None = None

    def __post_init__(self):
        if int(self.k_neighbors) < 1:
            raise ValueError("k_neighbors must be positive")
        if not 0.0 <= float(self.max_missing_fraction) <= 1.0:
            raise ValueError("max_missing_fraction must be in [0, 1]")


@dataclass
class LgcmSettings:
    model: str = "M1"
    compare: list[str] = field(default_factory=lambda: list(MODEL_LABELS))
    m2_free: list[int] = field(default_factory=lambda: [3, 4])
    priors: dict = field(default_factory=dict)
    mcmc: dict = field(default_factory=dict)
    seed: int | None = None
    export_draws: bool = False

    def __post_init__(self):
        self.model = str(self.model).upper()
        self.compare = [str(m).upper() for m in self.compare]
        for m in [self.model] + self.compare:
            if m not in MODEL_LABELS:
                raise ValueError(f"model must be one of {MODEL_LABELS}, got {m!r}")
        if self.model not in self.compare:
            self.compare.append(self.model)
        self.compare = [m for m in MODEL_LABELS if m in self.compare]
        allowed = {f.name for f in fields(GrowthPriors)}
        bad = sorted(set(self.priors) - allowed)
        if bad:
            raise ValueError(f"unknown prior key(s) {bad}")
        allowed = {f.name for f in fields(McmcConfig)} - {"seed"}
        bad = sorted(set(self.mcmc) - allowed)
        if bad:
            raise ValueError(f"unknown mcmc key(s) {bad}")

    def loading_spec(self, label: str, n_cycles: int) -> LoadingSpec:
        free = self.m2_free if label == "M2" else None
        return LoadingSpec.from_label(label, n_cycles, free)

    def growth_priors(self) -> GrowthPriors:
        return GrowthPriors(**self.priors)

    def mcmc_config(self, seed: int) -> McmcConfig:
        return McmcConfig(seed=seed, **self.mcmc)


@dataclass
class BmaSettings:
    g_prior: str = "UIP"
    alpha: float = 3.0
    g: float | None = None
    model_prior: str = "uniform"
    theta: float = 0.5
    a: float = 1.0
    b: float = 1.0
    method: str = "auto"
    n_iter: int = 200_000
    burn_in: int = 20_000
    seed: int | None = None

    def __post_init__(self):
        if self.g_prior not in G_KINDS:
            raise ValueError(f"g_prior must be one of {G_KINDS}")
        if self.model_prior not in MODEL_PRIOR_KINDS:
            raise ValueError(f"model_prior must be one of {MODEL_PRIOR_KINDS}")
        if self.method not in ("auto", "enumeration", "bd_mcmc"):
            raise ValueError("method must be auto, enumeration or bd_mcmc")
        if not int(self.n_iter) > int(self.burn_in) >= 0:
            raise ValueError("need n_iter > burn_in >= 0")
        self.gspec()
        self.mspec()

    def gspec(self, kind: str | None = None) -> GPriorSpec:
        g = None if self.g is None else float(self.g)
        return GPriorSpec(kind or self.g_prior, float(self.alpha), g)

    def mspec(self, kind: str | None = None) -> ModelPriorSpec:
        return ModelPriorSpec(kind or self.model_prior, float(self.theta), float(self.a), float(self.b))


@dataclass
class ScoreSettings:
    loo: bool = True
    kld: bool = True
    loo_max_draws: int | None = None


@dataclass
class SensitivitySettings:
    g_priors: list[str] = field(default_factory=lambda: [k for k in G_KINDS if k != "fixed"])
    model_priors: list[str] = field(default_factory=lambda: list(MODEL_PRIOR_KINDS))

    def __post_init__(self):
        for g in self.g_priors:
            if g not in G_KINDS:
                raise ValueError(f"unknown g prior {g!r}")
        for m in self.model_priors:
            if m not in MODEL_PRIOR_KINDS:
                raise ValueError(f"unknown model prior {m!r}")


@dataclass
class PipelineConfig:
    seed: int
    paths: Paths = field(default_factory=Paths)
    cycles: list[int] = field(default_factory=lambda: [2009, 2012, 2015, 2018, 2022])
    future_years: list[int] = field(default_factory=lambda: [2029, 2033])
    future_loadings: dict[int, float] = field(default_factory=lambda: {2029: 5.0, 2033: 6.0})
    countries: list[str] | None = None
    groups: list[str] = field(default_factory=lambda: list(GROUPS))
    domains: list[str] = field(default_factory=lambda: list(DOMAINS))
    panel: PanelSettings = field(default_factory=PanelSettings)
    impute: ImputeSettings = field(default_factory=ImputeSettings)
    lgcm: LgcmSettings = field(default_factory=LgcmSettings)
    bma: BmaSettings = field(default_factory=BmaSettings)
    score: ScoreSettings = field(default_factory=ScoreSettings)
    sensitivity: SensitivitySettings = field(default_factory=SensitivitySettings)
    plots: bool = True
    base_dir: Path = field(default=Path("."), repr=False, compare=False)
    indicator_meta: dict[str, IndicatorMeta] | None = field(default=None, repr=False, compare=False)

    _SECTIONS = {"paths": Paths, "panel": PanelSettings, "impute": ImputeSettings,
                 "lgcm": LgcmSettings, "bma": BmaSettings, "score": ScoreSettings,
                 "sensitivity": SensitivitySettings}

    @classmethod
    def from_dict(cls, doc: dict, base_dir=".") -> "PipelineConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a mapping")
        doc = copy.deepcopy(doc)
        if doc.get("seed") is None:
            raise ConfigError("a master 'seed' is required")
        known = {f.name for f in fields(cls)} - {"base_dir", "indicator_meta"}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown top-level key(s): {unknown}")
        kw = {name: _section(kind, doc.pop(name, None), name) for name, kind in cls._SECTIONS.items()}
        try:
            cfg = cls(base_dir=Path(base_dir), **kw, **doc)
            cfg.seed = int(cfg.seed)
            cfg.cycles = [int(y) for y in cfg.cycles]
            cfg.future_years = [int(y) for y in cfg.future_years]
            cfg.future_loadings = {int(k): float(v) for k, v in cfg.future_loadings.items()}
        except (TypeError, ValueError, AttributeError) as exc:
            raise ConfigError(f"bad config value: {exc}") from exc
        cfg.validate()
        return cfg

    @classmethod
    def from_yaml(cls, path) -> "PipelineConfig":
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                doc = yaml.safe_load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
        return cls.from_dict(doc or {}, base_dir=path.parent)

    def validate(self) -> None:
        if len(self.cycles) < 3 or any(b <= a for a, b in zip(self.cycles, self.cycles[1:])):
            raise ConfigError("cycles must be at least three strictly increasing years")
        for y in self.future_years:
            if y <= self.cycles[-1]:
                raise ConfigError(f"future year {y} is not after the last cycle {self.cycles[-1]}")
            if y not in self.future_loadings:
                raise ConfigError(f"future year {y} has no entry in future_loadings")
        if not self.groups or not self.domains:
            raise ConfigError("select at least one group and one domain")
        for g in self.groups:
            if g not in GROUPS:
                raise ConfigError(f"unknown group {g!r}")
        for d in self.domains:
            if d not in DOMAINS:
                raise ConfigError(f"unknown domain {d!r}")
        if "fixed" in self.sensitivity.g_priors and self.bma.g is None:
            raise ConfigError("sensitivity lists the fixed g-prior but bma.g is not set")
        try:
            for label in self.lgcm.compare:
                self.lgcm.loading_spec(label, len(self.cycles))
            self.lgcm.growth_priors()
            self.lgcm.mcmc_config(0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"lgcm: {exc}") from exc

    def resolve(self, key: str | None) -> Path | None:
        value = getattr(self.paths, key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def load_metadata(self) -> None:
        path = self.resolve("metadata")
        if path is not None:
            self.indicator_meta = load_indicator_meta(path)

    def stage_seed(self, stage: str) -> int:
        explicit = {"impute": self.impute.seed, "lgcm": self.lgcm.seed, "bma": self.bma.seed}
        value = explicit.get(stage)
        return int(value) if value is not None else derive_seed(self.seed, stage)

    def to_dict(self) -> dict:
        doc = {}
        for f in fields(self):
            if f.name in ("base_dir", "indicator_meta"):
                continue
            v = getattr(self, f.name)
            doc[f.name] = asdict(v) if hasattr(v, "__dataclass_fields__") else v
        return doc

    def digest(self) -> str:
        """SHA-256 of the canonical JSON settings, output location excluded."""
        doc = self.to_dict()
        doc["paths"] = {k: v for k, v in doc["paths"].items() if k != "out"}
        text = json.dumps(doc, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()


def apply_overrides(cfg: PipelineConfig, *, seed=None, out=None, group=None, domain=None,
                    model=None) -> PipelineConfig:
    """Command-line flags take precedence over config keys."""
    if seed is not None:
        cfg.seed = int(seed)
    if out is not None:
        cfg.paths.out = str(Path(out).resolve())
    if group is not None:
        cfg.groups = [group]
    if domain is not None:
        cfg.domains = [domain]
    if model is not None:
        cfg.lgcm.model = model.upper()
        cfg.lgcm.__post_init__()
    cfg.validate()
    return cfg

