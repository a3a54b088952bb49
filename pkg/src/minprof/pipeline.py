"""Pipeline stages behind the command-line interface.

Every stage reads its inputs from the output directory (or takes them from
the previous stage when run in sequence) and writes into a staging area
that is moved into place only when the whole command succeeds.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import platform
import shutil
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .bma import BmaResult, bd_mcmc_bma, enumerate_bma, predictive_density
from .config import PipelineConfig, derive_seed
from .exceptions import ConfigError, DataError
from .impute import exclude_sparse_rows, pmm_impute
from .lgcm import GrowthPosterior, fit_growth, pointwise_log_lik, posterior_slopes
from .panel import (DesignMatrix, OutcomeSeries, drop_collinear, load_panel,
                    make_difference_variables, read_design_csv, read_outcomes, select_series,
                    slug, standardize, write_design_csv, write_outcomes_csv)
from .project import (change_table, plot_density, plot_trajectory, project_country,
                      project_overall, write_projection_csv)
from .score import kld_gaussian, log_predictive_score, psis_loo

logger = logging.getLogger(__name__)

ENUMERATION_MAX_Q = 12
LOCK_NAME = ".minprof.lock"
STAGING_NAME = ".staging"


# ---------------------------------------------------------------------------
# output directory handling
# ---------------------------------------------------------------------------

class Workspace:
    """Output directory with a lockfile and an all-or-nothing staging area."""

    def __init__(self, root):
        self.root = Path(root)
        self.staging = self.root / STAGING_NAME
        self.written: list[str] = []
        self._lock = self.root / LOCK_NAME
        self._locked = False

    def __enter__(self):
        try:
            self.root.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError(f"output directory {self.root} is not writable: {exc}") from exc
        try:
            fd = os.open(self._lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ConfigError(f"{self._lock} exists: another run is using this directory "
                              "(remove the lockfile if that run died)") from None
        except OSError as exc:
            raise ConfigError(f"output directory {self.root} is not writable: {exc}") from exc
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")
        self._locked = True
        shutil.rmtree(self.staging, ignore_errors=True)
        self.staging.mkdir()
        return self

    def __exit__(self, exc_type, exc, tb):
        try:
            if exc_type is None:
                self.commit()
        finally:
            shutil.rmtree(self.staging, ignore_errors=True)
            if self._locked:
                self._lock.unlink(missing_ok=True)
        return False

    def path(self, rel: str) -> Path:
        p = self.staging / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        if rel not in self.written:
            self.written.append(rel)
        return p

    def find(self, rel: str, needed_by: str = "") -> Path:
        for base in (self.staging, self.root):
            p = base / rel
            if p.exists():
                return p
        hint = f" (run `{needed_by}` first)" if needed_by else ""
        raise DataError(f"{self.root / rel} not found{hint}")

    def commit(self) -> None:
        for rel in self.written:
            src = self.staging / rel
            if not src.exists():
                continue
            dst = self.root / rel
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)


def _write_json(path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _csv(frame: pd.DataFrame, path, index=False) -> None:
    frame.to_csv(path, index=index, float_format="%.10g", lineterminator="\n")


# ---------------------------------------------------------------------------
# run context
# ---------------------------------------------------------------------------

@dataclass
class Context:
    cfg: PipelineConfig
    ws: Workspace
    seeds: dict[str, int] = field(default_factory=dict)
    series: list[OutcomeSeries] | None = None
    design_raw: DesignMatrix | None = None
    design: DesignMatrix | None = None
    growth: dict[tuple[str, str, str], GrowthPosterior] = field(default_factory=dict)
    bma: dict[tuple[str, str], BmaResult] = field(default_factory=dict)

    def seed(self, stage: str, *parts: str) -> int:
        base = self.cfg.stage_seed(stage)
        if not parts:
            self.seeds[stage] = base
            return base
        s = derive_seed(base, "/".join(parts))
        self.seeds["/".join((stage,) + parts)] = s
        return s

    @property
    def combos(self):
        return [(g, d) for g in self.cfg.groups for d in self.cfg.domains]


def _input_path(cfg: PipelineConfig, key: str) -> Path:
    p = cfg.resolve(key)
    if p is None:
        raise ConfigError(f"paths.{key} is not set")
    if not p.exists():
        raise DataError(f"{key} file {p} does not exist")
    return p


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_ingest(ctx: Context) -> None:
    cfg = ctx.cfg
    outcomes = _input_path(cfg, "outcomes")
    indicators = _input_path(cfg, "indicators")
    if cfg.paths.metadata is not None:
        _input_path(cfg, "metadata")
        cfg.load_metadata()
    series, table = load_panel(outcomes, indicators, cfg)
    if not series:
        raise DataError("no country has a complete outcome panel")
    design_raw = make_difference_variables(table, substitute=cfg.panel.substitute,
                                           allow_missing=True)
    ctx.series, ctx.design_raw = series, design_raw

    write_outcomes_csv(series, ctx.ws.path("outcomes_clean.csv"))
    write_design_csv(design_raw, ctx.ws.path("design_raw.csv"))
    countries = list(dict.fromkeys(s.country for s in series))
    report = {
        "outcome_file": outcomes.name,
        "indicator_file": indicators.name,
        "cycles": cfg.cycles,
        "groups": cfg.groups,
        "domains": cfg.domains,
        "n_countries": len(countries),
        "countries": countries,
        "n_series": len(series),
        "excluded": table.excluded,
        "indicators": table.names,
        "indicator_drops": [{"indicator": n, "reason": r} for n, r in design_raw.dropped],
        "n_missing_differences": design_raw.n_missing,
    }
    _write_json(ctx.ws.path("validation_report.json"), report)
    logger.info("ingest: %d countries, %d series, %d indicators (%d missing differences)",
                len(countries), len(series), len(table.names), design_raw.n_missing)


def stage_impute(ctx: Context) -> None:
    cfg = ctx.cfg
    raw = ctx.design_raw
    if raw is None:
        raw = read_design_csv(ctx.ws.find("design_raw.csv", "ingest"))
    kept, excluded = exclude_sparse_rows(raw, cfg.impute.max_missing_fraction)
    filled, report = pmm_impute(kept, int(cfg.impute.k_neighbors), ctx.seed("impute"))
    report.excluded = excluded
    if report.n_missing_after:
        raise DataError(f"{report.n_missing_after} cells still missing after imputation")
    reduced = drop_collinear(filled, cfg.panel.collinearity_threshold)
    design = standardize(reduced)
    ctx.design = design

    write_design_csv(filled, ctx.ws.path("design_imputed.csv"))
    write_design_csv(design, ctx.ws.path("design.csv"))
    report.to_json(ctx.ws.path("imputation_report.json"))
    _write_json(ctx.ws.path("design_report.json"), {
        "retained": design.columns,
        "dropped": [{"indicator": n, "reason": r} for n, r in reduced.dropped],
        "threshold": cfg.panel.collinearity_threshold,
        "center": design.center,
        "scale": design.scale,
        "countries": design.countries,
    })
    logger.info("impute: filled %d cells; %d predictors retained", report.n_missing_before,
                len(design.columns))


def _series(ctx: Context) -> list[OutcomeSeries]:
    if ctx.series is None:
        path = ctx.ws.find("outcomes_clean.csv", "ingest")
        ctx.series, _ = read_outcomes(path, ctx.cfg.cycles, ctx.cfg.groups, ctx.cfg.domains)
    return ctx.series


def _design(ctx: Context, required: bool = True) -> DesignMatrix | None:
    if ctx.design is None:
        try:
            ctx.design = read_design_csv(ctx.ws.find("design.csv", "impute"))
        except DataError:
            if required:
                raise
    return ctx.design


def _growth_name(g, d, m) -> str:
    return f"growth/{g}_{d}_{m}"


def _growth(ctx: Context, g: str, d: str, m: str) -> GrowthPosterior:
    key = (g, d, m)
    if key not in ctx.growth:
        ctx.growth[key] = GrowthPosterior.load(ctx.ws.find(_growth_name(g, d, m) + ".npz",
                                                           "fit-growth"))
    return ctx.growth[key]


def stage_fit_growth(ctx: Context) -> None:
    cfg = ctx.cfg
    series = _series(ctx)
    design = _design(ctx, required=False)
    priors = cfg.lgcm.growth_priors()
    for g, d in ctx.combos:
        sel = select_series(series, g, d)
        if design is not None:
            keep = set(design.countries)
            sel = [s for s in sel if s.country in keep]
        if len(sel) < 3:
            raise DataError(f"{g}/{d}: only {len(sel)} countries available")
        rows = []
        for m in cfg.lgcm.compare:
            spec = cfg.lgcm.loading_spec(m, len(cfg.cycles))
            mcmc = cfg.lgcm.mcmc_config(ctx.seed("lgcm", g, d, m))
            post = fit_growth(sel, None, spec, priors, mcmc)
            ctx.growth[(g, d, m)] = post
            name = _growth_name(g, d, m)
            post.save(ctx.ws.path(name + ".npz"))
            post.to_json(ctx.ws.path(name + ".json"))
            if cfg.lgcm.export_draws:
                post.to_csv(ctx.ws.path(name + "_draws.csv"))
            _csv(posterior_slopes(post), ctx.ws.path(name + "_slopes.csv"))
            pct = post.percent_table()
            row = {"model": m,
                   **{f"start_{k}": v for k, v in pct["start_pct"].items()},
                   **{f"rate_{k}": v for k, v in pct["rate_pct"].items()},
                   "converged": post.converged}
            for t in spec.free_index:
                row[f"lambda_{cfg.cycles[t]}"] = float(post.loadings[:, :, t].mean())
            rows.append(row)
            if not post.converged:
                logger.warning("%s/%s %s: R-hat above threshold; see %s.json", g, d, m, name)
        _csv(pd.DataFrame(rows), ctx.ws.path(f"growth/{g}_{d}_summary.csv"))
        logger.info("fit-growth %s/%s: %s", g, d, ", ".join(cfg.lgcm.compare))


def stage_score(ctx: Context) -> None:
    cfg = ctx.cfg
    for g, d in ctx.combos:
        rows = []
        for m in cfg.lgcm.compare:
            post = _growth(ctx, g, d, m)
            pct = post.percent_table()
            row = {"model": m,
                   "start_pct": pct["start_pct"]["mean"], "start_lo95": pct["start_pct"]["lo95"],
                   "start_hi95": pct["start_pct"]["hi95"],
                   "rate_pct": pct["rate_pct"]["mean"], "rate_lo95": pct["rate_pct"]["lo95"],
                   "rate_hi95": pct["rate_pct"]["hi95"]}
            if cfg.score.loo:
                ll = pointwise_log_lik(post, cfg.score.loo_max_draws)
                loo = psis_loo(ll, min_draws=min(1000, ll.shape[0]))
                loo.to_json(ctx.ws.path(f"loo/{g}_{d}_{m}.json"))
                row.update(elpd_loo=loo.elpd_loo, loo_ic=loo.loo_ic, n_bad_k=loo.n_bad_k,
                           scale=loo.scale)
            rows.append(row)
        _csv(pd.DataFrame(rows), ctx.ws.path(f"model_comparison_{g}_{d}.csv"))


def _bma_inputs(ctx: Context, g: str, d: str):
    post = _growth(ctx, g, d, ctx.cfg.lgcm.model)
    design = _design(ctx)
    missing = [c for c in post.countries if c not in design.countries]
    if missing:
        raise DataError(f"growth fit countries absent from the design matrix: {missing[:5]}")
    X = design.rows(post.countries)
    y = posterior_slopes(post)["mean"].to_numpy()
    return post, y, X


def run_bma(y, X: DesignMatrix, settings, gspec, mspec, seed: int) -> BmaResult:
    method = settings.method
    if method == "auto":
        method = "enumeration" if X.X.shape[1] <= ENUMERATION_MAX_Q else "bd_mcmc"
    if method == "enumeration":
        return enumerate_bma(y, X, gspec, mspec)
    return bd_mcmc_bma(y, X, gspec, mspec, int(settings.n_iter), int(settings.burn_in), seed)


def _fit_bma(ctx: Context, g: str, d: str) -> BmaResult:
    if (g, d) not in ctx.bma:
        _, y, X = _bma_inputs(ctx, g, d)
        s = ctx.cfg.bma
        ctx.bma[(g, d)] = run_bma(y, X, s, s.gspec(), s.mspec(), ctx.seed("bma", g, d))
    return ctx.bma[(g, d)]


def stage_bma(ctx: Context) -> None:
    for g, d in ctx.combos:
        post, y, X = _bma_inputs(ctx, g, d)
        res = _fit_bma(ctx, g, d)
        res.to_json(ctx.ws.path(f"bma/{g}_{d}.json"))
        _csv(res.pip_table(), ctx.ws.path(f"bma/{g}_{d}_pip.csv"))
        top = [{"rank": r + 1, "mask_hex": f"{m:#x}", "size": size, "pmp": p,
                "predictors": ";".join(res.columns[q] for q in range(res.Q) if m >> q & 1)}
               for r, (m, size, p) in enumerate(res.top_models[:5])]
        top_frame = pd.DataFrame(top)
        _csv(top_frame, ctx.ws.path(f"bma/{g}_{d}_top_models.csv"))

        slopes = posterior_slopes(post)
        rows = []
        for i, c in enumerate(post.countries):
            mean, sd = res.predict(X.X[i])
            obs_mean, obs_sd = float(slopes["mean"].iat[i]), float(slopes["sd"].iat[i])
            row = {"country": c, "slope_mean": obs_mean, "slope_sd": obs_sd,
                   "bma_mean": mean, "bma_sd": sd,
                   "lps": log_predictive_score(mean, sd, obs_mean)}
            if ctx.cfg.score.kld:
                row["kld"] = kld_gaussian(obs_mean, obs_sd, mean, sd)
            rows.append(row)
        _csv(pd.DataFrame(rows), ctx.ws.path(f"bma/{g}_{d}_predictions.csv"))
        if ctx.cfg.score.kld:
            _write_json(ctx.ws.path(f"bma/{g}_{d}_kld.json"),
                        {"pooled_kld": pooled_kld(post, res, X),
                         "mean_country_kld": float(np.mean([r["kld"] for r in rows])),
                         "f": "unconditional slope draws (normal fit)",
                         "g": "BMA predictive (normal fit)"})
        logger.info("bma %s/%s: %s, top PMP %.3f", g, d, res.method, res.top_models[0][2])


def pooled_kld(post: GrowthPosterior, res: BmaResult, X: DesignMatrix) -> float:
    """KL from the pooled unconditional slope distribution to the pooled
    BMA predictive distribution, both summarized by their first two moments."""
    f = post.slope_draws().ravel()
    moments = np.array([res.predict(row) for row in X.X])
    g_mean = float(moments[:, 0].mean())
    g_var = float(np.mean(moments[:, 1] ** 2 + moments[:, 0] ** 2) - g_mean ** 2)
    return kld_gaussian(float(f.mean()), float(f.std()), g_mean, float(np.sqrt(g_var)))


def stage_project(ctx: Context) -> None:
    cfg = ctx.cfg
    series = _series(ctx)
    all_changes = []
    for g, d in ctx.combos:
        post, y, X = _bma_inputs(ctx, g, d)
        res = _fit_bma(ctx, g, d)
        history = {s.country: 100.0 * s.values for s in select_series(series, g, d)}
        results = []
        for i, c in enumerate(post.countries):
            r = project_country(post, res, X.X[i], future_cycles=cfg.future_years, country=i,
                                ladder=cfg.future_loadings, history=history.get(c),
                                group=g, domain=d, seed=ctx.seed("project", g, d, c))
            results.append(r)
        overall = project_overall(results)
        write_projection_csv(results + [overall], ctx.ws.path(f"projection/{g}_{d}.csv"))
        base, target = cfg.cycles[0], cfg.future_years[-1]
        changes = change_table(results + [overall], base, target)
        _csv(changes, ctx.ws.path(f"projection/{g}_{d}_change.csv"))
        all_changes.append(changes)
        if cfg.plots:
            plot_trajectory(overall, ctx.ws.path(f"plots/{g}_{d}/trajectory_ALL.svg"))
            slopes = post.slope_draws()
            for i, r in enumerate(results):
                name = slug(r.country)
                plot_trajectory(r, ctx.ws.path(f"plots/{g}_{d}/trajectory_{name}.svg"))
                curve = predictive_density(res, y, X, i)
                plot_density(curve, slopes[:, i], ctx.ws.path(f"plots/{g}_{d}/density_{name}.svg"),
                             title=f"{r.country} {g} {d}")
        logger.info("project %s/%s: overall %d -> %d: %.1f -> %.1f", g, d, base, target,
                    overall.value_at(base), overall.value_at(target))
    _csv(pd.concat(all_changes, ignore_index=True), ctx.ws.path("projection/changes.csv"))


def stage_sensitivity(ctx: Context) -> None:
    cfg = ctx.cfg
    s = cfg.bma
    for g, d in ctx.combos:
        post, y, X = _bma_inputs(ctx, g, d)
        seed = ctx.seed("sensitivity", g, d)
        rows = []
        for gk in cfg.sensitivity.g_priors:
            for mk in cfg.sensitivity.model_priors:
                gspec, mspec = s.gspec(gk), s.mspec(mk)
                res = run_bma(y, X, s, gspec, mspec, seed)
                top_m, top_size, top_p = res.top_models[0]
                best = int(np.argmax(res.pip)) if res.Q else None
                rows.append({
                    "g_prior": gk, "g": gspec.resolve(len(y), X.X.shape[1]),
                    "model_prior": mk, "method": res.method,
                    "kld": pooled_kld(post, res, X),
                    "top_model": f"{top_m:#x}", "top_pmp": top_p,
                    "total_visited_mass": res.total_visited_mass,
                    "top_models_mass": res.top_models_mass,
                    "n_models": len(res.pmp),
                    "max_pip_predictor": None if best is None else res.columns[best],
                    "max_pip": None if best is None else float(res.pip[best]),
                })
        _csv(pd.DataFrame(rows), ctx.ws.path(f"sensitivity/{g}_{d}.csv"))
        logger.info("sensitivity %s/%s: %d cells", g, d, len(rows))


STAGES = {
    "ingest": [stage_ingest],
    "impute": [stage_impute],
    "fit-growth": [stage_fit_growth],
    "score": [stage_score],
    "bma": [stage_bma],
    "project": [stage_project],
    "sensitivity": [stage_sensitivity],
    "run": [stage_ingest, stage_impute, stage_fit_growth, stage_score, stage_bma,
            stage_project],
}


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def _versions() -> dict:
    out = {"python": platform.python_version(), "minprof": __version__}
    for pkg in ("numpy", "scipy", "pandas", "scikit-learn", "PyYAML", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(ctx: Context, command: str) -> None:
    """Merge this command's seeds and outputs into ``manifest.json``.

    Hashes cover the CSV and JSON outputs only; binary draws (npz) and
    plots are listed without hashes.
    """
    root = ctx.ws.root / "manifest.json"
    doc = {}
    if root.exists():
        with open(root, encoding="utf-8") as fh:
            doc = json.load(fh)
    files = {}
    for rel in sorted(ctx.ws.written):
        p = ctx.ws.staging / rel
        files[rel] = _sha256(p) if p.suffix in (".csv", ".json") else None
    doc.update({
        "config_sha256": ctx.cfg.digest(),
        "master_seed": ctx.cfg.seed,
        "versions": _versions(),
    })
    doc.setdefault("commands", {})[command] = {"seeds": dict(sorted(ctx.seeds.items())),
                                               "files": files}
    _write_json(ctx.ws.path("manifest.json"), doc)


def execute(cfg: PipelineConfig, command: str) -> Path:
    """Run one command against ``cfg``; returns the output directory."""
    if command not in STAGES:
        raise ConfigError(f"unknown command {command!r}")
    out = cfg.resolve("out")
    with Workspace(out) as ws:
        ctx = Context(cfg, ws)
        for stage in STAGES[command]:
            stage(ctx)
        write_manifest(ctx, command)
    return out
