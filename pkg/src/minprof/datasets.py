"""Reference country and indicator lists, and a synthetic fixture writer."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .panel import inv_logit

COUNTRIES = (
    "Albania", "Argentina", "Australia", "Austria", "Belgium",
    "Brazil", "Bulgaria", "Canada", "Chile", "Colombia",
    "Croatia", "Czech Republic", "Denmark", "Estonia", "Finland",
    "France", "Germany", "Greece", "Hong Kong–China", "Hungary",
    "Iceland", "Indonesia", "Ireland", "Israel", "Italy",
    "Japan", "Jordan", "Kazakhstan", "Korea", "Latvia",
    "Lithuania", "Macao–China", "Mexico", "Montenegro", "Netherlands",
    "New Zealand", "Norway", "Peru", "Poland", "Portugal",
    "Qatar", "Romania", "Singapore", "Slovak Republic", "Slovenia",
    "Spain", "Sweden", "Switzerland", "Thailand", "Turkey",
    "United Kingdom", "United States", "Uruguay",
)

# (name, group, end year); every indicator differences against 2009 and
# 2022-ended indicators fall back to 2021
INDICATORS = (
    ("Employment females as percentage of employment annual", "Context (Gender Gap)", 2021),
    ("Gender development index", "Context (Gender Gap)", 2022),
    ("Gender gap index GEQ", "Context (Gender Gap)", 2022),
    ("Labor force participation rate female percentage of female population", "Context (Gender Gap)", 2021),
    ("Adolescents out of school of lower-secondary age", "Outcome/Input (Education)", 2022),
    ("Children out of school of primary school age", "Outcome/Input (Education)", 2022),
    ("Gross enrollment ratio primary both sexes", "Outcome/Input (Education)", 2022),
    ("Gross enrollment ratio secondary both sexes", "Outcome/Input (Education)", 2022),
    ("Lower-secondary school starting age years", "Outcome/Input (Education)", 2022),
    ("Official entrance age to lower-secondary education years", "Outcome/Input (Education)", 2022),
    ("Official entrance age to pre-primary education years", "Outcome/Input (Education)", 2022),
    ("Official entrance age to primary education years", "Outcome/Input (Education)", 2022),
    ("GDP (standardized)", "Context (SES)", 2021),
    ("Human development index", "Context (SES)", 2022),
    ("Index highest occupational status of parents", "Context (SES)", 2022),
    ("Rural population as percentage of total population", "Context (SES)", 2022),
    ("Expected years of schooling", "Context (Education)", 2022),
    ("Funding government", "Context (Education)", 2022),
    ("Government expenditure on education percentage of GDP", "Context (Education)", 2022),
    ("Government expenditure on education percentage of government expenditure", "Context (Education)", 2022),
    ("Index school size", "Context (Education)", 2022),
    ("Percentage of full-time teachers per school", "Processes/Input (Education)", 2022),
    ("Percentage of part-time teachers per school", "Processes/Input (Education)", 2022),
    ("Number of class periods in mathematics", "Processes/Input (Education)", 2022),
    ("Primary school starting age years", "Processes/Input (Education)", 2022),
    ("Teaching hours lower secondary", "Processes/Input (Education)", 2021),
    ("Teaching hours primary", "Processes/Input (Education)", 2021),
    ("Teaching hours upper-secondary", "Processes/Input (Education)", 2021),
    ("Percentage of teachers in pre-primary education who are female", "Context (Education)", 2022),
    ("Percentage of teachers in primary education who are female", "Context (Education)", 2022),
    ("Percentage of teachers in secondary education who are female", "Context (Education)", 2022),
)

# near-duplicate pairs in the fixture: (copy, source)
COLLINEAR_PAIRS = (
    ("Official entrance age to lower-secondary education years", "Lower-secondary school starting age years"),
    ("Primary school starting age years", "Official entrance age to primary education years"),
)

CYCLES = (2009, 2012, 2015, 2018, 2022)


def indicator_metadata() -> dict:
    """Metadata mapping in the layout read by ``load_indicator_meta``."""
    out = {}
    for name, group, end in INDICATORS:
        entry = {"end_year": end, "start_year": 2009, "group": group}
        if end == 2022:
            entry["substitute_year"] = 2021
        out[name] = entry
    return {"indicators": out}


def synthetic_panel(n_countries: int = 53, seed: int = 0, missing_fraction: float = 0.05,
                    shock: float = 0.0):
    """Simulate outcome and indicator tables with a known growth structure.

    Slopes (logit per cycle) depend linearly on the differences of two
    indicators, GDP and the gender development index; the two entrance-age
    indicators listed in ``COLLINEAR_PAIRS`` are near copies of earlier
    columns.  ``missing_fraction`` of the end-year cells are blanked (their
    2021 values stay, so substitution recovers some), plus one country
    loses a start-year value for a few indicators so imputation has work.

    Returns
    -------
    outcomes, indicators : DataFrame
        Long tables in the CSV layouts.
    truth : dict
        Standardized driver differences and per-country slopes/intercepts.
    """
    if not 3 <= n_countries <= len(COUNTRIES):
        raise ValueError(f"n_countries must be in [3, {len(COUNTRIES)}]")
    rng = np.random.default_rng(seed)
    countries = list(COUNTRIES[:n_countries])
    names = [n for n, _, _ in INDICATORS]
    q = len(names)
    start = rng.normal(50.0, 10.0, size=(n_countries, q))
    diff = rng.normal(0.0, 2.0, size=(n_countries, q))
    col = {n: j for j, n in enumerate(names)}
    for copy, src in COLLINEAR_PAIRS:
        start[:, col[copy]] = start[:, col[src]] + rng.normal(0, 0.01, n_countries)
        diff[:, col[copy]] = diff[:, col[src]] + rng.normal(0, 0.01, n_countries)
    end = start + diff

    z = (diff - diff.mean(axis=0)) / diff.std(axis=0)
    slope = (-0.04 + 0.06 * z[:, col["GDP (standardized)"]]
             - 0.04 * z[:, col["Gender development index"]]
             + rng.normal(0, 0.01, n_countries))
    base = rng.normal(0.8, 0.5, n_countries)

    rows = []
    for gi, group in enumerate(("boys", "girls")):
        for di, domain in enumerate(("reading", "mathematics")):
            shift = 0.35 * (group == "girls") * (domain == "reading") - 0.1 * di
            icpt = base + shift + rng.normal(0, 0.05, n_countries)
            s = slope + rng.normal(0, 0.005, n_countries)
            for t, year in enumerate(CYCLES):
                y = icpt + s * t + rng.normal(0, 0.05, n_countries)
                if t == len(CYCLES) - 1:
                    y = y + shock
                pct = np.round(100.0 * inv_logit(y), 2)
                rows += [(c, year, group, domain, float(p)) for c, p in zip(countries, pct)]
    outcomes = pd.DataFrame(rows, columns=["country", "year", "group", "domain", "pct_min_prof"])

    ind_rows = []
    blank = rng.random((n_countries, q)) < missing_fraction
    for i, c in enumerate(countries):
        for j, (name, _, end_year) in enumerate(INDICATORS):
            ind_rows.append((c, name, 2009, float(np.round(start[i, j], 6))))
            v_end = float(np.round(end[i, j], 6))
            if end_year == 2022:
                ind_rows.append((c, name, 2021, v_end))
                ind_rows.append((c, name, 2022, None if blank[i, j] else v_end))
            else:
                ind_rows.append((c, name, 2021, None if blank[i, j] else v_end))
    if n_countries > 5:
        # one country without start-year values for three indicators
        gap_country = countries[-1]
        gap_names = set(names[13:16])
        ind_rows = [(c, n, y, None if (c == gap_country and n in gap_names and y == 2009) else v)
                    for c, n, y, v in ind_rows]
    indicators = pd.DataFrame(ind_rows, columns=["country", "indicator", "year", "value"])
    truth = {"slope": slope, "intercept": base, "countries": countries}
    return outcomes, indicators, truth


def write_fixture(directory, n_countries: int = 53, seed: int = 0, missing_fraction: float = 0.05,
                  groups=("boys", "girls"), domains=("reading", "mathematics"),
                  mcmc: dict | None = None, bma_iter: int = 20_000, master_seed: int = 12345,
                  shock: float = 0.0) -> Path:
    """Write outcome/indicator CSVs, metadata and a runnable config.

    Returns the path of the config file.  MCMC sizes default to a quick
    setting suitable for tests and demonstrations.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    outcomes, indicators, _ = synthetic_panel(n_countries, seed, missing_fraction, shock)
    outcomes.to_csv(d / "outcomes.csv", index=False)
    indicators.to_csv(d / "indicators.csv", index=False)
    with open(d / "indicator_meta.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(indicator_metadata(), fh, sort_keys=False, allow_unicode=True)
    config = {
        "seed": master_seed,
        "paths": {"outcomes": "outcomes.csv", "indicators": "indicators.csv",
                  "metadata": "indicator_meta.yaml", "out": "out"},
        "groups": list(groups),
        "domains": list(domains),
        "lgcm": {"model": "M1", "compare": ["M0", "M1", "M2"],
                 "mcmc": mcmc or {"n_chains": 2, "n_iter": 1500, "burn_in": 500}},
        "bma": {"n_iter": bma_iter, "burn_in": bma_iter // 10},
    }
    path = d / "config.yaml"
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(config, fh, sort_keys=False)
    return path
