"""Simulation studies and the rolling-origin forecast comparison."""

from __future__ import annotations

import json
import logging
import subprocess
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import __version__
from .data import TimeSeriesPanel, standardize
from .engine import ChainStore, SamplerConfig, run_chain, summarize, warm_start
from .model import (VarData, VarShape, build_design_row, forecast_mean, ols_from_design, rmsfe,
                    simulate_var)

log = logging.getLogger(__name__)

DESIGNS = ("sim1", "sim2", "sim3")
EXPLOSIVE_LIMIT = 1e6
MAX_REDRAWS = 200
STABLE_RADIUS = 0.98


@dataclass
class SimulationSpec:
    design: str = "sim1"
    T: int = 200
    n: int = 8
    P: int = 4
    noise_var: float = 0.1
    seed: int = 0
    warmup: int = 50

    def __post_init__(self):
        if isinstance(self.design, int) or str(self.design).isdigit():
            self.design = f"sim{int(self.design)}"
        if self.design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}, got {self.design!r}")
        if self.T < 1 or self.n < 1 or self.P < 1:
            raise ValueError("T, n and P must be positive")
        if not self.noise_var > 0:
            raise ValueError("noise variance must be positive")


@dataclass
class SimulatedData:
    values: np.ndarray        # (P + T, n): P presample rows, then T observations
    theta: np.ndarray         # generating coefficients (n, n, P)
    redraws: int              # explosive coefficient draws that were rejected
    spec: SimulationSpec
    damping: float = 1.0      # < 1 when the fallback had to pull the roots inside the unit circle


def draw_coefficients(design: str, n: int, P: int, rng: np.random.Generator) -> np.ndarray:
    size = (n, n, P)
    if design == "sim1":
        keep = rng.uniform(size=size) < 0.5
        return np.where(keep, rng.normal(0.0, 0.3, size), 0.0)
    if design == "sim2":
        return rng.normal(0.0, 0.15, size)
    comp = rng.choice(3, size=size, p=[0.8, 0.1, 0.1])
    small = rng.normal(0.0, 0.15, size)
    big = rng.normal(0.5, 0.05, size)
    return np.where(comp == 0, small, np.where(comp == 1, big, -big))


def companion_radius(theta: np.ndarray) -> float:
    """Largest root modulus of the VAR lag polynomial."""
    n, _, P = theta.shape
    C = np.zeros((n * P, n * P))
    C[:n] = np.concatenate([theta[:, :, k] for k in range(P)], axis=1)
    C[n:, :-n] = np.eye(n * (P - 1))
    return float(np.abs(np.linalg.eigvals(C)).max())


def damp(theta: np.ndarray, factor: float) -> np.ndarray:
    """Scale lag ``k`` by ``factor**k``, which scales every companion root by ``factor``."""
    return theta * factor ** np.arange(1, theta.shape[2] + 1)


def generate_simulation(spec: SimulationSpec, rng: np.random.Generator | None = None) -> SimulatedData:
    """Draw coefficients by the design's law and simulate with N(0, noise_var I) errors.

    The path starts from zero lags and the first ``warmup`` steps are thrown
    away.  A draw whose path leaves ``|y| <= 1e6`` is rejected and redrawn on a
    fresh substream; the number of rejections is returned.  Some laws (sim3)
    essentially never give a usable path.  When ``MAX_REDRAWS`` draws have all
    failed, the draw with the smallest root modulus is damped so that modulus
    becomes ``STABLE_RADIUS`` and its path is simulated on one more substream.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    best, best_radius = None, np.inf
    for redraws in range(MAX_REDRAWS):
        sub = rng.spawn(1)[0]
        theta = draw_coefficients(spec.design, spec.n, spec.P, sub)
        with np.errstate(over="ignore", invalid="ignore"):
            y = simulate_var(theta, spec.T, sub, spec.noise_var, burn=spec.warmup)
        if np.all(np.isfinite(y)) and np.abs(y).max() <= EXPLOSIVE_LIMIT:
            if redraws:
                log.info("%s: rejected %d explosive coefficient draws", spec.design, redraws)
            return SimulatedData(y, theta, redraws, spec)
        radius = companion_radius(theta)
        if radius < best_radius:
            best, best_radius = theta, radius
    factor = STABLE_RADIUS / best_radius
    log.warning("%s: no usable draw in %d attempts; damping the least explosive draw by %.3f",
                spec.design, MAX_REDRAWS, factor)
    theta = damp(best, factor)
    y = simulate_var(theta, spec.T, rng.spawn(1)[0], spec.noise_var, burn=spec.warmup)
    return SimulatedData(y, theta, MAX_REDRAWS, spec, factor)


# -- simulation study ------------------------------------------------------------

@dataclass
class SimulationReport:
    design: str
    scheme: str
    true_theta: np.ndarray
    score: np.ndarray          # MAP kappa (hs) or exclusion probability (dm)
    score_name: str
    redraws: int
    store: ChainStore | None = None

    def zero_share_above(self, cut: float = 0.9) -> float:
        zeros = self.true_theta == 0
        if not zeros.any():
            raise ValueError("design has no exact zeros")
        return float(np.mean(self.score[zeros] > cut))

    def rows(self):
        n, _, P = self.true_theta.shape
        for i in range(n):
            for j in range(n):
                for k in range(P):
                    th = self.true_theta[i, j, k]
                    yield i + 1, j + 1, k + 1, th, abs(th), self.score[i, j, k]

    def to_csv(self, path) -> Path:
        path = Path(path)
        lines = [f"equation,predictor,lag,true_theta,abs_true_theta,{self.score_name}"]
        for i, j, k, th, a, s in self.rows():
            lines.append(f"{i},{j},{k},{th:.10g},{a:.10g},{s:.10g}")
        path.write_text("\n".join(lines) + "\n")
        return path


def run_simulation_study(design: str, scheme: str, config: SamplerConfig | None = None,
                         spec: SimulationSpec | None = None, out_dir=None) -> SimulationReport:
    """Fit one simulated data set and pair every |true coefficient| with its shrinkage summary."""
    scheme = scheme.lower()
    if scheme not in ("hs", "dm"):
        raise ValueError("simulation studies compare the hs and dm schemes")
    spec = spec or SimulationSpec(design)
    config = config or SamplerConfig(scheme=scheme, seed=spec.seed)
    config = replace(config, scheme=scheme)
    sim = generate_simulation(spec)
    data = VarData.from_panel(sim.values, spec.P)
    chain_dir = Path(out_dir) / "chain" if out_dir is not None else None
    store = run_chain(data, config, chain_dir)
    summ = summarize(store)
    if scheme == "hs":
        score, name = summ["kappa_map"], "map_kappa"
    else:
        score, name = summ["exclusion"], "exclusion_probability"
    report = SimulationReport(spec.design, scheme, sim.theta, score, name, sim.redraws, store)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report.to_csv(out / f"shrinkage_{spec.design}_{scheme}.csv")
        _write_json(out / "manifest.json", {
            "command": "simulate",
            "design": spec.design,
            "scheme": scheme,
            "seed": int(config.seed),
            "simulation": asdict(spec),
            "sampler": asdict(config),
            "explosive_redraws": sim.redraws,
            "damping": sim.damping,
            "version": version_string(),
        })
    return report


def rank_correlation(a, b) -> float:
    """Spearman correlation with average ranks for ties."""
    return float(spearmanr(np.ravel(a), np.ravel(b)).statistic)


# -- forecast study ----------------------------------------------------------------

@dataclass
class ForecastConfig:
    schemes: tuple = ("hs", "dm", "t", "lap", "ridge")
    P: int = 4
    first_origin: int = 150       # number of equations available at the first origin
    origins: int = 50
    draws: int = 1000
    iterations: int = 3000        # per warm-started origin
    burn_in: int = 500
    first_iterations: int = 15000
    first_burn_in: int = 5000
    particles: int = 100
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.schemes, str):
            self.schemes = tuple(s.strip().lower() for s in self.schemes.split(",") if s.strip())
        self.schemes = tuple(self.schemes)
        if not self.schemes:
            raise ValueError("no schemes given")
        for it, burn in ((self.iterations, self.burn_in), (self.first_iterations, self.first_burn_in)):
            if it - burn < self.draws:
                raise ValueError(f"{it} iterations with {burn} burn-in cannot give {self.draws} draws")

    def sampler(self, scheme: str, first: bool, origin: int) -> SamplerConfig:
        it = self.first_iterations if first else self.iterations
        burn = self.first_burn_in if first else self.burn_in
        thin = max(1, (it - burn) // self.draws)
        seed = (self.seed * 1_000_003 + origin) % 2 ** 63
        return SamplerConfig(scheme=scheme, iterations=it, burn_in=burn, thin=thin,
                             particles=self.particles, seed=seed)


@dataclass
class ForecastReport:
    series_ids: list
    origins: list                                  # response-row index predicted at each origin
    dates: list                                    # date of each predicted quarter
    realized: np.ndarray                           # (origins, n) in transformed units
    predictions: dict = field(default_factory=dict)   # scheme -> (origins, n); includes "ols"
    stores: dict = field(default_factory=dict)     # scheme -> store from the first origin
    config: ForecastConfig | None = None

    def rmsfe(self, scheme: str) -> np.ndarray:
        p = self.predictions[scheme]
        return np.array([rmsfe(p[:, i], self.realized[:, i]) for i in range(p.shape[1])])

    def ratios(self, scheme: str, baseline: str = "ols") -> np.ndarray:
        return self.rmsfe(scheme) / self.rmsfe(baseline)

    def average_ratio(self, scheme: str, baseline: str = "ols") -> float:
        return float(self.ratios(scheme, baseline).mean())

    @property
    def schemes(self) -> list:
        return [s for s in self.predictions if s != "ols"]


def _origin_forecast(panel: TimeSeriesPanel, rows: int, P: int):
    """Standardize on the first ``rows`` panel rows only and return (VarData, design row, mean, sd)."""
    train = standardize(panel.head(rows))
    mean = np.array([train.standardization[s][0] for s in panel.series_ids])
    sd = np.array([train.standardization[s][1] for s in panel.series_ids])
    lags = (panel.values[rows - P:rows] - mean) / sd
    x = build_design_row(np.vstack([lags, np.zeros((1, panel.n))]), P, VarShape(panel.n, P, 1))
    return VarData.from_panel(train.values, P), x, mean, sd


def run_forecast_study(panel: TimeSeriesPanel, config: ForecastConfig | None = None,
                       progress: bool = False) -> ForecastReport:
    """Rolling one-step-ahead forecasts with per-origin standardization and warm starts.

    At origin ``t`` the model sees the first ``t`` equations (``P + t`` panel
    rows) and predicts equation ``t``.  Forecasts are mapped back to the
    transformed scale before errors are taken.
    """
    cfg = config or ForecastConfig()
    P = cfg.P
    T = panel.T - P
    last = cfg.first_origin + cfg.origins - 1
    if cfg.first_origin <= cfg.P * panel.n or last >= T:
        raise ValueError(f"panel with {T} equations cannot support origins "
                         f"{cfg.first_origin}..{last} for a VAR({P}) in {panel.n} series")
    origins = list(range(cfg.first_origin, last + 1))
    realized = np.array([panel.values[P + t] for t in origins])
    report = ForecastReport(list(panel.series_ids), origins, [panel.dates[P + t] for t in origins],
                            realized, config=cfg)

    prepared = [_origin_forecast(panel, P + t, P) for t in origins]
    ols = []
    for data, x, mean, sd in prepared:
        theta = ols_from_design(data.X, data.Y, P)
        ols.append(forecast_mean(theta, x) * sd + mean)
    report.predictions["ols"] = np.array(ols)

    for scheme in cfg.schemes:
        preds, warm = [], None
        for k, (t, (data, x, mean, sd)) in enumerate(zip(origins, prepared)):
            sc = cfg.sampler(scheme, k == 0, t)
            store = run_chain(data, sc, warm=warm)
            theta = store["theta"][-cfg.draws:]
            preds.append(forecast_mean(theta, x) * sd + mean)
            warm = warm_start(store)
            if k == 0:
                report.stores[scheme] = store
            if progress:
                log.info("%s: origin %d (%d of %d)", scheme, t, k + 1, len(origins))
        report.predictions[scheme] = np.array(preds)
    return report


# -- reports -----------------------------------------------------------------------

def version_string() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, Path):
        return str(o)
    if hasattr(o, "isoformat"):
        return o.isoformat()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def rmsfe_table(report: ForecastReport) -> list[list[str]]:
    schemes = report.schemes
    rows = [["series"] + schemes]
    ratios = {s: report.ratios(s) for s in schemes}
    for i, sid in enumerate(report.series_ids):
        rows.append([sid] + [f"{ratios[s][i]:.6f}" for s in schemes])
    rows.append(["average"] + [f"{ratios[s].mean():.6f}" for s in schemes])
    return rows


def emit_reports(report: ForecastReport, out_dir, extra_manifest: dict | None = None) -> list[Path]:
    """Write the RMSFE table, per-equation shrinkage and inclusion tables, predictions and a manifest."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    written = []
    ids = report.series_ids
    n = len(ids)

    path = out / "rmsfe.csv"
    path.write_text("\n".join(",".join(r) for r in rmsfe_table(report)) + "\n")
    written.append(path)

    path = out / "predictions.csv"
    cols = ["origin", "date", "series", "realized", "ols"] + report.schemes
    lines = [",".join(cols)]
    for k, (t, d) in enumerate(zip(report.origins, report.dates)):
        for i, sid in enumerate(ids):
            vals = [report.realized[k, i], report.predictions["ols"][k, i]]
            vals += [report.predictions[s][k, i] for s in report.schemes]
            lines.append(",".join([str(t), d.isoformat(), sid] + [f"{v:.10g}" for v in vals]))
    path.write_text("\n".join(lines) + "\n")
    written.append(path)

    for scheme, store in report.stores.items():
        summ = summarize(store)
        P = summ["theta_mean"].shape[2]
        if "kappa_hist" in summ:
            h = summ["kappa_hist"]
            bins = h.shape[0]
            for i, sid in enumerate(ids):
                path = out / f"shrinkage_profile_{sid}.csv" if scheme == "hs" else \
                    out / f"shrinkage_profile_{sid}_{scheme}.csv"
                lines = ["predictor,lag,bin_mid,density,map_kappa"]
                for j in range(n):
                    for k in range(P):
                        dens = h[:, i, j, k] / max(1, h[:, i, j, k].sum()) * bins
                        for b in range(bins):
                            lines.append(f"{ids[j]},{k + 1},{(b + 0.5) / bins:.4f},{dens[b]:.6g},"
                                         f"{summ['kappa_map'][i, j, k]:.6g}")
                path.write_text("\n".join(lines) + "\n")
                written.append(path)
        if "inclusion" in summ:
            for i, sid in enumerate(ids):
                path = out / f"inclusion_{sid}.csv"
                lines = [",".join(["lag"] + ids)]
                for k in range(P):
                    lines.append(",".join([str(k + 1)] + [f"{summ['inclusion'][i, j, k]:.6f}" for j in range(n)]))
                path.write_text("\n".join(lines) + "\n")
                written.append(path)

    cfg = report.config
    manifest = {
        "command": "forecast",
        "seed": int(cfg.seed) if cfg else None,
        "config": asdict(cfg) if cfg else None,
        "series_ids": ids,
        "origins": report.origins,
        "first_prediction": report.dates[0],
        "last_prediction": report.dates[-1],
        "average_ratio": {s: report.average_ratio(s) for s in report.schemes},
        "deviation": "per-origin chains are shortened and warm-started; see config",
        "version": version_string(),
    }
    manifest.update(extra_manifest or {})
    path = out / "manifest.json"
    _write_json(path, manifest)
    written.append(path)
    return written


PUBLISHED_AVERAGE_RATIO = {"hs": 0.834, "dm": 0.857, "ridge": 0.934}
