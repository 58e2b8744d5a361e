"""Particle Gibbs sampler for the VAR under any coefficient prior, chain storage and summaries.

One iteration updates, in order: the coefficients (``theta``, or ``delta``
then ``beta`` for the discrete mixture), the prior latents, the volatility
paths (particle Gibbs with backward simulation), the correlation matrix and
the random-walk scales.  Random-walk Metropolis step sizes adapt only during
burn-in.

A :class:`ChainStore` on disk is a directory holding ``frames.bin`` (one
record per retained draw, little-endian float64, fields in manifest order)
and ``manifest.json``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .mixture import DiscreteMixtureState, effective_theta, sample_beta, sample_delta, sample_pi
from .model import SingularDesignError, VarData, ols_from_design
from .shrinkage import (
    SCHEMES,
    HorseshoeState,
    ScalarShrinkState,
    ShrinkageProfile,
    sample_horseshoe_scales,
    sample_scalar_scales,
    sample_theta,
)
from .volatility import VolatilityState, pgbs_update, sample_psi, sample_tau_omega

log = logging.getLogger(__name__)

FORMAT = "hsvar-chain/1"
MIN_SUMMARY_FRAMES = 100


class ChainError(RuntimeError):
    """A component update failed; carries the iteration and the component tag."""

    def __init__(self, iteration: int, component: str, cause: BaseException):
        super().__init__(f"iteration {iteration}, {component}: {cause}")
        self.iteration = iteration
        self.component = component


@dataclass
class SamplerConfig:
    scheme: str = "hs"
    iterations: int = 15000
    burn_in: int = 5000
    thin: int = 1
    particles: int = 100
    seed: int = 0
    adapt_window: int = 50
    volatility: str = "sv"          # "sv", or "fixed" for identity error covariances
    store_omega: bool = True
    lkj_m: float = 1.0
    init_mean: float = 0.0
    init_var: float = 1.0
    tau_omega_init: float = 0.1
    psi_step: float = 0.05
    tau_step: float = 0.5
    tau_omega_max: float | None = None   # optional truncation of the half-Cauchy prior
    t_a: float = 0.5
    t_b: float = 0.5
    laplace_rate: float = 2.0
    ridge_var: float = 9.0
    dm_a: float = 1.0
    dm_b: float = 1.0
    dm_c_sq: float = 9.0
    dm_collapsed: bool = True       # draw each (delta, beta) pair jointly

    def __post_init__(self):
        self.scheme = self.scheme.lower()
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be in [0, iterations)")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.volatility not in ("sv", "fixed"):
            raise ValueError("volatility must be 'sv' or 'fixed'")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    @property
    def n_frames(self) -> int:
        return len(range(self.burn_in, self.iterations, self.thin))


@dataclass
class ChainState:
    theta: np.ndarray
    prior: HorseshoeState | ScalarShrinkState | DiscreteMixtureState
    vol: VolatilityState


# -- storage -----------------------------------------------------------------------

def frame_fields(scheme: str, n: int, P: int, T: int, store_omega: bool = True) -> list[tuple[str, tuple]]:
    coef = (n, n, P)
    fields = [("theta", coef)]
    if scheme == "hs":
        fields += [("lambda_sq", coef), ("tau_sq", (n,))]
    elif scheme == "dm":
        fields += [("delta", coef), ("beta", coef), ("pi", (n,))]
    else:
        fields += [("lambda_sq", coef)]
    fields += [("psi", (n, n)), ("tau_omega", (n,))]
    if store_omega:
        fields += [("omega", (n, T))]
    return fields


def _frame_vector(state: ChainState, fields) -> np.ndarray:
    parts = []
    for name, _ in fields:
        if name == "theta":
            v = state.theta
        elif name in ("psi", "tau_omega", "omega"):
            v = getattr(state.vol, name)
        else:
            v = getattr(state.prior, name)
        parts.append(np.asarray(v, dtype="<f8").reshape(-1))
    return np.concatenate(parts)


@dataclass
class ChainStore:
    scheme: str
    shape: dict
    fields: list
    draws: dict = field(default_factory=dict)
    seed: int = 0
    config: dict = field(default_factory=dict)
    complete: bool = True
    error: str | None = None

    @property
    def n_frames(self) -> int:
        first = self.fields[0][0]
        return len(self.draws.get(first, ()))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[name]

    @property
    def frame_size(self) -> int:
        return int(sum(np.prod(s) for _, s in self.fields))

    def frames_matrix(self) -> np.ndarray:
        n = self.n_frames
        return np.concatenate([np.asarray(self.draws[k], dtype="<f8").reshape(n, -1)
                               for k, _ in self.fields], axis=1)

    def manifest(self, checksum: str) -> dict:
        return {
            "format": FORMAT,
            "version": __version__,
            "scheme": self.scheme,
            "seed": int(self.seed),
            "shape": self.shape,
            "fields": [[k, list(s)] for k, s in self.fields],
            "frame_size": self.frame_size,
            "frame_count": self.n_frames,
            "dtype": "<f8",
            "sha256": checksum,
            "complete": self.complete,
            "error": self.error,
            "config": self.config,
        }

    def write(self, directory) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        raw = self.frames_matrix().astype("<f8").tobytes() if self.n_frames else b""
        (directory / "frames.bin").write_bytes(raw)
        _write_manifest(directory, self.manifest(hashlib.sha256(raw).hexdigest()))
        return directory

    @classmethod
    def read(cls, directory) -> "ChainStore":
        directory = Path(directory)
        man = json.loads((directory / "manifest.json").read_text())
        if man.get("format") != FORMAT:
            raise ValueError(f"{directory} is not a chain store")
        raw = (directory / "frames.bin").read_bytes()
        if hashlib.sha256(raw).hexdigest() != man["sha256"]:
            raise ValueError(f"checksum mismatch in {directory}")
        fields = [(k, tuple(s)) for k, s in man["fields"]]
        size = man["frame_size"]
        mat = np.frombuffer(raw, dtype="<f8").reshape(man["frame_count"], size)
        draws, off = {}, 0
        for k, s in fields:
            width = int(np.prod(s))
            draws[k] = mat[:, off:off + width].reshape((-1,) + s).copy()
            off += width
        return cls(man["scheme"], man["shape"], fields, draws, man["seed"], man["config"],
                   man["complete"], man.get("error"))


def _write_manifest(directory: Path, manifest: dict) -> None:
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


class _FrameWriter:
    """Append-only frame file; the manifest is rewritten on close."""

    def __init__(self, directory, store: ChainStore):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.store = store
        self.fh = open(self.dir / "frames.bin", "wb")
        self.hash = hashlib.sha256()

    def append(self, vec: np.ndarray) -> None:
        raw = vec.astype("<f8").tobytes()
        self.fh.write(raw)
        self.hash.update(raw)

    def close(self) -> None:
        self.fh.flush()
        os.fsync(self.fh.fileno())
        self.fh.close()
        _write_manifest(self.dir, self.store.manifest(self.hash.hexdigest()))


# -- sampler -----------------------------------------------------------------------

def initialize(data: VarData, config: SamplerConfig, rng: np.random.Generator,
               warm: dict | None = None) -> ChainState:
    """Starting values: OLS coefficients, all indicators on, N(0, 1) log volatilities.

    ``warm`` (see :func:`warm_start`) overrides the defaults with summaries of
    a previous chain.
    """
    n, P, T = data.Y.shape[1], data.P, data.Y.shape[0]
    try:
        theta = ols_from_design(data.X, data.Y, P)
    except SingularDesignError:
        log.warning("OLS start infeasible; starting coefficients at zero")
        theta = np.zeros((n, n, P))
    omega = rng.standard_normal((n, T))
    if config.volatility == "fixed":
        vol = VolatilityState.constant(n, T, 0.0, config.tau_omega_init)
    else:
        vol = VolatilityState(omega, np.eye(n), np.full(n, config.tau_omega_init),
                              config.init_mean, config.init_var)
    w = warm or {}
    if "theta" in w:
        theta = np.array(w["theta"], dtype=float)
    if config.volatility == "sv":
        if "omega" in w:
            vol = replace(vol, omega=_fit_length(np.asarray(w["omega"], dtype=float), T))
        if "psi" in w:
            vol = replace(vol, psi=np.array(w["psi"], dtype=float))
        if "tau_omega" in w:
            vol = replace(vol, tau_omega=np.array(w["tau_omega"], dtype=float))

    if config.scheme == "hs":
        prior = HorseshoeState.ones(n, P)
        if "lambda_sq" in w:
            prior.lambda_sq = np.array(w["lambda_sq"], dtype=float)
        if "tau_sq" in w:
            prior.tau_sq = np.array(w["tau_sq"], dtype=float)
    elif config.scheme == "dm":
        prior = DiscreteMixtureState.initial(theta, a=config.dm_a, b=config.dm_b, c_sq=config.dm_c_sq)
        if "beta" in w:
            prior = replace(prior, beta=np.array(w["beta"], dtype=float),
                            delta=np.array(w["delta"]), pi=np.array(w["pi"], dtype=float))
        theta = effective_theta(prior)
    else:
        prior = ScalarShrinkState.initial(config.scheme, n, P, a=config.t_a, b=config.t_b,
                                          rate=config.laplace_rate, ridge_var=config.ridge_var)
        if "lambda_sq" in w and config.scheme != "ridge":
            prior.lambda_sq = np.array(w["lambda_sq"], dtype=float)
    return ChainState(theta, prior, vol)


def _fit_length(omega: np.ndarray, T: int) -> np.ndarray:
    if omega.shape[1] >= T:
        return omega[:, -T:].copy()
    pad = np.repeat(omega[:, -1:], T - omega.shape[1], axis=1)
    return np.concatenate([omega, pad], axis=1)


def warm_start(store: ChainStore) -> dict:
    """Starting values for the next rolling origin from a finished chain.

    Means for coefficients, log volatilities and their scales, medians for the
    heavy-tailed prior variances, and the last correlation draw.
    """
    d = store.draws
    out = {"theta": d["theta"].mean(axis=0), "psi": d["psi"][-1], "tau_omega": d["tau_omega"].mean(axis=0)}
    if "omega" in d:
        out["omega"] = d["omega"].mean(axis=0)
    if "lambda_sq" in d:
        out["lambda_sq"] = np.median(d["lambda_sq"], axis=0)
    if "tau_sq" in d:
        out["tau_sq"] = np.median(d["tau_sq"], axis=0)
    if "delta" in d:
        out["delta"] = (d["delta"].mean(axis=0) >= 0.5).astype(np.int8)
        out["beta"] = d["beta"].mean(axis=0)
        out["pi"] = d["pi"].mean(axis=0)
    return out


class GibbsSampler:
    """Holds the chain state and advances it one full sweep at a time."""

    def __init__(self, data: VarData, config: SamplerConfig, state: ChainState,
                 rng: np.random.Generator):
        self.data = data
        self.config = config
        self.state = state
        self.rng = rng
        n = data.Y.shape[1]
        self.psi_step = float(config.psi_step)
        self.tau_step = np.full(n, float(config.tau_step))
        self._psi_acc = 0
        self._tau_acc = np.zeros(n)
        self._since_adapt = 0
        self.iteration = 0

    def step(self, adapt: bool = False) -> ChainState:
        cfg, data, rng = self.config, self.data, self.rng
        s = self.state
        prior, vol, theta = s.prior, s.vol, s.theta
        fixed = cfg.volatility == "fixed"
        vol_arg = None if fixed else vol
        tag = "theta"
        try:
            if cfg.scheme == "dm":
                tag = "delta"
                prior = sample_delta(data, prior, vol_arg, rng, cfg.dm_collapsed)
                tag = "beta"
                prior = sample_beta(data, prior, vol_arg, rng)
                theta = effective_theta(prior)
                tag = "pi"
                prior = sample_pi(prior, rng)
            else:
                theta = sample_theta(data, prior.prior_variance(), vol_arg, rng)
                tag = "scales"
                if cfg.scheme == "hs":
                    prior = sample_horseshoe_scales(theta, prior, rng)
                else:
                    prior = sample_scalar_scales(theta, prior, rng)
            if not fixed:
                resid = data.Y - data.X @ theta.reshape(theta.shape[0], -1).T
                tag = "pgbs"
                vol = pgbs_update(resid, vol, cfg.particles, rng)
                tag = "psi"
                vol, acc = sample_psi(resid, vol, cfg.lkj_m, self.psi_step, rng)
                self._psi_acc += acc
                tag = "tau_omega"
                tau, tacc = sample_tau_omega(vol.omega, vol.tau_omega, rng, self.tau_step,
                                              cfg.tau_omega_max)
                vol = replace(vol, tau_omega=tau)
                self._tau_acc += tacc
        except Exception as exc:
            raise ChainError(self.iteration, tag, exc) from exc
        self.state = ChainState(theta, prior, vol)
        self.iteration += 1
        self._since_adapt += 1
        if self._since_adapt >= self.config.adapt_window:
            if adapt:
                self._adapt()
            self._psi_acc, self._tau_acc, self._since_adapt = 0, np.zeros_like(self._tau_acc), 0
        return self.state

    def _adapt(self) -> None:
        w = self._since_adapt
        self.psi_step = _tune(self.psi_step, self._psi_acc / w)
        self.tau_step = np.array([_tune(s, a / w) for s, a in zip(self.tau_step, self._tau_acc)])


def _tune(scale: float, rate: float, low: float = 0.2, high: float = 0.4) -> float:
    if rate < low:
        return scale * 0.7
    if rate > high:
        return scale * 1.3
    return scale


def run_chain(data: VarData, config: SamplerConfig, out_dir=None, warm: dict | None = None,
              progress: bool = False) -> ChainStore:
    """Run one chain and keep every ``thin``-th draw after burn-in.

    With ``out_dir`` frames are streamed to disk; on failure the partial store
    is flushed, marked incomplete and the :class:`ChainError` re-raised.
    """
    rng = np.random.default_rng(int(config.seed))
    n, P, T = data.Y.shape[1], data.P, data.Y.shape[0]
    state = initialize(data, config, rng, warm)
    fields = frame_fields(config.scheme, n, P, T, config.store_omega and config.volatility == "sv")
    store = ChainStore(config.scheme, {"n": n, "P": P, "T": T}, fields, {k: [] for k, _ in fields},
                       int(config.seed), asdict(config), complete=False)
    writer = _FrameWriter(out_dir, store) if out_dir is not None else None
    sampler = GibbsSampler(data, config, state, rng)
    try:
        for it in range(config.iterations):
            state = sampler.step(adapt=it < config.burn_in)
            if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
                vec = _frame_vector(state, fields)
                off = 0
                for k, s in fields:
                    width = int(np.prod(s))
                    store.draws[k].append(vec[off:off + width].reshape(s))
                    off += width
                if writer:
                    writer.append(vec)
            if progress and (it + 1) % 1000 == 0:
                log.info("%s: iteration %d / %d", config.scheme, it + 1, config.iterations)
    except ChainError as exc:
        store.error = str(exc)
        raise
    finally:
        store.draws = {k: np.asarray(v) if len(v) else np.zeros((0,) + s) for (k, s), v
                       in zip(fields, (store.draws[k] for k, _ in fields))}
        store.complete = store.error is None
        if writer:
            writer.close()
    return store


# -- summaries ---------------------------------------------------------------------

def coefficient_kappa(store: ChainStore) -> np.ndarray | None:
    if "lambda_sq" in store.draws:
        return 1.0 / (1.0 + store.draws["lambda_sq"])
    return None


def summarize(store: ChainStore) -> dict:
    """Posterior summaries of a stored chain, as arrays keyed by name."""
    if store.n_frames < MIN_SUMMARY_FRAMES:
        raise ValueError(f"need at least {MIN_SUMMARY_FRAMES} frames, store has {store.n_frames}")
    d = store.draws
    theta = d["theta"]
    q = np.quantile(theta, [0.05, 0.5, 0.95], axis=0)
    out = {
        "scheme": store.scheme,
        "frames": store.n_frames,
        "theta_mean": theta.mean(axis=0),
        "theta_q05": q[0], "theta_q50": q[1], "theta_q95": q[2],
        "psi_mean": d["psi"].mean(axis=0),
        "tau_omega_mean": d["tau_omega"].mean(axis=0),
    }
    kappa = coefficient_kappa(store)
    if kappa is not None:
        prof = ShrinkageProfile(kappa)
        out["kappa_map"] = prof.map_estimate
        out["kappa_hist"] = prof.histogram
        out["kappa_mean"] = kappa.mean(axis=0)
    if "delta" in d:
        inc = d["delta"].mean(axis=0)
        out["inclusion"] = inc
        out["exclusion"] = 1.0 - inc
    if "omega" in d:
        out["omega_quantiles"] = np.quantile(d["omega"], [0.05, 0.5, 0.95], axis=0)
    return out


def write_summary(summary: dict, directory, series_ids=None) -> Path:
    """``summary.json`` plus long-format ``coefficients.csv`` / ``kappa_hist.csv`` / ``omega_quantiles.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, _, P = summary["theta_mean"].shape
    names = list(series_ids) if series_ids is not None else [f"y{i + 1}" for i in range(n)]
    js = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in summary.items()}
    js["series_ids"] = names
    (directory / "summary.json").write_text(json.dumps(js, sort_keys=True) + "\n")

    cols = ["theta_mean", "theta_q05", "theta_q50", "theta_q95"]
    extra = [c for c in ("kappa_map", "kappa_mean", "inclusion", "exclusion") if c in summary]
    lines = [",".join(["equation", "predictor", "lag"] + cols + extra)]
    for i in range(n):
        for j in range(n):
            for k in range(P):
                vals = [f"{summary[c][i, j, k]:.10g}" for c in cols + extra]
                lines.append(",".join([names[i], names[j], str(k + 1)] + vals))
    (directory / "coefficients.csv").write_text("\n".join(lines) + "\n")

    if "kappa_hist" in summary:
        h = summary["kappa_hist"]
        bins = h.shape[0]
        lines = ["equation,predictor,lag,bin_mid,count"]
        for i in range(n):
            for j in range(n):
                for k in range(P):
                    for b in range(bins):
                        lines.append(f"{names[i]},{names[j]},{k + 1},{(b + 0.5) / bins:.4f},{int(h[b, i, j, k])}")
        (directory / "kappa_hist.csv").write_text("\n".join(lines) + "\n")

    if "omega_quantiles" in summary:
        oq = summary["omega_quantiles"]
        lines = ["series,t,q05,q50,q95"]
        for i in range(n):
            for t in range(oq.shape[2]):
                lines.append(f"{names[i]},{t},{oq[0, i, t]:.10g},{oq[1, i, t]:.10g},{oq[2, i, t]:.10g}")
        (directory / "omega_quantiles.csv").write_text("\n".join(lines) + "\n")
    return directory
