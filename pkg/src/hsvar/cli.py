"""Command-line entry point: ``hsvar {simulate,fit,forecast,summarize}``."""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .data import DataError, build_panel, bundled_panel, read_config, series_specs, standardize, write_panel
from .engine import ChainError, ChainStore, SamplerConfig, run_chain, summarize, write_summary
from .experiments import ForecastConfig, SimulationSpec, emit_reports, run_forecast_study, run_simulation_study
from .model import VarData
from .shrinkage import SCHEMES

log = logging.getLogger("hsvar")


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def _overrides(cls, config: dict, prefix: str = "") -> dict:
    """Pick ``prefix + field`` keys from a parsed config and convert them to the field types."""
    out = {}
    for f in fields(cls):
        key = prefix + f.name
        if key in config:
            default = f.default
            try:
                out[f.name] = _coerce(config[key], default)
            except ValueError as exc:
                raise DataError(f"config key {key}: {exc}") from None
    return out


def _load_panel(config: dict, base: Path):
    specs = [k for k in config if k.startswith("series.")]
    if specs:
        panel = build_panel(series_specs(config, base), config.get("start"), config.get("end"))
    else:
        panel = bundled_panel()
    return panel


def cmd_simulate(args) -> int:
    spec = SimulationSpec(design=f"sim{args.design}", seed=args.seed)
    over = {"scheme": args.scheme, "seed": args.seed}
    if args.iterations is not None:
        over["iterations"] = args.iterations
    if args.burn_in is not None:
        over["burn_in"] = args.burn_in
    cfg = SamplerConfig(**over)
    report = run_simulation_study(spec.design, args.scheme, cfg, spec, args.out)
    zeros = (report.true_theta == 0).any()
    if zeros:
        print(f"{report.design} {report.scheme}: share of true zeros with {report.score_name} > 0.9: "
              f"{report.zero_share_above(0.9):.3f}")
    return 0


def cmd_fit(args) -> int:
    config = read_config(args.config)
    base = Path(args.config).resolve().parent
    panel = standardize(_load_panel(config, base))
    over = _overrides(SamplerConfig, config, "sampler.")
    over["scheme"] = args.scheme
    if args.seed is not None:
        over["seed"] = args.seed
    cfg = SamplerConfig(**over)
    P = int(config.get("P", 4))
    out = Path(args.out)
    write_panel(panel, out / "panel.csv")
    store = run_chain(VarData.from_panel(panel.values, P), cfg, out / "chain", progress=args.verbose)
    write_summary(summarize(store), out, panel.series_ids)
    return 0


def cmd_forecast(args) -> int:
    config = read_config(args.config)
    base = Path(args.config).resolve().parent
    panel = _load_panel(config, base)
    over = _overrides(ForecastConfig, config, "forecast.")
    over["schemes"] = args.schemes
    if args.seed is not None:
        over["seed"] = args.seed
    cfg = ForecastConfig(**over)
    bad = [s for s in cfg.schemes if s not in SCHEMES]
    if bad:
        raise DataError(f"unknown schemes {bad}; choose from {SCHEMES}")
    report = run_forecast_study(panel, cfg, progress=args.verbose)
    out = Path(args.out)
    write_panel(panel, out / "panel.csv")
    emit_reports(report, out)
    for s in report.schemes:
        print(f"{s}: average RMSFE ratio vs OLS {report.average_ratio(s):.4f}")
    return 0


def cmd_summarize(args) -> int:
    store = ChainStore.read(args.store)
    if not store.complete:
        log.warning("store %s is incomplete: %s", args.store, store.error)
    out = Path(args.out) if args.out else Path(args.store)
    write_summary(summarize(store), out)
    print(f"{store.scheme}: {store.n_frames} frames summarized into {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsvar", description="Shrinkage-prior VARs with stochastic volatility.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="fit a simulated design and write its shrinkage profile")
    s.add_argument("--design", type=int, choices=(1, 2, 3), required=True)
    s.add_argument("--scheme", choices=("hs", "dm"), required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--iterations", type=int, help="override the 15000-iteration default")
    s.add_argument("--burn-in", type=int, help="override the 5000-iteration default")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit one scheme to a data panel")
    s.add_argument("--scheme", choices=SCHEMES, required=True)
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("forecast", help="rolling one-step-ahead forecast comparison")
    s.add_argument("--schemes", required=True, help="comma-separated, e.g. hs,dm,ridge")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_forecast)

    s = sub.add_parser("summarize", help="posterior summaries of a stored chain")
    s.add_argument("--store", required=True)
    s.add_argument("--out", help="output directory (default: the store directory)")
    s.set_defaults(func=cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (DataError, ChainError, ValueError, OSError) as exc:
        print(f"hsvar {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
