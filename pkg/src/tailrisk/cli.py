"""Multi-command front end wiring the library into reproducible batch runs.

Every command writes its outputs plus a manifest.json (command, effective
config, seed, timestamps, output list) into the --out directory, so a run is
reproducible from its manifest alone; the data artifacts of a rerun are
byte-identical. Configuration comes from an optional flat dotted-key file
(``mcmc.epoch_length = 5000``) with command-line flags taking precedence.

Exit codes: 0 success, 1 runtime failure, 2 usage error, 3 invalid
configuration, 4 missing input file.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import data_io, measures, mle, scoring, simulation
from .forecasting import make_mcmc_estimator, make_ml_estimator, rolling_forecast
from .mcmc import McmcConfig, run_mcmc
from .models import ModelFamily, ModelSpec, forecast_one
from .simulation import DgpSpec

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4


class ConfigError(ValueError):
    pass


def parse_config_file(path: Path) -> dict[str, str]:
    """Flat dotted-key config: one ``key = value`` per line, '#' comments."""
    out: dict[str, str] = {}
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        out[key] = value
    return out


class RunConfig:
    """Merged configuration; flags override file values override defaults."""

    def __init__(self, file_values: dict[str, str], flag_values: dict[str, object]):
        self.values: dict[str, object] = dict(file_values)
        for key, val in flag_values.items():
            if val is not None:
                self.values[key] = val

    def get(self, key: str, default=None, cast=None):
        if key not in self.values:
            return default
        val = self.values[key]
        if cast is None or not isinstance(val, str):
            return val
        try:
            if cast is bool:
                return val.strip().lower() in ("1", "true", "yes", "on")
            return cast(val)
        except ValueError:
            raise ConfigError(f"config key {key}={val!r} is not a valid {cast.__name__}")

    def require(self, key: str, cast=None):
        val = self.get(key, default=None, cast=cast)
        if val is None:
            raise ConfigError(f"missing required config key or flag: {key}")
        return val

    def as_manifest(self) -> dict:
        # the destination directory is not computation config
        return {k: self.values[k] for k in sorted(self.values) if k != "out"}


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.require("out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _check_input(path_str: str) -> Path:
    path = Path(path_str)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def write_manifest(out: Path, command: str, cfg: RunConfig, seed: int | None,
                   started: str, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "config": cfg.as_manifest(),
        "seed": seed,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat()


def _mcmc_config(cfg: RunConfig, seed: int) -> McmcConfig:
    return McmcConfig(
        epoch_length=cfg.get("mcmc.epoch_length", 20000, int),
        discard=cfg.get("mcmc.discard", 2000, int),
        sd_change_threshold=cfg.get("mcmc.sd_change_threshold", 0.10, float),
        max_epochs=cfg.get("mcmc.max_epochs", 6, int),
        final_imh_length=cfg.get("mcmc.final_imh_length", 10000, int),
        seed=seed,
    )


def _spec(cfg: RunConfig) -> ModelSpec:
    return ModelSpec(ModelFamily.parse(cfg.require("model")), cfg.get("alpha", 0.01, float))


# --- commands ---------------------------------------------------------------


def cmd_measures(cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(cfg)
    days = data_io.load_intraday(_check_input(cfg.require("intraday")))
    mcfg = measures.MeasureConfig(
        kind=cfg.get("kind", measures.KIND_SSRR),
        freq=cfg.get("freq", 5, int),
        offset=cfg.get("offset", 1, int),
        q=cfg.get("q", 66, int),
        output_scale=cfg.get("scale", "volatility"),
    )
    records = measures.build_measure_series(days, mcfg)
    data_io.write_daily(records, out / "measures.csv")
    outputs = ["measures.csv"]
    if cfg.get("plot", False, bool):
        from . import plots

        plots.plot_daily_series(
            [r.date for r in records], [r.measure for r in records],
            out / "measures.png", label=mcfg.kind,
        )
        outputs.append("measures.png")
    write_manifest(out, "measures", cfg, None, started, outputs)
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(cfg)
    seed = cfg.require("seed", int)
    reps = cfg.get("reps", 1, int)
    alpha = cfg.get("alpha", 0.01, float)
    gamma_trials = cfg.get("gamma_trials", 5000, int)
    dgp = DgpSpec(n=cfg.get("n", 1900, int))
    outputs = []
    rep_seeds = np.random.SeedSequence(seed).generate_state(reps)
    for i, rs in enumerate(rep_seeds):
        spec_i = replace(dgp, seed=int(rs % 2**31))
        sim = simulation.simulate_dgp(spec_i)
        records = simulation.to_daily_records(sim)
        daily_name = f"daily_{i:03d}.csv"
        data_io.write_daily(records, out / daily_name)
        truth = simulation.truth_record(
            spec_i, alpha, sim, ModelFamily.REESCAV_AR,
            gamma_trials=gamma_trials, gamma_seed=int(rs % 2**31),
        )
        exp_gamma0 = simulation.map_truth(spec_i, alpha, ModelFamily.REESCAV_EXP).gamma0
        truth_doc = {
            "alpha": alpha,
            "seed": spec_i.seed,
            "params": {k: v for k, v in truth.params.as_dict().items()},
            "gamma0_exp": exp_gamma0,
            "var_next": truth.var_next,
            "es_next": truth.es_next,
            "var_path": truth.var_path,
            "es_path": truth.es_path,
        }
        truth_name = f"truth_{i:03d}.json"
        data_io.write_report(truth_doc, out / truth_name)
        outputs += [daily_name, truth_name]
    write_manifest(out, "simulate", cfg, seed, started, outputs)
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(cfg)
    seed = cfg.require("seed", int)
    spec = _spec(cfg)
    data = data_io.load_daily(_check_input(cfg.require("data")))
    method = cfg.get("method", "mcmc")
    doc: dict = {
        "model": spec.family.value,
        "alpha": spec.alpha,
        "method": method,
        "measure": cfg.get("measure"),
        "n_obs": len(data),
    }
    if method == "mcmc":
        res = run_mcmc(spec, data, _mcmc_config(cfg, seed))
        doc["params"] = res.posterior_mean.as_dict(spec.family)
        doc["forecast"] = {"var": res.forecast[0], "es": res.forecast[1]}
        doc["epochs_run"] = res.epochs_run
        doc["acceptance_rates"] = res.acceptance_rates
    elif method == "ml":
        fit = mle.fit_ml(spec, data, n_candidates=cfg.get("candidates", None, int), seed=seed)
        var, es = forecast_one(spec, fit.params, data)
        doc["params"] = fit.params.as_dict(spec.family)
        doc["loglik"] = fit.loglik.total
        doc["converged"] = fit.converged
        doc["forecast"] = {"var": var, "es": es}
    else:
        raise ConfigError(f"unknown fit method {method!r}; expected mcmc or ml")
    data_io.write_report(doc, out / "params.json")
    write_manifest(out, "fit", cfg, seed, started, ["params.json"])
    return EXIT_OK


def cmd_forecast(cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(cfg)
    seed = cfg.require("seed", int)
    spec = _spec(cfg)
    data = data_io.load_daily(_check_input(cfg.require("data")))
    window = cfg.require("window", int)
    stride = cfg.get("stride", 25, int)
    method = cfg.get("method", "mcmc")
    if method == "mcmc":
        estimator = make_mcmc_estimator(_mcmc_config(cfg, seed))
    elif method == "ml":
        estimator = make_ml_estimator(n_candidates=cfg.get("candidates", None, int))
    else:
        raise ConfigError(f"unknown forecast method {method!r}; expected mcmc or ml")
    records = rolling_forecast(spec, data, window, estimator, stride=stride, seed=seed)
    data_io.write_forecasts(records, out / "forecasts.csv")
    outputs = ["forecasts.csv"]
    if cfg.get("plot", False, bool):
        from . import plots

        rets, var, es, dates = scoring.align_forecasts(data, records)
        if len(dates):
            plots.plot_forecast_paths(dates, rets, var, es, out / "forecasts.png",
                                      title=f"{spec.family.value} alpha={spec.alpha}")
            outputs.append("forecasts.png")
    write_manifest(out, "forecast", cfg, seed, started, outputs)
    return EXIT_OK


def cmd_backtest(cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(cfg)
    seed = cfg.require("seed", int)
    data = data_io.load_daily(_check_input(cfg.require("data")))
    forecasts = data_io.load_forecasts(_check_input(cfg.require("forecasts")))
    alphas = {f.alpha for f in forecasts}
    if len(alphas) != 1:
        raise ConfigError(f"forecast file mixes alpha levels: {sorted(alphas)}")
    alpha = cfg.get("alpha", alphas.pop(), float)
    rets, var, es, dates = scoring.align_forecasts(data, forecasts)
    if rets.size == 0:
        raise ConfigError("no usable forecasts to backtest")
    report = scoring.backtest(rets, var, es, alpha,
                              vqr_boot=cfg.get("vqr_boot", 1000, int), seed=seed)
    doc = report.to_dict()
    doc["model"] = forecasts[0].model
    doc["n_failed"] = sum(1 for f in forecasts if not f.ok)
    data_io.write_report(doc, out / "report.json")
    outputs = ["report.json"]
    if cfg.get("plot", True, bool):
        from . import plots

        plots.plot_forecast_paths(dates, rets, var, es, out / "report.png",
                                  title=f"{forecasts[0].model} backtest")
        outputs.append("report.png")
    write_manifest(out, "backtest", cfg, seed, started, outputs)
    return EXIT_OK


def cmd_mcs(cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(cfg)
    seed = cfg.require("seed", int)
    data = data_io.load_daily(_check_input(cfg.require("data")))
    paths = cfg.require("forecasts")
    if isinstance(paths, str):
        paths = [p for p in paths.split(",") if p]
    if len(paths) < 2:
        raise ConfigError("mcs needs at least two forecast files")
    losses: dict[str, np.ndarray] = {}
    alpha = None
    for p in paths:
        forecasts = data_io.load_forecasts(_check_input(p))
        alpha = cfg.get("alpha", forecasts[0].alpha, float)
        rets, var, es, _ = scoring.align_forecasts(data, forecasts)
        name = forecasts[0].model
        if name in losses:
            name = f"{name}:{Path(p).stem}"
        losses[name] = scoring.joint_loss_series(rets, var, es, alpha)
    sizes = {len(v) for v in losses.values()}
    if len(sizes) != 1:
        raise ConfigError(f"forecast files cover different day counts: {sorted(sizes)}")
    result = scoring.mcs(
        losses,
        method=cfg.get("method", "R"),
        level=cfg.get("level", 0.90, float),
        n_boot=cfg.get("boot", 1000, int),
        seed=seed,
    )
    data_io.write_report(result.to_dict(), out / "mcs.json")
    write_manifest(out, "mcs", cfg, seed, started, ["mcs.json"])
    return EXIT_OK


def cmd_study(cfg: RunConfig) -> int:
    started = _now()
    out = _out_dir(cfg)
    seed = cfg.require("seed", int)
    mode = cfg.get("mode", "comparison")
    if mode == "recovery":
        outputs = _study_recovery(cfg, out, seed)
    elif mode == "comparison":
        outputs = _study_comparison(cfg, out, seed)
    else:
        raise ConfigError(f"unknown study mode {mode!r}; expected recovery or comparison")
    write_manifest(out, "study", cfg, seed, started, outputs)
    return EXIT_OK


def _study_recovery(cfg: RunConfig, out: Path, seed: int) -> list[str]:
    family = ModelFamily.parse(cfg.get("model", "re-es-caviar-exp"))
    estimator = cfg.get("estimator", "mcmc")
    result = simulation.replication_study(
        family,
        cfg.get("alpha", 0.01, float),
        estimator,
        reps=cfg.get("reps", 50, int),
        seed=seed,
        dgp=DgpSpec(n=cfg.get("n", 1900, int)),
        mcmc_cfg=_mcmc_config(cfg, seed),
        ml_candidates=cfg.get("candidates", None, int),
        gamma_trials=cfg.get("gamma_trials", 5000, int),
        workers=cfg.get("threads", 1, int),
    )
    import csv

    with open(out / "recovery.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "true", "mean", "rmse"])
        for name, true, mean, rmse in result.table_rows():
            w.writerow([name, repr(true), repr(mean), repr(rmse)])
    data_io.write_report(
        {"family": family.value, "estimator": estimator, "reps": result.reps,
         "rows": result.rows},
        out / "recovery.json",
    )
    return ["recovery.csv", "recovery.json"]


def _study_comparison(cfg: RunConfig, out: Path, seed: int) -> list[str]:
    worlds = cfg.get("worlds", 20, int)
    train = cfg.get("train", 750, int)
    test = cfg.get("test", 250, int)
    alpha = cfg.get("alpha", 0.01, float)
    stride = cfg.get("stride", test, int)
    mcfg = McmcConfig(
        epoch_length=cfg.get("mcmc.epoch_length", 3000, int),
        discard=cfg.get("mcmc.discard", 1000, int),
        max_epochs=cfg.get("mcmc.max_epochs", 3, int),
        final_imh_length=cfg.get("mcmc.final_imh_length", 3000, int),
        seed=seed,
    )
    families = list(ModelFamily)
    world_seeds = np.random.SeedSequence(seed).generate_state(worlds)
    rows = []
    losses_by_model: dict[str, list[np.ndarray]] = {f.value: [] for f in families}
    for w, ws in enumerate(world_seeds):
        market = simulation.simulate_market(train + test, seed=int(ws % 2**31))
        data = simulation.to_daily_records(market)
        for fam in families:
            spec = ModelSpec(fam, alpha)
            estimator = make_mcmc_estimator(mcfg)
            records = rolling_forecast(spec, data, train, estimator,
                                       stride=stride, seed=int(ws % 2**31))
            rets, var, es, _ = scoring.align_forecasts(data, records)
            if rets.size:
                series = scoring.joint_loss_series(rets, var, es, alpha)
                losses_by_model[fam.value].append(series)
                row_stats = {
                    "vrate": scoring.vrate(rets, var),
                    "quantile_loss": scoring.quantile_loss(rets, var, alpha),
                    "joint_loss": float(series.sum()),
                }
            else:
                log.warning("world %d: %s produced no usable forecasts", w, fam.value)
                row_stats = {"vrate": math.nan, "quantile_loss": math.nan,
                             "joint_loss": math.nan}
            rows.append({"world": w, "model": fam.value, "n_ok": int(rets.size), **row_stats})
    import csv

    with open(out / "comparison.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["world", "model", "n_ok", "vrate", "quantile_loss", "joint_loss"])
        for row in rows:
            w.writerow([row["world"], row["model"], row["n_ok"], repr(row["vrate"]),
                        repr(row["quantile_loss"]), repr(row["joint_loss"])])

    realized = [f.value for f in families if f.uses_measure]
    plain = [f.value for f in families if not f.uses_measure]
    wins, comparable = 0, 0
    for w in range(worlds):
        world_rows = {r["model"]: r["joint_loss"] for r in rows if r["world"] == w}
        if any(math.isnan(v) for v in world_rows.values()):
            continue
        comparable += 1
        if np.mean([world_rows[m] for m in realized]) <= np.mean([world_rows[m] for m in plain]):
            wins += 1
    pooled = {name: np.concatenate(series) for name, series in losses_by_model.items()
              if len(series) == worlds and min(len(s) for s in series) > 0}
    mcs_doc = None
    if len(pooled) >= 2 and len({v.size for v in pooled.values()}) == 1:
        mcs_doc = scoring.mcs(pooled, method=cfg.get("method", "R"),
                              level=cfg.get("level", 0.90, float),
                              n_boot=cfg.get("boot", 200, int), seed=seed).to_dict()
    summary = {
        "worlds": worlds,
        "comparable_worlds": comparable,
        "realized_win_share": wins / comparable if comparable else math.nan,
        "mean_joint_loss": {
            name: float(np.mean([r["joint_loss"] for r in rows if r["model"] == name]))
            for name in losses_by_model
        },
        "mcs": mcs_doc,
    }
    data_io.write_report(summary, out / "comparison.json")
    outputs = ["comparison.csv", "comparison.json"]
    if cfg.get("plot", True, bool):
        from . import plots

        plots.plot_model_losses(summary["mean_joint_loss"], out / "comparison.png")
        outputs.append("comparison.png")
    return outputs


# --- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tailrisk",
        description="Joint VaR/ES forecasting with realized measures",
    )
    parser.add_argument("--config", help="flat dotted-key config file")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_, flags):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help="output directory")
        for args, kw in flags:
            p.add_argument(*args, **kw)
        return p

    common_seed = (("--seed",), {"type": int, "help": "RNG seed (required for stochastic commands)"})
    add("measures", "build a daily measure series from intraday prices", [
        (("--intraday",), {"help": "intraday CSV path"}),
        (("--kind",), {"help": f"one of {', '.join(measures.ALL_KINDS)}"}),
        (("--freq",), {"type": int}),
        (("--offset",), {"type": int}),
        (("--q",), {"type": int}),
        (("--scale",), {"choices": ["volatility", "variance"]}),
        (("--plot",), {"action": "store_const", "const": True, "default": None}),
    ])
    add("simulate", "generate ground-truth datasets", [
        common_seed,
        (("--reps",), {"type": int}),
        (("--n",), {"type": int}),
        (("--alpha",), {"type": float}),
        (("--gamma-trials",), {"type": int, "dest": "gamma_trials"}),
    ])
    add("fit", "estimate one model on a daily series", [
        common_seed,
        (("--data",), {}),
        (("--model",), {}),
        (("--alpha",), {"type": float}),
        (("--measure",), {"help": "measure tag recorded in the output"}),
        (("--method",), {"choices": ["mcmc", "ml"]}),
        (("--candidates",), {"type": int}),
        (("--epoch-length",), {"type": int, "dest": "mcmc.epoch_length"}),
        (("--max-epochs",), {"type": int, "dest": "mcmc.max_epochs"}),
        (("--imh-length",), {"type": int, "dest": "mcmc.final_imh_length"}),
        (("--discard",), {"type": int, "dest": "mcmc.discard"}),
    ])
    add("forecast", "rolling one-step-ahead forecasts", [
        common_seed,
        (("--data",), {}),
        (("--model",), {}),
        (("--alpha",), {"type": float}),
        (("--method",), {"choices": ["mcmc", "ml"]}),
        (("--window",), {"type": int}),
        (("--stride",), {"type": int}),
        (("--candidates",), {"type": int}),
        (("--epoch-length",), {"type": int, "dest": "mcmc.epoch_length"}),
        (("--max-epochs",), {"type": int, "dest": "mcmc.max_epochs"}),
        (("--imh-length",), {"type": int, "dest": "mcmc.final_imh_length"}),
        (("--discard",), {"type": int, "dest": "mcmc.discard"}),
        (("--plot",), {"action": "store_const", "const": True, "default": None}),
    ])
    add("backtest", "evaluate a forecast file against realized returns", [
        common_seed,
        (("--data",), {}),
        (("--forecasts",), {}),
        (("--alpha",), {"type": float}),
        (("--vqr-boot",), {"type": int, "dest": "vqr_boot"}),
        (("--no-plot",), {"action": "store_const", "const": False, "default": None, "dest": "plot"}),
    ])
    add("mcs", "model confidence set over several forecast files", [
        common_seed,
        (("--data",), {}),
        (("--forecasts",), {"nargs": "+", "help": "two or more forecast CSVs"}),
        (("--method",), {"choices": ["R", "SQ"]}),
        (("--level",), {"type": float}),
        (("--boot",), {"type": int}),
        (("--alpha",), {"type": float}),
    ])
    add("study", "replication experiment or desk-scale model comparison", [
        common_seed,
        (("--mode",), {"choices": ["recovery", "comparison"]}),
        (("--model",), {}),
        (("--estimator",), {"choices": ["mcmc", "ml"]}),
        (("--reps",), {"type": int}),
        (("--n",), {"type": int}),
        (("--worlds",), {"type": int}),
        (("--train",), {"type": int}),
        (("--test",), {"type": int}),
        (("--stride",), {"type": int}),
        (("--alpha",), {"type": float}),
        (("--gamma-trials",), {"type": int, "dest": "gamma_trials"}),
        (("--candidates",), {"type": int}),
        (("--threads",), {"type": int}),
        (("--epoch-length",), {"type": int, "dest": "mcmc.epoch_length"}),
        (("--max-epochs",), {"type": int, "dest": "mcmc.max_epochs"}),
        (("--imh-length",), {"type": int, "dest": "mcmc.final_imh_length"}),
        (("--discard",), {"type": int, "dest": "mcmc.discard"}),
        (("--no-plot",), {"action": "store_const", "const": False, "default": None, "dest": "plot"}),
    ])
    return parser


COMMANDS = {
    "measures": cmd_measures,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "forecast": cmd_forecast,
    "backtest": cmd_backtest,
    "mcs": cmd_mcs,
    "study": cmd_study,
}

_STOCHASTIC = {"simulate", "fit", "forecast", "backtest", "mcs", "study"}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    flag_values = {
        k: v for k, v in vars(args).items() if k not in ("command", "config", "verbose")
    }
    try:
        file_values = parse_config_file(Path(args.config)) if args.config else {}
        cfg = RunConfig(file_values, flag_values)
        if args.command in _STOCHASTIC and cfg.get("seed", None, int) is None:
            raise ConfigError(f"{args.command} is stochastic and requires --seed")
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("unhandled failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
