"""Command-line frontend.

Every subcommand writes one primary output (JSON or CSV) to ``--out`` or to
stdout, and echoes its resolved configuration into it. Module errors exit 1
with an error JSON on stdout; usage errors exit 2.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
import tomli

from . import basket as bk
from . import crop_yield as cy
from . import ingest
from . import oracle
from . import pricing
from . import seasonal
from .model import ModelParams, calibrate, simulate

COMMANDS = ("ingest", "fit", "decompose", "calibrate", "simulate", "price", "oracle", "basket", "classify")


class SpecError(ValueError):
    pass


# --- io helpers ----------------------------------------------------------------

def _np_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialise {type(o).__name__}")


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_np_default) + "\n"


def _emit_text(text: str, out) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(obj, out) -> None:
    _emit_text(dumps(obj), out)


def _config_comment(config: dict) -> str:
    return "# config=" + json.dumps(config, sort_keys=True, default=_np_default) + "\n"


def _read_toml(path) -> dict:
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomli.load(fh)


def _need(spec: dict, key: str, where: str = "spec"):
    if key not in spec:
        raise SpecError(f"{where} is missing key {key!r}")
    return spec[key]


def _opt_float(spec: dict, key: str):
    v = spec.get(key)
    return None if v is None else float(v)


def _resolve(base: Path, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else base / p


def _read_series(path, config: dict) -> ingest.DailySeries:
    """A ``date,temperature`` file, or a raw min/max CSV (reindexed and imputed)."""
    with open(path, newline="", encoding="utf-8") as fh:
        header = next((line for line in fh if not line.startswith("#")), "")
    if "temperature" in next(csv.reader([header]), []):
        return ingest.read_series_csv(path, config.get("station_id"))
    obs = ingest.load_csv(path, config.get("columns"))
    return ingest.prepare_series(obs, int(config.get("k", 5)), config.get("station_id", Path(path).stem))


def _params(path, lam=None) -> ModelParams:
    if path is None:
        raise SpecError("--params is required")
    p = ModelParams.load(path)
    return p if lam is None else p.with_(lam=float(lam))


def _contract(spec: dict) -> pricing.ContractSpec:
    return pricing.ContractSpec(
        str(_need(spec, "index")).upper(), float(_need(spec, "t1")), float(_need(spec, "t2")),
        _opt_float(spec, "threshold"), _opt_float(spec, "strike"), float(spec.get("rate", 0.0)),
        _opt_float(spec, "exercise"))


def _state(spec: dict, params: ModelParams):
    t = float(spec.get("t", 0.0))
    T = spec.get("T")
    return t, float(params.S(t)) if T is None else float(T)


def _basket_model(spec_path) -> tuple[bk.CorrelationModel, dict]:
    spec = _read_toml(spec_path)
    base = Path(spec_path).parent
    files = _need(spec, "params")
    stations = [ModelParams.load(_resolve(base, f)) for f in files]
    omega = _need(spec, "correlation")
    if isinstance(omega, str):
        omega = np.loadtxt(_resolve(base, omega), delimiter=",", ndmin=2)
    cm = bk.CorrelationModel(np.asarray(_need(spec, "weights"), dtype=float), stations,
                             np.asarray(omega, dtype=float), float(spec.get("jitter", 0.0)))
    return cm, spec


def _basket_state(spec: dict, cm: bk.CorrelationModel):
    t = float(spec.get("t", 0.0))
    T = spec.get("T")
    temps = [float(p.S(t)) for p in cm.stations] if T is None else [float(v) for v in T]
    return t, temps


# --- commands --------------------------------------------------------------------

def cmd_ingest(args, config):
    cfg = _read_toml(args.config)
    config["ingest"] = cfg
    obs = ingest.load_csv(args.input, cfg.get("columns"))
    series = ingest.prepare_series(obs, int(cfg.get("k", 5)), cfg.get("station_id", Path(args.input).stem))
    lines = [_config_comment(config), "date,temperature\n"]
    lines += [f"{d.isoformat()},{float(v)!r}\n" for d, v in zip(series.dates, series.values)]
    _emit_text("".join(lines), args.out)


def cmd_fit(args, config):
    cfg = _read_toml(args.config)
    config["ingest"] = cfg
    series = _read_series(args.input, cfg)
    fit = seasonal.fit_seasonal(series)
    p = fit.params
    _emit_json({"config": config, "station_id": series.station_id, "seasonal": p.to_dict(),
                "amplitude_phase": {"A": p.a, "B": p.b, "C": p.amplitude, "phase": p.phase},
                "rmse": fit.rmse, "r2": fit.r2, "n": fit.n}, args.out)


def cmd_decompose(args, config):
    cfg = _read_toml(args.config)
    config["ingest"] = cfg
    series = _read_series(args.input, cfg)
    dec = seasonal.decompose(series)

    def cell(v):
        return "" if not np.isfinite(v) else repr(float(v))

    lines = [_config_comment(config), "date,observed,trend,seasonal,residual\n"]
    for i, d in enumerate(series.dates):
        lines.append(",".join([d.isoformat(), cell(dec.observed[i]), cell(dec.trend[i]),
                               cell(dec.seasonal[i]), cell(dec.residual[i])]) + "\n")
    _emit_text("".join(lines), args.out)


def cmd_calibrate(args, config):
    cfg = _read_toml(args.config)
    config["ingest"] = cfg
    series = _read_series(args.input, cfg)
    fit = seasonal.fit_seasonal(series)
    params = calibrate(series, fit.params, lam=float(cfg.get("lambda", 0.0)),
                       min_obs=int(cfg.get("min_obs", 30)))
    out = params.to_dict()
    out.update({"config": config, "seasonal_rmse": fit.rmse, "n": len(series)})
    _emit_json(out, args.out)


def cmd_simulate(args, config):
    spec = _read_toml(args.spec)
    params = _params(args.params, spec.get("lambda"))
    t0 = float(spec.get("t0", 0.0))
    t_end = float(_need(spec, "t_end"))
    measure = str(spec.get("measure", "P"))
    T0 = _opt_float(spec, "T0")
    antithetic = bool(spec.get("antithetic", False))
    config["simulation"] = {"t0": t0, "t_end": t_end, "measure": measure, "T0": T0,
                            "antithetic": antithetic}
    ps = simulate(params, t0, t_end, args.dt, args.paths, measure=measure, seed=args.seed,
                  T0=T0, antithetic=antithetic, dynamics=args.dynamics)
    lines = [_config_comment(config),
             f"# seed={ps.seed} measure={ps.measure} dynamics={ps.dynamics} dt={ps.dt!r}\n",
             "# params=" + json.dumps(ps.params, sort_keys=True) + "\n",
             ",".join(["t"] + [f"path_{i}" for i in range(ps.paths.shape[0])]) + "\n"]
    for j, t in enumerate(ps.times):
        lines.append(",".join([repr(float(t))] + [repr(float(v)) for v in ps.paths[:, j]]) + "\n")
    _emit_text("".join(lines), args.out)


def cmd_price(args, config):
    spec = _read_toml(args.spec)
    params = _params(args.params, spec.get("lambda"))
    c = _contract(spec)
    state = _state(spec, params)
    report = pricing.price(params, state, c, n=args.paths, seed=args.seed)
    out = report.to_dict()
    out["config"] = config
    _emit_json(out, args.out)


def cmd_oracle(args, config):
    spec = _read_toml(args.spec)
    if "weights" in spec:
        model, spec = _basket_model(args.spec)
        spec = {**spec.get("contract", {}), "t": spec.get("t", 0.0), "T": spec.get("T")}
        state = _basket_state(spec, model)
    else:
        model = _params(args.params, spec.get("lambda"))
        state = _state(spec, model)
    c = _contract(spec)
    est = oracle.mc_price(oracle.payoff_for(c), model, state, n=args.paths, dt=args.dt,
                          seed=args.seed, dynamics=args.dynamics, antithetic=args.antithetic)
    _emit_json({"value": est.mean, "std_error": est.std_error, "method": "mc",
                "estimate": est.to_dict(), "contract": c.to_dict(),
                "state": {"t": state[0], "T": state[1]}, "config": config}, args.out)


def cmd_basket(args, config):
    if args.spec is None:
        raise SpecError("--spec is required")
    cm, spec = _basket_model(args.spec)
    c = _contract(_need(spec, "contract"))
    state = _basket_state(spec, cm)
    if c.strike is not None and c.exercise is not None:
        raise SpecError("basket options are not supported")
    report = bk.basket_cat_futures(cm, state, c) if c.index == "CAT" else bk.basket_gdd_futures(cm, state, c)
    if c.index == "GDD":
        parts = [pricing.gdd_futures(p, (state[0], state[1][i]), c).value
                 for i, p in enumerate(cm.stations)]
        report.inputs["attribution"] = [
            {"station": p.station_id, "weight": float(w), "station_price": f}
            for p, w, f in zip(cm.stations, cm.weights, parts)]
    out = report.to_dict()
    out["config"] = config
    _emit_json(out, args.out)


def _read_yearly(path, columns) -> dict[int, list[float]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    if not rows:
        raise cy.YieldModelError(f"{path}: no rows")
    missing = [c for c in ("year", *columns) if c not in rows[0]]
    if missing:
        raise cy.YieldModelError(f"{path}: missing columns {missing}")
    return {int(r["year"]): [float(r[c]) for c in columns] for r in rows}


def cmd_classify(args, config):
    if args.synthetic:
        data = cy.synthetic_dataset(args.synthetic, seed=args.seed)
    else:
        if args.input is None or args.yields is None:
            raise SpecError("classify needs --input and --yields (or --synthetic)")
        feats = _read_yearly(args.input, cy.FEATURES)
        ylds = _read_yearly(args.yields, ("yield",))
        years = sorted(set(feats) & set(ylds))
        if len(years) < 10:
            raise cy.YieldModelError(f"only {len(years)} years common to features and yields")
        X, _ = ingest.min_max_normalize(np.array([feats[y] for y in years]), cy.FEATURES)
        data = cy.YieldDataset(X, cy.label([ylds[y][0] for y in years]))
    model, metrics, (X_te, y_te) = cy.train_stacking(data, seed=args.seed)
    rows = cy.feature_importance(model, X_te, y_te, n_repeats=args.repeats, seed=args.seed)
    if args.importance:
        cy.write_importance_csv(rows, args.importance)
    _emit_json({"metrics": metrics, "importance": rows, "importance_method": cy.IMPORTANCE_METHOD,
                "manifest": model.manifest, "n_rows": len(data), "config": config}, args.out)


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tempderiv", description="Temperature derivative toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", help="output file (default stdout)")
        p.add_argument("--seed", type=int, default=0)
        for f in flags:
            f(p)
        return p

    def f_input(p):
        p.add_argument("--input", required=p.prog.split()[-1] != "classify")

    def f_config(p):
        p.add_argument("--config", help="TOML: columns, k, station_id, lambda, min_obs")

    def f_spec(p):
        p.add_argument("--spec", help="TOML contract/simulation/basket spec")

    def f_params(p):
        p.add_argument("--params", help="model params JSON (from calibrate)")

    def f_mc(p, paths=100_000):
        p.add_argument("--paths", type=int, default=paths)
        p.add_argument("--dt", type=float, default=0.25)
        p.add_argument("--dynamics", choices=("frozen", "unfrozen"), default="frozen")

    add("ingest", "raw min/max CSV -> daily average series CSV", f_input, f_config)
    add("fit", "seasonal mean fit -> JSON", f_input, f_config)
    add("decompose", "additive decomposition -> CSV", f_input, f_config)
    add("calibrate", "seasonal fit + monthly beta and sigma -> params JSON", f_input, f_config)
    add("simulate", "temperature paths -> CSV", f_spec, f_params,
        lambda p: f_mc(p, paths=100), )
    sub.choices["simulate"].set_defaults(dynamics="unfrozen")
    add("price", "closed-form price -> PriceReport JSON", f_spec, f_params, f_mc)
    add("oracle", "Monte Carlo reference price -> JSON", f_spec, f_params, f_mc,
        lambda p: p.add_argument("--antithetic", action="store_true"))
    add("basket", "basket CAT/GDD futures -> PriceReport JSON", f_spec)
    add("classify", "yield stacking classifier -> metrics JSON", f_input,
        lambda p: p.add_argument("--yields"),
        lambda p: p.add_argument("--importance", help="importance CSV path"),
        lambda p: p.add_argument("--repeats", type=int, default=30),
        lambda p: p.add_argument("--synthetic", type=int, metavar="ROWS",
                                 help="use a synthetic planted-signal dataset"))
    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {k: v for k, v in sorted(vars(args).items())}
    try:
        HANDLERS[args.command](args, config)
    except (ValueError, RuntimeError, OSError, KeyError, tomli.TOMLDecodeError) as exc:
        sys.stdout.write(dumps({"error": {"type": type(exc).__name__, "message": str(exc),
                                          "command": args.command}}))
        return 1
    return 0


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
