"""Command-line entry point: ``mhsm {simulate,match,bench,cdf}``.

Tuning knobs are passed as ``--param.NAME VALUE`` (or ``NAME = VALUE`` lines
in a ``--config`` file; flags win). ``NAME`` is a field of GenParams,
ClusterParams, IterativeParams, SensorModel or the bench settings; prefix it
with ``gen.``, ``cluster.``, ``iter.``, ``sensor.`` or ``bench.`` when a name
is shared. Angles are radians unless written with a ``deg`` suffix.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

from .baselines import IterativeParams, icp_match, idc_match
from .bench import (MATCHERS, BenchConfig, BenchError, format_summary, load_pairs, pair_seeds,
                    read_records, run_benchmark, summarize, synthetic_log_text, write_cdf,
                    write_moving_average, write_records, write_summary)
from .clustering import ClusteringError, ClusterParams, match_scans
from .hypotheses import GenParams, HypothesisGenerationError
from .scan import CartesianScan
from .simulate import SensorModel

log = logging.getLogger("mhsm")

GROUPS = {"gen": GenParams, "cluster": ClusterParams, "iter": IterativeParams, "sensor": SensorModel}
TOP_KEYS = ("input", "matcher", "pairs", "seed", "out")


class ConfigError(ValueError):
    pass


def _convert(text: str, kind):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        if text.lower().endswith("deg"):
            return math.radians(float(text[:-3]))
        return float(text)
    return text


def read_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def _field_types(cls) -> dict[str, type]:
    hints = {"int": int, "float": float, "bool": bool, "str": str}
    return {f.name: hints.get(str(f.type).split(" ")[0], float) for f in fields(cls)}


def apply_params(*layers: dict[str, str]) -> tuple[dict[str, object], dict[str, object]]:
    """Build parameter objects and bench settings from ``--param`` style settings.

    Later layers override earlier ones; within a layer, group-qualified keys
    are applied after bare names so they win.
    """
    groups = {name: {} for name in GROUPS}
    bench = {}
    bench_types = {"fov": float, "max_range": float, "truth_field": str, "ma_window": int,
                   "workers": int, "warmup": bool}
    ordered = [kv for layer in layers for kv in sorted(layer.items(), key=lambda kv: "." in kv[0])]
    for key, value in ordered:
        prefix, _, name = key.rpartition(".")
        if prefix and prefix not in GROUPS and prefix != "bench":
            raise ConfigError(f"unknown parameter group {prefix!r} in {key!r}")
        hit = False
        if prefix in ("", "bench") and name in bench_types:
            bench[name] = _convert(value, bench_types[name])
            hit = True
        for g, cls in GROUPS.items():
            if prefix not in ("", g):
                continue
            types = _field_types(cls)
            if name in types:
                groups[g][name] = _convert(value, types[name])
                hit = True
        if not hit:
            raise ConfigError(f"unknown parameter {key!r}")
    try:
        objs = {g: cls(**groups[g]) for g, cls in GROUPS.items()}
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return objs, bench


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    common.add_argument("--seed", type=int, help="global seed (default 0)")
    common.add_argument("--pairs", type=int, help="number of scan pairs")
    common.add_argument("--out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mhsm", description=__doc__.split("\n\n")[0],
                                epilog="Extra tuning: --param.NAME VALUE (see module docs).")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="write a synthetic room sequence as a CARMEN log")

    m = sub.add_parser("match", parents=[common], help="match one scan pair and print the candidates")
    m.add_argument("--input", help="CARMEN log (default: synthetic room)")
    m.add_argument("--matcher", action="append", choices=MATCHERS)
    m.add_argument("--pair", type=int, default=0, help="pair index within the sequence")

    b = sub.add_parser("bench", parents=[common], help="run matchers over all pairs, write CSVs")
    b.add_argument("--input", help="CARMEN log (default: synthetic room)")
    b.add_argument("--matcher", action="append", choices=MATCHERS)

    c = sub.add_parser("cdf", parents=[common], help="error CDF from a records CSV")
    c.add_argument("--input", help="records.csv written by bench")
    c.add_argument("--thresholds", help="comma-separated translation thresholds in metres")
    return p


def _split_params(argv: list[str]) -> tuple[list[str], dict[str, str]]:
    rest, params = [], {}
    i = 0
    while i < len(argv):
        arg = argv[i]
        if arg.startswith("--param."):
            key, eq, value = arg[len("--param."):].partition("=")
            if not eq:
                if i + 1 >= len(argv):
                    raise ConfigError(f"{arg} needs a value")
                value = argv[i + 1]
                i += 1
            params[key] = value
        else:
            rest.append(arg)
        i += 1
    return rest, params


def resolve(argv: list[str]) -> tuple[argparse.Namespace, dict[str, object], dict[str, object]]:
    """Parse flags, merge them over the config file, build parameter objects."""
    rest, flag_params = _split_params(argv)
    args = build_parser().parse_args(rest)
    file_values = read_config_file(args.config) if args.config else {}
    file_params = {k: v for k, v in file_values.items() if k not in TOP_KEYS}
    for key in TOP_KEYS:
        if key in file_values and getattr(args, key, None) is None and hasattr(args, key):
            value = file_values[key]
            if key == "matcher":
                value = [v.strip() for v in value.split(",") if v.strip()]
            elif key in ("pairs", "seed"):
                value = int(value)
            setattr(args, key, value)
    if args.seed is None:
        args.seed = 0
    objs, bench = apply_params(file_params, flag_params)
    return args, objs, bench


def _bench_config(args, objs, bench, default_matchers) -> BenchConfig:
    matchers = tuple(dict.fromkeys(getattr(args, "matcher", None) or default_matchers))
    bad = [m for m in matchers if m not in MATCHERS]
    if bad:
        raise ConfigError(f"unknown matcher(s) {bad}")
    return BenchConfig(input=getattr(args, "input", None), matchers=matchers, pairs=args.pairs,
                       seed=args.seed, gen=objs["gen"], cluster=objs["cluster"], iterative=objs["iter"],
                       sensor=objs["sensor"], **bench)


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args, objs, bench) -> int:
    out = _out_dir(args) / "synthetic.log"
    out.write_text(synthetic_log_text(args.pairs, objs["sensor"], args.seed), encoding="utf-8")
    print(out)
    return 0


def cmd_match(args, objs, bench) -> int:
    cfg = _bench_config(args, objs, bench, MATCHERS)
    pairs = load_pairs(replace(cfg, pairs=args.pair + 1))
    if args.pair >= len(pairs) or args.pair < 0:
        raise BenchError(f"pair {args.pair} out of range (sequence has {len(pairs)} pairs)")
    pair = pairs[args.pair]
    cur, ref = CartesianScan(pair.current), CartesianScan(pair.reference)
    t = pair.truth
    print(f"truth      x={t.tx:+.4f} m  y={t.ty:+.4f} m  theta={t.degrees:+.3f} deg")
    for name in cfg.matchers:
        if name == "mhsm":
            gs, cs = pair_seeds(cfg.seed, pair.index)
            try:
                res = match_scans(cur, ref, replace(cfg.gen, rng_seed=gs), replace(cfg.cluster, rng_seed=cs))
            except (HypothesisGenerationError, ClusteringError) as exc:
                print(f"mhsm       failed: {exc}")
                continue
            for rank, (c, w) in enumerate(res.candidates):
                print(f"mhsm #{rank:<3d} x={c.tx:+.4f} m  y={c.ty:+.4f} m  theta={c.degrees:+.3f} deg"
                      f"  weight={w:.3f}")
        else:
            fn = icp_match if name == "icp" else idc_match
            r = fn(cur, ref, params=cfg.iterative)
            e = r.transform
            flag = "converged" if r.converged else ("degraded" if r.degraded else "max iterations")
            print(f"{name:<10} x={e.tx:+.4f} m  y={e.ty:+.4f} m  theta={e.degrees:+.3f} deg"
                  f"  ({r.iterations} iterations, {flag})")
    return 0


def cmd_bench(args, objs, bench) -> int:
    cfg = _bench_config(args, objs, bench, ("mhsm", "idc"))
    records, summaries = run_benchmark(cfg)
    out = _out_dir(args)
    write_records(records, out / "records.csv")
    write_summary(summaries, out / "summary.csv")
    write_cdf(records, out / "cdf.csv")
    write_moving_average(records, cfg.ma_window, out / "moving_average.csv")
    print(format_summary(summaries))
    print(f"wrote {out / 'records.csv'}, summary.csv, cdf.csv, moving_average.csv")
    return 0


def cmd_cdf(args, objs, bench) -> int:
    if not args.input:
        raise ConfigError("cdf needs --input records.csv")
    records = read_records(args.input)
    if not records:
        raise BenchError(f"{args.input}: no records")
    thresholds = None
    if args.thresholds:
        thresholds = [float(t) for t in args.thresholds.split(",") if t.strip()]
    out = _out_dir(args)
    write_cdf(records, out / "cdf.csv", thresholds)
    print(format_summary(summarize(records)))
    print(out / "cdf.csv")
    return 0


COMMANDS = {"simulate": cmd_simulate, "match": cmd_match, "bench": cmd_bench, "cdf": cmd_cdf}


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args, objs, bench = resolve(argv)
    except (ConfigError, OSError) as exc:
        print(f"mhsm: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args, objs, bench)
    except (BenchError, ConfigError, OSError) as exc:
        print(f"mhsm: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
