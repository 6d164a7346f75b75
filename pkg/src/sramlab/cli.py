"""Command-line front end.

    sramlab run NETLIST            run the analyses of a netlist file
    sramlab sram --mode MODE       conventional vs adiabatic SRAM experiment
    sramlab snm --mode hold|read   butterfly curves and static noise margin
    sramlab sweep PARAM --values   sweep one parameter of an experiment

Every command writes CSV/JSON data, PNG figures (unless ``--no-plots``)
and a ``manifest.json`` into the output directory: ``--out``, else
``$SRAMLAB_OUT``, else ``./sramlab-out``. Exit codes: 0 success,
1 simulation or input error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import plotting
from .engine import Integrator, SimConfig, dc_operating_point, dc_sweep, transient
from .errors import NetlistError, SramLabError
from .measure import ChargingLaw, adiabatic_energy_law
from .netlist import DcSweep, Op, Tran, parse_netlist, parse_number
from .rc import linear_ramp_dissipation, ramp_charge
from .snm import SnmMode, butterfly_table, snm_experiment
from .sram import (ACCESS, CONVENTIONAL, ExperimentPlan, Mode, SramCellParams, Supply,
                   SupplyKind, Timing, run_experiment)

ENV_OUT = "SRAMLAB_OUT"
FMT = "{:.8e}"  # 9 significant digits
WAVE_SIGNALS = ("v(VDD)", "v(WL)", "v(BL)", "v(BLB)", "v(A)", "v(B)")

SIZING_KEYS = ("driver_wl", "access_wl", "load_wl", "length", "vdd", "c_bitline",
               "r_driver", "switch_wl", "switch_gate", "r_release", "cell_ratio")
PLAN_KEYS = ("mode", "ramp", "hold", "edge", "dt", "shape", "targets", "initial_bit")
SWEEP_TARGETS = {
    "rc": ("ramp-period", "vdd", "bitline-c"),
    "sram": ("ramp-period", "vdd", "cell-ratio", "bitline-c"),
    "snm": ("vdd", "cell-ratio"),
}


class UsageError(Exception):
    """Bad flag combination detected after argparse accepted the flags."""


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    duration_s: float = 0.0
    notes: list = field(default_factory=list)


class Output:
    """Collects the files a command writes, for the manifest."""

    def __init__(self, root: Path, plots: bool):
        self.root = root
        self.plots = plots
        self.files = []
        root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = self.root / name
        self.files.append(str(p))
        return p

    def csv(self, name, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            for row in rows:
                wr.writerow([_cell(v) for v in row])

    def json(self, name, obj):
        with open(self.path(name), "w") as fh:
            json.dump(_plain(obj), fh, indent=2)
            fh.write("\n")

    def plot(self, name, fn, *args, **kw):
        if self.plots:
            fn(self.path(name), *args, **kw)


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return FMT.format(float(v))
    if v is None:
        return ""
    return v


def _plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):  # enums
        return obj.value
    return obj


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- config files ---------------------------------------------------------

def read_keyvals(path: Path) -> dict:
    """``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for k, raw in enumerate(path.read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{k}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        out[key.lower().replace("-", "_")] = val
    return out


def _number(text: str) -> float:
    try:
        return parse_number(text)
    except NetlistError as exc:
        raise argparse.ArgumentTypeError(exc.message) from None


def cell_params(args, manifest: RunManifest) -> SramCellParams:
    p = SramCellParams()
    vals = {}
    if getattr(args, "sizing", None):
        path = Path(args.sizing)
        if path.is_file():
            vals = read_keyvals(path)
            manifest.inputs[str(path)] = _digest(path)
        else:
            manifest.notes.append(f"sizing file {path} not found; using default sizing")
    unknown = set(vals) - set(SIZING_KEYS)
    if unknown:
        raise UsageError(f"unknown sizing keys: {', '.join(sorted(unknown))}")
    ratio = vals.pop("cell_ratio", None)
    p = replace(p, **{k: parse_number(v) for k, v in vals.items()})
    if ratio is not None:
        p = p.with_cell_ratio(parse_number(ratio))
    if getattr(args, "vdd", None) is not None:
        p = replace(p, vdd=args.vdd)
    if getattr(args, "bitline_c", None) is not None:
        p = replace(p, c_bitline=args.bitline_c)
    if getattr(args, "cell_ratio", None) is not None:
        p = p.with_cell_ratio(args.cell_ratio)
    return p


def experiment_plan(args, manifest: RunManifest) -> ExperimentPlan:
    vals = {}
    if getattr(args, "plan", None):
        path = Path(args.plan)
        if path.is_file():
            vals = read_keyvals(path)
            manifest.inputs[str(path)] = _digest(path)
        else:
            manifest.notes.append(f"plan file {path} not found; using default plan")
    unknown = set(vals) - set(PLAN_KEYS)
    if unknown:
        raise UsageError(f"unknown plan keys: {', '.join(sorted(unknown))}")

    def pick(flag, key, conv=parse_number):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        return conv(vals[key]) if key in vals else None

    timing = {}
    for flag, key in (("ramp_period", "ramp"), ("hold", "hold"), ("edge", "edge"), ("dt", "dt")):
        v = pick(flag, key)
        if v is not None:
            timing[key] = v
    mode = pick("mode", "mode", str) or Mode.WRITE0_WRITE1.value
    shape = pick("shape", "shape", str) or "ramp"
    targets = pick("targets", "targets", str) or "rail+bitlines"
    init = pick("initial_bit", "initial_bit", lambda s: int(s))
    try:
        return ExperimentPlan(Mode(mode), Supply(SupplyKind.ADIABATIC, shape, targets),
                              CONVENTIONAL, Timing(**timing),
                              1 if init is None else int(init))
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def sim_config(args) -> SimConfig:
    kw = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, val = (s.strip() for s in item.split("=", 1))
        fields = {f.name: f for f in dataclasses.fields(SimConfig)}
        if key not in fields:
            raise UsageError(f"unknown simulator option {key!r}")
        if key == "integrator":
            kw[key] = Integrator(val)
        elif key in ("max_newton_iters", "source_steps", "max_time_points"):
            kw[key] = int(val)
        else:
            kw[key] = parse_number(val)
    try:
        return SimConfig(**kw)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- run ------------------------------------------------------------------

def _waveform_rows(w):
    names = list(w.signals)
    cols = [w.time] + [w[n] for n in names]
    return ["time"] + names, zip(*cols)


def cmd_run(args, out: Output, manifest: RunManifest):
    path = Path(args.netlist)
    if not path.is_file():
        raise UsageError(f"netlist file not found: {path}")
    manifest.inputs[str(path)] = _digest(path)
    text = path.read_text()
    try:
        n = parse_netlist(text)
    except NetlistError as exc:
        where = f"{path}:{exc.line}" if exc.line is not None else str(path)
        raise SramLabError(f"{where}: {type(exc).__name__}: {exc.message}") from None
    cfg = sim_config(args)
    manifest.config["sim"] = dataclasses.asdict(cfg)
    if not n.analyses:
        print("warning: no analyses in netlist", file=sys.stderr)
        manifest.notes.append("no analyses")
        return
    stem = path.stem
    counts = {}
    for a in n.analyses:
        kind = {Op: "op", DcSweep: "dc", Tran: "tran"}[type(a)]
        counts[kind] = counts.get(kind, 0) + 1
        tag = kind if counts[kind] == 1 else f"{kind}{counts[kind]}"
        if isinstance(a, Op):
            sol = dc_operating_point(n, cfg)
            rows = [(f"v({k})", v) for k, v in sol.node_voltages.items() if k != "0"]
            rows += [(f"i({k})", v) for k, v in sol.source_currents.items()]
            out.csv(f"{stem}_{tag}.csv", ["signal", "value"], rows)
        elif isinstance(a, DcSweep):
            res = dc_sweep(n, a.source, a.start, a.stop, a.step, cfg)
            nodes = [k for k in res.node_voltages if k != "0"]
            header = [a.source] + [f"v({k})" for k in nodes] + [f"i({s})" for s in res.source_currents]
            cols = [res.values] + [res.v(k) for k in nodes] + list(res.source_currents.values())
            out.csv(f"{stem}_{tag}.csv", header, zip(*cols))
            out.plot(f"{stem}_{tag}.png", plotting.curves, res.values,
                     {f"v({k})": res.v(k) for k in nodes}, f"{a.source} (V)", "voltage (V)",
                     title=n.title)
        else:
            w = transient(n, cfg, a.dt, a.tstop)
            header, rows = _waveform_rows(w)
            out.csv(f"{stem}_{tag}.csv", header, rows)
            volts = [s for s in w.signals if s.startswith("v(")][:8]
            out.plot(f"{stem}_{tag}.png", plotting.waveforms, w, volts, title=n.title)


# -- sram -----------------------------------------------------------------

REPORT_COLUMNS = ("average_power", "dissipated_energy", "supply_energy",
                  "gross_supply_energy", "stored_energy_delta")


def _pct(conv, adia):
    return 100.0 * (conv - adia) / conv if conv else float("nan")


def sram_rows(res):
    rows = []
    for arm in ("conventional", "adiabatic"):
        rep = getattr(res, arm)
        rows.append([arm] + [getattr(rep, c) for c in REPORT_COLUMNS])
    rows.append(["reduction_percent"] + [_pct(getattr(res.conventional, c), getattr(res.adiabatic, c))
                                         for c in REPORT_COLUMNS])
    return rows


def cmd_sram(args, out: Output, manifest: RunManifest):
    p = cell_params(args, manifest)
    plan = experiment_plan(args, manifest)
    cfg = sim_config(args)
    manifest.config.update(params=p, plan=plan, sim=cfg)
    res = run_experiment(plan, p, cfg)
    tag = f"sram_{plan.mode.value}"
    out.csv(f"{tag}_table.csv", ["supply"] + list(REPORT_COLUMNS), sram_rows(res))
    leak = [(d, res.conventional.leakage[d], res.adiabatic.leakage[d],
             _pct(res.conventional.leakage[d], res.adiabatic.leakage[d])) for d in ACCESS]
    out.csv(f"{tag}_leakage.csv", ["device", "conventional", "adiabatic", "reduction_percent"], leak)
    out.json(f"{tag}_table.json", {
        "mode": plan.mode.value,
        "window": res.conventional.window,
        "timing": plan.timing,
        "conventional": res.conventional.to_dict(),
        "adiabatic": res.adiabatic.to_dict(),
        "reduction_percent": res.reduction_percent,
        "leakage": {d: {"conventional": c, "adiabatic": a, "reduction_percent": r}
                    for d, c, a, r in leak},
        "phases": {arm: [dataclasses.asdict(o) for o in run.outcomes]
                   for arm, run in res.runs.items()},
    })
    for arm, run in res.runs.items():
        header, rows = _waveform_rows(run.waveform)
        out.csv(f"{tag}_{arm}_waveform.csv", header, rows)
        out.plot(f"{tag}_{arm}_waveform.png", plotting.waveforms, run.waveform, WAVE_SIGNALS,
                 title=f"{plan.mode.value}, {arm} supply")
    out.plot(f"{tag}_power.png", plotting.comparison, ["conventional", "adiabatic"],
             [res.conventional.average_power, res.adiabatic.average_power],
             "average power (W)", title=f"{plan.mode.value}: {res.reduction_percent:.1f}% lower")
    print(f"{plan.mode.value}: conventional {res.conventional.average_power:.4e} W, "
          f"adiabatic {res.adiabatic.average_power:.4e} W, reduction {res.reduction_percent:.2f}%")


# -- snm ------------------------------------------------------------------

def _snm_outputs(out: Output, res, tag: str):
    out.csv(f"{tag}_butterfly.csv", ["x", "y_curve1", "y_curve2_mirrored"], butterfly_table(res))
    out.json(f"{tag}.json", res.to_dict())
    out.plot(f"{tag}_butterfly.png", plotting.butterfly, res,
             title=f"{res.mode} mode at {res.supply:.3g} V: SNM {res.snm * 1e3:.1f} mV")


def cmd_snm(args, out: Output, manifest: RunManifest):
    p = cell_params(args, manifest)
    cfg = sim_config(args)
    mode = SnmMode(args.mode)
    manifest.config.update(params=p, sim=cfg, mode=mode, step=args.step)
    if args.compare:
        sample = args.supply_sample if args.supply_sample is not None else p.vdd / 2
        arms = {"conventional": p.vdd, "adiabatic": sample}
    else:
        sample = args.supply_sample if args.supply_sample is not None else p.vdd
        arms = {f"{sample:.4g}V": sample}
    results = {}
    for label, level in arms.items():
        try:
            res = snm_experiment(p, mode, level, cfg, step=args.step)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        results[label] = res
        _snm_outputs(out, res, f"snm_{mode.value}_{label}")
        print(f"{mode.value} SNM at {level:.4g} V ({label}): {res.snm * 1e3:.2f} mV"
              + (f"  [{res.diagnostic}]" if res.diagnostic else ""))
    if args.compare:
        conv, adia = results["conventional"], results["adiabatic"]
        rows = [("conventional", conv.supply, conv.snm), ("adiabatic", adia.supply, adia.snm)]
        out.csv(f"snm_{mode.value}_comparison.csv", ["supply", "supply_level", "snm"], rows)
        out.json(f"snm_{mode.value}_comparison.json", {
            "mode": mode.value,
            "conventional": {"supply_level": conv.supply, "snm": conv.snm},
            "adiabatic": {"supply_level": adia.supply, "snm": adia.snm},
            "reduction_percent": _pct(conv.snm, adia.snm),
        })
        out.plot(f"snm_{mode.value}_comparison.png", plotting.comparison,
                 ["conventional", "adiabatic"], [conv.snm, adia.snm], "SNM (V)",
                 title=f"{mode.value}-mode static noise margin")


# -- sweep ----------------------------------------------------------------

RC_DEFAULT = ChargingLaw(1e3, 100e-15, 1.8, 10e-9)


def _sweep_point(target, param, value, args_dict):
    """One sweep point; module-level so worker processes can run it."""
    if target == "rc":
        law = RC_DEFAULT
        law = {"ramp-period": replace(law, t_ramp=value), "vdd": replace(law, vdd=value),
               "bitline-c": replace(law, c=value)}[param]
        if args_dict.get("ramp_period") is not None and param != "ramp-period":
            law = replace(law, t_ramp=args_dict["ramp_period"])
        res = ramp_charge(law)
        return {"t_ramp": law.t_ramp, "dissipated_energy": res.dissipated,
                "law_energy": adiabatic_energy_law(law),
                "exact_energy": linear_ramp_dissipation(law),
                "supply_energy": res.supply}
    ns = argparse.Namespace(**args_dict)
    manifest = RunManifest("sweep", {})
    p = cell_params(ns, manifest)
    if param == "vdd":
        p = replace(p, vdd=value)
    elif param == "cell-ratio":
        p = p.with_cell_ratio(value)
    elif param == "bitline-c":
        p = replace(p, c_bitline=value)
    if target == "snm":
        res = snm_experiment(p, SnmMode(args_dict.get("snm_mode") or "hold"),
                             step=args_dict.get("step", 5e-3))
        return {"snm": res.snm, "snm_lobe_high": res.snm_lobe_high,
                "snm_lobe_low": res.snm_lobe_low}
    plan = experiment_plan(ns, manifest)
    if param == "ramp-period":
        plan = replace(plan, timing=replace(plan.timing, ramp=value))
    res = run_experiment(plan, p)
    return {"conventional_power": res.conventional.average_power,
            "adiabatic_power": res.adiabatic.average_power,
            "conventional_energy": res.conventional.dissipated_energy,
            "adiabatic_energy": res.adiabatic.dissipated_energy,
            "reduction_percent": res.reduction_percent}


def loglog_slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


def cmd_sweep(args, out: Output, manifest: RunManifest):
    if args.param not in SWEEP_TARGETS[args.target]:
        raise UsageError(f"parameter {args.param!r} cannot be swept for target {args.target!r}; "
                         f"choose from {', '.join(SWEEP_TARGETS[args.target])}")
    try:
        values = sorted({parse_number(v) for v in args.values.split(",") if v.strip()})
    except NetlistError as exc:
        raise UsageError(f"--values: {exc.message}") from None
    if not values:
        raise UsageError("--values is empty; give at least one sweep point")
    if any(v <= 0 for v in values):
        raise UsageError("sweep values must be > 0")
    if args.sizing and not Path(args.sizing).is_file():
        manifest.notes.append(f"sizing file {args.sizing} not found; using default sizing")
    elif args.sizing:
        manifest.inputs[args.sizing] = _digest(Path(args.sizing))
    args_dict = {k: v for k, v in vars(args).items() if k != "func"}
    manifest.config.update(target=args.target, param=args.param, values=values)
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_sweep_point, [args.target] * len(values),
                                  [args.param] * len(values), values, [args_dict] * len(values)))
    else:
        results = [_sweep_point(args.target, args.param, v, args_dict) for v in values]
    metrics = list(results[0])
    col = args.param.replace("-", "_")
    tag = f"sweep_{args.target}_{col}"
    out.csv(f"{tag}.csv", [col] + metrics, [[v] + [r[m] for m in metrics]
                                           for v, r in zip(values, results)])
    summary = {"target": args.target, "param": args.param, "points": len(values)}
    if args.target == "rc" and args.param == "ramp-period" and len(values) > 1:
        summary["loglog_slope"] = loglog_slope(values, [r["dissipated_energy"] for r in results])
        print(f"dissipated energy vs ramp period: log-log slope {summary['loglog_slope']:.4f}")
    out.json(f"{tag}_summary.json", summary)
    energy_like = [m for m in metrics if m not in ("t_ramp",)]
    out.plot(f"{tag}.png", plotting.sweep, values, {m: [r[m] for r in results] for m in energy_like},
             args.param, "value", title=f"{args.target} sweep",
             loglog=(args.target == "rc"))


# -- entry point ----------------------------------------------------------

def _add_common(sp):
    sp.add_argument("-o", "--out", help=f"output directory (default ${ENV_OUT} or ./sramlab-out)")
    sp.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="simulator option, e.g. reltol=1e-4 or integrator=be")


def _add_sizing(sp):
    sp.add_argument("--sizing", help="key=value file with cell sizing (missing file: defaults)")
    sp.add_argument("--vdd", type=_number, help="supply voltage (default 1.8)")
    sp.add_argument("--cell-ratio", type=_number, help="driver W/L over access W/L")
    sp.add_argument("--bitline-c", type=_number, help="bitline capacitance (default 10f)")


def _add_plan(sp):
    sp.add_argument("--plan", help="key=value file with experiment plan fields")
    sp.add_argument("--mode", choices=[m.value for m in Mode], default=None,
                    help="experiment: write01, write-hold or write-read (default write01)")
    sp.add_argument("--ramp-period", type=_number,
                    help="adiabatic ramp duration per edge (default 1n)")
    sp.add_argument("--hold", type=_number, help="full-amplitude time per phase (default 1n)")
    sp.add_argument("--edge", type=_number, help="conventional edge time (default 50p)")
    sp.add_argument("--dt", type=_number, help="time step (default edge/5)")
    sp.add_argument("--shape", choices=["ramp", "sine"], help="adiabatic supply shape")
    sp.add_argument("--targets", choices=["rail+bitlines", "rail"],
                    help="what the adiabatic supply drives (default rail+bitlines)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sramlab", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("run", help="run the analyses of a netlist file")
    sp.add_argument("netlist")
    _add_common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sram", help="conventional vs adiabatic SRAM experiment")
    _add_plan(sp)
    _add_sizing(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_sram)

    sp = sub.add_parser("snm", help="static noise margin from butterfly curves")
    sp.add_argument("--mode", choices=[m.value for m in SnmMode], default="hold")
    sp.add_argument("--supply-sample", type=_number,
                    help="supply level for the SNM (default vdd; vdd/2 for the adiabatic arm "
                         "with --compare)")
    sp.add_argument("--compare", action="store_true",
                    help="conventional (vdd) and adiabatic (sampled level) side by side")
    sp.add_argument("--step", type=_number, default=5e-3, help="sweep step (default 5m)")
    _add_sizing(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_snm)

    sp = sub.add_parser("sweep", help="sweep one parameter of an experiment")
    sp.add_argument("param", choices=sorted({p for ps in SWEEP_TARGETS.values() for p in ps}))
    sp.add_argument("--values", required=True, help="comma-separated values, e.g. 10n,20n,40n")
    sp.add_argument("--target", choices=sorted(SWEEP_TARGETS), default="rc")
    sp.add_argument("--snm-mode", choices=[m.value for m in SnmMode], default="hold")
    sp.add_argument("--step", type=_number, default=5e-3, help="SNM sweep step")
    sp.add_argument("--jobs", type=int, default=1, help="worker processes")
    _add_plan(sp)
    _add_sizing(sp)
    _add_common(sp)
    sp.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    root = Path(args.out or os.environ.get(ENV_OUT) or "sramlab-out")
    manifest = RunManifest(" ".join(["sramlab"] + list(sys.argv[1:] if argv is None else argv)),
                           {"out": str(root)})
    start = time.perf_counter()
    try:
        out = Output(root, plots=not args.no_plots)
        args.func(args, out, manifest)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"sramlab: error: {exc}", file=sys.stderr)
        return 2
    except (SramLabError, ValueError) as exc:
        print(f"sramlab: error: {exc}", file=sys.stderr)
        return 1
    manifest.outputs = out.files
    manifest.duration_s = time.perf_counter() - start
    with open(root / "manifest.json", "w") as fh:
        json.dump(_plain(manifest), fh, indent=2)
        fh.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
