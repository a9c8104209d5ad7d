"""Command-line front end.

Every command reads one JSON config (``--config``), writes its artifacts
into ``--out`` and prints a one-line JSON summary.  Exit codes: 0 success,
1 config error, 2 planner or solver error, 3 simulation abort.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .control import CalibrationGrid, CorrectionConfig, PidConfig, PidGains, calibrate_correction, pid_track, single_shot_correct
from .dynamics import SystemParams, kinetic_energy, mechanical_energy
from .errors import ConvergenceError, DomainError, InfeasibleError, SimulationAbort, UndefinedCorrectionError
from .experiments import FIGURES, Cache, Setup
from .planners import ActuatorBounds, KinematicBounds, Protocol, constraint_limited_protocol, min_feasible_tf, sta_inputs
from .robustness import GridSpec, dissipation_scan, initial_error_grid, input_noise_trials, measurement_noise_trials, open_loop_runner, pid_runner
from .simulate import NoiseSpec, SimConfig, integrate
from .timeopt import OcpConfig, solve_time_optimal
from .trajectories import PolynomialProfile

EXIT_OK, EXIT_CONFIG, EXIT_PLANNER, EXIT_ABORT = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


def parse_angle(value, where: str) -> float:
    """Angle in radians from {"value": x, "unit": "deg"|"rad"} or "x deg"."""
    if isinstance(value, dict) and set(value) == {"value", "unit"}:
        number, unit = value["value"], value["unit"]
    elif isinstance(value, str) and len(value.split()) == 2:
        number, unit = value.split()
    else:
        raise ConfigError(f"{where}: angles need a unit tag, e.g. {{'value': 45, 'unit': 'deg'}}")
    try:
        number = float(number)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: angle value is not a number") from exc
    if unit == "deg":
        return math.radians(number)
    if unit == "rad":
        return number
    raise ConfigError(f"{where}: unknown angle unit {unit!r}")


def _build(cls, d: dict | None, where: str, **converted):
    d = dict(d or {})
    names = {f.name for f in fields(cls)}
    unknown = set(d) - names
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    d.update(converted)
    for k, v in d.items():
        if isinstance(v, list):
            d[k] = tuple(v)
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


@dataclass
class RunConfig:
    params: SystemParams
    q0: tuple[float, float]
    qf: tuple[float, float]
    bounds: ActuatorBounds
    kinematic: KinematicBounds
    sim: SimConfig
    protocol: dict
    ocp: OcpConfig
    pid: PidConfig
    correction: dict
    robustness: dict
    scan: dict
    offset: tuple[float, float]
    seed: int
    threads: int = 1
    raw: dict = field(default_factory=dict)

    @property
    def x0(self) -> np.ndarray:
        return np.array([*self.q0, 0.0, 0.0])

    @property
    def x_start(self) -> np.ndarray:
        """Start state including any configured initial offset."""
        x = self.x0
        x[:2] += self.offset
        return x

    def hash(self) -> str:
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def setup(self) -> Setup:
        rb = self.robustness
        s = Setup(
            params=self.params,
            q0=self.q0,
            qf=self.qf,
            bounds=self.bounds,
            kinematic=self.kinematic,
            sim=self.sim,
            ocp=self.ocp,
            pid=self.pid,
            seed=self.seed,
        )
        if "grid" in rb:
            s.grid = _grid(rb["grid"])
        if "n_trials" in rb:
            s.n_input_trials = int(rb["n_trials"])
        if "input_noise" in rb:
            s.input_noise = _noise(rb["input_noise"], "input")
        if "measurement_noise" in rb:
            s.measurement_noise = _noise(rb["measurement_noise"], "measurement")
        return s


def _grid(d: dict) -> GridSpec:
    half_t = parse_angle(d.get("theta_half", {"value": 0.1, "unit": "deg"}), "grid.theta_half")
    try:
        return GridSpec((-half_t, half_t), int(d.get("n_theta", 21)), (-float(d.get("r_half", 0.01)), float(d.get("r_half", 0.01))), int(d.get("n_r", 21)))
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc


def _noise(d: dict, kind: str) -> NoiseSpec:
    d = dict(d)
    if kind == "measurement" and "bounds" in d:
        b = d["bounds"]
        d["bounds"] = [parse_angle(b[0], "noise.bounds[0]"), float(b[1])]
    return _build(NoiseSpec, {"kind": kind, **d}, f"{kind}_noise")


def load_config(raw: dict, seed: int | None = None, dt: float | None = None, threads: int = 1) -> RunConfig:
    """Validate a whole config before any computation."""
    raw = json.loads(json.dumps(raw))  # detach and normalize
    if seed is not None:
        raw["seed"] = seed
    if dt is not None:
        raw.setdefault("sim", {})["dt"] = dt
    known = {"params", "transfer", "bounds", "kinematic_bounds", "sim", "protocol", "ocp", "pid", "correction", "robustness", "scan", "offset", "seed"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
    tr = raw.get("transfer", {})
    q0 = (
        parse_angle(tr.get("theta0", {"value": 0.0, "unit": "rad"}), "transfer.theta0"),
        float(tr.get("r0", 1.0)),
    )
    qf = (
        parse_angle(tr.get("thetaf", {"value": 45.0, "unit": "deg"}), "transfer.thetaf"),
        float(tr.get("rf", 4.0)),
    )
    if q0[1] <= 0 or qf[1] <= 0:
        raise ConfigError("transfer radii must be positive")
    bounds = _build(ActuatorBounds, raw.get("bounds"), "bounds")
    ocp_raw = dict(raw.get("ocp", {}))
    ocp = _build(OcpConfig, ocp_raw, "ocp", bounds=bounds, seed=int(raw.get("seed", 0)))
    pid_raw = dict(raw.get("pid", {}))
    gains = _build(PidGains, pid_raw.pop("gains", None), "pid.gains")
    pid = _build(PidConfig, pid_raw, "pid", gains=gains, bounds=bounds)
    off = raw.get("offset", {})
    offset = (parse_angle(off["theta"], "offset.theta") if "theta" in off else 0.0, float(off.get("r", 0.0)))
    seed_value = int(raw.get("seed", 0))
    if not 0 <= seed_value < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if threads < 1:
        raise ConfigError("--threads must be at least 1")
    cfg = RunConfig(
        params=_build(SystemParams, raw.get("params"), "params"),
        q0=q0,
        qf=qf,
        bounds=bounds,
        kinematic=_build(KinematicBounds, raw.get("kinematic_bounds"), "kinematic_bounds"),
        sim=_build(SimConfig, {**raw.get("sim", {}), "seed": seed_value}, "sim"),
        protocol=dict(raw.get("protocol", {"kind": "sta", "order": "seventh", "t_f": 2.535})),
        ocp=ocp,
        pid=pid,
        correction=dict(raw.get("correction", {})),
        robustness=dict(raw.get("robustness", {})),
        scan=dict(raw.get("scan", {})),
        offset=offset,
        seed=seed_value,
        threads=threads,
        raw=raw,
    )
    _check_protocol_spec(cfg.protocol)
    rb = cfg.robustness
    if rb:
        cfg.setup()  # validates grid and noise sections
        if rb.get("study", "grid") not in ("grid", "input_noise", "measurement_noise"):
            raise ConfigError(f"unknown robustness study {rb.get('study')!r}")
    return cfg


def _check_protocol_spec(spec: dict) -> None:
    kind = spec.get("kind")
    if kind not in ("sta", "sta_min", "constraint_limited", "time_optimal", "file"):
        raise ConfigError(f"unknown protocol kind {kind!r}")
    if kind in ("sta", "sta_min") and spec.get("order", "seventh") not in ("quintic", "seventh"):
        raise ConfigError(f"unknown polynomial order {spec.get('order')!r}")
    if kind == "sta" and not float(spec.get("t_f", 0)) > 0:
        raise ConfigError("protocol.t_f must be positive")
    if kind == "file" and "path" not in spec:
        raise ConfigError("protocol.path is required for kind 'file'")


def build_protocol(cfg: RunConfig) -> Protocol:
    spec = cfg.protocol
    kind = spec["kind"]
    p = cfg.params
    if kind == "sta":
        return sta_inputs(p, PolynomialProfile(spec.get("order", "seventh"), cfg.q0, cfg.qf, float(spec["t_f"])))
    if kind == "sta_min":
        order = spec.get("order", "seventh")
        t_f = min_feasible_tf(p, order, cfg.q0, cfg.qf, cfg.bounds)
        return sta_inputs(p, PolynomialProfile(order, cfg.q0, cfg.qf, t_f))
    if kind == "constraint_limited":
        return constraint_limited_protocol(p, cfg.q0, cfg.qf, cfg.kinematic)
    if kind == "time_optimal":
        return solve_time_optimal(p, cfg.x0, np.array([*cfg.qf, 0.0, 0.0]), cfg.ocp).to_protocol()
    path = Path(spec["path"])
    if not path.exists():
        raise ConfigError(f"protocol file {path} not found")
    try:
        proto = Protocol.from_json(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"protocol file {path}: {exc}") from exc
    if proto.label.startswith("sta_") and "order" in proto.metadata:
        md = proto.metadata
        proto.reference = PolynomialProfile(md["order"], tuple(md["q0"]), tuple(md["qf"]), proto.t_f)
    return proto


# ------------------------------------------------------------------ output


class Emitter:
    """Tracks written files and stamps them with provenance at the end."""

    def __init__(self, out: Path, cfg: RunConfig):
        self.out = out
        self.cfg = cfg
        self.files: list[Path] = []

    def path(self, name: str) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        self.files.append(p)
        return p

    def json(self, name: str, payload: dict) -> Path:
        p = self.path(name)
        with open(p, "w") as fh:
            json.dump(payload, fh, indent=1, default=_jsonable)
        return p

    def provenance(self) -> dict:
        return {"config_hash": self.cfg.hash(), "version": __version__}

    def stamp(self) -> None:
        prov = self.provenance()
        for p in self.files:
            if not p.exists():
                continue
            if p.suffix == ".json":
                with open(p) as fh:
                    d = json.load(fh)
                d["provenance"] = prov
                with open(p, "w") as fh:
                    json.dump(d, fh, indent=1, default=_jsonable)
            elif p.suffix == ".csv":
                text = p.read_text()
                if not text.startswith("#"):
                    p.write_text(f"# config_hash={prov['config_hash']} version={prov['version']}\n" + text)


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _print(payload: dict) -> None:
    print(json.dumps(payload, default=_jsonable))


# ---------------------------------------------------------------- commands


def cmd_plan(cfg: RunConfig, em: Emitter) -> int:
    proto = build_protocol(cfg)
    proto.to_json(em.path(f"{proto.label}_protocol.json"))
    if proto.schedule is not None:
        integrate(cfg.params, cfg.x0, proto.schedule, cfg.sim).to_csv(em.path(f"{proto.label}_trajectory.csv"))
    peak_tau, peak_f = proto.peak_inputs()
    _print({"label": proto.label, "t_f": proto.t_f, "peak_tau": peak_tau, "peak_f": peak_f})
    return EXIT_OK


def cmd_min_tf(cfg: RunConfig, em: Emitter) -> int:
    order = cfg.protocol.get("order", "seventh")
    t_f = min_feasible_tf(cfg.params, order, cfg.q0, cfg.qf, cfg.bounds)
    payload = {"order": order, "t_f": t_f, "bounds": [cfg.bounds.tau_max, cfg.bounds.f_max]}
    em.json("min_tf.json", payload)
    _print(payload)
    return EXIT_OK


def cmd_timeopt(cfg: RunConfig, em: Emitter) -> int:
    sol = solve_time_optimal(cfg.params, cfg.x0, np.array([*cfg.qf, 0.0, 0.0]), cfg.ocp)
    sol.to_protocol().to_json(em.path("time_optimal_protocol.json"), diagnostics=sol.diagnostics())
    integrate(cfg.params, cfg.x0, sol.schedule(), cfg.sim).to_csv(em.path("time_optimal_trajectory.csv"))
    _print({"label": "time_optimal", "t_f": sol.t_f, "saturation_fraction": sol.saturation_fraction, "kkt_residual": sol.kkt_residual})
    return EXIT_OK


def _run_summary(cfg: RunConfig, x, aborted=False, t_fail=None) -> dict:
    x = np.asarray(x, dtype=float)
    return {
        "terminal_state": x.tolist(),
        "E_f": float(mechanical_energy(cfg.params, x)),
        "residual_kinetic": float(kinetic_energy(cfg.params, x)),
        "aborted": aborted,
        "t_fail": t_fail,
    }


def _simulated(cfg: RunConfig, em: Emitter, name: str, run) -> int:
    try:
        rec = run()
    except SimulationAbort as exc:
        if exc.record is not None:
            exc.record.to_csv(em.path(f"{name}.csv"))
            summary = _run_summary(cfg, exc.record.states[-1], True, exc.t_fail)
        else:
            summary = _run_summary(cfg, cfg.x_start, True, exc.t_fail)
        em.json(f"{name}_summary.json", summary)
        _print(summary)
        return EXIT_ABORT
    rec.to_csv(em.path(f"{name}.csv"))
    summary = _run_summary(cfg, rec.states[-1])
    if rec.meta:
        summary["meta"] = rec.meta
    em.json(f"{name}_summary.json", summary)
    _print(summary)
    return EXIT_OK


def cmd_run(cfg: RunConfig, em: Emitter) -> int:
    proto = build_protocol(cfg)
    if proto.schedule is None:
        summary = _run_summary(cfg, cfg.x_start)
        em.json("run_summary.json", summary)
        _print(summary)
        return EXIT_OK
    return _simulated(cfg, em, "run", lambda: integrate(cfg.params, cfg.x_start, proto.schedule, cfg.sim))


def _reference(cfg: RunConfig) -> PolynomialProfile:
    proto = build_protocol(cfg)
    if not isinstance(proto.reference, PolynomialProfile):
        raise ConfigError("this command needs a polynomial STA protocol as its reference")
    return proto.reference


def cmd_pid(cfg: RunConfig, em: Emitter) -> int:
    ref = _reference(cfg)
    noise = _noise(cfg.raw["robustness"]["measurement_noise"], "measurement") if "measurement_noise" in cfg.robustness else None
    return _simulated(cfg, em, "pid", lambda: pid_track(cfg.params, ref, cfg.pid, cfg.x_start, noise, cfg.seed, sim=cfg.sim))


def cmd_correct(cfg: RunConfig, em: Emitter) -> int:
    proto = build_protocol(cfg)
    c = dict(cfg.correction)
    if c.pop("calibrate", False):
        grid = _grid(c.pop("grid", {"n_theta": 5, "n_r": 5}))
        refine = int(c.pop("refine_iters", 200))
        result = calibrate_correction(cfg.params, proto, grid.offsets(), CalibrationGrid(), cfg.sim.dt, refine_iters=refine)
        em.json("calibration.json", result.to_dict())
        if result.config is None:
            _print(result.to_dict())
            return EXIT_PLANNER
        corr = result.config
    else:
        if "t_i_fraction" in c:
            c["t_i"] = float(c.pop("t_i_fraction")) * proto.t_f
        corr = _build(CorrectionConfig, c, "correction")
    rc = _simulated(cfg, em, "correct", lambda: single_shot_correct(cfg.params, proto, corr, cfg.x_start, sim=cfg.sim))
    return rc


def cmd_robustness(cfg: RunConfig, em: Emitter) -> int:
    s = cfg.setup()
    study = cfg.robustness.get("study", "grid")
    label = cfg.robustness.get("controller", "open_loop")
    proto = build_protocol(cfg)
    if study == "grid":
        runner = pid_runner(cfg.params, proto.reference, cfg.pid, cfg.sim.dt) if label == "pid" else open_loop_runner(cfg.params, proto, cfg.sim.dt)
        rep = initial_error_grid(cfg.params, runner, cfg.x0, s.grid, "pid" if label == "pid" else proto.label)
    elif study == "input_noise":
        rep = input_noise_trials(cfg.params, proto, s.n_input_trials, s.input_noise, cfg.seed, cfg.sim.dt)
    else:
        rep = measurement_noise_trials(cfg.params, proto.reference, cfg.pid, int(cfg.robustness.get("n_trials", 200)), s.measurement_noise, cfg.seed, cfg.sim.dt)
    rep.to_json(em.path(f"robustness_{study}.json"))
    rep.to_csv(em.path(f"robustness_{study}.csv"))
    _print({"study": study, "label": rep.label, "MRE": rep.mre, "aborted": rep.aborted})
    return EXIT_OK


def cmd_scan(cfg: RunConfig, em: Emitter) -> int:
    sc = cfg.scan
    prof = _reference(cfg)
    lo1, hi1 = sc.get("B1", [0.0, 200.0])
    lo2, hi2 = sc.get("B2", [0.0, 200.0])
    n = int(sc.get("count", 5))
    modes = sc.get("modes", ["matched", "mismatched"])
    out = {}
    for mode in modes:
        m = dissipation_scan(cfg.params, prof, np.linspace(lo1, hi1, n), np.linspace(lo2, hi2, n), mode, cfg.sim.dt)
        m.to_csv(em.path(f"scan_{mode}.csv"))
        out[mode] = {"max_RE": float(m.re.max()), "RE_low_corner": float(m.re[0, 0]), "RE_high_corner": float(m.re[-1, -1])}
    em.json("scan.json", out)
    _print(out)
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig, em: Emitter, figures: list[str]) -> int:
    cache = Cache(cfg.setup())
    em.out.mkdir(parents=True, exist_ok=True)
    before = set(em.out.iterdir())
    summaries = {}
    for fig in figures:
        summaries[fig] = FIGURES[fig](em.out, cache)
        for h in summaries[fig]["headline"]:
            print(f"{h['status']} {fig} {h['name']}: {h['value']:.6g} (reference {h['reference']})")
    em.files.extend(sorted(set(em.out.iterdir()) - before))
    em.json("reproduce_summary.json", summaries)
    return EXIT_OK


COMMANDS = ("plan", "min-tf", "timeopt", "run", "pid", "correct", "robustness", "scan", "reproduce")


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rtheta", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("figures", nargs="*", help="figure ids for reproduce (fig2..fig6 or all)")
    ap.add_argument("--config", type=Path, help="JSON config file")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--dt", type=float, default=None, help="integration step [s]")
    ap.add_argument("--threads", type=int, default=1, help="worker count (runs are vectorized in one process)")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        raw = {}
        if args.config is not None:
            if not args.config.exists():
                raise ConfigError(f"config file {args.config} not found")
            try:
                raw = json.loads(args.config.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        cfg = load_config(raw, args.seed, args.dt, args.threads)
        figures = args.figures
        if args.command == "reproduce":
            figures = list(FIGURES) if not figures or figures == ["all"] else figures
            bad = [f for f in figures if f not in FIGURES]
            if bad:
                raise ConfigError(f"unknown figures {bad}")
        elif figures:
            raise ConfigError("positional figure ids are only valid for reproduce")
        if cfg.protocol["kind"] == "file" and not Path(cfg.protocol["path"]).exists():
            raise ConfigError(f"protocol file {cfg.protocol['path']} not found")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    em = Emitter(args.out, cfg)
    handlers = {
        "plan": cmd_plan,
        "min-tf": cmd_min_tf,
        "timeopt": cmd_timeopt,
        "run": cmd_run,
        "pid": cmd_pid,
        "correct": cmd_correct,
        "robustness": cmd_robustness,
        "scan": cmd_scan,
    }
    try:
        if args.command == "reproduce":
            rc = cmd_reproduce(cfg, em, figures)
        else:
            rc = handlers[args.command](cfg, em)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        rc = EXIT_CONFIG
    except (InfeasibleError, ConvergenceError, UndefinedCorrectionError, DomainError) as exc:
        print(f"planner error: {exc}", file=sys.stderr)
        rc = EXIT_PLANNER
    except SimulationAbort as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        rc = EXIT_ABORT
    em.stamp()
    return rc


if __name__ == "__main__":
    sys.exit(main())
