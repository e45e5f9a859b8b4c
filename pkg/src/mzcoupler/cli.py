"""Command-line entry point: ``mzcoupler <subcommand> [options]``.

Every run writes ``resolved_config.json``, a deterministic ``summary.json``,
a ``metadata.json`` with the wall-clock timestamp, and CSV data files into
``<output_dir>/<subcommand>/``.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cfgmod
from .counting import afterpulse_delay_profile, afterpulse_correct, pnr_response, sample_click_numbers
from .errors import ConfigInvalid, CouplerError, InfeasibleSchedule, NoEdgeFound
from .lock import default_gains, run_closed_loop
from .metrology import allan_deviation, log_taus, noise_spectrum
from .multiplexer import (
    RatioSchedule, balanced_schedule, distribution_fidelity, forward_simulate,
    max_balanced_bins, schedule_for_target, simulate_pulse_train,
)
from .optics import (
    SplitRatio, effective_extinction_db, extinction_ratio_db, phase_for_ratio,
    voltage_for_phase,
)
from .rng import stream
from .series import Histogram, TimeSeries
from .switching import (
    detection_histogram, fig2_scenario, quadrature_compose, quadrature_extract,
    rise_time_10_90,
)

log = logging.getLogger("mzcoupler")

# stream sub-ids so each subcommand draws from its own RNG stream
_STREAM = {"switch": 1, "pnr": 2, "qudit": 3}


def _num(x):
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    return _num(obj)


def dumps(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


class Run:
    """Collects artifacts of one subcommand and writes them out."""

    def __init__(self, name: str, cfg: cfgmod.ExperimentConfig):
        self.name = name
        self.cfg = cfg
        self.dir = cfg.resolved_output_dir() / name
        self.files: dict[str, str] = {}

    def csv(self, filename: str, text: str):
        if "csv" in self.cfg.output_formats:
            self.files[filename] = text

    def finish(self, summary: dict) -> dict:
        self.dir.mkdir(parents=True, exist_ok=True)
        summary = {"subcommand": self.name, "scenario": self.cfg.scenario, **summary}
        (self.dir / "resolved_config.json").write_text(dumps(cfgmod.to_dict(self.cfg)))
        if "json" in self.cfg.output_formats:
            (self.dir / "summary.json").write_text(dumps(summary))
        for fname, text in self.files.items():
            with open(self.dir / fname, "w", newline="\n") as fh:
                fh.write(text)
        meta = {"timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "version": __version__, "files": sorted(self.files)}
        (self.dir / "metadata.json").write_text(dumps(meta))
        return summary


def _rows_csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(_num(v)) if isinstance(v, float) else str(_num(v)) for v in row))
    return "\n".join(lines) + "\n"


def cmd_coupler(cfg):
    run = Run("coupler", cfg)
    c = cfg.coupler
    rows = []
    for pct in range(0, 101, 5):
        t = pct / 100
        try:
            ph = phase_for_ratio(t, c)
            try:
                v = voltage_for_phase(ph, c)
            except CouplerError:
                v = float("nan")
            rows.append((t, ph, v, 1))
        except CouplerError:
            rows.append((t, float("nan"), float("nan"), 0))
    run.csv("coupler_table.csv", _rows_csv(["transmit", "phase_rad", "voltage_v", "reachable"], rows))
    return run.finish({
        "visibility": c.visibility,
        "extinction_db": round(extinction_ratio_db(c), 2),
        "extinction_db_exact": extinction_ratio_db(c),
        "effective_extinction_db": effective_extinction_db(c),
        "min_transmit": c.min_transmit,
        "max_transmit": c.max_transmit,
        "loss_factor": c.loss_factor,
    })


def _suppression_db(opened, closed, f_hi=1.0):
    """Open over closed band power below ``f_hi`` in dB; None if the band holds no bins."""
    o, c = opened.band_power(0, f_hi), closed.band_power(0, f_hi)
    if o <= 0 or c <= 0:
        return None
    return 10 * math.log10(o / c)


def cmd_lock(cfg):
    run = Run("lock", cfg)
    sec = cfg.lock
    gains = sec.gains or default_gains(sec.readout, sec.stretcher, sec.bandwidth_hz, sec.dt_s)
    coupler = replace(cfg.coupler, bias_phase=phase_for_ratio(sec.setpoint_transmit, cfg.coupler))
    res = run_closed_loop(sec.plant, sec.readout, sec.stretcher, gains, coupler,
                          sec.duration_s, sec.dt_s)
    seg = min(sec.segment_len, 1 << (len(res.phase_error).bit_length() - 1))
    closed = noise_spectrum(res.phase_error, seg)
    opened = noise_spectrum(res.open_phase_error, seg)
    ct = noise_spectrum(res.transmittance, seg)
    ot = noise_spectrum(res.open_transmittance, seg)
    taus = log_taus(res.transmittance, per_decade=3)
    adev_c = allan_deviation(res.transmittance, taus)
    adev_o = allan_deviation(res.open_transmittance, taus)
    dec = max(1, sec.csv_decimation)
    for name, ts in (("phase_error.csv", res.phase_error), ("transmittance.csv", res.transmittance),
                     ("actuator.csv", res.actuator), ("open_phase_error.csv", res.open_phase_error)):
        run.csv(name, TimeSeries(ts.dt * dec, ts.values[::dec]).to_csv())
    run.csv("spectrum.csv", _rows_csv(
        ["freq_hz", "closed_phase", "open_phase", "closed_transmittance", "open_transmittance"],
        zip(closed.freq, closed.density, opened.density, ct.density, ot.density)))
    run.csv("allan.csv", _rows_csv(["tau_s", "closed_transmittance", "open_transmittance"],
                                   [(a[0], a[1], b[1]) for a, b in zip(adev_c, adev_o)]))
    return run.finish({
        "gains": {"kp": gains.kp, "ki": gains.ki, "kd": gains.kd, "boost_hz": gains.boost_hz,
                  "loop_bandwidth_hz": gains.loop_bandwidth_hz},
        "closed_phase_std_deg": math.degrees(float(np.std(res.phase_error.values))),
        "open_phase_std_deg": math.degrees(float(np.std(res.open_phase_error.values))),
        "suppression_below_1hz_db": _suppression_db(opened, closed),
        "transmittance_suppression_below_1hz_db": _suppression_db(ot, ct),
        "saturation_events": len(res.saturation_times),
        "first_saturation_s": res.saturation_times[0] if res.saturated else None,
        "unlocked_fraction": float(res.unlocked.values.mean()),
        "allan_transmittance": [[t, s] for t, s in adev_c],
    })


def cmd_switch(cfg):
    run = Run("switch", cfg)
    sec = cfg.switch
    start, end = SplitRatio.parse(sec.start), SplitRatio.parse(sec.end)
    traj = fig2_scenario(start.transmit, end.transmit, cfg.coupler, sec.chain,
                         sec.window_ns, sec.dt_ns)
    hist = detection_histogram(traj, sec.chain, sec.events, stream(cfg.master_seed, _STREAM["switch"]))
    run.csv("histogram.csv", hist.to_csv())
    run.csv("trajectory.csv", TimeSeries(traj.dt * 10, traj.values[::10]).to_csv("time_ns"))
    try:
        traj_rise = rise_time_10_90(traj)
    except NoEdgeFound:
        traj_rise = None
    rises = {}
    for i, port in enumerate(hist.ports):
        try:
            rises[port] = rise_time_10_90(hist, port=i)
        except NoEdgeFound:
            rises[port] = None
    chain = sec.chain
    knowns = [chain.spad_jitter_ns, chain.control_rise_ns, chain.tagger_resolution_ns]
    try:
        extracted = quadrature_extract(sec.measured_rise_ns, knowns)
    except CouplerError:
        extracted = None
    return run.finish({
        "from": str(start), "to": str(end), "events": sec.events,
        "counts": {p: int(hist.port(i).sum()) for i, p in enumerate(hist.ports)},
        "trajectory_rise_ns": traj_rise,
        "histogram_rise_ns": rises,
        "budget": {
            "composed_contributors_ns": quadrature_compose(knowns),
            "extracted_intrinsic_ns": extracted,
            "eom_bandwidth_limit_ns": chain.eom_rise_ns,
        },
    })


def _schedule_summary(sched: RatioSchedule, loop):
    dist = forward_simulate(sched, loop)
    return {"releases": list(sched.releases), "feasible": sched.feasible,
            "probabilities": list(dist.probabilities), "survival": dist.survival,
            "losses": list(dist.losses)}


def cmd_schedule(cfg):
    run = Run("schedule", cfg)
    sec = cfg.schedule
    loop = sec.loop
    n_max, unbounded = max_balanced_bins(loop, sec.cap)
    out = {"eta": loop.cycle_transmission, "min_release": loop.min_release,
           "max_balanced_bins": n_max, "unbounded_at_ideal": unbounded}
    try:
        sched = balanced_schedule(sec.bins, loop)
        out["balanced"] = _schedule_summary(sched, loop)
    except InfeasibleSchedule as exc:
        sched = None
        out["balanced"] = {"error": str(exc)}
    if sec.target is not None:
        tsched, scale = schedule_for_target(sec.target, loop, check=False)
        out["target"] = {**_schedule_summary(tsched, loop), "scale": scale,
                         "fidelity": distribution_fidelity(forward_simulate(tsched, loop), sec.target)}
    if sched is not None:
        dist = forward_simulate(sched, loop)
        run.csv("schedule.csv", _rows_csv(["pass", "release", "probability"],
                                          [(k + 1, r, p) for k, (r, p) in
                                           enumerate(zip(sched.releases, dist.probabilities))]))
    return run.finish(out)


def cmd_pnr(cfg):
    run = Run("pnr", cfg)
    sec = cfg.pnr
    probs = sec.bin_probs or [1.0 / sec.bins] * sec.bins
    resp = pnr_response(probs, sec.efficiency, sec.n_max)
    rng = stream(cfg.master_seed, _STREAM["pnr"])
    tv = []
    for n in range(sec.n_max + 1):
        counts = sample_click_numbers(probs, sec.efficiency, n, sec.trials, rng) if sec.trials else None
        if counts is None:
            tv.append(None)
            continue
        freq = counts / counts.sum()
        tv.append(0.5 * float(np.abs(freq - resp.matrix[:, n]).sum()))
    (run.dir).mkdir(parents=True, exist_ok=True)
    run.files["response_matrix.json"] = dumps(json.loads(resp.to_json()))
    run.csv("response_matrix.csv", _rows_csv(
        ["clicks"] + [f"n{n}" for n in range(sec.n_max + 1)],
        [(m, *row) for m, row in enumerate(resp.matrix.tolist())]))
    return run.finish({"n_bins": len(probs), "efficiency": sec.efficiency,
                       "column_sums": resp.matrix.sum(axis=0).tolist(),
                       "matrix": resp.matrix.tolist(), "trials": sec.trials,
                       "total_variation": tv})


def qudit_run(sec, coupler, master_seed):
    """Analytic and Monte Carlo fidelities for every configured target."""
    loop = sec.loop
    results = []
    prof = None
    for i, target in enumerate(sec.targets):
        sched, scale = schedule_for_target(target, loop)
        analytic = distribution_fidelity(forward_simulate(sched, loop), target)
        n_pulses = max(1, int(round(sec.input_photons / max(sec.mean_photons, 1e-12))))
        hist = simulate_pulse_train(sched, loop, coupler, sec.spad, n_pulses, sec.mean_photons,
                                    stream(master_seed, _STREAM["qudit"], i))
        raw = hist.port(0).astype(float)
        counts = raw
        if sec.afterpulse_correction and sec.spad.afterpulse_prob > 0:
            if prof is None:
                prof = afterpulse_delay_profile(loop.loop_delay_ns, sec.spad, len(target),
                                                click_offset_ns=loop.loop_delay_ns / 2)
            counts = afterpulse_correct(hist, sec.spad.afterpulse_prob, prof)[0].port(0)
        mc = distribution_fidelity(counts, target) if counts.sum() > 0 else 0.0
        results.append({"target": list(target), "releases": list(sched.releases), "scale": scale,
                        "analytic_fidelity": analytic, "monte_carlo_fidelity": mc,
                        "raw_counts": raw.tolist(), "corrected_counts": np.asarray(counts).tolist(),
                        "photons": hist.meta["photons"], "outside_clicks": hist.meta["outside"]})
    return results


def cmd_qudit(cfg):
    run = Run("qudit", cfg)
    results = qudit_run(cfg.qudit, cfg.coupler, cfg.master_seed)
    rows = []
    for i, r in enumerate(results):
        for k, (q, c) in enumerate(zip(r["target"], r["corrected_counts"])):
            rows.append((i, k + 1, q, c))
    run.csv("qudit_bins.csv", _rows_csv(["target_index", "bin", "target", "counts"], rows))
    return run.finish({
        "targets": results,
        "mean_analytic_fidelity": float(np.mean([r["analytic_fidelity"] for r in results])),
        "mean_monte_carlo_fidelity": float(np.mean([r["monte_carlo_fidelity"] for r in results])),
    })


COMMANDS = {"coupler": cmd_coupler, "lock": cmd_lock, "switch": cmd_switch,
            "schedule": cmd_schedule, "pnr": cmd_pnr, "qudit": cmd_qudit}

# flag dest -> dotted config key
FLAG_KEYS = {
    "visibility": "coupler.visibility",
    "v_pi": "coupler.v_pi",
    "duration": "lock.duration_s",
    "bandwidth": "lock.bandwidth_hz",
    "ratio_from": "switch.start",
    "ratio_to": "switch.end",
    "events": "switch.events",
    "bins": None,  # per subcommand
    "eta": None,
    "min_release": None,
    "trials": "pnr.trials",
    "efficiency": "pnr.efficiency",
    "photons": "qudit.input_photons",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mzcoupler", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="master seed")
        sp.add_argument("--out", help=f"output directory (default ${cfgmod.OUTPUT_ENV} or ./runs)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                        help="override any config key, e.g. lock.dt_s=2e-4")
        sp.add_argument("--visibility", type=float)
        return sp

    sp = common(sub.add_parser("coupler", help="static phase/voltage/extinction maps"))
    sp.add_argument("--v-pi", dest="v_pi", type=float)
    sp = common(sub.add_parser("lock", help="closed/open-loop stabilization run"))
    sp.add_argument("--duration", type=float, help="simulated seconds")
    sp.add_argument("--bandwidth", type=float, help="target loop bandwidth, Hz")
    sp = common(sub.add_parser("switch", help="switching histograms and rise time"))
    sp.add_argument("--from", dest="ratio_from", help="initial ratio T:R, e.g. 100:0")
    sp.add_argument("--to", dest="ratio_to", help="final ratio T:R")
    sp.add_argument("--events", type=int)
    for name, hlp in (("schedule", "balanced/target release schedules"),
                      ("qudit", "time-bin qudit preparation")):
        sp = common(sub.add_parser(name, help=hlp))
        sp.add_argument("--eta", type=float, help="cycle transmission")
        sp.add_argument("--min-release", dest="min_release", type=float)
        if name == "schedule":
            sp.add_argument("--bins", type=int)
            sp.add_argument("--target", help="comma-separated target weights")
        else:
            sp.add_argument("--photons", type=int, help="input photons per target")
    sp = common(sub.add_parser("pnr", help="PNR response matrix and Monte Carlo check"))
    sp.add_argument("--bins", type=int)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--efficiency", type=float)
    return p


def resolve(args) -> cfgmod.ExperimentConfig:
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{args.config}: not valid JSON ({exc})") from None
    else:
        data = {}
    if not isinstance(data, dict):
        raise ConfigInvalid("config root must be an object")
    if args.seed is not None:
        data["master_seed"] = args.seed
    if args.out is not None:
        data["output_dir"] = args.out
    section = {"schedule": "schedule", "qudit": "qudit", "pnr": "pnr"}.get(args.command)
    for dest, key in FLAG_KEYS.items():
        val = getattr(args, dest, None)
        if val is None:
            continue
        if key is None:
            key = {"bins": f"{section}.bins", "eta": f"{section}.loop.cycle_transmission",
                   "min_release": f"{section}.loop.min_release"}[dest]
        cfgmod.apply_override(data, key, val)
    if getattr(args, "target", None):
        cfgmod.apply_override(data, "schedule.target",
                              [float(x) for x in args.target.split(",")])
    for item in args.set:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigInvalid(f"--set expects KEY=VALUE, got {item!r}")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        cfgmod.apply_override(data, key.strip(), val)
    return cfgmod.from_dict(data)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        summary = COMMANDS[args.command](cfg)
    except ConfigInvalid as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CouplerError as exc:
        print(f"{args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(dumps(summary))
    return 0


if __name__ == "__main__":
    sys.exit(main())
