"""Command line pipeline: ``simulate``, ``analyze`` and ``moduli`` subcommands.

Configuration comes from INI-style files (section per subcommand plus
``[common]``) with command-line flags taking precedence; the effective
configuration is printable with ``--print-config`` and is recorded next to
every output as ``provenance.json`` so a run can be replayed.  Exit codes:
0 success, 2 estimator did not converge, 3 bad input or configuration.
"""

from __future__ import annotations

import argparse
import configparser
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .curves import MsdCurve
from .errors import ConfigError, DegenerateInput, MsdlabError
from .estimator import SubsampleSpec, optimize
from .rheology import MaterialSpec, UM2_TO_M2, gser, log_slope, mc_moduli, smooth_external_msd
from .simulate import (
    BrownianModel,
    FractionalBrownianModel,
    OrnsteinUhlenbeckModel,
    OuFbmModel,
    RenderSpec,
    simulate_stack,
    true_msd,
    write_trajectories,
)
from .spectral import ddm_uq_baseline, fft_stack, structure_function
from .stackio import (
    CurveTable,
    export_curve,
    export_moduli,
    export_msd,
    normalize,
    read_msd,
    read_stack,
    write_stack,
)

PRESETS = {
    "slow-bm": {"model": "bm", "sigma2": 0.02},
    "fast-bm": {"model": "bm", "sigma2": 2.0},
    "sub-fbm": {"model": "fbm", "sigma2_fbm": 8.0, "alpha": 0.6},
    "super-fbm": {"model": "fbm", "sigma2_fbm": 0.5, "alpha": 1.2},
    "ou": {"model": "ou", "sigma2_ou": 64.0, "rho": 0.95},
    "ou-fbm": {
        "model": "ou-fbm", "sigma2_ou": 9.0, "rho": 0.85,
        "sigma2_fbm": 2.0, "alpha": 0.45,
    },
}

DEFAULTS = {
    "common": {"seed": 0, "threads": 1, "out": ".", "config": None},
    "simulate": {
        "preset": None, "model": None, "sigma2": None, "sigma2_ou": None,
        "rho": None, "sigma2_fbm": None, "alpha": None, "size": 500,
        "frames": 500, "particles": 100, "dt": 1.0, "px_size": 1.0,
        "y_max": 1.0, "sigma_p": 2.0, "noise_b": 0.02, "traj_csv": False,
    },
    "analyze": {
        "input": None, "uq": False, "particles": None, "baseline": None,
        "eps1": 0.001, "eps2": 0.001, "rings": 20, "ring_cut": 0.95, "lags": 6,
        "init_slope_damping": 0.9, "coarse_factor": None,
    },
    "moduli": {
        "msd": None, "temperature": None, "radius_nm": None,
        "draws": 1000, "smooth": "none",
    },
}

_BOOL_KEYS = {"uq", "traj_csv"}
_INT_KEYS = {"seed", "threads", "size", "frames", "particles", "rings", "lags",
             "draws", "coarse_factor"}
_STR_KEYS = {"out", "config", "preset", "model", "baseline", "smooth", "input", "msd"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="msdlab",
        description="Tracking-free MSD estimation from microscopy stacks",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_common(p):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, help="RNG seed (default 0)")
        p.add_argument("--threads", type=int, help="worker thread cap (default 1)")
        p.add_argument("--out", help="output directory (default .)")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective configuration and exit")

    sim = sub.add_parser("simulate", help="generate a synthetic stack + true MSD")
    add_common(sim)
    sim.add_argument("--preset", choices=sorted(PRESETS))
    sim.add_argument("--model", choices=["bm", "ou", "fbm", "ou-fbm"])
    sim.add_argument("--sigma2", type=float, help="diffusion variance (bm)")
    sim.add_argument("--sigma2-ou", type=float, dest="sigma2_ou")
    sim.add_argument("--rho", type=float)
    sim.add_argument("--sigma2-fbm", type=float, dest="sigma2_fbm")
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--size", type=int, help="square frame side (default 500)")
    sim.add_argument("--frames", type=int, help="frame count (default 500)")
    sim.add_argument("--particles", type=int, help="particle count (default 100)")
    sim.add_argument("--dt", type=float, help="seconds per frame (default 1)")
    sim.add_argument("--px-size", type=float, dest="px_size")
    sim.add_argument("--y-max", type=float, dest="y_max")
    sim.add_argument("--sigma-p", type=float, dest="sigma_p")
    sim.add_argument("--noise-b", type=float, dest="noise_b")
    sim.add_argument("--traj-csv", action="store_const", const=True, dest="traj_csv",
                     help="also dump particle,frame,x,y trajectories")

    ana = sub.add_parser("analyze", help="estimate the MSD from a stack")
    add_common(ana)
    ana.add_argument("--input", help="RAWSTACK file to analyze")
    ana.add_argument("--uq", action="store_const", const=True,
                     help="add 95%% confidence bounds")
    ana.add_argument("--particles", type=int,
                     help="effective sample size for uncertainty")
    ana.add_argument("--baseline", choices=["ddm-uq"],
                     help="also emit the direct-inversion baseline")
    ana.add_argument("--eps1", type=float)
    ana.add_argument("--eps2", type=float)
    ana.add_argument("--rings", type=int, help="max subsampled rings (default 20)")
    ana.add_argument("--ring-cut", type=float, dest="ring_cut")
    ana.add_argument("--lags", type=int, help="subsampled lag count (default 6)")
    ana.add_argument("--coarse-factor", type=int, dest="coarse_factor")

    mod = sub.add_parser("moduli", help="convert an MSD curve to moduli")
    add_common(mod)
    mod.add_argument("--msd", help="msd.csv to convert")
    mod.add_argument("--temperature", type=float, help="kelvin")
    mod.add_argument("--radius-nm", type=float, dest="radius_nm",
                     help="probe radius in nanometers")
    mod.add_argument("--draws", type=int, help="Monte Carlo draws (default 1000)")
    mod.add_argument("--smooth", choices=["none", "spline", "poly4"])
    return parser


def _convert(key, raw):
    if key in _BOOL_KEYS:
        return str(raw).strip().lower() in ("1", "true", "yes", "on")
    if key in _INT_KEYS:
        return int(raw)
    if key in _STR_KEYS:
        return str(raw)
    return float(raw)


def load_config_file(path, section):
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}", field="config") from exc
    out = {}
    for sec in ("common", section):
        if parser.has_section(sec):
            for key, raw in parser.items(sec):
                key = key.replace("-", "_")
                try:
                    out[key] = _convert(key, raw)
                except ValueError as exc:
                    raise ConfigError(
                        f"bad value for {sec}.{key}: {raw!r}", field=f"{sec}.{key}"
                    ) from exc
    return out


def effective_config(args: argparse.Namespace) -> dict:
    section = args.subcommand
    cfg = dict(DEFAULTS["common"])
    cfg.update(DEFAULTS[section])
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config, section))
    for key, value in vars(args).items():
        if key in ("subcommand", "print_config"):
            continue
        if value is not None:
            cfg[key] = value
    return cfg


def _print_config(cfg):
    for key in sorted(cfg):
        value = cfg[key]
        print(f"{key} = {'' if value is None else value}")


def _git_commit():
    try:
        root = Path(__file__).resolve().parent
        out = subprocess.run(
            ["git", "rev-parse", "HEAD"], cwd=root, capture_output=True,
            text=True, timeout=5,
        )
        return out.stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        return None


def write_provenance(out_dir: Path, subcommand, cfg):
    payload = {
        "command": subcommand,
        "package": "msdlab",
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "git_commit": _git_commit(),
        "config": {k: v for k, v in cfg.items() if k != "config"},
    }
    with open(out_dir / "provenance.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _build_model(cfg):
    model = cfg.get("model")
    if model is None:
        raise ConfigError("no dynamics model configured", field="model")
    def need(key):
        if cfg.get(key) is None:
            raise ConfigError(f"missing parameter model.{key}", field=f"model.{key}")
        return cfg[key]

    if model == "bm":
        return BrownianModel(sigma2=need("sigma2"))
    if model == "ou":
        return OrnsteinUhlenbeckModel(sigma2=need("sigma2_ou"), rho=need("rho"))
    if model == "fbm":
        return FractionalBrownianModel(sigma2=need("sigma2_fbm"), alpha=need("alpha"))
    if model == "ou-fbm":
        return OuFbmModel(
            sigma2_ou=need("sigma2_ou"), rho=need("rho"),
            sigma2_fbm=need("sigma2_fbm"), alpha=need("alpha"),
        )
    raise ConfigError(f"unknown model {model!r}", field="model")


def cmd_simulate(cfg) -> int:
    if cfg.get("preset"):
        preset = dict(PRESETS[cfg["preset"]])
        for key, value in preset.items():
            if cfg.get(key) is None:
                cfg[key] = value
    model = _build_model(cfg)
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = RenderSpec(
        y_max=cfg["y_max"], sigma_p=cfg["sigma_p"], noise_b=cfg["noise_b"],
        rng_seed=cfg["seed"],
    )
    stack, traj = simulate_stack(
        model, m=cfg["particles"], n1=cfg["size"], n2=cfg["size"],
        n=cfg["frames"], dt_min=cfg["dt"], spec=spec, seed=cfg["seed"],
        px_size=cfg["px_size"],
    )

    write_stack(stack, out_dir / "stack.raw")
    lags = np.arange(1, cfg["frames"]) * cfg["dt"]
    truth = true_msd(model, lags)
    export_curve(
        CurveTable(("lag_time", "msd"), np.column_stack([truth.lag_time, truth.msd])),
        out_dir / "true_msd.csv",
    )
    if cfg["traj_csv"]:
        write_trajectories(traj, out_dir / "trajectories.csv")
    write_provenance(out_dir, "simulate", cfg)
    print(f"wrote {out_dir / 'stack.raw'} ({cfg['size']}x{cfg['size']}x{cfg['frames']})")
    return 0


def cmd_analyze(cfg) -> int:
    if not cfg.get("input"):
        raise ConfigError("no input stack given", field="input")
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    stack = normalize(read_stack(cfg["input"]))
    if stack.degenerate:
        raise DegenerateInput("constant stack carries no dynamics")
    sub = SubsampleSpec(
        eps1=cfg["eps1"], eps2=cfg["eps2"], n_s_max=cfg["rings"],
        a=cfg["ring_cut"], lag_count=cfg["lags"],
        b_init_slope=cfg["init_slope_damping"], coarse_factor=cfg["coarse_factor"],
    )
    spectrum = fft_stack(stack, workers=cfg["threads"])
    t0 = time.perf_counter()
    est = optimize(
        spectrum, sub=sub, uq=cfg["uq"], m_particles=cfg["particles"],
        threads=cfg["threads"],
    )
    elapsed = time.perf_counter() - t0
    export_msd(est.msd, out_dir / "msd.csv")
    if cfg.get("baseline") == "ddm-uq":
        _emit_baseline(spectrum, out_dir, cfg)
    diag = {
        "converged": est.converged,
        "seconds": elapsed,
        "j0": est.j0,
        "selected_rings": est.diagnostics["selected_rings"],
        "selected_lags": est.diagnostics["selected_lags"],
        "stages": est.diagnostics["stages"],
        "noise_b": est.b_est,
    }
    if est.msd.has_bounds:
        diag["m_particles"] = est.diagnostics.get("m_particles")
        diag["sigma_psi"] = list(map(float, est.diagnostics["sigma_psi"]))
    with open(out_dir / "diagnostics.json", "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_provenance(out_dir, "analyze", cfg)
    print(f"wrote {out_dir / 'msd.csv'} ({len(est.msd)} lags, converged={est.converged})")
    return 0 if est.converged else 2


def _emit_baseline(spectrum, out_dir: Path, cfg):
    sf = structure_function(spectrum, lags=np.arange(1, spectrum.n))
    from .estimator import select_rings, subsample_q
    from .spectral import amplitude_estimate

    j0, _ = select_rings(amplitude_estimate(spectrum, 0.0), cfg["eps1"], cfg["eps2"])
    rings = subsample_q(j0, cfg["rings"], cfg["ring_cut"])
    res = ddm_uq_baseline(sf, spectrum, selected_rings=rings)
    reported = res.n_valid >= 3
    msd_col = np.full(res.lag_idx.size, np.nan)
    if reported.any():
        lookup = {t: v for t, v in zip(res.msd.lag_time, res.msd.msd)}
        msd_col[reported] = [lookup[t] for t in res.lag_time[reported]]
    lines = ["lag_time,msd,n_valid"]
    for t, msd_v, nv in zip(res.lag_time, msd_col, res.n_valid):
        cell = "" if np.isnan(msd_v) else format(msd_v, ".17g")
        lines.append(f"{t:.17g},{cell},{nv}")
    (out_dir / "msd_ddmuq.csv").write_text("\n".join(lines) + "\n", encoding="ascii")


def cmd_moduli(cfg) -> int:
    if not cfg.get("msd"):
        raise ConfigError("no MSD curve given", field="msd")
    if cfg.get("temperature") is None:
        raise ConfigError("missing material.temperature", field="material.temperature")
    if cfg.get("radius_nm") is None:
        raise ConfigError("missing material.radius", field="material.radius")
    out_dir = Path(cfg["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    mat = MaterialSpec(temperature=cfg["temperature"], radius=cfg["radius_nm"] * 1e-9)
    curve = read_msd(cfg["msd"])
    smooth = cfg["smooth"]
    if curve.has_bounds:
        lower = MsdCurve(curve.lag_time, curve.lower * UM2_TO_M2)
        upper = MsdCurve(curve.lag_time, curve.upper * UM2_TO_M2)
        rng = np.random.default_rng(cfg["seed"])
        moduli = mc_moduli(lower, upper, mat, draws=cfg["draws"], rng=rng)
        path_taken = "monte-carlo"
    else:
        point = MsdCurve(curve.lag_time, curve.msd * UM2_TO_M2)
        if smooth != "none":
            point = smooth_external_msd(point, method=smooth)
        moduli = gser(point, log_slope(point), mat)
        path_taken = f"deterministic(smooth={smooth})"
    export_moduli(moduli, out_dir / "moduli.csv")
    diag = {
        "path": path_taken,
        "nonphysical": bool(moduli.nonphysical),
        "n_undefined": int(np.sum(~moduli.defined)),
        "temperature": mat.temperature,
        "radius_m": mat.radius,
    }
    with open(out_dir / "moduli_diagnostics.json", "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_provenance(out_dir, "moduli", cfg)
    print(f"wrote {out_dir / 'moduli.csv'} ({len(moduli)} frequencies)")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = effective_config(args)
        if getattr(args, "print_config", False):
            _print_config(cfg)
            return 0
        if args.subcommand == "simulate":
            return cmd_simulate(cfg)
        if args.subcommand == "analyze":
            return cmd_analyze(cfg)
        return cmd_moduli(cfg)
    except MsdlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
