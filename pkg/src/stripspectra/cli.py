"""Command-line front end: ``stripspectra <subcommand> --config run.json --out dir``.

Configs are JSON objects::

    {"schema_version": 1,
     "model": {"a": 1.0, "window": [-10, 10], "ds": 0.01, "kdot": ..., "theta_prime": ...},
     "ladder": [[S, ns, nt], ...],
     "tol": 1e-9, "seed": 0,
     "params": {...}}

Unknown keys anywhere are errors. Exit codes: 0 success (including a failed
verdict), 1 configuration error, 2 assumption violation, 3 solver
non-convergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import experiments as ex
from .discretize import Mesh1D, assemble_2d, assemble_effective_1d
from .effective import effective_potential, lambda_profile
from .eigensolve import ConvergenceError, smallest_eigs
from .frames import frenet_frame_2d, frenet_frame_3d, rotation_angle, write_frame_csv
from .io import atomic_write_text, to_json, write_dat, write_json, write_table
from .stripgeom import AssumptionError, check_injectivity, embed

log = logging.getLogger("stripspectra")

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "model", "ladder", "tol", "seed", "params"}

EXIT_OK, EXIT_CONFIG, EXIT_ASSUMPTION, EXIT_CONVERGENCE = 0, 1, 2, 3

PARAMS = {
    "frame": {"kappa_min"},
    "surface": {"t_samples", "min_separation", "param_gap"},
    "spectrum": {"m", "end_condition", "method"},
    "lambda": {"nt", "use_potential_form", "extrapolate"},
    "effective": {"hs", "m", "S"},
    "hardy": {"lambda_nt", "interval", "inner", "neumann_cells", "stability", "plain_tol", "resolvable"},
    "bent": {"s_ladder", "s_rung", "reference_error", "trial"},
    "stability": {"eps_ladder", "untwisted_eps", "tol"},
    "quasimode": {"n_ladder", "eta_factors"},
    "thin-sweep": {"a_ladder", "effective_hs", "slope_window", "ratio_window"},
    "defect": {"a", "z", "samples"},
    "validate": {"flat_threshold", "thin_bound", "require"},
}
NEEDS_LADDER = {"spectrum", "hardy", "bent", "stability", "quasimode", "thin-sweep", "defect"}


class ConfigError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config_hash: str
    tool_version: str
    seed: int
    started: str
    finished: str = ""
    status: int = 0
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def write(self, outdir: Path) -> Path:
        path = outdir / "manifest.json"
        atomic_write_text(path, to_json(asdict(self)) + "\n")
        return path


def _digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_config(path, command: str) -> tuple[dict, bytes]:
    try:
        raw = Path(path).read_bytes()
        cfg = json.loads(raw)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    extra = set(cfg) - TOP_KEYS
    if extra:
        raise ConfigError(f"unknown config keys {sorted(extra)}")
    if cfg.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"schema_version must be {SCHEMA_VERSION}")
    if "model" not in cfg or not isinstance(cfg["model"], dict):
        raise ConfigError("config needs a 'model' object")
    bad = set(cfg.get("params", {})) - PARAMS[command]
    if bad:
        raise ConfigError(f"unknown params for '{command}': {sorted(bad)}")
    if command in NEEDS_LADDER:
        ladder = cfg.get("ladder")
        if not ladder or not all(isinstance(r, list) and len(r) == 3 for r in ladder):
            raise ConfigError("'ladder' must be a non-empty list of [S, ns, nt]")
    return cfg, raw


def study_config(cfg: dict, seed: int | None, threads: int | None) -> ex.StudyConfig:
    return ex.StudyConfig(
        model=cfg["model"],
        ladder=[tuple(r) for r in cfg.get("ladder", [])],
        tol=float(cfg.get("tol", 1e-9)),
        seed=int(cfg.get("seed", 0) if seed is None else seed),
        params=dict(cfg.get("params", {})),
        threads=threads,
    )


# -- subcommands: each returns the list of files written --------------------------------
def cmd_frame(sc: ex.StudyConfig, out: Path) -> list[Path]:
    geo = ex.build_geometry(sc.model)
    if geo.frame is None:
        raise ConfigError("'frame' needs a curve model")
    frame = geo.frame
    files = [out / "frame.csv"]
    write_frame_csv(frame, files[0])
    s = frame.grid.nodes
    info = {"orthonormality_drift": frame.orthonormality_drift(),
            "dim": frame.dim}
    if frame.dim == 3:
        fr, kappa, tau = frenet_frame_3d(geo.curve, float(sc.params.get("kappa_min", 1e-8)))
        ang = rotation_angle(frame.N[:, 0, :], fr[:, 1, :], fr[:, 2, :])
        ang = ang - ang[0]
        tau_int = np.concatenate([[0.0], np.cumsum(0.5 * (tau[1:] + tau[:-1]) * np.diff(s))])
        table = {"s": s, "angle": ang, "torsion_primitive": tau_int, "kappa": kappa, "tau": tau}
        info["max_angle_minus_torsion_primitive"] = float(np.max(np.abs(ang - tau_int)))
    elif frame.dim == 2:
        _, kappa = frenet_frame_2d(geo.curve)
        table = {"s": s, "signed_curvature": kappa, "k1": frame.k.k[:, 0]}
    else:
        table = {"s": s, "kappa": frame.k.kappa}
    write_table(out / "frenet_comparison.csv", list(table), np.column_stack(list(table.values())))
    write_dat(out / "frenet_comparison.dat", table)
    write_json(out / "frame_summary.json", info)
    return files + [out / "frenet_comparison.csv", out / "frenet_comparison.dat", out / "frame_summary.json"]


def cmd_surface(sc: ex.StudyConfig, out: Path) -> list[Path]:
    geo = ex.build_geometry(sc.model)
    if geo.frame is None:
        raise ConfigError("'surface' needs a curve model")
    p = sc.params
    surf = embed(geo.model, geo.frame, geo.twist, int(p.get("t_samples", 21)), geo.curve)
    files = [out / "surface.csv"]
    surf.write_csv(files[0])
    if surf.triangles is not None:
        surf.write_obj(out / "surface.obj")
        files.append(out / "surface.obj")
    rep = check_injectivity(surf, float(p.get("min_separation", 0.1 * geo.model.a)), p.get("param_gap"))
    write_json(out / "injectivity.json", rep.to_dict())
    return files + [out / "injectivity.json"]


def cmd_spectrum(sc: ex.StudyConfig, out: Path) -> list[Path]:
    model = ex.build_model(sc.model)
    mesh = sc.meshes()[-1]
    p = sc.params
    form = assemble_2d(model, mesh, p.get("end_condition", "dirichlet"))
    res = smallest_eigs(form, int(p.get("m", 1)), sc.tol, sc.seed, method=p.get("method", "auto"))
    res.write_json(out / "spectrum.json")
    u = res.eigenvectors[:, 0].reshape(form.shape)
    S, T = np.meshgrid(mesh.s_nodes(form.end_condition), mesh.t_nodes(), indexing="ij")
    table = {"s": S.ravel(), "t": T.ravel(), "u1": u.ravel()}
    write_table(out / "ground_state.csv", list(table), np.column_stack(list(table.values())))
    write_dat(out / "ground_state.dat", table)
    return [out / "spectrum.json", out / "ground_state.csv", out / "ground_state.dat"]


def cmd_lambda(sc: ex.StudyConfig, out: Path) -> list[Path]:
    model = ex.build_model(sc.model)
    p = sc.params
    prof = lambda_profile(model, int(p.get("nt", 200)), bool(p.get("use_potential_form", False)),
                          bool(p.get("extrapolate", True)), sc.threads)
    prof.to_csv(out / "lambda.csv")
    write_dat(out / "lambda.dat", {"s": prof.grid.nodes, "lambda": prof.lam})
    return [out / "lambda.csv", out / "lambda.dat"]


def cmd_effective(sc: ex.StudyConfig, out: Path) -> list[Path]:
    model = ex.build_model(sc.model)
    p = sc.params
    ep = effective_potential(model)
    ep.to_csv(out / "v_eff.csv")
    write_dat(out / "v_eff.dat", {"s": ep.grid.nodes, "v_eff": ep.v_eff})
    lo, hi = model.s_range
    if "S" in p:
        lo, hi = -float(p["S"]), float(p["S"])
    hs = float(p.get("hs", 0.01))
    mesh = Mesh1D(lo, hi, int(round((hi - lo) / hs)) - 1)
    res = smallest_eigs(assemble_effective_1d(model, mesh), int(p.get("m", 3)), sc.tol, sc.seed)
    write_json(out / "effective_spectrum.json",
               {"eigenvalues": res.eigenvalues, "z0": ep.z0, "mesh": mesh.to_dict()})
    return [out / "v_eff.csv", out / "v_eff.dat", out / "effective_spectrum.json"]


def cmd_validate(sc: ex.StudyConfig, out: Path) -> list[Path]:
    rep = ex.assumption_report(sc.model, **{k: sc.params[k] for k in ("flat_threshold", "thin_bound")
                                            if k in sc.params})
    path = out / "assumptions.json"
    rep.write_json(path)
    # every flag is reported; only the required ones decide the exit status
    required = sc.params.get("require", ["ass21_ok"])
    unknown = set(required) - set(rep.flags)
    if unknown:
        raise ConfigError(f"unknown assumption flags {sorted(unknown)}")
    failed = [k for k in required if not rep.flags[k]]
    if failed:
        raise AssumptionError("assumptions violated: " + ", ".join(failed), rep)
    return [path]


def _study(name):
    fn = ex.STUDIES[name]

    def run(sc: ex.StudyConfig, out: Path) -> list[Path]:
        verdict = fn(sc)
        log.info(verdict.line())
        return verdict.write(out)

    return run


COMMANDS = {
    "frame": cmd_frame, "surface": cmd_surface, "spectrum": cmd_spectrum, "lambda": cmd_lambda,
    "effective": cmd_effective, "validate": cmd_validate,
    **{name: _study(name) for name in ("hardy", "bent", "stability", "quasimode", "thin-sweep", "defect")},
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stripspectra", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--quiet", action="store_true")
    return ap


def _threads(arg: int | None) -> int | None:
    if arg is not None:
        return arg
    env = os.environ.get("STRIP_SPECTRA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"STRIP_SPECTRA_THREADS must be an integer, got {env!r}") from None
    return None


def run(command: str, config_path, outdir, seed: int | None = None, threads: int | None = None) -> int:
    """Run one subcommand; returns the exit status."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    raw = b""
    cfg: dict = {}
    outputs: list[Path] = []
    try:
        cfg, raw = load_config(config_path, command)
        sc = study_config(cfg, seed, _threads(threads))
        if command in NEEDS_LADDER:
            sc.meshes()
        outputs = COMMANDS[command](sc, out)
        status = EXIT_OK
    except AssumptionError as exc:
        log.error("assumption violated: %s", exc)
        report = exc.report
        if report is None and cfg.get("model"):
            try:
                report = ex.assumption_report(cfg["model"])
            except (ValueError, KeyError):
                report = None
        path = out / "assumptions.json"
        if report is not None:
            report.write_json(path)
        else:
            write_json(path, {"ok": False, "error": str(exc), "nodes": exc.nodes})
        outputs.append(path)
        status = EXIT_ASSUMPTION
    except ConvergenceError as exc:
        log.error("solver did not converge: %s", exc)
        if exc.result is not None:
            exc.result.write_json(out / "partial_spectrum.json")
            outputs.append(out / "partial_spectrum.json")
        status = EXIT_CONVERGENCE
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        log.error("configuration error: %s", exc)
        status = EXIT_CONFIG
    manifest = RunManifest(
        command=command,
        config_hash=_digest(raw),
        tool_version=__version__,
        seed=int(seed if seed is not None else cfg.get("seed", 0)) if isinstance(cfg, dict) else 0,
        started=started,
        finished=datetime.now(timezone.utc).isoformat(),
        status=status,
        inputs={str(config_path): _digest(raw)},
        outputs=[{"path": p.name, "sha256": _digest(p.read_bytes())} for p in outputs if p.exists()],
        config=cfg,
    )
    manifest.write(out)
    return status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
