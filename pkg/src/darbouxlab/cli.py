"""Command-line front end.

Every run resolves a :class:`RunConfig` (from flags, a JSON ``--config`` file,
or both; flags win), executes one command and writes into the output
directory:

* ``manifest.json``  -- the resolved config (re-runnable with ``--config``),
  the list of data files and a separate ``run`` block carrying the timestamp;
* ``result.json``    -- the numerical summary of the run;
* CSV data files;
* ``plot/*.dat`` two-column curves plus ``plot/index.json`` if plot data is
  requested.

Data files contain no timestamps, so identical configs give bit-identical
data. Errors are printed to stderr as JSON with ``module``, ``operation`` and
``message`` fields and the process exits nonzero (2 for config errors, 1 for
numerical failures).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .core import (
    EDGE,
    Grid,
    PotentialKind,
    PotentialSpec,
    SampledFunction,
    atomic_write_text,
    default_grid,
    sample_potential,
)
from .errors import ConfigValidationError, DarbouxLabError

OUTPUT_ENV = "DARBOUXLAB_OUTPUT_DIR"
COMMANDS = ("spectrum", "darboux", "crum", "ddgr", "compare", "si", "swkb", "tdse", "krein", "scatter")

_DEFAULT_K = [round(0.2 * i, 10) for i in range(1, 21)]

#: per-command options and their defaults; anything else is rejected
OPTION_DEFAULTS: dict[str, dict[str, Any]] = {
    "spectrum": {"levels": 5, "window": None, "tolerance": 1e-9},
    "darboux": {"seed_level": 0, "levels": 4, "force": False},
    "crum": {"seed_levels": [0, 1], "kappas": None, "levels": 4, "force": False},
    "ddgr": {"lambda": [1.0], "levels": 5, "verify": False},
    "compare": {"lambda": 2.0, "k": _DEFAULT_K},
    "si": {"family": "harmonic", "a1": 1.0, "n_max": 4, "wavefunctions": False},
    "swkb": {"family": "harmonic", "a1": 1.0, "n_max": 5},
    "tdse": {
        "kappa": 1.0,
        "k0": 2.0,
        "x0": -5.0,
        "width": 1.0,
        "t_max": 1.0,
        "n_times": 41,
        "strict": True,
    },
    "krein": {
        "source": "profile",
        "profile": "gaussian",
        "jost_csv": None,
        "well_strength": 0.5,
        "r_max": 8.0,
        "n_r": 321,
        "k_cutoff": 40.0,
        "k_points": 4000,
    },
    "scatter": {"k": _DEFAULT_K},
}

#: commands whose natural source is not the harmonic well
DEFAULT_POTENTIAL = {"compare": "poschl_teller", "scatter": "poschl_teller", "tdse": "free"}

_CONFIG_KEYS = {"command", "potential", "grid", "command_options", "output_dir", "emit_plot_data"}
_POTENTIAL_KEYS = {"kind", "parameters", "domain_cut", "samples_csv"}


# -- configuration ------------------------------------------------------------------------


@dataclass
class RunConfig:
    command: str
    potential: dict = field(default_factory=dict)
    grid: dict | None = None
    command_options: dict = field(default_factory=dict)
    output_dir: str | None = None
    emit_plot_data: bool = False

    def resolved(self) -> "RunConfig":
        """Fill defaults and validate; raises :class:`ConfigValidationError`."""
        if self.command not in COMMANDS:
            raise ConfigValidationError(f"unknown command {self.command!r}; choose from {list(COMMANDS)}", operation="config")
        pot = dict(self.potential or {})
        bad = set(pot) - _POTENTIAL_KEYS
        if bad:
            raise ConfigValidationError(f"unknown potential keys {sorted(bad)}", operation="config")
        pot.setdefault("kind", DEFAULT_POTENTIAL.get(self.command, "harmonic"))
        if pot["kind"] == PotentialKind.POSCHL_TELLER.value:
            pot.setdefault("parameters", {"ell": 1.0})
        pot.setdefault("parameters", {})
        pot.setdefault("domain_cut", "full_line")
        if pot["kind"] not in [k.value for k in PotentialKind]:
            raise ConfigValidationError(
                f"unknown potential {pot['kind']!r}; choose from {[k.value for k in PotentialKind]}", operation="config"
            )
        if pot["kind"] == PotentialKind.CUSTOM_SAMPLED.value and not pot.get("samples_csv"):
            raise ConfigValidationError("custom_sampled potentials need samples_csv", operation="config")
        half = pot["domain_cut"] == "half_line"
        grid = dict(self.grid) if self.grid else default_grid(half).to_dict()
        bad = set(grid) - {"x_min", "x_max", "n_points"}
        if bad or len(grid) != 3:
            raise ConfigValidationError("grid needs exactly x_min, x_max, n_points", operation="config")
        defaults = OPTION_DEFAULTS[self.command]
        opts = dict(self.command_options or {})
        unknown = set(opts) - set(defaults)
        if unknown:
            raise ConfigValidationError(
                f"unknown option(s) {sorted(unknown)} for {self.command}; allowed: {sorted(defaults)}", operation="config"
            )
        opts = {**defaults, **opts}
        out = self.output_dir or os.environ.get(OUTPUT_ENV) or str(Path("darbouxlab_out") / self.command)
        return RunConfig(self.command, pot, grid, opts, out, bool(self.emit_plot_data))

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "potential": self.potential,
            "grid": self.grid,
            "command_options": dict(sorted(self.command_options.items())),
            "output_dir": self.output_dir,
            "emit_plot_data": self.emit_plot_data,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if "config" in doc and "command" not in doc:  # a manifest from an earlier run
            doc = doc["config"]
        unknown = set(doc) - _CONFIG_KEYS
        if unknown:
            raise ConfigValidationError(f"unknown config keys {sorted(unknown)}", operation="config")
        if "command" not in doc:
            raise ConfigValidationError("config has no command", operation="config")
        return cls(**doc)


def _build_potential(cfg: RunConfig) -> tuple[SampledFunction, PotentialSpec]:
    pot = cfg.potential
    try:
        grid = Grid(**cfg.grid)
        samples = None
        if pot["kind"] == PotentialKind.CUSTOM_SAMPLED.value:
            samples = SampledFunction.from_csv(Path(pot["samples_csv"]))
        spec = PotentialSpec(pot["kind"], pot["parameters"], pot["domain_cut"], samples)
    except (ValueError, TypeError, OSError) as exc:
        raise ConfigValidationError(str(exc), operation="config") from exc
    return sample_potential(spec, grid), spec


# -- output helpers -----------------------------------------------------------------------


class Artifacts:
    """Collects data files and plot curves for one run, written atomically."""

    def __init__(self, out_dir: Path, plots: bool):
        self.out = out_dir
        self.plots = plots
        self.files: list[str] = []
        self.curves: list[dict] = []

    def text(self, name: str, text: str) -> None:
        atomic_write_text(self.out / name, text)
        self.files.append(name)

    def json(self, name: str, doc: Any) -> None:
        self.text(name, json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")

    def table(self, name: str, columns: dict[str, np.ndarray]) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(columns))
        for row in zip(*columns.values()):
            w.writerow([repr(float(v)) for v in row])
        self.text(name, buf.getvalue())

    def curve(self, name: str, x: np.ndarray, y: np.ndarray, xlabel: str = "x", ylabel: str = "y") -> None:
        if not self.plots:
            return
        lines = [f"# {xlabel} {ylabel}"]
        lines += [f"{float(a)!r} {float(b)!r}" for a, b in zip(x, y) if np.isfinite(b)]
        fname = f"plot/{name}.dat"
        self.text(fname, "\n".join(lines) + "\n")
        self.curves.append({"name": name, "file": fname, "x": xlabel, "y": ylabel})

    def finish_plots(self) -> None:
        if self.plots:
            self.json("plot/index.json", {"curves": self.curves})


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _spectrum(u: SampledFunction, n: int, half_line: bool = False, window=None, tol: float = 1e-9):
    from .eigensolve import SolveConfig, default_window, solve_bound_states

    cfg = SolveConfig(tuple(window) if window else default_window(u, half_line), max_levels=n, half_line=half_line, bisection_tolerance=tol)
    return solve_bound_states(u, cfg, allow_partial=True)


def _energies(levels) -> list[float]:
    return [float(p.energy) for p in levels]


def _csv_potentials(art: Artifacts, name: str, x: np.ndarray, **cols: np.ndarray) -> None:
    art.table(name, {"x": x, **cols})


# -- commands -----------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, art: Artifacts) -> dict:
    from .eigensolve import SolveConfig, default_window, solve_bound_states

    u, spec = _build_potential(cfg)
    o = cfg.command_options
    window = tuple(o["window"]) if o["window"] else default_window(u, spec.half_line)
    scfg = SolveConfig(window, max_levels=int(o["levels"]), bisection_tolerance=float(o["tolerance"]), half_line=spec.half_line)
    levels = solve_bound_states(u, scfg, allow_partial=True)
    cols = {f"psi_{p.index}": p.wavefunction.values for p in levels}
    _csv_potentials(art, "wavefunctions.csv", u.x, potential=u.values, **cols)
    art.curve("potential", u.x, u.values, "x", "u")
    for p in levels:
        art.curve(f"psi_{p.index}", u.x, p.wavefunction.values, "x", "psi")
    return {
        "energies": _energies(levels),
        "levels": [{"n": p.index, "energy": p.energy, "nodes": p.node_count} for p in levels],
        "window": list(window),
        "boundary_condition": scfg.boundary_condition,
    }


def cmd_darboux(cfg: RunConfig, art: Artifacts) -> dict:
    from .darboux import DarbouxSeed, darboux_transform

    u, spec = _build_potential(cfg)
    o = cfg.command_options
    n_cmp = int(o["levels"])
    k = int(o["seed_level"])
    src = _spectrum(u, n_cmp + k + 1, spec.half_line)
    if len(src) <= k:
        from .errors import InsufficientLevelsError

        raise InsufficientLevelsError(f"source has only {len(src)} levels; seed level {k} missing", operation="darboux")
    seed = DarbouxSeed(src[k].wavefunction, src[k].energy, f"psi_{k}")
    v, _ = darboux_transform(u, seed, force=bool(o["force"]))
    partner = _spectrum(v, n_cmp, spec.half_line) if k == 0 else []
    expected = [e for i, e in enumerate(_energies(src)) if i != k][:n_cmp]
    _csv_potentials(art, "potentials.csv", u.x, source=u.values, transformed=v.values)
    art.curve("source", u.x, u.values, "x", "u")
    art.curve("transformed", u.x, v.values, "x", "v")
    out = {
        "seed": {"level": k, "energy": seed.lambda1},
        "source_spectrum": _energies(src),
        "transformed_spectrum": _energies(partner),
        "expected_spectrum": expected,
    }
    if partner:
        m = min(len(partner), len(expected))
        out["max_level_error"] = float(max(abs(a - b) for a, b in zip(_energies(partner)[:m], expected[:m]))) if m else 0.0
    return out


def _cosh_sinh_seeds(u: SampledFunction, kappas):
    from .darboux import DarbouxSeed

    seeds = []
    for j, kap in enumerate(kappas):
        fn = (lambda x, kk=kap: np.cosh(kk * x)) if j % 2 == 0 else (lambda x, kk=kap: np.sinh(kk * x))
        seeds.append(DarbouxSeed.from_callable(u, fn, -float(kap) ** 2, f"{'cosh' if j % 2 == 0 else 'sinh'}[{kap:g}]"))
    return seeds


def cmd_crum(cfg: RunConfig, art: Artifacts) -> dict:
    from .darboux import DarbouxSeed, crum_iterate

    u, spec = _build_potential(cfg)
    o = cfg.command_options
    n_cmp = int(o["levels"])
    if o["kappas"]:
        seeds = _cosh_sinh_seeds(u, o["kappas"])
        src = []
    else:
        idx = [int(i) for i in o["seed_levels"]]
        src = _spectrum(u, max(idx) + 1 + n_cmp, spec.half_line)
        if len(src) <= max(idx):
            from .errors import InsufficientLevelsError

            raise InsufficientLevelsError(f"source has only {len(src)} levels", operation="crum")
        seeds = [DarbouxSeed(src[i].wavefunction, src[i].energy, f"psi_{i}") for i in idx]
    v, _ = crum_iterate(u, seeds, force=bool(o["force"]))
    out_levels = _spectrum(v, n_cmp, spec.half_line)
    _csv_potentials(art, "potentials.csv", u.x, source=u.values, transformed=v.values)
    art.curve("transformed", u.x, v.values, "x", "v")
    return {
        "seeds": [{"id": s.seed_id, "energy": s.lambda1} for s in seeds],
        "source_spectrum": _energies(src),
        "transformed_spectrum": _energies(out_levels),
    }


def cmd_ddgr(cfg: RunConfig, art: Artifacts) -> dict:
    from .families import ddgr_double_darboux_check, ddgr_family

    u, spec = _build_potential(cfg)
    o = cfg.command_options
    lams = o["lambda"] if isinstance(o["lambda"], list) else [o["lambda"]]
    fam = ddgr_family(u, [float(l) for l in lams], half_line=spec.half_line)
    cols = {f"member_{i}": m.potential.values for i, m in enumerate(fam.members)}
    _csv_potentials(art, "members.csv", u.x, source=u.values, **cols)
    gcols = {f"ground_{i}": m.ground_state.values for i, m in enumerate(fam.members)}
    _csv_potentials(art, "ground_states.csv", u.x, **gcols)
    for i, m in enumerate(fam.members):
        art.curve(f"member_{i}", u.x, m.potential.values, "x", "V")
    result: dict = {
        "ground_energy": fam.ground_energy,
        "members": [{"lambda": m.lam, "f": m.checks["f"], "checks": m.checks} for m in fam.members],
    }
    if o["verify"]:
        n = int(o["levels"])
        src = _energies(_spectrum(u, n, spec.half_line))
        result["source_spectrum"] = src
        for entry, m in zip(result["members"], fam.members):
            lev = _energies(_spectrum(m.potential, n, spec.half_line))
            entry["spectrum"] = lev
            entry["drift"] = [abs(a - b) for a, b in zip(lev, src)]
            entry["max_drift"] = max(entry["drift"], default=float("inf")) if len(lev) == len(src) else float("inf")
        dd = ddgr_double_darboux_check(fam)
        result["double_darboux"] = {"members": dd["members"], "failures": dd["failures"]}
    return result


def cmd_compare(cfg: RunConfig, art: Artifacts) -> dict:
    from .families import abraham_moses_transform, compare_schemes, ddgr_family, pursey_transform

    u, _ = _build_potential(cfg)
    o = cfg.command_options
    k = [float(v) for v in (o["k"] or [])]
    lam = o["lambda"]
    if isinstance(lam, (list, tuple)):
        if len(lam) != 1:
            raise ConfigValidationError("compare takes a single lambda", operation="config")
        lam = lam[0]
    lam = float(lam)
    report = compare_schemes(u, lam, k)
    if k:
        for name, entry in report["schemes"].items():
            art.table(f"amplitudes_{name}.csv", {"k": np.array(k), "abs_r": np.array(entry["abs_r"]), "abs_t": np.array(entry["abs_t"])})
            art.curve(f"abs_t_{name}", np.array(k), np.array(entry["abs_t"]), "k", "|T|")
    pots = {
        "ddgr": ddgr_family(u, [lam]).members[0].potential.values,
        "pursey": pursey_transform(u).values,
        "abraham_moses": abraham_moses_transform(u).values,
    }
    _csv_potentials(art, "potentials.csv", u.x, source=u.values, **pots)
    return report


def cmd_scatter(cfg: RunConfig, art: Artifacts) -> dict:
    from .eigensolve import rt_coefficients

    u, _ = _build_potential(cfg)
    k = [float(v) for v in cfg.command_options["k"]]
    sd = rt_coefficients(u, k)
    art.text("amplitudes.csv", sd.to_csv())
    art.curve("abs_t", sd.wavenumbers, sd.abs_t, "k", "|T|")
    art.curve("abs_r", sd.wavenumbers, sd.abs_r, "k", "|R|")
    return {"k": k, "abs_r": sd.abs_r, "abs_t": sd.abs_t, "max_flux_defect": float(np.max(sd.flux_defect(), initial=0.0))}


def cmd_si(cfg: RunConfig, art: Artifacts) -> dict:
    from .shapeinv import get_family, si_spectrum, si_wavefunction

    o = cfg.command_options
    p = get_family(str(o["family"]))
    a1, n_max = float(o["a1"]), int(o["n_max"])
    levels = si_spectrum(p, a1, n_max)
    result = {"family": p.family, "a1": a1, "orbit": p.orbit(a1, n_max), "energies": levels}
    if o["wavefunctions"]:
        grid = Grid(**cfg.grid)
        cols = {f"psi_{n}": si_wavefunction(p, a1, n, grid).values for n in range(n_max + 1)}
        art.table("wavefunctions.csv", {"x": grid.x, **cols})
        for name, v in cols.items():
            art.curve(name, grid.x, v, "x", "psi")
    return result


def cmd_swkb(cfg: RunConfig, art: Artifacts) -> dict:
    from .shapeinv import get_family, swkb_quantization

    o = cfg.command_options
    p = get_family(str(o["family"]))
    a1 = float(o["a1"])
    p.validate(a1)
    W = lambda y: float(p.superpotential(np.array(y, dtype=float), a1))
    energies = []
    for n in range(int(o["n_max"]) + 1):
        energies.append(swkb_quantization(W, n))
    art.table("swkb.csv", {"n": np.arange(len(energies)), "energy": np.array(energies)})
    return {"family": p.family, "a1": a1, "energies": energies}


def cmd_tdse(cfg: RunConfig, art: Artifacts) -> dict:
    from .errors import TdseError
    from .tdse import (
        SEED_TOL,
        SpaceTimeFunction,
        check_reality,
        propagate_tdse,
        static_seed,
        tdse_darboux_forward,
        tdse_darboux_inverse,
        tdse_residual,
    )

    u, _ = _build_potential(cfg)
    o = cfg.command_options
    grid = u.grid
    times = np.linspace(0.0, float(o["t_max"]), int(o["n_times"]))
    x = grid.x
    k0, x0, w = float(o["k0"]), float(o["x0"]), float(o["width"])
    packet = np.exp(-((x - x0) ** 2) / (2 * w * w) + 1j * k0 * x) / (np.pi * w * w) ** 0.25
    psi0 = propagate_tdse(u, SampledFunction(grid, packet), times)
    seed = static_seed(grid, times, float(o["kappa"]))
    seed_res = float(np.max(seed.seed_residual(u))) if times.size > 1 else 0.0
    if seed_res > SEED_TOL:
        raise TdseError(
            f"the cosh seed does not solve the source equation (residual {seed_res:.3g} > {SEED_TOL:g}); "
            "use --potential free or a finer time grid",
            operation="tdse",
        )
    V1, psi1 = tdse_darboux_forward(u, seed, psi0, strict=bool(o["strict"]))
    res = tdse_residual(V1, psi1)
    back = tdse_darboux_inverse(V1, seed, psi1)
    _, again = tdse_darboux_forward(u, seed, back, strict=bool(o["strict"]))
    # forward after inverse is the identity on psi1 (inverse alone is fixed only up to the kernel e^{-chi})
    sl = grid.interior(2 * EDGE)
    diff = np.linalg.norm((again.values - psi1.values)[:, sl], axis=1)
    ref = np.linalg.norm(psi1.values[:, sl], axis=1)
    reality = check_reality(seed)
    v1_0 = np.real(V1.values[0])
    art.table("v1_t0.csv", {"x": x, "V0": u.values, "V1": v1_0})
    art.table(
        "diagnostics.csv",
        {"t": times, "norm_psi0": psi0.norms(), "residual_psi1": res, "round_trip_error": diff / ref},
    )
    art.curve("V1_t0", x, v1_0, "x", "V1")
    art.curve("abs_psi1_final", x, np.abs(psi1.values[-1]), "x", "|psi1|")
    return {
        "max_residual": float(np.max(res)),
        "max_round_trip_error": float(np.max(diff / ref)),
        "reality": reality,
        "max_abs_imag_v1": V1.meta["max_abs_imag"],
        "seed_residual": seed_res,
    }


def cmd_krein(cfg: RunConfig, art: Artifacts) -> dict:
    from . import krein
    from .core import make_grid

    o = cfg.command_options
    kw = {"k_cutoff": float(o["k_cutoff"]), "k_quadrature_points": int(o["k_points"])}
    source = str(o["source"])
    r_grid = make_grid(0.0, float(o["r_max"]), int(o["n_r"]))
    truth = None
    if source == "profile":
        j = krein.named_profile(str(o["profile"]), **kw)
    elif source == "csv":
        if not o["jost_csv"]:
            raise ConfigValidationError("source 'csv' needs jost_csv", operation="config")
        j = krein.JostInput.from_csv(o["jost_csv"], **kw)
    elif source == "forward_well":
        c = float(o["well_strength"])
        fg = make_grid(0.0, max(30.0, 2 * r_grid.x_max), 6001)
        V0 = SampledFunction(fg, -c * fg.x**2 * np.exp(-(fg.x**2) / 2))
        n_b = krein.half_line_bound_states(V0)
        j = krein.jost_input_from_potential(V0, **kw)
        truth = -c * r_grid.x**2 * np.exp(-(r_grid.x**2) / 2)
    else:
        raise ConfigValidationError(f"unknown krein source {source!r}", operation="config")
    kernel = krein.krein_kernel(j, r_grid)
    A, V = krein.potential_from_kernel(kernel, r_grid)
    art.text("potential.csv", krein.potential_to_csv(A, V))
    art.table("H.csv", {"t": kernel.t_grid.x, "H": kernel.H.values})
    art.curve("V", r_grid.x, V.values, "r", "V")
    art.curve("A", r_grid.x, A.values, "r", "A")
    result = {
        "tail": j.tail_report(),
        "truncation_error": kernel.truncation_error,
        "max_fredholm_residual": kernel.max_residual,
        # an estimate whose trailing bits vary with BLAS code paths; keep the output reproducible
        "max_condition": float(f"{kernel.max_condition:.6g}"),
        "A0": float(A.values[0]),
    }
    if truth is not None:
        m = (r_grid.x >= 0.5) & (r_grid.x <= r_grid.x_max - 0.5)
        result["source_bound_states"] = n_b
        result["round_trip_sup_error"] = float(np.max(np.abs(V.values - truth)[m]))
    return result


HANDLERS: dict[str, Callable[[RunConfig, Artifacts], dict]] = {
    "spectrum": cmd_spectrum,
    "darboux": cmd_darboux,
    "crum": cmd_crum,
    "ddgr": cmd_ddgr,
    "compare": cmd_compare,
    "si": cmd_si,
    "swkb": cmd_swkb,
    "tdse": cmd_tdse,
    "krein": cmd_krein,
    "scatter": cmd_scatter,
}


def run(config: RunConfig) -> int:
    """Execute a config; returns the exit status. Errors go to stderr as JSON."""
    try:
        cfg = config.resolved()
        out = Path(cfg.output_dir)
        art = Artifacts(out, cfg.emit_plot_data)
        result = HANDLERS[cfg.command](cfg, art)
        art.json("result.json", result)
        art.finish_plots()
        manifest = {
            "config": cfg.to_dict(),
            "files": sorted(art.files),
            "run": {
                "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
                "version": __version__,
            },
        }
        atomic_write_text(out / "manifest.json", json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        print(json.dumps(_jsonable({"status": "ok", "output_dir": str(out), "result": result}), sort_keys=True))
        return 0
    except DarbouxLabError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2 if isinstance(exc, ConfigValidationError) else 1
    except (ValueError, TypeError, KeyError, FloatingPointError, np.linalg.LinAlgError) as exc:
        doc = {"error": type(exc).__name__, "module": "cli", "operation": config.command, "message": str(exc)}
        print(json.dumps(doc, sort_keys=True), file=sys.stderr)
        return 1


# -- argument parsing ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would print usage and exit 2; report JSON instead
        raise ConfigValidationError(message, operation="parse_args")


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.replace(",", " ").split()] if s.strip() else []


def _ints(s: str) -> list[int]:
    return [int(v) for v in s.replace(",", " ").split()]


def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s!r}")


#: flag -> (option name, type, help); a flag is only added for commands that own the option
_FLAGS = {
    "levels": (int, "number of levels to compute or compare"),
    "window": (_floats, "energy window 'min,max'"),
    "tolerance": (float, "bisection tolerance on the energy"),
    "seed_level": (int, "index of the eigenfunction used as seed"),
    "seed_levels": (_ints, "eigenfunction indices used as Crum seeds, e.g. '0,1'"),
    "kappas": (_floats, "cosh/sinh seed decay rates (factorization energies -kappa^2)"),
    "force": (_bool, "return singular results with poles masked instead of failing"),
    "lambda": (_floats, "DDGR parameter(s)"),
    "verify": (_bool, "compute member spectra and the double-Darboux check"),
    "k": (_floats, "wavenumbers, e.g. '0.5,1,2' (empty string for none)"),
    "family": (str, "shape-invariant family: harmonic | poschl_teller"),
    "a1": (float, "family parameter"),
    "n_max": (int, "highest level index"),
    "wavefunctions": (_bool, "also emit ladder wavefunctions"),
    "kappa": (float, "static seed cosh(kappa x)"),
    "k0": (float, "packet wavenumber"),
    "x0": (float, "packet centre"),
    "width": (float, "packet width"),
    "t_max": (float, "final time"),
    "n_times": (int, "number of output instants"),
    "strict": (_bool, "raise if the transformed potential is complex"),
    "source": (str, "profile | csv | forward_well"),
    "profile": (str, "named Jost profile: free | gaussian"),
    "jost_csv": (str, "CSV with columns k,value (|F|^-2 - 1)"),
    "well_strength": (float, "depth c of -c r^2 exp(-r^2/2) for the forward_well source"),
    "r_max": (float, "largest radius"),
    "n_r": (int, "number of radial points"),
    "k_cutoff": (float, "upper limit of the k integral"),
    "k_points": (int, "quadrature points on [0, k_cutoff]"),
}

_FLAG_ALIASES = {"levels": ["--levels", "-n"]}


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    p = _Parser(prog="darbouxlab", description="Darboux / Crum / isospectral-family toolkit")
    p.add_argument("--version", action="version", version=f"darbouxlab {__version__}")
    p.add_argument("--config", help="JSON config (or a manifest.json of an earlier run)")
    p.add_argument("--output-dir", "-o", dest="output_dir", default=S, help="output directory")
    p.add_argument("--plot-data", action="store_true", dest="emit_plot_data", default=S, help="emit two-column plot files")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=f"run the {name} command", argument_default=S)
        sp.add_argument("--config", help="JSON config; flags given here override it")
        sp.add_argument("--potential", help="free | harmonic | poschl_teller | custom_sampled")
        sp.add_argument("--ell", type=float, help="Poschl-Teller ell (u = -ell(ell+1) sech^2 x)")
        sp.add_argument("--half-line", action="store_true", dest="half_line", help="Dirichlet at x = 0")
        sp.add_argument("--samples-csv", dest="samples_csv", help="x,value CSV for custom_sampled")
        sp.add_argument("--x-min", type=float, dest="x_min")
        sp.add_argument("--x-max", type=float, dest="x_max")
        sp.add_argument("--n-points", type=int, dest="n_points")
        sp.add_argument("--output-dir", "-o", dest="output_dir", help=f"output directory (default ${OUTPUT_ENV} or ./darbouxlab_out/<command>)")
        sp.add_argument("--plot-data", action="store_true", dest="emit_plot_data", help="emit two-column plot files")
        for opt in OPTION_DEFAULTS[name]:
            typ, hlp = _FLAGS[opt]
            flags = _FLAG_ALIASES.get(opt, ["--" + opt.replace("_", "-")])
            extra = {"nargs": "?", "const": True} if typ is _bool else {}  # bare --verify means true
            sp.add_argument(*flags, dest=f"opt_{opt}", type=typ, help=f"{hlp} (default {OPTION_DEFAULTS[name][opt]!r})", **extra)
    return p


def config_from_args(argv: list[str] | None = None) -> RunConfig:
    ns = vars(build_parser().parse_args(argv))
    doc: dict = {}
    if ns.get("config"):
        try:
            doc = json.loads(Path(ns["config"]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigValidationError(f"cannot read config: {exc}", operation="config") from exc
        doc = doc["config"] if "config" in doc and "command" not in doc else doc
    base = RunConfig.from_dict(doc) if doc else None
    command = ns.get("command") or (base.command if base else None)
    if command is None:
        raise ConfigValidationError("no command given (use a subcommand or --config)", operation="parse_args")
    if base and ns.get("command") and base.command != ns["command"]:
        raise ConfigValidationError(f"config is for {base.command!r}, not {ns['command']!r}", operation="parse_args")
    cfg = base or RunConfig(command)
    pot = dict(cfg.potential)
    if "potential" in ns:
        pot = {"kind": ns["potential"], "parameters": {}, "domain_cut": pot.get("domain_cut", "full_line")}
    if "ell" in ns:
        pot["parameters"] = {"ell": ns["ell"]}
    if ns.get("half_line"):
        pot["domain_cut"] = "half_line"
    if "samples_csv" in ns:
        pot["samples_csv"] = ns["samples_csv"]
    if pot.get("kind") == "poschl_teller" and "ell" not in pot.get("parameters", {}):
        pot["parameters"] = {"ell": 1.0}
    grid = dict(cfg.grid) if cfg.grid else None
    if any(k in ns for k in ("x_min", "x_max", "n_points")):
        half = pot.get("domain_cut") == "half_line"
        grid = grid or default_grid(half).to_dict()
        for k in ("x_min", "x_max", "n_points"):
            if k in ns:
                grid[k] = ns[k]
    opts = dict(cfg.command_options)
    for k, v in ns.items():
        if k.startswith("opt_"):
            opts[k[4:]] = v
    return RunConfig(
        command=command,
        potential=pot,
        grid=grid,
        command_options=opts,
        output_dir=ns.get("output_dir", cfg.output_dir),
        emit_plot_data=bool(ns.get("emit_plot_data", cfg.emit_plot_data)),
    )


def main(argv: list[str] | None = None) -> int:
    try:
        cfg = config_from_args(argv)
    except DarbouxLabError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
