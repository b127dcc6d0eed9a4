"""Command-line front end: configuration, figure tables, validation, trajectories.

Configuration is a flat ``key = value`` file with ``#`` comments; unknown keys
are rejected and missing keys fall back to the documented defaults.  All
emitted numbers are produced by the core modules; this layer only formats.

Subcommands
    fig1          effective-occupancy table over a (chi, gain) grid
    fig2          uncertainty-contour table (vacuum / measured / feedback)
    steady        stationary diagnostics at the configured parameters
    validate      cross-model validation suite (exit 1 on any failure)
    trajectories  stochastic trajectory archive plus ensemble summary

Exit codes: 0 success, 1 check failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analytic, evolve_det, evolve_stoch, gaussian2, hilbert, validate as val
from .errors import ConfigError
from .params import ModelParams, check_regime, effective_bath

__all__ = ["RunConfig", "load_config", "main"]

DEFAULTS = dict(
    gamma=1e-2,
    kappa=1e2,
    chi=2.5,
    g=0.025,
    phi=-math.pi / 2,
    eta=0.8,
    nbar=0.5,
    dim=30,
    dt=0.05,
    t_final=100.0,
    n_traj=2000,
    seed=1234,
    out_dir=".",
    format="csv",
)

UNITS_NOTE = (
    "rates (gamma, kappa, chi, g) in 1/s; phi and ellipse angles in radians; "
    "variances dimensionless with vacuum = 1/4"
)


@dataclass(frozen=True)
class RunConfig:
    gamma: float
    kappa: float
    chi: float
    g: float
    phi: float
    eta: float
    nbar: float
    dim: int
    dt: float
    t_final: float
    n_traj: int
    seed: int
    out_dir: str
    format: str

    def params(self) -> ModelParams:
        try:
            return ModelParams(
                gamma=self.gamma,
                kappa=self.kappa,
                chi=self.chi,
                g=self.g,
                phi=self.phi,
                eta=self.eta,
                nbar=self.nbar,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid model parameters: {exc}") from exc


_INT_KEYS = {"dim", "n_traj", "seed"}
_STR_KEYS = {"out_dir", "format"}


def load_config(path: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the config file, then explicit overrides."""
    values = dict(DEFAULTS)
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, sval = line.partition("=")
            key, sval = key.strip(), sval.strip()
            if key not in values:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, sval, f"{path}:{lineno}")
    for key, v in (overrides or {}).items():
        if v is None:
            continue
        if key not in values:
            raise ConfigError(f"unknown config key {key!r}")
        values[key] = v
    if values["format"] not in ("csv", "json"):
        raise ConfigError(f"format must be csv or json, got {values['format']!r}")
    cfg = RunConfig(**values)
    cfg.params()  # validate the physics keys eagerly
    if cfg.dim < 2:
        raise ConfigError("dim must be >= 2")
    if cfg.dt <= 0 or cfg.t_final <= 0:
        raise ConfigError("dt and t_final must be positive")
    if cfg.n_traj < 1:
        raise ConfigError("n_traj must be >= 1")
    return cfg


def _parse_value(key: str, sval: str, where: str):
    try:
        if key in _STR_KEYS:
            return sval
        if key in _INT_KEYS:
            return int(sval)
        return float(sval)
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc


# -- serialization --------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path: Path, columns: list[str], rows: list[list], fmt: str,
                comments: list[str]) -> None:
    """Emit rows as CSV (with '#' header comments) or JSON (with a meta block)."""
    try:
        if fmt == "csv":
            lines = [f"# {c}" for c in comments]
            lines.append(",".join(columns))
            for row in rows:
                lines.append(",".join(_fmt(v) for v in row))
            path.write_text("\n".join(lines) + "\n")
        else:
            doc = {
                "meta": {"comments": comments},
                "columns": columns,
                "rows": [
                    {c: (None if _is_nan(v) else _plain(v)) for c, v in zip(columns, row)}
                    for row in rows
                ],
            }
            path.write_text(json.dumps(doc, indent=1) + "\n")
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from exc


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    return v


def _is_nan(v) -> bool:
    return isinstance(v, (float, np.floating)) and math.isnan(v)


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    """Re-parse a CSV written by write_table (used by the round-trip tests)."""
    lines = [l for l in path.read_text().splitlines() if l and not l.startswith("#")]
    columns = lines[0].split(",")
    return columns, [l.split(",") for l in lines[1:]]


# -- subcommands ----------------------------------------------------------------


def cmd_fig1(cfg: RunConfig, chi_list: list[float], g_list: list[float],
             out: Path) -> int:
    """Occupancy of the controlled quadrature vs gain, one row per (chi, g)."""
    rows = []
    for chi in chi_list:
        for g in g_list:
            p = ModelParams(gamma=cfg.gamma, kappa=cfg.kappa, chi=chi, g=g,
                            phi=cfg.phi, eta=cfg.eta, nbar=cfg.nbar)
            stable = analytic.is_stable(p) and (p.gamma - 2 * p.g_sin_phi > 0)
            try:
                neff = analytic.n_eff(p)
            except ValueError:
                neff = math.nan
            rows.append([chi, g, neff, stable])
    write_table(out, ["chi", "g", "n_eff", "stable"], rows, cfg.format,
                [UNITS_NOTE, "unstable points are flagged, not dropped"])
    print(f"wrote {out} ({len(rows)} rows)")
    return 0


def cmd_fig2(cfg: RunConfig, out: Path) -> int:
    """Vacuum / measured-only / feedback uncertainty contours."""
    rows = []
    for label, g in (("vacuum", None), ("measured", 0.0), ("feedback", cfg.g)):
        if g is None:
            sg = analytic.StationaryGaussian(zeta=0.0, mu=0.0)
        else:
            p = ModelParams(gamma=cfg.gamma, kappa=cfg.kappa, chi=cfg.chi, g=g,
                            phi=cfg.phi, eta=cfg.eta, nbar=cfg.nbar)
            sg = analytic.stationary_solution(p)
        cov = analytic.covariance(sg)
        ell = analytic.contour_ellipse(cov)
        rows.append([label, cov.vxx, cov.vpp, cov.vxp,
                     ell.semi_major, ell.semi_minor, ell.angle])
    write_table(out, ["label", "vxx", "vpp", "vxp", "major", "minor", "angle"],
                rows, cfg.format, [UNITS_NOTE, "contours at 1/sqrt(e) of the peak"])
    print(f"wrote {out}")
    return 0


def cmd_steady(cfg: RunConfig, out: Path) -> int:
    """Stationary diagnostics: bath coefficients, moments by all three routes."""
    p = cfg.params()
    bath = effective_bath(p)
    sg = analytic.stationary_solution(p)
    zo, mo = evolve_det.moment_oracle(p)
    rho = evolve_det.steady_state(evolve_det.RhsSpec("final_feedback", p),
                                  d=cfg.dim, tol=1e-8)
    m = hilbert.moments(rho)
    cov = analytic.covariance(sg)
    regime = check_regime(p)
    row = [
        bath.Gamma, bath.N, bath.M.real, bath.M.imag,
        sg.zeta, sg.mu.real, sg.mu.imag,
        zo, mo.real, mo.imag,
        m.mean_n, m.mean_aa.real, m.mean_aa.imag,
        analytic.n_eff(p), cov.vxx, cov.vpp, cov.vxp,
        regime["adiabatic"].passed, regime["stability"].passed,
    ]
    cols = [
        "Gamma", "N", "re_M", "im_M",
        "zeta", "re_mu", "im_mu",
        "zeta_oracle", "re_mu_oracle", "im_mu_oracle",
        "zeta_lindblad", "re_mu_lindblad", "im_mu_lindblad",
        "n_eff", "vxx", "vpp", "vxp",
        "adiabatic_ok", "stability_ok",
    ]
    write_table(out, cols, [row], cfg.format, [UNITS_NOTE])
    print(f"wrote {out}")
    return 0


def cmd_validate(cfg: RunConfig, out: Path, full: bool) -> int:
    p = cfg.params()
    opts = val.ValidateOptions(dim=cfg.dim, seed=cfg.seed, dt=cfg.dt, full=full)
    records = val.run_checks(p, opts)
    rows = [[r.name, r.status, r.expected, r.actual, r.tolerance, r.note]
            for r in records]
    write_table(out, ["name", "status", "expected", "actual", "tolerance", "note"],
                rows, cfg.format, [UNITS_NOTE])
    n_fail = 0
    for r in records:
        tag = {"pass": "PASS", "fail": "FAIL", "skipped": "SKIP"}[r.status]
        extra = f" ({r.note})" if r.status != "pass" and r.note else ""
        print(f"{tag:4s} {r.name}{extra}")
        n_fail += r.status == "fail"
    print(f"wrote {out}; {n_fail} failure(s)")
    return 1 if n_fail else 0


def cmd_trajectories(cfg: RunConfig, out_dir: Path) -> int:
    """Per-trajectory conditioned moments at the checkpoints plus the summary."""
    p = cfg.params()
    stats = evolve_stoch.ensemble(
        p, cfg.n_traj, cfg.t_final, cfg.dt, cfg.seed, dim=cfg.dim,
        keep_members=True,
    )
    ext = cfg.format
    traj_path = out_dir / f"trajectories.{ext}"
    rows = []
    for i in range(cfg.n_traj):
        for j, t in enumerate(stats.times):
            rows.append([i, t, *stats.members[i, j, :]])
    write_table(
        traj_path,
        ["traj", "t", "x", "x2", "n", "re_a2", "im_a2"],
        rows,
        ext,
        [UNITS_NOTE, f"seed stream key = ({cfg.seed}, traj)", f"dt = {cfg.dt!r}"],
    )
    sum_path = out_dir / f"ensemble_summary.{ext}"
    cols = ["t"]
    for nm in evolve_stoch.MOMENT_NAMES:
        cols += [f"mean_{nm}", f"se_{nm}"]
    srows = []
    for j, t in enumerate(stats.times):
        row = [t]
        for k in range(5):
            row += [stats.mean[j, k], stats.stderr[j, k]]
        srows.append(row)
    write_table(sum_path, cols, srows, ext,
                [UNITS_NOTE, f"n_traj = {cfg.n_traj}"])
    print(f"wrote {traj_path} and {sum_path}")
    return 0


# -- argument parsing -----------------------------------------------------------


def _parse_float_list(text: str) -> list[float]:
    try:
        if ":" in text:
            lo, hi, num = text.split(":")
            return list(np.linspace(float(lo), float(hi), int(num)))
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad list {text!r}: {exc}") from exc


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="squashsim", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="flat key = value file")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--format", choices=["csv", "json"], default=None)
        sp.add_argument("--seed", type=int, default=None)

    sp1 = sub.add_parser("fig1", help="occupancy vs gain table")
    common(sp1)
    sp1.add_argument("--chi-list", default="0.5,1.5,2.5",
                     help="comma list or lo:hi:num")
    sp1.add_argument("--g-list", default="0:0.05:21")

    sp2 = sub.add_parser("fig2", help="uncertainty contour table")
    common(sp2)

    sp3 = sub.add_parser("steady", help="stationary diagnostics")
    common(sp3)

    sp4 = sub.add_parser("validate", help="cross-model validation suite")
    common(sp4)
    sp4.add_argument("--full", action="store_true",
                     help="full-size stochastic checks (slow)")

    sp5 = sub.add_parser("trajectories", help="trajectory archive + summary")
    common(sp5)
    sp5.add_argument("--n-traj", type=int, default=None)

    args = ap.parse_args(argv)
    try:
        overrides = {"seed": args.seed, "format": args.format, "out_dir": args.out}
        if getattr(args, "n_traj", None) is not None:
            overrides["n_traj"] = args.n_traj
        cfg = load_config(args.config, overrides)
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ext = cfg.format
        if args.command == "fig1":
            return cmd_fig1(cfg, _parse_float_list(args.chi_list),
                            _parse_float_list(args.g_list), out_dir / f"fig1.{ext}")
        if args.command == "fig2":
            return cmd_fig2(cfg, out_dir / f"fig2.{ext}")
        if args.command == "steady":
            return cmd_steady(cfg, out_dir / f"steady.{ext}")
        if args.command == "validate":
            return cmd_validate(cfg, out_dir / f"validate.{ext}", args.full)
        if args.command == "trajectories":
            return cmd_trajectories(cfg, out_dir)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
