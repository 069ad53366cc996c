"""Batch front-end: INI configs in, CSV artifacts + manifests out.

Subcommands
    mc           critical field strength -> mc.csv + eigenfunction profile
    dispersion   growth-rate curves -> dispersion*.csv (one per field value)
    simulate     nonlinear run -> energy.csv, fits.csv, snapshots, manifest
    study        parameter sweep -> per-run subdirectories + study.csv
    convergence  dt-halving and N2-doubling checks -> convergence.csv

Exit codes: 0 success, 1 scientific-check failure, 2 usage/config error,
3 numerical abort.  Every run directory carries a manifest (config
snapshot, code version, wall times, termination, file hashes) so it can be
reproduced from its own contents.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import os
import sys
import time

import numpy as np

from . import __version__
from . import dynamics as dyn
from . import energetics as en
from . import spectral as sp
from .linstab import StabilityOperator
from .profiles import (DensityProfile, build_affine_profile,
                       build_tanh_profile, load_profile)

EXIT_OK = 0
EXIT_SCIENCE = 1
EXIT_USAGE = 2
EXIT_NUMERICS = 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# config handling

def read_config(path) -> configparser.ConfigParser:
    if not path or not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise UsageError(f"malformed config {path}: {exc}")
    return cp


def _get(cp, section, key, cast=float, default=None):
    if not cp.has_section(section) and default is None:
        raise UsageError(f"missing config section [{section}]")
    if not cp.has_option(section, key):
        if default is not None:
            return default
        raise UsageError(f"missing config key '{key}' in section [{section}]")
    raw = cp.get(section, key)
    try:
        return cast(raw)
    except ValueError:
        raise UsageError(f"config key [{section}] {key} = {raw!r} is not a "
                         f"valid {cast.__name__}")


def build_profile(cp) -> DensityProfile:
    kind = _get(cp, "profile", "kind", cast=str)
    n = int(_get(cp, "profile", "n", default=2049))
    h = _get(cp, "grid", "h")
    if kind == "affine":
        return build_affine_profile(_get(cp, "profile", "rho_bottom"),
                                    _get(cp, "profile", "rho_top"), h, n)
    if kind == "tanh":
        return build_tanh_profile(_get(cp, "profile", "rho_bottom"),
                                  _get(cp, "profile", "rho_top"),
                                  _get(cp, "profile", "center"),
                                  _get(cp, "profile", "width"), h, n)
    if kind == "file":
        path = _get(cp, "profile", "path", cast=str)
        if not os.path.exists(path):
            raise UsageError(f"profile file not found: {path}")
        return load_profile(path)
    raise UsageError(f"unknown profile kind {kind!r}")


def build_grid(cp) -> sp.SlabGrid:
    return sp.SlabGrid(L=_get(cp, "grid", "L"), h=_get(cp, "grid", "h"),
                       N1=int(_get(cp, "grid", "N1")),
                       N2=int(_get(cp, "grid", "N2")))


def physics(cp):
    return dict(mu=_get(cp, "physics", "mu"), g=_get(cp, "physics", "g"),
                lam=_get(cp, "physics", "lambda"))


def resolve_m(cp, profile, grid) -> float:
    """[physics] m taken literally, or m_rel as a multiple of m_C."""
    if cp.has_option("physics", "m_rel"):
        rel = _get(cp, "physics", "m_rel")
        phys = physics(cp)
        op = StabilityOperator(profile, phys["g"], phys["lam"], 0.0,
                               grid.L, grid.N2)
        return rel * op.critical_field().mc
    return _get(cp, "physics", "m", default=0.0)


# ---------------------------------------------------------------------------
# artifacts

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(v) for v in row) + "\n")


def file_sha256(path) -> str:
    hasher = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            hasher.update(chunk)
    return hasher.hexdigest()


class Manifest:
    """Run ledger: config snapshot, version, timings, outputs + hashes."""

    def __init__(self, outdir, config_path):
        self.outdir = outdir
        self.t_start = time.time()
        self.termination = "incomplete"
        self.extra = {}
        with open(config_path) as f:
            self.config_text = f.read()

    def write(self):
        lines = [f"version={__version__}",
                 f"wall_start={self.t_start!r}",
                 f"wall_end={time.time()!r}",
                 f"termination={self.termination}"]
        for k, v in self.extra.items():
            lines.append(f"{k}={v}")
        names = sorted(p for p in os.listdir(self.outdir)
                       if p != "manifest.txt")
        for name in names:
            path = os.path.join(self.outdir, name)
            if os.path.isfile(path):
                lines.append(f"file={name} sha256={file_sha256(path)}")
            else:
                for sub in sorted(os.listdir(path)):
                    subp = os.path.join(path, sub)
                    if os.path.isfile(subp):
                        lines.append(
                            f"file={name}/{sub} sha256={file_sha256(subp)}")
        lines.append("config<<EOF")
        lines.append(self.config_text.rstrip("\n"))
        lines.append("EOF")
        with open(os.path.join(self.outdir, "manifest.txt"), "w") as f:
            f.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# subcommands

def cmd_mc(cp, outdir, quiet, jobs=1):
    profile = build_profile(cp)
    grid = build_grid(cp)
    phys = physics(cp)
    op = StabilityOperator(profile, phys["g"], phys["lam"], 0.0,
                           grid.L, grid.N2)
    res = op.critical_field(n_max=int(_get(cp, "linstab", "n_max", default=32)))
    write_csv(os.path.join(outdir, "mc.csv"),
              ["mc", "argmax_n", "bound_paper", "stable_for_all_m"],
              [[res.mc, res.argmax_n, res.bound_paper,
                int(res.stable_for_all_m)]])
    y2 = np.linspace(0.0, profile.h, 257)
    j = np.arange(1, len(res.profile_hat) + 1)
    phi = np.sin(np.outer(y2, j) * np.pi / profile.h) @ res.profile_hat
    with open(os.path.join(outdir, "eigenfunction.txt"), "w") as f:
        f.write("# threshold eigenfunction: columns y2 w2\n")
        for yv, pv in zip(y2, phi):
            f.write(f"{yv!r} {pv!r}\n")
    if not quiet:
        print(f"m_C = {res.mc:.8f} at n = {res.argmax_n} "
              f"(bound {res.bound_paper:.8f})")
    if res.mc > res.bound_paper + 1e-10:
        return EXIT_SCIENCE, {"mc": res.mc, "bound_violated": True}
    return EXIT_OK, {"mc": res.mc}


def _m_list(cp):
    raw = cp.get("physics", "m", fallback="0.0")
    try:
        vals = [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"malformed field strength list: m = {raw!r}")
    if not vals:
        raise UsageError("empty field strength list")
    return vals


def cmd_dispersion(cp, outdir, quiet, jobs=1):
    profile = build_profile(cp)
    grid = build_grid(cp)
    phys = physics(cp)
    n_max = int(_get(cp, "linstab", "n_max", default=8))
    op = StabilityOperator(profile, phys["g"], phys["lam"], phys["mu"],
                           grid.L, grid.N2)
    m_values = _m_list(cp)
    for i, m in enumerate(m_values):
        curve = op.dispersion(m, n_max=n_max)
        rows = []
        for n, k, lam_n in curve.entries:
            stable = int(lam_n is None)
            rows.append([n, k, "" if lam_n is None else lam_n, stable])
        name = "dispersion.csv" if len(m_values) == 1 else f"dispersion_{i:02d}.csv"
        write_csv(os.path.join(outdir, name),
                  ["n", "k", "lambda", "stable"], rows)
        if not quiet:
            unstable = sum(1 for _, _, lam_n in curve.entries if lam_n)
            print(f"m = {m}: {unstable}/{n_max} unstable modes -> {name}")
    return EXIT_OK, {"m_values": m_values}


def _build_sim_config(cp, profile, grid, m):
    phys = physics(cp)
    seed_n = int(_get(cp, "seed", "n", default=0))
    m_seed = _get(cp, "seed", "m_seed", default=0.0)
    delta = _get(cp, "seed", "delta", default=0.0)
    phase = _get(cp, "seed", "phase", default=0.0)
    mode = None
    if seed_n == 0 and delta > 0:
        raise UsageError("[seed] delta > 0 needs a mode index n >= 1")
    if seed_n > 0:
        op = StabilityOperator(profile, phys["g"], phys["lam"], phys["mu"],
                               grid.L, grid.N2)
        got = op.growth_rate(seed_n / grid.L, m_seed, with_vector=True)
        lam_n, vec = got
        if lam_n is None:
            raise UsageError(f"seed mode n={seed_n} at m_seed={m_seed} is "
                             f"stable; cannot seed")
        mode = op.build_mode(seed_n, m_seed, lam_n, vec)
    eta_delta = (None if not cp.has_option("seed", "eta_delta")
                 else _get(cp, "seed", "eta_delta"))
    return dyn.SimConfig(
        profile=profile, grid=grid, mu=phys["mu"], g=phys["g"],
        lam=phys["lam"], m=m, dt=_get(cp, "time", "dt"),
        t_end=_get(cp, "time", "t_end"), seed_mode=mode, delta=delta,
        phase=phase, eta_delta=eta_delta,
        cadence=_get(cp, "output", "cadence", default=0.1))


_ENERGY_COLUMNS = ["t", "E_pot", "E_total", "D_total", "frakE", "frakD",
                   "norm_eta_H3", "norm_u_H2", "norm_ut_L2", "norm_q_H1",
                   "J_drift", "div_residual"]


def _energy_rows(reports):
    rows = []
    for r in reports:
        rows.append([r.t, r.E_pot, r.E_total, r.D_total, r.frakE, r.frakD,
                     r.norms["eta_H3"], r.norms["u_H2"], r.norms["ut_L2"],
                     r.norms["q_H1"], r.J_drift, r.div_residual])
    return rows


def cmd_simulate(cp, outdir, quiet, jobs=1, restart=None):
    profile = build_profile(cp)
    grid = build_grid(cp)
    m = resolve_m(cp, profile, grid)
    cfg = _build_sim_config(cp, profile, grid, m)
    epsilon = _get(cp, "output", "epsilon", default=0.0)
    n_snapshots = int(_get(cp, "output", "snapshots", default=0))
    state = None
    if restart:
        state, _ = dyn.load_state(restart, grid)
        if not quiet:
            print(f"restarting from {restart} at t = {state.t}")
    elif cfg.seed_mode is None and cfg.delta == 0.0:
        raise UsageError("no seed configured: set [seed] n and delta, or "
                         "use --restart")
    reporter = en.EnergyReporter(with_escape=epsilon > 0, collect_eta1=True)
    snap_times = (np.linspace(0.0, cfg.t_end, n_snapshots + 1)[1:]
                  if n_snapshots else [])
    snaps_done = []

    def snapshotter(st, stepper, aux):
        for i, ts in enumerate(snap_times):
            if len(snaps_done) > i:
                continue
            if st.t >= ts - 1e-12:
                path = os.path.join(outdir, f"snap_{i:03d}")
                dyn.save_state(st, path, extra={"config_hash": hashlib.sha256(
                    open_config_bytes(cp)).hexdigest(), **aux_strs(aux)})
                snaps_done.append(path)

    res = dyn.run(cfg, reporters=[reporter, snapshotter], state=state)
    write_csv(os.path.join(outdir, "energy.csv"), _ENERGY_COLUMNS,
              _energy_rows(reporter.reports))
    fits = []
    if epsilon > 0:
        names = ["eta1_L1", "eta2_L1", "u1_L1", "u2_L1", "rho_L1"]
        T = en.detect_escape_time(reporter.reports, epsilon, names)
        fits.append(["escape_time", f"threshold={epsilon!r}", 0.0,
                     cfg.t_end, "" if T is None else T, 0.0])
    if cp.has_section("fit"):
        t0 = _get(cp, "fit", "t0")
        t1 = _get(cp, "fit", "t1")
        quantity = _get(cp, "fit", "quantity", cast=str, default="u_L2")
        model = _get(cp, "fit", "model", cast=str, default="exponential")
        fit = en.fit_rate(reporter.reports, quantity, (t0, t1), model)
        fits.append([quantity, model, t0, t1, fit.value, fit.residual])
    if fits:
        write_csv(os.path.join(outdir, "fits.csv"),
                  ["quantity", "model", "window_lo", "window_hi", "value",
                   "residual"], fits)
    if not quiet:
        print(f"{res.termination} at t = {res.t_final:.4f} "
              f"({res.counters['steps']} steps, {res.wall_time:.1f}s)")
    code = EXIT_OK if res.termination == "completed" else EXIT_NUMERICS
    info = {"termination": res.termination,
            "steps": res.counters["steps"],
            "max_J_drift": res.counters["max_J_drift"]}
    return code, info


def open_config_bytes(cp) -> bytes:
    buf = []
    for section in cp.sections():
        buf.append(f"[{section}]")
        for k, v in cp.items(section):
            buf.append(f"{k}={v}")
    return "\n".join(buf).encode()


def aux_strs(aux):
    return {k: _fmt(v) for k, v in aux.items()}


def _study_child(args):
    (config_path, outdir, param, value, quiet) = args
    cp = read_config(config_path)
    if param in ("delta", "phase"):
        cp.set("seed", param, repr(value))
    elif param in ("m", "m_rel"):
        cp.remove_option("physics", "m_rel")
        cp.set("physics", param, repr(value))
    elif param in ("dt", "t_end"):
        cp.set("time", param, repr(value))
    elif param == "N2":
        cp.set("grid", param, str(int(value)))
    else:
        raise UsageError(f"unsupported sweep parameter {param!r}")
    os.makedirs(outdir, exist_ok=True)
    try:
        code, info = cmd_simulate(cp, outdir, quiet=True)
    except UsageError:
        raise
    except Exception as exc:  # child numerical failures recorded, not fatal
        return {"status": "FAILED", "error": str(exc), "value": value}
    rep_path = os.path.join(outdir, "energy.csv")
    data = np.genfromtxt(rep_path, delimiter=",", names=True)
    out = {"status": "ok" if code == EXIT_OK else "FAILED", "value": value,
           "termination": info.get("termination", ""),
           "E0": float(data["E_total"][0]),
           "E_end": float(data["E_total"][-1]),
           "u0": float(data["norm_u_H2"][0]),
           "u_end": float(data["norm_u_H2"][-1])}
    fits_path = os.path.join(outdir, "fits.csv")
    if os.path.exists(fits_path):
        with open(fits_path) as f:
            for line in f.read().splitlines()[1:]:
                parts = line.split(",")
                if parts[0] == "escape_time" and parts[4]:
                    out["escape_time"] = float(parts[4])
    return out


def cmd_study(cp, outdir, quiet, jobs=1, config_path=None):
    if not cp.has_section("sweep"):
        raise UsageError("missing config section [sweep]")
    param = _get(cp, "sweep", "parameter", cast=str)
    raw = cp.get("sweep", "values", fallback="").strip()
    try:
        values = [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"malformed sweep values: {raw!r}")
    if not values:
        raise UsageError("empty sweep list")
    tasks = []
    for i, v in enumerate(values):
        subdir = os.path.join(outdir, f"run_{i:03d}")
        tasks.append((config_path, subdir, param, v, quiet))
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_study_child, tasks))
    else:
        results = [_study_child(t) for t in tasks]
    rows = []
    for r in results:
        rows.append([param, r["value"], r["status"],
                     r.get("termination", r.get("error", "")),
                     r.get("E0", ""), r.get("E_end", ""),
                     r.get("u0", ""), r.get("u_end", ""),
                     r.get("escape_time", "")])
    write_csv(os.path.join(outdir, "study.csv"),
              ["parameter", "value", "status", "termination", "E0", "E_end",
               "u0", "u_end", "escape_time"], rows)
    failed = any(r["status"] != "ok" for r in results)
    if not quiet:
        print(f"study over {param}: {len(values)} runs, "
              f"{'FAILED' if failed else 'ok'}")
    return (EXIT_NUMERICS if failed else EXIT_OK), {"runs": len(values)}


def cmd_convergence(cp, outdir, quiet, jobs=1):
    profile = build_profile(cp)
    grid = build_grid(cp)
    phys = physics(cp)
    m = resolve_m(cp, profile, grid)
    rows = []
    ok = True

    # dt halving: second-order Richardson ratio on ||u(T)||
    base = _build_sim_config(cp, profile, grid, m)
    finals = []
    for dt in (base.dt, base.dt / 2, base.dt / 4):
        cfg = _build_sim_config(cp, profile, grid, m)
        cfg.dt = dt
        res = dyn.run(cfg)
        finals.append(np.sqrt(sp.vec_l2_sq(res.state.u)))
    e1, e2 = abs(finals[0] - finals[1]), abs(finals[1] - finals[2])
    ratio = e1 / e2 if e2 > 0 else np.inf
    dt_ok = 3.2 <= ratio <= 4.8
    ok &= dt_ok
    rows.append(["dt_richardson_ratio", ratio, int(dt_ok)])

    # N2 doubling: threshold and growth rate resolution-independence
    op1 = StabilityOperator(profile, phys["g"], phys["lam"], phys["mu"],
                            grid.L, grid.N2)
    op2 = StabilityOperator(profile, phys["g"], phys["lam"], phys["mu"],
                            grid.L, 2 * grid.N2)
    mc1, mc2 = op1.critical_field().mc, op2.critical_field().mc
    dmc = abs(mc1 - mc2) / max(mc1, 1e-300)
    mc_ok = dmc < 1e-6
    ok &= mc_ok
    rows.append(["mc_N2_doubling_rel_change", dmc, int(mc_ok)])
    l1 = op1.growth_rate(1.0 / grid.L, 0.5 * mc1)
    l2 = op2.growth_rate(1.0 / grid.L, 0.5 * mc1)
    if l1 is not None and l2 is not None:
        dl = abs(l1 - l2) / l1
        l_ok = dl < 1e-6
        ok &= l_ok
        rows.append(["lambda_N2_doubling_rel_change", dl, int(l_ok)])
    write_csv(os.path.join(outdir, "convergence.csv"),
              ["check", "value", "pass"], rows)
    if not quiet:
        for name, val, passed in rows:
            print(f"{name}: {val:.3e} {'PASS' if passed else 'FAIL'}")
    return (EXIT_OK if ok else EXIT_SCIENCE), {"checks": len(rows)}


# ---------------------------------------------------------------------------
# entry point

_COMMANDS = {"mc": cmd_mc, "dispersion": cmd_dispersion,
             "simulate": cmd_simulate, "study": cmd_study,
             "convergence": cmd_convergence}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mrtlab",
        description="Magnetic Rayleigh-Taylor stability laboratory")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="INI config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--jobs", type=int, default=1,
                        help="parallel workers for sweeps")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--restart", default=None,
                        help="snapshot directory to resume from (simulate)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    try:
        cp = read_config(args.config)
        manifest = Manifest(args.out, args.config)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code = EXIT_NUMERICS
    try:
        kwargs = {}
        if args.command == "simulate":
            kwargs["restart"] = args.restart
        if args.command == "study":
            kwargs["config_path"] = args.config
        code, info = _COMMANDS[args.command](cp, args.out, args.quiet,
                                             jobs=args.jobs, **kwargs)
        manifest.termination = f"exit={code}"
        manifest.extra.update({k: _fmt(v) for k, v in info.items()})
        return code
    except (UsageError, dyn.SeedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        manifest.termination = f"usage-error: {exc}"
        return EXIT_USAGE
    except (dyn.FlowMapDegeneracyError, dyn.TimeStepFloorError,
            sp.ProjectionError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        manifest.termination = f"numerical-abort: {exc}"
        return EXIT_NUMERICS
    finally:
        manifest.write()


if __name__ == "__main__":
    sys.exit(main())
