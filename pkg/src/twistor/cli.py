"""Command-line front end: twistor {flow, xray, normal, beta, verify-bds, oracle-compare}.

Configuration is an INI file; every key is optional and falls back to the
defaults listed by ``twistor --help``.  Exit codes: 0 success / certificates
pass, 2 certificate failure, 3 numerical failure, 4 configuration or input
error.
"""
from __future__ import annotations

import argparse
import configparser
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .beta import beta_extension, evaluate
from .bds import verify
from .flow import (BoundaryPoint, IntegrationError, TrappedOrbitError, boundary_to_phase, integrate,
                   scattering, wrap)
from .geometry import DomainError, GridSpec, metric_from_spec
from .oracles import CCParams, beta_cc, oracle_map, scattering_cc, truncation_bound
from .polar import PolarGrid
from .transforms import (IllConditionedError, ModeField, normal_Nk, transport, xray)

EXIT_OK, EXIT_CERT, EXIT_NUMERIC, EXIT_CONFIG = 0, 2, 3, 4

DEFAULTS = """\
defaults (INI sections and keys):
  [metric]     kind = cc | custom | perturbed   (cc)
               kappa = 0.0, R = 1.0
               sigma_expr = <expression in z, |z|, Re, Im, exp, log>   (custom)
               base_kappa, delta, center_re = 0.3, center_im = 0.2, width = 0.35   (perturbed)
  [grid]       n_r = 32, n_theta = 128, k_max = 32, quad_nodes = 48, n_alpha = 2*n_r
  [solver]     reg = 1e-8
  [thresholds] det_S, lambda_min, injectivity, embed_det  (50% of the nearest
               constant curvature oracle values), holomorphy = 5e-3
  [run]        output_dir = out, seed = 0
  [flow]       points = omega,alpha; omega,alpha; ...   (empty: header-only files)
               t_max = 10
  [field]      expr = 1 (function of z used by xray / normal), k = 0,
               weight = rho_half | smooth
  [compare]    n_samples = 400
"""


class ConfigError(ValueError):
    pass


# configparser lowercases keys
_THRESHOLD_KEYS = {k.lower(): k for k in ("det_S", "lambda_min", "injectivity", "embed_det", "holomorphy")}


@dataclass
class RunConfig:
    metric: dict
    grid: GridSpec
    reg: float = 1e-8
    thresholds: dict = field(default_factory=dict)
    output_dir: Path = Path("out")
    seed: int = 0
    raw: configparser.ConfigParser | None = None

    def get(self, section: str, key: str, fallback=None):
        if self.raw is None or not self.raw.has_option(section, key):
            return fallback
        return self.raw.get(section, key)


def _metric_section(cp: configparser.ConfigParser) -> dict:
    s = cp["metric"] if cp.has_section("metric") else {}
    kind = s.get("kind", "cc").strip()
    R = float(s.get("r", 1.0))
    if kind in ("cc", "euclidean", "constant_curvature"):
        return {"kind": "cc", "kappa": float(s.get("kappa", 0.0)), "R": R}
    if kind == "custom":
        if "sigma_expr" not in s:
            raise ConfigError("[metric] kind = custom needs sigma_expr")
        return {"kind": "custom", "sigma_expr": s["sigma_expr"], "R": R}
    if kind == "perturbed":
        return {"kind": "perturbed", "base": {"kind": "cc", "kappa": float(s.get("base_kappa", 0.0)), "R": R},
                "delta": float(s.get("delta", 0.0)),
                "center": [float(s.get("center_re", 0.3)), float(s.get("center_im", 0.2))],
                "width": float(s.get("width", 0.35)), "R": R}
    raise ConfigError(f"unknown metric kind {kind!r}")


def load_config(path: str | None, output_dir: str | None = None, seed: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        metric = _metric_section(cp)
        g = cp["grid"] if cp.has_section("grid") else {}
        n_alpha = g.get("n_alpha")
        grid = GridSpec(n_r=int(g.get("n_r", 32)), n_theta=int(g.get("n_theta", 128)),
                        k_max=int(g.get("k_max", 32)), quad_nodes=int(g.get("quad_nodes", 48)),
                        n_alpha=int(n_alpha) if n_alpha else None)
        reg = cp.getfloat("solver", "reg", fallback=1e-8)
        thresholds = {}
        if cp.has_section("thresholds"):
            for k, v in cp["thresholds"].items():
                if k not in _THRESHOLD_KEYS:
                    raise ConfigError(f"unknown threshold {k!r}; expected one of {sorted(_THRESHOLD_KEYS.values())}")
                thresholds[_THRESHOLD_KEYS[k]] = float(v)
        out = output_dir or cp.get("run", "output_dir", fallback="out")
        sd = seed if seed is not None else cp.getint("run", "seed", fallback=0)
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(metric, grid, reg, thresholds, Path(out), sd, cp)


def _prepare_output(cfg: RunConfig) -> Path:
    try:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {cfg.output_dir} is not writable: {exc}") from exc
    return cfg.output_dir


def _points(text: str | None) -> list[BoundaryPoint]:
    if not text or not text.strip():
        return []
    pts = []
    for item in text.split(";"):
        if item.strip():
            try:
                om, al = (float(v) for v in item.split(","))
            except ValueError as exc:
                raise ConfigError(f"bad boundary point {item!r}; expected 'omega,alpha'") from exc
            pts.append(BoundaryPoint(om, al))
    return pts


def field_function(expr: str):
    """Complex callable of z parsed from an expression (z, zbar, |z|, Re, Im, exp, log, sqrt)."""
    import sympy as sp

    x, y = sp.symbols("x y", real=True)
    text = expr.replace("^", "**").replace("|z|", "Abs(z)")
    local = {"z": x + sp.I * y, "zbar": x - sp.I * y, "Re": sp.re, "Im": sp.im, "exp": sp.exp,
             "log": sp.log, "sqrt": sp.sqrt, "Abs": sp.Abs}
    try:
        e = sp.sympify(text, locals=local)
    except (sp.SympifyError, SyntaxError, TypeError) as exc:
        raise ConfigError(f"cannot parse field expression {expr!r}") from exc
    if e.free_symbols - {x, y}:
        raise ConfigError(f"unknown symbols in field expression {expr!r}")
    f = sp.lambdify((x, y), e, "numpy")

    def fn(z):
        z = np.asarray(z, dtype=complex)
        return np.broadcast_to(np.asarray(f(z.real, z.imag), dtype=complex), z.shape)

    return fn


def _field_from_config(cfg: RunConfig, g: PolarGrid) -> ModeField:
    fn = field_function(cfg.get("field", "expr", "1"))
    k = int(cfg.get("field", "k", 0))
    weight = cfg.get("field", "weight", "rho_half").strip()
    if weight not in ("rho_half", "smooth"):
        raise ConfigError("[field] weight must be rho_half or smooth")
    return ModeField.from_function(g, k, fn, weight)


# ----------------------------------------------------------------- commands
def cmd_flow(cfg: RunConfig, points: list[BoundaryPoint] | None = None) -> int:
    out = _prepare_output(cfg)
    metric = metric_from_spec(cfg.metric)
    if points is None:
        points = _points(cfg.get("flow", "points", ""))
    t_max = float(cfg.get("flow", "t_max", 10.0))
    cc = cfg.metric.get("kind") == "cc"
    rows = []
    for i, b in enumerate(points):
        rec = integrate(metric, boundary_to_phase(metric.R, b), t_max)
        io.write_csv(out / f"geodesic_{i:03d}.csv", ["t", "re_z", "im_z", "theta"],
                     ([t, z.real, z.imag, th] for t, z, th in zip(rec.t, rec.z, rec.theta)))
        if b.glancing:
            rows.append([b.omega, b.alpha, b.omega, b.alpha, 0.0, b.alpha] + ([b.alpha] if cc else []))
            continue
        e = scattering(metric, b)
        s = float(wrap(e.omega - b.omega - np.pi)) / 2
        row = [b.omega, b.alpha, e.omega, e.alpha, rec.exit_time if rec.exit_time is not None else np.nan, s]
        if cc:
            row.append(scattering_cc(CCParams(cfg.metric["kappa"], metric.R), b.alpha))
        rows.append(row)
    header = ["omega", "alpha", "omega_out", "alpha_out", "exit_time", "s"] + (["s_closed_form"] if cc else [])
    io.write_csv(out / "scattering.csv", header, rows)
    return EXIT_OK


def cmd_xray(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    metric = metric_from_spec(cfg.metric)
    T = transport(metric, cfg.grid)
    a = _field_from_config(cfg, T.polar)
    h = xray(metric, a, T.bgrid, cfg.grid.quad_nodes)
    io.save_boundary_field(out / "xray.bfield", h, {"metric": cfg.metric, "k": a.k_values[0]})
    Om, Al = h.bgrid.mesh()
    io.write_csv(out / "xray.csv", ["omega", "alpha", "re", "im"],
                 zip(Om.ravel(), Al.ravel(), h.samples.real.ravel(), h.samples.imag.ravel()))
    return EXIT_OK


def cmd_normal(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    metric = metric_from_spec(cfg.metric)
    T = transport(metric, cfg.grid)
    a = _field_from_config(cfg, T.polar)
    k = a.k_values[0]
    N = normal_Nk(metric, k, a, cfg.grid)
    io.save_mode_field(out / "normal.mfield", N, {"metric": cfg.metric})
    z = T.polar.z.ravel()
    v = N.coeffs[0].ravel()
    io.write_csv(out / "normal.csv", ["re_z", "im_z", "re", "im"], zip(z.real, z.imag, v.real, v.imag))
    return EXIT_OK


def _mode_norms(tm) -> dict:
    out = {}
    for fld in (tm.component0, tm.component1):
        for k, c in zip(fld.k_values, fld.coeffs):
            out[str(k)] = float(np.max(np.abs(c)))
    return out


def cmd_beta(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    metric = metric_from_spec(cfg.metric)
    t0 = time.perf_counter()
    tm = beta_extension(metric, cfg.grid, reg=cfg.reg)
    norms = _mode_norms(tm)
    summary = {
        "metric": cfg.metric,
        "grid": {"n_r": cfg.grid.n_r, "n_theta": cfg.grid.n_theta, "k_max": cfg.grid.k_max,
                 "quad_nodes": cfg.grid.quad_nodes},
        "mode_sup_norms": norms,
        "dominant_even": sorted((int(k) for k, v in norms.items() if int(k) % 2 == 0 and v > 1e-3 * max(norms.values())),
                                key=int),
        "dominant_odd": sorted((int(k) for k, v in norms.items() if int(k) % 2 == 1 and v > 1e-3 * max(norms.values())),
                               key=int),
        "solver_residual": [tm.info["residual0"], tm.info["residual1"]],
        "solver_reg": [tm.info["reg0"], tm.info["reg1"]],
        "elapsed_seconds": time.perf_counter() - t0,
    }
    if cfg.metric.get("kind") == "cc":
        summary["truncation_bound"] = truncation_bound(CCParams(cfg.metric["kappa"], cfg.metric["R"]), cfg.grid.k_max)
    io.save_twistor_map(out / "beta.tmap", tm, {"solver_residual": summary["solver_residual"]})
    io.write_json(out / "beta_summary.json", summary)
    return EXIT_OK


def cmd_verify(cfg: RunConfig, map_path: str) -> int:
    out = _prepare_output(cfg)
    tm = io.load_twistor_map(map_path)
    metric = tm.metric_ref if tm.metric_ref is not None else metric_from_spec(cfg.metric)
    report = verify(metric, tm, thresholds=cfg.thresholds, seed=cfg.seed)
    io.write_json(out / "bds_report.json", report.to_dict())
    d = report.details
    rows = [["det_S", report.min_abs_det_S, *_loc(d["det_location"])],
            ["lambda_min", report.min_lambda_min, *_loc(d["lambda"]["at"])],
            ["injectivity", report.min_injectivity_ratio, *_loc(d["injectivity"].get("pair"))],
            ["embed_det", report.min_tr_embed_det, *_loc(d["embed_location"])],
            ["holomorphy", report.holomorphy_residual, "", "", "", ""]]
    io.write_csv(out / "bds_minima.csv", ["certificate", "value", "loc_re", "loc_im", "aux_re", "aux_im"], rows)
    return EXIT_OK if report.pass_ else EXIT_CERT


def _loc(at) -> list:
    if at is None:
        return ["", "", "", ""]
    vals = [complex(v) for v in np.ravel(np.asarray(at, dtype=complex))][:2]
    vals += [complex("nan")] * (2 - len(vals))
    return [vals[0].real, vals[0].imag, vals[1].real, vals[1].imag]


def cmd_oracle_compare(cfg: RunConfig) -> int:
    out = _prepare_output(cfg)
    if cfg.metric.get("kind") != "cc":
        raise ConfigError("oracle-compare needs a constant curvature metric ([metric] kind = cc)")
    p = CCParams(cfg.metric["kappa"], cfg.metric["R"])
    metric = metric_from_spec(cfg.metric)
    tm = beta_extension(metric, cfg.grid, reg=cfg.reg)
    n = int(cfg.get("compare", "n_samples", 400))
    rng = np.random.default_rng(cfg.seed)
    z = p.R * np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))
    mu = np.exp(2j * np.pi * rng.uniform(0, 1, n))
    b1, b2 = evaluate(tm, z, mu)
    w, xi = beta_cc(p, z, mu)
    e1, e2 = np.abs(b1 - w), np.abs(b2 - xi)
    # interior of Z: the truncated series is compared on |mu| = 1/2
    mu_i = 0.5 * mu
    c1, c2 = evaluate(tm, z, mu_i)
    wi, xii = beta_cc(p, z, mu_i)
    ref = oracle_map(p, tm.grid, cfg.grid.k_max)
    r1, r2 = evaluate(ref, z, mu_i)
    table = {
        "kappa": p.kappa, "R": p.R, "n_samples": n, "seed": cfg.seed,
        "sup_error_SM": {"beta1": float(e1.max()), "beta2": float(e2.max()), "both": float(max(e1.max(), e2.max()))},
        "sup_error_interior": {"beta1": float(np.abs(c1 - wi).max()), "beta2": float(np.abs(c2 - xii).max())},
        "truncated_oracle_error_interior": float(max(np.abs(r1 - wi).max(), np.abs(r2 - xii).max())),
        "truncation_bound": truncation_bound(p, cfg.grid.k_max),
        "solver_residual": [tm.info["residual0"], tm.info["residual1"]],
    }
    io.write_json(out / "oracle_compare.json", table)
    io.write_csv(out / "oracle_compare.csv", ["re_z", "im_z", "re_mu", "im_mu", "err_beta1", "err_beta2"],
                 zip(z.real, z.imag, mu.real, mu.imag, e1, e2))
    return EXIT_OK


# ----------------------------------------------------------------- entry
def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", help="output directory (overrides [run] output_dir)")
    common.add_argument("--threads", type=int, help="BLAS thread count")
    common.add_argument("--seed", type=int, help="random seed (overrides [run] seed)")
    ap = argparse.ArgumentParser(prog="twistor", description=__doc__, epilog=DEFAULTS,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    fl = sub.add_parser("flow", parents=[common], help="integrate geodesics from boundary points")
    fl.add_argument("--points", help="'omega,alpha; omega,alpha' (overrides [flow] points)")
    sub.add_parser("xray", parents=[common], help="X-ray transform of the [field] function")
    sub.add_parser("normal", parents=[common], help="normal operator applied to the [field] function")
    sub.add_parser("beta", parents=[common], help="build the canonical beta-extension")
    vb = sub.add_parser("verify-bds", parents=[common], help="certify a stored twistor map")
    vb.add_argument("map", help="TwistorMap container written by 'beta'")
    sub.add_parser("oracle-compare", parents=[common], help="pipeline vs constant curvature closed form")
    return ap


def _limit_threads(n: int | None):
    if not n:
        return None
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        return None
    return threadpool_limits(n)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    limiter = _limit_threads(args.threads)
    try:
        cfg = load_config(args.config, args.out, args.seed)
        if args.command == "flow":
            return cmd_flow(cfg, _points(args.points) if args.points is not None else None)
        if args.command == "xray":
            return cmd_xray(cfg)
        if args.command == "normal":
            return cmd_normal(cfg)
        if args.command == "beta":
            return cmd_beta(cfg)
        if args.command == "verify-bds":
            return cmd_verify(cfg, args.map)
        return cmd_oracle_compare(cfg)
    except (ConfigError, DomainError, io.ContainerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IllConditionedError, IntegrationError, TrappedOrbitError, FloatingPointError,
            np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    finally:
        if limiter is not None:
            limiter.restore_original_limits()


if __name__ == "__main__":
    sys.exit(main())
