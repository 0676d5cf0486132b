"""Configuration-driven command line front end.

Subcommands: ``transform`` (forward transform to a sinogram CSV),
``verify`` (identity checks to a JSON report and a table), ``decompose``
(solenoidal decomposition to JSON) and ``report`` (render an existing
JSON report).  Runs are TOML-configured with flag overrides; every
output embeds the configuration hash and the toolkit version, and a
fixed seed makes outputs byte-identical on one platform.

Exit codes: 0 ok, 2 configuration error, 3 numerical failure,
4 verification failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import numpy as np

from . import __version__
from .errors import ConfigError, GeoxrayError, NoConvergence, RankDeficient
from .metrics import MetricField
from .quadrature import DiskQuadrature
from .solver import PotentialBasis, kernel_test, solve_potential, transport_residual
from .tensors import (field_from_json, field_to_json, random_poly_tensor,
                      random_potential, sym_cov_derivative, Poly2D,
                      PolyTensorField)
from .transform import BoundaryFan, xray_transform
from .verify import CHECK_NAMES, ToleranceConfig, run_checks

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4

_DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "metric": {"family": "euclidean"},
    "field": {"source": "builtin", "kind": "potential_gradient",
              "order": 2, "degree": 3},
    "grid": {"n_r": 24, "n_phi": 48, "n_alpha": 64,
             "n_boundary": 128, "n_dir": 32},
    "integrator": {"step": 1e-3, "t_cap": 20.0},
    "decompose": {"basis_degree": 6, "method": "direct", "trials": 20,
                  "run_kernel_test": True},
    "checks": {"selection": ["all"]},
    "tolerances": {},
}


class RunConfig:
    """Validated run configuration (TOML file plus flag overrides)."""

    def __init__(self, doc):
        merged = json.loads(json.dumps(_DEFAULTS))
        for key, val in doc.items():
            if isinstance(val, dict) and key in merged:
                merged[key].update(val)
            else:
                merged[key] = val
        self.doc = merged
        g = merged["grid"]
        for name in ("n_r", "n_phi", "n_alpha", "n_boundary", "n_dir"):
            if int(g[name]) <= 0:
                raise ConfigError(f"grid.{name} must be positive")
        if int(g["n_alpha"]) % 2 != 0:
            raise ConfigError("grid.n_alpha must be even")
        if float(merged["integrator"]["step"]) <= 0:
            raise ConfigError("integrator.step must be positive")
        self.seed = int(merged["seed"])

    @classmethod
    def load(cls, path, overrides=None):
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            with open(path, "rb") as fh:
                doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        cfg = cls(doc)
        cfg.apply_overrides(overrides or {})
        return cfg

    def apply_overrides(self, overrides):
        if overrides.get("seed") is not None:
            self.doc["seed"] = int(overrides["seed"])
            self.seed = int(overrides["seed"])
        if overrides.get("step") is not None:
            self.doc["integrator"]["step"] = float(overrides["step"])
        if overrides.get("out") is not None:
            self.doc["out_dir"] = overrides["out"]
        if overrides.get("checks"):
            self.doc["checks"]["selection"] = list(overrides["checks"])

    def config_hash(self):
        blob = json.dumps(self.doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def metric(self):
        spec = self.doc["metric"]
        fam = spec.get("family", "euclidean")
        if fam == "euclidean":
            return MetricField.euclidean()
        if fam == "hyperbolic_like":
            return MetricField.hyperbolic_like(float(spec.get("rho", 0.5)))
        if fam == "conformal_c11":
            return MetricField.conformal_c11(float(spec.get("eps", 0.05)))
        if fam == "grid_sampled":
            if "csv" not in spec:
                raise ConfigError("grid_sampled metric needs metric.csv = <path>")
            return MetricField.from_grid_csv(spec["csv"])
        raise ConfigError(f"unknown metric family: {fam}")

    def field(self, metric, rng):
        spec = self.doc["field"]
        if spec.get("source") == "json":
            if "path" not in spec:
                raise ConfigError("field.source = json needs field.path")
            with open(spec["path"]) as fh:
                return field_from_json(json.load(fh)), "json:" + spec["path"]
        kind = spec.get("kind", "potential_gradient")
        order = int(spec.get("order", 2))
        degree = int(spec.get("degree", 3))
        if kind == "constant":
            return (PolyTensorField(0, {(): Poly2D.const(1.0)}), "constant")
        if kind == "random":
            return random_poly_tensor(order, degree, rng), "random"
        if kind == "potential_gradient":
            if order < 1:
                raise ConfigError("potential_gradient needs field.order >= 1")
            p = random_potential(order - 1, degree, rng)
            return sym_cov_derivative(p, metric), "potential_gradient"
        raise ConfigError(f"unknown builtin field kind: {kind}")

    def fan(self, metric):
        g = self.doc["grid"]
        return BoundaryFan(metric, n_boundary=int(g["n_boundary"]),
                           n_dir=int(g["n_dir"]))

    def tolerance_config(self):
        g = self.doc["grid"]
        kwargs = dict(n_r=int(g["n_r"]), n_phi=int(g["n_phi"]),
                      n_alpha=int(g["n_alpha"]), n_boundary=int(g["n_boundary"]),
                      n_dir=int(g["n_dir"]),
                      step=float(self.doc["integrator"]["step"]),
                      seed=self.seed)
        valid = set(ToleranceConfig.__dataclass_fields__)
        for name, val in self.doc["tolerances"].items():
            if name not in valid:
                raise ConfigError(f"unknown tolerance override: {name}")
            kwargs[name] = float(val)
        return ToleranceConfig(**kwargs)

    def out_dir(self):
        out = Path(self.doc["out_dir"])
        out.mkdir(parents=True, exist_ok=True)
        return out


def _stamp(cfg):
    return {"version": __version__, "config_hash": cfg.config_hash()}


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_transform(cfg):
    rng = np.random.default_rng(cfg.seed)
    metric = cfg.metric()
    f, field_id = cfg.field(metric, rng)
    fan = cfg.fan(metric)
    step = float(cfg.doc["integrator"]["step"])
    t_cap = float(cfg.doc["integrator"]["t_cap"])
    xd = xray_transform(f, metric, fan, step=step, t_cap=t_cap, field_id=field_id)
    out = cfg.out_dir()
    csv_path = out / "sinogram.csv"
    xd.to_csv(csv_path)
    with open(csv_path, "a") as fh:
        fh.write(f"# version={__version__} config_hash={cfg.config_hash()}\n")
    failed = np.argwhere(xd.failed)
    meta = dict(xd.metadata)
    meta.update(_stamp(cfg))
    meta.update({"max_abs_value": xd.max_abs(),
                 "n_failed_rays": int(xd.failed.sum()),
                 "failed_rays": [[int(i), int(j)] for i, j in failed],
                 "seed": cfg.seed})
    _write_json(out / "sinogram.json", meta)
    _summary(cfg, out, [f"transform: metric={metric.metric_id()} field={field_id}",
                        f"max |If| = {xd.max_abs():.6e}",
                        f"failed rays: {int(xd.failed.sum())}"])
    if xd.failed.any():
        print(f"numerical failure: {int(xd.failed.sum())} rays without exit "
              f"(flags in sinogram.json)", file=sys.stderr)
        return EXIT_NUMERICAL
    print(f"wrote {csv_path} (max |If| = {xd.max_abs():.3e})")
    return EXIT_OK


def cmd_verify(cfg):
    metric = cfg.metric()
    selection = cfg.doc["checks"]["selection"]
    unknown = set(selection) - (set(CHECK_NAMES) | {"all"})
    if unknown:
        raise ConfigError(f"unknown check name(s): {sorted(unknown)}")
    tol_cfg = cfg.tolerance_config()
    report = run_checks(metric, selection, tol_cfg)
    out = cfg.out_dir()
    payload = report.to_json_dict()
    payload.update(_stamp(cfg))
    _write_json(out / "report.json", payload)
    table = report.table()
    print(table)
    _summary(cfg, out, [table])
    return EXIT_OK if report.all_ok else EXIT_VERIFY


def cmd_decompose(cfg):
    rng = np.random.default_rng(cfg.seed)
    metric = cfg.metric()
    f, field_id = cfg.field(metric, rng)
    if f.order < 1:
        raise ConfigError("decompose needs a field of order >= 1")
    g = cfg.doc["grid"]
    quad = DiskQuadrature(int(g["n_r"]), int(g["n_phi"]))
    dspec = cfg.doc["decompose"]
    basis = PotentialBasis(order=f.order - 1, degree=int(dspec["basis_degree"]))
    step = float(cfg.doc["integrator"]["step"])
    fan = cfg.fan(metric)
    result = solve_potential(f, metric, basis, quad,
                             method=dspec.get("method", "direct"), fan=fan,
                             step=step)
    tres = transport_residual(result.potential,
                              sym_cov_derivative(result.potential, metric),
                              metric, step=step)
    payload = result.to_json_dict()
    payload["transport_residual_of_potential"] = tres
    payload["field_id"] = field_id
    payload["metric_id"] = metric.metric_id()
    payload.update(_stamp(cfg))
    if dspec.get("run_kernel_test", True):
        payload["kernel_test"] = kernel_test(
            metric, fan, basis, quad, trials=int(dspec["trials"]),
            step=step, seed=cfg.seed)
        payload["kernel_test"]["trials"] = [
            {k: float(v) for k, v in row.items()}
            for row in payload["kernel_test"]["trials"]]
    out = cfg.out_dir()
    _write_json(out / "decomposition.json", payload)
    _summary(cfg, out, [f"decompose: metric={metric.metric_id()} field={field_id}",
                        f"|f_s| = {result.norm_f_s:.6e} of |f| = {result.norm_f:.6e}",
                        f"orthogonality = {result.ortho_max:.2e}, "
                        f"cond = {result.cond_estimate:.2e}"])
    print(f"wrote {out / 'decomposition.json'} (|f_s| = {result.norm_f_s:.3e})")
    return EXIT_OK


def cmd_report(cfg, path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"report file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    lines = [f"report {path} (version {doc.get('version', '?')}, "
             f"config {doc.get('config_hash', '?')})"]
    for r in doc.get("results", []):
        ok = "ok" if r["verdict"] == r["expected"] else "XX"
        lines.append(f"{r['name']:38.38s} {r['residual']:12.3e} "
                     f"{r['tol']:10.1e} {r['verdict']:>8s} {ok}")
    lines.append("overall: " + ("ok" if doc.get("all_ok") else "FAILED"))
    text = "\n".join(lines)
    print(text)
    out = cfg.out_dir()
    _summary(cfg, out, [text])
    return EXIT_OK if doc.get("all_ok") else EXIT_VERIFY


def _summary(cfg, out, lines):
    with open(out / "summary.txt", "w") as fh:
        fh.write(f"geoxray {__version__} config_hash={cfg.config_hash()} "
                 f"seed={cfg.seed}\n")
        for line in lines:
            fh.write(line + "\n")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="geoxray",
        description="Geodesic X-ray transform toolkit on the unit disk")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("transform", "verify", "decompose", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=(name != "report"),
                       help="TOML run configuration")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("--step", type=float, help="integrator step override")
        if name == "verify":
            p.add_argument("--check", action="append", dest="checks",
                           metavar="NAME", help="check selection (repeatable)")
        if name == "report":
            p.add_argument("--in", dest="report_path", required=True,
                           help="existing report.json")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {"seed": getattr(args, "seed", None),
                 "step": getattr(args, "step", None),
                 "out": getattr(args, "out", None),
                 "checks": getattr(args, "checks", None)}
    try:
        if args.config:
            cfg = RunConfig.load(args.config, overrides)
        else:
            cfg = RunConfig({})
            cfg.apply_overrides(overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "transform":
            return cmd_transform(cfg)
        if args.command == "verify":
            return cmd_verify(cfg)
        if args.command == "decompose":
            return cmd_decompose(cfg)
        return cmd_report(cfg, args.report_path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RankDeficient, NoConvergence) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except GeoxrayError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
