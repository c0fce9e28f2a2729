"""Command-line front end.

Every command writes ``<command>.json`` (schema below) and, for gridded
output, one or more CSV files into ``--output-dir``::

    {
      "schema_version": 1,
      "command": ...,
      "config": {"command": ..., "parameters": {...}, "seed": ..., "output_dir": ...},
      "results": {...},
      "diagnostics": {...}
    }

Reports carry no timestamps, so identical configurations give identical bytes.
Exit status is 0 on success, 1 for invalid input and 2 for numerical failures;
on failure a JSON error object ``{"error": {"code", "message"}}`` is printed to
stdout.

Parameters come from an optional JSON document (``--config``) and are
overridden by flags. ``--threads`` (or ``CONEKERNEL_THREADS``) only sets the
degree of parallelism and is deliberately not part of the echoed config.
"""
import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field
from math import pi, sin, sqrt

import numpy as np

from . import exponents as ex
from . import kernels as kn
from . import mc
from . import verify as vf
from .geometry import OutsideDomainError, Wedge2D, contains
from .specfun import SpecialFunctionError

SCHEMA_VERSION = 1
COMMANDS = ("exponents", "kappa-tilde", "eigenvalue-cap", "kernel-exact", "kernel-mc", "verify-bound", "duality")


class ConfigError(ValueError):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _floats(n):
    def parse(v):
        if isinstance(v, str):
            parts = [p for p in v.replace(" ", "").split(",") if p]
        else:
            parts = list(v)
        try:
            out = [float(p) for p in parts]
        except (TypeError, ValueError):
            raise ConfigError("BAD_VALUE", f"expected {n} comma-separated numbers, got {v!r}")
        if n is not None and len(out) != n:
            raise ConfigError("BAD_VALUE", f"expected {n} numbers, got {len(out)}")
        return out

    return parse


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError("BAD_VALUE", f"expected a boolean, got {v!r}")


def _coeffs_str(v):
    return str(v)


REQUIRED = object()

# name -> (parser, default); REQUIRED marks mandatory keys
_PARAMS = {
    "exponents": {"kappa": (float, REQUIRED), "alpha": (float, 0.0), "matrix": (_floats(3), [1.0, 0.0, 1.0])},
    "kappa-tilde": {
        "kappa": (float, REQUIRED),
        "alpha": (float, 0.0),
        "matrix": (_floats(3), [1.0, 0.0, 1.0]),
        "random": (int, 0),
    },
    "eigenvalue-cap": {"kappa": (float, REQUIRED), "nu1": (float, 1.0), "nu2": (float, 1.0)},
    "kernel-exact": {
        "kappa": (float, REQUIRED),
        "alpha": (float, 0.0),
        "tau": (float, 1.0),
        "y": (_floats(2), REQUIRED),
        "r_max": (float, 0.0),
        "n_r": (int, 40),
        "n_theta": (int, 24),
    },
    "kernel-mc": {
        "kappa": (float, REQUIRED),
        "alpha": (float, 0.0),
        "coeffs": (_coeffs_str, "1,0,1"),
        "s": (float, 0.0),
        "t": (float, 1.0),
        "y": (_floats(2), REQUIRED),
        "paths": (int, 100_000),
        "dt": (float, 0.0),
        "r_max": (float, 3.0),
        "n_r": (int, 15),
        "n_theta": (int, 8),
        "bridge": (_bool, False),
    },
    "verify-bound": {
        "kappa": (float, REQUIRED),
        "tau": (float, 1.0),
        "y": (_floats(2), [0.0, 0.0]),
        "factors": (_floats(None), [0.9, 1.2]),
        "sigma": (float, 0.125),
        "levels": (int, 4),
    },
    "duality": {
        "kappa": (float, REQUIRED),
        "alpha": (float, 0.0),
        "coeffs": (_coeffs_str, "sin:2,1,1"),
        "s": (float, 0.0),
        "t": (float, 1.0),
        "x": (_floats(2), REQUIRED),
        "y": (_floats(2), REQUIRED),
        "paths": (int, 100_000),
        "dt": (float, 0.0),
        "dr": (float, 0.1),
        "dtheta": (float, 0.1),
        "bridge": (_bool, False),
    },
}


@dataclass
class RunConfig:
    command: str
    parameters: dict = field(default_factory=dict)
    seed: int = 0
    output_dir: str = "."

    @classmethod
    def build(cls, command, raw, seed=0, output_dir="."):
        """Validate ``raw`` parameters for ``command`` and fill defaults."""
        if command not in _PARAMS:
            raise ConfigError("UNKNOWN_COMMAND", f"unknown command {command!r}")
        schema = _PARAMS[command]
        unknown = set(raw) - set(schema)
        if unknown:
            raise ConfigError("UNKNOWN_PARAMETER", f"unknown parameters for {command}: {sorted(unknown)}")
        params = {}
        for name, (parse, default) in schema.items():
            if raw.get(name) is None:
                if default is REQUIRED:
                    raise ConfigError("MISSING_PARAMETER", f"{command} requires --{name.replace('_', '-')}")
                params[name] = default
            else:
                try:
                    params[name] = parse(raw[name])
                except ConfigError:
                    raise
                except (TypeError, ValueError):
                    raise ConfigError("BAD_VALUE", f"bad value for {name}: {raw[name]!r}")
        try:
            seed = int(seed)
        except (TypeError, ValueError):
            raise ConfigError("BAD_VALUE", f"seed must be an integer, got {seed!r}")
        if not 0 <= seed < 2**64:
            raise ConfigError("BAD_VALUE", "seed must be a 64-bit unsigned integer")
        cfg = cls(command, params, seed, str(output_dir))
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, d):
        return cls.build(d["command"], dict(d.get("parameters", {})), d.get("seed", 0), d.get("output_dir", "."))

    def to_dict(self):
        return {"command": self.command, "parameters": self.parameters, "seed": self.seed, "output_dir": self.output_dir}

    def validate(self):
        p = self.parameters
        if "kappa" in p and not 0 < p["kappa"] < 2 * pi:
            raise ConfigError("BAD_KAPPA", "kappa must lie in (0, 2*pi)")
        if "matrix" in p:
            _matrix(p["matrix"])
        if "coeffs" in p:
            _coefficients(p["coeffs"])
        for key in ("tau",):
            if key in p and not p[key] > 0:
                raise ConfigError("BAD_VALUE", f"{key} must be positive")
        if "t" in p and not p["t"] > p["s"]:
            raise ConfigError("BAD_VALUE", "need t > s")
        for key in ("paths", "n_r", "n_theta", "levels"):
            if key in p and p[key] < 1:
                raise ConfigError("BAD_VALUE", f"{key} must be >= 1")
        if p.get("random", 0) < 0:
            raise ConfigError("BAD_VALUE", "random must be >= 0")
        if "nu1" in p and not 0 < p["nu1"] <= p["nu2"]:
            raise ConfigError("BAD_VALUE", "need 0 < nu1 <= nu2")
        if "sigma" in p and not p["sigma"] > 0:
            raise ConfigError("BAD_VALUE", "sigma must be positive")
        if p.get("dt", 0.0) < 0:
            raise ConfigError("BAD_VALUE", "dt must be positive (0 selects (t - s)/100)")
        if "dt" in p and p["dt"] > 0 and p["dt"] > (p["t"] - p["s"]) / 100.0:
            raise ConfigError("BAD_VALUE", "dt must not exceed (t - s)/100")


def _matrix(values):
    try:
        return ex.SpdMatrix2(*values)
    except ex.NotSpdError as err:
        raise ConfigError("NOT_SPD", str(err))


def _coefficients(text):
    """``"a,b,c"`` for constant coefficients or ``"sin:a0,amp,c"`` for ``diag(a0 + amp sin t, c)``."""
    if text.startswith("sin:"):
        a0, amp, c = _floats(3)(text[4:])
        if not (c > 0 and a0 - abs(amp) > 0):
            raise ConfigError("NOT_SPD", f"coefficients {text!r} are not uniformly positive definite")
        lo = min(a0 - abs(amp), c)
        hi = max(a0 + abs(amp), c)
        return mc.TimeCoefficients(lambda t: ex.SpdMatrix2(a0 + amp * sin(t), 0.0, c), lo, hi, label=text)
    return mc.TimeCoefficients.constant(_matrix(_floats(3)(text)), label=text)


def _point_in(domain, p, name):
    if not contains(domain, p):
        raise ConfigError("OUTSIDE_DOMAIN", f"{name}={list(p)} is not inside the wedge")
    return tuple(p)


def _fit_dict(rep):
    return {
        "slope": rep.slope,
        "intercept": rep.intercept,
        "r_squared": rep.r_squared,
        "window": list(rep.window),
        "n_points": rep.n_points,
    }


def _cmd_exponents(cfg):
    p = cfg.parameters
    A = _matrix(p["matrix"])
    kt = ex.kappa_tilde_closed_form(A, p["kappa"], p["alpha"])
    lam = ex.lambda_c_constant(A, p["kappa"], p["alpha"])
    lam0 = ex.lambda_c_heat_2d(p["kappa"])
    rot = ex.rotate_coefficients(A, p["alpha"])
    results = {
        "kappa_tilde": kt,
        "lambda_c": lam.value,
        "lambda_c_kind": lam.kind.value,
        "lambda_c_heat": lam0.value,
        "rotated": {"a_bar": rot.a_bar, "b_bar": rot.b_bar, "c_bar": rot.c_bar},
    }
    return results, {}, {}


def _cmd_kappa_tilde(cfg):
    p = cfg.parameters
    A = _matrix(p["matrix"])
    routes = {
        "closed_form": ex.kappa_tilde_closed_form(A, p["kappa"], p["alpha"]),
        "quadrature": ex.kappa_tilde_quadrature(A, p["kappa"], p["alpha"]),
        "geometric": ex.kappa_tilde_geometric(A, p["kappa"], p["alpha"]),
    }
    results = dict(routes)
    results["max_disagreement"] = max(abs(routes["closed_form"] - v) for v in routes.values())
    tables = {}
    if p["random"]:
        rng = np.random.default_rng(cfg.seed)
        rows = []
        worst = 0.0
        for _ in range(p["random"]):
            B = ex.random_spd(rng)
            k = float(rng.uniform(1e-3, 2 * pi - 1e-3))
            a = float(rng.uniform(0.0, 2 * pi))
            c = ex.kappa_tilde_closed_form(B, k, a)
            q = ex.kappa_tilde_quadrature(B, k, a)
            g = ex.kappa_tilde_geometric(B, k, a)
            worst = max(worst, abs(c - q), abs(c - g))
            rows.append([B.a, B.b, B.c, k, a, c, q, g])
        tables["kappa_tilde_random.csv"] = (
            ["a", "b", "c", "kappa", "alpha", "closed_form", "quadrature", "geometric"],
            rows,
        )
        results["random_max_disagreement"] = worst
    return results, tables, {}


def _cmd_eigenvalue_cap(cfg):
    p = cfg.parameters
    res = ex.first_dirichlet_eigenvalue_cap(p["kappa"])
    bounds = ex.ParabolicityBounds(p["nu1"], p["nu2"])
    results = {
        "Lambda": res.Lambda,
        "bracket": [res.lower, res.upper],
        "inside_bracket": bool(res.lower <= res.Lambda <= res.upper),
        "j0": ex.bessel_j0_first_zero(),
        "lambda_c_laplacian": ex.lambda_c_laplacian_general(res.Lambda, 3).value,
        "lambda_lower_bound": ex.lambda_lb_improved(bounds, res.Lambda, 3).value,
    }
    return results, {}, {}


def _cmd_kernel_exact(cfg):
    p = cfg.parameters
    domain = Wedge2D(p["kappa"], p["alpha"])
    y = _point_in(domain, p["y"], "y")
    tau = p["tau"]
    r_max = p["r_max"] or float(np.hypot(*y)) + 4.0 * sqrt(tau)
    r = np.linspace(0.0, r_max, p["n_r"] + 1)[1:]
    th = (np.arange(p["n_theta"]) + 0.5) / p["n_theta"] * p["kappa"] - p["kappa"] / 2.0
    R, T = np.meshgrid(r, th, indexing="ij")
    ang = T + domain.alpha
    x1, x2 = R * np.cos(ang), R * np.sin(ang)
    g = kn.wedge_kernel_grid(p["kappa"], tau, x1, x2, y[0], y[1], alpha=domain.alpha)
    rows = [[a, b, c, d, e] for a, b, c, d, e in zip(R.ravel(), T.ravel(), x1.ravel(), x2.ravel(), g.ravel())]

    def sampler(tau_, x, y_):
        return kn.heat_kernel_wedge(p["kappa"], tau_, tuple(x), tuple(y_), alpha=domain.alpha)

    results = {
        "mass": kn.kernel_mass(p["kappa"], tau, y, alpha=domain.alpha),
        "lambda_c": pi / p["kappa"],
        "vertex_fit": _fit_dict(vf.fit_vertex_exponent(sampler, domain, tau, y)),
    }
    tables = {"kernel_grid.csv": (["r", "theta", "x1", "x2", "G"], rows)}
    return results, tables, {}


def _mc_cfg(p, seed, binning, threads):
    dt = p["dt"] or (p["t"] - p["s"]) / 100.0
    return mc.McConfig(p["paths"], dt, seed, binning, p["bridge"], threads)


def _cmd_kernel_mc(cfg, threads=None):
    p = cfg.parameters
    domain = Wedge2D(p["kappa"], p["alpha"])
    y = _point_in(domain, p["y"], "y")
    coeffs = _coefficients(p["coeffs"])
    binning = mc.PolarBinning.regular(p["r_max"], p["n_r"], -p["kappa"] / 2.0, p["kappa"] / 2.0, p["n_theta"])
    est = mc.simulate_killed_density(coeffs, domain, p["s"], y, p["t"], _mc_cfg(p, cfg.seed, binning, threads))
    header = ["r_lo", "r_hi", "theta_lo", "theta_hi", "count", "value", "stderr"]
    rows = [list(c) for c in est.cells()]
    results = {"survivors": est.survivors, "total": est.total, "steps": est.meta["steps"]}
    if not p["coeffs"].startswith("sin:"):
        A = _matrix(_floats(3)(p["coeffs"]))
        tau = p["t"] - p["s"]

        def exact(x1, x2):
            return vf.transformed_kernel_grid(A, p["kappa"], domain.alpha, tau, x1, x2, y)

        avg = vf.cell_averages(exact, est)
        frac, z = vf.compare_density(est, avg)
        header.append("exact")
        for row, e in zip(rows, avg.ravel()):
            row.append(float(e))
        results["fraction_within_3_stderr"] = frac
        results["cells_compared"] = int(z.size)
    return results, {"density_cells.csv": (header, rows)}, {"block_size": mc.BLOCK_SIZE}


def _cmd_verify_bound(cfg):
    p = cfg.parameters
    domain = Wedge2D(p["kappa"])
    tau = p["tau"]
    y = tuple(p["y"]) if any(p["y"]) else tuple(domain.point(sqrt(tau), 0.0))
    _point_in(domain, y, "y")
    lam_c = ex.lambda_c_heat_2d(p["kappa"]).value
    rows = []
    sequences = {}
    for f in p["factors"]:
        spec = vf.BoundSpec(f * lam_c, f * lam_c, p["sigma"])
        seq = vf.feasible_n_sequence(domain, tau, y, spec, p["levels"])
        sequences[repr(f)] = {"feasible_N": seq, "growth": [b / a for a, b in zip(seq[:-1], seq[1:])]}
        rows.extend([f, k, n] for k, n in enumerate(seq))

    def sampler(tau_, x, y_):
        return kn.heat_kernel_wedge(p["kappa"], tau_, tuple(x), tuple(y_))

    far_y = tuple(domain.point(4.0 * sqrt(tau), 0.0))
    results = {
        "lambda_c": lam_c,
        "sequences": sequences,
        "vertex_fit": _fit_dict(vf.fit_vertex_exponent(sampler, domain, tau, far_y)),
        "boundary_fit": _fit_dict(
            vf.fit_boundary_exponent(sampler, domain, tau, tuple(domain.edge_point(4.0 * sqrt(tau), 0.3)))
        ),
    }
    return results, {"feasible_n.csv": (["factor", "level", "feasible_N"], rows)}, {}


def _cmd_duality(cfg, threads=None):
    p = cfg.parameters
    domain = Wedge2D(p["kappa"], p["alpha"])
    x = _point_in(domain, p["x"], "x")
    y = _point_in(domain, p["y"], "y")
    coeffs = _coefficients(p["coeffs"])
    mcfg = _mc_cfg(p, cfg.seed, mc.PolarBinning((0.0, 1.0), (0.0, 1.0)), threads)
    (v1, e1), (v2, e2) = mc.duality_estimates(coeffs, domain, p["s"], p["t"], x, y, mcfg, p["dr"], p["dtheta"])
    z = (v1 - v2) / sqrt(e1 * e1 + e2 * e2)
    results = {"forward": [v1, e1], "backward": [v2, e2], "residual": z}
    return results, {}, {"block_size": mc.BLOCK_SIZE}


_DISPATCH = {
    "exponents": _cmd_exponents,
    "kappa-tilde": _cmd_kappa_tilde,
    "eigenvalue-cap": _cmd_eigenvalue_cap,
    "kernel-exact": _cmd_kernel_exact,
    "kernel-mc": _cmd_kernel_mc,
    "verify-bound": _cmd_verify_bound,
    "duality": _cmd_duality,
}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def run(config, threads=None):
    """Execute ``config``; returns ``(exit_status, report_or_error)`` and writes artifacts."""
    try:
        fn = _DISPATCH[config.command]
        if config.command in ("kernel-mc", "duality"):
            results, tables, diagnostics = fn(config, threads=threads)
        else:
            results, tables, diagnostics = fn(config)
    except (ConfigError, OutsideDomainError) as err:
        return 1, {"error": {"code": getattr(err, "code", "OUTSIDE_DOMAIN"), "message": str(err)}}
    except (ArithmeticError, SpecialFunctionError) as err:
        return 2, {"error": {"code": type(err).__name__, "message": str(err)}}
    except ValueError as err:
        return 1, {"error": {"code": "BAD_VALUE", "message": str(err)}}

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": config.command,
        "config": config.to_dict(),
        "results": results,
        "diagnostics": diagnostics,
    }
    report = _jsonable(report)
    os.makedirs(config.output_dir, exist_ok=True)
    with open(os.path.join(config.output_dir, f"{config.command}.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")
    for name, (header, rows) in tables.items():
        with open(os.path.join(config.output_dir, name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    return 0, report


def _parser():
    ap = argparse.ArgumentParser(prog="conekernel", description=__doc__.split("\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, schema in _PARAMS.items():
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON document with parameters (flags override)")
        sp.add_argument("--seed", default=None)
        sp.add_argument("--output-dir", default=None)
        sp.add_argument("--threads", type=int, default=None, help="worker threads; never changes results")
        for key in schema:
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    base = {}
    seed, out = 0, "."
    if args.config:
        try:
            with open(args.config) as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            print(json.dumps({"error": {"code": "BAD_CONFIG", "message": str(err)}}))
            return 1
        # a previous report can be fed back in; its echoed config is used
        if "schema_version" in doc and isinstance(doc.get("config"), dict):
            doc = doc["config"]
        if doc.get("command", args.command) != args.command:
            print(json.dumps({"error": {"code": "BAD_CONFIG", "message": "config command does not match"}}))
            return 1
        base = dict(doc.get("parameters", {}))
        seed = doc.get("seed", seed)
        out = doc.get("output_dir", out)
    for key in _PARAMS[args.command]:
        val = getattr(args, key)
        if val is not None:
            base[key] = val
    if args.seed is not None:
        seed = args.seed
    if args.output_dir is not None:
        out = args.output_dir
    try:
        cfg = RunConfig.build(args.command, base, seed, out)
    except ConfigError as err:
        print(json.dumps({"error": {"code": err.code, "message": str(err)}}))
        return 1
    status, payload = run(cfg, threads=args.threads)
    if status:
        print(json.dumps(payload))
    else:
        print(json.dumps(payload["results"], sort_keys=True))
    return status


if __name__ == "__main__":
    sys.exit(main())
